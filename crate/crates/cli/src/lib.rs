//! Command-line front end: scenario validation, metric evaluation, planning,
//! auctions and the embedded case study.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use inertia_core::grid::{assemble_state_space, output_matrix_primary_effort};
use inertia_core::h2::{
    h2_norm_sq_gramian, h2_primary_effort_closed, upper_bound_ub, BlockWeight, Kappa,
};
use inertia_core::market::{run_auction, run_auction_hard, AuctionOutcome};
use inertia_core::planner::{
    dual_gamma_iterate, regulatory_allocation, solve_centralized_hard, solve_centralized_soft,
    Allocation,
};
use inertia_core::robust::worst_case_metric;
use inertia_core::scenario::{case_study, parse_scenario, Mode, Scenario};
use inertia_core::{Error, Report};

#[derive(Parser, Debug)]
#[command(
    name = "inertia-market",
    version,
    about = "Virtual inertia procurement: metrics, planning and VCG auctions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse and validate a scenario file.
    Validate { scenario: PathBuf },
    /// Evaluate the H2 primary-effort metric at the residual inertia.
    H2 {
        scenario: PathBuf,
        #[arg(long, value_enum)]
        method: Method,
        /// Closed-form scaling convention (defaults to the scenario's).
        #[arg(long, value_parser = ["1", "2"])]
        kappa: Option<String>,
    },
    /// Worst-case metric over the disturbance budget at the residual inertia.
    WorstCase { scenario: PathBuf },
    /// Centralized (or regulatory) procurement.
    Plan {
        scenario: PathBuf,
        #[command(flatten)]
        mode: ModeArgs,
        /// Capacity-proportional allocation instead of least cost.
        #[arg(long)]
        regulatory: bool,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// VCG auction over the submitted bids.
    Auction {
        scenario: PathBuf,
        #[command(flatten)]
        mode: ModeArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Regulatory, centralized and auction outcomes side by side.
    Compare {
        scenario: PathBuf,
        #[arg(long = "gamma-bar")]
        gamma_bar: Option<f64>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run `compare` on the embedded case study.
    CaseStudy {
        /// Directory for centralized.csv, market.csv, regulatory.csv and summary.txt.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct ModeArgs {
    /// Trade-off weight on the worst-case metric.
    #[arg(long, conflicts_with = "gamma_bar")]
    gamma: Option<f64>,
    /// Hard bound on the worst-case metric.
    #[arg(long = "gamma-bar")]
    gamma_bar: Option<f64>,
}

#[derive(Args, Debug)]
struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum Method {
    Gramian,
    Closed,
    UpperBound,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum Format {
    Text,
    Csv,
}

fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        2
    } else {
        1
    }
}

/// Parse `args` (including the program name) and execute; returns the exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

pub fn main_exit() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}

fn io_err(e: std::io::Error) -> Error {
    Error::from(e)
}

fn resolve_mode(scenario: &Scenario, mode: &ModeArgs) -> Result<Mode, Error> {
    match (mode.gamma, mode.gamma_bar, scenario.mode) {
        (Some(g), _, _) => positive("--gamma", g).map(Mode::Gamma),
        (_, Some(g), _) => positive("--gamma-bar", g).map(Mode::GammaBar),
        (None, None, Some(m)) => Ok(m),
        (None, None, None) => Err(Error::InvalidInput(
            "no mode: pass --gamma or --gamma-bar, or set one in the scenario".into(),
        )),
    }
}

fn positive(flag: &str, x: f64) -> Result<f64, Error> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(Error::InvalidInput(format!(
            "{flag} must be positive, got {x}"
        )))
    }
}

fn require_agents(scenario: &Scenario) -> Result<(), Error> {
    if scenario.agents.is_empty() {
        Err(Error::Scenario(format!(
            "scenario \"{}\" has no agents",
            scenario.name
        )))
    } else {
        Ok(())
    }
}

fn emit(report: &Report, format: Format, out: &mut dyn Write) -> Result<(), Error> {
    match format {
        Format::Text => report.write_text(out),
        Format::Csv => report.write_csv(out),
    }
    .map_err(io_err)
}

/// Auction outcome with utilities from the true costs, or from the bids when
/// the scenario declares none.
fn with_utilities(scenario: &Scenario, outcome: AuctionOutcome) -> Result<AuctionOutcome, Error> {
    let truth = scenario
        .true_costs()
        .unwrap_or_else(|| scenario.agents.iter().map(|a| a.bid.clone()).collect());
    outcome.with_true_costs(&truth)
}

struct Comparison {
    gamma_bar: f64,
    gamma_star: f64,
    regulatory: Allocation,
    centralized: Allocation,
    market: AuctionOutcome,
}

fn compare(scenario: &Scenario, gamma_bar: f64) -> Result<Comparison, Error> {
    require_agents(scenario)?;
    let m0 = scenario.m0();
    let agents = scenario.agents();
    let budget = scenario.effective_budget();
    let regulatory = regulatory_allocation(gamma_bar, &m0, &agents, budget)?;
    let centralized = solve_centralized_hard(gamma_bar, &m0, &agents, budget)?;
    let (gamma_star, _) = dual_gamma_iterate(gamma_bar, &m0, &agents, budget)?;
    let market = with_utilities(scenario, run_auction_hard(&agents, gamma_bar, &m0, budget)?)?;
    Ok(Comparison {
        gamma_bar,
        gamma_star,
        regulatory,
        centralized,
        market,
    })
}

impl Comparison {
    fn reports(&self, scenario: &Scenario) -> Result<[Report; 3], Error> {
        Ok([
            Report::from_allocation(
                format!("centralized, gamma_bar = {}", self.gamma_bar),
                scenario,
                &self.centralized,
            )?,
            Report::from_auction(
                format!(
                    "market (VCG), gamma_bar = {}, multiplier gamma* = {:.6}",
                    self.gamma_bar, self.gamma_star
                ),
                scenario,
                &self.market,
            )?,
            Report::from_allocation(
                format!("regulatory, gamma_bar = {}", self.gamma_bar),
                scenario,
                &self.regulatory,
            )?,
        ])
    }

    fn max_allocation_gap(&self) -> f64 {
        self.centralized
            .mu
            .iter()
            .zip(self.market.mu())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn summary(&self, reports: &[Report; 3]) -> String {
        let mut s = String::from("outcome        total cost   total payment   worst case\n");
        for (name, r) in ["centralized", "market", "regulatory"].iter().zip(reports) {
            let payment = r
                .summary
                .total_payment
                .map_or("-".to_string(), |p| format!("{p:.4}"));
            s += &format!(
                "{name:<12} {:>12.4} {:>15} {:>12.6}\n",
                r.summary.total_cost, payment, r.summary.worst_case
            );
        }
        s += &format!(
            "max |mu_centralized - mu_market| = {:.3e}\n",
            self.max_allocation_gap()
        );
        s
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<(), Error> {
    match command {
        Command::Validate { scenario } => {
            let s = parse_scenario(&scenario)?;
            let mode = match s.mode {
                Some(Mode::Gamma(g)) => format!("gamma = {g}"),
                Some(Mode::GammaBar(g)) => format!("gamma_bar = {g}"),
                None => "no mode".into(),
            };
            writeln!(
                out,
                "ok: \"{}\" ({}), {} buses ({} with inertia), {} lines, {} agents, pi_tot = {}, {mode}",
                s.name,
                s.timescale,
                s.buses.len(),
                s.m0().len(),
                s.lines.len(),
                s.agents.len(),
                s.budget.pi_tot()
            )
            .map_err(io_err)
        }
        Command::H2 {
            scenario,
            method,
            kappa,
        } => {
            let s = parse_scenario(&scenario)?;
            h2(&s, &scenario, method, kappa.as_deref(), out)
        }
        Command::WorstCase { scenario } => {
            let s = parse_scenario(&scenario)?;
            let wc = worst_case_metric(&s.m0(), s.effective_budget())?;
            let ids = s.bus_ids();
            writeln!(out, "worst case gamma = {:.6}", wc.gamma).map_err(io_err)?;
            writeln!(out, "argmax bus = {}", ids[wc.argmax_bus]).map_err(io_err)?;
            writeln!(out, "rho = {:.6}", wc.rho).map_err(io_err)
        }
        Command::Plan {
            scenario,
            mode,
            regulatory,
            output,
        } => {
            let s = parse_scenario(&scenario)?;
            require_agents(&s)?;
            let (m0, agents, budget) = (s.m0(), s.agents(), s.effective_budget());
            let (title, alloc) = match resolve_mode(&s, &mode)? {
                Mode::GammaBar(g) if regulatory => (
                    format!("regulatory, gamma_bar = {g}"),
                    regulatory_allocation(g, &m0, &agents, budget)?,
                ),
                Mode::GammaBar(g) => (
                    format!("centralized, gamma_bar = {g}"),
                    solve_centralized_hard(g, &m0, &agents, budget)?,
                ),
                Mode::Gamma(_) if regulatory => {
                    return Err(Error::InvalidInput("--regulatory needs --gamma-bar".into()))
                }
                Mode::Gamma(g) => (
                    format!("centralized, gamma = {g}"),
                    solve_centralized_soft(g, &m0, &agents, budget)?,
                ),
            };
            emit(
                &Report::from_allocation(title, &s, &alloc)?,
                output.format,
                out,
            )
        }
        Command::Auction {
            scenario,
            mode,
            output,
        } => {
            let s = parse_scenario(&scenario)?;
            require_agents(&s)?;
            let (m0, agents, budget) = (s.m0(), s.agents(), s.effective_budget());
            let (title, outcome) = match resolve_mode(&s, &mode)? {
                Mode::Gamma(g) => (
                    format!("market (VCG), gamma = {g}"),
                    run_auction(&agents, g, &m0, budget)?,
                ),
                Mode::GammaBar(g) => {
                    let (gamma_star, _) = dual_gamma_iterate(g, &m0, &agents, budget)?;
                    (
                        format!(
                            "market (VCG), gamma_bar = {g}, multiplier gamma* = {gamma_star:.6}"
                        ),
                        run_auction_hard(&agents, g, &m0, budget)?,
                    )
                }
            };
            let outcome = with_utilities(&s, outcome)?;
            emit(
                &Report::from_auction(title, &s, &outcome)?,
                output.format,
                out,
            )
        }
        Command::Compare {
            scenario,
            gamma_bar,
            output,
        } => {
            let s = parse_scenario(&scenario)?;
            let g = match (gamma_bar, s.mode) {
                (Some(g), _) => positive("--gamma-bar", g)?,
                (None, Some(Mode::GammaBar(g))) => g,
                _ => return Err(Error::InvalidInput("compare needs --gamma-bar".into())),
            };
            let cmp = compare(&s, g)?;
            let reports = cmp.reports(&s)?;
            for r in &reports {
                emit(r, output.format, out)?;
                writeln!(out).map_err(io_err)?;
            }
            write!(out, "{}", cmp.summary(&reports)).map_err(io_err)
        }
        Command::CaseStudy { out: dir } => case_study_cmd(dir.as_deref(), out),
    }
}

fn h2(
    s: &Scenario,
    path: &Path,
    method: Method,
    kappa: Option<&str>,
    out: &mut dyn Write,
) -> Result<(), Error> {
    let m0 = s.m0();
    let pi = s.pi();
    let line = match method {
        Method::Closed => {
            let kappa = match kappa {
                Some("2") => Kappa::Two,
                Some(_) => Kappa::One,
                None => s.kappa,
            };
            let v = h2_primary_effort_closed(&m0, &pi, kappa)?;
            format!("closed-form H2^2 (kappa = {}) = {v:.9}", u8::from(kappa))
        }
        Method::Gramian | Method::UpperBound => {
            let Some(grid) = s.grid()? else {
                return Err(Error::InvalidInput(format!(
                    "{}: method `{}` needs grid topology (`[[line]]` entries and damping `d` on every inertia bus); \
                     use `--method closed` for topology-free scenarios",
                    path.display(),
                    if method == Method::Gramian { "gramian" } else { "upper-bound" }
                )));
            };
            if method == Method::Gramian {
                let c = output_matrix_primary_effort(grid.damping())?;
                let sys = assemble_state_space(&grid, &m0, &pi, &c)?;
                format!("Gramian H2^2 = {:.9}", h2_norm_sq_gramian(&sys)?)
            } else {
                let weight = BlockWeight::primary_effort(grid.damping());
                let ub = upper_bound_ub(&m0, &grid, &weight)?;
                format!(
                    "U_b = {ub:.9}, pi_tot * U_b = {:.9}",
                    s.budget.pi_tot() * ub
                )
            }
        }
    };
    writeln!(out, "{line}").map_err(io_err)
}

fn case_study_cmd(dir: Option<&Path>, out: &mut dyn Write) -> Result<(), Error> {
    let s = case_study();
    let Some(Mode::GammaBar(g)) = s.mode else {
        unreachable!("embedded case study has a performance target");
    };
    let header = format!(
        "{}\nnote: {}\nnine inertia buses {:?}; buses without residual inertia are load buses outside the reduced model\n\n",
        s.name,
        s.notes.as_deref().unwrap_or(""),
        s.bus_ids()
    );
    let cmp = compare(&s, g)?;
    let reports = cmp.reports(&s)?;
    let summary = cmp.summary(&reports);

    write!(out, "{header}").map_err(io_err)?;
    for r in &reports {
        r.write_text(out).map_err(io_err)?;
        writeln!(out).map_err(io_err)?;
    }
    write!(out, "{summary}").map_err(io_err)?;

    if let Some(dir) = dir {
        fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
        for (name, r) in ["centralized", "market", "regulatory"].iter().zip(&reports) {
            let path = dir.join(format!("{name}.csv"));
            fs::write(&path, r.to_csv())
                .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        }
        let path = dir.join("summary.txt");
        fs::write(&path, format!("{header}{summary}"))
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        writeln!(out, "wrote reports to {}", dir.display()).map_err(io_err)?;
    }
    Ok(())
}
