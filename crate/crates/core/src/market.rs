//! Sealed-bid VCG auction for virtual inertia.
//!
//! Agents submit convex bid curves; the operator allocates by minimizing the
//! social cost `𝓑(μ, b)` over the bids and pays each agent its externality,
//! `p_k = 𝓑(μ⁻ᵏ, b) − [𝓑(μ, b) − b_k(μ_k)]`.
//!
//! Two objective forms are supported. `Soft` weighs the worst-case metric with
//! a trade-off `γ`. `Hard` minimizes bid cost subject to `Γ ≤ Γ̄`; its
//! exclusion value is the constrained optimum without the agent, which equals
//! the Lagrangian dual value at the optimal multiplier.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cost::{CostCurve, Segment};
use crate::error::{Error, Result};
use crate::planner::{
    solve_centralized_hard, solve_centralized_hard_excluding, solve_centralized_soft,
    solve_centralized_soft_excluding, Agent, Allocation,
};
use crate::robust::DisturbanceBudget;
use crate::sampling::{log_uniform, random_curve_with_cap};

/// Tolerance on utility gains from deviating.
pub const AUDIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum AuctionForm {
    Soft { gamma: f64 },
    Hard { gamma_bar: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuctionOutcome {
    pub form: AuctionForm,
    pub allocation: Allocation,
    pub payments: Vec<f64>,
    /// Present once true costs are supplied via [`AuctionOutcome::with_true_costs`].
    pub utilities: Option<Vec<f64>>,
    /// `𝓑(μ^VCG, b)`.
    pub objective: f64,
    /// `𝓑(μ^VCG−k, b)` per agent.
    pub exclusion_objectives: Vec<f64>,
}

impl AuctionOutcome {
    pub fn mu(&self) -> &[f64] {
        &self.allocation.mu
    }

    pub fn level(&self) -> f64 {
        self.allocation.level
    }

    pub fn with_true_costs(mut self, true_costs: &[CostCurve]) -> Result<Self> {
        if true_costs.len() != self.payments.len() {
            return Err(Error::InvalidInput(format!(
                "{} true cost curves for {} agents",
                true_costs.len(),
                self.payments.len()
            )));
        }
        let utilities = (0..true_costs.len())
            .map(|k| agent_utility(k, &self, &true_costs[k]))
            .collect();
        self.utilities = Some(utilities);
        Ok(self)
    }
}

fn solve(
    form: AuctionForm,
    m0: &[f64],
    bids: &[Agent],
    budget: DisturbanceBudget,
) -> Result<Allocation> {
    match form {
        AuctionForm::Soft { gamma } => solve_centralized_soft(gamma, m0, bids, budget),
        AuctionForm::Hard { gamma_bar } => solve_centralized_hard(gamma_bar, m0, bids, budget),
    }
}

fn solve_without(
    form: AuctionForm,
    k: usize,
    m0: &[f64],
    bids: &[Agent],
    budget: DisturbanceBudget,
) -> Result<Allocation> {
    match form {
        AuctionForm::Soft { gamma } => solve_centralized_soft_excluding(gamma, m0, bids, budget, k),
        AuctionForm::Hard { gamma_bar } => {
            solve_centralized_hard_excluding(gamma_bar, m0, bids, budget, k).map_err(|e| match e {
                Error::Infeasible { .. } => Error::PivotalAgent {
                    agent: bids[k].id.clone(),
                },
                other => other,
            })
        }
    }
}

/// `𝓑(μ, b)` for an allocation computed under `form`.
fn social_cost(form: AuctionForm, alloc: &Allocation, bids: &[Agent]) -> f64 {
    let bid_cost: f64 = bids
        .iter()
        .zip(&alloc.mu)
        .map(|(a, &q)| a.curve.eval(q))
        .sum();
    match form {
        AuctionForm::Soft { gamma } => gamma * alloc.worst_case + bid_cost,
        AuctionForm::Hard { .. } => bid_cost,
    }
}

/// Soft-form optimum when agent `k` abstains.
pub fn exclusion_solve(
    k: usize,
    bids: &[Agent],
    gamma: f64,
    m0: &[f64],
    budget: DisturbanceBudget,
) -> Result<Allocation> {
    solve_without(AuctionForm::Soft { gamma }, k, m0, bids, budget)
}

/// Hard-form optimum when agent `k` abstains; a pivotal agent is an error.
pub fn exclusion_solve_hard(
    k: usize,
    bids: &[Agent],
    gamma_bar: f64,
    m0: &[f64],
    budget: DisturbanceBudget,
) -> Result<Allocation> {
    solve_without(AuctionForm::Hard { gamma_bar }, k, m0, bids, budget)
}

/// VCG payment of agent `k` given the base outcome and its exclusion solve.
pub fn vcg_payment(
    k: usize,
    bids: &[Agent],
    base: &AuctionOutcome,
    excl: &Allocation,
) -> Result<f64> {
    if k >= bids.len() || base.allocation.mu.len() != bids.len() || excl.mu.len() != bids.len() {
        return Err(Error::Contract("agent count differs between inputs".into()));
    }
    let weight_matches = match base.form {
        AuctionForm::Soft { gamma } => excl.gamma == Some(gamma),
        AuctionForm::Hard { .. } => excl.gamma.is_none(),
    };
    if !weight_matches {
        return Err(Error::Contract(
            "base and exclusion solves use different objectives".into(),
        ));
    }
    if excl.mu[k] != 0.0 {
        return Err(Error::Contract(format!(
            "exclusion solve still procures from agent {}",
            bids[k].id
        )));
    }
    let with_k = social_cost(base.form, &base.allocation, bids);
    let without_k = social_cost(base.form, excl, bids);
    let own = bids[k].curve.eval(base.allocation.mu[k]);
    Ok(without_k - (with_k - own))
}

/// `u_k = p_k − c_k(μ_k)`.
pub fn agent_utility(k: usize, outcome: &AuctionOutcome, true_cost: &CostCurve) -> f64 {
    outcome.payments[k] - true_cost.eval(outcome.allocation.mu[k])
}

fn run(
    form: AuctionForm,
    bids: &[Agent],
    m0: &[f64],
    budget: DisturbanceBudget,
) -> Result<AuctionOutcome> {
    let allocation = solve(form, m0, bids, budget)?;
    let objective = social_cost(form, &allocation, bids);
    let mut outcome = AuctionOutcome {
        form,
        allocation,
        payments: Vec::with_capacity(bids.len()),
        utilities: None,
        objective,
        exclusion_objectives: Vec::with_capacity(bids.len()),
    };
    for k in 0..bids.len() {
        // An unallocated agent's exclusion problem has the base optimum as
        // its solution: it is feasible there and optimal over the superset.
        let excl = if outcome.allocation.mu[k] == 0.0 {
            outcome.allocation.clone()
        } else {
            solve_without(form, k, m0, bids, budget)?
        };
        let payment = vcg_payment(k, bids, &outcome, &excl)?;
        outcome
            .exclusion_objectives
            .push(social_cost(form, &excl, bids));
        outcome.payments.push(payment);
    }
    Ok(outcome)
}

/// Soft-form auction with trade-off `gamma`.
pub fn run_auction(
    bids: &[Agent],
    gamma: f64,
    m0: &[f64],
    budget: DisturbanceBudget,
) -> Result<AuctionOutcome> {
    run(AuctionForm::Soft { gamma }, bids, m0, budget)
}

/// Hard-form auction enforcing `Γ ≤ gamma_bar`.
pub fn run_auction_hard(
    bids: &[Agent],
    gamma_bar: f64,
    m0: &[f64],
    budget: DisturbanceBudget,
) -> Result<AuctionOutcome> {
    run(AuctionForm::Hard { gamma_bar }, bids, m0, budget)
}

pub fn run_auction_form(
    form: AuctionForm,
    bids: &[Agent],
    m0: &[f64],
    budget: DisturbanceBudget,
) -> Result<AuctionOutcome> {
    run(form, bids, m0, budget)
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub trials: usize,
    /// Trials skipped because the deviation made the hard target infeasible
    /// or the deviating agent pivotal.
    pub skipped: usize,
    /// Largest `u_k(deviation) − u_k(truth)` observed.
    pub max_violation: f64,
    /// Mean of `u_k(truth) − u_k(deviation)`.
    pub mean_truthful_advantage: f64,
    /// Smallest truthful utility observed.
    pub min_truthful_utility: f64,
    /// Smallest payment observed under truthful bidding.
    pub min_truthful_payment: f64,
}

#[derive(Debug, Serialize)]
struct AuditInstance<'a> {
    form: AuctionForm,
    m0: &'a [f64],
    pi_tot: f64,
    deviator: &'a str,
    true_cost: &'a [Segment],
    deviation: &'a [Segment],
    other_bids: Vec<(&'a str, usize, &'a [Segment])>,
}

/// Payment and utility of agent `k` when bidding `bid_k` against `bids`.
fn utility_of(
    form: AuctionForm,
    k: usize,
    bids: &[Agent],
    true_cost: &CostCurve,
    m0: &[f64],
    budget: DisturbanceBudget,
    excl: &Allocation,
) -> Result<(f64, f64)> {
    let allocation = solve(form, m0, bids, budget)?;
    let objective = social_cost(form, &allocation, bids);
    let base = AuctionOutcome {
        form,
        allocation,
        payments: vec![],
        utilities: None,
        objective,
        exclusion_objectives: vec![],
    };
    let p = vcg_payment(k, bids, &base, excl)?;
    Ok((p, p - true_cost.eval(base.allocation.mu[k])))
}

fn deviate<R: Rng + ?Sized>(rng: &mut R, truth: &CostCurve) -> CostCurve {
    let factors: Vec<f64> = truth
        .segments()
        .iter()
        .map(|_| log_uniform(rng, 0.25, 4.0))
        .collect();
    let scaled = truth
        .with_scaled_prices(&factors)
        .expect("scaling keeps widths positive");
    if rng.random_bool(0.25) {
        // Withhold part of the capacity as well.
        let keep = rng.random_range(0.3..1.0);
        let segments = scaled
            .segments()
            .iter()
            .map(|s| Segment {
                width: s.width * keep,
                price: s.price,
            })
            .collect();
        CostCurve::new(segments).expect("withholding keeps widths positive")
    } else {
        scaled
    }
}

/// Empirical dominant-strategy check.
///
/// Each trial picks an agent, draws random convex bids for everyone else
/// (same capacities), and compares the agent's utility when bidding its true
/// cost against a random misreport.
pub fn incentive_audit(
    true_costs: &[Agent],
    form: AuctionForm,
    m0: &[f64],
    budget: DisturbanceBudget,
    trials: usize,
    seed: u64,
) -> Result<AuditReport> {
    if trials == 0 {
        return Err(Error::InvalidInput("audit needs at least one trial".into()));
    }
    if true_costs.is_empty() {
        return Err(Error::InvalidInput("audit needs at least one agent".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = AuditReport {
        trials,
        skipped: 0,
        max_violation: f64::NEG_INFINITY,
        mean_truthful_advantage: 0.0,
        min_truthful_utility: f64::INFINITY,
        min_truthful_payment: f64::INFINITY,
    };
    let mut counted = 0usize;

    for _ in 0..trials {
        let k = rng.random_range(0..true_costs.len());
        let mut bids: Vec<Agent> = true_costs
            .iter()
            .map(|a| {
                Agent::new(
                    a.id.clone(),
                    a.bus,
                    random_curve_with_cap(&mut rng, a.cap()),
                )
            })
            .collect();
        let truth = true_costs[k].curve.clone();
        let deviation = deviate(&mut rng, &truth);

        // The exclusion problem does not depend on agent k's own bid.
        bids[k].curve = truth.clone();
        let excl = match solve_without(form, k, m0, &bids, budget) {
            Ok(a) => a,
            Err(Error::PivotalAgent { .. }) => {
                report.skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let (p_truth, u_truth) = utility_of(form, k, &bids, &truth, m0, budget, &excl)?;

        bids[k].curve = deviation.clone();
        let (_, u_dev) = match utility_of(form, k, &bids, &truth, m0, budget, &excl) {
            Ok(v) => v,
            Err(Error::Infeasible { .. }) => {
                report.skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };

        let gain = u_dev - u_truth;
        if gain > AUDIT_TOLERANCE {
            let instance = AuditInstance {
                form,
                m0,
                pi_tot: budget.pi_tot(),
                deviator: &true_costs[k].id,
                true_cost: truth.segments(),
                deviation: deviation.segments(),
                other_bids: bids
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != k)
                    .map(|(_, a)| (a.id.as_str(), a.bus, a.curve.segments()))
                    .collect(),
            };
            return Err(Error::AuditFailure {
                violation: gain,
                instance: serde_json::to_string(&instance).unwrap_or_default(),
            });
        }
        counted += 1;
        report.max_violation = report.max_violation.max(gain);
        report.mean_truthful_advantage += -gain;
        report.min_truthful_utility = report.min_truthful_utility.min(u_truth);
        report.min_truthful_payment = report.min_truthful_payment.min(p_truth);
    }
    if counted > 0 {
        report.mean_truthful_advantage /= counted as f64;
    }
    Ok(report)
}
