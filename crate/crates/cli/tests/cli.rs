use std::fs;
use std::path::PathBuf;

use inertia_cli::run;

fn case_file() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/scenarios/case_study.toml")
}

fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("inertia-market").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

fn write_scenario(dir: &tempfile::TempDir, name: &str, body: &str) -> String {
    let path = dir.path().join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const NO_GRID: &str = r#"
format_version = 1
name = "market only"
timescale = "day-ahead"

[disturbance]
set = "budget"
pi_tot = 4

[[bus]]
id = 1
m0 = 2.0

[[bus]]
id = 2
m0 = 8.0

[[agent]]
id = "x"
bus = 1
bid = [[10.0, 2.0]]
"#;

/// CSV body rows as (agent_id, columns).
fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .skip(1)
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn summary_field(csv: &str, key: &str) -> Option<f64> {
    let line = csv.lines().find(|l| l.starts_with('#'))?;
    line.trim_start_matches("# ")
        .split(',')
        .find_map(|kv| kv.strip_prefix(&format!("{key}=")).map(str::to_string))
        .and_then(|v| v.parse().ok())
}

#[test]
fn validate_reports_shape() {
    let (code, out, _) = cli(&["validate", case_file().to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(out.contains("12 buses (9 with inertia)"), "{out}");
    assert!(out.contains("15 agents"), "{out}");
    assert!(out.contains("gamma_bar = 0.29"), "{out}");
}

#[test]
fn worst_case_on_case_study() {
    let (code, out, _) = cli(&["worst-case", case_file().to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(out.contains("worst case gamma = 1.385182"), "{out}");
    assert!(out.contains("argmax bus = 4"), "{out}");
}

#[test]
fn h2_methods() {
    let file = case_file();
    let path = file.to_str().unwrap();
    let (code, closed, _) = cli(&["h2", path, "--method", "closed", "--kappa", "2"]);
    assert_eq!(code, 0);
    let (code, gramian, _) = cli(&["h2", path, "--method", "gramian"]);
    assert_eq!(code, 0);
    let value = |s: &str| -> f64 { s.rsplit('=').next().unwrap().trim().parse().unwrap() };
    assert!(
        (value(&closed) - value(&gramian)).abs() < 1e-8,
        "{closed} {gramian}"
    );
    let (code, ub, _) = cli(&["h2", path, "--method", "upper-bound"]);
    assert_eq!(code, 0);
    assert!(ub.contains("U_b"), "{ub}");
}

#[test]
fn gramian_without_topology_explains_requirement() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(&dir, "s.toml", NO_GRID);
    let (code, _, err) = cli(&["h2", &path, "--method", "gramian"]);
    assert_eq!(code, 1);
    assert!(err.contains("needs grid topology"), "{err}");
    let (code, out, _) = cli(&["h2", &path, "--method", "closed"]);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("= 1.250000000"), "{out}");
}

#[test]
fn usage_errors_exit_one() {
    let (code, _, err) = cli(&["frobnicate"]);
    assert_eq!(code, 1);
    assert!(err.contains("Usage"), "{err}");
    let (code, _, _) = cli(&["plan", case_file().to_str().unwrap(), "--bogus"]);
    assert_eq!(code, 1);
    let (code, _, err) = cli(&[
        "plan",
        case_file().to_str().unwrap(),
        "--gamma",
        "1",
        "--gamma-bar",
        "0.3",
    ]);
    assert_eq!(code, 1);
    assert!(err.contains("cannot be used with"), "{err}");
    let (code, out, _) = cli(&["--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("case-study"));
}

#[test]
fn input_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_scenario(
        &dir,
        "bad.toml",
        &NO_GRID.replace("[[10.0, 2.0]]", "[[1.0, 3.0], [1.0, 2.0]]"),
    );
    let (code, _, err) = cli(&["validate", &bad]);
    assert_eq!(code, 1);
    assert!(err.contains("convex"), "{err}");

    let (code, _, err) = cli(&["validate", "/nonexistent/scenario.toml"]);
    assert_eq!(code, 1);
    assert!(err.contains("i/o error"), "{err}");

    let ok = write_scenario(&dir, "ok.toml", NO_GRID);
    let (code, _, err) = cli(&["plan", &ok, "--gamma-bar", "0.01"]);
    assert_eq!(code, 1);
    assert!(err.contains("infeasible"), "{err}");

    let (code, _, err) = cli(&["auction", &ok, "--gamma-bar", "1"]);
    assert_eq!(code, 1, "{err}");
    assert!(err.contains("pivotal"), "{err}");

    let (code, _, err) = cli(&["plan", &ok]);
    assert_eq!(code, 1);
    assert!(err.contains("no mode"), "{err}");
}

#[test]
fn soft_auction_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(&dir, "s.toml", NO_GRID);
    let (code, csv, err) = cli(&["auction", &path, "--gamma", "4", "--format", "csv"]);
    assert_eq!(code, 0, "{err}");
    assert!(csv.starts_with("agent_id,bus,mu,cost,payment,per_unit_payment,utility\n"));
    let r = rows(&csv);
    assert_eq!(r.len(), 1);
    // level √(γπ_tot/2) = √8 on bus 1, capped by bus 2 at 8.
    let mu: f64 = r[0][2].parse().unwrap();
    assert!((mu - (8f64.sqrt() - 2.0)).abs() < 1e-5, "{csv}");
    let total = summary_field(&csv, "total_payment").unwrap();
    let payment: f64 = r[0][4].parse().unwrap();
    assert!((total - payment).abs() < 1e-5);
}

#[test]
fn compare_shows_identical_allocations() {
    let (code, out, err) = cli(&["compare", case_file().to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    assert!(
        out.contains("max |mu_centralized - mu_market| = 0.000e0"),
        "{out}"
    );
    assert!(out.contains("regulatory"));
}

#[test]
fn case_study_writes_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("bundle");
    let (code, out, err) = cli(&["case-study", "--out", target.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("illustrative"), "{out}");
    for name in ["centralized", "market", "regulatory"] {
        let csv = fs::read_to_string(target.join(format!("{name}.csv"))).unwrap();
        let r = rows(&csv);
        assert_eq!(r.len(), 15);
        let sum: f64 = r.iter().map(|row| row[3].parse::<f64>().unwrap()).sum();
        let total = summary_field(&csv, "total_cost").unwrap();
        assert!((sum - total).abs() < 1e-3, "{name}: {sum} vs {total}");
    }
    assert!(target.join("summary.txt").exists());
    let market = fs::read_to_string(target.join("market.csv")).unwrap();
    let total = summary_field(&market, "total_cost").unwrap();
    assert!((total - 201.631).abs() < 1e-3);
}

#[test]
fn unwritable_destination_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let (code, _, err) = cli(&["case-study", "--out", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(err.contains("i/o error"), "{err}");
}
