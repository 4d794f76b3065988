//! Random convex curves and small procurement instances for audits and tests.

use rand::Rng;

use crate::cost::{CostCurve, Segment};
use crate::planner::Agent;

/// Log-uniform draw on `[lo, hi]`.
pub fn log_uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..=hi.ln())).exp()
}

/// 1–3 segments splitting `cap`, unit prices log-uniform in `[0.1, 20]`.
pub fn random_curve_with_cap<R: Rng + ?Sized>(rng: &mut R, cap: f64) -> CostCurve {
    let count = rng.random_range(1..=3usize);
    let mut cuts: Vec<f64> = (0..count - 1)
        .map(|_| rng.random_range(0.05..0.95))
        .collect();
    cuts.sort_by(f64::total_cmp);
    let mut prices: Vec<f64> = (0..count).map(|_| log_uniform(rng, 0.1, 20.0)).collect();
    prices.sort_by(f64::total_cmp);
    let mut edges = vec![0.0];
    edges.extend(cuts);
    edges.push(1.0);
    let segments = edges
        .windows(2)
        .zip(prices)
        .map(|(w, price)| Segment {
            width: (w[1] - w[0]) * cap,
            price,
        })
        .collect();
    CostCurve::new(segments).expect("sampled curve is convex by construction")
}

/// As [`random_curve_with_cap`] with the cap uniform in `[1, 50]`.
pub fn random_curve<R: Rng + ?Sized>(rng: &mut R) -> CostCurve {
    let cap = rng.random_range(1.0..=50.0);
    random_curve_with_cap(rng, cap)
}

/// A random market instance.
#[derive(Debug, Clone)]
pub struct Instance {
    pub m0: Vec<f64>,
    pub agents: Vec<Agent>,
    pub pi_tot: f64,
    pub gamma: f64,
}

/// Up to `max_buses` buses (m⁰ uniform in `[1, 20]`) and 1..=`max_agents`
/// agents with random curves.
pub fn random_instance<R: Rng + ?Sized>(
    rng: &mut R,
    max_buses: usize,
    max_agents: usize,
) -> Instance {
    let n = rng.random_range(1..=max_buses);
    let m0 = (0..n).map(|_| rng.random_range(1.0..=20.0)).collect();
    let count = rng.random_range(1..=max_agents);
    let agents = (0..count)
        .map(|k| Agent::new(format!("g{k}"), rng.random_range(0..n), random_curve(rng)))
        .collect();
    Instance {
        m0,
        agents,
        pi_tot: rng.random_range(1.0..=20.0),
        gamma: log_uniform(rng, 1.0, 1e4),
    }
}
