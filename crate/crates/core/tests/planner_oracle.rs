//! Breakpoint planner against brute-force search over the common inertia level.

use inertia_core::planner::{
    dual_gamma_iterate, solve_centralized_hard, solve_centralized_soft, Agent,
};
use inertia_core::robust::DisturbanceBudget;
use inertia_core::sampling::random_instance;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Merit-order supply stacks per bus: (price, width) sorted by price.
fn stacks(m0: &[f64], agents: &[Agent]) -> Vec<Vec<(f64, f64)>> {
    let mut out = vec![Vec::new(); m0.len()];
    for a in agents {
        for s in a.curve.segments() {
            out[a.bus].push((s.price, s.width));
        }
    }
    for stack in &mut out {
        stack.sort_by(|x, y| x.0.total_cmp(&y.0));
    }
    out
}

/// Cheapest way to lift every bus to `level`, or `None` if some bus cannot.
fn lift_cost(level: f64, m0: &[f64], stacks: &[Vec<(f64, f64)>]) -> Option<f64> {
    let mut total = 0.0;
    for (i, stack) in stacks.iter().enumerate() {
        let mut need = level - m0[i];
        for &(price, width) in stack {
            if need <= 0.0 {
                break;
            }
            let take = need.min(width);
            total += take * price;
            need -= take;
        }
        if need > 1e-12 {
            return None;
        }
    }
    Some(total)
}

fn max_level(m0: &[f64], stacks: &[Vec<(f64, f64)>]) -> f64 {
    m0.iter()
        .zip(stacks)
        .map(|(&m, s)| m + s.iter().map(|x| x.1).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

/// Minimum of `γ·π_tot/L + lift_cost(L)` over a 1e-4 grid of levels.
fn grid_search(gamma: f64, pi_tot: f64, m0: &[f64], agents: &[Agent]) -> f64 {
    let stacks = stacks(m0, agents);
    let lo = m0.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = max_level(m0, &stacks);
    let step = 1e-4;
    let count = ((hi - lo) / step).floor() as usize;
    let mut best = f64::INFINITY;
    for k in 0..=count + 1 {
        let level = (lo + k as f64 * step).min(hi);
        if let Some(c) = lift_cost(level, m0, &stacks) {
            best = best.min(gamma * pi_tot / level + c);
        }
    }
    best
}

#[test]
fn breakpoint_solver_matches_grid_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..200 {
        let inst = random_instance(&mut rng, 4, 6);
        let budget = DisturbanceBudget::new(inst.pi_tot).unwrap();
        let alloc = solve_centralized_soft(inst.gamma, &inst.m0, &inst.agents, budget).unwrap();
        let oracle = grid_search(inst.gamma, inst.pi_tot, &inst.m0, &inst.agents);
        let value = alloc.objective();
        assert!(
            value <= oracle + 1e-9 * oracle.abs(),
            "trial {trial}: solver {value} above grid search {oracle}"
        );
        assert!(
            oracle - value <= 1e-3,
            "trial {trial}: solver {value} vs grid search {oracle}"
        );
    }
}

#[test]
fn hard_form_and_dual_multiplier_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut checked = 0;
    while checked < 200 {
        let inst = random_instance(&mut rng, 4, 6);
        let budget = DisturbanceBudget::new(inst.pi_tot).unwrap();
        let stacks = stacks(&inst.m0, &inst.agents);
        let lo = inst.m0.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = max_level(&inst.m0, &stacks);
        if hi <= lo * (1.0 + 1e-6) {
            continue;
        }
        let target = rng.random_range(lo..hi);
        let gamma_bar = inst.pi_tot / target;

        let hard = solve_centralized_hard(gamma_bar, &inst.m0, &inst.agents, budget).unwrap();
        let (gamma_star, dual) =
            dual_gamma_iterate(gamma_bar, &inst.m0, &inst.agents, budget).unwrap();
        let (a, b) = (
            hard.objective_parts.cost_term,
            dual.objective_parts.cost_term,
        );
        assert!(
            (a - b).abs() <= 1e-6 * a.abs().max(1e-12),
            "hard {a} vs dual {b} (gamma* = {gamma_star})"
        );
        assert!(dual.worst_case <= gamma_bar * (1.0 + 1e-9));
        assert!(gamma_star > 0.0);
        checked += 1;
    }
}
