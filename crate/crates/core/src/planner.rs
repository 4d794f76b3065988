//! Centralized inertia procurement.
//!
//! The worst-case metric depends on the weakest bus only, so every optimal
//! allocation raises all deficient buses to one common level `L` and the
//! problem collapses to a scalar search over `L`. The cheapest way to lift a
//! bus to `L` is a merit-order fill of its agents' segments, which makes the
//! total fill cost a convex piecewise-linear function of `L`; each piece is
//! minimized in closed form.

use serde::{Deserialize, Serialize};

use crate::cost::CostCurve;
use crate::error::{Error, Result};
use crate::robust::{
    expand_performance_constraint, gamma_at_level, worst_case_metric, DisturbanceBudget,
};

/// Bisection budget for the dual-γ iteration.
pub const MAX_BISECTION_STEPS: usize = 200;
/// Relative width of the final γ bracket.
pub const GAMMA_TOLERANCE: f64 = 1e-9;

/// A virtual inertia provider at a bus, with its (bid or true) cost curve.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub id: String,
    pub bus: usize,
    pub curve: CostCurve,
}

impl Agent {
    pub fn new(id: impl Into<String>, bus: usize, curve: CostCurve) -> Self {
        Agent {
            id: id.into(),
            bus,
            curve,
        }
    }

    /// Maximum procurable inertia, `μ̄_k`.
    pub fn cap(&self) -> f64 {
        self.curve.cap()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveParts {
    /// `γ·Γ(m)`; absent for allocations not driven by a trade-off weight.
    pub gamma_term: Option<f64>,
    /// `Σ c_k(μ_k)` under the curves the allocation was computed with.
    pub cost_term: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    /// Inertia procured from each agent.
    pub mu: Vec<f64>,
    /// Resulting per-bus inertia `m⁰ + Σ μ`.
    pub m: Vec<f64>,
    /// Target level reached by every deficient bus.
    pub level: f64,
    /// `Γ(m)`.
    pub worst_case: f64,
    /// Trade-off weight used, if any.
    pub gamma: Option<f64>,
    pub objective_parts: ObjectiveParts,
}

impl Allocation {
    /// `γ·Γ(m) + Σ c_k(μ_k)` (the cost alone when no weight applies).
    pub fn objective(&self) -> f64 {
        self.objective_parts.gamma_term.unwrap_or(0.0) + self.objective_parts.cost_term
    }
}

/// Merit-order view of all segments offered at one bus.
struct BusSupply {
    m0: f64,
    /// `(price, width)` sorted by price.
    segments: Vec<(f64, f64)>,
    cap: f64,
}

impl BusSupply {
    fn new(m0: f64, curves: &[&CostCurve]) -> Self {
        let mut segments: Vec<(f64, f64)> = curves
            .iter()
            .flat_map(|c| c.segments().iter().map(|s| (s.price, s.width)))
            .collect();
        segments.sort_by(|a, b| a.0.total_cmp(&b.0));
        let cap = segments.iter().map(|s| s.1).sum();
        BusSupply { m0, segments, cap }
    }

    fn max_level(&self) -> f64 {
        self.m0 + self.cap
    }

    /// Levels where the bus's fill cost changes slope.
    fn knots(&self) -> impl Iterator<Item = f64> + '_ {
        let mut acc = self.m0;
        std::iter::once(self.m0).chain(self.segments.iter().map(move |s| {
            acc += s.1;
            acc
        }))
    }

    /// Marginal fill price at a level strictly inside a knot interval.
    fn slope_at(&self, level: f64) -> f64 {
        if level <= self.m0 {
            return 0.0;
        }
        let mut left = level - self.m0;
        for &(price, width) in &self.segments {
            if left <= width {
                return price;
            }
            left -= width;
        }
        f64::INFINITY
    }

    fn cost_at(&self, level: f64) -> f64 {
        let mut left = (level - self.m0).max(0.0);
        let mut total = 0.0;
        for &(price, width) in &self.segments {
            if left <= 0.0 {
                break;
            }
            let take = left.min(width);
            total += take * price;
            left -= take;
        }
        total
    }
}

/// Within-tolerance check that `need` fits in `cap`.
fn fits(need: f64, cap: f64) -> bool {
    need <= cap * (1.0 + 1e-12) + 1e-12
}

/// Cheapest fills of `need` units from `curves`, merit order with an equal
/// split among agents sharing the marginal price. `None` if `need` exceeds
/// the total capacity.
fn fill(curves: &[&CostCurve], need: f64) -> Option<Vec<f64>> {
    let k = curves.len();
    let mut fills = vec![0.0; k];
    if need <= 0.0 {
        return Some(fills);
    }
    let total: f64 = curves.iter().map(|c| c.cap()).sum();
    if !fits(need, total) {
        return None;
    }

    let mut entries: Vec<(f64, usize, f64)> = curves
        .iter()
        .enumerate()
        .flat_map(|(a, c)| c.segments().iter().map(move |s| (s.price, a, s.width)))
        .collect();
    entries.sort_by(|x, y| x.0.total_cmp(&y.0));

    let mut remaining = need.min(total);
    let mut start = 0;
    while start < entries.len() && remaining > 0.0 {
        let price = entries[start].0;
        let end = entries[start..]
            .iter()
            .position(|e| e.0 != price)
            .map_or(entries.len(), |p| start + p);

        // Per-agent capacity at this price.
        let mut group: Vec<(usize, f64)> = Vec::new();
        for &(_, a, w) in &entries[start..end] {
            match group.iter_mut().find(|g| g.0 == a) {
                Some(g) => g.1 += w,
                None => group.push((a, w)),
            }
        }
        let group_cap: f64 = group.iter().map(|g| g.1).sum();

        if remaining >= group_cap {
            for &(a, w) in &group {
                fills[a] += w;
            }
            remaining -= group_cap;
        } else {
            // Equal split, clipped at caps, clipped remainder re-split.
            group.sort_by(|x, y| x.1.total_cmp(&y.1));
            let mut left = group.len();
            for &(a, w) in &group {
                let share = remaining / left as f64;
                let take = w.min(share);
                fills[a] += take;
                remaining -= take;
                left -= 1;
            }
            remaining = 0.0;
        }
        start = end;
    }
    Some(fills)
}

/// Minimum-cost fills lifting a bus from `m0_i` to `target`.
///
/// Returns the total cost and the per-agent fills in the order given.
pub fn node_fill_cost(agents_at_bus: &[Agent], target: f64, m0_i: f64) -> Result<(f64, Vec<f64>)> {
    if !(target >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "target level must be non-negative, got {target}"
        )));
    }
    let curves: Vec<&CostCurve> = agents_at_bus.iter().map(|a| &a.curve).collect();
    let need = (target - m0_i).max(0.0);
    let fills = fill(&curves, need).ok_or_else(|| Error::Infeasible {
        bus: agents_at_bus.first().map_or(0, |a| a.bus),
        required: target,
        max_inertia: m0_i + curves.iter().map(|c| c.cap()).sum::<f64>(),
    })?;
    let cost = curves.iter().zip(&fills).map(|(c, &q)| c.eval(q)).sum();
    Ok((cost, fills))
}

/// Agents active in a solve, with at most one excluded.
struct Market<'a> {
    m0: &'a [f64],
    agents: &'a [Agent],
    excluded: Option<usize>,
    budget: DisturbanceBudget,
}

impl<'a> Market<'a> {
    fn new(
        m0: &'a [f64],
        agents: &'a [Agent],
        budget: DisturbanceBudget,
        excluded: Option<usize>,
    ) -> Result<Self> {
        validate(m0, agents)?;
        if let Some(k) = excluded {
            if k >= agents.len() {
                return Err(Error::InvalidInput(format!("no agent with index {k}")));
            }
        }
        Ok(Market {
            m0,
            agents,
            excluded,
            budget,
        })
    }

    fn active_at(&self, bus: usize) -> Vec<usize> {
        (0..self.agents.len())
            .filter(|&k| self.agents[k].bus == bus && Some(k) != self.excluded)
            .collect()
    }

    fn supplies(&self) -> Vec<BusSupply> {
        (0..self.m0.len())
            .map(|i| {
                let curves: Vec<&CostCurve> = self
                    .active_at(i)
                    .into_iter()
                    .map(|k| &self.agents[k].curve)
                    .collect();
                BusSupply::new(self.m0[i], &curves)
            })
            .collect()
    }

    fn min_m0(&self) -> f64 {
        self.m0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Fills every bus up to `level`.
    fn fill_to(&self, level: f64) -> Result<Vec<f64>> {
        let mut mu = vec![0.0; self.agents.len()];
        for (i, &m0) in self.m0.iter().enumerate() {
            let ks = self.active_at(i);
            let curves: Vec<&CostCurve> = ks.iter().map(|&k| &self.agents[k].curve).collect();
            let fills = fill(&curves, level - m0).ok_or_else(|| Error::Infeasible {
                bus: i,
                required: level,
                max_inertia: m0 + curves.iter().map(|c| c.cap()).sum::<f64>(),
            })?;
            for (k, q) in ks.into_iter().zip(fills) {
                mu[k] = q;
            }
        }
        Ok(mu)
    }

    /// Rejects levels above what the weakest fully-supplied bus can reach.
    fn check_reachable(&self, level: f64) -> Result<()> {
        let supplies = self.supplies();
        let (bus, top) = supplies
            .iter()
            .enumerate()
            .map(|(i, s)| (i, s.max_level()))
            .fold(
                (0, f64::INFINITY),
                |acc, x| if x.1 < acc.1 { x } else { acc },
            );
        if !fits(level - self.m0[bus], top - self.m0[bus]) {
            return Err(Error::Infeasible {
                bus,
                required: level,
                max_inertia: top,
            });
        }
        Ok(())
    }

    fn allocation(&self, mu: Vec<f64>, level: f64, gamma: Option<f64>) -> Result<Allocation> {
        allocation_from(self.m0, self.agents, self.budget, mu, level, gamma)
    }
}

fn validate(m0: &[f64], agents: &[Agent]) -> Result<()> {
    if m0.is_empty() {
        return Err(Error::InvalidInput("no buses".into()));
    }
    if let Some(i) = m0.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::InvalidInput(format!(
            "residual inertia at bus {} must be positive, got {}",
            i + 1,
            m0[i]
        )));
    }
    if let Some(a) = agents.iter().find(|a| a.bus >= m0.len()) {
        return Err(Error::InvalidInput(format!(
            "agent {} sits at bus index {} but there are {} buses",
            a.id,
            a.bus,
            m0.len()
        )));
    }
    Ok(())
}

/// Assemble an [`Allocation`] from per-agent quantities.
pub fn allocation_from(
    m0: &[f64],
    agents: &[Agent],
    budget: DisturbanceBudget,
    mu: Vec<f64>,
    level: f64,
    gamma: Option<f64>,
) -> Result<Allocation> {
    let mut m = m0.to_vec();
    for (a, &q) in agents.iter().zip(&mu) {
        m[a.bus] += q;
    }
    let worst_case = worst_case_metric(&m, budget)?.gamma;
    let cost_term = agents.iter().zip(&mu).map(|(a, &q)| a.curve.eval(q)).sum();
    Ok(Allocation {
        mu,
        m,
        level,
        worst_case,
        gamma,
        objective_parts: ObjectiveParts {
            gamma_term: gamma.map(|g| g * worst_case),
            cost_term,
        },
    })
}

fn soft(market: &Market<'_>, gamma: f64) -> Result<Allocation> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "trade-off weight must be positive, got {gamma}"
        )));
    }
    let supplies = market.supplies();
    let lo = market.min_m0();
    let hi = supplies
        .iter()
        .map(BusSupply::max_level)
        .fold(f64::INFINITY, f64::min);

    let mut knots: Vec<f64> = supplies
        .iter()
        .flat_map(|s| s.knots().collect::<Vec<_>>())
        .filter(|&x| x > lo && x < hi)
        .chain([lo, hi])
        .collect();
    knots.sort_by(f64::total_cmp);
    knots.dedup();

    let budget = market.budget;
    let weighted = gamma * budget.pi_tot();
    let mut best_level = lo;
    let mut best_value = gamma * gamma_at_level(lo, budget);

    for w in knots.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let mid = 0.5 * (a + b);
        let slope: f64 = supplies.iter().map(|s| s.slope_at(mid)).sum();
        let base: f64 = supplies.iter().map(|s| s.cost_at(a)).sum();
        let level = if slope <= 0.0 {
            b
        } else {
            (weighted / slope).sqrt().clamp(a, b)
        };
        let value = gamma * gamma_at_level(level, budget) + base + slope * (level - a);
        if value < best_value - 1e-14 * best_value.abs() {
            best_value = value;
            best_level = level;
        }
    }

    let mu = market.fill_to(best_level)?;
    market.allocation(mu, best_level, Some(gamma))
}

/// Global minimizer of `γ·Γ(m(μ)) + Σ c_k(μ_k)` over `0 ≤ μ ≤ μ̄`.
pub fn solve_centralized_soft(
    gamma: f64,
    m0: &[f64],
    agents: &[Agent],
    budget: DisturbanceBudget,
) -> Result<Allocation> {
    soft(&Market::new(m0, agents, budget, None)?, gamma)
}

/// As [`solve_centralized_soft`], with agent `excluded` forced to zero.
pub fn solve_centralized_soft_excluding(
    gamma: f64,
    m0: &[f64],
    agents: &[Agent],
    budget: DisturbanceBudget,
    excluded: usize,
) -> Result<Allocation> {
    soft(&Market::new(m0, agents, budget, Some(excluded))?, gamma)
}

fn hard(market: &Market<'_>, gamma_bar: f64) -> Result<Allocation> {
    let level = expand_performance_constraint(gamma_bar, market.budget)?;
    let level = level.max(market.min_m0());
    market.check_reachable(level)?;
    let mu = market.fill_to(level)?;
    market.allocation(mu, level, None)
}

/// Minimum total cost subject to `Γ(m(μ)) ≤ Γ̄`.
pub fn solve_centralized_hard(
    gamma_bar: f64,
    m0: &[f64],
    agents: &[Agent],
    budget: DisturbanceBudget,
) -> Result<Allocation> {
    hard(&Market::new(m0, agents, budget, None)?, gamma_bar)
}

/// As [`solve_centralized_hard`], with agent `excluded` forced to zero.
pub fn solve_centralized_hard_excluding(
    gamma_bar: f64,
    m0: &[f64],
    agents: &[Agent],
    budget: DisturbanceBudget,
    excluded: usize,
) -> Result<Allocation> {
    hard(&Market::new(m0, agents, budget, Some(excluded))?, gamma_bar)
}

/// Bisection on the multiplier of the performance constraint.
///
/// Returns `γ*` and the soft-form allocation at `γ*` (on the feasible side of
/// the bracket).
pub fn dual_gamma_iterate(
    gamma_bar: f64,
    m0: &[f64],
    agents: &[Agent],
    budget: DisturbanceBudget,
) -> Result<(f64, Allocation)> {
    let market = Market::new(m0, agents, budget, None)?;
    let hard_alloc = hard(&market, gamma_bar)?;
    let feasible = |a: &Allocation| a.worst_case <= gamma_bar * (1.0 + 1e-12);

    if hard_alloc.mu.iter().all(|&q| q == 0.0) {
        let mu = vec![0.0; agents.len()];
        return Ok((0.0, market.allocation(mu, market.min_m0(), Some(0.0))?));
    }

    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut at_hi = soft(&market, hi)?;
    let mut doublings = 0;
    while !feasible(&at_hi) {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 1100 || !hi.is_finite() {
            return Err(Error::NoConvergence {
                steps: doublings,
                lo,
                hi,
            });
        }
        at_hi = soft(&market, hi)?;
    }

    for _ in 0..MAX_BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let at_mid = soft(&market, mid)?;
        if feasible(&at_mid) {
            hi = mid;
            at_hi = at_mid;
        } else {
            lo = mid;
        }
    }
    if hi - lo > GAMMA_TOLERANCE * hi {
        return Err(Error::NoConvergence {
            steps: MAX_BISECTION_STEPS,
            lo,
            hi,
        });
    }
    Ok((hi, at_hi))
}

/// Capacity-proportional procurement meeting `Γ̄` without regard to cost.
pub fn regulatory_allocation(
    gamma_bar: f64,
    m0: &[f64],
    agents: &[Agent],
    budget: DisturbanceBudget,
) -> Result<Allocation> {
    let market = Market::new(m0, agents, budget, None)?;
    let level = expand_performance_constraint(gamma_bar, budget)?.max(market.min_m0());
    market.check_reachable(level)?;
    let mut mu = vec![0.0; agents.len()];
    for (i, &m0_i) in m0.iter().enumerate() {
        let deficit = level - m0_i;
        if deficit <= 0.0 {
            continue;
        }
        let ks = market.active_at(i);
        let total: f64 = ks.iter().map(|&k| agents[k].cap()).sum();
        for k in ks {
            mu[k] = (deficit * agents[k].cap() / total).min(agents[k].cap());
        }
    }
    market.allocation(mu, level, None)
}
