//! Worst-case primary-effort metric over the disturbance budget polytope
//! `{π ≥ 0 : Σπᵢ ≤ π_tot}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::h2::{h2_primary_effort_closed, Kappa};

/// Total disturbance budget defining the polytope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceBudget {
    pi_tot: f64,
}

impl DisturbanceBudget {
    pub fn new(pi_tot: f64) -> Result<Self> {
        if !(pi_tot >= 0.0 && pi_tot.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "disturbance budget must be non-negative and finite, got {pi_tot}"
            )));
        }
        Ok(DisturbanceBudget { pi_tot })
    }

    pub fn pi_tot(&self) -> f64 {
        self.pi_tot
    }

    /// Budget with the closed-form scaling convention folded in, so that
    /// `Γ` under `kappa` equals `Γ` of the returned budget under `Kappa::One`.
    pub fn with_kappa(self, kappa: Kappa) -> Self {
        DisturbanceBudget {
            pi_tot: self.pi_tot / kappa.value(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorstCase {
    /// `Γ(m)`.
    pub gamma: f64,
    /// Dual multiplier of the budget constraint, `maxᵢ 1/mᵢ`.
    pub rho: f64,
    /// Maximizing disturbance, a vertex `π_tot·e_{i*}`.
    pub pi_star: Vec<f64>,
    /// Bus attaining `maxᵢ 1/mᵢ` (lowest index on ties).
    pub argmax_bus: usize,
}

fn check_inertia(m: &[f64]) -> Result<()> {
    if m.is_empty() {
        return Err(Error::InvalidInput("no buses".into()));
    }
    if let Some(i) = m.iter().position(|&x| !(x > 0.0)) {
        return Err(Error::InvalidInput(format!(
            "inertia at bus {} must be positive, got {}",
            i + 1,
            m[i]
        )));
    }
    Ok(())
}

/// Index of the smallest inertia, first one on ties.
pub(crate) fn weakest_bus(m: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in m.iter().enumerate().skip(1) {
        if x < m[best] {
            best = i;
        }
    }
    best
}

/// `Γ(m) = max_{π∈𝒫} Σ πᵢ/mᵢ`, attained at the vertex on the weakest bus.
pub fn worst_case_metric(m: &[f64], budget: DisturbanceBudget) -> Result<WorstCase> {
    check_inertia(m)?;
    let i_star = weakest_bus(m);
    let mut pi_star = vec![0.0; m.len()];
    pi_star[i_star] = budget.pi_tot;
    let gamma = h2_primary_effort_closed(m, &pi_star, Kappa::One)?;
    Ok(WorstCase {
        gamma,
        rho: 1.0 / m[i_star],
        pi_star,
        argmax_bus: i_star,
    })
}

/// Value of the dual program `min π_tot·ρ s.t. ρ ≥ 1/mᵢ ∀i, ρ ≥ 0`.
///
/// The feasible set is the half-line `ρ ≥ max(0, maxᵢ 1/mᵢ)` and the cost is
/// non-decreasing in `ρ`, so the optimum sits at its left end. Returns
/// `(value, ρ*)`.
pub fn worst_case_dual(m: &[f64], budget: DisturbanceBudget) -> Result<(f64, f64)> {
    check_inertia(m)?;
    let lower = m.iter().map(|&x| 1.0 / x).fold(0.0, f64::max);
    Ok((budget.pi_tot * lower, lower))
}

/// Uniform inertia level `π_tot/Γ̄` such that `Γ(m) ≤ Γ̄ ⇔ mᵢ ≥ level ∀i`.
pub fn expand_performance_constraint(gamma_bar: f64, budget: DisturbanceBudget) -> Result<f64> {
    if !(gamma_bar > 0.0) {
        return Err(Error::InvalidInput(format!(
            "performance target must be positive, got {gamma_bar}"
        )));
    }
    Ok(budget.pi_tot / gamma_bar)
}

/// `Γ` as a function of the smallest inertia alone.
pub(crate) fn gamma_at_level(level: f64, budget: DisturbanceBudget) -> f64 {
    if budget.pi_tot == 0.0 {
        0.0
    } else {
        budget.pi_tot / level
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn budget(p: f64) -> DisturbanceBudget {
        DisturbanceBudget::new(p).unwrap()
    }

    #[test]
    fn max_of_reciprocals() {
        let wc = worst_case_metric(&[2.0, 4.0, 5.0], budget(10.0)).unwrap();
        assert_eq!(wc.gamma, 5.0);
        assert_eq!(wc.rho, 0.5);
        assert_eq!(wc.argmax_bus, 0);
        assert_eq!(wc.pi_star, vec![10.0, 0.0, 0.0]);
    }

    #[test]
    fn uniform_inertia_ties_to_first_bus() {
        let wc = worst_case_metric(&[3.0; 4], budget(6.0)).unwrap();
        assert_eq!(wc.gamma, 2.0);
        assert_eq!(wc.argmax_bus, 0);
    }

    #[test]
    fn level_34_48_gives_gamma_0_29() {
        let level = expand_performance_constraint(0.29, budget(10.0)).unwrap();
        assert_relative_eq!(level, 10.0 / 0.29, max_relative = 1e-14);
        let m = [37.2, level, level, 35.4, level];
        let wc = worst_case_metric(&m, budget(10.0)).unwrap();
        assert_relative_eq!(wc.gamma, 0.29, max_relative = 1e-14);
    }

    #[test]
    fn zero_budget() {
        assert_eq!(
            expand_performance_constraint(0.5, budget(0.0)).unwrap(),
            0.0
        );
        let wc = worst_case_metric(&[1.0, 2.0], budget(0.0)).unwrap();
        assert_eq!(wc.gamma, 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(worst_case_metric(&[1.0, 0.0], budget(1.0)).is_err());
        assert!(expand_performance_constraint(0.0, budget(1.0)).is_err());
        assert!(DisturbanceBudget::new(-1.0).is_err());
    }

    #[test]
    fn dual_matches_primal() {
        let m = [2.5, 0.7, 9.0];
        let wc = worst_case_metric(&m, budget(3.0)).unwrap();
        let (value, rho) = worst_case_dual(&m, budget(3.0)).unwrap();
        assert_relative_eq!(value, wc.gamma, max_relative = 1e-12);
        assert_eq!(rho, wc.rho);
    }

    #[test]
    fn kappa_folds_into_budget() {
        let b = budget(10.0).with_kappa(Kappa::Two);
        assert_eq!(b.pi_tot(), 5.0);
    }
}
