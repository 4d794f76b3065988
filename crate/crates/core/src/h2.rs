//! Squared H₂ norm of the marginally stable swing-equation system.
//!
//! Three routes are provided: the constrained observability Gramian (exact,
//! any admissible output), the closed form for the primary-control-effort
//! output `y = D^½ω`, and a convex-in-inertia upper bound for block-partitioned
//! output weights.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{laplacian, zero_mode, Grid, StateSpace};

/// Largest system order accepted by the dense Lyapunov solver (`2n`).
pub const MAX_ORDER: usize = 64;

/// Eigenvalues with real part above this (other than the zero mode) are rejected.
const HURWITZ_MARGIN: f64 = -1e-9;

/// Scaling convention for the closed-form primary-effort metric.
///
/// `One` gives `Σ πᵢ/mᵢ`; `Two` gives `Σ πᵢ/(2mᵢ)`, which is what the
/// Gramian evaluates to. The factor is linear, so it folds into the
/// disturbance budget and never changes an allocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Kappa {
    #[default]
    One,
    Two,
}

impl Kappa {
    pub fn value(self) -> f64 {
        match self {
            Kappa::One => 1.0,
            Kappa::Two => 2.0,
        }
    }
}

impl TryFrom<u8> for Kappa {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Kappa::One),
            2 => Ok(Kappa::Two),
            other => Err(format!("kappa must be 1 or 2, got {other}")),
        }
    }
}

impl From<Kappa> for u8 {
    fn from(k: Kappa) -> u8 {
        match k {
            Kappa::One => 1,
            Kappa::Two => 2,
        }
    }
}

/// Solution of `PA + AᵀP + Q = 0` with `P·[1ₙ; 0ₙ] = 0`.
#[derive(Debug, Clone)]
pub struct GramianSolution {
    pub p: DMatrix<f64>,
    /// Frobenius norm of `PA + AᵀP + Q`.
    pub residual: f64,
    /// Norm of `P·[1ₙ; 0ₙ]`.
    pub constraint_residual: f64,
}

/// Orthonormal basis of the complement of `[1ₙ; 0ₙ]`, as the columns `1..2n`
/// of the Householder reflector mapping `e₁` to the normalized zero mode.
fn complement_basis(n: usize) -> DMatrix<f64> {
    let dim = 2 * n;
    let mut v = zero_mode(n);
    v /= (n as f64).sqrt();
    let mut u = v.clone();
    u[0] -= 1.0;
    let uu = u.dot(&u);
    let h = if uu < 1e-30 {
        DMatrix::identity(dim, dim)
    } else {
        DMatrix::identity(dim, dim) - (&u * u.transpose()) * (2.0 / uu)
    };
    h.columns(1, dim - 1).clone_owned()
}

/// Solve `X·S + Sᵀ·X + R = 0` for symmetric `X`, unknowns restricted to the
/// upper triangle.
fn solve_symmetric_lyapunov(s: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = s.nrows();
    let idx = |i: usize, j: usize| {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        i * k - i * (i + 1) / 2 + j
    };
    let m = k * (k + 1) / 2;
    let mut lhs = DMatrix::<f64>::zeros(m, m);
    let mut rhs = DVector::<f64>::zeros(m);
    for i in 0..k {
        for j in i..k {
            let row = idx(i, j);
            // (X S)_ij = Σ_l X_il S_lj ; (Sᵀ X)_ij = Σ_l S_li X_lj
            for l in 0..k {
                lhs[(row, idx(i, l))] += s[(l, j)];
                lhs[(row, idx(l, j))] += s[(l, i)];
            }
            rhs[row] = -r[(i, j)];
        }
    }
    let sol = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("singular reduced Lyapunov operator".into()))?;
    Ok(DMatrix::from_fn(k, k, |i, j| sol[idx(i, j)]))
}

fn symmetric_min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Constrained observability Gramian by deflation of the zero mode.
pub fn solve_constrained_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<GramianSolution> {
    let dim = a.nrows();
    if a.ncols() != dim || dim == 0 || !dim.is_multiple_of(2) {
        return Err(Error::InvalidInput(format!(
            "system matrix must be square of even order, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if dim > MAX_ORDER {
        return Err(Error::InvalidInput(format!(
            "system order {dim} exceeds the supported maximum {MAX_ORDER}"
        )));
    }
    if q.shape() != (dim, dim) {
        return Err(Error::InvalidInput(format!(
            "weight matrix is {}x{}, expected {dim}x{dim}",
            q.nrows(),
            q.ncols()
        )));
    }
    let n = dim / 2;
    let z = zero_mode(n);
    let a_norm = a.norm();
    let q_norm = q.norm();

    if (a * &z).norm() > 1e-10 * a_norm.max(1.0) {
        return Err(Error::InvalidInput(
            "system matrix does not annihilate [1; 0]".into(),
        ));
    }
    if (q - q.transpose()).norm() > 1e-12 * q_norm.max(1.0) {
        return Err(Error::InvalidInput("weight matrix is not symmetric".into()));
    }
    if (q * &z).norm() > 1e-10 * q_norm.max(1.0) {
        return Err(Error::InvalidInput(
            "weight matrix observes the zero mode".into(),
        ));
    }
    if q_norm > 0.0 && symmetric_min_eigenvalue(q) < -1e-10 * q_norm {
        return Err(Error::InvalidInput(
            "weight matrix is not positive semi-definite".into(),
        ));
    }

    let u = complement_basis(n);
    let s = u.transpose() * a * &u;
    let r = u.transpose() * q * &u;

    let unstable: Vec<usize> = s
        .complex_eigenvalues()
        .iter()
        .enumerate()
        .filter(|(_, l)| !(l.re <= HURWITZ_MARGIN))
        .map(|(i, _)| i)
        .collect();
    if !unstable.is_empty() {
        return Err(Error::NotHurwitz { indices: unstable });
    }

    let x = solve_symmetric_lyapunov(&s, &r)?;
    let p = &u * x * u.transpose();
    let p = (&p + p.transpose()) * 0.5;

    let residual = (&p * a + a.transpose() * &p + q).norm();
    let constraint_residual = (&p * &z).norm();
    let p_norm = p.norm();
    if residual > 1e-8 * (q_norm + p_norm * a_norm) {
        return Err(Error::Numerical(format!(
            "Lyapunov residual {residual:.3e} exceeds tolerance"
        )));
    }
    if constraint_residual > 1e-8 * p_norm.max(f64::MIN_POSITIVE) && p_norm > 1e-12 {
        return Err(Error::Numerical(format!(
            "zero-mode constraint residual {constraint_residual:.3e} exceeds tolerance"
        )));
    }
    Ok(GramianSolution {
        p,
        residual,
        constraint_residual,
    })
}

/// `Trace(BᵀPB)` with `P` the constrained Gramian of `(A, CᵀC)`.
pub fn h2_norm_sq_gramian(sys: &StateSpace) -> Result<f64> {
    let q = sys.c.transpose() * &sys.c;
    let sol = solve_constrained_lyapunov(&sys.a, &q)?;
    Ok((sys.b.transpose() * sol.p * &sys.b).trace())
}

/// Closed-form primary-effort metric `Σ πᵢ / (κ·mᵢ)`.
pub fn h2_primary_effort_closed(m: &[f64], pi: &[f64], kappa: Kappa) -> Result<f64> {
    if m.len() != pi.len() {
        return Err(Error::InvalidInput(format!(
            "{} inertia values for {} disturbance strengths",
            m.len(),
            pi.len()
        )));
    }
    if let Some(i) = m.iter().position(|&x| !(x > 0.0)) {
        return Err(Error::InvalidInput(format!(
            "inertia at bus {} must be positive, got {}",
            i + 1,
            m[i]
        )));
    }
    if let Some(i) = pi.iter().position(|&x| !(x >= 0.0)) {
        return Err(Error::InvalidInput(format!(
            "disturbance strength at bus {} must be non-negative, got {}",
            i + 1,
            pi[i]
        )));
    }
    let k = kappa.value();
    Ok(m.iter().zip(pi).map(|(&mi, &p)| p / (k * mi)).sum())
}

/// Output weight `Q = blkdiag(Q₁, diag(q₂))` over angles and frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockWeight {
    pub q1: DMatrix<f64>,
    pub q2: DVector<f64>,
}

impl BlockWeight {
    pub fn new(q1: DMatrix<f64>, q2: DVector<f64>) -> Result<Self> {
        let n = q2.len();
        if q1.shape() != (n, n) {
            return Err(Error::InvalidInput(format!(
                "angle block is {}x{}, expected {n}x{n}",
                q1.nrows(),
                q1.ncols()
            )));
        }
        if q2.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::InvalidInput(
                "frequency weights must be non-negative".into(),
            ));
        }
        let scale = q1.norm().max(1.0);
        if (&q1 - q1.transpose()).norm() > 1e-12 * scale {
            return Err(Error::InvalidInput("angle block is not symmetric".into()));
        }
        if n > 0 && symmetric_min_eigenvalue(&q1) < -1e-10 * scale {
            return Err(Error::InvalidInput(
                "angle block is not positive semi-definite".into(),
            ));
        }
        Ok(BlockWeight { q1, q2 })
    }

    /// Primary control effort: `Q₁ = 0`, `q₂ = d`.
    pub fn primary_effort(d: &[f64]) -> Self {
        let n = d.len();
        BlockWeight {
            q1: DMatrix::zeros(n, n),
            q2: DVector::from_column_slice(d),
        }
    }

    /// Split a full `2n×2n` weight, rejecting coupling blocks or a non-diagonal
    /// frequency block.
    pub fn from_matrix(q: &DMatrix<f64>) -> Result<Self> {
        let dim = q.nrows();
        if q.ncols() != dim || !dim.is_multiple_of(2) {
            return Err(Error::InvalidInput(
                "weight must be square of even order".into(),
            ));
        }
        let n = dim / 2;
        let tol = 1e-12 * q.norm().max(1.0);
        let coupling = q.view((0, n), (n, n)).norm() + q.view((n, 0), (n, n)).norm();
        if coupling > tol {
            return Err(Error::InvalidInput(
                "weight couples angles and frequencies".into(),
            ));
        }
        let q22 = q.view((n, n), (n, n));
        for i in 0..n {
            for j in 0..n {
                if i != j && q22[(i, j)].abs() > tol {
                    return Err(Error::InvalidInput(
                        "frequency block of the weight is not diagonal".into(),
                    ));
                }
            }
        }
        BlockWeight::new(q.view((0, 0), (n, n)).clone_owned(), q22.diagonal())
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        let n = self.q2.len();
        let mut q = DMatrix::zeros(2 * n, 2 * n);
        q.view_mut((0, 0), (n, n)).copy_from(&self.q1);
        for i in 0..n {
            q[(n + i, n + i)] = self.q2[i];
        }
        q
    }
}

/// Moore-Penrose inverse of a connected-graph Laplacian, via
/// `L† = (L + 𝟙𝟙ᵀ/n)⁻¹ − 𝟙𝟙ᵀ/n`.
pub fn laplacian_pseudo_inverse(l: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = l.nrows();
    let j = DMatrix::from_element(n, n, 1.0 / n as f64);
    let shifted = l + &j;
    let inv = shifted
        .try_inverse()
        .ok_or_else(|| Error::Numerical("Laplacian of a disconnected graph".into()))?;
    Ok(inv - j)
}

/// `U_b(m) = (1/(2·d̲))·(Trace(L†Q₁) + Σ (q₂)ᵢ/mᵢ)`, convex in `m`.
pub fn upper_bound_ub(m: &[f64], grid: &Grid, weight: &BlockWeight) -> Result<f64> {
    let n = grid.n();
    if m.len() != n || weight.q2.len() != n {
        return Err(Error::InvalidInput(format!(
            "expected {n} inertia values and weights, got {} and {}",
            m.len(),
            weight.q2.len()
        )));
    }
    if let Some(i) = m.iter().position(|&x| !(x > 0.0)) {
        return Err(Error::InvalidInput(format!(
            "inertia at bus {} must be positive",
            grid.labels()[i]
        )));
    }
    let l_pinv = laplacian_pseudo_inverse(&laplacian(grid))?;
    let angle_term = (l_pinv * &weight.q1).trace();
    let freq_term: f64 = weight.q2.iter().zip(m).map(|(&q, &mi)| q / mi).sum();
    Ok((angle_term + freq_term) / (2.0 * grid.min_damping()))
}

/// Worst case of `π̄·U_b(m)` over the budget polytope, `π_tot·U_b(m)`.
pub fn upper_bound_worst(m: &[f64], grid: &Grid, weight: &BlockWeight, pi_tot: f64) -> Result<f64> {
    if !(pi_tot >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "disturbance budget must be non-negative, got {pi_tot}"
        )));
    }
    Ok(pi_tot * upper_bound_ub(m, grid, weight)?)
}
