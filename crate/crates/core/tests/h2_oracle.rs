//! Gramian solver against a time-domain integral of the impulse response
//! energy, and against the closed form.

use inertia_core::grid::{
    assemble_state_space, build_grid, laplacian, output_matrix_primary_effort, Grid, GridSpec, Line,
};
use inertia_core::h2::{
    h2_norm_sq_gramian, h2_primary_effort_closed, solve_constrained_lyapunov, upper_bound_ub,
    BlockWeight, Kappa,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_grid<R: Rng>(rng: &mut R, n: usize) -> Grid {
    let mut lines = Vec::new();
    for i in 1..n {
        let j = rng.random_range(0..i);
        lines.push(Line {
            from: j,
            to: i,
            susceptance: rng.random_range(0.2..5.0),
        });
    }
    for i in 0..n {
        for j in i + 1..n {
            let exists = lines
                .iter()
                .any(|l| (l.from, l.to) == (i, j) || (l.from, l.to) == (j, i));
            if !exists && rng.random_bool(0.3) {
                lines.push(Line {
                    from: i,
                    to: j,
                    susceptance: rng.random_range(0.2..5.0),
                });
            }
        }
    }
    build_grid(GridSpec {
        lines,
        m0: (0..n).map(|_| rng.random_range(0.5..10.0)).collect(),
        d: (0..n).map(|_| rng.random_range(0.5..3.0)).collect(),
        labels: vec![],
    })
    .unwrap()
}

/// Unit vector spanning the (one-dimensional) null space of `m`.
fn null_vector(m: &DMatrix<f64>) -> DVector<f64> {
    let svd = m.clone().svd(false, true);
    let vt = svd.v_t.unwrap();
    let k = svd.singular_values.imin();
    vt.row(k).transpose()
}

/// `∫₀^∞ e^{Aᵀt} Q e^{At} dt` by composite Simpson on `[0, h·steps]`, then
/// interval doubling `P_{2T} = P_T + E(T)ᵀ P_T E(T)` until stationary.
///
/// `E(T)` is deflated by the spectral projector of the zero eigenvalue, which
/// leaves the recursion unchanged when `Q` annihilates the zero mode but stops
/// round-off along it from being amplified.
fn time_domain_gramian(a: &DMatrix<f64>, q: &DMatrix<f64>) -> DMatrix<f64> {
    let steps = 400;
    let h = 0.005;
    let e_h = (a * h).exp();
    let mut e = DMatrix::identity(a.nrows(), a.ncols());
    let mut p = DMatrix::zeros(a.nrows(), a.ncols());
    for k in 0..=steps {
        let w = if k == 0 || k == steps {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        p += (e.transpose() * q * &e) * (w * h / 3.0);
        e = &e_h * e;
    }
    let right = null_vector(a);
    let left = null_vector(&a.transpose());
    let projector = &right * left.transpose() / left.dot(&right);
    let mut e_t = (a * (h * steps as f64)).exp() - projector;
    for _ in 0..60 {
        let next = &p + e_t.transpose() * &p * &e_t;
        let change = (&next - &p).norm();
        p = next;
        e_t = &e_t * &e_t;
        if change <= 1e-15 * p.norm() {
            break;
        }
    }
    p
}

#[test]
fn gramian_matches_time_domain_integral() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..8 {
        let n = rng.random_range(2..=4);
        let grid = random_grid(&mut rng, n);
        let pi: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
        let c = output_matrix_primary_effort(grid.damping()).unwrap();
        let sys = assemble_state_space(&grid, grid.m0(), &pi, &c).unwrap();

        let p = time_domain_gramian(&sys.a, &(c.transpose() * &c));
        let oracle = (sys.b.transpose() * p * &sys.b).trace();
        let value = h2_norm_sq_gramian(&sys).unwrap();
        assert!(
            (value - oracle).abs() <= 1e-6 * oracle.max(1e-12),
            "trial {trial}: gramian {value} vs time domain {oracle}"
        );
    }
}

#[test]
fn gramian_with_generic_weight_matches_time_domain_integral() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..4 {
        let n = rng.random_range(2..=4);
        let grid = random_grid(&mut rng, n);
        let other = random_grid(&mut rng, n);
        let q1 = laplacian(&other);
        let q2 = DVector::from_fn(n, |_, _| rng.random_range(0.0..2.0));
        let q = BlockWeight::new(q1, q2).unwrap().to_matrix();
        let pi = vec![1.0; n];
        let c = output_matrix_primary_effort(grid.damping()).unwrap();
        let sys = assemble_state_space(&grid, grid.m0(), &pi, &c).unwrap();

        let sol = solve_constrained_lyapunov(&sys.a, &q).unwrap();
        let oracle = time_domain_gramian(&sys.a, &q);
        let bt = sys.b.transpose();
        let (value, expected) = (
            (&bt * &sol.p * &sys.b).trace(),
            (&bt * oracle * &sys.b).trace(),
        );
        assert!(
            (value - expected).abs() <= 1e-6 * expected,
            "{value} vs {expected}"
        );
    }
}

#[test]
fn gramian_equals_closed_form_on_random_grids() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..50 {
        let n = rng.random_range(2..=8);
        let grid = random_grid(&mut rng, n);
        let pi: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..3.0)).collect();
        let c = output_matrix_primary_effort(grid.damping()).unwrap();
        let sys = assemble_state_space(&grid, grid.m0(), &pi, &c).unwrap();
        let gramian = h2_norm_sq_gramian(&sys).unwrap();
        let closed = h2_primary_effort_closed(grid.m0(), &pi, Kappa::Two).unwrap();
        assert!(
            (gramian - closed).abs() <= 1e-8 * closed,
            "{gramian} vs {closed}"
        );
    }
}

#[test]
fn upper_bound_dominates_gramian() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..20 {
        let n = rng.random_range(3..=6);
        let grid = random_grid(&mut rng, n);
        let other = random_grid(&mut rng, n);
        let weight = BlockWeight::new(
            laplacian(&other) * rng.random_range(0.1..2.0),
            DVector::from_fn(n, |_, _| rng.random_range(0.0..3.0)),
        )
        .unwrap();
        let pi_bar = rng.random_range(0.1..5.0);
        let c = output_matrix_primary_effort(grid.damping()).unwrap();
        let sys = assemble_state_space(&grid, grid.m0(), &vec![pi_bar; n], &c).unwrap();
        let sol = solve_constrained_lyapunov(&sys.a, &weight.to_matrix()).unwrap();
        let h2 = (sys.b.transpose() * sol.p * &sys.b).trace();
        let bound = pi_bar * upper_bound_ub(grid.m0(), &grid, &weight).unwrap();
        assert!(bound >= h2 * (1.0 - 1e-12), "bound {bound} < {h2}");
    }
}
