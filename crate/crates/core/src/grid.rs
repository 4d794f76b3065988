//! Network-reduced grid and its linearized swing-equation state space.
//!
//! States are stacked as `x = (θ, ω)`; the vector `[1ₙ; 0ₙ]` (a uniform angle
//! shift) is the structural zero mode of the system matrix.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A transmission line between two buses (0-based indices) with susceptance `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    pub susceptance: f64,
}

/// Unvalidated grid description, as read from a scenario.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GridSpec {
    pub lines: Vec<Line>,
    pub m0: Vec<f64>,
    pub d: Vec<f64>,
    pub labels: Vec<String>,
}

/// A validated, connected network-reduced grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    n: usize,
    lines: Vec<Line>,
    m0: Vec<f64>,
    d: Vec<f64>,
    labels: Vec<String>,
}

impl Grid {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn m0(&self) -> &[f64] {
        &self.m0
    }

    pub fn damping(&self) -> &[f64] {
        &self.d
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Smallest damping coefficient, `d̲`.
    pub fn min_damping(&self) -> f64 {
        self.d.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Validate a raw description into a [`Grid`].
///
/// A single bus without lines is accepted (the single-machine case).
pub fn build_grid(spec: GridSpec) -> Result<Grid> {
    let n = spec.m0.len();
    if n == 0 {
        return Err(Error::InvalidGrid("grid has no buses".into()));
    }
    if spec.d.len() != n {
        return Err(Error::InvalidGrid(format!(
            "damping has {} entries for {} buses",
            spec.d.len(),
            n
        )));
    }
    let labels = if spec.labels.is_empty() {
        (1..=n).map(|i| i.to_string()).collect()
    } else if spec.labels.len() == n {
        spec.labels
    } else {
        return Err(Error::InvalidGrid(format!(
            "{} labels for {} buses",
            spec.labels.len(),
            n
        )));
    };
    for (i, (&m, &d)) in spec.m0.iter().zip(&spec.d).enumerate() {
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "bus {}: inertia must be positive, got {m}",
                labels[i]
            )));
        }
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "bus {}: damping must be positive, got {d}",
                labels[i]
            )));
        }
    }

    let mut seen = std::collections::HashSet::new();
    for line in &spec.lines {
        if line.from >= n || line.to >= n {
            return Err(Error::InvalidGrid(format!(
                "line ({}, {}) references a bus out of range",
                line.from + 1,
                line.to + 1
            )));
        }
        if line.from == line.to {
            return Err(Error::InvalidGrid(format!(
                "line at bus {} is a self-loop",
                labels[line.from]
            )));
        }
        if !(line.susceptance >= 0.0 && line.susceptance.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "line ({}, {}) has negative susceptance {}",
                labels[line.from], labels[line.to], line.susceptance
            )));
        }
        let key = (line.from.min(line.to), line.from.max(line.to));
        if !seen.insert(key) {
            return Err(Error::InvalidGrid(format!(
                "duplicate line ({}, {})",
                labels[key.0], labels[key.1]
            )));
        }
    }

    if !is_connected(n, &spec.lines) {
        return Err(Error::InvalidGrid("line graph is not connected".into()));
    }

    Ok(Grid {
        n,
        lines: spec.lines,
        m0: spec.m0,
        d: spec.d,
        labels,
    })
}

fn is_connected(n: usize, lines: &[Line]) -> bool {
    let mut adj = vec![Vec::new(); n];
    for l in lines {
        adj[l.from].push(l.to);
        adj[l.to].push(l.from);
    }
    let mut visited = vec![false; n];
    let mut stack = vec![0];
    visited[0] = true;
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !visited[v] {
                visited[v] = true;
                stack.push(v);
            }
        }
    }
    visited.into_iter().all(|v| v)
}

/// Susceptance-weighted Laplacian of the line graph.
pub fn laplacian(grid: &Grid) -> DMatrix<f64> {
    let n = grid.n;
    let mut l = DMatrix::zeros(n, n);
    for line in &grid.lines {
        let (i, j, b) = (line.from, line.to, line.susceptance);
        l[(i, j)] -= b;
        l[(j, i)] -= b;
        l[(i, i)] += b;
        l[(j, j)] += b;
    }
    l
}

/// The zero-mode vector `[1ₙ; 0ₙ]`.
pub fn zero_mode(n: usize) -> DVector<f64> {
    DVector::from_fn(2 * n, |i, _| if i < n { 1.0 } else { 0.0 })
}

/// Linearized system `ẋ = Ax + Bη`, `y = Cx`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub n: usize,
}

/// Assemble `A = [[0, I], [-M⁻¹L, -M⁻¹D]]`, `B = [[0], [M⁻¹Π^½]]`.
pub fn assemble_state_space(
    grid: &Grid,
    m: &[f64],
    pi: &[f64],
    c: &DMatrix<f64>,
) -> Result<StateSpace> {
    let n = grid.n;
    if m.len() != n || pi.len() != n {
        return Err(Error::InvalidInput(format!(
            "expected {n} inertia and disturbance entries, got {} and {}",
            m.len(),
            pi.len()
        )));
    }
    if let Some(i) = m.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::InvalidInput(format!(
            "inertia at bus {} must be positive, got {}",
            grid.labels[i], m[i]
        )));
    }
    if let Some(i) = pi.iter().position(|&x| !(x >= 0.0 && x.is_finite())) {
        return Err(Error::InvalidInput(format!(
            "disturbance strength at bus {} must be non-negative, got {}",
            grid.labels[i], pi[i]
        )));
    }
    if c.ncols() != 2 * n {
        return Err(Error::InvalidInput(format!(
            "output matrix has {} columns, expected {}",
            c.ncols(),
            2 * n
        )));
    }
    let leak = (c * zero_mode(n)).norm();
    if leak > 1e-12 * c.norm().max(1.0) {
        return Err(Error::InvalidInput(format!(
            "output matrix observes the zero mode (|C·[1;0]| = {leak:.3e})"
        )));
    }

    let l = laplacian(grid);
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    let mut b = DMatrix::zeros(2 * n, n);
    for i in 0..n {
        a[(i, n + i)] = 1.0;
        for j in 0..n {
            a[(n + i, j)] = -l[(i, j)] / m[i];
        }
        a[(n + i, n + i)] = -grid.d[i] / m[i];
        b[(n + i, i)] = pi[i].sqrt() / m[i];
    }
    Ok(StateSpace {
        a,
        b,
        c: c.clone(),
        n,
    })
}

/// Output `y = D^½ ω`, penalizing primary control effort.
pub fn output_matrix_primary_effort(d: &[f64]) -> Result<DMatrix<f64>> {
    let n = d.len();
    if let Some(i) = d.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::InvalidInput(format!(
            "damping at bus {} must be positive, got {}",
            i + 1,
            d[i]
        )));
    }
    let mut c = DMatrix::zeros(n, 2 * n);
    for (i, &di) in d.iter().enumerate() {
        c[(i, n + i)] = di.sqrt();
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(from: usize, to: usize, b: f64) -> Line {
        Line {
            from,
            to,
            susceptance: b,
        }
    }

    fn spec(n: usize, lines: Vec<Line>) -> GridSpec {
        GridSpec {
            lines,
            m0: vec![1.0; n],
            d: vec![1.0; n],
            labels: vec![],
        }
    }

    #[test]
    fn minimal_two_bus_grid() {
        let g = build_grid(spec(2, vec![line(0, 1, 1.0)])).unwrap();
        assert_eq!(g.n(), 2);
        assert_eq!(g.labels(), &["1".to_string(), "2".to_string()]);
        let l = laplacian(&g);
        assert_eq!(l, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
    }

    #[test]
    fn path_is_connected_but_missing_edge_is_not() {
        let g = build_grid(spec(3, vec![line(0, 1, 1.0), line(1, 2, 1.0)])).unwrap();
        assert_eq!(
            laplacian(&g),
            DMatrix::from_row_slice(3, 3, &[1.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 1.0])
        );
        let err = build_grid(spec(3, vec![line(0, 1, 1.0)])).unwrap_err();
        assert!(matches!(err, Error::InvalidGrid(ref s) if s.contains("connected")));
    }

    #[test]
    fn rejects_bad_parameters() {
        let mut s = spec(2, vec![line(0, 1, 1.0)]);
        s.m0[1] = 0.0;
        assert!(build_grid(s).is_err());

        let mut s = spec(2, vec![line(0, 1, 1.0)]);
        s.d[0] = -1.0;
        assert!(build_grid(s).is_err());

        assert!(build_grid(spec(2, vec![line(0, 1, -0.5)])).is_err());
        assert!(build_grid(spec(2, vec![line(0, 1, 1.0), line(1, 0, 2.0)])).is_err());
        assert!(build_grid(spec(2, vec![line(0, 0, 1.0)])).is_err());
        assert!(build_grid(spec(2, vec![line(0, 2, 1.0)])).is_err());
    }

    #[test]
    fn single_bus_without_lines_is_accepted() {
        let g = build_grid(spec(1, vec![])).unwrap();
        assert_eq!(laplacian(&g), DMatrix::zeros(1, 1));
    }

    #[test]
    fn single_machine_state_space() {
        let mut s = spec(1, vec![]);
        s.d = vec![4.0];
        let g = build_grid(s).unwrap();
        let c = output_matrix_primary_effort(g.damping()).unwrap();
        let sys = assemble_state_space(&g, &[2.0], &[1.0], &c).unwrap();
        assert_eq!(sys.a, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, -2.0]));
        assert_eq!(sys.b, DMatrix::from_row_slice(2, 1, &[0.0, 0.5]));
        assert_eq!(c, DMatrix::from_row_slice(1, 2, &[0.0, 2.0]));
    }

    #[test]
    fn identity_inertia_blocks() {
        let g = build_grid(spec(2, vec![line(0, 1, 1.0)])).unwrap();
        let c = output_matrix_primary_effort(g.damping()).unwrap();
        assert_eq!(
            c,
            DMatrix::from_row_slice(2, 4, &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0])
        );
        let sys = assemble_state_space(&g, &[1.0, 1.0], &[1.0, 1.0], &c).unwrap();
        let lower_left = sys.a.view((2, 0), (2, 2)).clone_owned();
        let lower_right = sys.a.view((2, 2), (2, 2)).clone_owned();
        assert_eq!(lower_left, -laplacian(&g));
        assert_eq!(lower_right, -DMatrix::<f64>::identity(2, 2));
        assert_eq!((&sys.a * zero_mode(2)).norm(), 0.0);
    }

    #[test]
    fn output_weight_matches_damping() {
        let c = output_matrix_primary_effort(&[2.0, 8.0]).unwrap();
        let q = c.transpose() * &c;
        let mut expected = DMatrix::zeros(4, 4);
        expected[(2, 2)] = 2.0;
        expected[(3, 3)] = 8.0;
        assert!((q - expected).norm() < 1e-14);
        assert!(output_matrix_primary_effort(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn assemble_rejects_invalid_inputs() {
        let g = build_grid(spec(2, vec![line(0, 1, 1.0)])).unwrap();
        let c = output_matrix_primary_effort(g.damping()).unwrap();
        assert!(assemble_state_space(&g, &[1.0, 0.0], &[1.0, 1.0], &c).is_err());
        assert!(assemble_state_space(&g, &[1.0, 1.0], &[1.0, -1.0], &c).is_err());
        assert!(assemble_state_space(&g, &[1.0, 1.0], &[1.0, 1.0], &DMatrix::zeros(2, 3)).is_err());
        // Observing absolute angle violates the annihilation condition.
        let mut bad = DMatrix::zeros(1, 4);
        bad[(0, 0)] = 1.0;
        assert!(assemble_state_space(&g, &[1.0, 1.0], &[1.0, 1.0], &bad).is_err());
    }
}
