//! Legendre–Gauss–Lobatto collocation on `[−1, 1]`.

use nalgebra::DMatrix;

use crate::linalg;

pub const MAX_ORDER: usize = 2048;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GridError {
    #[error("grid order {0} outside 1..={MAX_ORDER}")]
    OrderOutOfRange(usize),
    #[error("expected {expected} nodal values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
}

/// LGL nodes `x₀ = −1 < … < x_L = 1` with barycentric weights and the
/// collocation differentiation matrix `D` (row-major).
#[derive(Debug, Clone)]
pub struct SpectralGrid {
    order: usize,
    nodes: Vec<f64>,
    bary: Vec<f64>,
    diff: Vec<f64>,
}

/// `(P_n(x), P_{n−1}(x))` by the three-term recurrence. `P_{−1}` is taken as 0.
pub fn legendre(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p_prev, mut p) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let next = ((2.0 * kf - 1.0) * x * p - (kf - 1.0) * p_prev) / kf;
        p_prev = p;
        p = next;
    }
    (p, p_prev)
}

/// `(1 − x²)·P_L′(x) = L·(P_{L−1}(x) − x·P_L(x))`.
pub fn lobatto_polynomial(order: usize, x: f64) -> f64 {
    let (p, pm1) = legendre(order, x);
    order as f64 * (pm1 - x * p)
}

fn lgl_nodes(order: usize) -> Vec<f64> {
    let n = order + 1;
    let mut nodes = vec![0.0; n];
    nodes[0] = -1.0;
    nodes[order] = 1.0;
    let l = order as f64;
    for k in 1..n.div_ceil(2) {
        if 2 * k == order {
            break;
        }
        let mut x = -(std::f64::consts::PI * k as f64 / l).cos();
        for _ in 0..100 {
            let (p, pm1) = legendre(order, x);
            // exact Newton step on x·P_L − P_{L−1}, whose derivative is (L+1)·P_L
            let dx = (x * p - pm1) / ((l + 1.0) * p);
            x -= dx;
            if dx.abs() <= 2.0 * f64::EPSILON {
                break;
            }
        }
        nodes[k] = x;
        nodes[order - k] = -x;
    }
    nodes
}

fn barycentric_weights(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let mut logs = vec![0.0; n];
    let mut signs = vec![1.0; n];
    for j in 0..n {
        let mut s = 0.0;
        for k in 0..n {
            if k != j {
                s -= (nodes[j] - nodes[k]).abs().ln();
            }
        }
        logs[j] = s;
        if (n - 1 - j) % 2 == 1 {
            signs[j] = -1.0;
        }
    }
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    logs.iter()
        .zip(&signs)
        .map(|(l, s)| s * (l - top).exp())
        .collect()
}

/// Builds the LGL grid of order `L` (so `L + 1` nodes).
pub fn lgl_grid(order: usize) -> Result<SpectralGrid, GridError> {
    if !(1..=MAX_ORDER).contains(&order) {
        return Err(GridError::OrderOutOfRange(order));
    }
    let nodes = lgl_nodes(order);
    let bary = barycentric_weights(&nodes);
    let n = order + 1;
    let mut diff = vec![0.0; n * n];
    for i in 0..n.div_ceil(2) {
        let mut diag = 0.0;
        for j in 0..n {
            if i != j {
                let d = (bary[j] / bary[i]) / (nodes[i] - nodes[j]);
                diff[i * n + j] = d;
                diag -= d;
            }
        }
        diff[i * n + i] = diag;
    }
    // the nodes are mirrored exactly, so the lower rows follow from D_ij = −D_{L−i,L−j}
    for i in n.div_ceil(2)..n {
        for j in 0..n {
            diff[i * n + j] = -diff[(n - 1 - i) * n + (n - 1 - j)];
        }
    }
    Ok(SpectralGrid {
        order,
        nodes,
        bary,
        diff,
    })
}

impl SpectralGrid {
    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of nodes, `L + 1`.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn barycentric_weights(&self) -> &[f64] {
        &self.bary
    }

    /// Row-major entries of `D`.
    pub fn diff_rows(&self) -> &[f64] {
        &self.diff
    }

    pub fn diff_row(&self, i: usize) -> &[f64] {
        let n = self.len();
        &self.diff[i * n..(i + 1) * n]
    }

    pub fn diff_entry(&self, i: usize, j: usize) -> f64 {
        self.diff[i * self.len() + j]
    }

    pub fn diff_matrix(&self) -> DMatrix<f64> {
        let n = self.len();
        DMatrix::from_row_slice(n, n, &self.diff)
    }

    /// Nodal derivative `D·v`, rows accumulated with compensated summation.
    pub fn differentiate(&self, values: &[f64]) -> Result<Vec<f64>, GridError> {
        self.check_len(values.len())?;
        Ok(linalg::matvec2(&self.diff, self.len(), values))
    }

    /// Value at `x` of the degree-`L` interpolant through `values`
    /// (second barycentric form).
    pub fn interpolate(&self, values: &[f64], x: f64) -> Result<f64, GridError> {
        self.check_len(values.len())?;
        let mut num = 0.0;
        let mut den = 0.0;
        for ((&xj, &wj), &fj) in self.nodes.iter().zip(&self.bary).zip(values) {
            let d = x - xj;
            if d == 0.0 {
                return Ok(fj);
            }
            let t = wj / d;
            num += t * fj;
            den += t;
        }
        Ok(num / den)
    }

    pub(crate) fn check_len(&self, got: usize) -> Result<(), GridError> {
        if got != self.len() {
            return Err(GridError::LengthMismatch {
                expected: self.len(),
                got,
            });
        }
        Ok(())
    }
}
