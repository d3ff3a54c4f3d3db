//! Small dense helpers shared by the solver and the models.

use nalgebra::{DMatrix, DVector};

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Compensated dot product (Ogita–Rump–Oishi `Dot2`): the result is as accurate as
/// if it had been computed in twice the working precision, then rounded.
pub fn dot2(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    let mut c = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let p = x * y;
        let ep = x.mul_add(y, -p);
        let (t, es) = two_sum(s, p);
        s = t;
        c += es + ep;
    }
    s + c
}

/// Row-major matrix times vector with [`dot2`] rows.
pub fn matvec2(rows: &[f64], n: usize, v: &[f64]) -> Vec<f64> {
    debug_assert_eq!(rows.len(), n * v.len());
    rows.chunks_exact(v.len()).map(|r| dot2(r, v)).collect()
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Solves `a·x = b` by LU with partial pivoting; `None` if `a` is singular.
pub fn lu_solve(a: DMatrix<f64>, b: &[f64]) -> Option<Vec<f64>> {
    let rhs = DVector::from_column_slice(b);
    a.lu().solve(&rhs).map(|x| x.as_slice().to_vec())
}
