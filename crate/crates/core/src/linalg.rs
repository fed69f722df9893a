//! Dense vector helpers on plain slices.

use alloc::vec::Vec;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(alpha: f64, x: &mut [f64]) {
    for v in x {
        *v *= alpha;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|v| v.is_finite())
}

/// Orthonormal basis of the span of `vectors` by modified Gram-Schmidt.
/// Vectors whose residual falls below `tol` times their norm are dropped.
pub fn orthonormal_basis<'a, I>(vectors: I, tol: f64) -> Vec<Vec<f64>>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for v in vectors {
        let norm0 = norm_sq(v).sqrt();
        if norm0 == 0.0 {
            continue;
        }
        let mut r = v.to_vec();
        for q in &basis {
            let proj = dot(&r, q);
            axpy(-proj, q, &mut r);
        }
        let norm = norm_sq(&r).sqrt();
        if norm > tol * norm0 {
            scale(1.0 / norm, &mut r);
            basis.push(r);
        }
    }
    basis
}

// Float is only needed for sqrt under no_std.
#[allow(unused_imports)]
use num_traits::Float;
