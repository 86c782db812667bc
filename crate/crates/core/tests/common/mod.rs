#![allow(dead_code)]

use chsh_verify::quantum::{DensityMatrix, Mat4};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

/// Normalised `G G†` for a 4×4 complex Gaussian `G`.
pub fn ginibre_state<R: Rng>(rng: &mut R) -> DensityMatrix {
    let g = Mat4::from_fn(|_, _| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    from_factor(&g)
}

pub fn from_factor(g: &Mat4) -> DensityMatrix {
    let p = g * g.adjoint();
    let tr = p.trace().re;
    let mut m = p / Complex64::new(tr, 0.0);
    // Symmetrise away rounding so the Hermitian check is exact.
    m = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    DensityMatrix::new(m).expect("Gram matrix is a state")
}

pub fn from_entries(v: &[f64]) -> DensityMatrix {
    assert_eq!(v.len(), 32);
    let g = Mat4::from_fn(|i, j| Complex64::new(v[8 * i + 2 * j], v[8 * i + 2 * j + 1]));
    from_factor(&g)
}
