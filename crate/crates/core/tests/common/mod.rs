//! Closed-form oracles shared by the integration tests.
#![allow(dead_code)]

use finsler_kit::dsl;
use finsler_kit::field::{ChartBox, DeclaredClass, FinslerField};
use finsler_kit::Christoffel;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec<R: Rng>(rng: &mut R, n: usize, half_width: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-half_width..half_width)).collect()
}

pub fn random_direction<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let v = random_vec(rng, n, 1.0);
        let r = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if r > 0.2 && r <= 1.0 {
            return v.iter().map(|c| c / r).collect();
        }
    }
}

/// Hessian of `F^2 / 2` for `F = (sum y_i^4)^{1/4}`:
/// `g_ij = 3 y_i^2 delta_ij s^{-1/2} - 2 y_i^3 y_j^3 s^{-3/2}`, `s = sum y^4`.
pub fn quartic_metric(y: &[f64]) -> DMatrix<f64> {
    let n = y.len();
    let s: f64 = y.iter().map(|v| v.powi(4)).sum();
    DMatrix::from_fn(n, n, |i, j| {
        let diag = if i == j { 3.0 * y[i] * y[i] / s.sqrt() } else { 0.0 };
        diag - 2.0 * y[i].powi(3) * y[j].powi(3) / s.powf(1.5)
    })
}

/// Christoffel symbols of `g = e^{2 sigma} delta`:
/// `Gamma^i_jk = delta_ij s_k + delta_ik s_j - delta_jk s_i`.
pub fn conformal_christoffel(grad_sigma: &[f64]) -> Christoffel {
    let n = grad_sigma.len();
    let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    Christoffel::from_fn(n, |i, j, k| {
        d(i, j) * grad_sigma[k] + d(i, k) * grad_sigma[j] - d(j, k) * grad_sigma[i]
    })
}

/// `sigma = log 2 - log(1 + |x|^2)` for the stereographic sphere.
pub fn sphere_sigma_gradient(x: &[f64]) -> Vec<f64> {
    let r2: f64 = x.iter().map(|v| v * v).sum();
    x.iter().map(|v| -2.0 * v / (1.0 + r2)).collect()
}

/// A locally Minkowski field written in sheared coordinates:
/// `F = (u1^4 + u1^2 u2^2 + u2^4)^{1/4}` with `u = (y1, x1 y1 + y2)`.
/// Its Berwald connection has `Gamma^2_11 = 1` and nothing else.
pub fn sheared_minkowski() -> FinslerField {
    let src = "(y1^4 + y1^2*(x1*y1 + y2)^2 + (x1*y1 + y2)^4)^0.25";
    let expr = dsl::parse(src, 2).expect("valid expression");
    FinslerField::from_expression("sheared_minkowski", expr, DeclaredClass::Finsler)
        .with_chart(ChartBox::cube(2, 1.0))
        .expect("matching dimension")
}

pub fn sheared_christoffel() -> Christoffel {
    Christoffel::from_fn(2, |i, j, k| if (i, j, k) == (1, 0, 0) { 1.0 } else { 0.0 })
}

pub fn rotation_angle(m: &DMatrix<f64>) -> f64 {
    m[(1, 0)].atan2(m[(0, 0)])
}
