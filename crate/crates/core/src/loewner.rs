//! The Loewner metric: the minimum-volume origin-centred ellipsoid that
//! contains the unit `F`-ball, computed from boundary samples.
//!
//! The centred MVEE of a point set is the MVEE of its symmetrization
//! `{+p, -p}`. Its dual is the D-optimal design problem
//!
//! ```text
//! maximize log det M(u),  M(u) = sum_k u_k p_k p_k^T,  u in the simplex
//! ```
//!
//! with `A = M^{-1} / n` at the optimum. We solve it by coordinate ascent
//! on the design weights: each step exchanges weight between the point
//! with the largest `p^T M^{-1} p` and the support point with the smallest,
//! using the exact line search.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::connection::random_unit;
use crate::error::{Error, Result};
use crate::field::{check_dim, FinslerField};
use crate::tensor::SymmetricBilinearForm;

pub const DEFAULT_TOLERANCE: f64 = 1e-7;
pub const MAX_ITERATIONS: usize = 100_000;
/// `|F(x, p) - 1|` allowed for a returned indicatrix sample.
pub const INDICATRIX_TOLERANCE: f64 = 1e-9;

pub fn default_sample_count(n: usize) -> usize {
    if n <= 2 {
        256
    } else {
        2048
    }
}

/// Points `theta_k / F(x, theta_k)` on the unit `F`-sphere: a uniform
/// angular grid for `n = 2`, seeded uniform directions otherwise.
pub fn sample_indicatrix(field: &FinslerField, x: &[f64], count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let n = field.dim();
    check_dim(n, x)?;
    let min = n * (n + 1);
    if count < min {
        return Err(Error::InvalidParameter(format!(
            "need at least {min} indicatrix samples in dimension {n}, got {count}"
        )));
    }
    let dirs: Vec<Vec<f64>> = if n == 2 {
        (0..count)
            .map(|k| {
                let (s, c) = (std::f64::consts::TAU * k as f64 / count as f64).sin_cos();
                vec![c, s]
            })
            .collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count).map(|_| random_unit(&mut rng, n)).collect()
    };
    dirs.into_iter()
        .map(|theta| {
            let f = field.eval(x, &theta)?;
            if !(f > 0.0 && f.is_finite()) {
                return Err(Error::InvalidField(format!("F(x, {theta:?}) = {f} is not positive")));
            }
            let p: Vec<f64> = theta.iter().map(|c| c / f).collect();
            let fp = field.eval(x, &p)?;
            if (fp - 1.0).abs() > INDICATRIX_TOLERANCE {
                return Err(Error::InvalidField(format!(
                    "F is not positively homogeneous at {theta:?}: F(p) = {fp}"
                )));
            }
            Ok(p)
        })
        .collect()
}

/// `E = {v : v^T A v <= 1}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EllipsoidForm {
    pub a: SymmetricBilinearForm,
    pub iterations: usize,
    /// Number of points carrying positive design weight.
    pub support: usize,
    /// `max p^T A p - 1` of the unscaled dual solution at termination.
    pub dual_excess: f64,
}

impl EllipsoidForm {
    /// `max_k p_k^T A p_k - 1`.
    pub fn containment_excess(&self, points: &[Vec<f64>]) -> f64 {
        points.iter().map(|p| self.a.quadratic(p)).fold(f64::NEG_INFINITY, f64::max) - 1.0
    }

    pub fn contains_all(&self, points: &[Vec<f64>], slack: f64) -> bool {
        self.containment_excess(points) <= slack
    }

    /// Shrinking the ellipsoid by the factor `1 + slack` (i.e. scaling `A`
    /// up) leaves some point outside.
    pub fn is_tight(&self, points: &[Vec<f64>], slack: f64) -> bool {
        points.iter().any(|p| (1.0 + slack) * self.a.quadratic(p) > 1.0)
    }
}

fn design_matrix(points: &[DVector<f64>], u: &[f64], n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for (p, w) in points.iter().zip(u) {
        if *w > 0.0 {
            m.syger(*w, p, p, 1.0);
        }
    }
    m
}

/// Minimum-volume origin-centred ellipsoid containing `{+p_k, -p_k}`.
///
/// Terminates once `max p^T A p <= 1 + tolerance` for the dual iterate;
/// the returned `A` is then rescaled so that every point is contained.
pub fn mvee_centered(points: &[Vec<f64>], tolerance: f64) -> Result<EllipsoidForm> {
    if !(tolerance > 0.0) {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    let n = points.first().map_or(0, |p| p.len());
    if n == 0 {
        return Err(Error::DegeneratePoints { rank: 0, dim: 0 });
    }
    for p in points {
        check_dim(n, p)?;
    }
    let m = points.len();
    let pts: Vec<DVector<f64>> = points.iter().map(|p| DVector::from_column_slice(p)).collect();
    let stacked = DMatrix::from_fn(m, n, |r, c| points[r][c]);
    let sv = stacked.singular_values();
    let smax = sv.max();
    let rank = sv.iter().filter(|s| **s > 1e-10 * smax.max(1e-300)).count();
    if rank < n {
        return Err(Error::DegeneratePoints { rank, dim: n });
    }

    let nf = n as f64;
    let mut u = vec![1.0 / m as f64; m];
    let mut kappa = vec![0.0; m];
    let mut iterations = 0;
    let mut excess = f64::INFINITY;
    while iterations < MAX_ITERATIONS {
        let inv = design_matrix(&pts, &u, n)
            .cholesky()
            .ok_or(Error::DegeneratePoints { rank, dim: n })?
            .inverse();
        for (k, p) in pts.iter().enumerate() {
            kappa[k] = (p.transpose() * &inv * p)[(0, 0)];
        }
        let (jmax, kmax) = kappa
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |b, (k, v)| if *v > b.1 { (k, *v) } else { b });
        excess = kmax / nf - 1.0;
        if excess <= tolerance {
            break;
        }
        iterations += 1;
        let (imin, kmin) = kappa
            .iter()
            .enumerate()
            .filter(|(k, _)| u[*k] > 0.0)
            .fold((0, f64::INFINITY), |b, (k, v)| if *v < b.1 { (k, *v) } else { b });
        // Move weight from the least useful support point to the most
        // violated one. With a = kappa_j, b = kappa_i, c = p_i^T M^-1 p_j the
        // determinant changes by the concave factor
        // 1 + d (a - b) + d^2 (c^2 - a b).
        let c = (pts[imin].transpose() * &inv * &pts[jmax])[(0, 0)];
        let curvature = kmax * kmin - c * c;
        let delta = if curvature > 0.0 {
            ((kmax - kmin) / (2.0 * curvature)).min(u[imin])
        } else {
            u[imin]
        };
        u[imin] -= delta;
        u[jmax] += delta;
        if u[imin] < 1e-300 {
            u[imin] = 0.0;
        }
    }
    if excess > tolerance {
        return Err(Error::NoConvergence {
            iterations,
            residual: excess,
        });
    }
    let inv = design_matrix(&pts, &u, n)
        .cholesky()
        .ok_or(Error::DegeneratePoints { rank, dim: n })?
        .inverse();
    let a = SymmetricBilinearForm::from_matrix_symmetrized(inv / nf);
    let worst = points.iter().map(|p| a.quadratic(p)).fold(0.0, f64::max);
    Ok(EllipsoidForm {
        a: a.scale(1.0 / worst),
        iterations,
        support: u.iter().filter(|w| **w > 0.0).count(),
        dual_excess: excess,
    })
}

/// `A` of the centred MVEE of `count` samples of the unit `F`-sphere at `x`.
pub fn loewner_metric(
    field: &FinslerField,
    x: &[f64],
    count: usize,
    tolerance: f64,
    seed: u64,
) -> Result<SymmetricBilinearForm> {
    let pts = sample_indicatrix(field, x, count, seed)?;
    Ok(mvee_centered(&pts, tolerance)?.a)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Proportionality {
    pub lambda: f64,
    /// `|gL - lambda gM| / |gL|` in the Frobenius norm.
    pub residual: f64,
    pub tolerance: f64,
    pub success: bool,
}

/// Tests `gl = lambda gm` with `lambda = tr(gm^{-1} gl) / n`.
pub fn proportionality_check(
    gl: &SymmetricBilinearForm,
    gm: &SymmetricBilinearForm,
    tolerance: f64,
) -> Result<Proportionality> {
    let n = gl.dim();
    if gm.dim() != n {
        return Err(Error::Dimension {
            expected: n,
            got: gm.dim(),
        });
    }
    if !gl.is_positive_definite() || !gm.is_positive_definite() {
        return Err(Error::InvalidParameter("both forms must be positive definite".into()));
    }
    let inv = gm.inverse().expect("positive definite");
    let lambda = (inv * gl.matrix()).trace() / n as f64;
    let residual = (gl.matrix() - gm.matrix() * lambda).norm() / gl.frobenius();
    Ok(Proportionality {
        lambda,
        residual,
        tolerance,
        success: lambda > 0.0 && residual <= tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::registry;

    fn assert_close(a: &SymmetricBilinearForm, b: &DMatrix<f64>, tol: f64) {
        assert!((a.matrix() - b).amax() <= tol, "{a:?} vs {b}");
    }

    #[test]
    fn unit_cross_gives_identity() {
        let pts = vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]];
        let e = mvee_centered(&pts, 1e-9).unwrap();
        assert_close(&e.a, &DMatrix::identity(2, 2), 1e-8);
    }

    #[test]
    fn ellipse_is_its_own_mvee() {
        let pts: Vec<Vec<f64>> = (0..40)
            .map(|k| {
                let t = std::f64::consts::TAU * k as f64 / 40.0;
                vec![2.0 * t.cos(), t.sin()]
            })
            .collect();
        let e = mvee_centered(&pts, 1e-7).unwrap();
        assert_close(&e.a, &DMatrix::from_diagonal(&DVector::from_vec(vec![0.25, 1.0])), 1e-4);
    }

    #[test]
    fn degenerate_points_are_rejected() {
        let pts = vec![vec![1.0, 1.0], vec![2.0, 2.0], vec![-1.0, -1.0]];
        assert!(matches!(mvee_centered(&pts, 1e-7), Err(Error::DegeneratePoints { rank: 1, dim: 2 })));
    }

    #[test]
    fn indicatrix_samples() {
        let e = registry("euclidean2").unwrap();
        let pts = sample_indicatrix(&e, &[0.0, 0.0], 8, 1).unwrap();
        assert_eq!(pts.len(), 8);
        assert!(pts.iter().all(|p| (crate::tensor::norm(p) - 1.0).abs() < 1e-15));
        assert!(sample_indicatrix(&e, &[0.0, 0.0], 5, 1).is_err());

        let q = registry("quartic2").unwrap();
        let pts = sample_indicatrix(&q, &[0.0, 0.0], 8, 1).unwrap();
        assert!((pts[0][0] - 1.0).abs() < 1e-15 && pts[0][1].abs() < 1e-15);
        assert!((crate::tensor::norm(&pts[1]) - 2f64.powf(0.25)).abs() < 1e-12);
    }

    #[test]
    fn euclidean_loewner_is_identity() {
        let e = registry("euclidean2").unwrap();
        let a = loewner_metric(&e, &[0.0, 0.0], 256, DEFAULT_TOLERANCE, 1).unwrap();
        assert_close(&a, &DMatrix::identity(2, 2), 1e-6);
    }

    #[test]
    fn proportionality() {
        let i = SymmetricBilinearForm::identity(2);
        let r = proportionality_check(&i, &i.scale(2.0), 1e-6).unwrap();
        assert!(r.success && (r.lambda - 0.5).abs() < 1e-15);
        let d = SymmetricBilinearForm::from_rows(&[vec![1.0, 0.0], vec![0.0, 4.0]]).unwrap();
        assert!(!proportionality_check(&i, &d, 1e-3).unwrap().success);
    }
}
