//! The averaged Riemannian metric of a Berwald field and the checks around
//! it: Levi-Civita symbols, metricity of a base connection, and the
//! Euler-Lagrange residual of a curve under `F`.
//!
//! The integral over the indicatrix is pulled back to the Euclidean unit
//! sphere. With `r(theta) = 1/F(x, theta)` the unit ball is
//! `{t theta : 0 <= t <= r(theta)}`, so for a 0-homogeneous `h`
//!
//! ```text
//! int_B h dvol = (1/n) int_{S^{n-1}} h(theta) r(theta)^n dsigma
//! ```
//!
//! and the averaged metric is
//!
//! ```text
//! b = n * sum_k w_k g(x, theta_k) r_k^n / sum_k w_k r_k^n.
//! ```

use std::f64::consts::{PI, TAU};
use std::io::Write;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::connection::{random_unit, BaseConnection};
use crate::diff::{self, Coord, DiffSpec};
use crate::error::{Error, Result};
use crate::field::{check_dim, FinslerField, MetricField};
use crate::tensor::{compensated_sum, Christoffel, SymmetricBilinearForm};
use crate::transport::Trajectory;

/// Relative change of `b` between a grid and its half-resolution companion
/// above which the result is flagged.
pub const QUADRATURE_TOLERANCE: f64 = 1e-4;

/// Quadrature over the Euclidean unit sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum QuadratureSpec {
    /// `resolution` nodes on the circle for `n = 2`; for `n = 3`,
    /// `resolution` Gauss-Legendre nodes in `cos(theta)` times
    /// `2 * resolution` azimuthal nodes.
    SphereGrid { resolution: usize },
    MonteCarlo { samples: usize, seed: u64 },
}

impl QuadratureSpec {
    pub fn default_for(n: usize) -> Self {
        match n {
            2 => QuadratureSpec::SphereGrid { resolution: 256 },
            3 => QuadratureSpec::SphereGrid { resolution: 32 },
            _ => QuadratureSpec::MonteCarlo {
                samples: 20_000,
                seed: 1,
            },
        }
    }

    /// Smallest accepted node count in dimension `n`.
    pub fn minimum_nodes(n: usize) -> usize {
        if n <= 2 {
            64
        } else {
            500
        }
    }

    pub fn node_count(&self, n: usize) -> usize {
        match *self {
            QuadratureSpec::SphereGrid { resolution } if n == 3 => 2 * resolution * resolution,
            QuadratureSpec::SphereGrid { resolution } => resolution,
            QuadratureSpec::MonteCarlo { samples, .. } => samples,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if n < 2 {
            return Err(Error::InvalidParameter("metrization needs dimension >= 2".into()));
        }
        if let QuadratureSpec::SphereGrid { .. } = self {
            if n > 3 {
                return Err(Error::InvalidParameter(format!(
                    "sphere grid supports n = 2, 3; use monte_carlo for n = {n}"
                )));
            }
        }
        let min = Self::minimum_nodes(n);
        if self.node_count(n) < min {
            return Err(Error::InvalidParameter(format!(
                "quadrature has {} nodes, at least {min} required in dimension {n}",
                self.node_count(n)
            )));
        }
        Ok(())
    }

    /// The companion scheme used for the spread estimate.
    fn coarse(&self) -> QuadratureSpec {
        match *self {
            QuadratureSpec::SphereGrid { resolution } => QuadratureSpec::SphereGrid {
                resolution: resolution / 2,
            },
            QuadratureSpec::MonteCarlo { samples, seed } => QuadratureSpec::MonteCarlo {
                samples: samples / 2,
                seed,
            },
        }
    }
}

/// Surface area of the Euclidean unit sphere in `R^n`.
pub fn sphere_area(n: usize) -> f64 {
    // 2 pi^{n/2} / Gamma(n/2)
    let mut gamma = if n.is_multiple_of(2) { 1.0 } else { PI.sqrt() };
    let mut z = if n.is_multiple_of(2) { 1.0 } else { 0.5 };
    while z < n as f64 / 2.0 {
        gamma *= z;
        z += 1.0;
    }
    2.0 * PI.powf(n as f64 / 2.0) / gamma
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = m as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = z;
        weights[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (nodes, weights)
}

/// Quadrature nodes on the unit sphere together with the indicatrix radius
/// `1/F(x, theta)` in each direction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndicatrixMeasure {
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub radii: Vec<f64>,
}

fn sphere_nodes(n: usize, quad: &QuadratureSpec) -> (Vec<Vec<f64>>, Vec<f64>) {
    match *quad {
        QuadratureSpec::SphereGrid { resolution } if n == 2 => {
            let w = TAU / resolution as f64;
            let nodes = (0..resolution)
                .map(|k| {
                    let (s, c) = (k as f64 * w).sin_cos();
                    vec![c, s]
                })
                .collect();
            (nodes, vec![w; resolution])
        }
        QuadratureSpec::SphereGrid { resolution } => {
            let (zs, zw) = gauss_legendre(resolution);
            let m = 2 * resolution;
            let dphi = TAU / m as f64;
            let mut nodes = Vec::with_capacity(resolution * m);
            let mut weights = Vec::with_capacity(resolution * m);
            for (z, wz) in zs.iter().zip(&zw) {
                let rho = (1.0 - z * z).sqrt();
                for k in 0..m {
                    let (s, c) = ((k as f64 + 0.5) * dphi).sin_cos();
                    nodes.push(vec![rho * c, rho * s, *z]);
                    weights.push(wz * dphi);
                }
            }
            (nodes, weights)
        }
        QuadratureSpec::MonteCarlo { samples, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let nodes = (0..samples).map(|_| random_unit(&mut rng, n)).collect();
            (nodes, vec![sphere_area(n) / samples as f64; samples])
        }
    }
}

impl IndicatrixMeasure {
    pub fn new(field: &FinslerField, x: &[f64], quad: &QuadratureSpec) -> Result<Self> {
        let n = field.dim();
        check_dim(n, x)?;
        quad.validate(n)?;
        let (nodes, weights) = sphere_nodes(n, quad);
        let radii = nodes
            .par_iter()
            .map(|theta| {
                let f = field.eval(x, theta)?;
                if f > 0.0 && f.is_finite() {
                    Ok(1.0 / f)
                } else {
                    Err(Error::InvalidField(format!("F(x, {theta:?}) = {f} is not positive")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(IndicatrixMeasure { nodes, weights, radii })
    }

    pub fn dim(&self) -> usize {
        self.nodes.first().map_or(0, |v| v.len())
    }

    pub fn weight_sum(&self) -> f64 {
        compensated_sum(self.weights.iter().copied())
    }

    /// `w_k r_k^n`: the contribution of each node to the ball volume, up to
    /// the factor `1/n`.
    fn ball_weights(&self) -> Vec<f64> {
        let n = self.dim() as i32;
        self.weights.iter().zip(&self.radii).map(|(w, r)| w * r.powi(n)).collect()
    }

    /// Euclidean volume of the unit `F`-ball.
    pub fn ball_volume(&self) -> f64 {
        compensated_sum(self.ball_weights()) / self.dim() as f64
    }

    /// Mean of `h` over the unit ball for 0-homogeneous `h`, evaluated at
    /// the sphere nodes.
    pub fn ball_mean(&self, h: impl Fn(&[f64]) -> f64 + Sync) -> f64 {
        let bw = self.ball_weights();
        let values: Vec<f64> = self.nodes.par_iter().map(|t| h(t)).collect();
        compensated_sum(bw.iter().zip(&values).map(|(w, v)| w * v)) / compensated_sum(bw.iter().copied())
    }
}

/// One row of the per-node integrand export.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeValue {
    pub theta: Vec<f64>,
    pub radius: f64,
    pub weight: f64,
    pub g: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadratureDiagnostics {
    pub quadrature: QuadratureSpec,
    pub nodes: usize,
    pub weight_sum: f64,
    pub sphere_area: f64,
    pub ball_volume: f64,
    pub coarse_nodes: usize,
    /// `max |b - b_coarse| / max |b|`.
    pub spread: f64,
    pub tolerance: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AveragedMetric {
    pub b: SymmetricBilinearForm,
    pub diagnostics: QuadratureDiagnostics,
    #[serde(skip)]
    pub node_values: Vec<NodeValue>,
}

impl AveragedMetric {
    /// CSV with columns `theta1..thetan, radius, weight, g11, g12, .., gnn`.
    pub fn write_nodes_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let n = self.b.dim();
        let mut header: Vec<String> = (1..=n).map(|i| format!("theta{i}")).collect();
        header.push("radius".into());
        header.push("weight".into());
        for i in 1..=n {
            for j in 1..=n {
                header.push(format!("g{i}{j}"));
            }
        }
        writeln!(out, "{}", header.join(","))?;
        for v in &self.node_values {
            let row: Vec<String> = v
                .theta
                .iter()
                .chain([&v.radius, &v.weight])
                .chain(&v.g)
                .map(|c| format!("{c:?}"))
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn average_on(
    field: &FinslerField,
    x: &[f64],
    measure: &IndicatrixMeasure,
    spec: &DiffSpec,
) -> Result<(SymmetricBilinearForm, Vec<NodeValue>)> {
    let n = field.dim();
    let tensors = measure
        .nodes
        .par_iter()
        .map(|theta| field.metric_tensor(x, theta, spec))
        .collect::<Result<Vec<_>>>()?;
    let bw = measure.ball_weights();
    let total = compensated_sum(bw.iter().copied());
    let mut b = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let s = compensated_sum(bw.iter().zip(&tensors).map(|(w, g)| w * g.get(i, j)));
            b[(i, j)] = n as f64 * s / total;
            b[(j, i)] = b[(i, j)];
        }
    }
    let b = SymmetricBilinearForm::from_matrix_symmetrized(b);
    if !b.is_positive_definite() {
        return Err(Error::NotPositiveDefinite {
            x: x.to_vec(),
            y: vec![],
        });
    }
    let nodes = measure
        .nodes
        .iter()
        .zip(&measure.radii)
        .zip(&measure.weights)
        .zip(&tensors)
        .map(|(((t, r), w), g)| NodeValue {
            theta: t.clone(),
            radius: *r,
            weight: *w,
            g: g.matrix().iter().copied().collect(),
        })
        .collect();
    Ok((b, nodes))
}

/// The averaged metric `b` at `x`, with a spread estimate against the
/// half-resolution scheme. A large spread flags the result but is not an
/// error.
pub fn averaged_metric(field: &FinslerField, x: &[f64], quad: &QuadratureSpec, spec: &DiffSpec) -> Result<AveragedMetric> {
    let n = field.dim();
    let measure = IndicatrixMeasure::new(field, x, quad)?;
    let (b, node_values) = average_on(field, x, &measure, spec)?;

    let coarse_quad = quad.coarse();
    let coarse_measure = {
        let (nodes, weights) = sphere_nodes(n, &coarse_quad);
        let radii = nodes
            .par_iter()
            .map(|t| field.eval(x, t).map(|f| 1.0 / f))
            .collect::<Result<Vec<_>>>()?;
        IndicatrixMeasure { nodes, weights, radii }
    };
    let (coarse, _) = average_on(field, x, &coarse_measure, spec)?;
    let spread = (b.matrix() - coarse.matrix()).amax() / b.matrix().amax();

    let diagnostics = QuadratureDiagnostics {
        quadrature: *quad,
        nodes: measure.nodes.len(),
        weight_sum: measure.weight_sum(),
        sphere_area: sphere_area(n),
        ball_volume: measure.ball_volume(),
        coarse_nodes: coarse_measure.nodes.len(),
        spread,
        tolerance: QUADRATURE_TOLERANCE,
        flagged: spread > QUADRATURE_TOLERANCE,
    };
    Ok(AveragedMetric {
        b,
        diagnostics,
        node_values,
    })
}

/// `x -> b(x)` as a metric field (no spread estimate).
#[derive(Clone)]
pub struct AveragedMetricField {
    pub field: FinslerField,
    pub quadrature: QuadratureSpec,
    pub spec: DiffSpec,
}

impl AveragedMetricField {
    pub fn new(field: &FinslerField, quadrature: QuadratureSpec, spec: DiffSpec) -> Self {
        AveragedMetricField {
            field: field.clone(),
            quadrature,
            spec,
        }
    }
}

impl MetricField for AveragedMetricField {
    fn dim(&self) -> usize {
        self.field.dim()
    }

    fn metric_at(&self, x: &[f64]) -> Result<SymmetricBilinearForm> {
        let measure = IndicatrixMeasure::new(&self.field, x, &self.quadrature)?;
        Ok(average_on(&self.field, x, &measure, &self.spec)?.0)
    }

    fn label(&self) -> String {
        format!("averaged({})", self.field.name())
    }
}

/// Both sides of the ball/sphere identity for a 0-homogeneous `h`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BallSphere {
    /// Monte-Carlo mean of `h` over the unit ball (ball mass normalized to 1).
    pub ball_value: f64,
    pub ball_stderr: f64,
    /// Integral of `h` against the induced sphere measure, which has total
    /// mass `n`.
    pub sphere_value: f64,
    pub accepted: usize,
    pub proposals: usize,
}

impl BallSphere {
    /// `|ball - sphere/n|` in units of the Monte-Carlo standard error.
    pub fn discrepancy(&self, n: usize) -> f64 {
        (self.ball_value - self.sphere_value / n as f64).abs() / self.ball_stderr.max(1e-300)
    }
}

/// Minimum number of accepted ball samples.
pub const MIN_BALL_SAMPLES: usize = 1000;

/// Estimates `int_B h` by rejection sampling in a bounding box and
/// `int_S h` with the quadrature measure.
pub fn ball_sphere_consistency<H>(
    field: &FinslerField,
    x: &[f64],
    h: H,
    quad: &QuadratureSpec,
    proposals: usize,
    seed: u64,
) -> Result<BallSphere>
where
    H: Fn(&[f64]) -> f64 + Sync,
{
    let n = field.dim();
    let measure = IndicatrixMeasure::new(field, x, quad)?;
    let sphere_value = n as f64 * measure.ball_mean(&h);

    let r_max = 1.1 * measure.radii.iter().fold(0.0f64, |m, r| m.max(*r));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let candidates: Vec<Vec<f64>> = (0..proposals)
        .map(|_| (0..n).map(|_| rng.random_range(-r_max..r_max)).collect())
        .collect();
    let values = candidates
        .par_iter()
        .map(|y| {
            if y.iter().all(|c| *c == 0.0) {
                return Ok(None);
            }
            let f = field.eval(x, y)?;
            Ok(if f <= 1.0 { Some(h(y)) } else { None })
        })
        .collect::<Result<Vec<_>>>()?;
    let accepted: Vec<f64> = values.into_iter().flatten().collect();
    let m = accepted.len();
    if m < MIN_BALL_SAMPLES {
        return Err(Error::InsufficientSamples(format!(
            "{m} of {proposals} proposals fell in the ball, need {MIN_BALL_SAMPLES}"
        )));
    }
    let mean = compensated_sum(accepted.iter().copied()) / m as f64;
    let var = compensated_sum(accepted.iter().map(|v| (v - mean) * (v - mean))) / (m - 1) as f64;
    Ok(BallSphere {
        ball_value: mean,
        ball_stderr: (var / m as f64).sqrt(),
        sphere_value,
        accepted: m,
        proposals,
    })
}

/// `d_k g_ij` at `x` as a vector indexed `k * n * n + i * n + j`.
fn metric_derivatives(metric: &dyn MetricField, x: &[f64], spec: &DiffSpec) -> Result<Vec<f64>> {
    let n = metric.dim();
    let flat = |xs: &[f64], _: &[f64]| -> Result<Vec<f64>> {
        Ok(metric.metric_at(xs)?.matrix().iter().copied().collect())
    };
    let dummy = vec![0.0; n];
    let mut out = Vec::with_capacity(n * n * n);
    for k in 0..n {
        let d = diff::mixed_partial_vec(&flat, x, &dummy, &[Coord::X(k)], n * n, spec)?;
        // nalgebra storage is column-major; symmetry makes the order moot.
        out.extend(d);
    }
    Ok(out)
}

/// Christoffel symbols of the Levi-Civita connection of `metric` at `x`.
pub fn levi_civita(metric: &dyn MetricField, x: &[f64], spec: &DiffSpec) -> Result<Christoffel> {
    let n = metric.dim();
    check_dim(n, x)?;
    let g = metric.metric_at(x)?;
    let ginv = g.inverse().ok_or_else(|| Error::SingularMetric {
        x: x.to_vec(),
        y: vec![],
    })?;
    let dg = metric_derivatives(metric, x, spec)?;
    let d = |k: usize, i: usize, j: usize| dg[k * n * n + i * n + j];
    // first kind: [jk, l] = (d_j g_lk + d_k g_jl - d_l g_jk) / 2
    let first = |j: usize, k: usize, l: usize| 0.5 * (d(j, l, k) + d(k, j, l) - d(l, j, k));
    let gamma = Christoffel::from_fn(n, |i, j, k| (0..n).map(|l| ginv[(i, l)] * first(j, k, l)).sum());
    Ok(Christoffel::from_fn(n, |i, j, k| 0.5 * (gamma.get(i, j, k) + gamma.get(i, k, j))))
}

/// `max |d_k g_ij - Gamma^l_ki g_lj - Gamma^l_kj g_il|`: zero iff `base`
/// is metric for `metric` at `x`.
pub fn metric_compatibility_residual(
    base: &BaseConnection,
    metric: &dyn MetricField,
    x: &[f64],
    spec: &DiffSpec,
) -> Result<f64> {
    let n = metric.dim();
    check_dim(n, x)?;
    if base.dim() != n {
        return Err(Error::Dimension {
            expected: n,
            got: base.dim(),
        });
    }
    let g = metric.metric_at(x)?;
    if g.inverse().is_none() {
        return Err(Error::SingularMetric {
            x: x.to_vec(),
            y: vec![],
        });
    }
    let gamma = base.symbols(x)?;
    let dg = metric_derivatives(metric, x, spec)?;
    let mut worst = 0.0f64;
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let mut r = dg[k * n * n + i * n + j];
                for l in 0..n {
                    r -= gamma.get(l, k, i) * g.get(l, j) + gamma.get(l, k, j) * g.get(i, l);
                }
                worst = worst.max(r.abs());
            }
        }
    }
    Ok(worst)
}

/// `max_{t, i} |dE/dx^i - d/dt dE/dy^i|` along the sampled curve, using
/// central differences in time at interior samples.
pub fn euler_lagrange_residual(field: &FinslerField, trajectory: &Trajectory, spec: &DiffSpec) -> Result<f64> {
    let m = trajectory.len();
    if m < 5 {
        return Err(Error::InvalidParameter(format!(
            "trajectory has {m} samples, at least 5 required"
        )));
    }
    let t = &trajectory.times;
    let dt = (t[m - 1] - t[0]) / (m - 1) as f64;
    if t.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.max(1.0)) {
        return Err(Error::InvalidParameter("time samples are not uniform".into()));
    }
    let n = field.dim();
    let energy = |xs: &[f64], ys: &[f64]| field.energy(xs, ys);
    let sample = |k: usize| -> Result<(Vec<f64>, Vec<f64>)> {
        let (x, y) = (&trajectory.points[k], &trajectory.vectors[k]);
        if y.iter().all(|c| *c == 0.0) {
            return Err(Error::ZeroVector { t: t[k] });
        }
        let mut ex = Vec::with_capacity(n);
        let mut ey = Vec::with_capacity(n);
        for i in 0..n {
            ex.push(diff::partial_x(&energy, x, y, i, spec)?);
            ey.push(diff::partial_y(&energy, x, y, &[i], spec)?);
        }
        Ok((ex, ey))
    };
    let derivs = (0..m).into_par_iter().map(sample).collect::<Result<Vec<_>>>()?;
    let mut worst = 0.0f64;
    for k in 1..m - 1 {
        for i in 0..n {
            let dp = (derivs[k + 1].1[i] - derivs[k - 1].1[i]) / (2.0 * dt);
            worst = worst.max((derivs[k].0[i] - dp).abs());
        }
    }
    Ok(worst)
}
