//! The canonical spray, its nonlinear connection, the Berwald coefficients
//! and curvature, and Berwald classification.
//!
//! All coefficients come from the coordinate recipe
//!
//! ```text
//! G^i      = 1/4 g^{ij} (d^2F^2/dx^r dy^j y^r - dF^2/dx^j)
//! G^i_j    = dG^i/dy^j
//! G^i_jk   = d^2 G^i / dy^j dy^k
//! G^i_jkl  = d^3 G^i / dy^j dy^k dy^l
//! ```
//!
//! where the y-derivatives of `G` use the nested step of the [`DiffSpec`].

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::diff::{self, Coord, DiffSpec};
use crate::error::{Error, Result};
use crate::field::{ChartBox, FinslerField, MetricField};
use crate::tensor::{norm, Christoffel, Curvature};

/// Spray coefficients `G^i(x, y)`.
pub fn spray_coefficients(field: &FinslerField, x: &[f64], y: &[f64], spec: &DiffSpec) -> Result<Vec<f64>> {
    let n = field.dim();
    if y.len() == n && y.iter().all(|v| *v == 0.0) {
        return Err(Error::SingularDirection { direction: y.to_vec() });
    }
    let f2 = |xs: &[f64], ys: &[f64]| field.norm_squared(xs, ys);
    let mut rhs = vec![0.0; n];
    for (j, r) in rhs.iter_mut().enumerate() {
        let mut acc = -diff::mixed_partial(&f2, x, y, &[Coord::X(j)], spec)?;
        for (k, yk) in y.iter().enumerate() {
            if *yk != 0.0 {
                acc += yk * diff::mixed_partial(&f2, x, y, &[Coord::X(k), Coord::Y(j)], spec)?;
            }
        }
        *r = 0.25 * acc;
    }
    // x-independent F: both terms vanish identically, whatever g is.
    if rhs.iter().all(|v| *v == 0.0) {
        return Ok(rhs);
    }
    let g = field.metric_tensor(x, y, spec)?;
    let b = DVector::from_vec(rhs);
    let solved = match g.matrix().clone().cholesky() {
        Some(c) => Some(c.solve(&b)),
        None => g.matrix().clone().lu().solve(&b),
    };
    match solved {
        Some(v) if v.iter().all(|c| c.is_finite()) => Ok(v.iter().copied().collect()),
        _ => Err(Error::SingularMetric {
            x: x.to_vec(),
            y: y.to_vec(),
        }),
    }
}

fn spray_derivative(
    field: &FinslerField,
    x: &[f64],
    y: &[f64],
    indices: &[usize],
    spec: &DiffSpec,
) -> Result<Vec<f64>> {
    let n = field.dim();
    let g = |xs: &[f64], ys: &[f64]| spray_coefficients(field, xs, ys, spec);
    let coords: Vec<Coord> = indices.iter().map(|&i| Coord::Y(i)).collect();
    diff::mixed_partial_vec(&g, x, y, &coords, n, &spec.nested())
}

/// `G^i_j = dG^i/dy^j`, as an `n x n` matrix indexed `(i, j)`.
pub fn nonlinear_connection(field: &FinslerField, x: &[f64], y: &[f64], spec: &DiffSpec) -> Result<DMatrix<f64>> {
    let n = field.dim();
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        let col = spray_derivative(field, x, y, &[j], spec)?;
        for i in 0..n {
            m[(i, j)] = col[i];
        }
    }
    Ok(m)
}

/// `G^i_jk`, symmetric in `j, k` by construction.
pub fn berwald_coefficients(field: &FinslerField, x: &[f64], y: &[f64], spec: &DiffSpec) -> Result<Christoffel> {
    let n = field.dim();
    let mut t = Christoffel::zeros(n);
    for j in 0..n {
        for k in j..n {
            let v = spray_derivative(field, x, y, &[j, k], spec)?;
            for i in 0..n {
                t.set(i, j, k, v[i]);
                t.set(i, k, j, v[i]);
            }
        }
    }
    Ok(t)
}

/// `G^i_jkl`, totally symmetric in the lower indices by construction.
pub fn berwald_curvature(field: &FinslerField, x: &[f64], y: &[f64], spec: &DiffSpec) -> Result<Curvature> {
    let n = field.dim();
    let mut t = Curvature::zeros(n);
    for j in 0..n {
        for k in j..n {
            for l in k..n {
                let v = spray_derivative(field, x, y, &[j, k, l], spec)?;
                for (a, b, c) in [(j, k, l), (j, l, k), (k, j, l), (k, l, j), (l, j, k), (l, k, j)] {
                    for i in 0..n {
                        t.set(i, a, b, c, v[i]);
                    }
                }
            }
        }
    }
    Ok(t)
}

/// All connection coefficients at one point of the slit tangent bundle.
#[derive(Debug, Clone, Serialize)]
pub struct ConnectionTable {
    pub spray: Vec<f64>,
    #[serde(serialize_with = "serialize_matrix")]
    pub nonlinear: DMatrix<f64>,
    pub berwald: Christoffel,
    #[serde(skip)]
    pub curvature: Curvature,
}

fn serialize_matrix<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
    rows.serialize(s)
}

pub fn connection_table(field: &FinslerField, x: &[f64], y: &[f64], spec: &DiffSpec) -> Result<ConnectionTable> {
    Ok(ConnectionTable {
        spray: spray_coefficients(field, x, y, spec)?,
        nonlinear: nonlinear_connection(field, x, y, spec)?,
        berwald: berwald_coefficients(field, x, y, spec)?,
        curvature: berwald_curvature(field, x, y, spec)?,
    })
}

/// Where the symbols of a base connection come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    ExtractedFromBerwald,
    LeviCivita,
    User,
}

type SymbolFn = dyn Fn(&[f64]) -> Result<Christoffel> + Send + Sync;

/// A torsion-free linear connection given by its Christoffel symbols.
#[derive(Clone)]
pub struct BaseConnection {
    dim: usize,
    provenance: Provenance,
    symbols: Arc<SymbolFn>,
}

impl fmt::Debug for BaseConnection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BaseConnection")
            .field("dim", &self.dim)
            .field("provenance", &self.provenance)
            .finish()
    }
}

/// Largest tolerated `|Gamma^i_jk - Gamma^i_kj|` for user-supplied symbols.
pub const TORSION_TOLERANCE: f64 = 1e-9;

impl BaseConnection {
    pub fn user(dim: usize, symbols: impl Fn(&[f64]) -> Christoffel + Send + Sync + 'static) -> Self {
        BaseConnection {
            dim,
            provenance: Provenance::User,
            symbols: Arc::new(move |x| Ok(symbols(x))),
        }
    }

    /// The flat connection of the chart.
    pub fn zero(dim: usize) -> Self {
        Self::user(dim, move |_| Christoffel::zeros(dim))
    }

    /// Symbols obtained from the Berwald coefficients of `field` at each
    /// point (see [`extract_base_connection`]).
    pub fn extracted(field: &FinslerField, spec: DiffSpec) -> Self {
        let field = field.clone();
        BaseConnection {
            dim: field.dim(),
            provenance: Provenance::ExtractedFromBerwald,
            symbols: Arc::new(move |x| extract_base_connection(&field, x, &spec)),
        }
    }

    /// Levi-Civita connection of a metric field.
    pub fn levi_civita(metric: Arc<dyn MetricField>, spec: DiffSpec) -> Self {
        BaseConnection {
            dim: metric.dim(),
            provenance: Provenance::LeviCivita,
            symbols: Arc::new(move |x| crate::metrization::levi_civita(metric.as_ref(), x, &spec)),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn symbols(&self, x: &[f64]) -> Result<Christoffel> {
        crate::field::check_dim(self.dim, x)?;
        let t = (self.symbols)(x)?;
        if t.dim() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: t.dim(),
            });
        }
        if self.provenance == Provenance::User && t.asymmetry() > TORSION_TOLERANCE * (1.0 + t.max_abs()) {
            return Err(Error::InvalidParameter(format!(
                "connection has torsion at {x:?} (asymmetry {:.3e})",
                t.asymmetry()
            )));
        }
        Ok(t)
    }
}

/// Number of seeded random probe directions added to the `2n` axis probes.
pub const RANDOM_PROBES: usize = 8;
const PROBE_SEED: u64 = 0x5eed_b3a1;
/// Relative spread of `G^i_jk` over the probes tolerated by extraction.
pub const EXTRACTION_TOLERANCE: f64 = 1e-3;

/// `2n` signed axis directions followed by seeded random unit directions.
pub fn probe_directions(n: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * n + RANDOM_PROBES);
    for i in 0..n {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; n];
            e[i] = s;
            out.push(e);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
    out.extend((0..RANDOM_PROBES).map(|_| random_unit(&mut rng, n)));
    out
}

pub(crate) fn random_unit<R: rand::Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let r = norm(&v);
        if r > 1e-6 {
            return v.into_iter().map(|c| c / r).collect();
        }
    }
}

/// Averages `G^i_jk(x, .)` over the probe directions. Fails when the
/// coefficients visibly depend on the direction.
pub fn extract_base_connection(field: &FinslerField, x: &[f64], spec: &DiffSpec) -> Result<Christoffel> {
    let n = field.dim();
    let probes = probe_directions(n);
    let tables = probes
        .par_iter()
        .map(|y| berwald_coefficients(field, x, y, spec))
        .collect::<Result<Vec<_>>>()?;
    let mut mean = Christoffel::zeros(n);
    for t in &tables {
        mean.add_scaled(t, 1.0 / tables.len() as f64);
    }
    let spread = tables.iter().fold(0.0f64, |m, t| m.max(t.max_abs_diff(&mean)));
    let relative = spread / (1.0 + mean.max_abs());
    if relative > EXTRACTION_TOLERANCE {
        return Err(Error::DirectionDependent {
            x: x.to_vec(),
            spread: relative,
            tolerance: EXTRACTION_TOLERANCE,
        });
    }
    Ok(mean)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Berwald,
    NonBerwald,
    Inconclusive,
}

pub const CURVATURE_THRESHOLD: f64 = 1e-2;
pub const LINEARITY_THRESHOLD: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassifyOptions {
    pub num_x: usize,
    pub num_y: usize,
    pub seed: u64,
    /// Sampling region; the field's chart box shrunk by half when absent.
    pub region: Option<ChartBox>,
    pub curvature_threshold: f64,
    pub linearity_threshold: f64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            num_x: 6,
            num_y: 6,
            seed: 1,
            region: None,
            curvature_threshold: CURVATURE_THRESHOLD,
            linearity_threshold: LINEARITY_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassWitness {
    pub statistic: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Thresholds {
    pub curvature: f64,
    pub linearity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleStatistics {
    pub step: f64,
    pub nested_step: f64,
    pub max_curvature_norm: f64,
    pub linearity_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationReport {
    pub metric: String,
    pub verdict: Verdict,
    pub max_curvature_norm: f64,
    pub linearity_residual: f64,
    pub witnesses: Vec<ClassWitness>,
    pub thresholds: Thresholds,
    pub seed: u64,
    pub region: ChartBox,
    pub num_x: usize,
    pub num_y: usize,
    pub refinement: Option<SampleStatistics>,
    pub reason: Option<String>,
}

struct Sweep {
    stats: SampleStatistics,
    witnesses: Vec<ClassWitness>,
}

struct PointStats {
    curvature: f64,
    curvature_at: Vec<f64>,
    linearity: f64,
    linearity_at: Vec<f64>,
}

/// Curvature and linearity statistics at one base point.
fn point_statistics(field: &FinslerField, x: &[f64], dirs: &[Vec<f64>], spec: &DiffSpec) -> Result<PointStats> {
    let n = field.dim();
    let mut curvature: f64 = 0.0;
    let mut curvature_at = dirs[0].clone();
    let mut samples = Vec::with_capacity(dirs.len());
    for y in dirs {
        let gjk = berwald_coefficients(field, x, y, spec)?;
        let gjkl = berwald_curvature(field, x, y, spec)?;
        let c = gjkl.max_abs() / (1.0 + gjk.max_abs());
        if c > curvature || !c.is_finite() {
            curvature = if c.is_finite() { c } else { f64::INFINITY };
            curvature_at = y.clone();
        }
        samples.push(nonlinear_connection(field, x, y, spec)?);
    }

    // Least-squares fit of G^i_j(y) = A^i_jk y^k over the directions.
    let m = dirs.len();
    let design = DMatrix::from_fn(m, n, |r, k| dirs[r][k]);
    let svd = design.clone().svd(true, true);
    let scale = samples.iter().fold(0.0f64, |s, g| s.max(g.amax()));
    let mut linearity: f64 = 0.0;
    let mut linearity_at = dirs[0].clone();
    for i in 0..n {
        for j in 0..n {
            let target = DVector::from_fn(m, |r, _| samples[r][(i, j)]);
            let coef = svd
                .solve(&target, 1e-12)
                .map_err(|e| Error::InvalidParameter(format!("linear fit failed: {e}")))?;
            let resid = &target - &design * coef;
            for (r, v) in resid.iter().enumerate() {
                let rel = v.abs() / (1.0 + scale);
                if rel > linearity {
                    linearity = rel;
                    linearity_at = dirs[r].clone();
                }
            }
        }
    }
    Ok(PointStats {
        curvature,
        curvature_at,
        linearity,
        linearity_at,
    })
}

fn sweep(field: &FinslerField, points: &[(Vec<f64>, Vec<Vec<f64>>)], spec: &DiffSpec) -> Result<Sweep> {
    let per_point: Vec<Result<PointStats>> = points
        .par_iter()
        .map(|(x, dirs)| point_statistics(field, x, dirs, spec))
        .collect();
    let mut best_c: Option<(f64, ClassWitness)> = None;
    let mut best_l: Option<(f64, ClassWitness)> = None;
    for ((x, _), stats) in points.iter().zip(per_point) {
        let s = stats?;
        if best_c.as_ref().is_none_or(|(v, _)| s.curvature > *v) {
            best_c = Some((
                s.curvature,
                ClassWitness {
                    statistic: "berwald_curvature".into(),
                    x: x.clone(),
                    y: s.curvature_at.clone(),
                    value: s.curvature,
                },
            ));
        }
        if best_l.as_ref().is_none_or(|(v, _)| s.linearity > *v) {
            best_l = Some((
                s.linearity,
                ClassWitness {
                    statistic: "linearity_residual".into(),
                    x: x.clone(),
                    y: s.linearity_at.clone(),
                    value: s.linearity,
                },
            ));
        }
    }
    let (c, wc) = best_c.expect("at least one point");
    let (l, wl) = best_l.expect("at least one point");
    Ok(Sweep {
        stats: SampleStatistics {
            step: spec.step,
            nested_step: spec.nested_step,
            max_curvature_norm: c,
            linearity_residual: l,
        },
        witnesses: vec![wc, wl],
    })
}

/// Samples `num_x` base points and `num_y` unit directions per point, and
/// declares the field Berwald when both the normalized Berwald curvature
/// and the residual of a linear-in-y fit of `G^i_j` stay below threshold.
///
/// A non-Berwald verdict is only issued after the statistics are recomputed
/// with both steps halved and still exceed the thresholds consistently.
/// Numerical failures yield `Inconclusive` with a reason.
pub fn classify_berwald(field: &FinslerField, options: &ClassifyOptions, spec: &DiffSpec) -> ClassificationReport {
    let n = field.dim();
    let region = options.region.clone().unwrap_or_else(|| field.chart().shrunk(0.5));
    let num_x = options.num_x.max(1);
    // the linear fit needs more directions than unknowns
    let num_y = options.num_y.max(n + 2);
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let points: Vec<(Vec<f64>, Vec<Vec<f64>>)> = (0..num_x)
        .map(|_| {
            let x = region.sample(&mut rng);
            let dirs = (0..num_y).map(|_| random_unit(&mut rng, n)).collect();
            (x, dirs)
        })
        .collect();

    let thresholds = Thresholds {
        curvature: options.curvature_threshold,
        linearity: options.linearity_threshold,
    };
    let mut report = ClassificationReport {
        metric: field.name().to_string(),
        verdict: Verdict::Inconclusive,
        max_curvature_norm: f64::NAN,
        linearity_residual: f64::NAN,
        witnesses: Vec::new(),
        thresholds,
        seed: options.seed,
        region,
        num_x,
        num_y,
        refinement: None,
        reason: None,
    };
    let below = |s: &SampleStatistics| {
        s.max_curvature_norm <= options.curvature_threshold && s.linearity_residual <= options.linearity_threshold
    };

    let first = match sweep(field, &points, spec) {
        Ok(s) => s,
        Err(e) => {
            report.reason = Some(format!("numerical failure: {e}"));
            return report;
        }
    };
    report.max_curvature_norm = first.stats.max_curvature_norm;
    report.linearity_residual = first.stats.linearity_residual;
    report.witnesses = first.witnesses;
    if below(&first.stats) {
        report.verdict = Verdict::Berwald;
        return report;
    }

    let second = match sweep(field, &points, &spec.refined()) {
        Ok(s) => s,
        Err(e) => {
            report.reason = Some(format!("numerical failure during refinement: {e}"));
            return report;
        }
    };
    let (a, b) = (&first.stats, &second.stats);
    report.refinement = Some(second.stats.clone());
    if below(b) {
        report.reason = Some("statistics fall below threshold after step refinement".into());
        return report;
    }
    // Whichever statistic exceeds its threshold must be stable to within a
    // factor of two under refinement.
    let stable = |p: f64, q: f64, t: f64| p <= t || q <= t || (p / q).max(q / p) <= 2.0;
    if stable(a.max_curvature_norm, b.max_curvature_norm, options.curvature_threshold)
        && stable(a.linearity_residual, b.linearity_residual, options.linearity_threshold)
    {
        report.verdict = Verdict::NonBerwald;
    } else {
        report.reason = Some("statistics not converged under step refinement".into());
    }
    report
}
