//! Geodesics and parallel transport by fixed-step classical Runge-Kutta.
//!
//! For a nonlinear connection with coefficients `N^i_j(x, v)`:
//!
//! ```text
//! geodesic:   x' = y,   y' = -N(x, y) y
//! transport:  X' = -N(gamma, X) gamma'
//! ```
//!
//! with `N^i_j = G^i_j` for the canonical connection of a Finsler field and
//! `N^i_j = Gamma^i_jk(x) v^k` for a base connection.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::connection::{nonlinear_connection, spray_coefficients, BaseConnection};
use crate::diff::DiffSpec;
use crate::error::{Error, Result};
use crate::field::{ChartBox, FinslerField};
use crate::tensor::norm;

/// Vectors shorter than this are treated as having collapsed to zero.
pub const ZERO_GUARD: f64 = 1e-8;

/// Which connection drives the equations.
#[derive(Clone, Copy)]
pub enum ConnectionSource<'a> {
    Canonical { field: &'a FinslerField, spec: DiffSpec },
    Base(&'a BaseConnection),
}

impl fmt::Debug for ConnectionSource<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConnectionSource::Canonical { field, .. } => write!(f, "Canonical({})", field.name()),
            ConnectionSource::Base(b) => write!(f, "Base({:?})", b.provenance()),
        }
    }
}

impl ConnectionSource<'_> {
    pub fn dim(&self) -> usize {
        match self {
            ConnectionSource::Canonical { field, .. } => field.dim(),
            ConnectionSource::Base(b) => b.dim(),
        }
    }

    fn is_linear(&self) -> bool {
        matches!(self, ConnectionSource::Base(_))
    }

    /// `N^i_j(x, v) w^j`.
    fn apply(&self, x: &[f64], v: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        match self {
            ConnectionSource::Canonical { field, spec } => {
                let n = nonlinear_connection(field, x, v, spec)?;
                Ok((0..v.len()).map(|i| (0..v.len()).map(|j| n[(i, j)] * w[j]).sum()).collect())
            }
            ConnectionSource::Base(b) => Ok(b.symbols(x)?.contract(w, v)),
        }
    }

    /// Geodesic acceleration `-N(x, y) y`. For the canonical connection this
    /// is `-2 G(x, y)` by Euler's relation, which avoids one differentiation.
    fn acceleration(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        match self {
            ConnectionSource::Canonical { field, spec } => {
                Ok(spray_coefficients(field, x, y, spec)?.into_iter().map(|g| -2.0 * g).collect())
            }
            ConnectionSource::Base(b) => Ok(b.symbols(x)?.contract(y, y).into_iter().map(|a| -a).collect()),
        }
    }

    fn default_chart(&self) -> Option<ChartBox> {
        match self {
            ConnectionSource::Canonical { field, .. } => Some(field.chart().clone()),
            ConnectionSource::Base(_) => None,
        }
    }

    fn default_norm(&self) -> Option<FinslerField> {
        match self {
            ConnectionSource::Canonical { field, .. } => Some((*field).clone()),
            ConnectionSource::Base(_) => None,
        }
    }
}

/// Integration settings.
#[derive(Debug, Clone)]
pub struct Integration {
    pub step: f64,
    /// Chart bounds; defaults to the field's chart for the canonical
    /// connection and to no bound for a base connection.
    pub chart: Option<ChartBox>,
    /// Field used for the energy/norm diagnostics; Euclidean when absent and
    /// the source has no field of its own.
    pub norm: Option<FinslerField>,
}

impl Integration {
    pub fn with_step(step: f64) -> Self {
        Integration {
            step,
            chart: None,
            norm: None,
        }
    }

    pub fn norm_field(mut self, field: &FinslerField) -> Self {
        self.norm = Some(field.clone());
        self
    }

    pub fn chart(mut self, chart: ChartBox) -> Self {
        self.chart = Some(chart);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryKind {
    Geodesic,
    Transport,
}

/// A sampled solution. For geodesics `vectors` holds the velocity and the
/// diagnostic is the energy; for transport it holds the transported vector
/// and the diagnostic is its norm.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub kind: TrajectoryKind,
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub vectors: Vec<Vec<f64>>,
    pub diagnostic_name: String,
    pub diagnostics: Vec<f64>,
    pub max_drift: f64,
}

impl Trajectory {
    /// Builds a geodesic-kind trajectory from samples of a curve and its
    /// velocity, with an empty diagnostic column.
    pub fn from_samples(times: Vec<f64>, points: Vec<Vec<f64>>, velocities: Vec<Vec<f64>>) -> Result<Self> {
        if times.len() != points.len() || times.len() != velocities.len() {
            return Err(Error::InvalidParameter("sample arrays differ in length".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("times must be strictly increasing".into()));
        }
        let diagnostics = vec![0.0; times.len()];
        Ok(Trajectory {
            kind: TrajectoryKind::Geodesic,
            times,
            points,
            vectors: velocities,
            diagnostic_name: "none".into(),
            diagnostics,
            max_drift: 0.0,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, |p| p.len())
    }

    pub fn end_point(&self) -> &[f64] {
        self.points.last().expect("non-empty trajectory")
    }

    pub fn end_vector(&self) -> &[f64] {
        self.vectors.last().expect("non-empty trajectory")
    }

    /// CSV with columns `t, x1..xn, y1..yn, <diagnostic>`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let n = self.dim();
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.extend((1..=n).map(|i| format!("y{i}")));
        header.push(self.diagnostic_name.clone());
        writeln!(out, "{}", header.join(","))?;
        for k in 0..self.len() {
            let mut row = vec![format!("{:?}", self.times[k])];
            row.extend(self.points[k].iter().map(|v| format!("{v:?}")));
            row.extend(self.vectors[k].iter().map(|v| format!("{v:?}")));
            row.push(format!("{:?}", self.diagnostics[k]));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn check_state(t: f64, x: &[f64], v: &[f64], chart: Option<&ChartBox>, guard_zero: bool) -> Result<()> {
    if x.iter().chain(v).any(|c| !c.is_finite()) {
        return Err(Error::NonFinite { t });
    }
    if let Some(c) = chart {
        if !c.contains(x) {
            return Err(Error::LeftChart { t, x: x.to_vec() });
        }
    }
    if guard_zero && norm(v) < ZERO_GUARD {
        return Err(Error::ZeroVector { t });
    }
    Ok(())
}

fn axpy(a: &[f64], s: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(p, q)| p + s * q).collect()
}

fn rk4_combine(y: &[f64], h: f64, k: [&[f64]; 4]) -> Vec<f64> {
    (0..y.len())
        .map(|i| y[i] + h / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]))
        .collect()
}

fn diagnostic(norm_field: Option<&FinslerField>, x: &[f64], v: &[f64], energy: bool) -> Result<f64> {
    let f = match norm_field {
        Some(field) => field.eval(x, v)?,
        None => norm(v),
    };
    Ok(if energy { 0.5 * f * f } else { f })
}

/// Integrates the geodesic through `(x0, y0)` over `[0, t_end]`.
pub fn integrate_geodesic(
    source: &ConnectionSource,
    x0: &[f64],
    y0: &[f64],
    t_end: f64,
    opts: &Integration,
) -> Result<Trajectory> {
    let n = source.dim();
    crate::field::check_dim(n, x0)?;
    crate::field::check_dim(n, y0)?;
    if !(opts.step > 0.0) || !(t_end > 0.0) {
        return Err(Error::InvalidParameter("step and T must be positive".into()));
    }
    let chart = opts.chart.clone().or_else(|| source.default_chart());
    let norm_field = opts.norm.clone().or_else(|| source.default_norm());
    let steps = (t_end / opts.step).ceil().max(1.0) as usize;
    let h = t_end / steps as f64;

    let rhs = |t: f64, x: &[f64], y: &[f64]| -> Result<(Vec<f64>, Vec<f64>)> {
        check_state(t, x, y, chart.as_ref(), true)?;
        Ok((y.to_vec(), source.acceleration(x, y)?))
    };

    let mut x = x0.to_vec();
    let mut y = y0.to_vec();
    check_state(0.0, &x, &y, chart.as_ref(), true)?;
    let e0 = diagnostic(norm_field.as_ref(), &x, &y, true)?;
    let mut traj = Trajectory {
        kind: TrajectoryKind::Geodesic,
        times: vec![0.0],
        points: vec![x.clone()],
        vectors: vec![y.clone()],
        diagnostic_name: "energy".into(),
        diagnostics: vec![e0],
        max_drift: 0.0,
    };
    for s in 0..steps {
        let t = s as f64 * h;
        let (k1x, k1y) = rhs(t, &x, &y)?;
        let (k2x, k2y) = rhs(t + h / 2.0, &axpy(&x, h / 2.0, &k1x), &axpy(&y, h / 2.0, &k1y))?;
        let (k3x, k3y) = rhs(t + h / 2.0, &axpy(&x, h / 2.0, &k2x), &axpy(&y, h / 2.0, &k2y))?;
        let (k4x, k4y) = rhs(t + h, &axpy(&x, h, &k3x), &axpy(&y, h, &k3y))?;
        x = rk4_combine(&x, h, [&k1x, &k2x, &k3x, &k4x]);
        y = rk4_combine(&y, h, [&k1y, &k2y, &k3y, &k4y]);
        let t_next = (s + 1) as f64 * h;
        check_state(t_next, &x, &y, chart.as_ref(), true)?;
        let e = diagnostic(norm_field.as_ref(), &x, &y, true)?;
        traj.max_drift = traj.max_drift.max((e - e0).abs());
        traj.times.push(t_next);
        traj.points.push(x.clone());
        traj.vectors.push(y.clone());
        traj.diagnostics.push(e);
    }
    Ok(traj)
}

type CurveFn = dyn Fn(f64) -> (Vec<f64>, Vec<f64>) + Send + Sync;

/// A curve `[0, 1] -> chart`.
#[derive(Clone)]
pub enum CurveSpec {
    Segment { from: Vec<f64>, to: Vec<f64> },
    /// Vertices traversed in order, one unit of parameter split evenly among
    /// the edges.
    Polyline { vertices: Vec<Vec<f64>> },
    /// Circle in the `(x1, x2)` plane, starting at angle 0.
    Circle { center: Vec<f64>, radius: f64 },
    /// Position and velocity at parameter `t`.
    Parametric { dim: usize, curve: Arc<CurveFn> },
}

impl fmt::Debug for CurveSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CurveSpec::Segment { from, to } => write!(f, "Segment({from:?} -> {to:?})"),
            CurveSpec::Polyline { vertices } => write!(f, "Polyline({vertices:?})"),
            CurveSpec::Circle { center, radius } => write!(f, "Circle({center:?}, {radius})"),
            CurveSpec::Parametric { dim, .. } => write!(f, "Parametric(dim {dim})"),
        }
    }
}

struct Piece {
    t0: f64,
    t1: f64,
}

impl CurveSpec {
    /// Closed axis-aligned square of side `side` centred at `center`,
    /// traversed counter-clockwise in the `(x1, x2)` plane.
    pub fn square(center: &[f64], side: f64) -> Self {
        let s = side / 2.0;
        let corner = |a: f64, b: f64| {
            let mut v = center.to_vec();
            v[0] += a;
            v[1] += b;
            v
        };
        CurveSpec::Polyline {
            vertices: vec![corner(-s, -s), corner(s, -s), corner(s, s), corner(-s, s), corner(-s, -s)],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            CurveSpec::Segment { from, .. } => from.len(),
            CurveSpec::Polyline { vertices } => vertices.first().map_or(0, |v| v.len()),
            CurveSpec::Circle { center, .. } => center.len(),
            CurveSpec::Parametric { dim, .. } => *dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            CurveSpec::Segment { from, to } => {
                crate::field::check_dim(from.len(), to)?;
                if from == to {
                    return Err(Error::InvalidParameter("segment endpoints coincide".into()));
                }
            }
            CurveSpec::Polyline { vertices } => {
                if vertices.len() < 2 {
                    return Err(Error::InvalidParameter("polyline needs at least two vertices".into()));
                }
                let n = vertices[0].len();
                for w in vertices.windows(2) {
                    crate::field::check_dim(n, &w[1])?;
                    if w[0] == w[1] {
                        return Err(Error::InvalidParameter("consecutive polyline vertices coincide".into()));
                    }
                }
            }
            CurveSpec::Circle { center, radius } => {
                if center.len() < 2 || !(*radius > 0.0) {
                    return Err(Error::InvalidParameter("circle needs dimension >= 2 and radius > 0".into()));
                }
            }
            CurveSpec::Parametric { dim, .. } => {
                if *dim == 0 {
                    return Err(Error::InvalidParameter("curve dimension must be positive".into()));
                }
            }
        }
        Ok(())
    }

    /// Position and velocity at `t`, evaluated on `piece` so that polyline
    /// corners use the velocity of the edge being integrated.
    fn eval_on(&self, piece: usize, t: f64) -> (Vec<f64>, Vec<f64>) {
        match self {
            CurveSpec::Segment { from, to } => {
                let v: Vec<f64> = to.iter().zip(from).map(|(b, a)| b - a).collect();
                (axpy(from, t, &v), v)
            }
            CurveSpec::Polyline { vertices } => {
                let m = (vertices.len() - 1) as f64;
                let (a, b) = (&vertices[piece], &vertices[piece + 1]);
                let v: Vec<f64> = b.iter().zip(a).map(|(q, p)| m * (q - p)).collect();
                let local = t - piece as f64 / m;
                (axpy(a, local, &v), v)
            }
            CurveSpec::Circle { center, radius } => {
                let w = std::f64::consts::TAU;
                let (s, c) = (w * t).sin_cos();
                let mut p = center.clone();
                let mut v = vec![0.0; center.len()];
                p[0] += radius * c;
                p[1] += radius * s;
                v[0] = -radius * w * s;
                v[1] = radius * w * c;
                (p, v)
            }
            CurveSpec::Parametric { curve, .. } => curve(t),
        }
    }

    /// Position and velocity at `t`.
    pub fn eval(&self, t: f64) -> (Vec<f64>, Vec<f64>) {
        let pieces = self.pieces();
        let k = pieces.iter().position(|p| t <= p.t1).unwrap_or(pieces.len() - 1);
        self.eval_on(k, t)
    }

    fn pieces(&self) -> Vec<Piece> {
        match self {
            CurveSpec::Polyline { vertices } => {
                let m = vertices.len() - 1;
                (0..m)
                    .map(|k| Piece {
                        t0: k as f64 / m as f64,
                        t1: (k + 1) as f64 / m as f64,
                    })
                    .collect()
            }
            _ => vec![Piece { t0: 0.0, t1: 1.0 }],
        }
    }

    pub fn is_closed(&self) -> bool {
        let (a, _) = self.eval_on(0, 0.0);
        let last = self.pieces().len() - 1;
        let (b, _) = self.eval_on(last, 1.0);
        a.iter().zip(&b).all(|(p, q)| (p - q).abs() <= 1e-12 * (1.0 + p.abs()))
    }
}

/// Transports `v0` along `curve` for parameter `t in [0, 1]`.
pub fn parallel_transport(
    source: &ConnectionSource,
    curve: &CurveSpec,
    v0: &[f64],
    opts: &Integration,
) -> Result<Trajectory> {
    let n = source.dim();
    curve.validate()?;
    crate::field::check_dim(n, v0)?;
    if curve.dim() != n {
        return Err(Error::Dimension {
            expected: n,
            got: curve.dim(),
        });
    }
    if !(opts.step > 0.0) {
        return Err(Error::InvalidParameter("step must be positive".into()));
    }
    let nonlinear = !source.is_linear();
    if nonlinear && norm(v0) == 0.0 {
        return Err(Error::ZeroVector { t: 0.0 });
    }
    let chart = opts.chart.clone().or_else(|| source.default_chart());
    let norm_field = opts.norm.clone().or_else(|| source.default_norm());

    let (p0, _) = curve.eval_on(0, 0.0);
    let mut v = v0.to_vec();
    check_state(0.0, &p0, &v, chart.as_ref(), nonlinear)?;
    let d0 = diagnostic(norm_field.as_ref(), &p0, &v, false)?;
    let mut traj = Trajectory {
        kind: TrajectoryKind::Transport,
        times: vec![0.0],
        points: vec![p0],
        vectors: vec![v.clone()],
        diagnostic_name: "norm".into(),
        diagnostics: vec![d0],
        max_drift: 0.0,
    };
    for (k, piece) in curve.pieces().iter().enumerate() {
        let steps = ((piece.t1 - piece.t0) / opts.step).round().max(1.0) as usize;
        let h = (piece.t1 - piece.t0) / steps as f64;
        let rhs = |t: f64, v: &[f64]| -> Result<Vec<f64>> {
            let (p, dp) = curve.eval_on(k, t);
            check_state(t, &p, v, chart.as_ref(), nonlinear)?;
            Ok(source.apply(&p, v, &dp)?.into_iter().map(|a| -a).collect())
        };
        for s in 0..steps {
            let t = piece.t0 + s as f64 * h;
            let k1 = rhs(t, &v)?;
            let k2 = rhs(t + h / 2.0, &axpy(&v, h / 2.0, &k1))?;
            let k3 = rhs(t + h / 2.0, &axpy(&v, h / 2.0, &k2))?;
            let k4 = rhs(t + h, &axpy(&v, h, &k3))?;
            v = rk4_combine(&v, h, [&k1, &k2, &k3, &k4]);
            let t_next = if s + 1 == steps { piece.t1 } else { t + h };
            let (p, _) = curve.eval_on(k, t_next);
            check_state(t_next, &p, &v, chart.as_ref(), nonlinear)?;
            let d = diagnostic(norm_field.as_ref(), &p, &v, false)?;
            traj.max_drift = traj.max_drift.max((d - d0).abs());
            traj.times.push(t_next);
            traj.points.push(p);
            traj.vectors.push(v.clone());
            traj.diagnostics.push(d);
        }
    }
    Ok(traj)
}

/// `max_t |F(X(t)) - F(v0)|` for transport by `source`, measured with
/// `field`.
pub fn norm_preservation_residual(
    field: &FinslerField,
    source: &ConnectionSource,
    curve: &CurveSpec,
    v0: &[f64],
    step: f64,
) -> Result<f64> {
    let opts = Integration::with_step(step).norm_field(field).chart(field.chart().clone());
    Ok(parallel_transport(source, curve, v0, &opts)?.max_drift)
}

/// Matrix of parallel transport around a closed loop, column `j` being the
/// image of the `j`-th basis vector.
pub fn holonomy_loop(base: &BaseConnection, curve: &CurveSpec, step: f64) -> Result<DMatrix<f64>> {
    curve.validate()?;
    if !curve.is_closed() {
        return Err(Error::InvalidParameter("holonomy requires a closed loop".into()));
    }
    let n = base.dim();
    let source = ConnectionSource::Base(base);
    let opts = Integration::with_step(step);
    let columns: Vec<Result<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            parallel_transport(&source, curve, &e, &opts).map(|t| t.end_vector().to_vec())
        })
        .collect();
    let mut m = DMatrix::zeros(n, n);
    for (j, col) in columns.into_iter().enumerate() {
        for (i, v) in col?.into_iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::registry;

    #[test]
    fn euclidean_geodesic_is_a_line() {
        let f = registry("euclidean2").unwrap();
        let src = ConnectionSource::Canonical {
            field: &f,
            spec: DiffSpec::default(),
        };
        let t = integrate_geodesic(&src, &[0.0, 0.0], &[1.0, 2.0], 1.0, &Integration::with_step(0.01)).unwrap();
        assert!((t.end_point()[0] - 1.0).abs() < 1e-12);
        assert!((t.end_point()[1] - 2.0).abs() < 1e-12);
        assert_eq!(t.end_vector(), &[1.0, 2.0]);
        assert_eq!(t.len(), 101);
    }

    #[test]
    fn leaving_the_chart_is_an_error() {
        let f = registry("euclidean2").unwrap();
        let src = ConnectionSource::Canonical {
            field: &f,
            spec: DiffSpec::default(),
        };
        let r = integrate_geodesic(&src, &[0.0, 0.0], &[30.0, 0.0], 1.0, &Integration::with_step(0.01));
        assert!(matches!(r, Err(Error::LeftChart { .. })));
    }

    #[test]
    fn zero_initial_velocity_is_rejected() {
        let f = registry("euclidean2").unwrap();
        let src = ConnectionSource::Canonical {
            field: &f,
            spec: DiffSpec::default(),
        };
        let r = integrate_geodesic(&src, &[0.0, 0.0], &[0.0, 0.0], 1.0, &Integration::with_step(0.01));
        assert!(matches!(r, Err(Error::ZeroVector { .. })));
        let curve = CurveSpec::Segment {
            from: vec![0.0, 0.0],
            to: vec![1.0, 0.0],
        };
        let r = parallel_transport(&src, &curve, &[0.0, 0.0], &Integration::with_step(0.1));
        assert!(matches!(r, Err(Error::ZeroVector { .. })));
        // A linear connection transports the zero vector.
        let flat = BaseConnection::zero(2);
        let t = parallel_transport(&ConnectionSource::Base(&flat), &curve, &[0.0, 0.0], &Integration::with_step(0.1))
            .unwrap();
        assert_eq!(t.end_vector(), &[0.0, 0.0]);
    }

    #[test]
    fn curve_validation() {
        let bad = CurveSpec::Polyline {
            vertices: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
        };
        assert!(bad.validate().is_err());
        assert!(CurveSpec::square(&[0.0, 0.0], 0.1).is_closed());
        assert!(CurveSpec::Circle {
            center: vec![0.0, 0.0],
            radius: 0.5
        }
        .is_closed());
        let seg = CurveSpec::Segment {
            from: vec![0.0, 0.0],
            to: vec![1.0, 0.0],
        };
        assert!(!seg.is_closed());
        assert!(holonomy_loop(&BaseConnection::zero(2), &seg, 0.1).is_err());
    }

    #[test]
    fn csv_columns() {
        let t = Trajectory::from_samples(vec![0.0, 1.0], vec![vec![0.0, 0.0], vec![1.0, 1.0]], vec![vec![1.0, 1.0]; 2])
            .unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "t,x1,x2,y1,y2,none");
        assert_eq!(text.lines().count(), 3);
    }
}
