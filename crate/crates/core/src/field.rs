//! Finsler functions on a single chart and the built-in metric corpus.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;

use crate::diff::{self, DiffSpec};
use crate::dsl::MetricExpr;
use crate::error::{Error, Result};
use crate::tensor::SymmetricBilinearForm;

/// A Riemannian metric field `x -> g(x)` on the chart.
pub trait MetricField: Send + Sync {
    fn dim(&self) -> usize;
    fn metric_at(&self, x: &[f64]) -> Result<SymmetricBilinearForm>;
    fn label(&self) -> String {
        "custom".into()
    }
}

/// `g = e^{2 x1} I`: a flat conformal metric.
#[derive(Debug, Clone, Copy)]
pub struct ConformalExp {
    pub n: usize,
}

impl MetricField for ConformalExp {
    fn dim(&self) -> usize {
        self.n
    }
    fn metric_at(&self, x: &[f64]) -> Result<SymmetricBilinearForm> {
        check_dim(self.n, x)?;
        Ok(SymmetricBilinearForm::scaled_identity(self.n, (2.0 * x[0]).exp()))
    }
    fn label(&self) -> String {
        "conformal_exp".into()
    }
}

/// `g = 4 (1 + |x|^2)^{-2} I`: the round unit sphere in stereographic
/// coordinates (sectional curvature 1).
#[derive(Debug, Clone, Copy)]
pub struct SphereStereo {
    pub n: usize,
}

impl MetricField for SphereStereo {
    fn dim(&self) -> usize {
        self.n
    }
    fn metric_at(&self, x: &[f64]) -> Result<SymmetricBilinearForm> {
        check_dim(self.n, x)?;
        let r2: f64 = x.iter().map(|v| v * v).sum();
        Ok(SymmetricBilinearForm::scaled_identity(self.n, 4.0 / (1.0 + r2).powi(2)))
    }
    fn label(&self) -> String {
        "sphere_stereo".into()
    }
}

/// A position-independent metric.
#[derive(Debug, Clone)]
pub struct ConstantMetric(pub SymmetricBilinearForm);

impl MetricField for ConstantMetric {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn metric_at(&self, x: &[f64]) -> Result<SymmetricBilinearForm> {
        check_dim(self.0.dim(), x)?;
        Ok(self.0.clone())
    }
    fn label(&self) -> String {
        "constant".into()
    }
}

/// A metric given by a closure.
#[derive(Clone)]
pub struct FnMetric {
    pub n: usize,
    pub label: String,
    pub f: Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>,
}

impl MetricField for FnMetric {
    fn dim(&self) -> usize {
        self.n
    }
    fn metric_at(&self, x: &[f64]) -> Result<SymmetricBilinearForm> {
        check_dim(self.n, x)?;
        SymmetricBilinearForm::new((self.f)(x))
    }
    fn label(&self) -> String {
        self.label.clone()
    }
}

pub(crate) fn check_dim(n: usize, v: &[f64]) -> Result<()> {
    if v.len() == n {
        Ok(())
    } else {
        Err(Error::Dimension {
            expected: n,
            got: v.len(),
        })
    }
}

/// The linear term `b_i(x) y^i` of a Randers metric.
#[derive(Clone)]
pub enum OneForm {
    Constant(Vec<f64>),
    Field(Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>),
}

impl OneForm {
    pub fn at(&self, x: &[f64]) -> Vec<f64> {
        match self {
            OneForm::Constant(b) => b.clone(),
            OneForm::Field(f) => f(x),
        }
    }
}

#[derive(Clone)]
pub enum Family {
    Euclidean,
    Riemannian(Arc<dyn MetricField>),
    /// `sqrt(a_ij y^i y^j) + b_i(x) y^i` with constant `a`.
    Randers {
        a: SymmetricBilinearForm,
        beta: OneForm,
    },
    MinkowskiQuartic,
    Dsl(MetricExpr),
}

impl Family {
    pub fn tag(&self) -> &'static str {
        match self {
            Family::Euclidean => "euclidean",
            Family::Riemannian(_) => "riemannian",
            Family::Randers { .. } => "randers",
            Family::MinkowskiQuartic => "minkowski_quartic",
            Family::Dsl(_) => "dsl",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DeclaredClass {
    Finsler,
    Gauge,
    PreFinsler,
}

/// Axis-aligned coordinate bounds of the chart.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChartBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ChartBox {
    pub fn cube(n: usize, half_width: f64) -> Self {
        ChartBox {
            lower: vec![-half_width; n],
            upper: vec![half_width; n],
        }
    }

    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::InvalidParameter("chart box has empty extent".into()));
        }
        Ok(ChartBox { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    /// Box shrunk about its centre by `factor`.
    pub fn shrunk(&self, factor: f64) -> Self {
        let (lower, upper) = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| {
                let c = 0.5 * (l + u);
                let r = 0.5 * (u - l) * factor;
                (c - r, c + r)
            })
            .unzip();
        ChartBox { lower, upper }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| rng.random_range(*l..*u))
            .collect()
    }
}

/// A Finsler (or gauge) function `F(x, y)` on one chart.
#[derive(Clone)]
pub struct FinslerField {
    name: String,
    dim: usize,
    family: Family,
    class: DeclaredClass,
    chart: ChartBox,
}

impl fmt::Debug for FinslerField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FinslerField")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("family", &self.family.tag())
            .field("class", &self.class)
            .finish()
    }
}

impl FinslerField {
    pub fn new(name: impl Into<String>, dim: usize, family: Family, class: DeclaredClass) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        match &family {
            Family::Riemannian(g) if g.dim() != dim => {
                return Err(Error::Dimension {
                    expected: dim,
                    got: g.dim(),
                })
            }
            Family::Randers { a, .. } if a.dim() != dim => {
                return Err(Error::Dimension {
                    expected: dim,
                    got: a.dim(),
                })
            }
            Family::Dsl(e) if e.dimension() != dim => {
                return Err(Error::Dimension {
                    expected: dim,
                    got: e.dimension(),
                })
            }
            _ => {}
        }
        // Position-independent models get a roomier default chart.
        let half_width = match family {
            Family::Euclidean | Family::MinkowskiQuartic => 10.0,
            _ => 2.0,
        };
        Ok(FinslerField {
            name: name.into(),
            dim,
            family,
            class,
            chart: ChartBox::cube(dim, half_width),
        })
    }

    pub fn with_chart(mut self, chart: ChartBox) -> Result<Self> {
        check_dim(self.dim, &chart.lower)?;
        self.chart = chart;
        Ok(self)
    }

    pub fn euclidean(n: usize) -> Self {
        Self::new(format!("euclidean{n}"), n, Family::Euclidean, DeclaredClass::Finsler)
            .expect("valid dimension")
    }

    /// `(sum y_i^4)^{1/4}`. Declared a gauge: its Hessian degenerates along
    /// the coordinate axes.
    pub fn quartic(n: usize) -> Self {
        Self::new(format!("quartic{n}"), n, Family::MinkowskiQuartic, DeclaredClass::Gauge)
            .expect("valid dimension")
    }

    pub fn riemannian(name: impl Into<String>, metric: Arc<dyn MetricField>) -> Self {
        let n = metric.dim();
        Self::new(name, n, Family::Riemannian(metric), DeclaredClass::Finsler).expect("consistent dimension")
    }

    pub fn conformal_exp(n: usize) -> Self {
        Self::riemannian("conformal_exp", Arc::new(ConformalExp { n }))
    }

    pub fn sphere_stereo(n: usize) -> Self {
        Self::riemannian("sphere_stereo", Arc::new(SphereStereo { n }))
    }

    /// Euclidean `a` plus the constant one-form `b`.
    pub fn randers_flat(b: Vec<f64>) -> Self {
        let n = b.len();
        Self::new(
            "randers_flat",
            n,
            Family::Randers {
                a: SymmetricBilinearForm::identity(n),
                beta: OneForm::Constant(b),
            },
            DeclaredClass::Finsler,
        )
        .expect("consistent dimension")
    }

    /// `|y| + c x1 y2` in two dimensions; not Berwald for `c != 0`.
    pub fn randers_curved(c: f64) -> Self {
        let beta = OneForm::Field(Arc::new(move |x: &[f64]| vec![0.0, c * x[0]]));
        let field = Self::new(
            "randers_curved",
            2,
            Family::Randers {
                a: SymmetricBilinearForm::identity(2),
                beta,
            },
            DeclaredClass::Finsler,
        )
        .expect("consistent dimension");
        if c != 0.0 {
            // keep |beta| < 1 on the chart
            let half = (0.75 / c.abs()).min(2.0);
            field
                .with_chart(ChartBox::new(vec![-half, -2.0], vec![half, 2.0]).expect("non-empty"))
                .expect("dimension 2")
        } else {
            field
        }
    }

    pub fn from_expression(name: impl Into<String>, expr: MetricExpr, class: DeclaredClass) -> Self {
        let n = expr.dimension();
        Self::new(name, n, Family::Dsl(expr), class).expect("consistent dimension")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn declared_class(&self) -> DeclaredClass {
        self.class
    }

    pub fn chart(&self) -> &ChartBox {
        &self.chart
    }

    /// True when `F` provably does not depend on the base point.
    pub fn is_position_independent(&self) -> bool {
        match &self.family {
            Family::Euclidean | Family::MinkowskiQuartic => true,
            Family::Randers { beta, .. } => matches!(beta, OneForm::Constant(_)),
            Family::Dsl(e) => e.is_position_independent(),
            Family::Riemannian(_) => false,
        }
    }

    /// `F(x, y)`.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        check_dim(self.dim, x)?;
        check_dim(self.dim, y)?;
        let value = match &self.family {
            Family::Euclidean => y.iter().map(|v| v * v).sum::<f64>().sqrt(),
            Family::MinkowskiQuartic => y.iter().map(|v| v.powi(4)).sum::<f64>().powf(0.25),
            Family::Riemannian(g) => g.metric_at(x)?.quadratic(y).max(0.0).sqrt(),
            Family::Randers { a, beta } => {
                let b = beta.at(x);
                a.quadratic(y).max(0.0).sqrt() + b.iter().zip(y).map(|(bi, yi)| bi * yi).sum::<f64>()
            }
            Family::Dsl(e) => e.evaluate(x, y)?,
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::Domain {
                expr: self.name.clone(),
                message: "non-finite value".into(),
            })
        }
    }

    /// `E = F^2 / 2`; zero at `y = 0`.
    pub fn energy(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if y.iter().all(|v| *v == 0.0) {
            check_dim(self.dim, x)?;
            check_dim(self.dim, y)?;
            return Ok(0.0);
        }
        let f = self.eval(x, y)?;
        Ok(0.5 * f * f)
    }

    /// `F^2`, the function the coordinate formulas differentiate.
    pub fn norm_squared(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        Ok(2.0 * self.energy(x, y)?)
    }

    /// `g_ij = (1/2) d^2 F^2 / dy^i dy^j`. Positive definiteness is enforced
    /// for declared Finsler fields.
    pub fn metric_tensor(&self, x: &[f64], y: &[f64], spec: &DiffSpec) -> Result<SymmetricBilinearForm> {
        let g = self.metric_tensor_unchecked(x, y, spec)?;
        if self.class == DeclaredClass::Finsler && !g.is_positive_definite() {
            return Err(Error::NotPositiveDefinite {
                x: x.to_vec(),
                y: y.to_vec(),
            });
        }
        Ok(g)
    }

    pub(crate) fn metric_tensor_unchecked(
        &self,
        x: &[f64],
        y: &[f64],
        spec: &DiffSpec,
    ) -> Result<SymmetricBilinearForm> {
        check_dim(self.dim, x)?;
        check_dim(self.dim, y)?;
        let n = self.dim;
        let energy = |xs: &[f64], ys: &[f64]| self.energy(xs, ys);
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = diff::partial_y(&energy, x, y, &[i, j], spec)?;
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Ok(SymmetricBilinearForm::from_matrix_symmetrized(m))
    }
}

/// `radial_derivative(f) - r f` at `(x, y)`.
pub fn euler_residual<F>(f: &F, r: f64, x: &[f64], y: &[f64], spec: &DiffSpec) -> Result<f64>
where
    F: Fn(&[f64], &[f64]) -> Result<f64>,
{
    Ok(diff::radial_derivative(f, x, y, spec)? - r * f(x, y)?)
}

/// Names accepted by [`registry`].
pub const REGISTRY_NAMES: [&str; 6] = [
    "euclidean2",
    "quartic2",
    "randers_flat",
    "randers_curved",
    "conformal_exp",
    "sphere_stereo",
];

/// One-form of the flat Randers member.
pub const RANDERS_FLAT_B: [f64; 2] = [0.3, -0.2];
/// Shear strength of the curved Randers member.
pub const RANDERS_CURVED_C: f64 = 0.5;

/// Looks up a built-in metric. `euclideanN` and `quarticN` accept any
/// positive dimension suffix.
pub fn registry(name: &str) -> Option<FinslerField> {
    let field = match name {
        "randers_flat" => FinslerField::randers_flat(RANDERS_FLAT_B.to_vec()),
        "randers_curved" => FinslerField::randers_curved(RANDERS_CURVED_C),
        "conformal_exp" => FinslerField::conformal_exp(2),
        "sphere_stereo" => FinslerField::sphere_stereo(2),
        _ => {
            let dim = |d: &str| d.parse::<usize>().ok().filter(|n| *n > 0);
            if let Some(d) = name.strip_prefix("euclidean") {
                FinslerField::euclidean(dim(d)?)
            } else {
                FinslerField::quartic(dim(name.strip_prefix("quartic")?)?)
            }
        }
    };
    Some(field)
}
