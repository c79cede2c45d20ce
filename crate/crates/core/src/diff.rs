//! Central-difference derivatives with Richardson extrapolation.
//!
//! Fields are black-box evaluators `(x, y) -> value`. Derivatives are taken
//! on the joint coordinate vector `(x, y)`: up to four y-indices and at most
//! one x-index. Every 1-D stencil used here has an error expansion in even
//! powers of the step, so repeated halving with factors `4^k` removes the
//! leading terms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Finite-difference settings.
///
/// `step` drives derivatives of the field itself. `nested_step` is used when
/// a quantity that already contains derivatives (the spray, the averaged
/// metric) is differentiated again; those quantities carry rounding noise of
/// order `eps / step^2`, so their stencils need a wider footprint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffSpec {
    pub step: f64,
    pub richardson: usize,
    pub nested_step: f64,
}

impl Default for DiffSpec {
    fn default() -> Self {
        DiffSpec {
            step: 1e-3,
            richardson: 2,
            nested_step: 2e-2,
        }
    }
}

/// Lower clamp for the absolute step of a single coordinate.
pub const MIN_STEP: f64 = 1e-6;

impl DiffSpec {
    pub fn new(step: f64, richardson: usize) -> Result<Self> {
        let spec = DiffSpec {
            step,
            richardson,
            ..DiffSpec::default()
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::InvalidParameter(format!("step must be positive, got {}", self.step)));
        }
        if !(self.nested_step > 0.0 && self.nested_step.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "nested step must be positive, got {}",
                self.nested_step
            )));
        }
        if self.richardson == 0 {
            return Err(Error::InvalidParameter("richardson levels must be >= 1".into()));
        }
        Ok(())
    }

    /// Both steps halved.
    pub fn refined(&self) -> DiffSpec {
        DiffSpec {
            step: self.step / 2.0,
            nested_step: self.nested_step / 2.0,
            ..*self
        }
    }

    /// Spec used to differentiate a quantity that is itself a derivative.
    pub fn nested(&self) -> DiffSpec {
        DiffSpec {
            step: self.nested_step,
            ..*self
        }
    }
}

/// Which part of the joint coordinate a derivative index refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coord {
    X(usize),
    Y(usize),
}

// Central 1-D stencils: (offset in units of h, weight), and the power of h
// dividing the sum.
const D1: &[(f64, f64)] = &[(-1.0, -0.5), (1.0, 0.5)];
const D2: &[(f64, f64)] = &[(-1.0, 1.0), (0.0, -2.0), (1.0, 1.0)];
const D3: &[(f64, f64)] = &[(-2.0, -0.5), (-1.0, 1.0), (1.0, -1.0), (2.0, 0.5)];
const D4: &[(f64, f64)] = &[(-2.0, 1.0), (-1.0, -4.0), (0.0, 6.0), (1.0, -4.0), (2.0, 1.0)];

fn stencil(order: usize) -> &'static [(f64, f64)] {
    match order {
        1 => D1,
        2 => D2,
        3 => D3,
        4 => D4,
        _ => unreachable!("order checked by caller"),
    }
}

/// One differentiated coordinate of the joint `(x, y)` vector.
struct Axis {
    index: usize,
    order: usize,
    h: f64,
}

fn group_axes(n: usize, coords: &[Coord], x: &[f64], y: &[f64], step: f64) -> Result<Vec<Axis>> {
    let mut counts = vec![0usize; 2 * n];
    for c in coords {
        let k = match *c {
            Coord::X(i) if i < n => i,
            Coord::Y(i) if i < n => n + i,
            Coord::X(i) | Coord::Y(i) => {
                return Err(Error::InvalidParameter(format!("coordinate index {i} out of range")))
            }
        };
        counts[k] += 1;
    }
    let x_order: usize = counts[..n].iter().sum();
    let y_order: usize = counts[n..].iter().sum();
    if x_order > 1 {
        return Err(Error::DerivativeOrder(x_order));
    }
    if y_order > 4 {
        return Err(Error::DerivativeOrder(y_order));
    }
    // Rounding noise grows like eps / h^order, so higher orders get a wider
    // base step.
    let step = step * f64::powi(2.0, (x_order + y_order) as i32 - 1);
    Ok(counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(k, &order)| {
            let v = if k < n { x[k] } else { y[k - n] };
            Axis {
                index: k,
                order,
                h: (step * v.abs().max(1.0)).max(MIN_STEP),
            }
        })
        .collect())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Largest Euclidean y-displacement of the stencil at unit scale.
fn y_reach(axes: &[Axis], n: usize, scale: f64) -> f64 {
    axes.iter()
        .filter(|a| a.index >= n)
        .map(|a| {
            let r = if a.order >= 3 { 2.0 } else { 1.0 };
            (r * a.h * scale).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

/// Single-level product stencil at step scale `scale`.
fn product_stencil<F>(
    f: &F,
    n: usize,
    x: &[f64],
    y: &[f64],
    axes: &[Axis],
    scale: f64,
    width: usize,
) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &[f64]) -> Result<Vec<f64>>,
{
    let mut acc = vec![0.0; width];
    let mut xs = x.to_vec();
    let mut ys = y.to_vec();
    let stencils: Vec<&[(f64, f64)]> = axes.iter().map(|a| stencil(a.order)).collect();
    let mut cursor = vec![0usize; axes.len()];
    // Odometer over the tensor-product stencil in a fixed order.
    loop {
        let mut weight = 1.0;
        for (a, axis) in axes.iter().enumerate() {
            let (offset, w) = stencils[a][cursor[a]];
            weight *= w;
            let delta = offset * axis.h * scale;
            if axis.index < n {
                xs[axis.index] = x[axis.index] + delta;
            } else {
                ys[axis.index - n] = y[axis.index - n] + delta;
            }
        }
        if weight != 0.0 {
            let v = f(&xs, &ys)?;
            if v.len() != width {
                return Err(Error::Dimension {
                    expected: width,
                    got: v.len(),
                });
            }
            for (s, vi) in acc.iter_mut().zip(&v) {
                *s += weight * vi;
            }
        }
        let mut a = 0;
        loop {
            if a == axes.len() {
                let denom: f64 = axes
                    .iter()
                    .map(|ax| (ax.h * scale).powi(ax.order as i32))
                    .product();
                return Ok(acc.into_iter().map(|s| s / denom).collect());
            }
            cursor[a] += 1;
            if cursor[a] < stencils[a].len() {
                break;
            }
            cursor[a] = 0;
            a += 1;
        }
    }
}

/// Mixed partial derivative of a vector-valued field over the joint
/// coordinates. `width` is the length of the field's output.
pub fn mixed_partial_vec<F>(
    f: &F,
    x: &[f64],
    y: &[f64],
    coords: &[Coord],
    width: usize,
    spec: &DiffSpec,
) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &[f64]) -> Result<Vec<f64>>,
{
    spec.validate()?;
    let n = x.len();
    if y.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: y.len(),
        });
    }
    if coords.is_empty() {
        return f(x, y);
    }
    let axes = group_axes(n, coords, x, y, spec.step)?;
    let differentiates_y = axes.iter().any(|a| a.index >= n);
    let ynorm = norm(y);
    if differentiates_y && ynorm == 0.0 {
        return Err(Error::SingularDirection {
            direction: y.to_vec(),
        });
    }
    // Shrink the whole stencil until it stays in the half-ball around y.
    let mut scale = 1.0;
    if differentiates_y {
        let mut halvings = 0;
        while y_reach(&axes, n, scale) > 0.5 * ynorm {
            scale *= 0.5;
            halvings += 1;
            if halvings > 40 {
                return Err(Error::SingularDirection {
                    direction: y.to_vec(),
                });
            }
        }
    }
    let levels = spec.richardson;
    let mut table: Vec<Vec<f64>> = Vec::with_capacity(levels);
    for level in 0..levels {
        let s = scale / f64::powi(2.0, level as i32);
        table.push(product_stencil(f, n, x, y, &axes, s, width)?);
    }
    let mut factor = 1.0;
    for m in 1..levels {
        factor *= 4.0;
        for k in (m..levels).rev() {
            let (coarse, fine) = table.split_at_mut(k);
            for (r, p) in fine[0].iter_mut().zip(&coarse[k - 1]) {
                *r = (factor * *r - p) / (factor - 1.0);
            }
        }
    }
    Ok(table.pop().expect("at least one level"))
}

/// Scalar convenience over [`mixed_partial_vec`].
pub fn mixed_partial<F>(f: &F, x: &[f64], y: &[f64], coords: &[Coord], spec: &DiffSpec) -> Result<f64>
where
    F: Fn(&[f64], &[f64]) -> Result<f64>,
{
    let g = |xs: &[f64], ys: &[f64]| f(xs, ys).map(|v| vec![v]);
    Ok(mixed_partial_vec(&g, x, y, coords, 1, spec)?[0])
}

/// Mixed y-partial over the (zero-based) multi-index.
pub fn partial_y<F>(f: &F, x: &[f64], y: &[f64], multi_index: &[usize], spec: &DiffSpec) -> Result<f64>
where
    F: Fn(&[f64], &[f64]) -> Result<f64>,
{
    let coords: Vec<Coord> = multi_index.iter().map(|&i| Coord::Y(i)).collect();
    mixed_partial(f, x, y, &coords, spec)
}

/// First x-partial along coordinate `i` (zero-based).
pub fn partial_x<F>(f: &F, x: &[f64], y: &[f64], i: usize, spec: &DiffSpec) -> Result<f64>
where
    F: Fn(&[f64], &[f64]) -> Result<f64>,
{
    mixed_partial(f, x, y, &[Coord::X(i)], spec)
}

/// `sum_i y^i df/dy^i`.
pub fn radial_derivative<F>(f: &F, x: &[f64], y: &[f64], spec: &DiffSpec) -> Result<f64>
where
    F: Fn(&[f64], &[f64]) -> Result<f64>,
{
    let mut terms = Vec::with_capacity(y.len());
    for (i, yi) in y.iter().enumerate() {
        terms.push(yi * partial_y(f, x, y, &[i], spec)?);
    }
    Ok(terms.iter().sum())
}
