//! Run configuration: a TOML file with optional sections, overridden by
//! command-line flags.

use std::path::{Path, PathBuf};

use finsler_kit::dsl;
use finsler_kit::field::{registry, ChartBox, DeclaredClass, FinslerField, REGISTRY_NAMES};
use finsler_kit::metrization::QuadratureSpec;
use finsler_kit::transport::CurveSpec;
use finsler_kit::DiffSpec;
use serde::Deserialize;

use crate::error::CliError;

/// Overrides the output directory from the config file; `--out-dir` still wins.
pub const OUT_DIR_ENV: &str = "FINSLER_KIT_OUT_DIR";

const DEFAULT_OUT_DIR: &str = "finsler-out";

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub x: Option<Vec<f64>>,
    #[serde(default)]
    pub metric: MetricSection,
    #[serde(default)]
    pub diff: DiffSection,
    #[serde(default)]
    pub quadrature: QuadratureSection,
    #[serde(default)]
    pub transport: TransportSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub validate: ValidateSection,
    #[serde(default)]
    pub classify: ClassifySection,
    #[serde(default)]
    pub loewner: LoewnerSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSection {
    pub name: Option<String>,
    pub expression: Option<String>,
    pub dimension: Option<usize>,
    pub class: Option<String>,
    pub chart_lower: Option<Vec<f64>>,
    pub chart_upper: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffSection {
    pub step: Option<f64>,
    pub richardson: Option<usize>,
    pub nested_step: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSection {
    pub scheme: Option<String>,
    pub resolution: Option<usize>,
    pub samples: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportSection {
    pub step: Option<f64>,
    #[serde(rename = "T")]
    pub t_end: Option<f64>,
    pub x0: Option<Vec<f64>>,
    pub y0: Option<Vec<f64>>,
    pub v0: Option<Vec<f64>>,
    pub curve: Option<String>,
    pub connection: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    pub csv: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateSection {
    pub samples: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifySection {
    pub num_x: Option<usize>,
    pub num_y: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoewnerSection {
    pub samples: Option<usize>,
    pub tolerance: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Which connection drives geodesics and transport.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConnectionChoice {
    Canonical,
    Extracted,
}

impl ConnectionChoice {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "canonical" => Ok(ConnectionChoice::Canonical),
            "extracted" | "base" => Ok(ConnectionChoice::Extracted),
            other => Err(CliError::Config(format!(
                "unknown connection `{other}` (expected canonical or extracted)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ConnectionChoice::Canonical => "canonical",
            ConnectionChoice::Extracted => "extracted",
        }
    }
}

/// Flags shared by every subcommand. `None` means "not given".
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub metric: Option<String>,
    pub metric_file: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub diff_step: Option<f64>,
    pub richardson: Option<usize>,
    pub nested_step: Option<f64>,
    pub chart_lower: Option<String>,
    pub chart_upper: Option<String>,
    pub no_csv: bool,
}

/// Fully resolved settings for one run.
pub struct RunConfig {
    pub field: FinslerField,
    pub seed: u64,
    pub diff: DiffSpec,
    pub out_dir: PathBuf,
    pub csv: bool,
    pub file: FileConfig,
}

impl RunConfig {
    pub fn resolve(o: &Overrides) -> Result<Self, CliError> {
        let file = match &o.metric_file {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let field = build_field(o, &file.metric)?;

        let mut diff = DiffSpec::default();
        if let Some(s) = o.diff_step.or(file.diff.step) {
            diff.step = s;
        }
        if let Some(r) = o.richardson.or(file.diff.richardson) {
            diff.richardson = r;
        }
        if let Some(s) = o.nested_step.or(file.diff.nested_step) {
            diff.nested_step = s;
        }
        diff.validate().map_err(|e| CliError::Config(e.to_string()))?;

        let env_dir = std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
        let out_dir = o
            .out_dir
            .clone()
            .or(env_dir)
            .or_else(|| file.output.dir.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
        let csv = !o.no_csv && file.output.csv.unwrap_or(true);

        Ok(RunConfig {
            field,
            seed: o.seed.or(file.seed).unwrap_or(1),
            diff,
            out_dir,
            csv,
            file,
        })
    }

    pub fn dim(&self) -> usize {
        self.field.dim()
    }

    /// Evaluation point: flag, then config, then the chart centre.
    pub fn point(&self, flag: Option<&str>) -> Result<Vec<f64>, CliError> {
        let x = match flag {
            Some(s) => parse_vector(s, "--x")?,
            None => match &self.file.x {
                Some(v) => v.clone(),
                None => {
                    let c = self.field.chart();
                    c.lower.iter().zip(&c.upper).map(|(a, b)| 0.5 * (a + b)).collect()
                }
            },
        };
        self.check_len(&x, "x")?;
        if !self.field.chart().contains(&x) {
            return Err(CliError::Config(format!("point {x:?} lies outside the chart box")));
        }
        Ok(x)
    }

    pub fn check_len(&self, v: &[f64], what: &str) -> Result<(), CliError> {
        if v.len() != self.dim() {
            return Err(CliError::Config(format!(
                "{what} has {} components but the metric has dimension {}",
                v.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    pub fn quadrature(&self, resolution: Option<usize>, mc_samples: Option<usize>) -> Result<QuadratureSpec, CliError> {
        let n = self.dim();
        let q = &self.file.quadrature;
        let scheme = if mc_samples.is_some() {
            "monte_carlo".to_string()
        } else if resolution.is_some() {
            "sphere_grid".to_string()
        } else {
            q.scheme.clone().unwrap_or_default()
        };
        let spec = match scheme.as_str() {
            "" => match QuadratureSpec::default_for(n) {
                QuadratureSpec::MonteCarlo { samples, .. } => QuadratureSpec::MonteCarlo {
                    samples: mc_samples.or(q.samples).unwrap_or(samples),
                    seed: self.seed,
                },
                QuadratureSpec::SphereGrid { resolution: r } => QuadratureSpec::SphereGrid {
                    resolution: resolution.or(q.resolution).unwrap_or(r),
                },
            },
            "sphere_grid" => {
                let r = match QuadratureSpec::default_for(n) {
                    QuadratureSpec::SphereGrid { resolution } => resolution,
                    _ => 0,
                };
                QuadratureSpec::SphereGrid {
                    resolution: resolution.or(q.resolution).unwrap_or(r),
                }
            }
            "monte_carlo" => QuadratureSpec::MonteCarlo {
                samples: mc_samples.or(q.samples).unwrap_or(20_000),
                seed: self.seed,
            },
            other => {
                return Err(CliError::Config(format!(
                    "unknown quadrature scheme `{other}` (expected sphere_grid or monte_carlo)"
                )))
            }
        };
        spec.validate(n).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(spec)
    }
}

fn build_field(o: &Overrides, m: &MetricSection) -> Result<FinslerField, CliError> {
    let field = if let Some(name) = &o.metric {
        lookup(name)?
    } else if let Some(name) = &m.name {
        if m.expression.is_some() {
            return Err(CliError::Config("metric.name and metric.expression are mutually exclusive".into()));
        }
        lookup(name)?
    } else if let Some(src) = &m.expression {
        let n = m
            .dimension
            .ok_or_else(|| CliError::Config("metric.dimension is required with metric.expression".into()))?;
        let expr = dsl::parse(src, n).map_err(|e| CliError::Config(format!("metric.expression: {e}")))?;
        let class = match m.class.as_deref().unwrap_or("finsler") {
            "finsler" => DeclaredClass::Finsler,
            "gauge" => DeclaredClass::Gauge,
            "pre_finsler" => DeclaredClass::PreFinsler,
            other => {
                return Err(CliError::Config(format!(
                    "unknown metric.class `{other}` (expected finsler, gauge or pre_finsler)"
                )))
            }
        };
        let label = o
            .metric_file
            .as_ref()
            .and_then(|p| p.file_stem())
            .map_or_else(|| "dsl".to_string(), |s| s.to_string_lossy().into_owned());
        FinslerField::from_expression(label, expr, class)
    } else {
        return Err(CliError::Config(
            "no metric given: pass --metric <name> or --metric-file <config>".into(),
        ));
    };

    let lower = match &o.chart_lower {
        Some(s) => Some(parse_vector(s, "--chart-lower")?),
        None => m.chart_lower.clone(),
    };
    let upper = match &o.chart_upper {
        Some(s) => Some(parse_vector(s, "--chart-upper")?),
        None => m.chart_upper.clone(),
    };
    match (lower, upper) {
        (None, None) => Ok(field),
        (Some(lo), Some(hi)) => {
            let chart = ChartBox::new(lo, hi).map_err(|e| CliError::Config(format!("chart: {e}")))?;
            field.with_chart(chart).map_err(|e| CliError::Config(format!("chart: {e}")))
        }
        _ => Err(CliError::Config("chart needs both lower and upper bounds".into())),
    }
}

fn lookup(name: &str) -> Result<FinslerField, CliError> {
    registry(name).ok_or_else(|| {
        CliError::Config(format!(
            "unknown metric `{name}` (known: {})",
            REGISTRY_NAMES.join(", ")
        ))
    })
}

/// `"1,-0.5,2"` to a vector.
pub fn parse_vector(s: &str, what: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Config(format!("{what}: cannot parse `{t}` as a number")))
        })
        .collect()
}

/// Curve syntax:
///
/// * `segment:a1,a2;b1,b2`
/// * `polyline:p1;p2;...;pk` (closed when the last vertex repeats the first)
/// * `square:c1,c2,side`
/// * `circle:c1,c2,radius`
pub fn parse_curve(s: &str, n: usize) -> Result<CurveSpec, CliError> {
    let (kind, body) = s
        .split_once(':')
        .ok_or_else(|| CliError::Config(format!("curve `{s}`: expected <kind>:<points>")))?;
    let points = |body: &str| -> Result<Vec<Vec<f64>>, CliError> {
        body.split(';').map(|p| parse_vector(p, "--curve")).collect()
    };
    let curve = match kind {
        "segment" => {
            let mut p = points(body)?;
            if p.len() != 2 {
                return Err(CliError::Config("segment needs exactly two points".into()));
            }
            let to = p.pop().unwrap();
            let from = p.pop().unwrap();
            CurveSpec::Segment { from, to }
        }
        "polyline" => CurveSpec::Polyline { vertices: points(body)? },
        "square" | "circle" => {
            let v = parse_vector(body, "--curve")?;
            if v.len() != n + 1 {
                return Err(CliError::Config(format!(
                    "{kind} needs {n} centre coordinates and one size, got {} numbers",
                    v.len()
                )));
            }
            let (center, size) = (v[..n].to_vec(), v[n]);
            if kind == "square" {
                CurveSpec::square(&center, size)
            } else {
                CurveSpec::Circle { center, radius: size }
            }
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown curve kind `{other}` (expected segment, polyline, square or circle)"
            )))
        }
    };
    if curve.dim() != n {
        return Err(CliError::Config(format!(
            "curve has dimension {} but the metric has dimension {n}",
            curve.dim()
        )));
    }
    curve.validate().map_err(|e| CliError::Config(format!("curve: {e}")))?;
    Ok(curve)
}
