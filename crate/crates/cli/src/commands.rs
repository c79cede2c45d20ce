use finsler_kit::connection::{
    classify_berwald, extract_base_connection, BaseConnection, ClassificationReport, ClassifyOptions, Verdict,
};
use finsler_kit::field::DeclaredClass;
use finsler_kit::loewner::{
    default_sample_count, mvee_centered, proportionality_check, sample_indicatrix, Proportionality, DEFAULT_TOLERANCE,
};
use finsler_kit::metrization::{
    averaged_metric, levi_civita, metric_compatibility_residual, AveragedMetricField, QuadratureDiagnostics,
    QuadratureSpec,
};
use finsler_kit::transport::{
    holonomy_loop, integrate_geodesic, parallel_transport, ConnectionSource, Integration, Trajectory,
};
use finsler_kit::validate::{validate, ValidationReport};
use finsler_kit::{DiffSpec, SymmetricBilinearForm};
use serde::Serialize;

use crate::config::{parse_curve, parse_vector, ConnectionChoice, RunConfig};
use crate::error::{CliError, EXIT_FAILURE, EXIT_INCONCLUSIVE, EXIT_OK};
use crate::output::Sink;

/// Tolerance for comparing the averaged metric's Levi-Civita connection
/// with the extracted base connection.
pub const CONNECTION_TOLERANCE: f64 = 1e-3;
pub const PROPORTIONALITY_TOLERANCE: f64 = 1e-3;

pub struct Outcome {
    pub code: u8,
    pub summary: String,
}

fn verdict_code(v: Verdict) -> u8 {
    match v {
        Verdict::Berwald => EXIT_OK,
        Verdict::NonBerwald => EXIT_FAILURE,
        Verdict::Inconclusive => EXIT_INCONCLUSIVE,
    }
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Berwald => "berwald",
        Verdict::NonBerwald => "non_berwald",
        Verdict::Inconclusive => "inconclusive",
    }
}

pub fn cmd_validate(rc: &RunConfig, samples: Option<usize>, sink: &mut Sink) -> Result<Outcome, CliError> {
    let samples = samples.or(rc.file.validate.samples).unwrap_or(500);
    let report = validate(&rc.field, samples, rc.seed);
    sink.json("validate", &report)?;
    Ok(validation_outcome(&report))
}

fn validation_outcome(report: &ValidationReport) -> Outcome {
    let failing: Vec<&str> = report
        .checks
        .iter()
        .filter(|c| c.status == finsler_kit::validate::AxiomStatus::Fail)
        .map(|c| c.axiom.as_str())
        .collect();
    if failing.is_empty() {
        Outcome {
            code: EXIT_OK,
            summary: format!("{}: all axioms pass ({} samples)", report.metric, report.samples),
        }
    } else {
        Outcome {
            code: EXIT_FAILURE,
            summary: format!("{}: failed {}", report.metric, failing.join(", ")),
        }
    }
}

fn classify_options(rc: &RunConfig, num_x: Option<usize>, num_y: Option<usize>) -> ClassifyOptions {
    let d = ClassifyOptions::default();
    ClassifyOptions {
        num_x: num_x.or(rc.file.classify.num_x).unwrap_or(d.num_x),
        num_y: num_y.or(rc.file.classify.num_y).unwrap_or(d.num_y),
        seed: rc.seed,
        ..d
    }
}

pub fn cmd_classify(
    rc: &RunConfig,
    num_x: Option<usize>,
    num_y: Option<usize>,
    sink: &mut Sink,
) -> Result<Outcome, CliError> {
    let report = classify_berwald(&rc.field, &classify_options(rc, num_x, num_y), &rc.diff);
    sink.json("classify", &report)?;
    let mut summary = format!(
        "{}: {} (curvature {:.3e}, linearity {:.3e})",
        report.metric,
        verdict_name(report.verdict),
        report.max_curvature_norm,
        report.linearity_residual
    );
    if let Some(r) = &report.reason {
        summary.push_str(&format!("; {r}"));
    }
    Ok(Outcome {
        code: verdict_code(report.verdict),
        summary,
    })
}

pub struct IntegrationArgs<'a> {
    pub step: Option<f64>,
    pub connection: Option<&'a str>,
}

impl IntegrationArgs<'_> {
    fn step(&self, rc: &RunConfig) -> Result<f64, CliError> {
        let step = self.step.or(rc.file.transport.step).unwrap_or(1e-3);
        if !(step > 0.0 && step.is_finite()) {
            return Err(CliError::Config(format!("step must be positive, got {step}")));
        }
        Ok(step)
    }

    fn connection(&self, rc: &RunConfig) -> Result<ConnectionChoice, CliError> {
        match self.connection.map(str::to_string).or_else(|| rc.file.transport.connection.clone()) {
            Some(s) => ConnectionChoice::parse(&s),
            None => Ok(ConnectionChoice::Canonical),
        }
    }
}

fn vector_or(rc: &RunConfig, flag: Option<&str>, name: &str, file: &Option<Vec<f64>>) -> Result<Option<Vec<f64>>, CliError> {
    let v = match flag {
        Some(s) => Some(parse_vector(s, name)?),
        None => file.clone(),
    };
    if let Some(v) = &v {
        rc.check_len(v, name)?;
    }
    Ok(v)
}

fn first_axis(n: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[0] = 1.0;
    e
}

#[derive(Serialize)]
struct GeodesicBody<'a> {
    metric: &'a str,
    connection: &'static str,
    x0: Vec<f64>,
    y0: Vec<f64>,
    t_end: f64,
    step: f64,
    diff: DiffSpec,
    samples: usize,
    end_point: &'a [f64],
    end_velocity: &'a [f64],
    energy_drift: f64,
    trajectory: &'a Trajectory,
}

pub fn cmd_geodesic(
    rc: &RunConfig,
    x0: Option<&str>,
    y0: Option<&str>,
    t_end: Option<f64>,
    args: &IntegrationArgs,
    sink: &mut Sink,
) -> Result<Outcome, CliError> {
    let n = rc.dim();
    let tf = &rc.file.transport;
    let x0 = match vector_or(rc, x0, "--x0", &tf.x0)? {
        Some(v) => v,
        None => rc.point(None)?,
    };
    let y0 = vector_or(rc, y0, "--y0", &tf.y0)?.unwrap_or_else(|| first_axis(n));
    let t_end = t_end.or(tf.t_end).unwrap_or(1.0);
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(CliError::Config(format!("--T must be positive, got {t_end}")));
    }
    let step = args.step(rc)?;
    let choice = args.connection(rc)?;
    let base;
    let source = match choice {
        ConnectionChoice::Canonical => ConnectionSource::Canonical {
            field: &rc.field,
            spec: rc.diff,
        },
        ConnectionChoice::Extracted => {
            base = BaseConnection::extracted(&rc.field, rc.diff);
            ConnectionSource::Base(&base)
        }
    };
    let integ = Integration::with_step(step).chart(rc.field.chart().clone()).norm_field(&rc.field);
    let traj = integrate_geodesic(&source, &x0, &y0, t_end, &integ)?;
    let body = GeodesicBody {
        metric: rc.field.name(),
        connection: choice.as_str(),
        x0,
        y0,
        t_end,
        step,
        diff: rc.diff,
        samples: traj.len(),
        end_point: traj.end_point(),
        end_velocity: traj.end_vector(),
        energy_drift: traj.max_drift,
        trajectory: &traj,
    };
    sink.json("geodesic", &body)?;
    if rc.csv {
        sink.csv("geodesic.csv", |b| traj.write_csv(b))?;
    }
    Ok(Outcome {
        code: EXIT_OK,
        summary: format!(
            "{}: geodesic to {:?}, energy drift {:.3e}",
            rc.field.name(),
            traj.end_point(),
            traj.max_drift
        ),
    })
}

#[derive(Serialize)]
struct TransportBody<'a> {
    metric: &'a str,
    connection: &'static str,
    curve: &'a str,
    closed: bool,
    v0: Vec<f64>,
    step: f64,
    diff: DiffSpec,
    samples: usize,
    end_point: &'a [f64],
    end_vector: &'a [f64],
    norm_drift: f64,
    holonomy: Option<Matrix>,
    trajectory: &'a Trajectory,
}

/// Row-major matrix for JSON output.
#[derive(Serialize)]
struct Matrix(Vec<Vec<f64>>);

pub fn cmd_transport(
    rc: &RunConfig,
    curve: Option<&str>,
    v0: Option<&str>,
    args: &IntegrationArgs,
    sink: &mut Sink,
) -> Result<Outcome, CliError> {
    let n = rc.dim();
    let curve_src = curve
        .map(str::to_string)
        .or_else(|| rc.file.transport.curve.clone())
        .ok_or_else(|| CliError::Config("transport needs --curve (or transport.curve)".into()))?;
    let curve = parse_curve(&curve_src, n)?;
    let v0 = vector_or(rc, v0, "--v0", &rc.file.transport.v0)?.unwrap_or_else(|| first_axis(n));
    let step = args.step(rc)?;
    let choice = args.connection(rc)?;
    let base = BaseConnection::extracted(&rc.field, rc.diff);
    let source = match choice {
        ConnectionChoice::Canonical => ConnectionSource::Canonical {
            field: &rc.field,
            spec: rc.diff,
        },
        ConnectionChoice::Extracted => ConnectionSource::Base(&base),
    };
    let integ = Integration::with_step(step).chart(rc.field.chart().clone()).norm_field(&rc.field);
    let traj = parallel_transport(&source, &curve, &v0, &integ)?;
    let holonomy = if curve.is_closed() && choice == ConnectionChoice::Extracted {
        let h = holonomy_loop(&base, &curve, step)?;
        Some(Matrix(
            (0..n).map(|i| (0..n).map(|j| h[(i, j)]).collect()).collect(),
        ))
    } else {
        None
    };
    let body = TransportBody {
        metric: rc.field.name(),
        connection: choice.as_str(),
        curve: &curve_src,
        closed: curve.is_closed(),
        v0,
        step,
        diff: rc.diff,
        samples: traj.len(),
        end_point: traj.end_point(),
        end_vector: traj.end_vector(),
        norm_drift: traj.max_drift,
        holonomy,
        trajectory: &traj,
    };
    sink.json("transport", &body)?;
    if rc.csv {
        sink.csv("transport.csv", |b| traj.write_csv(b))?;
    }
    Ok(Outcome {
        code: EXIT_OK,
        summary: format!(
            "{}: transported vector {:?}, norm drift {:.3e}",
            rc.field.name(),
            traj.end_vector(),
            traj.max_drift
        ),
    })
}

#[derive(Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
enum Compatibility {
    Ok {
        levi_civita_vs_extracted: f64,
        metric_compatibility_residual: f64,
        tolerance: f64,
        passed: bool,
    },
    NotApplicable {
        reason: String,
    },
}

fn compatibility(rc: &RunConfig, x: &[f64], quad: QuadratureSpec) -> Result<Compatibility, CliError> {
    let extracted = match extract_base_connection(&rc.field, x, &rc.diff) {
        Ok(c) => c,
        Err(e @ finsler_kit::Error::DirectionDependent { .. }) => {
            return Ok(Compatibility::NotApplicable {
                reason: format!("no linear base connection: {e}"),
            })
        }
        Err(e) => return Err(e.into()),
    };
    let am = AveragedMetricField::new(&rc.field, quad, rc.diff);
    let lc = levi_civita(&am, x, &rc.diff)?;
    let diff = lc.max_abs_diff(&extracted);
    let residual = metric_compatibility_residual(&BaseConnection::extracted(&rc.field, rc.diff), &am, x, &rc.diff)?;
    Ok(Compatibility::Ok {
        levi_civita_vs_extracted: diff,
        metric_compatibility_residual: residual,
        tolerance: CONNECTION_TOLERANCE,
        passed: diff <= CONNECTION_TOLERANCE && residual <= CONNECTION_TOLERANCE,
    })
}

#[derive(Serialize)]
struct MetrizeBody<'a> {
    metric: &'a str,
    x: Vec<f64>,
    b: SymmetricBilinearForm,
    diagnostics: QuadratureDiagnostics,
    compatibility: Compatibility,
}

fn require_dimension_two(rc: &RunConfig, command: &str) -> Result<(), CliError> {
    if rc.dim() < 2 {
        return Err(CliError::Config(format!(
            "{command} needs dimension >= 2, the metric has dimension {}",
            rc.dim()
        )));
    }
    Ok(())
}

pub fn cmd_metrize(
    rc: &RunConfig,
    x: Option<&str>,
    resolution: Option<usize>,
    mc_samples: Option<usize>,
    sink: &mut Sink,
) -> Result<Outcome, CliError> {
    require_dimension_two(rc, "metrize")?;
    let x = rc.point(x)?;
    let quad = rc.quadrature(resolution, mc_samples)?;
    let avg = averaged_metric(&rc.field, &x, &quad, &rc.diff)?;
    let compat = compatibility(rc, &x, quad)?;
    let mut summary = format!("{}: b = {:?}", rc.field.name(), avg.b.rows());
    if avg.diagnostics.flagged {
        summary.push_str(&format!(" (quadrature flagged: spread {:.3e})", avg.diagnostics.spread));
    }
    let code = match &compat {
        Compatibility::Ok { passed: false, .. } => EXIT_FAILURE,
        _ => EXIT_OK,
    };
    if rc.csv {
        sink.csv("metrize_nodes.csv", |b| avg.write_nodes_csv(b))?;
    }
    let body = MetrizeBody {
        metric: rc.field.name(),
        x,
        b: avg.b,
        diagnostics: avg.diagnostics,
        compatibility: compat,
    };
    sink.json("metrize", &body)?;
    Ok(Outcome { code, summary })
}

#[derive(Serialize)]
struct Containment {
    excess: f64,
    contains_all: bool,
    tight: bool,
    slack: f64,
}

#[derive(Serialize)]
struct LoewnerBody<'a> {
    metric: &'a str,
    x: Vec<f64>,
    samples: usize,
    tolerance: f64,
    seed: u64,
    a: SymmetricBilinearForm,
    iterations: usize,
    support: usize,
    dual_excess: f64,
    containment: Containment,
    averaged_metric: Option<SymmetricBilinearForm>,
    proportionality: Option<Proportionality>,
}

fn loewner_body<'a>(
    rc: &'a RunConfig,
    x: Vec<f64>,
    samples: Option<usize>,
    tolerance: Option<f64>,
    averaged: Option<SymmetricBilinearForm>,
) -> Result<LoewnerBody<'a>, CliError> {
    let n = rc.dim();
    let samples = samples.or(rc.file.loewner.samples).unwrap_or(default_sample_count(n));
    let tolerance = tolerance.or(rc.file.loewner.tolerance).unwrap_or(DEFAULT_TOLERANCE);
    if !(tolerance > 0.0) {
        return Err(CliError::Config(format!("tolerance must be positive, got {tolerance}")));
    }
    let pts = sample_indicatrix(&rc.field, &x, samples, rc.seed)?;
    let e = mvee_centered(&pts, tolerance)?;
    let slack = 10.0 * tolerance;
    let containment = Containment {
        excess: e.containment_excess(&pts),
        contains_all: e.contains_all(&pts, slack),
        tight: e.is_tight(&pts, slack),
        slack,
    };
    let proportionality = match &averaged {
        Some(b) => Some(proportionality_check(&e.a, b, PROPORTIONALITY_TOLERANCE)?),
        None => None,
    };
    Ok(LoewnerBody {
        metric: rc.field.name(),
        x,
        samples,
        tolerance,
        seed: rc.seed,
        a: e.a,
        iterations: e.iterations,
        support: e.support,
        dual_excess: e.dual_excess,
        containment,
        averaged_metric: averaged,
        proportionality,
    })
}

pub fn cmd_loewner(
    rc: &RunConfig,
    x: Option<&str>,
    samples: Option<usize>,
    tolerance: Option<f64>,
    sink: &mut Sink,
) -> Result<Outcome, CliError> {
    let x = rc.point(x)?;
    let averaged = if rc.dim() >= 2 {
        Some(averaged_metric(&rc.field, &x, &rc.quadrature(None, None)?, &rc.diff)?.b)
    } else {
        None
    };
    let body = loewner_body(rc, x, samples, tolerance, averaged)?;
    sink.json("loewner", &body)?;
    let ok = body.containment.contains_all && body.containment.tight;
    let mut summary = format!("{}: A = {:?}", rc.field.name(), body.a.rows());
    if let Some(p) = &body.proportionality {
        summary.push_str(&format!(", lambda = {:.6} (residual {:.3e})", p.lambda, p.residual));
    }
    Ok(Outcome {
        code: if ok { EXIT_OK } else { EXIT_FAILURE },
        summary,
    })
}

#[derive(Serialize)]
struct Check {
    name: &'static str,
    value: f64,
    tolerance: Option<f64>,
    passed: bool,
    /// Reported but not part of the exit code.
    informational: bool,
}

#[derive(Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
enum Section<T: Serialize> {
    Ok(T),
    NotApplicable { reason: String },
    Skipped,
}

#[derive(Serialize)]
struct MetrizationSection {
    b: SymmetricBilinearForm,
    diagnostics: QuadratureDiagnostics,
    compatibility: Compatibility,
}

#[derive(Serialize)]
struct ReportBody<'a> {
    metric: &'a str,
    dimension: usize,
    declared_class: DeclaredClass,
    seed: u64,
    diff: DiffSpec,
    x: Vec<f64>,
    validation: ValidationReport,
    classification: Option<ClassificationReport>,
    metrization: Section<MetrizationSection>,
    loewner: Section<LoewnerBody<'a>>,
    checks: Vec<Check>,
    aborted: Option<String>,
}

pub struct ReportArgs<'a> {
    pub x: Option<&'a str>,
    pub samples: Option<usize>,
    pub loewner_samples: Option<usize>,
}

/// validate, classify, metrize, loewner and the compatibility checks in one
/// document. Exit code: 1 when validation fails (the run stops there), when
/// the verdict is non_berwald, or when any non-informational check fails;
/// 3 when inconclusive. Proportionality is informational: it is only forced
/// when the holonomy is irreducible.
pub fn cmd_report(rc: &RunConfig, args: &ReportArgs, sink: &mut Sink) -> Result<Outcome, CliError> {
    let x = rc.point(args.x)?;
    let samples = args.samples.or(rc.file.validate.samples).unwrap_or(500);
    let validation = validate(&rc.field, samples, rc.seed);
    let mut body = ReportBody {
        metric: rc.field.name(),
        dimension: rc.dim(),
        declared_class: rc.field.declared_class(),
        seed: rc.seed,
        diff: rc.diff,
        x: x.clone(),
        validation,
        classification: None,
        metrization: Section::Skipped,
        loewner: Section::Skipped,
        checks: Vec::new(),
        aborted: None,
    };
    let passed = body.validation.passed();
    body.checks.push(Check {
        name: "validation",
        value: if passed { 0.0 } else { 1.0 },
        tolerance: None,
        passed,
        informational: false,
    });
    if !passed {
        body.aborted = Some("validation failed".into());
        let summary = validation_outcome(&body.validation).summary;
        sink.json("report", &body)?;
        return Ok(Outcome {
            code: EXIT_FAILURE,
            summary,
        });
    }

    let class = classify_berwald(&rc.field, &classify_options(rc, None, None), &rc.diff);
    let verdict = class.verdict;
    body.checks.push(Check {
        name: "berwald",
        value: class.max_curvature_norm,
        tolerance: Some(class.thresholds.curvature),
        passed: verdict == Verdict::Berwald,
        informational: false,
    });
    body.classification = Some(class);

    let result = report_sections(rc, &x, args, verdict, &mut body);
    if let Err(e) = result {
        body.aborted = Some(e.to_string());
        sink.json("report", &body)?;
        return Err(e);
    }

    let all = body.checks.iter().all(|c| c.passed || c.informational);
    let code = match verdict {
        Verdict::Inconclusive => EXIT_INCONCLUSIVE,
        _ if all => EXIT_OK,
        _ => EXIT_FAILURE,
    };
    let failed: Vec<&str> = body.checks.iter().filter(|c| !c.passed && !c.informational).map(|c| c.name).collect();
    let summary = if failed.is_empty() {
        format!("{}: {}, all checks pass", rc.field.name(), verdict_name(verdict))
    } else {
        format!("{}: {}, failed {}", rc.field.name(), verdict_name(verdict), failed.join(", "))
    };
    sink.json("report", &body)?;
    Ok(Outcome { code, summary })
}

fn report_sections<'a>(
    rc: &'a RunConfig,
    x: &[f64],
    args: &ReportArgs,
    verdict: Verdict,
    body: &mut ReportBody<'a>,
) -> Result<(), CliError> {
    let mut averaged = None;
    if rc.dim() < 2 {
        body.metrization = Section::NotApplicable {
            reason: "averaged metric needs dimension >= 2".into(),
        };
    } else if verdict != Verdict::Berwald {
        body.metrization = Section::NotApplicable {
            reason: format!("classifier verdict is {}", verdict_name(verdict)),
        };
    } else {
        let quad = rc.quadrature(None, None)?;
        let avg = averaged_metric(&rc.field, x, &quad, &rc.diff)?;
        body.checks.push(Check {
            name: "quadrature_spread",
            value: avg.diagnostics.spread,
            tolerance: Some(avg.diagnostics.tolerance),
            passed: !avg.diagnostics.flagged,
            informational: false,
        });
        let compat = compatibility(rc, x, quad)?;
        if let Compatibility::Ok {
            levi_civita_vs_extracted,
            metric_compatibility_residual,
            tolerance,
            ..
        } = &compat
        {
            body.checks.push(Check {
                name: "levi_civita_vs_extracted",
                value: *levi_civita_vs_extracted,
                tolerance: Some(*tolerance),
                passed: *levi_civita_vs_extracted <= *tolerance,
                informational: false,
            });
            body.checks.push(Check {
                name: "metric_compatibility",
                value: *metric_compatibility_residual,
                tolerance: Some(*tolerance),
                passed: *metric_compatibility_residual <= *tolerance,
                informational: false,
            });
        }
        averaged = Some(avg.b.clone());
        body.metrization = Section::Ok(MetrizationSection {
            b: avg.b,
            diagnostics: avg.diagnostics,
            compatibility: compat,
        });
    }

    let lw = loewner_body(rc, x.to_vec(), args.loewner_samples, None, averaged)?;
    body.checks.push(Check {
        name: "loewner_containment",
        value: lw.containment.excess,
        tolerance: Some(lw.containment.slack),
        passed: lw.containment.contains_all,
        informational: false,
    });
    body.checks.push(Check {
        name: "loewner_tightness",
        value: lw.containment.excess,
        tolerance: Some(lw.containment.slack),
        passed: lw.containment.tight,
        informational: false,
    });
    if let Some(p) = &lw.proportionality {
        body.checks.push(Check {
            name: "proportionality",
            value: p.residual,
            tolerance: Some(p.tolerance),
            passed: p.success,
            informational: true,
        });
    }
    body.loewner = Section::Ok(lw);
    Ok(())
}
