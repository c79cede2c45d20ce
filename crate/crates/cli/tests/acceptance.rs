//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
//! criterion fails. Runs without the libtest harness so the lines always
//! show up in `cargo test` output.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use finsler_kit::connection::{
    berwald_coefficients, classify_berwald, extract_base_connection, nonlinear_connection, spray_coefficients,
    BaseConnection, ClassifyOptions, Verdict,
};
use finsler_kit::dsl;
use finsler_kit::field::{registry, ChartBox, DeclaredClass, REGISTRY_NAMES};
use finsler_kit::loewner::{
    default_sample_count, loewner_metric, mvee_centered, proportionality_check, sample_indicatrix, DEFAULT_TOLERANCE,
};
use finsler_kit::metrization::{
    averaged_metric, ball_sphere_consistency, euler_lagrange_residual, levi_civita, AveragedMetricField,
    QuadratureSpec,
};
use finsler_kit::transport::{
    holonomy_loop, integrate_geodesic, norm_preservation_residual, parallel_transport, ConnectionSource, CurveSpec,
    Integration, Trajectory,
};
use finsler_kit::{Christoffel, DiffSpec, FinslerField};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn spec() -> DiffSpec {
    DiffSpec::default()
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_vec(r: &mut ChaCha8Rng, n: usize, half_width: f64) -> Vec<f64> {
    (0..n).map(|_| r.random_range(-half_width..half_width)).collect()
}

fn random_direction(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let v = random_vec(r, n, 1.0);
        let len = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if len > 0.2 && len <= 1.0 {
            return v.iter().map(|c| c / len).collect();
        }
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt()
}

fn corpus() -> Vec<FinslerField> {
    REGISTRY_NAMES.iter().map(|n| registry(n).unwrap()).collect()
}

fn berwald_corpus() -> Vec<FinslerField> {
    ["euclidean2", "quartic2", "randers_flat", "conformal_exp", "sphere_stereo"]
        .iter()
        .map(|n| registry(n).unwrap())
        .collect()
}

/// Hessian of `F^2 / 2` for `F = (y1^4 + y2^4)^{1/4}`.
fn quartic_metric(y: &[f64]) -> DMatrix<f64> {
    let s: f64 = y.iter().map(|v| v.powi(4)).sum();
    DMatrix::from_fn(2, 2, |i, j| {
        let diag = if i == j { 3.0 * y[i] * y[i] / s.sqrt() } else { 0.0 };
        diag - 2.0 * y[i].powi(3) * y[j].powi(3) / s.powf(1.5)
    })
}

fn sheared_minkowski() -> FinslerField {
    let src = "(y1^4 + y1^2*(x1*y1 + y2)^2 + (x1*y1 + y2)^4)^0.25";
    FinslerField::from_expression("sheared", dsl::parse(src, 2).unwrap(), DeclaredClass::Finsler)
        .with_chart(ChartBox::cube(2, 1.0))
        .unwrap()
}

fn exe() -> &'static str {
    env!("CARGO_BIN_EXE_finsler-kit")
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run_cli(args: &[&str], out: &Path) -> Result<i32, String> {
    let o = Command::new(exe())
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .env_remove("FINSLER_KIT_OUT_DIR")
        .output()
        .map_err(|e| e.to_string())?;
    o.status.code().ok_or_else(|| "killed by signal".to_string())
}

fn axiom_suite() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let start = Instant::now();
    for name in REGISTRY_NAMES {
        let code = run_cli(&["validate", "--metric", name, "--samples", "500", "--seed", "1"], dir.path())?;
        ensure(code == 0, || format!("{name} exited {code}"))?;
    }
    let bad = fixture("bad_negative.toml");
    let code = run_cli(
        &["validate", "--metric-file", bad.to_str().unwrap(), "--samples", "500", "--seed", "1"],
        dir.path(),
    )?;
    ensure(code == 1, || format!("counterexample exited {code}"))?;
    let text = std::fs::read_to_string(dir.path().join("validate.json")).map_err(|e| e.to_string())?;
    let doc: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let f3 = doc["body"]["checks"]
        .as_array()
        .and_then(|c| c.iter().find(|c| c["axiom"] == "F3_positivity"))
        .ok_or("no F3 check")?;
    ensure(f3["status"] == "fail" && f3["witness"].is_object(), || format!("F3 entry {f3}"))?;
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 5.0, || format!("runtime {secs:.2} s >= 5 s"))?;
    Ok(format!("6 registry metrics pass, counterexample fails F3 with witness, {secs:.2} s"))
}

fn metric_tensor_oracle() -> Outcome {
    let q = registry("quartic2").unwrap();
    let g = q.metric_tensor(&[0.3, -0.2], &[1.0, 1.0], &spec()).map_err(|e| e.to_string())?;
    let s = 2f64.sqrt();
    let want = DMatrix::from_row_slice(2, 2, &[s, -1.0 / s, -1.0 / s, s]);
    let err_q = (g.matrix() - &want).amax();
    ensure(err_q <= 1e-4, || format!("quartic g(1,1) off by {err_q:e}"))?;
    // closed form away from the axes as a second oracle
    let y = [0.6, -0.8];
    let g = q.metric_tensor(&[0.0, 0.0], &y, &spec()).map_err(|e| e.to_string())?;
    let err_c = (g.matrix() - quartic_metric(&y)).amax();
    ensure(err_c <= 1e-4, || format!("quartic closed form off by {err_c:e}"))?;

    let mut r = rng(1);
    let mut worst: f64 = 0.0;
    for f in corpus() {
        let region = f.chart().shrunk(0.9);
        for _ in 0..200 {
            let x = region.sample(&mut r);
            let scale = r.random_range(0.2..3.0);
            let y: Vec<f64> = random_direction(&mut r, 2).iter().map(|c| c * scale).collect();
            let g = f.metric_tensor(&x, &y, &spec()).map_err(|e| e.to_string())?;
            let f2 = f.norm_squared(&x, &y).map_err(|e| e.to_string())?;
            let rel = (g.quadratic(&y) - f2).abs() / f2;
            worst = worst.max(rel);
            ensure(rel <= 1e-5, || format!("{} at {x:?}, {y:?}: relative {rel:e}", f.name()))?;
        }
    }
    Ok(format!("quartic g(1,1) error {err_q:.1e}; max |g(y,y) - F^2| / F^2 = {worst:.1e} over 1200 samples"))
}

fn connection_oracle() -> Outcome {
    let f = registry("conformal_exp").unwrap();
    // g = e^{2 x1} delta: Gamma^1_11 = 1, Gamma^1_22 = -1, Gamma^2_12 = Gamma^2_21 = 1.
    let gamma = Christoffel::from_fn(2, |i, j, k| match (i, j, k) {
        (0, 0, 0) => 1.0,
        (0, 1, 1) => -1.0,
        (1, 0, 1) | (1, 1, 0) => 1.0,
        _ => 0.0,
    });
    let mut r = rng(3);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let x = random_vec(&mut r, 2, 1.0);
        let y = random_direction(&mut r, 2);
        let s = spray_coefficients(&f, &x, &y, &spec()).map_err(|e| e.to_string())?;
        let want = gamma.contract(&y, &y);
        for i in 0..2 {
            worst = worst.max((s[i] - 0.5 * want[i]).abs());
        }
        let n = nonlinear_connection(&f, &x, &y, &spec()).map_err(|e| e.to_string())?;
        worst = worst.max((n - gamma.contract_last(&y)).amax());
        let b = berwald_coefficients(&f, &x, &y, &spec()).map_err(|e| e.to_string())?;
        worst = worst.max(b.max_abs_diff(&gamma));
    }
    ensure(worst <= 1e-4, || format!("max deviation {worst:e}"))?;
    Ok(format!("spray, N and Berwald coefficients within {worst:.1e} at 10 samples"))
}

fn confusion_matrix() -> Outcome {
    let start = Instant::now();
    let expected = [
        ("euclidean2", Verdict::Berwald),
        ("conformal_exp", Verdict::Berwald),
        ("sphere_stereo", Verdict::Berwald),
        ("quartic2", Verdict::Berwald),
        ("randers_flat", Verdict::Berwald),
        ("randers_curved", Verdict::NonBerwald),
    ];
    for (name, want) in expected {
        let f = registry(name).unwrap();
        for s in [spec(), spec().refined()] {
            let rep = classify_berwald(&f, &ClassifyOptions::default(), &s);
            ensure(rep.verdict == want, || {
                format!("{name} at step {}: {:?}, expected {want:?}", s.step, rep.verdict)
            })?;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 60.0, || format!("runtime {secs:.1} s >= 60 s"))?;
    Ok(format!("0 misclassifications at default and refined steps, {secs:.2} s"))
}

fn norm_preservation() -> Outcome {
    let mut r = rng(7);
    let curves: Vec<CurveSpec> = (0..3)
        .map(|_| CurveSpec::Polyline {
            vertices: (0..3).map(|_| random_vec(&mut r, 2, 0.7)).collect(),
        })
        .collect();
    let mut worst: f64 = 0.0;
    for f in corpus() {
        for c in &curves {
            let v0 = random_direction(&mut r, 2);
            let src = ConnectionSource::Canonical { field: &f, spec: spec() };
            let res = norm_preservation_residual(&f, &src, c, &v0, 1e-3).map_err(|e| e.to_string())?;
            worst = worst.max(res);
            ensure(res <= 1e-6, || format!("{}: residual {res:e}", f.name()))?;
        }
    }

    // Unit-speed-4 great circle on the stereographic sphere: exact endpoint
    // (cos 8, sin 8) at T = 2.
    let sphere = registry("sphere_stereo").unwrap();
    let src = ConnectionSource::Canonical {
        field: &sphere,
        spec: spec(),
    };
    let run = |h: f64| {
        integrate_geodesic(&src, &[1.0, 0.0], &[0.0, 4.0], 2.0, &Integration::with_step(h))
            .map(|t| t.end_point().to_vec())
            .map_err(|e| e.to_string())
    };
    let reference = run(1e-4)?;
    let steps = [1e-2, 5e-3, 2.5e-3];
    let mut errs = Vec::new();
    for h in steps {
        errs.push(dist(&run(h)?, &reference));
    }
    let lx: Vec<f64> = steps.iter().map(|h| h.ln()).collect();
    let ly: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let m = steps.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / m, ly.iter().sum::<f64>() / m);
    let slope = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>()
        / lx.iter().map(|a| (a - mx).powi(2)).sum::<f64>();
    ensure((slope - 4.0).abs() <= 0.5, || format!("order {slope:.3}, errors {errs:?}"))?;
    Ok(format!("max norm drift {worst:.1e} (18 runs); RK4 order {slope:.3}"))
}

fn holonomy() -> Outcome {
    let sphere = registry("sphere_stereo").unwrap();
    let base = BaseConnection::extracted(&sphere, spec());
    let mut parts = Vec::new();
    for (s, tol) in [(0.1, 0.2), (0.05, 0.1)] {
        let m = holonomy_loop(&base, &CurveSpec::square(&[0.0, 0.0], s), 1e-2).map_err(|e| e.to_string())?;
        let angle = m[(1, 0)].atan2(m[(0, 0)]);
        let want = 4.0 * s * s;
        let rel = (angle - want).abs() / want;
        ensure(rel <= tol, || format!("s = {s}: angle {angle:e} vs {want:e}"))?;
        parts.push(format!("s={s}: {:.2}% off", 100.0 * rel));
    }
    let conf = registry("conformal_exp").unwrap();
    let cb = BaseConnection::extracted(&conf, spec());
    let loops = [
        CurveSpec::square(&[0.2, -0.3], 0.5),
        CurveSpec::Circle {
            center: vec![0.0, 0.0],
            radius: 0.7,
        },
    ];
    let mut worst: f64 = 0.0;
    for l in &loops {
        let m = holonomy_loop(&cb, l, 1e-2).map_err(|e| e.to_string())?;
        worst = worst.max((m - DMatrix::<f64>::identity(2, 2)).amax());
    }
    ensure(worst <= 1e-5, || format!("conformal holonomy deviates by {worst:e}"))?;
    parts.push(format!("conformal loops within {worst:.1e} of identity"));
    Ok(parts.join("; "))
}

fn averaged_metric_checks() -> Outcome {
    let start = Instant::now();
    let mut r = rng(21);
    let mut worst_n: f64 = 0.0;
    let riemannian = [
        FinslerField::euclidean(2),
        FinslerField::conformal_exp(2),
        FinslerField::sphere_stereo(2),
        FinslerField::euclidean(3),
        FinslerField::conformal_exp(3),
        FinslerField::sphere_stereo(3),
    ];
    for f in &riemannian {
        let n = f.dim();
        for _ in 0..3 {
            let x = random_vec(&mut r, n, 1.0);
            let b = averaged_metric(f, &x, &QuadratureSpec::default_for(n), &spec()).map_err(|e| e.to_string())?;
            let g = f.metric_tensor(&x, &random_direction(&mut r, n), &spec()).map_err(|e| e.to_string())?;
            let want = g.matrix() * n as f64;
            let rel = (b.b.matrix() - &want).amax() / want.amax();
            worst_n = worst_n.max(rel);
            ensure(rel <= 1e-4, || format!("{} (n = {n}) at {x:?}: {rel:e}", f.name()))?;
        }
    }

    let q = QuadratureSpec::default_for(2);
    let quartic = registry("quartic2").unwrap();
    let randers = registry("randers_flat").unwrap();
    let sheared = sheared_minkowski();
    let cases: Vec<(&FinslerField, Vec<f64>, Box<dyn Fn(&[f64]) -> f64 + Sync>)> = vec![
        (&quartic, vec![0.0, 0.0], Box::new(|y: &[f64]| quartic_metric(y)[(0, 0)])),
        (&randers, vec![0.2, 0.1], Box::new(|y: &[f64]| y[0] * y[0] / (y[0] * y[0] + y[1] * y[1]))),
        (&sheared, vec![0.4, 0.0], Box::new(|y: &[f64]| (y[0] * y[1]).atan2(y[0] * y[0] + 0.5 * y[1] * y[1]))),
    ];
    let mut worst_z: f64 = 0.0;
    for (k, (f, x, h)) in cases.into_iter().enumerate() {
        let bs = ball_sphere_consistency(f, &x, h, &q, 400_000, 100 + k as u64).map_err(|e| e.to_string())?;
        let z = bs.discrepancy(2);
        worst_z = worst_z.max(z);
        ensure(z <= 3.0, || format!("{}: {z:.2} standard errors", f.name()))?;
    }

    let mut worst_lc: f64 = 0.0;
    for f in berwald_corpus() {
        let am = AveragedMetricField::new(&f, q, spec());
        for _ in 0..2 {
            let x = f.chart().shrunk(0.4).sample(&mut r);
            let lc = levi_civita(&am, &x, &spec()).map_err(|e| e.to_string())?;
            let ex = extract_base_connection(&f, &x, &spec()).map_err(|e| e.to_string())?;
            let d = lc.max_abs_diff(&ex);
            worst_lc = worst_lc.max(d);
            ensure(d <= 1e-3, || format!("{} at {x:?}: {d:e}", f.name()))?;
        }
    }

    let mut worst_p: f64 = 0.0;
    for f in berwald_corpus() {
        let base = BaseConnection::extracted(&f, spec());
        let src = ConnectionSource::Base(&base);
        let region = f.chart().shrunk(0.4);
        for _ in 0..2 {
            let (p, qq) = (region.sample(&mut r), region.sample(&mut r));
            let seg = CurveSpec::Segment {
                from: p.clone(),
                to: qq.clone(),
            };
            let opts = Integration::with_step(1e-2);
            let mut cols = Vec::new();
            for e in [[1.0, 0.0], [0.0, 1.0]] {
                cols.push(
                    parallel_transport(&src, &seg, &e, &opts)
                        .map_err(|e| e.to_string())?
                        .end_vector()
                        .to_vec(),
                );
            }
            let pm = DMatrix::from_fn(2, 2, |i, j| cols[j][i]);
            let bp = averaged_metric(&f, &p, &q, &spec()).map_err(|e| e.to_string())?.b;
            let bq = averaged_metric(&f, &qq, &q, &spec()).map_err(|e| e.to_string())?.b;
            let d = (bq.pull_back(&pm).matrix() - bp.matrix()).amax() / (1.0 + bp.matrix().amax());
            worst_p = worst_p.max(d);
            ensure(d <= 1e-3, || format!("{}: parallel invariance off by {d:e}", f.name()))?;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 120.0, || format!("runtime {secs:.1} s >= 120 s"))?;
    Ok(format!(
        "b = n g within {worst_n:.1e}; ball/sphere within {worst_z:.2} SE; LC vs extracted {worst_lc:.1e}; \
         parallel invariance {worst_p:.1e}; {secs:.1} s"
    ))
}

fn loewner_checks() -> Outcome {
    let tol = DEFAULT_TOLERANCE;
    let quartic = registry("quartic2").unwrap();
    let a = loewner_metric(&quartic, &[0.0, 0.0], default_sample_count(2), tol, 1).map_err(|e| e.to_string())?;
    let want = DMatrix::<f64>::identity(2, 2) * 0.5f64.sqrt();
    let err_q = (a.matrix() - want).amax();
    ensure(err_q <= 1e-3, || format!("quartic g_L off by {err_q:e}"))?;

    for f in corpus() {
        let x = f.chart().shrunk(0.3).lower.clone();
        let pts = sample_indicatrix(&f, &x, default_sample_count(2), 1).map_err(|e| e.to_string())?;
        let e = mvee_centered(&pts, tol).map_err(|e| e.to_string())?;
        ensure(e.contains_all(&pts, 10.0 * tol) && e.is_tight(&pts, 10.0 * tol), || {
            format!("{}: containment/tightness probe failed", f.name())
        })?;
    }

    let mut r = rng(3);
    let mut worst_eq: f64 = 0.0;
    let randers = registry("randers_flat").unwrap();
    let pts = sample_indicatrix(&randers, &[0.0, 0.0], 256, 1).map_err(|e| e.to_string())?;
    let base_a = mvee_centered(&pts, tol).map_err(|e| e.to_string())?.a;
    for _ in 0..3 {
        let phi = loop {
            let m = DMatrix::from_fn(2, 2, |_, _| r.random_range(-2.0..2.0f64));
            if m.determinant().abs() > 0.3 {
                break m;
            }
        };
        let mapped: Vec<Vec<f64>> = pts
            .iter()
            .map(|p| (&phi * DVector::from_column_slice(p)).as_slice().to_vec())
            .collect();
        let got = mvee_centered(&mapped, tol).map_err(|e| e.to_string())?.a;
        let inv = phi.clone().try_inverse().ok_or("singular map")?;
        let want = inv.transpose() * base_a.matrix() * &inv;
        let d = (got.matrix() - &want).amax() / (1.0 + want.amax());
        worst_eq = worst_eq.max(d);
        ensure(d <= 1e-4, || format!("equivariance off by {d:e}"))?;
    }

    let quad = QuadratureSpec::default_for(2);
    let x = [0.2, 0.1];
    let mut lambdas = Vec::new();
    for name in ["euclidean2", "conformal_exp", "sphere_stereo", "quartic2"] {
        let f = registry(name).unwrap();
        let gl = loewner_metric(&f, &x, 256, tol, 1).map_err(|e| e.to_string())?;
        let b = averaged_metric(&f, &x, &quad, &spec()).map_err(|e| e.to_string())?.b;
        let p = proportionality_check(&gl, &b, 1e-3).map_err(|e| e.to_string())?;
        ensure(p.success, || format!("{name}: not proportional ({p:?})"))?;
        if name != "quartic2" {
            ensure((p.lambda - 0.5).abs() <= 1e-3, || format!("{name}: lambda {} != 1/2", p.lambda))?;
        }
        lambdas.push(format!("{name} {:.4}", p.lambda));
    }
    Ok(format!(
        "quartic g_L error {err_q:.1e}; containment/tightness on 6 metrics; equivariance {worst_eq:.1e}; lambda: {}",
        lambdas.join(", ")
    ))
}

fn euler_lagrange() -> Outcome {
    let f = registry("randers_flat").unwrap();
    // The averaged metric of randers_flat is constant, so its geodesics are
    // straight lines.
    let quad = QuadratureSpec::default_for(2);
    let b0 = averaged_metric(&f, &[-0.8, 0.5], &quad, &spec()).map_err(|e| e.to_string())?.b;
    let b1 = averaged_metric(&f, &[0.7, -0.9], &quad, &spec()).map_err(|e| e.to_string())?.b;
    ensure((b0.matrix() - b1.matrix()).amax() <= 1e-10, || "averaged metric not constant".into())?;

    let samples = 41;
    let times: Vec<f64> = (0..samples).map(|k| k as f64 / (samples - 1) as f64).collect();
    let mut worst_line: f64 = 0.0;
    let mut r = rng(9);
    for _ in 0..3 {
        let x0 = random_vec(&mut r, 2, 0.8);
        let v = random_vec(&mut r, 2, 0.8);
        let pts = times.iter().map(|t| vec![x0[0] + t * v[0], x0[1] + t * v[1]]).collect();
        let line = Trajectory::from_samples(times.clone(), pts, vec![v.clone(); samples]).map_err(|e| e.to_string())?;
        let res = euler_lagrange_residual(&f, &line, &spec()).map_err(|e| e.to_string())?;
        worst_line = worst_line.max(res);
        ensure(res <= 1e-4, || format!("straight line residual {res:e}"))?;
    }

    let pi = std::f64::consts::PI;
    let pts = times.iter().map(|t| vec![-0.5 + 0.8 * t, 0.2 + 0.3 * t + 0.1 * (pi * t).sin()]).collect();
    let vel = times.iter().map(|t| vec![0.8, 0.3 + 0.1 * pi * (pi * t).cos()]).collect();
    let bent = Trajectory::from_samples(times.clone(), pts, vel).map_err(|e| e.to_string())?;
    let res_bent = euler_lagrange_residual(&f, &bent, &spec()).map_err(|e| e.to_string())?;
    ensure(res_bent > 1e-2, || format!("perturbed curve residual only {res_bent:e}"))?;

    // The integrator agrees: a geodesic of the averaged metric's connection.
    let am: std::sync::Arc<dyn finsler_kit::MetricField> = std::sync::Arc::new(AveragedMetricField::new(&f, quad, spec()));
    let lc = BaseConnection::levi_civita(am, spec().nested());
    let geo = integrate_geodesic(
        &ConnectionSource::Base(&lc),
        &[-0.5, 0.2],
        &[0.8, 0.3],
        1.0,
        &Integration::with_step(5e-2),
    )
    .map_err(|e| e.to_string())?;
    let res_geo = euler_lagrange_residual(&f, &geo, &spec()).map_err(|e| e.to_string())?;
    ensure(res_geo <= 1e-4, || format!("integrated g_M geodesic residual {res_geo:e}"))?;
    Ok(format!(
        "straight lines {worst_line:.1e}, integrated geodesic {res_geo:.1e}, perturbed curve {res_bent:.2e}"
    ))
}

fn body_text(path: &Path) -> Result<String, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    let at = text.find("\n  \"body\": ").ok_or("no body field")?;
    Ok(text[at..].to_string())
}

fn determinism() -> Outcome {
    let cfg = fixture("quartic_report.toml");
    let (a, b) = (
        tempfile::tempdir().map_err(|e| e.to_string())?,
        tempfile::tempdir().map_err(|e| e.to_string())?,
    );
    for d in [&a, &b] {
        let code = run_cli(&["report", "--metric-file", cfg.to_str().unwrap()], d.path())?;
        ensure(code == 0, || format!("report exited {code}"))?;
    }
    let (ta, tb) = (body_text(&a.path().join("report.json"))?, body_text(&b.path().join("report.json"))?);
    ensure(ta == tb, || "report bodies differ".into())?;
    Ok(format!("two report runs, {} identical body bytes", ta.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("axiom suite", axiom_suite),
        ("metric-tensor oracle", metric_tensor_oracle),
        ("connection oracle", connection_oracle),
        ("classifier confusion matrix", confusion_matrix),
        ("norm preservation and RK4 order", norm_preservation),
        ("holonomy", holonomy),
        ("averaged metric", averaged_metric_checks),
        ("Loewner ellipsoid", loewner_checks),
        ("Euler-Lagrange residual", euler_lagrange),
        ("report determinism", determinism),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS {name}: {detail} [{secs:.1} s]", k + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name}: {detail} [{secs:.1} s]", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
