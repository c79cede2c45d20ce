//! Sampling-based checks of the Finsler and gauge axioms.
//!
//! Every check draws points from the field's chart box and random nonzero
//! directions. A failed check records the worst witness; nothing here is a
//! proof.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::diff::DiffSpec;
use crate::field::{DeclaredClass, FinslerField};

/// Relative tolerance of the homogeneity check.
pub const HOMOGENEITY_TOLERANCE: f64 = 1e-8;
/// Absolute slack of the subadditivity check.
pub const SUBADDITIVITY_SLACK: f64 = 1e-9;
/// Relative step-stability bound above which smoothness is flagged.
pub const SMOOTHNESS_WARNING: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AxiomStatus {
    Pass,
    Fail,
    Warn,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w: Option<Vec<f64>>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxiomCheck {
    pub axiom: String,
    pub status: AxiomStatus,
    pub samples: usize,
    pub max_violation: f64,
    pub witness: Option<Witness>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub metric: String,
    pub declared_class: DeclaredClass,
    pub samples: usize,
    pub seed: u64,
    pub region: crate::field::ChartBox,
    pub checks: Vec<AxiomCheck>,
}

impl ValidationReport {
    /// All checks pass; warnings do not count as failures.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != AxiomStatus::Fail)
    }

    pub fn check(&self, axiom: &str) -> Option<&AxiomCheck> {
        self.checks.iter().find(|c| c.axiom == axiom)
    }
}

struct Tracker {
    axiom: &'static str,
    samples: usize,
    worst: f64,
    witness: Option<Witness>,
    failed: bool,
}

impl Tracker {
    fn new(axiom: &'static str) -> Self {
        Tracker {
            axiom,
            samples: 0,
            worst: 0.0,
            witness: None,
            failed: false,
        }
    }

    /// Records `violation` (> 0 means broken); keeps the worst failing
    /// sample as witness.
    fn record(&mut self, violation: f64, failing: bool, witness: impl FnOnce() -> Witness) {
        self.samples += 1;
        let v = if violation.is_nan() { f64::INFINITY } else { violation };
        if failing && (!self.failed || v > self.worst) {
            self.witness = Some(witness());
        }
        self.failed |= failing;
        self.worst = self.worst.max(v);
    }

    fn finish(self, warn_only: bool) -> AxiomCheck {
        let status = match (self.failed, warn_only) {
            (false, _) => AxiomStatus::Pass,
            (true, true) => AxiomStatus::Warn,
            (true, false) => AxiomStatus::Fail,
        };
        AxiomCheck {
            axiom: self.axiom.into(),
            status,
            samples: self.samples,
            max_violation: self.worst,
            witness: if self.failed { self.witness } else { None },
        }
    }
}

fn random_direction<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let r = crate::tensor::norm(&v);
        if r > 1e-3 {
            // log-uniform magnitude in [0.1, 10]
            let scale = 10f64.powf(rng.random_range(-1.0..1.0));
            return v.into_iter().map(|c| c * scale / r).collect();
        }
    }
}

/// Runs the axiom checks appropriate to the field's declared class.
///
/// * `F1` smoothness, as finite-difference stability of the metric tensor
///   between the default step and its half (warning only);
/// * `F2` positive homogeneity, relative tolerance `1e-8`;
/// * `F3` positivity;
/// * `F4` positive definiteness of the metric tensor (Finsler class);
/// * `subadditivity` on random pairs (gauge class).
pub fn validate(field: &FinslerField, samples: usize, seed: u64) -> ValidationReport {
    let samples = samples.max(1);
    let n = field.dim();
    let region = field.chart().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = DiffSpec::default();
    let fine = spec.refined();
    let class = field.declared_class();

    let mut smooth = Tracker::new("F1_smoothness");
    let mut homog = Tracker::new("F2_homogeneity");
    let mut positive = Tracker::new("F3_positivity");
    let mut definite = Tracker::new("F4_positive_definite");
    let mut subadd = Tracker::new("subadditivity");

    for _ in 0..samples {
        let x = region.sample(&mut rng);
        let y = random_direction(&mut rng, n);
        let lambda = 10f64.powf(rng.random_range(-1.0..1.0));
        let w = random_direction(&mut rng, n);

        let fy = field.eval(&x, &y);
        let witness = |detail: String| Witness {
            x: x.clone(),
            y: y.clone(),
            w: None,
            detail,
        };

        match &fy {
            Ok(f) => positive.record(-f, *f <= 0.0, || witness(format!("F = {f:e}"))),
            Err(e) => positive.record(f64::INFINITY, true, || witness(e.to_string())),
        }

        let scaled: Vec<f64> = y.iter().map(|v| lambda * v).collect();
        match (&fy, &field.eval(&x, &scaled)) {
            (Ok(f), Ok(fl)) => {
                let fl = *fl;
                let rel = (fl - lambda * f).abs() / (lambda * f.abs()).max(1e-300);
                homog.record(rel, rel > HOMOGENEITY_TOLERANCE, || {
                    witness(format!("F(lambda y) = {fl:e}, lambda F(y) = {:e}, lambda = {lambda}", lambda * f))
                });
            }
            (Err(e), _) | (_, Err(e)) => homog.record(f64::INFINITY, true, || witness(e.to_string())),
        }

        let coarse = field.metric_tensor_unchecked(&x, &y, &spec);
        let refined = field.metric_tensor_unchecked(&x, &y, &fine);
        match (&coarse, &refined) {
            (Ok(a), Ok(b)) => {
                let rel = (a.matrix() - b.matrix()).amax() / (1.0 + a.matrix().amax());
                smooth.record(rel, rel > SMOOTHNESS_WARNING, || {
                    witness(format!("metric tensor changes by {rel:e} under step refinement"))
                });
            }
            (Err(e), _) | (_, Err(e)) => smooth.record(f64::INFINITY, true, || witness(e.to_string())),
        }

        if class == DeclaredClass::Finsler {
            match &coarse {
                Ok(g) => {
                    let min_ev = g.eigenvalues().first().copied().unwrap_or(0.0);
                    let failing = !g.is_positive_definite();
                    definite.record(-min_ev, failing, || witness(format!("smallest eigenvalue {min_ev:e}")));
                }
                Err(e) => definite.record(f64::INFINITY, true, || witness(e.to_string())),
            }
        }

        if class == DeclaredClass::Gauge {
            let sum: Vec<f64> = y.iter().zip(&w).map(|(a, b)| a + b).collect();
            let lhs = field.eval(&x, &sum);
            let rhs_w = field.eval(&x, &w);
            match (lhs, &fy, rhs_w) {
                (Ok(l), Ok(fa), Ok(fb)) => {
                    let excess = l - fa - fb;
                    subadd.record(excess, excess > SUBADDITIVITY_SLACK, || Witness {
                        x: x.clone(),
                        y: y.clone(),
                        w: Some(w.clone()),
                        detail: format!("F(v + w) - F(v) - F(w) = {excess:e}"),
                    });
                }
                (Err(e), _, _) | (_, _, Err(e)) => {
                    subadd.record(f64::INFINITY, true, || witness(e.to_string()))
                }
                (_, Err(e), _) => subadd.record(f64::INFINITY, true, || witness(e.to_string())),
            }
        }
    }

    let mut checks = vec![smooth.finish(true), homog.finish(false), positive.finish(false)];
    checks.push(if class == DeclaredClass::Finsler {
        definite.finish(false)
    } else {
        skipped("F4_positive_definite")
    });
    checks.push(if class == DeclaredClass::Gauge {
        subadd.finish(false)
    } else {
        skipped("subadditivity")
    });

    ValidationReport {
        metric: field.name().to_string(),
        declared_class: class,
        samples,
        seed,
        region,
        checks,
    }
}

fn skipped(axiom: &str) -> AxiomCheck {
    AxiomCheck {
        axiom: axiom.into(),
        status: AxiomStatus::Skipped,
        samples: 0,
        max_violation: 0.0,
        witness: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl;
    use crate::field::{registry, REGISTRY_NAMES};

    #[test]
    fn euclidean_passes() {
        let r = validate(&FinslerField::euclidean(2), 500, 1);
        assert!(r.passed(), "{r:?}");
        assert!(r.checks.iter().all(|c| c.status != AxiomStatus::Warn));
    }

    #[test]
    fn registry_passes() {
        for name in REGISTRY_NAMES {
            let r = validate(&registry(name).unwrap(), 200, 1);
            assert!(r.passed(), "{name}: {r:?}");
        }
    }

    #[test]
    fn sign_counterexample_fails_positivity() {
        let expr = dsl::parse("y1", 2).unwrap();
        let f = FinslerField::from_expression("bad", expr, DeclaredClass::PreFinsler);
        let r = validate(&f, 100, 3);
        assert!(!r.passed());
        let c = r.check("F3_positivity").unwrap();
        assert_eq!(c.status, AxiomStatus::Fail);
        let w = c.witness.as_ref().unwrap();
        assert!(w.y[0] <= 0.0);
    }

    #[test]
    fn deterministic_for_seed() {
        let f = registry("randers_curved").unwrap();
        assert_eq!(validate(&f, 50, 9), validate(&f, 50, 9));
    }

    #[test]
    fn strong_randers_form_is_rejected() {
        // |b| = 1.2 at x1 = 1: directions against b have F <= 0.
        let f = FinslerField::randers_curved(1.2)
            .with_chart(crate::field::ChartBox::cube(2, 1.5))
            .unwrap();
        let r = validate(&f, 500, 4);
        assert!(!r.passed());
        let pos = r.check("F3_positivity").unwrap();
        let pd = r.check("F4_positive_definite").unwrap();
        assert!(pos.status == AxiomStatus::Fail || pd.status == AxiomStatus::Fail);

        // Dense-scan oracle at the witness point: some direction gives F <= 0.
        let w = pos.witness.as_ref().or(pd.witness.as_ref()).unwrap();
        let found = (0..3600).any(|k| {
            let t = k as f64 * std::f64::consts::TAU / 3600.0;
            f.eval(&w.x, &[t.cos(), t.sin()]).unwrap() <= 0.0
        });
        assert!(found);
    }

    #[test]
    fn subadditivity_failure_for_nonconvex_gauge() {
        // (|y1|^(1/2) + |y2|^(1/2))^2 is 1-homogeneous, positive, not convex.
        let expr = dsl::parse("(sqrt(abs(y1)) + sqrt(abs(y2)))^2", 2).unwrap();
        let f = FinslerField::from_expression("nonconvex", expr, DeclaredClass::Gauge);
        let r = validate(&f, 500, 2);
        assert_eq!(r.check("subadditivity").unwrap().status, AxiomStatus::Fail);
    }
}
