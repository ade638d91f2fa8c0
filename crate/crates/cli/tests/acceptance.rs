//! Acceptance criteria. Runs without the libtest harness so every verdict line is printed.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;

use liftlab_core::conformal::{self, AnalysisGrid, AnalysisOptions, Classification, GridSpec};
use liftlab_core::expr;
use liftlab_core::flow_oracle::FlowOptions;
use liftlab_core::lie_calculus::{LieOptions, TensorField};
use liftlab_core::lift_fields::{self, catalog as fcat};
use liftlab_core::linalg;
use liftlab_core::manifold::{self, catalog as mcat};
use liftlab_core::suites;
use liftlab_core::tangent_bundle::{self, lift_metric, signature_classify, LiftMetricCoeffs, Signature, TMPoint};
use liftlab_core::ManifoldSpec;

type Verdict = Result<String, String>;

fn coeff_sets() -> Vec<LiftMetricCoeffs> {
    vec![
        LiftMetricCoeffs::new(1.0, 0.0, 1.0),
        LiftMetricCoeffs::new(1.0, 0.5, 1.0),
        LiftMetricCoeffs::new(2.0, 1.0, 3.0),
    ]
}

fn grid(spec: &ManifoldSpec, count: usize, seed: u64) -> AnalysisGrid {
    AnalysisGrid::build(spec, &GridSpec { count, seed, ..GridSpec::default() }).unwrap()
}

fn random_box(bounds: &[(f64, f64)], count: usize, seed: u64) -> Vec<Vec<f64>> {
    GridSpec { count, seed, ..GridSpec::default() }.sample(bounds).unwrap()
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok { Ok(()) } else { Err(msg()) }
}

fn oracle_equivalence() -> Verdict {
    let flow = FlowOptions { t_step: 2.5e-4, ..FlowOptions::default() };
    let (mut worst, mut checks) = (0.0f64, 0);
    for spec in mcat::all() {
        let fields = fcat::lifted_fields(&spec);
        let r = suites::lemma4_oracle(&spec, &fields, &coeff_sets(), &grid(&spec, 30, 101), flow, LieOptions::default(), 1e-5)
            .map_err(|e| e.to_string())?;
        ensure(r.checks == fields.len() * 30 * 3, || format!("{}: {} checks", spec.name, r.checks))?;
        ensure(r.passed, || format!("{}: {:?}", spec.name, r.violations.first()))?;
        worst = worst.max(r.worst_defect);
        checks += r.checks;
    }
    Ok(format!("{checks} comparisons, worst relative defect {worst:.2e} ≤ 1e-5"))
}

fn lemma1() -> Verdict {
    let mut worst = 0.0f64;
    for spec in [mcat::euclidean(2), mcat::polar2(), mcat::torus_flat2(), mcat::sphere2(1.0), mcat::halfplane2()] {
        let r = suites::lemma1(&spec, &grid(&spec, 20, 102), 1e-6).map_err(|e| e.to_string())?;
        ensure(r.passed, || format!("{}: {:?}", spec.name, r.violations.first()))?;
        worst = worst.max(r.worst_defect);
    }
    Ok(format!("worst bracket defect {worst:.2e} ≤ 1e-6, vertical brackets identically zero"))
}

fn theorem1() -> Verdict {
    let opts = AnalysisOptions::default();
    let mut instances = Vec::new();
    for spec in mcat::all() {
        let r = conformal::verify_theorem1(&spec, &coeff_sets(), &fcat::base_fields(&spec.name), &grid(&spec, 12, 103), &opts)
            .map_err(|e| e.to_string())?;
        ensure(r.passed, || format!("{}: {:?}", spec.name, r.violations))?;
        instances.extend(r.instances);
    }
    let find = |m: &'static str, f: &'static str| instances.iter().filter(move |i| i.manifold == m && i.field == f);
    let mut required = 0;
    for i in find("sphere2", "rotation^C")
        .chain(find("torus_flat2", "constant^V"))
        .chain(find("torus_flat2", "constant^H"))
    {
        ensure(i.classification == Classification::Killing, || format!("{} {:?}: {:?}", i.field, i.coeffs, i.classification))?;
        required += 1;
    }
    for i in find("euclidean2", "dilation^C") {
        let Classification::Homothetic { omega } = i.classification else {
            return Err(format!("flat dilation^C {:?}: {:?}", i.coeffs, i.classification));
        };
        ensure((omega - 1.0).abs() <= 1e-6, || format!("flat dilation^C Ω = {omega}"))?;
        required += 1;
    }
    ensure(required == 4 * 3, || format!("only {required} required instances found"))?;
    let vacuous = instances.iter().filter(|i| i.vacuous).count();
    Ok(format!("{} instances, 0 violations ({vacuous} vacuous), required positives present", instances.len()))
}

fn theorem1_contrapositive() -> Verdict {
    let spec = mcat::euclidean(2);
    let v = fcat::base_field("euclidean2", "conformal_z2").unwrap();
    let x = lift_fields::complete_lift(&v, &spec).unwrap();
    let r = conformal::classify(&x, &spec, &LiftMetricCoeffs::new(1.0, 0.5, 1.0), &grid(&spec, 16, 104), &AnalysisOptions::default())
        .map_err(|e| e.to_string())?;
    ensure(r.classification == Classification::NonConformal, || format!("{:?}", r.classification))?;
    ensure(r.max_residual >= 1e-3, || format!("max residual {}", r.max_residual))?;
    Ok(format!("non_conformal, max residual {:.3} ≥ 1e-3", r.max_residual))
}

fn theorem2() -> Verdict {
    let opts = AnalysisOptions::default();
    let mut n = 0;
    for spec in mcat::all() {
        let fields = fcat::affine_fields(&spec.name);
        if fields.is_empty() {
            continue;
        }
        let r = conformal::verify_theorem2(&spec, &coeff_sets(), &fields, &grid(&spec, 12, 105), &opts).map_err(|e| e.to_string())?;
        ensure(r.passed, || format!("{}: {:?}", spec.name, r.violations))?;
        for i in &r.instances {
            ensure(i.classification != Classification::ConformalInessential || i.omega_std < 1e-5, || {
                format!("{} {:?}: inessential with std {}", i.field, i.coeffs, i.omega_std)
            })?;
        }
        n += r.instances.len();
    }
    Ok(format!("{n} affine instances, none inessential with non-constant Ω"))
}

fn determinant_and_signature() -> Verdict {
    let specs = mcat::all();
    let units = random_box(&[(0.0, 1.0); 4], 100, 106);
    let coeffs = random_box(&[(0.1, 3.0), (-2.0, 2.0), (0.1, 3.0)], 100, 107);
    let mut worst = 0.0f64;
    for (k, (u, c)) in units.iter().zip(&coeffs).enumerate() {
        let spec = &specs[k % specs.len()];
        let n = spec.dim;
        let x: Vec<f64> = spec.sampling_box().iter().zip(u).map(|((l, h), t)| l + (0.02 + 0.96 * t) * (h - l)).collect();
        let y: Vec<f64> = u.iter().rev().take(n).map(|t| 2.0 * t - 1.0).collect();
        let p = TMPoint::new(x.clone(), y);
        let c = LiftMetricCoeffs::new(c[0], c[1], c[2]);
        let lm = lift_metric(spec, &c, &p).map_err(|e| e.to_string())?;
        let det_g = linalg::to_dmatrix(&spec.metric_generic(&x).unwrap()).determinant();
        let expect = c.discriminant().powi(n as i32) * det_g * det_g;
        for m in [&lm.adapted_blocks, &lm.coordinate_matrix] {
            worst = worst.max((m.determinant() - expect).abs() / expect.abs());
        }
    }
    ensure(worst <= 1e-10, || format!("determinant relative error {worst:.2e}"))?;
    for (c, sig) in [
        (LiftMetricCoeffs::new(1.0, 0.0, 1.0), Signature::Riemannian),
        (LiftMetricCoeffs::new(0.0, 1.0, 0.0), Signature::Pseudo),
        (LiftMetricCoeffs::new(1.0, 1.0, 2.0), Signature::Riemannian),
    ] {
        ensure(signature_classify(&c) == sig, || format!("{c:?} classified {:?}", signature_classify(&c)))?;
        for spec in &specs {
            let n = spec.dim;
            for p in &grid(spec, 8, 108).points {
                let counts = lift_metric(spec, &c, p).map_err(|e| e.to_string())?.signature();
                let expect = if sig == Signature::Riemannian { (2 * n, 0, 0) } else { (n, n, 0) };
                ensure(counts == expect, || format!("{c:?} on {}: eigenvalue counts {counts:?}", spec.name))?;
            }
        }
    }
    let singular = LiftMetricCoeffs::new(1.0, 1.0, 1.0);
    ensure(signature_classify(&singular) == Signature::Singular, || "(1,1,1) not singular".into())?;
    let p = TMPoint::new(vec![0.1, 0.2], vec![0.3, 0.4]);
    ensure(lift_metric(&mcat::euclidean(2), &singular, &p).is_err(), || "(1,1,1) accepted".into())?;
    Ok(format!("worst det relative error {worst:.2e} ≤ 1e-10; signatures match eigenvalue counts; (1,1,1) rejected"))
}

fn eq1() -> Verdict {
    let mut worst = 0.0f64;
    for spec in mcat::all() {
        let fields = fcat::base_fields(&spec.name);
        let r = suites::eq1(&spec, &fields, &grid(&spec, 16, 109), 1e-9).map_err(|e| e.to_string())?;
        ensure(r.passed, || format!("{}: {:?}", spec.name, r.violations.first()))?;
        ensure(r.checks == fields.len() * 2 * 16, || format!("{}: {} checks", spec.name, r.checks))?;
        worst = worst.max(r.worst_defect);
    }
    // The connection difference must be a genuine nonzero (1,2) tensor for the check to bite.
    let spec = mcat::sphere2(1.0);
    let t = TensorField::ConnectionDifference(suites::rescaled_partner(&spec).unwrap());
    let v = fcat::base_field("sphere2", "tilt").unwrap();
    let val = liftlab_core::lie_calculus::base_lie_derivative(&v, &t, &spec, &[1.0, 0.5]).map_err(|e| e.to_string())?;
    ensure(val.max_abs() > 1e-3, || "connection difference Lie derivative vanishes".into())?;
    Ok(format!("worst partial/covariant gap {worst:.2e} ≤ 1e-9 on metrics and connection differences"))
}

fn chart_rule() -> Verdict {
    let from = [expr::parse("x1*cos(x2)", 2).unwrap(), expr::parse("x1*sin(x2)", 2).unwrap()];
    let polar = mcat::polar2();
    let mut worst = 0.0f64;
    for z in random_box(&[(0.5, 2.5), (-3.0, 3.0), (-1.0, 1.0), (-1.0, 1.0)], 50, 110) {
        let p = TMPoint::from_z(&z);
        let n = tangent_bundle::chart_transform_n(&mcat::euclidean(2), &polar, &from, &p).map_err(|e| e.to_string())?;
        let native = tangent_bundle::nonlinear_connection(&polar, &p).map_err(|e| e.to_string())?;
        worst = worst.max((n - native).abs().max());
    }
    ensure(worst <= 1e-8, || format!("worst N mismatch {worst:.2e}"))?;
    Ok(format!("50 samples, worst N mismatch {worst:.2e} ≤ 1e-8"))
}

fn curvature() -> Verdict {
    let mut worst_k = 0.0f64;
    for (s, kappa) in [(mcat::sphere2(1.0), 1.0), (mcat::halfplane2(), -1.0)] {
        for x in random_box(&s.sampling_box(), 40, 111) {
            let c = manifold::curvature(&s, &x).map_err(|e| e.to_string())?;
            let k = c.sectional.ok_or("no sectional curvature in dimension 2")?;
            worst_k = worst_k.max((k - kappa).abs());
        }
    }
    ensure(worst_k <= 1e-7, || format!("sectional curvature off by {worst_k:.2e}"))?;
    let mut worst_flat = 0.0f64;
    for s in [mcat::euclidean(1), mcat::euclidean(2), mcat::euclidean(3), mcat::polar2(), mcat::torus_flat2()] {
        for x in random_box(&s.sampling_box(), 40, 112) {
            worst_flat = worst_flat.max(manifold::curvature(&s, &x).map_err(|e| e.to_string())?.max_abs());
        }
    }
    ensure(worst_flat <= 1e-9, || format!("flat ‖K‖ = {worst_flat:.2e}"))?;
    Ok(format!("|K − κ| ≤ {worst_k:.2e}, flat ‖K‖ ≤ {worst_flat:.2e}"))
}

fn run_analyze(config: &Path, perturb: bool) -> (i32, serde_json::Value) {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_liftlab"));
    cmd.arg("analyze").arg(config);
    if perturb {
        cmd.arg("--perturb-closed-form");
    }
    let out = cmd.output().unwrap();
    let mut report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(config.parent().unwrap().join("report.json")).unwrap()).unwrap();
    report.as_object_mut().unwrap().remove("wall_time_s");
    (out.status.code().unwrap(), report)
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("config.json");
    std::fs::write(
        &config,
        r#"{"manifold": {"catalog": "sphere2"},
            "fields": [{"kind": "complete", "catalog": "rotation"}, {"kind": "vertical", "catalog": "tilt"}],
            "metric_coeffs": {"a": 1, "b": 0.5, "c": 1},
            "grid": {"mode": "random", "count": 16, "seed": 42},
            "suites": ["theorem1"],
            "outputs": {"report_path": "report.json"}}"#,
    )
    .unwrap();
    let (code_a, a) = run_analyze(&config, false);
    let (code_b, b) = run_analyze(&config, false);
    ensure(code_a == 0 && code_b == 0, || format!("exit codes {code_a}, {code_b}"))?;
    ensure(a == b, || "reports differ".into())?;
    let (code_p, p) = run_analyze(&config, true);
    ensure(code_p == 2, || format!("fault injection exit code {code_p}"))?;
    ensure(!p["cross_check_failures"].as_array().unwrap().is_empty(), || "no cross-check failure recorded".into())?;
    Ok("identical reports across runs; --perturb-closed-form flips exit 0 → 2".into())
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 10] = [
        ("oracle equivalence", oracle_equivalence),
        ("lemma 1 brackets", lemma1),
        ("theorem 1 suite", theorem1),
        ("theorem 1 contrapositive", theorem1_contrapositive),
        ("theorem 2 suite", theorem2),
        ("determinant identity and signature", determinant_and_signature),
        ("eq1 partial/covariant equivalence", eq1),
        ("chart rule for N", chart_rule),
        ("curvature of catalog manifolds", curvature),
        ("determinism and fault injection", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = std::time::Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            Err(e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Ok(msg) => println!("PASS criterion {}: {name}: {msg} ({secs:.1}s)", i + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {}: {name}: {msg} ({secs:.1}s)", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
