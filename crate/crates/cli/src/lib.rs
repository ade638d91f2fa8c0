//! Batch front-end for `liftlab-core`.

pub mod config;
pub mod report;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Result};
use liftlab_core::conformal::{self, AnalysisGrid, AnalysisOptions, ConformalReport, OmegaStats};
use liftlab_core::lie_calculus::LieOptions;
use liftlab_core::lift_fields::{catalog as fcat, Provenance};
use liftlab_core::manifold::catalog as mcat;
use liftlab_core::suites::{self, SuiteReport};
use serde_json::json;

use config::{ManifoldPlan, Plan, RunConfig, Target};
use report::Report;

pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_VIOLATION: i32 = 2;

#[derive(Clone, Debug)]
pub struct Outcome {
    pub report: Report,
    pub report_path: PathBuf,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        self.report.exit_code
    }
}

fn load(config_path: &Path) -> Result<(RunConfig, PathBuf)> {
    let cfg = RunConfig::load(config_path)?;
    let dir = config_path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((cfg, dir))
}

fn check_outputs(config_path: &Path, plan: &Plan) -> Result<()> {
    let cfg = config_path.canonicalize()?;
    let same = |p: &Path| p.canonicalize().is_ok_and(|p| p == cfg);
    if same(&plan.report_path) || plan.csv_path.as_deref().is_some_and(same) {
        bail!("output path would overwrite the config {}", config_path.display());
    }
    Ok(())
}

/// Classify every configured field and run the suites listed in the config.
pub fn cmd_analyze(config_path: &Path, perturb: bool) -> Result<Outcome> {
    let (cfg, dir) = load(config_path)?;
    let plan = cfg.resolve(&dir, &[])?;
    check_outputs(config_path, &plan)?;
    execute("analyze", cfg, plan, true, perturb)
}

/// Run the suites named on the command line in addition to those in the config.
pub fn cmd_verify(config_path: &Path, suite_names: &[String], perturb: bool) -> Result<Outcome> {
    let (cfg, dir) = load(config_path)?;
    let plan = cfg.resolve(&dir, suite_names)?;
    check_outputs(config_path, &plan)?;
    if plan.suites.is_empty() {
        bail!("no suites requested; pass --suite or list them under `suites`");
    }
    execute("verify", cfg, plan, false, perturb)
}

fn options(cfg: &RunConfig, perturb: bool) -> AnalysisOptions {
    AnalysisOptions {
        method: cfg.method,
        tolerances: cfg.tolerances,
        flow: cfg.oracle.analysis(),
        lie: LieOptions { perturb },
    }
}

fn execute(command: &str, cfg: RunConfig, plan: Plan, analyze: bool, perturb: bool) -> Result<Outcome> {
    let start = Instant::now();
    let opts = options(&cfg, perturb);
    let mut analyses = Vec::new();
    let mut suite_reports = Vec::new();
    let mut failures = Vec::new();
    for m in &plan.manifolds {
        let grid = AnalysisGrid::build(&m.spec, &cfg.grid)?;
        if analyze {
            for r in analyze_manifold(m, &plan, &cfg, &grid, &opts)? {
                if let Some(c) = r.cross_check.as_ref().filter(|c| !c.passed) {
                    let k = r.coeffs.map_or(String::new(), |k| format!(" {k}"));
                    failures.push(format!(
                        "{} on {}{k}: defect {:.3e}, |ΔΩ| {:.3e}",
                        r.field, r.manifold, c.max_defect, c.max_omega_diff
                    ));
                }
                analyses.push(r);
            }
        }
        for name in &plan.suites {
            suite_reports.push(run_suite(name, m, &plan, &cfg, &grid, &opts)?);
        }
    }
    let passed = failures.is_empty() && suite_reports.iter().all(|s| s.passed);
    let report = Report {
        schema: report::SCHEMA,
        engine_version: ENGINE_VERSION.to_string(),
        command: command.to_string(),
        perturb_closed_form: perturb,
        config: cfg,
        analyses,
        suites: suite_reports,
        cross_check_failures: failures,
        passed,
        exit_code: if passed { EXIT_OK } else { EXIT_VIOLATION },
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    report.write(&plan.report_path)?;
    if let Some(csv) = &plan.csv_path {
        report::write_csv(csv, &report.analyses)?;
    }
    Ok(Outcome { report, report_path: plan.report_path })
}

fn analyze_manifold(
    m: &ManifoldPlan,
    plan: &Plan,
    cfg: &RunConfig,
    grid: &AnalysisGrid,
    opts: &AnalysisOptions,
) -> Result<Vec<ConformalReport>> {
    let mut rho: BTreeMap<String, OmegaStats> = BTreeMap::new();
    let mut out = Vec::new();
    for t in &m.targets {
        match t {
            Target::Lift(l) => {
                let mut reps = conformal::classify_multi(l, &m.spec, &plan.coeffs, grid, opts)?;
                // The generating field, also for vertical lifts whose induced base field is zero.
                if let Provenance::Base(v) = &l.provenance {
                    let stats = match rho.get(&v.name) {
                        Some(s) => *s,
                        None => {
                            let s = conformal::analyze_base(v, &m.spec, &cfg.grid, &cfg.tolerances)?.omega_stats;
                            rho.insert(v.name.clone(), s);
                            s
                        }
                    };
                    for r in &mut reps {
                        r.base_rho = Some(stats);
                    }
                }
                out.extend(reps);
            }
            Target::Base(v) => out.push(conformal::analyze_base(v, &m.spec, &cfg.grid, &cfg.tolerances)?),
        }
    }
    Ok(out)
}

fn run_suite(
    name: &str,
    m: &ManifoldPlan,
    plan: &Plan,
    cfg: &RunConfig,
    grid: &AnalysisGrid,
    opts: &AnalysisOptions,
) -> Result<SuiteReport> {
    let spec = &m.spec;
    let st = &cfg.suite_tolerances;
    let (lifts, skipped): (Vec<_>, Vec<_>) = m.lifts().into_iter().partition(|l| l.kind.is_fiber_preserving());
    let result = match name {
        "lemma1" => suites::lemma1(spec, grid, st.lemma1),
        "lemma3-duality" => suites::lemma3_duality(spec, &lifts, grid, st.lemma3_duality),
        "lemma4-oracle" => {
            suites::lemma4_oracle(spec, &lifts, &plan.coeffs, grid, cfg.oracle.suite(), opts.lie, st.lemma4_oracle)
        }
        "eq1" => suites::eq1(spec, &m.base_fields, grid, st.eq1),
        "theorem1" => conformal::verify_theorem1(spec, &plan.coeffs, &m.base_fields, grid, opts),
        "theorem2" => conformal::verify_theorem2(spec, &plan.coeffs, &m.affine_fields, grid, opts),
        other => bail!("unknown suite `{other}`"),
    };
    let mut report = match result {
        Ok(r) => r,
        // Disagreement between the two evaluations is counter-evidence, not a config error.
        Err(e @ liftlab_core::Error::CrossCheck { .. }) => {
            let mut r = SuiteReport::new(name, &spec.name, opts.tolerances.cross_check_tol);
            r.violations.push(e.to_string());
            r.finish()
        }
        Err(e) => return Err(e.into()),
    };
    if report.checks == 0 && report.violations.is_empty() {
        report.notes.push(format!("no applicable fields on {}", spec.name));
    }
    if matches!(name, "lemma3-duality" | "lemma4-oracle") {
        for l in skipped {
            report.notes.push(format!("{}: not fiber preserving, skipped", l.name));
        }
    }
    Ok(report)
}

/// One JSON object per line: manifolds, base fields, affine fields, suites.
pub fn catalog_lines() -> Vec<serde_json::Value> {
    let mut out = Vec::new();
    for spec in mcat::all() {
        let metric: Vec<Vec<&str>> = spec.metric.iter().map(|r| r.iter().map(|e| e.source.as_str()).collect()).collect();
        out.push(json!({
            "type": "manifold",
            "name": spec.name,
            "dim": spec.dim,
            "metric": metric,
            "domain_hint": spec.domain_hint,
        }));
    }
    for f in fcat::FIELDS {
        out.push(json!({
            "type": "field",
            "manifold": f.manifold,
            "name": f.name,
            "V": f.components,
            "known_class": f.known_class,
        }));
    }
    for f in fcat::AFFINE {
        out.push(json!({
            "type": "affine_field",
            "manifold": f.manifold,
            "name": f.name,
            "alpha": f.alpha,
            "beta": f.beta,
            "horiz": f.horiz,
        }));
    }
    for s in suites::SUITE_NAMES {
        out.push(json!({"type": "suite", "name": s}));
    }
    out
}

pub fn cmd_catalog(mut w: impl Write) -> Result<()> {
    for line in catalog_lines() {
        writeln!(w, "{}", serde_json::to_string(&line)?)?;
    }
    Ok(())
}
