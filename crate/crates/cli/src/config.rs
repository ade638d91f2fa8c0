//! Run configuration as read from JSON, and its resolution into engine objects.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use liftlab_core::conformal::{GridSpec, Method, Tolerances};
use liftlab_core::flow_oracle::FlowOptions;
use liftlab_core::lift_fields::{self, catalog as fcat, AffineFiberField, BaseField, LiftField};
use liftlab_core::manifold::catalog as mcat;
use liftlab_core::suites;
use liftlab_core::{LiftMetricCoeffs, ManifoldSpec};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Absent means every catalog manifold.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifold: Option<ManifoldConfig>,
    /// Empty means every catalog field of each manifold.
    #[serde(default)]
    pub fields: Vec<FieldConfig>,
    #[serde(default)]
    pub metric_coeffs: CoeffsConfig,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub method: Method,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub suite_tolerances: SuiteTolerances,
    #[serde(default)]
    pub suites: Vec<String>,
    #[serde(default)]
    pub outputs: Outputs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ManifoldConfig {
    #[serde(rename_all = "snake_case")]
    Catalog {
        catalog: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        radius: Option<f64>,
    },
    Custom {
        #[serde(default = "custom_name")]
        name: String,
        dim: usize,
        metric: Vec<Vec<String>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        domain_hint: Option<Vec<(f64, f64)>>,
    },
}

fn custom_name() -> String {
    "custom".into()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Complete,
    Horizontal,
    Vertical,
    /// Analyze `V` on the base manifold only.
    Base,
    FiberPreserving,
    /// Explicit adapted components in `x` and `y`.
    Raw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub kind: FieldKind,
    /// Name of a catalog base field, or of a catalog affine field for `fiber_preserving`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub catalog: Option<String>,
    #[serde(rename = "V", default, skip_serializing_if = "Option::is_none")]
    pub v: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<Vec<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horiz: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vert: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CoeffsConfig {
    One(LiftMetricCoeffs),
    Many(Vec<LiftMetricCoeffs>),
}

impl Default for CoeffsConfig {
    fn default() -> Self {
        CoeffsConfig::Many(vec![
            LiftMetricCoeffs::new(1.0, 0.0, 1.0),
            LiftMetricCoeffs::new(1.0, 0.5, 1.0),
            LiftMetricCoeffs::new(2.0, 1.0, 3.0),
        ])
    }
}

impl CoeffsConfig {
    pub fn list(&self) -> Vec<LiftMetricCoeffs> {
        match self {
            CoeffsConfig::One(c) => vec![*c],
            CoeffsConfig::Many(v) => v.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub t_step: f64,
    pub steps: usize,
    /// Step used by the `lemma4-oracle` suite, which compares at a tighter tolerance.
    pub suite_t_step: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        let f = FlowOptions::default();
        Self {
            t_step: f.t_step,
            steps: f.steps,
            suite_t_step: 2.5e-4,
        }
    }
}

impl OracleConfig {
    pub fn analysis(&self) -> FlowOptions {
        FlowOptions { t_step: self.t_step, steps: self.steps }
    }

    pub fn suite(&self) -> FlowOptions {
        FlowOptions { t_step: self.suite_t_step, steps: self.steps }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteTolerances {
    pub lemma1: f64,
    pub lemma3_duality: f64,
    pub lemma4_oracle: f64,
    pub eq1: f64,
}

impl Default for SuiteTolerances {
    fn default() -> Self {
        Self {
            lemma1: 1e-6,
            lemma3_duality: 1e-9,
            lemma4_oracle: 1e-5,
            eq1: 1e-9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Outputs {
    pub report_path: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv_path: Option<PathBuf>,
}

impl Default for Outputs {
    fn default() -> Self {
        Self {
            report_path: "liftlab_report.json".into(),
            csv_path: None,
        }
    }
}

/// One configured field bound to a manifold.
#[derive(Clone, Debug)]
pub enum Target {
    Lift(LiftField),
    Base(BaseField),
}

#[derive(Clone, Debug)]
pub struct ManifoldPlan {
    pub spec: ManifoldSpec,
    pub targets: Vec<Target>,
    /// Generating base fields of configured lifts, for the theorem 1 and eq1 suites.
    pub base_fields: Vec<BaseField>,
    pub affine_fields: Vec<(String, AffineFiberField)>,
}

impl ManifoldPlan {
    pub fn lifts(&self) -> Vec<LiftField> {
        self.targets
            .iter()
            .filter_map(|t| match t {
                Target::Lift(l) => Some(l.clone()),
                Target::Base(_) => None,
            })
            .collect()
    }
}

/// A validated config with everything parsed.
#[derive(Clone, Debug)]
pub struct Plan {
    pub manifolds: Vec<ManifoldPlan>,
    pub coeffs: Vec<LiftMetricCoeffs>,
    pub suites: Vec<&'static str>,
    pub report_path: PathBuf,
    pub csv_path: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    /// Validate and parse. `base_dir` anchors relative output paths.
    pub fn resolve(&self, base_dir: &Path, extra_suites: &[String]) -> Result<Plan> {
        let coeffs = self.metric_coeffs.list();
        if coeffs.is_empty() {
            bail!("metric_coeffs must not be empty");
        }
        for c in &coeffs {
            c.validate()?;
        }
        self.grid.validate()?;
        self.oracle.analysis().validate()?;
        self.oracle.suite().validate()?;
        let t = &self.tolerances;
        for (name, v) in [
            ("killing_tol", t.killing_tol),
            ("residual_tol", t.residual_tol),
            ("constancy_tol", t.constancy_tol),
            ("cross_check_tol", t.cross_check_tol),
        ] {
            if !(v > 0.0) {
                bail!("tolerance {name} must be positive, got {v}");
            }
        }

        let mut suites = Vec::new();
        for name in self.suites.iter().chain(extra_suites) {
            let canon = suites::canonical_suite_name(name)
                .ok_or_else(|| anyhow!("unknown suite `{name}`; known: {}", suites::SUITE_NAMES.join(", ")))?;
            if !suites.contains(&canon) {
                suites.push(canon);
            }
        }

        let specs = match &self.manifold {
            None => mcat::all(),
            Some(m) => vec![m.build()?],
        };
        let explicit = self.manifold.is_some();
        let mut manifolds = Vec::new();
        for spec in specs {
            if let Some(plan) = self.plan_for(spec, explicit)? {
                manifolds.push(plan);
            }
        }
        if manifolds.is_empty() {
            bail!("no configured field matches any catalog manifold");
        }

        Ok(Plan {
            manifolds,
            coeffs,
            suites,
            report_path: base_dir.join(&self.outputs.report_path),
            csv_path: self.outputs.csv_path.as_ref().map(|p| base_dir.join(p)),
        })
    }

    /// `None` when no field applies to `spec` and the manifold was not named explicitly.
    fn plan_for(&self, spec: ManifoldSpec, explicit: bool) -> Result<Option<ManifoldPlan>> {
        if self.fields.is_empty() {
            let base_fields = fcat::base_fields(&spec.name);
            let affine_fields = fcat::affine_fields(&spec.name);
            let targets = fcat::lifted_fields(&spec).into_iter().map(Target::Lift).collect();
            return Ok(Some(ManifoldPlan { spec, targets, base_fields, affine_fields }));
        }
        let mut targets = Vec::new();
        let mut base_fields: Vec<BaseField> = Vec::new();
        let mut affine_fields = Vec::new();
        for (i, f) in self.fields.iter().enumerate() {
            let Some(target) = f.build(&spec, i, explicit)? else { continue };
            match &target {
                Target::Lift(l) => match &l.provenance {
                    lift_fields::Provenance::Base(v) => {
                        if !base_fields.iter().any(|b| b.name == v.name) {
                            base_fields.push(v.clone());
                        }
                    }
                    lift_fields::Provenance::Affine(a) => affine_fields.push((l.name.clone(), a.clone())),
                    lift_fields::Provenance::Raw { .. } => {}
                },
                Target::Base(v) => {
                    if !base_fields.iter().any(|b| b.name == v.name) {
                        base_fields.push(v.clone());
                    }
                }
            }
            targets.push(target);
        }
        if targets.is_empty() {
            return Ok(None);
        }
        Ok(Some(ManifoldPlan { spec, targets, base_fields, affine_fields }))
    }
}

impl ManifoldConfig {
    pub fn build(&self) -> Result<ManifoldSpec> {
        match self {
            ManifoldConfig::Catalog { catalog, radius } => {
                let spec = match (catalog.as_str(), radius) {
                    ("sphere2", Some(r)) => {
                        if !(*r > 0.0) {
                            bail!("sphere radius must be positive, got {r}");
                        }
                        mcat::sphere2(*r)
                    }
                    (_, Some(_)) => bail!("`radius` only applies to sphere2"),
                    (name, None) => mcat::by_name(name).ok_or_else(|| {
                        anyhow!("unknown catalog manifold `{name}`; known: {}", mcat::NAMES.join(", "))
                    })?,
                };
                Ok(spec)
            }
            ManifoldConfig::Custom { name, dim, metric, domain_hint } => {
                if metric.len() != *dim {
                    bail!("metric has {} rows but dim is {dim}", metric.len());
                }
                Ok(ManifoldSpec::new(name.clone(), metric, domain_hint.clone())?)
            }
        }
    }
}

fn strs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

impl FieldConfig {
    fn label(&self, i: usize) -> String {
        self.name.clone().or_else(|| self.catalog.clone()).unwrap_or_else(|| format!("field{i}"))
    }

    fn base(&self, spec: &ManifoldSpec, i: usize, explicit: bool) -> Result<Option<BaseField>> {
        match (&self.catalog, &self.v) {
            (Some(_), Some(_)) => bail!("field {i}: give either `catalog` or `V`, not both"),
            (Some(c), None) => match fcat::base_field(&spec.name, c) {
                Some(mut v) => {
                    if let Some(n) = &self.name {
                        v.name = n.clone();
                    }
                    Ok(Some(v))
                }
                None if explicit => bail!("field {i}: no catalog field `{c}` on `{}`", spec.name),
                None => Ok(None),
            },
            (None, Some(v)) => {
                if !explicit {
                    bail!("field {i}: expression fields need an explicit `manifold`");
                }
                if v.len() != spec.dim {
                    bail!("field {i}: `V` has {} components, manifold `{}` has dimension {}", v.len(), spec.name, spec.dim);
                }
                Ok(Some(BaseField::new(self.label(i), &strs(v), spec.dim)?))
            }
            (None, None) => bail!("field {i}: kind `{:?}` needs `V` or `catalog`", self.kind),
        }
    }

    fn build(&self, spec: &ManifoldSpec, i: usize, explicit: bool) -> Result<Option<Target>> {
        let n = spec.dim;
        let target = match self.kind {
            FieldKind::Complete | FieldKind::Horizontal | FieldKind::Vertical | FieldKind::Base => {
                if self.alpha.is_some() || self.beta.is_some() || self.horiz.is_some() || self.vert.is_some() {
                    bail!("field {i}: kind `{:?}` takes only `V` or `catalog`", self.kind);
                }
                let Some(v) = self.base(spec, i, explicit)? else { return Ok(None) };
                match self.kind {
                    FieldKind::Complete => Target::Lift(lift_fields::complete_lift(&v, spec)?),
                    FieldKind::Horizontal => Target::Lift(lift_fields::horizontal_lift(&v, spec)?),
                    FieldKind::Vertical => Target::Lift(lift_fields::vertical_lift(&v, spec)?),
                    _ => Target::Base(v),
                }
            }
            FieldKind::FiberPreserving => {
                if self.v.is_some() || self.vert.is_some() {
                    bail!("field {i}: fiber_preserving takes `alpha`, `beta`, `horiz` or `catalog`");
                }
                let affine = match &self.catalog {
                    Some(c) => {
                        if self.alpha.is_some() || self.beta.is_some() || self.horiz.is_some() {
                            bail!("field {i}: give either `catalog` or expressions, not both");
                        }
                        match fcat::affine_fields(&spec.name).into_iter().find(|(name, _)| name == c) {
                            Some((_, a)) => a,
                            None if explicit => bail!("field {i}: no catalog affine field `{c}` on `{}`", spec.name),
                            None => return Ok(None),
                        }
                    }
                    None => {
                        if !explicit {
                            bail!("field {i}: expression fields need an explicit `manifold`");
                        }
                        let zero = vec!["0".to_string(); n];
                        let alpha = self.alpha.clone().ok_or_else(|| anyhow!("field {i}: fiber_preserving needs `alpha`"))?;
                        let beta = self.beta.clone().unwrap_or_else(|| zero.clone());
                        let horiz = self.horiz.clone().unwrap_or(zero);
                        let alpha: Vec<Vec<&str>> = alpha.iter().map(|r| strs(r)).collect();
                        AffineFiberField::parse(&alpha, &strs(&beta), &strs(&horiz), n)
                            .with_context(|| format!("field {i}"))?
                    }
                };
                Target::Lift(lift_fields::affine_fiber_field(spec, self.label(i), &affine)?)
            }
            FieldKind::Raw => {
                if !explicit {
                    bail!("field {i}: expression fields need an explicit `manifold`");
                }
                if self.v.is_some() || self.alpha.is_some() || self.beta.is_some() || self.catalog.is_some() {
                    bail!("field {i}: raw takes only `horiz` and `vert`");
                }
                let (Some(h), Some(v)) = (&self.horiz, &self.vert) else {
                    bail!("field {i}: raw needs `horiz` and `vert`");
                };
                Target::Lift(lift_fields::raw_field(spec, self.label(i), &strs(h), &strs(v))?)
            }
        };
        Ok(Some(target))
    }
}
