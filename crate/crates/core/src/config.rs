//! Run configuration: a TOML file with one section per command. Unknown keys are
//! rejected with the offending key path and, when close enough, a suggestion.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::eigensolver::{DiscretizeOptions, EigenOptions, NRule};
use crate::error::{Error, Result};
use crate::model::{
    benchmark_field, build_component, Anchor, ComponentKind, FieldModel, FieldParams, Killing,
    RecurrentComponent, TrigSeries, CATALOG, GOLDEN,
};
use crate::oukernel::QuadSpec;
use crate::pressure::Convention;
use crate::ratefn::ShootOptions;

fn default_pi() -> f64 {
    4.0
}

fn default_k() -> [f64; 2] {
    [1.0, GOLDEN]
}

/// A catalog field with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub name: String,
    #[serde(default = "default_pi")]
    pub pi: f64,
    #[serde(default = "default_k")]
    pub k: [f64; 2],
    #[serde(default)]
    pub killing: TrigSeries,
}

impl FieldSpec {
    pub fn new(name: &str, killing: TrigSeries) -> Self {
        Self { name: name.to_string(), pi: default_pi(), k: default_k(), killing }
    }

    pub fn build(&self) -> Result<FieldModel> {
        if !CATALOG.contains(&self.name.as_str()) {
            return Err(Error::Config(format!(
                "unknown field `{}`{}",
                self.name,
                suggestion(&self.name, CATALOG.iter().copied())
            )));
        }
        benchmark_field(&self.name, &FieldParams { pi: self.pi, k: self.k, killing: self.killing.clone() })
            .map_err(|e| Error::Config(format!("field `{}`: {e}", self.name)))
    }
}

/// An abstract component given by its transverse linearization and killing data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSpec {
    pub label: String,
    pub kind: ComponentKind,
    /// Transverse linearization, one inner list per row.
    #[serde(default)]
    pub b: Vec<Vec<f64>>,
    /// Killing value at a point component.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub c: Option<f64>,
    /// Killing series along a cycle (in `θ/period`) or on a torus.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub killing: Option<TrigSeries>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub period: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub k: Option<[f64; 2]>,
    #[serde(default = "default_pi")]
    pub pi: f64,
}

pub fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::Config(format!("{what}: matrix must be square")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

impl ComponentSpec {
    pub fn build(&self) -> Result<RecurrentComponent> {
        let b = matrix_from_rows(&self.b, &format!("component `{}`", self.label))?;
        let killing = match self.kind {
            ComponentKind::Point => Killing::Point(
                self.c
                    .ok_or_else(|| Error::Config(format!("component `{}`: point needs `c`", self.label)))?,
            ),
            ComponentKind::Cycle => Killing::Cycle {
                period: self.period.unwrap_or(1.0),
                c: self.killing.clone().unwrap_or_default(),
            },
            ComponentKind::Torus => {
                if !self.b.is_empty() {
                    return Err(Error::Config(format!("component `{}`: a torus has no transverse directions", self.label)));
                }
                Killing::Torus { k: self.k.unwrap_or_else(default_k), c: self.killing.clone().unwrap_or_default() }
            }
        };
        if !(self.pi > 2.0) {
            return Err(Error::Config(format!("component `{}`: Π must exceed 2", self.label)));
        }
        build_component(&self.label, killing, b, Anchor::Abstract).map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct PressureSection {
    pub convention: Convention,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileSection {
    /// Longitudinal grid size for cycle and torus densities.
    pub n_long: usize,
    /// Modulating coefficients of the eligible components, in order; all one when empty.
    pub gamma: Vec<f64>,
}

impl Default for ProfileSection {
    fn default() -> Self {
        Self { n_long: 256, gamma: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EigenSection {
    pub epsilon: f64,
    pub n: usize,
    pub discretize: DiscretizeOptions,
    pub solver: EigenOptions,
}

impl Default for EigenSection {
    fn default() -> Self {
        Self { epsilon: 0.01, n: 256, discretize: DiscretizeOptions::default(), solver: EigenOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudySection {
    pub epsilons: Vec<f64>,
    pub n_rule: NRule,
}

impl Default for StudySection {
    fn default() -> Self {
        Self { epsilons: vec![1e-2, 3e-3, 1e-3], n_rule: NRule::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateQuery {
    pub x: [f64; 2],
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RateSection {
    pub queries: Vec<RateQuery>,
    pub shoot: ShootOptions,
    /// Segments of the direct minimization run alongside shooting; zero disables it.
    pub segments: usize,
    /// Transverse offsets for the quadratic lower-bound fit around each component.
    pub bound_offsets: Vec<f64>,
    pub bound_horizon: f64,
}

impl Default for RateSection {
    fn default() -> Self {
        Self {
            queries: Vec::new(),
            shoot: ShootOptions::default(),
            segments: 256,
            bound_offsets: Vec::new(),
            bound_horizon: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McSection {
    pub epsilon: f64,
    pub t: f64,
    pub points: Vec<[f64; 2]>,
    pub n_paths: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub block: usize,
    /// Grid size of the eigenproblem supplying `λ_ε` and `v_ε`.
    pub n: usize,
}

impl Default for McSection {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            t: 0.5,
            points: vec![[0.1, 0.0], [0.3, 0.0], [0.5, 0.0], [0.7, 0.0], [0.9, 0.0]],
            n_paths: 100_000,
            seed: 0,
            dt: None,
            block: 1024,
            n: 512,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OuSection {
    /// Linearizations, one list of rows per block.
    pub blocks: Vec<Vec<Vec<f64>>>,
    pub pi: f64,
    pub t_small: f64,
    pub t_large: f64,
    pub semigroup_times: Vec<f64>,
    pub quadrature: QuadSpec,
}

impl Default for OuSection {
    fn default() -> Self {
        Self {
            blocks: vec![
                vec![vec![-1.0]],
                vec![vec![2.0]],
                vec![vec![-1.0, 0.5], vec![0.0, -1.5]],
                vec![vec![1.0, 0.3], vec![0.0, 2.0]],
                vec![vec![-1.0, 0.0], vec![0.0, 2.0]],
            ],
            pi: 4.0,
            t_small: 1e-3,
            t_large: 50.0,
            semigroup_times: vec![0.1, 1.0, 5.0],
            quadrature: QuadSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscriminateSection {
    pub benchmarks: Vec<FieldSpec>,
    pub epsilons: Vec<f64>,
    pub n_rule: NRule,
    pub tolerance: f64,
}

impl Default for DiscriminateSection {
    fn default() -> Self {
        Self {
            benchmarks: vec![
                FieldSpec::new("circle_sink_source", TrigSeries::constant(0.5).with_term([1, 0], 0.4, 0.0)),
                FieldSpec::new("torus_shear_cycles", TrigSeries::constant(0.5).with_term([1, 0], 0.4, 0.0)),
                FieldSpec::new(
                    "torus_gradient_points",
                    TrigSeries::constant(0.5).with_term([1, 0], 0.3, 0.0).with_term([0, 1], 0.2, 0.0),
                ),
            ],
            epsilons: vec![0.04, 0.02, 0.01],
            n_rule: NRule::Scaled { factor: 8.0, min: 64, max: 256 },
            tolerance: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Output directory; `--out` takes precedence.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<std::path::PathBuf>,
    pub csv: bool,
    pub json: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: None, csv: true, json: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<FieldSpec>,
    pub components: Vec<ComponentSpec>,
    pub pressure: PressureSection,
    pub profile: ProfileSection,
    pub eigen: EigenSection,
    pub study: StudySection,
    pub rate: RateSection,
    pub mc: McSection,
    pub ou: OuSection,
    pub discriminate: DiscriminateSection,
    pub output: OutputSection,
}

/// `" (did you mean `x`?)"` for the closest candidate, or nothing.
pub fn suggestion<'a>(word: &str, candidates: impl IntoIterator<Item = &'a str>) -> String {
    let best = candidates
        .into_iter()
        .map(|c| (strsim::levenshtein(word, c), c))
        .min_by_key(|p| p.0);
    match best {
        Some((d, c)) if d <= 3.max(word.len() / 3) => format!(" (did you mean `{c}`?)"),
        _ => String::new(),
    }
}

/// Suggestion for serde's "unknown field `x`, expected one of `a`, `b`" messages.
fn unknown_key_hint(message: &str) -> String {
    if !message.contains("unknown field") && !message.contains("unknown variant") {
        return String::new();
    }
    let ticks: Vec<&str> = message.split('`').skip(1).step_by(2).collect();
    match ticks.split_first() {
        Some((bad, rest)) => suggestion(bad, rest.iter().copied()),
        None => String::new(),
    }
}

fn positive(x: f64, what: &str) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} must be positive, got {x}")))
    }
}

fn decreasing(xs: &[f64], what: &str) -> Result<()> {
    for &x in xs {
        positive(x, what)?;
    }
    if xs.is_empty() || xs.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Config(format!("{what} must be a non-empty strictly decreasing list")));
    }
    Ok(())
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let de = toml::Deserializer::new(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let msg = inner.message().to_string();
            let hint = unknown_key_hint(&msg);
            let at = if path == "." { String::new() } else { format!(" at `{path}`") };
            Error::Config(format!("{}{at}{hint}", msg.trim_end()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Range checks and construction of every referenced field and component.
    pub fn validate(&self) -> Result<()> {
        if let Some(f) = &self.field {
            f.build()?;
        }
        for c in &self.components {
            c.build()?;
        }
        let mut labels: Vec<&str> = self.components.iter().map(|c| c.label.as_str()).collect();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("component labels must be unique".into()));
        }
        positive(self.eigen.epsilon, "eigen.epsilon")?;
        if self.eigen.n < 4 {
            return Err(Error::Config("eigen.n must be at least 4".into()));
        }
        positive(self.eigen.solver.tol, "eigen.solver.tol")?;
        decreasing(&self.study.epsilons, "study.epsilons")?;
        check_rule(&self.study.n_rule, "study.n_rule")?;
        if self.profile.n_long < 8 {
            return Err(Error::Config("profile.n_long must be at least 8".into()));
        }
        if self.profile.gamma.iter().any(|g| !(*g >= 0.0)) {
            return Err(Error::Config("profile.gamma entries must be non-negative".into()));
        }
        for q in &self.rate.queries {
            positive(q.t, "rate.queries.t")?;
        }
        positive(self.rate.shoot.dt, "rate.shoot.dt")?;
        positive(self.rate.bound_horizon, "rate.bound_horizon")?;
        if self.rate.segments != 0 && self.rate.segments < 8 {
            return Err(Error::Config("rate.segments must be 0 or at least 8".into()));
        }
        positive(self.mc.epsilon, "mc.epsilon")?;
        positive(self.mc.t, "mc.t")?;
        if let Some(dt) = self.mc.dt {
            positive(dt, "mc.dt")?;
        }
        if self.mc.n_paths == 0 || self.mc.block == 0 || self.mc.n < 4 {
            return Err(Error::Config("mc.n_paths and mc.block must be positive, mc.n at least 4".into()));
        }
        for (i, b) in self.ou.blocks.iter().enumerate() {
            let m = matrix_from_rows(b, &format!("ou.blocks[{i}]"))?;
            crate::speclin::spectral_split(&m, crate::speclin::DEFAULT_HYPERBOLICITY_FLOOR)
                .map_err(|e| Error::Config(format!("ou.blocks[{i}]: {e}")))?;
        }
        if !(self.ou.pi > 2.0) {
            return Err(Error::Config("ou.pi must exceed 2".into()));
        }
        positive(self.ou.t_small, "ou.t_small")?;
        if !(self.ou.t_large > self.ou.t_small) {
            return Err(Error::Config("ou.t_large must exceed ou.t_small".into()));
        }
        for &t in &self.ou.semigroup_times {
            positive(t, "ou.semigroup_times")?;
        }
        for b in &self.discriminate.benchmarks {
            b.build()?;
        }
        decreasing(&self.discriminate.epsilons, "discriminate.epsilons")?;
        if self.discriminate.epsilons.len() < 2 {
            return Err(Error::Config("discriminate.epsilons needs at least two values".into()));
        }
        check_rule(&self.discriminate.n_rule, "discriminate.n_rule")?;
        positive(self.discriminate.tolerance, "discriminate.tolerance")?;
        Ok(())
    }

    pub fn field_model(&self) -> Result<FieldModel> {
        self.field
            .as_ref()
            .ok_or_else(|| Error::Config("this command needs a `[field]` section".into()))?
            .build()
    }

    /// Components of the catalog field, or the explicit list when no field is given.
    pub fn component_list(&self) -> Result<(Vec<RecurrentComponent>, Vec<f64>)> {
        if let Some(f) = &self.field {
            let m = f.build()?;
            let pis = vec![m.pi; m.components.len()];
            if m.components.is_empty() {
                return Err(Error::Config(format!("field `{}` has no recurrent components", m.name)));
            }
            return Ok((m.components, pis));
        }
        if self.components.is_empty() {
            return Err(Error::Config("give a `[field]` section or at least one `[[components]]` entry".into()));
        }
        let comps = self.components.iter().map(|c| c.build()).collect::<Result<Vec<_>>>()?;
        Ok((comps, self.components.iter().map(|c| c.pi).collect()))
    }
}

fn check_rule(rule: &NRule, what: &str) -> Result<()> {
    match *rule {
        NRule::Fixed { n } if n < 4 => Err(Error::Config(format!("{what}: n must be at least 4"))),
        NRule::Scaled { factor, min, max } if !(factor > 0.0) || min < 4 || max < min => {
            Err(Error::Config(format!("{what}: need factor > 0 and 4 ≤ min ≤ max")))
        }
        _ => Ok(()),
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    RunConfig::parse(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_torus_config() {
        let c = RunConfig::parse("[field]\nname = \"torus_irrational_flow\"\n").unwrap();
        assert_eq!(c.field_model().unwrap().components.len(), 1);
    }

    #[test]
    fn unknown_key_suggestion() {
        let e = RunConfig::parse("[eigen]\nepsillon = 0.1\n").unwrap_err().to_string();
        assert!(e.contains("epsillon") && e.contains("did you mean `epsilon`"), "{e}");
        assert!(e.contains("eigen"), "{e}");
    }

    #[test]
    fn unknown_field_suggestion() {
        let e = RunConfig::parse("[field]\nname = \"torus_shear_cycle\"\n").unwrap_err().to_string();
        assert!(e.contains("torus_shear_cycles"), "{e}");
    }

    #[test]
    fn nonhyperbolic_component_named() {
        let text = "[[components]]\nlabel = \"flat\"\nkind = \"point\"\nc = 1.0\nb = [[0.0]]\n";
        let e = RunConfig::parse(text).unwrap_err().to_string();
        assert!(e.contains("flat"), "{e}");
    }

    #[test]
    fn round_trip() {
        let text = r#"
[field]
name = "circle_sink_source"
pi = 3.0
killing = { mean = 0.5, terms = [{ mode = [1, 0], cos = 0.4 }] }

[[components]]
label = "p"
kind = "point"
c = 1.5
b = [[-1.0, 0.0], [0.0, 2.0]]

[study]
epsilons = [0.01, 0.001]
n_rule = { kind = "fixed", n = 64 }

[mc]
dt = 0.001
"#;
        let a = RunConfig::parse(text).unwrap();
        let b = RunConfig::parse(&a.to_toml().unwrap()).unwrap();
        assert_eq!(a, b);
        let d = RunConfig::default();
        assert_eq!(RunConfig::parse(&d.to_toml().unwrap()).unwrap(), d);
    }
}
