//! TOML run configurations: model definitions, per-command knobs, seed and
//! output settings. Parsing reports syntax errors with positions and then
//! collects *all* semantic problems instead of stopping at the first.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    homogeneous_strip_model, tabular_model, CorrelatedWalkModel, IncrementTable, LineSet, Model,
    ModulationMatrix, TransitionEntry,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("invalid config:\n  {}", issues.join("\n  "))]
    Invalid { issues: Vec<String> },
    #[error("config render error: {0}")]
    Render(#[from] toml::ser::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    CorrelatedWalk,
    ModulatedQueue,
    Homogeneous,
    Tabular,
}

/// Scalar or per-line real parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CParam {
    Scalar(f64),
    PerLine(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IncrementConfig {
    pub z: i64,
    pub from: String,
    pub to: String,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub x: u64,
    pub line: String,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RowConfig {
    pub x: u64,
    pub line: String,
    pub targets: Vec<TargetConfig>,
}

/// Model section: `kind` plus the fields that kind needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Correlated walk: scalar. Modulated queue: scalar or per-line.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<CParam>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lines: Option<Vec<String>>,
    /// Reference line label (defaults to the first line).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub increments: Option<Vec<IncrementConfig>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boundary: Option<Vec<RowConfig>>,
    /// Tabular override rows.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rows: Option<Vec<RowConfig>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeConfig {
    Constant,
    Lamperti,
}

impl From<ModeConfig> for crate::model::DriftMode {
    fn from(m: ModeConfig) -> Self {
        match m {
            ModeConfig::Constant => crate::model::DriftMode::ConstantDrift,
            ModeConfig::Lamperti => crate::model::DriftMode::Lamperti,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormatKind {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<FormatKind>,
    /// Report directory; stdout when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub x: u64,
    pub line: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ClassifyConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<ModeConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialConfig>,
    /// Heights whose long-run visit frequency is estimated.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_set: Option<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ExcursionStatsConfig {
    /// Start height for excursion estimators.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_max: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_grid: Option<Vec<u64>>,
    /// Path length for the excursion CSV dump.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path_steps: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct CouplingConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    /// Constant A of the log-horizon diagnostic (horizon = A log x0).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_horizon_a: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct WeakLimitConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialConfig>,
}

/// A full run configuration. `seed` is mandatory: reports must never be
/// silently nondeterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub model: ModelConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classify: Option<ClassifyConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub excursion_stats: Option<ExcursionStatsConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coupling: Option<CouplingConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weak_limit: Option<WeakLimitConfig>,
}

impl RunConfig {
    /// The validated seed (present after `parse_config`).
    pub fn seed(&self) -> u64 {
        self.seed.expect("validated config carries a seed")
    }
}

/// Parse and fully validate a run configuration.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let config: RunConfig = toml::from_str(text)?;
    let issues = validate(&config);
    if issues.is_empty() {
        Ok(config)
    } else {
        Err(ConfigError::Invalid { issues })
    }
}

/// Canonical TOML rendering; `parse_config(render_config(c)) == c` for valid
/// configs.
pub fn render_config(config: &RunConfig) -> Result<String, ConfigError> {
    Ok(toml::to_string_pretty(config)?)
}

/// All semantic problems with the config, with field paths.
pub fn validate(config: &RunConfig) -> Vec<String> {
    let mut issues = Vec::new();
    if config.seed.is_none() {
        issues.push("seed: required (no silent nondeterminism)".to_string());
    }
    let lines = match build_model_inner(&config.model, &mut issues) {
        Some(model) => Some(model.lines().clone()),
        None => None,
    };

    fn check_initial(
        issues: &mut Vec<String>,
        lines: &Option<LineSet>,
        field: &str,
        initial: &Option<InitialConfig>,
    ) {
        if let (Some(init), Some(lines)) = (initial, lines) {
            if lines.index_of(&init.line).is_none() {
                issues.push(format!(
                    "{field}.initial.line: unknown line label {:?}",
                    init.line
                ));
            }
        }
    }
    if let Some(sim) = &config.simulate {
        check_initial(&mut issues, &lines, "simulate", &sim.initial);
        if sim.steps == Some(0) {
            issues.push("simulate.steps: must be >= 1".to_string());
        }
        if sim.trials == Some(0) {
            issues.push("simulate.trials: must be >= 1".to_string());
        }
    }
    if let Some(wl) = &config.weak_limit {
        check_initial(&mut issues, &lines, "weak-limit", &wl.initial);
        if wl.n == Some(0) {
            issues.push("weak-limit.n: must be >= 1".to_string());
        }
        if wl.trials == Some(0) {
            issues.push("weak-limit.trials: must be >= 1".to_string());
        }
    }
    if let Some(cl) = &config.classify {
        if let Some(grid) = &cl.grid {
            if grid.len() < 2
                || grid.first() == Some(&0)
                || grid.windows(2).any(|w| w[0] >= w[1])
            {
                issues.push(
                    "classify.grid: need at least 2 strictly increasing positive heights"
                        .to_string(),
                );
            }
        }
    }
    if let Some(es) = &config.excursion_stats {
        if es.trials == Some(0) {
            issues.push("excursion-stats.trials: must be >= 1".to_string());
        }
    }
    if let Some(cp) = &config.coupling {
        if cp.trials == Some(0) {
            issues.push("coupling.trials: must be >= 1".to_string());
        }
    }
    issues
}

/// Build the model described by the config.
pub fn build_model(config: &ModelConfig) -> Result<Box<dyn Model>, ConfigError> {
    let mut issues = Vec::new();
    match build_model_inner(config, &mut issues) {
        Some(model) if issues.is_empty() => Ok(model),
        _ => Err(ConfigError::Invalid { issues }),
    }
}

fn line_set(config: &ModelConfig, issues: &mut Vec<String>, default_n: Option<usize>) -> Option<LineSet> {
    let labels = match (&config.lines, default_n) {
        (Some(labels), _) => labels.clone(),
        (None, Some(n)) => (0..n).map(|i| i.to_string()).collect(),
        (None, None) => {
            issues.push("model.lines: required for this model kind".to_string());
            return None;
        }
    };
    let reference = match &config.reference {
        Some(label) => match labels.iter().position(|l| l == label) {
            Some(i) => i,
            None => {
                issues.push(format!("model.reference: unknown line label {label:?}"));
                return None;
            }
        },
        None => 0,
    };
    match LineSet::new(labels, reference) {
        Ok(ls) => Some(ls),
        Err(e) => {
            issues.push(format!("model.lines: {e}"));
            None
        }
    }
}

fn matrix(
    field: &str,
    rows: &Option<Vec<Vec<f64>>>,
    issues: &mut Vec<String>,
) -> Option<ModulationMatrix> {
    match rows {
        None => {
            issues.push(format!("model.{field}: required for this model kind"));
            None
        }
        Some(rows) => match ModulationMatrix::new(rows.clone()) {
            Ok(m) => Some(m),
            Err(e) => {
                issues.push(format!("model.{field}: {e}"));
                None
            }
        },
    }
}

fn per_line_c(config: &ModelConfig, n: usize, issues: &mut Vec<String>) -> Option<Vec<f64>> {
    match &config.c {
        None => {
            issues.push("model.c: required for this model kind".to_string());
            None
        }
        Some(CParam::Scalar(v)) => Some(vec![*v; n]),
        Some(CParam::PerLine(v)) => {
            if v.len() != n {
                issues.push(format!(
                    "model.c: expected {n} entries, got {}",
                    v.len()
                ));
                None
            } else {
                Some(v.clone())
            }
        }
    }
}

fn resolve_rows(
    field: &str,
    rows: &[RowConfig],
    lines: &LineSet,
    issues: &mut Vec<String>,
) -> Vec<((u64, usize), Vec<TransitionEntry>)> {
    let mut out = Vec::new();
    for (idx, row) in rows.iter().enumerate() {
        let Some(line) = lines.index_of(&row.line) else {
            issues.push(format!(
                "model.{field}[{idx}].line: unknown line label {:?}",
                row.line
            ));
            continue;
        };
        let mut entries = Vec::new();
        let mut ok = true;
        for (t_idx, t) in row.targets.iter().enumerate() {
            match lines.index_of(&t.line) {
                Some(tl) => entries.push(TransitionEntry {
                    x: t.x,
                    line: tl,
                    p: t.p,
                }),
                None => {
                    issues.push(format!(
                        "model.{field}[{idx}].targets[{t_idx}].line: unknown line label {:?}",
                        t.line
                    ));
                    ok = false;
                }
            }
        }
        if ok {
            out.push(((row.x, line), entries));
        }
    }
    out
}

fn build_homogeneous(
    config: &ModelConfig,
    issues: &mut Vec<String>,
) -> Option<crate::model::HomogeneousStripModel> {
    let lines = line_set(config, issues, None)?;
    let Some(x0) = config.x0 else {
        issues.push("model.x0: required for this model kind".to_string());
        return None;
    };
    let Some(increments) = &config.increments else {
        issues.push("model.increments: required for this model kind".to_string());
        return None;
    };
    let mut entries = Vec::new();
    for (idx, inc) in increments.iter().enumerate() {
        let from = lines.index_of(&inc.from);
        let to = lines.index_of(&inc.to);
        match (from, to) {
            (Some(f), Some(t)) => entries.push((inc.z, f, t, inc.p)),
            _ => issues.push(format!(
                "model.increments[{idx}]: unknown line label {:?} or {:?}",
                inc.from, inc.to
            )),
        }
    }
    let table = match IncrementTable::new(lines.len(), x0, entries) {
        Ok(t) => t,
        Err(e) => {
            issues.push(format!("model.increments: {e}"));
            return None;
        }
    };
    let boundary = resolve_rows(
        "boundary",
        config.boundary.as_deref().unwrap_or(&[]),
        &lines,
        issues,
    );
    match homogeneous_strip_model(lines, table, boundary) {
        Ok(m) => Some(m),
        Err(e) => {
            issues.push(format!("model.boundary: {e}"));
            None
        }
    }
}

fn build_model_inner(config: &ModelConfig, issues: &mut Vec<String>) -> Option<Box<dyn Model>> {
    let before = issues.len();
    let model: Option<Box<dyn Model>> = match config.kind {
        ModelKind::CorrelatedWalk => match &config.c {
            Some(CParam::Scalar(c)) => Some(Box::new(CorrelatedWalkModel::new(*c))),
            Some(CParam::PerLine(_)) => {
                issues.push("model.c: correlated walk takes a scalar c".to_string());
                None
            }
            None => {
                issues.push("model.c: required for this model kind".to_string());
                None
            }
        },
        ModelKind::ModulatedQueue => {
            let a = matrix("a", &config.a, issues);
            let b = matrix("b", &config.b, issues);
            let n = a
                .as_ref()
                .map(|m| m.dim())
                .or_else(|| b.as_ref().map(|m| m.dim()))
                .or_else(|| config.lines.as_ref().map(|l| l.len()));
            let lines = line_set(config, issues, n);
            let c = n.and_then(|n| per_line_c(config, n, issues));
            match (lines, a, b, c) {
                (Some(lines), Some(a), Some(b), Some(c)) => {
                    match crate::model::ModulatedQueueModel::new(lines, a, b, c) {
                        Ok(m) => Some(Box::new(m)),
                        Err(e) => {
                            issues.push(format!("model: {e}"));
                            None
                        }
                    }
                }
                _ => None,
            }
        }
        ModelKind::Homogeneous => {
            build_homogeneous(config, issues).map(|m| Box::new(m) as Box<dyn Model>)
        }
        ModelKind::Tabular => {
            let tail = build_homogeneous(config, issues)?;
            let lines = tail.lines().clone();
            let rows = resolve_rows(
                "rows",
                config.rows.as_deref().unwrap_or(&[]),
                &lines,
                issues,
            );
            match tabular_model(rows, tail) {
                Ok(m) => Some(Box::new(m)),
                Err(e) => {
                    issues.push(format!("model.rows: {e}"));
                    None
                }
            }
        }
    };
    if model.is_none() && issues.len() == before {
        issues.push("model: construction failed".to_string());
    }
    model
}

#[cfg(test)]
mod tests {
    use super::*;

    const WALK: &str = r#"
seed = 42

[model]
kind = "correlated-walk"
c = 0.5
"#;

    #[test]
    fn minimal_walk_config_parses() {
        let cfg = parse_config(WALK).unwrap();
        assert_eq!(cfg.seed(), 42);
        let model = build_model(&cfg.model).unwrap();
        assert_eq!(model.lines().len(), 2);
        assert_eq!(model.describe(), "correlated_walk(c=0.5)");
    }

    #[test]
    fn missing_seed_is_reported() {
        let text = "[model]\nkind = \"correlated-walk\"\nc = 0.5\n";
        let err = parse_config(text).unwrap_err();
        match err {
            ConfigError::Invalid { issues } => {
                assert!(issues.iter().any(|i| i.starts_with("seed:")), "{issues:?}");
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn bad_matrix_row_is_named() {
        let text = r#"
seed = 1
[model]
kind = "modulated-queue"
c = [0.1, 0.2]
a = [[0.5, 0.4], [0.5, 0.5]]
b = [[0.5, 0.5], [0.5, 0.5]]
"#;
        let err = parse_config(text).unwrap_err();
        match err {
            ConfigError::Invalid { issues } => {
                assert!(
                    issues.iter().any(|i| i.starts_with("model.a:") && i.contains("row 0")),
                    "{issues:?}"
                );
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn all_errors_collected_not_just_first() {
        let text = r#"
[model]
kind = "modulated-queue"
a = [[0.9, 0.2], [0.5, 0.5]]
b = [[0.5, 0.5], [0.5, 0.5]]
"#;
        let err = parse_config(text).unwrap_err();
        match err {
            ConfigError::Invalid { issues } => {
                // Missing seed, bad matrix a, missing c: all present at once.
                assert!(issues.len() >= 3, "{issues:?}");
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = parse_config("seed = \n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line"), "{msg}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = "seed = 1\nbogus = 2\n[model]\nkind = \"correlated-walk\"\nc = 0.0\n";
        assert!(matches!(
            parse_config(text),
            Err(ConfigError::Syntax(_))
        ));
    }

    #[test]
    fn homogeneous_round_trip_and_build() {
        let text = r#"
seed = 7

[model]
kind = "homogeneous"
lines = ["0"]
x0 = 1

[[model.increments]]
z = 1
from = "0"
to = "0"
p = 0.5

[[model.increments]]
z = -1
from = "0"
to = "0"
p = 0.5

[[model.boundary]]
x = 0
line = "0"
targets = [{ x = 1, line = "0", p = 1.0 }]
"#;
        let cfg = parse_config(text).unwrap();
        let model = build_model(&cfg.model).unwrap();
        assert_eq!(model.row(0, 0).entries().len(), 1);
        let rendered = render_config(&cfg).unwrap();
        let reparsed = parse_config(&rendered).unwrap();
        assert_eq!(cfg, reparsed);
    }

    #[test]
    fn walk_round_trip() {
        let cfg = parse_config(WALK).unwrap();
        let rendered = render_config(&cfg).unwrap();
        assert_eq!(parse_config(&rendered).unwrap(), cfg);
    }

    #[test]
    fn initial_line_label_checked() {
        let text = r#"
seed = 1
[model]
kind = "correlated-walk"
c = 0.5
[simulate]
initial = { x = 0, line = "up" }
"#;
        let err = parse_config(text).unwrap_err();
        match err {
            ConfigError::Invalid { issues } => {
                assert!(issues.iter().any(|i| i.contains("initial.line")), "{issues:?}");
            }
            other => panic!("unexpected error: {other}"),
        }
    }
}
