use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::evaluation::{CompactnessOptions, DiagnosisOptions, GameConfig};
use crate::losses::{LossKind, LossSpec};
use crate::training::TrainingConfig;

pub const CONFIG_VERSION: u32 = 1;

/// Complete description of an experiment: training, evaluation, the
/// one-step game, the ablation matrix, and where results go.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub evaluation: EvaluationSettings,
    #[serde(default)]
    pub dynamics: DynamicsSettings,
    #[serde(default)]
    pub ablation: AblationMatrix,
    #[serde(default)]
    pub output: OutputSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            training: TrainingConfig::default(),
            evaluation: EvaluationSettings::default(),
            dynamics: DynamicsSettings::default(),
            ablation: AblationMatrix::default(),
            output: OutputSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EvalKind {
    Compactness,
    Diversity,
    Topk,
    Kl,
    Recovery,
}

impl EvalKind {
    pub const ALL: [EvalKind; 5] = [Self::Compactness, Self::Diversity, Self::Topk, Self::Kl, Self::Recovery];

    pub fn name(self) -> &'static str {
        match self {
            Self::Compactness => "compactness",
            Self::Diversity => "diversity",
            Self::Topk => "topk",
            Self::Kl => "kl",
            Self::Recovery => "recovery",
        }
    }

    pub(crate) fn stream(self) -> u64 {
        Self::ALL.iter().position(|&k| k == self).unwrap() as u64
    }
}

/// Where the diversity report takes its sequences from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiversitySource {
    /// Samples from the trained policy.
    #[default]
    Policy,
    /// The reference corpus itself; a sanity baseline with novel ratio 0.
    Reference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationSettings {
    /// Reports produced by `eval` without `--which` and by `ablate`.
    pub reports: Vec<EvalKind>,
    /// True sentences in the reference corpus (compactness probes, novelty).
    pub corpus_size: usize,
    pub compactness: CompactnessOptions,
    pub diversity_samples: usize,
    pub diversity_source: DiversitySource,
    pub topk: usize,
    pub topk_samples: usize,
    pub recovery_probes: usize,
    /// Fraction of recovery probes whose token is a valid continuation.
    pub recovery_valid_fraction: f64,
    pub diagnosis: DiagnosisOptions,
    /// World sentences per input sequence used as metric references.
    pub diagnosis_references: usize,
}

impl Default for EvaluationSettings {
    fn default() -> Self {
        Self {
            reports: EvalKind::ALL.to_vec(),
            corpus_size: 300,
            compactness: CompactnessOptions::default(),
            diversity_samples: 300,
            diversity_source: DiversitySource::Policy,
            topk: 5,
            topk_samples: 200,
            recovery_probes: 1000,
            recovery_valid_fraction: 0.5,
            diagnosis: DiagnosisOptions::default(),
            diagnosis_references: 5,
        }
    }
}

/// Game initialization for `dynamics`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameInit {
    #[default]
    Random,
    Equilibrium,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsSettings {
    pub p_true: Vec<f64>,
    pub init: GameInit,
    pub game: GameConfig,
}

impl Default for DynamicsSettings {
    fn default() -> Self {
        Self {
            p_true: vec![0.5, 0.25, 0.15, 0.10],
            init: GameInit::Random,
            game: GameConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationRow {
    pub name: String,
    pub loss: LossSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationMatrix {
    pub rows: Vec<AblationRow>,
}

impl Default for AblationMatrix {
    fn default() -> Self {
        let row = |name: &str, loss| AblationRow {
            name: name.into(),
            loss,
        };
        Self {
            rows: vec![
                row("rairl", LossSpec::rairl()),
                row("rairl-no-constant", LossSpec::rairl().with_terms(false, true)),
                row("rairl-no-conditional", LossSpec::rairl().with_terms(true, false)),
                row("airl", LossSpec::airl()),
                row("gan", LossSpec::of(LossKind::Gan)),
                row("rl", LossSpec::of(LossKind::Rl)),
                row("mle", LossSpec::of(LossKind::Mle)),
            ],
        }
    }
}

impl AblationMatrix {
    /// Rows need unique, non-empty names usable as directory names.
    pub fn validate(&self) -> Result<()> {
        if self.rows.is_empty() {
            return Err(Error::Config("ablation.rows is empty".into()));
        }
        let mut seen = HashSet::new();
        for r in &self.rows {
            let ok = !r.name.is_empty()
                && r.name != "."
                && r.name != ".."
                && r.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c));
            if !ok {
                return Err(Error::Config(format!(
                    "ablation row name '{}' must be non-empty and use only letters, digits, '-', '_', '.'",
                    r.name
                )));
            }
            if !seen.insert(r.name.as_str()) {
                return Err(Error::Config(format!("duplicate ablation row name '{}'", r.name)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSettings {
    /// Used when `--out` is absent.
    pub dir: PathBuf,
    pub csv: bool,
    pub json: bool,
}

impl Default for OutputSettings {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            csv: true,
            json: true,
        }
    }
}

impl ExperimentConfig {
    /// Reads `path` (or starts from the defaults), applies `KEY=VALUE`
    /// overrides with dotted keys, then parses and validates the result.
    /// Override values are parsed as JSON, falling back to a plain string.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut doc = match path {
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| Error::Config(format!("config {} is not valid JSON: {e}", p.display())))?
            }
            None => serde_json::to_value(Self::default())?,
        };
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        Self::from_value(doc)
    }

    pub fn from_value(doc: Value) -> Result<Self> {
        match doc.get("version") {
            None => return Err(Error::Config("missing required field 'version'".into())),
            Some(v) => match v.as_u64() {
                Some(v) if v == CONFIG_VERSION as u64 => {}
                Some(v) => {
                    return Err(Error::Version {
                        expected: CONFIG_VERSION,
                        found: u32::try_from(v).unwrap_or(u32::MAX),
                    })
                }
                None => return Err(Error::Config("'version' must be an integer".into())),
            },
        }
        let cfg: Self = serde_json::from_value(doc).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.training.validate()?;
        self.ablation.validate()?;
        let e = &self.evaluation;
        let positive = [
            ("corpus_size", e.corpus_size),
            ("diversity_samples", e.diversity_samples),
            ("topk", e.topk),
            ("topk_samples", e.topk_samples),
            ("recovery_probes", e.recovery_probes),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("evaluation.{name} must be at least 1")));
            }
        }
        if e.topk_samples < e.topk {
            return Err(Error::Config("evaluation.topk_samples must be at least evaluation.topk".into()));
        }
        if !(0.0..=1.0).contains(&e.recovery_valid_fraction) {
            return Err(Error::Config("evaluation.recovery_valid_fraction must lie in [0, 1]".into()));
        }
        if !(e.diagnosis.threshold.is_finite() && e.diagnosis.threshold >= 0.0) {
            return Err(Error::Config("evaluation.diagnosis.threshold must be non-negative".into()));
        }
        let p = &self.dynamics.p_true;
        let sum: f64 = p.iter().sum();
        if p.len() < 2 || p.iter().any(|&x| !(x > 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(
                "dynamics.p_true must have at least 2 positive entries summing to 1".into(),
            ));
        }
        let g = &self.dynamics.game;
        if !(g.generator_lr > 0.0 && g.discriminator_lr > 0.0) {
            return Err(Error::Config("dynamics learning rates must be positive".into()));
        }
        if !(self.output.csv || self.output.json) {
            return Err(Error::Config("output: at least one of csv and json must be enabled".into()));
        }
        Ok(())
    }
}

/// Sets `doc[a][b]... = value` for an override `a.b...=value`, creating
/// missing objects along the way. Numeric segments index arrays.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{assignment}' is not KEY=VALUE")))?;
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(Error::Config(format!("override key '{key}' is malformed")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    for seg in key.split('.') {
        node = match node {
            Value::Object(map) => map.entry(seg).or_insert_with(|| Value::Object(Default::default())),
            Value::Array(items) => {
                let len = items.len();
                seg.parse::<usize>()
                    .ok()
                    .and_then(|i| items.get_mut(i))
                    .ok_or_else(|| Error::Config(format!("override '{key}': index '{seg}' out of range 0..{len}")))?
            }
            Value::Null => {
                *node = Value::Object(Default::default());
                node.as_object_mut().unwrap().entry(seg).or_insert(Value::Null)
            }
            _ => return Err(Error::Config(format!("override '{key}': '{seg}' is inside a non-object value"))),
        };
    }
    *node = value;
    Ok(())
}
