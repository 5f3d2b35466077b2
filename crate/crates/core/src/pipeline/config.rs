//! Pipeline configuration: one TOML file drives every stage; flags override
//! individual fields and `BIASLENS_OUT` overrides the output root.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::biasmodel::{BiasHyper, TrainSchedule};
use crate::error::{Error, Result};
use crate::lexstats::{ConfoundConfig, PriorAlpha};
use crate::nn::EncoderKind;
use crate::propensity::{Caliper, MatchConfig, PropensityHyper};
use crate::synthgen::SynthSpec;

/// The four model configurations: whether training consumes the matched
/// set and whether the adversarial demotion objective is on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Base,
    Demotion,
    Match,
    MatchDemotion,
}

impl Preset {
    pub fn uses_matching(self) -> bool {
        matches!(self, Preset::Match | Preset::MatchDemotion)
    }

    pub fn uses_demotion(self) -> bool {
        matches!(self, Preset::Demotion | Preset::MatchDemotion)
    }

    pub fn all() -> [Preset; 4] {
        [Preset::Base, Preset::Demotion, Preset::Match, Preset::MatchDemotion]
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Base => "base",
            Preset::Demotion => "demotion",
            Preset::Match => "match",
            Preset::MatchDemotion => "match_demotion",
        }
    }

    /// Display name in the ablation tables.
    pub fn table_label(self) -> &'static str {
        match self {
            Preset::Base => "base",
            Preset::Demotion => "+demotion",
            Preset::Match => "+match",
            Preset::MatchDemotion => "+match+demotion",
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Preset> {
        match s.trim().to_lowercase().replace('-', "_").as_str() {
            "base" => Ok(Preset::Base),
            "demotion" | "dem" => Ok(Preset::Demotion),
            "match" => Ok(Preset::Match),
            "match_demotion" | "matchdem" | "match_dem" => Ok(Preset::MatchDemotion),
            other => Err(Error::Config(format!(
                "unknown preset {other:?}; expected base, demotion, match, or match_demotion"
            ))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsSection {
    /// Raw delimiter-separated input; empty means `<out_dir>/raw.tsv`.
    pub raw: String,
    /// Substitution lexicon file; empty means the bundled default list.
    pub substitutions: String,
    /// Directory of category lexicons; empty means the bundled set.
    pub lexicons: String,
    /// Tagged-post file for transfer evaluation.
    pub tagged: String,
    pub out_dir: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestSection {
    pub delimiter: String,
}

impl Default for IngestSection {
    fn default() -> Self {
        IngestSection {
            delimiter: "\t".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSection {
    pub ratios: [f64; 3],
    pub seed: u64,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            ratios: [0.6, 0.2, 0.2],
            seed: 11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessSection {
    pub min_tokens: usize,
}

impl Default for PreprocessSection {
    fn default() -> Self {
        PreprocessSection { min_tokens: 4 }
    }
}

/// Caliper in config form: the string "auto" or a positive number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CaliperValue {
    Auto(String),
    Fixed(f64),
}

impl Default for CaliperValue {
    fn default() -> Self {
        CaliperValue::Auto("auto".to_string())
    }
}

impl CaliperValue {
    pub fn resolve(&self) -> Result<Caliper> {
        match self {
            CaliperValue::Fixed(v) => Ok(Caliper::Fixed(*v)),
            CaliperValue::Auto(s) if s.eq_ignore_ascii_case("auto") => Ok(Caliper::Auto),
            CaliperValue::Auto(s) => Err(Error::Config(format!(
                "caliper must be \"auto\" or a number, got {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchSection {
    pub caliper: CaliperValue,
    pub seed: u64,
    /// Which gender's posts act as matching queries; the other gender is
    /// the candidate pool.
    pub query_gender: String,
}

impl Default for MatchSection {
    fn default() -> Self {
        MatchSection {
            caliper: CaliperValue::default(),
            seed: 13,
            query_gender: "F".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropensitySection {
    pub encoder: EncoderKind,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub ff_dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub vocab_min_count: u64,
    pub seed: u64,
}

impl Default for PropensitySection {
    fn default() -> Self {
        PropensitySection {
            encoder: EncoderKind::BiLstm,
            embed_dim: 24,
            hidden_dim: 24,
            ff_dim: 16,
            epochs: 5,
            learning_rate: 1e-3,
            batch_size: 64,
            vocab_min_count: 1,
            seed: 19,
        }
    }
}

impl PropensitySection {
    pub fn to_hyper(&self) -> PropensityHyper {
        PropensityHyper {
            encoder: self.encoder,
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            ff_dim: self.ff_dim,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            vocab_min_count: self.vocab_min_count,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSection {
    pub preset: String,
    pub encoder: EncoderKind,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub ff_dim: usize,
    pub learning_rate: f64,
    /// Adversary-phase learning rate; 0 means "follow learning_rate".
    pub adversary_learning_rate: f64,
    pub batch_size: usize,
    pub vocab_min_count: u64,
    pub n_adversaries: usize,
    pub seed: u64,
    pub classifier_epochs: usize,
    pub adversary_epochs: usize,
    pub cycles: usize,
    pub base_epochs: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            preset: "base".to_string(),
            encoder: EncoderKind::BiLstm,
            embed_dim: 24,
            hidden_dim: 24,
            ff_dim: 16,
            learning_rate: 1e-4,
            adversary_learning_rate: 0.0,
            batch_size: 64,
            vocab_min_count: 1,
            n_adversaries: 2,
            seed: 23,
            classifier_epochs: 3,
            adversary_epochs: 10,
            cycles: 3,
            base_epochs: 5,
        }
    }
}

impl ModelSection {
    pub fn preset(&self) -> Result<Preset> {
        self.preset.parse()
    }

    pub fn to_hyper(&self, demotion: bool) -> BiasHyper {
        BiasHyper {
            encoder: self.encoder,
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            ff_dim: self.ff_dim,
            learning_rate: self.learning_rate,
            adversary_learning_rate: (self.adversary_learning_rate > 0.0)
                .then_some(self.adversary_learning_rate),
            batch_size: self.batch_size,
            vocab_min_count: self.vocab_min_count,
            n_adversaries: self.n_adversaries,
            demotion,
            seed: self.seed,
            schedule: TrainSchedule {
                classifier_epochs: self.classifier_epochs,
                adversary_epochs: self.adversary_epochs,
                cycles: self.cycles,
                base_epochs: self.base_epochs,
            },
        }
    }
}

/// Prior as the string "auto" or a fixed positive total mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PriorValue {
    Auto(String),
    Fixed(f64),
}

impl Default for PriorValue {
    fn default() -> Self {
        PriorValue::Auto("auto".to_string())
    }
}

impl PriorValue {
    pub fn resolve(&self) -> Result<PriorAlpha> {
        match self {
            PriorValue::Fixed(v) => Ok(PriorAlpha::Fixed(*v)),
            PriorValue::Auto(s) if s.eq_ignore_ascii_case("auto") => Ok(PriorAlpha::Auto),
            PriorValue::Auto(s) => Err(Error::Config(format!(
                "prior_alpha must be \"auto\" or a number, got {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConfoundSection {
    pub min_count: u64,
    pub prior_alpha: PriorValue,
}

impl Default for ConfoundSection {
    fn default() -> Self {
        ConfoundSection {
            min_count: 5,
            prior_alpha: PriorValue::default(),
        }
    }
}

impl ConfoundSection {
    pub fn to_config(&self) -> Result<ConfoundConfig> {
        Ok(ConfoundConfig {
            min_count: self.min_count,
            prior_alpha: self.prior_alpha.resolve()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisSection {
    pub top_n: usize,
    /// Prediction-score threshold for the lexicon-differential high set.
    pub high_threshold: f64,
    /// Comment prediction-score bound for surfacing.
    pub comment_threshold: f64,
    /// Post propensity-score bound for surfacing.
    pub post_threshold: f64,
    pub english_filter: bool,
    pub seed: u64,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection {
            top_n: 500,
            high_threshold: 0.99,
            comment_threshold: 0.9,
            post_threshold: 0.6,
            english_filter: true,
            seed: 29,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineSection {
    pub seed: u64,
}

impl Default for BaselineSection {
    fn default() -> Self {
        BaselineSection { seed: 31 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSection {
    /// Held-out metrics treat this gender as the positive class.
    pub positive_class: String,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            positive_class: "F".to_string(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub paths: PathsSection,
    pub ingest: IngestSection,
    pub split: SplitSection,
    pub preprocess: PreprocessSection,
    #[serde(rename = "match")]
    pub matching: MatchSection,
    pub propensity: PropensitySection,
    pub model: ModelSection,
    pub confound: ConfoundSection,
    pub analysis: AnalysisSection,
    pub baseline: BaselineSection,
    pub eval: EvalSection,
    pub synth: SynthSpec,
}

/// Environment variable that overrides the output root.
pub const OUT_ENV: &str = "BIASLENS_OUT";

impl PipelineConfig {
    /// Parses TOML text, applies `key.path=value` overrides, then the
    /// `BIASLENS_OUT` environment variable.
    pub fn from_toml(text: &str, overrides: &[(String, String)]) -> Result<PipelineConfig> {
        let mut value: toml::Value = text
            .parse()
            .map_err(|e| Error::Config(format!("config parse error: {e}")))?;
        for (path, raw) in overrides {
            set_toml_path(&mut value, path, raw)?;
        }
        let mut cfg: PipelineConfig = value
            .try_into()
            .map_err(|e| Error::Config(format!("config field error: {e}")))?;
        if let Ok(dir) = std::env::var(OUT_ENV) {
            if !dir.is_empty() {
                cfg.paths.out_dir = dir;
            }
        }
        Ok(cfg)
    }

    pub fn from_path(path: &Path, overrides: &[(String, String)]) -> Result<PipelineConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        PipelineConfig::from_toml(&text, overrides)
    }

    pub fn out_dir(&self) -> PathBuf {
        if self.paths.out_dir.is_empty() {
            PathBuf::from("out")
        } else {
            PathBuf::from(&self.paths.out_dir)
        }
    }

    pub fn raw_path(&self) -> PathBuf {
        if self.paths.raw.is_empty() {
            self.out_dir().join("raw.tsv")
        } else {
            PathBuf::from(&self.paths.raw)
        }
    }

    pub fn delimiter(&self) -> Result<char> {
        let mut chars = self.ingest.delimiter.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => Ok(c),
            _ => Err(Error::Config(format!(
                "ingest.delimiter must be a single character, got {:?}",
                self.ingest.delimiter
            ))),
        }
    }

    pub fn match_config(&self) -> Result<MatchConfig> {
        Ok(MatchConfig {
            caliper: self.matching.caliper.resolve()?,
            seed: self.matching.seed,
        })
    }

    /// Collects every violation instead of stopping at the first.
    pub fn validate(&self) -> Result<()> {
        let mut violations = Vec::new();
        let ratio_sum: f64 = self.split.ratios.iter().sum();
        if (ratio_sum - 1.0).abs() > 1e-9 {
            violations.push(format!("split.ratios must sum to 1, got {ratio_sum}"));
        }
        if self.split.ratios.iter().any(|&r| r < 0.0) {
            violations.push("split.ratios must be non-negative".to_string());
        }
        if self.preprocess.min_tokens == 0 {
            violations.push("preprocess.min_tokens must be >= 1".to_string());
        }
        if let Err(e) = self.delimiter() {
            violations.push(e.to_string());
        }
        match self.matching.caliper.resolve() {
            Ok(Caliper::Fixed(v)) if v <= 0.0 => {
                violations.push(format!("match.caliper must be positive, got {v}"));
            }
            Err(e) => violations.push(e.to_string()),
            _ => {}
        }
        if let Err(e) = self.model.preset() {
            violations.push(e.to_string());
        }
        if let Err(e) = self.confound.prior_alpha.resolve() {
            violations.push(e.to_string());
        }
        for (name, v) in [
            ("propensity.embed_dim", self.propensity.embed_dim),
            ("propensity.hidden_dim", self.propensity.hidden_dim),
            ("propensity.ff_dim", self.propensity.ff_dim),
            ("propensity.epochs", self.propensity.epochs),
            ("model.embed_dim", self.model.embed_dim),
            ("model.hidden_dim", self.model.hidden_dim),
            ("model.ff_dim", self.model.ff_dim),
            ("model.classifier_epochs", self.model.classifier_epochs),
            ("model.adversary_epochs", self.model.adversary_epochs),
            ("model.cycles", self.model.cycles),
            ("model.base_epochs", self.model.base_epochs),
            ("model.n_adversaries", self.model.n_adversaries),
            ("analysis.top_n", self.analysis.top_n),
        ] {
            if v == 0 {
                violations.push(format!("{name} must be >= 1"));
            }
        }
        for (name, v) in [
            ("analysis.high_threshold", self.analysis.high_threshold),
            ("analysis.comment_threshold", self.analysis.comment_threshold),
            ("analysis.post_threshold", self.analysis.post_threshold),
        ] {
            if !(0.0..=1.0).contains(&v) {
                violations.push(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if crate::corpus::Gender::parse(&self.eval.positive_class).is_none() {
            violations.push(format!(
                "eval.positive_class must be M or F, got {:?}",
                self.eval.positive_class
            ));
        }
        if crate::corpus::Gender::parse(&self.matching.query_gender).is_none() {
            violations.push(format!(
                "match.query_gender must be M or F, got {:?}",
                self.matching.query_gender
            ));
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::ConfigViolations(violations))
        }
    }

    /// Canonical JSON used for the provenance config hash.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// The seeds that feed any seeded computation, for provenance records.
    pub fn seeds(&self) -> std::collections::BTreeMap<String, u64> {
        let mut seeds = std::collections::BTreeMap::new();
        seeds.insert("split".to_string(), self.split.seed);
        seeds.insert("match".to_string(), self.matching.seed);
        seeds.insert("propensity".to_string(), self.propensity.seed);
        seeds.insert("model".to_string(), self.model.seed);
        seeds.insert("analysis".to_string(), self.analysis.seed);
        seeds.insert("baseline".to_string(), self.baseline.seed);
        seeds.insert("synth".to_string(), self.synth.seed);
        seeds
    }
}

/// Sets `table.subtable.key = parsed(raw)` inside a TOML value, creating
/// intermediate tables as needed. The raw string is parsed as bool, then
/// integer, then float, then kept as a string.
pub fn set_toml_path(root: &mut toml::Value, path: &str, raw: &str) -> Result<()> {
    let parsed: toml::Value = if let Ok(b) = raw.parse::<bool>() {
        toml::Value::Boolean(b)
    } else if let Ok(i) = raw.parse::<i64>() {
        toml::Value::Integer(i)
    } else if let Ok(f) = raw.parse::<f64>() {
        toml::Value::Float(f)
    } else if raw.starts_with('[') {
        let doc: toml::Value = format!("x = {raw}")
            .parse()
            .map_err(|e| Error::Config(format!("override {path}={raw}: {e}")))?;
        doc.get("x")
            .cloned()
            .ok_or_else(|| Error::Config(format!("override {path}={raw}: not a value")))?
    } else {
        toml::Value::String(raw.to_string())
    };
    let parts: Vec<&str> = path.split('.').collect();
    if parts.is_empty() || parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override path {path:?}")));
    }
    let mut cursor = root;
    for part in &parts[..parts.len() - 1] {
        if !cursor.is_table() {
            return Err(Error::Config(format!(
                "override path {path:?} crosses a non-table value"
            )));
        }
        cursor = cursor
            .as_table_mut()
            .unwrap()
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    match cursor.as_table_mut() {
        Some(table) => {
            table.insert(parts[parts.len() - 1].to_string(), parsed);
            Ok(())
        }
        None => Err(Error::Config(format!(
            "override path {path:?} crosses a non-table value"
        ))),
    }
}
