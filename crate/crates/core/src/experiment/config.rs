use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::collab::{DefenseConfig, Mode, RoundConfig};
use crate::data::{SplitFractions, SyntheticSpec};
use crate::error::{Error, Result};
use crate::eval::TrimRule;
use crate::privacy::AuditConfig;

/// The six compared configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Centralized,
    Fedavg,
    Split,
    Hybrid,
    HybridPers,
    HybridDef,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Centralized,
        Method::Fedavg,
        Method::Split,
        Method::Hybrid,
        Method::HybridPers,
        Method::HybridDef,
    ];

    /// Display name used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            Method::Centralized => "Centralized",
            Method::Fedavg => "FedAvg",
            Method::Split => "Split",
            Method::Hybrid => "Hybrid",
            Method::HybridPers => "Hybrid+Pers.",
            Method::HybridDef => "Hybrid+Def.",
        }
    }

    /// File-name and config key.
    pub fn key(self) -> &'static str {
        match self {
            Method::Centralized => "centralized",
            Method::Fedavg => "fedavg",
            Method::Split => "split",
            Method::Hybrid => "hybrid",
            Method::HybridPers => "hybrid_pers",
            Method::HybridDef => "hybrid_def",
        }
    }

    pub fn mode(self) -> Mode {
        match self {
            Method::Centralized => Mode::Centralized,
            Method::Fedavg => Mode::Fedavg,
            Method::Split => Mode::Split,
            Method::Hybrid | Method::HybridPers | Method::HybridDef => Mode::Hybrid,
        }
    }

    pub fn is_split_based(self) -> bool {
        self.mode().is_split_based()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSection {
    pub n_per_client: usize,
    pub clients: usize,
    pub features: usize,
    pub client_shift_scale: f64,
    pub effect_scale: f64,
    /// Generator seed; the dataset is fixed across experiment seeds.
    pub seed: u64,
    pub propensity_weights: Option<Vec<f64>>,
    pub baseline_weights: Option<Vec<f64>>,
    pub effect_weights: Option<Vec<f64>>,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        Self {
            n_per_client: 1000,
            clients: 3,
            features: 8,
            client_shift_scale: 0.5,
            effect_scale: 1.0,
            seed: 0,
            propensity_weights: None,
            baseline_weights: None,
            effect_weights: None,
        }
    }
}

impl SyntheticSection {
    pub fn spec(&self) -> SyntheticSpec {
        let mut spec = SyntheticSpec::with_defaults(self.n_per_client, self.clients, self.features);
        spec.client_shift_scale = self.client_shift_scale;
        spec.effect_scale = self.effect_scale;
        if let Some(w) = &self.propensity_weights {
            spec.propensity_weights = w.clone();
        }
        if let Some(w) = &self.baseline_weights {
            spec.baseline_weights = w.clone();
        }
        if let Some(w) = &self.effect_weights {
            spec.effect_weights = w.clone();
        }
        spec
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSection {
    pub path: PathBuf,
    #[serde(default = "default_treatment")]
    pub treatment: String,
    #[serde(default = "default_outcome")]
    pub outcome: String,
    #[serde(default = "default_client")]
    pub client: String,
    #[serde(default)]
    pub features: Option<Vec<String>>,
}

fn default_treatment() -> String {
    "t".into()
}
fn default_outcome() -> String {
    "y".into()
}
fn default_client() -> String {
    "client_id".into()
}

/// Exactly one source may be set; with neither, the synthetic defaults apply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// Label in the `dataset` report column.
    #[serde(default = "default_dataset_name")]
    pub name: String,
    #[serde(default)]
    pub synthetic: Option<SyntheticSection>,
    #[serde(default)]
    pub csv: Option<CsvSection>,
}

fn default_dataset_name() -> String {
    "synthetic".into()
}

impl DatasetConfig {
    /// The synthetic section in effect, if the dataset is synthetic.
    pub fn synthetic_section(&self) -> Option<SyntheticSection> {
        match (&self.synthetic, &self.csv) {
            (Some(s), _) => Some(s.clone()),
            (None, None) => Some(SyntheticSection::default()),
            (None, Some(_)) => None,
        }
    }
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            name: "synthetic".into(),
            synthetic: Some(SyntheticSection::default()),
            csv: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub rounds: usize,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub lr_client: f64,
    pub lr_server: f64,
    pub participation: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            rounds: 5,
            local_epochs: 1,
            batch_size: 256,
            lr_client: 1e-3,
            lr_server: 1e-3,
            participation: 1.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingOverride {
    pub rounds: Option<usize>,
    pub local_epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr_client: Option<f64>,
    pub lr_server: Option<f64>,
    pub participation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodsConfig {
    pub list: Vec<Method>,
    pub overrides: BTreeMap<Method, TrainingOverride>,
}

impl Default for MethodsConfig {
    fn default() -> Self {
        Self {
            list: Method::ALL.to_vec(),
            overrides: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DefenseSection {
    pub clip_norm: f64,
    pub noise_sigma: f64,
}

impl Default for DefenseSection {
    fn default() -> Self {
        Self {
            clip_norm: 1.0,
            noise_sigma: 0.05,
        }
    }
}

impl DefenseSection {
    pub fn config(&self) -> DefenseConfig {
        DefenseConfig {
            clip_norm: self.clip_norm,
            noise_sigma: self.noise_sigma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub method: Method,
    pub sigmas: Vec<f64>,
    pub clips: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            method: Method::Hybrid,
            sigmas: vec![0.0, 0.05, 0.5],
            clips: vec![1.0, f64::INFINITY],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditSection {
    pub enabled: bool,
    pub sample_size: Option<usize>,
    pub attacker_train_fraction: f64,
    pub permute_labels: bool,
}

impl Default for AuditSection {
    fn default() -> Self {
        Self {
            enabled: true,
            sample_size: None,
            attacker_train_fraction: 0.5,
            permute_labels: false,
        }
    }
}

impl AuditSection {
    pub fn config(&self, seed: u64) -> AuditConfig {
        AuditConfig {
            sample_size: self.sample_size,
            attacker_train_fraction: self.attacker_train_fraction,
            seed,
            permute_labels: self.permute_labels,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrimMode {
    Alpha,
    Quantile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub trim: TrimMode,
    pub alpha: f64,
    pub quantile: f64,
    pub grid_points: usize,
    pub baseline_reps: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            trim: TrimMode::Alpha,
            alpha: 0.05,
            quantile: 0.10,
            grid_points: 100,
            baseline_reps: 20,
        }
    }
}

impl EvaluationConfig {
    pub fn rule(&self) -> TrimRule {
        match self.trim {
            TrimMode::Alpha => TrimRule::Alpha(self.alpha),
            TrimMode::Quantile => TrimRule::Quantile(self.quantile),
        }
    }

    pub fn grid(&self) -> Vec<f64> {
        (1..=self.grid_points).map(|k| k as f64 / self.grid_points as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    pub seeds: Vec<u64>,
    pub dataset: DatasetConfig,
    pub split: SplitFractions,
    pub training: TrainingConfig,
    pub methods: MethodsConfig,
    pub defense: DefenseSection,
    pub sweep: SweepConfig,
    pub audit: AuditSection,
    pub evaluation: EvaluationConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("results"),
            seeds: vec![0, 1, 2],
            dataset: DatasetConfig::default(),
            split: SplitFractions::default(),
            training: TrainingConfig::default(),
            methods: MethodsConfig::default(),
            defense: DefenseSection::default(),
            sweep: SweepConfig::default(),
            audit: AuditSection::default(),
            evaluation: EvaluationConfig::default(),
        }
    }
}

fn key_err(key: &str, message: impl Into<String>) -> Error {
    Error::config(key, message)
}

fn check_lr(key: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(key_err(key, format!("must be a positive finite number, got {v}")))
    }
}

fn check_training(prefix: &str, rounds: usize, epochs: usize, batch: usize, lrc: f64, lrs: f64, part: f64) -> Result<()> {
    for (name, v) in [("rounds", rounds), ("local_epochs", epochs), ("batch_size", batch)] {
        if v == 0 {
            return Err(key_err(&format!("{prefix}.{name}"), "must be >= 1"));
        }
    }
    check_lr(&format!("{prefix}.lr_client"), lrc)?;
    check_lr(&format!("{prefix}.lr_server"), lrs)?;
    if !(part > 0.0 && part <= 1.0) {
        return Err(key_err(&format!("{prefix}.participation"), format!("must be in (0, 1], got {part}")));
    }
    Ok(())
}

impl ExperimentConfig {
    /// Parses TOML text; unknown keys are errors.
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let key = e.span().map(|s| text[s].trim().to_string()).unwrap_or_default();
            key_err(if key.is_empty() { "<document>" } else { &key }, e.message().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Training settings of `method` after per-method overrides.
    pub fn training_for(&self, method: Method) -> TrainingConfig {
        let mut t = self.training.clone();
        if let Some(o) = self.methods.overrides.get(&method) {
            t.rounds = o.rounds.unwrap_or(t.rounds);
            t.local_epochs = o.local_epochs.unwrap_or(t.local_epochs);
            t.batch_size = o.batch_size.unwrap_or(t.batch_size);
            t.lr_client = o.lr_client.unwrap_or(t.lr_client);
            t.lr_server = o.lr_server.unwrap_or(t.lr_server);
            t.participation = o.participation.unwrap_or(t.participation);
        }
        t
    }

    pub fn round_config(&self, method: Method, seed: u64) -> RoundConfig {
        let t = self.training_for(method);
        let mut rc = RoundConfig::new(method.mode(), seed);
        rc.rounds = t.rounds;
        rc.local_epochs = t.local_epochs;
        rc.batch_size = t.batch_size;
        rc.lr_client = t.lr_client;
        rc.lr_server = t.lr_server;
        // sampling only applies to aggregating modes
        rc.participation = if matches!(method.mode(), Mode::Fedavg | Mode::Hybrid) { t.participation } else { 1.0 };
        rc.personalization = method == Method::HybridPers;
        rc.defense = (method == Method::HybridDef).then(|| self.defense.config());
        rc
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(key_err("seeds", "at least one seed is required"));
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(key_err("seeds", "seeds must be distinct"));
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(key_err("output_dir", "must not be empty"));
        }
        match (&self.dataset.synthetic, &self.dataset.csv) {
            (Some(_), Some(_)) => {
                return Err(key_err("dataset", "set exactly one of [dataset.synthetic] and [dataset.csv]"))
            }
            (None, None) => SyntheticSection::default()
                .spec()
                .validate()
                .map_err(|e| key_err("dataset.synthetic", e.to_string()))?,
            (Some(s), None) => s
                .spec()
                .validate()
                .map_err(|e| key_err("dataset.synthetic", e.to_string()))?,
            (None, Some(c)) => {
                if c.path.as_os_str().is_empty() {
                    return Err(key_err("dataset.csv.path", "must not be empty"));
                }
            }
        }
        if self.dataset.name.trim().is_empty() {
            return Err(key_err("dataset.name", "must not be empty"));
        }
        self.split.validate().map_err(|e| key_err("split", e.to_string()))?;
        let t = &self.training;
        check_training("training", t.rounds, t.local_epochs, t.batch_size, t.lr_client, t.lr_server, t.participation)?;
        if self.methods.list.is_empty() {
            return Err(key_err("methods.list", "at least one method is required"));
        }
        let mut listed = self.methods.list.clone();
        listed.sort_unstable();
        if listed.windows(2).any(|w| w[0] == w[1]) {
            return Err(key_err("methods.list", "methods must be distinct"));
        }
        for m in self.methods.overrides.keys() {
            let t = self.training_for(*m);
            check_training(
                &format!("methods.overrides.{}", m.key()),
                t.rounds,
                t.local_epochs,
                t.batch_size,
                t.lr_client,
                t.lr_server,
                t.participation,
            )?;
        }
        self.defense.config().validate().map_err(|e| key_err("defense", e.to_string()))?;
        if !self.sweep.method.is_split_based() {
            return Err(key_err("sweep.method", "the privacy sweep needs a split-based method"));
        }
        if self.sweep.sigmas.is_empty() || self.sweep.clips.is_empty() {
            return Err(key_err("sweep", "sigmas and clips must be non-empty"));
        }
        for &s in &self.sweep.sigmas {
            if !(s.is_finite() && s >= 0.0) {
                return Err(key_err("sweep.sigmas", format!("must be finite and >= 0, got {s}")));
            }
        }
        for &c in &self.sweep.clips {
            if c.is_nan() || c <= 0.0 {
                return Err(key_err("sweep.clips", format!("must be > 0 (inf disables clipping), got {c}")));
            }
        }
        self.audit
            .config(0)
            .validate()
            .map_err(|e| key_err("audit", e.to_string()))?;
        let ev = &self.evaluation;
        if !(0.0..0.5).contains(&ev.alpha) {
            return Err(key_err("evaluation.alpha", format!("must be in [0, 0.5), got {}", ev.alpha)));
        }
        if !(0.0..1.0).contains(&ev.quantile) {
            return Err(key_err("evaluation.quantile", format!("must be in [0, 1), got {}", ev.quantile)));
        }
        if ev.grid_points == 0 {
            return Err(key_err("evaluation.grid_points", "must be >= 1"));
        }
        if ev.baseline_reps == 0 {
            return Err(key_err("evaluation.baseline_reps", "must be >= 1"));
        }
        Ok(())
    }
}
