//! Declarative experiment configuration (TOML).
//!
//! Every tuned default lives here so a config file only has to name what it
//! overrides. See `configs/` in the repository root for annotated examples.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use recveil::attack::{AttackerConfig, GbtConfig, MlpConfig};
use recveil::data::{FilterMode, GenericFormat, RatingsFormat, UsersFormat};
use recveil::recsys::ModelKind;
use recveil::synth::MovieLensLikeConfig;
use recveil::unlearn::{Bandwidth, LossKind, UnlearnConfig};
use recveil::{derive_seed, SplitRatios, TrainConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Output directory; `--out` overrides.
    pub out_dir: Option<PathBuf>,
    /// Base seed; repeat `i` derives its seeds from `seed + i`. `--seed`
    /// overrides.
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub model: ModelSpec,
    /// Unlearning runs; defaults to one D2D-R and one U2U-R entry.
    #[serde(default = "default_unlearn_specs", rename = "unlearn")]
    pub unlearn: Vec<UnlearnSpec>,
    #[serde(default)]
    pub attack: AttackSpec,
    #[serde(default)]
    pub retrain: RetrainSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
}

fn default_seed() -> u64 {
    42
}

fn default_repeats() -> usize {
    10
}

fn default_unlearn_specs() -> Vec<UnlearnSpec> {
    vec![
        UnlearnSpec {
            loss: "d2d-r".into(),
            ..UnlearnSpec::default()
        },
        UnlearnSpec {
            loss: "u2u-r".into(),
            ..UnlearnSpec::default()
        },
    ]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    /// Dataset label used in report rows.
    pub name: String,
    /// `files` (default) or `synthetic`.
    #[serde(default = "default_source")]
    pub source: String,
    pub ratings: Option<PathBuf>,
    pub users: Option<PathBuf>,
    /// `ml100k`, `ml1m` or `generic`.
    #[serde(default = "default_format")]
    pub format: String,
    #[serde(default = "default_min_interactions")]
    pub min_interactions: usize,
    #[serde(default)]
    pub filter_single_pass: bool,
    #[serde(default = "default_ratios")]
    pub ratios: [f64; 3],
    pub generic: Option<GenericSpec>,
    pub synthetic: Option<SyntheticSpec>,
}

fn default_source() -> String {
    "files".into()
}

fn default_format() -> String {
    "ml100k".into()
}

fn default_min_interactions() -> usize {
    5
}

fn default_ratios() -> [f64; 3] {
    [0.8, 0.1, 0.1]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenericSpec {
    pub delimiter: String,
    pub user_col: usize,
    pub item_col: usize,
    pub rating_col: Option<usize>,
    pub timestamp_col: Option<usize>,
}

/// Synthetic corpus: a named profile plus optional overrides.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    /// `ml100k-shaped` or `small`.
    #[serde(default = "default_profile")]
    pub profile: String,
    pub n_users: Option<usize>,
    pub n_items: Option<usize>,
    pub n_interactions: Option<usize>,
    pub gender_tilt: Option<f64>,
    pub seed: Option<u64>,
}

fn default_profile() -> String {
    "small".into()
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// `mf` (default) or `lightgcn`.
    pub kind: Option<String>,
    pub embedding_dim: Option<usize>,
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub negatives: Option<usize>,
    pub init_std: Option<f64>,
    pub layers: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct UnlearnSpec {
    /// `d2d-r` or `u2u-r`.
    #[serde(default = "default_loss")]
    pub loss: String,
    pub alpha: Option<f64>,
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    /// `"median"` or a fixed positive bandwidth.
    pub bandwidth: Option<toml::Value>,
    pub batch_rows: Option<usize>,
}

fn default_loss() -> String {
    "d2d-r".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    #[serde(default = "default_fraction")]
    pub fraction: f64,
    pub mlp_hidden: Option<usize>,
    pub mlp_l2: Option<f64>,
    pub mlp_max_iterations: Option<usize>,
    pub gbt_rounds: Option<usize>,
    pub gbt_max_depth: Option<usize>,
    pub gbt_shrinkage: Option<f64>,
}

fn default_fraction() -> f64 {
    0.1
}

impl Default for AttackSpec {
    fn default() -> Self {
        AttackSpec {
            fraction: default_fraction(),
            mlp_hidden: None,
            mlp_l2: None,
            mlp_max_iterations: None,
            gbt_rounds: None,
            gbt_max_depth: None,
            gbt_shrinkage: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrainSpec {
    #[serde(default = "default_lambda")]
    pub lambda: f64,
}

fn default_lambda() -> f64 {
    1.0
}

impl Default for RetrainSpec {
    fn default() -> Self {
        RetrainSpec {
            lambda: default_lambda(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "default_loss")]
    pub loss: String,
}

fn default_alphas() -> Vec<f64> {
    vec![1e-6, 1e-4, 1e-2, 1.0]
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            alphas: default_alphas(),
            loss: default_loss(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ExperimentConfig = toml::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats < 1 {
            bail!("config key repeats: must be >= 1");
        }
        match self.dataset.source.as_str() {
            "files" => {
                if self.dataset.ratings.is_none() {
                    bail!("config key dataset.ratings: required when dataset.source = \"files\"");
                }
            }
            "synthetic" => {}
            other => bail!("config key dataset.source: unknown value {other:?}"),
        }
        self.model_kind()?;
        for (i, spec) in self.unlearn.iter().enumerate() {
            spec.loss
                .parse::<LossKind>()
                .with_context(|| format!("config key unlearn[{i}].loss"))?;
        }
        self.sweep
            .loss
            .parse::<LossKind>()
            .context("config key sweep.loss")?;
        if !(self.attack.fraction > 0.0 && self.attack.fraction < 1.0) {
            bail!("config key attack.fraction: must be in (0, 1)");
        }
        Ok(())
    }

    pub fn model_kind(&self) -> Result<ModelKind> {
        match self.model.kind.as_deref().unwrap_or("mf") {
            "mf" => Ok(ModelKind::Mf),
            "lightgcn" => Ok(ModelKind::LightGcn),
            other => bail!("config key model.kind: unknown value {other:?}"),
        }
    }

    pub fn ratings_format(&self) -> Result<RatingsFormat> {
        match self.dataset.format.as_str() {
            "ml100k" => Ok(RatingsFormat::Ml100k),
            "ml1m" => Ok(RatingsFormat::Ml1m),
            "generic" => {
                let g = self
                    .dataset
                    .generic
                    .as_ref()
                    .context("config key dataset.generic: required for format = \"generic\"")?;
                Ok(RatingsFormat::Generic(GenericFormat {
                    delimiter: g.delimiter.clone(),
                    user_col: g.user_col,
                    item_col: g.item_col,
                    rating_col: g.rating_col,
                    timestamp_col: g.timestamp_col,
                }))
            }
            other => bail!("config key dataset.format: unknown value {other:?}"),
        }
    }

    pub fn users_format(&self) -> Result<UsersFormat> {
        match self.dataset.format.as_str() {
            "ml1m" => Ok(UsersFormat::Ml1m),
            _ => Ok(UsersFormat::Ml100k),
        }
    }

    pub fn filter_mode(&self) -> FilterMode {
        if self.dataset.filter_single_pass {
            FilterMode::SinglePass
        } else {
            FilterMode::Fixpoint
        }
    }

    pub fn split_ratios(&self) -> SplitRatios {
        SplitRatios {
            train: self.dataset.ratios[0],
            val: self.dataset.ratios[1],
            test: self.dataset.ratios[2],
        }
    }

    pub fn synthetic_config(&self) -> Result<MovieLensLikeConfig> {
        let spec = self.dataset.synthetic.clone().unwrap_or(SyntheticSpec {
            profile: default_profile(),
            n_users: None,
            n_items: None,
            n_interactions: None,
            gender_tilt: None,
            seed: None,
        });
        let seed = spec.seed.unwrap_or(derive_seed(self.seed, 0xDA7A));
        let mut cfg = match spec.profile.as_str() {
            "ml100k-shaped" => MovieLensLikeConfig::ml100k_shaped(seed),
            "small" => MovieLensLikeConfig::small(seed),
            other => bail!("config key dataset.synthetic.profile: unknown value {other:?}"),
        };
        if let Some(v) = spec.n_users {
            cfg.n_users = v;
        }
        if let Some(v) = spec.n_items {
            cfg.n_items = v;
        }
        if let Some(v) = spec.n_interactions {
            cfg.n_interactions = v;
        }
        if let Some(v) = spec.gender_tilt {
            cfg.gender_tilt = v;
        }
        Ok(cfg)
    }

    /// Training config for one repeat.
    pub fn train_config(&self, seed: u64) -> Result<TrainConfig> {
        let mut cfg = match self.model_kind()? {
            ModelKind::Mf => TrainConfig::mf(seed),
            ModelKind::LightGcn => TrainConfig::lightgcn(seed),
        };
        let m = &self.model;
        if let Some(v) = m.embedding_dim {
            cfg.embedding_dim = v;
        }
        if let Some(v) = m.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = m.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = m.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = m.negatives {
            cfg.negatives = v;
        }
        if let Some(v) = m.init_std {
            cfg.init_std = v;
        }
        if let Some(v) = m.layers {
            cfg.layers = v;
        }
        Ok(cfg)
    }

    pub fn unlearn_config(&self, spec: &UnlearnSpec, seed: u64) -> Result<UnlearnConfig> {
        let kind: LossKind = spec.loss.parse()?;
        let mut cfg = match kind {
            LossKind::D2dReg => UnlearnConfig::d2d(seed),
            LossKind::U2uReg => UnlearnConfig::u2u(seed),
        };
        if let Some(v) = spec.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = spec.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = spec.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = &spec.bandwidth {
            cfg.mmd_bandwidth = parse_bandwidth(v)?;
        }
        cfg.batch_rows = spec.batch_rows;
        Ok(cfg)
    }

    pub fn attacker_config(&self, seed: u64) -> AttackerConfig {
        let mut cfg = AttackerConfig::new(seed);
        let a = &self.attack;
        let mlp: &mut MlpConfig = &mut cfg.mlp;
        if let Some(v) = a.mlp_hidden {
            mlp.hidden = v;
        }
        if let Some(v) = a.mlp_l2 {
            mlp.l2_weight = v;
        }
        if let Some(v) = a.mlp_max_iterations {
            mlp.max_iterations = v;
        }
        let gbt: &mut GbtConfig = &mut cfg.gbt;
        if let Some(v) = a.gbt_rounds {
            gbt.rounds = v;
        }
        if let Some(v) = a.gbt_max_depth {
            gbt.max_depth = v;
        }
        if let Some(v) = a.gbt_shrinkage {
            gbt.shrinkage = v;
        }
        cfg
    }

    /// Stable hash of the effective configuration.
    pub fn config_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let canonical = toml::to_string(self).unwrap_or_default();
        let digest = Sha256::digest(canonical.as_bytes());
        let mut out = String::with_capacity(16);
        for byte in digest.iter().take(8) {
            out.push_str(&format!("{byte:02x}"));
        }
        out
    }
}

fn parse_bandwidth(value: &toml::Value) -> Result<Bandwidth> {
    match value {
        toml::Value::String(s) if s == "median" => Ok(Bandwidth::Median),
        toml::Value::Float(f) if *f > 0.0 => Ok(Bandwidth::Fixed(*f)),
        toml::Value::Integer(i) if *i > 0 => Ok(Bandwidth::Fixed(*i as f64)),
        other => bail!("config key unlearn.bandwidth: expected \"median\" or a positive number, got {other:?}"),
    }
}
