use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{Grid, MissingMode};
use crate::elbo::Objective;
use crate::error::{Error, Result};
use crate::kernels::KernelConfig;
use crate::neighbours::SpaOrdering;
use crate::nets::{Activation, LikelihoodFamily};
use crate::predict::DEFAULT_EVAL_SAMPLES;

/// A training run. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_run_id")]
    pub run_id: String,
    pub model: Objective,
    /// Conditioning-set size; ignored by `vae` and `gpvae_full`.
    #[serde(rename = "H", default)]
    pub h: usize,
    #[serde(default = "one")]
    pub beta: f64,
    pub latent_dim: usize,
    /// One entry per latent channel, or a single entry shared by all.
    pub kernels: Vec<KernelConfig>,
    pub encoder: NetConfig,
    pub decoder: NetConfig,
    pub likelihood: LikelihoodFamily,
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub seed: u64,
    pub data: DataSource,
    #[serde(default)]
    pub missing: Option<MissingConfig>,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub spa_ordering: SpaOrdering,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    #[serde(default = "default_lr")]
    pub lr: f64,
    pub epochs: usize,
    /// Full batch when absent.
    #[serde(default)]
    pub batch_size: Option<usize>,
    /// When false the kernel hyperparameters stay at their initial values.
    #[serde(default = "yes")]
    pub train_kernels: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// An NNTS dataset file.
    Path(PathBuf),
    /// Fresh videos every epoch; evaluation on separately seeded test batches.
    MovingBall {
        #[serde(default = "default_videos")]
        videos_per_epoch: usize,
        #[serde(default = "default_ball_lengthscale")]
        lengthscale: f64,
        #[serde(default = "default_test_batches")]
        test_batches: usize,
    },
    /// Latent GP draws observed through the identity map plus noise.
    GpSeries {
        n: usize,
        #[serde(default = "one_usize")]
        d: usize,
        grid: Grid,
        kernel: KernelConfig,
        #[serde(default)]
        noise: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissingConfig {
    pub rate: f64,
    #[serde(default)]
    pub mode: MissingMode,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default = "default_samples")]
    pub samples: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { samples: DEFAULT_EVAL_SAMPLES }
    }
}

fn default_run_id() -> String {
    "run".into()
}
fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn one_usize() -> usize {
    1
}
fn default_lr() -> f64 {
    1e-3
}
fn default_videos() -> usize {
    35
}
fn default_ball_lengthscale() -> f64 {
    2.0
}
fn default_test_batches() -> usize {
    10
}
fn default_samples() -> usize {
    DEFAULT_EVAL_SAMPLES
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: RunConfig = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.latent_dim == 0 {
            return bad("latent_dim must be positive".into());
        }
        if self.kernels.len() != 1 && self.kernels.len() != self.latent_dim {
            return bad(format!("{} kernels for {} latent channels", self.kernels.len(), self.latent_dim));
        }
        if !(self.optimizer.lr > 0.0) {
            return bad(format!("lr must be positive, got {}", self.optimizer.lr));
        }
        if self.optimizer.batch_size == Some(0) {
            return bad("batch_size must be positive".into());
        }
        if !(self.beta >= 0.0) {
            return bad(format!("beta must be non-negative, got {}", self.beta));
        }
        if self.model == Objective::GpvaeHpa && self.h == 0 {
            return bad("gpvae_hpa needs H >= 1".into());
        }
        if self.model == Objective::GpvaeFull && self.optimizer.batch_size.is_some() {
            return bad("gpvae_full trains on the full batch only".into());
        }
        if self.eval.samples == 0 {
            return bad("eval.samples must be positive".into());
        }
        if self.encoder.hidden.contains(&0) || self.decoder.hidden.contains(&0) {
            return bad("hidden widths must be positive".into());
        }
        if let Some(m) = self.missing {
            if !(0.0..1.0).contains(&m.rate) {
                return bad(format!("missing rate {} outside [0, 1)", m.rate));
            }
        }
        match &self.data {
            DataSource::MovingBall { videos_per_epoch, lengthscale, test_batches } => {
                if *videos_per_epoch == 0 || *test_batches == 0 || !(*lengthscale > 0.0) {
                    return bad("moving_ball needs positive videos_per_epoch, test_batches and lengthscale".into());
                }
            }
            DataSource::GpSeries { n, d, .. } => {
                if *n == 0 || *d == 0 {
                    return bad("gp_series needs positive n and d".into());
                }
            }
            DataSource::Path(_) => {}
        }
        Ok(())
    }

    /// Kernel settings for channel `l`.
    pub fn kernel(&self, l: usize) -> &KernelConfig {
        &self.kernels[if self.kernels.len() == 1 { 0 } else { l }]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BALL: &str = r#"{
        "run_id": "ball",
        "model": "gpvae_spa",
        "H": 5,
        "latent_dim": 2,
        "kernels": [{"kind": "rbf", "lengthscale": 2.0, "outputscale": 1.0}],
        "encoder": {"hidden": [500], "activation": "tanh"},
        "decoder": {"hidden": [500]},
        "likelihood": "bernoulli",
        "optimizer": {"lr": 0.001, "epochs": 10},
        "data": {"moving_ball": {}}
    }"#;

    #[test]
    fn parses_with_defaults() {
        let c = RunConfig::from_json(BALL).unwrap();
        assert_eq!(c.h, 5);
        assert_eq!(c.beta, 1.0);
        assert_eq!(c.eval.samples, 20);
        assert_eq!(c.data, DataSource::MovingBall { videos_per_epoch: 35, lengthscale: 2.0, test_batches: 10 });
        assert_eq!(RunConfig::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let typo = BALL.replace("\"beta\"", "x").replace("\"H\": 5", "\"H\": 5, \"betta\": 2");
        assert!(matches!(RunConfig::from_json(&typo), Err(Error::Json(_))));
        let lr = BALL.replace("0.001", "0");
        assert!(matches!(RunConfig::from_json(&lr), Err(Error::Config(_))));
        let ker = BALL.replace("\"latent_dim\": 2", "\"latent_dim\": 3").replace("}],", "}, {\"kind\": \"rbf\", \"lengthscale\": 1.0, \"outputscale\": 1.0}],");
        assert!(matches!(RunConfig::from_json(&ker), Err(Error::Config(_))));
    }
}
