//! Training settings from a TOML file and command-line flags. Flags win.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Deserialize;
use vmreg::harness::TrainConfig;
use vmreg::heads::{HeadKind, KappaSetting, LatentConfig};
use vmreg::neuralnet::{Activation, LayerSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadName {
    Fixed,
    Vm,
    Mixture,
    Cvae,
    Scvae,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationName {
    Relu,
    Tanh,
    Identity,
}

impl From<ActivationName> for Activation {
    fn from(a: ActivationName) -> Self {
        match a {
            ActivationName::Relu => Activation::Relu,
            ActivationName::Tanh => Activation::Tanh,
            ActivationName::Identity => Activation::Identity,
        }
    }
}

/// `kappa = 2.5` or `kappa = "fit"` in a config file.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum KappaValue {
    Number(f64),
    Word(String),
}

/// Keys of a config file; all optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    head: Option<HeadName>,
    k: Option<usize>,
    latent: Option<usize>,
    s_train: Option<usize>,
    s_eval: Option<usize>,
    kappa: Option<KappaValue>,
    hidden: Option<Vec<usize>>,
    activation: Option<ActivationName>,
    learning_rate: Option<f64>,
    beta1: Option<f64>,
    beta2: Option<f64>,
    epsilon: Option<f64>,
    batch_size: Option<usize>,
    max_epochs: Option<usize>,
    patience: Option<usize>,
    seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// TOML file with training settings
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub head: Option<HeadName>,
    /// Mixture components
    #[arg(long)]
    pub k: Option<usize>,
    /// Latent dimension of the cvae / scvae heads
    #[arg(long)]
    pub latent: Option<usize>,
    /// Latent draws per example during training
    #[arg(long = "s-train")]
    pub s_train: Option<usize>,
    /// Latent draws per example at evaluation
    #[arg(long = "s-eval")]
    pub s_eval: Option<usize>,
    /// Concentration of the fixed head, or `fit` to choose it after training
    #[arg(long)]
    pub kappa: Option<String>,
    /// Hidden layer widths, e.g. `64,64`
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    pub activation: Option<ActivationName>,
    #[arg(long = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
}

fn read_file(path: &Path) -> Result<ConfigFile, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    toml::from_str(&text).map_err(|e| format!("bad config {}: {e}", path.display()))
}

fn parse_kappa(s: &str) -> Result<KappaSetting, String> {
    if s.eq_ignore_ascii_case("fit") {
        return Ok(KappaSetting::FitAfterTraining);
    }
    s.parse::<f64>()
        .map(KappaSetting::Fixed)
        .map_err(|_| format!("kappa must be a number or `fit`, got {s:?}"))
}

impl ModelArgs {
    /// Merges defaults, the config file and the flags, in that order.
    pub fn resolve(&self, seed: Option<u64>) -> Result<TrainConfig, String> {
        let file = match &self.config {
            Some(p) => read_file(p)?,
            None => ConfigFile::default(),
        };
        let defaults = LatentConfig::default();
        let latent = LatentConfig {
            latent_dim: self.latent.or(file.latent).unwrap_or(defaults.latent_dim),
            train_samples: self.s_train.or(file.s_train).unwrap_or(defaults.train_samples),
            eval_samples: self.s_eval.or(file.s_eval).unwrap_or(defaults.eval_samples),
        };
        let kappa = match (&self.kappa, &file.kappa) {
            (Some(s), _) => parse_kappa(s)?,
            (None, Some(KappaValue::Number(k))) => KappaSetting::Fixed(*k),
            (None, Some(KappaValue::Word(w))) => parse_kappa(w)?,
            (None, None) => KappaSetting::FitAfterTraining,
        };
        let head = match self.head.or(file.head).unwrap_or(HeadName::Vm) {
            HeadName::Fixed => HeadKind::FixedKappa { kappa },
            HeadName::Vm => HeadKind::SingleVonMises,
            HeadName::Mixture => HeadKind::FiniteMixture {
                components: self.k.or(file.k).unwrap_or(4),
            },
            HeadName::Cvae => HeadKind::Cvae(latent),
            HeadName::Scvae => HeadKind::Scvae(latent),
        };

        let mut cfg = TrainConfig::new(head);
        let activation = self.activation.or(file.activation).map(Activation::from);
        if let Some(widths) = self.hidden.clone().or(file.hidden) {
            let act = activation.unwrap_or(cfg.hidden[0].activation);
            cfg.hidden = widths.into_iter().map(|u| LayerSpec::new(u, act)).collect();
        } else if let Some(act) = activation {
            cfg.hidden.iter_mut().for_each(|l| l.activation = act);
        }
        let o = &mut cfg.optimizer;
        o.learning_rate = self.learning_rate.or(file.learning_rate).unwrap_or(o.learning_rate);
        o.beta1 = file.beta1.unwrap_or(o.beta1);
        o.beta2 = file.beta2.unwrap_or(o.beta2);
        o.epsilon = file.epsilon.unwrap_or(o.epsilon);
        cfg.batch_size = self.batch_size.or(file.batch_size).unwrap_or(cfg.batch_size);
        cfg.max_epochs = self.max_epochs.or(file.max_epochs).unwrap_or(cfg.max_epochs);
        cfg.patience = self.patience.or(file.patience).unwrap_or(cfg.patience);
        cfg.seed = seed.or(file.seed).unwrap_or(0);
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args() -> ModelArgs {
        ModelArgs {
            config: None,
            head: None,
            k: None,
            latent: None,
            s_train: None,
            s_eval: None,
            kappa: None,
            hidden: None,
            activation: None,
            learning_rate: None,
            batch_size: None,
            max_epochs: None,
            patience: None,
        }
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "head = \"mixture\"\nk = 3\npatience = 4\nseed = 9\nkappa = \"fit\"\n").unwrap();
        let mut a = args();
        a.config = Some(path);
        a.k = Some(6);
        let cfg = a.resolve(None).unwrap();
        assert_eq!(cfg.head, HeadKind::FiniteMixture { components: 6 });
        assert_eq!((cfg.patience, cfg.seed), (4, 9));
        assert_eq!(a.resolve(Some(1)).unwrap().seed, 1);
    }

    #[test]
    fn kappa_forms() {
        let mut a = args();
        a.head = Some(HeadName::Fixed);
        a.kappa = Some("2.5".into());
        assert_eq!(
            a.resolve(None).unwrap().head,
            HeadKind::FixedKappa {
                kappa: KappaSetting::Fixed(2.5)
            }
        );
        a.kappa = Some("wide".into());
        assert!(a.resolve(None).is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "heads = \"vm\"\n").unwrap();
        let mut a = args();
        a.config = Some(path);
        assert!(a.resolve(None).is_err());
    }

    #[test]
    fn hidden_and_activation() {
        let mut a = args();
        a.hidden = Some(vec![8, 4]);
        a.activation = Some(ActivationName::Relu);
        let cfg = a.resolve(None).unwrap();
        assert_eq!(cfg.hidden, vec![LayerSpec::new(8, Activation::Relu), LayerSpec::new(4, Activation::Relu)]);
    }
}
