use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::corpus::BpttSchedule;
use crate::error::{Error, Result};
use crate::model::{DropoutRates, ModelDims};
use crate::optim::{LogInterval, OptimConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Ptb,
    Wt2,
    Tiny,
}

impl Profile {
    pub const NAMES: [&'static str; 3] = ["ptb", "wt2", "tiny"];
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ptb" => Ok(Self::Ptb),
            "wt2" => Ok(Self::Wt2),
            "tiny" => Ok(Self::Tiny),
            _ => Err(Error::Config(format!(
                "unknown profile {s:?}; expected one of {}",
                Self::NAMES.join(", ")
            ))),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Ptb => "ptb",
            Self::Wt2 => "wt2",
            Self::Tiny => "tiny",
        })
    }
}

/// How the learning rate and averaging evolve over training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerMode {
    /// constant-rate SGD that switches to iterate averaging on the
    /// non-monotone validation criterion
    NtAsgd,
    /// constant-rate SGD, last iterate
    Sgd,
    /// SGD whose rate halves each time the non-monotone criterion fires
    HalvingSgd,
}

impl FromStr for OptimizerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nt-asgd" => Ok(Self::NtAsgd),
            "sgd" => Ok(Self::Sgd),
            "sgd-halving" => Ok(Self::HalvingSgd),
            _ => Err(Error::Config(format!(
                "unknown optimizer {s:?}; expected nt-asgd, sgd or sgd-halving"
            ))),
        }
    }
}

impl fmt::Display for OptimizerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::NtAsgd => "nt-asgd",
            Self::Sgd => "sgd",
            Self::HalvingSgd => "sgd-halving",
        })
    }
}

/// Every hyperparameter of a run. Serializes to `key = value` lines.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub profile: Profile,
    pub layers: usize,
    pub hidden: usize,
    pub embed: usize,
    pub batch: usize,
    pub eval_batch: usize,
    pub test_batch: usize,
    pub bptt: usize,
    pub bptt_std: f64,
    pub bptt_p: f64,
    pub variable_bptt: bool,
    pub dropout_input: f64,
    pub dropout_hidden: f64,
    pub dropout_output: f64,
    pub dropout_embed: f64,
    pub wdrop: f64,
    pub alpha: f64,
    pub beta: f64,
    pub lr: f64,
    pub clip: f64,
    /// decoupled; the default is a placeholder, not a tuned value
    pub weight_decay: f64,
    pub epochs: usize,
    pub finetune_epochs: usize,
    pub log_interval: LogInterval,
    pub nonmono: usize,
    pub optimizer: OptimizerMode,
    pub seed: u64,
    pub data: Option<PathBuf>,
    /// keep only the first N training tokens (0 keeps all)
    pub train_tokens: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::profile(Profile::Ptb)
    }
}

impl RunConfig {
    pub fn profile(profile: Profile) -> Self {
        let ptb = Self {
            profile,
            layers: 3,
            hidden: 1150,
            embed: 400,
            batch: 40,
            eval_batch: 10,
            test_batch: 1,
            bptt: 70,
            bptt_std: 5.0,
            bptt_p: 0.95,
            variable_bptt: true,
            dropout_input: 0.4,
            dropout_hidden: 0.3,
            dropout_output: 0.4,
            dropout_embed: 0.1,
            wdrop: 0.5,
            alpha: 2.0,
            beta: 1.0,
            lr: 30.0,
            clip: 0.25,
            weight_decay: 1.2e-6,
            epochs: 750,
            finetune_epochs: 750,
            log_interval: LogInterval::Epoch,
            nonmono: 5,
            optimizer: OptimizerMode::NtAsgd,
            seed: 141,
            data: None,
            train_tokens: 0,
        };
        match profile {
            Profile::Ptb => ptb,
            Profile::Wt2 => Self {
                batch: 80,
                dropout_input: 0.65,
                ..ptb
            },
            Profile::Tiny => Self {
                layers: 2,
                hidden: 64,
                embed: 32,
                batch: 4,
                eval_batch: 4,
                bptt: 20,
                bptt_std: 2.0,
                dropout_input: 0.1,
                dropout_hidden: 0.1,
                dropout_output: 0.1,
                dropout_embed: 0.05,
                wdrop: 0.1,
                alpha: 0.01,
                beta: 0.01,
                lr: 20.0,
                epochs: 30,
                finetune_epochs: 10,
                ..ptb
            },
        }
    }

    pub fn dims(&self, vocab: usize) -> ModelDims {
        ModelDims {
            vocab,
            embed: self.embed,
            hidden: self.hidden,
            layers: self.layers,
        }
    }

    pub fn dropout(&self) -> DropoutRates {
        DropoutRates {
            input: self.dropout_input,
            hidden: self.dropout_hidden,
            output: self.dropout_output,
            embedding: self.dropout_embed,
            weight: self.wdrop,
        }
    }

    pub fn bptt_schedule(&self) -> Result<BpttSchedule> {
        if self.variable_bptt {
            BpttSchedule::new(self.bptt, self.bptt_p, self.bptt_std)
        } else {
            BpttSchedule::fixed(self.bptt)
        }
    }

    pub fn optim(&self) -> OptimConfig {
        OptimConfig {
            lr: self.lr,
            clip_norm: self.clip,
            log_interval: self.log_interval,
            nonmono: self.nonmono,
            max_epochs: self.epochs,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| Error::Config(e.to_string());
        self.dims(1).validate().map_err(wrap)?;
        self.dropout().validate().map_err(wrap)?;
        self.bptt_schedule().map_err(wrap)?;
        self.optim().validate().map_err(wrap)?;
        if self.batch == 0 || self.eval_batch == 0 || self.test_batch == 0 {
            return Err(Error::Config("batch sizes must be positive".into()));
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(Error::Config("alpha and beta must be non-negative".into()));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config("weight_decay must be non-negative".into()));
        }
        Ok(())
    }

    /// `(key, value)` pairs in a fixed order. Floats use the shortest
    /// representation that parses back to the same value.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let log = match self.log_interval {
            LogInterval::Epoch => "epoch".to_string(),
            LogInterval::Steps(n) => n.to_string(),
        };
        vec![
            ("profile", self.profile.to_string()),
            ("layers", self.layers.to_string()),
            ("hidden", self.hidden.to_string()),
            ("embed", self.embed.to_string()),
            ("batch", self.batch.to_string()),
            ("eval_batch", self.eval_batch.to_string()),
            ("test_batch", self.test_batch.to_string()),
            ("bptt", self.bptt.to_string()),
            ("bptt_std", self.bptt_std.to_string()),
            ("bptt_p", self.bptt_p.to_string()),
            ("variable_bptt", self.variable_bptt.to_string()),
            ("dropout_input", self.dropout_input.to_string()),
            ("dropout_hidden", self.dropout_hidden.to_string()),
            ("dropout_output", self.dropout_output.to_string()),
            ("dropout_embed", self.dropout_embed.to_string()),
            ("wdrop", self.wdrop.to_string()),
            ("alpha", self.alpha.to_string()),
            ("beta", self.beta.to_string()),
            ("lr", self.lr.to_string()),
            ("clip", self.clip.to_string()),
            ("weight_decay", self.weight_decay.to_string()),
            ("epochs", self.epochs.to_string()),
            ("finetune_epochs", self.finetune_epochs.to_string()),
            ("log_interval", log),
            ("nonmono", self.nonmono.to_string()),
            ("optimizer", self.optimizer.to_string()),
            ("seed", self.seed.to_string()),
            (
                "data",
                self.data.as_deref().map(|p| p.display().to_string()).unwrap_or_default(),
            ),
            ("train_tokens", self.train_tokens.to_string()),
        ]
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
        }
        let v = value.trim();
        match key.trim() {
            "profile" => self.profile = v.parse()?,
            "layers" => self.layers = parse(key, v)?,
            "hidden" => self.hidden = parse(key, v)?,
            "embed" => self.embed = parse(key, v)?,
            "batch" => self.batch = parse(key, v)?,
            "eval_batch" => self.eval_batch = parse(key, v)?,
            "test_batch" => self.test_batch = parse(key, v)?,
            "bptt" => self.bptt = parse(key, v)?,
            "bptt_std" => self.bptt_std = parse(key, v)?,
            "bptt_p" => self.bptt_p = parse(key, v)?,
            "variable_bptt" => self.variable_bptt = parse(key, v)?,
            "dropout_input" => self.dropout_input = parse(key, v)?,
            "dropout_hidden" => self.dropout_hidden = parse(key, v)?,
            "dropout_output" => self.dropout_output = parse(key, v)?,
            "dropout_embed" => self.dropout_embed = parse(key, v)?,
            "wdrop" => self.wdrop = parse(key, v)?,
            "alpha" => self.alpha = parse(key, v)?,
            "beta" => self.beta = parse(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "clip" => self.clip = parse(key, v)?,
            "weight_decay" => self.weight_decay = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "finetune_epochs" => self.finetune_epochs = parse(key, v)?,
            "log_interval" => {
                self.log_interval = if v == "epoch" {
                    LogInterval::Epoch
                } else {
                    LogInterval::Steps(parse(key, v)?)
                }
            }
            "nonmono" => self.nonmono = parse(key, v)?,
            "optimizer" => self.optimizer = v.parse()?,
            "seed" => self.seed = parse(key, v)?,
            "data" => self.data = (!v.is_empty()).then(|| PathBuf::from(v)),
            "train_tokens" => self.train_tokens = parse(key, v)?,
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines. Blank lines and `#` comments are skipped.
    /// A `profile` line, if present, resets every key to that profile's
    /// defaults before the remaining lines apply, wherever it appears.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut pairs = Vec::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", no + 1)))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        if let Some((_, p)) = pairs.iter().rev().find(|(k, _)| k == "profile") {
            *self = Self::profile(p.parse()?);
        }
        for (k, v) in pairs.iter().filter(|(k, _)| k != "profile") {
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    /// The fully resolved configuration as `key = value` lines.
    pub fn dump(&self) -> String {
        self.entries().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Keys whose values differ from `other`.
    pub fn diff(&self, other: &Self) -> Vec<&'static str> {
        self.entries()
            .into_iter()
            .zip(other.entries())
            .filter(|(a, b)| a.1 != b.1)
            .map(|(a, _)| a.0)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ptb_defaults() {
        let c = RunConfig::default();
        assert_eq!((c.layers, c.hidden, c.embed), (3, 1150, 400));
        assert_eq!((c.lr, c.clip), (30.0, 0.25));
        assert_eq!(
            (c.dropout_input, c.dropout_hidden, c.dropout_output, c.dropout_embed),
            (0.4, 0.3, 0.4, 0.1)
        );
        assert_eq!((c.wdrop, c.alpha, c.beta, c.nonmono), (0.5, 2.0, 1.0, 5));
        assert_eq!((c.epochs, c.batch), (750, 40));
        assert_eq!((c.bptt, c.bptt_std, c.bptt_p), (70, 5.0, 0.95));
        assert_eq!(c.log_interval, LogInterval::Epoch);
        c.validate().unwrap();
    }

    #[test]
    fn wt2_differs_in_batch_and_input_dropout() {
        let wt2 = RunConfig::profile(Profile::Wt2);
        assert_eq!((wt2.batch, wt2.dropout_input), (80, 0.65));
        assert_eq!(wt2.diff(&RunConfig::default()), vec!["profile", "batch", "dropout_input"]);
    }

    #[test]
    fn tiny_shape() {
        let t = RunConfig::profile(Profile::Tiny);
        assert_eq!((t.layers, t.hidden, t.embed, t.batch, t.bptt), (2, 64, 32, 4, 20));
        t.validate().unwrap();
    }

    #[test]
    fn dump_round_trips() {
        let mut c = RunConfig::profile(Profile::Tiny);
        c.weight_decay = 3.3e-7;
        c.data = Some("/tmp/x y".into());
        c.log_interval = LogInterval::Steps(17);
        c.optimizer = OptimizerMode::HalvingSgd;
        assert_eq!(RunConfig::from_text(&c.dump()).unwrap(), c);
    }

    #[test]
    fn file_overrides_profile_defaults() {
        let c = RunConfig::from_text("# comment\nhidden = 32 # trailing\n\nprofile = tiny\n").unwrap();
        assert_eq!(c.profile, Profile::Tiny);
        assert_eq!(c.hidden, 32);
        assert_eq!(c.embed, 32);
    }

    #[test]
    fn bad_input_rejected() {
        assert!(RunConfig::from_text("hiden = 3").is_err());
        assert!(RunConfig::from_text("hidden 3").is_err());
        assert!(RunConfig::from_text("hidden = many").is_err());
        assert!(RunConfig::from_text("profile = big").is_err());
        let c = RunConfig {
            embed: 2000,
            ..RunConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
