use std::fmt;
use std::str::FromStr;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::model::evaluate_ids;

use super::config::{OptimizerMode, RunConfig};
use super::train::{train, Trainer};

/// A single technique switched off relative to the baseline run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ablation {
    FineTuning,
    NtAsgdToSgd,
    VariableLengths,
    EmbeddingDropout,
    WeightDecay,
    ArTar,
    FullSizedEmbedding,
    WeightDropping,
}

impl Ablation {
    pub const ALL: [Ablation; 8] = [
        Self::FineTuning,
        Self::NtAsgdToSgd,
        Self::VariableLengths,
        Self::EmbeddingDropout,
        Self::WeightDecay,
        Self::ArTar,
        Self::FullSizedEmbedding,
        Self::WeightDropping,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::FineTuning => "fine-tuning",
            Self::NtAsgdToSgd => "NT-ASGD",
            Self::VariableLengths => "variable-lengths",
            Self::EmbeddingDropout => "embedding-dropout",
            Self::WeightDecay => "weight-decay",
            Self::ArTar => "AR/TAR",
            Self::FullSizedEmbedding => "full-sized-embedding",
            Self::WeightDropping => "weight-dropping",
        }
    }

    /// The baseline with this technique removed. Fine-tuning is removed by
    /// giving it no epochs.
    pub fn apply(self, base: &RunConfig) -> RunConfig {
        let mut c = base.clone();
        match self {
            Self::FineTuning => c.finetune_epochs = 0,
            Self::NtAsgdToSgd => c.optimizer = OptimizerMode::HalvingSgd,
            Self::VariableLengths => c.variable_bptt = false,
            Self::EmbeddingDropout => c.dropout_embed = 0.0,
            Self::WeightDecay => c.weight_decay = 0.0,
            Self::ArTar => {
                c.alpha = 0.0;
                c.beta = 0.0;
            }
            Self::FullSizedEmbedding => c.embed = c.hidden,
            Self::WeightDropping => c.wdrop = 0.0,
        }
        c
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase();
        let alias = match norm.as_str() {
            "nt-asgd->sgd" | "nt-asgd-to-sgd" | "sgd" => "nt-asgd",
            "ar-tar" | "artar" => "ar/tar",
            other => other,
        };
        Self::ALL
            .into_iter()
            .find(|a| a.name().to_ascii_lowercase() == alias)
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|a| a.name()).collect();
                Error::Config(format!("unknown ablation {s:?}; valid names: {}", names.join(", ")))
            })
    }
}

/// One row of the ablation table.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub name: String,
    pub valid_ppl: f64,
    pub test_ppl: f64,
    pub params: usize,
    /// keys that differ from the baseline config
    pub changed: Vec<&'static str>,
}

impl AblationRow {
    pub const HEADER: &'static str = "model\tvalidation\ttest\tparams\tchanged";

    pub fn tsv(&self) -> String {
        format!(
            "{}\t{:.1}\t{:.1}\t{}\t{}",
            self.name,
            self.valid_ppl,
            self.test_ppl,
            self.params,
            self.changed.join(",")
        )
    }
}

/// Trains (and fine-tunes, when it has epochs) one configuration and scores
/// the final weights. `ablation = None` runs the baseline.
pub fn ablate(base: &RunConfig, ablation: Option<Ablation>, corpus: &Corpus) -> Result<AblationRow> {
    let config = match ablation {
        Some(a) => a.apply(base),
        None => base.clone(),
    };
    let changed = config.diff(base);
    log::info!("effective config:\n{}", config.dump());
    let mut t: Trainer = train(config.clone(), corpus.clone(), None)?;
    if config.finetune_epochs > 0 {
        t.start_finetune()?;
        t.run()?;
    }
    let p = t.eval_params()?;
    let valid = evaluate_ids(&p, &t.corpus().valid, config.eval_batch, config.bptt)?;
    let test = evaluate_ids(&p, &t.corpus().test, config.test_batch, config.bptt)?;
    Ok(AblationRow {
        name: match ablation {
            Some(a) => format!("-- {a}"),
            None => "baseline".into(),
        },
        valid_ppl: valid.perplexity,
        test_ppl: test.perplexity,
        params: p.param_count(),
        changed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::Profile;

    #[test]
    fn names_parse() {
        for a in Ablation::ALL {
            assert_eq!(a.name().parse::<Ablation>().unwrap(), a);
        }
        assert_eq!("nt-asgd->sgd".parse::<Ablation>().unwrap(), Ablation::NtAsgdToSgd);
        let err = "dropout".parse::<Ablation>().unwrap_err().to_string();
        assert!(err.contains("weight-dropping"), "{err}");
    }

    #[test]
    fn each_ablation_changes_only_its_keys() {
        let base = RunConfig::default();
        let expected: [&[&str]; 8] = [
            &["finetune_epochs"],
            &["optimizer"],
            &["variable_bptt"],
            &["dropout_embed"],
            &["weight_decay"],
            &["alpha", "beta"],
            &["embed"],
            &["wdrop"],
        ];
        for (a, keys) in Ablation::ALL.into_iter().zip(expected) {
            assert_eq!(a.apply(&base).diff(&base), keys.to_vec(), "{a}");
        }
    }

    #[test]
    fn full_sized_embedding_grows_the_model() {
        let base = RunConfig::profile(Profile::Tiny);
        let big = Ablation::FullSizedEmbedding.apply(&base);
        let count = |c: &RunConfig| {
            crate::model::LMParameters::<f32>::zeros(c.dims(1000)).unwrap().param_count()
        };
        assert!(count(&big) > count(&base));
    }
}
