use std::fs;
use std::path::{Path, PathBuf};

use crate::corpus::{batchify, next_window, rescale_lr, Corpus};
use crate::error::{Error, Result};
use crate::model::{evaluate_ids, forward, init_parameters, lm_loss, HiddenState, LMParameters, MaskSet};
use crate::numerics::{Rng, Tape};
use crate::optim::{
    clip_global_norm, decay_weights, nonmonotone_criterion, sgd_step, LogInterval, StoppingRule, TrainerState,
};

use super::checkpoint::{Checkpoint, MetricLine, Phase};
use super::config::{OptimizerMode, RunConfig};

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const BEST_FILE: &str = "best.bin";
pub const FINAL_FILE: &str = "final.bin";
pub const FINETUNED_FILE: &str = "finetuned.bin";
pub const METRICS_FILE: &str = "metrics.tsv";

/// Single-process training run over 32-bit parameters.
pub struct Trainer {
    config: RunConfig,
    corpus: Corpus,
    params: LMParameters<f32>,
    optimizer: TrainerState,
    stop: StoppingRule,
    rng: Rng,
    phase: Phase,
    epoch: u64,
    lr: f64,
    best_valid: f64,
    history: Vec<MetricLine>,
    stopped: bool,
    out_dir: Option<PathBuf>,
}

impl Trainer {
    /// Fresh run. The training stream is cut to `train_tokens` when set.
    pub fn new(config: RunConfig, corpus: Corpus) -> Result<Self> {
        config.validate()?;
        let corpus = prepare(&config, corpus)?;
        let mut rng = Rng::new(config.seed);
        let params = init_parameters(config.dims(corpus.vocab.len()), &mut rng)?;
        Ok(Self {
            lr: config.lr,
            stop: StoppingRule::new(config.nonmono),
            config,
            corpus,
            params,
            optimizer: TrainerState::new(),
            rng,
            phase: Phase::Train,
            epoch: 0,
            best_valid: f64::INFINITY,
            history: Vec::new(),
            stopped: false,
            out_dir: None,
        })
    }

    /// Continues from a checkpoint taken at an epoch boundary.
    pub fn resume(ckpt: Checkpoint<f32>, corpus: Corpus) -> Result<Self> {
        check_vocab(&ckpt.vocab, &corpus)?;
        let corpus = prepare(&ckpt.config, corpus)?;
        let mut stop = StoppingRule::new(ckpt.config.nonmono);
        stop.logs = ckpt.stop_logs;
        let stopped = ckpt.phase == Phase::FineTune
            && stop.logs.len() >= 2
            && nonmonotone_criterion(&stop.logs[..stop.logs.len() - 1], stop.logs[stop.logs.len() - 1], stop.nonmono);
        Ok(Self {
            config: ckpt.config,
            corpus,
            params: ckpt.params,
            optimizer: ckpt.optimizer,
            stop,
            rng: Rng::from_state(ckpt.rng),
            phase: ckpt.phase,
            epoch: ckpt.epoch,
            lr: ckpt.lr,
            best_valid: ckpt.best_valid,
            history: ckpt.history,
            stopped,
            out_dir: None,
        })
    }

    /// Writes metrics and checkpoints under `dir` after every epoch.
    pub fn with_output(mut self, dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        self.out_dir = Some(dir);
        Ok(self)
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn params(&self) -> &LMParameters<f32> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut LMParameters<f32> {
        &mut self.params
    }

    pub fn optimizer(&self) -> &TrainerState {
        &self.optimizer
    }

    pub fn rng(&self) -> &Rng {
        &self.rng
    }

    pub fn history(&self) -> &[MetricLine] {
        &self.history
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn best_valid(&self) -> f64 {
        self.best_valid
    }

    pub fn is_done(&self) -> bool {
        match self.phase {
            Phase::Train => self.epoch >= self.config.epochs as u64,
            Phase::FineTune => self.stopped || self.epoch >= self.config.finetune_epochs as u64,
        }
    }

    /// Weights used for validation and export: the iterate average once
    /// averaging has started, the current iterate otherwise.
    pub fn eval_params(&self) -> Result<LMParameters<f32>> {
        let mut p = self.params.clone();
        if self.optimizer.avg_count > 0 {
            p.load_values(&self.optimizer.finalize(&self.params.tensors()).values)?;
        }
        Ok(p)
    }

    /// One pass over the training stream followed by validation.
    pub fn train_epoch(&mut self) -> Result<MetricLine> {
        let cfg = self.config.clone();
        let dims = self.params.dims;
        let batch = cfg.batch;
        let rates = cfg.dropout();
        let schedule = cfg.bptt_schedule()?;
        let data = batchify(&self.corpus.train, batch)?;
        let mut state = HiddenState::zeros(dims, batch);
        let mut cursor = 0;
        let (mut loss_sum, mut tokens) = (0.0, 0usize);

        while cursor + 1 < data.stream_len() {
            let sample = schedule.sample(&mut self.rng);
            let Some(w) = next_window(&data, cursor, sample.len) else {
                break;
            };
            let step_lr = rescale_lr(self.lr, w.len, cfg.bptt);
            let masks = MaskSet::sample(dims, &rates, batch, &mut self.rng)?;

            let mut tape = Tape::new();
            let out = forward(&mut tape, &self.params, &masks, &w.inputs, batch, &state)?;
            let terms = lm_loss(
                &mut tape,
                out.logits,
                &w.targets,
                out.raw_output,
                out.dropped_output,
                batch,
                cfg.alpha,
                cfg.beta,
            )?;
            let ce = tape.scalar(terms.cross_entropy) as f64;
            let grads = tape.backward(terms.total)?;
            self.params.accumulate_grads(&grads, &out.params)?;

            let mut tensors = self.params.tensors_mut();
            clip_global_norm(&mut tensors, cfg.clip)?;
            decay_weights(&mut tensors, step_lr, cfg.weight_decay);
            sgd_step(&mut tensors, step_lr);
            self.optimizer.step();
            if self.optimizer.triggered() {
                self.optimizer.accumulate_average(&self.params.tensors())?;
            }

            loss_sum += ce * (w.len * batch) as f64;
            tokens += w.len * batch;
            state = out.state;
            cursor = w.next_cursor;

            if let LogInterval::Steps(every) = self.config.log_interval {
                if self.optimizer.k.is_multiple_of(every) {
                    let v = self.validate()?;
                    self.record_check(v)?;
                }
            }
        }
        if tokens == 0 {
            return Err(Error::Corpus("training stream is too short for one window".into()));
        }

        let v = self.validate()?;
        if self.config.log_interval == LogInterval::Epoch {
            self.record_check(v)?;
        }
        self.epoch += 1;
        let line = MetricLine {
            epoch: self.history.len() as u64 + 1,
            train_ppl: (loss_sum / tokens as f64).exp(),
            valid_ppl: v,
            lr: self.lr,
            triggered: self.optimizer.triggered(),
        };
        self.history.push(line);
        log::info!("{}", line.tsv());
        self.persist_epoch(v)?;
        Ok(line)
    }

    /// Validation perplexity of [`Trainer::eval_params`].
    pub fn validate(&self) -> Result<f64> {
        let p = self.eval_params()?;
        Ok(evaluate_ids(&p, &self.corpus.valid, self.config.eval_batch, self.config.bptt)?.perplexity)
    }

    fn record_check(&mut self, v: f64) -> Result<()> {
        let n = self.config.nonmono;
        match (self.phase, self.config.optimizer) {
            (Phase::FineTune, _) => {
                if self.stop.check(v) {
                    log::info!("fine-tuning stopped by the non-monotone criterion");
                    self.stopped = true;
                }
            }
            (Phase::Train, OptimizerMode::NtAsgd) => {
                if self.optimizer.nt_asgd_check(v, n) {
                    log::info!("averaging triggered at step {}", self.optimizer.k);
                    self.optimizer.accumulate_average(&self.params.tensors())?;
                }
            }
            (Phase::Train, OptimizerMode::HalvingSgd) => {
                if nonmonotone_criterion(&self.optimizer.logs, v, n) {
                    self.lr /= 2.0;
                    self.optimizer.logs.clear();
                    log::info!("learning rate halved to {}", self.lr);
                }
                self.optimizer.logs.push(v);
                self.optimizer.t += 1;
            }
            (Phase::Train, OptimizerMode::Sgd) => {
                self.optimizer.logs.push(v);
                self.optimizer.t += 1;
            }
        }
        Ok(())
    }

    fn persist_epoch(&mut self, v: f64) -> Result<()> {
        let improved = v < self.best_valid;
        if improved {
            self.best_valid = v;
        }
        let Some(dir) = self.out_dir.clone() else {
            return Ok(());
        };
        let mut tsv = String::from(MetricLine::HEADER);
        tsv.push('\n');
        for m in &self.history {
            tsv.push_str(&m.tsv());
            tsv.push('\n');
        }
        fs::write(dir.join(METRICS_FILE), tsv)?;
        self.checkpoint().save(dir.join(CHECKPOINT_FILE))?;
        if improved {
            self.export(self.eval_params()?).save(dir.join(BEST_FILE))?;
        }
        Ok(())
    }

    /// Full resumable state.
    pub fn checkpoint(&self) -> Checkpoint<f32> {
        Checkpoint {
            config: self.config.clone(),
            vocab: self.corpus.vocab.tokens().to_vec(),
            params: self.params.clone(),
            optimizer: self.optimizer.clone(),
            stop_logs: self.stop.logs.clone(),
            rng: self.rng.state(),
            phase: self.phase,
            epoch: self.epoch,
            lr: self.lr,
            best_valid: self.best_valid,
            history: self.history.clone(),
        }
    }

    /// The current state with `params` in place of the training iterate.
    pub fn export(&self, params: LMParameters<f32>) -> Checkpoint<f32> {
        Checkpoint {
            params,
            ..self.checkpoint()
        }
    }

    /// Trains until the phase's epoch budget (or stop rule) is exhausted.
    pub fn run(&mut self) -> Result<()> {
        while !self.is_done() {
            self.train_epoch()?;
        }
        if let Some(dir) = &self.out_dir {
            let name = match self.phase {
                Phase::Train => FINAL_FILE,
                Phase::FineTune => FINETUNED_FILE,
            };
            self.export(self.eval_params()?).save(dir.join(name))?;
        }
        Ok(())
    }

    /// Switches to fine-tuning: restart from the current exported weights
    /// with averaging active from the first step, stopping on the
    /// non-monotone criterion.
    pub fn start_finetune(&mut self) -> Result<()> {
        self.params = self.eval_params()?;
        self.params.zero_grads();
        self.optimizer = TrainerState::new();
        self.optimizer.force_trigger();
        self.optimizer.accumulate_average(&self.params.tensors())?;
        self.stop = StoppingRule::new(self.config.nonmono);
        self.phase = Phase::FineTune;
        self.epoch = 0;
        self.lr = self.config.lr;
        self.stopped = false;
        Ok(())
    }
}

fn prepare(config: &RunConfig, mut corpus: Corpus) -> Result<Corpus> {
    if config.train_tokens > 0 && corpus.train.len() > config.train_tokens {
        corpus.train.truncate(config.train_tokens);
    }
    if corpus.train.len() < 2 * config.batch {
        return Err(Error::Corpus(format!(
            "training stream of {} tokens is too short for batch {}",
            corpus.train.len(),
            config.batch
        )));
    }
    if corpus.valid.len() < 2 * config.eval_batch {
        return Err(Error::Corpus(format!(
            "validation stream of {} tokens is too short for batch {}",
            corpus.valid.len(),
            config.eval_batch
        )));
    }
    Ok(corpus)
}

/// Rejects a corpus whose vocabulary differs from the checkpoint's.
pub fn check_vocab(expected: &[String], corpus: &Corpus) -> Result<()> {
    let got = corpus.vocab.tokens();
    if got == expected {
        return Ok(());
    }
    let first = expected.iter().zip(got).position(|(a, b)| a != b);
    Err(Error::VocabMismatch(match first {
        Some(i) => format!("entry {i} is {:?} in the checkpoint but {:?} in the corpus", expected[i], got[i]),
        None => format!("checkpoint has {} words, corpus has {}", expected.len(), got.len()),
    }))
}

/// Loads the corpus for a run from `config.data`, failing before any
/// compute if files are missing.
pub fn load_corpus(config: &RunConfig) -> Result<Corpus> {
    let dir = config
        .data
        .as_deref()
        .ok_or_else(|| Error::Config("no data directory configured".into()))?;
    Corpus::load(&crate::corpus::CorpusPaths::in_dir(dir))
}

/// Trains from scratch, writing artifacts under `out_dir`, and returns the
/// finished trainer.
pub fn train(config: RunConfig, corpus: Corpus, out_dir: Option<&Path>) -> Result<Trainer> {
    let mut t = Trainer::new(config, corpus)?;
    if let Some(dir) = out_dir {
        t = t.with_output(dir)?;
    }
    log::info!("effective config:\n{}", t.config.dump());
    t.run()?;
    Ok(t)
}

/// Fine-tunes a finished run.
pub fn fine_tune(ckpt: Checkpoint<f32>, corpus: Corpus, out_dir: Option<&Path>) -> Result<Trainer> {
    let mut t = Trainer::resume(ckpt, corpus)?;
    if let Some(dir) = out_dir {
        t = t.with_output(dir)?;
    }
    if t.phase == Phase::Train {
        t.start_finetune()?;
    }
    t.run()?;
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::Profile;

    fn corpus() -> Corpus {
        let train = "a b c d a b c d e\n".repeat(12);
        let valid = "a b c d e\n".repeat(4);
        Corpus::from_texts(&train, &valid, &valid).unwrap()
    }

    fn config() -> RunConfig {
        RunConfig {
            hidden: 8,
            embed: 4,
            batch: 2,
            eval_batch: 2,
            bptt: 6,
            epochs: 3,
            finetune_epochs: 2,
            ..RunConfig::profile(Profile::Tiny)
        }
    }

    #[test]
    fn seeded_runs_repeat_exactly() {
        let a = train(config(), corpus(), None).unwrap();
        let b = train(config(), corpus(), None).unwrap();
        assert_eq!(a.history(), b.history());
        assert_eq!(a.history().len(), 3);
        assert_eq!(a.params(), b.params());
    }

    #[test]
    fn training_reduces_validation_perplexity() {
        let c = RunConfig {
            epochs: 6,
            lr: 5.0,
            ..config()
        };
        let t = train(c, corpus(), None).unwrap();
        let h = t.history();
        assert!(h.last().unwrap().valid_ppl < h[0].valid_ppl, "{h:?}");
    }

    #[test]
    fn halving_mode_halves_on_criterion() {
        let mut t = Trainer::new(
            RunConfig {
                optimizer: OptimizerMode::HalvingSgd,
                nonmono: 1,
                ..config()
            },
            corpus(),
        )
        .unwrap();
        for v in [5.0, 4.0, 6.0] {
            t.record_check(v).unwrap();
        }
        assert_eq!(t.lr(), config().lr / 2.0);
        assert_eq!(t.optimizer().logs, vec![6.0]);
        assert!(!t.optimizer().triggered());
    }

    #[test]
    fn finetune_averages_from_the_start() {
        let t = train(config(), corpus(), None).unwrap();
        let ckpt = t.checkpoint();
        let ft = fine_tune(ckpt, corpus(), None).unwrap();
        assert_eq!(ft.phase(), Phase::FineTune);
        assert_eq!(ft.optimizer().trigger, Some(0));
        assert!(ft.epoch() >= 1 && ft.epoch() <= 2);
        assert_eq!(ft.history().len(), 3 + ft.epoch() as usize);
    }

    #[test]
    fn writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        train(config(), corpus(), Some(dir.path())).unwrap();
        for f in [CHECKPOINT_FILE, BEST_FILE, FINAL_FILE, METRICS_FILE] {
            assert!(dir.path().join(f).is_file(), "{f}");
        }
        let tsv = fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap();
        assert_eq!(tsv.lines().count(), 4);
        assert!(tsv.starts_with(MetricLine::HEADER));
    }

    #[test]
    fn too_short_corpus_rejected() {
        let c = Corpus::from_texts("a\n", "a b\n", "a\n").unwrap();
        assert!(Trainer::new(config(), c).is_err());
    }

    #[test]
    fn vocab_mismatch_rejected() {
        let t = Trainer::new(config(), corpus()).unwrap();
        let other = Corpus::from_texts(&"x y z\n".repeat(20), "x y\n", "x\n").unwrap();
        let err = Trainer::resume(t.checkpoint(), other).err().unwrap();
        assert!(matches!(err, Error::VocabMismatch(_)));
    }
}
