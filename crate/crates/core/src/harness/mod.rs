//! Configuration, checkpoints, the training loop, evaluation and ablations.

mod ablate;
mod checkpoint;
mod config;
mod eval;
pub mod synth;
mod train;

pub use ablate::{ablate, Ablation, AblationRow};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, MetricLine, Phase, MAGIC, VERSION};
pub use config::{OptimizerMode, Profile, RunConfig};
pub use eval::{evaluate, Split};
pub use train::{
    check_vocab, fine_tune, load_corpus, train, Trainer, BEST_FILE, CHECKPOINT_FILE, FINAL_FILE, FINETUNED_FILE,
    METRICS_FILE,
};
