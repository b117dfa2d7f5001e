//! Adversarial robustness toolkit for small feed-forward classifiers.
//!
//! The crate trains classifiers with natural, adversarial (robust
//! optimization) or adversarial-logit-pairing objectives and evaluates them
//! with L∞ PGD attacks, epsilon sweeps, exhaustive 2D worst-case search,
//! loss-landscape grids and attack-trajectory statistics.

pub mod attacks;
pub mod checkpoint;
pub mod datasets;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod landscape;
pub mod manifest;
pub mod network;
pub mod rng;
pub mod tensor;
pub mod training;

pub use attacks::{
    attack_many, pgd, pgd_targeted, pgd_untargeted, pgd_warm, project_linf, sample_target,
    trajectory_csv, trajectory_file_name, AttackConfig, AttackMode, AttackResult,
};
pub use checkpoint::{load_checkpoint, load_checkpoint_expecting, save_checkpoint};
pub use datasets::{gen_gaussian_blobs, gen_two_spirals, load_idx, split, Dataset};
pub use error::{Error, Result};
pub use evaluation::{
    attack_summary_csv, clean_accuracy, exact_worst_case_2d, steps_to_success_stats,
    targeted_sweep, untargeted_sweep, SweepConfig, SweepReport,
};
pub use landscape::{
    grad_sign_dir, landscape_grid, landscape_grid_with, rademacher, LandscapeGrid, LandscapeOptions,
};
pub use network::{
    forward_logits, grad_input, grad_params, init_params, logit_distance, loss_xent, predict,
    Example, Gradient, Layer, LogitDistance, ModelSpec, Parameters,
};
pub use tensor::Tensor;
pub use training::{
    train_adversarial, train_alp, train_natural, AlpConfig, InnerAttackMode, TrainConfig,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
