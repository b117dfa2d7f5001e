//! Natural, adversarial and adversarial-logit-pairing training.
//!
//! All three trainers share one minibatch SGD loop over the composite
//! per-example objective
//!
//! ```text
//! [clean]·L(θ, x, y) + [adv]·L(θ, x_adv, y) + λ·D(f(θ, x), f(θ, x_adv))
//! ```
//!
//! where `x_adv` comes from an inner PGD attack against the current
//! parameters and is held fixed while differentiating. Natural training is
//! `clean` alone, adversarial training is `adv` alone with an untargeted
//! inner attack. Terms that are switched off, or weighted by `λ = 0`, are
//! never evaluated, so reduced objectives produce bit-identical parameters
//! to the dedicated trainers.
//!
//! Seeds: parameters start from `init_params(spec, seed)`; the example
//! order of epoch `e` is a shuffle seeded by `derive_seed(seed, [1, e])`;
//! example `i` of epoch `e` attacks with seed `derive_seed(seed, [2, e, i])`
//! and draws its random target from `derive_seed(seed, [3, e, i])`.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacks::{pgd, sample_target, AttackConfig, AttackMode};
use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::evaluation::clean_accuracy;
use crate::network::{
    cross_entropy, init_params, xent_logit_grad, Example, Gradient, LogitDistance, ModelSpec,
    Parameters,
};
use crate::rng::{derive_seed, Rng};
use crate::tensor::Tensor;

const ORDER_STREAM: u64 = 1;
const ATTACK_STREAM: u64 = 2;
const TARGET_STREAM: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 32,
            learning_rate: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidTrainConfig(
                "epochs and batch_size must be positive".into(),
            ));
        }
        // A zero learning rate is allowed: it leaves the initialization untouched.
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidTrainConfig(format!(
                "learning_rate must be >= 0, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// How the inner attack picks its goal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerAttackMode {
    /// Descend the loss of a uniformly drawn wrong class.
    TargetedRandom,
    /// Ascend the loss of the true class.
    Untargeted,
}

/// Default inner attack for training: 10 steps of size `ε/4`.
pub fn default_inner_attack(epsilon: f64) -> AttackConfig {
    AttackConfig {
        alpha: if epsilon > 0.0 { epsilon / 4.0 } else { 1e-3 },
        max_steps: 10,
        ..AttackConfig::with_epsilon(epsilon)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlpConfig {
    pub lambda: f64,
    pub inner_attack_mode: InnerAttackMode,
    pub include_clean_loss: bool,
    pub include_adv_loss: bool,
    pub distance: LogitDistance,
    pub inner_attack: AttackConfig,
}

impl Default for AlpConfig {
    fn default() -> Self {
        AlpConfig {
            lambda: 0.5,
            inner_attack_mode: InnerAttackMode::TargetedRandom,
            include_clean_loss: true,
            include_adv_loss: false,
            distance: LogitDistance::SquaredEuclidean,
            inner_attack: default_inner_attack(crate::attacks::DEFAULT_EPSILON),
        }
    }
}

impl AlpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidTrainConfig(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if self.lambda == 0.0 && !self.include_clean_loss && !self.include_adv_loss {
            return Err(Error::InvalidTrainConfig(
                "with lambda = 0 at least one of the clean or adversarial losses must be on".into(),
            ));
        }
        self.inner_attack.validate()
    }

    fn needs_attack(&self) -> bool {
        self.include_adv_loss || self.lambda != 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean per-example objective over the epoch, each measured before the
    /// update of its batch.
    pub objective: f64,
    /// Training-set accuracy after the epoch.
    pub clean_acc: f64,
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub params: Parameters,
    pub log: Vec<EpochLog>,
}

impl TrainRun {
    /// CSV with header `epoch,objective,clean_acc`.
    pub fn log_csv(&self) -> String {
        let mut out = String::from("epoch,objective,clean_acc\n");
        for e in &self.log {
            writeln!(out, "{},{},{:.6}", e.epoch, e.objective, e.clean_acc).unwrap();
        }
        out
    }
}

pub fn train_natural(spec: &ModelSpec, train: &Dataset, cfg: &TrainConfig) -> Result<TrainRun> {
    let objective = AlpConfig {
        lambda: 0.0,
        inner_attack_mode: InnerAttackMode::Untargeted,
        include_clean_loss: true,
        include_adv_loss: false,
        distance: LogitDistance::SquaredEuclidean,
        inner_attack: AttackConfig::with_epsilon(0.0),
    };
    run(spec, train, cfg, &objective)
}

/// Trains on untargeted PGD examples only, with no clean-loss term.
pub fn train_adversarial(
    spec: &ModelSpec,
    train: &Dataset,
    cfg: &TrainConfig,
    inner: &AttackConfig,
) -> Result<TrainRun> {
    let objective = AlpConfig {
        lambda: 0.0,
        inner_attack_mode: InnerAttackMode::Untargeted,
        include_clean_loss: false,
        include_adv_loss: true,
        distance: LogitDistance::SquaredEuclidean,
        inner_attack: inner.clone(),
    };
    run(spec, train, cfg, &objective)
}

pub fn train_alp(
    spec: &ModelSpec,
    train: &Dataset,
    cfg: &TrainConfig,
    alp: &AlpConfig,
) -> Result<TrainRun> {
    run(spec, train, cfg, alp)
}

/// Composite objective of one example and its parameter gradient.
///
/// `x_adv` must be provided whenever the adversarial or pairing term is
/// active.
pub fn example_objective(
    params: &Parameters,
    ex: &Example,
    x_adv: Option<&[f64]>,
    alp: &AlpConfig,
) -> Result<(f64, Gradient)> {
    let y = ex.y;
    let pairing = alp.lambda != 0.0;
    let clean = if alp.include_clean_loss || pairing {
        Some(params.trace(ex.x.data())?)
    } else {
        None
    };
    let adv = if alp.include_adv_loss || pairing {
        let x_adv = x_adv.ok_or_else(|| {
            Error::InvalidArgument("adversarial input required by the objective".into())
        })?;
        Some(params.trace(x_adv)?)
    } else {
        None
    };

    let mut value = 0.0;
    let mut d_clean = None;
    let mut d_adv = None;
    if alp.include_clean_loss {
        let z = clean.as_ref().unwrap().logits();
        value += cross_entropy(z, y);
        d_clean = Some(xent_logit_grad(z, y));
    }
    if alp.include_adv_loss {
        let z = adv.as_ref().unwrap().logits();
        value += cross_entropy(z, y);
        d_adv = Some(xent_logit_grad(z, y));
    }
    if pairing {
        let zc = clean.as_ref().unwrap().logits();
        let za = adv.as_ref().unwrap().logits();
        value += alp.lambda * alp.distance.eval(zc, za);
        let g: Vec<f64> = alp
            .distance
            .grad_a(zc, za)
            .into_iter()
            .map(|v| alp.lambda * v)
            .collect();
        let dc = d_clean.get_or_insert_with(|| vec![0.0; g.len()]);
        dc.iter_mut().zip(&g).for_each(|(d, v)| *d += v);
        let da = d_adv.get_or_insert_with(|| vec![0.0; g.len()]);
        da.iter_mut().zip(&g).for_each(|(d, v)| *d -= v);
    }

    let grad = match (d_clean, d_adv) {
        (Some(dc), Some(da)) => {
            let (mut g, _) = params.backward(clean.as_ref().unwrap(), &dc);
            let (ga, _) = params.backward(adv.as_ref().unwrap(), &da);
            g.add_assign(&ga);
            g
        }
        (Some(dc), None) => params.backward(clean.as_ref().unwrap(), &dc).0,
        (None, Some(da)) => params.backward(adv.as_ref().unwrap(), &da).0,
        (None, None) => unreachable!("validated objective has at least one term"),
    };
    Ok((value, grad))
}

/// Mean composite objective and gradient over `(example, x_adv)` pairs with
/// the adversarial inputs held fixed.
pub fn batch_objective(
    params: &Parameters,
    batch: &[(Example, Tensor)],
    alp: &AlpConfig,
) -> Result<(f64, Gradient)> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let mut total = Gradient::zeros(params.spec());
    let mut value = 0.0;
    for (ex, x_adv) in batch {
        let (v, g) = example_objective(params, ex, Some(x_adv.data()), alp)?;
        value += v;
        total.add_assign(&g);
    }
    let n = batch.len() as f64;
    total.scale(1.0 / n);
    Ok((value / n, total))
}

/// The inner attack run for example `index` of `epoch`.
pub fn inner_attack_input(
    params: &Parameters,
    ex: &Example,
    index: usize,
    epoch: usize,
    seed: u64,
    alp: &AlpConfig,
) -> Result<Tensor> {
    let tags = [epoch as u64, index as u64];
    let mode = match alp.inner_attack_mode {
        InnerAttackMode::Untargeted => AttackMode::Untargeted,
        InnerAttackMode::TargetedRandom => {
            let mut rng = Rng::new(derive_seed(seed, &[TARGET_STREAM, tags[0], tags[1]]));
            AttackMode::Targeted {
                target: sample_target(ex.y, params.num_classes(), &mut rng)?,
            }
        }
    };
    let cfg = AttackConfig {
        seed: derive_seed(seed, &[ATTACK_STREAM, tags[0], tags[1]]),
        ..alp.inner_attack.clone()
    };
    Ok(pgd(params, ex, mode, &cfg)?.x_adv)
}

fn check_data(spec: &ModelSpec, train: &Dataset) -> Result<()> {
    if train.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    for ex in &train.examples {
        if ex.x.len() != spec.input_dim {
            return Err(Error::DimensionMismatch {
                expected: spec.input_dim,
                actual: ex.x.len(),
            });
        }
        if ex.y >= spec.num_classes {
            return Err(Error::InvalidLabel {
                label: ex.y,
                num_classes: spec.num_classes,
            });
        }
    }
    Ok(())
}

fn run(spec: &ModelSpec, train: &Dataset, cfg: &TrainConfig, alp: &AlpConfig) -> Result<TrainRun> {
    cfg.validate()?;
    alp.validate()?;
    check_data(spec, train)?;
    let mut params = init_params(spec, cfg.seed)?;
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        Rng::new(derive_seed(cfg.seed, &[ORDER_STREAM, epoch as u64])).shuffle(&mut order);

        let mut epoch_value = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let current = &params;
            let per_example: Vec<(f64, Gradient)> = batch
                .par_iter()
                .map(|&i| {
                    let ex = &train.examples[i];
                    let x_adv = if alp.needs_attack() {
                        Some(inner_attack_input(current, ex, i, epoch, cfg.seed, alp)?)
                    } else {
                        None
                    };
                    example_objective(current, ex, x_adv.as_ref().map(|t| t.data()), alp)
                })
                .collect::<Result<_>>()?;
            let mut grad = Gradient::zeros(spec);
            for (v, g) in &per_example {
                epoch_value += v;
                grad.add_assign(g);
            }
            grad.scale(1.0 / batch.len() as f64);
            params = params.sgd_step(&grad, cfg.learning_rate);
        }
        log.push(EpochLog {
            epoch: epoch + 1,
            objective: epoch_value / train.len() as f64,
            clean_acc: clean_accuracy(&params, train)?,
        });
    }
    Ok(TrainRun { params, log })
}
