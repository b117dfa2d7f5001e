//! Robustness measurements: clean accuracy, warm-started epsilon sweeps,
//! an exhaustive grid oracle for 2D inputs, and steps-to-success
//! statistics over attack trajectories.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacks::{
    default_alpha, pgd, pgd_warm, sample_target, AttackConfig, AttackMode, AttackResult,
};
use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::io::fmt6;
use crate::network::{argmax, cross_entropy, Example, Parameters};
use crate::rng::{derive_seed, Rng};
use crate::tensor::Tensor;

pub fn clean_accuracy(params: &Parameters, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let mut correct = 0usize;
    for ex in &data.examples {
        if params.predict_slice(ex.x.data())? == ex.y {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    Targeted,
    Untargeted,
}

/// Attack settings shared by every grid point of a sweep.
///
/// `attack.epsilon` and `attack.alpha` are replaced per grid point: the
/// radius by the grid value and the step by `alpha_ratio · epsilon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub attack: AttackConfig,
    pub alpha_ratio: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            attack: AttackConfig::default(),
            alpha_ratio: 0.1,
        }
    }
}

impl SweepConfig {
    fn at(&self, epsilon: f64, seed: u64) -> AttackConfig {
        AttackConfig {
            epsilon,
            alpha: if epsilon > 0.0 {
                self.alpha_ratio * epsilon
            } else {
                default_alpha(0.0)
            },
            seed,
            ..self.attack.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_ratio > 0.0 && self.alpha_ratio <= 2.0) {
            return Err(Error::InvalidAttackConfig(format!(
                "alpha ratio must be in (0, 2], got {}",
                self.alpha_ratio
            )));
        }
        self.at(1.0, 0).validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub mode: SweepMode,
    pub eps_grid: Vec<f64>,
    /// Fraction classified as the target class; targeted sweeps only.
    pub attacker_success_rate: Option<Vec<f64>>,
    /// Fraction still classified correctly.
    pub defense_accuracy: Vec<f64>,
    pub n_examples: usize,
    pub config: SweepConfig,
    pub target_seed: Option<u64>,
}

impl SweepReport {
    /// CSV with header `epsilon,attacker_success_rate,defense_accuracy,n_examples`.
    /// Untargeted reports leave the attacker column empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(SWEEP_HEADER);
        out.push('\n');
        for row in self.rows() {
            out.push_str(&row);
            out.push('\n');
        }
        out
    }

    /// Data rows without the header.
    pub fn rows(&self) -> Vec<String> {
        self.eps_grid
            .iter()
            .enumerate()
            .map(|(j, &eps)| {
                let success = self
                    .attacker_success_rate
                    .as_ref()
                    .map_or(String::new(), |s| fmt6(s[j]));
                format!(
                    "{},{},{},{}",
                    fmt6(eps),
                    success,
                    fmt6(self.defense_accuracy[j]),
                    self.n_examples
                )
            })
            .collect()
    }

    /// Checks the monotonicity contract of warm-started sweeps.
    pub fn is_monotone(&self) -> bool {
        let acc_ok = self.defense_accuracy.windows(2).all(|w| w[1] <= w[0]);
        let succ_ok = self
            .attacker_success_rate
            .as_ref()
            .is_none_or(|s| s.windows(2).all(|w| w[1] >= w[0]));
        acc_ok && succ_ok
    }
}

pub const SWEEP_HEADER: &str = "epsilon,attacker_success_rate,defense_accuracy,n_examples";

fn validate_grid(eps_grid: &[f64]) -> Result<()> {
    if eps_grid.is_empty() {
        return Err(Error::InvalidArgument("empty epsilon grid".into()));
    }
    if eps_grid.iter().any(|e| !(0.0..=1.0).contains(e)) {
        return Err(Error::InvalidArgument(
            "epsilon grid values must lie in [0, 1]".into(),
        ));
    }
    if eps_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(
            "epsilon grid must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Random target of example `index`, fixed across the whole grid.
pub fn sweep_target(
    ex: &Example,
    index: usize,
    num_classes: usize,
    target_seed: u64,
) -> Result<usize> {
    sample_target(
        ex.y,
        num_classes,
        &mut Rng::new(derive_seed(target_seed, &[index as u64])),
    )
}

/// Per-example outcome over the grid: `(target_hit, still_correct)` per epsilon.
type ExampleCurve = Vec<(bool, bool)>;

fn sweep_example(
    params: &Parameters,
    ex: &Example,
    index: usize,
    mode: AttackMode,
    eps_grid: &[f64],
    cfg: &SweepConfig,
) -> Result<ExampleCurve> {
    let mut curve = Vec::with_capacity(eps_grid.len());
    let mut start: Option<Tensor> = None;
    let (mut hit_before, mut correct_before) = (false, true);
    for (j, &eps) in eps_grid.iter().enumerate() {
        let attack = cfg.at(eps, derive_seed(cfg.attack.seed, &[index as u64, j as u64]));
        let result = match &start {
            None => pgd(params, ex, mode, &attack)?,
            Some(s) => pgd_warm(params, ex, mode, &attack, s)?,
        };
        // An untargeted success is a misclassified iterate somewhere on the path.
        let correct = match mode {
            AttackMode::Untargeted => !result.success,
            AttackMode::Targeted { .. } => params.predict_slice(result.x_adv.data())? == ex.y,
        };
        // Balls are nested, so an input found at a smaller radius is also a
        // witness at this one.
        hit_before |= matches!(mode, AttackMode::Targeted { .. }) && result.success;
        correct_before &= correct;
        curve.push((hit_before, correct_before));
        start = Some(result.x_adv);
    }
    Ok(curve)
}

fn sweep(
    params: &Parameters,
    data: &Dataset,
    eps_grid: &[f64],
    cfg: &SweepConfig,
    target_seed: Option<u64>,
) -> Result<SweepReport> {
    validate_grid(eps_grid)?;
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let k = params.num_classes();
    let curves: Vec<ExampleCurve> = data
        .examples
        .par_iter()
        .enumerate()
        .map(|(i, ex)| {
            let mode = match target_seed {
                Some(seed) => AttackMode::Targeted {
                    target: sweep_target(ex, i, k, seed)?,
                },
                None => AttackMode::Untargeted,
            };
            sweep_example(params, ex, i, mode, eps_grid, cfg)
        })
        .collect::<Result<_>>()?;

    let n = data.len() as f64;
    let rate = |pick: fn(&(bool, bool)) -> bool, j: usize| {
        curves.iter().filter(|c| pick(&c[j])).count() as f64 / n
    };
    let defense_accuracy = (0..eps_grid.len()).map(|j| rate(|c| c.1, j)).collect();
    let attacker_success_rate =
        target_seed.map(|_| (0..eps_grid.len()).map(|j| rate(|c| c.0, j)).collect());
    Ok(SweepReport {
        mode: if target_seed.is_some() {
            SweepMode::Targeted
        } else {
            SweepMode::Untargeted
        },
        eps_grid: eps_grid.to_vec(),
        attacker_success_rate,
        defense_accuracy,
        n_examples: data.len(),
        config: cfg.clone(),
        target_seed,
    })
}

/// Targeted sweep with one random target per example, drawn from
/// `derive_seed(target_seed, [index])`. Attacks at each radius start from
/// the adversarial input found at the previous one.
pub fn targeted_sweep(
    params: &Parameters,
    data: &Dataset,
    eps_grid: &[f64],
    cfg: &SweepConfig,
    target_seed: u64,
) -> Result<SweepReport> {
    sweep(params, data, eps_grid, cfg, Some(target_seed))
}

pub fn untargeted_sweep(
    params: &Parameters,
    data: &Dataset,
    eps_grid: &[f64],
    cfg: &SweepConfig,
) -> Result<SweepReport> {
    sweep(params, data, eps_grid, cfg, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorstCase {
    pub worst_loss: f64,
    /// First grid point (in scan order) attaining `worst_loss`.
    pub worst_point: [f64; 2],
    pub exists_misclassification: bool,
}

/// Grid offsets `ε·(2i − (n−1))/(n−1)`; the middle one is exactly zero for
/// odd `n`, and the ends are exactly `±ε`.
fn grid_offsets(epsilon: f64, resolution: usize) -> Vec<f64> {
    let m = (resolution - 1) as f64;
    (0..resolution)
        .map(|i| epsilon * (2.0 * i as f64 - m) / m)
        .collect()
}

/// Exhaustive search of a `resolution × resolution` grid over the ε-ball
/// around a 2D input, clipped to `[0, 1]²`. The clean point is always
/// evaluated as well.
pub fn exact_worst_case_2d(
    params: &Parameters,
    ex: &Example,
    epsilon: f64,
    resolution: usize,
) -> Result<WorstCase> {
    if ex.x.len() != 2 || params.input_dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            actual: ex.x.len(),
        });
    }
    if resolution < 3 {
        return Err(Error::InvalidArgument(format!(
            "resolution must be >= 3, got {resolution}"
        )));
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidArgument(format!(
            "epsilon {epsilon} outside [0, 1]"
        )));
    }
    let (x0, x1) = (ex.x.data()[0], ex.x.data()[1]);
    let eval = |p: [f64; 2]| -> Result<(f64, bool)> {
        let z = params.logits(&p)?;
        Ok((cross_entropy(&z, ex.y), argmax(&z) != ex.y))
    };
    let offsets = grid_offsets(epsilon, resolution);
    // (loss, point, any misclassified)
    let rows: Vec<(f64, [f64; 2], bool)> = offsets
        .par_iter()
        .map(|&du| {
            let a = (x0 + du).clamp(0.0, 1.0);
            let mut acc = (f64::NEG_INFINITY, [a, x1], false);
            for &dv in &offsets {
                let b = (x1 + dv).clamp(0.0, 1.0);
                let (loss, wrong) = eval([a, b])?;
                if loss > acc.0 {
                    acc.0 = loss;
                    acc.1 = [a, b];
                }
                acc.2 |= wrong;
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let (clean_loss, clean_wrong) = eval([x0, x1])?;
    let (worst_loss, worst_point, exists_misclassification) =
        rows.into_iter()
            .fold((clean_loss, [x0, x1], clean_wrong), |acc, r| {
                let (loss, point) = if r.0 > acc.0 {
                    (r.0, r.1)
                } else {
                    (acc.0, acc.1)
                };
                (loss, point, acc.2 || r.2)
            });
    Ok(WorstCase {
        worst_loss,
        worst_point,
        exists_misclassification,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    /// `None` when no attack succeeded.
    pub median: Option<f64>,
    pub mean: Option<f64>,
    pub success_count: usize,
}

/// Median and mean of `first_success_step` over successful attacks.
pub fn steps_to_success_stats(results: &[AttackResult]) -> Result<StepStats> {
    if results.is_empty() {
        return Err(Error::Empty("result list"));
    }
    let mut steps: Vec<usize> = results
        .iter()
        .filter_map(|r| r.first_success_step)
        .collect();
    steps.sort_unstable();
    let n = steps.len();
    if n == 0 {
        return Ok(StepStats {
            median: None,
            mean: None,
            success_count: 0,
        });
    }
    let median = if n % 2 == 1 {
        steps[n / 2] as f64
    } else {
        (steps[n / 2 - 1] + steps[n / 2]) as f64 / 2.0
    };
    let mean = steps.iter().sum::<usize>() as f64 / n as f64;
    Ok(StepStats {
        median: Some(median),
        mean: Some(mean),
        success_count: n,
    })
}

/// Attack summary CSV: `example,success,first_success_step,steps_taken,final_objective`.
pub fn attack_summary_csv(results: &[AttackResult]) -> String {
    let mut out = String::from("example,success,first_success_step,steps_taken,final_objective\n");
    for (i, r) in results.iter().enumerate() {
        let first = r
            .first_success_step
            .map_or(String::new(), |s| s.to_string());
        writeln!(
            out,
            "{i},{},{first},{},{}",
            u8::from(r.success),
            r.steps_taken,
            r.final_objective
        )
        .unwrap();
    }
    out
}
