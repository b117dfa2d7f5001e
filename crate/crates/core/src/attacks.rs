//! L∞ projected gradient descent attacks.
//!
//! Each step moves the input by `alpha` along the sign of the input
//! gradient of the cross-entropy objective and projects back onto the
//! ε-ball around the clean input intersected with `[0, 1]`. Untargeted
//! attacks ascend the loss of the true class; targeted attacks descend the
//! loss of the chosen target.
//!
//! `success` reports whether any iterate met the goal. The returned input
//! is the best iterate seen: for untargeted attacks the one with the
//! highest loss, which need not itself be misclassified; for targeted
//! attacks a successful iterate beats an unsuccessful one and ties go to
//! the lower objective, so `x_adv` is classified as the target exactly when
//! `success` holds.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{argmax, cross_entropy, xent_logit_grad, Example, Parameters};
use crate::rng::{derive_seed, Rng};
use crate::tensor::Tensor;

/// The threat-model radius `16/255` on inputs scaled to `[0, 1]`.
pub const DEFAULT_EPSILON: f64 = 16.0 / 255.0;
pub const DEFAULT_MAX_STEPS: usize = 1000;
pub const MAX_STEPS_LIMIT: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    /// L∞ radius of the admissible perturbation set.
    pub epsilon: f64,
    /// Step size per signed-gradient step.
    pub alpha: f64,
    pub max_steps: usize,
    pub random_start: bool,
    /// Stop once the best objective improves by less than this over
    /// `convergence_window` consecutive steps. Zero disables early stopping.
    pub convergence_tol: f64,
    pub convergence_window: usize,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig::with_epsilon(DEFAULT_EPSILON)
    }
}

impl AttackConfig {
    /// Defaults with the given radius and `alpha = epsilon / 10`.
    pub fn with_epsilon(epsilon: f64) -> Self {
        AttackConfig {
            epsilon,
            alpha: default_alpha(epsilon),
            max_steps: DEFAULT_MAX_STEPS,
            random_start: false,
            convergence_tol: 1e-6,
            convergence_window: 20,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidAttackConfig(msg));
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad(format!("epsilon {} outside [0, 1]", self.epsilon));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if self.epsilon > 0.0 && self.alpha > 2.0 * self.epsilon {
            return bad(format!(
                "alpha {} exceeds the ball diameter 2·{}",
                self.alpha, self.epsilon
            ));
        }
        if self.max_steps > MAX_STEPS_LIMIT {
            return bad(format!(
                "max_steps {} exceeds {MAX_STEPS_LIMIT}",
                self.max_steps
            ));
        }
        if !(self.convergence_tol >= 0.0 && self.convergence_tol.is_finite()) {
            return bad(format!(
                "convergence_tol must be >= 0, got {}",
                self.convergence_tol
            ));
        }
        if self.convergence_window == 0 {
            return bad("convergence_window must be >= 1".into());
        }
        Ok(())
    }
}

/// Default step size for a radius: a tenth of it (any positive value when
/// the radius is zero).
pub fn default_alpha(epsilon: f64) -> f64 {
    if epsilon > 0.0 {
        epsilon / 10.0
    } else {
        1e-3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMode {
    Untargeted,
    Targeted { target: usize },
}

impl AttackMode {
    pub fn name(&self) -> &'static str {
        match self {
            AttackMode::Untargeted => "untargeted",
            AttackMode::Targeted { .. } => "targeted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub x_adv: Tensor,
    pub success: bool,
    pub steps_taken: usize,
    pub first_success_step: Option<usize>,
    /// Objective at every iterate, starting with step 0: `-log P(true)` for
    /// untargeted attacks, `-log P(target)` for targeted ones.
    pub loss_trajectory: Vec<f64>,
    /// Whether each iterate met the attack goal.
    pub success_trajectory: Vec<bool>,
    /// Objective at `x_adv`.
    pub final_objective: f64,
    pub mode: AttackMode,
}

/// Componentwise clamp into `[x_orig - ε, x_orig + ε] ∩ [0, 1]`.
pub fn project_linf(x_cand: &Tensor, x_orig: &Tensor, epsilon: f64) -> Result<Tensor> {
    if !x_cand.same_shape(x_orig) {
        return Err(Error::DimensionMismatch {
            expected: x_orig.len(),
            actual: x_cand.len(),
        });
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidArgument(format!(
            "epsilon {epsilon} outside [0, 1]"
        )));
    }
    if x_orig.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidArgument(
            "projection center outside [0, 1]".into(),
        ));
    }
    let mut out = x_cand.data().to_vec();
    project_in_place(&mut out, x_orig.data(), epsilon);
    Ok(x_orig.with_data(out))
}

fn project_in_place(x: &mut [f64], origin: &[f64], epsilon: f64) {
    for (v, &o) in x.iter_mut().zip(origin) {
        let lo = (o - epsilon).max(0.0);
        let hi = (o + epsilon).min(1.0);
        *v = v.clamp(lo, hi);
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Uniform draw over the classes other than `true_label`.
pub fn sample_target(true_label: usize, num_classes: usize, rng: &mut Rng) -> Result<usize> {
    if num_classes < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 classes to pick a target, got {num_classes}"
        )));
    }
    if true_label >= num_classes {
        return Err(Error::InvalidLabel {
            label: true_label,
            num_classes,
        });
    }
    let r = rng.below(num_classes as u64 - 1) as usize;
    Ok(if r >= true_label { r + 1 } else { r })
}

pub fn pgd_untargeted(
    params: &Parameters,
    ex: &Example,
    cfg: &AttackConfig,
) -> Result<AttackResult> {
    run_pgd(params, ex, AttackMode::Untargeted, cfg, None)
}

pub fn pgd_targeted(
    params: &Parameters,
    ex: &Example,
    target: usize,
    cfg: &AttackConfig,
) -> Result<AttackResult> {
    run_pgd(params, ex, AttackMode::Targeted { target }, cfg, None)
}

/// PGD starting from `start` (projected into the ball) instead of the
/// clean input. Random starts are ignored.
pub fn pgd_warm(
    params: &Parameters,
    ex: &Example,
    mode: AttackMode,
    cfg: &AttackConfig,
    start: &Tensor,
) -> Result<AttackResult> {
    run_pgd(params, ex, mode, cfg, Some(start))
}

pub fn pgd(
    params: &Parameters,
    ex: &Example,
    mode: AttackMode,
    cfg: &AttackConfig,
) -> Result<AttackResult> {
    run_pgd(params, ex, mode, cfg, None)
}

struct Probe {
    objective: f64,
    success: bool,
    grad: Vec<f64>,
}

fn run_pgd(
    params: &Parameters,
    ex: &Example,
    mode: AttackMode,
    cfg: &AttackConfig,
    start: Option<&Tensor>,
) -> Result<AttackResult> {
    cfg.validate()?;
    let origin = ex.x.data();
    if origin.len() != params.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: params.input_dim(),
            actual: origin.len(),
        });
    }
    let k = params.num_classes();
    if ex.y >= k {
        return Err(Error::InvalidLabel {
            label: ex.y,
            num_classes: k,
        });
    }
    let (label, direction) = match mode {
        AttackMode::Untargeted => (ex.y, 1.0),
        AttackMode::Targeted { target } => {
            if target >= k {
                return Err(Error::InvalidLabel {
                    label: target,
                    num_classes: k,
                });
            }
            if target == ex.y {
                return Err(Error::InvalidArgument(format!(
                    "target {target} equals the true label"
                )));
            }
            (target, -1.0)
        }
    };

    let mut x = match start {
        Some(s) => {
            if s.len() != origin.len() {
                return Err(Error::DimensionMismatch {
                    expected: origin.len(),
                    actual: s.len(),
                });
            }
            s.data().to_vec()
        }
        None if cfg.random_start && cfg.epsilon > 0.0 => {
            let mut rng = Rng::new(cfg.seed);
            origin
                .iter()
                .map(|&o| o + rng.uniform(-cfg.epsilon, cfg.epsilon))
                .collect()
        }
        None => origin.to_vec(),
    };
    project_in_place(&mut x, origin, cfg.epsilon);

    let probe = |x: &[f64]| -> Result<Probe> {
        let trace = params.trace(x)?;
        let logits = trace.logits();
        let pred = argmax(logits);
        let success = match mode {
            AttackMode::Untargeted => pred != ex.y,
            AttackMode::Targeted { target } => pred == target,
        };
        let objective = cross_entropy(logits, label);
        let (_, grad) = params.backward(&trace, &xent_logit_grad(logits, label));
        Ok(Probe {
            objective,
            success,
            grad,
        })
    };
    // Higher is better for untargeted, lower for targeted.
    let improves = |a: f64, b: f64| direction * (a - b) > 0.0;

    let mut current = probe(&x)?;
    let mut loss_trajectory = vec![current.objective];
    let mut success_trajectory = vec![current.success];
    let mut first_success_step = current.success.then_some(0);
    let mut best_x = x.clone();
    let mut best = (current.success, current.objective);
    let mut running_best = vec![current.objective];
    let mut steps_taken = 0;

    for step in 1..=cfg.max_steps {
        for (v, g) in x.iter_mut().zip(&current.grad) {
            *v += direction * cfg.alpha * sign(*g);
        }
        project_in_place(&mut x, origin, cfg.epsilon);
        current = probe(&x)?;
        steps_taken = step;
        loss_trajectory.push(current.objective);
        success_trajectory.push(current.success);
        if current.success && first_success_step.is_none() {
            first_success_step = Some(step);
        }
        let better = match mode {
            AttackMode::Untargeted => improves(current.objective, best.1),
            AttackMode::Targeted { .. } => {
                (current.success && !best.0)
                    || (current.success == best.0 && improves(current.objective, best.1))
            }
        };
        if better {
            best = (current.success, current.objective);
            best_x.copy_from_slice(&x);
        }
        let prev = *running_best.last().unwrap();
        running_best.push(if improves(current.objective, prev) {
            current.objective
        } else {
            prev
        });
        if step >= cfg.convergence_window {
            let gain =
                direction * (running_best[step] - running_best[step - cfg.convergence_window]);
            if gain < cfg.convergence_tol {
                break;
            }
        }
    }

    Ok(AttackResult {
        x_adv: ex.x.with_data(best_x),
        success: first_success_step.is_some(),
        steps_taken,
        first_success_step,
        loss_trajectory,
        success_trajectory,
        final_objective: best.1,
        mode,
    })
}

/// Runs one attack per `(example, mode)` pair in parallel. Example `i` uses
/// seed `derive_seed(cfg.seed, [i])`; results keep input order.
pub fn attack_many(
    params: &Parameters,
    items: &[(Example, AttackMode)],
    cfg: &AttackConfig,
) -> Result<Vec<AttackResult>> {
    items
        .par_iter()
        .enumerate()
        .map(|(i, (ex, mode))| {
            let cfg = AttackConfig {
                seed: derive_seed(cfg.seed, &[i as u64]),
                ..cfg.clone()
            };
            pgd(params, ex, *mode, &cfg)
        })
        .collect()
}

/// `traj_<index>_<mode>.csv`
pub fn trajectory_file_name(example_index: usize, mode: &AttackMode) -> String {
    format!("traj_{example_index}_{}.csv", mode.name())
}

/// Per-step CSV: `step,objective,success`.
pub fn trajectory_csv(result: &AttackResult) -> String {
    let mut out = String::from("step,objective,success\n");
    for (step, (obj, ok)) in result
        .loss_trajectory
        .iter()
        .zip(&result.success_trajectory)
        .enumerate()
    {
        writeln!(out, "{step},{obj},{}", u8::from(*ok)).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{init_params, Layer, ModelSpec};

    fn t(v: Vec<f64>) -> Tensor {
        Tensor::vector(v).unwrap()
    }

    #[test]
    fn projection_examples() {
        let p = project_linf(&t(vec![0.8]), &t(vec![0.5]), 0.1).unwrap();
        assert!((p.data()[0] - 0.6).abs() < 1e-15);
        let p = project_linf(&t(vec![-0.3]), &t(vec![0.05]), 0.2).unwrap();
        assert_eq!(p.data()[0], 0.0);
        assert!(project_linf(&t(vec![0.1, 0.2]), &t(vec![0.1]), 0.1).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(AttackConfig::default().validate().is_ok());
        let mut c = AttackConfig::with_epsilon(0.1);
        c.alpha = 0.25;
        assert!(c.validate().is_err());
        c.alpha = 0.2;
        assert!(c.validate().is_ok());
        c.max_steps = MAX_STEPS_LIMIT + 1;
        assert!(c.validate().is_err());
        let mut c = AttackConfig::with_epsilon(1.5);
        assert!(c.validate().is_err());
        c.epsilon = 0.0;
        c.alpha = 5.0;
        assert!(c.validate().is_ok());
        c.convergence_window = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn target_sampling() {
        let mut rng = Rng::new(0);
        for _ in 0..100 {
            assert_eq!(sample_target(0, 2, &mut rng).unwrap(), 1);
        }
        assert!(sample_target(0, 1, &mut rng).is_err());
        assert!(sample_target(4, 3, &mut rng).is_err());
    }

    #[test]
    fn target_sampling_excludes_and_is_uniform() {
        let mut rng = Rng::new(17);
        let k = 10;
        let draws = 100_000;
        let mut counts = vec![0usize; k];
        for _ in 0..draws {
            let t = sample_target(3, k, &mut rng).unwrap();
            counts[t] += 1;
        }
        assert_eq!(counts[3], 0);
        let p = 1.0 / (k - 1) as f64;
        let mean = draws as f64 * p;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        for (c, &n) in counts.iter().enumerate().filter(|(c, _)| *c != 3) {
            assert!((n as f64 - mean).abs() < 3.0 * sd, "class {c}: {n}");
        }
    }

    fn binary_linear(w: [f64; 4]) -> Parameters {
        Parameters::from_layers(
            ModelSpec::linear(2, 2).unwrap(),
            vec![Layer {
                fan_in: 2,
                fan_out: 2,
                weights: w.to_vec(),
                biases: vec![0.0, 0.0],
            }],
            0,
        )
        .unwrap()
    }

    #[test]
    fn zero_epsilon_returns_clean_input() {
        let p = init_params(&ModelSpec::new(3, &[4], 3).unwrap(), 1).unwrap();
        let ex = Example::from_vec(vec![0.2, 0.5, 0.7], 1).unwrap();
        let cfg = AttackConfig::with_epsilon(0.0);
        let clean_pred = p.predict_slice(ex.x.data()).unwrap();
        let r = pgd_untargeted(&p, &ex, &cfg).unwrap();
        assert_eq!(r.x_adv, ex.x);
        assert_eq!(r.success, clean_pred != 1);
        let r = pgd_targeted(&p, &ex, 2, &cfg).unwrap();
        assert_eq!(r.x_adv, ex.x);
        assert_eq!(r.success, clean_pred == 2);
    }

    #[test]
    fn single_step_matches_binary_closed_form() {
        // Columns are class weight vectors: w_0 = (1, -2), w_1 = (0.5, 3).
        let p = binary_linear([1.0, 0.5, -2.0, 3.0]);
        let ex = Example::from_vec(vec![0.5, 0.5], 0).unwrap();
        let mut cfg = AttackConfig::with_epsilon(0.1);
        cfg.alpha = 0.1;
        cfg.max_steps = 1;
        let r = pgd_untargeted(&p, &ex, &cfg).unwrap();
        // δ = ε·sign(w_1 - w_0) = ε·(-1, +1)
        assert_eq!(r.x_adv.data(), &[0.5 - 0.1, 0.5 + 0.1]);
        assert_eq!(r.loss_trajectory.len(), 2);
    }

    #[test]
    fn trajectory_length_and_constraints() {
        let p = init_params(&ModelSpec::new(4, &[8], 3).unwrap(), 2).unwrap();
        let ex = Example::from_vec(vec![0.1, 0.9, 0.5, 0.0], 0).unwrap();
        for random_start in [false, true] {
            let mut cfg = AttackConfig::with_epsilon(0.05);
            cfg.max_steps = 50;
            cfg.random_start = random_start;
            cfg.seed = 3;
            for mode in [AttackMode::Untargeted, AttackMode::Targeted { target: 2 }] {
                let r = pgd(&p, &ex, mode, &cfg).unwrap();
                assert_eq!(r.loss_trajectory.len(), r.steps_taken + 1);
                assert_eq!(r.success_trajectory.len(), r.steps_taken + 1);
                assert!(r.x_adv.linf_distance(&ex.x) <= 0.05 + 1e-12);
                assert!(r.x_adv.data().iter().all(|v| (0.0..=1.0).contains(v)));
                assert_eq!(r.success, r.success_trajectory.iter().any(|&s| s));
                assert_eq!(
                    r.first_success_step,
                    r.success_trajectory.iter().position(|&s| s)
                );
            }
        }
    }

    #[test]
    fn step_zero_is_clean_loss() {
        let p = init_params(&ModelSpec::new(2, &[5], 2).unwrap(), 4).unwrap();
        let ex = Example::from_vec(vec![0.3, 0.6], 1).unwrap();
        let r = pgd_untargeted(&p, &ex, &AttackConfig::with_epsilon(0.1)).unwrap();
        assert_eq!(r.loss_trajectory[0], p.loss_at(ex.x.data(), 1).unwrap());
    }

    #[test]
    fn targeted_rejects_true_label() {
        let p = init_params(&ModelSpec::linear(2, 3).unwrap(), 0).unwrap();
        let ex = Example::from_vec(vec![0.3, 0.6], 1).unwrap();
        assert!(pgd_targeted(&p, &ex, 1, &AttackConfig::default()).is_err());
        assert!(pgd_targeted(&p, &ex, 3, &AttackConfig::default()).is_err());
    }

    #[test]
    fn convergence_stops_early_on_flat_objective() {
        let p = binary_linear([0.0; 4]);
        let ex = Example::from_vec(vec![0.5, 0.5], 0).unwrap();
        let r = pgd_untargeted(&p, &ex, &AttackConfig::with_epsilon(0.1)).unwrap();
        assert_eq!(r.steps_taken, 20);
        let mut cfg = AttackConfig::with_epsilon(0.1);
        cfg.convergence_tol = 0.0;
        cfg.max_steps = 40;
        assert_eq!(pgd_untargeted(&p, &ex, &cfg).unwrap().steps_taken, 40);
    }

    #[test]
    fn trajectory_csv_format() {
        let p = binary_linear([1.0, -1.0, 0.0, 0.0]);
        let ex = Example::from_vec(vec![0.5, 0.5], 0).unwrap();
        let mut cfg = AttackConfig::with_epsilon(0.1);
        cfg.max_steps = 2;
        let r = pgd_untargeted(&p, &ex, &cfg).unwrap();
        let csv = trajectory_csv(&r);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "step,objective,success");
        assert_eq!(lines.len(), r.steps_taken + 2);
        assert!(lines[1].starts_with("0,"));
        assert_eq!(trajectory_file_name(4, &r.mode), "traj_4_untargeted.csv");
    }

    #[test]
    fn attack_many_is_ordered_and_deterministic() {
        let p = init_params(&ModelSpec::new(3, &[6], 3).unwrap(), 5).unwrap();
        let items: Vec<(Example, AttackMode)> = (0..12)
            .map(|i| {
                let v = i as f64 / 12.0;
                (
                    Example::from_vec(vec![v, 1.0 - v, 0.5], i % 3).unwrap(),
                    AttackMode::Untargeted,
                )
            })
            .collect();
        let mut cfg = AttackConfig::with_epsilon(0.1);
        cfg.random_start = true;
        cfg.max_steps = 30;
        let a = attack_many(&p, &items, &cfg).unwrap();
        let b = attack_many(&p, &items, &cfg).unwrap();
        assert_eq!(a, b);
        for (i, r) in a.iter().enumerate() {
            let cfg_i = AttackConfig {
                seed: derive_seed(cfg.seed, &[i as u64]),
                ..cfg.clone()
            };
            assert_eq!(r, &pgd_untargeted(&p, &items[i].0, &cfg_i).unwrap());
        }
    }
}
