mod common;

use alp_eval::attacks::project_linf;
use alp_eval::rng::Rng;
use alp_eval::{
    pgd, pgd_targeted, pgd_untargeted, pgd_warm, AttackConfig, AttackMode, Example, Layer,
    ModelSpec, Parameters, Tensor,
};
use common::*;
use proptest::prelude::*;

fn cfg(eps: f64, alpha: f64, steps: usize, seed: u64) -> AttackConfig {
    AttackConfig {
        epsilon: eps,
        alpha,
        max_steps: steps,
        seed,
        ..AttackConfig::default()
    }
}

fn model_and_example(seed: u64, depth: usize) -> (Parameters, Example) {
    let mut rng = Rng::new(seed);
    let params = random_model(&mut rng, depth);
    let x: Vec<f64> = (0..params.input_dim()).map(|_| rng.next_f64()).collect();
    let y = rng.below(params.num_classes() as u64) as usize;
    (params, example(x, y))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn projection_is_idempotent_and_feasible(
        pairs in prop::collection::vec((0.0f64..=1.0, -0.5f64..1.5), 1..8),
        eps in 0.0f64..=0.5,
    ) {
        let orig = Tensor::vector(pairs.iter().map(|p| p.0).collect()).unwrap();
        let cand = Tensor::vector(pairs.iter().map(|p| p.1).collect()).unwrap();
        let once = project_linf(&cand, &orig, eps).unwrap();
        let twice = project_linf(&once, &orig, eps).unwrap();
        prop_assert_eq!(&once, &twice);
        assert_in_ball(once.data(), orig.data(), eps);
        // Points already feasible are left alone.
        prop_assert_eq!(project_linf(&orig, &orig, eps).unwrap(), orig);
    }

    #[test]
    fn attacks_respect_their_contract(
        seed in any::<u64>(),
        depth in 0usize..3,
        eps in 0.0f64..0.3,
        alpha_frac in 0.05f64..2.0,
        steps in 0usize..40,
        targeted in any::<bool>(),
        random_start in any::<bool>(),
    ) {
        let (params, ex) = model_and_example(seed, depth);
        let k = params.num_classes();
        let mode = if targeted {
            AttackMode::Targeted { target: (ex.y + 1) % k }
        } else {
            AttackMode::Untargeted
        };
        let mut c = cfg(eps, if eps > 0.0 { alpha_frac * eps } else { 0.01 }, steps, seed);
        c.random_start = random_start;
        let r = pgd(&params, &ex, mode, &c).unwrap();
        assert_in_ball(r.x_adv.data(), ex.x.data(), eps);
        prop_assert_eq!(r.loss_trajectory.len(), r.steps_taken + 1);
        prop_assert_eq!(r.success_trajectory.len(), r.steps_taken + 1);
        prop_assert!(r.steps_taken <= steps);
        prop_assert_eq!(r.success, r.success_trajectory.iter().any(|&s| s));
        prop_assert_eq!(r.first_success_step, r.success_trajectory.iter().position(|&s| s));
        let label = match mode { AttackMode::Untargeted => ex.y, AttackMode::Targeted { target } => target };
        prop_assert_eq!(r.final_objective, params.loss_at(r.x_adv.data(), label).unwrap());
        let pred = params.predict_slice(r.x_adv.data()).unwrap();
        match mode {
            AttackMode::Untargeted => {
                // Best iterate is the highest loss on the path.
                let max = r.loss_trajectory.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert_eq!(r.final_objective, max);
                if pred != ex.y { prop_assert!(r.success); }
                if !random_start {
                    let clean = params.loss_at(ex.x.data(), ex.y).unwrap();
                    prop_assert_eq!(r.loss_trajectory[0], clean);
                    prop_assert!(r.final_objective >= clean);
                }
            }
            AttackMode::Targeted { target } => prop_assert_eq!(r.success, pred == target),
        }
    }

    #[test]
    fn untargeted_loss_grows_with_step_budget(seed in any::<u64>(), depth in 0usize..3, eps in 0.01f64..0.3) {
        let (params, ex) = model_and_example(seed, depth);
        let mut last = f64::NEG_INFINITY;
        for steps in [0, 1, 5, 20, 60] {
            let r = pgd_untargeted(&params, &ex, &cfg(eps, eps / 10.0, steps, 0)).unwrap();
            prop_assert!(r.final_objective >= last);
            last = r.final_objective;
        }
    }

    #[test]
    fn warm_started_success_carries_to_larger_balls(seed in any::<u64>(), eps in 0.01f64..0.2, grow in 1.0f64..3.0) {
        let (params, ex) = model_and_example(seed, 1);
        let target = (ex.y + 1) % params.num_classes();
        let mode = AttackMode::Targeted { target };
        let small = pgd(&params, &ex, mode, &cfg(eps, eps / 10.0, 50, 0)).unwrap();
        let big_eps = (eps * grow).min(1.0);
        let big = pgd_warm(&params, &ex, mode, &cfg(big_eps, big_eps / 10.0, 50, 0), &small.x_adv).unwrap();
        if small.success {
            prop_assert!(big.success);
        }
        assert_in_ball(big.x_adv.data(), ex.x.data(), big_eps);
    }
}

#[test]
fn empty_ball_keeps_clean_input() {
    let (params, ex) = model_and_example(3, 1);
    let pred = params.predict_slice(ex.x.data()).unwrap();
    let r = pgd_untargeted(&params, &ex, &cfg(0.0, 0.01, 30, 0)).unwrap();
    assert_eq!(r.x_adv, ex.x);
    assert_eq!(r.success, pred != ex.y);
    let target = (ex.y + 1) % params.num_classes();
    let r = pgd_targeted(&params, &ex, target, &cfg(0.0, 0.01, 30, 0)).unwrap();
    assert_eq!(r.x_adv, ex.x);
    assert_eq!(r.success, pred == target);
}

/// Two-class linear model: the loss is monotone in `(w_other − w_true)·x`,
/// so the optimum over the box is the endpoint picked by each sign.
#[test]
fn single_step_reaches_linear_optimum() {
    let mut rng = Rng::new(99);
    for trial in 0..50 {
        let d = 1 + rng.below(6) as usize;
        let weights: Vec<f64> = (0..2 * d).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let biases = vec![rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)];
        let params = Parameters::from_layers(
            ModelSpec::linear(d, 2).unwrap(),
            vec![Layer {
                fan_in: d,
                fan_out: 2,
                weights: weights.clone(),
                biases,
            }],
            0,
        )
        .unwrap();
        let x: Vec<f64> = (0..d).map(|_| rng.next_f64()).collect();
        let y = trial % 2;
        let eps = rng.uniform(0.01, 0.3);
        let w = |i: usize, c: usize| weights[i * 2 + c];
        let optimum = |toward: usize, away: usize| -> Vec<f64> {
            (0..d)
                .map(|i| {
                    let s = w(i, toward) - w(i, away);
                    let step = if s > 0.0 {
                        eps
                    } else if s < 0.0 {
                        -eps
                    } else {
                        0.0
                    };
                    (x[i] + step).clamp(0.0, 1.0)
                })
                .collect()
        };
        let ex = example(x.clone(), y);
        let one = cfg(eps, eps, 1, 0);
        let r = pgd_untargeted(&params, &ex, &one).unwrap();
        let best = params.loss_at(&optimum(1 - y, y), y).unwrap();
        assert!(
            (r.final_objective - best).abs() < 1e-12,
            "untargeted trial {trial}"
        );
        let r = pgd_targeted(&params, &ex, 1 - y, &one).unwrap();
        let best = params.loss_at(&optimum(1 - y, y), 1 - y).unwrap();
        assert!(
            (r.final_objective - best).abs() < 1e-12,
            "targeted trial {trial}"
        );
    }
}

#[test]
fn invalid_configurations_are_rejected() {
    let (params, ex) = model_and_example(1, 1);
    assert!(pgd_untargeted(&params, &ex, &cfg(1.5, 0.1, 5, 0)).is_err());
    assert!(pgd_untargeted(&params, &ex, &cfg(0.1, 0.0, 5, 0)).is_err());
    assert!(pgd_untargeted(&params, &ex, &cfg(0.1, 0.5, 5, 0)).is_err());
    assert!(pgd_targeted(&params, &ex, ex.y, &cfg(0.1, 0.01, 5, 0)).is_err());
    assert!(pgd_targeted(&params, &ex, 17, &cfg(0.1, 0.01, 5, 0)).is_err());
    let wrong = example(vec![0.5; params.input_dim() + 1], 0);
    assert!(pgd_untargeted(&params, &wrong, &cfg(0.1, 0.01, 5, 0)).is_err());
}
