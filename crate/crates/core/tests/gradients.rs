mod common;

use alp_eval::rng::Rng;
use alp_eval::training::{batch_objective, default_inner_attack, InnerAttackMode};
use alp_eval::{AlpConfig, LogitDistance, Parameters, Tensor};
use common::*;

#[test]
fn input_and_parameter_gradients_match_central_differences() {
    let mut rng = Rng::new(2024);
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for depth in 0..=3 {
        let mut done = 0;
        while done < 30 {
            let params = random_model(&mut rng, depth);
            let Some(x) = smooth_input(&mut rng, &params) else {
                continue;
            };
            let y = rng.below(params.num_classes() as u64) as usize;
            let (_, gx) = params.loss_and_input_grad(&x, y).unwrap();
            let (_, gp) = params.loss_and_param_grad(&x, y).unwrap();
            let ex = rel_err(&gx, &fd_input_grad(&params, &x, y));
            let ep = rel_err(&gp.flatten(), &fd_param_grad(&params, &x, y));
            assert!(ex < FD_TOL, "input grad depth {depth}: rel err {ex}");
            assert!(ep < FD_TOL, "param grad depth {depth}: rel err {ep}");
            worst = worst.max(ex).max(ep);
            done += 1;
            checked += 1;
        }
    }
    assert!(checked >= 100);
    println!("{checked} pairs, worst relative error {worst:.2e}");
}

#[test]
fn two_two_two_model() {
    let mut rng = Rng::new(5);
    let spec = alp_eval::ModelSpec::new(2, &[2], 2).unwrap();
    let mut checked = 0;
    while checked < 10 {
        let theta: Vec<f64> = (0..spec.num_params())
            .map(|_| rng.uniform(-2.0, 2.0))
            .collect();
        let params = Parameters::from_flat(spec.clone(), &theta, 0).unwrap();
        let Some(x) = smooth_input(&mut rng, &params) else {
            continue;
        };
        let (_, gp) = params.loss_and_param_grad(&x, 1).unwrap();
        assert!(rel_err(&gp.flatten(), &fd_param_grad(&params, &x, 1)) < FD_TOL);
        checked += 1;
    }
}

fn objective_variants() -> Vec<AlpConfig> {
    let mut out = Vec::new();
    for (clean, adv) in [(true, false), (false, true), (true, true), (false, false)] {
        for lambda in [0.0, 0.7] {
            if lambda == 0.0 && !clean && !adv {
                continue;
            }
            for distance in [LogitDistance::SquaredEuclidean, LogitDistance::Euclidean] {
                out.push(AlpConfig {
                    lambda,
                    inner_attack_mode: InnerAttackMode::TargetedRandom,
                    include_clean_loss: clean,
                    include_adv_loss: adv,
                    distance,
                    inner_attack: default_inner_attack(0.1),
                });
            }
        }
    }
    out
}

#[test]
fn composite_objective_gradient_matches_central_differences() {
    let mut rng = Rng::new(77);
    let params = random_model(&mut rng, 1);
    let spec = params.spec().clone();
    let dim = params.input_dim();
    let k = params.num_classes();
    // Fixed adversarial partners a short distance from each clean input.
    let batch: Vec<_> = (0..4)
        .map(|i| {
            let x = smooth_input(&mut rng, &params).unwrap();
            let adv: Vec<f64> = x
                .iter()
                .map(|v| (v + rng.uniform(-0.05, 0.05)).clamp(0.0, 1.0))
                .collect();
            (example(x, i % k), Tensor::vector(adv).unwrap())
        })
        .collect();
    for alp in objective_variants() {
        let (_, g) = batch_objective(&params, &batch, &alp).unwrap();
        let fd = fd_flat(&params.flatten(), |t| {
            let p = Parameters::from_flat(spec.clone(), t, 0).unwrap();
            batch_objective(&p, &batch, &alp).unwrap().0
        });
        let err = rel_err(&g.flatten(), &fd);
        assert!(err < FD_TOL, "{alp:?}: rel err {err} (dim {dim})");
    }
}
