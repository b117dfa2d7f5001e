//! Helpers shared by the integration suites.
#![allow(dead_code)]

use alp_eval::rng::Rng;
use alp_eval::{init_params, Example, ModelSpec, Parameters};

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;
/// Inputs whose hidden pre-activations come closer than this to zero are
/// resampled, so that central differences never straddle a ReLU kink.
pub const KINK_MARGIN: f64 = 1e-3;

/// Random network with `depth` hidden layers of width 1..=6.
pub fn random_model(rng: &mut Rng, depth: usize) -> Parameters {
    let input_dim = 1 + rng.below(5) as usize;
    let classes = 2 + rng.below(3) as usize;
    let widths: Vec<usize> = (0..depth).map(|_| 1 + rng.below(6) as usize).collect();
    let spec = ModelSpec::new(input_dim, &widths, classes).unwrap();
    // Rescale the default init so logits are not all tiny.
    let p = init_params(&spec, rng.next_u64()).unwrap();
    let scaled: Vec<f64> = p
        .flatten()
        .iter()
        .map(|w| 2.0 * w + 0.1 * rng.uniform(-1.0, 1.0))
        .collect();
    Parameters::from_flat(spec, &scaled, p.seed()).unwrap()
}

/// Random parameters for a fixed architecture, scaled like `random_model`.
pub fn random_model_for(spec: &ModelSpec, rng: &mut Rng) -> Parameters {
    let p = init_params(spec, rng.next_u64()).unwrap();
    let scaled: Vec<f64> = p
        .flatten()
        .iter()
        .map(|w| 2.0 * w + 0.1 * rng.uniform(-1.0, 1.0))
        .collect();
    Parameters::from_flat(spec.clone(), &scaled, p.seed()).unwrap()
}

/// Input in `[0, 1]^d` at least `KINK_MARGIN` away from every ReLU kink,
/// or `None` after many failed draws.
pub fn smooth_input(rng: &mut Rng, params: &Parameters) -> Option<Vec<f64>> {
    (0..1000).find_map(|_| {
        let x: Vec<f64> = (0..params.input_dim()).map(|_| rng.next_f64()).collect();
        let trace = params.trace(&x).unwrap();
        trace
            .hidden_preactivations()
            .iter()
            .flatten()
            .all(|z| z.abs() > KINK_MARGIN)
            .then_some(x)
    })
}

pub fn fd_input_grad(params: &Parameters, x: &[f64], y: usize) -> Vec<f64> {
    (0..x.len())
        .map(|k| {
            let (mut a, mut b) = (x.to_vec(), x.to_vec());
            a[k] += FD_STEP;
            b[k] -= FD_STEP;
            (params.loss_at(&a, y).unwrap() - params.loss_at(&b, y).unwrap()) / (2.0 * FD_STEP)
        })
        .collect()
}

/// Central differences of `f` over a flat parameter vector.
pub fn fd_flat(theta: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut t = theta.to_vec();
    (0..theta.len())
        .map(|k| {
            t[k] = theta[k] + FD_STEP;
            let up = f(&t);
            t[k] = theta[k] - FD_STEP;
            let down = f(&t);
            t[k] = theta[k];
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

pub fn fd_param_grad(params: &Parameters, x: &[f64], y: usize) -> Vec<f64> {
    let spec = params.spec().clone();
    fd_flat(&params.flatten(), |t| {
        Parameters::from_flat(spec.clone(), t, 0)
            .unwrap()
            .loss_at(x, y)
            .unwrap()
    })
}

/// `‖a − b‖₂ / max(‖a‖₂, ‖b‖₂)`, with a small floor for near-zero vectors.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(1e-7)
}

pub fn assert_in_ball(x_adv: &[f64], x: &[f64], eps: f64) {
    for (a, o) in x_adv.iter().zip(x) {
        assert!((a - o).abs() <= eps + 1e-12, "|{a} - {o}| > {eps}");
        assert!((0.0..=1.0).contains(a), "{a} outside [0, 1]");
    }
}

pub fn example(x: Vec<f64>, y: usize) -> Example {
    Example::from_vec(x, y).unwrap()
}
