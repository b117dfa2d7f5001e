//! Loss surfaces over a 2D slice of input space.
//!
//! The slice through a clean input `x̂` is spanned by `r1 = sign(∇ₓ loss)`
//! and a Rademacher vector `r2`; the surface is
//! `z(u, v) = loss(clip(x̂ + u·r1 + v·r2))`.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacks::DEFAULT_EPSILON;
use crate::error::{Error, Result};
use crate::network::{Example, Parameters};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Vector of independent ±1 entries, each with probability one half.
pub fn rademacher(dim: usize, seed: u64) -> Result<Tensor> {
    if dim == 0 {
        return Err(Error::InvalidArgument(
            "rademacher dimension must be >= 1".into(),
        ));
    }
    let mut rng = Rng::new(seed);
    Tensor::vector(
        (0..dim)
            .map(|_| if rng.coin() { 1.0 } else { -1.0 })
            .collect(),
    )
}

/// `sign(∇ₓ loss(f(x̂), y))` with `sign(0) = 0`.
pub fn grad_sign_dir(params: &Parameters, ex: &Example) -> Result<Tensor> {
    let (_, g) = params.loss_and_input_grad(ex.x.data(), ex.y)?;
    Ok(ex.x.with_data(g.into_iter().map(sign).collect()))
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

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeOptions {
    pub radius: f64,
    /// Points per axis; odd so that the origin is a grid point.
    pub resolution: usize,
    /// Seed of the Rademacher direction.
    pub seed: u64,
    /// Clip perturbed inputs to `[0, 1]`.
    pub clip: bool,
}

impl Default for LandscapeOptions {
    fn default() -> Self {
        LandscapeOptions {
            radius: DEFAULT_EPSILON,
            resolution: 41,
            seed: 0,
            clip: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeGrid {
    pub u_values: Vec<f64>,
    pub v_values: Vec<f64>,
    /// `z[i][j]` is the loss at `(u_values[i], v_values[j])`.
    pub z: Vec<Vec<f64>>,
    pub r1: Tensor,
    pub r2: Tensor,
    pub origin: Example,
    pub options: LandscapeOptions,
}

impl LandscapeGrid {
    /// CSV `u,v,loss`, row-major over `(u, v)`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("u,v,loss\n");
        for (i, u) in self.u_values.iter().enumerate() {
            for (j, v) in self.v_values.iter().enumerate() {
                writeln!(out, "{u},{v},{}", self.z[i][j]).unwrap();
            }
        }
        out
    }

    pub fn center_loss(&self) -> f64 {
        let m = self.u_values.len() / 2;
        self.z[m][m]
    }
}

/// Offsets `radius·(2i − (n−1))/(n−1)`: exactly `0` in the middle and
/// exactly `±radius` at the ends.
fn axis(radius: f64, resolution: usize) -> Vec<f64> {
    let m = (resolution - 1) as f64;
    (0..resolution)
        .map(|i| radius * (2.0 * i as f64 - m) / m)
        .collect()
}

pub fn landscape_grid(
    params: &Parameters,
    ex: &Example,
    radius: f64,
    resolution: usize,
    seed: u64,
) -> Result<LandscapeGrid> {
    landscape_grid_with(
        params,
        ex,
        &LandscapeOptions {
            radius,
            resolution,
            seed,
            clip: true,
        },
    )
}

pub fn landscape_grid_with(
    params: &Parameters,
    ex: &Example,
    opts: &LandscapeOptions,
) -> Result<LandscapeGrid> {
    if opts.resolution < 3 || opts.resolution.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "resolution must be odd and >= 3, got {}",
            opts.resolution
        )));
    }
    if !(opts.radius > 0.0 && opts.radius.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "radius must be positive, got {}",
            opts.radius
        )));
    }
    let r1 = grad_sign_dir(params, ex)?;
    let r2 = rademacher(ex.x.len(), opts.seed)?;
    let u_values = axis(opts.radius, opts.resolution);
    let v_values = u_values.clone();
    let x = ex.x.data();

    let z = u_values
        .par_iter()
        .map(|&u| {
            v_values
                .iter()
                .map(|&v| {
                    let point: Vec<f64> = x
                        .iter()
                        .zip(r1.data().iter().zip(r2.data()))
                        .map(|(&xk, (&a, &b))| {
                            let p = xk + u * a + v * b;
                            if opts.clip {
                                p.clamp(0.0, 1.0)
                            } else {
                                p
                            }
                        })
                        .collect();
                    debug_assert!(!opts.clip || point.iter().all(|p| (0.0..=1.0).contains(p)));
                    params.loss_at(&point, ex.y)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(LandscapeGrid {
        u_values,
        v_values,
        z,
        r1,
        r2,
        origin: ex.clone(),
        options: opts.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{init_params, Layer, ModelSpec};

    #[test]
    fn rademacher_entries_and_determinism() {
        let a = rademacher(1000, 4).unwrap();
        assert!(a.data().iter().all(|&v| v == 1.0 || v == -1.0));
        assert_eq!(a, rademacher(1000, 4).unwrap());
        assert_ne!(a, rademacher(1000, 5).unwrap());
        assert!(rademacher(0, 0).is_err());
    }

    #[test]
    fn rademacher_is_balanced() {
        let r = rademacher(100_000, 12).unwrap();
        let mean = r.data().iter().sum::<f64>() / 100_000.0;
        assert!(mean.abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn sign_direction_of_linear_model() {
        let spec = ModelSpec::linear(3, 2).unwrap();
        let p = Parameters::from_layers(
            spec,
            vec![Layer {
                fan_in: 3,
                fan_out: 2,
                weights: vec![0.3, 0.0, -1.0, 1.0, 0.0, 0.0],
                biases: vec![0.0, 0.0],
            }],
            0,
        )
        .unwrap();
        let ex = Example::from_vec(vec![0.5, 0.5, 0.5], 0).unwrap();
        // ∇ = W(p − e0) = (p1 − 1)·w_0 + p1·w_1 with p1 ∈ (0, 1):
        // coordinate 0: 0.3(p0−1) < 0; 1: −(p0−1) + p1 > 0; 2: zero weights, exactly 0.
        let d = grad_sign_dir(&p, &ex).unwrap();
        assert_eq!(d.data(), &[-1.0, 1.0, 0.0]);
        assert_eq!(d, grad_sign_dir(&p, &ex).unwrap());
    }

    #[test]
    fn grid_validation() {
        let p = init_params(&ModelSpec::linear(2, 2).unwrap(), 0).unwrap();
        let ex = Example::from_vec(vec![0.5, 0.5], 0).unwrap();
        assert!(landscape_grid(&p, &ex, 0.1, 4, 0).is_err());
        assert!(landscape_grid(&p, &ex, 0.1, 1, 0).is_err());
        assert!(landscape_grid(&p, &ex, 0.0, 3, 0).is_err());
    }

    #[test]
    fn center_and_corner() {
        let p = init_params(&ModelSpec::new(2, &[6], 3).unwrap(), 9).unwrap();
        let ex = Example::from_vec(vec![0.4, 0.2], 1).unwrap();
        let radius = 16.0 / 255.0;
        let g = landscape_grid(&p, &ex, radius, 3, 2).unwrap();
        assert_eq!(g.z.len(), 3);
        assert_eq!(g.center_loss(), p.loss_at(ex.x.data(), 1).unwrap());
        let corner: Vec<f64> = (0..2)
            .map(|k| {
                (ex.x.data()[k] + radius * g.r1.data()[k] + radius * g.r2.data()[k]).clamp(0.0, 1.0)
            })
            .collect();
        assert_eq!(g.z[2][2], p.loss_at(&corner, 1).unwrap());
        assert_eq!(g.to_csv().lines().count(), 10);
    }

    #[test]
    fn insensitive_direction_gives_flat_v_axis() {
        let r2 = rademacher(2, 7).unwrap();
        let s = r2.data()[0] * r2.data()[1];
        // Row 1 = −s·row 0, so r2 is orthogonal to every class weight vector.
        let w0 = [0.8, -1.3, 0.4];
        let weights: Vec<f64> = w0
            .iter()
            .copied()
            .chain(w0.iter().map(|w| -s * w))
            .collect();
        let p = Parameters::from_layers(
            ModelSpec::linear(2, 3).unwrap(),
            vec![Layer {
                fan_in: 2,
                fan_out: 3,
                weights,
                biases: vec![0.1, 0.0, -0.2],
            }],
            0,
        )
        .unwrap();
        let ex = Example::from_vec(vec![0.5, 0.5], 2).unwrap();
        let g = landscape_grid(&p, &ex, 0.1, 7, 7).unwrap();
        for row in &g.z {
            for z in row {
                assert!((z - row[3]).abs() < 1e-12);
            }
        }
    }
}
