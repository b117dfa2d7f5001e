//! Synthetic and file-backed datasets with inputs in `[0, 1]`.

mod idx;

pub use idx::{load_idx, parse_idx, IMAGES_MAGIC, LABELS_MAGIC};

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Example;
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub examples: Vec<Example>,
    pub num_classes: usize,
    pub name: String,
    pub seed: u64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.examples.first().map_or(0, |e| e.x.len())
    }

    /// First `n` examples (or all of them if fewer).
    pub fn take(&self, n: usize) -> Dataset {
        Dataset {
            examples: self.examples.iter().take(n).cloned().collect(),
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> Dataset {
        Dataset {
            examples: Vec::new(),
            num_classes: self.num_classes,
            name: self.name.clone(),
            seed: self.seed,
        }
    }

    /// CSV with header `label,x0,x1,...`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("label");
        for i in 0..self.input_dim() {
            write!(out, ",x{i}").unwrap();
        }
        out.push('\n');
        for ex in &self.examples {
            write!(out, "{}", ex.y).unwrap();
            for v in ex.x.data() {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Center of class `k` among `num_classes` in `dim` dimensions.
///
/// Coordinate `d` is `0.5 + 0.3·cos(2π·k·(⌊d/2⌋+1)/K + (d mod 2)·π/2)`: the
/// first two coordinates place the classes evenly on a circle and further
/// coordinate pairs use higher harmonics. Every coordinate lies in
/// `[0.2, 0.8]`.
pub fn blob_center(k: usize, num_classes: usize, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|d| {
            let freq = (d / 2 + 1) as f64;
            let phase = if d % 2 == 1 { PI / 2.0 } else { 0.0 };
            let angle = 2.0 * PI * k as f64 * freq / num_classes as f64 + phase;
            0.5 + 0.3 * angle.cos()
        })
        .collect()
}

fn clip01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

/// Isotropic Gaussian blobs around [`blob_center`]s, clipped to `[0, 1]`.
///
/// Examples are interleaved by class: example `i·K + k` is the `i`-th draw
/// of class `k`.
pub fn gen_gaussian_blobs(
    n_per_class: usize,
    dim: usize,
    num_classes: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset> {
    if n_per_class == 0 || dim == 0 || num_classes < 2 {
        return Err(Error::InvalidArgument(format!(
            "blobs need n_per_class >= 1, dim >= 1, num_classes >= 2 (got {n_per_class}, {dim}, {num_classes})"
        )));
    }
    if !(spread > 0.0 && spread.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "spread must be positive, got {spread}"
        )));
    }
    let centers: Vec<Vec<f64>> = (0..num_classes)
        .map(|k| blob_center(k, num_classes, dim))
        .collect();
    let mut rng = Rng::new(seed);
    let mut examples = Vec::with_capacity(n_per_class * num_classes);
    for _ in 0..n_per_class {
        for (k, c) in centers.iter().enumerate() {
            let x = c
                .iter()
                .map(|&m| clip01(m + spread * rng.normal()))
                .collect();
            examples.push(Example::new(Tensor::vector(x)?, k)?);
        }
    }
    Ok(Dataset {
        examples,
        num_classes,
        name: "blobs".into(),
        seed,
    })
}

/// Parameter of the `i`-th of `n` points along a spiral arm, in `(0.1, 1]`.
pub fn spiral_t(i: usize, n: usize) -> f64 {
    0.1 + 0.9 * (i + 1) as f64 / n as f64
}

/// Noise-free point of spiral arm `class` (0 or 1) at parameter `t`.
///
/// Radius `0.4·t` around `(0.5, 0.5)`, angle `2.5π·t + class·π`; arms stay
/// inside `[0.1, 0.9]²`.
pub fn spiral_point(class: usize, t: f64) -> [f64; 2] {
    let angle = 2.5 * PI * t + class as f64 * PI;
    let r = 0.4 * t;
    [0.5 + r * angle.cos(), 0.5 + r * angle.sin()]
}

/// Two interleaved spirals with optional Gaussian noise, clipped to `[0, 1]²`.
pub fn gen_two_spirals(n_per_class: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if n_per_class == 0 {
        return Err(Error::InvalidArgument(
            "spirals need n_per_class >= 1".into(),
        ));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "noise must be >= 0, got {noise}"
        )));
    }
    let mut rng = Rng::new(seed);
    let mut examples = Vec::with_capacity(2 * n_per_class);
    for i in 0..n_per_class {
        let t = spiral_t(i, n_per_class);
        for class in 0..2 {
            let p = spiral_point(class, t);
            let x = if noise > 0.0 {
                p.iter()
                    .map(|&v| clip01(v + noise * rng.normal()))
                    .collect()
            } else {
                p.to_vec()
            };
            examples.push(Example::new(Tensor::vector(x)?, class)?);
        }
    }
    Ok(Dataset {
        examples,
        num_classes: 2,
        name: "spirals".into(),
        seed,
    })
}

/// Shuffled train/test split. The train part holds `round(fraction·n)`
/// examples.
pub fn split(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train_fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    Rng::new(seed).shuffle(&mut order);
    let n_train = (train_fraction * ds.len() as f64).round() as usize;
    let pick = |idx: &[usize], suffix: &str| Dataset {
        examples: idx.iter().map(|&i| ds.examples[i].clone()).collect(),
        num_classes: ds.num_classes,
        name: format!("{}-{suffix}", ds.name),
        seed: ds.seed,
    };
    Ok((
        pick(&order[..n_train], "train"),
        pick(&order[n_train..], "test"),
    ))
}
