//! Fixtures shared by the benchmarks.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use smsb::{BlockMask, SubDictionary};

/// One group's stacked observations with `b` blocks of `s` bands, `n` pixels,
/// and a random unit-norm `s x k` dictionary; all blocks active.
pub struct GroupInstance {
    pub y: Array2<f64>,
    pub dict: SubDictionary,
    pub mask: BlockMask,
}

pub fn group_instance(b: usize, s: usize, k: usize, n: usize, seed: u64) -> GroupInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let atoms = Array2::from_shape_fn((s, k), |_| rng.sample::<f64, _>(StandardNormal));
    let y = Array2::from_shape_fn((b * s, n), |_| rng.sample::<f64, _>(StandardNormal));
    GroupInstance {
        y,
        dict: SubDictionary::normalized(atoms).expect("non-zero atoms"),
        mask: BlockMask::all_active(b),
    }
}

/// Gaussian blobs, one per class, `per_class` samples each, `dim` features.
pub fn blobs(classes: u16, per_class: usize, dim: usize, spread: f64, seed: u64) -> (Array2<f64>, Vec<u16>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres = Array2::from_shape_fn((classes as usize, dim), |_| rng.sample::<f64, _>(StandardNormal));
    let n = classes as usize * per_class;
    let mut x = Array2::zeros((n, dim));
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % classes as usize;
        for j in 0..dim {
            x[[i, j]] = centres[[c, j]] + spread * rng.sample::<f64, _>(StandardNormal);
        }
        y.push(c as u16 + 1);
    }
    (x, y)
}
