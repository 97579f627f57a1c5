//! Synthetic cubes with known structure, and brute-force reference solvers.
//!
//! Classes differ only inside the designated discriminative blocks; every other
//! block carries one shared profile. Class regions are vertical stripes whose
//! edges sit on multiples of the group size, so every spatial group is
//! label-homogeneous.

use ndarray::{s, Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::cube::{HsiCube, LabelMap};
use crate::error::{Result, SmsbError};
use crate::pipeline::FitParams;
use crate::select::{compute_block_variances, BlockMask, MaskMode};
use crate::solver::{l21_accelerated, SolverConfig, SparseCodeResult};
use crate::{dict::SubDictionary, plan_partition};

/// Largest `B*k` the materialized reference solver accepts.
pub const ORACLE_MAX_COLS: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub width: usize,
    pub height: usize,
    pub bands: usize,
    pub class_count: usize,
    pub atoms_per_class: usize,
    pub noise_std: f64,
    pub seed: u64,
    pub block_count: usize,
    pub discriminative_blocks: Vec<usize>,
    /// Stripe edges are aligned to this many pixels.
    pub group_size: usize,
}

impl SynthSpec {
    /// Three or more well separated classes with light noise.
    pub fn separable(class_count: usize, seed: u64) -> Self {
        Self {
            width: 8 * class_count,
            height: 16,
            bands: 40,
            class_count,
            atoms_per_class: 2,
            noise_std: 0.01,
            seed,
            block_count: 5,
            discriminative_blocks: vec![1, 3],
            group_size: 4,
        }
    }

    /// Heavier noise; raw spectra no longer separate the classes reliably.
    pub fn noisy(class_count: usize, seed: u64) -> Self {
        Self {
            width: 8 * class_count,
            height: 24,
            bands: 80,
            noise_std: 0.25,
            block_count: 8,
            discriminative_blocks: vec![2, 5],
            ..Self::separable(class_count, seed)
        }
    }

    /// Fit settings matched to the generator: one atom more than there are
    /// classes and as many active blocks as discriminative ones.
    pub fn recommended_fit(&self) -> FitParams {
        let mut p = FitParams::new(
            self.group_size,
            self.block_count,
            self.class_count + 1,
            MaskMode::TopN(self.discriminative_blocks.len().max(1)),
        );
        p.dict.seed = self.seed;
        p
    }

    pub fn block_size(&self) -> usize {
        self.bands / self.block_count.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.group_size == 0 {
            return Err(SmsbError::Spec("width, height and group size must be positive".into()));
        }
        if self.block_count == 0 || self.block_count > self.bands {
            return Err(SmsbError::Spec(format!(
                "{} blocks do not fit in {} bands",
                self.block_count, self.bands
            )));
        }
        if self.class_count == 0 || self.class_count > u16::MAX as usize {
            return Err(SmsbError::Spec(format!("bad class count {}", self.class_count)));
        }
        if self.atoms_per_class == 0 {
            return Err(SmsbError::Spec("atoms_per_class must be at least 1".into()));
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return Err(SmsbError::Spec(format!("noise_std must be >= 0, got {}", self.noise_std)));
        }
        if let Some(&j) = self.discriminative_blocks.iter().find(|&&j| j >= self.block_count) {
            return Err(SmsbError::Spec(format!(
                "discriminative block {j} outside 0..{}",
                self.block_count
            )));
        }
        let stripes = self.width / self.group_size;
        if self.class_count > stripes {
            return Err(SmsbError::Spec(format!(
                "{} classes need {} group-wide stripes, width {} holds {stripes}",
                self.class_count,
                self.class_count,
                self.width
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthTruth {
    /// `s x (class_count * atoms_per_class)`, unit-norm columns; class `c` owns
    /// columns `c*a .. (c+1)*a`.
    pub dictionary: Array2<f64>,
    /// Block variances of the noise-free cube.
    pub block_variances: Vec<f64>,
    /// Noise-free spectrum of each class, `bands x class_count`.
    pub class_means: Array2<f64>,
    pub discriminative_blocks: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub cube: HsiCube,
    pub labels: LabelMap,
    pub truth: SynthTruth,
}

/// Smooth positive unit-norm atom: a Gaussian bump over a small floor.
fn smooth_atom(s: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let centre = rng.random_range(0.0..s as f64);
    let width = rng.random_range((s as f64 / 8.0).max(0.5)..(s as f64 / 3.0).max(1.0));
    let mut v: Vec<f64> = (0..s)
        .map(|i| {
            let d = (i as f64 - centre) / width;
            (-0.5 * d * d).exp() + 0.05
        })
        .collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

/// Class of every pixel: vertical stripes with group-aligned edges.
pub fn stripe_labels(width: usize, height: usize, group_size: usize, classes: usize) -> Vec<u16> {
    let tiles = (width / group_size).max(1);
    let column_class: Vec<u16> = (0..width)
        .map(|x| {
            let tile = (x / group_size).min(tiles - 1);
            (tile * classes / tiles) as u16 + 1
        })
        .collect();
    (0..width * height).map(|p| column_class[p % width]).collect()
}

pub fn generate(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let s = spec.block_size();
    let c = spec.class_count;
    let a = spec.atoms_per_class;

    let mut dictionary = Array2::zeros((s, c * a));
    for j in 0..c * a {
        let atom = smooth_atom(s, &mut rng);
        for (i, v) in atom.into_iter().enumerate() {
            dictionary[[i, j]] = v;
        }
    }
    // class signature: fixed positive mix of the class's own atoms
    let mut signatures = Array2::zeros((s, c));
    for class in 0..c {
        for j in 0..a {
            let w = rng.random_range(0.5..1.0);
            let atom = dictionary.column(class * a + j).to_owned();
            let mut col = signatures.column_mut(class);
            col.scaled_add(w, &atom);
        }
    }
    // shared profile: equal mix of every atom
    let shared = dictionary.sum_axis(ndarray::Axis(1)) * (0.7 / (c * a) as f64);

    let mut class_means = Array2::zeros((spec.bands, c));
    for b in 0..spec.block_count {
        let rows = b * s..(b + 1) * s;
        if spec.discriminative_blocks.contains(&b) {
            let mut levels: Vec<f64> = (0..c)
                .map(|i| if c == 1 { 1.0 } else { 0.4 + 0.6 * i as f64 / (c - 1) as f64 })
                .collect();
            levels.shuffle(&mut rng);
            for class in 0..c {
                let v = &signatures.column(class) * levels[class];
                class_means.slice_mut(s![rows.clone(), class]).assign(&v);
            }
        } else {
            for class in 0..c {
                class_means.slice_mut(s![rows.clone(), class]).assign(&shared);
            }
        }
    }
    // bands left over by the block split get the shared level
    let floor = shared.mean().unwrap_or(0.0);
    for band in spec.block_count * s..spec.bands {
        class_means.row_mut(band).fill(floor);
    }

    let labels = stripe_labels(spec.width, spec.height, spec.group_size, c);
    let n = spec.width * spec.height;
    let clean = Array2::from_shape_fn((spec.bands, n), |(band, p)| class_means[[band, labels[p] as usize - 1]]);
    let noise = Normal::new(0.0, spec.noise_std).map_err(|e| SmsbError::Spec(e.to_string()))?;
    let noisy = if spec.noise_std > 0.0 {
        clean.mapv(|v| v + noise.sample(&mut rng))
    } else {
        clean.clone()
    };

    let clean_cube = HsiCube::new(spec.width, spec.height, clean)?;
    let plan = plan_partition(&clean_cube, spec.group_size.min(spec.width.max(spec.height)), spec.block_count)?;
    let block_variances = compute_block_variances(&clean_cube, &plan)?;

    let mut label_map = LabelMap::new(spec.width, spec.height, labels, c as u16)?;
    label_map.class_names = Some((1..=c).map(|i| format!("class-{i}")).collect());
    Ok(SynthData {
        cube: HsiCube::new(spec.width, spec.height, noisy)?,
        labels: label_map,
        truth: SynthTruth {
            dictionary,
            block_variances,
            class_means,
            discriminative_blocks: spec.discriminative_blocks.clone(),
        },
    })
}

/// Solves the undecomposed joint problem with `A = W ⊗ D` written out explicitly.
pub fn oracle_global_solve(
    y: ArrayView2<'_, f64>,
    d: &SubDictionary,
    mask: &BlockMask,
    cfg: &SolverConfig,
) -> Result<SparseCodeResult> {
    let (s, k, b) = (d.s(), d.k(), mask.len());
    if b * k > ORACLE_MAX_COLS {
        return Err(SmsbError::OracleScope(format!(
            "B*k = {} exceeds the reference limit {ORACLE_MAX_COLS}",
            b * k
        )));
    }
    if y.nrows() != b * s {
        return Err(SmsbError::Shape(format!(
            "group has {} rows, expected B*s = {}",
            y.nrows(),
            b * s
        )));
    }
    cfg.validate()?;
    let mut a = Array2::zeros((b * s, b * k));
    for (j, &on) in mask.flags().iter().enumerate() {
        if on {
            a.slice_mut(s![j * s..(j + 1) * s, j * k..(j + 1) * k]).assign(d.atoms());
        }
    }
    l21_accelerated(y, a.view(), cfg)
}

/// Ground truth for dictionary recovery: `Y = D*X* + noise` at a target SNR.
#[derive(Debug, Clone, PartialEq)]
pub struct DictionaryProblem {
    pub truth: Array2<f64>,
    pub codes: Array2<f64>,
    pub signals: Array2<f64>,
}

/// Random unit-norm `s x k` dictionary, `sparsity` non-zeros per code column,
/// Gaussian noise scaled so that `10 log10(||DX||² / ||N||²) = snr_db`.
pub fn dictionary_problem(s: usize, k: usize, n: usize, sparsity: usize, snr_db: f64, seed: u64) -> Result<DictionaryProblem> {
    if s == 0 || k == 0 || n == 0 || sparsity == 0 || sparsity > k {
        return Err(SmsbError::Spec(format!(
            "bad dictionary problem s={s} k={k} n={n} sparsity={sparsity}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut truth: Array2<f64> = Array2::from_shape_fn((s, k), |_| StandardNormal.sample(&mut rng));
    for mut col in truth.columns_mut() {
        let nrm = col.dot(&col).sqrt();
        col /= nrm;
    }
    let mut codes = Array2::zeros((k, n));
    let mut idx: Vec<usize> = (0..k).collect();
    for col in 0..n {
        idx.shuffle(&mut rng);
        for &i in &idx[..sparsity] {
            let mag: f64 = rng.random_range(0.5..1.5);
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            codes[[i, col]] = sign * mag;
        }
    }
    let clean = truth.dot(&codes);
    let power = clean.iter().map(|v| v * v).sum::<f64>() / clean.len() as f64;
    let sigma = (power / 10f64.powf(snr_db / 10.0)).sqrt();
    let noise = Normal::new(0.0, sigma).map_err(|e| SmsbError::Spec(e.to_string()))?;
    let signals = clean.mapv(|v| v + noise.sample(&mut rng));
    Ok(DictionaryProblem { truth, codes, signals })
}

/// Fraction of ground-truth atoms matched by some learned atom with `|corr| > threshold`.
pub fn atom_recovery(truth: ArrayView2<'_, f64>, learned: ArrayView2<'_, f64>, threshold: f64) -> f64 {
    let unit = |v: ndarray::ArrayView1<'_, f64>| {
        let n = v.dot(&v).sqrt();
        if n > 0.0 {
            &v / n
        } else {
            v.to_owned()
        }
    };
    let learned: Vec<_> = learned.columns().into_iter().map(unit).collect();
    let hits = truth
        .columns()
        .into_iter()
        .filter(|t| {
            let t = unit(*t);
            learned.iter().any(|l| l.dot(&t).abs() > threshold)
        })
        .count();
    hits as f64 / truth.ncols().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::select::build_mask;
    use crate::solver::code_l21;

    #[test]
    fn noiseless_classes_are_constant() {
        let mut spec = SynthSpec::separable(3, 1);
        spec.noise_std = 0.0;
        let data = generate(&spec).unwrap();
        let d = data.cube.data();
        for p in 0..data.cube.pixels() {
            let c = data.labels.labels[p] as usize - 1;
            assert_eq!(d.column(p), data.truth.class_means.column(c));
        }
    }

    #[test]
    fn designed_blocks_have_larger_variance() {
        let data = generate(&SynthSpec::separable(3, 2)).unwrap();
        let plan = plan_partition(&data.cube, 4, 5).unwrap();
        let v = compute_block_variances(&data.cube, &plan).unwrap();
        let lowest_disc = [1, 3].iter().map(|&j| v[j]).fold(f64::INFINITY, f64::min);
        for j in [0, 2, 4] {
            assert!(v[j] < lowest_disc);
        }
    }

    #[test]
    fn same_seed_same_cube() {
        let a = generate(&SynthSpec::noisy(4, 9)).unwrap();
        let b = generate(&SynthSpec::noisy(4, 9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_many_classes_for_width() {
        let mut spec = SynthSpec::separable(3, 0);
        spec.width = 8;
        assert!(matches!(generate(&spec), Err(SmsbError::Spec(_))));
    }

    #[test]
    fn stripes_are_group_aligned() {
        let l = stripe_labels(26, 1, 4, 3);
        // 6 full tiles: 2 per class, the leftover 2 columns join the last stripe
        assert_eq!(&l[..8], &[1; 8]);
        assert_eq!(&l[8..16], &[2; 8]);
        assert_eq!(&l[16..], &[3; 10]);
    }

    #[test]
    fn oracle_single_block_is_plain_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = SubDictionary::normalized(Array2::from_shape_fn((4, 5), |_| rng.random_range(-1.0..1.0))).unwrap();
        let y = Array2::from_shape_fn((4, 6), |_| rng.random_range(-1.0..1.0));
        let cfg = SolverConfig::l21(0.1);
        let a = oracle_global_solve(y.view(), &d, &BlockMask::all_active(1), &cfg).unwrap();
        let b = code_l21(y.view(), &d, &cfg).unwrap();
        assert_eq!(a.codes, b.codes);
    }

    #[test]
    fn oracle_zero_signal_and_scope() {
        let d = SubDictionary::normalized(Array2::eye(4)).unwrap();
        let y = Array2::zeros((8, 3));
        let mask = build_mask(&[1.0, 2.0], MaskMode::TopN(2)).unwrap();
        let r = oracle_global_solve(y.view(), &d, &mask, &SolverConfig::l21(0.1)).unwrap();
        assert!(r.codes.iter().all(|&v| v == 0.0));
        let big = SubDictionary::normalized(Array2::eye(9)).unwrap();
        let y = Array2::zeros((9 * 8, 1));
        assert!(matches!(
            oracle_global_solve(y.view(), &big, &BlockMask::all_active(8), &SolverConfig::l21(0.1)),
            Err(SmsbError::OracleScope(_))
        ));
    }

    #[test]
    fn dictionary_problem_snr() {
        let p = dictionary_problem(8, 12, 2000, 3, 40.0, 1).unwrap();
        let clean = p.truth.dot(&p.codes);
        let noise = &p.signals - &clean;
        let snr = 10.0 * (clean.iter().map(|v| v * v).sum::<f64>() / noise.iter().map(|v| v * v).sum::<f64>()).log10();
        assert!((snr - 40.0).abs() < 0.5, "snr {snr}");
        assert_eq!(atom_recovery(p.truth.view(), p.truth.view(), 0.99), 1.0);
    }
}
