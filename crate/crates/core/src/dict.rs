//! Online learning of the shared sub-dictionary from stacked spectral-block columns.
//!
//! Mini-batch scheme with accumulated sufficient statistics: each batch is lasso
//! coded against the current dictionary, the statistics `A ← βA + XXᵀ` and
//! `B ← βB + YXᵀ` are updated with `β = 1 - 1/t`, and every atom gets one
//! block-coordinate step followed by projection onto the unit ball.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cube::StackedObservations;
use crate::error::{Result, SmsbError};
use crate::linalg::{frobenius_sq, l1_norm};
use crate::solver::{code_l1, Regularizer, SolverConfig};

const NORM_SLACK: f64 = 1e-12;

/// The `s x k` dictionary shared by every spectral block.
#[derive(Debug, Clone, PartialEq)]
pub struct SubDictionary {
    atoms: Array2<f64>,
}

impl SubDictionary {
    /// Wraps a matrix whose columns already lie in the unit ball.
    pub fn new(atoms: Array2<f64>) -> Result<Self> {
        if atoms.nrows() == 0 || atoms.ncols() == 0 {
            return Err(SmsbError::Shape("dictionary must be non-empty".into()));
        }
        if !atoms.iter().all(|v| v.is_finite()) {
            return Err(SmsbError::NumericInput("dictionary contains non-finite entries".into()));
        }
        for (j, col) in atoms.columns().into_iter().enumerate() {
            let n = col.dot(&col).sqrt();
            if n > 1.0 + NORM_SLACK {
                return Err(SmsbError::Config(format!("atom {j} has norm {n} > 1")));
            }
        }
        Ok(Self { atoms })
    }

    /// Scales every non-zero column to unit norm.
    pub fn normalized(mut atoms: Array2<f64>) -> Result<Self> {
        for mut col in atoms.columns_mut() {
            let n = col.dot(&col).sqrt();
            if n > 0.0 {
                col /= n;
            }
        }
        Self::new(atoms)
    }

    pub fn atoms(&self) -> &Array2<f64> {
        &self.atoms
    }

    /// Rows (bands per block).
    pub fn s(&self) -> usize {
        self.atoms.nrows()
    }

    /// Columns (atoms).
    pub fn k(&self) -> usize {
        self.atoms.ncols()
    }

    /// Rounds every entry to the nearest `f32`, shrinking any column pushed
    /// past unit norm by the rounding so the result stays in the unit ball and
    /// serializes losslessly as `f32`.
    pub fn quantize_f32(&self) -> Self {
        let mut atoms = self.atoms.mapv(|v| v as f32 as f64);
        for mut col in atoms.columns_mut() {
            let mut guard = 0;
            while col.dot(&col).sqrt() > 1.0 && guard < 64 {
                col.mapv_inplace(|v| ((v as f32) * (1.0 - f32::EPSILON)) as f64);
                guard += 1;
            }
        }
        Self { atoms }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DictLearnConfig {
    pub k: usize,
    /// Lasso weight; `None` means `1/sqrt(s)`.
    pub mu: Option<f64>,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Consecutive unused batches after which an atom is replaced.
    pub dead_atom_threshold: usize,
    /// Statistics are scaled by `(1 - 1/t)^forgetting` before batch `t` is added.
    pub forgetting: f64,
    /// Coordinate-descent settings for batch coding; `mu` is overridden.
    pub coder: SolverConfig,
}

impl DictLearnConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            mu: None,
            batch_size: 256,
            epochs: 10,
            seed: 0,
            dead_atom_threshold: 5,
            forgetting: 8.0,
            coder: SolverConfig::l1(1.0),
        }
    }

    pub fn effective_mu(&self, s: usize) -> f64 {
        self.mu.unwrap_or(1.0 / (s as f64).sqrt())
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 || self.batch_size == 0 || self.epochs == 0 {
            return Err(SmsbError::Config("k, batch_size and epochs must be at least 1".into()));
        }
        if let Some(mu) = self.mu {
            if !(mu > 0.0) || !mu.is_finite() {
                return Err(SmsbError::Config(format!("dictionary mu must be positive, got {mu}")));
            }
        }
        if !(self.forgetting >= 0.0) || !self.forgetting.is_finite() {
            return Err(SmsbError::Config(format!("forgetting must be non-negative, got {}", self.forgetting)));
        }
        Ok(())
    }
}

/// Random-access source of `s`-dimensional training columns.
pub trait ColumnSource: Sync {
    fn dim(&self) -> usize;
    fn len(&self) -> usize;
    fn copy_column(&self, idx: usize, out: &mut [f64]);

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl ColumnSource for Array2<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn len(&self) -> usize {
        self.ncols()
    }

    fn copy_column(&self, idx: usize, out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(self.column(idx)) {
            *o = *v;
        }
    }
}

impl ColumnSource for ArrayView2<'_, f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn len(&self) -> usize {
        self.ncols()
    }

    fn copy_column(&self, idx: usize, out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(self.column(idx)) {
            *o = *v;
        }
    }
}

impl ColumnSource for StackedObservations<'_> {
    fn dim(&self) -> usize {
        self.rows()
    }

    fn len(&self) -> usize {
        self.cols()
    }

    fn copy_column(&self, idx: usize, out: &mut [f64]) {
        StackedObservations::copy_column(self, idx, out)
    }
}

/// Per-epoch diagnostics from training.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    /// Mean per-column objective over the batches of each epoch.
    pub epoch_objectives: Vec<f64>,
    pub batches: usize,
    pub replaced_atoms: usize,
}

pub fn train_subdictionary(source: &dyn ColumnSource, cfg: &DictLearnConfig) -> Result<SubDictionary> {
    train_subdictionary_traced(source, cfg).map(|(d, _)| d)
}

pub fn train_subdictionary_traced(
    source: &dyn ColumnSource,
    cfg: &DictLearnConfig,
) -> Result<(SubDictionary, TrainTrace)> {
    cfg.validate()?;
    let s = source.dim();
    let n = source.len();
    let k = cfg.k;
    if n < k {
        return Err(SmsbError::InsufficientData(format!(
            "{n} training columns for {k} atoms"
        )));
    }
    let mu = cfg.effective_mu(s);
    let coder = SolverConfig {
        mu,
        regularizer: Regularizer::L1,
        ..cfg.coder.clone()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut atoms = init_from_data(source, k, &mut rng)?;
    let mut stat_a = Array2::<f64>::zeros((k, k));
    let mut stat_b = Array2::<f64>::zeros((s, k));
    let mut idle = vec![0usize; k];
    let mut trace = TrainTrace::default();
    let mut order: Vec<usize> = (0..n).collect();
    let mut t = 0usize;
    let batch = cfg.batch_size.min(n);

    for _epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_obj = 0.0;
        let mut epoch_cols = 0usize;
        for chunk in order.chunks(batch) {
            t += 1;
            let mut yb = Array2::<f64>::zeros((s, chunk.len()));
            let mut buf = vec![0.0; s];
            for (c, &idx) in chunk.iter().enumerate() {
                source.copy_column(idx, &mut buf);
                yb.column_mut(c).assign(&Array1::from(buf.clone()));
            }
            let dict = SubDictionary { atoms: atoms.clone() };
            let coded = code_l1(yb.view(), &dict, &coder)?;
            let x = coded.codes;
            epoch_obj += coded.objective;
            epoch_cols += chunk.len();

            let beta = (1.0 - 1.0 / t as f64).powf(cfg.forgetting);
            stat_a *= beta;
            stat_b *= beta;
            stat_a += &x.dot(&x.t());
            stat_b += &yb.dot(&x.t());

            update_atoms(&mut atoms, &stat_a, &stat_b);

            // rounding can leave a duplicate atom with a negligible coefficient
            let floor = 1e-8 * x.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            for (j, row) in x.axis_iter(Axis(0)).enumerate() {
                if row.iter().any(|&v| v.abs() > floor) {
                    idle[j] = 0;
                } else {
                    idle[j] += 1;
                }
            }
            let dead: Vec<usize> = (0..k).filter(|&j| idle[j] >= cfg.dead_atom_threshold).collect();
            if !dead.is_empty() {
                let residual = &yb - &atoms.dot(&x);
                let mut worst: Vec<(usize, f64)> = residual
                    .columns()
                    .into_iter()
                    .enumerate()
                    .map(|(c, r)| (c, r.dot(&r)))
                    .collect();
                worst.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                let mut picks = worst.into_iter().filter(|(c, _)| {
                    let col = yb.column(*c);
                    col.dot(&col) > 0.0
                });
                for j in dead {
                    let Some((c, _)) = picks.next() else { break };
                    let col = yb.column(c);
                    let norm = col.dot(&col).sqrt();
                    atoms.column_mut(j).assign(&(&col / norm));
                    stat_a.row_mut(j).fill(0.0);
                    stat_a.column_mut(j).fill(0.0);
                    stat_b.column_mut(j).fill(0.0);
                    idle[j] = 0;
                    trace.replaced_atoms += 1;
                }
            }
            debug_assert!(atoms
                .columns()
                .into_iter()
                .all(|c| c.dot(&c).sqrt() <= 1.0 + NORM_SLACK));
            trace.batches += 1;
        }
        trace.epoch_objectives.push(epoch_obj / epoch_cols.max(1) as f64);
    }

    if !atoms.iter().all(|v| v.is_finite()) {
        return Err(SmsbError::NumericInput("dictionary training diverged".into()));
    }
    // An atom that never got usage after its last reset still holds a data column,
    // so no column can be all-zero here.
    Ok((SubDictionary { atoms }, trace))
}

fn init_from_data(source: &dyn ColumnSource, k: usize, rng: &mut ChaCha8Rng) -> Result<Array2<f64>> {
    let s = source.dim();
    let n = source.len();
    let mut buf = vec![0.0; s];
    let mut atoms = Array2::<f64>::zeros((s, k));
    let mut filled = 0;
    let mut candidates: Vec<usize> = (0..n).collect();
    // partial Fisher-Yates: draw distinct indices until k non-zero columns are found
    for i in 0..n {
        let j = rng.random_range(i..n);
        candidates.swap(i, j);
        source.copy_column(candidates[i], &mut buf);
        let norm = buf.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (r, v) in buf.iter().enumerate() {
                atoms[[r, filled]] = v / norm;
            }
            filled += 1;
            if filled == k {
                return Ok(atoms);
            }
        }
    }
    if filled == 0 {
        return Err(SmsbError::DegenerateData("every training column is zero".into()));
    }
    Err(SmsbError::InsufficientData(format!(
        "only {filled} non-zero training columns for {k} atoms"
    )))
}

fn update_atoms(atoms: &mut Array2<f64>, stat_a: &Array2<f64>, stat_b: &Array2<f64>) {
    let k = atoms.ncols();
    for j in 0..k {
        let ajj = stat_a[[j, j]];
        if ajj <= 1e-15 {
            continue;
        }
        let da = atoms.dot(&stat_a.column(j));
        let mut u = atoms.column(j).to_owned() + (&stat_b.column(j) - &da) / ajj;
        let norm = u.dot(&u).sqrt();
        if norm > 1.0 {
            u /= norm;
        }
        atoms.column_mut(j).assign(&u);
    }
}

/// `½||Y - DX||²_F + mu ||X||_1` at the lasso solution `X`.
pub fn dictionary_objective(d: &SubDictionary, y: ArrayView2<'_, f64>, mu: f64) -> Result<f64> {
    let res = code_l1(y, d, &SolverConfig::l1(mu))?;
    let r = &y - &d.atoms().dot(&res.codes);
    Ok(0.5 * frobenius_sq(r.view()) + mu * l1_norm(res.codes.view()))
}
