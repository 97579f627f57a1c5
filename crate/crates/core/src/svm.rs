//! Multi-class soft-margin SVM: one-vs-one binary machines trained by SMO with
//! maximal-violating-pair working-set selection, plus stratified k-fold
//! cross-validation over a `(C, γ)` grid.

use std::collections::{BTreeMap, HashMap};
use std::rc::Rc;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Result, SmsbError};

/// Smallest curvature used in a two-variable step.
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    Rbf { gamma: f64 },
    Linear,
}

impl Kernel {
    pub fn eval(&self, a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
        match *self {
            Kernel::Linear => a.dot(&b),
            Kernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmParams {
    pub c: f64,
    pub kernel: Kernel,
    /// Stop when the maximal KKT violation drops below this.
    pub tol: f64,
    /// Kernel row cache budget per binary problem, in MiB.
    pub cache_mb: usize,
}

impl SvmParams {
    pub fn new(c: f64, kernel: Kernel) -> Self {
        Self {
            c,
            kernel,
            tol: 1e-3,
            cache_mb: 100,
        }
    }
}

/// One binary machine: `f(x) = Σ coef_i K(sv_i, x) + bias`, positive means `positive`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairModel {
    pub positive: u16,
    pub negative: u16,
    /// Rows of [`SvmModel::support_vectors`].
    pub support: Vec<usize>,
    /// `y_i α_i` for each support vector.
    pub coefs: Vec<f64>,
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub kernel: Kernel,
    pub c: f64,
    pub classes: Vec<u16>,
    /// One row per support vector.
    pub support_vectors: Array2<f64>,
    pub pairs: Vec<PairModel>,
}

impl SvmModel {
    pub fn dim(&self) -> usize {
        self.support_vectors.ncols()
    }
}

/// Trains one-vs-one machines. `x` has one sample per row.
pub fn svm_train(x: ArrayView2<'_, f64>, y: &[u16], params: &SvmParams) -> Result<SvmModel> {
    if x.nrows() != y.len() {
        return Err(SmsbError::Shape(format!("{} samples but {} labels", x.nrows(), y.len())));
    }
    if !(params.c > 0.0) {
        return Err(SmsbError::Config(format!("C must be positive, got {}", params.c)));
    }
    if let Kernel::Rbf { gamma } = params.kernel {
        if !(gamma > 0.0) {
            return Err(SmsbError::Config(format!("gamma must be positive, got {gamma}")));
        }
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(SmsbError::NumericInput("training features contain non-finite values".into()));
    }
    let mut by_class: BTreeMap<u16, Vec<usize>> = BTreeMap::new();
    for (i, &c) in y.iter().enumerate() {
        by_class.entry(c).or_default().push(i);
    }
    if by_class.len() < 2 {
        return Err(SmsbError::DegenerateLabels(format!(
            "need at least two classes, found {}",
            by_class.len()
        )));
    }
    let classes: Vec<u16> = by_class.keys().copied().collect();
    let mut jobs = Vec::new();
    for a in 0..classes.len() {
        for b in a + 1..classes.len() {
            jobs.push((a, b));
        }
    }

    let solved: Vec<(u16, u16, Vec<usize>, Vec<f64>, f64)> = jobs
        .par_iter()
        .map(|&(a, b)| {
            let pos = &by_class[&classes[a]];
            let neg = &by_class[&classes[b]];
            let idx: Vec<usize> = pos.iter().chain(neg).copied().collect();
            let labels: Vec<f64> = pos
                .iter()
                .map(|_| 1.0)
                .chain(neg.iter().map(|_| -1.0))
                .collect();
            let (alpha, rho) = solve_binary(x, &idx, &labels, params);
            let mut sv = Vec::new();
            let mut coef = Vec::new();
            for (t, &a) in alpha.iter().enumerate() {
                if a > 0.0 {
                    sv.push(idx[t]);
                    coef.push(labels[t] * a);
                }
            }
            (classes[a], classes[b], sv, coef, -rho)
        })
        .collect();

    let mut row_of: HashMap<usize, usize> = HashMap::new();
    let mut order: Vec<usize> = Vec::new();
    for (_, _, sv, _, _) in &solved {
        for &i in sv {
            row_of.entry(i).or_insert_with(|| {
                order.push(i);
                order.len() - 1
            });
        }
    }
    let mut support_vectors = Array2::zeros((order.len(), x.ncols()));
    for (r, &i) in order.iter().enumerate() {
        support_vectors.row_mut(r).assign(&x.row(i));
    }
    let pairs = solved
        .into_iter()
        .map(|(positive, negative, sv, coefs, bias)| PairModel {
            positive,
            negative,
            support: sv.iter().map(|i| row_of[i]).collect(),
            coefs,
            bias,
        })
        .collect();
    Ok(SvmModel {
        kernel: params.kernel,
        c: params.c,
        classes,
        support_vectors,
        pairs,
    })
}

/// LRU cache of kernel rows over a fixed sample subset.
struct KernelCache<'a> {
    x: ArrayView2<'a, f64>,
    idx: &'a [usize],
    kernel: Kernel,
    rows: Vec<Option<Rc<[f64]>>>,
    stamp: Vec<u64>,
    clock: u64,
    held: usize,
    capacity: usize,
}

impl<'a> KernelCache<'a> {
    fn new(x: ArrayView2<'a, f64>, idx: &'a [usize], kernel: Kernel, cache_mb: usize) -> Self {
        let n = idx.len();
        let row_bytes = (n * std::mem::size_of::<f64>()).max(1);
        let capacity = ((cache_mb << 20) / row_bytes).max(2);
        Self {
            x,
            idx,
            kernel,
            rows: vec![None; n],
            stamp: vec![0; n],
            clock: 0,
            held: 0,
            capacity,
        }
    }

    fn row(&mut self, i: usize) -> Rc<[f64]> {
        self.clock += 1;
        self.stamp[i] = self.clock;
        if let Some(r) = &self.rows[i] {
            return r.clone();
        }
        if self.held >= self.capacity {
            let victim = (0..self.rows.len())
                .filter(|&t| self.rows[t].is_some() && t != i)
                .min_by_key(|&t| self.stamp[t])
                .expect("cache holds at least one row");
            self.rows[victim] = None;
            self.held -= 1;
        }
        let xi = self.x.row(self.idx[i]);
        let r: Rc<[f64]> = self
            .idx
            .iter()
            .map(|&t| self.kernel.eval(xi, self.x.row(t)))
            .collect();
        self.rows[i] = Some(r.clone());
        self.held += 1;
        r
    }
}

/// Dual solve of one binary problem; returns `(alpha, rho)` with
/// decision `f(x) = Σ y_i α_i K(x_i, x) - rho`.
fn solve_binary(x: ArrayView2<'_, f64>, idx: &[usize], y: &[f64], params: &SvmParams) -> (Vec<f64>, f64) {
    let n = idx.len();
    let c = params.c;
    let mut cache = KernelCache::new(x, idx, params.kernel, params.cache_mb);
    let diag: Vec<f64> = idx
        .iter()
        .map(|&i| params.kernel.eval(x.row(i), x.row(i)))
        .collect();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let max_iter = (100 * n).max(10_000_000);

    for _ in 0..max_iter {
        let mut gmax = f64::NEG_INFINITY;
        let mut gmax2 = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        let mut j_sel = usize::MAX;
        for t in 0..n {
            let at_upper = alpha[t] >= c;
            let at_lower = alpha[t] <= 0.0;
            if y[t] > 0.0 {
                if !at_upper && -grad[t] >= gmax {
                    gmax = -grad[t];
                    i_sel = t;
                }
                if !at_lower && grad[t] >= gmax2 {
                    gmax2 = grad[t];
                    j_sel = t;
                }
            } else {
                if !at_upper && -grad[t] >= gmax2 {
                    gmax2 = -grad[t];
                    j_sel = t;
                }
                if !at_lower && grad[t] >= gmax {
                    gmax = grad[t];
                    i_sel = t;
                }
            }
        }
        if gmax + gmax2 < params.tol || i_sel == usize::MAX || j_sel == usize::MAX {
            break;
        }
        let (i, j) = (i_sel, j_sel);
        let ki = cache.row(i);
        let kj = cache.row(j);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            // Q_ij = y_i y_j K_ij = -K_ij
            let mut quad = diag[i] + diag[j] + 2.0 * ki[j];
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = diag[i] + diag[j] - 2.0 * ki[j];
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let di = alpha[i] - old_i;
        let dj = alpha[j] - old_j;
        for t in 0..n {
            grad[t] += y[t] * (y[i] * ki[t] * di + y[j] * kj[t] * dj);
        }
    }

    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut free = 0usize;
    let mut sum_free = 0.0;
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum_free += yg;
        }
    }
    let rho = if free > 0 {
        sum_free / free as f64
    } else {
        (ub + lb) / 2.0
    };
    (alpha, rho)
}

/// Per-pair decision values for each sample (rows of `x`), `samples x pairs`.
pub fn decision_values(model: &SvmModel, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if x.ncols() != model.dim() {
        return Err(SmsbError::ModelMismatch(format!(
            "features have {} dimensions, model expects {}",
            x.ncols(),
            model.dim()
        )));
    }
    let pairs = model.pairs.len();
    let mut out = Array2::zeros((x.nrows(), pairs));
    out.axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(x.axis_iter(Axis(0)).into_par_iter())
        .for_each(|(mut row, sample)| {
            let k: Vec<f64> = model
                .support_vectors
                .rows()
                .into_iter()
                .map(|sv| model.kernel.eval(sv, sample))
                .collect();
            for (p, pair) in model.pairs.iter().enumerate() {
                let s: f64 = pair
                    .support
                    .iter()
                    .zip(&pair.coefs)
                    .map(|(&r, &c)| c * k[r])
                    .sum();
                row[p] = s + pair.bias;
            }
        });
    Ok(out)
}

/// Majority vote over pairs; ties go to the larger summed decision value,
/// then to the smaller class id.
pub fn svm_predict(model: &SvmModel, x: ArrayView2<'_, f64>) -> Result<Vec<u16>> {
    let dv = decision_values(model, x)?;
    let index: HashMap<u16, usize> = model
        .classes
        .iter()
        .enumerate()
        .map(|(i, &c)| (c, i))
        .collect();
    let nc = model.classes.len();
    Ok(dv
        .rows()
        .into_iter()
        .map(|row| {
            let mut votes = vec![0usize; nc];
            let mut score = vec![0.0f64; nc];
            for (pair, &f) in model.pairs.iter().zip(row) {
                let (p, n) = (index[&pair.positive], index[&pair.negative]);
                if f > 0.0 {
                    votes[p] += 1;
                } else {
                    votes[n] += 1;
                }
                score[p] += f;
                score[n] -= f;
            }
            let mut best = 0;
            for c in 1..nc {
                if votes[c] > votes[best] || (votes[c] == votes[best] && score[c] > score[best]) {
                    best = c;
                }
            }
            model.classes[best]
        })
        .collect())
}

/// Per-dimension standardization fitted on training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Array1<f64>,
    pub scale: Array1<f64>,
}

impl Standardizer {
    pub fn fit(x: ArrayView2<'_, f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mean = x.sum_axis(Axis(0)) / n;
        let var = x
            .rows()
            .into_iter()
            .fold(Array1::<f64>::zeros(x.ncols()), |acc, r| acc + (&r - &mean).mapv(|v| v * v))
            / n;
        let scale = var.mapv(|v| if v > 1e-24 { v.sqrt() } else { 1.0 });
        Self { mean, scale }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mean: Array1::zeros(dim),
            scale: Array1::ones(dim),
        }
    }

    pub fn transform(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        (&x - &self.mean) / &self.scale
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvGrid {
    pub c_values: Vec<f64>,
    /// Absolute γ values.
    pub gammas: Vec<f64>,
}

impl CvGrid {
    /// `C ∈ {0.1, 1, 10, 100, 1000}`, `γ ∈ {0.5, 1, 2, 4} / dim`.
    pub fn default_for_dim(dim: usize) -> Self {
        let d = dim.max(1) as f64;
        Self {
            c_values: vec![0.1, 1.0, 10.0, 100.0, 1000.0],
            gammas: [0.5, 1.0, 2.0, 4.0].iter().map(|g| g / d).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.c_values.len() * self.gammas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub c: f64,
    pub gamma: f64,
    pub accuracy: f64,
    /// `(C, γ, mean fold accuracy)` for every grid point.
    pub table: Vec<(f64, f64, f64)>,
    pub folds: usize,
}

/// Stratified fold id for every sample. Each class is shuffled and dealt
/// round-robin. The fold count shrinks to the smallest class size (never below 2).
pub fn stratified_folds(y: &[u16], folds: usize, seed: u64) -> (Vec<usize>, usize) {
    let mut by_class: BTreeMap<u16, Vec<usize>> = BTreeMap::new();
    for (i, &c) in y.iter().enumerate() {
        by_class.entry(c).or_default().push(i);
    }
    let smallest = by_class.values().map(Vec::len).min().unwrap_or(0);
    let k = folds.min(smallest).max(2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assign = vec![0; y.len()];
    let mut offset = 0;
    for members in by_class.values_mut() {
        members.shuffle(&mut rng);
        for (r, &i) in members.iter().enumerate() {
            assign[i] = (r + offset) % k;
        }
        // continue the deal where the previous class stopped to balance fold sizes
        offset = (offset + members.len()) % k;
    }
    (assign, k)
}

/// Grid search by stratified k-fold accuracy. Ties prefer smaller `C`, then smaller `γ`.
pub fn cross_validate(
    x: ArrayView2<'_, f64>,
    y: &[u16],
    folds: usize,
    grid: &CvGrid,
    seed: u64,
    base: &SvmParams,
) -> Result<CvResult> {
    if grid.is_empty() {
        return Err(SmsbError::Config("cross-validation grid is empty".into()));
    }
    if folds < 2 {
        return Err(SmsbError::Config(format!("need at least 2 folds, got {folds}")));
    }
    if x.nrows() != y.len() {
        return Err(SmsbError::Shape(format!("{} samples but {} labels", x.nrows(), y.len())));
    }
    let (assign, k) = stratified_folds(y, folds, seed);
    let mut points = Vec::new();
    for &c in &grid.c_values {
        for &g in &grid.gammas {
            points.push((c, g));
        }
    }
    let split = |f: usize| {
        let train: Vec<usize> = (0..y.len()).filter(|&i| assign[i] != f).collect();
        let test: Vec<usize> = (0..y.len()).filter(|&i| assign[i] == f).collect();
        (train, test)
    };
    let splits: Vec<(Vec<usize>, Vec<usize>)> = (0..k).map(split).collect();
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..k).map(move |f| (p, f)))
        .collect();
    let accs: Vec<Result<f64>> = jobs
        .par_iter()
        .map(|&(p, f)| {
            let (c, g) = points[p];
            let (train, test) = &splits[f];
            if test.is_empty() {
                return Ok(f64::NAN);
            }
            let xt = x.select(Axis(0), train);
            let yt: Vec<u16> = train.iter().map(|&i| y[i]).collect();
            let params = SvmParams {
                c,
                kernel: match base.kernel {
                    Kernel::Rbf { .. } => Kernel::Rbf { gamma: g },
                    Kernel::Linear => Kernel::Linear,
                },
                ..base.clone()
            };
            let model = svm_train(xt.view(), &yt, &params)?;
            let xv = x.select(Axis(0), test);
            let pred = svm_predict(&model, xv.view())?;
            let hits = pred.iter().zip(test).filter(|(p, &i)| **p == y[i]).count();
            Ok(hits as f64 / test.len() as f64)
        })
        .collect();
    let mut table = Vec::with_capacity(points.len());
    for (p, &(c, g)) in points.iter().enumerate() {
        let mut sum = 0.0;
        let mut cnt = 0;
        for f in 0..k {
            let a = accs[p * k + f].as_ref().map_err(clone_err)?;
            if a.is_finite() {
                sum += a;
                cnt += 1;
            }
        }
        table.push((c, g, sum / cnt.max(1) as f64));
    }
    let mut best = 0;
    for (i, cand) in table.iter().enumerate().skip(1) {
        let cur = &table[best];
        let better = cand.2 > cur.2 + 1e-12
            || ((cand.2 - cur.2).abs() <= 1e-12
                && (cand.0 < cur.0 || (cand.0 == cur.0 && cand.1 < cur.1)));
        if better {
            best = i;
        }
    }
    let (c, gamma, accuracy) = table[best];
    Ok(CvResult {
        c,
        gamma,
        accuracy,
        table,
        folds: k,
    })
}

fn clone_err(e: &SmsbError) -> SmsbError {
    match e {
        SmsbError::DegenerateLabels(m) => SmsbError::DegenerateLabels(m.clone()),
        other => SmsbError::Config(other.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn decision_of(model: &SvmModel, x: ArrayView2<'_, f64>) -> Array2<f64> {
        decision_values(model, x).unwrap()
    }

    #[test]
    fn linear_separable_margins() {
        let x = array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [3.0, 3.0], [4.0, 3.0], [3.0, 4.0]];
        let y = [1, 1, 1, 2, 2, 2];
        let model = svm_train(x.view(), &y, &SvmParams::new(1e3, Kernel::Linear)).unwrap();
        assert_eq!(svm_predict(&model, x.view()).unwrap(), y.to_vec());
        let dv = decision_of(&model, x.view());
        for (i, &label) in y.iter().enumerate() {
            let signed = if label == 1 { dv[[i, 0]] } else { -dv[[i, 0]] };
            assert!(signed >= 1.0 - 1e-2, "sample {i} margin {signed}");
        }
    }

    #[test]
    fn xor_with_rbf() {
        let x = array![[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]];
        let y = [1, 1, 2, 2];
        let model = svm_train(x.view(), &y, &SvmParams::new(10.0, Kernel::Rbf { gamma: 1.0 })).unwrap();
        // evaluate the decision function directly from the stored expansion
        for (i, &label) in y.iter().enumerate() {
            let pair = &model.pairs[0];
            let f: f64 = pair
                .support
                .iter()
                .zip(&pair.coefs)
                .map(|(&r, &c)| {
                    let d2: f64 = (&model.support_vectors.row(r) - &x.row(i)).mapv(|v| v * v).sum();
                    c * (-d2).exp()
                })
                .sum::<f64>()
                + pair.bias;
            assert_eq!(f > 0.0, label == 1);
        }
        assert_eq!(svm_predict(&model, x.view()).unwrap(), y.to_vec());
    }

    #[test]
    fn duplicated_training_set_with_half_c_same_decision() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 20;
        let x = Array2::from_shape_fn((n, 2), |(i, _)| {
            rng.sample::<f64, _>(StandardNormal) + if i < n / 2 { 1.0 } else { -1.0 }
        });
        let y: Vec<u16> = (0..n).map(|i| if i < n / 2 { 1 } else { 2 }).collect();
        let mut params = SvmParams::new(1.0, Kernel::Rbf { gamma: 0.5 });
        params.tol = 1e-12;
        let m1 = svm_train(x.view(), &y, &params).unwrap();
        let x2 = ndarray::concatenate(Axis(0), &[x.view(), x.view()]).unwrap();
        let y2: Vec<u16> = y.iter().chain(&y).copied().collect();
        // each sample now counts twice in the hinge loss
        let half = SvmParams { c: params.c / 2.0, ..params.clone() };
        let m2 = svm_train(x2.view(), &y2, &half).unwrap();
        let probe = Array2::from_shape_fn((50, 2), |_| rng.random_range(-3.0..3.0));
        let d1 = decision_of(&m1, probe.view());
        let d2 = decision_of(&m2, probe.view());
        let worst = (&d1 - &d2).iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        assert!(worst < 1e-9, "max decision gap {worst}");
    }

    #[test]
    fn dual_feasibility() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let x = Array2::from_shape_fn((60, 3), |_| rng.sample::<f64, _>(StandardNormal));
        let y: Vec<u16> = (0..60).map(|i| (i % 3) as u16 + 1).collect();
        let c = 2.0;
        let model = svm_train(x.view(), &y, &SvmParams::new(c, Kernel::Rbf { gamma: 0.3 })).unwrap();
        assert_eq!(model.pairs.len(), 3);
        for p in &model.pairs {
            let s: f64 = p.coefs.iter().sum();
            assert!(s.abs() < 1e-6);
            assert!(p.coefs.iter().all(|a| a.abs() <= c + 1e-12 && a.abs() > 0.0));
        }
    }

    #[test]
    fn single_class_rejected() {
        let x = array![[0.0], [1.0]];
        assert!(matches!(
            svm_train(x.view(), &[3, 3], &SvmParams::new(1.0, Kernel::Linear)),
            Err(SmsbError::DegenerateLabels(_))
        ));
    }

    #[test]
    fn predict_dimension_mismatch() {
        let x = array![[0.0, 1.0], [1.0, 0.0]];
        let model = svm_train(x.view(), &[1, 2], &SvmParams::new(1.0, Kernel::Linear)).unwrap();
        let bad = array![[0.0, 1.0, 2.0]];
        assert!(matches!(svm_predict(&model, bad.view()), Err(SmsbError::ModelMismatch(_))));
    }

    #[test]
    fn support_vector_predicts_its_class() {
        let x = array![[0.0, 0.0], [0.0, 1.0], [2.0, 0.0], [2.0, 1.0]];
        let y = [1, 1, 2, 2];
        let model = svm_train(x.view(), &y, &SvmParams::new(1e6, Kernel::Linear)).unwrap();
        let sv = model.support_vectors.clone();
        let pred = svm_predict(&model, sv.view()).unwrap();
        for (r, p) in pred.iter().enumerate() {
            let i = (0..4).find(|&i| x.row(i) == sv.row(r)).unwrap();
            assert_eq!(*p, y[i]);
        }
    }

    #[test]
    fn tiny_gamma_prefers_majority() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let x = Array2::from_shape_fn((20, 2), |_| rng.random_range(-1.0..1.0));
        let y: Vec<u16> = (0..20).map(|i| if i < 10 { 2 } else if i < 15 { 1 } else { 3 }).collect();
        let model = svm_train(x.view(), &y, &SvmParams::new(1.0, Kernel::Rbf { gamma: 1e-9 })).unwrap();
        let far = array![[50.0, -40.0], [-60.0, 30.0]];
        assert_eq!(svm_predict(&model, far.view()).unwrap(), vec![2, 2]);
    }

    #[test]
    fn row_permutation_permutes_predictions() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let x = Array2::from_shape_fn((30, 2), |_| rng.sample::<f64, _>(StandardNormal));
        let y: Vec<u16> = (0..30).map(|i| (i % 3) as u16 + 1).collect();
        let model = svm_train(x.view(), &y, &SvmParams::new(1.0, Kernel::Rbf { gamma: 1.0 })).unwrap();
        let probe = Array2::from_shape_fn((10, 2), |_| rng.sample::<f64, _>(StandardNormal));
        let pred = svm_predict(&model, probe.view()).unwrap();
        let perm: Vec<usize> = (0..10).rev().collect();
        let permuted = probe.select(Axis(0), &perm);
        let pred2 = svm_predict(&model, permuted.view()).unwrap();
        for (a, &b) in perm.iter().enumerate() {
            assert_eq!(pred2[a], pred[b]);
        }
    }

    #[test]
    fn tiny_cache_matches_full_cache() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let x = Array2::from_shape_fn((40, 3), |_| rng.sample::<f64, _>(StandardNormal));
        let y: Vec<u16> = (0..40).map(|i| (i % 2) as u16 + 1).collect();
        let full = SvmParams::new(1.0, Kernel::Rbf { gamma: 0.5 });
        let tiny = SvmParams { cache_mb: 0, ..full.clone() };
        assert_eq!(svm_train(x.view(), &y, &full).unwrap(), svm_train(x.view(), &y, &tiny).unwrap());
    }

    #[test]
    fn cv_single_point_and_empty_grid() {
        let x = array![[0.0], [0.1], [0.2], [1.0], [1.1], [1.2]];
        let y = [1, 1, 1, 2, 2, 2];
        let grid = CvGrid {
            c_values: vec![3.0],
            gammas: vec![0.7],
        };
        let r = cross_validate(x.view(), &y, 5, &grid, 0, &SvmParams::new(1.0, Kernel::Rbf { gamma: 1.0 }))
            .unwrap();
        assert_eq!((r.c, r.gamma), (3.0, 0.7));
        assert_eq!(r.folds, 3);
        let empty = CvGrid {
            c_values: vec![],
            gammas: vec![1.0],
        };
        assert!(matches!(
            cross_validate(x.view(), &y, 5, &empty, 0, &SvmParams::new(1.0, Kernel::Linear)),
            Err(SmsbError::Config(_))
        ));
    }

    #[test]
    fn stratified_folds_balance_classes() {
        let y: Vec<u16> = (0..50).map(|i| if i < 30 { 1 } else { 2 }).collect();
        let (assign, k) = stratified_folds(&y, 5, 9);
        assert_eq!(k, 5);
        for f in 0..5 {
            let ones = (0..30).filter(|&i| assign[i] == f).count();
            let twos = (30..50).filter(|&i| assign[i] == f).count();
            assert_eq!((ones, twos), (6, 4));
        }
    }

    #[test]
    fn standardizer_centres_and_scales() {
        let x = array![[1.0, 5.0], [3.0, 5.0]];
        let s = Standardizer::fit(x.view());
        let t = s.transform(x.view());
        assert_eq!(t, array![[-1.0, 0.0], [1.0, 0.0]]);
    }
}
