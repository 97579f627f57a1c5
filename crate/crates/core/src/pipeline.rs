//! End-to-end workflow: partition, learn `D`, select blocks, encode groups,
//! classify, and the repeated-split experiment protocol.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cube::{extract_group, plan_partition, HsiCube, LabelMap, PartitionPlan, StackedObservations};
use crate::dict::{train_subdictionary, DictLearnConfig, SubDictionary};
use crate::error::{Result, SmsbError};
use crate::metrics::{compute_metrics, mean_std, ConfusionMatrix, Metrics};
use crate::select::{build_mask, compute_block_variances, BlockMask, MaskMode};
use crate::solver::{code_group_blockwise_with, BlockPenalty, SolverConfig};
use crate::svm::{cross_validate, svm_predict, svm_train, CvGrid, CvResult, Kernel, Standardizer, SvmModel, SvmParams};

pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    None,
    /// Divide every entry by the largest absolute entry seen at fit time.
    GlobalMax,
    /// Scale each pixel spectrum to unit Euclidean norm.
    PerPixelUnit,
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Normalization::None => "none",
            Normalization::GlobalMax => "global_max",
            Normalization::PerPixelUnit => "per_pixel_unit",
        })
    }
}

impl FromStr for Normalization {
    type Err = SmsbError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "none" => Ok(Normalization::None),
            "global_max" => Ok(Normalization::GlobalMax),
            "per_pixel_unit" => Ok(Normalization::PerPixelUnit),
            other => Err(SmsbError::Config(format!(
                "normalization `{other}`: expected none, global_max or per_pixel_unit"
            ))),
        }
    }
}

/// Penalty for the per-block joint coding problems.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CodeMu {
    Fixed(f64),
    /// Fraction of `max_r ||(DᵀY_ij)_r||₂`, per sub-problem.
    Relative(f64),
}

impl Default for CodeMu {
    fn default() -> Self {
        CodeMu::Relative(0.1)
    }
}

impl fmt::Display for CodeMu {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CodeMu::Fixed(v) => write!(f, "{v}"),
            CodeMu::Relative(r) => write!(f, "relative:{r}"),
        }
    }
}

/// `<mu>` for a fixed weight or `relative:<ratio>`.
impl FromStr for CodeMu {
    type Err = SmsbError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || SmsbError::Config(format!("coding mu `{s}`: expected <number> or relative:<ratio>"));
        let s = s.trim();
        let parsed = match s.split_once(':') {
            Some(("relative", r)) => CodeMu::Relative(r.trim().parse().map_err(|_| bad())?),
            Some(_) => return Err(bad()),
            None => CodeMu::Fixed(s.parse().map_err(|_| bad())?),
        };
        let v = match parsed {
            CodeMu::Fixed(v) | CodeMu::Relative(v) => v,
        };
        if !(v > 0.0) || !v.is_finite() {
            return Err(bad());
        }
        Ok(parsed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitParams {
    pub group_size: usize,
    pub block_count: usize,
    pub mask_mode: MaskMode,
    pub normalization: Normalization,
    /// `k`, `mu` (for the lasso stage), batch size, epochs and seed.
    pub dict: DictLearnConfig,
    pub code_mu: CodeMu,
    /// Iteration budget and tolerance for joint coding; `mu` is set from `code_mu`.
    pub solver: SolverConfig,
}

impl FitParams {
    pub fn new(group_size: usize, block_count: usize, atoms: usize, mask_mode: MaskMode) -> Self {
        Self {
            group_size,
            block_count,
            mask_mode,
            normalization: Normalization::GlobalMax,
            dict: DictLearnConfig::new(atoms),
            code_mu: CodeMu::default(),
            solver: SolverConfig::l21(1.0),
        }
    }
}

/// Everything needed to turn a cube into sparse features.
#[derive(Debug, Clone, PartialEq)]
pub struct SmsbModel {
    pub version: u32,
    pub plan: PartitionPlan,
    pub dict: SubDictionary,
    pub mask: BlockMask,
    /// Joint-coding settings. `mu` is only used with [`CodeMu::Fixed`].
    pub solver_cfg: SolverConfig,
    pub code_mu: CodeMu,
    pub mu_dict: f64,
    pub normalization: Normalization,
    /// Divisor applied under [`Normalization::GlobalMax`].
    pub norm_scale: f64,
    pub seed: u64,
    pub classifier: Option<Classifier>,
}

impl SmsbModel {
    pub fn feature_dim(&self) -> usize {
        self.mask.active_count() * self.dict.k()
    }

    fn penalty(&self) -> (SolverConfig, BlockPenalty) {
        match self.code_mu {
            CodeMu::Fixed(mu) => (self.solver_cfg.with_mu(mu), BlockPenalty::Fixed),
            CodeMu::Relative(r) => (self.solver_cfg.clone(), BlockPenalty::RelativeToMax(r)),
        }
    }

    /// Trims and normalizes a cube the same way the training cube was.
    pub fn prepare(&self, cube: &HsiCube) -> Result<HsiCube> {
        self.plan.check_cube(cube)?;
        let trimmed = cube.clone().trimmed(&self.plan)?;
        Ok(apply_normalization(&trimmed, self.normalization, self.norm_scale))
    }
}

fn global_max(cube: &HsiCube) -> f64 {
    let m = cube.data().iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

fn apply_normalization(cube: &HsiCube, norm: Normalization, scale: f64) -> HsiCube {
    match norm {
        Normalization::None => cube.clone(),
        Normalization::GlobalMax => cube.map_data(|d| d / scale),
        Normalization::PerPixelUnit => cube.map_data(|d| {
            let mut out = d.clone();
            for mut col in out.columns_mut() {
                let n = col.dot(&col).sqrt();
                if n > 0.0 {
                    col /= n;
                }
            }
            out
        }),
    }
}

/// Unsupervised fit: labels are never consulted.
pub fn fit(cube: &HsiCube, params: &FitParams) -> Result<SmsbModel> {
    let plan = plan_partition(cube, params.group_size, params.block_count)?;
    if let CodeMu::Fixed(mu) = params.code_mu {
        params.solver.with_mu(mu).validate()?;
    }
    if let MaskMode::TopN(n) = params.mask_mode {
        if n == 0 || n > params.block_count {
            return Err(SmsbError::Config(format!(
                "top_n({n}) needs 1..={} active blocks",
                params.block_count
            )));
        }
    }
    let trimmed = cube.clone().trimmed(&plan)?;
    let scale = match params.normalization {
        Normalization::GlobalMax => global_max(&trimmed),
        _ => 1.0,
    };
    let work = apply_normalization(&trimmed, params.normalization, scale);

    let stream = StackedObservations::new(&work, &plan)?;
    log::info!(
        "training {}x{} dictionary on {} stacked columns",
        plan.block_size(),
        params.dict.k,
        stream.cols()
    );
    let dict = train_subdictionary(&stream, &params.dict)?.quantize_f32();

    let variances = compute_block_variances(&work, &plan)?;
    let mask = build_mask(&variances, params.mask_mode)?;
    log::info!("active blocks {:?}", mask.active_blocks());

    Ok(SmsbModel {
        version: MODEL_VERSION,
        mu_dict: params.dict.effective_mu(plan.block_size()),
        plan,
        dict,
        mask,
        solver_cfg: params.solver.clone(),
        code_mu: params.code_mu,
        normalization: params.normalization,
        norm_scale: scale,
        seed: params.dict.seed,
        classifier: None,
    })
}

/// Per-pixel sparse features, one column per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseFeatureSet {
    /// `(n_active * k) x pixels`.
    pub features: Array2<f64>,
    pub pixel_ids: Vec<usize>,
    pub labels: Option<Vec<u16>>,
}

impl SparseFeatureSet {
    pub fn dim(&self) -> usize {
        self.features.nrows()
    }

    pub fn len(&self) -> usize {
        self.pixel_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixel_ids.is_empty()
    }

    /// One sample per row, the layout the classifier expects.
    pub fn samples(&self) -> ArrayView2<'_, f64> {
        self.features.t()
    }

    /// Fills `labels` from a label map.
    pub fn with_labels(mut self, labels: &LabelMap) -> Self {
        self.labels = Some(self.pixel_ids.iter().map(|&p| labels.labels[p]).collect());
        self
    }
}

/// Full `B*k` code matrix of one group on a prepared cube.
pub fn encode_group(prepared: &HsiCube, model: &SmsbModel, group: usize) -> Result<Array2<f64>> {
    let y = extract_group(prepared, &model.plan, group)?;
    let (cfg, penalty) = model.penalty();
    Ok(code_group_blockwise_with(y.view(), &model.dict, &model.mask, &cfg, penalty)?.codes)
}

/// Codes every group that holds a requested pixel and keeps the active-block
/// slices of those pixels. `None` means every pixel of the cube.
pub fn encode(cube: &HsiCube, model: &SmsbModel, pixel_filter: Option<&[usize]>) -> Result<SparseFeatureSet> {
    let prepared = model.prepare(cube)?;
    let n = prepared.pixels();
    let pixel_ids: Vec<usize> = match pixel_filter {
        None => (0..n).collect(),
        Some(ids) => {
            let mut seen = vec![false; n];
            let mut out = Vec::with_capacity(ids.len());
            for &p in ids {
                if p >= n {
                    return Err(SmsbError::Index(format!("pixel {p} out of range (N = {n})")));
                }
                if !seen[p] {
                    seen[p] = true;
                    out.push(p);
                }
            }
            out
        }
    };
    let owner = model.plan.group_of_pixels();
    let mut wanted: Vec<usize> = pixel_ids.iter().map(|&p| owner[p]).collect();
    wanted.sort_unstable();
    wanted.dedup();

    let k = model.dict.k();
    let active = model.mask.active_blocks();
    let dim = active.len() * k;
    let coded: Vec<(usize, Array2<f64>)> = wanted
        .par_iter()
        .map(|&g| {
            let codes = encode_group(&prepared, model, g)?;
            let mut kept = Array2::zeros((dim, codes.ncols()));
            for (slot, &j) in active.iter().enumerate() {
                kept.slice_mut(s![slot * k..(slot + 1) * k, ..])
                    .assign(&codes.slice(s![j * k..(j + 1) * k, ..]));
            }
            Ok((g, kept))
        })
        .collect::<Result<_>>()?;

    let slot_of: HashMap<usize, usize> = coded.iter().enumerate().map(|(i, (g, _))| (*g, i)).collect();
    // position of each pixel inside its group
    let mut within = vec![0usize; n];
    for members in model.plan.groups() {
        for (i, &p) in members.iter().enumerate() {
            within[p] = i;
        }
    }
    let mut features = Array2::zeros((dim, pixel_ids.len()));
    for (c, &p) in pixel_ids.iter().enumerate() {
        let codes = &coded[slot_of[&owner[p]]].1;
        features.column_mut(c).assign(&codes.column(within[p]));
    }
    Ok(SparseFeatureSet {
        features,
        pixel_ids,
        labels: None,
    })
}

/// Raw spectra as features (the baseline), one column per pixel.
pub fn raw_features(cube: &HsiCube, pixels: &[usize]) -> Result<SparseFeatureSet> {
    let n = cube.pixels();
    if let Some(&p) = pixels.iter().find(|&&p| p >= n) {
        return Err(SmsbError::Index(format!("pixel {p} out of range (N = {n})")));
    }
    Ok(SparseFeatureSet {
        features: cube.data().select(Axis(1), pixels),
        pixel_ids: pixels.to_vec(),
        labels: None,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    pub folds: usize,
    pub c_values: Vec<f64>,
    /// γ candidates as multiples of `1/d`.
    pub gamma_scales: Vec<f64>,
    pub standardize: bool,
    pub tol: f64,
    pub cache_mb: usize,
    /// Skip cross-validation and use this `(C, γ)`.
    pub fixed: Option<(f64, f64)>,
}

impl Default for ClassifierParams {
    fn default() -> Self {
        Self {
            folds: 5,
            c_values: vec![0.1, 1.0, 10.0, 100.0, 1000.0],
            gamma_scales: vec![0.5, 1.0, 2.0, 4.0],
            standardize: true,
            tol: 1e-3,
            cache_mb: 100,
            fixed: None,
        }
    }
}

impl ClassifierParams {
    pub fn grid(&self, dim: usize) -> CvGrid {
        let d = dim.max(1) as f64;
        CvGrid {
            c_values: self.c_values.clone(),
            gammas: self.gamma_scales.iter().map(|g| g / d).collect(),
        }
    }
}

/// Standardizer plus RBF SVM.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub standardizer: Standardizer,
    pub svm: SvmModel,
}

impl Classifier {
    /// `x` has one sample per row.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<u16>> {
        if x.ncols() != self.standardizer.mean.len() {
            return Err(SmsbError::ModelMismatch(format!(
                "features have {} dimensions, classifier expects {}",
                x.ncols(),
                self.standardizer.mean.len()
            )));
        }
        svm_predict(&self.svm, self.standardizer.transform(x).view())
    }
}

/// Cross-validates `(C, γ)` on the training rows (unless fixed), then trains on all of them.
pub fn train_classifier(
    x: ArrayView2<'_, f64>,
    y: &[u16],
    params: &ClassifierParams,
    seed: u64,
) -> Result<(Classifier, Option<CvResult>)> {
    let standardizer = if params.standardize {
        Standardizer::fit(x)
    } else {
        Standardizer::identity(x.ncols())
    };
    let xs = standardizer.transform(x);
    let base = SvmParams {
        tol: params.tol,
        cache_mb: params.cache_mb,
        ..SvmParams::new(1.0, Kernel::Rbf { gamma: 1.0 })
    };
    let (c, gamma, cv) = match params.fixed {
        Some((c, g)) => (c, g, None),
        None => {
            let r = cross_validate(xs.view(), y, params.folds, &params.grid(x.ncols()), seed, &base)?;
            (r.c, r.gamma, Some(r))
        }
    };
    let svm = svm_train(
        xs.view(),
        y,
        &SvmParams {
            c,
            kernel: Kernel::Rbf { gamma },
            ..base
        },
    )?;
    Ok((Classifier { standardizer, svm }, cv))
}

/// Classifies every pixel of the cube; the result carries the model's classes.
pub fn predict_map(cube: &HsiCube, model: &SmsbModel, class_count: u16) -> Result<LabelMap> {
    let clf = model
        .classifier
        .as_ref()
        .ok_or_else(|| SmsbError::ModelMismatch("model has no trained classifier".into()))?;
    let feats = encode(cube, model, None)?;
    let pred = clf.predict(feats.samples())?;
    let mut labels = vec![0u16; cube.pixels()];
    for (&p, &l) in feats.pixel_ids.iter().zip(&pred) {
        labels[p] = l;
    }
    let top = pred.iter().copied().max().unwrap_or(0).max(class_count);
    LabelMap::new(cube.width(), cube.height(), labels, top)
}

#[derive(Debug, Clone, PartialEq)]
pub enum SplitSpec {
    /// Training pixels per class, in class order `1..=C`.
    PerClass(Vec<usize>),
    /// Fraction of every class (at least one pixel).
    Fraction(f64),
}

/// Seeded stratified split of the labeled pixels into `(train, test)`.
pub fn stratified_split(labels: &LabelMap, spec: &SplitSpec, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut by_class: BTreeMap<u16, Vec<usize>> = BTreeMap::new();
    for p in labels.labeled_pixels() {
        by_class.entry(labels.labels[p]).or_default().push(p);
    }
    if by_class.is_empty() {
        return Err(SmsbError::EmptyInput("label map has no labeled pixels".into()));
    }
    if let SplitSpec::PerClass(counts) = spec {
        if counts.len() != labels.class_count as usize {
            return Err(SmsbError::Config(format!(
                "{} per-class training counts for {} classes",
                counts.len(),
                labels.class_count
            )));
        }
    }
    if let SplitSpec::Fraction(f) = spec {
        if !(*f > 0.0 && *f <= 1.0) {
            return Err(SmsbError::Config(format!("training fraction must be in (0, 1], got {f}")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (&class, members) in by_class.iter_mut() {
        let want = match spec {
            SplitSpec::PerClass(counts) => counts[class as usize - 1],
            SplitSpec::Fraction(f) => ((members.len() as f64 * f).round() as usize).max(1),
        };
        if want == 0 {
            return Err(SmsbError::DegenerateSplit(format!(
                "class {class} has {} pixels but none are assigned to training",
                members.len()
            )));
        }
        if want > members.len() {
            log::warn!(
                "class {class}: {want} training pixels requested, only {} available",
                members.len()
            );
        }
        members.shuffle(&mut rng);
        let cut = want.min(members.len());
        train.extend_from_slice(&members[..cut]);
        test.extend_from_slice(&members[cut..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentParams {
    pub fit: FitParams,
    pub split: SplitSpec,
    pub classifier: ClassifierParams,
    pub repeats: usize,
    /// Run `r` uses `seed + r` for the split, the dictionary and the folds.
    pub seed: u64,
}

/// Wall-clock seconds per stage of one run.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StageTimings {
    pub fit: f64,
    pub encode: f64,
    pub cross_validation: f64,
    pub train: f64,
    pub predict: f64,
    pub total: f64,
}

impl StageTimings {
    pub fn stages(&self) -> [(&'static str, f64); 5] {
        [
            ("fit", self.fit),
            ("encode", self.encode),
            ("cross_validation", self.cross_validation),
            ("train", self.train),
            ("predict", self.predict),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub seed: u64,
    pub metrics: Metrics,
    pub confusion: ConfusionMatrix,
    pub c: f64,
    pub gamma: f64,
    pub cv_accuracy: Option<f64>,
    pub train_size: usize,
    pub test_size: usize,
    pub timings: StageTimings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub method: String,
    pub feature_dim: usize,
    pub runs: Vec<RunResult>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportSummary {
    /// `(mean, std)` pairs.
    pub oa: (f64, f64),
    pub aa: (f64, f64),
    pub kappa: (f64, f64),
    /// `(class, mean, std)` over runs where the class had test pixels.
    pub per_class: Vec<(u16, f64, f64)>,
    pub timings: StageTimings,
}

impl ExperimentReport {
    pub fn oa_samples(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.metrics.oa).collect()
    }

    pub fn summary(&self) -> ReportSummary {
        let pick = |f: fn(&RunResult) -> f64| mean_std(&self.runs.iter().map(f).collect::<Vec<_>>());
        let mut per: BTreeMap<u16, Vec<f64>> = BTreeMap::new();
        for r in &self.runs {
            for (&c, acc) in r.confusion.classes().iter().zip(&r.metrics.per_class) {
                if let Some(a) = acc {
                    per.entry(c).or_default().push(*a);
                }
            }
        }
        let n = self.runs.len().max(1) as f64;
        let mut t = StageTimings::default();
        for r in &self.runs {
            t.fit += r.timings.fit / n;
            t.encode += r.timings.encode / n;
            t.cross_validation += r.timings.cross_validation / n;
            t.train += r.timings.train / n;
            t.predict += r.timings.predict / n;
            t.total += r.timings.total / n;
        }
        ReportSummary {
            oa: pick(|r| r.metrics.oa),
            aa: pick(|r| r.metrics.aa),
            kappa: pick(|r| r.metrics.kappa),
            per_class: per
                .into_iter()
                .map(|(c, v)| {
                    let (m, s) = mean_std(&v);
                    (c, m, s)
                })
                .collect(),
            timings: t,
        }
    }
}

enum Features<'a> {
    Smsb(&'a FitParams),
    Raw,
}

fn check_geometry(cube: &HsiCube, labels: &LabelMap) -> Result<()> {
    if cube.width() != labels.width || cube.height() != labels.height {
        return Err(SmsbError::ModelMismatch(format!(
            "cube is {}x{} but labels are {}x{}",
            cube.width(),
            cube.height(),
            labels.width,
            labels.height
        )));
    }
    Ok(())
}

fn one_run(cube: &HsiCube, labels: &LabelMap, params: &ExperimentParams, features: &Features<'_>, r: usize) -> Result<(RunResult, usize)> {
    let start = Instant::now();
    let seed = params.seed.wrapping_add(r as u64);
    let (train, test) = stratified_split(labels, &params.split, seed)?;
    let mut timings = StageTimings::default();
    let mut wanted = train.clone();
    wanted.extend_from_slice(&test);

    let t = Instant::now();
    let feats = match features {
        Features::Smsb(fp) => {
            let mut fp = (*fp).clone();
            fp.dict.seed = seed;
            let model = fit(cube, &fp)?;
            timings.fit = t.elapsed().as_secs_f64();
            let t = Instant::now();
            let f = encode(cube, &model, Some(&wanted))?;
            timings.encode = t.elapsed().as_secs_f64();
            f
        }
        Features::Raw => {
            let f = raw_features(cube, &wanted)?;
            timings.encode = t.elapsed().as_secs_f64();
            f
        }
    };
    let dim = feats.dim();
    let xt = feats.features.slice(s![.., ..train.len()]).t().to_owned();
    let xv = feats.features.slice(s![.., train.len()..]).t().to_owned();
    let yt: Vec<u16> = train.iter().map(|&p| labels.labels[p]).collect();
    let yv: Vec<u16> = test.iter().map(|&p| labels.labels[p]).collect();

    let t = Instant::now();
    let standardizer = if params.classifier.standardize {
        Standardizer::fit(xt.view())
    } else {
        Standardizer::identity(dim)
    };
    let xts = standardizer.transform(xt.view());
    let cv = match params.classifier.fixed {
        Some(_) => None,
        None => Some(cross_validate(
            xts.view(),
            &yt,
            params.classifier.folds,
            &params.classifier.grid(dim),
            seed,
            &SvmParams {
                tol: params.classifier.tol,
                cache_mb: params.classifier.cache_mb,
                ..SvmParams::new(1.0, Kernel::Rbf { gamma: 1.0 })
            },
        )?),
    };
    timings.cross_validation = t.elapsed().as_secs_f64();
    let (c, gamma) = match (&cv, params.classifier.fixed) {
        (Some(r), _) => (r.c, r.gamma),
        (None, Some(p)) => p,
        (None, None) => unreachable!(),
    };

    let t = Instant::now();
    let clf_params = ClassifierParams {
        fixed: Some((c, gamma)),
        ..params.classifier.clone()
    };
    let (clf, _) = train_classifier(xt.view(), &yt, &clf_params, seed)?;
    timings.train = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let pred = clf.predict(xv.view())?;
    timings.predict = t.elapsed().as_secs_f64();

    let classes: Vec<u16> = (1..=labels.class_count).collect();
    let mut cm = ConfusionMatrix::new(classes);
    for (&truth, &p) in yv.iter().zip(&pred) {
        cm.add(truth, p);
    }
    let metrics = compute_metrics(&cm)?;
    timings.total = start.elapsed().as_secs_f64();
    log::info!(
        "run {r} seed {seed}: OA {:.4} AA {:.4} kappa {:.4} (C={c}, gamma={gamma:.4e})",
        metrics.oa,
        metrics.aa,
        metrics.kappa
    );
    Ok((
        RunResult {
            seed,
            metrics,
            confusion: cm,
            c,
            gamma,
            cv_accuracy: cv.map(|r| r.accuracy),
            train_size: train.len(),
            test_size: test.len(),
            timings,
        },
        dim,
    ))
}

fn run_many(cube: &HsiCube, labels: &LabelMap, params: &ExperimentParams, features: Features<'_>, method: &str) -> Result<ExperimentReport> {
    check_geometry(cube, labels)?;
    if params.repeats == 0 {
        return Err(SmsbError::Config("repeats must be at least 1".into()));
    }
    let mut runs = Vec::with_capacity(params.repeats);
    let mut feature_dim = 0;
    for r in 0..params.repeats {
        let (run, dim) = one_run(cube, labels, params, &features, r)?;
        feature_dim = dim;
        runs.push(run);
    }
    Ok(ExperimentReport {
        method: method.to_string(),
        feature_dim,
        runs,
    })
}

/// SMSB features + SVM, repeated over `params.repeats` seeded splits.
pub fn run_experiment(cube: &HsiCube, labels: &LabelMap, params: &ExperimentParams) -> Result<ExperimentReport> {
    run_many(cube, labels, params, Features::Smsb(&params.fit), "smsb")
}

/// Same protocol with raw spectra as features.
pub fn baseline_svm_raw(cube: &HsiCube, labels: &LabelMap, params: &ExperimentParams) -> Result<ExperimentReport> {
    run_many(cube, labels, params, Features::Raw, "svm-raw")
}
