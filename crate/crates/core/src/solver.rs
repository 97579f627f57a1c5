//! Sparse inference: lasso coding by coordinate descent, joint (ℓ2,1) coding by
//! accelerated proximal gradient, and the block-diagonal driver that solves one
//! small joint problem per active spectral block.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::dict::SubDictionary;
use crate::error::{Result, SmsbError};
use crate::linalg::{all_finite, certified_top_bound, frobenius_sq, gram_top_eigenvalue, l1_norm, l21_norm};
use crate::select::BlockMask;

pub const DEFAULT_MAX_ITERS: usize = 500;
pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_KKT_TOL: f64 = 1e-6;
const POWER_ITERS: usize = 30;
const POWER_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regularizer {
    L1,
    L21,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub mu: f64,
    pub max_iters: usize,
    /// Relative objective change that stops the proximal gradient loop.
    pub tol: f64,
    /// Optimality tolerance. Coordinate descent stops below it; the proximal
    /// gradient loop also needs it (scaled by `max(1, max_r ||(Aᵀy)_r||)`)
    /// before `tol` may stop it.
    pub kkt_tol: f64,
    pub regularizer: Regularizer,
}

impl SolverConfig {
    pub fn l21(mu: f64) -> Self {
        Self {
            mu,
            max_iters: DEFAULT_MAX_ITERS,
            tol: DEFAULT_TOL,
            kkt_tol: DEFAULT_KKT_TOL,
            regularizer: Regularizer::L21,
        }
    }

    pub fn l1(mu: f64) -> Self {
        Self {
            regularizer: Regularizer::L1,
            ..Self::l21(mu)
        }
    }

    pub fn with_mu(&self, mu: f64) -> Self {
        Self { mu, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0) || !self.mu.is_finite() {
            return Err(SmsbError::Config(format!("mu must be positive, got {}", self.mu)));
        }
        if !(self.tol > 0.0) || !(self.kkt_tol > 0.0) {
            return Err(SmsbError::Config("tolerances must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(SmsbError::Config("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseCodeResult {
    pub codes: Array2<f64>,
    pub objective: f64,
    pub iters: usize,
    pub residual_fro: f64,
    /// Largest violation of the first-order optimality conditions.
    pub kkt_residual: f64,
    /// Objective after every accepted iterate (joint coding only).
    pub trace: Vec<f64>,
}

/// Row-wise shrinkage, the proximal map of `tau * ||.||_{2,1}`.
pub fn prox_l21(x: ArrayView2<'_, f64>, tau: f64) -> Array2<f64> {
    let mut out = x.to_owned();
    prox_l21_inplace(&mut out, tau);
    out
}

fn prox_l21_inplace(x: &mut Array2<f64>, tau: f64) {
    if tau > 0.0 {
        prox_l21_rows(x, tau);
    }
}

fn prox_l21_rows(x: &mut Array2<f64>, tau: f64) {
    for mut row in x.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm <= tau {
            row.fill(0.0);
        } else {
            row *= 1.0 - tau / norm;
        }
    }
}

fn soft_threshold(v: f64, tau: f64) -> f64 {
    if v > tau {
        v - tau
    } else if v < -tau {
        v + tau
    } else {
        0.0
    }
}

fn check_inputs(y: ArrayView2<'_, f64>, d: ArrayView2<'_, f64>) -> Result<()> {
    if y.nrows() != d.nrows() {
        return Err(SmsbError::Shape(format!(
            "signals have {} rows but dictionary has {}",
            y.nrows(),
            d.nrows()
        )));
    }
    if !all_finite(y) {
        return Err(SmsbError::NumericInput("signals contain non-finite entries".into()));
    }
    if !all_finite(d) {
        return Err(SmsbError::NumericInput("dictionary contains non-finite entries".into()));
    }
    Ok(())
}

/// Joint sparse coding `min_X ½||Y - DX||²_F + mu ||X||_{2,1}`.
pub fn code_l21(y: ArrayView2<'_, f64>, d: &SubDictionary, cfg: &SolverConfig) -> Result<SparseCodeResult> {
    if cfg.regularizer != Regularizer::L21 {
        return Err(SmsbError::Config("code_l21 needs an L21 solver config".into()));
    }
    cfg.validate()?;
    l21_accelerated(y, d.atoms().view(), cfg)
}

/// Accelerated proximal gradient for the ℓ2,1 problem with an arbitrary matrix.
///
/// Uses step `1/L` with `L` the power-iteration estimate of `σ_max(A)²`. An
/// iterate that would raise the objective is rejected and momentum restarts
/// from the last accepted point, so the accepted objective sequence never
/// increases. `L` is doubled if the quadratic upper bound ever fails.
pub fn l21_accelerated(
    y: ArrayView2<'_, f64>,
    a: ArrayView2<'_, f64>,
    cfg: &SolverConfig,
) -> Result<SparseCodeResult> {
    check_inputs(y, a)?;
    let op = GramOperator::new(a);
    l21_with_operator(y, &op, cfg)
}

/// `AᵀA` and its top eigenvalue, shared by every solve against the same `A`.
struct GramOperator<'a> {
    a: ArrayView2<'a, f64>,
    gram: Array2<f64>,
    lipschitz: f64,
}

impl<'a> GramOperator<'a> {
    fn new(a: ArrayView2<'a, f64>) -> Self {
        let gram = a.t().dot(&a);
        let lipschitz = certified_top_bound(&gram, gram_top_eigenvalue(&gram, POWER_ITERS, POWER_TOL));
        Self { a, gram, lipschitz }
    }
}

fn l21_with_operator(y: ArrayView2<'_, f64>, op: &GramOperator<'_>, cfg: &SolverConfig) -> Result<SparseCodeResult> {
    let (a, gram) = (op.a, &op.gram);
    let k = a.ncols();
    let n = y.ncols();
    let mu = cfg.mu;
    let aty = a.t().dot(&y);
    let y_sq = frobenius_sq(y);

    let mut x = Array2::<f64>::zeros((k, n));
    let mut obj_x = 0.5 * y_sq;
    let mut trace = vec![obj_x];
    let mut iters = 0;

    if op.lipschitz > 0.0 && n > 0 && k > 0 {
        // every buffer is k x n in standard layout, so the loops below run on flat slices
        let c = aty.as_slice().expect("standard layout");
        let inv_l = 1.0 / op.lipschitz;
        let mut gx = Array2::<f64>::zeros((k, n));
        let mut prev = x.clone();
        let mut gprev = gx.clone();
        let mut z = x.clone();
        let mut gz = gx.clone();
        let kkt_limit = cfg.kkt_tol * crate::linalg::max_row_norm(aty.view()).max(1.0);
        let mut t = 1.0_f64;
        let mut beta = 0.0;
        let mut restarted = true;
        while iters < cfg.max_iters {
            iters += 1;
            let z_l21 = extrapolate_step(
                z.as_slice_mut().expect("standard layout"),
                [
                    x.as_slice().expect("standard layout"),
                    prev.as_slice().expect("standard layout"),
                    gx.as_slice().expect("standard layout"),
                    gprev.as_slice().expect("standard layout"),
                    c,
                ],
                n,
                beta,
                inv_l,
                mu * inv_l,
            );
            general_mat_mul(1.0, gram, &z, 0.0, &mut gz);
            let f_z = 0.5 * y_sq
                + smooth_cross(
                    z.as_slice().expect("standard layout"),
                    gz.as_slice().expect("standard layout"),
                    c,
                );

            let obj_z = f_z + mu * z_l21;
            // f(z) is a difference of O(||y||²) terms, so smaller changes are rounding
            let noise = 8.0 * f64::EPSILON * (0.5 * y_sq + obj_x.abs());
            if obj_z > obj_x + noise {
                if restarted {
                    // a plain proximal step from the accepted point made no progress
                    break;
                }
                t = 1.0;
                beta = 0.0;
                restarted = true;
                continue;
            }

            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let change = (obj_x - obj_z).abs();
            let scale = obj_x.abs().max(f64::MIN_POSITIVE);
            obj_x = obj_z.min(obj_x);
            trace.push(obj_x);
            if change <= cfg.tol * scale
                && kkt_rows(
                    z.as_slice().expect("standard layout"),
                    gz.as_slice().expect("standard layout"),
                    c,
                    n,
                    mu,
                ) <= kkt_limit
            {
                std::mem::swap(&mut x, &mut z);
                break;
            }

            // prev <- x <- z, and the oldest buffer becomes the next candidate
            std::mem::swap(&mut prev, &mut x);
            std::mem::swap(&mut x, &mut z);
            std::mem::swap(&mut gprev, &mut gx);
            std::mem::swap(&mut gx, &mut gz);
            beta = (t - 1.0) / t_next;
            t = t_next;
            restarted = beta == 0.0;
        }
    }

    let residual = &y - &a.dot(&x);
    let residual_sq = frobenius_sq(residual.view());
    let objective = 0.5 * residual_sq + mu * l21_norm(x.view());
    let kkt = l21_optimality(gram, &aty, &x, mu);
    log::debug!(
        "l21 solve: {k}x{n}, {iters} iters, objective {objective:.6e}, optimality residual {kkt:.3e}"
    );
    Ok(SparseCodeResult {
        codes: x,
        objective,
        iters,
        residual_fro: residual_sq.sqrt(),
        kkt_residual: kkt,
        trace,
    })
}

const LANES: usize = 4;

type Lanes = [f64; LANES];

/// `Σ z(½Gz - c)` with independent partial sums per lane.
fn smooth_cross(z: &[f64], gz: &[f64], c: &[f64]) -> f64 {
    let mut acc: Lanes = [0.0; LANES];
    let (zc, zt) = z.as_chunks::<LANES>();
    let (gzc, _) = gz.as_chunks::<LANES>();
    let (cc, _) = c.as_chunks::<LANES>();
    for ((zc, gzc), cc) in zc.iter().zip(gzc).zip(cc) {
        for l in 0..LANES {
            acc[l] += zc[l] * (0.5 * gzc[l] - cc[l]);
        }
    }
    for i in z.len() - zt.len()..z.len() {
        acc[0] += z[i] * (0.5 * gz[i] - c[i]);
    }
    acc.iter().sum()
}

/// Worst-row distance of `0` from the subdifferential at `z`, given `Gz` and `c = Aᵀy`.
fn kkt_rows(z: &[f64], gz: &[f64], c: &[f64], n: usize, mu: f64) -> f64 {
    let mut worst = 0.0_f64;
    for ((zr, gr), cr) in z.chunks_exact(n).zip(gz.chunks_exact(n)).zip(c.chunks_exact(n)) {
        let norm = zr.iter().map(|v| v * v).sum::<f64>().sqrt();
        let v = if norm > 0.0 {
            let w = mu / norm;
            zr.iter()
                .zip(gr)
                .zip(cr)
                .map(|((&zv, &g), &cv)| (g - cv + w * zv).powi(2))
                .sum::<f64>()
                .sqrt()
        } else {
            let g = gr.iter().zip(cr).map(|(&g, &cv)| (g - cv).powi(2)).sum::<f64>().sqrt();
            (g - mu).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// Shrinks `row` by `tau` given its squared norm; returns the norm afterwards.
fn shrink_row(row: &mut [f64], norm_sq: f64, tau: f64) -> f64 {
    let norm = norm_sq.sqrt();
    if norm <= tau {
        row.fill(0.0);
        0.0
    } else {
        let f = 1.0 - tau / norm;
        row.iter_mut().for_each(|v| *v *= f);
        norm - tau
    }
}

/// Writes the proximal step from `y = x + β(x - prev)` into `z`, with
/// `Gy = Gx + β(Gx - Gprev)` formed on the fly. Returns `||z||_{2,1}`.
fn extrapolate_step(
    z: &mut [f64],
    [x, prev, gx, gprev, c]: [&[f64]; 5],
    n: usize,
    beta: f64,
    inv_l: f64,
    tau: f64,
) -> f64 {
    let mut total = 0.0;
    let rows = z
        .chunks_exact_mut(n)
        .zip(x.chunks_exact(n).zip(prev.chunks_exact(n)))
        .zip(gx.chunks_exact(n).zip(gprev.chunks_exact(n)).zip(c.chunks_exact(n)));
    for ((zr, (xr, pr)), ((gxr, gpr), cr)) in rows {
        let mut sq: Lanes = [0.0; LANES];
        let body = n - n % LANES;
        {
            let (zc, _) = zr.as_chunks_mut::<LANES>();
            let (xc, _) = xr.as_chunks::<LANES>();
            let (pc, _) = pr.as_chunks::<LANES>();
            let (gxc, _) = gxr.as_chunks::<LANES>();
            let (gpc, _) = gpr.as_chunks::<LANES>();
            let (cc, _) = cr.as_chunks::<LANES>();
            let inputs = xc.iter().zip(pc).zip(gxc.iter().zip(gpc)).zip(cc);
            for (zl, (((xl, pl), (gxl, gpl)), cl)) in zc.iter_mut().zip(inputs) {
                for l in 0..LANES {
                    let yv = xl[l] + beta * (xl[l] - pl[l]);
                    let g = gxl[l] + beta * (gxl[l] - gpl[l]);
                    zl[l] = yv - (g - cl[l]) * inv_l;
                    sq[l] += zl[l] * zl[l];
                }
            }
        }
        for i in body..n {
            let yv = xr[i] + beta * (xr[i] - pr[i]);
            let g = gxr[i] + beta * (gxr[i] - gpr[i]);
            zr[i] = yv - (g - cr[i]) * inv_l;
            sq[0] += zr[i] * zr[i];
        }
        total += shrink_row(zr, sq.iter().sum(), tau);
    }
    total
}

/// Distance of `0` from the subdifferential of the ℓ2,1 objective at `x`, worst row.
pub fn l21_optimality(gram: &Array2<f64>, aty: &Array2<f64>, x: &Array2<f64>, mu: f64) -> f64 {
    let grad = gram.dot(x) - aty;
    let mut worst = 0.0_f64;
    for (g, r) in grad.rows().into_iter().zip(x.rows()) {
        let rn = r.dot(&r).sqrt();
        let v = if rn > 0.0 {
            let w = mu / rn;
            g.iter().zip(r).map(|(gv, rv)| (gv + w * rv).powi(2)).sum::<f64>().sqrt()
        } else {
            (g.dot(&g).sqrt() - mu).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// Column-wise lasso `min_x ½||y - Dx||² + mu ||x||_1` by cyclic coordinate descent.
pub fn code_l1(y: ArrayView2<'_, f64>, d: &SubDictionary, cfg: &SolverConfig) -> Result<SparseCodeResult> {
    if cfg.regularizer != Regularizer::L1 {
        return Err(SmsbError::Config("code_l1 needs an L1 solver config".into()));
    }
    cfg.validate()?;
    let a = d.atoms().view();
    check_inputs(y, a)?;
    let k = a.ncols();
    let n = y.ncols();
    let gram = a.t().dot(&a);
    let aty = a.t().dot(&y);

    let mut codes = Array2::<f64>::zeros((k, n));
    let solve_col = |c: usize, mut out: ndarray::ArrayViewMut1<'_, f64>| -> (usize, f64) {
        let corr = aty.column(c);
        lasso_cd(&gram, corr, cfg, out.as_slice_mut().expect("contiguous column"))
    };

    let stats: Vec<(usize, f64)> = if n >= 64 {
        let mut cols_t = Array2::<f64>::zeros((n, k));
        let stats = cols_t
            .axis_iter_mut(Axis(0))
            .into_par_iter()
            .enumerate()
            .map(|(c, row)| solve_col(c, row))
            .collect();
        codes.assign(&cols_t.t());
        stats
    } else {
        let mut cols_t = Array2::<f64>::zeros((n, k));
        let stats = cols_t
            .axis_iter_mut(Axis(0))
            .enumerate()
            .map(|(c, row)| solve_col(c, row))
            .collect();
        codes.assign(&cols_t.t());
        stats
    };

    let iters = stats.iter().map(|s| s.0).max().unwrap_or(0);
    let kkt = stats.iter().map(|s| s.1).fold(0.0, f64::max);
    let residual = &y - &a.dot(&codes);
    let residual_sq = frobenius_sq(residual.view());
    Ok(SparseCodeResult {
        objective: 0.5 * residual_sq + cfg.mu * l1_norm(codes.view()),
        codes,
        iters,
        residual_fro: residual_sq.sqrt(),
        kkt_residual: kkt,
        trace: Vec::new(),
    })
}

/// Lasso for one signal given `G = DᵀD` and `c = Dᵀy`. Returns (sweeps, kkt residual).
fn lasso_cd(
    gram: &Array2<f64>,
    corr: ndarray::ArrayView1<'_, f64>,
    cfg: &SolverConfig,
    x: &mut [f64],
) -> (usize, f64) {
    let k = x.len();
    let mu = cfg.mu;
    // q = c - Gx, the correlation of each atom with the current residual
    let mut q: Vec<f64> = corr.to_vec();
    let mut kkt = lasso_kkt(gram, corr, x, mu, &mut q);
    let mut sweeps = 0;
    while kkt > cfg.kkt_tol && sweeps < cfg.max_iters {
        sweeps += 1;
        for i in 0..k {
            let gii = gram[[i, i]];
            if gii <= 0.0 {
                continue;
            }
            let old = x[i];
            let new = soft_threshold(q[i] + gii * old, mu) / gii;
            if new != old {
                let delta = new - old;
                x[i] = new;
                for (qj, gji) in q.iter_mut().zip(gram.column(i)) {
                    *qj -= gji * delta;
                }
            }
        }
        kkt = lasso_kkt(gram, corr, x, mu, &mut q);
    }
    (sweeps, kkt)
}

/// Recomputes `q = c - Gx` from scratch and returns the worst KKT violation.
fn lasso_kkt(
    gram: &Array2<f64>,
    corr: ndarray::ArrayView1<'_, f64>,
    x: &[f64],
    mu: f64,
    q: &mut [f64],
) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..x.len() {
        let gx: f64 = gram.row(i).iter().zip(x).map(|(g, v)| g * v).sum();
        q[i] = corr[i] - gx;
        let v = if x[i] == 0.0 {
            (q[i].abs() - mu).max(0.0)
        } else {
            (q[i] - mu * x[i].signum()).abs()
        };
        worst = worst.max(v);
    }
    worst
}

/// Penalty used for each block sub-problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BlockPenalty {
    /// Same `mu` for every block (taken from the solver config).
    Fixed,
    /// `mu = ratio * max_r ||(DᵀY_ij)_r||₂`, recomputed for every sub-problem.
    RelativeToMax(f64),
}

/// Codes one spatial group under `A = W ⊗ D`, one independent joint problem per
/// active block. Output has `B*k` rows; inactive block slices are zero and
/// contribute `½||Y_ij||²` to the objective.
pub fn code_group_blockwise(
    y_group: ArrayView2<'_, f64>,
    d: &SubDictionary,
    mask: &BlockMask,
    cfg: &SolverConfig,
) -> Result<SparseCodeResult> {
    code_group_blockwise_with(y_group, d, mask, cfg, BlockPenalty::Fixed)
}

pub fn code_group_blockwise_with(
    y_group: ArrayView2<'_, f64>,
    d: &SubDictionary,
    mask: &BlockMask,
    cfg: &SolverConfig,
    penalty: BlockPenalty,
) -> Result<SparseCodeResult> {
    let s = d.s();
    let k = d.k();
    let blocks = mask.len();
    if y_group.nrows() != blocks * s {
        return Err(SmsbError::Shape(format!(
            "group has {} rows, mask of {} blocks with s = {} needs {}",
            y_group.nrows(),
            blocks,
            s,
            blocks * s
        )));
    }
    if cfg.regularizer != Regularizer::L21 {
        return Err(SmsbError::Config("block coding needs an L21 solver config".into()));
    }
    if let BlockPenalty::RelativeToMax(r) = penalty {
        if !(r > 0.0) {
            return Err(SmsbError::Config(format!("relative mu ratio must be positive, got {r}")));
        }
    } else {
        cfg.validate()?;
    }
    if !all_finite(y_group) {
        return Err(SmsbError::NumericInput("signals contain non-finite entries".into()));
    }
    if !all_finite(d.atoms().view()) {
        return Err(SmsbError::NumericInput("dictionary contains non-finite entries".into()));
    }
    let op = GramOperator::new(d.atoms().view());
    let n = y_group.ncols();
    let mut codes = Array2::<f64>::zeros((blocks * k, n));
    let mut objective = 0.0;
    let mut residual_sq = 0.0;
    let mut iters = 0;
    let mut kkt = 0.0_f64;
    for (j, &active) in mask.flags().iter().enumerate() {
        let yj = y_group.slice(s![j * s..(j + 1) * s, ..]);
        if !active {
            let e = frobenius_sq(yj);
            objective += 0.5 * e;
            residual_sq += e;
            continue;
        }
        let block_cfg = match penalty {
            BlockPenalty::Fixed => cfg.clone(),
            BlockPenalty::RelativeToMax(r) => {
                let lam_max = crate::linalg::max_row_norm(d.atoms().t().dot(&yj).view());
                if lam_max == 0.0 {
                    // Y_ij lies in the null space of Dᵀ: zero is optimal for any mu
                    let e = frobenius_sq(yj);
                    objective += 0.5 * e;
                    residual_sq += e;
                    continue;
                }
                cfg.with_mu(r * lam_max)
            }
        };
        let res = l21_with_operator(yj, &op, &block_cfg)?;
        codes.slice_mut(s![j * k..(j + 1) * k, ..]).assign(&res.codes);
        objective += res.objective;
        residual_sq += res.residual_fro * res.residual_fro;
        iters = iters.max(res.iters);
        kkt = kkt.max(res.kkt_residual);
    }
    Ok(SparseCodeResult {
        codes,
        objective,
        iters,
        residual_fro: residual_sq.sqrt(),
        kkt_residual: kkt,
        trace: Vec::new(),
    })
}

/// `mu_max = max_r ||(DᵀY)_r||₂`: any `mu` at or above it makes `X = 0` optimal.
pub fn l21_zero_threshold(y: ArrayView2<'_, f64>, d: &SubDictionary) -> f64 {
    crate::linalg::max_row_norm(d.atoms().t().dot(&y).view())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::select::{build_mask, MaskMode};
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
        Array2::from_shape_fn((r, c), |_| rng.sample(StandardNormal))
    }

    fn unit_dict(rng: &mut ChaCha8Rng, s: usize, k: usize) -> SubDictionary {
        SubDictionary::normalized(rand_mat(rng, s, k)).unwrap()
    }

    fn frob_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        (a - b).iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn obj_l21(y: &Array2<f64>, d: &Array2<f64>, x: &Array2<f64>, mu: f64) -> f64 {
        let r = y - &d.dot(x);
        0.5 * frobenius_sq(r.view()) + mu * l21_norm(x.view())
    }

    #[test]
    fn prox_examples() {
        let x = array![[3.0, 4.0], [0.5, 0.0]];
        let p = prox_l21(x.view(), 1.0);
        assert!((p[[0, 0]] - 2.4).abs() < 1e-15);
        assert!((p[[0, 1]] - 3.2).abs() < 1e-15);
        assert_eq!(p.row(1).to_vec(), vec![0.0, 0.0]);
        assert_eq!(prox_l21(x.view(), 0.0), x);
    }

    #[test]
    fn identity_dictionary_gives_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let y = rand_mat(&mut rng, 6, 9);
        let d = SubDictionary::new(Array2::eye(6)).unwrap();
        let res = code_l21(y.view(), &d, &SolverConfig::l21(0.7)).unwrap();
        let expect = prox_l21(y.view(), 0.7);
        assert!(frob_diff(&res.codes, &expect) < 1e-10);
    }

    #[test]
    fn large_mu_yields_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let d = unit_dict(&mut rng, 8, 12);
        let y = rand_mat(&mut rng, 8, 5);
        // threshold computed independently of the solver
        let dty = d.atoms().t().dot(&y);
        let bound = dty
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        let res = code_l21(y.view(), &d, &SolverConfig::l21(bound * 1.0001)).unwrap();
        assert!(res.codes.iter().all(|&v| v == 0.0));
        assert!((res.objective - 0.5 * frobenius_sq(y.view())).abs() < 1e-12);
    }

    #[test]
    fn beats_random_row_sparse_candidates() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let d = unit_dict(&mut rng, 8, 12);
        let y = rand_mat(&mut rng, 8, 5);
        let mu = 0.1;
        let res = code_l21(y.view(), &d, &SolverConfig::l21(mu)).unwrap();
        let best = res.objective;
        for _ in 0..100_000 {
            let mut cand = Array2::<f64>::zeros((12, 5));
            let rows = rng.random_range(1..=4);
            for _ in 0..rows {
                let r = rng.random_range(0..12);
                for c in 0..5 {
                    cand[[r, c]] = rng.sample::<f64, _>(StandardNormal) * 0.5;
                }
            }
            assert!(obj_l21(&y, d.atoms(), &cand, mu) >= best - 1e-12);
        }
    }

    #[test]
    fn objective_matches_parts_and_trace_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let d = unit_dict(&mut rng, 10, 16);
        let y = rand_mat(&mut rng, 10, 7);
        let mu = 0.3;
        let res = code_l21(y.view(), &d, &SolverConfig::l21(mu)).unwrap();
        let direct = obj_l21(&y, d.atoms(), &res.codes, mu);
        assert!((res.objective - direct).abs() <= 1e-10 * direct);
        assert!((0.5 * res.residual_fro.powi(2) + mu * l21_norm(res.codes.view()) - res.objective).abs()
            <= 1e-10 * direct);
        for w in res.trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        assert!(res.iters <= DEFAULT_MAX_ITERS);
    }

    #[test]
    fn orthonormal_lasso_is_soft_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        // orthonormal basis via Gram-Schmidt
        let raw = rand_mat(&mut rng, 6, 6);
        let mut q = Array2::<f64>::zeros((6, 6));
        for j in 0..6 {
            let mut v = raw.column(j).to_owned();
            for i in 0..j {
                let qi = q.column(i).to_owned();
                v = &v - &(&qi * qi.dot(&v));
            }
            let n = v.dot(&v).sqrt();
            q.column_mut(j).assign(&(v / n));
        }
        let d = SubDictionary::normalized(q.clone()).unwrap();
        let y = rand_mat(&mut rng, 6, 4);
        let mu = 0.4;
        let res = code_l1(y.view(), &d, &SolverConfig::l1(mu)).unwrap();
        let dty = d.atoms().t().dot(&y);
        let expect = dty.mapv(|v| soft_threshold(v, mu));
        assert!(frob_diff(&res.codes, &expect) < 1e-9);
    }

    #[test]
    fn lasso_huge_mu_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let d = unit_dict(&mut rng, 5, 7);
        let y = rand_mat(&mut rng, 5, 3);
        let res = code_l1(y.view(), &d, &SolverConfig::l1(1e6)).unwrap();
        assert!(res.codes.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lasso_kkt_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let d = unit_dict(&mut rng, 10, 15);
        let y = rand_mat(&mut rng, 10, 1);
        let mu = 0.2;
        let res = code_l1(y.view(), &d, &SolverConfig::l1(mu)).unwrap();
        let r = &y - &d.atoms().dot(&res.codes);
        let c = d.atoms().t().dot(&r);
        for i in 0..15 {
            let xi = res.codes[[i, 0]];
            let v = if xi == 0.0 {
                (c[[i, 0]].abs() - mu).max(0.0)
            } else {
                (c[[i, 0]] - mu * xi.signum()).abs()
            };
            assert!(v < 1e-6, "atom {i}: {v}");
        }
    }

    #[test]
    fn rejects_non_finite_and_wrong_config() {
        let d = SubDictionary::new(Array2::eye(3)).unwrap();
        let mut y = Array2::<f64>::zeros((3, 2));
        y[[0, 0]] = f64::INFINITY;
        assert!(matches!(
            code_l21(y.view(), &d, &SolverConfig::l21(0.1)),
            Err(SmsbError::NumericInput(_))
        ));
        assert!(matches!(
            code_l1(y.view(), &d, &SolverConfig::l1(0.1)),
            Err(SmsbError::NumericInput(_))
        ));
        let y = Array2::<f64>::zeros((3, 2));
        assert!(code_l21(y.view(), &d, &SolverConfig::l1(0.1)).is_err());
        assert!(code_l21(y.view(), &d, &SolverConfig::l21(0.0)).is_err());
    }

    #[test]
    fn inactive_blocks_are_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let d = unit_dict(&mut rng, 4, 5);
        let y = rand_mat(&mut rng, 8, 6);
        let mask = build_mask(&[1.0, 0.0], MaskMode::Threshold(0.5)).unwrap();
        let cfg = SolverConfig::l21(0.2);
        let res = code_group_blockwise(y.view(), &d, &mask, &cfg).unwrap();
        let alone = code_l21(y.slice(s![0..4, ..]), &d, &cfg).unwrap();
        assert_eq!(res.codes.slice(s![0..5, ..]), alone.codes);
        assert!(res.codes.slice(s![5..10, ..]).iter().all(|&v| v == 0.0));
        let e2 = frobenius_sq(y.slice(s![4..8, ..]));
        assert!((res.objective - (alone.objective + 0.5 * e2)).abs() < 1e-12);
    }

    #[test]
    fn all_inactive_mask_gives_zero() {
        let d = SubDictionary::new(Array2::eye(2)).unwrap();
        let y = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0], [7.0, 8.0]];
        let mask = BlockMask::from_flags(vec![0.0, 0.0], vec![false, false]);
        let res = code_group_blockwise(y.view(), &d, &mask, &SolverConfig::l21(0.1)).unwrap();
        assert!(res.codes.iter().all(|&v| v == 0.0));
        assert_eq!(res.objective, 0.5 * frobenius_sq(y.view()));
    }

    #[test]
    fn blockwise_shape_mismatch() {
        let d = SubDictionary::new(Array2::eye(2)).unwrap();
        let y = Array2::<f64>::zeros((5, 3));
        let mask = BlockMask::from_flags(vec![1.0, 1.0], vec![true, true]);
        assert!(matches!(
            code_group_blockwise(y.view(), &d, &mask, &SolverConfig::l21(0.1)),
            Err(SmsbError::Shape(_))
        ));
    }
}
