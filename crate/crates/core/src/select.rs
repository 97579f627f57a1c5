//! Variance-based choice of active spectral blocks.
//!
//! For block `j`, `m_j` holds the per-pixel mean over the block's bands for every
//! pixel of the image, and `σ²_j` is the population variance of `m_j`. A block is
//! active when `σ²_j > T` (strictly), or when it is among the `n` largest.

use crate::cube::{HsiCube, PartitionPlan};
use crate::error::{Result, SmsbError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaskMode {
    Threshold(f64),
    TopN(usize),
}

impl std::fmt::Display for MaskMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MaskMode::Threshold(t) => write!(f, "threshold:{t}"),
            MaskMode::TopN(n) => write!(f, "top_n:{n}"),
        }
    }
}

/// Parses `top_n:<n>` or `threshold:<T>`.
impl std::str::FromStr for MaskMode {
    type Err = SmsbError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || SmsbError::Config(format!("mask mode `{s}`: expected top_n:<n> or threshold:<T>"));
        let (kind, value) = s.trim().split_once(':').ok_or_else(bad)?;
        match kind.trim() {
            "top_n" => value.trim().parse().map(MaskMode::TopN).map_err(|_| bad()),
            "threshold" => value.trim().parse().map(MaskMode::Threshold).map_err(|_| bad()),
            _ => Err(bad()),
        }
    }
}

/// Diagonal of the block-selection matrix `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMask {
    variances: Vec<f64>,
    flags: Vec<bool>,
    mode: Option<MaskMode>,
}

impl BlockMask {
    /// A mask with explicit flags and no selection rule attached.
    pub fn from_flags(variances: Vec<f64>, flags: Vec<bool>) -> Self {
        assert_eq!(variances.len(), flags.len(), "one flag per block");
        Self {
            variances,
            flags,
            mode: None,
        }
    }

    /// Attaches the rule that produced the flags (used when loading a saved mask).
    pub fn with_mode(mut self, mode: Option<MaskMode>) -> Self {
        self.mode = mode;
        self
    }

    pub fn all_active(block_count: usize) -> Self {
        Self::from_flags(vec![0.0; block_count], vec![true; block_count])
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    pub fn mode(&self) -> Option<MaskMode> {
        self.mode
    }

    /// `T` in threshold mode.
    pub fn threshold(&self) -> Option<f64> {
        match self.mode {
            Some(MaskMode::Threshold(t)) => Some(t),
            _ => None,
        }
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn active_count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    pub fn active_blocks(&self) -> Vec<usize> {
        self.flags
            .iter()
            .enumerate()
            .filter(|(_, &f)| f)
            .map(|(j, _)| j)
            .collect()
    }
}

/// `σ²_j` for every block of the plan, computed over all pixels of the image.
pub fn compute_block_variances(cube: &HsiCube, plan: &PartitionPlan) -> Result<Vec<f64>> {
    plan.check_cube(cube)?;
    let data = cube.data();
    let s = plan.block_size() as f64;
    let variances = plan
        .block_ranges()
        .iter()
        .map(|range| {
            // Welford over pixels
            let mut mean = 0.0;
            let mut m2 = 0.0;
            for (count, p) in (0..cube.pixels()).enumerate() {
                let col = data.column(p);
                let m: f64 = range.clone().map(|b| col[b]).sum::<f64>() / s;
                let delta = m - mean;
                mean += delta / (count + 1) as f64;
                m2 += delta * (m - mean);
            }
            (m2 / cube.pixels() as f64).max(0.0)
        })
        .collect();
    Ok(variances)
}

pub fn build_mask(variances: &[f64], mode: MaskMode) -> Result<BlockMask> {
    let b = variances.len();
    let flags = match mode {
        MaskMode::Threshold(t) => {
            if t.is_nan() {
                return Err(SmsbError::Config("threshold is NaN".into()));
            }
            variances.iter().map(|&v| v > t).collect::<Vec<_>>()
        }
        MaskMode::TopN(n) => {
            if n == 0 {
                return Err(SmsbError::EmptyMask("top_n needs n >= 1".into()));
            }
            if n > b {
                return Err(SmsbError::Config(format!("top_n({n}) with only {b} blocks")));
            }
            let mut order: Vec<usize> = (0..b).collect();
            // descending variance, lower index first on ties
            order.sort_by(|&i, &j| variances[j].total_cmp(&variances[i]).then(i.cmp(&j)));
            let mut flags = vec![false; b];
            for &j in &order[..n] {
                flags[j] = true;
            }
            flags
        }
    };
    if !flags.iter().any(|&f| f) {
        return Err(SmsbError::EmptyMask(format!(
            "no block selected by {mode:?} among {b} blocks"
        )));
    }
    Ok(BlockMask {
        variances: variances.to_vec(),
        flags,
        mode: Some(mode),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cube::plan_partition;
    use ndarray::Array2;

    #[test]
    fn threshold_step() {
        let m = build_mask(&[0.5, 0.1, 0.9], MaskMode::Threshold(0.2)).unwrap();
        assert_eq!(m.flags(), &[true, false, true]);
        assert_eq!(m.threshold(), Some(0.2));
    }

    #[test]
    fn equality_is_inactive() {
        let m = build_mask(&[0.2, 0.3], MaskMode::Threshold(0.2)).unwrap();
        assert_eq!(m.flags(), &[false, true]);
    }

    #[test]
    fn top_n_ties_prefer_lower_index() {
        let m = build_mask(&[1.0; 4], MaskMode::TopN(2)).unwrap();
        assert_eq!(m.flags(), &[true, true, false, false]);
    }

    #[test]
    fn top_eight_of_ten() {
        let v: Vec<f64> = (0..10).map(|j| ((j * 7) % 10) as f64).collect();
        let m = build_mask(&v, MaskMode::TopN(8)).unwrap();
        assert_eq!(m.active_count(), 8);
        // the two smallest variances (0 at block 0, 1 at block 3) are dropped
        assert!(!m.flags()[0] && !m.flags()[3]);
    }

    #[test]
    fn empty_masks_are_errors() {
        assert!(matches!(build_mask(&[1.0, 2.0], MaskMode::TopN(0)), Err(SmsbError::EmptyMask(_))));
        assert!(matches!(
            build_mask(&[1.0, 2.0], MaskMode::Threshold(5.0)),
            Err(SmsbError::EmptyMask(_))
        ));
        assert!(build_mask(&[1.0, 2.0], MaskMode::TopN(3)).is_err());
    }

    #[test]
    fn negative_infinity_threshold_keeps_all() {
        let m = build_mask(&[0.0, 0.0, 3.0], MaskMode::Threshold(f64::NEG_INFINITY)).unwrap();
        assert_eq!(m.active_count(), 3);
    }

    #[test]
    fn mode_strings_round_trip() {
        for m in [MaskMode::TopN(8), MaskMode::Threshold(0.125), MaskMode::Threshold(-1e-3)] {
            assert_eq!(m.to_string().parse::<MaskMode>().unwrap(), m);
        }
        assert!("top_n".parse::<MaskMode>().is_err());
        assert!("median:3".parse::<MaskMode>().is_err());
    }

    #[test]
    fn constant_block_has_zero_variance() {
        let mut data = Array2::<f64>::zeros((4, 9));
        for p in 0..9 {
            data[[0, p]] = 0.7;
            data[[1, p]] = 0.7;
            data[[2, p]] = p as f64;
            data[[3, p]] = 2.0 * p as f64;
        }
        let cube = HsiCube::new(3, 3, data).unwrap();
        let plan = plan_partition(&cube, 3, 2).unwrap();
        let v = compute_block_variances(&cube, &plan).unwrap();
        assert!(v[0].abs() < 1e-15);
        // block means are 1.5p, population variance of p over 0..9 is 20/3
        assert!((v[1] - 2.25 * 20.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn doubled_block_quadruples_variance() {
        let mut data = Array2::<f64>::zeros((4, 6));
        for p in 0..6 {
            let a = (p as f64 * 1.3).sin();
            let b = (p as f64 * 0.4).cos();
            data[[0, p]] = a;
            data[[1, p]] = b;
            data[[2, p]] = 2.0 * a;
            data[[3, p]] = 2.0 * b;
        }
        let cube = HsiCube::new(3, 2, data).unwrap();
        let plan = plan_partition(&cube, 2, 2).unwrap();
        let v = compute_block_variances(&cube, &plan).unwrap();
        assert!((v[1] - 4.0 * v[0]).abs() <= 1e-12 * v[1]);
    }
}
