//! Hyperspectral cubes and their partition into spatial groups and spectral blocks.
//!
//! A cube is held as an `S x N` matrix: one row per band, one column per pixel,
//! with pixels in row-major scan order (`pixel = row * width + col`).

use std::ops::Range;

use ndarray::{s, Array2, ArrayView2};

use crate::error::{Result, SmsbError};

/// Default cap for materializing the stacked observation matrix (1 GiB).
pub const DEFAULT_STACK_CAP_BYTES: usize = 1 << 30;

#[derive(Debug, Clone, PartialEq)]
pub struct HsiCube {
    width: usize,
    height: usize,
    data: Array2<f64>,
    band_trim: usize,
}

impl HsiCube {
    /// Builds a cube from a `bands x (width*height)` matrix.
    pub fn new(width: usize, height: usize, data: Array2<f64>) -> Result<Self> {
        if width == 0 || height == 0 || data.nrows() == 0 {
            return Err(SmsbError::Shape("cube must have non-zero width, height and bands".into()));
        }
        if data.ncols() != width * height {
            return Err(SmsbError::Shape(format!(
                "cube data has {} columns, expected {}x{}={}",
                data.ncols(),
                width,
                height,
                width * height
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(SmsbError::NumericInput(format!(
                "cube entry {pos} (row-major) is not finite"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
            band_trim: 0,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bands(&self) -> usize {
        self.data.nrows()
    }

    pub fn pixels(&self) -> usize {
        self.data.ncols()
    }

    pub fn band_trim(&self) -> usize {
        self.band_trim
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }

    pub(crate) fn with_band_trim(mut self, band_trim: usize) -> Self {
        self.band_trim = band_trim;
        self
    }

    /// Spectrum of one pixel.
    pub fn spectrum(&self, pixel: usize) -> ndarray::ArrayView1<'_, f64> {
        self.data.column(pixel)
    }

    /// Drops the trailing bands the plan leaves out so the band count is `B*s`.
    ///
    /// Returns the cube unchanged when the plan trims nothing.
    pub fn trimmed(self, plan: &PartitionPlan) -> Result<Self> {
        plan.check_cube(&self)?;
        if plan.trimmed_bands == 0 {
            return Ok(self);
        }
        let keep = plan.used_bands();
        let data = self.data.slice(s![..keep, ..]).to_owned();
        Ok(Self {
            width: self.width,
            height: self.height,
            data,
            band_trim: self.band_trim + plan.trimmed_bands,
        })
    }

    /// Replaces the data with a same-shaped matrix (used by normalization).
    pub(crate) fn map_data(&self, f: impl FnOnce(&Array2<f64>) -> Array2<f64>) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: f(&self.data),
            band_trim: self.band_trim,
        }
    }
}

/// Ground-truth or predicted labels, one per pixel. `0` is background.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u16>,
    pub class_count: u16,
    pub class_names: Option<Vec<String>>,
    pub class_colors: Option<Vec<[u8; 3]>>,
}

impl LabelMap {
    pub fn new(width: usize, height: usize, labels: Vec<u16>, class_count: u16) -> Result<Self> {
        if labels.len() != width * height {
            return Err(SmsbError::Shape(format!(
                "label map has {} entries, expected {}",
                labels.len(),
                width * height
            )));
        }
        if let Some((p, &l)) = labels.iter().enumerate().find(|(_, &l)| l > class_count) {
            return Err(SmsbError::Config(format!(
                "pixel {p} has label {l} above declared class count {class_count}"
            )));
        }
        Ok(Self {
            width,
            height,
            labels,
            class_count,
            class_names: None,
            class_colors: None,
        })
    }

    pub fn background(width: usize, height: usize, class_count: u16) -> Self {
        Self {
            width,
            height,
            labels: vec![0; width * height],
            class_count,
            class_names: None,
            class_colors: None,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Indices of pixels carrying a non-zero label, ascending.
    pub fn labeled_pixels(&self) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l != 0)
            .map(|(p, _)| p)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionPlan {
    width: usize,
    height: usize,
    source_bands: usize,
    group_size: usize,
    groups: Vec<Vec<usize>>,
    block_count: usize,
    block_size: usize,
    block_ranges: Vec<Range<usize>>,
    trimmed_bands: usize,
}

impl PartitionPlan {
    pub fn group_size(&self) -> usize {
        self.group_size
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn group(&self, i: usize) -> Option<&[usize]> {
        self.groups.get(i).map(Vec::as_slice)
    }

    pub fn block_count(&self) -> usize {
        self.block_count
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn block_ranges(&self) -> &[Range<usize>] {
        &self.block_ranges
    }

    /// Trailing bands dropped so that `bands = B * s`.
    pub fn trimmed_bands(&self) -> usize {
        self.trimmed_bands
    }

    /// Band count of the cube the plan was made for.
    pub fn source_bands(&self) -> usize {
        self.source_bands
    }

    pub fn used_bands(&self) -> usize {
        self.block_count * self.block_size
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    /// Group index owning each pixel.
    pub fn group_of_pixels(&self) -> Vec<usize> {
        let mut owner = vec![0; self.pixels()];
        for (g, members) in self.groups.iter().enumerate() {
            for &p in members {
                owner[p] = g;
            }
        }
        owner
    }

    /// Accepts either the source cube or its trimmed version.
    pub fn check_cube(&self, cube: &HsiCube) -> Result<()> {
        if cube.width() != self.width || cube.height() != self.height {
            return Err(SmsbError::ModelMismatch(format!(
                "cube is {}x{}, plan expects {}x{}",
                cube.width(),
                cube.height(),
                self.width,
                self.height
            )));
        }
        if cube.bands() != self.source_bands && cube.bands() != self.used_bands() {
            return Err(SmsbError::ModelMismatch(format!(
                "cube has {} bands, plan expects {} (or {} after trimming)",
                cube.bands(),
                self.source_bands,
                self.used_bands()
            )));
        }
        Ok(())
    }
}

/// Tiles the image with non-overlapping `m x m` groups and splits the spectrum
/// into `block_count` equal blocks.
///
/// Groups are numbered row-major over the tile grid; pixels inside a group are
/// listed row-major. Tiles at the right and bottom borders may be narrower or
/// shorter than `m`. When `bands % block_count != 0` the trailing bands are left
/// out of every block and reported through [`PartitionPlan::trimmed_bands`].
pub fn plan_partition(cube: &HsiCube, group_size: usize, block_count: usize) -> Result<PartitionPlan> {
    plan_partition_dims(cube.width(), cube.height(), cube.bands(), group_size, block_count)
}

pub fn plan_partition_dims(
    width: usize,
    height: usize,
    bands: usize,
    group_size: usize,
    block_count: usize,
) -> Result<PartitionPlan> {
    if group_size == 0 {
        return Err(SmsbError::InvalidPartition("group size must be at least 1".into()));
    }
    if block_count == 0 {
        return Err(SmsbError::InvalidPartition("block count must be at least 1".into()));
    }
    if block_count > bands {
        return Err(SmsbError::InvalidPartition(format!(
            "block count {block_count} exceeds band count {bands}"
        )));
    }
    if group_size > width.max(height) {
        return Err(SmsbError::InvalidPartition(format!(
            "group size {group_size} exceeds image extent {width}x{height}"
        )));
    }
    let block_size = bands / block_count;
    let block_ranges = (0..block_count)
        .map(|j| j * block_size..(j + 1) * block_size)
        .collect();

    let mut groups = Vec::with_capacity(width.div_ceil(group_size) * height.div_ceil(group_size));
    for top in (0..height).step_by(group_size) {
        for left in (0..width).step_by(group_size) {
            let bottom = (top + group_size).min(height);
            let right = (left + group_size).min(width);
            let mut members = Vec::with_capacity((bottom - top) * (right - left));
            for row in top..bottom {
                members.extend((left..right).map(|col| row * width + col));
            }
            groups.push(members);
        }
    }

    Ok(PartitionPlan {
        width,
        height,
        source_bands: bands,
        group_size,
        groups,
        block_count,
        block_size,
        block_ranges,
        trimmed_bands: bands - block_count * block_size,
    })
}

/// Materializes `Y_ij`: block `j` rows of the pixels in group `i`.
pub fn extract_group_block(
    cube: &HsiCube,
    plan: &PartitionPlan,
    group: usize,
    block: usize,
) -> Result<Array2<f64>> {
    plan.check_cube(cube)?;
    let members = plan.group(group).ok_or_else(|| {
        SmsbError::Index(format!("group {group} out of range (G = {})", plan.group_count()))
    })?;
    let range = plan.block_ranges.get(block).cloned().ok_or_else(|| {
        SmsbError::Index(format!("block {block} out of range (B = {})", plan.block_count))
    })?;
    Ok(gather_columns(cube.data().slice(s![range, ..]), members))
}

/// All used bands of the pixels in one group, `(B*s) x |group|`.
pub fn extract_group(cube: &HsiCube, plan: &PartitionPlan, group: usize) -> Result<Array2<f64>> {
    plan.check_cube(cube)?;
    let members = plan.group(group).ok_or_else(|| {
        SmsbError::Index(format!("group {group} out of range (G = {})", plan.group_count()))
    })?;
    Ok(gather_columns(
        cube.data().slice(s![..plan.used_bands(), ..]),
        members,
    ))
}

pub(crate) fn gather_columns(src: ArrayView2<'_, f64>, cols: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((src.nrows(), cols.len()));
    for (dst, &c) in cols.iter().enumerate() {
        out.column_mut(dst).assign(&src.column(c));
    }
    out
}

/// Lazily indexed view of the stacked observation matrix
/// `[Y_11, ..., Y_1B, Y_21, ..., Y_GB]` (group-major, block-minor).
#[derive(Debug, Clone)]
pub struct StackedObservations<'a> {
    cube: &'a HsiCube,
    plan: &'a PartitionPlan,
    /// (group, first stacked column of that group)
    offsets: Vec<usize>,
}

impl<'a> StackedObservations<'a> {
    pub fn new(cube: &'a HsiCube, plan: &'a PartitionPlan) -> Result<Self> {
        plan.check_cube(cube)?;
        let mut offsets = Vec::with_capacity(plan.group_count() + 1);
        let mut acc = 0;
        for g in plan.groups() {
            offsets.push(acc);
            acc += g.len() * plan.block_count();
        }
        offsets.push(acc);
        Ok(Self { cube, plan, offsets })
    }

    pub fn rows(&self) -> usize {
        self.plan.block_size()
    }

    pub fn cols(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    /// Maps a stacked column to its `(pixel, block)`.
    pub fn locate(&self, col: usize) -> (usize, usize) {
        let g = match self.offsets.binary_search(&col) {
            Ok(mut g) => {
                // skip empty groups sharing the same offset
                while self.offsets[g + 1] == col {
                    g += 1;
                }
                g
            }
            Err(g) => g - 1,
        };
        let within = col - self.offsets[g];
        let members = &self.plan.groups()[g];
        let block = within / members.len();
        let pixel = members[within % members.len()];
        (pixel, block)
    }

    pub fn copy_column(&self, col: usize, out: &mut [f64]) {
        let (pixel, block) = self.locate(col);
        let range = self.plan.block_ranges()[block].clone();
        let spectrum = self.cube.data().column(pixel);
        for (o, b) in out.iter_mut().zip(range) {
            *o = spectrum[b];
        }
    }
}

/// Materializes the stacked observation matrix with `s` rows and `B*N` columns.
///
/// Fails with a resource error if the matrix would exceed `cap_bytes`; use
/// [`StackedObservations`] to stream columns instead.
pub fn build_stacked_observations(
    cube: &HsiCube,
    plan: &PartitionPlan,
    cap_bytes: usize,
) -> Result<Array2<f64>> {
    let view = StackedObservations::new(cube, plan)?;
    let bytes = view
        .rows()
        .checked_mul(view.cols())
        .and_then(|n| n.checked_mul(std::mem::size_of::<f64>()))
        .unwrap_or(usize::MAX);
    if bytes > cap_bytes {
        return Err(SmsbError::Resource(format!(
            "stacked observations need {bytes} bytes, cap is {cap_bytes}; stream columns with StackedObservations instead"
        )));
    }
    let mut out = Array2::zeros((view.rows(), view.cols()));
    let mut col = 0;
    for members in plan.groups() {
        for range in plan.block_ranges() {
            let rows = cube.data().slice(s![range.clone(), ..]);
            for &p in members {
                out.column_mut(col).assign(&rows.column(p));
                col += 1;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cube(w: usize, h: usize, b: usize, seed: u64) -> HsiCube {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = Array2::from_shape_fn((b, w * h), |_| rng.random_range(-1.0..1.0));
        HsiCube::new(w, h, data).unwrap()
    }

    #[test]
    fn indian_pines_geometry() {
        let plan = plan_partition_dims(145, 145, 200, 12, 10).unwrap();
        assert_eq!(plan.block_size(), 20);
        assert_eq!(plan.trimmed_bands(), 0);
        assert_eq!(plan.block_ranges()[0], 0..20);
        assert_eq!(plan.block_ranges()[9], 180..200);
        assert_eq!(plan.group_count(), 169);
        let full = plan.groups().iter().filter(|g| g.len() == 144).count();
        assert_eq!(full, 144);
        let mut sizes: Vec<usize> = plan.groups().iter().map(Vec::len).filter(|&l| l != 144).collect();
        sizes.sort();
        // 12 right-edge 12x1 strips, 12 bottom 1x12 strips, one 1x1 corner
        assert_eq!(sizes.len(), 25);
        assert_eq!(sizes[0], 1);
        assert!(sizes[1..].iter().all(|&l| l == 12));
    }

    #[test]
    fn pavia_trims_three_bands() {
        let plan = plan_partition_dims(340, 610, 103, 13, 10).unwrap();
        assert_eq!(plan.block_size(), 10);
        assert_eq!(plan.trimmed_bands(), 3);
        assert_eq!(plan.used_bands(), 100);
    }

    #[test]
    fn trimming_keeps_leading_bands() {
        let cube = random_cube(3, 2, 7, 1);
        let plan = plan_partition(&cube, 2, 2).unwrap();
        assert_eq!(plan.trimmed_bands(), 1);
        let trimmed = cube.clone().trimmed(&plan).unwrap();
        assert_eq!(trimmed.bands(), 6);
        assert_eq!(trimmed.band_trim(), 1);
        assert_eq!(trimmed.data(), &cube.data().slice(s![..6, ..]));
    }

    #[test]
    fn single_group_toy() {
        let cube = random_cube(4, 4, 8, 2);
        let plan = plan_partition(&cube, 4, 2).unwrap();
        assert_eq!(plan.group_count(), 1);
        assert_eq!(plan.group(0).unwrap().len(), 16);
        assert_eq!(plan.block_ranges(), &[0..4, 4..8]);
        let y01 = extract_group_block(&cube, &plan, 0, 1).unwrap();
        assert_eq!(y01, cube.data().slice(s![4..8, ..]));
    }

    #[test]
    fn rejects_bad_partitions() {
        let cube = random_cube(4, 4, 8, 3);
        assert!(matches!(plan_partition(&cube, 4, 9), Err(SmsbError::InvalidPartition(_))));
        assert!(matches!(plan_partition(&cube, 5, 2), Err(SmsbError::InvalidPartition(_))));
        assert!(matches!(plan_partition(&cube, 0, 2), Err(SmsbError::InvalidPartition(_))));
        assert!(matches!(plan_partition(&cube, 2, 0), Err(SmsbError::InvalidPartition(_))));
    }

    #[test]
    fn out_of_range_extraction() {
        let cube = random_cube(4, 4, 8, 4);
        let plan = plan_partition(&cube, 2, 2).unwrap();
        assert!(matches!(extract_group_block(&cube, &plan, 4, 0), Err(SmsbError::Index(_))));
        assert!(matches!(extract_group_block(&cube, &plan, 0, 2), Err(SmsbError::Index(_))));
    }

    #[test]
    fn stacking_blocks_rebuilds_group() {
        let cube = random_cube(5, 4, 9, 5);
        let plan = plan_partition(&cube, 3, 3).unwrap();
        for i in 0..plan.group_count() {
            let whole = extract_group(&cube, &plan, i).unwrap();
            let parts: Vec<_> = (0..3)
                .map(|j| extract_group_block(&cube, &plan, i, j).unwrap())
                .collect();
            let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
            let stacked = ndarray::concatenate(ndarray::Axis(0), &views).unwrap();
            assert_eq!(stacked, whole);
        }
    }

    #[test]
    fn extraction_sums_match_cube_sum() {
        let cube = random_cube(6, 6, 6, 6);
        let plan = plan_partition(&cube, 3, 3).unwrap();
        let mut total = 0.0;
        for i in 0..plan.group_count() {
            for j in 0..3 {
                total += extract_group_block(&cube, &plan, i, j).unwrap().sum();
            }
        }
        // brute force: walk every cell of the cube directly
        let mut expected = 0.0;
        for b in 0..6 {
            for p in 0..36 {
                expected += cube.data()[[b, p]];
            }
        }
        assert!((total - expected).abs() <= 1e-12 * expected.abs().max(1.0));
    }

    #[test]
    fn stacked_layout_on_single_group() {
        let cube = random_cube(4, 4, 8, 7);
        let plan = plan_partition(&cube, 4, 2).unwrap();
        let ys = build_stacked_observations(&cube, &plan, DEFAULT_STACK_CAP_BYTES).unwrap();
        assert_eq!(ys.dim(), (4, 32));
        assert_eq!(ys.slice(s![.., ..16]), cube.data().slice(s![0..4, ..]));
        assert_eq!(ys.slice(s![.., 16..]), cube.data().slice(s![4..8, ..]));
    }

    #[test]
    fn stacked_columns_match_extractions() {
        let cube = random_cube(6, 6, 6, 8);
        let plan = plan_partition(&cube, 4, 3).unwrap();
        let ys = build_stacked_observations(&cube, &plan, DEFAULT_STACK_CAP_BYTES).unwrap();
        assert_eq!(ys.ncols(), 3 * 36);
        let mut pool: Vec<Vec<f64>> = Vec::new();
        for i in 0..plan.group_count() {
            for j in 0..3 {
                let y = extract_group_block(&cube, &plan, i, j).unwrap();
                pool.extend(y.columns().into_iter().map(|c| c.to_vec()));
            }
        }
        let mut stacked: Vec<Vec<f64>> = ys.columns().into_iter().map(|c| c.to_vec()).collect();
        let key = |a: &Vec<f64>, b: &Vec<f64>| a.partial_cmp(b).unwrap();
        pool.sort_by(key);
        stacked.sort_by(key);
        assert_eq!(pool, stacked);

        let view = StackedObservations::new(&cube, &plan).unwrap();
        let mut buf = vec![0.0; 2];
        for c in 0..view.cols() {
            view.copy_column(c, &mut buf);
            assert_eq!(buf.as_slice(), ys.column(c).to_vec().as_slice());
        }
    }

    #[test]
    fn stacked_cap_is_enforced() {
        let cube = random_cube(4, 4, 8, 9);
        let plan = plan_partition(&cube, 4, 2).unwrap();
        assert!(matches!(
            build_stacked_observations(&cube, &plan, 100),
            Err(SmsbError::Resource(_))
        ));
    }

    #[test]
    fn cube_rejects_non_finite() {
        let mut data = Array2::zeros((2, 4));
        data[[1, 3]] = f64::NAN;
        assert!(matches!(HsiCube::new(2, 2, data), Err(SmsbError::NumericInput(_))));
    }
}
