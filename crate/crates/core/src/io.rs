//! On-disk artifacts: cubes, label maps, models, feature sets, reports and PPM maps.
//!
//! Every binary file starts with a text header: a magic line, `key = value`
//! lines, and a closing `end` line. The payload follows immediately, little-endian.
//!
//! | magic            | payload                                                         |
//! |------------------|-----------------------------------------------------------------|
//! | `SMSB-CUBE`      | `f32` per value, band-sequential, pixels row-major inside a band |
//! | `SMSB-LABELS`    | `u16` per pixel, row-major                                      |
//! | `SMSB-MODEL`     | dictionary `f32` column-major, then the optional SVM section    |
//! | `SMSB-FEATURES`  | pixel ids `u64`, labels `u16` (optional), features `f64` per pixel |

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2};

use crate::cube::{plan_partition_dims, HsiCube, LabelMap};
use crate::dict::SubDictionary;
use crate::error::{Result, SmsbError};
use crate::pipeline::{Classifier, CodeMu, ExperimentReport, Normalization, SmsbModel, SparseFeatureSet};
use crate::select::{BlockMask, MaskMode};
use crate::solver::SolverConfig;
use crate::svm::{Kernel, PairModel, Standardizer, SvmModel};

pub const FORMAT_VERSION: u32 = 1;
pub const MAX_HEADER_BYTES: usize = 4096;

pub const CUBE_MAGIC: &str = "SMSB-CUBE";
pub const LABELS_MAGIC: &str = "SMSB-LABELS";
pub const MODEL_MAGIC: &str = "SMSB-MODEL";
pub const FEATURES_MAGIC: &str = "SMSB-FEATURES";

/// Class colors 1..16 used by the benchmark figures (Pavia uses the first nine).
pub const DEFAULT_PALETTE: [[u8; 3]; 16] = [
    [254, 253, 136],
    [3, 28, 240],
    [254, 89, 1],
    [5, 254, 132],
    [254, 2, 250],
    [89, 1, 254],
    [3, 170, 254],
    [12, 254, 7],
    [171, 174, 84],
    [159, 78, 157],
    [101, 173, 255],
    [60, 91, 112],
    [104, 191, 63],
    [138, 69, 46],
    [119, 254, 171],
    [253, 254, 3],
];

#[derive(Debug, Clone, PartialEq)]
struct Header {
    magic: String,
    fields: Vec<(String, String)>,
}

impl Header {
    fn new(magic: &str) -> Self {
        Self {
            magic: magic.to_string(),
            fields: vec![("version".into(), FORMAT_VERSION.to_string())],
        }
    }

    fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.fields.push((key.to_string(), value.to_string()));
        self
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.fields.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    fn get<T: FromStr>(&self, path: &Path, key: &str) -> Result<T> {
        let v = self
            .raw(key)
            .ok_or_else(|| SmsbError::format(path, format!("header is missing `{key}`")))?;
        v.parse()
            .map_err(|_| SmsbError::format(path, format!("header field `{key}` has bad value `{v}`")))
    }

    fn render(&self) -> Result<Vec<u8>> {
        let mut s = format!("{}\n", self.magic);
        for (k, v) in &self.fields {
            if v.contains('\n') {
                return Err(SmsbError::Config(format!("header value for `{k}` contains a newline")));
            }
            let _ = writeln!(s, "{k} = {v}");
        }
        s.push_str("end\n");
        if s.len() > MAX_HEADER_BYTES {
            return Err(SmsbError::Config(format!(
                "header is {} bytes, limit is {MAX_HEADER_BYTES}",
                s.len()
            )));
        }
        Ok(s.into_bytes())
    }
}

/// Reads and validates the header, returning it with the open file positioned at the payload.
fn open_with_header(path: &Path, magic: &str) -> Result<(Header, BufReader<File>, u64, u64)> {
    let file = File::open(path).map_err(|e| SmsbError::io(path, e))?;
    let file_len = file.metadata().map_err(|e| SmsbError::io(path, e))?.len();
    let mut reader = BufReader::new(file);
    let mut consumed = 0usize;
    let mut lines = Vec::new();
    loop {
        let mut line = Vec::new();
        let n = (&mut reader)
            .take((MAX_HEADER_BYTES - consumed) as u64)
            .read_until(b'\n', &mut line)
            .map_err(|e| SmsbError::io(path, e))?;
        consumed += n;
        if n == 0 || line.last() != Some(&b'\n') {
            return Err(SmsbError::format(
                path,
                format!("header not terminated within {MAX_HEADER_BYTES} bytes"),
            ));
        }
        let text = String::from_utf8(line)
            .map_err(|_| SmsbError::format(path, "header is not valid UTF-8"))?;
        let text = text.trim_end_matches('\n').to_string();
        if text == "end" {
            break;
        }
        lines.push(text);
    }
    let mut it = lines.into_iter();
    let found = it.next().unwrap_or_default();
    if found != magic {
        return Err(SmsbError::format(path, format!("expected magic `{magic}`, found `{found}`")));
    }
    let mut header = Header {
        magic: found,
        fields: Vec::new(),
    };
    for line in it {
        let (k, v) = line
            .split_once(" = ")
            .ok_or_else(|| SmsbError::format(path, format!("malformed header line `{line}`")))?;
        header.fields.push((k.to_string(), v.to_string()));
    }
    let version: u32 = header.get(path, "version")?;
    if version != FORMAT_VERSION {
        return Err(SmsbError::format(
            path,
            format!("unsupported version {version}, this build reads {FORMAT_VERSION}"),
        ));
    }
    Ok((header, reader, consumed as u64, file_len))
}

fn checked_size(path: &Path, parts: &[u64]) -> Result<u64> {
    parts
        .iter()
        .try_fold(1u64, |acc, &p| acc.checked_mul(p))
        .ok_or_else(|| SmsbError::format(path, "declared payload size overflows"))
}

/// Reads exactly the declared payload after checking the file length, so a
/// lying header can never trigger a large allocation.
fn read_payload(path: &Path, reader: &mut BufReader<File>, header_len: u64, file_len: u64, expected: u64) -> Result<Vec<u8>> {
    let actual = file_len.saturating_sub(header_len);
    if actual < expected {
        return Err(SmsbError::Truncated {
            path: path.to_path_buf(),
            expected,
            actual,
        });
    }
    if actual > expected {
        return Err(SmsbError::format(
            path,
            format!("{} trailing bytes after the declared payload", actual - expected),
        ));
    }
    let len = usize::try_from(expected).map_err(|_| SmsbError::format(path, "payload too large"))?;
    let mut buf = vec![0u8; len];
    reader.read_exact(&mut buf).map_err(|e| SmsbError::io(path, e))?;
    Ok(buf)
}

fn write_file(path: &Path, header: &Header, payload: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| SmsbError::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&header.render()?).map_err(|e| SmsbError::io(path, e))?;
    w.write_all(payload).map_err(|e| SmsbError::io(path, e))?;
    w.flush().map_err(|e| SmsbError::io(path, e))
}

/// Little-endian cursor over a payload whose total size was already validated.
struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> &'a [u8] {
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        out
    }

    fn u16(&mut self) -> u16 {
        u16::from_le_bytes(self.take(2).try_into().unwrap())
    }

    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take(4).try_into().unwrap())
    }

    fn u64(&mut self) -> u64 {
        u64::from_le_bytes(self.take(8).try_into().unwrap())
    }

    fn f32(&mut self) -> f32 {
        f32::from_le_bytes(self.take(4).try_into().unwrap())
    }

    fn f64(&mut self) -> f64 {
        f64::from_le_bytes(self.take(8).try_into().unwrap())
    }
}

fn finite_f64(path: &Path, base: u64, cur: &mut Cursor<'_>) -> Result<f64> {
    let offset = base + cur.pos as u64;
    let v = cur.f64();
    if v.is_finite() {
        Ok(v)
    } else {
        Err(SmsbError::NonFinite {
            path: path.to_path_buf(),
            offset,
        })
    }
}

fn join<T: ToString>(values: &[T], sep: &str) -> String {
    values.iter().map(ToString::to_string).collect::<Vec<_>>().join(sep)
}

fn split_parse<T: FromStr>(path: &Path, key: &str, value: &str) -> Result<Vec<T>> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| SmsbError::format(path, format!("bad entry `{v}` in `{key}`")))
        })
        .collect()
}

pub fn write_cube(cube: &HsiCube, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut h = Header::new(CUBE_MAGIC);
    h.set("width", cube.width())
        .set("height", cube.height())
        .set("bands", cube.bands())
        .set("dtype", "f32le")
        .set("order", "band-sequential, row-major pixels")
        .set("band_trim", cube.band_trim());
    let mut payload = Vec::with_capacity(cube.data().len() * 4);
    for (i, &v) in cube.data().iter().enumerate() {
        let f = v as f32;
        if !f.is_finite() {
            return Err(SmsbError::NumericInput(format!(
                "cube value {v} at index {i} does not fit in f32"
            )));
        }
        payload.extend_from_slice(&f.to_le_bytes());
    }
    write_file(path, &h, &payload)
}

pub fn read_cube(path: impl AsRef<Path>) -> Result<HsiCube> {
    let path = path.as_ref();
    let (h, mut r, header_len, file_len) = open_with_header(path, CUBE_MAGIC)?;
    let width: usize = h.get(path, "width")?;
    let height: usize = h.get(path, "height")?;
    let bands: usize = h.get(path, "bands")?;
    let trim: usize = h.raw("band_trim").map_or(Ok(0), |_| h.get(path, "band_trim"))?;
    let dtype: String = h.get(path, "dtype")?;
    if dtype != "f32le" {
        return Err(SmsbError::format(path, format!("unsupported dtype `{dtype}`")));
    }
    if width == 0 || height == 0 || bands == 0 {
        return Err(SmsbError::format(path, "cube dimensions must be non-zero"));
    }
    let expected = checked_size(path, &[width as u64, height as u64, bands as u64, 4])?;
    let payload = read_payload(path, &mut r, header_len, file_len, expected)?;
    let mut values = Vec::with_capacity(bands * width * height);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(SmsbError::NonFinite {
                path: path.to_path_buf(),
                offset: header_len + 4 * i as u64,
            });
        }
        values.push(v as f64);
    }
    let data = Array2::from_shape_vec((bands, width * height), values)
        .map_err(|e| SmsbError::format(path, e.to_string()))?;
    Ok(HsiCube::new(width, height, data)?.with_band_trim(trim))
}

pub fn write_labels(labels: &LabelMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut h = Header::new(LABELS_MAGIC);
    h.set("width", labels.width)
        .set("height", labels.height)
        .set("classes", labels.class_count)
        .set("dtype", "u16le");
    if let Some(names) = &labels.class_names {
        if names.iter().any(|n| n.contains('|') || n.contains('\n')) {
            return Err(SmsbError::Config("class names may not contain `|` or newlines".into()));
        }
        h.set("class_names", names.join("|"));
    }
    if let Some(colors) = &labels.class_colors {
        let s: Vec<String> = colors.iter().map(|c| format!("{},{},{}", c[0], c[1], c[2])).collect();
        h.set("class_colors", s.join(";"));
    }
    let mut payload = Vec::with_capacity(labels.labels.len() * 2);
    for &l in &labels.labels {
        payload.extend_from_slice(&l.to_le_bytes());
    }
    write_file(path, &h, &payload)
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelMap> {
    let path = path.as_ref();
    let (h, mut r, header_len, file_len) = open_with_header(path, LABELS_MAGIC)?;
    let width: usize = h.get(path, "width")?;
    let height: usize = h.get(path, "height")?;
    let classes: u16 = h.get(path, "classes")?;
    let dtype: String = h.get(path, "dtype")?;
    if dtype != "u16le" {
        return Err(SmsbError::format(path, format!("unsupported dtype `{dtype}`")));
    }
    let expected = checked_size(path, &[width as u64, height as u64, 2])?;
    let payload = read_payload(path, &mut r, header_len, file_len, expected)?;
    let labels: Vec<u16> = payload
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect();
    if let Some((pixel, &label)) = labels.iter().enumerate().find(|(_, &l)| l > classes) {
        return Err(SmsbError::LabelRange {
            path: path.to_path_buf(),
            pixel,
            label,
            classes,
        });
    }
    let mut map = LabelMap::new(width, height, labels, classes)?;
    if let Some(names) = h.raw("class_names") {
        let names: Vec<String> = names.split('|').map(str::to_string).collect();
        if names.len() != classes as usize {
            return Err(SmsbError::format(
                path,
                format!("{} class names for {classes} classes", names.len()),
            ));
        }
        map.class_names = Some(names);
    }
    if let Some(colors) = h.raw("class_colors") {
        let parsed = colors
            .split(';')
            .map(|c| {
                let v: Vec<u8> = split_parse(path, "class_colors", c)?;
                <[u8; 3]>::try_from(v)
                    .map_err(|_| SmsbError::format(path, format!("color `{c}` is not r,g,b")))
            })
            .collect::<Result<Vec<_>>>()?;
        if parsed.len() != classes as usize {
            return Err(SmsbError::format(
                path,
                format!("{} class colors for {classes} classes", parsed.len()),
            ));
        }
        map.class_colors = Some(parsed);
    }
    Ok(map)
}

fn mask_mode_string(mode: Option<MaskMode>) -> String {
    mode.map_or_else(|| "explicit".to_string(), |m| m.to_string())
}

fn kernel_string(k: Kernel) -> String {
    match k {
        Kernel::Linear => "linear".into(),
        Kernel::Rbf { gamma } => format!("rbf:{gamma}"),
    }
}

fn parse_kernel(path: &Path, s: &str) -> Result<Kernel> {
    if s == "linear" {
        return Ok(Kernel::Linear);
    }
    s.strip_prefix("rbf:")
        .and_then(|g| g.parse().ok())
        .map(|gamma| Kernel::Rbf { gamma })
        .ok_or_else(|| SmsbError::format(path, format!("unknown kernel `{s}`")))
}

fn model_bytes(model: &SmsbModel) -> Result<(Header, Vec<u8>)> {
    let plan = &model.plan;
    let mut h = Header::new(MODEL_MAGIC);
    h.set("width", plan.width())
        .set("height", plan.height())
        .set("bands", plan.source_bands())
        .set("group_size", plan.group_size())
        .set("block_count", plan.block_count())
        .set("block_size", plan.block_size())
        .set("atoms", model.dict.k())
        .set("trimmed_bands", plan.trimmed_bands())
        .set("model_version", model.version)
        .set("normalization", model.normalization)
        .set("norm_scale", model.norm_scale)
        .set("mu_dict", model.mu_dict)
        .set("mu_code", model.code_mu)
        .set("solver_mu", model.solver_cfg.mu)
        .set("solver_max_iters", model.solver_cfg.max_iters)
        .set("solver_tol", model.solver_cfg.tol)
        .set("solver_kkt_tol", model.solver_cfg.kkt_tol)
        .set("mask_mode", mask_mode_string(model.mask.mode()))
        .set(
            "mask_flags",
            join(&model.mask.flags().iter().map(|&f| u8::from(f)).collect::<Vec<_>>(), ","),
        )
        .set("mask_variances", join(model.mask.variances(), ","))
        .set("seed", model.seed);

    let mut payload = Vec::new();
    for col in model.dict.atoms().columns() {
        for &v in col {
            payload.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    match &model.classifier {
        None => {
            h.set("classifier", "none");
        }
        Some(clf) => {
            let svm = &clf.svm;
            let dim = clf.standardizer.mean.len();
            if svm.dim() != dim {
                return Err(SmsbError::ModelMismatch("classifier and standardizer dimensions differ".into()));
            }
            let terms: usize = svm.pairs.iter().map(|p| p.support.len()).sum();
            h.set("classifier", "svm")
                .set("svm_kernel", kernel_string(svm.kernel))
                .set("svm_c", svm.c)
                .set("svm_classes", join(&svm.classes, ","))
                .set("svm_dim", dim)
                .set("svm_support", svm.support_vectors.nrows())
                .set("svm_pairs", svm.pairs.len())
                .set("svm_pair_terms", terms);
            for v in clf.standardizer.mean.iter().chain(&clf.standardizer.scale) {
                payload.extend_from_slice(&v.to_le_bytes());
            }
            for v in svm.support_vectors.iter() {
                payload.extend_from_slice(&v.to_le_bytes());
            }
            for p in &svm.pairs {
                payload.extend_from_slice(&p.positive.to_le_bytes());
                payload.extend_from_slice(&p.negative.to_le_bytes());
                payload.extend_from_slice(&(p.support.len() as u32).to_le_bytes());
                for &i in &p.support {
                    payload.extend_from_slice(&(i as u32).to_le_bytes());
                }
                for &c in &p.coefs {
                    payload.extend_from_slice(&c.to_le_bytes());
                }
                payload.extend_from_slice(&p.bias.to_le_bytes());
            }
        }
    }
    Ok((h, payload))
}

/// Serialized bytes of a model, exactly as [`write_model`] stores them.
pub fn model_to_bytes(model: &SmsbModel) -> Result<Vec<u8>> {
    let (h, payload) = model_bytes(model)?;
    let mut out = h.render()?;
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn write_model(model: &SmsbModel, path: impl AsRef<Path>) -> Result<()> {
    let (h, payload) = model_bytes(model)?;
    write_file(path.as_ref(), &h, &payload)
}

pub fn read_model(path: impl AsRef<Path>) -> Result<SmsbModel> {
    let path = path.as_ref();
    let (h, mut r, header_len, file_len) = open_with_header(path, MODEL_MAGIC)?;
    let width: usize = h.get(path, "width")?;
    let height: usize = h.get(path, "height")?;
    let bands: usize = h.get(path, "bands")?;
    let m: usize = h.get(path, "group_size")?;
    let b: usize = h.get(path, "block_count")?;
    let s: usize = h.get(path, "block_size")?;
    let k: usize = h.get(path, "atoms")?;
    let trimmed: usize = h.get(path, "trimmed_bands")?;
    let plan = plan_partition_dims(width, height, bands, m, b)
        .map_err(|e| SmsbError::format(path, format!("inconsistent geometry: {e}")))?;
    if plan.block_size() != s || plan.trimmed_bands() != trimmed {
        return Err(SmsbError::format(path, "block size or trimmed bands disagree with geometry"));
    }
    if k == 0 {
        return Err(SmsbError::format(path, "dictionary needs at least one atom"));
    }
    let normalization: Normalization = h.get(path, "normalization")?;
    let code_mu: CodeMu = h
        .raw("mu_code")
        .unwrap_or_default()
        .parse()
        .map_err(|_| SmsbError::format(path, "bad `mu_code`"))?;
    let solver_cfg = SolverConfig {
        mu: h.get(path, "solver_mu")?,
        max_iters: h.get(path, "solver_max_iters")?,
        tol: h.get(path, "solver_tol")?,
        kkt_tol: h.get(path, "solver_kkt_tol")?,
        ..SolverConfig::l21(1.0)
    };
    let mode = match h.raw("mask_mode") {
        Some("explicit") => None,
        Some(v) => Some(v.parse::<MaskMode>().map_err(|_| SmsbError::format(path, "bad `mask_mode`"))?),
        None => return Err(SmsbError::format(path, "header is missing `mask_mode`")),
    };
    let flags: Vec<u8> = split_parse(path, "mask_flags", h.raw("mask_flags").unwrap_or_default())?;
    let variances: Vec<f64> = split_parse(path, "mask_variances", h.raw("mask_variances").unwrap_or_default())?;
    if flags.len() != b || variances.len() != b || flags.iter().any(|&f| f > 1) {
        return Err(SmsbError::format(path, format!("mask must hold {b} flags and variances")));
    }
    let mask = BlockMask::from_flags(variances, flags.iter().map(|&f| f == 1).collect()).with_mode(mode);

    let classifier_kind: String = h.get(path, "classifier")?;
    let dict_bytes = checked_size(path, &[s as u64, k as u64, 4])?;
    let (svm_meta, expected) = match classifier_kind.as_str() {
        "none" => (None, dict_bytes),
        "svm" => {
            let dim: usize = h.get(path, "svm_dim")?;
            let nsv: usize = h.get(path, "svm_support")?;
            let pairs: usize = h.get(path, "svm_pairs")?;
            let terms: usize = h.get(path, "svm_pair_terms")?;
            let parts = [
                dict_bytes,
                checked_size(path, &[dim as u64, 16])?,
                checked_size(path, &[nsv as u64, dim as u64, 8])?,
                checked_size(path, &[pairs as u64, 16])?,
                checked_size(path, &[terms as u64, 12])?,
            ];
            let total = parts
                .iter()
                .try_fold(0u64, |a, &p| a.checked_add(p))
                .ok_or_else(|| SmsbError::format(path, "declared payload size overflows"))?;
            (Some((dim, nsv, pairs, terms)), total)
        }
        other => return Err(SmsbError::format(path, format!("unknown classifier `{other}`"))),
    };
    let payload = read_payload(path, &mut r, header_len, file_len, expected)?;
    let mut cur = Cursor { buf: &payload, pos: 0 };
    let mut atoms = Array2::zeros((s, k));
    for j in 0..k {
        for i in 0..s {
            let offset = header_len + cur.pos as u64;
            let v = cur.f32();
            if !v.is_finite() {
                return Err(SmsbError::NonFinite {
                    path: path.to_path_buf(),
                    offset,
                });
            }
            atoms[[i, j]] = v as f64;
        }
    }
    let dict = SubDictionary::new(atoms).map_err(|e| SmsbError::format(path, e.to_string()))?;

    let classifier = match svm_meta {
        None => None,
        Some((dim, nsv, pairs, terms)) => {
            let mut next = || finite_f64(path, header_len, &mut cur);
            let mean = (0..dim).map(|_| next()).collect::<Result<Vec<_>>>()?;
            let scale = (0..dim).map(|_| next()).collect::<Result<Vec<_>>>()?;
            let sv = (0..nsv * dim).map(|_| next()).collect::<Result<Vec<_>>>()?;
            let mut out = Vec::with_capacity(pairs);
            let mut seen_terms = 0usize;
            for _ in 0..pairs {
                if cur.pos + 8 > payload.len() {
                    return Err(SmsbError::format(path, "pair table overruns the payload"));
                }
                let positive = cur.u16();
                let negative = cur.u16();
                let count = cur.u32() as usize;
                seen_terms += count;
                if seen_terms > terms {
                    return Err(SmsbError::format(path, "pair table declares more terms than the header"));
                }
                let support = (0..count).map(|_| cur.u32() as usize).collect::<Vec<_>>();
                if support.iter().any(|&i| i >= nsv) {
                    return Err(SmsbError::format(path, "support index out of range"));
                }
                let coefs = (0..count)
                    .map(|_| finite_f64(path, header_len, &mut cur))
                    .collect::<Result<Vec<_>>>()?;
                let bias = finite_f64(path, header_len, &mut cur)?;
                out.push(PairModel {
                    positive,
                    negative,
                    support,
                    coefs,
                    bias,
                });
            }
            if seen_terms != terms {
                return Err(SmsbError::format(path, "pair table term count disagrees with header"));
            }
            let classes: Vec<u16> = split_parse(path, "svm_classes", h.raw("svm_classes").unwrap_or_default())?;
            let svm = SvmModel {
                kernel: parse_kernel(path, h.raw("svm_kernel").unwrap_or_default())?,
                c: h.get(path, "svm_c")?,
                classes,
                support_vectors: Array2::from_shape_vec((nsv, dim), sv)
                    .map_err(|e| SmsbError::format(path, e.to_string()))?,
                pairs: out,
            };
            Some(Classifier {
                standardizer: Standardizer {
                    mean: Array1::from(mean),
                    scale: Array1::from(scale),
                },
                svm,
            })
        }
    };

    Ok(SmsbModel {
        version: h.get(path, "model_version")?,
        plan,
        dict,
        mask,
        solver_cfg,
        code_mu,
        mu_dict: h.get(path, "mu_dict")?,
        normalization,
        norm_scale: h.get(path, "norm_scale")?,
        seed: h.get(path, "seed")?,
        classifier,
    })
}

pub fn write_features(features: &SparseFeatureSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut h = Header::new(FEATURES_MAGIC);
    h.set("dim", features.dim())
        .set("count", features.len())
        .set("labels", if features.labels.is_some() { "yes" } else { "no" })
        .set("dtype", "f64le")
        .set("order", "pixel ids, labels, one feature vector per pixel");
    let mut payload = Vec::new();
    for &p in &features.pixel_ids {
        payload.extend_from_slice(&(p as u64).to_le_bytes());
    }
    if let Some(labels) = &features.labels {
        for &l in labels {
            payload.extend_from_slice(&l.to_le_bytes());
        }
    }
    for col in features.features.columns() {
        for &v in col {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    write_file(path, &h, &payload)
}

pub fn read_features(path: impl AsRef<Path>) -> Result<SparseFeatureSet> {
    let path = path.as_ref();
    let (h, mut r, header_len, file_len) = open_with_header(path, FEATURES_MAGIC)?;
    let dim: usize = h.get(path, "dim")?;
    let count: usize = h.get(path, "count")?;
    let has_labels = match h.raw("labels") {
        Some("yes") => true,
        Some("no") => false,
        _ => return Err(SmsbError::format(path, "header field `labels` must be yes or no")),
    };
    let per_pixel = 8 + if has_labels { 2 } else { 0 } + checked_size(path, &[dim as u64, 8])?;
    let expected = checked_size(path, &[count as u64, per_pixel])?;
    let payload = read_payload(path, &mut r, header_len, file_len, expected)?;
    let mut cur = Cursor { buf: &payload, pos: 0 };
    let pixel_ids: Vec<usize> = (0..count).map(|_| cur.u64() as usize).collect();
    let labels = has_labels.then(|| (0..count).map(|_| cur.u16()).collect::<Vec<_>>());
    let mut features = Array2::zeros((dim, count));
    for c in 0..count {
        for i in 0..dim {
            features[[i, c]] = finite_f64(path, header_len, &mut cur)?;
        }
    }
    Ok(SparseFeatureSet {
        features,
        pixel_ids,
        labels,
    })
}

/// Binary PPM (P6): background black, class `c` drawn with `colors[c - 1]`.
pub fn render_map(labels: &LabelMap, colors: &[[u8; 3]]) -> Result<Vec<u8>> {
    if let Some(&missing) = labels.labels.iter().find(|&&l| l as usize > colors.len()) {
        return Err(SmsbError::Config(format!(
            "no color for class {missing} ({} colors given)",
            colors.len()
        )));
    }
    let mut out = format!("P6\n{} {}\n255\n", labels.width, labels.height).into_bytes();
    out.reserve(labels.labels.len() * 3);
    for &l in &labels.labels {
        let rgb = if l == 0 { [0, 0, 0] } else { colors[l as usize - 1] };
        out.extend_from_slice(&rgb);
    }
    Ok(out)
}

pub fn write_map(labels: &LabelMap, colors: &[[u8; 3]], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = render_map(labels, colors)?;
    std::fs::write(path, bytes).map_err(|e| SmsbError::io(path, e))
}

/// Human-readable summary of an experiment.
pub fn format_report(report: &ExperimentReport, class_names: Option<&[String]>) -> String {
    let s = report.summary();
    let mut out = String::new();
    let pct = |(m, sd): (f64, f64)| format!("{:.2} ± {:.2}", 100.0 * m, 100.0 * sd);
    let _ = writeln!(out, "method: {}", report.method);
    let _ = writeln!(out, "runs: {}", report.runs.len());
    let _ = writeln!(out, "feature dimension: {}", report.feature_dim);
    let _ = writeln!(out, "OA (%): {}", pct(s.oa));
    let _ = writeln!(out, "AA (%): {}", pct(s.aa));
    let _ = writeln!(out, "kappa: {:.4} ± {:.4}", s.kappa.0, s.kappa.1);
    let _ = writeln!(out, "per-class accuracy (%):");
    for (c, m, sd) in &s.per_class {
        let name = class_names
            .and_then(|n| n.get(*c as usize - 1))
            .map_or(String::new(), |n| format!(" {n}"));
        let _ = writeln!(out, "  {c:>3}{name}: {:.2} ± {:.2}", 100.0 * m, 100.0 * sd);
    }
    let _ = writeln!(out, "mean stage time (s):");
    for (name, t) in s.timings.stages() {
        let _ = writeln!(out, "  {name}: {t:.3}");
    }
    let _ = writeln!(out, "  total: {:.3}", s.timings.total);
    out
}

/// One row per run, tab separated.
pub fn report_tsv(report: &ExperimentReport) -> String {
    let mut out = String::from(
        "method\trun\tseed\toa\taa\tkappa\tc\tgamma\ttrain\ttest\tfit_s\tencode_s\tcv_s\ttrain_s\tpredict_s\ttotal_s\n",
    );
    for (i, r) in report.runs.iter().enumerate() {
        let t = &r.timings;
        let _ = writeln!(
            out,
            "{}\t{i}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
            report.method,
            r.seed,
            r.metrics.oa,
            r.metrics.aa,
            r.metrics.kappa,
            r.c,
            r.gamma,
            r.train_size,
            r.test_size,
            t.fit,
            t.encode,
            t.cross_validation,
            t.train,
            t.predict,
            t.total
        );
    }
    out
}
