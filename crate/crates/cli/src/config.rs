use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use smsb::presets::{self, Preset};
use smsb::solver::{DEFAULT_KKT_TOL, DEFAULT_MAX_ITERS, DEFAULT_TOL};
use smsb::{
    ClassifierParams, CodeMu, DictLearnConfig, ExperimentParams, FitParams, MaskMode, Normalization, SmsbError,
    SolverConfig, SplitSpec,
};

type Result<T> = std::result::Result<T, SmsbError>;

/// Everything a run needs. Layers: built-in defaults, then the preset, then
/// the config file, then command-line flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub seed: u64,
    pub repeats: usize,
    /// Worker threads; 0 uses every available core.
    pub threads: usize,
    pub partition: PartitionSection,
    pub dictionary: DictionarySection,
    pub coding: CodingSection,
    pub selection: SelectionSection,
    pub classifier: ClassifierSection,
    pub split: SplitSection,
    #[serde(default)]
    pub paths: PathsSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSection {
    pub group_size: usize,
    pub block_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DictionarySection {
    pub atoms: usize,
    /// Lasso weight; absent means `1/sqrt(s)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    pub batch_size: usize,
    pub epochs: usize,
    pub forgetting: f64,
    pub dead_atom_threshold: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodingSection {
    /// `<mu>` or `relative:<ratio>`.
    pub mu: String,
    pub max_iters: usize,
    pub tol: f64,
    pub kkt_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionSection {
    /// `top_n:<n>` or `threshold:<T>`.
    pub mask_mode: String,
    /// `none`, `global_max` or `per_pixel_unit`.
    pub normalization: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierSection {
    pub folds: usize,
    pub c_values: Vec<f64>,
    pub gamma_scales: Vec<f64>,
    pub standardize: bool,
    pub tol: f64,
    pub cache_mb: usize,
    /// Setting both skips cross-validation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_per_class: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cube: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let fit = FitParams::new(12, 10, 28, MaskMode::TopN(8));
        let clf = ClassifierParams::default();
        Self {
            preset: None,
            seed: 0,
            repeats: 1,
            threads: 0,
            partition: PartitionSection {
                group_size: fit.group_size,
                block_count: fit.block_count,
            },
            dictionary: DictionarySection {
                atoms: fit.dict.k,
                mu: fit.dict.mu,
                batch_size: fit.dict.batch_size,
                epochs: fit.dict.epochs,
                forgetting: fit.dict.forgetting,
                dead_atom_threshold: fit.dict.dead_atom_threshold,
            },
            coding: CodingSection {
                mu: fit.code_mu.to_string(),
                max_iters: DEFAULT_MAX_ITERS,
                tol: DEFAULT_TOL,
                kkt_tol: DEFAULT_KKT_TOL,
            },
            selection: SelectionSection {
                mask_mode: fit.mask_mode.to_string(),
                normalization: fit.normalization.to_string(),
            },
            classifier: ClassifierSection {
                folds: clf.folds,
                c_values: clf.c_values,
                gamma_scales: clf.gamma_scales,
                standardize: clf.standardize,
                tol: clf.tol,
                cache_mb: clf.cache_mb,
                c: None,
                gamma: None,
            },
            split: SplitSection {
                train_per_class: None,
                train_fraction: Some(0.1),
            },
            paths: PathsSection::default(),
        }
    }
}

impl RunConfig {
    /// Defaults overlaid with a preset's parameters and split.
    pub fn from_preset(p: &Preset) -> Self {
        let mut c = Self::default();
        c.apply_preset(p);
        c
    }

    pub fn apply_preset(&mut self, p: &Preset) {
        self.preset = Some(p.name.to_string());
        self.repeats = 10;
        self.partition.group_size = p.group_size;
        self.partition.block_count = p.block_count;
        self.dictionary.atoms = p.atoms;
        self.selection.mask_mode = MaskMode::TopN(p.active_blocks).to_string();
        self.split = SplitSection {
            train_per_class: Some(p.train_per_class.to_vec()),
            train_fraction: None,
        };
    }

    /// Builds the layered configuration. `preset` (from the command line) wins
    /// over a `preset` key in the file; file keys win over the preset.
    pub fn load(config: Option<&Path>, preset: Option<&str>) -> Result<Self> {
        let file = match config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| SmsbError::io(path, e))?;
                let value: toml::Table = toml::from_str(&text)
                    .map_err(|e| SmsbError::Config(format!("{}: {}", path.display(), e.message())))?;
                Some((path, value))
            }
            None => None,
        };
        let preset_name = match (preset, file.as_ref().and_then(|(_, t)| t.get("preset"))) {
            (Some(name), _) => Some(name.to_string()),
            (None, Some(toml::Value::String(name))) => Some(name.clone()),
            (None, Some(other)) => {
                return Err(SmsbError::Config(format!("`preset` must be a string, got {other}")));
            }
            (None, None) => None,
        };
        let mut base = match &preset_name {
            Some(name) => Self::from_preset(presets::preset(name)?),
            None => Self::default(),
        };
        if let Some((path, mut table)) = file {
            let base_dir = path.parent().unwrap_or(Path::new(""));
            table.remove("preset");
            // a split in the file replaces the preset's split instead of merging with it
            if table.contains_key("split") {
                base.split = SplitSection {
                    train_per_class: None,
                    train_fraction: None,
                };
            }
            let mut merged = toml::Table::try_from(&base).map_err(|e| SmsbError::Config(e.to_string()))?;
            merge(&mut merged, table);
            base = merged
                .try_into()
                .map_err(|e: toml::de::Error| SmsbError::Config(format!("{}: {}", path.display(), e.message())))?;
            base.paths.resolve_against(base_dir);
        }
        base.preset = preset_name;
        Ok(base)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| SmsbError::Config(e.to_string()))
    }

    pub fn mask_mode(&self) -> Result<MaskMode> {
        self.selection.mask_mode.parse()
    }

    pub fn fit_params(&self) -> Result<FitParams> {
        let p = &self.partition;
        if p.group_size == 0 || p.block_count == 0 {
            return Err(SmsbError::Config("group_size and block_count must be at least 1".into()));
        }
        let d = &self.dictionary;
        if d.atoms == 0 || d.batch_size == 0 || d.epochs == 0 {
            return Err(SmsbError::Config("atoms, batch_size and epochs must be at least 1".into()));
        }
        if let Some(mu) = d.mu {
            positive("dictionary.mu", mu)?;
        }
        if !(d.forgetting >= 0.0) || !d.forgetting.is_finite() {
            return Err(SmsbError::Config(format!("dictionary.forgetting must be >= 0, got {}", d.forgetting)));
        }
        let c = &self.coding;
        if c.max_iters == 0 {
            return Err(SmsbError::Config("coding.max_iters must be at least 1".into()));
        }
        positive("coding.tol", c.tol)?;
        positive("coding.kkt_tol", c.kkt_tol)?;

        let mask_mode = self.mask_mode()?;
        if let MaskMode::TopN(n) = mask_mode {
            if n == 0 || n > p.block_count {
                return Err(SmsbError::Config(format!(
                    "mask mode top_n:{n} needs 1..={} active blocks",
                    p.block_count
                )));
            }
        }
        let mut fit = FitParams::new(p.group_size, p.block_count, d.atoms, mask_mode);
        fit.normalization = self.selection.normalization.parse::<Normalization>()?;
        fit.code_mu = c.mu.parse::<CodeMu>()?;
        fit.dict = DictLearnConfig {
            mu: d.mu,
            batch_size: d.batch_size,
            epochs: d.epochs,
            seed: self.seed,
            dead_atom_threshold: d.dead_atom_threshold,
            forgetting: d.forgetting,
            ..DictLearnConfig::new(d.atoms)
        };
        fit.solver = SolverConfig {
            max_iters: c.max_iters,
            tol: c.tol,
            kkt_tol: c.kkt_tol,
            ..SolverConfig::l21(1.0)
        };
        Ok(fit)
    }

    pub fn classifier_params(&self) -> Result<ClassifierParams> {
        let c = &self.classifier;
        if c.folds < 2 {
            return Err(SmsbError::Config(format!("classifier.folds must be at least 2, got {}", c.folds)));
        }
        if c.c_values.is_empty() || c.gamma_scales.is_empty() {
            return Err(SmsbError::Config("classifier grids must not be empty".into()));
        }
        for &v in c.c_values.iter().chain(&c.gamma_scales) {
            positive("classifier grid entry", v)?;
        }
        positive("classifier.tol", c.tol)?;
        let fixed = match (c.c, c.gamma) {
            (Some(cv), Some(g)) => {
                positive("classifier.c", cv)?;
                positive("classifier.gamma", g)?;
                Some((cv, g))
            }
            (None, None) => None,
            _ => return Err(SmsbError::Config("classifier.c and classifier.gamma must be set together".into())),
        };
        Ok(ClassifierParams {
            folds: c.folds,
            c_values: c.c_values.clone(),
            gamma_scales: c.gamma_scales.clone(),
            standardize: c.standardize,
            tol: c.tol,
            cache_mb: c.cache_mb,
            fixed,
        })
    }

    pub fn split_spec(&self) -> Result<SplitSpec> {
        match (&self.split.train_per_class, self.split.train_fraction) {
            (Some(counts), None) => {
                if counts.is_empty() {
                    return Err(SmsbError::Config("split.train_per_class is empty".into()));
                }
                Ok(SplitSpec::PerClass(counts.clone()))
            }
            (None, Some(f)) if f > 0.0 && f < 1.0 => Ok(SplitSpec::Fraction(f)),
            (None, Some(f)) => Err(SmsbError::Config(format!("split.train_fraction must be in (0, 1), got {f}"))),
            _ => Err(SmsbError::Config(
                "split needs exactly one of train_per_class and train_fraction".into(),
            )),
        }
    }

    pub fn experiment_params(&self) -> Result<ExperimentParams> {
        if self.repeats == 0 {
            return Err(SmsbError::Config("repeats must be at least 1".into()));
        }
        Ok(ExperimentParams {
            fit: self.fit_params()?,
            split: self.split_spec()?,
            classifier: self.classifier_params()?,
            repeats: self.repeats,
            seed: self.seed,
        })
    }

    /// Checks every section, so bad values surface before any compute.
    pub fn validate(&self) -> Result<()> {
        self.experiment_params().map(|_| ())
    }
}

impl PathsSection {
    fn resolve_against(&mut self, dir: &Path) {
        for p in [&mut self.cube, &mut self.labels, &mut self.model, &mut self.features]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(SmsbError::Config(format!("{name} must be positive, got {v}")))
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
        for p in presets::ALL {
            RunConfig::from_preset(p).validate().unwrap();
        }
    }

    #[test]
    fn file_overrides_preset_keys_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.toml", "preset = \"salinas\"\n[dictionary]\natoms = 5\n");
        let c = RunConfig::load(Some(&p), None).unwrap();
        assert_eq!(c.dictionary.atoms, 5);
        assert_eq!(c.partition.group_size, 32);
        assert_eq!(c.preset.as_deref(), Some("salinas"));

        let c = RunConfig::load(Some(&p), Some("indian-pines")).unwrap();
        assert_eq!(c.partition.group_size, 12);
        assert_eq!(c.dictionary.atoms, 5);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.toml", "[dictionary]\natom = 5\n");
        assert!(matches!(RunConfig::load(Some(&p), None), Err(SmsbError::Config(_))));
        let p = write(dir.path(), "b.toml", "colour = 1\n");
        assert!(RunConfig::load(Some(&p), None).is_err());
    }

    #[test]
    fn split_in_file_replaces_preset_split() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.toml", "[split]\ntrain_fraction = 0.2\n");
        let c = RunConfig::load(Some(&p), Some("pavia-university")).unwrap();
        assert_eq!(c.split_spec().unwrap(), SplitSpec::Fraction(0.2));
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.toml", "[paths]\ncube = \"x.cube\"\n");
        let c = RunConfig::load(Some(&p), None).unwrap();
        assert_eq!(c.paths.cube.unwrap(), dir.path().join("x.cube"));
    }

    #[test]
    fn invalid_values() {
        let mut c = RunConfig::default();
        c.selection.mask_mode = "top_n:11".into();
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.classifier.c = Some(1.0);
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.split.train_per_class = Some(vec![3]);
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.coding.mu = "relative:-1".into();
        assert!(c.validate().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let mut c = RunConfig::from_preset(&presets::PAVIA_UNIVERSITY);
        c.dictionary.mu = Some(0.3);
        c.classifier.c = Some(10.0);
        c.classifier.gamma = Some(0.5);
        let back: RunConfig = toml::from_str(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
