use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::Context;
use smsb::io::{format_report, report_tsv, write_map, DEFAULT_PALETTE};
use smsb::pipeline::{predict_map, train_classifier};
use smsb::presets;
use smsb::*;

use crate::config::{PathsSection, RunConfig};

type Result = anyhow::Result<()>;

fn pick(flag: Option<PathBuf>, configured: &Option<PathBuf>, what: &str) -> anyhow::Result<PathBuf> {
    flag.or_else(|| configured.clone())
        .ok_or_else(|| SmsbError::Config(format!("no {what} given (flag --{what} or [paths] {what})")).into())
}

fn output(out: Option<PathBuf>, default: &str) -> PathBuf {
    out.unwrap_or_else(|| PathBuf::from(default))
}

fn class_names(cfg: &RunConfig, labels: &LabelMap) -> Option<Vec<String>> {
    labels.class_names.clone().or_else(|| {
        let p = presets::preset(cfg.preset.as_deref()?).ok()?;
        (p.class_count() == labels.class_count as usize)
            .then(|| p.class_names.iter().map(|s| s.to_string()).collect())
    })
}

pub fn fit(cfg: &RunConfig, cube: Option<PathBuf>, out: Option<PathBuf>) -> Result {
    let cube_path = pick(cube, &cfg.paths.cube, "cube")?;
    let cube = read_cube(&cube_path)?;
    let model = smsb::fit(&cube, &cfg.fit_params()?)?;
    let path = output(out.or_else(|| cfg.paths.model.clone()), "model.smsb");
    write_model(&model, &path)?;
    println!(
        "dictionary {}x{}, active blocks {:?}, feature dimension {}",
        model.dict.s(),
        model.dict.k(),
        model.mask.active_blocks(),
        model.feature_dim()
    );
    println!("wrote {}", path.display());
    Ok(())
}

pub fn encode(
    cfg: &RunConfig,
    cube: Option<PathBuf>,
    model: Option<PathBuf>,
    labels: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result {
    let cube = read_cube(pick(cube, &cfg.paths.cube, "cube")?)?;
    let model = read_model(pick(model, &cfg.paths.model, "model")?)?;
    let labels = labels.or_else(|| cfg.paths.labels.clone()).map(read_labels).transpose()?;
    let feats = match &labels {
        Some(l) => {
            if (l.width, l.height) != (cube.width(), cube.height()) {
                return Err(SmsbError::Shape(format!(
                    "labels are {}x{}, cube is {}x{}",
                    l.width,
                    l.height,
                    cube.width(),
                    cube.height()
                ))
                .into());
            }
            let pixels = l.labeled_pixels();
            smsb::encode(&cube, &model, Some(&pixels))?.with_labels(l)
        }
        None => smsb::encode(&cube, &model, None)?,
    };
    let path = output(out.or_else(|| cfg.paths.features.clone()), "features.feat");
    write_features(&feats, &path)?;
    println!("{} pixels x {} features -> {}", feats.len(), feats.dim(), path.display());
    Ok(())
}

pub fn train_svm(cfg: &RunConfig, features: Option<PathBuf>, model: Option<PathBuf>, out: Option<PathBuf>) -> Result {
    let model_path = pick(model, &cfg.paths.model, "model")?;
    let mut model = read_model(&model_path)?;
    let feats = read_features(pick(features, &cfg.paths.features, "features")?)?;
    if feats.dim() != model.feature_dim() {
        return Err(SmsbError::ModelMismatch(format!(
            "features have {} dimensions, model produces {}",
            feats.dim(),
            model.feature_dim()
        ))
        .into());
    }
    let y = feats
        .labels
        .clone()
        .ok_or_else(|| SmsbError::DegenerateLabels("features carry no labels (encode with --labels)".into()))?;
    let (clf, cv) = train_classifier(feats.samples(), &y, &cfg.classifier_params()?, cfg.seed)
        .context("training the classifier")?;
    match cv {
        Some(cv) => println!(
            "C {} gamma {:.6} (cross-validated accuracy {:.2}%)",
            cv.c,
            cv.gamma,
            100.0 * cv.accuracy
        ),
        None => println!("C {} (fixed)", clf.svm.c),
    }
    println!("{} support vectors, classes {:?}", clf.svm.support_vectors.nrows(), clf.svm.classes);
    model.classifier = Some(clf);
    let path = out.unwrap_or(model_path);
    write_model(&model, &path)?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn classify(
    cfg: &RunConfig,
    cube: Option<PathBuf>,
    model: Option<PathBuf>,
    labels: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result {
    let cube = read_cube(pick(cube, &cfg.paths.cube, "cube")?)?;
    let model = read_model(pick(model, &cfg.paths.model, "model")?)?;
    let truth = labels.or_else(|| cfg.paths.labels.clone()).map(read_labels).transpose()?;
    let top = model
        .classifier
        .as_ref()
        .and_then(|c| c.svm.classes.iter().copied().max())
        .unwrap_or(0);
    let classes = truth.as_ref().map_or(top, |t| t.class_count.max(top));
    let mut pred = predict_map(&cube, &model, classes)?;
    if let Some(t) = &truth {
        if (t.width, t.height) != (pred.width, pred.height) {
            return Err(SmsbError::Shape("ground truth and cube sizes differ".into()).into());
        }
        pred.class_names = t.class_names.clone();
        pred.class_colors = t.class_colors.clone();
        let pixels = t.labeled_pixels();
        let truth_v: Vec<u16> = pixels.iter().map(|&p| t.labels[p]).collect();
        let pred_v: Vec<u16> = pixels.iter().map(|&p| pred.labels[p]).collect();
        if !pixels.is_empty() {
            let m = compute_metrics(&ConfusionMatrix::from_labels(&truth_v, &pred_v)?)?;
            println!(
                "OA {:.2}% AA {:.2}% kappa {:.4} on {} labeled pixels",
                100.0 * m.oa,
                100.0 * m.aa,
                m.kappa,
                pixels.len()
            );
        }
    }
    let path = output(out, "predicted.labels");
    write_labels(&pred, &path)?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn evaluate(
    cfg: &RunConfig,
    cube: Option<PathBuf>,
    labels: Option<PathBuf>,
    baseline: bool,
    out: Option<PathBuf>,
) -> Result {
    let cube = read_cube(pick(cube, &cfg.paths.cube, "cube")?)?;
    let labels = read_labels(pick(labels, &cfg.paths.labels, "labels")?)?;
    let params = cfg.experiment_params()?;
    let names = class_names(cfg, &labels);
    let report = run_experiment(&cube, &labels, &params)?;
    print!("{}", format_report(&report, names.as_deref()));
    let mut tsv = report_tsv(&report);
    if baseline {
        let raw = baseline_svm_raw(&cube, &labels, &params)?;
        println!();
        print!("{}", format_report(&raw, names.as_deref()));
        tsv.extend(report_tsv(&raw).lines().skip(1).map(|l| format!("{l}\n")));
    }
    if let Some(path) = out {
        std::fs::write(&path, tsv).map_err(|e| SmsbError::io(&path, e))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

pub fn map(cfg: &RunConfig, labels: Option<PathBuf>, truth: Option<PathBuf>, out: Option<PathBuf>) -> Result {
    let path = pick(labels, &None, "labels")?;
    let mut pred = read_labels(&path)?;
    if let Some(t) = truth {
        let t = read_labels(t)?;
        if (t.width, t.height) != (pred.width, pred.height) {
            return Err(SmsbError::Shape("ground truth and label map sizes differ".into()).into());
        }
        for (p, &l) in pred.labels.iter_mut().zip(&t.labels) {
            if l == 0 {
                *p = 0;
            }
        }
    }
    let colors = match (&pred.class_colors, cfg.preset.as_deref()) {
        (Some(c), _) => c.clone(),
        (None, Some(name)) => presets::preset(name)?.colors(),
        (None, None) => DEFAULT_PALETTE.to_vec(),
    };
    let out = output(out, "map.ppm");
    write_map(&pred, &colors, &out)?;
    println!("wrote {}", out.display());
    Ok(())
}

pub fn synth(cfg: &RunConfig, classes: usize, noisy: bool, noise: Option<f64>, out: Option<PathBuf>) -> Result {
    let mut spec = if noisy {
        SynthSpec::noisy(classes, cfg.seed)
    } else {
        SynthSpec::separable(classes, cfg.seed)
    };
    if let Some(n) = noise {
        spec.noise_std = n;
    }
    let data = generate(&spec)?;
    let dir = output(out, ".");
    std::fs::create_dir_all(&dir).map_err(|e| SmsbError::io(&dir, e))?;
    let cube_path = dir.join("synth.cube");
    let labels_path = dir.join("synth.labels");
    write_cube(&data.cube, &cube_path)?;
    write_labels(&data.labels, &labels_path)?;

    let config_path = dir.join("synth.toml");
    let run = synth_config(cfg, &spec);
    std::fs::write(&config_path, run.to_toml()?).map_err(|e| SmsbError::io(&config_path, e))?;
    println!(
        "{}x{} pixels, {} bands, {} classes, discriminative blocks {:?}",
        spec.width, spec.height, spec.bands, spec.class_count, spec.discriminative_blocks
    );
    for p in [&cube_path, &labels_path, &config_path] {
        println!("wrote {}", p.display());
    }
    Ok(())
}

/// Settings matched to the generated scene, with paths relative to the config file.
fn synth_config(cfg: &RunConfig, spec: &SynthSpec) -> RunConfig {
    let fit = spec.recommended_fit();
    let mut run = RunConfig {
        preset: None,
        seed: cfg.seed,
        repeats: cfg.repeats,
        paths: PathsSection {
            cube: Some("synth.cube".into()),
            labels: Some("synth.labels".into()),
            model: Some("synth.model".into()),
            features: Some("synth.feat".into()),
        },
        ..RunConfig::default()
    };
    run.partition.group_size = fit.group_size;
    run.partition.block_count = fit.block_count;
    run.dictionary.atoms = fit.dict.k;
    run.selection.mask_mode = fit.mask_mode.to_string();
    run
}

pub fn bench(cfg: &RunConfig, cube: Option<PathBuf>, labels: Option<PathBuf>, classes: usize) -> Result {
    let (cube, labels, params) = match cube.or_else(|| cfg.paths.cube.clone()) {
        Some(c) => {
            let l = pick(labels, &cfg.paths.labels, "labels")?;
            (read_cube(&c)?, read_labels(&l)?, cfg.experiment_params()?)
        }
        None => {
            let spec = SynthSpec::noisy(classes, cfg.seed);
            let data = generate(&spec)?;
            let mut params = synth_config(cfg, &spec).experiment_params()?;
            params.repeats = cfg.repeats;
            println!("synthetic scene: {}", describe(&data.cube));
            (data.cube, data.labels, params)
        }
    };
    let smsb_report = run_experiment(&cube, &labels, &params)?;
    let raw_report = baseline_svm_raw(&cube, &labels, &params)?;
    print!("{}", timing_table(&[&smsb_report, &raw_report]));
    Ok(())
}

fn describe(cube: &HsiCube) -> String {
    format!("{}x{} pixels, {} bands", cube.width(), cube.height(), cube.bands())
}

fn timing_table(reports: &[&ExperimentReport]) -> String {
    let summaries: Vec<_> = reports.iter().map(|r| r.summary()).collect();
    let mut out = String::new();
    let _ = write!(out, "{:<18}", "time (s)");
    for r in reports {
        let _ = write!(out, "{:>14}", r.method);
    }
    out.push('\n');
    let stages = summaries[0].timings.stages();
    for (i, (name, _)) in stages.iter().enumerate() {
        let _ = write!(out, "{name:<18}");
        for s in &summaries {
            let _ = write!(out, "{:>14.4}", s.timings.stages()[i].1);
        }
        out.push('\n');
    }
    let _ = write!(out, "{:<18}", "total");
    for s in &summaries {
        let _ = write!(out, "{:>14.4}", s.timings.total);
    }
    out.push('\n');
    let _ = write!(out, "{:<18}", "OA (%)");
    for s in &summaries {
        let _ = write!(out, "{:>14}", format!("{:.2}±{:.2}", 100.0 * s.oa.0, 100.0 * s.oa.1));
    }
    out.push('\n');
    let _ = writeln!(out, "runs: {}", reports[0].runs.len());
    out
}
