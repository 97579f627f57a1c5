use smsb::io::model_to_bytes;
use smsb::pipeline::train_classifier;
use smsb::*;

fn toy(seed: u64) -> (SynthData, FitParams) {
    let spec = SynthSpec::separable(3, seed);
    let data = generate(&spec).unwrap();
    let mut params = spec.recommended_fit();
    params.dict.epochs = 2;
    (data, params)
}

#[test]
fn cube_and_labels_survive_files() {
    let (data, _) = toy(4);
    let dir = tempfile::tempdir().unwrap();
    write_cube(&data.cube, dir.path().join("a.cube")).unwrap();
    write_labels(&data.labels, dir.path().join("a.labels")).unwrap();
    let back = read_cube(dir.path().join("a.cube")).unwrap();
    let quantized = data.cube.data().mapv(|v| v as f32 as f64);
    assert_eq!(back.data(), &quantized);
    write_cube(&back, dir.path().join("b.cube")).unwrap();
    assert_eq!(
        std::fs::read(dir.path().join("a.cube")).unwrap(),
        std::fs::read(dir.path().join("b.cube")).unwrap()
    );
    assert_eq!(read_labels(dir.path().join("a.labels")).unwrap(), data.labels);
}

#[test]
fn same_seed_gives_identical_model_bytes() {
    let (data, params) = toy(1);
    let a = model_to_bytes(&fit(&data.cube, &params).unwrap()).unwrap();
    let b = model_to_bytes(&fit(&data.cube, &params).unwrap()).unwrap();
    assert_eq!(a, b);

    let mut other = params.clone();
    other.dict.seed += 1;
    let c = model_to_bytes(&fit(&data.cube, &other).unwrap()).unwrap();
    assert_ne!(a, c);
}

#[test]
fn model_file_round_trip_preserves_features() {
    let (data, params) = toy(2);
    let model = fit(&data.cube, &params).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.smsb");
    write_model(&model, &path).unwrap();
    let back = read_model(&path).unwrap();
    assert_eq!(back, model);

    let pixels: Vec<usize> = (0..data.cube.pixels()).step_by(7).collect();
    let f1 = encode(&data.cube, &model, Some(&pixels)).unwrap();
    let f2 = encode(&data.cube, &back, Some(&pixels)).unwrap();
    assert_eq!(f1, f2);

    write_features(&f1, dir.path().join("f.feat")).unwrap();
    assert_eq!(read_features(dir.path().join("f.feat")).unwrap(), f1);
}

#[test]
fn model_with_classifier_round_trip() {
    let (data, params) = toy(3);
    let mut model = fit(&data.cube, &params).unwrap();
    let pixels = data.labels.labeled_pixels();
    let feats = encode(&data.cube, &model, Some(&pixels)).unwrap();
    let y: Vec<u16> = pixels.iter().map(|&p| data.labels.labels[p]).collect();
    let clf_params = ClassifierParams {
        fixed: Some((10.0, 1.0 / feats.dim() as f64)),
        ..ClassifierParams::default()
    };
    let (clf, cv) = train_classifier(feats.samples(), &y, &clf_params, 0).unwrap();
    assert!(cv.is_none());
    let before = clf.predict(feats.samples()).unwrap();
    model.classifier = Some(clf);

    let bytes = model_to_bytes(&model).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.smsb");
    write_model(&model, &path).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), bytes);

    let back = read_model(&path).unwrap();
    assert_eq!(back, model);
    let after = back.classifier.as_ref().unwrap().predict(feats.samples()).unwrap();
    assert_eq!(before, after);
}

#[test]
fn truncated_model_is_rejected() {
    let (data, params) = toy(5);
    let model = fit(&data.cube, &params).unwrap();
    let bytes = model_to_bytes(&model).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cut.smsb");
    std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    let err = read_model(&path).unwrap_err();
    assert_eq!(err.family(), ErrorFamily::Io);
}
