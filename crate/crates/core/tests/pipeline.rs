use ecgnet::baseline::{feature_matrix, run_baseline_cv, BaselineParams, BaselineRegistry, Db4};
use ecgnet::data::synth::{generate_synthetic_dataset, RhythmRegistry, SynthConfig};
use ecgnet::data::{labels_to_tensor, load_manifest, records_to_tensor, EcgRecord, Lead};
use ecgnet::explain::{
    expected_gradients, lead_contributions, patient_explanation, population_report,
    render_explanation_svg, ContributionMode, ExplainConfig,
};
use ecgnet::model::{load_checkpoint, save_checkpoint, CheckpointMeta, ModelConfig};
use ecgnet::train::{cross_validate, prepare_records, CvOptions, TrainConfig};

const LEADS: [Lead; 2] = [Lead::I, Lead::II];

fn dataset(dir: &std::path::Path) -> Vec<EcgRecord> {
    let cfg = SynthConfig {
        n_records: 30,
        classes: vec!["normal".into(), "af".into(), "pvc".into()],
        n_leads: 2,
        n_samples: 500,
        fs: 250.0,
        seed: 11,
    };
    let written = generate_synthetic_dataset(&cfg, &RhythmRegistry::with_builtins(), dir).unwrap();
    let mut manifest = load_manifest(dir.join("manifest.csv")).unwrap();
    assert_eq!(manifest.len(), written.len());
    manifest.default_fs = 250.0;
    manifest.load_all().unwrap()
}

#[test]
fn synthesize_train_persist_explain() {
    let dir = tempfile::tempdir().unwrap();
    let records = dataset(dir.path());
    assert_eq!(records.len(), 30);
    assert!(records
        .iter()
        .all(|r| r.n_leads() == 2 && r.n_samples() == 500 && r.fs == 250.0));

    let model = ModelConfig {
        n_leads: 2,
        nsteps: 500,
        kernel_size: 5,
        base_channels: 4,
        n_blocks: 1,
        ..ModelConfig::default()
    };
    let train = TrainConfig {
        learning_rate: 1e-3,
        batch_size: 8,
        max_epochs: 2,
        seed: 3,
        leads: LEADS.to_vec(),
        nsteps: 500,
        ..TrainConfig::default()
    };
    let opts = CvOptions {
        folds: 5,
        jobs: 1,
        rounds: Some(vec![0]),
    };
    let mut outcome = None;
    let summary = cross_validate(&records, &model, &train, &opts, |o| {
        outcome = Some(o.clone());
        Ok(())
    })
    .unwrap();
    let outcome = outcome.unwrap();
    assert_eq!(summary.reports.len(), 1);
    assert_eq!(outcome.roles.test.len(), 6);
    assert_eq!(outcome.train.history.len(), 2);

    let ckpt = dir.path().join("model.ckpt");
    let meta = CheckpointMeta {
        thresholds: Some(outcome.train.thresholds.clone()),
        leads: vec!["I".into(), "II".into()],
        ..CheckpointMeta::default()
    };
    save_checkpoint(&outcome.train.network, &meta, &ckpt).unwrap();
    let (net, meta2) = load_checkpoint(&ckpt).unwrap();
    assert_eq!(meta2.thresholds, meta.thresholds);

    let test: Vec<EcgRecord> = records
        .iter()
        .filter(|r| outcome.roles.test.contains(&r.record_id))
        .cloned()
        .collect();
    let test = prepare_records(&test, &LEADS, 500).unwrap();
    let bg = prepare_records(&records[..4], &LEADS, 500).unwrap();
    let background = records_to_tensor(&bg.iter().collect::<Vec<_>>()).unwrap();
    let cfg = ExplainConfig {
        n_samples: 8,
        batch: 4,
        seed: 1,
        ..ExplainConfig::default()
    };
    let mut svs = Vec::new();
    for rec in &test {
        let x = records_to_tensor(&[rec]).unwrap();
        let sv = expected_gradients(&net, &rec.record_id, &x, &background, &cfg, None).unwrap();
        assert_eq!(sv.classes.len(), 9);
        let probs = net.predict(&x).unwrap().into_data();
        let expl = patient_explanation(&sv, &probs).unwrap();
        assert_eq!(expl.lead_ranking.len(), 2);
        let svg = render_explanation_svg(rec, &expl, 2, 2.0).unwrap();
        assert!(svg.contains("<svg") && svg.trim_end().ends_with("</svg>"));
        svs.push(sv);
    }
    let lc = lead_contributions(&svs, 9, ContributionMode::Absolute).unwrap();
    let report = population_report(&lc, &LEADS).unwrap();
    let rows: Vec<&str> = report.csv.lines().collect();
    assert_eq!(rows.len(), 11);
    for row in &rows[1..] {
        let sum: f64 = row
            .split(',')
            .skip(1)
            .map(|v| v.parse::<f64>().unwrap())
            .sum();
        assert!((sum - 1.0).abs() < 1e-8, "{row}");
    }
}

#[test]
fn baseline_uses_the_deep_model_folds() {
    let dir = tempfile::tempdir().unwrap();
    let records = prepare_records(&dataset(dir.path()), &LEADS, 500).unwrap();
    let (names, x) = feature_matrix(&records, &Db4, 3).unwrap();
    assert_eq!(x.shape(), &[30, names.len()]);
    let y = labels_to_tensor(&records.iter().collect::<Vec<_>>());
    let ids: Vec<&str> = records.iter().map(|r| r.record_id.as_str()).collect();
    let params = BaselineParams {
        epochs: 50,
        ..BaselineParams::default()
    };
    let cv = run_baseline_cv(
        &ids,
        &x,
        &y,
        "lr",
        &BaselineRegistry::with_builtins(),
        &params,
        5,
        3,
        Some(&[0, 1]),
    )
    .unwrap();
    let split = ecgnet::train::make_folds(&ids, 5, 3).unwrap();
    let mut tested: Vec<String> = cv.scores.iter().map(|(id, _)| id.clone()).collect();
    let mut want = [split.round(0).unwrap().test, split.round(1).unwrap().test].concat();
    tested.sort();
    want.sort();
    assert_eq!(tested, want);
    assert_eq!(cv.reports.len(), 2);
}
