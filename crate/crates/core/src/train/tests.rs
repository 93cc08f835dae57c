use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::data::synth::{synthesize_records, RhythmRegistry, SynthConfig};

fn synth(n: usize, seed: u64) -> Vec<EcgRecord> {
    let cfg = SynthConfig {
        n_records: n,
        classes: vec!["normal".into(), "af".into(), "pvc".into()],
        n_leads: 2,
        n_samples: 500,
        fs: 125.0,
        seed,
    };
    synthesize_records(&cfg, &RhythmRegistry::with_builtins()).unwrap()
}

fn tiny_model() -> ModelConfig {
    ModelConfig {
        n_leads: 2,
        nsteps: 500,
        kernel_size: 7,
        base_channels: 4,
        n_blocks: 2,
        ..ModelConfig::default()
    }
}

fn tiny_train(epochs: usize) -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-3,
        batch_size: 8,
        max_epochs: epochs,
        seed: 3,
        leads: vec![Lead::I, Lead::II],
        nsteps: 500,
        ..TrainConfig::default()
    }
}

#[test]
fn bce_hand_example() {
    let mut g = Graph::new();
    let mut p = vec![0.5; 9];
    p[0] = 0.9;
    p[1] = 0.1;
    let probs = g.constant(Tensor::new([1, 9], p).unwrap());
    let mut y = vec![0.0; 9];
    y[0] = 1.0;
    let loss = g.bce_loss(probs, &Tensor::new([1, 9], y).unwrap()).unwrap();
    let expected = (-2.0 * 0.9f64.ln() + 7.0 * 2f64.ln()) / 9.0;
    assert!((g.value(loss).data()[0] - expected).abs() < 1e-12);
}

#[test]
fn loss_decreases_on_a_fixed_batch() {
    let records = prepare_records(&synth(8, 1), &[Lead::I, Lead::II], 500).unwrap();
    let refs: Vec<&EcgRecord> = records.iter().collect();
    let (x, y) = (records_to_tensor(&refs).unwrap(), labels_to_tensor(&refs));
    let mut net = Network::build(&tiny_model(), 0).unwrap();
    let mut adam = Adam::new(AdamConfig::with_lr(1e-4));
    let mut losses = Vec::new();
    for _ in 0..6 {
        // Same dropout masks every step so only the parameters change.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        losses.push(train_step(&mut net, &mut adam, x.clone(), &y, &mut rng).unwrap());
    }
    let non_decreasing = losses.windows(2).filter(|w| w[1] >= w[0]).count();
    assert!(non_decreasing <= 1, "{losses:?}");
}

#[test]
fn zero_epochs_returns_initial_network() {
    let data = synth(12, 2);
    let out = train_model(&data[..9], &data[9..], &tiny_model(), &tiny_train(0)).unwrap();
    assert!(out.history.is_empty());
    assert_eq!(out.best_epoch, None);
    assert_eq!(out.network, Network::build(&tiny_model(), 3).unwrap());
    assert_eq!(out.thresholds.len(), 9);
    assert!(out.thresholds.iter().all(|t| *t > 0.0 && *t < 1.0));
}

#[test]
fn training_is_deterministic_and_keeps_best_snapshot() {
    let data = synth(30, 4);
    let a = train_model(&data[..24], &data[24..], &tiny_model(), &tiny_train(3)).unwrap();
    let b = train_model(&data[..24], &data[24..], &tiny_model(), &tiny_train(3)).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.network, b.network);
    assert_eq!(a.history.len(), 3);
    let best = a
        .history
        .iter()
        .map(|h| h.val_avg_f1)
        .fold(f64::MIN, f64::max);
    assert_eq!(a.best_val_f1, best);
    let epoch = a.best_epoch.unwrap();
    assert_eq!(a.history[epoch - 1].val_avg_f1, best);
    let lowest = a
        .history
        .iter()
        .filter(|h| h.val_avg_f1 == best)
        .map(|h| h.val_loss)
        .fold(f64::MAX, f64::min);
    assert_eq!(a.history[epoch - 1].val_loss, lowest);
    assert_eq!(a.best_val_loss, lowest);

    // The snapshot reproduces its validation score.
    let val = prepare_records(&data[24..], &[Lead::I, Lead::II], 500).unwrap();
    let (s, t) = score_records(&a.network, &val).unwrap();
    assert_eq!(selection_f1(&s, &t, &a.thresholds).unwrap(), best);
}

#[test]
fn rejects_bad_inputs() {
    let data = synth(6, 5);
    assert!(train_model(&[], &data, &tiny_model(), &tiny_train(1)).is_err());
    assert!(train_model(&data, &[], &tiny_model(), &tiny_train(1)).is_err());
    assert!(train_model(&data[..4], &data[3..], &tiny_model(), &tiny_train(1)).is_err());
    let wrong = TrainConfig {
        leads: vec![Lead::I],
        ..tiny_train(1)
    };
    assert!(train_model(&data[..4], &data[4..], &tiny_model(), &wrong).is_err());
    let zero_lr = TrainConfig {
        learning_rate: 0.0,
        ..tiny_train(1)
    };
    assert!(zero_lr.validate().is_err());
}

#[test]
fn cross_validation_shape() {
    let data = synth(15, 6);
    let mut seen = Vec::new();
    let summary = cross_validate(
        &data,
        &tiny_model(),
        &tiny_train(1),
        &CvOptions {
            folds: 3,
            jobs: 2,
            rounds: None,
        },
        |r| {
            seen.push(r.round);
            assert_eq!(r.roles.test.len(), 5);
            Ok(())
        },
    )
    .unwrap();
    assert_eq!(seen, vec![0, 1, 2]);
    assert_eq!(summary.reports.len(), 3);
    assert_eq!(summary.aggregate.rows.len(), 9);
    let mean_f1 = summary
        .reports
        .iter()
        .map(|(_, r)| r.rows[0].f1)
        .sum::<f64>()
        / 3.0;
    assert!((summary.aggregate.rows[0].f1 - mean_f1).abs() < 1e-12);

    // Parallel and sequential rounds agree.
    let seq = cross_validate(
        &data,
        &tiny_model(),
        &tiny_train(1),
        &CvOptions {
            folds: 3,
            jobs: 1,
            rounds: Some(vec![1]),
        },
        |_| Ok(()),
    )
    .unwrap();
    assert_eq!(seq.reports[0], summary.reports[1]);
}

#[test]
fn history_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("history.csv");
    let h = vec![EpochRecord {
        epoch: 1,
        train_loss: 0.5,
        val_loss: 0.75,
        val_avg_f1: 0.25,
    }];
    write_history(&path, &h).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(
        text,
        "epoch,train_loss,val_loss,val_avg_F1\n1,0.50000000,0.75000000,0.25000000\n"
    );
}

#[test]
fn mean_bce_hand_example() {
    let p = Tensor::new([1, 2], vec![0.5, 0.9]).unwrap();
    let t = Tensor::new([1, 2], vec![1.0, 0.0]).unwrap();
    let want = (std::f64::consts::LN_2 - (0.1f64).ln()) / 2.0;
    assert!((mean_bce(&p, &t).unwrap() - want).abs() < 1e-12);
}
