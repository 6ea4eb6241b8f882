use parcomp_core::model::{Model, ModelConfig};
use parcomp_core::segment::SegmentParams;
use parcomp_core::synth::{generate_sample, Level, SampleSpec};
use parcomp_core::trainer::*;
use tempfile::tempdir;

fn model_config() -> ModelConfig {
    ModelConfig {
        f: 16,
        k: 10,
        m: 8,
        global_queries: 8,
        t: 16,
        n_proxies: 32,
        patch_k: 16,
        dist_hidden: 16,
        ..ModelConfig::default()
    }
}

fn samples(n: usize) -> Vec<TrainSample> {
    let raw: Vec<_> = (0..n as u64)
        .map(|seed| {
            generate_sample(&SampleSpec {
                seed,
                complexity: 6,
                level: Level::ALL[seed as usize % 3],
                view_index: seed as usize % 8,
            })
            .unwrap()
        })
        .collect();
    prepare_samples(&raw, &model_config(), &SegmentParams::default(), 512).unwrap()
}

fn trainer(cfg: TrainConfig) -> Trainer {
    Trainer::new(Model::new(model_config()).unwrap(), cfg).unwrap()
}

fn values(t: &Trainer) -> Vec<Vec<f64>> {
    t.model.params.iter().map(|p| p.value.clone()).collect()
}

#[test]
fn zero_learning_rate_keeps_parameters() {
    let data = samples(3);
    let mut t = trainer(TrainConfig {
        lr: 0.0,
        batch_size: 2,
        ..TrainConfig::default()
    });
    let before = values(&t);
    t.train_epoch(&data).unwrap();
    assert_eq!(values(&t), before);
    assert_eq!(t.epoch, 1);
}

#[test]
fn overfits_one_sample() {
    // Full size: with few points per primitive, coverage bounds the loss.
    let mc = ModelConfig::default();
    let raw = generate_sample(&SampleSpec {
        seed: 1,
        complexity: 6,
        level: Level::Simple,
        view_index: 0,
    })
    .unwrap();
    let data = prepare_samples(&[raw], &mc, &SegmentParams::default(), 2048).unwrap();
    let cfg = TrainConfig {
        lr: 1e-3,
        decay_every: 50,
        batch_size: 1,
        epochs: 500,
        ..TrainConfig::default()
    };
    let mut t = Trainer::new(Model::new(mc).unwrap(), cfg).unwrap();
    let stats = t.fit(&data, &FitOutputs::default()).unwrap();
    let first = stats[0].loss.total;
    let last = stats.last().unwrap().loss.total;
    assert!(last <= 0.1 * first, "loss {first} -> {last}");
}

#[test]
fn same_seed_same_trajectory() {
    let data = samples(4);
    let run = || {
        let mut t = trainer(TrainConfig {
            batch_size: 3,
            epochs: 3,
            lr: 1e-3,
            ..TrainConfig::default()
        });
        let s = t.fit(&data, &FitOutputs::default()).unwrap();
        (s, values(&t))
    };
    assert_eq!(run(), run());
}

#[test]
fn zero_epochs_is_identity() {
    let data = samples(2);
    let mut t = trainer(TrainConfig {
        epochs: 0,
        ..TrainConfig::default()
    });
    let before = values(&t);
    assert!(t.fit(&data, &FitOutputs::default()).unwrap().is_empty());
    assert_eq!(values(&t), before);
}

#[test]
fn learning_rate_schedule() {
    let c = TrainConfig::default();
    assert_eq!(c.lr_at(0), 1e-4);
    assert_eq!(c.lr_at(19), 1e-4);
    assert!((c.lr_at(20) - 0.9e-4).abs() < 1e-18);
    assert!((c.lr_at(45) - 0.81e-4).abs() < 1e-18);
    assert!(TrainConfig {
        lr_decay: 1.0,
        ..c.clone()
    }
    .validate()
    .is_err());
    assert!(TrainConfig { batch_size: 0, ..c }.validate().is_err());
}

#[test]
fn empty_dataset_is_rejected() {
    let mut t = trainer(TrainConfig::default());
    assert!(matches!(t.train_epoch(&[]), Err(TrainError::EmptyDataset)));
}

#[test]
fn resume_matches_straight_run() {
    let data = samples(4);
    let cfg = TrainConfig {
        batch_size: 2,
        epochs: 4,
        lr: 1e-3,
        checkpoint_every: 2,
        ..TrainConfig::default()
    };
    let mut straight = trainer(cfg.clone());
    let s_all = straight.fit(&data, &FitOutputs::default()).unwrap();

    let dir = tempdir().unwrap();
    let mut first = trainer(TrainConfig {
        epochs: 2,
        ..cfg.clone()
    });
    let out = FitOutputs {
        checkpoint_dir: Some(dir.path().to_path_buf()),
        history: Some(dir.path().join("h.jsonl")),
    };
    let s1 = first.fit(&data, &out).unwrap();
    let mut resumed = load_checkpoint(&dir.path().join("checkpoint.bin")).unwrap();
    assert_eq!(resumed.epoch, 2);
    resumed.config.epochs = 4;
    let s2 = resumed.fit(&data, &out).unwrap();

    assert_eq!([s1, s2].concat(), s_all);
    assert_eq!(values(&resumed), values(&straight));
    assert_eq!(resumed.optimizer, straight.optimizer);
    let lines = std::fs::read_to_string(dir.path().join("h.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 4);
    let row: serde_json::Value = serde_json::from_str(lines.lines().nth(3).unwrap()).unwrap();
    assert_eq!(row["epoch"], 3);
}

#[test]
fn checkpoint_round_trip_is_byte_identical() {
    let data = samples(2);
    let mut t = trainer(TrainConfig {
        epochs: 1,
        lr: 1e-3,
        ..TrainConfig::default()
    });
    t.fit(&data, &FitOutputs::default()).unwrap();
    let dir = tempdir().unwrap();
    let a = dir.path().join("a.bin");
    let b = dir.path().join("b.bin");
    save_checkpoint(&a, &t).unwrap();
    let loaded = load_checkpoint(&a).unwrap();
    assert_eq!(values(&loaded), values(&t));
    save_checkpoint(&b, &loaded).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn corrupted_checkpoint_is_a_format_error() {
    let dir = tempdir().unwrap();
    let p = dir.path().join("bad.bin");
    std::fs::write(&p, b"\xff\xff\xff\xff\xff\xff\xff\x7fgarbage").unwrap();
    assert!(matches!(load_checkpoint(&p), Err(TrainError::Format(_))));
    std::fs::write(&p, b"").unwrap();
    assert!(matches!(
        load_checkpoint(&p),
        Err(TrainError::Format(_) | TrainError::Io(_))
    ));
    assert!(matches!(
        load_checkpoint(&dir.path().join("missing.bin")),
        Err(TrainError::Io(_))
    ));
}

#[test]
fn mismatched_model_names_the_parameter() {
    let t = trainer(TrainConfig::default());
    let dir = tempdir().unwrap();
    let p = dir.path().join("c.bin");
    save_checkpoint(&p, &t).unwrap();
    let mut other = Model::new(ModelConfig {
        f: 12,
        ..model_config()
    })
    .unwrap();
    let err = load_weights(&p, &mut other).unwrap_err();
    let TrainError::Format(msg) = err else {
        panic!("{err:?}")
    };
    assert!(
        msg.contains("`enc.point.0.w`") || msg.contains("`enc.point.1.w`"),
        "{msg}"
    );
}

#[test]
fn ground_truth_subsampling_is_proportional() {
    let s = generate_sample(&SampleSpec {
        seed: 3,
        complexity: 6,
        level: Level::Simple,
        view_index: 0,
    })
    .unwrap();
    let sub = subsample_ground_truth(&s.gt_primitives, 1000);
    let total: usize = sub.iter().map(|p| p.points.len()).sum();
    assert!((total as i64 - 1000).abs() <= s.gt_primitives.len() as i64);
    for (a, b) in sub.iter().zip(&s.gt_primitives) {
        assert_eq!(a.plane, b.plane);
        assert!(!a.points.is_empty());
        assert!(a.points.iter().all(|p| b.points.contains(p)));
    }
}
