//! Training loop: determinism, checkpoint resume, early stopping and
//! error reporting.

use tfbimamba::net::{NetConfig, TfMamba};
use tfbimamba::numcore::{Checkpoint, OptimConfig};
use tfbimamba::pipeline::{prepare_example, Example};
use tfbimamba::sim::{render_split, Assets, NoiseKind, SimConfig, Split};
use tfbimamba::train::{TrainConfig, TrainError, Trainer};

fn tiny_net() -> NetConfig {
    NetConfig {
        model_width: 8,
        n_blocks: 1,
        expand_per_block: vec![1],
        d_state: 2,
        ..NetConfig::default()
    }
}

fn clips(n: usize) -> Vec<Example> {
    let sim = SimConfig {
        duration: 0.6,
        moving: false,
        static_grid: true,
        noise: NoiseKind::None,
        n_train: n,
        ..SimConfig::default()
    };
    render_split(&sim, 3, Split::Train, &Assets::default())
        .unwrap()
        .iter()
        .enumerate()
        .map(|(i, u)| prepare_example(&format!("c{i}"), &u.mixture, &u.azimuth, &u.vad, &tiny_net()).unwrap())
        .collect()
}

fn trainer(cfg: TrainConfig) -> Trainer {
    Trainer::new(TfMamba::new(tiny_net()).unwrap(), cfg, OptimConfig::default()).unwrap()
}

fn cfg() -> TrainConfig {
    TrainConfig {
        batch_size: 2,
        crop_frames: 16,
        ..TrainConfig::default()
    }
}

#[test]
fn training_is_deterministic() {
    let data = clips(4);
    let mut a = trainer(cfg());
    let mut b = trainer(cfg());
    for _ in 0..2 {
        assert_eq!(a.train_epoch(&data).unwrap(), b.train_epoch(&data).unwrap());
    }
    assert_eq!(a.params, b.params);
    let mut c = trainer(TrainConfig {
        shuffle_seed: 1,
        ..cfg()
    });
    c.train_epoch(&data).unwrap();
    c.train_epoch(&data).unwrap();
    assert_ne!(a.params, c.params);
}

#[test]
fn resume_continues_exactly() {
    let data = clips(4);
    let mut straight = trainer(cfg());
    straight.train_epoch(&data).unwrap();
    let expected = straight.train_epoch(&data).unwrap();

    let mut first = trainer(cfg());
    first.train_epoch(&data).unwrap();
    let bytes = first.checkpoint().to_bytes();
    let ckpt = Checkpoint::from_bytes(&bytes).unwrap();
    let mut resumed = Trainer::resume(TfMamba::new(tiny_net()).unwrap(), cfg(), ckpt, None).unwrap();
    assert_eq!(resumed.epoch, 1);
    let got = resumed.train_epoch(&data).unwrap();
    assert!((got - expected).abs() <= 1e-9, "{got} vs {expected}");
    assert_eq!(resumed.params, straight.params);
}

#[test]
fn resume_rejects_a_different_network() {
    let first = trainer(cfg());
    let ckpt = first.checkpoint();
    let other = TfMamba::new(NetConfig {
        model_width: 12,
        ..tiny_net()
    })
    .unwrap();
    assert!(matches!(
        Trainer::resume(other, cfg(), ckpt, None),
        Err(TrainError::Config(_))
    ));
    let mut no_optim = first.checkpoint();
    no_optim.optim = None;
    let net = TfMamba::new(tiny_net()).unwrap();
    assert!(matches!(
        Trainer::resume(net, cfg(), no_optim, None),
        Err(TrainError::Checkpoint(_))
    ));
}

#[test]
fn patience_counts_epochs_since_the_best() {
    let mut t = trainer(TrainConfig { patience: 20, ..cfg() });
    t.best_epoch = 3;
    t.epoch = 22;
    assert!(!t.should_stop());
    t.epoch = 23;
    assert!(t.should_stop());
}

#[test]
fn fit_logs_every_epoch_and_keeps_the_best() {
    let data = clips(3);
    let mut t = trainer(TrainConfig { max_epochs: 3, ..cfg() });
    let mut seen = Vec::new();
    t.fit(&data[..2], &data[2..], |e, tr| seen.push((e.epoch, tr.epoch)))
        .unwrap();
    assert_eq!(seen, vec![(1, 1), (2, 2), (3, 3)]);
    assert_eq!(t.log.len(), 3);
    assert!(t.log.iter().all(|e| e.val_loss.is_some()));
    let best = t.log.iter().rev().find(|e| e.improved).unwrap();
    assert_eq!(best.epoch, t.best_epoch);
    assert_eq!(best.val_loss, Some(t.best_loss));
    assert_eq!(t.eval_loss(&data[2..]).unwrap() == t.best_loss, t.best_epoch == 3);
}

#[test]
fn fit_without_validation_monitors_training_loss() {
    let data = clips(2);
    let mut t = trainer(TrainConfig {
        max_epochs: 2,
        crop_frames: 0,
        ..cfg()
    });
    t.fit(&data, &[], |_, _| {}).unwrap();
    assert!(t.log.iter().all(|e| e.val_loss.is_none()));
    let min = t.log.iter().map(|e| e.train_loss).fold(f64::INFINITY, f64::min);
    assert_eq!(t.best_loss, min);
}

#[test]
fn configuration_and_data_errors() {
    let bad = Trainer::new(
        TfMamba::new(tiny_net()).unwrap(),
        TrainConfig { batch_size: 0, ..cfg() },
        OptimConfig::default(),
    );
    assert!(matches!(bad, Err(TrainError::Config(_))));
    let mut t = trainer(cfg());
    assert!(matches!(t.train_epoch(&[]), Err(TrainError::EmptySplit(_))));
    let mut silent = clips(1);
    silent[0].active.iter_mut().for_each(|a| *a = false);
    assert!(matches!(t.eval_loss(&silent), Err(TrainError::EmptySplit(_))));
}
