//! Acceptance run. Each criterion prints one `PASS`/`FAIL` line with the
//! measured value and its tolerance; the process exits non-zero if any
//! criterion fails.
//!
//! Criterion 7 trains on 200 utterances and takes hours; it runs only with
//! `--ignored` or `--include-ignored`. Any other free argument filters the
//! criteria by name.

mod common;

use std::time::Instant;

use rand::Rng;
use tfbimamba::baseline::{srp_phat, SteeringGrid};
use tfbimamba::frontend::{stft, SPEED_OF_SOUND};
use tfbimamba::metrics::{score, score_utterances, Scored};
use tfbimamba::net::{decode_doa, NetConfig, TfMamba};
use tfbimamba::numcore::OptimConfig;
use tfbimamba::pipeline::{evaluate_network, predict_srp, prepare_example, Example};
use tfbimamba::sim::*;
use tfbimamba::train::{TrainConfig, Trainer};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn scan_equivalence() -> Outcome {
    let worst = common::oracles::scan_equivalence(200, &[1, 2, 7, 64, 257, 1000], 1);
    outcome(
        worst <= 1e-12,
        format!("worst rel err {worst:.2e} <= 1e-12 over 200 instances"),
    )
}

fn kernel_form() -> Outcome {
    let worst = common::oracles::kernel_form(100, 2);
    outcome(
        worst <= 1e-10,
        format!("worst rel err {worst:.2e} <= 1e-10 over 100 systems"),
    )
}

fn gradients() -> Outcome {
    let mut failed = Vec::new();
    let (mut checked, mut worst) = (0, 0.0f64);
    let cases = common::gradcases::PRIMITIVES
        .iter()
        .map(|(n, f)| (*n, f()))
        .chain(std::iter::once((
            "network",
            common::gradcases::tiny_network_end_to_end(),
        )));
    for (name, r) in cases {
        checked += r.checked;
        worst = worst.max(r.worst_rel);
        if !r.ok() {
            failed.push(name);
        }
    }
    outcome(
        failed.is_empty(),
        format!("{checked} elements, worst rel err {worst:.2e} <= 1e-4, failing cases {failed:?}"),
    )
}

fn srp_oracle() -> Outcome {
    let cfg = SimConfig {
        anechoic: true,
        noise: NoiseKind::None,
        moving: false,
        static_grid: true,
        ..SimConfig::default()
    };
    let grid = SteeringGrid::new(cfg.mic_spacing, SPEED_OF_SOUND);
    let mut worst = 100.0f64;
    let mut lines = Vec::new();
    for (i, theta) in [30.0, 45.0, 60.0, 90.0, 120.0, 135.0, 150.0].into_iter().enumerate() {
        let u = render_utterance(&cfg, 100 + i as u64, Some(theta), &Assets::default()).unwrap();
        let doa = decode_doa(&srp_phat(&stft(&u.mixture).unwrap(), &grid));
        let active: Vec<f64> = doa.iter().zip(&u.vad).filter(|(_, &v)| v).map(|(d, _)| *d).collect();
        let hit = active.iter().filter(|d| (*d - theta).abs() <= 5.0).count();
        let pct = 100.0 * hit as f64 / active.len() as f64;
        worst = worst.min(pct);
        lines.push(format!("{theta}°:{pct:.1}%"));
    }
    outcome(
        worst >= 95.0,
        format!("worst {worst:.1}% >= 95% within ±5° [{}]", lines.join(" ")),
    )
}

fn simulator_fidelity() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();

    let mut rt_worst = 0.0f64;
    for rt in [0.3, 0.5] {
        for dims in [[6.0, 5.0, 3.0], [4.0, 3.0, 2.5], [10.0, 8.0, 5.0], [9.0, 3.0, 4.0]] {
            let room = RoomSpec::new(
                dims,
                rt,
                AbsorptionModel::Matched,
                [dims[0] / 2.0, dims[1] / 2.0, 1.2],
                0.08,
            );
            let src = [dims[0] * 0.8, dims[1] * 0.7, 1.2];
            let h = ism_rir(&room, src, room.mics[0]).unwrap();
            let est = schroeder_rt60(&h, room.fs).unwrap_or(f64::INFINITY);
            rt_worst = rt_worst.max((est - rt).abs() / rt);
        }
    }
    ok &= rt_worst <= 0.15;
    parts.push(format!("rt60 worst rel dev {:.1}% <= 15%", 100.0 * rt_worst));

    let mut rng = common::rng(3);
    let n = 30 * 16_000;
    let mono = babble(&mut rng, n, 16_000.0, 6);
    let field = diffuse_noise(&mono, n, 0.08, SPEED_OF_SOUND, 16_000.0, &mut rng);
    let coh = welch_coherence(&field[0], &field[1]);
    let errs: Vec<f64> = coh
        .iter()
        .enumerate()
        .filter(|(k, _)| (200.0..=4000.0).contains(&welch_frequency(*k, 16_000.0)))
        .map(|(k, c)| (c.re - diffuse_coherence(welch_frequency(k, 16_000.0), 0.08, SPEED_OF_SOUND)).abs())
        .collect();
    let mae = errs.iter().sum::<f64>() / errs.len() as f64;
    ok &= mae <= 0.1;
    parts.push(format!("coherence MAE {mae:.4} <= 0.1"));

    let cfg = SimConfig {
        duration: 2.0,
        ..SimConfig::default()
    };
    let mut snr_worst = 0.0f64;
    for seed in 0..10 {
        let u = render_utterance(&cfg, 500 + seed, None, &Assets::default()).unwrap();
        let active = active_samples(&u.vad, u.clean[0].len());
        let got = measured_snr(&u.clean[0], &u.noise[0], &active);
        snr_worst = snr_worst.max((got - u.meta.snr_db.unwrap()).abs());
    }
    ok &= snr_worst <= 0.5;
    parts.push(format!("snr worst dev {snr_worst:.3} dB <= 0.5 dB"));
    outcome(ok, parts.join(", "))
}

fn examples(utts: &[Utterance], net: &NetConfig, tag: &str) -> Vec<Example> {
    utts.iter()
        .enumerate()
        .map(|(i, u)| prepare_example(&format!("{tag}-{i}"), &u.mixture, &u.azimuth, &u.vad, net).unwrap())
        .collect()
}

/// Least-squares slope of `y` against its index.
fn slope(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let mx = (n - 1.0) / 2.0;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, v) in y.iter().enumerate() {
        let dx = i as f64 - mx;
        sxy += dx * (v - my);
        sxx += dx * dx;
    }
    sxy / sxx
}

fn desk_trainer(max_epochs: usize, patience: usize) -> Trainer {
    let cfg = TrainConfig {
        batch_size: 4,
        max_epochs,
        patience,
        crop_frames: 32,
        ..TrainConfig::default()
    };
    Trainer::new(TfMamba::new(NetConfig::desk()).unwrap(), cfg, OptimConfig::default()).unwrap()
}

fn learning_check() -> Outcome {
    let sim = SimConfig {
        moving: false,
        static_grid: true,
        noise: NoiseKind::None,
        n_train: 16,
        ..SimConfig::default()
    };
    let net = NetConfig::desk();
    let train = examples(
        &render_split(&sim, 1, Split::Train, &Assets::default()).unwrap(),
        &net,
        "train",
    );
    let mut tr = desk_trainer(10, usize::MAX);
    let mut acc = 0.0;
    while tr.epoch < 300 {
        tr.config.max_epochs = tr.epoch + 10;
        tr.fit(&train, &[], |_, _| {}).unwrap();
        acc = evaluate_network(&tr.model, &tr.params, &train).unwrap().acc15;
        if acc >= 90.0 {
            break;
        }
    }
    let losses: Vec<f64> = tr.log.iter().map(|e| e.train_loss).collect();
    let worst = losses.windows(20).map(slope).fold(f64::NEG_INFINITY, f64::max);
    outcome(
        acc >= 90.0 && worst < 0.0,
        format!(
            "train ACC15 {acc:.1}% >= 90% after {} epochs, steepest 20-epoch loss slope {worst:.2e} < 0, loss {:.4} -> {:.4}",
            tr.epoch,
            losses[0],
            losses[losses.len() - 1]
        ),
    )
}

fn generalization() -> Outcome {
    let sim = SimConfig::default();
    let net = NetConfig::desk();
    let split = |s| render_split(&sim, 7, s, &Assets::default()).unwrap();
    let train = examples(&split(Split::Train), &net, "train");
    let val = examples(&split(Split::Val), &net, "val");
    let test_utts = split(Split::Test);
    let test = examples(&test_utts, &net, "test");
    let mut tr = desk_trainer(100, 20);
    tr.fit(&train, &val, |e, _| {
        eprintln!("  epoch {} train {:.5} val {:.5?}", e.epoch, e.train_loss, e.val_loss)
    })
    .unwrap();
    let model = evaluate_network(&tr.model, &tr.best_params, &test).unwrap();
    let items: Vec<Scored> = test_utts
        .iter()
        .zip(&test)
        .map(|(u, ex)| Scored {
            id: ex.id.clone(),
            pred: predict_srp(&u.mixture, sim.mic_spacing, net.pool_factor).unwrap().1,
            gt: ex.azimuth.clone(),
            mask: ex.active.clone(),
        })
        .collect();
    let srp = score_utterances(&items).unwrap();
    outcome(
        model.mae_deg < srp.mae_deg,
        format!(
            "network MAE {:.2}° < SRP-PHAT MAE {:.2}° (best epoch {})",
            model.mae_deg, srp.mae_deg, tr.best_epoch
        ),
    )
}

fn parameter_count() -> Outcome {
    let n = TfMamba::new(NetConfig::default()).unwrap().param_count();
    outcome(
        (1_600_000..=2_000_000).contains(&n),
        format!("{n} parameters in [1.6M, 2.0M]"),
    )
}

fn metrics_exactness() -> Outcome {
    let r = score(&[100.0, 80.0, 60.0], &[90.0; 3], &[true; 3]).unwrap();
    let hand = (r.mae_deg, r.acc10, r.acc15) == (50.0 / 3.0, 200.0 / 3.0, 200.0 / 3.0);
    let r = score(&[100.0, 80.0, 60.0], &[90.0; 3], &[true, true, false]).unwrap();
    let masked = (r.mae_deg, r.acc10, r.acc15) == (10.0, 100.0, 100.0);
    let r = score(&[45.0, 120.0], &[45.0, 120.0], &[true; 2]).unwrap();
    let exact = (r.mae_deg, r.acc10, r.acc15) == (0.0, 100.0, 100.0);
    let boundary = score(&[100.0], &[90.0], &[true]).unwrap().acc10 == 100.0;
    let mut rng = common::rng(9);
    let mut violations = 0;
    for _ in 0..10_000 {
        let n = rng.gen_range(1..20);
        let pred: Vec<f64> = (0..n).map(|_| rng.gen_range(0..=180) as f64).collect();
        let gt: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..=180.0)).collect();
        let mut mask: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.7)).collect();
        mask[0] = true;
        let r = score(&pred, &gt, &mask).unwrap();
        violations += usize::from(r.acc15 < r.acc10);
    }
    outcome(
        hand && masked && exact && boundary && violations == 0,
        format!(
            "hand example {hand}, masked {masked}, identity {exact}, inclusive boundary {boundary}, \
             ACC15 < ACC10 in {violations} of 10000 random cases"
        ),
    )
}

type Criterion = (usize, &'static str, bool, fn() -> Outcome);

const CRITERIA: &[Criterion] = &[
    (1, "scan_equivalence", false, scan_equivalence),
    (2, "kernel_form", false, kernel_form),
    (3, "gradient_certification", false, gradients),
    (4, "srp_phat_anechoic_oracle", false, srp_oracle),
    (5, "simulator_fidelity", false, simulator_fidelity),
    (6, "overfit_learning_check", false, learning_check),
    (7, "generalization_vs_srp_phat", true, generalization),
    (8, "default_parameter_count", false, parameter_count),
    (9, "metrics_exactness", false, metrics_exactness),
];

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let include_slow = args.iter().any(|a| a == "--ignored" || a == "--include-ignored");
    let filters: Vec<&String> = args.iter().filter(|a| !a.starts_with("--")).collect();
    let mut failed = 0;
    for &(n, name, slow, run) in CRITERIA {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        if slow && !include_slow {
            println!("criterion {n} {name}: SKIPPED (slow; pass --ignored to run)");
            continue;
        }
        let t0 = Instant::now();
        let o = run();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {n} {name}: {verdict} ({}) [{:.1?}]", o.detail, t0.elapsed());
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
