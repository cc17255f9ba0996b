//! Scratch pilot runs for threshold calibration. Not part of the test
//! suite.

use pmv_core::io::load_idx;
use pmv_core::losses::{AuxKind, LossConfig};
use pmv_core::models::{init_models, DistanceConfig, EncoderConfig};
use pmv_core::oracle::{compare_to_oracle, oracle_eer, synth_generate, GaussianSpec, NegativeForm};
use pmv_core::pairing::BatchPlan;
use pmv_core::rng::{streams, Rng};
use pmv_core::scoring::{compute_eer, generate_trials, score_trials, TrialMode};
use pmv_core::trainer::{train, train_bundle, TrainConfig};
use std::path::Path;
use std::time::Instant;

fn oracle_pilot() {
    let spec = GaussianSpec::symmetric_two_class(vec![1.0, 0.0], 1.0);
    let root = Rng::new(7);
    let train_ds = synth_generate(&spec, 600, &mut root.substream(streams::SYNTH)).unwrap();
    let val_ds = synth_generate(&spec, 200, &mut root.substream(streams::SYNTH + 100)).unwrap();

    let enc = EncoderConfig::identity(2);
    let dist = DistanceConfig {
        embedding_dim: 2,
        depth: 3,
        width: 256,
        dropout: 0.1,
        slope: 0.01,
    };
    let cfg = TrainConfig {
        lr: 0.02,
        momentum: 0.9,
        weight_decay: 1e-4,
        patience: 5,
        lr_factor: 0.1,
        grad_clip: None,
        max_iterations: 3000,
        plan: BatchPlan {
            classes_per_batch: 2,
            examples_per_class: 15,
        },
        loss: LossConfig {
            aux_kind: AuxKind::None,
            ..LossConfig::default()
        },
        seed: 7,
        eval_every: 200,
        val_trials: 2000,
        head_bias: false,
        freeze_encoder: true,
    };
    let mut bundle = init_models(&enc, &dist, 2, false, cfg.head_init(), cfg.seed).unwrap();
    bundle.set_identity_encoder().unwrap();

    let t0 = Instant::now();
    let result = train_bundle(bundle, &train_ds, &val_ds, &cfg).unwrap();
    println!(
        "oracle task: {} iters in {:.1}s, first L_pair {:.9}, best val EER {:?}",
        cfg.max_iterations,
        t0.elapsed().as_secs_f64(),
        result.log[0].loss_pair,
        result.best_val_eer
    );

    let t1 = Instant::now();
    let oe = oracle_eer(
        &spec,
        100_000,
        &mut Rng::new(99).substream(streams::MONTE_CARLO),
        NegativeForm::ConditionalDifferentClass,
    )
    .unwrap();
    println!("oracle_eer = {:.4} +- {:.4} ({:.1}s)", oe.eer, oe.std_err, t1.elapsed().as_secs_f64());

    let cmp = compare_to_oracle(
        &result.bundle,
        &spec,
        10_000,
        &mut Rng::new(123).substream(streams::MONTE_CARLO),
        NegativeForm::ConditionalDifferentClass,
    )
    .unwrap();
    println!(
        "compare: mae {:.4}, trained EER {:.4}, oracle EER (same pairs) {:.4}",
        cmp.mae, cmp.trained_eer, cmp.oracle_eer
    );
}

fn digits_pilot(iters: usize, aux: AuxKind) {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/digits");
    let train_full = load_idx(
        &dir.join("train-images-idx3-ubyte"),
        &dir.join("train-labels-idx1-ubyte"),
    )
    .unwrap();
    let test_ds = load_idx(
        &dir.join("test-images-idx3-ubyte"),
        &dir.join("test-labels-idx1-ubyte"),
    )
    .unwrap();
    let (train_ds, val_ds) = train_full
        .split_validation(0.1, &mut Rng::new(0).substream(streams::SPLIT))
        .unwrap();
    println!(
        "digits: train {} val {} test {}",
        train_ds.len(),
        val_ds.len(),
        test_ds.len()
    );

    let enc = EncoderConfig {
        input_dim: 64,
        hidden_dims: vec![256, 256],
        embedding_dim: 64,
        slope: 0.01,
    };
    let dist = DistanceConfig {
        embedding_dim: 64,
        depth: 3,
        width: 256,
        dropout: 0.1,
        slope: 0.01,
    };
    let cfg = TrainConfig {
        lr: 0.01,
        momentum: 0.9,
        weight_decay: 1e-3,
        patience: 5,
        lr_factor: 0.1,
        grad_clip: None,
        max_iterations: iters,
        plan: BatchPlan {
            classes_per_batch: 10,
            examples_per_class: 3,
        },
        loss: LossConfig {
            aux_kind: aux,
            ..LossConfig::default()
        },
        seed: 1,
        eval_every: 50,
        val_trials: 2000,
        head_bias: true,
        freeze_encoder: false,
    };
    let t0 = Instant::now();
    let result = train(&train_ds, &val_ds, &enc, &dist, &cfg).unwrap();
    println!(
        "digits {aux:?}: {} iters in {:.1}s, first L_pair {:.9}, best val EER {:?}",
        iters,
        t0.elapsed().as_secs_f64(),
        result.log[0].loss_pair,
        result.best_val_eer
    );
    for e in result.log.iter().filter(|e| e.val_eer.is_some()) {
        println!(
            "  step {:4} epoch {:2} L' {:.4} val_eer {:.4}",
            e.step,
            e.epoch,
            e.loss_total,
            e.val_eer.unwrap()
        );
    }

    // test trials
    let trials = generate_trials(
        &test_ds,
        TrialMode::Sampled {
            n: 10_000,
            target_fraction: 0.5,
        },
        &mut Rng::new(5).substream(streams::TRIALS),
    )
    .unwrap();
    let scored = score_trials(&result.bundle, &test_ds, &trials).unwrap();
    let targets: Vec<bool> = scored.iter().map(|s| s.trial.target).collect();
    for (name, scores) in [
        ("e2e", scored.iter().map(|s| s.score_e2e).collect::<Vec<_>>()),
        ("cos", scored.iter().map(|s| s.score_cos).collect::<Vec<_>>()),
        ("fused", scored.iter().map(|s| s.score_fused).collect::<Vec<_>>()),
    ] {
        let (eer, _) = compute_eer(&scores, &targets).unwrap();
        println!("  test {name} EER = {:.4}", eer);
    }
}

struct OpenSetSetup {
    train_ds: pmv_core::LabeledDataset,
    val_ds: pmv_core::LabeledDataset,
    unseen: pmv_core::LabeledDataset,
}

fn open_set_data() -> OpenSetSetup {
    open_set_data_opts(false)
}

fn open_set_data_opts(full: bool) -> OpenSetSetup {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/digits");
    let train_full = load_idx(
        &dir.join("train-images-idx3-ubyte"),
        &dir.join("train-labels-idx1-ubyte"),
    )
    .unwrap();
    let test_full = load_idx(
        &dir.join("test-images-idx3-ubyte"),
        &dir.join("test-labels-idx1-ubyte"),
    )
    .unwrap();
    let merge = |a: &pmv_core::LabeledDataset, b: &pmv_core::LabeledDataset, name: &str| {
        let mut feats = Vec::new();
        for i in 0..a.len() {
            feats.push(a.features.row(i).to_vec());
        }
        for i in 0..b.len() {
            feats.push(b.features.row(i).to_vec());
        }
        let mut labels = a.labels.clone();
        labels.extend_from_slice(&b.labels);
        pmv_core::LabeledDataset::new(pmv_core::Matrix::from_rows(&feats).unwrap(), labels, name)
            .unwrap()
    };
    let seen: Vec<usize> = (0..8).collect();
    let seen_ds = if full {
        merge(
            &train_full.filter_classes(&seen, "a"),
            &test_full.filter_classes(&seen, "b"),
            "seen",
        )
    } else {
        train_full.filter_classes(&seen, "seen")
    };
    let (train_ds, val_ds) = seen_ds
        .split_validation(0.1, &mut Rng::new(0).substream(streams::SPLIT))
        .unwrap();
    let unseen = merge(
        &train_full.filter_classes(&[8, 9], "unseen-a"),
        &test_full.filter_classes(&[8, 9], "unseen-b"),
        "unseen",
    );
    OpenSetSetup {
        train_ds,
        val_ds,
        unseen,
    }
}

struct OpenCase {
    name: &'static str,
    hidden: Vec<usize>,
    d: usize,
    slope: f64,
    dist_depth: usize,
    dist_width: usize,
    dropout: f64,
    loss: LossConfig,
    iters: usize,
    wd: f64,
    r: usize,
    eval_every: usize,
}

impl Default for OpenCase {
    fn default() -> Self {
        OpenCase {
            name: "case",
            hidden: vec![256, 256],
            d: 64,
            slope: 0.01,
            dist_depth: 3,
            dist_width: 256,
            dropout: 0.1,
            loss: LossConfig::default(),
            iters: 800,
            wd: 1e-3,
            r: 4,
            eval_every: 50,
        }
    }
}

fn open_case_eer(setup: &OpenSetSetup, case: &OpenCase, seed: u64) -> f64 {
    let enc = EncoderConfig {
        input_dim: 64,
        hidden_dims: case.hidden.clone(),
        embedding_dim: case.d,
        slope: case.slope,
    };
    let dist = DistanceConfig {
        embedding_dim: case.d,
        depth: case.dist_depth,
        width: case.dist_width,
        dropout: case.dropout,
        slope: case.slope,
    };
    let cfg = TrainConfig {
        max_iterations: case.iters,
        weight_decay: case.wd,
        plan: BatchPlan {
            classes_per_batch: 8,
            examples_per_class: case.r,
        },
        loss: case.loss,
        eval_every: case.eval_every,
        seed,
        ..TrainConfig::default()
    };
    let result = train(&setup.train_ds, &setup.val_ds, &enc, &dist, &cfg).unwrap();
    let trials = generate_trials(
        &setup.unseen,
        TrialMode::Sampled {
            n: 10_000,
            target_fraction: 0.5,
        },
        &mut Rng::new(6).substream(streams::TRIALS),
    )
    .unwrap();
    let scored = score_trials(&result.bundle, &setup.unseen, &trials).unwrap();
    let targets: Vec<bool> = scored.iter().map(|s| s.trial.target).collect();
    let scores: Vec<f64> = scored.iter().map(|s| s.score_e2e).collect();
    compute_eer(&scores, &targets).unwrap().0
}

fn open_set_sweep3() {
    let setup = open_set_data();
    let no_aux = LossConfig {
        aux_weight: 0.0,
        ..LossConfig::default()
    };
    let cases = vec![
        OpenCase { name: "d2 drop.4", d: 2, dropout: 0.4, loss: no_aux, ..Default::default() },
        OpenCase { name: "d2 drop.5", d: 2, dropout: 0.5, loss: no_aux, ..Default::default() },
        OpenCase { name: "d3 drop.3", d: 3, dropout: 0.3, loss: no_aux, ..Default::default() },
        OpenCase { name: "d3 drop.4", d: 3, dropout: 0.4, loss: no_aux, ..Default::default() },
        OpenCase { name: "d4 drop.4", d: 4, dropout: 0.4, loss: no_aux, ..Default::default() },
        OpenCase { name: "d2 drop.3 aux", d: 2, dropout: 0.3, ..Default::default() },
        OpenCase { name: "d2 drop.3 long", d: 2, dropout: 0.3, iters: 2000, loss: no_aux, ..Default::default() },
        OpenCase { name: "d2 drop.4 long", d: 2, dropout: 0.4, iters: 2000, loss: no_aux, ..Default::default() },
        OpenCase { name: "d8 drop.4", d: 8, dropout: 0.4, loss: no_aux, ..Default::default() },
    ];
    for case in &cases {
        let t0 = Instant::now();
        let eer = open_case_eer(&setup, case, 2);
        println!("{:16} -> unseen EER {:.4} ({:.0}s)", case.name, eer, t0.elapsed().as_secs_f64());
    }
    // Full 0-7 corpus (both files), converged runs, 5 seeds.
    let full = open_set_data_opts(true);
    println!("full-data train size: {}", full.train_ds.len());
    let variants = vec![
        OpenCase { name: "F d2 dp.3 conv", d: 2, dropout: 0.3, iters: 4000, eval_every: 100, loss: no_aux, ..Default::default() },
        OpenCase { name: "F d2 dp.3 aux conv", d: 2, dropout: 0.3, iters: 4000, eval_every: 100, ..Default::default() },
    ];
    for case in &variants {
        let mut eers = Vec::new();
        for seed in [0, 1, 2, 3, 4] {
            eers.push(open_case_eer(&full, case, seed));
        }
        let mean = eers.iter().sum::<f64>() / eers.len() as f64;
        let strs: Vec<String> = eers.iter().map(|e| format!("{e:.3}")).collect();
        println!("{:18} -> unseen EERs {} (mean {:.3})", case.name, strs.join(" "), mean);
    }
}

#[allow(clippy::too_many_arguments)]
fn open_set_eer2(
    setup: &OpenSetSetup,
    hidden: Vec<usize>,
    d: usize,
    dropout: f64,
    loss: LossConfig,
    iters: usize,
    wd: f64,
    eval_every: usize,
    seed: u64,
) -> f64 {
    let enc = EncoderConfig {
        input_dim: 64,
        hidden_dims: hidden,
        embedding_dim: d,
        slope: 0.01,
    };
    let dist = DistanceConfig {
        embedding_dim: d,
        depth: 3,
        width: 256,
        dropout,
        slope: 0.01,
    };
    let cfg = TrainConfig {
        max_iterations: iters,
        weight_decay: wd,
        plan: BatchPlan {
            classes_per_batch: 8,
            examples_per_class: 4,
        },
        loss,
        eval_every,
        seed,
        ..TrainConfig::default()
    };
    let result = train(&setup.train_ds, &setup.val_ds, &enc, &dist, &cfg).unwrap();
    let trials = generate_trials(
        &setup.unseen,
        TrialMode::Sampled {
            n: 10_000,
            target_fraction: 0.5,
        },
        &mut Rng::new(6).substream(streams::TRIALS),
    )
    .unwrap();
    let scored = score_trials(&result.bundle, &setup.unseen, &trials).unwrap();
    let targets: Vec<bool> = scored.iter().map(|s| s.trial.target).collect();
    let scores: Vec<f64> = scored.iter().map(|s| s.score_e2e).collect();
    compute_eer(&scores, &targets).unwrap().0
}

fn open_set_sweep2() {
    let setup = open_set_data();
    let std_loss = LossConfig::default();
    let no_aux = LossConfig {
        aux_weight: 0.0,
        ..LossConfig::default()
    };
    let smooth2 = LossConfig {
        label_smoothing: 0.2,
        ..LossConfig::default()
    };
    let cases: Vec<(&str, Vec<usize>, usize, f64, LossConfig, usize, f64, usize)> = vec![
        ("d2 aux", vec![256, 256], 2, 0.1, std_loss, 800, 1e-3, 50),
        ("d2 noaux", vec![256, 256], 2, 0.1, no_aux, 800, 1e-3, 50),
        ("d4 aux", vec![256, 256], 4, 0.1, std_loss, 800, 1e-3, 50),
        ("d4 noaux", vec![256, 256], 4, 0.1, no_aux, 800, 1e-3, 50),
        ("d8 aux", vec![256, 256], 8, 0.1, std_loss, 800, 1e-3, 50),
        ("d8 smooth.2", vec![256, 256], 8, 0.1, smooth2, 800, 1e-3, 50),
        ("d16 noaux", vec![256, 256], 16, 0.1, no_aux, 800, 1e-3, 50),
    ];
    for (name, hidden, d, dropout, loss, iters, wd, ee) in cases {
        let t0 = Instant::now();
        let eer = open_set_eer2(&setup, hidden, d, dropout, loss, iters, wd, ee, 2);
        println!("{name:14} -> unseen EER {:.4} ({:.0}s)", eer, t0.elapsed().as_secs_f64());
    }
}

fn open_set_eer(setup: &OpenSetSetup, d: usize, dropout: f64, loss: LossConfig, iters: usize, wd: f64, seed: u64) -> f64 {
    let enc = EncoderConfig {
        input_dim: 64,
        hidden_dims: vec![256, 256],
        embedding_dim: d,
        slope: 0.01,
    };
    let dist = DistanceConfig {
        embedding_dim: d,
        depth: 3,
        width: 256,
        dropout,
        slope: 0.01,
    };
    let cfg = TrainConfig {
        max_iterations: iters,
        weight_decay: wd,
        plan: BatchPlan {
            classes_per_batch: 8,
            examples_per_class: 4,
        },
        loss,
        eval_every: 50,
        seed,
        ..TrainConfig::default()
    };
    let result = train(&setup.train_ds, &setup.val_ds, &enc, &dist, &cfg).unwrap();
    let trials = generate_trials(
        &setup.unseen,
        TrialMode::Sampled {
            n: 10_000,
            target_fraction: 0.5,
        },
        &mut Rng::new(6).substream(streams::TRIALS),
    )
    .unwrap();
    let scored = score_trials(&result.bundle, &setup.unseen, &trials).unwrap();
    let targets: Vec<bool> = scored.iter().map(|s| s.trial.target).collect();
    let scores: Vec<f64> = scored.iter().map(|s| s.score_e2e).collect();
    compute_eer(&scores, &targets).unwrap().0
}

fn open_set_bounds() {
    let setup = open_set_data();
    let trials = generate_trials(
        &setup.unseen,
        TrialMode::Sampled {
            n: 10_000,
            target_fraction: 0.5,
        },
        &mut Rng::new(6).substream(streams::TRIALS),
    )
    .unwrap();
    let targets: Vec<bool> = trials.iter().map(|t| t.target).collect();

    // Raw-pixel cosine: no learning at all.
    let raw_cos: Vec<f64> = trials
        .iter()
        .map(|t| {
            let a = setup.unseen.features.row(t.enroll_ids[0]);
            let b = setup.unseen.features.row(t.test_id);
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
            let nb: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
            dot / (na * nb)
        })
        .collect();
    println!("raw-pixel cosine EER = {:.4}", compute_eer(&raw_cos, &targets).unwrap().0);

    // Transfer encoder (0-7) scored with cosine on unseen digits.
    let enc = EncoderConfig {
        input_dim: 64,
        hidden_dims: vec![256, 256],
        embedding_dim: 64,
        slope: 0.01,
    };
    let dist = DistanceConfig {
        embedding_dim: 64,
        depth: 3,
        width: 256,
        dropout: 0.1,
        slope: 0.01,
    };
    let cfg = TrainConfig {
        max_iterations: 800,
        plan: BatchPlan {
            classes_per_batch: 8,
            examples_per_class: 4,
        },
        eval_every: 50,
        seed: 2,
        ..TrainConfig::default()
    };
    let result = train(&setup.train_ds, &setup.val_ds, &enc, &dist, &cfg).unwrap();
    let scored = score_trials(&result.bundle, &setup.unseen, &trials).unwrap();
    let cos: Vec<f64> = scored.iter().map(|s| s.score_cos).collect();
    let e2e: Vec<f64> = scored.iter().map(|s| s.score_e2e).collect();
    println!("transfer encoder cosine EER = {:.4}", compute_eer(&cos, &targets).unwrap().0);
    println!("transfer encoder e2e   EER  = {:.4}", compute_eer(&e2e, &targets).unwrap().0);

    // Skyline: 8 and 9 seen in training (closed-set model, same trials).
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/digits");
    let train_full = load_idx(
        &dir.join("train-images-idx3-ubyte"),
        &dir.join("train-labels-idx1-ubyte"),
    )
    .unwrap();
    let (train_all, val_all) = train_full
        .split_validation(0.1, &mut Rng::new(0).substream(streams::SPLIT))
        .unwrap();
    let cfg_all = TrainConfig {
        max_iterations: 800,
        plan: BatchPlan {
            classes_per_batch: 10,
            examples_per_class: 3,
        },
        eval_every: 50,
        seed: 2,
        ..TrainConfig::default()
    };
    let skyline = train(&train_all, &val_all, &enc, &dist, &cfg_all).unwrap();
    let scored = score_trials(&skyline.bundle, &setup.unseen, &trials).unwrap();
    let e2e: Vec<f64> = scored.iter().map(|s| s.score_e2e).collect();
    println!("skyline (8,9 seen) e2e EER  = {:.4}", compute_eer(&e2e, &targets).unwrap().0);
}

fn open_set_sweep() {
    let setup = open_set_data();
    println!("train {} unseen {}", setup.train_ds.len(), setup.unseen.len());
    let std_loss = LossConfig::default();
    let am_loss = LossConfig {
        aux_kind: AuxKind::AdditiveMargin,
        ..LossConfig::default()
    };
    let cases: Vec<(&str, usize, f64, LossConfig, usize, f64)> = vec![
        ("base d64", 64, 0.1, std_loss, 800, 1e-3),
        ("short 300", 64, 0.1, std_loss, 300, 1e-3),
        ("d16", 16, 0.1, std_loss, 800, 1e-3),
        ("d8", 8, 0.1, std_loss, 800, 1e-3),
        ("am d64", 64, 0.1, am_loss, 800, 1e-3),
        ("am d16", 16, 0.1, am_loss, 800, 1e-3),
        ("drop.3 d16", 16, 0.3, std_loss, 800, 1e-3),
        ("wd.01 d16", 16, 0.1, std_loss, 800, 1e-2),
    ];
    for (name, d, dropout, loss, iters, wd) in cases {
        let t0 = Instant::now();
        let eer = open_set_eer(&setup, d, dropout, loss, iters, wd, 2);
        println!("{name:12} -> unseen EER {:.4} ({:.0}s)", eer, t0.elapsed().as_secs_f64());
    }
}

fn open_set_pilot(iters: usize) {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/digits");
    let train_full = load_idx(
        &dir.join("train-images-idx3-ubyte"),
        &dir.join("train-labels-idx1-ubyte"),
    )
    .unwrap();
    let test_full = load_idx(
        &dir.join("test-images-idx3-ubyte"),
        &dir.join("test-labels-idx1-ubyte"),
    )
    .unwrap();
    let seen: Vec<usize> = (0..8).collect();
    let train_seen = train_full.filter_classes(&seen, "seen");
    let (train_ds, val_ds) = train_seen
        .split_validation(0.1, &mut Rng::new(0).substream(streams::SPLIT))
        .unwrap();
    // Unseen digits from both files: never used in training.
    let unseen_a = train_full.filter_classes(&[8, 9], "unseen-a");
    let unseen_b = test_full.filter_classes(&[8, 9], "unseen-b");
    let mut feats = Vec::new();
    for i in 0..unseen_a.len() {
        feats.push(unseen_a.features.row(i).to_vec());
    }
    for i in 0..unseen_b.len() {
        feats.push(unseen_b.features.row(i).to_vec());
    }
    let mut labels = unseen_a.labels.clone();
    labels.extend_from_slice(&unseen_b.labels);
    let unseen = pmv_core::LabeledDataset::new(
        pmv_core::Matrix::from_rows(&feats).unwrap(),
        labels,
        "unseen",
    )
    .unwrap();
    println!("open-set: train {} unseen {}", train_ds.len(), unseen.len());

    let enc = EncoderConfig {
        input_dim: 64,
        hidden_dims: vec![256, 256],
        embedding_dim: 64,
        slope: 0.01,
    };
    let dist = DistanceConfig {
        embedding_dim: 64,
        depth: 3,
        width: 256,
        dropout: 0.1,
        slope: 0.01,
    };
    let cfg = TrainConfig {
        max_iterations: iters,
        plan: BatchPlan {
            classes_per_batch: 8,
            examples_per_class: 4,
        },
        eval_every: 50,
        seed: 2,
        ..TrainConfig::default()
    };
    let t0 = Instant::now();
    let result = train(&train_ds, &val_ds, &enc, &dist, &cfg).unwrap();
    let trials = generate_trials(
        &unseen,
        TrialMode::Sampled {
            n: 10_000,
            target_fraction: 0.5,
        },
        &mut Rng::new(6).substream(streams::TRIALS),
    )
    .unwrap();
    let scored = score_trials(&result.bundle, &unseen, &trials).unwrap();
    let targets: Vec<bool> = scored.iter().map(|s| s.trial.target).collect();
    let scores: Vec<f64> = scored.iter().map(|s| s.score_e2e).collect();
    let (eer, _) = compute_eer(&scores, &targets).unwrap();
    println!(
        "open-set unseen-digit E2E EER = {:.4} ({} iters, {:.1}s)",
        eer,
        iters,
        t0.elapsed().as_secs_f64()
    );
}

fn ablation_pilot(iters: usize) {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/digits");
    let train_full = load_idx(
        &dir.join("train-images-idx3-ubyte"),
        &dir.join("train-labels-idx1-ubyte"),
    )
    .unwrap();
    let (train_ds, val_ds) = train_full
        .split_validation(0.1, &mut Rng::new(0).substream(streams::SPLIT))
        .unwrap();
    let enc = EncoderConfig {
        input_dim: 64,
        hidden_dims: vec![256, 256],
        embedding_dim: 64,
        slope: 0.01,
    };
    let dist = DistanceConfig {
        embedding_dim: 64,
        depth: 3,
        width: 256,
        dropout: 0.1,
        slope: 0.01,
    };
    let mut results = Vec::new();
    for aux_weight in [1.0, 0.0] {
        let cfg = TrainConfig {
            max_iterations: iters,
            plan: BatchPlan {
                classes_per_batch: 10,
                examples_per_class: 3,
            },
            loss: LossConfig {
                aux_weight,
                ..LossConfig::default()
            },
            eval_every: 25,
            seed: 3,
            ..TrainConfig::default()
        };
        let result = train(&train_ds, &val_ds, &enc, &dist, &cfg).unwrap();
        results.push(result);
    }
    let final_ablation = results[1]
        .log
        .iter()
        .filter_map(|e| e.val_eer)
        .next_back()
        .unwrap();
    let aux_reaches = results[0]
        .log
        .iter()
        .filter(|e| e.val_eer.is_some_and(|v| v <= final_ablation))
        .map(|e| e.step)
        .next();
    println!(
        "ablation: final EER (aux off) {:.4}; aux run reaches it at step {:?} of {}",
        final_ablation, aux_reaches, iters
    );
    for (name, r) in [("aux", &results[0]), ("noaux", &results[1])] {
        let track: Vec<String> = r
            .log
            .iter()
            .filter_map(|e| e.val_eer.map(|v| format!("{}:{:.3}", e.step, v)))
            .collect();
        println!("  {name}: {}", track.join(" "));
    }
}

fn threshold_pilot() {
    // Criterion-4 shape: well-separated spec, identity encoder, trained
    // D evaluated as a fixed-threshold decision rule.
    let spec = GaussianSpec::symmetric_two_class(vec![3.0, 0.0], 1.0);
    let root = Rng::new(21);
    let train_ds = synth_generate(&spec, 600, &mut root.substream(streams::SYNTH)).unwrap();
    let val_ds = synth_generate(&spec, 200, &mut root.substream(streams::SYNTH + 1)).unwrap();
    let enc = EncoderConfig::identity(2);
    let dist = DistanceConfig {
        embedding_dim: 2,
        depth: 3,
        width: 256,
        dropout: 0.1,
        slope: 0.01,
    };
    let cfg = TrainConfig {
        lr: 0.01,
        grad_clip: Some(10.0),
        max_iterations: 2000,
        plan: BatchPlan {
            classes_per_batch: 2,
            examples_per_class: 15,
        },
        loss: LossConfig {
            aux_kind: AuxKind::None,
            ..LossConfig::default()
        },
        seed: 21,
        eval_every: 200,
        val_trials: 1000,
        head_bias: false,
        freeze_encoder: true,
        ..TrainConfig::default()
    };
    let mut bundle = init_models(&enc, &dist, 2, false, cfg.head_init(), cfg.seed).unwrap();
    bundle.set_identity_encoder().unwrap();
    let t0 = Instant::now();
    let result = train_bundle(bundle, &train_ds, &val_ds, &cfg).unwrap();
    println!("outcome {:?}, best val EER {:?}", result.outcome, result.best_val_eer);

    let sample = pmv_core::oracle::sample_pairs(
        &spec,
        5000,
        5000,
        &mut Rng::new(77).substream(streams::MONTE_CARLO),
    )
    .unwrap();
    let (probs, _) = pmv_core::models::distance_score(
        &result.bundle,
        &sample.first,
        &sample.second,
    )
    .unwrap();
    for tau in [0.1, 0.3, 0.5, 0.7, 0.9] {
        let correct = (0..probs.rows())
            .filter(|&r| (probs.get(r, 0) >= tau) == sample.targets[r])
            .count();
        println!(
            "  tau {tau}: accuracy {:.4}",
            correct as f64 / probs.rows() as f64
        );
    }
    println!("threshold pilot done in {:.1}s", t0.elapsed().as_secs_f64());
}

fn audit_pilot() {
    // Criterion-9 shape: audit of the criterion-6 digits bundle.
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/digits");
    let train_full = load_idx(
        &dir.join("train-images-idx3-ubyte"),
        &dir.join("train-labels-idx1-ubyte"),
    )
    .unwrap();
    let test_ds = load_idx(
        &dir.join("test-images-idx3-ubyte"),
        &dir.join("test-labels-idx1-ubyte"),
    )
    .unwrap();
    let (train_ds, val_ds) = train_full
        .split_validation(0.1, &mut Rng::new(0).substream(streams::SPLIT))
        .unwrap();
    let enc = EncoderConfig {
        input_dim: 64,
        hidden_dims: vec![256, 256],
        embedding_dim: 64,
        slope: 0.01,
    };
    let dist = DistanceConfig {
        embedding_dim: 64,
        depth: 3,
        width: 256,
        dropout: 0.1,
        slope: 0.01,
    };
    let cfg = TrainConfig {
        max_iterations: 1500,
        plan: BatchPlan {
            classes_per_batch: 10,
            examples_per_class: 3,
        },
        eval_every: 50,
        seed: 1,
        ..TrainConfig::default()
    };
    let t0 = Instant::now();
    let result = train(&train_ds, &val_ds, &enc, &dist, &cfg).unwrap();
    println!("criterion-6 train ({:.0}s), best val EER {:?}", t0.elapsed().as_secs_f64(), result.best_val_eer);

    let trials = generate_trials(
        &test_ds,
        TrialMode::Sampled { n: 10_000, target_fraction: 0.5 },
        &mut Rng::new(5).substream(streams::TRIALS),
    )
    .unwrap();
    let scored = score_trials(&result.bundle, &test_ds, &trials).unwrap();
    let targets: Vec<bool> = scored.iter().map(|s| s.trial.target).collect();
    let e2e: Vec<f64> = scored.iter().map(|s| s.score_e2e).collect();
    println!("  test e2e EER {:.4}", compute_eer(&e2e, &targets).unwrap().0);

    let report = pmv_core::audit::audit_bundle(
        &result.bundle,
        &test_ds.features,
        10_000,
        10_000,
        50,
        9,
    )
    .unwrap();
    println!(
        "  audit: self median {:.4}, sym median {:.4}, slack zero-frac {:.4}",
        report.self_distance.median,
        report.symmetry_gap.median,
        report.triangle_slack.histogram[0] as f64 / report.triangle_slack.n as f64
    );
}

fn holdout_pair_difficulty() {
    // Train on 8 classes, evaluate transfer on the held-out pair, for
    // several pairs. Same config everywhere (d=2, dropout .3, no aux).
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/digits");
    let train_full = load_idx(
        &dir.join("train-images-idx3-ubyte"),
        &dir.join("train-labels-idx1-ubyte"),
    )
    .unwrap();
    let test_full = load_idx(
        &dir.join("test-images-idx3-ubyte"),
        &dir.join("test-labels-idx1-ubyte"),
    )
    .unwrap();
    let merge = |a: &pmv_core::LabeledDataset, b: &pmv_core::LabeledDataset, name: &str| {
        let mut feats = Vec::new();
        for i in 0..a.len() {
            feats.push(a.features.row(i).to_vec());
        }
        for i in 0..b.len() {
            feats.push(b.features.row(i).to_vec());
        }
        let mut labels = a.labels.clone();
        labels.extend_from_slice(&b.labels);
        pmv_core::LabeledDataset::new(pmv_core::Matrix::from_rows(&feats).unwrap(), labels, name)
            .unwrap()
    };
    for held in [(8usize, 9usize), (0, 1), (4, 5), (2, 3)] {
        let seen: Vec<usize> = (0..10).filter(|&c| c != held.0 && c != held.1).collect();
        let seen_ds = merge(
            &train_full.filter_classes(&seen, "a"),
            &test_full.filter_classes(&seen, "b"),
            "seen",
        );
        let (train_ds, val_ds) = seen_ds
            .split_validation(0.1, &mut Rng::new(0).substream(streams::SPLIT))
            .unwrap();
        let unseen = merge(
            &train_full.filter_classes(&[held.0, held.1], "ua"),
            &test_full.filter_classes(&[held.0, held.1], "ub"),
            "unseen",
        );
        let setup = OpenSetSetup {
            train_ds,
            val_ds,
            unseen,
        };
        let case = OpenCase {
            name: "holdout",
            d: 2,
            dropout: 0.3,
            loss: LossConfig {
                aux_weight: 0.0,
                ..LossConfig::default()
            },
            ..Default::default()
        };
        let mut eers = Vec::new();
        for seed in [0, 2, 3] {
            eers.push(open_case_eer(&setup, &case, seed));
        }
        let mean = eers.iter().sum::<f64>() / eers.len() as f64;
        println!("held-out {:?}: unseen EER mean {:.3} ({:?})", held, mean, eers.iter().map(|e| (e * 1000.0).round() / 1000.0).collect::<Vec<_>>());
    }
}

fn main() {
    let which = std::env::args().nth(1).unwrap_or_else(|| "all".into());
    if which == "oracle" || which == "all" {
        oracle_pilot();
    }
    if which == "digits" || which == "all" {
        digits_pilot(600, AuxKind::Standard);
    }
    if which == "open" || which == "all" {
        open_set_pilot(800);
    }
    if which == "sweep" {
        open_set_sweep();
    }
    if which == "bounds" {
        open_set_bounds();
    }
    if which == "sweep2" {
        open_set_sweep2();
    }
    if which == "sweep3" {
        open_set_sweep3();
    }
    if which == "pairs" {
        holdout_pair_difficulty();
    }
    if which == "threshold" {
        threshold_pilot();
    }
    if which == "auditp" {
        audit_pilot();
    }
    if which == "ablation" || which == "all" {
        ablation_pilot(500);
    }
}
