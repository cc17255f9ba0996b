//! Subcommand implementations.

use std::path::Path;

use pmv_core::audit::audit_bundle;
use pmv_core::gradcheck::{grad_check, ParamAccess};
use pmv_core::io::{
    load_checkpoint, load_trials, save_checkpoint, save_csv_dataset, write_audit_report,
    write_embeddings, write_roc_reports, write_scores, write_train_log, write_trials, RunConfig,
};
use pmv_core::losses::{combined_loss, AuxKind, LossConfig};
use pmv_core::models::{encode, init_models, DistanceConfig, EncoderConfig, Mode};
use pmv_core::oracle::{compare_to_oracle, oracle_eer, synth_generate};
use pmv_core::pairing::enumerate_pairs;
use pmv_core::rng::{streams, Rng};
use pmv_core::scoring::{generate_trials, roc_report, score_trials, TrialMode};
use pmv_core::trainer::{train_bundle, TrainOutcome};
use pmv_core::{Error, Matrix, Result};

use crate::data::load_dataset;

pub fn train(config_path: &Path, data: &str, out: &Path) -> Result<()> {
    let cfg = RunConfig::load(config_path)?;
    let dataset = load_dataset(data)?;
    let (train_ds, val_ds) =
        dataset.split_validation(cfg.val_fraction, &mut Rng::new(cfg.seed).substream(streams::SPLIT))?;
    log::info!(
        "training on {} examples, validating on {}",
        train_ds.len(),
        val_ds.len()
    );

    let enc_cfg = cfg.encoder_config(train_ds.input_dim())?;
    let dist_cfg = cfg.distance_config();
    let train_cfg = cfg.train_config();
    train_cfg.validate()?;
    let num_classes = train_ds.num_classes().max(1);
    let mut bundle = init_models(
        &enc_cfg,
        &dist_cfg,
        num_classes,
        train_cfg.head_bias,
        train_cfg.head_init(),
        train_cfg.seed,
    )?;
    if cfg.identity_encoder {
        bundle.set_identity_encoder()?;
    }
    let result = train_bundle(bundle, &train_ds, &val_ds, &train_cfg)?;

    std::fs::create_dir_all(out)?;
    save_checkpoint(&result.bundle, &out.join("checkpoint.pmv"))?;
    write_train_log(&result.log, &out.join("train_log.csv"))?;

    match result.outcome {
        TrainOutcome::Completed => {
            match result.best_val_eer {
                Some(eer) => println!(
                    "trained {} steps, best validation EER {:.4}",
                    result.log.len(),
                    eer
                ),
                None => println!("trained {} steps (no validation)", result.log.len()),
            }
            println!("checkpoint: {}", out.join("checkpoint.pmv").display());
            Ok(())
        }
        TrainOutcome::Diverged { step } => Err(Error::Numeric(format!(
            "training diverged at step {step}; last good checkpoint saved to {}",
            out.join("checkpoint.pmv").display()
        ))),
    }
}

pub fn eval(
    checkpoint: &Path,
    trials_path: &Path,
    data: &str,
    scores_out: &Path,
    report_out: &Path,
) -> Result<()> {
    let bundle = load_checkpoint(checkpoint)?;
    let dataset = load_dataset(data)?;
    let trials = load_trials(trials_path)?;
    let scored = score_trials(&bundle, &dataset, &trials)?;
    write_scores(&scored, scores_out)?;

    let targets: Vec<bool> = scored.iter().map(|s| s.trial.target).collect();
    let methods: [(&str, Vec<f64>); 3] = [
        ("e2e", scored.iter().map(|s| s.score_e2e).collect()),
        ("cosine", scored.iter().map(|s| s.score_cos).collect()),
        ("fused", scored.iter().map(|s| s.score_fused).collect()),
    ];
    let mut reports = Vec::new();
    for (name, scores) in &methods {
        let report = roc_report(scores, &targets)?;
        println!(
            "{name}: EER {:.4} (threshold {:.4}), 1-AUC {:.6}",
            report.eer, report.eer_threshold, report.one_minus_auc
        );
        reports.push((*name, report));
    }
    let refs: Vec<(&str, &pmv_core::scoring::RocReport)> =
        reports.iter().map(|(n, r)| (*n, r)).collect();
    write_roc_reports(&refs, report_out)?;
    println!("scores: {}", scores_out.display());
    println!("report: {}", report_out.display());
    Ok(())
}

pub fn audit(checkpoint: &Path, data: &str, out: &Path, config: Option<&Path>) -> Result<()> {
    let cfg = match config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let bundle = load_checkpoint(checkpoint)?;
    let dataset = load_dataset(data)?;
    let report = audit_bundle(
        &bundle,
        &dataset.features,
        cfg.audit_pairs,
        cfg.audit_triplets,
        cfg.audit_bins,
        cfg.seed,
    )?;
    write_audit_report(&report, out)?;
    println!(
        "self-distance: median {:.4} mean {:.4} (n {})",
        report.self_distance.median, report.self_distance.mean, report.self_distance.n
    );
    println!(
        "symmetry gap:  median {:.4} mean {:.4} (n {})",
        report.symmetry_gap.median, report.symmetry_gap.mean, report.symmetry_gap.n
    );
    println!(
        "triangle slack: median {:.4} mean {:.4} zero-fraction {:.4} (n {})",
        report.triangle_slack.median,
        report.triangle_slack.mean,
        report.triangle_slack.zeros as f64 / report.triangle_slack.n.max(1) as f64,
        report.triangle_slack.n
    );
    println!("histograms: {}", out.display());
    Ok(())
}

pub fn synth(spec: &Path, out: &Path) -> Result<()> {
    let cfg = RunConfig::load(spec)?;
    let gaussian = cfg.gaussian_spec()?;
    let dataset = synth_generate(
        &gaussian,
        cfg.oracle_n_per_class,
        &mut Rng::new(cfg.seed).substream(streams::SYNTH),
    )?;
    save_csv_dataset(&dataset, out)?;
    println!(
        "wrote {} examples ({} classes, dim {}) to {}",
        dataset.len(),
        gaussian.means.len(),
        gaussian.dims,
        out.display()
    );
    Ok(())
}

pub fn trials(data: &str, mode: &str, out: &Path, seed: u64) -> Result<()> {
    let dataset = load_dataset(data)?;
    let mode = parse_trial_mode(mode)?;
    let trials = generate_trials(&dataset, mode, &mut Rng::new(seed).substream(streams::TRIALS))?;
    write_trials(&trials, out)?;
    let targets = trials.iter().filter(|t| t.target).count();
    println!(
        "wrote {} trials ({} target, {} non-target) to {}",
        trials.len(),
        targets,
        trials.len() - targets,
        out.display()
    );
    Ok(())
}

fn parse_trial_mode(mode: &str) -> Result<TrialMode> {
    if mode == "all_pairs" {
        return Ok(TrialMode::AllPairs);
    }
    if let Some(rest) = mode.strip_prefix("sampled:") {
        let (n, frac) = rest.split_once(':').ok_or_else(|| {
            Error::Config(format!("sampled mode needs 'sampled:<n>:<fraction>', got {mode:?}"))
        })?;
        let n = n
            .parse()
            .map_err(|_| Error::Config(format!("bad trial count {n:?}")))?;
        let target_fraction = frac
            .parse()
            .map_err(|_| Error::Config(format!("bad target fraction {frac:?}")))?;
        return Ok(TrialMode::Sampled { n, target_fraction });
    }
    Err(Error::Config(format!(
        "unknown trial mode {mode:?}: use 'all_pairs' or 'sampled:<n>:<fraction>'"
    )))
}

pub fn oracle(spec: &Path, checkpoint: Option<&Path>, out: &Path) -> Result<()> {
    let cfg = RunConfig::load(spec)?;
    let gaussian = cfg.gaussian_spec()?;
    let mut rows: Vec<(String, f64)> = Vec::new();

    let mc = oracle_eer(
        &gaussian,
        cfg.oracle_n_mc,
        &mut Rng::new(cfg.seed).substream(streams::MONTE_CARLO),
        cfg.oracle_negative_form,
    )?;
    println!(
        "oracle EER {:.4} +- {:.4} ({} pairs/side)",
        mc.eer, mc.std_err, mc.n_mc
    );
    rows.push(("oracle_eer".into(), mc.eer));
    rows.push(("oracle_eer_std_err".into(), mc.std_err));

    if let Some(path) = checkpoint {
        let bundle = load_checkpoint(path)?;
        let cmp = compare_to_oracle(
            &bundle,
            &gaussian,
            cfg.oracle_pairs,
            &mut Rng::new(cfg.seed).substream(streams::MONTE_CARLO + 1),
            cfg.oracle_negative_form,
        )?;
        println!(
            "model vs optimum: mae {:.4}, trained EER {:.4}, oracle EER {:.4} (same {} pairs)",
            cmp.mae, cmp.trained_eer, cmp.oracle_eer, cmp.n_pairs
        );
        rows.push(("mae_vs_d_star".into(), cmp.mae));
        rows.push(("trained_eer".into(), cmp.trained_eer));
        rows.push(("paired_oracle_eer".into(), cmp.oracle_eer));
    }

    let mut text = String::from("metric,value\n");
    for (k, v) in &rows {
        text.push_str(&format!("{k},{v}\n"));
    }
    std::fs::create_dir_all(out.parent().unwrap_or(Path::new(".")))?;
    std::fs::write(out, text)?;
    println!("report: {}", out.display());
    Ok(())
}

pub fn embed(checkpoint: &Path, data: &str, out: &Path) -> Result<()> {
    let bundle = load_checkpoint(checkpoint)?;
    let dataset = load_dataset(data)?;
    let z = encode(&bundle, &dataset.features)?;
    write_embeddings(&z, &dataset.labels, out)?;
    println!(
        "wrote {} embeddings (dim {}) to {}",
        z.rows(),
        z.cols(),
        out.display()
    );
    Ok(())
}

/// Full-network gradient checks: encoder ∘ distance ∘ combined loss, for
/// both auxiliary variants, with an active (frozen-per-evaluation)
/// dropout mask.
pub fn gradcheck(seed: u64) -> Result<()> {
    let mut worst: f64 = 0.0;
    for (label, aux, dropout) in [
        ("standard aux", AuxKind::Standard, 0.0),
        ("additive-margin aux", AuxKind::AdditiveMargin, 0.0),
        ("standard aux + dropout", AuxKind::Standard, 0.35),
    ] {
        let err = gradcheck_case(aux, dropout, seed)?;
        println!("{label:24} max relative error {err:.3e}");
        worst = worst.max(err);
    }
    println!("worst case: {worst:.3e}");
    if worst >= 1e-4 {
        return Err(Error::Numeric(format!(
            "gradient check failed: max relative error {worst:.3e} >= 1e-4"
        )));
    }
    Ok(())
}

fn gradcheck_case(aux: AuxKind, dropout: f64, seed: u64) -> Result<f64> {
    let enc = EncoderConfig {
        input_dim: 6,
        hidden_dims: vec![5],
        embedding_dim: 4,
        slope: 0.01,
    };
    let dist = DistanceConfig {
        embedding_dim: 4,
        depth: 2,
        width: 6,
        dropout,
        slope: 0.01,
    };
    let head_init = if aux == AuxKind::AdditiveMargin {
        pmv_core::HeadInit::HeUniform
    } else {
        pmv_core::HeadInit::Zeros
    };
    let mut bundle = init_models(&enc, &dist, 2, true, head_init, seed)?;
    let mut noise = Rng::new(seed ^ 0xF00D);
    for t in 0..bundle.num_tensors() {
        for v in bundle.tensor_mut(t).value.data_mut() {
            *v += 0.2 * noise.normal();
        }
    }

    let mut data_rng = Rng::new(seed ^ 0xDA7A);
    let x = Matrix::from_vec(6, 6, (0..36).map(|_| data_rng.normal()).collect())?;
    let labels = vec![0usize, 0, 0, 1, 1, 1];
    let pairs = enumerate_pairs(&labels)?;
    let cfg = LossConfig {
        aux_kind: aux,
        label_smoothing: 0.1,
        am_scale: 4.0,
        am_margin: 0.2,
        aux_weight: 1.0,
    };
    let report = grad_check(
        &mut bundle,
        |b, with_grad| {
            let mut rng = Rng::new(seed ^ 0x5EED);
            let mut mode = if dropout > 0.0 {
                Mode::Train { dropout: &mut rng }
            } else {
                Mode::Eval
            };
            combined_loss(b, &x, &labels, &pairs, &cfg, &mut mode, with_grad).map(|c| c.total)
        },
        1e-5,
    )?;
    Ok(report.max_rel_err)
}
