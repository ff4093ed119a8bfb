//! The four batch commands: preprocess, train, canary-eval, budget.
//!
//! Commands are idempotent given identical inputs and seeds: all randomness
//! flows through substreams of the configured seed, and metrics files are
//! written with round-trip float formatting, so reruns are byte-identical.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde_json::json;

use sparsedp::accountant::{
    selection_step_epsilon, sigma_for_noise_budget, sparse_sgd_step_budget,
    sparse_sgd_total_budget, step_delta_for_total,
};
use sparsedp::embedding::{
    attach_negatives, build_vocabulary, context_pairs, read_samples, split_samples, token_stream,
    tokenize, write_samples, CbowObjective, EmbeddingTable, SplitSizes, Vocabulary,
    BUILTIN_STOP_WORDS,
};
use sparsedp::mechanisms::selection_cap;
use sparsedp::memorization::{
    evaluate, generate_canaries, generate_control_phrases, insert_canaries, read_canaries,
    write_canaries, write_report,
};
use sparsedp::trainer::{
    read_checkpoint, train, write_checkpoint, write_train_metrics, ClipSpec, RunHeader,
    SelectionStrategy, TrainConfig, TrainMode,
};
use sparsedp::{Error, NoiseSource, PrivacyBudget, Result};

use crate::config::ExperimentConfig;

// Randomness lanes of the preprocessing phase. The trainer reserves streams
// 1-3 internally; canary evaluation runs under a remixed seed of its own.
const CANARY_GEN_STREAM: u64 = 10;
const CANARY_POS_STREAM: u64 = 11;
const NEGATIVES_STREAM: u64 = 12;
const SPLIT_STREAM: u64 = 13;
const INIT_STREAM: u64 = 20;
const CONTROL_GEN_STREAM: u64 = 30;

fn eval_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

pub struct ArtifactPaths {
    pub vocab: PathBuf,
    pub train: PathBuf,
    pub val: PathBuf,
    pub test: PathBuf,
    pub canaries: PathBuf,
}

pub fn artifact_paths(cfg: &ExperimentConfig) -> ArtifactPaths {
    let dir = &cfg.artifacts_dir;
    ArtifactPaths {
        vocab: dir.join("vocab.txt"),
        train: dir.join("samples_train.txt"),
        val: dir.join("samples_val.txt"),
        test: dir.join("samples_test.txt"),
        canaries: dir.join("canaries.txt"),
    }
}

pub fn metrics_path(cfg: &ExperimentConfig) -> PathBuf {
    cfg.artifacts_dir.join(format!("metrics_{}.jsonl", cfg.mode.as_str()))
}

pub fn checkpoint_path(cfg: &ExperimentConfig) -> PathBuf {
    cfg.artifacts_dir.join(format!("checkpoint_{}.txt", cfg.mode.as_str()))
}

fn stop_word_set(cfg: &ExperimentConfig) -> Result<Option<HashSet<String>>> {
    match cfg.stop_words.as_str() {
        "none" => Ok(None),
        "builtin" => Ok(Some(BUILTIN_STOP_WORDS.iter().map(|s| s.to_string()).collect())),
        path => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Input(format!("cannot read stop-word list {path}: {e}")))?;
            Ok(Some(text.split_whitespace().map(|s| s.to_lowercase()).collect()))
        }
    }
}

/// Corpus → vocabulary, canary-augmented token stream, windowed pairs with
/// negatives, train/val/test splits. Writes all artifacts and prints a
/// one-line JSON summary.
pub fn cmd_preprocess(cfg: &ExperimentConfig) -> Result<()> {
    let corpus = std::fs::read_to_string(&cfg.corpus)
        .map_err(|e| Error::Input(format!("cannot read corpus {}: {e}", cfg.corpus.display())))?;
    let stops = stop_word_set(cfg)?;
    let tokens = tokenize(&corpus);
    if tokens.is_empty() {
        return Err(Error::Input(format!("corpus {} has no tokens", cfg.corpus.display())));
    }
    let vocab = build_vocabulary(&tokens, cfg.vocab_size, stops.as_ref())?;
    let mut stream = token_stream(&tokens, &vocab);

    std::fs::create_dir_all(&cfg.artifacts_dir)?;
    let paths = artifact_paths(cfg);

    let mut canary_count = 0usize;
    if cfg.canary_count > 0 {
        let mut gen_rng = NoiseSource::substream(cfg.seed, CANARY_GEN_STREAM);
        let canaries = generate_canaries(vocab.len(), cfg.canary_count, &mut gen_rng)?;
        let mut pos_rng = NoiseSource::substream(cfg.seed, CANARY_POS_STREAM);
        insert_canaries(&mut stream, &canaries, cfg.canary_copies, &mut pos_rng)?;
        write_canaries(&paths.canaries, &canaries)?;
        canary_count = canaries.len();
    }

    let pairs = context_pairs(&stream, cfg.window);
    let mut neg_rng = NoiseSource::substream(cfg.seed, NEGATIVES_STREAM);
    let samples = attach_negatives(&pairs, vocab.len(), cfg.negatives, &mut neg_rng)?;
    let sizes = SplitSizes { train: cfg.train_size, val: cfg.val_size, test: cfg.test_size };
    let mut split_rng = NoiseSource::substream(cfg.seed, SPLIT_STREAM);
    let (train_set, val_set, test_set) = split_samples(samples, sizes, &mut split_rng)?;

    // The resolved config rides along with the artifacts for provenance.
    std::fs::write(cfg.artifacts_dir.join("config_resolved.conf"), cfg.render())?;
    vocab.write_file(&paths.vocab)?;
    write_samples(&paths.train, &train_set)?;
    write_samples(&paths.val, &val_set)?;
    write_samples(&paths.test, &test_set)?;

    println!(
        "{}",
        json!({
            "vocab_size": vocab.len(),
            "pairs": pairs.len(),
            "train": train_set.len(),
            "val": val_set.len(),
            "test": test_set.len(),
            "canaries": canary_count,
            "canary_copies": if canary_count > 0 { Some(cfg.canary_copies) } else { None },
        })
    );
    Ok(())
}

/// Budgets derived from the experiment-level split for a run of `steps`
/// iterations at the config's batch size and training-set size.
pub struct DerivedBudgets {
    pub steps: u64,
    pub step_delta: f64,
    pub selection_eps_step: f64,
}

pub fn derive_budgets(cfg: &ExperimentConfig, samples: usize) -> Result<DerivedBudgets> {
    let steps_per_epoch = samples / cfg.batch_size;
    if steps_per_epoch == 0 {
        return Err(Error::Input(format!(
            "training set of {samples} is smaller than one batch of {}",
            cfg.batch_size
        )));
    }
    let steps = (cfg.epochs * steps_per_epoch) as u64;
    let step_delta =
        step_delta_for_total(cfg.delta_total(), cfg.batch_size as u64, samples as u64, steps)?;
    let selection_eps_step = match cfg.mode {
        TrainMode::SparseExp | TrainMode::SparseSv => selection_step_epsilon(
            cfg.selection_epsilon,
            step_delta,
            cfg.batch_size as u64,
            samples as u64,
            steps,
        )?,
        _ => 0.0,
    };
    Ok(DerivedBudgets { steps, step_delta, selection_eps_step })
}

fn train_config(cfg: &ExperimentConfig, vocab_size: usize, samples: usize) -> Result<TrainConfig> {
    let dim = vocab_size * cfg.embed_dim;
    let derived = if cfg.noise_multiplier > 0.0 && cfg.mode != TrainMode::NonPrivate {
        Some(derive_budgets(cfg, samples)?)
    } else {
        None
    };
    let step_delta = derived.as_ref().map(|d| d.step_delta).unwrap_or(0.5);
    let selection = match cfg.mode {
        TrainMode::SparseExp => SelectionStrategy::Exponential {
            budget: PrivacyBudget::new(
                derived.as_ref().map(|d| d.selection_eps_step).unwrap_or(0.0),
                step_delta,
            )?,
        },
        TrainMode::SparseSv => {
            let c1 = if cfg.sv_c1 > 0 { cfg.sv_c1 } else { selection_cap(dim, cfg.sparsity)? };
            SelectionStrategy::SparseVector {
                budget: PrivacyBudget::new(
                    derived.as_ref().map(|d| d.selection_eps_step).unwrap_or(0.0),
                    step_delta,
                )?,
                alpha: cfg.sv_alpha,
                c1,
            }
        }
        _ => SelectionStrategy::Uniform,
    };
    Ok(TrainConfig {
        batch_size: cfg.batch_size,
        learning_rate: cfg.learning_rate,
        epochs: cfg.epochs,
        noise_multiplier: cfg.noise_multiplier,
        sparsity: cfg.sparsity,
        clip: ClipSpec::new(cfg.clip_s0, cfg.clip_s1, cfg.clip_s2)?,
        selection,
        step_delta,
        seed: cfg.seed,
        adam: cfg.adam,
    })
}

/// Trains the configured mode on the preprocessed artifacts, writes the
/// checkpoint and per-epoch metrics, and prints a one-line JSON summary.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<()> {
    let paths = artifact_paths(cfg);
    let vocab = Vocabulary::read_file(&paths.vocab)?;
    let train_samples = read_samples(&paths.train)?;
    let val_samples = read_samples(&paths.val)?;

    let tc = train_config(cfg, vocab.len(), train_samples.len())?;
    let train_obj: CbowObjective<f64> =
        CbowObjective::new(vocab.len(), cfg.embed_dim, train_samples)?;
    let val_obj: CbowObjective<f64> = CbowObjective::new(vocab.len(), cfg.embed_dim, val_samples)?;

    let mut init_rng = NoiseSource::substream(cfg.seed, INIT_STREAM);
    let table = EmbeddingTable::<f64>::init_uniform(vocab.len(), cfg.embed_dim, &mut init_rng);

    let (params, report) = train(&train_obj, Some(&val_obj), table.into_flat(), &tc, cfg.mode)?;

    std::fs::create_dir_all(&cfg.artifacts_dir)?;
    let ckpt = checkpoint_path(cfg);
    write_checkpoint(&ckpt, vocab.len(), cfg.embed_dim, &params)?;
    let header = RunHeader {
        record: "header".to_string(),
        mode: cfg.mode.as_str().to_string(),
        seed: cfg.seed,
        steps: report.steps_run,
        eps_total: report.total_budget.map(|b| b.epsilon),
        delta_total: report.total_budget.map(|b| b.delta),
    };
    let metrics = metrics_path(cfg);
    write_train_metrics(&metrics, &header, &report.epochs)?;

    let last = report.epochs.last().expect("at least one epoch");
    println!(
        "{}",
        json!({
            "mode": cfg.mode.as_str(),
            "steps": report.steps_run,
            "final_train_loss": last.train_loss,
            "final_test_loss": last.test_loss,
            "eps_total": header.eps_total,
            "delta_total": header.delta_total,
            "checkpoint": ckpt.display().to_string(),
            "metrics": metrics.display().to_string(),
        })
    );
    Ok(())
}

/// Scores canaries (or out-of-train control phrases) against a checkpoint and
/// writes the per-canary report plus the uniformity-test summary.
pub fn cmd_canary_eval(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    copies: Option<usize>,
    control: bool,
) -> Result<()> {
    let paths = artifact_paths(cfg);
    let vocab = Vocabulary::read_file(&paths.vocab)?;
    let (rows, cols, data) = read_checkpoint(checkpoint)?;
    if rows != vocab.len() {
        return Err(Error::Input(format!(
            "checkpoint has {rows} rows but the vocabulary has {} words",
            vocab.len()
        )));
    }
    let table = EmbeddingTable::from_flat(rows, cols, data)?;
    let canaries = read_canaries(&paths.canaries)?;
    let phrases = if control {
        let mut rng = NoiseSource::substream(cfg.seed, CONTROL_GEN_STREAM);
        generate_control_phrases(vocab.len(), canaries.len(), &canaries, &mut rng)?
    } else {
        canaries
    };
    let n_c = copies.unwrap_or(cfg.canary_copies);
    let report = evaluate(
        &table,
        &phrases,
        n_c,
        cfg.rank_sample_size,
        cfg.histogram_bins,
        eval_seed(cfg.seed),
    )?;

    let stem = checkpoint
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("checkpoint");
    let suffix = if control { "_control" } else { "" };
    let out = cfg.artifacts_dir.join(format!("canary_report_{stem}{suffix}.jsonl"));
    write_report(&out, Some(&vocab), &report)?;

    println!(
        "{}",
        json!({
            "phrases": if control { "out_of_train_control" } else { "canaries" },
            "count": report.records.len(),
            "insertion_count": report.summary.insertion_count,
            "statistic": report.summary.statistic,
            "p_value": report.summary.p_value,
            "distance": report.summary.distance,
            "report": out.display().to_string(),
        })
    );
    Ok(())
}

/// Prints the accountant's derivation for the config without training:
/// per-step budgets, the whole-run total, and the noise multiplier that would
/// exactly spend the noise share of the split.
pub fn cmd_budget(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.mode == TrainMode::NonPrivate || cfg.noise_multiplier == 0.0 {
        println!(
            "{}",
            json!({
                "mode": cfg.mode.as_str(),
                "total": null,
                "note": "run adds no noise; no privacy guarantee to account",
            })
        );
        return Ok(());
    }
    let n = cfg.train_size;
    let derived = derive_budgets(cfg, n)?;
    let per_step = sparse_sgd_step_budget(
        derived.selection_eps_step,
        derived.step_delta,
        cfg.noise_multiplier,
        cfg.batch_size as u64,
        n as u64,
    )?;
    let total = sparse_sgd_total_budget(
        derived.selection_eps_step,
        derived.step_delta,
        cfg.noise_multiplier,
        cfg.batch_size as u64,
        n as u64,
        derived.steps,
    )?;
    let sigma_exact = sigma_for_noise_budget(
        cfg.noise_epsilon,
        derived.step_delta,
        cfg.batch_size as u64,
        n as u64,
        derived.steps,
    )?;
    println!(
        "{}",
        json!({
            "mode": cfg.mode.as_str(),
            "samples": n,
            "batch_size": cfg.batch_size,
            "steps": derived.steps,
            "step_delta": derived.step_delta,
            "selection_eps_step": derived.selection_eps_step,
            "noise_multiplier": cfg.noise_multiplier,
            "per_step": { "epsilon": per_step.epsilon, "delta": per_step.delta },
            "total": { "epsilon": total.epsilon, "delta": total.delta },
            "sigma_spending_noise_budget_exactly": sigma_exact,
        })
    );
    Ok(())
}
