use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use prunekit_core::attribution::{score_samples, NeuronScoreTable};
use prunekit_core::harness::{evaluate, generate_synthetic, load_report, run_sweep, write_report, Dataset, Split};
use prunekit_core::net::{digest, Checkpoint, PruningMask};
use prunekit_core::pruning::{efficiency, export_pruned, magnitude_scores, random_scores, rank_and_mask};
use prunekit_core::sampling;
use prunekit_core::harness::ScoreMethod;
use prunekit_core::trainer::{metrics_csv, train as fit};

use crate::config::{ModelSection, RunConfig};
use crate::fail::{classify, CliError, Code, OrExit, Stage};
use crate::Flags;

fn config(flags: &Flags) -> Result<RunConfig, CliError> {
    let path = flags
        .config
        .as_ref()
        .ok_or_else(|| CliError::new(Code::Config, "--config is required for this command"))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = flags.seed {
        cfg.train.seed = seed;
        cfg.sampling.seed = seed;
        cfg.sweep.seeds = vec![seed];
    }
    if let Some(rate) = flags.rate {
        cfg.prune.rate = rate;
    }
    if let Some(m) = flags.method {
        cfg.attribution.method = m.into();
        cfg.sweep.methods = vec![m.into()];
    }
    if let Some(s) = flags.sampling {
        cfg.sampling.strategy = s.into();
        cfg.sweep.samplings = vec![s.into()];
    }
    if let Some(s) = flags.scope {
        cfg.prune.scope = s.into();
    }
    if let Some(out) = &flags.out {
        cfg.output.dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn dataset(cfg: &RunConfig) -> Result<Dataset, CliError> {
    let section = &cfg.dataset;
    let mut ds = match (&section.path, &section.synthetic) {
        (Some(path), _) if path.is_dir() => Dataset::load_csv_dir(path, section.split_seed),
        (Some(path), _) => Dataset::load_nds(path),
        (None, Some(synthetic)) => generate_synthetic(synthetic),
        (None, None) => unreachable!("validated config names a dataset"),
    }
    .at(Stage::Dataset)?;
    if section.normalize {
        let stats = ds.train_stats().at(Stage::Dataset)?;
        ds.standardize(&stats);
    }
    Ok(ds)
}

/// Loads a checkpoint and returns it with the digest of its bytes.
fn checkpoint(path: &Path) -> Result<(Checkpoint, String), CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::new(Code::Data, format!("{}: {e}", path.display())))?;
    let ck = Checkpoint::from_bytes(&bytes).map_err(|e| in_file(path, Stage::Artifact, e))?;
    Ok((ck, digest(&bytes)))
}

/// Classifies `err` and prefixes the message with the file it came from.
fn in_file(path: &Path, stage: Stage, err: prunekit_core::Error) -> CliError {
    let e = classify(stage, err);
    let prefix = format!("{}: ", path.display());
    if e.message.starts_with(&prefix) {
        e
    } else {
        CliError::new(e.code, prefix + &e.message)
    }
}

fn out_dir(cfg: &RunConfig) -> Result<&Path, CliError> {
    let dir = cfg.output.dir.as_path();
    fs::create_dir_all(dir).map_err(|e| CliError::new(Code::Runtime, format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn write(path: PathBuf, text: &str) -> Result<PathBuf, CliError> {
    fs::write(&path, text).map_err(|e| CliError::new(Code::Runtime, format!("{}: {e}", path.display())))?;
    Ok(path)
}

fn input_checkpoint(flags: &Flags, cfg: &RunConfig) -> PathBuf {
    flags.checkpoint.clone().unwrap_or_else(|| cfg.output.dir.join("model.nnck"))
}

pub fn train(flags: &Flags) -> Result<(), CliError> {
    let cfg = config(flags)?;
    let ds = dataset(&cfg)?;
    let mut net = ModelSection::build(cfg.model.as_ref(), ds.sample_shape(), ds.class_count())?;
    net.init_kaiming(cfg.train.seed);
    let outcome = fit(net, &ds, &cfg.train).at(Stage::Run)?;
    let mut net = outcome.network;
    net.metadata.insert("train_seed".into(), cfg.train.seed.to_string());
    net.metadata.insert("class_names".into(), ds.class_names().join(","));
    if cfg.dataset.normalize {
        let stats = serde_json::to_string(&ds.train_stats().at(Stage::Dataset)?).expect("stats serialize");
        net.metadata.insert("normalization".into(), stats);
    }
    if let Some(last) = outcome.metrics.last() {
        log::info!("epoch {} train loss {:.4}", last.epoch, last.train_loss);
    }
    let dir = out_dir(&cfg)?;
    let path = dir.join("model.nnck");
    let hex = Checkpoint::new(net).save(&path).at(Stage::Run)?;
    write(dir.join("metrics.csv"), &metrics_csv(&outcome.metrics))?;
    println!("digest={hex}");
    Ok(())
}

pub fn attribute(flags: &Flags) -> Result<(), CliError> {
    let cfg = config(flags)?;
    let ds = dataset(&cfg)?;
    let (ck, hex) = checkpoint(&input_checkpoint(flags, &cfg))?;
    let net = &ck.network;
    let method = cfg.attribution.method;
    let s = &cfg.sampling;
    let mut samples = None;
    let mut table = match method.attribution() {
        Some(m) => {
            let plan = sampling::select(s.strategy, net, &ds, s.samples_per_class, s.seed).at(Stage::Run)?;
            for class in plan.short_classes() {
                log::warn!(
                    "class {class} has {} training samples, fewer than samples_per_class = {}; using the whole class",
                    plan.selected[&class].len(),
                    s.samples_per_class
                );
            }
            let mut table = score_samples(net, &ds, &plan.ids(), m, &cfg.attribution.config()).at(Stage::Run)?;
            table.provenance.sampling = Some(s.strategy.name().into());
            table.provenance.seed = Some(s.seed);
            samples = Some(plan);
            table
        }
        None if method == ScoreMethod::Magnitude => magnitude_scores(net),
        None => random_scores(net, s.seed),
    };
    table.provenance.extra.insert("checkpoint_digest".into(), hex);
    let dir = out_dir(&cfg)?;
    if let Some(plan) = samples {
        write(dir.join("samples.json"), &plan.to_json())?;
    }
    let path = write(dir.join("scores.json"), &table.to_json())?;
    println!("scores={}", path.display());
    Ok(())
}

pub fn prune(flags: &Flags) -> Result<(), CliError> {
    let cfg = config(flags)?;
    let (ck, _) = checkpoint(&input_checkpoint(flags, &cfg))?;
    let scores_path = flags.scores.clone().unwrap_or_else(|| cfg.output.dir.join("scores.json"));
    let text = fs::read_to_string(&scores_path)
        .map_err(|e| CliError::new(Code::Data, format!("{}: {e}", scores_path.display())))?;
    let table = NeuronScoreTable::from_json(&text).map_err(|e| in_file(&scores_path, Stage::Artifact, e))?;
    table.check_covers(&ck.network).at(Stage::Run)?;
    let mask = rank_and_mask(&table, &cfg.prune.plan()).at(Stage::Run)?;
    let pruned = export_pruned(&ck.network, &mask).at(Stage::Run)?;
    let eff = efficiency(&ck.network, &mask);
    let dir = out_dir(&cfg)?;
    write(dir.join("mask.json"), &mask.to_json())?;
    let hex = pruned.save(dir.join("pruned.nnck")).at(Stage::Run)?;
    println!("digest={hex}");
    println!(
        "masked_units={} masked_fraction={:?} skipped_macs={}",
        eff.masked_units, eff.masked_unit_fraction, eff.skipped_macs
    );
    Ok(())
}

pub fn eval(flags: &Flags) -> Result<(), CliError> {
    let cfg = config(flags)?;
    let ds = dataset(&cfg)?;
    let (ck, _) = checkpoint(&input_checkpoint(flags, &cfg))?;
    let mask = match &flags.mask {
        Some(path) => {
            let text =
                fs::read_to_string(path).map_err(|e| CliError::new(Code::Data, format!("{}: {e}", path.display())))?;
            Some(PruningMask::from_json(&text).map_err(|e| in_file(path, Stage::Artifact, e))?)
        }
        None => ck.mask.clone(),
    };
    let result = evaluate(&ck.network, &ds, Split::Test, mask.as_ref()).at(Stage::Run)?;
    println!("accuracy={:?}", result.accuracy);
    Ok(())
}

pub fn sweep(flags: &Flags) -> Result<(), CliError> {
    let cfg = config(flags)?;
    let ds = dataset(&cfg)?;
    let (ck, hex) = checkpoint(&input_checkpoint(flags, &cfg))?;
    let report = run_sweep(&ck.network, &ds, &cfg.sweep_config(), Some(hex)).at(Stage::Run)?;
    let paths = write_report(&report, out_dir(&cfg)?).at(Stage::Run)?;
    println!("report={}", paths.json.display());
    let failed = report.failed().count();
    if failed > 0 {
        return Err(CliError::new(
            Code::Runtime,
            format!("{failed} of {} sweep records failed; partial report written", report.records.len()),
        ));
    }
    Ok(())
}

pub fn report(flags: &Flags) -> Result<(), CliError> {
    let input = match (&flags.report, &flags.out) {
        (Some(p), _) => p.clone(),
        (None, Some(dir)) => dir.join("sweep.json"),
        (None, None) => return Err(CliError::new(Code::Config, "report needs --report <sweep.json> or --out <dir>")),
    };
    let report = load_report(&input).map_err(|e| in_file(&input, Stage::Artifact, e))?;
    let dir = flags
        .out
        .clone()
        .or_else(|| input.parent().map(Path::to_path_buf))
        .unwrap_or_default();
    write_report(&report, &dir).at(Stage::Run)?;
    let mut text = format!("baseline_accuracy={:?}\n", report.baseline_accuracy);
    for row in &report.summary {
        let fmt = |x: Option<f64>| x.map_or("n/a".to_owned(), |v| format!("{v:.4}"));
        text += &format!(
            "{} {} rate={} mean_drop={} std_drop={} runs={} failed={}\n",
            row.method.name(),
            row.sampling.name(),
            row.rate,
            fmt(row.mean_drop),
            fmt(row.std_drop),
            row.runs,
            row.failed
        );
    }
    // a closed pipe (`| head`) is not an error for a summary listing
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
    Ok(())
}
