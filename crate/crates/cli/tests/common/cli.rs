//! Drives the `prunekit` binary for the pipeline and file-format criteria.

use std::fs;
use std::path::Path;
use std::process::Command;

use prunekit_core::harness::{generate_synthetic, load_report, SyntheticConfig};
use prunekit_core::net::{Checkpoint, PruningMask};
use prunekit_core::Dataset;

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn prunekit(dir: &Path, args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_prunekit"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs");
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

fn ok(dir: &Path, args: &[&str]) -> Result<String, String> {
    let r = prunekit(dir, args);
    if r.code == 0 {
        Ok(r.stdout)
    } else {
        Err(format!("`prunekit {}` exited {}: {}", args.join(" "), r.code, r.stderr.trim()))
    }
}

fn expect_code(dir: &Path, args: &[&str], code: i32) -> Result<(), String> {
    let r = prunekit(dir, args);
    if r.code == code {
        Ok(())
    } else {
        Err(format!("`prunekit {}` exited {} instead of {code}: {}", args.join(" "), r.code, r.stderr.trim()))
    }
}

/// Lines of stdout that do not mention output paths.
fn stable_lines(stdout: &str) -> Vec<String> {
    stdout
        .lines()
        .filter(|l| !l.starts_with("scores=") && !l.starts_with("report="))
        .map(str::to_owned)
        .collect()
}

pub const PIPELINE_CONFIG: &str = r#"{
  "dataset": {"synthetic": {"class_count": 3, "per_class": 60, "image_size": 10, "noise": 0.15, "seed": 5}},
  "model": {"kind": "small-cnn", "channels": [8, 8], "hidden": 24},
  "train": {"epochs": 6, "learning_rate": 0.005, "seed": 3},
  "attribution": {"method": "lrp"},
  "sampling": {"strategy": "clustering", "samples_per_class": 4, "seed": 11},
  "prune": {"rate": 0.3},
  "sweep": {"methods": ["dlb", "magnitude", "random"], "samplings": ["random"], "rates": [0, 0.5], "seeds": [0, 1]},
  "output": {"dir": "out"}
}"#;

const ARTIFACTS: [&str; 6] = ["model.nnck", "metrics.csv", "samples.json", "scores.json", "mask.json", "pruned.nnck"];

fn pipeline(dir: &Path, out: &str, threads: &str) -> Result<Vec<String>, String> {
    let mut lines = Vec::new();
    let common = ["--config", "run.json", "--out", out, "--threads", threads];
    for cmd in ["train", "attribute", "prune"] {
        let mut args = vec![cmd];
        args.extend(common);
        lines.extend(stable_lines(&ok(dir, &args)?));
    }
    let pruned = format!("{out}/pruned.nnck");
    let mut args = vec!["eval", "--checkpoint", pruned.as_str()];
    args.extend(common);
    lines.extend(stable_lines(&ok(dir, &args)?));
    Ok(lines)
}

pub fn pipeline_twice() -> Result<String, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    fs::write(dir.join("run.json"), PIPELINE_CONFIG).unwrap();
    let first = pipeline(dir, "a", "1")?;
    let second = pipeline(dir, "b", "3")?;
    if first != second {
        return Err(format!("stdout differs: {first:?} vs {second:?}"));
    }
    for name in ARTIFACTS {
        let (a, b) = (fs::read(dir.join("a").join(name)), fs::read(dir.join("b").join(name)));
        match (a, b) {
            (Ok(a), Ok(b)) if a == b => {}
            (Ok(_), Ok(_)) => return Err(format!("{name} differs between runs")),
            _ => return Err(format!("{name} missing")),
        }
    }
    let accuracy = first.iter().find(|l| l.starts_with("accuracy=")).ok_or("no accuracy line")?;
    Ok(format!("{} artifacts byte-identical across runs (1 vs 3 threads); {accuracy}", ARTIFACTS.len()))
}

/// Replaces the first occurrence of `from` in the file's header line.
fn corrupt_header(path: &Path, from: &str, to: &str) {
    let bytes = fs::read(path).unwrap();
    let end = bytes.iter().position(|&b| b == b'\n').unwrap_or(bytes.len());
    let header = String::from_utf8(bytes[..end].to_vec()).unwrap();
    assert!(header.contains(from), "header lacks {from}");
    let mut out = header.replacen(from, to, 1).into_bytes();
    out.extend_from_slice(&bytes[end..]);
    fs::write(path, out).unwrap();
}

pub fn round_trips() -> Result<String, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();

    // dataset: .nds written by the library, consumed by the binary
    let ds = generate_synthetic(&SyntheticConfig {
        class_count: 3,
        per_class: 30,
        image_size: 8,
        channels: 1,
        noise: 0.1,
        seed: 2,
    })
    .unwrap();
    let nds = dir.join("bench.nds");
    ds.save_nds(&nds).unwrap();
    let back = Dataset::load_nds(&nds).map_err(|e| e.to_string())?;
    if back != ds || back.to_nds_bytes() != fs::read(&nds).unwrap() {
        return Err("dataset round trip changed the data".into());
    }
    let config = PIPELINE_CONFIG.replacen(
        r#""synthetic": {"class_count": 3, "per_class": 60, "image_size": 10, "noise": 0.15, "seed": 5}"#,
        r#""path": "bench.nds""#,
        1,
    );
    fs::write(dir.join("run.json"), config).unwrap();
    let cfg = ["--config", "run.json"];
    for cmd in ["train", "attribute", "prune", "sweep"] {
        ok(dir, &[&[cmd][..], &cfg[..]].concat())?;
    }
    let out = dir.join("out");

    // checkpoint
    let bytes = fs::read(out.join("pruned.nnck")).unwrap();
    let ck = Checkpoint::from_bytes(&bytes).map_err(|e| e.to_string())?;
    let again = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
    if ck.to_bytes() != bytes || again != ck {
        return Err("checkpoint round trip changed bytes".into());
    }
    // mask: file and the copy recorded in the pruned checkpoint
    let mask_text = fs::read_to_string(out.join("mask.json")).unwrap();
    let mask = PruningMask::from_json(&mask_text).map_err(|e| e.to_string())?;
    if PruningMask::from_json(&mask.to_json()).ok().as_ref() != Some(&mask) || ck.mask.as_ref() != Some(&mask) {
        return Err(format!("mask round trip mismatch: {:?} vs {:?}", ck.mask, mask));
    }
    // report: JSON re-load, and `report` regenerates identical files
    let report_text = fs::read_to_string(out.join("sweep.json")).unwrap();
    let report = load_report(out.join("sweep.json")).map_err(|e| e.to_string())?;
    if load_report(out.join("sweep.json")).ok().map(|r| r.to_json()) != Some(report.to_json()) || report.records.is_empty() {
        return Err("report round trip mismatch".into());
    }
    let csv = fs::read(out.join("sweep.csv")).unwrap();
    fs::remove_file(out.join("sweep.csv")).unwrap();
    ok(dir, &["report", "--out", "out"])?;
    if fs::read(out.join("sweep.csv")).unwrap() != csv {
        return Err("report command did not reproduce sweep.csv".into());
    }

    // corrupted headers and missing inputs
    let eval_pruned = ["eval", "--config", "run.json", "--checkpoint", "bad.nnck"];
    fs::copy(out.join("pruned.nnck"), dir.join("bad.nnck")).unwrap();
    corrupt_header(&dir.join("bad.nnck"), "\"format_version\":1", "\"format_version\":7");
    expect_code(dir, &eval_pruned, 4)?;
    fs::copy(out.join("pruned.nnck"), dir.join("bad.nnck")).unwrap();
    corrupt_header(&dir.join("bad.nnck"), "{", "[");
    expect_code(dir, &eval_pruned, 4)?;

    fs::copy(&nds, dir.join("good.nds")).unwrap();
    corrupt_header(&nds, "\"format_version\":1", "\"format_version\":7");
    expect_code(dir, &["eval", "--config", "run.json"], 3)?;
    fs::copy(dir.join("good.nds"), &nds).unwrap();
    corrupt_header(&nds, "\"labels\"", "\"lables\"");
    expect_code(dir, &["eval", "--config", "run.json"], 3)?;
    fs::copy(dir.join("good.nds"), &nds).unwrap();

    fs::write(out.join("sweep.json"), report_text.replacen("\"format_version\": 1", "\"format_version\": 7", 1)).unwrap();
    expect_code(dir, &["report", "--out", "out"], 4)?;
    fs::write(out.join("mask.json"), "{\"units\": 3").unwrap();
    expect_code(dir, &["eval", "--config", "run.json", "--mask", "out/mask.json"], 4)?;

    // missing dataset: exit 3 and nothing written
    let missing = PIPELINE_CONFIG
        .replacen(
            r#""synthetic": {"class_count": 3, "per_class": 60, "image_size": 10, "noise": 0.15, "seed": 5}"#,
            r#""path": "nowhere.nds""#,
            1,
        )
        .replacen("\"dir\": \"out\"", "\"dir\": \"fresh\"", 1);
    fs::write(dir.join("missing.json"), missing).unwrap();
    expect_code(dir, &["train", "--config", "missing.json"], 3)?;
    if dir.join("fresh").exists() {
        return Err("failed train created its output directory".into());
    }
    Ok("dataset, checkpoint, mask and report reload equal; corrupted headers exit 4 (artifacts) / 3 (dataset)".into())
}
