use std::fs;
use std::path::{Path, PathBuf};

use super::sweep::{SamplingLabel, SweepReport};
use crate::error::{Error, Result};

/// Files produced by [`write_report`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportPaths {
    pub csv: PathBuf,
    pub json: PathBuf,
    pub plots: Vec<PathBuf>,
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// One row per record; failed cells have empty accuracy and drop.
pub fn records_csv(report: &SweepReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["method", "sampling", "rate", "seed", "accuracy", "acc_drop", "masked_units"])?;
    for r in &report.records {
        w.write_record([
            r.method.name().to_owned(),
            r.sampling.name().to_owned(),
            r.rate.to_string(),
            r.seed.to_string(),
            fmt_opt(r.accuracy),
            fmt_opt(r.acc_drop),
            r.masked_units.to_string(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| Error::format("csv", e.to_string()))?).expect("csv is utf-8"))
}

fn plot_name(method: &str, sampling: SamplingLabel) -> String {
    let sampling = match sampling {
        SamplingLabel::NotApplicable => "na",
        s => s.name(),
    };
    format!("plot_{method}_{sampling}.csv")
}

/// Writes `sweep.csv`, `sweep.json` and one `plot_<method>_<sampling>.csv`
/// (rate vs mean accuracy) per cell into `dir`, creating it if needed.
pub fn write_report(report: &SweepReport, dir: impl AsRef<Path>) -> Result<ReportPaths> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |path: PathBuf, text: String| -> Result<PathBuf> {
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    };
    let csv = write(dir.join("sweep.csv"), records_csv(report)?)?;
    let json = write(dir.join("sweep.json"), report.to_json())?;

    let mut plots = Vec::new();
    for group in report
        .summary
        .chunk_by(|a, b| a.method == b.method && a.sampling == b.sampling)
    {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["rate", "mean_accuracy"])?;
        for row in group {
            w.write_record([row.rate.to_string(), fmt_opt(row.mean_accuracy)])?;
        }
        let text = String::from_utf8(w.into_inner().map_err(|e| Error::format("csv", e.to_string()))?)
            .expect("csv is utf-8");
        plots.push(write(dir.join(plot_name(group[0].method.name(), group[0].sampling)), text)?);
    }
    Ok(ReportPaths { csv, json, plots })
}

pub fn load_report(path: impl AsRef<Path>) -> Result<SweepReport> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    SweepReport::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::sweep::{ScoreMethod, SweepConfig, SweepProvenance, SweepRecord};

    fn report(records: Vec<SweepRecord>) -> SweepReport {
        SweepReport::new(
            0.9,
            records,
            SweepProvenance {
                config: SweepConfig::default(),
                checkpoint_digest: Some("00".into()),
                total_units: 10,
                total_macs: 100,
                extra: Default::default(),
            },
        )
    }

    fn record(method: ScoreMethod, rate: f64, seed: u64, accuracy: Option<f64>) -> SweepRecord {
        SweepRecord {
            method,
            sampling: SamplingLabel::NotApplicable,
            rate,
            seed,
            accuracy,
            acc_drop: accuracy.map(|a| 0.9 - a),
            masked_units: 3,
            masked_fraction: 0.3,
            skipped_macs: 30,
            error: accuracy.is_none().then(|| "boom".into()),
        }
    }

    #[test]
    fn empty_report_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let paths = write_report(&report(vec![]), dir.path()).unwrap();
        assert_eq!(
            fs::read_to_string(&paths.csv).unwrap(),
            "method,sampling,rate,seed,accuracy,acc_drop,masked_units\n"
        );
        assert!(paths.plots.is_empty());
    }

    #[test]
    fn one_record_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let r = report(vec![record(ScoreMethod::Random, 0.3, 1, Some(0.7))]);
        let paths = write_report(&r, dir.path()).unwrap();
        let text = fs::read_to_string(&paths.csv).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(load_report(&paths.json).unwrap(), r);
        assert_eq!(paths.plots, vec![dir.path().join("plot_random_na.csv")]);
        assert_eq!(fs::read_to_string(&paths.plots[0]).unwrap(), "rate,mean_accuracy\n0.3,0.7\n");
    }

    #[test]
    fn drop_column_matches_recomputation() {
        let dir = tempfile::tempdir().unwrap();
        let r = report(vec![
            record(ScoreMethod::Magnitude, 0.5, 0, Some(0.65)),
            record(ScoreMethod::Magnitude, 0.15, 0, Some(0.123456789)),
            record(ScoreMethod::Magnitude, 0.15, 1, None),
        ]);
        let paths = write_report(&r, dir.path()).unwrap();
        let mut rd = csv::Reader::from_path(&paths.csv).unwrap();
        let mut rows = 0;
        for row in rd.records() {
            let row = row.unwrap();
            rows += 1;
            if row[4].is_empty() {
                assert!(row[5].is_empty());
                continue;
            }
            let acc: f64 = row[4].parse().unwrap();
            let drop: f64 = row[5].parse().unwrap();
            assert_eq!(drop, r.baseline_accuracy - acc);
        }
        assert_eq!(rows, 3);
    }
}
