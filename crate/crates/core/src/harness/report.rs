//! Experiment result tables, their CSV form and per-noise plots.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::audio::write_text;
use crate::error::{ensure, Error, Result};
use crate::features::parse_f64;

use super::plot::{line_chart, Series};

pub const REPORT_HEADER: &str = "system,noise,snr_db,mean_ecm,n";

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRecord {
    pub system: String,
    pub noise: String,
    pub snr_db: f64,
    pub mean_ecm: f64,
    pub n: usize,
}

/// Run provenance kept out of the CSV so that reports from identical runs compare byte-for-byte.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReportMetadata {
    pub config_hash: String,
    pub started: String,
    pub finished: String,
    pub notes: Vec<(String, String)>,
}

impl ReportMetadata {
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "config_hash = {}\nstarted = {}\nfinished = {}\n",
            self.config_hash, self.started, self.finished
        );
        for (k, v) in &self.notes {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExperimentReport {
    pub records: Vec<ReportRecord>,
    pub metadata: ReportMetadata,
}

impl ExperimentReport {
    pub fn get(&self, system: &str, noise: &str, snr_db: f64) -> Option<&ReportRecord> {
        self.records.iter().find(|r| r.system == system && r.noise == noise && r.snr_db == snr_db)
    }

    /// Distinct values in first-seen order.
    fn distinct<'a>(&'a self, f: impl Fn(&'a ReportRecord) -> &'a str) -> Vec<&'a str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.records {
            let v = f(r);
            if !out.contains(&v) {
                out.push(v);
            }
        }
        out
    }

    pub fn systems(&self) -> Vec<&str> {
        self.distinct(|r| &r.system)
    }

    pub fn noises(&self) -> Vec<&str> {
        self.distinct(|r| &r.noise)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{REPORT_HEADER}\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{},{:?},{:?},{}", r.system, r.noise, r.snr_db, r.mean_ecm, r.n);
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        ensure!(
            lines.next().map(str::trim) == Some(REPORT_HEADER),
            Error::Parse(format!("report must start with '{REPORT_HEADER}'"))
        );
        let mut records = Vec::new();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            ensure!(f.len() == 5, Error::Parse(format!("report line {}: expected 5 fields", i + 2)));
            let n = f[4].trim().parse().map_err(|_| Error::Parse(format!("report line {}: bad count", i + 2)))?;
            records.push(ReportRecord {
                system: f[0].to_string(),
                noise: f[1].to_string(),
                snr_db: parse_f64(f[2])?,
                mean_ecm: parse_f64(f[3])?,
                n,
            });
        }
        Ok(Self { records, metadata: ReportMetadata::default() })
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text).map_err(|e| e.context(path.display().to_string()))
    }
}

/// Write `report.csv` and one `ecm_<noise>.png` per noise into `out_dir`. Returns the written paths.
pub fn render_report(report: &ExperimentReport, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    ensure!(!report.records.is_empty(), Error::InvalidArgument("report has no records".into()));
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv = dir.join("report.csv");
    write_text(&csv, &report.to_csv())?;
    let mut written = vec![csv];
    for noise in report.noises() {
        let series: Vec<Series> = report
            .systems()
            .into_iter()
            .map(|system| Series {
                label: system.to_string(),
                points: report
                    .records
                    .iter()
                    .filter(|r| r.system == system && r.noise == noise)
                    .map(|r| (r.snr_db, r.mean_ecm))
                    .collect(),
            })
            .collect();
        let img = line_chart(&format!("mean ECM: {noise}"), "SNR (dB)", "ECM", &series);
        let path = dir.join(format!("ecm_{}.png", sanitize(noise)));
        img.save(&path).map_err(|e| Error::from(e).context(path.display().to_string()))?;
        written.push(path);
    }
    Ok(written)
}

fn sanitize(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(system: &str, noise: &str, snr_db: f64, mean_ecm: f64) -> ReportRecord {
        ReportRecord { system: system.into(), noise: noise.into(), snr_db, mean_ecm, n: 3 }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let report = ExperimentReport {
            records: vec![record("noisy", "car-a", -5.0, 0.1 + 0.2), record("logmmse", "car-a", 5.0, 1.0 / 3.0)],
            metadata: ReportMetadata::default(),
        };
        let csv = report.to_csv();
        assert_eq!(csv.lines().count(), 3);
        assert_eq!(ExperimentReport::from_csv(&csv).unwrap(), report);
        assert!(ExperimentReport::from_csv("a,b\n").is_err());
        assert!(ExperimentReport::from_csv(&format!("{REPORT_HEADER}\nx,y,1\n")).is_err());
    }

    #[test]
    fn one_plot_per_noise() {
        let dir = tempfile::tempdir().unwrap();
        let one = ExperimentReport { records: vec![record("noisy", "car-a", 0.0, 0.5)], ..Default::default() };
        let files = render_report(&one, dir.path()).unwrap();
        assert_eq!(files.len(), 2);
        assert_eq!(fs::read_to_string(&files[0]).unwrap().lines().count(), 2);

        let two = ExperimentReport {
            records: vec![record("noisy", "car-a", 0.0, 0.5), record("noisy", "car b", 0.0, 0.6)],
            ..Default::default()
        };
        let files = render_report(&two, dir.path()).unwrap();
        assert_eq!(files.len(), 3);
        assert!(files[2].ends_with("ecm_car_b.png"));
        assert!(render_report(&ExperimentReport::default(), dir.path()).is_err());
    }
}
