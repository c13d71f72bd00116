//! Every file a command writes goes through [`Output`], which records it in
//! the run manifest. The manifest is written before any result and rewritten
//! with timing once the command finishes.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;

use latsep::io::{self, ReportFormat, ReportRows};
use latsep::manifest::{RunManifest, Timing};
use latsep::{Error, Result};

use crate::args::GlobalArgs;

pub struct Output {
    dir: PathBuf,
    format: ReportFormat,
    manifest: RunManifest,
    manifest_path: PathBuf,
    started: Instant,
    started_unix_ms: u128,
}

impl Output {
    /// `config` must capture everything that determines the results; the
    /// run id hashes it with the seed and the input file contents.
    pub fn begin<T: Serialize>(global: &GlobalArgs, command: &str, config: &T, inputs: &[&Path]) -> Result<Self> {
        let started = Instant::now();
        let started_unix_ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis())
            .unwrap_or(0);
        let mut hashes = Vec::new();
        for p in inputs {
            hashes.push(latsep::manifest::file_hash(p)?);
        }
        let snapshot = serde_json::json!({ "args": config, "input_hashes": hashes });
        let mut manifest = RunManifest::new(command, &snapshot, global.seed)?;
        for p in inputs {
            manifest.add_input(p)?;
        }
        std::fs::create_dir_all(&global.out).map_err(|e| io_error(&global.out, e))?;
        let manifest_path = global.out.join(format!("{command}-{}.manifest.json", manifest.run_id));
        let out = Output {
            dir: global.out.clone(),
            format: global.format.into(),
            manifest,
            manifest_path,
            started,
            started_unix_ms,
        };
        out.write_manifest()?;
        Ok(out)
    }

    fn write_manifest(&self) -> Result<()> {
        io::write_text(&self.manifest_path, &io::to_json_string(&self.manifest)?)
    }

    fn record(&mut self, path: &Path) {
        let name = path.display().to_string();
        if !self.manifest.artifacts.contains(&name) {
            self.manifest.artifacts.push(name);
        }
    }

    /// Writes `<stem>.json`, plus `<stem>.csv` when CSV was requested.
    pub fn report<T: Serialize + ReportRows>(&mut self, stem: &str, value: &T) -> Result<PathBuf> {
        let json = self.dir.join(format!("{stem}.json"));
        io::save_report(value, &json, ReportFormat::Json)?;
        self.record(&json);
        if self.format == ReportFormat::Csv {
            let csv = self.dir.join(format!("{stem}.csv"));
            io::save_report(value, &csv, ReportFormat::Csv)?;
            self.record(&csv);
        }
        Ok(json)
    }

    /// JSON-only artifact such as trained encoder weights.
    pub fn json<T: Serialize>(&mut self, stem: &str, value: &T) -> Result<PathBuf> {
        let path = self.dir.join(format!("{stem}.json"));
        io::write_text(&path, &io::to_json_string(value)?)?;
        self.record(&path);
        Ok(path)
    }

    pub fn plot(&mut self, stem: &str, columns: &[&str], rows: &[Vec<String>]) -> Result<PathBuf> {
        let path = self.dir.join(format!("{stem}.csv"));
        io::write_plot_data(&path, columns, rows)?;
        self.record(&path);
        Ok(path)
    }

    /// A file written by the caller at an arbitrary path.
    pub fn external(&mut self, path: &Path) {
        self.record(path);
    }

    pub fn finish(mut self) -> Result<()> {
        self.manifest.timing = Some(Timing {
            started_unix_ms: self.started_unix_ms,
            elapsed_ms: self.started.elapsed().as_millis(),
        });
        self.write_manifest()?;
        eprintln!("run {} → {}", self.manifest.run_id, self.manifest_path.display());
        Ok(())
    }
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Config(format!("cannot create {}: {e}", path.display()))
}

/// One-line text sparkline of a series, scaled to its own range.
pub fn sparkline(values: &[f64]) -> String {
    const BARS: [char; 8] = ['▁', '▂', '▃', '▄', '▅', '▆', '▇', '█'];
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .map(|&v| {
            if hi > lo {
                BARS[(((v - lo) / (hi - lo)) * 7.0).round() as usize]
            } else {
                BARS[3]
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparkline_spans_range() {
        assert_eq!(sparkline(&[0.0, 0.5, 1.0]), "▁▅█");
        assert_eq!(sparkline(&[2.0, 2.0]), "▄▄");
    }
}
