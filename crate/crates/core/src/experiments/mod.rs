//! Named experiments: each builds its inputs from an [`ExperimentConfig`],
//! runs the dynamics, oracles and measurements, and writes CSV and SVG
//! artifacts plus `summary.csv` and a `manifest.txt` of SHA-256 digests.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub mod config;
mod landscapes;
mod networks;
pub mod svg;

pub use config::{parse_config_text, ExperimentConfig};

pub const EXPERIMENTS: [&str; 7] = [
    "fig-gauss-noise",
    "fig-sgdl-vs-sgd",
    "fig-flat-volume-dims",
    "fig-wedge-2d",
    "fig-wedge-5d",
    "fig-interp",
    "table-flatness",
];

/// Built-in defaults of a named experiment.
pub fn defaults(name: &str, seed: u64) -> Result<ExperimentConfig> {
    let keys: Vec<(&str, &str)> = match name {
        "fig-flat-volume-dims" => landscapes::FLAT_VOLUME_DEFAULTS.to_vec(),
        "fig-wedge-2d" => landscapes::WEDGE_2D_DEFAULTS.to_vec(),
        "fig-wedge-5d" => landscapes::WEDGE_5D_DEFAULTS.to_vec(),
        "fig-sgdl-vs-sgd" => [
            &networks::MLP_DEFAULTS[..],
            &networks::SGDL_VS_SGD_DEFAULTS[..],
        ]
        .concat(),
        "fig-gauss-noise" => [
            &networks::MLP_DEFAULTS[..],
            &networks::GAUSS_NOISE_DEFAULTS[..],
        ]
        .concat(),
        "fig-interp" => [&networks::MLP_DEFAULTS[..], &networks::INTERP_DEFAULTS[..]].concat(),
        "table-flatness" => [
            &networks::MLP_DEFAULTS[..],
            &networks::FLATNESS_DEFAULTS[..],
        ]
        .concat(),
        other => {
            return Err(Error::param(format!(
                "unknown experiment '{other}' (expected one of: {})",
                EXPERIMENTS.join(", ")
            )))
        }
    };
    Ok(ExperimentConfig::with_defaults(name, seed, &keys))
}

/// Files written by a run (sorted, `manifest.txt` last) and its headline
/// metrics in the order they were recorded.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub files: Vec<String>,
    pub metrics: Vec<(String, f64)>,
}

impl Outcome {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| *v)
    }
}

/// Runs `config.name`, writing everything under `out`.
pub fn run_experiment(config: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let mut art = Artifacts::new(out, config)?;
    match config.name.as_str() {
        "fig-flat-volume-dims" => landscapes::flat_volume_dims(config, &mut art)?,
        "fig-wedge-2d" => landscapes::wedge_2d(config, &mut art)?,
        "fig-wedge-5d" => landscapes::wedge_5d(config, &mut art)?,
        "fig-sgdl-vs-sgd" => networks::sgdl_vs_sgd(config, &mut art)?,
        "fig-gauss-noise" => networks::gauss_noise(config, &mut art)?,
        "fig-interp" => networks::interp(config, &mut art)?,
        "table-flatness" => networks::table_flatness(config, &mut art)?,
        other => return Err(defaults(other, config.seed).unwrap_err()),
    }
    art.finish()
}

pub(crate) struct Artifacts {
    dir: PathBuf,
    header: Vec<String>,
    files: Vec<String>,
    metrics: Vec<(String, f64)>,
}

impl Artifacts {
    fn new(dir: &Path, config: &ExperimentConfig) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Artifacts {
            dir: dir.to_path_buf(),
            header: config.header_lines(),
            files: Vec::new(),
            metrics: Vec::new(),
        })
    }

    pub fn header(&self) -> &[String] {
        &self.header
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        debug_assert!(!name.contains(['/', '\\']) && name != "manifest.txt");
        fs::write(self.dir.join(name), bytes)?;
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        Ok(())
    }

    /// A CSV file preceded by the config header.
    pub fn csv(&mut self, name: &str, body: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        for line in &self.header {
            writeln!(buf, "{line}")?;
        }
        body(&mut buf)?;
        self.put(name, &buf)
    }

    pub fn svg(&mut self, name: &str, text: &str) -> Result<()> {
        self.put(name, text.as_bytes())
    }

    pub fn metric(&mut self, name: impl Into<String>, value: f64) {
        self.metrics.push((name.into(), value));
    }

    fn finish(mut self) -> Result<Outcome> {
        let metrics = std::mem::take(&mut self.metrics);
        self.csv("summary.csv", |w| {
            writeln!(w, "metric,value")?;
            for (k, v) in &metrics {
                writeln!(w, "{k},{v}")?;
            }
            Ok(())
        })?;
        self.files.sort();
        let mut manifest = String::new();
        for f in &self.files {
            let digest = Sha256::digest(fs::read(self.dir.join(f))?);
            let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
            manifest.push_str(&format!("{hex}  {f}\n"));
        }
        fs::write(self.dir.join("manifest.txt"), manifest)?;
        self.files.push("manifest.txt".to_string());
        Ok(Outcome {
            files: self.files,
            metrics,
        })
    }
}

/// Keeps at most `max` evenly spaced points (always the last one).
pub(crate) fn downsample<T: Clone>(xs: &[T], max: usize) -> Vec<T> {
    if xs.len() <= max || max < 2 {
        return xs.to_vec();
    }
    let stride = xs.len().div_ceil(max - 1);
    let mut out: Vec<T> = xs.iter().step_by(stride).cloned().collect();
    if !(xs.len() - 1).is_multiple_of(stride) {
        out.push(xs[xs.len() - 1].clone());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_named_experiment_has_defaults() {
        for name in EXPERIMENTS {
            let c = defaults(name, 3).unwrap();
            assert_eq!(c.name, name);
            assert!(c.keys().count() > 3);
        }
        assert!(matches!(defaults("fig-nope", 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn manifest_lists_digests_sorted() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::with_defaults("demo", 1, &[("a", "1")]);
        let mut art = Artifacts::new(dir.path(), &cfg).unwrap();
        art.csv("b.csv", |w| Ok(writeln!(w, "x\n1")?)).unwrap();
        art.svg("a.svg", "<svg/>").unwrap();
        art.metric("m", 0.5);
        let out = art.finish().unwrap();
        assert_eq!(out.files, ["a.svg", "b.csv", "summary.csv", "manifest.txt"]);
        let manifest = fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
        let names: Vec<&str> = manifest
            .lines()
            .map(|l| l.split("  ").nth(1).unwrap())
            .collect();
        assert_eq!(names, ["a.svg", "b.csv", "summary.csv"]);
        // sha256("<svg/>")
        let expect: String = Sha256::digest(b"<svg/>")
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        assert!(manifest.starts_with(&expect));
        let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert!(summary
            .starts_with("# experiment = \"demo\"\n# seed = 1\n# a = 1\nmetric,value\nm,0.5\n"));
        assert_eq!(out.metric("m"), Some(0.5));
    }

    #[test]
    fn downsample_keeps_endpoints() {
        let xs: Vec<usize> = (0..1001).collect();
        let d = downsample(&xs, 100);
        assert!(d.len() <= 101);
        assert_eq!((d[0], *d.last().unwrap()), (0, 1000));
        assert_eq!(downsample(&xs[..5], 100), xs[..5].to_vec());
    }
}
