use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

use strata_core::io::{self, Axis, Series};

/// Experiment verdict; decides the exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    pub fn from_pass(pass: bool) -> Self {
        if pass {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn exit_code(self) -> u8 {
        match self {
            Verdict::Pass => 0,
            Verdict::Fail => 1,
            Verdict::Inconclusive => 3,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub id: String,
    pub seed: u64,
    pub pass: bool,
    pub verdict: Verdict,
    pub slope: Option<f64>,
    pub interval: Option<(f64, f64)>,
    pub files: Vec<String>,
    pub detail: serde_json::Value,
}

/// Output directory that remembers what was written to it.
pub struct Output {
    dir: PathBuf,
    plots: bool,
    files: Vec<String>,
}

impl Output {
    pub fn new(dir: &Path, plots: bool) -> anyhow::Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Output {
            dir: dir.to_path_buf(),
            plots,
            files: Vec::new(),
        })
    }

    /// Registers `name` and returns its full path.
    pub fn file(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    pub fn plot(&mut self, name: &str, title: &str, series: &[Series], x: Axis, y: Axis) -> anyhow::Result<()> {
        if self.plots {
            let path = self.file(name);
            std::fs::write(&path, io::svg_plot(title, series, x, y))?;
        }
        Ok(())
    }

    pub fn finish(
        mut self,
        id: &str,
        seed: u64,
        verdict: Verdict,
        fit: Option<(f64, (f64, f64))>,
        detail: serde_json::Value,
    ) -> anyhow::Result<Summary> {
        let path = self.file("summary.json");
        let summary = Summary {
            id: id.to_string(),
            seed,
            pass: verdict == Verdict::Pass,
            verdict,
            slope: fit.map(|f| f.0),
            interval: fit.map(|f| f.1),
            files: self.files,
            detail,
        };
        std::fs::write(&path, serde_json::to_string_pretty(&summary)? + "\n")?;
        Ok(summary)
    }
}
