//! Effective file locations: explicit config keys win, then the
//! conventional layout under the run's output directory.

use crate::config::Config;
use std::path::PathBuf;

pub struct RunPaths {
    pub out_dir: PathBuf,
}

impl RunPaths {
    pub fn new(config: &Config, out_override: Option<PathBuf>) -> Self {
        RunPaths {
            out_dir: out_override.unwrap_or_else(|| config.out_dir()),
        }
    }

    fn resolve(&self, config: &Config, key: &str, default_name: &str) -> PathBuf {
        config
            .get_path(key)
            .unwrap_or_else(|| self.out_dir.join(default_name))
    }

    pub fn dump(&self, config: &Config) -> PathBuf {
        self.resolve(config, "paths.dump", "dump.csv")
    }

    pub fn ground_truth(&self, config: &Config) -> PathBuf {
        self.resolve(config, "paths.ground_truth", "ground_truth.csv")
    }

    pub fn regimes(&self, config: &Config) -> PathBuf {
        self.resolve(config, "paths.regimes", "regimes.csv")
    }

    pub fn store(&self, config: &Config) -> PathBuf {
        self.resolve(config, "paths.store", "store")
    }

    pub fn calibration(&self, config: &Config) -> PathBuf {
        self.resolve(config, "paths.calibration", "calibration.json")
    }

    pub fn assignments(&self, config: &Config) -> PathBuf {
        self.resolve(config, "paths.assignments", "assignments.csv")
    }

    pub fn score_report(&self, config: &Config) -> PathBuf {
        self.resolve(config, "paths.score_report", "score_report.json")
    }

    pub fn scan_csv(&self, config: &Config) -> PathBuf {
        self.resolve(config, "paths.scan", "scan.csv")
    }

    pub fn scan_summary(&self, config: &Config) -> PathBuf {
        self.resolve(config, "paths.scan_summary", "scan_summary.json")
    }

    pub fn report_dir(&self, config: &Config) -> PathBuf {
        config
            .get_path("paths.report_dir")
            .unwrap_or_else(|| self.out_dir.join("report"))
    }
}
