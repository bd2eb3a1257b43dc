//! Flat `section.key = value` run configuration. Every key a command
//! reads can be overridden by a CLI flag; the file is the diff-able
//! record of an experiment.

use hashslice_core::error::{Error, Result};
use hashslice_core::hash::HashKind;
use hashslice_core::scheme::{RegimeTable, SchemeConfig};
use hashslice_core::synth::{ActivityLaw, DrawLaw, ForumConfig, PopulationModel};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Default)]
pub struct Config {
    values: BTreeMap<String, String>,
    base_dir: PathBuf,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::parse(
                    lineno + 1,
                    format!("expected `section.key = value`, got {line:?}"),
                ));
            };
            let key = key.trim();
            if !key.contains('.') {
                return Err(Error::parse(
                    lineno + 1,
                    format!("keys are `section.key`, got {key:?}"),
                ));
            }
            values.insert(key.to_string(), value.trim().to_string());
        }
        Ok(Config {
            values,
            base_dir: path.parent().unwrap_or(Path::new(".")).to_path_buf(),
        })
    }

    /// A stable digest of the resolved configuration, for file headers.
    pub fn digest(&self) -> String {
        let canonical: String = self
            .values
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect();
        hashslice_core::hash::hex_digest(HashKind::Sha1, canonical.as_bytes())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str).filter(|v| !v.is_empty())
    }

    pub fn get_or<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.get(key).unwrap_or(default)
    }

    pub fn get_u64(&self, key: &str, default: u64) -> Result<u64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|e| Error::config(format!("{key}: {e}"))),
        }
    }

    pub fn get_f64(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|e| Error::config(format!("{key}: {e}"))),
        }
    }

    /// Paths in the config resolve relative to the config file.
    pub fn get_path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(|v| {
            let p = Path::new(v);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                self.base_dir.join(p)
            }
        })
    }

    pub fn seed(&self) -> Result<u64> {
        self.get_u64("run.seed", 1)
    }

    pub fn workers(&self) -> Result<usize> {
        Ok(self.get_u64("run.workers", num_threads_default() as u64)? as usize)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.get_path("run.out_dir")
            .unwrap_or_else(|| PathBuf::from("out"))
    }

    /// The scheme shared by every command.
    pub fn scheme(&self) -> Result<SchemeConfig> {
        let bits = self.get_u64("scheme.address_bits", 32)? as u32;
        let high_octet = self.get_u64("scheme.high_octet", 0)? as u32;
        let config = SchemeConfig {
            hash_algorithm: HashKind::parse(self.get_or("scheme.hash", "sha1"))?,
            salt: self.get_or("scheme.salt", "").as_bytes().to_vec(),
            slice_start: self.get_u64("scheme.slice_start", 9)? as usize,
            username_len: self.get_u64("scheme.username_len", 4)? as usize,
            address_space_bits: bits,
            address_base: if bits < 32 { high_octet << 24 } else { 0 },
        };
        config.validate()?;
        Ok(config)
    }

    /// Regime table: an explicit file wins, else a single span derived
    /// from the forum section.
    pub fn regimes(&self, default_file: Option<&Path>) -> Result<RegimeTable> {
        if let Some(path) = self.get_path("paths.regimes") {
            return RegimeTable::parse(&std::fs::read_to_string(&path).map_err(|e| {
                Error::config(format!("cannot read regimes {}: {e}", path.display()))
            })?);
        }
        if let Some(path) = default_file {
            if path.exists() {
                return RegimeTable::parse(&std::fs::read_to_string(path)?);
            }
        }
        let forum = self.forum()?;
        Ok(forum.regimes)
    }

    pub fn forum(&self) -> Result<ForumConfig> {
        let start = chrono::NaiveDate::parse_from_str(
            self.get_or("forum.start_date", "2015-01-01"),
            "%Y-%m-%d",
        )
        .map_err(|e| Error::config(format!("forum.start_date: {e}")))?;
        let days = self.get_u64("forum.days", 60)? as u32;
        let slice = self.get_u64("scheme.slice_start", 9)? as usize;
        let span_end = start + chrono::Days::new(days.max(1) as u64 - 1);
        let mut regimes = RegimeTable::single(start, span_end, slice)?;
        if let Some(day) = self.get(&"forum.switch_day".to_string()[..]) {
            let day: u64 = day
                .parse()
                .map_err(|e| Error::config(format!("forum.switch_day: {e}")))?;
            regimes = regimes.with_switch_at(start + chrono::Days::new(day))?;
        }
        Ok(ForumConfig {
            start_date: start,
            days,
            topics_per_day: parse_draw_law(self.get_or("forum.topics_per_day", "poisson:8.33"))?,
            posts_per_topic: parse_draw_law(self.get_or("forum.posts_per_topic", "poisson:15.8"))?,
            regimes,
            seed: self.seed()?,
            first_topic_id: self.get_u64("forum.first_topic_id", 1)?,
            hour_weights: None,
        })
    }

    pub fn population(&self) -> Result<PopulationModel> {
        let activity = match self.get_or("forum.activity", "stretched:0.368,0.5") {
            "uniform" => ActivityLaw::Uniform,
            spec => {
                let params = spec
                    .strip_prefix("stretched:")
                    .ok_or_else(|| Error::config(format!("forum.activity: {spec:?}")))?;
                let (decay, shape) = params
                    .split_once(',')
                    .ok_or_else(|| Error::config("forum.activity needs decay,shape"))?;
                ActivityLaw::StretchedExponential {
                    decay: decay
                        .trim()
                        .parse()
                        .map_err(|e| Error::config(format!("activity decay: {e}")))?,
                    shape: shape
                        .trim()
                        .parse()
                        .map_err(|e| Error::config(format!("activity shape: {e}")))?,
                }
            }
        };
        Ok(PopulationModel {
            n_addresses: self.get_u64("forum.addresses", 300)? as usize,
            activity,
            churn_rate: self.get_f64("forum.churn_rate", 0.0)?,
        })
    }
}

fn num_threads_default() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

/// `fixed:N`, `poisson:MEAN`, or `uniform:LO..HI`.
pub fn parse_draw_law(spec: &str) -> Result<DrawLaw> {
    let law = if let Some(n) = spec.strip_prefix("fixed:") {
        DrawLaw::Fixed(
            n.parse()
                .map_err(|e| Error::config(format!("draw law {spec:?}: {e}")))?,
        )
    } else if let Some(mean) = spec.strip_prefix("poisson:") {
        DrawLaw::Poisson(
            mean.parse()
                .map_err(|e| Error::config(format!("draw law {spec:?}: {e}")))?,
        )
    } else if let Some(range) = spec.strip_prefix("uniform:") {
        let (lo, hi) = range
            .split_once("..")
            .ok_or_else(|| Error::config(format!("draw law {spec:?} needs LO..HI")))?;
        DrawLaw::Uniform {
            lo: lo
                .parse()
                .map_err(|e| Error::config(format!("draw law {spec:?}: {e}")))?,
            hi: hi
                .parse()
                .map_err(|e| Error::config(format!("draw law {spec:?}: {e}")))?,
        }
    } else {
        return Err(Error::config(format!(
            "unknown draw law {spec:?} (fixed:N, poisson:M, uniform:LO..HI)"
        )));
    };
    law.validate()?;
    Ok(law)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_flat_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(
            &path,
            "# comment\nrun.seed = 99\nscheme.address_bits = 24\nscheme.high_octet = 192\n\
             forum.days = 10\npaths.dump = data/dump.csv\n",
        )
        .unwrap();
        let config = Config::load(&path).unwrap();
        assert_eq!(config.seed().unwrap(), 99);
        assert_eq!(config.scheme().unwrap().address_space_bits, 24);
        assert_eq!(config.scheme().unwrap().address_base, 192 << 24);
        assert_eq!(
            config.get_path("paths.dump").unwrap(),
            dir.path().join("data/dump.csv")
        );
        // Unknown keys default.
        assert_eq!(config.get_u64("run.workers", 3).unwrap(), 3);
    }

    #[test]
    fn bad_lines_carry_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "run.seed = 1\nnonsense line\n").unwrap();
        match Config::load(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn draw_laws_parse() {
        assert_eq!(parse_draw_law("fixed:5").unwrap(), DrawLaw::Fixed(5));
        assert_eq!(parse_draw_law("poisson:8.33").unwrap(), DrawLaw::Poisson(8.33));
        assert_eq!(
            parse_draw_law("uniform:2..9").unwrap(),
            DrawLaw::Uniform { lo: 2, hi: 9 }
        );
        assert!(parse_draw_law("zipf:2").is_err());
        assert!(parse_draw_law("uniform:9..2").is_err());
    }

    #[test]
    fn digest_is_stable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "run.seed = 1\n").unwrap();
        let a = Config::load(&path).unwrap().digest();
        let b = Config::load(&path).unwrap().digest();
        assert_eq!(a, b);
    }
}
