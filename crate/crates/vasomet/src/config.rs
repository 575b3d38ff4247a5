//! Run configuration: one flat record of every tunable, loadable from a
//! `key=value` file and overridable by CLI flags.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::ingest::QualityConfig;
use crate::skeleton::PreprocessConfig;

/// All knobs with their defaults. An empty config file is valid and leaves
/// every default in place.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub quality: QualityConfig,
    pub preprocess: PreprocessConfig,
    /// Inner zone bound, disc diameters from the disc center.
    pub zone_inner_dd: f64,
    /// Outer zone bound, disc diameters from the disc center.
    pub zone_outer_dd: f64,
    /// Minimum tangent-fit window in pixels; the effective window is
    /// max(this, parent diameter).
    pub direction_window_px: usize,
    /// Dilation of the other system's mask for the crossing test.
    pub crossing_dilation_px: f64,
    /// Two tangent pairs within this of collinear mark a degree-4 junction
    /// as a crossing.
    pub collinear_tol_deg: f64,
    /// Components are rootable only if they come within this multiple of
    /// the disc radius.
    pub root_attach_radius_factor: f64,
    /// Bonferroni-adjust pairwise p-values instead of plain Fisher LSD.
    pub bonferroni: bool,
    /// Plot all five parameters instead of the default MA/BA/BEC set.
    pub plot_all_params: bool,
    /// Worker threads for batch processing; 0 = one per CPU.
    pub workers: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            quality: QualityConfig::default(),
            preprocess: PreprocessConfig::default(),
            zone_inner_dd: 1.0,
            zone_outer_dd: 2.5,
            direction_window_px: 10,
            crossing_dilation_px: 2.0,
            collinear_tol_deg: 30.0,
            root_attach_radius_factor: 1.5,
            bonferroni: false,
            plot_all_params: false,
            workers: 0,
            seed: 0,
            out: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_key_values(&text)
    }

    /// Parse `key=value` lines; `#` starts a comment, blank lines ignored.
    pub fn from_key_values(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value, got {raw:?}", lineno + 1))
            })?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(cfg)
    }

    /// Apply one key; unknown keys are errors so typos surface immediately.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            value
                .parse()
                .map_err(|e| Error::Config(format!("{key}: {e}")))
        }
        fn flag(key: &str, value: &str) -> Result<bool> {
            match value {
                "true" | "1" | "yes" | "on" => Ok(true),
                "false" | "0" | "no" | "off" => Ok(false),
                other => Err(Error::Config(format!("{key}: expected bool, got {other:?}"))),
            }
        }
        match key {
            "min_dimension_px" => self.quality.min_dimension_px = num(key, value)?,
            "min_foreground_frac" => self.quality.min_foreground_frac = num(key, value)?,
            "exclude_hyperopia" => self.quality.exclude_hyperopia = flag(key, value)?,
            "min_component_px" => self.preprocess.min_component_px = num(key, value)?,
            "max_hole_px" => self.preprocess.max_hole_px = num(key, value)?,
            "zone_inner_dd" => self.zone_inner_dd = num(key, value)?,
            "zone_outer_dd" => {
                self.zone_outer_dd = num(key, value)?;
                self.quality.zone_outer_dd = self.zone_outer_dd;
            }
            "direction_window_px" => self.direction_window_px = num(key, value)?,
            "crossing_dilation_px" => self.crossing_dilation_px = num(key, value)?,
            "collinear_tol_deg" => self.collinear_tol_deg = num(key, value)?,
            "root_attach_radius_factor" => self.root_attach_radius_factor = num(key, value)?,
            "bonferroni" => self.bonferroni = flag(key, value)?,
            "plot_all_params" => self.plot_all_params = flag(key, value)?,
            "workers" => self.workers = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "out" => self.out = Some(PathBuf::from(value)),
            other => {
                return Err(Error::Config(format!("unknown key {other:?}")));
            }
        }
        self.validate()
    }

    fn validate(&self) -> Result<()> {
        if !(self.zone_inner_dd > 0.0) || self.zone_outer_dd <= self.zone_inner_dd {
            return Err(Error::Config(format!(
                "zone bounds must satisfy 0 < inner < outer, got {} and {}",
                self.zone_inner_dd, self.zone_outer_dd
            )));
        }
        if self.direction_window_px < 2 {
            return Err(Error::Config(
                "direction_window_px must be at least 2".into(),
            ));
        }
        if !(0.0..180.0).contains(&self.collinear_tol_deg) {
            return Err(Error::Config(format!(
                "collinear_tol_deg out of range: {}",
                self.collinear_tol_deg
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default() {
        assert_eq!(RunConfig::from_key_values("").unwrap(), RunConfig::default());
        assert_eq!(
            RunConfig::from_key_values("\n  # just a comment\n\n").unwrap(),
            RunConfig::default()
        );
    }

    #[test]
    fn keys_round_trip() {
        let cfg = RunConfig::from_key_values(
            "min_dimension_px = 256\n\
             zone_outer_dd = 3.0   # wider annulus\n\
             bonferroni = true\n\
             workers=4\n\
             seed = 99\n\
             out = results/run1\n",
        )
        .unwrap();
        assert_eq!(cfg.quality.min_dimension_px, 256);
        assert_eq!(cfg.zone_outer_dd, 3.0);
        assert_eq!(cfg.quality.zone_outer_dd, 3.0);
        assert!(cfg.bonferroni);
        assert_eq!(cfg.workers, 4);
        assert_eq!(cfg.seed, 99);
        assert_eq!(cfg.out.as_deref(), Some(Path::new("results/run1")));
    }

    #[test]
    fn bad_input_is_rejected() {
        assert!(RunConfig::from_key_values("nonsense\n").is_err());
        assert!(RunConfig::from_key_values("no_such_key = 1\n").is_err());
        assert!(RunConfig::from_key_values("workers = many\n").is_err());
        assert!(RunConfig::from_key_values("zone_inner_dd = 5.0\n").is_err());
        assert!(RunConfig::from_key_values("bonferroni = maybe\n").is_err());
    }
}
