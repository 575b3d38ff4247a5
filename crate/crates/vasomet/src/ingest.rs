//! Dataset ingestion: manifest CSV parsing, mask/disc loading, refraction
//! grouping, and the image quality gate.

use std::fmt;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::raster::Mask;
use crate::Scalar;

/// Refraction group by spherical equivalent, most-to-least emmetropic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RefractionGroup {
    Normal,
    LowMyopia,
    ModerateMyopia,
    HighMyopia,
}

impl Serialize for RefractionGroup {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

impl<'de> serde::Deserialize<'de> for RefractionGroup {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Self::ALL
            .iter()
            .copied()
            .find(|g| g.label() == s)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown refraction group `{s}`")))
    }
}

impl RefractionGroup {
    pub const ALL: [RefractionGroup; 4] = [
        RefractionGroup::Normal,
        RefractionGroup::LowMyopia,
        RefractionGroup::ModerateMyopia,
        RefractionGroup::HighMyopia,
    ];

    /// Stable machine label for CSV/JSON columns.
    pub fn label(self) -> &'static str {
        match self {
            RefractionGroup::Normal => "normal",
            RefractionGroup::LowMyopia => "low_myopia",
            RefractionGroup::ModerateMyopia => "moderate_myopia",
            RefractionGroup::HighMyopia => "high_myopia",
        }
    }

    /// Human-readable name for table rows.
    pub fn display_name(self) -> &'static str {
        match self {
            RefractionGroup::Normal => "Normal",
            RefractionGroup::LowMyopia => "Low myopia",
            RefractionGroup::ModerateMyopia => "Moderate myopia",
            RefractionGroup::HighMyopia => "High myopia",
        }
    }

    /// A representative SER interval (lo, hi] for simulation. The Normal
    /// group is open-ended above; the High group below; both are given
    /// plausible finite spans here.
    pub fn ser_interval(self) -> (f64, f64) {
        match self {
            RefractionGroup::Normal => (-0.5, 1.0),
            RefractionGroup::LowMyopia => (-3.0, -0.5),
            RefractionGroup::ModerateMyopia => (-6.0, -3.0),
            RefractionGroup::HighMyopia => (-9.0, -6.0),
        }
    }
}

impl fmt::Display for RefractionGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

/// Group a spherical-equivalent refraction (diopters). Boundaries are
/// inclusive downward: -0.5 is low, -3.0 moderate, -6.0 high myopia.
pub fn classify_refraction(ser: f64) -> Result<RefractionGroup> {
    if !ser.is_finite() {
        return Err(Error::Input(format!("non-finite SER: {ser}")));
    }
    Ok(if ser > -0.5 {
        RefractionGroup::Normal
    } else if ser > -3.0 {
        RefractionGroup::LowMyopia
    } else if ser > -6.0 {
        RefractionGroup::ModerateMyopia
    } else {
        RefractionGroup::HighMyopia
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Eye {
    Left,
    Right,
}

impl Eye {
    pub fn code(self) -> &'static str {
        match self {
            Eye::Left => "L",
            Eye::Right => "R",
        }
    }
}

impl FromStr for Eye {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "L" => Ok(Eye::Left),
            "R" => Ok(Eye::Right),
            other => Err(Error::Input(format!("eye must be L or R, got {other:?}"))),
        }
    }
}

/// Optic-disc annotation: center and diameter in pixels. The center may
/// fall outside the raster (bad annotation); the quality gate rejects it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscAnnotation {
    pub center: Vec2<Scalar>,
    pub diameter_px: Scalar,
}

#[derive(Serialize, Deserialize)]
struct DiscJson {
    center_x: f64,
    center_y: f64,
    diameter_px: f64,
}

impl DiscAnnotation {
    pub fn radius(&self) -> Scalar {
        self.diameter_px * 0.5
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let raw: DiscJson = serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        if !(raw.diameter_px > 0.0) || !raw.diameter_px.is_finite() {
            return Err(Error::Json {
                path: path.to_path_buf(),
                msg: format!("diameter_px must be positive, got {}", raw.diameter_px),
            });
        }
        Ok(DiscAnnotation {
            center: Vec2::new(raw.center_x, raw.center_y),
            diameter_px: raw.diameter_px,
        })
    }

    pub fn to_json_file(&self, path: &Path) -> Result<()> {
        let raw = DiscJson {
            center_x: self.center.x,
            center_y: self.center.y,
            diameter_px: self.diameter_px,
        };
        let text = serde_json::to_string_pretty(&raw).expect("disc json serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// One fully loaded dataset record.
#[derive(Debug)]
pub struct LabeledFundus {
    pub id: String,
    pub eye: Eye,
    /// Spherical equivalent refraction, diopters.
    pub ser: f64,
    /// Age in years, when recorded.
    pub age: Option<f64>,
    pub artery_mask: Mask,
    pub vein_mask: Mask,
    pub disc: DiscAnnotation,
}

impl LabeledFundus {
    pub fn dims(&self) -> (usize, usize) {
        (self.artery_mask.width(), self.artery_mask.height())
    }

    pub fn group(&self) -> Result<RefractionGroup> {
        classify_refraction(self.ser)
    }
}

/// One manifest row with file paths still unresolved (as written in the
/// CSV, relative to the manifest's directory).
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    pub eye: Eye,
    pub ser: f64,
    pub age: Option<f64>,
    pub artery_mask: PathBuf,
    pub vein_mask: PathBuf,
    pub disc_json: PathBuf,
}

impl ManifestEntry {
    /// Load masks and disc annotation, resolving paths against `base`.
    pub fn load(&self, base: &Path) -> Result<LabeledFundus> {
        let artery_mask = Mask::from_png(&base.join(&self.artery_mask))?;
        let vein_mask = Mask::from_png(&base.join(&self.vein_mask))?;
        if (artery_mask.width(), artery_mask.height()) != (vein_mask.width(), vein_mask.height())
        {
            return Err(Error::Input(format!(
                "{}: artery mask is {}x{} but vein mask is {}x{}",
                self.id,
                artery_mask.width(),
                artery_mask.height(),
                vein_mask.width(),
                vein_mask.height()
            )));
        }
        let disc = DiscAnnotation::from_json_file(&base.join(&self.disc_json))?;
        Ok(LabeledFundus {
            id: self.id.clone(),
            eye: self.eye,
            ser: self.ser,
            age: self.age,
            artery_mask,
            vein_mask,
            disc,
        })
    }
}

pub const MANIFEST_HEADER: [&str; 7] = [
    "id",
    "eye",
    "ser_diopters",
    "age_years",
    "artery_mask",
    "vein_mask",
    "disc_json",
];

#[derive(Deserialize)]
struct RawRow {
    id: String,
    eye: String,
    ser_diopters: f64,
    age_years: Option<f64>,
    artery_mask: String,
    vein_mask: String,
    disc_json: String,
}

/// Parse the manifest CSV. The outer error covers an unreadable file or a
/// bad header; individual malformed rows come back as `Err` entries so one
/// bad row cannot sink a batch.
pub fn read_manifest(path: &Path) -> Result<Vec<Result<ManifestEntry>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Input(format!("manifest {}: {e}", path.display())))?
        .clone();
    for col in MANIFEST_HEADER {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::Input(format!(
                "manifest {} is missing column {col}",
                path.display()
            )));
        }
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                out.push(Err(Error::ManifestRow {
                    line: e.position().map(|p| p.line()).unwrap_or(0),
                    msg: e.to_string(),
                }));
                continue;
            }
        };
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let row_err = |msg: String| Error::ManifestRow { line, msg };
        let raw: RawRow = match rec.deserialize(Some(&headers)) {
            Ok(r) => r,
            Err(e) => {
                out.push(Err(row_err(e.to_string())));
                continue;
            }
        };
        let entry = (|| {
            let eye = Eye::from_str(&raw.eye).map_err(|e| row_err(e.to_string()))?;
            if !raw.ser_diopters.is_finite() {
                return Err(row_err(format!("non-finite SER {}", raw.ser_diopters)));
            }
            if let Some(age) = raw.age_years {
                if !age.is_finite() || age < 0.0 {
                    return Err(row_err(format!("invalid age {age}")));
                }
            }
            if raw.id.is_empty() {
                return Err(row_err("empty id".into()));
            }
            Ok(ManifestEntry {
                id: raw.id,
                eye,
                ser: raw.ser_diopters,
                age: raw.age_years,
                artery_mask: PathBuf::from(raw.artery_mask),
                vein_mask: PathBuf::from(raw.vein_mask),
                disc_json: PathBuf::from(raw.disc_json),
            })
        })();
        out.push(entry);
    }
    Ok(out)
}

/// Parse the manifest and load every referenced file. Per-row failures
/// (parse or IO) are returned in place.
pub fn load_manifest(path: &Path) -> Result<Vec<Result<LabeledFundus>>> {
    let base = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
    let rows = read_manifest(path)?;
    Ok(rows
        .into_iter()
        .map(|row| row.and_then(|entry| entry.load(&base)))
        .collect())
}

/// Write entries in the same CSV format `read_manifest` consumes.
pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(MANIFEST_HEADER)
        .map_err(|e| Error::Input(format!("manifest write: {e}")))?;
    for entry in entries {
        let age = entry.age.map(|a| a.to_string()).unwrap_or_default();
        w.write_record([
            entry.id.as_str(),
            entry.eye.code(),
            &entry.ser.to_string(),
            &age,
            &entry.artery_mask.to_string_lossy(),
            &entry.vein_mask.to_string_lossy(),
            &entry.disc_json.to_string_lossy(),
        ])
        .map_err(|e| Error::Input(format!("manifest write: {e}")))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Quality-gate thresholds. Defaults follow the documented exclusion
/// criteria; all are overridable through the run config.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityConfig {
    /// Reject images whose smaller dimension is below this.
    pub min_dimension_px: usize,
    /// Reject when either mask's foreground fraction is below this.
    pub min_foreground_frac: f64,
    /// Outer zone radius in disc diameters from the disc center; the whole
    /// annulus must fit inside the image.
    pub zone_outer_dd: f64,
    /// When set, exclude strongly hyperopic records (SER >= +2 D).
    pub exclude_hyperopia: bool,
}

impl Default for QualityConfig {
    fn default() -> Self {
        QualityConfig {
            min_dimension_px: 512,
            min_foreground_frac: 0.002,
            zone_outer_dd: 2.5,
            exclude_hyperopia: false,
        }
    }
}

/// Why a record was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GateReason {
    BelowMinDimension,
    EmptyMask { system: &'static str },
    DiscOutOfBounds,
    ZoneOutOfBounds,
    HyperopiaExcluded,
}

impl fmt::Display for GateReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GateReason::BelowMinDimension => write!(f, "BelowMinDimension"),
            GateReason::EmptyMask { system } => write!(f, "EmptyMask({system})"),
            GateReason::DiscOutOfBounds => write!(f, "DiscOutOfBounds"),
            GateReason::ZoneOutOfBounds => write!(f, "ZoneOutOfBounds"),
            GateReason::HyperopiaExcluded => write!(f, "HyperopiaExcluded"),
        }
    }
}

/// Run every check; an empty list means accept. Checks are independent so
/// a rejection lists everything that failed.
pub fn quality_gate(record: &LabeledFundus, cfg: &QualityConfig) -> Vec<GateReason> {
    let mut reasons = Vec::new();
    let (w, h) = record.dims();
    if w.min(h) < cfg.min_dimension_px {
        reasons.push(GateReason::BelowMinDimension);
    }
    let total = (w * h) as f64;
    for (mask, system) in [(&record.artery_mask, "artery"), (&record.vein_mask, "vein")] {
        if (mask.count_fg() as f64) < cfg.min_foreground_frac * total {
            reasons.push(GateReason::EmptyMask { system });
        }
    }
    let c = record.disc.center;
    let disc_ok = c.x >= 0.0
        && c.y >= 0.0
        && c.x < w as Scalar
        && c.y < h as Scalar
        && record.disc.diameter_px > 0.0;
    if !disc_ok {
        reasons.push(GateReason::DiscOutOfBounds);
    }
    let outer = cfg.zone_outer_dd * record.disc.diameter_px;
    if c.x - outer < 0.0
        || c.y - outer < 0.0
        || c.x + outer > (w as Scalar) - 1.0
        || c.y + outer > (h as Scalar) - 1.0
    {
        reasons.push(GateReason::ZoneOutOfBounds);
    }
    if cfg.exclude_hyperopia && record.ser >= 2.0 {
        reasons.push(GateReason::HyperopiaExcluded);
    }
    reasons
}
