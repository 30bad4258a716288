//! TOML run configuration.
//!
//! ```toml
//! [base]
//! c_p = 0.03
//! R_p = 0.08
//! # ...
//!
//! [masses]
//! m_e = 0.1255
//! # ...
//!
//! [design]
//! alpha_p = 10.0
//! # ...
//!
//! [published]        # optional
//! P_s = 1.3296
//! V_m = 9.68
//!
//! [space]            # optional; scalar = frozen, table = range
//! alpha_p = { lower = 0.0, upper = 10.0, points = 11 }
//! delta = 0.0
//! ```
//!
//! `[base]` and `[masses]` fall back to the built-in defaults key by key.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{BaseConstants, Calibration, DesignVector, MassModel, PublishedHover};
use crate::optimize::{DesignSpace, VarRange};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{}", format_parse(.line, .key, .message))]
    Parse {
        line: Option<usize>,
        key: Option<String>,
        message: String,
    },
    #[error("{0}")]
    Invalid(String),
}

fn format_parse(line: &Option<usize>, key: &Option<String>, message: &str) -> String {
    let mut out = String::from("config parse error");
    if let Some(line) = line {
        out.push_str(&format!(" at line {line}"));
    }
    if let Some(key) = key {
        out.push_str(&format!(" (key `{key}`)"));
    }
    out.push_str(": ");
    out.push_str(message);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpaceEntry {
    Fixed(f64),
    Range(VarRange),
}

impl From<SpaceEntry> for VarRange {
    fn from(e: SpaceEntry) -> Self {
        match e {
            SpaceEntry::Fixed(v) => VarRange::fixed(v),
            SpaceEntry::Range(r) => r,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceTable {
    pub alpha_p: Option<SpaceEntry>,
    #[serde(rename = "alpha_B")]
    pub alpha_b: Option<SpaceEntry>,
    pub chord_ratio: Option<SpaceEntry>,
    pub radius_ratio: Option<SpaceEntry>,
    pub delta: Option<SpaceEntry>,
    pub offset_ratio: Option<SpaceEntry>,
}

impl SpaceTable {
    /// Unlisted variables are frozen at the configured design.
    pub fn resolve(&self, design: &DesignVector) -> DesignSpace {
        let entries = [
            self.alpha_p,
            self.alpha_b,
            self.chord_ratio,
            self.radius_ratio,
            self.delta,
            self.offset_ratio,
        ];
        let mut space = DesignSpace::point(design);
        for (i, e) in entries.iter().enumerate() {
            if let Some(e) = e {
                space = space.with(i, (*e).into());
            }
        }
        space
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBase {
    #[serde(default)]
    c_p: Option<f64>,
    #[serde(default, rename = "R_p")]
    r_p: Option<f64>,
    #[serde(default)]
    g: Option<f64>,
    #[serde(default)]
    rho: Option<f64>,
    #[serde(default, rename = "K_tau_m")]
    k_tau_m: Option<f64>,
    #[serde(default, rename = "K_v")]
    k_v: Option<f64>,
    #[serde(default)]
    gamma: Option<f64>,
    #[serde(default, rename = "R_m")]
    r_m: Option<f64>,
    #[serde(default, rename = "L_m")]
    l_m: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMasses {
    #[serde(default)]
    m_e: Option<f64>,
    #[serde(default)]
    m_p: Option<f64>,
    #[serde(default, rename = "m_B")]
    m_b: Option<f64>,
    #[serde(default)]
    electronics_radius: Option<f64>,
    #[serde(default)]
    electronics_height: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    base: Option<RawBase>,
    masses: Option<RawMasses>,
    design: DesignVector,
    published: Option<PublishedHover>,
    space: Option<SpaceTable>,
}

/// A parsed and validated configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Config {
    pub base: BaseConstants,
    pub masses: MassModel,
    pub design: DesignVector,
    pub published: Option<PublishedHover>,
    pub space: Option<SpaceTable>,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| parse_error(text, &e))?;
        let d = BaseConstants::default();
        let base = match raw.base {
            None => d,
            Some(b) => BaseConstants {
                c_p: b.c_p.unwrap_or(d.c_p),
                r_p: b.r_p.unwrap_or(d.r_p),
                g: b.g.unwrap_or(d.g),
                rho: b.rho.unwrap_or(d.rho),
                k_tau_m: b.k_tau_m.unwrap_or(d.k_tau_m),
                k_v: b.k_v.unwrap_or(d.k_v),
                gamma: b.gamma.unwrap_or(d.gamma),
                r_m: b.r_m.unwrap_or(d.r_m),
                l_m: b.l_m.unwrap_or(d.l_m),
            },
        };
        let d = MassModel::default();
        let masses = match raw.masses {
            None => d,
            Some(m) => MassModel {
                m_e: m.m_e.unwrap_or(d.m_e),
                m_p: m.m_p.unwrap_or(d.m_p),
                m_b: m.m_b.unwrap_or(d.m_b),
                electronics_radius: m.electronics_radius.unwrap_or(d.electronics_radius),
                electronics_height: m.electronics_height.unwrap_or(d.electronics_height),
            },
        };
        let invalid = |section: &str, e: &dyn fmt::Display| {
            ConfigError::Invalid(format!("[{section}] {e}"))
        };
        base.validate().map_err(|e| invalid("base", &e))?;
        masses.validate().map_err(|e| invalid("masses", &e))?;
        raw.design.validate().map_err(|e| invalid("design", &e))?;
        let config = Self {
            base,
            masses,
            design: raw.design,
            published: raw.published,
            space: raw.space,
        };
        if let Some(space) = config.space {
            space
                .resolve(&config.design)
                .validate()
                .map_err(|e| invalid("space", &e))?;
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// The `[space]` section resolved against `[design]`, or the single
    /// design point when absent.
    pub fn design_space(&self) -> DesignSpace {
        match &self.space {
            Some(s) => s.resolve(&self.design),
            None => DesignSpace::point(&self.design),
        }
    }

    /// Constants and masses after applying a calibration.
    pub fn calibrated(
        &self,
        calibration: Option<&Calibration>,
    ) -> Result<(BaseConstants, MassModel), ConfigError> {
        match calibration {
            None => Ok((self.base, self.masses)),
            Some(c) => c
                .apply(&self.base, &self.masses)
                .map_err(|e| ConfigError::Invalid(e.to_string())),
        }
    }
}

fn parse_error(text: &str, e: &toml::de::Error) -> ConfigError {
    let line = e
        .span()
        .map(|span| text[..span.start.min(text.len())].matches('\n').count() + 1);
    let key = line.and_then(|l| key_on_line(text, l));
    ConfigError::Parse {
        line,
        key,
        message: e.message().trim().to_string(),
    }
}

fn key_on_line(text: &str, line: usize) -> Option<String> {
    let src = text.lines().nth(line - 1)?;
    let (key, _) = src.split_once('=')?;
    let key = key.trim();
    (!key.is_empty() && !key.starts_with('[')).then(|| key.to_string())
}

/// Reads a calibration JSON file.
pub fn load_calibration(path: &Path) -> Result<Calibration, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| ConfigError::Parse {
        line: Some(e.line()),
        key: None,
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[design]
alpha_p = 10.0
alpha_B = 10.0
chord_ratio = 1.05
radius_ratio = 1.75
delta = 0.0
offset_ratio = 0.0
"#;

    #[test]
    fn defaults_fill_missing_sections() {
        let c = Config::from_toml(MINIMAL).unwrap();
        assert_eq!(c.base, BaseConstants::default());
        assert_eq!(c.masses, MassModel::default());
        assert_eq!(c.design, DesignVector::new(10.0, 10.0, 1.05, 1.75, 0.0, 0.0));
        assert_eq!(c.design_space(), DesignSpace::point(&c.design));
    }

    #[test]
    fn partial_base_overrides_one_key() {
        let text = format!("[base]\nR_m = 1.5\n{MINIMAL}");
        let c = Config::from_toml(&text).unwrap();
        assert_eq!(c.base.r_m, 1.5);
        assert_eq!(c.base.c_p, BaseConstants::default().c_p);
    }

    #[test]
    fn unknown_key_reports_line_and_key() {
        let text = format!("[base]\nc_p = 0.03\nbogus = 1.0\n{MINIMAL}");
        match Config::from_toml(&text) {
            Err(ConfigError::Parse { line, key, message }) => {
                assert_eq!(line, Some(3), "{message}");
                assert_eq!(key.as_deref(), Some("bogus"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_type_reports_line() {
        let text = MINIMAL.replace("delta = 0.0", "delta = \"zero\"");
        let err = Config::from_toml(&text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 7"), "{msg}");
        assert!(msg.contains("delta"), "{msg}");
    }

    #[test]
    fn out_of_window_design_rejected() {
        let text = MINIMAL.replace("alpha_p = 10.0", "alpha_p = 12.0");
        assert!(matches!(Config::from_toml(&text), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn space_entries_scalar_or_range() {
        let text = format!(
            "{MINIMAL}\n[space]\nalpha_p = {{ lower = 0.0, upper = 10.0, points = 11 }}\ndelta = 0.1\n"
        );
        let c = Config::from_toml(&text).unwrap();
        let s = c.design_space();
        assert_eq!(s.ranges[0], VarRange::span(0.0, 10.0, 11));
        assert_eq!(s.ranges[4], VarRange::fixed(0.1));
        assert_eq!(s.ranges[3], VarRange::fixed(1.75));
        assert_eq!(s.free_indices(), vec![0]);
    }

    #[test]
    fn inverted_space_bounds_rejected() {
        let text = format!("{MINIMAL}\n[space]\ndelta = {{ lower = 1.0, upper = 0.0 }}\n");
        assert!(matches!(Config::from_toml(&text), Err(ConfigError::Invalid(_))));
    }
}
