//! Run configuration: JSON schema, semantic validation, and content hashing.
//!
//! A configuration names an instance (domain, weight, boundary trace), a raster, discretization
//! budgets, and the set of checks to run. The schema is strict where serde allows: unknown keys
//! at the top level and in plain structs are rejected; misspelled enum tags (`shape`, `family`,
//! `kind`, check names) are rejected with the offending value in the message. Parsing and
//! semantic validation both surface as [`Error::Schema`], which the CLI maps to exit code 2.
//!
//! [`config_hash`] fingerprints the raw file bytes (SHA-256, lowercase hex); the hash lands in
//! every report so artifacts can be traced back to the exact configuration that produced them.

use crate::boundary::{BoundaryDatum, Piece};
use crate::density::SplitParameter;
use crate::domain::DomainBoundary;
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::weight::ConformalWeight;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

/// Top-level configuration schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub domain: DomainConfig,
    pub weight: WeightConfig,
    /// Trace pieces covering the boundary circle once, in the same form the solver uses.
    pub boundary_datum: Vec<Piece>,
    pub grid: GridConfig,
    #[serde(default)]
    pub atoms: AtomsConfig,
    /// Common curve parameter at which partial densities split, in `[0, 1]`.
    #[serde(default = "default_tau_split")]
    pub tau_split: f64,
    /// Exponents for the density-ratio check.
    #[serde(default = "default_p_values")]
    pub p_values: Vec<f64>,
    /// Checks to run; omitted means all, an empty list means artifacts only.
    #[serde(default)]
    pub checks: Option<Vec<CheckKind>>,
    /// Global seed recorded in the report (the pipeline itself is deterministic).
    #[serde(default)]
    pub seed: u64,
    /// Artifact directory, relative to the current working directory unless absolute.
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

fn default_tau_split() -> f64 {
    0.5
}

fn default_p_values() -> Vec<f64> {
    vec![1.0, 2.0]
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Domain shape. Only strictly convex shapes are exposed: the planner's non-crossing structure
/// and the boundary-to-boundary ray geometry assume them.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum DomainConfig {
    Circle { radius: f64 },
    Ellipse { a: f64, b: f64 },
}

/// Weight family. `bilinear` points at a CSV sample file resolved against the config directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum WeightConfig {
    Constant { a: f64 },
    RadialBump { a: f64, b: f64, center: [f64; 2], width: f64 },
    Bilinear { csv_path: PathBuf },
}

/// Raster resolution: exactly one of `h` (cell size) or `n` (cells across the longer bounding
/// box axis).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
}

/// Atom budgets for the source and target discretizations.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomsConfig {
    pub n_source: usize,
    pub n_target: usize,
}

impl Default for AtomsConfig {
    fn default() -> Self {
        AtomsConfig { n_source: 64, n_target: 64 }
    }
}

/// The checks the pipeline can run on a solved instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    /// `∮ f = 0` and `σ(Ω) =` plan cost.
    MassBalance,
    /// Linear-programming primal cost against its dual value from the optimal potentials.
    Duality,
    /// Traced rays have no interior crossings.
    Noncrossing,
    /// Weak divergence residual of the weighted flow against the boundary measure.
    Divergence,
    /// Admissibility and boundary pairing of the rotated potential gradient.
    DualField,
    /// Density-to-data norm ratios at the configured exponents.
    LpRatio,
}

impl CheckKind {
    pub const ALL: [CheckKind; 6] = [
        CheckKind::MassBalance,
        CheckKind::Duality,
        CheckKind::Noncrossing,
        CheckKind::Divergence,
        CheckKind::DualField,
        CheckKind::LpRatio,
    ];

    /// The snake_case name used in configs and reports.
    pub fn name(&self) -> &'static str {
        match self {
            CheckKind::MassBalance => "mass_balance",
            CheckKind::Duality => "duality",
            CheckKind::Noncrossing => "noncrossing",
            CheckKind::Divergence => "divergence",
            CheckKind::DualField => "dual_field",
            CheckKind::LpRatio => "lp_ratio",
        }
    }
}

/// A validated instance, ready for the pipeline.
#[derive(Debug, Clone)]
pub struct Instance {
    pub domain: DomainBoundary,
    pub weight: ConformalWeight,
    pub datum: BoundaryDatum,
    pub spec: GridSpec,
    pub split: SplitParameter,
    pub checks: Vec<CheckKind>,
}

impl Config {
    /// Parse a configuration file, returning the config together with the raw text (for
    /// hashing). Missing files and malformed JSON are schema errors.
    pub fn from_path(path: &Path) -> Result<(Config, String)> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| Error::Schema(format!("cannot read config {}: {e}", path.display())))?;
        let config = Self::from_str_checked(&raw)?;
        Ok((config, raw))
    }

    /// Parse configuration text.
    pub fn from_str_checked(raw: &str) -> Result<Config> {
        serde_json::from_str(raw).map_err(|e| Error::Schema(format!("config: {e}")))
    }

    /// Semantic validation and construction of the typed instance. `base_dir` resolves relative
    /// paths inside the config (the weight CSV).
    pub fn build(&self, base_dir: &Path) -> Result<Instance> {
        let schema = |e: Error| Error::Schema(e.to_string());
        let domain = match self.domain {
            DomainConfig::Circle { radius } => DomainBoundary::circle(radius),
            DomainConfig::Ellipse { a, b } => DomainBoundary::ellipse(a, b),
        }
        .map_err(schema)?;
        let weight = match &self.weight {
            WeightConfig::Constant { a } => ConformalWeight::constant(*a),
            WeightConfig::RadialBump { a, b, center, width } => {
                ConformalWeight::radial_bump(*a, *b, crate::geom::v(center[0], center[1]), *width)
            }
            WeightConfig::Bilinear { csv_path } => {
                let resolved =
                    if csv_path.is_absolute() { csv_path.clone() } else { base_dir.join(csv_path) };
                ConformalWeight::bilinear_from_csv_path(&resolved)
            }
        }
        .map_err(schema)?;
        let datum = BoundaryDatum::new(self.boundary_datum.clone()).map_err(schema)?;
        let bbox = domain.bbox();
        let h = match (self.grid.h, self.grid.n) {
            (Some(h), None) => {
                if !(h > 0.0) || !h.is_finite() {
                    return Err(Error::Schema(format!(
                        "grid spacing must be positive and finite, got {h}"
                    )));
                }
                h
            }
            (None, Some(n)) => {
                if n < 8 {
                    return Err(Error::Schema(format!("grid needs at least 8 cells, got {n}")));
                }
                let extent = (bbox.hi.x - bbox.lo.x).max(bbox.hi.y - bbox.lo.y);
                extent / n as f64
            }
            (Some(_), Some(_)) => {
                return Err(Error::Schema("grid: give either h or n, not both".into()))
            }
            (None, None) => return Err(Error::Schema("grid: give one of h or n".into())),
        };
        let spec = GridSpec::cover(bbox, h, 2).map_err(schema)?;
        if let Some(support) = weight.support_bbox() {
            let pad = h;
            if support.lo.x > bbox.lo.x - pad
                || support.lo.y > bbox.lo.y - pad
                || support.hi.x < bbox.hi.x + pad
                || support.hi.y < bbox.hi.y + pad
            {
                return Err(Error::Schema(
                    "bilinear weight samples must cover the domain bounding box with a one-cell margin"
                        .into(),
                ));
            }
        }
        let split = SplitParameter::new(self.tau_split).map_err(schema)?;
        for &p in &self.p_values {
            if !(p >= 1.0) || !p.is_finite() {
                return Err(Error::Schema(format!(
                    "density ratio exponents must be finite and ≥ 1, got {p}"
                )));
            }
        }
        if self.atoms.n_source == 0 || self.atoms.n_target == 0 {
            return Err(Error::Schema("atom budgets must be positive".into()));
        }
        let checks = match &self.checks {
            None => CheckKind::ALL.to_vec(),
            Some(list) => list.clone(),
        };
        Ok(Instance { domain, weight, datum, spec, split, checks })
    }
}

/// SHA-256 of the raw configuration text, lowercase hex.
pub fn config_hash(raw: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(raw.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> String {
        r#"{
            "domain": {"shape": "circle", "radius": 1.0},
            "weight": {"family": "constant", "a": 1.0},
            "boundary_datum": [
                {"theta_a": 0.0, "theta_b": 3.141592653589793, "kind": "constant", "value": 1.0},
                {"theta_a": 3.141592653589793, "theta_b": 6.283185307179586, "kind": "constant", "value": 0.0}
            ],
            "grid": {"h": 0.05}
        }"#
        .to_string()
    }

    #[test]
    fn minimal_config_builds_with_defaults() {
        let cfg = Config::from_str_checked(&minimal()).unwrap();
        assert_eq!(cfg.atoms.n_source, 64);
        assert_eq!(cfg.tau_split, 0.5);
        assert_eq!(cfg.p_values, vec![1.0, 2.0]);
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.out_dir, PathBuf::from("out"));
        let inst = cfg.build(Path::new(".")).unwrap();
        assert_eq!(inst.checks.len(), 6);
        assert!(inst.spec.nx > 8);
        // Round trip: serializing and reparsing reproduces the same schema.
        let text = serde_json::to_string(&cfg).unwrap();
        let again = Config::from_str_checked(&text).unwrap();
        assert_eq!(again.p_values, cfg.p_values);
    }

    #[test]
    fn unknown_keys_and_bad_tags_are_rejected_by_name() {
        let with_extra = minimal().replace("\"grid\"", "\"grd_extra\": 1, \"grid\"");
        let err = Config::from_str_checked(&with_extra).unwrap_err();
        assert!(err.to_string().contains("grd_extra"), "message: {err}");

        let typo = minimal().replace("\"constant\", \"a\"", "\"constnt\", \"a\"");
        let err = Config::from_str_checked(&typo).unwrap_err();
        assert!(err.to_string().contains("constnt"), "message: {err}");

        let bad_check = minimal().replace("\"grid\"", "\"checks\": [\"dualty\"], \"grid\"");
        let err = Config::from_str_checked(&bad_check).unwrap_err();
        assert!(err.to_string().contains("dualty"), "message: {err}");
    }

    #[test]
    fn grid_resolution_rules() {
        let neg = minimal().replace("{\"h\": 0.05}", "{\"h\": -0.1}");
        let err = Config::from_str_checked(&neg).unwrap().build(Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("spacing"), "message: {err}");
        assert!(matches!(err, Error::Schema(_)));

        let both = minimal().replace("{\"h\": 0.05}", "{\"h\": 0.05, \"n\": 64}");
        assert!(Config::from_str_checked(&both).unwrap().build(Path::new(".")).is_err());

        let none = minimal().replace("{\"h\": 0.05}", "{}");
        assert!(Config::from_str_checked(&none).unwrap().build(Path::new(".")).is_err());

        let by_n = minimal().replace("{\"h\": 0.05}", "{\"n\": 64}");
        let inst = Config::from_str_checked(&by_n).unwrap().build(Path::new(".")).unwrap();
        // 64 cells across the 2.0-wide box plus the two-cell margin each side.
        assert_eq!(inst.spec.nx, 64 + 4);
    }

    #[test]
    fn explicit_check_lists_are_honored() {
        let none = minimal().replace("\"grid\"", "\"checks\": [], \"grid\"");
        let inst = Config::from_str_checked(&none).unwrap().build(Path::new(".")).unwrap();
        assert!(inst.checks.is_empty());

        let some = minimal().replace("\"grid\"", "\"checks\": [\"duality\", \"mass_balance\"], \"grid\"");
        let inst = Config::from_str_checked(&some).unwrap().build(Path::new(".")).unwrap();
        assert_eq!(inst.checks, vec![CheckKind::Duality, CheckKind::MassBalance]);
        assert_eq!(CheckKind::Duality.name(), "duality");
    }

    #[test]
    fn hash_is_stable_and_content_sensitive() {
        let a = config_hash("alpha");
        let b = config_hash("alpha");
        let c = config_hash("alphb");
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 64);
        assert!(a.chars().all(|ch| ch.is_ascii_hexdigit()));
    }
}
