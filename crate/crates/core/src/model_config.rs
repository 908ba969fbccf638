//! Physical and numerical parameters, the flat key-value configuration file,
//! and its validation.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dielectric::{
    estimate_m_constants, layered_lift_model, LayerGeometry, PermittivityModel, Resolution,
    Sigma1Profile,
};
use crate::minimizing_movements::{lower_bound_constant, SchemeConstants};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read configuration: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse configuration: {0}")]
    Parse(String),
    #[error("invalid configuration: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// `L`: the beam occupies `(-L, L)`.
    pub half_width: f64,
    /// `H`: distance from the undeformed plate to the top of the layer.
    pub gap: f64,
    /// `d`: layer thickness.
    pub thickness: f64,
    pub beta: f64,
    pub tau: f64,
    pub a: f64,
    /// `V`: plate potential.
    pub potential: f64,
}

impl PhysicalParams {
    /// `L = H = d = 1`, `beta = 2`, `tau = 1`, `a = 0`, `V = 2`.
    pub fn example() -> Self {
        Self {
            half_width: 1.0,
            gap: 1.0,
            thickness: 1.0,
            beta: 2.0,
            tau: 1.0,
            a: 0.0,
            potential: 2.0,
        }
    }

    pub fn geometry(&self) -> LayerGeometry {
        LayerGeometry {
            half_width: self.half_width,
            gap: self.gap,
            thickness: self.thickness,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumericalParams {
    pub n_x: usize,
    pub n_z_layer: usize,
    pub n_eta_gap: usize,
    pub eps_gap: f64,
    pub tol_fp: f64,
    pub tol_as: f64,
    pub max_fp: usize,
    pub max_as: usize,
    /// Initial fixed-point damping `theta`.
    pub theta: f64,
    pub delta: f64,
    pub t_end: f64,
}

impl NumericalParams {
    /// Defaults for everything except the time step and horizon.
    pub fn defaults(gap: f64, delta: f64, t_end: f64) -> Self {
        Self {
            n_x: 200,
            n_z_layer: 32,
            n_eta_gap: 32,
            eps_gap: 1e-6 * gap,
            tol_fp: 1e-10,
            tol_as: 1e-12,
            max_fp: 200,
            max_as: 100,
            theta: 1.0,
            delta,
            t_end,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InitialCondition {
    Zero,
    /// `amplitude * (1 - (x/L)^2)^2`
    Bump { amplitude: f64 },
    /// Nodal table file, one row per grid node.
    Table { path: String },
}

/// Everything the simulator needs, after validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidatedConfig {
    pub physical: PhysicalParams,
    pub numerical: NumericalParams,
    pub sigma1: Sigma1Profile,
    pub sigma2: f64,
    /// User-certified `(sigma_min, sigma_max)`, if given.
    pub sigma_bounds: Option<(f64, f64)>,
    pub w_max: f64,
    pub initial: InitialCondition,
    pub snapshot_every: usize,
}

/// Result of a successful validation: the configuration plus the keys that
/// were filled with defaults and non-fatal warnings.
#[derive(Debug, Clone)]
pub struct Validation {
    pub config: ValidatedConfig,
    pub scheme: SchemeConstants,
    pub defaulted: Vec<String>,
    pub warnings: Vec<String>,
}

/// On-disk form: flat keys, all optional until validated.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(rename = "L", skip_serializing_if = "Option::is_none")]
    pub l: Option<f64>,
    #[serde(rename = "H", skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(rename = "V", skip_serializing_if = "Option::is_none")]
    pub v: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma1_kind: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma1_slope: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma1_amplitude: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_x: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_z_layer: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_eta_gap: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_gap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol_fp: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol_as: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_fp: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_as: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u0_kind: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u0_amplitude: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u0_file: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshot_every: Option<i64>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config always serializes")
    }
}

pub const DEFAULT_T_END: f64 = 1.0;

impl ValidatedConfig {
    /// Fully populated raw form; validating it reproduces `self`.
    pub fn to_raw(&self) -> RawConfig {
        let p = &self.physical;
        let n = &self.numerical;
        let (kind, base, slope, amp) = match self.sigma1 {
            Sigma1Profile::Constant { value } => ("constant", value, None, None),
            Sigma1Profile::Affine { value, slope } => ("affine", value, Some(slope), None),
            Sigma1Profile::Bump { base, amplitude } => ("bump", base, None, Some(amplitude)),
        };
        let (u0_kind, u0_amplitude, u0_file) = match &self.initial {
            InitialCondition::Zero => ("zero", None, None),
            InitialCondition::Bump { amplitude } => ("bump", Some(*amplitude), None),
            InitialCondition::Table { path } => ("table", None, Some(path.clone())),
        };
        RawConfig {
            l: Some(p.half_width),
            h: Some(p.gap),
            d: Some(p.thickness),
            beta: Some(p.beta),
            tau: Some(p.tau),
            a: Some(p.a),
            v: Some(p.potential),
            sigma1_kind: Some(kind.to_string()),
            sigma1: Some(base),
            sigma1_slope: slope,
            sigma1_amplitude: amp,
            sigma2: Some(self.sigma2),
            sigma_min: self.sigma_bounds.map(|b| b.0),
            sigma_max: self.sigma_bounds.map(|b| b.1),
            n_x: Some(n.n_x as i64),
            n_z_layer: Some(n.n_z_layer as i64),
            n_eta_gap: Some(n.n_eta_gap as i64),
            eps_gap: Some(n.eps_gap),
            tol_fp: Some(n.tol_fp),
            tol_as: Some(n.tol_as),
            max_fp: Some(n.max_fp as i64),
            max_as: Some(n.max_as as i64),
            theta: Some(n.theta),
            delta: Some(n.delta),
            t_end: Some(n.t_end),
            w_max: Some(self.w_max),
            u0_kind: Some(u0_kind.to_string()),
            u0_amplitude,
            u0_file,
            snapshot_every: Some(self.snapshot_every as i64),
        }
    }

    pub fn permittivity(&self) -> Result<PermittivityModel, crate::dielectric::DielectricError> {
        let perm =
            PermittivityModel::from_profile(self.sigma1, self.sigma2, self.physical.geometry())?;
        match self.sigma_bounds {
            Some((lo, hi)) => perm.with_certified_bounds(lo, hi),
            None => Ok(perm),
        }
    }
}

struct Collector<'a> {
    errors: Vec<String>,
    defaulted: &'a mut Vec<String>,
}

impl Collector<'_> {
    fn or<T: std::fmt::Debug + Copy>(&mut self, v: Option<T>, key: &str, default: T) -> T {
        v.unwrap_or_else(|| {
            self.defaulted.push(format!("{key} = {default:?}"));
            default
        })
    }

    fn required(&mut self, v: Option<f64>, key: &str) -> f64 {
        v.unwrap_or_else(|| {
            self.errors.push(format!("{key} is required"));
            f64::NAN
        })
    }

    fn check(&mut self, ok: bool, msg: impl Into<String>) {
        if !ok {
            self.errors.push(msg.into());
        }
    }

    fn count(&mut self, v: Option<i64>, key: &str, default: usize, min: usize) -> usize {
        match v {
            None => {
                self.defaulted.push(format!("{key} = {default}"));
                default
            }
            Some(k) if k >= min as i64 => k as usize,
            Some(k) => {
                self.errors.push(format!("{key} must be at least {min}, got {k}"));
                min
            }
        }
    }
}

/// Checks every constraint, fills defaults, and computes the step-size bound.
pub fn validate_config(raw: &RawConfig) -> Result<Validation, ConfigError> {
    let mut defaulted = Vec::new();
    let mut warnings = Vec::new();
    let mut c = Collector {
        errors: Vec::new(),
        defaulted: &mut defaulted,
    };

    let half_width = c.required(raw.l, "L");
    let gap = c.required(raw.h, "H");
    let thickness = c.required(raw.d, "d");
    let beta = c.required(raw.beta, "beta");
    let potential = c.required(raw.v, "V");
    let tau = c.or(raw.tau, "tau", 0.0);
    let a = c.or(raw.a, "a", 0.0);
    for (val, key) in [
        (half_width, "L"),
        (gap, "H"),
        (thickness, "d"),
        (beta, "beta"),
    ] {
        if !val.is_nan() {
            c.check(val > 0.0 && val.is_finite(), format!("{key} must be positive"));
        }
    }
    if !potential.is_nan() {
        c.check(potential >= 0.0 && potential.is_finite(), "V must be positive");
        if potential == 0.0 {
            warnings.push("V = 0: electrostatic actuation is switched off".to_string());
        }
    }
    c.check(tau >= 0.0, "tau must be non-negative");
    c.check(a >= 0.0, "a must be non-negative");

    let sigma2 = c.or(raw.sigma2, "sigma2", 1.0);
    c.check(sigma2 > 0.0, "sigma2 must be positive");
    let base = c.or(raw.sigma1, "sigma1", 1.0);
    let kind = raw.sigma1_kind.clone().unwrap_or_else(|| {
        c.defaulted.push("sigma1_kind = \"constant\"".to_string());
        "constant".to_string()
    });
    let sigma1 = match kind.as_str() {
        "constant" => Sigma1Profile::Constant { value: base },
        "affine" => Sigma1Profile::Affine {
            value: base,
            slope: c.or(raw.sigma1_slope, "sigma1_slope", 0.0),
        },
        "bump" => Sigma1Profile::Bump {
            base,
            amplitude: c.or(raw.sigma1_amplitude, "sigma1_amplitude", 0.0),
        },
        other => {
            c.errors.push(format!(
                "sigma1_kind must be one of constant, affine, bump (got {other:?})"
            ));
            Sigma1Profile::Constant { value: base }
        }
    };
    let sigma_bounds = match (raw.sigma_min, raw.sigma_max) {
        (Some(lo), Some(hi)) => {
            c.check(lo <= hi, "sigma_min must not exceed sigma_max");
            Some((lo, hi))
        }
        (None, None) => None,
        _ => {
            c.errors
                .push("sigma_min and sigma_max must be given together".to_string());
            None
        }
    };

    let mut num = NumericalParams::defaults(gap, 0.0, DEFAULT_T_END);
    num.n_x = c.count(raw.n_x, "n_x", num.n_x, 8);
    num.n_z_layer = c.count(raw.n_z_layer, "n_z_layer", num.n_z_layer, 4);
    num.n_eta_gap = c.count(raw.n_eta_gap, "n_eta_gap", num.n_eta_gap, 4);
    num.max_fp = c.count(raw.max_fp, "max_fp", num.max_fp, 1);
    num.max_as = c.count(raw.max_as, "max_as", num.max_as, 1);
    num.eps_gap = c.or(raw.eps_gap, "eps_gap", num.eps_gap);
    num.tol_fp = c.or(raw.tol_fp, "tol_fp", num.tol_fp);
    num.tol_as = c.or(raw.tol_as, "tol_as", num.tol_as);
    num.theta = c.or(raw.theta, "theta", num.theta);
    num.t_end = c.or(raw.t_end, "t_end", num.t_end);
    c.check(num.eps_gap > 0.0, "eps_gap must be positive");
    if gap > 0.0 {
        c.check(num.eps_gap < gap / 10.0, "eps_gap < H/10 violated");
    }
    c.check(num.tol_fp > 0.0, "tol_fp must be positive");
    c.check(num.tol_as > 0.0, "tol_as must be positive");
    c.check(num.theta > 0.0 && num.theta <= 1.0, "theta must lie in (0, 1]");
    c.check(num.t_end > 0.0, "t_end must be positive");
    if let Some(delta) = raw.delta {
        c.check(delta > 0.0, "delta must be positive");
    }

    let w_max = c.or(raw.w_max, "w_max", 2.0 * gap);
    if gap > 0.0 {
        c.check(w_max > -gap, "w_max must exceed -H");
    }

    let u0_kind = raw.u0_kind.clone().unwrap_or_else(|| {
        c.defaulted.push("u0_kind = \"zero\"".to_string());
        "zero".to_string()
    });
    let initial = match u0_kind.as_str() {
        "zero" => InitialCondition::Zero,
        "bump" => {
            let amplitude = c.or(raw.u0_amplitude, "u0_amplitude", 0.0);
            if gap > 0.0 {
                c.check(amplitude >= -gap, "u0_amplitude must be at least -H");
            }
            InitialCondition::Bump { amplitude }
        }
        "table" => match &raw.u0_file {
            Some(p) => InitialCondition::Table { path: p.clone() },
            None => {
                c.errors.push("u0_kind = \"table\" requires u0_file".to_string());
                InitialCondition::Zero
            }
        },
        other => {
            c.errors.push(format!(
                "u0_kind must be one of zero, bump, table (got {other:?})"
            ));
            InitialCondition::Zero
        }
    };
    let snapshot_every = c.count(raw.snapshot_every, "snapshot_every", 10, 0);

    if !c.errors.is_empty() {
        return Err(ConfigError::Invalid(c.errors));
    }

    let physical = PhysicalParams {
        half_width,
        gap,
        thickness,
        beta,
        tau,
        a,
        potential,
    };
    let mut config = ValidatedConfig {
        physical,
        numerical: num,
        sigma1,
        sigma2,
        sigma_bounds,
        w_max,
        initial,
        snapshot_every,
    };
    let perm = config
        .permittivity()
        .map_err(|e| ConfigError::Invalid(vec![e.to_string()]))?;
    let bdata = layered_lift_model(&perm, potential)
        .map_err(|e| ConfigError::Invalid(vec![e.to_string()]))?;
    let m = estimate_m_constants(&bdata, w_max, Resolution::default())
        .map_err(|e| ConfigError::Invalid(vec![e.to_string()]))?;
    let scheme = lower_bound_constant(&physical, perm.sigma_max, &m)
        .map_err(|e| ConfigError::Invalid(vec![e.to_string()]))?;
    config.numerical.delta = match raw.delta {
        Some(d) => d,
        None => {
            let d = 0.5 * scheme.delta0;
            defaulted.push(format!("delta = {d:?} (delta0 / 2)"));
            d
        }
    };
    if config.numerical.delta > scheme.delta0 {
        warnings.push(format!(
            "delta = {} exceeds delta0 = {:e}; the decrease property is then not guaranteed",
            config.numerical.delta, scheme.delta0
        ));
    }
    Ok(Validation {
        config,
        scheme,
        defaulted,
        warnings,
    })
}

pub fn load_and_validate(path: &Path) -> Result<Validation, ConfigError> {
    validate_config(&RawConfig::load(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
L = 1.0
H = 1.0
d = 1.0
beta = 2.0
tau = 1.0
a = 0.0
V = 2.0
n_x = 32
n_z_layer = 8
n_eta_gap = 8
delta = 0.001
"#;

    #[test]
    fn example_configuration_validates() {
        let v = validate_config(&RawConfig::parse(BASE).unwrap()).unwrap();
        assert_eq!(v.config.physical, PhysicalParams::example());
        assert_eq!(v.config.numerical.n_x, 32);
        assert!(v.defaulted.iter().any(|k| k.starts_with("eps_gap")));
        assert!(v.defaulted.iter().any(|k| k.starts_with("tol_fp")));
    }

    #[test]
    fn zero_gap_is_rejected() {
        let raw = RawConfig::parse(&BASE.replace("H = 1.0", "H = 0.0")).unwrap();
        let err = validate_config(&raw).unwrap_err().to_string();
        assert!(err.contains("H must be positive"), "{err}");
    }

    #[test]
    fn coincidence_threshold_must_be_small() {
        let raw = RawConfig::parse(&format!("{BASE}eps_gap = 1.0\n")).unwrap();
        let err = validate_config(&raw).unwrap_err().to_string();
        assert!(err.contains("eps_gap < H/10 violated"), "{err}");
    }

    #[test]
    fn unknown_keys_are_errors() {
        assert!(matches!(
            RawConfig::parse(&format!("{BASE}gamma = 3\n")),
            Err(ConfigError::Parse(_))
        ));
    }

    #[test]
    fn several_violations_are_collected() {
        let raw = RawConfig::parse(
            &BASE
                .replace("beta = 2.0", "beta = -1.0")
                .replace("n_x = 32", "n_x = 4"),
        )
        .unwrap();
        match validate_config(&raw) {
            Err(ConfigError::Invalid(v)) => assert_eq!(v.len(), 2, "{v:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn validation_is_idempotent() {
        let raw = RawConfig::parse(&format!(
            "{BASE}sigma1_kind = \"bump\"\nsigma1_amplitude = 0.5\nu0_kind = \"bump\"\nu0_amplitude = 0.1\n"
        ))
        .unwrap();
        let once = validate_config(&raw).unwrap().config;
        let twice = validate_config(&once.to_raw()).unwrap().config;
        assert_eq!(once, twice);
        let thrice = validate_config(&RawConfig::parse(&twice.to_raw().to_toml()).unwrap())
            .unwrap()
            .config;
        assert_eq!(once, thrice);
    }

    #[test]
    fn oversized_step_is_a_warning() {
        let raw = RawConfig::parse(&BASE.replace("delta = 0.001", "delta = 10.0")).unwrap();
        let v = validate_config(&raw).unwrap();
        assert!(v.warnings.iter().any(|w| w.contains("exceeds delta0")));
    }

    #[test]
    fn corrupted_sigma_bounds_are_rejected() {
        let raw = RawConfig::parse(&format!("{BASE}sigma_min = 2.0\nsigma_max = 3.0\n")).unwrap();
        assert!(matches!(validate_config(&raw), Err(ConfigError::Invalid(_))));
    }
}
