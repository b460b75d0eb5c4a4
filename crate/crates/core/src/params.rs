//! Physical inputs and the derived quantities every other module works from.
//!
//! Configurations are written in cyclic units (X/2π, Hz) and converted to
//! angular frequencies (rad/s) on derivation. All downstream formulas use the
//! angular values.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Boltzmann constant (J/K).
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Reduced Planck constant (J s).
pub const HBAR: f64 = 1.054_571_817e-34;

/// Hard and soft limits for the `κ ≫ Ω ≫ Γ` ordering.
pub const REGIME_HARD_RATIO: f64 = 10.0;
pub const REGIME_SOFT_RATIO: f64 = 100.0;

/// Symbolic feedback-gain rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GainRule {
    /// `G = 8C`: the gain at which the transfer is unsqueezed.
    #[serde(rename = "8C")]
    EightC,
}

/// How the dimensionless feedback gain `G` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GainPolicy {
    Rule(GainRule),
    Explicit(f64),
}

impl Default for GainPolicy {
    fn default() -> Self {
        GainPolicy::Rule(GainRule::EightC)
    }
}

/// Physical configuration, with rates in cyclic units (Hz).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// Mechanical resonance Ω/2π (Hz).
    pub omega_m_cyc: f64,
    /// Mechanical energy decay rate Γ/2π (Hz).
    pub gamma_m_cyc: f64,
    /// Feedback filter bandwidth Γ'/2π (Hz).
    pub gamma_f_cyc: f64,
    /// Optical linewidth κ/2π (Hz).
    pub kappa_cyc: f64,
    /// Coherent-amplitude-boosted optomechanical coupling g_om/2π (Hz).
    pub g_om_cyc: f64,
    /// Mechanical bath temperature (K).
    pub temperature: f64,
    /// Homodyne detection efficiency.
    pub eta: f64,
    #[serde(default)]
    pub gain_policy: GainPolicy,
    /// Use the Bose–Einstein occupancy instead of `k_B T / ħΩ`.
    #[serde(default)]
    pub exact_bose: bool,
}

impl SystemConfig {
    /// The operating point used throughout: Ω/2π = 1 MHz, Γ/2π = 1 Hz,
    /// Γ'/2π = 1.59 MHz, κ/2π = 100 MHz, g_om/2π = 395 kHz, T = 30 mK, η = 1.
    pub fn canonical() -> Self {
        SystemConfig {
            omega_m_cyc: 1.0e6,
            gamma_m_cyc: 1.0,
            gamma_f_cyc: 1.59e6,
            kappa_cyc: 100.0e6,
            g_om_cyc: 395.0e3,
            temperature: 0.030,
            eta: 1.0,
            gain_policy: GainPolicy::default(),
            exact_bose: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Coupling (cyclic, Hz) that yields cooperativity `c` at fixed Γ and κ.
    pub fn g_om_cyc_for_cooperativity(&self, c: f64) -> f64 {
        (c * self.gamma_m_cyc * self.kappa_cyc / 4.0).sqrt()
    }

    /// Copy with g_om set so that C = `c`, other rates unchanged.
    pub fn with_cooperativity(&self, c: f64) -> Self {
        SystemConfig {
            g_om_cyc: self.g_om_cyc_for_cooperativity(c),
            ..self.clone()
        }
    }

    /// Copy with C = `ratio` · n_th at this temperature.
    pub fn with_cooperativity_ratio(&self, ratio: f64) -> Self {
        let n_th = thermal_occupancy(
            self.temperature,
            2.0 * PI * self.omega_m_cyc,
            self.exact_bose,
        );
        self.with_cooperativity(ratio * n_th)
    }

    /// Stable SHA-256 of the canonical JSON encoding, hex encoded.
    pub fn hash_hex(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex_digest(text.as_bytes())
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

/// A machine-readable finding from [`validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub field: String,
    pub code: String,
    pub message: String,
}

impl Diagnostic {
    fn error(field: &str, code: &str, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Error,
            field: field.to_string(),
            code: code.to_string(),
            message: message.into(),
        }
    }

    fn warning(field: &str, code: &str, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Warning,
            field: field.to_string(),
            code: code.to_string(),
            message: message.into(),
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let level = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{level}[{}] {}: {}", self.code, self.field, self.message)
    }
}

/// Check a configuration against the positivity and regime requirements.
///
/// Never fails; the findings are the output.
pub fn validate(config: &SystemConfig) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let rates = [
        ("omega_m_cyc", config.omega_m_cyc),
        ("gamma_m_cyc", config.gamma_m_cyc),
        ("gamma_f_cyc", config.gamma_f_cyc),
        ("kappa_cyc", config.kappa_cyc),
        ("g_om_cyc", config.g_om_cyc),
    ];
    let mut rates_ok = true;
    for (field, value) in rates {
        if !(value.is_finite() && value > 0.0) {
            rates_ok = false;
            out.push(Diagnostic::error(
                field,
                "non-positive-rate",
                format!("must be finite and strictly positive, got {value}"),
            ));
        }
    }
    if !(config.temperature.is_finite() && config.temperature >= 0.0) {
        out.push(Diagnostic::error(
            "temperature",
            "negative-temperature",
            format!("must be finite and >= 0, got {}", config.temperature),
        ));
    }
    if !(config.eta > 0.0 && config.eta <= 1.0) {
        out.push(Diagnostic::error(
            "eta",
            "efficiency-out-of-range",
            format!("must lie in (0, 1], got {}", config.eta),
        ));
    }
    if let GainPolicy::Explicit(g) = config.gain_policy {
        if !(g.is_finite() && g >= 0.0) {
            out.push(Diagnostic::error(
                "gain_policy",
                "invalid-gain",
                format!("explicit gain must be finite and >= 0, got {g}"),
            ));
        }
    }
    if rates_ok {
        let optical = config.kappa_cyc / config.omega_m_cyc;
        if optical < REGIME_HARD_RATIO {
            out.push(Diagnostic::error(
                "kappa_cyc",
                "regime",
                format!("unresolved-sideband condition violated: kappa/omega_m = {optical:.3e} < {REGIME_HARD_RATIO}"),
            ));
        } else if optical < REGIME_SOFT_RATIO {
            out.push(Diagnostic::warning(
                "kappa_cyc",
                "regime",
                format!("weakly unresolved sideband: kappa/omega_m = {optical:.3e} < {REGIME_SOFT_RATIO}"),
            ));
        }
        let quality = config.omega_m_cyc / config.gamma_m_cyc;
        if quality < REGIME_HARD_RATIO {
            out.push(Diagnostic::error(
                "gamma_m_cyc",
                "regime",
                format!("high mechanical quality condition violated: omega_m/gamma_m = {quality:.3e} < {REGIME_HARD_RATIO}"),
            ));
        } else if quality < REGIME_SOFT_RATIO {
            out.push(Diagnostic::warning(
                "gamma_m_cyc",
                "regime",
                format!(
                    "low mechanical quality: omega_m/gamma_m = {quality:.3e} < {REGIME_SOFT_RATIO}"
                ),
            ));
        }
    }
    out
}

/// Angular rates and dimensionless groups derived from a [`SystemConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    /// Ω (rad/s).
    pub omega_m: f64,
    /// Γ (rad/s).
    pub gamma_m: f64,
    /// Γ' (rad/s).
    pub gamma_f: f64,
    /// κ (rad/s).
    pub kappa: f64,
    /// g_om (rad/s).
    pub g_om: f64,
    /// C = 4 g_om² / (Γ κ).
    pub cooperativity: f64,
    /// Mean thermal phonon occupancy.
    pub n_th: f64,
    /// Dimensionless feedback gain G.
    pub feedback_gain: f64,
    pub eta: f64,
}

impl DerivedParams {
    /// Feedback-broadened linewidth Γ(1 + G/2).
    pub fn gamma_eff(&self) -> f64 {
        self.gamma_m * (1.0 + 0.5 * self.feedback_gain)
    }

    /// √((1 − η)/η), the weight of detection vacuum relative to the input phase quadrature.
    pub fn loss_weight(&self) -> f64 {
        ((1.0 - self.eta) / self.eta).sqrt()
    }

    /// Symmetrized white-noise level of the mechanical bath, n_th + 1/2.
    pub fn thermal_level(&self) -> f64 {
        self.n_th + 0.5
    }

    /// Returns a copy with a different feedback gain.
    pub fn with_gain(mut self, gain: f64) -> Self {
        self.feedback_gain = gain;
        self
    }

    /// Bitwise fingerprint used to tie gains to the parameters that produced them.
    pub fn fingerprint(&self) -> u64 {
        // FNV-1a over the raw bit patterns.
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for v in [
            self.omega_m,
            self.gamma_m,
            self.gamma_f,
            self.kappa,
            self.g_om,
            self.cooperativity,
            self.n_th,
            self.feedback_gain,
            self.eta,
        ] {
            for byte in v.to_bits().to_le_bytes() {
                hash ^= u64::from(byte);
                hash = hash.wrapping_mul(0x0100_0000_01b3);
            }
        }
        hash
    }
}

pub fn thermal_occupancy(temperature: f64, omega_m: f64, exact_bose: bool) -> f64 {
    if temperature == 0.0 {
        return 0.0;
    }
    let ratio = HBAR * omega_m / (BOLTZMANN * temperature);
    if exact_bose {
        1.0 / ratio.exp_m1()
    } else {
        1.0 / ratio
    }
}

/// Convert to angular units and resolve C, n_th and G.
pub fn derive(config: &SystemConfig) -> Result<DerivedParams> {
    if let Some(d) = validate(config).into_iter().find(Diagnostic::is_error) {
        return Err(Error::Validation {
            field: d.field,
            message: d.message,
        });
    }
    let two_pi = 2.0 * PI;
    let omega_m = two_pi * config.omega_m_cyc;
    let gamma_m = two_pi * config.gamma_m_cyc;
    let gamma_f = two_pi * config.gamma_f_cyc;
    let kappa = two_pi * config.kappa_cyc;
    let g_om = two_pi * config.g_om_cyc;
    // Evaluated from the cyclic inputs so C carries no 2π rounding.
    let cooperativity =
        4.0 * config.g_om_cyc * config.g_om_cyc / (config.gamma_m_cyc * config.kappa_cyc);
    let n_th = thermal_occupancy(config.temperature, omega_m, config.exact_bose);
    let feedback_gain = match config.gain_policy {
        GainPolicy::Rule(GainRule::EightC) => 8.0 * cooperativity,
        GainPolicy::Explicit(g) => g,
    };
    Ok(DerivedParams {
        omega_m,
        gamma_m,
        gamma_f,
        kappa,
        g_om,
        cooperativity,
        n_th,
        feedback_gain,
        eta: config.eta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_cooperativity_and_occupancy() {
        let p = derive(&SystemConfig::canonical()).unwrap();
        approx::assert_relative_eq!(p.cooperativity, 6241.0, max_relative = 1e-12);
        // k_B * 0.03 / (ħ * 2π * 1e6)
        approx::assert_relative_eq!(p.n_th, 625.098_574_082_837, max_relative = 1e-9);
        let ratio = p.cooperativity / p.n_th;
        assert!((ratio - 10.0).abs() < 0.05, "C/n_th = {ratio}");
        assert_eq!(p.feedback_gain / p.cooperativity, 8.0);
    }

    #[test]
    fn zero_temperature_has_no_phonons() {
        let mut cfg = SystemConfig::canonical();
        cfg.temperature = 0.0;
        assert_eq!(derive(&cfg).unwrap().n_th, 0.0);
        cfg.exact_bose = true;
        assert_eq!(derive(&cfg).unwrap().n_th, 0.0);
    }

    #[test]
    fn exact_bose_is_below_classical() {
        let mut cfg = SystemConfig::canonical();
        cfg.exact_bose = true;
        let n = derive(&cfg).unwrap().n_th;
        // Bose factor is k_BT/ħΩ - 1/2 + O(ħΩ/k_BT).
        assert!((n - (625.0986 - 0.5)).abs() < 1e-3, "{n}");
    }

    #[test]
    fn canonical_validates_cleanly() {
        assert!(validate(&SystemConfig::canonical()).is_empty());
    }

    #[test]
    fn resolved_sideband_is_rejected() {
        let mut cfg = SystemConfig::canonical();
        cfg.kappa_cyc = 1.0e3;
        let diags = validate(&cfg);
        let d = diags.iter().find(|d| d.field == "kappa_cyc").unwrap();
        assert!(d.is_error());
        assert!(d.message.contains("unresolved-sideband condition violated"));
        assert!(
            matches!(derive(&cfg), Err(Error::Validation { field, .. }) if field == "kappa_cyc")
        );
    }

    #[test]
    fn soft_regime_only_warns() {
        let mut cfg = SystemConfig::canonical();
        cfg.kappa_cyc = 50.0e6;
        let diags = validate(&cfg);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].severity, Severity::Warning);
        assert!(derive(&cfg).is_ok());
    }

    #[test]
    fn zero_efficiency_is_an_error() {
        let mut cfg = SystemConfig::canonical();
        cfg.eta = 0.0;
        assert!(validate(&cfg)
            .iter()
            .any(|d| d.field == "eta" && d.is_error()));
        cfg.eta = 1.5;
        assert!(derive(&cfg).is_err());
    }

    #[test]
    fn non_positive_rate_names_field() {
        let mut cfg = SystemConfig::canonical();
        cfg.gamma_f_cyc = -1.0;
        match derive(&cfg) {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "gamma_f_cyc"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn json_round_trip_with_rule_and_explicit_gain() {
        let text = r#"{"omega_m_cyc":1e6,"gamma_m_cyc":1,"gamma_f_cyc":1.59e6,"kappa_cyc":1e8,
            "g_om_cyc":395000,"temperature":0.03,"eta":1,"gain_policy":"8C"}"#;
        let cfg = SystemConfig::from_json(text).unwrap();
        assert_eq!(cfg, SystemConfig::canonical());
        let text = text.replace("\"8C\"", "12.5");
        let cfg = SystemConfig::from_json(&text).unwrap();
        assert_eq!(cfg.gain_policy, GainPolicy::Explicit(12.5));
        assert_eq!(derive(&cfg).unwrap().feedback_gain, 12.5);
    }

    #[test]
    fn coupling_for_cooperativity_inverts_definition() {
        let cfg = SystemConfig::canonical();
        let g = cfg.g_om_cyc_for_cooperativity(6241.0);
        approx::assert_relative_eq!(g, 395.0e3, max_relative = 1e-12);
    }
}
