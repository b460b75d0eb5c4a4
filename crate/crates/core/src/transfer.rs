//! Frequency responses of the feedback-cooled resonator and the transfer gains.
//!
//! Conventions: forward Fourier transform `x(ω) = ∫ x(t) e^{+iωt} dt`, so a
//! time derivative becomes `−iω`. The retardation factor
//! `φ(ω) = Ω / (Γ/2 − iω)`, the feedback filter `f(ω)`, and the broadened
//! susceptibility `χ(ω) = 1 / (Ω φ⁻¹ + (Ω + GΓ f / 2) φ)` all have real
//! time-domain kernels, hence `h(−ω) = conj(h(ω))`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::DerivedParams;
use crate::quadrature::{self, QuadSettings};

/// |denominator| below this multiple of Ω is treated as a pole of χ on the real axis.
pub const DEGENERATE_CHI_THRESHOLD: f64 = 1e-12;

/// Default relative tolerance for the spectral integrals.
pub const SPECTRAL_REL_TOL: f64 = 1e-10;

/// Largest accepted departure of the modeshape norm from unity.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;

/// A causal feedback filter, described by its frequency response.
pub trait FeedbackFilter: Sync {
    fn response(&self, omega: f64) -> Complex64;

    /// Whether the closed loop has a steady state; `None` if unknown.
    fn closed_loop_stable(&self, _params: &DerivedParams) -> Option<bool> {
        None
    }
}

/// `f(ω) = Γ'Ω / (ω² − Ω² + iΓ'ω)`, normalized so `f(±Ω) = ∓i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneralizedLorentzian {
    pub bandwidth: f64,
    pub center: f64,
}

impl GeneralizedLorentzian {
    pub fn from_params(p: &DerivedParams) -> Self {
        GeneralizedLorentzian {
            bandwidth: p.gamma_f,
            center: p.omega_m,
        }
    }
}

impl FeedbackFilter for GeneralizedLorentzian {
    #[inline]
    fn response(&self, omega: f64) -> Complex64 {
        let num = Complex64::new(self.bandwidth * self.center, 0.0);
        let den = Complex64::new(
            omega * omega - self.center * self.center,
            self.bandwidth * omega,
        );
        num / den
    }

    fn closed_loop_stable(&self, p: &DerivedParams) -> Option<bool> {
        Some(
            closed_loop_margins(p, self.bandwidth)
                .iter()
                .all(|&m| m > 0.0),
        )
    }
}

/// Routh–Hurwitz quantities of the closed-loop characteristic polynomial
/// `[(s + Γ/2)² + Ω²](s² + Γ's + Ω²) − GΓΓ'Ω²/2` in units of Ω. All must be
/// positive for every pole to lie in the left half-plane.
pub fn closed_loop_margins(p: &DerivedParams, gamma_f: f64) -> [f64; 6] {
    let w = p.omega_m;
    let e = p.gamma_m / w;
    let b = gamma_f / w;
    let (b1, b0) = (e, 0.25 * e * e + 1.0);
    let a3 = b1 + b;
    let a2 = b0 + 1.0 + b1 * b;
    let a1 = b1 + b0 * b;
    let a0 = b0 - 0.5 * p.feedback_gain * e * b;
    [
        a3,
        a2,
        a1,
        a0,
        a3 * a2 - a1,
        a3 * a2 * a1 - a1 * a1 - a3 * a3 * a0,
    ]
}

/// Complex responses at one angular frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseEval {
    pub omega: f64,
    pub phi: Complex64,
    pub f: Complex64,
    pub chi: Complex64,
    pub u: Complex64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GainSource {
    /// Quadrature; carries |(1/2π)∫|u|² dω − 1| for the resulting g_Y.
    Numeric { normalization_residual: f64 },
    /// High-Q, wide-filter closed forms.
    Analytic,
}

/// Amplitude (X → Q) and phase (Y → P) quadrature transfer gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gains {
    pub g_x: f64,
    pub g_y: f64,
    /// √(g_X g_Y), insensitive to squeezing.
    pub overall: f64,
    /// g_X / g_Y.
    pub squeeze: f64,
    pub source: GainSource,
    /// [`DerivedParams::fingerprint`] of the parameters the gains belong to.
    pub params_fingerprint: u64,
}

impl Gains {
    pub fn new(g_x: f64, g_y: f64, source: GainSource, params: &DerivedParams) -> Self {
        Gains {
            g_x,
            g_y,
            overall: (g_x * g_y).sqrt(),
            squeeze: g_x / g_y,
            source,
            params_fingerprint: params.fingerprint(),
        }
    }

    /// Unit gains, mostly useful for tests and for comparisons without rescaling.
    pub fn unity() -> Self {
        Self::fixed(1.0, 1.0)
    }

    /// Gains given directly, detached from any parameter set.
    pub fn fixed(g_x: f64, g_y: f64) -> Self {
        Gains {
            g_x,
            g_y,
            overall: (g_x * g_y).sqrt(),
            squeeze: g_x / g_y,
            source: GainSource::Analytic,
            params_fingerprint: 0,
        }
    }
}

/// Response functions for a given parameter set and feedback filter.
#[derive(Debug, Clone, Copy)]
pub struct ResponseModel<'a, F: FeedbackFilter = GeneralizedLorentzian> {
    pub params: &'a DerivedParams,
    pub filter: F,
}

impl<'a> ResponseModel<'a, GeneralizedLorentzian> {
    pub fn new(params: &'a DerivedParams) -> Self {
        ResponseModel {
            params,
            filter: GeneralizedLorentzian::from_params(params),
        }
    }
}

impl<'a, F: FeedbackFilter> ResponseModel<'a, F> {
    pub fn with_filter(params: &'a DerivedParams, filter: F) -> Self {
        ResponseModel { params, filter }
    }

    #[inline]
    pub fn phi(&self, omega: f64) -> Complex64 {
        let p = self.params;
        Complex64::new(p.omega_m, 0.0) / Complex64::new(0.5 * p.gamma_m, -omega)
    }

    #[inline]
    pub fn filter(&self, omega: f64) -> Complex64 {
        self.filter.response(omega)
    }

    /// χ together with the φ and f it was built from.
    #[inline]
    pub(crate) fn chi_parts(&self, omega: f64) -> Result<(Complex64, Complex64, Complex64)> {
        let p = self.params;
        let phi = self.phi(omega);
        let f = self.filter(omega);
        // Ω φ⁻¹ = Γ/2 − iω exactly.
        let den = Complex64::new(0.5 * p.gamma_m, -omega)
            + (p.omega_m + 0.5 * p.feedback_gain * p.gamma_m * f) * phi;
        let magnitude = den.norm();
        if !(magnitude >= DEGENERATE_CHI_THRESHOLD * p.omega_m) {
            return Err(Error::DegenerateSusceptibility { omega, magnitude });
        }
        Ok((den.inv(), phi, f))
    }

    pub fn chi(&self, omega: f64) -> Result<Complex64> {
        self.chi_parts(omega).map(|(chi, _, _)| chi)
    }

    /// `G f(ω) / 8C`, the relative weight of X_in in the transferred amplitude quadrature.
    #[inline]
    pub(crate) fn feedback_ratio(&self, f: Complex64) -> Complex64 {
        let p = self.params;
        f * (p.feedback_gain / (8.0 * p.cooperativity))
    }

    /// Spectral modeshape `u(ω) = (2√(ΓC)/g_Y) χ(ω) (G f(ω)/8C − i)`.
    pub fn modeshape(&self, omega: f64, g_y: f64) -> Result<Complex64> {
        let p = self.params;
        let (chi, _, f) = self.chi_parts(omega)?;
        let bracket = self.feedback_ratio(f) - Complex64::i();
        Ok(chi * bracket * (2.0 * (p.gamma_m * p.cooperativity).sqrt() / g_y))
    }

    pub fn evaluate(&self, omega: f64, g_y: f64) -> Result<ResponseEval> {
        let p = self.params;
        let (chi, phi, f) = self.chi_parts(omega)?;
        let bracket = self.feedback_ratio(f) - Complex64::i();
        Ok(ResponseEval {
            omega,
            phi,
            f,
            chi,
            u: chi * bracket * (2.0 * (p.gamma_m * p.cooperativity).sqrt() / g_y),
        })
    }

    /// ∫|χ|²(|Gf/8C|² + 1) dω and ∫|χ|² Im φ Im f dω in one adaptive pass.
    fn gain_integrals(&self) -> Result<[f64; 2]> {
        self.gain_integrals_on(&spectral_breakpoints(self.params))
    }

    fn gain_integrals_on(&self, breaks: &[f64]) -> Result<[f64; 2]> {
        let settings = QuadSettings {
            rel_tol: SPECTRAL_REL_TOL,
            ..Default::default()
        };
        let mut failure = None;
        let result = quadrature::integrate(
            |w| match self.chi_parts(w) {
                Ok((chi, phi, f)) => {
                    let c2 = chi.norm_sqr();
                    let a = self.feedback_ratio(f);
                    [c2 * (a.norm_sqr() + 1.0), c2 * phi.im * f.im]
                }
                Err(e) => {
                    failure.get_or_insert(e);
                    [0.0, 0.0]
                }
            },
            breaks,
            true,
            &settings,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        Ok(result?.value)
    }

    /// g_Y from the boson normalization of the transferred mode.
    pub fn gain_y_numeric(&self) -> Result<f64> {
        let p = self.params;
        let [norm, _] = self.gain_integrals()?;
        let g_y = (4.0 * p.gamma_m * p.cooperativity * norm / (2.0 * std::f64::consts::PI)).sqrt();
        check_positive("g_y", g_y)
    }

    /// g_Y with the finite panels ending at ±`cutoff` instead of the default Λ.
    pub fn gain_y_with_cutoff(&self, cutoff: f64) -> Result<f64> {
        let p = self.params;
        let [norm, _] = self.gain_integrals_on(&spectral_breakpoints_with_cutoff(p, cutoff))?;
        check_positive(
            "g_y",
            (4.0 * p.gamma_m * p.cooperativity * norm / (2.0 * std::f64::consts::PI)).sqrt(),
        )
    }

    /// g_X from requiring the residual optical noise on Q to commute with the transferred mode.
    pub fn gain_x_numeric(&self, g_y: f64) -> Result<f64> {
        let p = self.params;
        if !(g_y > 0.0) {
            return Err(Error::Contract(format!("g_y must be positive, got {g_y}")));
        }
        let [_, cross] = self.gain_integrals()?;
        Ok(-p.feedback_gain * p.gamma_m * cross / (2.0 * std::f64::consts::PI * g_y))
    }

    pub fn check_stability(&self) -> Result<()> {
        let p = self.params;
        match self.filter.closed_loop_stable(p) {
            Some(false) => Err(Error::Unstable(format!(
                "feedback gain G = {:e} exceeds the stable range for these rates",
                p.feedback_gain
            ))),
            _ => Ok(()),
        }
    }

    pub fn gains_numeric(&self) -> Result<Gains> {
        let p = self.params;
        self.check_stability()?;
        let [norm, cross] = self.gain_integrals()?;
        let two_pi = 2.0 * std::f64::consts::PI;
        let g_y = check_positive(
            "g_y",
            (4.0 * p.gamma_m * p.cooperativity * norm / two_pi).sqrt(),
        )?;
        let g_x = -p.feedback_gain * p.gamma_m * cross / (two_pi * g_y);
        let residual = (self.modeshape_norm(g_y)? - 1.0).abs();
        Ok(Gains::new(
            g_x,
            g_y,
            GainSource::Numeric {
                normalization_residual: residual,
            },
            p,
        ))
    }

    /// (1/2π) ∫ |u(ω)|² dω.
    pub fn modeshape_norm(&self, g_y: f64) -> Result<f64> {
        let breaks = spectral_breakpoints(self.params);
        let settings = QuadSettings {
            rel_tol: SPECTRAL_REL_TOL,
            ..Default::default()
        };
        let mut failure = None;
        let value = quadrature::integrate_scalar(
            |w| match self.modeshape(w, g_y) {
                Ok(u) => u.norm_sqr(),
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            },
            &breaks,
            true,
            &settings,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        Ok(value? / (2.0 * std::f64::consts::PI))
    }
}

fn check_positive(name: &str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(Error::Contract(format!(
            "{name} must be positive and finite, got {value}"
        )))
    }
}

/// Panel boundaries for integrands peaked at ±Ω (width ≈ Γ_eff) and at 0 (width ≈ Γ).
///
/// The outermost breaks are ±Λ with Λ = max(20Ω, 10Γ'); quadrature continues
/// onto the tails beyond them.
pub fn spectral_breakpoints(p: &DerivedParams) -> Vec<f64> {
    spectral_breakpoints_with_cutoff(p, (20.0 * p.omega_m).max(10.0 * p.gamma_f))
}

pub fn spectral_breakpoints_with_cutoff(p: &DerivedParams, cutoff: f64) -> Vec<f64> {
    let omega = p.omega_m;
    let peak = (1e3 * p.gamma_eff()).max(1e-2 * omega).min(0.5 * omega);
    let center = (1e3 * p.gamma_m).min(0.25 * omega);
    let mut breaks = vec![
        -cutoff,
        -omega - peak,
        -omega,
        -omega + peak,
        -center,
        0.0,
        center,
        omega - peak,
        omega,
        omega + peak,
        cutoff,
    ];
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    breaks.retain(|b| b.abs() <= cutoff);
    breaks
}

pub fn phi(omega: f64, params: &DerivedParams) -> Complex64 {
    ResponseModel::new(params).phi(omega)
}

pub fn filter(omega: f64, params: &DerivedParams) -> Complex64 {
    ResponseModel::new(params).filter(omega)
}

pub fn chi(omega: f64, params: &DerivedParams) -> Result<Complex64> {
    ResponseModel::new(params).chi(omega)
}

pub fn modeshape(omega: f64, params: &DerivedParams, g_y: f64) -> Result<Complex64> {
    ResponseModel::new(params).modeshape(omega, g_y)
}

pub fn gain_y_numeric(params: &DerivedParams) -> Result<f64> {
    ResponseModel::new(params).gain_y_numeric()
}

pub fn gain_x_numeric(params: &DerivedParams, g_y: f64) -> Result<f64> {
    ResponseModel::new(params).gain_x_numeric(g_y)
}

pub fn gains_numeric(params: &DerivedParams) -> Result<Gains> {
    ResponseModel::new(params).gains_numeric()
}

/// Closed-form gains valid for Ω ≫ Γ_eff and Γ' ≫ Ω:
/// `g_Y = 2√(C(1 + G²/64C²)/(2 + G))`, `g_X = 1/(g_Y(1 + 2/G))`.
pub fn gains_analytic(params: &DerivedParams) -> Gains {
    let c = params.cooperativity;
    let g = params.feedback_gain;
    let g_y = 2.0 * (c * (1.0 + g * g / (64.0 * c * c)) / (2.0 + g)).sqrt();
    let g_x = if g == 0.0 { 0.0 } else { g / (g_y * (g + 2.0)) };
    Gains::new(g_x, g_y, GainSource::Analytic, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{derive, GainPolicy, SystemConfig};

    fn canonical() -> DerivedParams {
        derive(&SystemConfig::canonical()).unwrap()
    }

    fn with_gain(g: f64) -> DerivedParams {
        let mut cfg = SystemConfig::canonical();
        cfg.gain_policy = GainPolicy::Explicit(g);
        derive(&cfg).unwrap()
    }

    #[test]
    fn phi_at_dc_is_real() {
        let p = canonical();
        let v = phi(0.0, &p);
        approx::assert_relative_eq!(v.re, 2.0e6, max_relative = 1e-12);
        assert_eq!(v.im, 0.0);
    }

    #[test]
    fn phi_at_resonance_tends_to_i() {
        let mut cfg = SystemConfig::canonical();
        cfg.gamma_m_cyc = 1.0; // Γ/Ω = 1e-6
        let p = derive(&cfg).unwrap();
        let v = phi(p.omega_m, &p);
        assert!((v - Complex64::i()).norm() < 1e-6, "{v}");
    }

    #[test]
    fn filter_is_normalized_at_resonance() {
        let p = canonical();
        assert_eq!(filter(p.omega_m, &p), Complex64::new(0.0, -1.0));
        assert_eq!(filter(-p.omega_m, &p), Complex64::new(0.0, 1.0));
        let dc = filter(0.0, &p);
        approx::assert_relative_eq!(dc.re, -1.59, max_relative = 1e-12);
        assert_eq!(dc.im, 0.0);
    }

    #[test]
    fn bare_chi_at_resonance_is_inverse_linewidth() {
        let p = with_gain(0.0);
        let v = chi(p.omega_m, &p).unwrap();
        approx::assert_relative_eq!(v.norm(), 1.0 / p.gamma_m, max_relative = 1e-3);
    }

    #[test]
    fn bare_chi_at_dc() {
        let p = with_gain(0.0);
        let v = chi(0.0, &p).unwrap();
        let g2 = 0.5 * p.gamma_m;
        let expected = g2 / (g2 * g2 + p.omega_m * p.omega_m);
        approx::assert_relative_eq!(v.re, expected, max_relative = 1e-12);
        assert!(v.im.abs() < 1e-12 * expected);
    }

    #[test]
    fn chi_is_suppressed_by_feedback() {
        let mut last = f64::INFINITY;
        for g in [0.0, 1.0, 10.0, 1e2, 1e3, 1e4, 1e5] {
            let p = with_gain(g);
            let v = chi(p.omega_m, &p).unwrap().norm();
            assert!(v < last, "G = {g}: {v} !< {last}");
            last = v;
        }
    }

    #[test]
    fn degenerate_denominator_is_reported() {
        // Negative gain can cancel the intrinsic damping exactly at resonance.
        let p = canonical().with_gain(-2.0);
        assert!(matches!(
            chi(p.omega_m, &p),
            Err(Error::DegenerateSusceptibility { .. })
        ));
    }

    #[test]
    fn modeshape_bracket_at_sidebands() {
        let p = canonical();
        let model = ResponseModel::new(&p);
        let minus = model.feedback_ratio(model.filter(-p.omega_m)) - Complex64::i();
        let plus = model.feedback_ratio(model.filter(p.omega_m)) - Complex64::i();
        assert_eq!(minus, Complex64::new(0.0, 0.0));
        assert_eq!(plus, Complex64::new(0.0, -2.0));
        assert_eq!(modeshape(-p.omega_m, &p, 1.0).unwrap().norm(), 0.0);
    }

    #[test]
    fn analytic_gains_are_unsqueezed_at_eight_c() {
        for c in [0.5, 3.0, 6241.0, 1e5] {
            let mut p = canonical();
            p.cooperativity = c;
            p.feedback_gain = 8.0 * c;
            let g = gains_analytic(&p);
            approx::assert_relative_eq!(g.squeeze, 1.0, max_relative = 1e-12);
            approx::assert_relative_eq!(
                g.g_y * g.g_y,
                4.0 * c / (1.0 + 4.0 * c),
                max_relative = 1e-12
            );
        }
        let g = gains_analytic(&canonical());
        approx::assert_relative_eq!(g.overall, 0.99998, epsilon = 5e-6);
    }

    #[test]
    fn analytic_low_gain_is_strongly_squeezed() {
        let p = with_gain(1.0);
        let g = gains_analytic(&p);
        // 1 / ((1 + 2/G) g_Y²) with g_Y² = 4C(1 + 1/64C²)/3
        let c = p.cooperativity;
        let expected = 1.0 / (3.0 * 4.0 * c * (1.0 + 1.0 / (64.0 * c * c)) / 3.0);
        approx::assert_relative_eq!(g.squeeze, expected, max_relative = 1e-12);
        assert!((g.squeeze - 4.006e-5).abs() < 1e-8, "{}", g.squeeze);
        let zero = gains_analytic(&with_gain(0.0));
        assert_eq!(zero.g_x, 0.0);
    }

    #[test]
    fn stability_boundary_in_gain() {
        let p = canonical();
        // a0 changes sign at G = 2(Ω² + Γ²/4)/(ΓΓ').
        let g_crit = 2.0 * (p.omega_m.powi(2) + 0.25 * p.gamma_m.powi(2)) / (p.gamma_m * p.gamma_f);
        assert!(ResponseModel::new(&p.with_gain(0.999 * g_crit))
            .check_stability()
            .is_ok());
        let over = p.with_gain(1.001 * g_crit);
        assert!(matches!(gains_numeric(&over), Err(Error::Unstable(_))));
        assert!(ResponseModel::new(&p.with_gain(0.0))
            .check_stability()
            .is_ok());
    }

    #[test]
    fn breakpoints_are_sorted_even_for_huge_linewidth() {
        for g in [0.0, 8.0 * 6241.0, 1e6] {
            let b = spectral_breakpoints(&with_gain(g));
            assert!(b.windows(2).all(|w| w[0] < w[1]), "{b:?}");
        }
    }
}
