//! Spectral decomposition of the mechanical quadratures into transferred
//! signal and residual noise, variance budgets, and the noise covariance.
//!
//! The quadratures respond linearly to five independent white inputs,
//! ordered as in [`Source`]. For each one the steady state gives a transfer
//! function `h(ω)`, and a component's spectral density is
//! `Σ level · |h(ω)|²` over the inputs it collects. Variances follow from
//! `V = (1/2π) ∫ S̄(ω) dω`, so the vacuum level is 1/2.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::DerivedParams;
use crate::quadrature::{self, QuadSettings};
use crate::transfer::{
    spectral_breakpoints, GainSource, Gains, ResponseModel, NORMALIZATION_TOLERANCE,
    SPECTRAL_REL_TOL,
};

/// White noise inputs, in the order used by [`Coefficients`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    /// Thermal force on Q.
    MechQ,
    /// Thermal force on P.
    MechP,
    /// Optical amplitude quadrature (radiation pressure).
    OpticalX,
    /// Optical phase quadrature (detected and fed back).
    OpticalY,
    /// Vacuum admitted by detection loss.
    Loss,
}

const N_SOURCES: usize = 5;

/// Transfer functions from each input to Q and P at one frequency.
#[derive(Debug, Clone, Copy)]
pub struct Coefficients {
    pub q: [Complex64; N_SOURCES],
    pub p: [Complex64; N_SOURCES],
    /// g_X X_trans expressed in terms of (X_in, Y_in).
    pub q_signal: [Complex64; 2],
}

/// Per-frequency symmetrized spectral densities.
///
/// `qq_opt_noise = qq_mismatch + qq_eta` and `pp_opt_noise = pp_eta`. The
/// totals are the full spectra of Q and P, including the signal and its
/// correlation with the mismatch noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumComponents {
    pub omega: f64,
    pub qq_signal: f64,
    pub qq_mismatch: f64,
    pub qq_eta: f64,
    pub qq_opt_noise: f64,
    pub qq_mech: f64,
    pub qq_total: f64,
    pub pp_signal: f64,
    pub pp_eta: f64,
    pub pp_opt_noise: f64,
    pub pp_mech: f64,
    pub pp_total: f64,
    /// Noise-only Q–P cross spectrum (mechanical and loss inputs).
    pub pq_cross: f64,
    pub pq_total: f64,
}

/// Variances of each contribution on the mechanical quadratures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceBreakdown {
    pub v_x_trans: f64,
    pub v_q_mech: f64,
    pub v_q_mismatch: f64,
    pub v_q_eta: f64,
    pub v_y_trans: f64,
    pub v_p_mech: f64,
    pub v_p_eta: f64,
    pub v_pq: f64,
    /// Var(Q) from the full spectrum.
    pub v_q_total: f64,
    /// Var(P) from the full spectrum.
    pub v_p_total: f64,
    /// Cov(Q, P) from the full spectrum.
    pub v_qp_total: f64,
    pub g_x: f64,
    pub g_y: f64,
}

impl VarianceBreakdown {
    /// Transferred amplitude-quadrature variance with the gain divided out.
    pub fn x_trans_normalized(&self) -> f64 {
        self.v_x_trans / (self.g_x * self.g_x)
    }

    pub fn y_trans_normalized(&self) -> f64 {
        self.v_y_trans / (self.g_y * self.g_y)
    }

    pub fn q_eta_normalized(&self) -> f64 {
        self.v_q_eta / (self.g_x * self.g_x)
    }

    pub fn p_eta_normalized(&self) -> f64 {
        self.v_p_eta / (self.g_y * self.g_y)
    }

    pub fn q_noise(&self) -> f64 {
        self.v_q_mech + self.v_q_mismatch + self.v_q_eta
    }

    pub fn p_noise(&self) -> f64 {
        self.v_p_mech + self.v_p_eta
    }
}

/// Symmetric covariance of the non-signal noise on (Q, P).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseCovariance {
    pub v11: f64,
    pub v12: f64,
    pub v22: f64,
}

impl NoiseCovariance {
    pub fn new(v11: f64, v12: f64, v22: f64) -> Result<Self> {
        let cov = NoiseCovariance { v11, v12, v22 };
        cov.check()?;
        Ok(cov)
    }

    pub fn isotropic(v: f64) -> Result<Self> {
        Self::new(v, 0.0, v)
    }

    pub fn zero() -> Self {
        NoiseCovariance {
            v11: 0.0,
            v12: 0.0,
            v22: 0.0,
        }
    }

    pub fn det(&self) -> f64 {
        self.v11 * self.v22 - self.v12 * self.v12
    }

    pub fn trace(&self) -> f64 {
        self.v11 + self.v22
    }

    /// Positive semidefinite up to rounding; zero is allowed.
    pub fn check(&self) -> Result<()> {
        let scale = self.v11.abs().max(self.v22.abs());
        let finite = self.v11.is_finite() && self.v12.is_finite() && self.v22.is_finite();
        if !finite || self.v11 < 0.0 || self.v22 < 0.0 || self.det() < -1e-12 * scale * scale {
            return Err(Error::Contract(format!(
                "noise covariance is not positive semidefinite: v11 = {:e}, v12 = {:e}, v22 = {:e}",
                self.v11, self.v12, self.v22
            )));
        }
        Ok(())
    }
}

fn check_gains(params: &DerivedParams, gains: &Gains) -> Result<f64> {
    if gains.params_fingerprint != params.fingerprint() {
        return Err(Error::Contract(
            "gains were computed for a different parameter set".into(),
        ));
    }
    match gains.source {
        GainSource::Numeric {
            normalization_residual,
        } if normalization_residual <= NORMALIZATION_TOLERANCE => Ok(gains.g_x / gains.g_y),
        GainSource::Numeric {
            normalization_residual,
        } => Err(Error::Contract(format!(
            "modeshape normalization residual {normalization_residual:e} exceeds {NORMALIZATION_TOLERANCE:e}"
        ))),
        GainSource::Analytic => Err(Error::Contract(
            "spectral decomposition requires gains from quadrature".into(),
        )),
    }
}

/// Spectral model bound to a parameter set and its gains.
#[derive(Debug, Clone, Copy)]
pub struct NoiseModel<'a> {
    model: ResponseModel<'a>,
    /// g_X / g_Y.
    ratio: f64,
    gains: Gains,
}

impl<'a> NoiseModel<'a> {
    /// Fails unless `gains` came from quadrature on these same parameters.
    pub fn new(params: &'a DerivedParams, gains: &Gains) -> Result<Self> {
        let ratio = check_gains(params, gains)?;
        Ok(NoiseModel {
            model: ResponseModel::new(params),
            ratio,
            gains: *gains,
        })
    }

    pub fn params(&self) -> &DerivedParams {
        self.model.params
    }

    fn levels(&self) -> [f64; N_SOURCES] {
        let thermal = self.model.params.thermal_level();
        [thermal, thermal, 0.5, 0.5, 0.5]
    }

    pub fn coefficients(&self, omega: f64) -> Result<Coefficients> {
        let p = self.model.params;
        let (chi, phi, f) = self.model.chi_parts(omega)?;
        let sg = p.gamma_m.sqrt();
        let rc = p.cooperativity.sqrt();
        let s = p.loss_weight();
        let base = chi * sg;
        let feedback = f * (p.feedback_gain / (4.0 * rc));
        let a = self.model.feedback_ratio(f);
        let sig = chi * (2.0 * sg * rc * self.ratio);
        let back_action =
            Complex64::new(1.0, 0.0) + f * (0.5 * p.feedback_gain * p.gamma_m / p.omega_m);
        Ok(Coefficients {
            q: [
                base,
                base * phi,
                base * phi * (-2.0 * rc),
                base * phi * feedback,
                -base * phi * feedback * s,
            ],
            p: [
                -base * back_action * phi,
                base,
                base * (-2.0 * rc),
                base * feedback,
                -base * feedback * s,
            ],
            q_signal: [sig * a, sig],
        })
    }

    /// Unsymmetrized densities at one frequency; the cross terms stay complex.
    fn raw(&self, omega: f64) -> Result<Raw> {
        let c = self.coefficients(omega)?;
        let lv = self.levels();
        let [mq, mp, ox, oy, loss] = [0, 1, 2, 3, 4];
        let mis_x = c.q[ox] - c.q_signal[0];
        let mis_y = c.q[oy] - c.q_signal[1];
        let qq_signal = lv[ox] * c.q_signal[0].norm_sqr() + lv[oy] * c.q_signal[1].norm_sqr();
        let qq_mismatch = lv[ox] * mis_x.norm_sqr() + lv[oy] * mis_y.norm_sqr();
        let qq_eta = lv[loss] * c.q[loss].norm_sqr();
        let qq_mech = lv[mq] * c.q[mq].norm_sqr() + lv[mp] * c.q[mp].norm_sqr();
        let qq_total = (0..N_SOURCES).map(|k| lv[k] * c.q[k].norm_sqr()).sum();
        let pp_signal = lv[ox] * c.p[ox].norm_sqr() + lv[oy] * c.p[oy].norm_sqr();
        let pp_eta = lv[loss] * c.p[loss].norm_sqr();
        let pp_mech = lv[mq] * c.p[mq].norm_sqr() + lv[mp] * c.p[mp].norm_sqr();
        let pp_total = (0..N_SOURCES).map(|k| lv[k] * c.p[k].norm_sqr()).sum();
        let cross = |k: usize| c.q[k] * c.p[k].conj() * lv[k];
        let pq_cross = cross(mq) + cross(mp) + cross(loss);
        let pq_total = (0..N_SOURCES).map(cross).sum();
        Ok(Raw {
            qq_signal,
            qq_mismatch,
            qq_eta,
            qq_mech,
            qq_total,
            pp_signal,
            pp_eta,
            pp_mech,
            pp_total,
            pq_cross,
            pq_total,
        })
    }

    /// Symmetrized components `S̄(ω) = (S(ω) + S(−ω))/2`.
    pub fn psd_components(&self, omega: f64) -> Result<SpectrumComponents> {
        let plus = self.raw(omega)?;
        let minus = self.raw(-omega)?;
        let avg = |a: f64, b: f64| 0.5 * (a + b);
        let qq_mismatch = avg(plus.qq_mismatch, minus.qq_mismatch);
        let qq_eta = avg(plus.qq_eta, minus.qq_eta);
        let pp_eta = avg(plus.pp_eta, minus.pp_eta);
        Ok(SpectrumComponents {
            omega,
            qq_signal: avg(plus.qq_signal, minus.qq_signal),
            qq_mismatch,
            qq_eta,
            qq_opt_noise: qq_mismatch + qq_eta,
            qq_mech: avg(plus.qq_mech, minus.qq_mech),
            qq_total: avg(plus.qq_total, minus.qq_total),
            pp_signal: avg(plus.pp_signal, minus.pp_signal),
            pp_eta,
            pp_opt_noise: pp_eta,
            pp_mech: avg(plus.pp_mech, minus.pp_mech),
            pp_total: avg(plus.pp_total, minus.pp_total),
            pq_cross: 0.5 * (plus.pq_cross + minus.pq_cross).re,
            pq_total: 0.5 * (plus.pq_total + minus.pq_total).re,
        })
    }

    /// Full symmetrized S̄_QQ(ω).
    pub fn total_qq(&self, omega: f64) -> Result<f64> {
        Ok(0.5 * (self.raw(omega)?.qq_total + self.raw(-omega)?.qq_total))
    }

    /// Full symmetrized S̄_PP(ω).
    pub fn total_pp(&self, omega: f64) -> Result<f64> {
        Ok(0.5 * (self.raw(omega)?.pp_total + self.raw(-omega)?.pp_total))
    }

    /// Spectrum of the sequence obtained by sampling Q every `dt`:
    /// `Σ_k S̄_QQ(ω + 2πk/dt)`, truncated at `|k| ≤ terms` with the
    /// `A/ω²` tail beyond it summed in closed form.
    pub fn aliased_total_qq(&self, omega: f64, dt: f64, terms: usize) -> Result<f64> {
        let step = 2.0 * std::f64::consts::PI / dt;
        let mut sum = self.total_qq(omega)?;
        for k in 1..=terms as i64 {
            sum += self.total_qq(omega + k as f64 * step)?;
            sum += self.total_qq(omega - k as f64 * step)?;
        }
        let edge = |sign: f64| -> Result<f64> {
            let w = omega + sign * terms as f64 * step;
            let amplitude = self.total_qq(w)? * w * w;
            // Σ_{k>K} A/(w + k·step)² ≈ A / (step·(|w| + step/2))
            Ok(amplitude / (step * (w.abs() + 0.5 * step)))
        };
        if terms > 0 {
            sum += edge(1.0)? + edge(-1.0)?;
        }
        Ok(sum)
    }

    pub fn variance_numeric(&self) -> Result<VarianceBreakdown> {
        let breaks = spectral_breakpoints(self.model.params);
        let settings = QuadSettings {
            rel_tol: SPECTRAL_REL_TOL,
            ..Default::default()
        };
        let mut failure = None;
        // ∫S(ω) = ∫S(−ω) over the full line, so the raw densities integrate to
        // the same values as their symmetrized forms; the imaginary cross parts vanish.
        let result = quadrature::integrate(
            |w| match self.raw(w) {
                Ok(r) => [
                    r.qq_signal,
                    r.qq_mismatch,
                    r.qq_eta,
                    r.qq_mech,
                    r.qq_total,
                    r.pp_signal,
                    r.pp_eta,
                    r.pp_mech,
                    r.pp_total,
                    r.pq_cross.re,
                    r.pq_total.re,
                ],
                Err(e) => {
                    failure.get_or_insert(e);
                    [0.0; 11]
                }
            },
            &breaks,
            true,
            &QuadSettings {
                // The loss terms are identically zero at unit efficiency.
                abs_tol: 1e-14,
                ..settings
            },
        );
        if let Some(e) = failure {
            return Err(e);
        }
        let v = result?.value.map(|x| x / (2.0 * std::f64::consts::PI));
        Ok(VarianceBreakdown {
            v_x_trans: v[0],
            v_q_mismatch: v[1],
            v_q_eta: v[2],
            v_q_mech: v[3],
            v_q_total: v[4],
            v_y_trans: v[5],
            v_p_eta: v[6],
            v_p_mech: v[7],
            v_p_total: v[8],
            v_pq: v[9],
            v_qp_total: v[10],
            g_x: self.gains.g_x,
            g_y: self.gains.g_y,
        })
    }
}

#[derive(Debug, Clone, Copy)]
struct Raw {
    qq_signal: f64,
    qq_mismatch: f64,
    qq_eta: f64,
    qq_mech: f64,
    qq_total: f64,
    pp_signal: f64,
    pp_eta: f64,
    pp_mech: f64,
    pp_total: f64,
    pq_cross: Complex64,
    pq_total: Complex64,
}

pub fn psd_components(
    omega: f64,
    params: &DerivedParams,
    gains: &Gains,
) -> Result<SpectrumComponents> {
    NoiseModel::new(params, gains)?.psd_components(omega)
}

pub fn variance_numeric(params: &DerivedParams, gains: &Gains) -> Result<VarianceBreakdown> {
    NoiseModel::new(params, gains)?.variance_numeric()
}

/// High-Q, wide-filter limit with the closed-form gains.
pub fn variance_analytic(params: &DerivedParams) -> VarianceBreakdown {
    let gains = crate::transfer::gains_analytic(params);
    let s2 = params.loss_weight().powi(2);
    let mech = params.thermal_level() / (1.0 + 0.5 * params.feedback_gain);
    let (gx2, gy2) = (gains.g_x * gains.g_x, gains.g_y * gains.g_y);
    let v_x_trans = 0.5 * gx2;
    let v_q_eta = 0.25 * s2 * gx2;
    let v_y_trans = 0.5 * gy2;
    let v_p_eta = 0.25 * s2 * gy2;
    VarianceBreakdown {
        v_x_trans,
        v_q_mech: mech,
        v_q_mismatch: 0.0,
        v_q_eta,
        v_y_trans,
        v_p_mech: mech,
        v_p_eta,
        v_pq: 0.0,
        v_q_total: v_x_trans + mech + v_q_eta,
        v_p_total: v_y_trans + mech + v_p_eta,
        v_qp_total: 0.0,
        g_x: gains.g_x,
        g_y: gains.g_y,
    }
}

pub fn noise_covariance(breakdown: &VarianceBreakdown) -> Result<NoiseCovariance> {
    NoiseCovariance::new(breakdown.q_noise(), breakdown.v_pq, breakdown.p_noise())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{derive, SystemConfig};
    use crate::transfer::gains_numeric;

    fn canonical() -> DerivedParams {
        derive(&SystemConfig::canonical()).unwrap()
    }

    #[test]
    fn covariance_rejects_indefinite() {
        assert!(NoiseCovariance::new(1.0, 2.0, 1.0).is_err());
        assert!(NoiseCovariance::new(-1.0, 0.0, 1.0).is_err());
        assert!(NoiseCovariance::new(1.0, 1.0, 1.0).is_ok());
        assert!(NoiseCovariance::new(0.0, 0.0, 0.0).is_ok());
    }

    #[test]
    fn analytic_gains_are_refused() {
        let p = canonical();
        let g = crate::transfer::gains_analytic(&p);
        assert!(matches!(
            psd_components(p.omega_m, &p, &g),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn gains_from_other_params_are_refused() {
        let p = canonical();
        let g = gains_numeric(&p).unwrap();
        let other = p.with_gain(10.0);
        assert!(matches!(
            psd_components(p.omega_m, &other, &g),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn p_optical_part_is_pure_signal() {
        let p = canonical();
        let g = gains_numeric(&p).unwrap();
        let m = NoiseModel::new(&p, &g).unwrap();
        for w in [0.3 * p.omega_m, p.omega_m, -1.7 * p.omega_m] {
            let s = m.psd_components(w).unwrap();
            approx::assert_relative_eq!(
                s.pp_total,
                s.pp_signal + s.pp_mech + s.pp_eta,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn unit_efficiency_has_no_loss_noise() {
        let p = canonical();
        let g = gains_numeric(&p).unwrap();
        let s = psd_components(p.omega_m, &p, &g).unwrap();
        assert_eq!(s.qq_eta, 0.0);
        assert_eq!(s.pp_eta, 0.0);
    }

    #[test]
    fn analytic_budget_at_operating_point() {
        let v = variance_analytic(&canonical());
        approx::assert_relative_eq!(v.v_x_trans, 2.0 * 6241.0 / 24965.0, max_relative = 1e-12);
        approx::assert_relative_eq!(
            v.v_q_mech,
            625.098_574_082_837 / 24965.0 + 0.5 / 24965.0,
            max_relative = 1e-12
        );
        assert_eq!(v.v_q_eta, 0.0);
        assert_eq!(v.v_q_mismatch, 0.0);
        let cov = noise_covariance(&v).unwrap();
        approx::assert_relative_eq!(cov.v11, 0.02505, epsilon = 1e-5);
        assert_eq!(cov.v11, cov.v22);
        assert_eq!(cov.v12, 0.0);
    }
}
