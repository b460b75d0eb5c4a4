use approx::assert_relative_eq;
use fbtransfer_core::noise::{
    noise_covariance, psd_components, variance_analytic, variance_numeric,
};
use fbtransfer_core::params::{derive, GainPolicy, SystemConfig};
use fbtransfer_core::transfer::{gains_numeric, ResponseModel};
use fbtransfer_core::{DerivedParams, VarianceBreakdown};

fn at_ratio(ratio: f64) -> DerivedParams {
    derive(&SystemConfig::canonical().with_cooperativity_ratio(ratio)).unwrap()
}

fn budget(p: &DerivedParams) -> VarianceBreakdown {
    variance_numeric(p, &gains_numeric(p).unwrap()).unwrap()
}

fn with_eta(ratio: f64, eta: f64) -> DerivedParams {
    let mut cfg = SystemConfig::canonical().with_cooperativity_ratio(ratio);
    cfg.eta = eta;
    derive(&cfg).unwrap()
}

/// Closed-form spectra written out for G = 8C, where Gf/8C = f.
#[test]
fn closed_form_spectra_cross_check() {
    let p = with_eta(10.0, 0.5);
    let gains = gains_numeric(&p).unwrap();
    let r = gains.g_x / gains.g_y;
    let model = ResponseModel::new(&p);
    let (c, gamma, n) = (p.cooperativity, p.gamma_m, p.n_th);
    let s2 = (1.0 - p.eta) / p.eta;
    for w in [0.01, 0.5, 0.97, 0.999, 1.0, 1.003, 1.5, 4.0].map(|x| x * p.omega_m) {
        let chi2 = model.chi(w).unwrap().norm_sqr();
        let phi = model.phi(w);
        let f = model.filter(w);
        let opt = 0.5 * 4.0 * gamma * c * chi2;
        let s = psd_components(w, &p, &gains).unwrap();

        let qq_mech = gamma * chi2 * (1.0 + phi.norm_sqr()) * (n + 0.5);
        assert_relative_eq!(s.qq_mech, qq_mech, max_relative = 1e-10);

        let qq_opt = opt
            * (s2 * (f * phi).norm_sqr() + (phi * f - r).norm_sqr() + (-phi - f * r).norm_sqr());
        assert_relative_eq!(s.qq_opt_noise, qq_opt, max_relative = 1e-10);

        let qq_signal = opt * (f.norm_sqr() + 1.0) * r * r;
        assert_relative_eq!(s.qq_signal, qq_signal, max_relative = 1e-10);

        let pp_signal = opt * (f.norm_sqr() + 1.0);
        assert_relative_eq!(s.pp_signal, pp_signal, max_relative = 1e-10);

        // Detection vacuum reaches P only through the feedback, hence no "+1".
        let pp_eta = opt * s2 * f.norm_sqr();
        assert_relative_eq!(s.pp_eta, pp_eta, max_relative = 1e-10);

        let back = (1.0 + f * (4.0 * c * gamma / p.omega_m)) * phi;
        let pp_mech = gamma * chi2 * (1.0 + back.norm_sqr()) * (n + 0.5);
        assert_relative_eq!(s.pp_mech, pp_mech, max_relative = 1e-10);
    }
}

#[test]
fn spectra_are_even_and_nonnegative() {
    let p = with_eta(1.0, 0.75);
    let gains = gains_numeric(&p).unwrap();
    for x in [0.0, 0.2, 0.9, 1.0, 1.1, 3.0, 40.0] {
        let w = x * p.omega_m;
        let a = psd_components(w, &p, &gains).unwrap();
        let b = psd_components(-w, &p, &gains).unwrap();
        for (u, v) in [
            (a.qq_signal, b.qq_signal),
            (a.qq_mismatch, b.qq_mismatch),
            (a.qq_eta, b.qq_eta),
            (a.qq_mech, b.qq_mech),
            (a.pp_total, b.pp_total),
            (a.pq_cross, b.pq_cross),
        ] {
            assert_relative_eq!(u, v, max_relative = 1e-12);
        }
        for v in [
            a.qq_signal,
            a.qq_mismatch,
            a.qq_eta,
            a.qq_mech,
            a.pp_signal,
            a.pp_eta,
            a.pp_mech,
        ] {
            assert!(v >= 0.0);
        }
    }
}

#[test]
fn bare_thermal_lorentzian_integrates_to_occupancy() {
    let mut cfg = SystemConfig::canonical().with_cooperativity(1e-6);
    cfg.gain_policy = GainPolicy::Explicit(0.0);
    let p = derive(&cfg).unwrap();
    let v = budget(&p);
    assert_relative_eq!(v.v_q_mech, p.n_th + 0.5, max_relative = 5e-3);
    assert_relative_eq!(v.v_p_mech, p.n_th + 0.5, max_relative = 5e-3);
}

#[test]
fn signal_dominates_at_resonance_only_at_high_cooperativity() {
    let high = at_ratio(10.0);
    let s = psd_components(high.omega_m, &high, &gains_numeric(&high).unwrap()).unwrap();
    assert!(s.qq_signal > s.qq_mech + s.qq_opt_noise);
    let low = at_ratio(0.01);
    let s = psd_components(low.omega_m, &low, &gains_numeric(&low).unwrap()).unwrap();
    assert!(s.qq_signal < s.qq_mech);
}

// Values from an independent adaptive-quadrature prototype of the same decomposition.
#[test]
fn budget_at_operating_point() {
    let v = budget(&at_ratio(10.0));
    assert_relative_eq!(v.v_x_trans, 0.49608, max_relative = 1e-4);
    assert_relative_eq!(v.v_q_mech, 0.025421, max_relative = 1e-3);
    assert_relative_eq!(v.v_q_mismatch, 0.018346, max_relative = 1e-3);
    assert_relative_eq!(v.v_pq, -3.128e-4, max_relative = 1e-2);
    assert_relative_eq!(v.v_q_total, 0.53985, max_relative = 1e-4);
    // The signal is uncorrelated with the mismatch noise once integrated.
    let parts = v.v_x_trans + v.v_q_mech + v.v_q_mismatch + v.v_q_eta;
    assert!(
        (v.v_q_total - parts).abs() < 1e-5,
        "{} vs {}",
        v.v_q_total,
        parts
    );
    assert_relative_eq!(v.x_trans_normalized(), 0.5, max_relative = 1e-8);
    assert_relative_eq!(v.y_trans_normalized(), 0.5, max_relative = 1e-8);
}

#[test]
fn mechanical_noise_matches_closed_form_at_eight_c() {
    let p = derive(&SystemConfig::canonical()).unwrap();
    let v = budget(&p);
    let expected = (0.5 + p.n_th) / (1.0 + 4.0 * p.cooperativity);
    assert_relative_eq!(v.v_q_mech, expected, max_relative = 0.02);
    assert_relative_eq!(
        variance_analytic(&p).v_q_mech,
        expected,
        max_relative = 1e-12
    );
}

fn with_eta_at(c: f64, eta: f64) -> DerivedParams {
    let mut cfg = SystemConfig::canonical().with_cooperativity(c);
    cfg.eta = eta;
    derive(&cfg).unwrap()
}

#[test]
fn loss_noise_asymptote() {
    for eta in [0.5, 0.75, 0.9] {
        let v = budget(&with_eta_at(1e3, eta));
        let expected = (1.0 - eta) / (4.0 * eta);
        assert_relative_eq!(v.v_q_eta, expected, max_relative = 0.02);
        assert_relative_eq!(v.q_eta_normalized(), expected, max_relative = 0.02);
        assert_relative_eq!(v.p_eta_normalized(), expected, max_relative = 0.02);
    }
}

#[test]
fn mechanical_noise_crosses_vacuum_at_half_occupancy() {
    let f = |r: f64| budget(&at_ratio(r)).v_q_mech - 0.5;
    let (mut lo, mut hi) = (0.1, 2.0);
    assert!(f(lo) > 0.0 && f(hi) < 0.0);
    for _ in 0..40 {
        let mid = (lo * hi).sqrt();
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    assert_relative_eq!(lo, 0.5, max_relative = 0.05);
}

#[test]
fn trends_along_cooperativity() {
    let grid: Vec<f64> = (0..=16)
        .map(|k| 10f64.powf(-2.0 + 0.25 * k as f64))
        .collect();
    let rows: Vec<VarianceBreakdown> = grid.iter().map(|&r| budget(&at_ratio(r))).collect();
    for w in rows.windows(2) {
        assert!(w[1].v_q_mech < w[0].v_q_mech);
        assert!(w[1].v_q_mismatch > w[0].v_q_mismatch);
    }
    // Signal rises until the finite linewidth erodes g_X, past C/n_th ≈ 0.7.
    for w in rows[..8].windows(2) {
        assert!(w[1].v_x_trans > w[0].v_x_trans);
    }
    for w in rows[9..].windows(2) {
        assert!(w[1].v_x_trans < w[0].v_x_trans);
    }
    // Mismatch grows roughly linearly over the top decade.
    let top = &rows[12..];
    let xs: Vec<f64> = grid[12..].iter().map(|r| r.ln()).collect();
    let ys: Vec<f64> = top.iter().map(|v| v.v_q_mismatch.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let slope = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    assert!((slope - 1.0).abs() <= 0.2, "slope {slope}");
}

#[test]
fn covariance_is_wider_along_q_at_high_cooperativity() {
    let cov = noise_covariance(&budget(&at_ratio(100.0))).unwrap();
    assert!(cov.v11 > cov.v22);
    let cov = noise_covariance(&budget(&at_ratio(10.0))).unwrap();
    assert!(cov.v11 > cov.v22);
    assert!(cov.v12.abs() < 0.05 * cov.v22);
}

#[test]
fn analytic_covariance_vanishes_without_bath() {
    let mut cfg = SystemConfig::canonical().with_cooperativity(1e9);
    cfg.temperature = 0.0;
    let cov = noise_covariance(&variance_analytic(&derive(&cfg).unwrap())).unwrap();
    assert!(cov.v11 < 1e-9 && cov.v22 < 1e-9 && cov.v12 == 0.0);
}

#[test]
fn loss_noise_on_q_grows_once_linewidth_is_finite() {
    let v = budget(&with_eta(10.0, 0.5));
    assert!(v.q_eta_normalized() > 0.26);
    assert_relative_eq!(v.v_p_eta, 0.25, max_relative = 1e-3);
}
