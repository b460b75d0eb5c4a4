use std::f64::consts::PI;

use approx::assert_relative_eq;
use fbtransfer_core::noise::{variance_numeric, NoiseModel};
use fbtransfer_core::oracle::{
    estimate_psd, fold_frequency, sample_variance, simulate, simulate_ensemble, FilterRealization,
    Initial, OracleModel, Scheme, TraceRecord, TrajectoryConfig,
};
use fbtransfer_core::params::{derive, GainPolicy, SystemConfig};
use fbtransfer_core::{gains_numeric, DerivedParams, Error};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn at_ratio(ratio: f64, eta: f64) -> DerivedParams {
    let mut cfg = SystemConfig::canonical().with_cooperativity_ratio(ratio);
    cfg.eta = eta;
    derive(&cfg).unwrap()
}

fn thermal_only() -> DerivedParams {
    let mut cfg = SystemConfig::canonical().with_cooperativity(1e-9);
    cfg.gain_policy = GainPolicy::Explicit(0.0);
    derive(&cfg).unwrap()
}

fn within_sigma(value: f64, expected: f64, stderr: f64, k: f64) -> bool {
    (value - expected).abs() <= k * stderr
}

#[test]
fn stationary_covariance_matches_quadrature() {
    for (ratio, eta) in [(0.01, 1.0), (1.0, 1.0), (10.0, 1.0), (10.0, 0.5)] {
        let p = at_ratio(ratio, eta);
        let v = variance_numeric(&p, &gains_numeric(&p).unwrap()).unwrap();
        let s = OracleModel::new(&p)
            .unwrap()
            .stationary_covariance()
            .unwrap();
        assert_relative_eq!(s[(0, 0)], v.v_q_total, max_relative = 1e-6);
        assert_relative_eq!(s[(1, 1)], v.v_p_total, max_relative = 1e-6);
        assert!((s[(0, 1)] - v.v_qp_total).abs() <= 1e-6 * v.v_q_total);
    }
}

fn decay_config(p: &DerivedParams, dt: f64, scheme: Scheme, periods: f64) -> TrajectoryConfig {
    TrajectoryConfig {
        dt,
        duration: periods * 2.0 * PI / p.omega_m,
        n_traj: 1,
        seed: 0,
        burn_in: 0.0,
        scheme,
        initial: Initial::Fixed { q: 1.0, p: 0.5 },
        noise: false,
        stride: 1,
    }
}

#[test]
fn homogeneous_decay() {
    let p = derive(&SystemConfig::canonical()).unwrap().with_gain(0.0);
    let exact = |t: f64| {
        (-0.5 * p.gamma_m * t).exp() * ((p.omega_m * t).cos() + 0.5 * (p.omega_m * t).sin())
    };
    let max_err = |trace: &TraceRecord| {
        trace
            .times
            .iter()
            .zip(&trace.q_samples)
            .map(|(&t, &q)| (q - exact(t)).abs())
            .fold(0.0, f64::max)
    };
    let dt = 0.01 / p.omega_m.max(p.gamma_f);
    let trace = simulate(&p, &decay_config(&p, dt, Scheme::Exact, 5.0), 0).unwrap();
    assert!(max_err(&trace) < 1e-9, "{}", max_err(&trace));

    // Euler–Maruyama is first order: halving dt halves the error.
    let coarse =
        max_err(&simulate(&p, &decay_config(&p, dt, Scheme::EulerMaruyama, 5.0), 0).unwrap());
    let fine = max_err(
        &simulate(
            &p,
            &decay_config(&p, 0.5 * dt, Scheme::EulerMaruyama, 5.0),
            0,
        )
        .unwrap(),
    );
    let span = 5.0 * 2.0 * PI / p.omega_m;
    assert!(coarse <= p.omega_m * p.omega_m * dt * span, "{coarse}");
    assert_relative_eq!(coarse / fine, 2.0, max_relative = 0.05);
}

#[test]
fn decaying_tail_has_vanishing_variance() {
    let p = derive(&SystemConfig::canonical()).unwrap();
    let ge = p.gamma_eff();
    let mut cfg = decay_config(&p, 0.01 / p.gamma_f, Scheme::Exact, 0.0);
    cfg.burn_in = 30.0 / ge;
    cfg.duration = 40.0 / ge;
    let trace = simulate(&p, &cfg, 0).unwrap();
    let m = sample_variance(&[trace]);
    assert!(m.var_q < 1e-10 && m.var_p < 1e-10, "{m:?}");
}

#[test]
fn thermal_equipartition() {
    let p = thermal_only();
    let cfg = TrajectoryConfig::bandpass(&p, 200.0, 32, 11);
    let traces = simulate_ensemble(&p, &cfg, None).unwrap();
    let m = sample_variance(&traces);
    let level = p.n_th + 0.5;
    assert!(within_sigma(m.var_q, level, m.stderr_q, 3.0), "{m:?}");
    assert!(within_sigma(m.var_p, level, m.stderr_p, 3.0), "{m:?}");
    assert!(m.stderr_q < 0.05 * level);
}

#[test]
fn filter_step_response() {
    let p = derive(&SystemConfig::canonical()).unwrap();
    let r = FilterRealization::new(&p).unwrap();
    let b = p.gamma_f / p.omega_m;
    let (c, wd) = (0.5 * b, (1.0 - 0.25 * b * b).sqrt());
    // ∫₀ᵀ −b e^{−cτ} sin(ω_d τ)/ω_d dτ in units of 1/Ω.
    let closed = |tau: f64| {
        -(b / wd) * (wd - (-c * tau).exp() * (c * (wd * tau).sin() + wd * (wd * tau).cos()))
    };
    let horizon = 10.0 * 2.0 / p.gamma_f;
    let scale = b;
    for k in 1..=200 {
        let t = horizon * k as f64 / 200.0;
        let got = r.step_response(t);
        assert!(
            (got - closed(p.omega_m * t)).abs() <= 1e-3 * scale,
            "t = {t:e}: {got} vs {}",
            closed(p.omega_m * t)
        );
    }
    assert_relative_eq!(r.step_response(1e3 * horizon), -b, max_relative = 1e-9);
}

#[test]
fn ensembles_are_deterministic() {
    let p = at_ratio(10.0, 1.0);
    let mut cfg = TrajectoryConfig::bandpass(&p, 100.0, 6, 42);
    cfg.duration = cfg.burn_in + 100.0 / p.gamma_eff();
    let one = simulate_ensemble(&p, &cfg, Some(1)).unwrap();
    let three = simulate_ensemble(&p, &cfg, Some(3)).unwrap();
    assert_eq!(one, three);
    assert_eq!(one[4], simulate(&p, &cfg, 4).unwrap());
    assert_ne!(one[0].q_samples, one[1].q_samples);
    cfg.seed = 43;
    assert_ne!(simulate(&p, &cfg, 0).unwrap().q_samples, one[0].q_samples);
}

#[test]
fn white_noise_calibration() {
    let (sigma, dt) = (0.7_f64, 1e-3_f64);
    let dist = Normal::new(0.0, sigma / dt.sqrt()).unwrap();
    let traces: Vec<TraceRecord> = (0..8)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(i);
            let q: Vec<f64> = (0..16_384).map(|_| dist.sample(&mut rng)).collect();
            TraceRecord {
                index: i as usize,
                dt,
                times: (0..q.len()).map(|k| k as f64 * dt).collect(),
                p_samples: q.iter().map(|v| -v).collect(),
                q_samples: q,
            }
        })
        .collect();
    let psd = estimate_psd(&traces, 256).unwrap();
    let nyquist = PI / dt;
    let band = psd.band(0.05 * nyquist, 0.95 * nyquist).unwrap();
    assert!(
        within_sigma(band.s_qq, sigma * sigma, band.stderr_qq, 3.0),
        "{band:?}"
    );
    assert!(band.stderr_qq < 0.02 * sigma * sigma);
    let inside = (1..psd.omega.len() - 1)
        .filter(|&k| within_sigma(psd.s_qq[k], sigma * sigma, psd.stderr_qq[k], 3.0))
        .count();
    assert!(inside as f64 >= 0.97 * (psd.omega.len() - 2) as f64);
}

#[test]
fn exact_scheme_is_independent_of_step() {
    let p = derive(&SystemConfig::canonical()).unwrap();
    let model = OracleModel::new(&p).unwrap();
    let exact = model.stationary_covariance().unwrap();
    for dt in [1e-9, 1e-8, 1e-7, 1e-6] {
        let (phi, q) = model.exact_step(dt).unwrap();
        let propagated = phi * exact * phi.transpose() + q;
        assert!(
            (propagated - exact).abs().max() <= 1e-9 * exact[(0, 0)],
            "dt = {dt:e}"
        );
    }
}

// The explicit scheme pumps energy at rate ≈ Ω²dt against the damping Γ_eff,
// so its stationary variance carries a first-order bias of Ω²dt/Γ_eff.
#[test]
fn euler_bias_is_first_order() {
    let p = derive(&SystemConfig::canonical()).unwrap();
    let model = OracleModel::new(&p).unwrap();
    let dt = 0.01 / p.omega_m.max(p.gamma_f);
    let exact = model.stationary_covariance().unwrap()[(0, 0)];
    let bias = |h: f64| model.euler_stationary_covariance(h).unwrap()[(0, 0)] / exact - 1.0;
    let (a, b) = (bias(dt), bias(0.5 * dt));
    assert_relative_eq!(a / b, 2.0, max_relative = 0.25);
    let predicted = p.omega_m * p.omega_m * dt / p.gamma_eff();
    assert_relative_eq!(1.0 + a, 1.0 / (1.0 - predicted), max_relative = 0.05);
    assert!(bias(dt / 64.0) < 0.01);
}

#[test]
fn euler_ensemble_matches_its_stationary_covariance() {
    let p = derive(&SystemConfig::canonical()).unwrap();
    let cfg = TrajectoryConfig::euler(&p, 100.0, 8, 5);
    let s = OracleModel::new(&p)
        .unwrap()
        .euler_stationary_covariance(cfg.dt)
        .unwrap();
    let m = sample_variance(&simulate_ensemble(&p, &cfg, None).unwrap());
    assert!(
        within_sigma(m.var_q, s[(0, 0)], m.stderr_q, 3.0),
        "{m:?} vs {}",
        s[(0, 0)]
    );
    assert!(
        within_sigma(m.var_p, s[(1, 1)], m.stderr_p, 3.0),
        "{m:?} vs {}",
        s[(1, 1)]
    );
}

#[test]
fn exact_ensemble_matches_quadrature_variance() {
    let p = derive(&SystemConfig::canonical()).unwrap();
    let v = variance_numeric(&p, &gains_numeric(&p).unwrap()).unwrap();
    let cfg = TrajectoryConfig::bandpass(&p, 200.0, 32, 5);
    let m = sample_variance(&simulate_ensemble(&p, &cfg, None).unwrap());
    assert!(
        within_sigma(m.var_q, v.v_q_total, m.stderr_q, 3.0),
        "{m:?} vs {}",
        v.v_q_total
    );
    assert!(
        within_sigma(m.var_p, v.v_p_total, m.stderr_p, 3.0),
        "{m:?} vs {}",
        v.v_p_total
    );
    assert!(
        within_sigma(m.cov_qp, v.v_qp_total, m.stderr_qp, 3.0),
        "{m:?} vs {}",
        v.v_qp_total
    );
}

#[test]
fn exact_ensemble_psd_at_resonance() {
    let p = derive(&SystemConfig::canonical()).unwrap();
    let gains = gains_numeric(&p).unwrap();
    let noise = NoiseModel::new(&p, &gains).unwrap();
    let cfg = TrajectoryConfig::bandpass(&p, 1000.0, 16, 9);
    let traces = simulate_ensemble(&p, &cfg, None).unwrap();
    let ge = p.gamma_eff();
    let seg = (32.0 * PI / (ge * cfg.dt)).ceil() as usize;
    let psd = estimate_psd(&traces, seg).unwrap();
    let centre = fold_frequency(p.omega_m, cfg.dt);
    let band = psd.band(centre - 0.5 * ge, centre + 0.5 * ge).unwrap();
    let expected = band_average(&psd.omega, centre - 0.5 * ge, centre + 0.5 * ge, |w| {
        noise.aliased_total_qq(w, cfg.dt, 40).unwrap()
    });
    assert_relative_eq!(band.s_qq, expected, max_relative = 0.05);
}

fn band_average(omega: &[f64], lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let pts: Vec<f64> = omega
        .iter()
        .copied()
        .filter(|&w| w >= lo && w <= hi)
        .collect();
    pts.iter().map(|&w| f(w)).sum::<f64>() / pts.len() as f64
}

#[test]
fn failures_are_reported() {
    let p = derive(&SystemConfig::canonical()).unwrap();

    let mut cfg = TrajectoryConfig::euler(&p, 100.0, 1, 0);
    cfg.dt *= 2.0;
    assert!(matches!(simulate(&p, &cfg, 0), Err(Error::Validation { field, .. }) if field == "dt"));

    let mut cfg = TrajectoryConfig::bandpass(&p, 100.0, 1, 0);
    cfg.burn_in *= 0.5;
    assert!(
        matches!(simulate(&p, &cfg, 0), Err(Error::Validation { field, .. }) if field == "burn_in")
    );

    let mut cfg = decay_config(&p, 1e-8, Scheme::Exact, 1.0);
    cfg.initial = Initial::Fixed { q: 2e6, p: 0.0 };
    assert!(matches!(
        simulate(&p, &cfg, 0),
        Err(Error::Stability { .. })
    ));

    let unstable = p.with_gain(300.0 * p.cooperativity);
    assert!(matches!(
        OracleModel::new(&unstable),
        Err(Error::Unstable(_))
    ));

    let short = TraceRecord {
        index: 0,
        dt: 1.0,
        times: vec![0.0; 100],
        q_samples: vec![0.0; 100],
        p_samples: vec![0.0; 100],
    };
    assert!(matches!(
        estimate_psd(&[short.clone(), short], 32),
        Err(Error::Statistics(_))
    ));
}
