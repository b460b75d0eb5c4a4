//! Time-domain simulation of the feedback-modified Langevin equations.
//!
//! The state is `(Q, P, z, w)` where `z` is the filter output and `w = ż/Ω`.
//! Between samples the linear SDE is either propagated exactly (default) or
//! stepped with Euler–Maruyama.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix4, SMatrix, SVector, SymmetricEigen, Vector2, Vector4};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::DerivedParams;
use crate::transfer::{filter, ResponseModel};

/// |Q| beyond which a trajectory is declared unstable.
pub const DIVERGENCE_LIMIT: f64 = 1e6;
const REALIZATION_TOLERANCE: f64 = 1e-9;
const MIN_TRAJECTORIES: usize = 8;
const MIN_SEGMENTS: usize = 64;
const BATCHES_PER_TRACE: usize = 10;

type Matrix16 = SMatrix<f64, 16, 16>;
type Matrix8 = SMatrix<f64, 8, 8>;
type NoiseInput = SMatrix<f64, 4, 5>;

/// Internal coordinates of the feedback filter.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterState {
    pub z: f64,
    /// ż/Ω
    pub w: f64,
}

/// Second-order state-space form of the generalized-Lorentzian filter:
/// `ż = Ω w`, `ẇ = −Ω z − Γ′ w − Γ′ m`, output `z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterRealization {
    pub a: Matrix2<f64>,
    pub b: Vector2<f64>,
    pub gamma_f: f64,
    pub omega: f64,
}

impl FilterRealization {
    /// Builds the realization and checks its response against the
    /// frequency-domain filter at 0, ±Ω and ±2Ω.
    pub fn new(params: &DerivedParams) -> Result<Self> {
        let (gamma_f, omega) = (params.gamma_f, params.omega_m);
        let r = FilterRealization {
            a: Matrix2::new(0.0, omega, -omega, -gamma_f),
            b: Vector2::new(0.0, -gamma_f),
            gamma_f,
            omega,
        };
        for x in [0.0, 1.0, -1.0, 2.0, -2.0] {
            let w = x * omega;
            let (got, want) = (r.response(w), filter(w, params));
            if (got - want).norm() > REALIZATION_TOLERANCE * want.norm() {
                return Err(Error::Contract(format!(
                    "filter realization disagrees with its transfer function at ω = {w:e}: {got} vs {want}"
                )));
            }
        }
        Ok(r)
    }

    /// `c (−iω − A)⁻¹ b` with `c = (1, 0)`.
    pub fn response(&self, omega: f64) -> Complex64 {
        let m =
            |i: usize, j: usize| Complex64::new(-self.a[(i, j)], if i == j { -omega } else { 0.0 });
        let det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
        (m(1, 1) * self.b[0] - m(0, 1) * self.b[1]) / det
    }

    /// Output at time `t` after a unit step input applied at rest.
    pub fn step_response(&self, t: f64) -> f64 {
        let a_inv = self.a.try_inverse().expect("filter matrix is invertible");
        let x = a_inv * ((self.a * t).exp() - Matrix2::identity()) * self.b;
        x[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Exact propagation of mean and covariance over each step.
    #[default]
    Exact,
    EulerMaruyama,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Initial {
    #[default]
    Rest,
    /// Drawn from the stationary distribution of the continuous model.
    Stationary,
    Fixed {
        q: f64,
        p: f64,
    },
}

fn default_true() -> bool {
    true
}

fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    /// Step (s).
    pub dt: f64,
    /// Total simulated time including burn-in (s).
    pub duration: f64,
    pub n_traj: usize,
    pub seed: u64,
    /// Discarded initial time (s).
    pub burn_in: f64,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default)]
    pub initial: Initial,
    #[serde(default = "default_true")]
    pub noise: bool,
    /// Record every `stride`-th step.
    #[serde(default = "default_stride")]
    pub stride: usize,
}

impl TrajectoryConfig {
    /// Exact scheme sampled so that Ω sits at a quarter of the sampling rate,
    /// resolving `Ω ± 25 Γ_eff` without folding; burn-in 10/Γ_eff and
    /// `length` recorded time in units of 1/Γ_eff.
    pub fn bandpass(params: &DerivedParams, length: f64, n_traj: usize, seed: u64) -> Self {
        let ge = params.gamma_eff();
        let dt = bandpass_interval(params.omega_m, 25.0 * ge);
        TrajectoryConfig {
            dt,
            duration: (10.0 + length) / ge,
            n_traj,
            seed,
            burn_in: 10.0 / ge,
            scheme: Scheme::Exact,
            initial: Initial::Rest,
            noise: true,
            stride: 1,
        }
    }

    /// Euler–Maruyama at the largest admissible step.
    pub fn euler(params: &DerivedParams, length: f64, n_traj: usize, seed: u64) -> Self {
        let ge = params.gamma_eff();
        TrajectoryConfig {
            dt: max_euler_step(params),
            duration: (10.0 + length) / ge,
            n_traj,
            seed,
            burn_in: 10.0 / ge,
            scheme: Scheme::EulerMaruyama,
            initial: Initial::Rest,
            noise: true,
            stride: 1,
        }
    }

    pub fn burn_in_steps(&self) -> usize {
        (self.burn_in / self.dt).round() as usize
    }

    /// Number of recorded samples per trajectory.
    pub fn samples(&self) -> usize {
        ((self.duration - self.burn_in) / (self.dt * self.stride as f64)).round() as usize
    }

    pub fn sample_interval(&self) -> f64 {
        self.dt * self.stride as f64
    }

    pub fn check(&self, params: &DerivedParams) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::validation(field, msg));
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad("dt", format!("must be positive, got {}", self.dt));
        }
        if self.n_traj == 0 {
            return bad("n_traj", "need at least one trajectory".into());
        }
        if self.stride == 0 {
            return bad("stride", "must be at least 1".into());
        }
        if !(self.burn_in >= 0.0 && self.duration > self.burn_in) {
            return bad(
                "duration",
                "must exceed burn_in, which must be nonnegative".into(),
            );
        }
        if self.scheme == Scheme::EulerMaruyama {
            let cap = max_euler_step(params);
            if self.dt > cap * (1.0 + 1e-12) {
                return bad(
                    "dt",
                    format!("Euler–Maruyama needs dt ≤ 0.01/max(Ω, Γ′) = {cap:e} s"),
                );
            }
        }
        if self.noise {
            let tau = 1.0 / params.gamma_eff();
            if self.burn_in < 10.0 * tau * (1.0 - 1e-9) {
                return bad(
                    "burn_in",
                    format!("must be at least 10/Γ_eff = {:e} s", 10.0 * tau),
                );
            }
            if self.duration - self.burn_in < 100.0 * tau * (1.0 - 1e-9) {
                return bad(
                    "duration",
                    format!(
                        "recorded span must be at least 100/Γ_eff = {:e} s",
                        100.0 * tau
                    ),
                );
            }
        }
        if self.samples() == 0 {
            return bad("duration", "records no samples".into());
        }
        Ok(())
    }
}

pub fn max_euler_step(params: &DerivedParams) -> f64 {
    0.01 / params.omega_m.max(params.gamma_f)
}

/// Sampling interval placing `omega` at a quarter of the sampling rate, with
/// the rate as low as a band of half-width `half_band` around `omega` allows.
pub fn bandpass_interval(omega: f64, half_band: f64) -> f64 {
    let k = ((omega / half_band - 1.0) / 4.0).floor().max(0.0);
    let rate = 4.0 * omega / (4.0 * k + 1.0);
    let rate = rate.max(4.0 * half_band);
    2.0 * PI / rate
}

/// Image of `omega` in `[0, π/dt]` after sampling every `dt`.
pub fn fold_frequency(omega: f64, dt: f64) -> f64 {
    let ws = 2.0 * PI / dt;
    let r = omega.rem_euclid(ws);
    if r > 0.5 * ws {
        ws - r
    } else {
        r
    }
}

/// Linear SDE `dx = A x dt + B dW`, with `⟨dW_i dW_j⟩ = level_i δ_ij dt` for the
/// inputs (Q_in, P_in, X_in, Y_in, Y_v).
#[derive(Debug, Clone)]
pub struct OracleModel {
    pub drift: Matrix4<f64>,
    pub input: NoiseInput,
    pub levels: [f64; 5],
    pub filter: FilterRealization,
}

impl OracleModel {
    pub fn new(params: &DerivedParams) -> Result<Self> {
        ResponseModel::new(params).check_stability()?;
        let filter = FilterRealization::new(params)?;
        let p = params;
        let (g, om, c) = (p.gamma_m, p.omega_m, p.cooperativity);
        let gain = p.feedback_gain;
        let drift = Matrix4::new(
            -0.5 * g,
            om,
            0.0,
            0.0,
            -om,
            -0.5 * g,
            -0.5 * gain * g,
            0.0,
            0.0,
            0.0,
            filter.a[(0, 0)],
            filter.a[(0, 1)],
            filter.b[1],
            0.0,
            filter.a[(1, 0)],
            filter.a[(1, 1)],
        );
        // Measurement record m = Q − (Y_in − s Y_v)/(2√(ΓC)) drives the filter.
        let readout = if gain == 0.0 {
            0.0
        } else if c > 0.0 {
            -filter.b[1] / (2.0 * (g * c).sqrt())
        } else {
            return Err(Error::Contract(
                "feedback without measurement (C = 0, G > 0)".into(),
            ));
        };
        let s = p.loss_weight();
        let mut input = NoiseInput::zeros();
        input[(0, 0)] = g.sqrt();
        input[(1, 1)] = g.sqrt();
        input[(1, 2)] = -2.0 * (g * c).sqrt();
        input[(3, 3)] = readout;
        input[(3, 4)] = -s * readout;
        let lv = p.thermal_level();
        Ok(OracleModel {
            drift,
            input,
            levels: [lv, lv, 0.5, 0.5, 0.5],
            filter,
        })
    }

    pub fn diffusion(&self) -> Matrix4<f64> {
        let scaled = self.input * SMatrix::<f64, 5, 5>::from_diagonal(&SVector::from(self.levels));
        scaled * self.input.transpose()
    }

    /// Solves `A P + P Aᵀ + D = 0`.
    pub fn stationary_covariance(&self) -> Result<Matrix4<f64>> {
        let a = self.drift;
        let i4 = Matrix4::<f64>::identity();
        let op: Matrix16 = i4.kronecker(&a) + a.kronecker(&i4);
        let d = self.diffusion();
        solve_vec(op, -d, "continuous Lyapunov equation")
    }

    /// Stationary covariance of the Euler–Maruyama recursion at step `dt`.
    pub fn euler_stationary_covariance(&self, dt: f64) -> Result<Matrix4<f64>> {
        let m = Matrix4::identity() + self.drift * dt;
        let op: Matrix16 = Matrix16::identity() - m.kronecker(&m);
        solve_vec(op, self.diffusion() * dt, "discrete Lyapunov equation")
    }

    /// Transition matrix and covariance of the exact one-step update.
    pub fn exact_step(&self, dt: f64) -> Result<(Matrix4<f64>, Matrix4<f64>)> {
        let a = self.drift;
        let d = self.diffusion();
        let scale = (0..4).map(|i| a.row(i).abs().sum()).fold(0.0, f64::max) * dt;
        if scale <= 1.0 {
            // Van Loan: exp([[−A, D], [0, Aᵀ]] dt) = [[·, Φ⁻¹Q], [0, Φᵀ]].
            let mut m = Matrix8::zeros();
            m.fixed_view_mut::<4, 4>(0, 0).copy_from(&(-a * dt));
            m.fixed_view_mut::<4, 4>(0, 4).copy_from(&(d * dt));
            m.fixed_view_mut::<4, 4>(4, 4)
                .copy_from(&(a.transpose() * dt));
            let e = m.exp();
            let phi = e.fixed_view::<4, 4>(4, 4).transpose();
            let q = phi * e.fixed_view::<4, 4>(0, 4);
            Ok((phi, 0.5 * (q + q.transpose())))
        } else {
            let phi = (a * dt).exp();
            let p = self.stationary_covariance()?;
            let q = p - phi * p * phi.transpose();
            Ok((phi, 0.5 * (q + q.transpose())))
        }
    }
}

fn solve_vec(op: Matrix16, rhs: Matrix4<f64>, what: &str) -> Result<Matrix4<f64>> {
    let b = SVector::<f64, 16>::from_column_slice(rhs.as_slice());
    let x = op
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Unstable(format!("{what} has no unique solution")))?;
    let p = Matrix4::from_column_slice(x.as_slice());
    Ok(0.5 * (p + p.transpose()))
}

/// Square-root factor `L` with `L Lᵀ = S` for a symmetric positive semidefinite `S`.
fn psd_factor(s: &Matrix4<f64>) -> Matrix4<f64> {
    let eig = SymmetricEigen::new(*s);
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    eig.eigenvectors * Matrix4::from_diagonal(&roots)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub index: usize,
    /// Sampling interval (s).
    pub dt: f64,
    pub times: Vec<f64>,
    pub q_samples: Vec<f64>,
    pub p_samples: Vec<f64>,
}

impl TraceRecord {
    pub fn len(&self) -> usize {
        self.q_samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q_samples.is_empty()
    }
}

enum Stepper {
    Exact {
        phi: Matrix4<f64>,
        factor: Matrix4<f64>,
    },
    Euler {
        m: Matrix4<f64>,
        input: NoiseInput,
        sd: [f64; 5],
    },
}

/// Prepared simulator for one parameter set and configuration.
pub struct Simulator {
    config: TrajectoryConfig,
    stepper: Stepper,
    start_factor: Matrix4<f64>,
}

impl Simulator {
    pub fn new(params: &DerivedParams, config: &TrajectoryConfig) -> Result<Self> {
        config.check(params)?;
        let model = OracleModel::new(params)?;
        let dt = config.dt;
        let stepper = match config.scheme {
            Scheme::Exact => {
                let (phi, q) = model.exact_step(dt)?;
                let factor = if config.noise {
                    psd_factor(&q)
                } else {
                    Matrix4::zeros()
                };
                Stepper::Exact { phi, factor }
            }
            Scheme::EulerMaruyama => {
                let on = if config.noise { 1.0 } else { 0.0 };
                Stepper::Euler {
                    m: Matrix4::identity() + model.drift * dt,
                    input: model.input,
                    sd: model.levels.map(|l| on * (l * dt).sqrt()),
                }
            }
        };
        let start_factor = match config.initial {
            Initial::Stationary => psd_factor(&model.stationary_covariance()?),
            _ => Matrix4::zeros(),
        };
        Ok(Simulator {
            config: *config,
            stepper,
            start_factor,
        })
    }

    fn rng(&self, index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(index as u64);
        rng
    }

    /// Trajectory `index` of the ensemble; its noise stream depends only on
    /// the seed and the index.
    pub fn run(&self, index: usize) -> Result<TraceRecord> {
        let cfg = &self.config;
        let mut rng = self.rng(index);
        let mut normal = move || -> f64 { StandardNormal.sample(&mut rng) };
        let mut x = match cfg.initial {
            Initial::Rest => Vector4::zeros(),
            Initial::Fixed { q, p } => Vector4::new(q, p, 0.0, 0.0),
            Initial::Stationary => self.start_factor * Vector4::from_fn(|_, _| normal()),
        };
        let burn = cfg.burn_in_steps();
        let n = cfg.samples();
        let mut out = TraceRecord {
            index,
            dt: cfg.sample_interval(),
            times: Vec::with_capacity(n),
            q_samples: Vec::with_capacity(n),
            p_samples: Vec::with_capacity(n),
        };
        let total = burn + n * cfg.stride;
        for k in 1..=total {
            x = match &self.stepper {
                Stepper::Exact { phi, factor } => {
                    let mut next = phi * x;
                    if cfg.noise {
                        next += factor * Vector4::from_fn(|_, _| normal());
                    }
                    next
                }
                Stepper::Euler { m, input, sd } => {
                    let mut next = m * x;
                    if cfg.noise {
                        let dw = SVector::<f64, 5>::from_fn(|i, _| sd[i] * normal());
                        next += input * dw;
                    }
                    next
                }
            };
            if !(x[0].abs() <= DIVERGENCE_LIMIT) {
                return Err(Error::Stability {
                    time: k as f64 * cfg.dt,
                    magnitude: x[0].abs(),
                });
            }
            if k > burn && (k - burn).is_multiple_of(cfg.stride) {
                out.times.push(k as f64 * cfg.dt);
                out.q_samples.push(x[0]);
                out.p_samples.push(x[1]);
            }
        }
        Ok(out)
    }
}

pub fn simulate(
    params: &DerivedParams,
    config: &TrajectoryConfig,
    index: usize,
) -> Result<TraceRecord> {
    Simulator::new(params, config)?.run(index)
}

/// All `n_traj` trajectories in index order, on `threads` workers (rayon's
/// default pool when `None`). Results do not depend on the thread count.
pub fn simulate_ensemble(
    params: &DerivedParams,
    config: &TrajectoryConfig,
    threads: Option<usize>,
) -> Result<Vec<TraceRecord>> {
    let sim = Simulator::new(params, config)?;
    crate::pool::install(threads, || {
        (0..config.n_traj)
            .into_par_iter()
            .map(|i| sim.run(i))
            .collect()
    })?
}

/// Welch estimate of the symmetrized two-sided spectra of Q and P on
/// `ω_k = 2πk/(L dt)`, `k = 0..=L/2`, so that the sampled variance is
/// `(1/2π)∫ S dω` over `[−π/dt, π/dt]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdEstimate {
    pub dt: f64,
    pub segment_len: usize,
    pub segments: usize,
    pub trajectories: usize,
    pub omega: Vec<f64>,
    pub s_qq: Vec<f64>,
    pub stderr_qq: Vec<f64>,
    pub s_pp: Vec<f64>,
    pub stderr_pp: Vec<f64>,
    /// Independent sub-estimates (one per trajectory, or one per segment
    /// for short ensembles) behind the standard errors.
    #[serde(skip)]
    units_qq: Vec<Vec<f64>>,
    #[serde(skip)]
    units_pp: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandEstimate {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
    pub s_qq: f64,
    pub stderr_qq: f64,
    pub s_pp: f64,
    pub stderr_pp: f64,
}

fn mean_and_stderr(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    if n < 2.0 {
        return (mean, f64::NAN);
    }
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

impl PsdEstimate {
    /// Spectra averaged over the bins with `lo ≤ ω ≤ hi`, with standard errors
    /// from the spread of the same average across sub-estimates.
    pub fn band(&self, lo: f64, hi: f64) -> Result<BandEstimate> {
        let idx: Vec<usize> = (0..self.omega.len())
            .filter(|&k| self.omega[k] >= lo && self.omega[k] <= hi)
            .collect();
        if idx.is_empty() {
            return Err(Error::Statistics(format!(
                "no frequency bins in [{lo:e}, {hi:e}]"
            )));
        }
        let avg = |u: &Vec<f64>| idx.iter().map(|&k| u[k]).sum::<f64>() / idx.len() as f64;
        let (s_qq, stderr_qq) = mean_and_stderr(self.units_qq.iter().map(avg));
        let (s_pp, stderr_pp) = mean_and_stderr(self.units_pp.iter().map(avg));
        Ok(BandEstimate {
            lo,
            hi,
            bins: idx.len(),
            s_qq,
            stderr_qq,
            s_pp,
            stderr_pp,
        })
    }
}

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| 0.5 - 0.5 * (2.0 * PI * k as f64 / n as f64).cos())
        .collect()
}

/// Welch periodograms (Hann window, 50% overlap) of every trace.
pub fn estimate_psd(traces: &[TraceRecord], segment_len: usize) -> Result<PsdEstimate> {
    if segment_len < 8 {
        return Err(Error::validation(
            "segment_len",
            "need at least 8 samples per segment",
        ));
    }
    let first = traces
        .first()
        .ok_or_else(|| Error::Statistics("no trajectories".into()))?;
    let dt = first.dt;
    if traces.iter().any(|t| t.dt != dt) {
        return Err(Error::Contract(
            "traces have different sampling intervals".into(),
        ));
    }
    let hop = segment_len / 2;
    let per_trace = |t: &TraceRecord| {
        if t.len() < segment_len {
            0
        } else {
            (t.len() - segment_len) / hop + 1
        }
    };
    let segments: usize = traces.iter().map(per_trace).sum();
    let n_traj = traces.iter().filter(|t| per_trace(t) > 0).count();
    if n_traj < MIN_TRAJECTORIES && segments < MIN_SEGMENTS {
        return Err(Error::Statistics(format!(
            "{n_traj} usable trajectories and {segments} segments; need {MIN_TRAJECTORIES} or {MIN_SEGMENTS}"
        )));
    }

    let window = hann(segment_len);
    let norm = dt / window.iter().map(|w| w * w).sum::<f64>();
    let bins = segment_len / 2 + 1;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(segment_len);
    let mut buf = vec![Complex64::new(0.0, 0.0); segment_len];
    let mut periodogram = |x: &[f64]| -> Vec<f64> {
        for (b, (v, w)) in buf.iter_mut().zip(x.iter().zip(&window)) {
            *b = Complex64::new(v * w, 0.0);
        }
        fft.process(&mut buf);
        buf[..bins].iter().map(|c| c.norm_sqr() * norm).collect()
    };

    let by_trajectory = n_traj >= MIN_TRAJECTORIES;
    let mut units_qq = Vec::new();
    let mut units_pp = Vec::new();
    for t in traces {
        let count = per_trace(t);
        if count == 0 {
            continue;
        }
        let mut acc_q = vec![0.0; bins];
        let mut acc_p = vec![0.0; bins];
        for s in 0..count {
            let range = s * hop..s * hop + segment_len;
            let pq = periodogram(&t.q_samples[range.clone()]);
            let pp = periodogram(&t.p_samples[range]);
            if by_trajectory {
                acc_q
                    .iter_mut()
                    .zip(&pq)
                    .for_each(|(a, v)| *a += v / count as f64);
                acc_p
                    .iter_mut()
                    .zip(&pp)
                    .for_each(|(a, v)| *a += v / count as f64);
            } else {
                units_qq.push(pq);
                units_pp.push(pp);
            }
        }
        if by_trajectory {
            units_qq.push(acc_q);
            units_pp.push(acc_p);
        }
    }

    let column = |units: &Vec<Vec<f64>>, k: usize| mean_and_stderr(units.iter().map(move |u| u[k]));
    let (s_qq, stderr_qq): (Vec<f64>, Vec<f64>) = (0..bins).map(|k| column(&units_qq, k)).unzip();
    let (s_pp, stderr_pp): (Vec<f64>, Vec<f64>) = (0..bins).map(|k| column(&units_pp, k)).unzip();
    Ok(PsdEstimate {
        dt,
        segment_len,
        segments,
        trajectories: n_traj,
        omega: (0..bins)
            .map(|k| 2.0 * PI * k as f64 / (segment_len as f64 * dt))
            .collect(),
        s_qq,
        stderr_qq,
        s_pp,
        stderr_pp,
        units_qq,
        units_pp,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleMoments {
    pub var_q: f64,
    pub var_p: f64,
    pub cov_qp: f64,
    pub stderr_q: f64,
    pub stderr_p: f64,
    pub stderr_qp: f64,
    pub samples: usize,
    pub batches: usize,
}

/// Pooled unbiased moments; standard errors from batch means, ten
/// contiguous batches per trace.
pub fn sample_variance(traces: &[TraceRecord]) -> SampleMoments {
    let samples: usize = traces.iter().map(TraceRecord::len).sum();
    let all_q = || traces.iter().flat_map(|t| t.q_samples.iter().copied());
    let all_p = || traces.iter().flat_map(|t| t.p_samples.iter().copied());
    let n = samples as f64;
    let (mq, mp) = (all_q().sum::<f64>() / n, all_p().sum::<f64>() / n);
    let dof = (n - 1.0).max(1.0);
    let var_q = all_q().map(|v| (v - mq).powi(2)).sum::<f64>() / dof;
    let var_p = all_p().map(|v| (v - mp).powi(2)).sum::<f64>() / dof;
    let cov_qp = all_q()
        .zip(all_p())
        .map(|(q, p)| (q - mq) * (p - mp))
        .sum::<f64>()
        / dof;

    let mut batch_stats = Vec::new();
    for t in traces {
        let per = t.len() / BATCHES_PER_TRACE;
        let (count, size) = if per == 0 {
            (1, t.len())
        } else {
            (BATCHES_PER_TRACE, per)
        };
        for b in 0..count {
            let r = b * size..(b + 1) * size;
            if r.is_empty() {
                continue;
            }
            let m = r.len() as f64;
            let q = &t.q_samples[r.clone()];
            let p = &t.p_samples[r];
            batch_stats.push([
                q.iter().map(|v| (v - mq).powi(2)).sum::<f64>() / m,
                p.iter().map(|v| (v - mp).powi(2)).sum::<f64>() / m,
                q.iter()
                    .zip(p)
                    .map(|(a, b)| (a - mq) * (b - mp))
                    .sum::<f64>()
                    / m,
            ]);
        }
    }
    let se = |i: usize| mean_and_stderr(batch_stats.iter().map(move |s| s[i])).1;
    SampleMoments {
        var_q,
        var_p,
        cov_qp,
        stderr_q: se(0),
        stderr_p: se(1),
        stderr_qp: se(2),
        samples,
        batches: batch_stats.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{derive, SystemConfig};

    #[test]
    fn realization_matches_filter() {
        let p = derive(&SystemConfig::canonical()).unwrap();
        let r = FilterRealization::new(&p).unwrap();
        for x in [0.3, 0.99, 1.7, 10.0] {
            let w = x * p.omega_m;
            approx::assert_relative_eq!(r.response(w).re, filter(w, &p).re, max_relative = 1e-10);
            approx::assert_relative_eq!(r.response(w).im, filter(w, &p).im, max_relative = 1e-10);
        }
    }

    #[test]
    fn bandpass_places_carrier_at_quarter_rate() {
        let omega = 2.0 * PI * 1e6;
        for half in [1e2, 3.3e3, 1e5, 1e6] {
            let dt = bandpass_interval(omega, half);
            let ws = 2.0 * PI / dt;
            assert!(0.25 * ws >= half * (1.0 - 1e-12));
            if half < omega {
                approx::assert_relative_eq!(
                    fold_frequency(omega, dt),
                    0.25 * ws,
                    max_relative = 1e-9
                );
            }
        }
    }

    #[test]
    fn folding_reflects_into_nyquist_band() {
        let dt = 1.0;
        let ws = 2.0 * PI;
        approx::assert_relative_eq!(fold_frequency(0.3 * ws, dt), 0.3 * ws);
        approx::assert_relative_eq!(fold_frequency(0.7 * ws, dt), 0.3 * ws, max_relative = 1e-12);
        approx::assert_relative_eq!(
            fold_frequency(-0.3 * ws, dt),
            0.3 * ws,
            max_relative = 1e-12
        );
        approx::assert_relative_eq!(fold_frequency(3.3 * ws, dt), 0.3 * ws, max_relative = 1e-12);
    }
}
