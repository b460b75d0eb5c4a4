//! Wigner functions on a rectangular (Q, P) grid: input states, gain scaling,
//! Gaussian noise convolution, fidelity and negativity.
//!
//! Convention: [Q, P] = i and vacuum quadrature variance 1/2, so the vacuum
//! is `exp(−Q² − P²)/π`.

use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::NoiseCovariance;
use crate::transfer::Gains;

pub const MIN_SAMPLES: usize = 64;
pub const DEFAULT_EXTENT: f64 = 6.0;
pub const DEFAULT_SAMPLES: usize = 256;

/// Vacuum Wigner value five standard deviations from its centre; the largest
/// magnitude a state may have on the grid boundary.
pub const BOUNDARY_TOLERANCE: f64 = 1.186_230_547_050_824_2e-6;

const VACUUM_SIGMA: f64 = std::f64::consts::FRAC_1_SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub q_min: f64,
    pub q_max: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub n_q: usize,
    pub n_p: usize,
}

impl GridSpec {
    pub fn new(
        q_min: f64,
        q_max: f64,
        p_min: f64,
        p_max: f64,
        n_q: usize,
        n_p: usize,
    ) -> Result<Self> {
        let spec = GridSpec {
            q_min,
            q_max,
            p_min,
            p_max,
            n_q,
            n_p,
        };
        if n_q < MIN_SAMPLES || n_p < MIN_SAMPLES {
            return Err(Error::validation(
                "grid",
                format!("need at least {MIN_SAMPLES} samples per axis, got {n_q}×{n_p}"),
            ));
        }
        if !(q_max > q_min && p_max > p_min)
            || ![q_min, q_max, p_min, p_max].iter().all(|v| v.is_finite())
        {
            return Err(Error::validation(
                "grid",
                "extents must be finite and increasing",
            ));
        }
        Ok(spec)
    }

    /// Square grid `[−extent, extent]²` with `n` samples per axis.
    pub fn square(extent: f64, n: usize) -> Result<Self> {
        Self::new(-extent, extent, -extent, extent, n, n)
    }

    pub fn dq(&self) -> f64 {
        (self.q_max - self.q_min) / (self.n_q - 1) as f64
    }

    pub fn dp(&self) -> f64 {
        (self.p_max - self.p_min) / (self.n_p - 1) as f64
    }

    pub fn q(&self, i: usize) -> f64 {
        self.q_min + i as f64 * self.dq()
    }

    pub fn p(&self, j: usize) -> f64 {
        self.p_min + j as f64 * self.dp()
    }

    pub fn len(&self) -> usize {
        self.n_q * self.n_p
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Bitwise equality of layout, as required for pointwise products.
    pub fn same_layout(&self, other: &GridSpec) -> bool {
        self == other
    }

    fn trapezoid_weight(&self, i: usize, j: usize) -> f64 {
        let wq = if i == 0 || i + 1 == self.n_q {
            0.5
        } else {
            1.0
        };
        let wp = if j == 0 || j + 1 == self.n_p {
            0.5
        } else {
            1.0
        };
        wq * wp * self.dq() * self.dp()
    }
}

/// Sampled phase-space function; `values[i * n_p + j]` holds (q_i, p_j).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpaceGrid {
    pub spec: GridSpec,
    pub values: Vec<f64>,
}

impl PhaseSpaceGrid {
    pub fn from_fn(spec: GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(spec.len());
        for i in 0..spec.n_q {
            let q = spec.q(i);
            for j in 0..spec.n_p {
                values.push(f(q, spec.p(j)));
            }
        }
        PhaseSpaceGrid { spec, values }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.spec.n_p + j]
    }

    /// Trapezoidal ∫W dQ dP.
    pub fn integral(&self) -> f64 {
        self.weighted_sum(|_, _, w| w)
    }

    /// Means and covariance (⟨Q⟩, ⟨P⟩, Var Q, Cov QP, Var P) of the distribution.
    pub fn moments(&self) -> [f64; 5] {
        let norm = self.integral();
        let mq = self.weighted_sum(|q, _, w| q * w) / norm;
        let mp = self.weighted_sum(|_, p, w| p * w) / norm;
        let vqq = self.weighted_sum(|q, _, w| (q - mq).powi(2) * w) / norm;
        let vqp = self.weighted_sum(|q, p, w| (q - mq) * (p - mp) * w) / norm;
        let vpp = self.weighted_sum(|_, p, w| (p - mp).powi(2) * w) / norm;
        [mq, mp, vqq, vqp, vpp]
    }

    fn weighted_sum(&self, f: impl Fn(f64, f64, f64) -> f64) -> f64 {
        let s = &self.spec;
        let mut total = 0.0;
        for i in 0..s.n_q {
            let q = s.q(i);
            for j in 0..s.n_p {
                total += s.trapezoid_weight(i, j) * f(q, s.p(j), self.at(i, j));
            }
        }
        total
    }

    /// Largest |W| on the outer rows and columns.
    pub fn boundary_max(&self) -> f64 {
        let s = &self.spec;
        let mut m = 0.0_f64;
        for i in 0..s.n_q {
            m = m.max(self.at(i, 0).abs()).max(self.at(i, s.n_p - 1).abs());
        }
        for j in 0..s.n_p {
            m = m.max(self.at(0, j).abs()).max(self.at(s.n_q - 1, j).abs());
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateKind {
    Coherent,
    Fock1,
    Cat,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateSpec {
    pub kind: StateKind,
    /// Displacement for coherent and cat states; ignored for Fock-1.
    #[serde(default)]
    pub alpha: Complex64,
}

impl StateSpec {
    pub fn coherent(alpha: Complex64) -> Self {
        StateSpec {
            kind: StateKind::Coherent,
            alpha,
        }
    }

    pub fn vacuum() -> Self {
        Self::coherent(Complex64::new(0.0, 0.0))
    }

    pub fn fock1() -> Self {
        StateSpec {
            kind: StateKind::Fock1,
            alpha: Complex64::new(0.0, 0.0),
        }
    }

    pub fn cat(alpha: Complex64) -> Self {
        StateSpec {
            kind: StateKind::Cat,
            alpha,
        }
    }

    /// Short label used in report columns, e.g. `coherent`, `fock1`, `cat`.
    pub fn label(&self) -> &'static str {
        match self.kind {
            StateKind::Coherent => "coherent",
            StateKind::Fock1 => "fock1",
            StateKind::Cat => "cat",
        }
    }

    /// Closed-form Wigner function at (q, p).
    pub fn wigner(&self, q: f64, p: f64) -> f64 {
        let (ar, ai) = (self.alpha.re, self.alpha.im);
        match self.kind {
            StateKind::Coherent => {
                let (dq, dp) = (q - SQRT_2 * ar, p - SQRT_2 * ai);
                (-(dq * dq + dp * dp)).exp() / PI
            }
            StateKind::Fock1 => {
                let r2 = q * q + p * p;
                (-r2).exp() * (2.0 * r2 - 1.0) / PI
            }
            StateKind::Cat => {
                let a2 = ar * ar + ai * ai;
                // e^{−r·r} e^{−2α·α} cosh(2√2 r·α), written as two displaced Gaussians.
                let lobe = |s: f64| {
                    let (dq, dp) = (q - s * SQRT_2 * ar, p - s * SQRT_2 * ai);
                    (-(dq * dq + dp * dp)).exp()
                };
                // ϖα = (α_i, −α_r)
                let fringe = (-(q * q + p * p)).exp() * (2.0 * SQRT_2 * (q * ai - p * ar)).cos();
                (0.5 * (lobe(1.0) + lobe(-1.0)) + fringe) / (PI * ((-2.0 * a2).exp() + 1.0))
            }
        }
    }

    /// Distance from the origin to the farthest Gaussian feature centre.
    fn feature_radius(&self) -> f64 {
        match self.kind {
            StateKind::Fock1 => 0.0,
            StateKind::Coherent | StateKind::Cat => SQRT_2 * self.alpha.norm(),
        }
    }
}

/// ±6, 256×256, widened in steps of 1/2 until every state's features sit
/// at least five vacuum standard deviations inside the boundary.
pub fn default_grid(states: &[StateSpec]) -> GridSpec {
    let needed = states
        .iter()
        .map(|s| {
            s.feature_radius()
                + 5.0 * VACUUM_SIGMA
                + if s.kind == StateKind::Fock1 { 1.0 } else { 0.0 }
        })
        .fold(DEFAULT_EXTENT, f64::max);
    let extent = (needed * 2.0).ceil() / 2.0;
    GridSpec::square(extent, DEFAULT_SAMPLES).expect("default grid is valid")
}

fn check_coverage(what: &str, grid: &PhaseSpaceGrid) -> Result<()> {
    let edge = grid.boundary_max();
    if edge > BOUNDARY_TOLERANCE {
        return Err(Error::Coverage(format!(
            "{what} reaches |W| = {edge:.3e} on the grid boundary (limit {BOUNDARY_TOLERANCE:.3e}); enlarge the grid"
        )));
    }
    Ok(())
}

pub fn wigner_state(spec: &StateSpec, grid: &GridSpec) -> Result<PhaseSpaceGrid> {
    let w = PhaseSpaceGrid::from_fn(*grid, |q, p| spec.wigner(q, p));
    check_coverage(spec.label(), &w)?;
    Ok(w)
}

/// Normalized Gaussian with covariance `cov`, sampled on `grid`.
pub fn noise_kernel(cov: &NoiseCovariance, grid: &GridSpec) -> Result<PhaseSpaceGrid> {
    let g = gaussian(cov)?;
    Ok(PhaseSpaceGrid::from_fn(*grid, |q, p| g.eval(q, p)))
}

#[derive(Debug, Clone, Copy)]
struct Gaussian {
    // Inverse covariance and normalization.
    i11: f64,
    i12: f64,
    i22: f64,
    norm: f64,
}

impl Gaussian {
    #[inline]
    fn eval(&self, q: f64, p: f64) -> f64 {
        self.norm * (-0.5 * (self.i11 * q * q + 2.0 * self.i12 * q * p + self.i22 * p * p)).exp()
    }
}

fn gaussian(cov: &NoiseCovariance) -> Result<Gaussian> {
    cov.check()?;
    let scale = cov.v11.max(cov.v22);
    if scale <= 0.0 {
        return Err(Error::Contract(
            "noise kernel needs a nonzero covariance".into(),
        ));
    }
    let mut c = *cov;
    if c.det() <= 0.0 {
        let jitter = 1e-12 * scale;
        c.v11 += jitter;
        c.v22 += jitter;
    }
    let det = c.det();
    if !(det > 0.0) {
        return Err(Error::Contract(format!(
            "noise covariance is singular (det = {det:e})"
        )));
    }
    Ok(Gaussian {
        i11: c.v22 / det,
        i12: -c.v12 / det,
        i22: c.v11 / det,
        norm: 1.0 / (2.0 * PI * det.sqrt()),
    })
}

/// Keys cubic convolution kernel (a = −1/2).
#[inline]
fn keys(x: f64) -> f64 {
    let x = x.abs();
    if x < 1.0 {
        (1.5 * x - 2.5) * x * x + 1.0
    } else if x < 2.0 {
        ((-0.5 * x + 2.5) * x - 4.0) * x + 2.0
    } else {
        0.0
    }
}

/// Bicubic value of a grid at an arbitrary point; zero outside the grid.
fn interpolate(w: &PhaseSpaceGrid, q: f64, p: f64) -> f64 {
    let s = &w.spec;
    let u = (q - s.q_min) / s.dq();
    let v = (p - s.p_min) / s.dp();
    let (iu, iv) = (u.floor() as i64, v.floor() as i64);
    let mut total = 0.0;
    for di in -1..=2 {
        let i = iu + di;
        if i < 0 || i >= s.n_q as i64 {
            continue;
        }
        let kq = keys(u - i as f64);
        if kq == 0.0 {
            continue;
        }
        for dj in -1..=2 {
            let j = iv + dj;
            if j < 0 || j >= s.n_p as i64 {
                continue;
            }
            total += kq * keys(v - j as f64) * w.at(i as usize, j as usize);
        }
    }
    total
}

fn check_gains(gains: &Gains) -> Result<()> {
    if !(gains.g_x.is_finite() && gains.g_y.is_finite() && gains.g_x > 0.0 && gains.g_y > 0.0) {
        return Err(Error::Contract(format!(
            "gain transform needs positive finite gains, got g_x = {}, g_y = {}",
            gains.g_x, gains.g_y
        )));
    }
    Ok(())
}

/// Smallest feature a rescaled state may have, in grid spacings.
const MIN_RESOLVED_SPACINGS: f64 = 2.0;

fn check_resolution(gains: &Gains, grid: &GridSpec) -> Result<()> {
    let narrowest = VACUUM_SIGMA * gains.g_x.min(gains.g_y);
    if narrowest < MIN_RESOLVED_SPACINGS * grid.dq().max(grid.dp()) {
        return Err(Error::Coverage(format!(
            "gain {:.3e} shrinks the state below the grid resolution",
            gains.g_x.min(gains.g_y)
        )));
    }
    Ok(())
}

/// `W′(Q, P) = W(Q/g_x, P/g_y) / (g_x g_y)`, by bicubic interpolation.
pub fn gain_transform(w: &PhaseSpaceGrid, gains: &Gains) -> Result<PhaseSpaceGrid> {
    check_gains(gains)?;
    check_resolution(gains, &w.spec)?;
    let (gx, gy) = (gains.g_x, gains.g_y);
    if gx == 1.0 && gy == 1.0 {
        return Ok(w.clone());
    }
    let out = PhaseSpaceGrid::from_fn(w.spec, |q, p| interpolate(w, q / gx, p / gy) / (gx * gy));
    check_coverage("gain-scaled state", &out)?;
    Ok(out)
}

/// Whether the target is rescaled by the transfer gains before convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainHandling {
    #[default]
    Scaled,
    /// Convolve the unscaled target with the noise kernel.
    Unscaled,
}

/// Linear convolution of `src` with a kernel known in closed form, through
/// zero-padded FFTs. The kernel is sampled at every pairwise offset so the
/// result is exact on the grid even when the kernel is wider than the grid.
fn convolve(src: &PhaseSpaceGrid, kernel: &Gaussian, normalize_kernel: bool) -> PhaseSpaceGrid {
    let s = src.spec;
    let (nq, np) = (s.n_q, s.n_p);
    let (kq, kp) = (2 * nq - 1, 2 * np - 1);
    let (mq, mp) = (nq + kq - 1, np + kp - 1);
    let (dq, dp) = (s.dq(), s.dp());

    let mut kern = vec![0.0; kq * kp];
    for a in 0..kq {
        let q = (a as f64 - (nq - 1) as f64) * dq;
        for b in 0..kp {
            let p = (b as f64 - (np - 1) as f64) * dp;
            kern[a * kp + b] = kernel.eval(q, p);
        }
    }
    if normalize_kernel {
        let sum: f64 = kern.iter().sum::<f64>() * dq * dp;
        if sum > 0.0 {
            kern.iter_mut().for_each(|v| *v /= sum);
        }
    }

    let mut planner = FftPlanner::<f64>::new();
    let fwd_q = planner.plan_fft_forward(mq);
    let fwd_p = planner.plan_fft_forward(mp);
    let inv_q = planner.plan_fft_inverse(mq);
    let inv_p = planner.plan_fft_inverse(mp);

    let load = |data: &[f64], rows: usize, cols: usize| {
        let mut buf = vec![Complex64::new(0.0, 0.0); mq * mp];
        for a in 0..rows {
            for b in 0..cols {
                buf[a * mp + b] = Complex64::new(data[a * cols + b], 0.0);
            }
        }
        buf
    };
    let transform = |buf: &mut Vec<Complex64>,
                     along_p: &dyn rustfft::Fft<f64>,
                     along_q: &dyn rustfft::Fft<f64>| {
        for row in buf.chunks_exact_mut(mp) {
            along_p.process(row);
        }
        let mut column = vec![Complex64::new(0.0, 0.0); mq];
        for b in 0..mp {
            for a in 0..mq {
                column[a] = buf[a * mp + b];
            }
            along_q.process(&mut column);
            for a in 0..mq {
                buf[a * mp + b] = column[a];
            }
        }
    };

    let mut x = load(&src.values, nq, np);
    let mut k = load(&kern, kq, kp);
    transform(&mut x, fwd_p.as_ref(), fwd_q.as_ref());
    transform(&mut k, fwd_p.as_ref(), fwd_q.as_ref());
    x.iter_mut().zip(&k).for_each(|(a, b)| *a *= b);
    transform(&mut x, inv_p.as_ref(), inv_q.as_ref());

    let scale = dq * dp / (mq * mp) as f64;
    let mut values = Vec::with_capacity(nq * np);
    for i in 0..nq {
        for j in 0..np {
            values.push(x[(i + nq - 1) * mp + (j + np - 1)].re * scale);
        }
    }
    PhaseSpaceGrid { spec: s, values }
}

/// Apply the transfer to a state: optional gain scaling, then convolution
/// with the noise kernel.
///
/// The scaled state is sampled from its closed form at `(Q/g_x, P/g_y)`.
/// Mass carried beyond the grid by a wide kernel is not renormalized away.
pub fn transfer_wigner(
    spec: &StateSpec,
    cov: &NoiseCovariance,
    gains: &Gains,
    grid: &GridSpec,
    handling: GainHandling,
) -> Result<PhaseSpaceGrid> {
    let source = match handling {
        GainHandling::Scaled => {
            check_gains(gains)?;
            check_resolution(gains, grid)?;
            let (gx, gy) = (gains.g_x, gains.g_y);
            let w = PhaseSpaceGrid::from_fn(*grid, |q, p| spec.wigner(q / gx, p / gy) / (gx * gy));
            check_coverage("gain-scaled state", &w)?;
            w
        }
        GainHandling::Unscaled => wigner_state(spec, grid)?,
    };
    cov.check()?;
    if cov.v11.max(cov.v22) == 0.0 {
        return Ok(source);
    }
    let kernel = gaussian(cov)?;
    // A kernel narrower than the spacing is a discrete delta; its samples are renormalized.
    let sigma_min = {
        let tr = cov.trace();
        let disc = ((cov.v11 - cov.v22).powi(2) + 4.0 * cov.v12 * cov.v12).sqrt();
        (0.5 * (tr - disc)).max(0.0).sqrt()
    };
    let narrow = sigma_min < grid.dq().max(grid.dp());
    Ok(convolve(&source, &kernel, narrow))
}

/// Fidelity `2π ∫ W₁ W₂ dQ dP` with its unclipped value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fidelity {
    /// Clipped to [0, 1 + 10⁻³].
    pub value: f64,
    pub raw: f64,
    /// Set when `raw` exceeded 1 + 10⁻³ or fell below 0.
    pub clipped: bool,
}

pub const FIDELITY_CEILING: f64 = 1.0 + 1e-3;

pub fn fidelity(target: &PhaseSpaceGrid, transferred: &PhaseSpaceGrid) -> Result<Fidelity> {
    if !target.spec.same_layout(&transferred.spec) {
        return Err(Error::GridMismatch(format!(
            "fidelity needs identical grids, got {:?} and {:?}",
            target.spec, transferred.spec
        )));
    }
    let s = &target.spec;
    let mut total = 0.0;
    for i in 0..s.n_q {
        for j in 0..s.n_p {
            total += s.trapezoid_weight(i, j) * target.at(i, j) * transferred.at(i, j);
        }
    }
    let raw = 2.0 * PI * total;
    let value = raw.clamp(0.0, FIDELITY_CEILING);
    Ok(Fidelity {
        value,
        raw,
        clipped: value != raw,
    })
}

/// Global grid minimum as (value, q, p).
pub fn min_wigner(w: &PhaseSpaceGrid) -> (f64, f64, f64) {
    let (idx, value) =
        w.values
            .iter()
            .copied()
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |best, (k, v)| if v < best.1 { (k, v) } else { best },
            );
    let (i, j) = (idx / w.spec.n_p, idx % w.spec.n_p);
    (value, w.spec.q(i), w.spec.p(j))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_kernel_interpolates_nodes() {
        assert_eq!(keys(0.0), 1.0);
        assert_eq!(keys(1.0), 0.0);
        assert_eq!(keys(2.0), 0.0);
        let s: f64 = (-2..=2).map(|k| keys(0.3 - k as f64)).sum();
        approx::assert_relative_eq!(s, 1.0, max_relative = 1e-14);
    }

    #[test]
    fn boundary_tolerance_is_vacuum_at_five_sigma() {
        approx::assert_relative_eq!(
            BOUNDARY_TOLERANCE,
            (-12.5f64).exp() / PI,
            max_relative = 1e-15
        );
    }

    #[test]
    fn small_grids_are_rejected() {
        assert!(GridSpec::square(6.0, 32).is_err());
        assert!(GridSpec::new(1.0, -1.0, -1.0, 1.0, 64, 64).is_err());
    }

    #[test]
    fn default_grid_grows_for_displaced_states() {
        assert_eq!(default_grid(&[StateSpec::fock1()]).q_max, 6.0);
        assert_eq!(
            default_grid(&[StateSpec::cat(Complex64::new(2.0, 0.0))]).q_max,
            6.5
        );
        assert!(default_grid(&[StateSpec::coherent(Complex64::new(3.0, 0.0))]).q_max >= 7.8);
    }
}
