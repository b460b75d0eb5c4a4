//! Globally adaptive Gauss–Kronrod (7/15) quadrature over a set of panels,
//! with optional semi-infinite tails mapped onto the unit interval.
//!
//! Integrands are vector valued so that several spectral densities sharing
//! the same expensive response evaluation can be integrated in one pass.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.000_000_000_000_000_000_000_000_000_000_000,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for the odd Kronrod nodes (indices 1, 3, 5, 7).
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadSettings {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadSettings {
    fn default() -> Self {
        QuadSettings {
            rel_tol: 1e-8,
            abs_tol: 0.0,
            max_intervals: 20_000,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult<const N: usize> {
    pub value: [f64; N],
    pub error: [f64; N],
    pub evaluations: usize,
}

/// How a unit-parameter interval maps onto the real line.
#[derive(Debug, Clone, Copy)]
enum Map {
    Identity,
    /// ω = L / t, t ∈ (0, 1].
    Upper(f64),
    /// ω = −L / t, t ∈ (0, 1].
    Lower(f64),
}

impl Map {
    #[inline]
    fn apply(self, t: f64) -> (f64, f64) {
        match self {
            Map::Identity => (t, 1.0),
            Map::Upper(l) => (l / t, l / (t * t)),
            Map::Lower(l) => (-l / t, l / (t * t)),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Interval<const N: usize> {
    a: f64,
    b: f64,
    map: Map,
    value: [f64; N],
    error: [f64; N],
    key: f64,
}

impl<const N: usize> PartialEq for Interval<N> {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}
impl<const N: usize> Eq for Interval<N> {}
impl<const N: usize> PartialOrd for Interval<N> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<const N: usize> Ord for Interval<N> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key.total_cmp(&other.key)
    }
}

fn gk15<const N: usize, F>(f: &mut F, a: f64, b: f64, map: Map) -> ([f64; N], [f64; N])
where
    F: FnMut(f64) -> [f64; N],
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut eval = |t: f64| {
        let (x, jac) = map.apply(t);
        let mut y = f(x);
        for v in &mut y {
            *v *= jac;
        }
        y
    };
    let fc = eval(center);
    let mut kronrod = [0.0; N];
    let mut gauss = [0.0; N];
    for k in 0..N {
        kronrod[k] = WGK[7] * fc[k];
        gauss[k] = WG[3] * fc[k];
    }
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = eval(center - dx);
        let f2 = eval(center + dx);
        for k in 0..N {
            let s = f1[k] + f2[k];
            kronrod[k] += WGK[j] * s;
            if j % 2 == 1 {
                gauss[k] += WG[j / 2] * s;
            }
        }
    }
    let mut value = [0.0; N];
    let mut error = [0.0; N];
    for k in 0..N {
        value[k] = kronrod[k] * half;
        // |K − G| bounds the Gauss error and so overestimates the Kronrod one.
        let raw = ((kronrod[k] - gauss[k]) * half).abs();
        error[k] = raw.max(50.0 * f64::EPSILON * value[k].abs());
    }
    (value, error)
}

/// Integrate `f` over the union of `[breaks[i], breaks[i+1]]`, and over the
/// semi-infinite tails beyond the first and last break when `tails` is set.
///
/// With tails enabled the outer breakpoints must be `−L < 0 < L`.
pub fn integrate<const N: usize, F>(
    mut f: F,
    breaks: &[f64],
    tails: bool,
    settings: &QuadSettings,
) -> Result<QuadResult<N>>
where
    F: FnMut(f64) -> [f64; N],
{
    assert!(breaks.len() >= 2, "need at least one panel");
    let mut raw: Vec<(f64, f64, Map)> = breaks
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| (w[0], w[1], Map::Identity))
        .collect();
    if tails {
        let lo = breaks[0];
        let hi = breaks[breaks.len() - 1];
        assert!(
            lo < 0.0 && hi > 0.0,
            "tail mapping needs breaks spanning zero"
        );
        raw.push((0.0, 1.0, Map::Upper(hi)));
        raw.push((0.0, 1.0, Map::Lower(-lo)));
    }

    let mut evaluations = 0usize;
    let mut initial = Vec::with_capacity(raw.len());
    for (a, b, map) in raw {
        let (value, error) = gk15(&mut f, a, b, map);
        evaluations += 15;
        initial.push(Interval {
            a,
            b,
            map,
            value,
            error,
            key: 0.0,
        });
    }
    let mut total = [0.0; N];
    let mut total_err = [0.0; N];
    for iv in &initial {
        for k in 0..N {
            total[k] += iv.value[k];
            total_err[k] += iv.error[k];
        }
    }
    // Error scale per component, frozen after the first pass; only relative ranking matters.
    let scale: [f64; N] = std::array::from_fn(|k| {
        let s = settings.rel_tol * total[k].abs();
        s.max(settings.abs_tol).max(f64::MIN_POSITIVE)
    });
    let key_of = |error: &[f64; N]| (0..N).map(|k| error[k] / scale[k]).fold(0.0_f64, f64::max);
    let mut heap: BinaryHeap<Interval<N>> = initial
        .into_iter()
        .map(|mut iv| {
            iv.key = key_of(&iv.error);
            iv
        })
        .collect();

    let converged = |total: &[f64; N], err: &[f64; N]| {
        (0..N).all(|k| err[k] <= (settings.rel_tol * total[k].abs()).max(settings.abs_tol))
    };

    while !converged(&total, &total_err) {
        if heap.len() >= settings.max_intervals {
            let achieved = (0..N)
                .map(|k| total_err[k] / total[k].abs().max(f64::MIN_POSITIVE))
                .fold(0.0_f64, f64::max);
            return Err(Error::Quadrature {
                achieved,
                requested: settings.rel_tol,
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a && mid < worst.b) {
            // Interval exhausted at machine precision; accept it as is.
            let achieved = (0..N)
                .map(|k| total_err[k] / total[k].abs().max(f64::MIN_POSITIVE))
                .fold(0.0_f64, f64::max);
            return Err(Error::Quadrature {
                achieved,
                requested: settings.rel_tol,
            });
        }
        let (v1, e1) = gk15(&mut f, worst.a, mid, worst.map);
        let (v2, e2) = gk15(&mut f, mid, worst.b, worst.map);
        evaluations += 30;
        // Replacing a dominant interval cancels catastrophically in the running sums.
        let dominant = (0..N).any(|k| {
            worst.error[k] > 1e-3 * total_err[k] || worst.value[k].abs() > 1e3 * total[k].abs()
        });
        for k in 0..N {
            total[k] += v1[k] + v2[k] - worst.value[k];
            total_err[k] += e1[k] + e2[k] - worst.error[k];
        }
        heap.push(Interval {
            a: worst.a,
            b: mid,
            map: worst.map,
            value: v1,
            error: e1,
            key: key_of(&e1),
        });
        heap.push(Interval {
            a: mid,
            b: worst.b,
            map: worst.map,
            value: v2,
            error: e2,
            key: key_of(&e2),
        });
        if dominant {
            total = [0.0; N];
            total_err = [0.0; N];
            for iv in heap.iter() {
                for k in 0..N {
                    total[k] += iv.value[k];
                    total_err[k] += iv.error[k];
                }
            }
        }
    }

    // Re-sum from the leaves to shed accumulated rounding from the running updates.
    let mut value = [0.0; N];
    let mut error = [0.0; N];
    for iv in heap.iter() {
        for k in 0..N {
            value[k] += iv.value[k];
            error[k] += iv.error[k];
        }
    }
    Ok(QuadResult {
        value,
        error,
        evaluations,
    })
}

/// Scalar convenience wrapper around [`integrate`].
pub fn integrate_scalar<F>(
    mut f: F,
    breaks: &[f64],
    tails: bool,
    settings: &QuadSettings,
) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    integrate(|x| [f(x)], breaks, tails, settings).map(|r| r.value[0])
}
