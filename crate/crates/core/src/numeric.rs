//! Shared numerical building blocks: sample ladders, compensated summation,
//! monotone inversion by bisection and adaptive Gauss-Kronrod quadrature.

use crate::error::{Error, Result};

/// Geometric ladder from `lo` to `hi` inclusive with `per_decade` points per
/// factor of ten.
pub fn geometric_ladder(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi >= lo && per_decade > 0);
    let decades = (hi / lo).log10();
    let steps = (decades * per_decade as f64).round().max(1.0) as usize;
    let ratio = (hi.ln() - lo.ln()) / steps as f64;
    (0..=steps)
        .map(|i| {
            if i == 0 {
                lo
            } else if i == steps {
                hi
            } else {
                (lo.ln() + ratio * i as f64).exp()
            }
        })
        .collect()
}

/// Neumaier compensated accumulator. Results depend only on the order of
/// `add` calls.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl std::iter::FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = NeumaierSum::new();
        for v in iter {
            s.add(v);
        }
        s
    }
}

/// Compensated sum of an iterator.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<NeumaierSum>().value()
}

/// Solves `f(t) = target` for a nondecreasing `f` on `[0, inf)` with `f(0) = 0`.
///
/// The bracket starts at `[0, 1]`; the upper end is doubled until
/// `f(hi) >= target` (giving up past `1e300`) and the lower end halved while
/// `f(lo) >= target`, so that small targets keep full relative precision.
/// Bisection stops once `hi - lo <= rel_tol * hi`.
pub fn invert_increasing<F>(f: F, target: f64, rel_tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if target.is_nan() || target < 0.0 {
        return Err(Error::Inverse { sigma: target });
    }
    if target == 0.0 {
        return Ok(0.0);
    }
    let check = |v: f64| -> Result<f64> {
        if v.is_nan() {
            Err(Error::Inverse { sigma: target })
        } else {
            Ok(v)
        }
    };
    let (mut lo, mut hi);
    if check(f(1.0))? < target {
        lo = 1.0;
        hi = 2.0;
        while check(f(hi))? < target {
            lo = hi;
            hi *= 2.0;
            if hi > 1e300 {
                return Err(Error::Inverse { sigma: target });
            }
        }
    } else {
        hi = 1.0;
        lo = 0.5;
        while check(f(lo))? >= target {
            hi = lo;
            lo *= 0.5;
            if lo < 1e-300 {
                // below the representable range of interest: treat as underflow
                return Ok(0.0);
            }
        }
    }
    for _ in 0..200 {
        if hi - lo <= rel_tol * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if check(f(mid))? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Outcome of an adaptive quadrature.
#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub converged: bool,
    pub intervals: usize,
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
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
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// 15-point Kronrod rule with its embedded 7-point Gauss estimate. Nodes are
/// interior, so integrable endpoint singularities are never sampled.
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Globally adaptive Gauss-Kronrod integration of `f` over `[a, b]`: the
/// subinterval with the largest error estimate is bisected until the summed
/// estimate is below `max(abs_tol, rel_tol * |I|)` or `max_intervals` is hit.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_intervals: usize,
) -> Quadrature {
    let (v, e) = gk15(&f, a, b);
    let mut parts = vec![(a, b, v, e)];
    loop {
        let total: f64 = compensated_sum(parts.iter().map(|p| p.2));
        let err: f64 = parts.iter().map(|p| p.3).sum();
        let converged = err <= abs_tol.max(rel_tol * total.abs());
        if converged || parts.len() >= max_intervals || !total.is_finite() {
            return Quadrature {
                value: total,
                error: err,
                converged: converged && total.is_finite(),
                intervals: parts.len(),
            };
        }
        let (idx, _) = parts.iter().enumerate().max_by(|x, y| x.1 .3.total_cmp(&y.1 .3)).expect("nonempty");
        let (lo, hi, _, _) = parts.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
    }
}
