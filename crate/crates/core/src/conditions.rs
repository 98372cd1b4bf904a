//! Sampled verification of the structural conditions on `A`, its growth
//! function `G` and an optional lower-order function `B`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::DomainSpec;
use crate::error::Result;
use crate::growth::{DerivedGrowth, GrowthFunction};
use crate::nfunction::NFunction;
use crate::numeric::geometric_ladder;

/// Sample ladders for the checks: `t` and `alpha` share one geometric ladder,
/// `x` runs over a `x_per_axis^n` tensor grid of the domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplePlan {
    pub lo: f64,
    pub hi: f64,
    pub per_decade: usize,
    pub x_per_axis: usize,
}

impl Default for SamplePlan {
    fn default() -> Self {
        Self { lo: 1e-4, hi: 1e4, per_decade: 25, x_per_axis: 5 }
    }
}

impl SamplePlan {
    pub fn ladder(&self) -> Vec<f64> {
        geometric_ladder(self.lo, self.hi, self.per_decade)
    }

    /// The ladder shrunk by one decade at each end.
    fn inner_ladder(&self) -> Vec<f64> {
        let lo = self.lo * 10.0;
        let hi = self.hi / 10.0;
        if hi <= lo {
            return self.ladder();
        }
        self.ladder().into_iter().filter(|&a| a >= lo * (1.0 - 1e-12) && a <= hi * (1.0 + 1e-12)).collect()
    }
}

/// Where a sampled inequality is tightest (or violated).
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Witness {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

/// Verdict of one condition. `margin` is the signed worst-case slack where
/// the condition has one (negative means violated).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constant: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl Verdict {
    fn new(pass: bool, constant: Option<f64>, margin: Option<f64>, witness: Witness) -> Self {
        Self { pass, constant, margin, witness: Some(witness), detail: None }
    }

    fn fail(witness: Witness, detail: String) -> Self {
        Self { pass: false, constant: None, margin: None, witness: Some(witness), detail: Some(detail) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NamedVerdict {
    pub function: String,
    #[serde(flatten)]
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    /// `inf_x A(x, 1) = c1 > 0`.
    pub c1: Verdict,
    /// `A(x, 2t) <= K A(x, t)`.
    pub delta2: Verdict,
    /// Finiteness of `A_*^{-1}(x, 1)`.
    pub p3: Verdict,
    /// `A(x, alpha t) >= G(alpha) A(x, t)`; margin is the worst relative deficit.
    pub a11: Verdict,
    /// `n G(a) > a G'(a)`, relative margin.
    pub pless_n1_upper: Verdict,
    /// `a G'(a) > G(a)`, relative margin.
    pub pless_n1_lower: Verdict,
    /// Submultiplicativity of `G`, `G^{-1}`, `G_*` and hat-tilde `G`.
    pub delta_r_plus: Vec<NamedVerdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b1: Option<Verdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b1_plus: Option<Verdict>,
    /// `B(x, T_B) >= 1` with `T_B = max_x B^{-1}(x, 1)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b2: Option<Verdict>,
    pub all_pass: bool,
}

impl ConditionReport {
    fn compute_all_pass(&mut self) {
        let mut ok = self.c1.pass
            && self.delta2.pass
            && self.p3.pass
            && self.a11.pass
            && self.pless_n1_upper.pass
            && self.pless_n1_lower.pass
            && self.delta_r_plus.iter().all(|v| v.verdict.pass);
        for v in [&self.b1, &self.b1_plus, &self.b2].into_iter().flatten() {
            ok &= v.pass;
        }
        self.all_pass = ok;
    }
}

/// Lower-order function `B` with its comparison function.
pub struct LowerOrder<'a> {
    pub b: &'a NFunction,
    pub growth: &'a GrowthFunction,
}

const A11_TOL: f64 = 1e-9;
const STABILITY: f64 = 1.01;

pub fn check_conditions(
    a: &NFunction,
    growth: &GrowthFunction,
    lower: Option<LowerOrder<'_>>,
    domain: &DomainSpec,
    plan: &SamplePlan,
) -> Result<ConditionReport> {
    let n = domain.dim();
    let xs = domain.sample_points(plan.x_per_axis);
    let ladder = plan.ladder();
    let inner = plan.inner_ladder();

    let c1 = check_c1(a, &xs)?;
    let delta2 = check_delta2(a, &xs, &ladder, &inner);
    let p3 = check_p3(a, &xs);
    let a11 = check_a11(a, growth, &xs, &ladder);
    let ((up, ua), (lo, la)) = growth.sobolev_margins(n, &ladder);
    let pless_n1_upper = Verdict::new(up > 0.0, None, Some(up), Witness { alpha: Some(ua), ..Default::default() });
    let pless_n1_lower = Verdict::new(lo > 0.0, None, Some(lo), Witness { alpha: Some(la), ..Default::default() });

    let derived = DerivedGrowth::new(growth.clone(), n);
    let funcs: [(&str, Box<dyn Fn(f64) -> Result<f64> + Sync + '_>); 4] = [
        ("G", Box::new(|v| Ok(growth.eval(v)))),
        ("G_inverse", Box::new(|v| growth.inverse(v))),
        ("G_star", Box::new(|v| derived.star(v))),
        ("G_hat_tilde", Box::new(|v| derived.hat_tilde(v))),
    ];
    let delta_r_plus = funcs
        .iter()
        .map(|(name, f)| NamedVerdict {
            function: name.to_string(),
            verdict: check_submultiplicative(f.as_ref(), plan),
        })
        .collect();

    let (b1, b1_plus, b2) = match lower {
        Some(lo) => {
            let b1 = check_a11(lo.b, lo.growth, &xs, &ladder);
            let ((_, _), (m, at)) = lo.growth.sobolev_margins(n, &ladder);
            let plus =
                Verdict::new(b1.pass && m > 0.0, None, Some(m), Witness { alpha: Some(at), ..Default::default() });
            (Some(b1), Some(plus), Some(check_b2(lo.b, &xs)))
        }
        None => (None, None, None),
    };

    let mut report = ConditionReport {
        c1,
        delta2,
        p3,
        a11,
        pless_n1_upper,
        pless_n1_lower,
        delta_r_plus,
        b1,
        b1_plus,
        b2,
        all_pass: false,
    };
    report.compute_all_pass();
    Ok(report)
}

fn check_c1(a: &NFunction, xs: &[Vec<f64>]) -> Result<Verdict> {
    let mut best = (f64::INFINITY, 0);
    for (i, x) in xs.iter().enumerate() {
        let v = a.value(x, 1.0)?;
        if v < best.0 {
            best = (v, i);
        }
    }
    Ok(Verdict::new(
        best.0 > 0.0,
        Some(best.0),
        Some(best.0),
        Witness { x: Some(xs[best.1].clone()), t: Some(1.0), ..Default::default() },
    ))
}

/// Largest ratio `A(x, 2t) / A(x, t)`; `Err` carries the witness of an
/// overflow or a vanishing denominator.
fn max_doubling(a: &NFunction, xs: &[Vec<f64>], ts: &[f64]) -> std::result::Result<(f64, Witness), Witness> {
    let mut best = (f64::NEG_INFINITY, Witness::default());
    for x in xs {
        for &t in ts {
            let w = || Witness { x: Some(x.clone()), t: Some(t), ..Default::default() };
            let (lo, hi) = match (a.value(x, t), a.value(x, 2.0 * t)) {
                (Ok(l), Ok(h)) => (l, h),
                _ => return Err(w()),
            };
            if lo <= 0.0 {
                return Err(w());
            }
            let r = hi / lo;
            if r > best.0 {
                best = (r, w());
            }
        }
    }
    Ok(best)
}

/// `K` on the full ladder must not exceed `K` on the inner ladder by more
/// than 1%; growth of the ratio toward the ladder ends signals an unbounded
/// doubling constant.
fn check_delta2(a: &NFunction, xs: &[Vec<f64>], ladder: &[f64], inner: &[f64]) -> Verdict {
    let full = match max_doubling(a, xs, ladder) {
        Ok(v) => v,
        Err(w) => return Verdict::fail(w, "A(x,2t)/A(x,t) is not finite".into()),
    };
    let core = match max_doubling(a, xs, inner) {
        Ok(v) => v,
        Err(w) => return Verdict::fail(w, "A(x,2t)/A(x,t) is not finite".into()),
    };
    let margin = (STABILITY * core.0 - full.0) / core.0;
    Verdict::new(margin >= 0.0, Some(full.0), Some(margin), full.1)
}

fn check_p3(a: &NFunction, xs: &[Vec<f64>]) -> Verdict {
    let results: Vec<(usize, Result<f64>)> =
        xs.par_iter().enumerate().map(|(i, x)| (i, a.sobolev_conjugate_inverse(x, 1.0))).collect();
    let mut worst = (f64::NEG_INFINITY, 0);
    for (i, r) in results {
        match r {
            Ok(v) if v.is_finite() => {
                if v > worst.0 {
                    worst = (v, i);
                }
            }
            Ok(_) => {
                return Verdict::fail(
                    Witness { x: Some(xs[i].clone()), t: Some(1.0), ..Default::default() },
                    "quadrature is not finite".into(),
                )
            }
            Err(e) => {
                return Verdict::fail(
                    Witness { x: Some(xs[i].clone()), t: Some(1.0), ..Default::default() },
                    e.to_string(),
                )
            }
        }
    }
    Verdict::new(
        true,
        Some(worst.0),
        None,
        Witness { x: Some(xs[worst.1].clone()), t: Some(1.0), ..Default::default() },
    )
}

/// Worst relative deficit of `F(x, alpha t) >= G(alpha) F(x, t)`; pairs where
/// either side overflows are skipped.
fn check_a11(a: &NFunction, g: &GrowthFunction, xs: &[Vec<f64>], ladder: &[f64]) -> Verdict {
    let per_x: Vec<(f64, Witness)> = xs
        .par_iter()
        .map(|x| {
            let mut best = (f64::INFINITY, Witness::default());
            for &alpha in ladder {
                let ga = g.eval(alpha);
                for &t in ladder {
                    let (lhs, base) = match (a.value(x, alpha * t), a.value(x, t)) {
                        (Ok(l), Ok(b)) => (l, b),
                        _ => continue,
                    };
                    let rhs = ga * base;
                    if !(rhs > 0.0 && rhs.is_finite()) {
                        continue;
                    }
                    let d = (lhs - rhs) / rhs;
                    if d < best.0 {
                        best = (d, Witness { x: Some(x.clone()), t: Some(t), alpha: Some(alpha), beta: None });
                    }
                }
            }
            best
        })
        .collect();
    let (margin, witness) =
        per_x.into_iter().fold((f64::INFINITY, Witness::default()), |acc, v| if v.0 < acc.0 { v } else { acc });
    Verdict::new(margin >= -A11_TOL, None, Some(margin), witness)
}

/// Largest sampled `C(ab) / (C(a) C(b))` over a ladder.
fn max_submultiplicative(f: &(dyn Fn(f64) -> Result<f64> + Sync), ladder: &[f64]) -> Result<(f64, f64, f64)> {
    let vals: Vec<f64> = ladder.iter().map(|&a| f(a)).collect::<Result<_>>()?;
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for (i, &a) in ladder.iter().enumerate() {
        for (j, &b) in ladder.iter().enumerate().skip(i) {
            let r = f(a * b)? / (vals[i] * vals[j]);
            if r > best.0 {
                best = (r, a, b);
            }
        }
    }
    Ok(best)
}

/// Estimates `M0` on the full ladder and on the inner ladder; the condition
/// passes when widening the sample range does not raise the estimate by more
/// than 1%.
fn check_submultiplicative(f: &(dyn Fn(f64) -> Result<f64> + Sync), plan: &SamplePlan) -> Verdict {
    let coarse = SamplePlan { per_decade: plan.per_decade.min(5), ..plan.clone() };
    let full = max_submultiplicative(f, &coarse.ladder());
    let core = max_submultiplicative(f, &coarse.inner_ladder());
    match (full, core) {
        (Ok((m, a, b)), Ok((mc, _, _))) if m.is_finite() && mc.is_finite() => {
            let margin = (STABILITY * mc - m) / mc;
            Verdict::new(
                margin >= 0.0,
                Some(m),
                Some(margin),
                Witness { alpha: Some(a), beta: Some(b), ..Default::default() },
            )
        }
        (Ok((_, a, b)), _) => {
            Verdict::fail(Witness { alpha: Some(a), beta: Some(b), ..Default::default() }, "ratio is not finite".into())
        }
        (Err(e), _) => Verdict::fail(Witness::default(), e.to_string()),
    }
}

fn check_b2(b: &NFunction, xs: &[Vec<f64>]) -> Verdict {
    let mut worst = (f64::NEG_INFINITY, 0);
    for (i, x) in xs.iter().enumerate() {
        match b.inverse(x, 1.0) {
            Ok(t) if t.is_finite() => {
                if t > worst.0 {
                    worst = (t, i);
                }
            }
            _ => {
                return Verdict::fail(
                    Witness { x: Some(x.clone()), ..Default::default() },
                    "B(x, .) never reaches 1".into(),
                )
            }
        }
    }
    let t_b = worst.0;
    let w = Witness { x: Some(xs[worst.1].clone()), t: Some(t_b), ..Default::default() };
    let margin = xs.iter().map(|x| b.value(x, t_b).unwrap_or(f64::INFINITY) - 1.0).fold(f64::INFINITY, f64::min);
    Verdict::new(margin >= -1e-9, Some(t_b), Some(margin), w)
}
