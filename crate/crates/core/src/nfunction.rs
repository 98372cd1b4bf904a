//! Generalized N-functions `A(x, t)` and the calculus built on them: the
//! Musielak (right-hand) derivative, the Young complementary function, the
//! inverse `A^{-1}(x, .)` and the Sobolev conjugate `A_*`.

use std::cell::RefCell;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{coordinate_names, Expr};
use crate::numeric::{integrate, invert_increasing};

/// Highest supported spatial dimension (keeps evaluation allocation-free).
pub const MAX_DIM: usize = 16;

/// A coefficient given either as a number or as an expression in `x1..xn`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Field {
    Const(f64),
    Expr(String),
}

impl Field {
    fn compile(&self, n: usize) -> Result<Expr> {
        match self {
            Field::Const(v) => Expr::parse_field(&format!("{v:e}"), n),
            Field::Expr(s) => Expr::parse_field(s, n),
        }
    }
}

impl From<f64> for Field {
    fn from(v: f64) -> Self {
        Field::Const(v)
    }
}

impl From<&str> for Field {
    fn from(s: &str) -> Self {
        Field::Expr(s.to_string())
    }
}

fn one() -> f64 {
    1.0
}

fn is_one(v: &f64) -> bool {
    *v == 1.0
}

/// JSON descriptor of a catalog N-function, e.g.
/// `{"kind":"double_phase","p":2,"q":3,"coeff":"x1"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NFunctionDescriptor {
    /// `scale * t^p`.
    Power {
        p: f64,
        #[serde(default = "one", skip_serializing_if = "is_one")]
        scale: f64,
    },
    /// `t^{p(x)}`.
    VariableExponent { p: Field },
    /// `t^p + a(x) t^q`.
    DoublePhase { p: f64, q: f64, coeff: Field },
    /// `t^p log(1 + t)`.
    OrliczLog { p: f64 },
    /// Closed form in `x1..xn` and `t`, optionally with its `t`-derivative.
    Custom {
        value: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        derivative: Option<String>,
    },
}

#[derive(Debug, Clone)]
enum Kind {
    Power { p: f64, scale: f64 },
    VariableExponent { p: Expr },
    DoublePhase { p: f64, q: f64, coeff: Expr },
    OrliczLog { p: f64 },
    Custom { value: Expr, derivative: Option<Expr> },
    Conjugate(Arc<NFunction>),
}

/// A generalized N-function over a domain of dimension `n`.
///
/// Values are immutable after construction and can be shared freely between
/// threads.
#[derive(Debug, Clone)]
pub struct NFunction {
    n: usize,
    kind: Kind,
}

const INVERSE_TOL: f64 = 1e-12;
const CONJUGATE_BRACKET_CAP: f64 = 1e30;

impl NFunction {
    pub fn from_descriptor(desc: &NFunctionDescriptor, n: usize) -> Result<Self> {
        if !(2..=MAX_DIM).contains(&n) {
            return Err(Error::Invalid(format!("dimension must lie in 2..={MAX_DIM}, got {n}")));
        }
        let kind = match desc {
            NFunctionDescriptor::Power { p, scale } => {
                check_exponent("p", *p)?;
                if !(*scale > 0.0 && scale.is_finite()) {
                    return Err(Error::Invalid(format!("scale must be positive, got {scale}")));
                }
                Kind::Power { p: *p, scale: *scale }
            }
            NFunctionDescriptor::VariableExponent { p } => Kind::VariableExponent { p: p.compile(n)? },
            NFunctionDescriptor::DoublePhase { p, q, coeff } => {
                check_exponent("p", *p)?;
                check_exponent("q", *q)?;
                if q < p {
                    return Err(Error::Invalid(format!("double phase needs p <= q, got {p} > {q}")));
                }
                Kind::DoublePhase { p: *p, q: *q, coeff: coeff.compile(n)? }
            }
            NFunctionDescriptor::OrliczLog { p } => {
                if !(*p >= 1.0 && p.is_finite()) {
                    return Err(Error::Invalid(format!("orlicz_log needs p >= 1, got {p}")));
                }
                Kind::OrliczLog { p: *p }
            }
            NFunctionDescriptor::Custom { value, derivative } => {
                let mut names = coordinate_names(n);
                names.push("t".into());
                let refs: Vec<&str> = names.iter().map(String::as_str).collect();
                Kind::Custom {
                    value: Expr::parse(value, &refs)?,
                    derivative: derivative.as_deref().map(|d| Expr::parse(d, &refs)).transpose()?,
                }
            }
        };
        Ok(Self { n, kind })
    }

    /// `t^p`.
    pub fn power(p: f64, n: usize) -> Result<Self> {
        Self::from_descriptor(&NFunctionDescriptor::Power { p, scale: 1.0 }, n)
    }

    /// `scale * t^p`.
    pub fn scaled_power(p: f64, scale: f64, n: usize) -> Result<Self> {
        Self::from_descriptor(&NFunctionDescriptor::Power { p, scale }, n)
    }

    pub fn variable_exponent(p: impl Into<Field>, n: usize) -> Result<Self> {
        Self::from_descriptor(&NFunctionDescriptor::VariableExponent { p: p.into() }, n)
    }

    pub fn double_phase(p: f64, q: f64, coeff: impl Into<Field>, n: usize) -> Result<Self> {
        Self::from_descriptor(&NFunctionDescriptor::DoublePhase { p, q, coeff: coeff.into() }, n)
    }

    pub fn orlicz_log(p: f64, n: usize) -> Result<Self> {
        Self::from_descriptor(&NFunctionDescriptor::OrliczLog { p }, n)
    }

    pub fn custom(value: &str, derivative: Option<&str>, n: usize) -> Result<Self> {
        Self::from_descriptor(
            &NFunctionDescriptor::Custom { value: value.into(), derivative: derivative.map(Into::into) },
            n,
        )
    }

    /// The complementary function `~A(x, s) = sup_t (s t - A(x, t))` as an
    /// N-function in its own right.
    pub fn conjugate(&self) -> Self {
        Self { n: self.n, kind: Kind::Conjugate(Arc::new(self.clone())) }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// The descriptor this function was built from (`None` for conjugates).
    pub fn descriptor(&self) -> Option<NFunctionDescriptor> {
        Some(match &self.kind {
            Kind::Power { p, scale } => NFunctionDescriptor::Power { p: *p, scale: *scale },
            Kind::VariableExponent { p } => NFunctionDescriptor::VariableExponent { p: Field::Expr(p.source().into()) },
            Kind::DoublePhase { p, q, coeff } => {
                NFunctionDescriptor::DoublePhase { p: *p, q: *q, coeff: Field::Expr(coeff.source().into()) }
            }
            Kind::OrliczLog { p } => NFunctionDescriptor::OrliczLog { p: *p },
            Kind::Custom { value, derivative } => NFunctionDescriptor::Custom {
                value: value.source().into(),
                derivative: derivative.as_ref().map(|d| d.source().into()),
            },
            Kind::Conjugate(_) => return None,
        })
    }

    /// Exponent bounds `(p_min, p_max)` over the sample points for the
    /// power-type catalog kinds: `A(x, a t) / A(x, t)` lies between
    /// `a^p_min` and `a^p_max` on either side of `a = 1`.
    pub fn exponent_range(&self, samples: &[Vec<f64>]) -> Option<(f64, f64)> {
        match &self.kind {
            Kind::Power { p, .. } => Some((*p, *p)),
            Kind::VariableExponent { p } => {
                let vals: Vec<f64> = samples.iter().map(|x| p.eval(x)).collect();
                let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                Some((lo, hi))
            }
            Kind::DoublePhase { p, q, coeff } => {
                if samples.iter().all(|x| coeff.eval(x) == 0.0) {
                    Some((*p, *p))
                } else {
                    Some((*p, *q))
                }
            }
            Kind::OrliczLog { p } => Some((*p, *p + 1.0)),
            Kind::Custom { .. } | Kind::Conjugate(_) => None,
        }
    }

    fn closed_value(&self, x: &[f64], t: f64) -> Result<f64> {
        Ok(match &self.kind {
            Kind::Power { p, scale } => scale * t.powf(*p),
            Kind::VariableExponent { p } => t.powf(p.eval(x)),
            Kind::DoublePhase { p, q, coeff } => t.powf(*p) + coeff.eval(x) * t.powf(*q),
            Kind::OrliczLog { p } => t.powf(*p) * t.ln_1p(),
            Kind::Custom { value, .. } => {
                let mut buf = [0.0; MAX_DIM + 1];
                buf[..self.n].copy_from_slice(&x[..self.n]);
                buf[self.n] = t;
                value.eval(&buf[..=self.n])
            }
            Kind::Conjugate(inner) => inner.young_conjugate(x, t)?,
        })
    }

    fn closed_derivative(&self, x: &[f64], t: f64) -> Result<Option<f64>> {
        Ok(Some(match &self.kind {
            Kind::Power { p, scale } => {
                if t == 0.0 {
                    0.0
                } else {
                    scale * p * t.powf(p - 1.0)
                }
            }
            Kind::VariableExponent { p } => {
                let e = p.eval(x);
                if t == 0.0 {
                    0.0
                } else {
                    e * t.powf(e - 1.0)
                }
            }
            Kind::DoublePhase { p, q, coeff } => {
                if t == 0.0 {
                    0.0
                } else {
                    p * t.powf(p - 1.0) + coeff.eval(x) * q * t.powf(q - 1.0)
                }
            }
            Kind::OrliczLog { p } => {
                if t == 0.0 {
                    0.0
                } else {
                    p * t.powf(p - 1.0) * t.ln_1p() + t.powf(*p) / (1.0 + t)
                }
            }
            Kind::Custom { derivative: Some(d), .. } => {
                let mut buf = [0.0; MAX_DIM + 1];
                buf[..self.n].copy_from_slice(&x[..self.n]);
                buf[self.n] = t;
                d.eval(&buf[..=self.n])
            }
            Kind::Custom { derivative: None, .. } => return Ok(None),
            Kind::Conjugate(inner) => inner.young_maximizer(x, t)?,
        }))
    }

    /// `A(x, t)`, extended evenly to `t < 0`.
    pub fn value(&self, x: &[f64], t: f64) -> Result<f64> {
        let v = self.closed_value(x, t.abs())?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Range { t })
        }
    }

    /// Musielak derivative `a(x, t)`: closed form when available, otherwise
    /// the forward difference with step `max(1e-7, 1e-7 |t|)`.
    pub fn derivative(&self, x: &[f64], t: f64) -> Result<f64> {
        let ta = t.abs();
        let d = match self.closed_derivative(x, ta)? {
            Some(d) => d,
            None => {
                let h = (1e-7 * ta).max(1e-7);
                (self.closed_value(x, ta + h)? - self.closed_value(x, ta)?) / h
            }
        };
        if !d.is_finite() {
            return Err(Error::Range { t });
        }
        Ok(if t < 0.0 { -d } else { d })
    }

    /// `(A(x, t), a(x, t))`.
    pub fn eval_pair(&self, x: &[f64], t: f64) -> Result<(f64, f64)> {
        Ok((self.value(x, t)?, self.derivative(x, t)?))
    }

    /// The maximizer `t*` of `s t - A(x, t)` over `t >= 0`, i.e. the largest `t`
    /// with `a(x, t) <= s` (the right inverse `a_+^{-1}`), located by bisection
    /// after growing the bracket geometrically.
    pub fn young_maximizer(&self, x: &[f64], s: f64) -> Result<f64> {
        let s = s.abs();
        if s == 0.0 {
            return Ok(0.0);
        }
        let a = |t: f64| self.derivative(x, t);
        let (mut lo, mut hi);
        if a(1.0)? <= s {
            lo = 1.0;
            hi = 2.0;
            while a(hi)? <= s {
                lo = hi;
                hi *= 2.0;
                if hi > CONJUGATE_BRACKET_CAP {
                    return Err(Error::Divergence { s });
                }
            }
        } else {
            hi = 1.0;
            lo = 0.5;
            while a(lo)? > s {
                hi = lo;
                lo *= 0.5;
                if lo < 1e-300 {
                    return Ok(0.0);
                }
            }
        }
        for _ in 0..200 {
            if hi - lo <= 1e-15 * hi {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if a(mid)? <= s {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Young conjugate `~A(x, s) = sup_{t >= 0} (s t - A(x, t))`.
    pub fn young_conjugate(&self, x: &[f64], s: f64) -> Result<f64> {
        let s = s.abs();
        if s == 0.0 {
            return Ok(0.0);
        }
        let t = self.young_maximizer(x, s)?;
        let v = s * t - self.value(x, t)?;
        Ok(v.max(0.0))
    }

    /// `A^{-1}(x, sigma)` by bisection on the increasing branch.
    pub fn inverse(&self, x: &[f64], sigma: f64) -> Result<f64> {
        // overflow only happens above any finite target
        let f = |t: f64| self.value(x, t).unwrap_or(f64::INFINITY);
        invert_increasing(f, sigma, INVERSE_TOL)
    }

    /// Local power-law exponent of `A^{-1}(x, .)` near zero.
    fn inverse_exponent_at_zero(&self, x: &[f64], tau0: f64) -> Result<f64> {
        let t1 = tau0 * 1e-12;
        let t2 = tau0 * 1e-14;
        let (i1, i2) = (self.inverse(x, t1)?, self.inverse(x, t2)?);
        Ok((i1 / i2).ln() / (t1 / t2).ln())
    }

    /// `A_*^{-1}(x, s) = int_0^s A^{-1}(x, tau) / tau^{(n+1)/n} d tau`.
    ///
    /// On `(0, min(s, 1)]` the substitution `tau = min(s,1) sigma^m` removes the
    /// endpoint singularity, with `m` chosen from the exponent of `A^{-1}` at
    /// zero so that the transformed integrand stays bounded. Any remainder on
    /// `[1, s]` is integrated in `log tau`.
    pub fn sobolev_conjugate_inverse(&self, x: &[f64], s: f64) -> Result<f64> {
        let s = s.abs();
        if s == 0.0 {
            return Ok(0.0);
        }
        let n = self.n as f64;
        let e = (n + 1.0) / n;
        let tau0 = s.min(1.0);
        let q0 = self.inverse_exponent_at_zero(x, tau0)?;
        let margin = q0 - 1.0 / n;
        if margin.is_nan() || margin <= 1e-3 {
            return Err(Error::Integrability { x: x.to_vec(), estimate: f64::INFINITY });
        }
        let m = (1.0 / margin).ceil().max(n).min(64.0);

        let failure = RefCell::new(None);
        let inv = |tau: f64| -> f64 {
            match self.inverse(x, tau) {
                Ok(v) => v,
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    f64::NAN
                }
            }
        };
        let near = |sigma: f64| -> f64 {
            let tau = tau0 * sigma.powf(m);
            if tau == 0.0 {
                return 0.0;
            }
            inv(tau) / tau.powf(e) * tau0 * m * sigma.powf(m - 1.0)
        };
        let q1 = integrate(near, 0.0, 1.0, 1e-300, 1e-12, 400);
        let mut total = q1.value;
        let mut err = q1.error;
        let mut ok = q1.converged;
        if s > 1.0 {
            let far = |u: f64| -> f64 {
                let tau = u.exp();
                inv(tau) * (-u / n).exp()
            };
            let q2 = integrate(far, 0.0, s.ln(), 1e-300, 1e-12, 400);
            total += q2.value;
            err += q2.error;
            ok &= q2.converged;
        }
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        if !ok || !total.is_finite() {
            return Err(Error::Integrability { x: x.to_vec(), estimate: err });
        }
        Ok(total)
    }

    /// Sobolev conjugate `A_*(x, t)`: the `s` with `A_*^{-1}(x, s) = t`.
    pub fn sobolev_conjugate(&self, x: &[f64], t: f64) -> Result<f64> {
        let t = t.abs();
        if t == 0.0 {
            return Ok(0.0);
        }
        let failure = RefCell::new(None);
        let f = |s: f64| -> f64 {
            match self.sobolev_conjugate_inverse(x, s) {
                Ok(v) => v,
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    f64::NAN
                }
            }
        };
        let r = invert_increasing(f, t, 1e-13);
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        match r {
            Ok(s) => Ok(s),
            Err(_) => Err(Error::ConjugateRange {
                t,
                saturation: self.sobolev_conjugate_inverse(x, 1e300).unwrap_or(f64::NAN),
            }),
        }
    }
}

fn check_exponent(name: &str, p: f64) -> Result<()> {
    if p > 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(Error::Invalid(format!("exponent {name} must exceed 1, got {p}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const X: [f64; 2] = [0.5, 0.5];

    #[test]
    fn power_pair() {
        let a = NFunction::power(2.0, 2).unwrap();
        assert_eq!(a.eval_pair(&X, 3.0).unwrap(), (9.0, 6.0));
        assert_eq!(a.eval_pair(&X, -3.0).unwrap(), (9.0, -6.0));
        assert_eq!(a.eval_pair(&X, 0.0).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn double_phase_pair() {
        let a = NFunction::double_phase(2.0, 3.0, "x1", 2).unwrap();
        let (v, d) = a.eval_pair(&X, 2.0).unwrap();
        assert_eq!(v, 8.0);
        assert_eq!(d, 4.0 + 0.5 * 3.0 * 4.0);
    }

    #[test]
    fn forward_difference_for_custom() {
        let a = NFunction::custom("t^3", None, 2).unwrap();
        let d = a.derivative(&X, 2.0).unwrap();
        assert_relative_eq!(d, 12.0, max_relative = 1e-6);
    }

    #[test]
    fn overflow_is_range_error() {
        let a = NFunction::custom("exp(t)", Some("exp(t)"), 2).unwrap();
        assert!(matches!(a.value(&X, 1e6), Err(Error::Range { .. })));
    }

    #[test]
    fn derivative_sandwich() {
        let cat = [
            NFunction::power(1.5, 2).unwrap(),
            NFunction::double_phase(2.0, 3.5, "x1+x2", 2).unwrap(),
            NFunction::variable_exponent("1.5 + x1", 2).unwrap(),
            NFunction::orlicz_log(1.2, 2).unwrap(),
        ];
        for a in &cat {
            for t in crate::numeric::geometric_ladder(1e-3, 1e3, 5) {
                let (v, d) = a.eval_pair(&X, t).unwrap();
                let v2 = a.value(&X, 2.0 * t).unwrap();
                assert!(v <= d * t * (1.0 + 1e-12));
                assert!(d * t <= v2 * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn young_examples() {
        let half_sq = NFunction::scaled_power(2.0, 0.5, 2).unwrap();
        assert_relative_eq!(half_sq.young_conjugate(&X, 4.0).unwrap(), 8.0, max_relative = 1e-12);
        let cube = NFunction::scaled_power(3.0, 1.0 / 3.0, 2).unwrap();
        assert_relative_eq!(cube.young_conjugate(&X, 1.0).unwrap(), 2.0 / 3.0, max_relative = 1e-12);
        assert_eq!(cube.young_conjugate(&X, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn young_divergence_for_linear_growth() {
        // derivative bounded by 1: slope 2 is never reached.
        let a = NFunction::custom("t - log(1 + t)", Some("t / (1 + t)"), 2).unwrap();
        assert!(matches!(a.young_conjugate(&X, 2.0), Err(Error::Divergence { .. })));
    }

    #[test]
    fn inverse_roundtrip() {
        let a = NFunction::double_phase(2.0, 3.0, "x1", 2).unwrap();
        for sigma in [1e-20, 1e-3, 1.0, 1e5] {
            let t = a.inverse(&X, sigma).unwrap();
            assert_relative_eq!(a.value(&X, t).unwrap(), sigma, max_relative = 1e-10);
        }
    }

    #[test]
    fn sobolev_inverse_power_closed_form() {
        let a = NFunction::power(2.0, 3).unwrap();
        let x = [0.5; 3];
        assert_eq!(a.sobolev_conjugate_inverse(&x, 0.0).unwrap(), 0.0);
        assert_relative_eq!(a.sobolev_conjugate_inverse(&x, 1.0).unwrap(), 6.0, max_relative = 1e-9);
        // s^(1/p - 1/n) / (1/p - 1/n)
        for (p, n) in [(2.0, 3usize), (1.5, 3), (2.0, 4)] {
            let a = NFunction::power(p, n).unwrap();
            let x = vec![0.5; n];
            let k = 1.0 / p - 1.0 / n as f64;
            for s in [0.5f64, 1.0, 2.0] {
                let want = s.powf(k) / k;
                assert_relative_eq!(a.sobolev_conjugate_inverse(&x, s).unwrap(), want, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn sobolev_conjugate_point_and_roundtrip() {
        let a = NFunction::power(2.0, 3).unwrap();
        let x = [0.5; 3];
        assert_relative_eq!(a.sobolev_conjugate(&x, 6.0).unwrap(), 1.0, max_relative = 1e-9);
        assert_eq!(a.sobolev_conjugate(&x, 0.0).unwrap(), 0.0);
        for t in [0.3, 2.0, 50.0] {
            let s = a.sobolev_conjugate(&x, t).unwrap();
            assert_relative_eq!(a.sobolev_conjugate_inverse(&x, s).unwrap(), t, max_relative = 1e-8);
        }
    }

    #[test]
    fn sobolev_integrability_failure() {
        // p = n: A^{-1}(tau) / tau^{(n+1)/n} ~ tau^{-1} is not integrable at 0.
        let a = NFunction::power(2.0, 2).unwrap();
        assert!(matches!(a.sobolev_conjugate_inverse(&X, 1.0), Err(Error::Integrability { .. })));
    }

    #[test]
    fn sobolev_saturation_is_range_error() {
        // t^1.5 near zero keeps the integral finite there, t^3 at infinity
        // (3 > n) makes A_*^{-1} bounded, so T(x) is finite.
        let a = NFunction::double_phase(1.5, 3.0, 1.0, 2).unwrap();
        let bound = a.sobolev_conjugate_inverse(&X, 1e12).unwrap();
        assert!(bound.is_finite());
        let err = a.sobolev_conjugate(&X, 10.0 * bound).unwrap_err();
        assert!(matches!(err, Error::ConjugateRange { .. }), "{err:?}");
    }

    #[test]
    fn descriptor_json() {
        let d: NFunctionDescriptor =
            serde_json::from_str(r#"{"kind":"double_phase","p":2,"q":3,"coeff":"x1"}"#).unwrap();
        let a = NFunction::from_descriptor(&d, 2).unwrap();
        assert_eq!(a.value(&X, 2.0).unwrap(), 8.0);
        assert!(serde_json::from_str::<NFunctionDescriptor>(r#"{"kind":"power","p":2,"bogus":1}"#).is_err());
        let d: NFunctionDescriptor = serde_json::from_str(r#"{"kind":"variable_exponent","p":2.5}"#).unwrap();
        let a = NFunction::from_descriptor(&d, 2).unwrap();
        assert_relative_eq!(a.value(&X, 2.0).unwrap(), 2f64.powf(2.5));
    }
}
