//! Comparison functions `G` with `A(x, a t) >= G(a) A(x, t)` and the derived
//! family: hat, Sobolev-star, tilde and hat-tilde.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::DomainSpec;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::nfunction::NFunction;
use crate::numeric::invert_increasing;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GrowthDescriptor {
    /// `a^p`.
    Power { p: f64 },
    /// `a^p_plus` for `a <= 1`, `a^p_minus` for `a > 1`.
    Envelope { p_minus: f64, p_plus: f64 },
    /// Closed form in `t` with optional derivative.
    Custom {
        value: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        derivative: Option<String>,
    },
}

#[derive(Debug, Clone)]
enum Kind {
    Power(f64),
    Envelope { p_minus: f64, p_plus: f64 },
    Custom { value: Expr, derivative: Option<Expr> },
    Hat(Arc<GrowthFunction>),
}

/// A strictly increasing growth function on `[0, inf)` vanishing at 0.
#[derive(Debug, Clone)]
pub struct GrowthFunction {
    kind: Kind,
}

impl GrowthFunction {
    pub fn from_descriptor(desc: &GrowthDescriptor) -> Result<Self> {
        let kind = match desc {
            GrowthDescriptor::Power { p } => {
                if !(*p > 0.0 && p.is_finite()) {
                    return Err(Error::Invalid(format!("growth exponent must be positive, got {p}")));
                }
                Kind::Power(*p)
            }
            GrowthDescriptor::Envelope { p_minus, p_plus } => {
                if !(*p_minus > 0.0 && p_plus >= p_minus && p_plus.is_finite()) {
                    return Err(Error::Invalid(format!(
                        "envelope needs 0 < p_minus <= p_plus, got {p_minus}, {p_plus}"
                    )));
                }
                Kind::Envelope { p_minus: *p_minus, p_plus: *p_plus }
            }
            GrowthDescriptor::Custom { value, derivative } => Kind::Custom {
                value: Expr::parse(value, &["t"])?,
                derivative: derivative.as_deref().map(|d| Expr::parse(d, &["t"])).transpose()?,
            },
        };
        Ok(Self { kind })
    }

    pub fn power(p: f64) -> Result<Self> {
        Self::from_descriptor(&GrowthDescriptor::Power { p })
    }

    pub fn envelope(p_minus: f64, p_plus: f64) -> Result<Self> {
        if p_minus == p_plus {
            return Self::power(p_minus);
        }
        Self::from_descriptor(&GrowthDescriptor::Envelope { p_minus, p_plus })
    }

    /// The tightest power envelope for a catalog N-function, with exponent
    /// bounds taken over the domain's `5^n` sample points. `None` for custom
    /// kinds, which need an explicit growth function.
    pub fn tight_for(a: &NFunction, domain: &DomainSpec) -> Option<Result<Self>> {
        let (lo, hi) = a.exponent_range(&domain.sample_points(5))?;
        Some(Self::envelope(lo, hi))
    }

    pub fn descriptor(&self) -> Option<GrowthDescriptor> {
        Some(match &self.kind {
            Kind::Power(p) => GrowthDescriptor::Power { p: *p },
            Kind::Envelope { p_minus, p_plus } => GrowthDescriptor::Envelope { p_minus: *p_minus, p_plus: *p_plus },
            Kind::Custom { value, derivative } => GrowthDescriptor::Custom {
                value: value.source().into(),
                derivative: derivative.as_ref().map(|d| d.source().into()),
            },
            Kind::Hat(_) => return None,
        })
    }

    /// `G^(b) = 1 / G(1 / b)`.
    pub fn hat(&self) -> Self {
        Self { kind: Kind::Hat(Arc::new(self.clone())) }
    }

    pub fn eval(&self, a: f64) -> f64 {
        if a <= 0.0 {
            return 0.0;
        }
        match &self.kind {
            Kind::Power(p) => a.powf(*p),
            Kind::Envelope { p_minus, p_plus } => {
                if a <= 1.0 {
                    a.powf(*p_plus)
                } else {
                    a.powf(*p_minus)
                }
            }
            Kind::Custom { value, .. } => value.eval(&[a]),
            Kind::Hat(g) => 1.0 / g.eval(1.0 / a),
        }
    }

    /// `G'(a)`; right-hand value at the envelope kink, forward difference for
    /// custom kinds without a derivative.
    pub fn derivative(&self, a: f64) -> f64 {
        match &self.kind {
            Kind::Power(p) => p * a.powf(p - 1.0),
            Kind::Envelope { p_minus, p_plus } => {
                if a < 1.0 {
                    p_plus * a.powf(p_plus - 1.0)
                } else {
                    p_minus * a.powf(p_minus - 1.0)
                }
            }
            Kind::Custom { derivative: Some(d), .. } => d.eval(&[a]),
            Kind::Custom { value, .. } => {
                let h = (1e-7 * a.abs()).max(1e-7);
                (value.eval(&[a + h]) - value.eval(&[a])) / h
            }
            Kind::Hat(g) => {
                let inv = 1.0 / a;
                let gv = g.eval(inv);
                g.derivative(inv) / (a * a * gv * gv)
            }
        }
    }

    /// `G^{-1}(sigma)`.
    pub fn inverse(&self, sigma: f64) -> Result<f64> {
        if sigma <= 0.0 {
            return if sigma == 0.0 { Ok(0.0) } else { Err(Error::Inverse { sigma }) };
        }
        match &self.kind {
            Kind::Power(p) => Ok(sigma.powf(1.0 / p)),
            Kind::Envelope { p_minus, p_plus } => {
                Ok(if sigma <= 1.0 { sigma.powf(1.0 / p_plus) } else { sigma.powf(1.0 / p_minus) })
            }
            Kind::Custom { .. } => invert_increasing(|a| self.eval(a), sigma, 1e-14),
            Kind::Hat(g) => Ok(1.0 / g.inverse(1.0 / sigma)?),
        }
    }

    /// Sampled check of `n G(a) > a G'(a) > G(a)`: returns the worst relative
    /// margins `(min (n G - a G')/G, min (a G' - G)/G)` and their arguments.
    pub fn sobolev_margins(&self, n: usize, ladder: &[f64]) -> ((f64, f64), (f64, f64)) {
        let mut upper = (f64::INFINITY, f64::NAN);
        let mut lower = (f64::INFINITY, f64::NAN);
        for &a in ladder {
            let g = self.eval(a);
            let ad = a * self.derivative(a);
            let up = (n as f64 * g - ad) / g;
            let lo = (ad - g) / g;
            if up < upper.0 {
                upper = (up, a);
            }
            if lo < lower.0 {
                lower = (lo, a);
            }
        }
        (upper, lower)
    }
}

/// The derived family of a growth function in dimension `n`.
#[derive(Debug, Clone)]
pub struct DerivedGrowth {
    base: GrowthFunction,
    n: usize,
}

const FORWARD_TOL: f64 = 1e-13;

fn forward<F: Fn(f64) -> Result<f64>>(inv: F, b: f64) -> Result<f64> {
    if b <= 0.0 {
        return Ok(0.0);
    }
    let f = |s: f64| inv(s).unwrap_or(f64::NAN);
    invert_increasing(f, b, FORWARD_TOL)
}

impl DerivedGrowth {
    pub fn new(base: GrowthFunction, n: usize) -> Self {
        Self { base, n }
    }

    pub fn base(&self) -> &GrowthFunction {
        &self.base
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// `G^(b) = 1 / G(1/b)`.
    pub fn hat(&self, b: f64) -> f64 {
        if b <= 0.0 {
            0.0
        } else {
            1.0 / self.base.eval(1.0 / b)
        }
    }

    /// `G_*^{-1}(s) = 1 / (s^{1/n} G^{-1}(1/s))`.
    pub fn star_inv(&self, s: f64) -> Result<f64> {
        if s <= 0.0 {
            return Ok(0.0);
        }
        Ok(1.0 / (s.powf(1.0 / self.n as f64) * self.base.inverse(1.0 / s)?))
    }

    pub fn star(&self, b: f64) -> Result<f64> {
        forward(|s| self.star_inv(s), b)
    }

    /// `~G^{-1}(s) = s / G^{-1}(s)`.
    pub fn tilde_inv(&self, s: f64) -> Result<f64> {
        if s <= 0.0 {
            return Ok(0.0);
        }
        Ok(s / self.base.inverse(s)?)
    }

    pub fn tilde(&self, b: f64) -> Result<f64> {
        forward(|s| self.tilde_inv(s), b)
    }

    /// `^~G^{-1}(s) = s G^{-1}(1/s)`.
    pub fn hat_tilde_inv(&self, s: f64) -> Result<f64> {
        if s <= 0.0 {
            return Ok(0.0);
        }
        Ok(s * self.base.inverse(1.0 / s)?)
    }

    pub fn hat_tilde(&self, b: f64) -> Result<f64> {
        forward(|s| self.hat_tilde_inv(s), b)
    }
}

/// Builds the derived family after sampled checks of the structural
/// conditions each branch needs (`n G > a G'` for the star branch,
/// `a G' > G` for the tilde branches).
pub fn derive_growth(base: &GrowthFunction, n: usize, ladder: &[f64]) -> Result<DerivedGrowth> {
    let ((upper, ua), (lower, la)) = base.sobolev_margins(n, ladder);
    if !(upper > 0.0) {
        return Err(Error::Invalid(format!("n G(a) > a G'(a) fails at a = {ua} (relative margin {upper:e})")));
    }
    if !(lower > 0.0) {
        return Err(Error::Invalid(format!("a G'(a) > G(a) fails at a = {la} (relative margin {lower:e})")));
    }
    for &a in ladder {
        let s = base.eval(a);
        let back = base.inverse(s)?;
        if ((back - a) / a).abs() > 1e-10 {
            return Err(Error::Inverse { sigma: s });
        }
    }
    Ok(DerivedGrowth::new(base.clone(), n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::geometric_ladder;
    use approx::assert_relative_eq;

    fn loglog_slope(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        (f(b) / f(a)).ln() / (b / a).ln()
    }

    #[test]
    fn hat_of_power_is_power() {
        let g = GrowthFunction::power(2.5).unwrap();
        let d = DerivedGrowth::new(g.clone(), 3);
        for b in [0.1, 1.0, 7.0] {
            assert_relative_eq!(d.hat(b), b.powf(2.5), max_relative = 1e-14);
            assert_relative_eq!(g.hat().eval(b), b.powf(2.5), max_relative = 1e-14);
        }
    }

    #[test]
    fn double_hat_identity() {
        for g in [
            GrowthFunction::power(1.7).unwrap(),
            GrowthFunction::envelope(1.5, 2.5).unwrap(),
            GrowthFunction::from_descriptor(&GrowthDescriptor::Custom { value: "t^2 + t^3".into(), derivative: None })
                .unwrap(),
        ] {
            let hh = g.hat().hat();
            for a in geometric_ladder(1e-3, 1e3, 4) {
                assert_relative_eq!(hh.eval(a), g.eval(a), max_relative = 1e-8);
                assert_relative_eq!(hh.inverse(g.eval(a)).unwrap(), a, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn star_of_square_in_3d_is_sixth_power() {
        let d = DerivedGrowth::new(GrowthFunction::power(2.0).unwrap(), 3);
        let slope = loglog_slope(|b| d.star(b).unwrap(), 0.5, 8.0);
        assert_relative_eq!(slope, 6.0, max_relative = 1e-9);
        assert_relative_eq!(d.star(2.0).unwrap(), 64.0, max_relative = 1e-10);
    }

    #[test]
    fn tilde_of_power_is_conjugate_power() {
        for p in [1.5, 2.0, 3.0] {
            let d = DerivedGrowth::new(GrowthFunction::power(p).unwrap(), 4);
            let pc = p / (p - 1.0);
            for b in [0.5, 1.0, 2.0, 4.0] {
                assert_relative_eq!(d.tilde(b).unwrap(), b.powf(pc), max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn derived_vanish_at_zero_and_increase() {
        let d = DerivedGrowth::new(GrowthFunction::envelope(1.5, 2.5).unwrap(), 3);
        assert_eq!(d.star(0.0).unwrap(), 0.0);
        assert_eq!(d.tilde(0.0).unwrap(), 0.0);
        assert_eq!(d.hat_tilde(0.0).unwrap(), 0.0);
        assert_eq!(d.hat(0.0), 0.0);
        let ladder = geometric_ladder(1e-2, 1e2, 5);
        for w in ladder.windows(2) {
            assert!(d.star(w[1]).unwrap() > d.star(w[0]).unwrap());
            assert!(d.tilde(w[1]).unwrap() > d.tilde(w[0]).unwrap());
            assert!(d.hat_tilde(w[1]).unwrap() > d.hat_tilde(w[0]).unwrap());
            assert!(d.hat(w[1]) > d.hat(w[0]));
        }
    }

    #[test]
    fn inverse_roundtrip_custom() {
        let g = GrowthFunction::from_descriptor(&GrowthDescriptor::Custom {
            value: "t^2 * (1 + t)".into(),
            derivative: Some("2*t + 3*t^2".into()),
        })
        .unwrap();
        for s in geometric_ladder(1e-6, 1e6, 3) {
            assert_relative_eq!(g.eval(g.inverse(s).unwrap()), s, max_relative = 1e-10);
        }
    }

    #[test]
    fn derive_growth_rejects_supercritical() {
        let ladder = geometric_ladder(1e-2, 1e2, 5);
        assert!(derive_growth(&GrowthFunction::power(3.5).unwrap(), 3, &ladder).is_err());
        assert!(derive_growth(&GrowthFunction::power(1.0).unwrap(), 3, &ladder).is_err());
        assert!(derive_growth(&GrowthFunction::power(2.0).unwrap(), 3, &ladder).is_ok());
    }

    #[test]
    fn envelope_kink_uses_right_derivative() {
        let g = GrowthFunction::envelope(1.5, 2.5).unwrap();
        assert_eq!(g.derivative(1.0), 1.5);
        assert_eq!(g.eval(0.25), 0.25f64.powf(2.5));
        assert_eq!(g.eval(4.0), 8.0);
    }
}
