//! Modulars, Luxemburg norms, discrete gradients, level-set measures and
//! oscillations of grid functions.
//!
//! Integrals use the control-volume (trapezoid) node weights of
//! [`DomainSpec::weight`]. Sums run in row-major node order through a
//! compensated accumulator, so results do not depend on the thread count.

use rayon::prelude::*;
use serde::Serialize;

use crate::domain::DomainSpec;
use crate::error::{Error, Result};
use crate::grid::{stencil, Ball, GridFunction, VectorField};
use crate::nfunction::{NFunction, MAX_DIM};
use crate::numeric::compensated_sum;

/// Below this many nodes the per-node work runs sequentially.
const PAR_THRESHOLD: usize = 4096;

/// Node list for an optional region, all nodes when `None`.
pub fn region_nodes(domain: &DomainSpec, region: Option<&Ball>) -> Result<Vec<usize>> {
    match region {
        Some(b) => b.nonempty_nodes(domain),
        None => Ok((0..domain.node_count()).collect()),
    }
}

/// `sum_i w_i A(x_i, |u_i| / lambda)` over `nodes`.
fn scaled_modular(a: &NFunction, u: &GridFunction, lambda: f64, nodes: &[usize]) -> Result<f64> {
    let d = u.domain();
    let term = |&i: &usize| -> Result<f64> {
        let mut x = [0.0; MAX_DIM];
        d.point_into(i, &mut x[..d.dim()]);
        let v = a
            .value(&x[..d.dim()], u.values()[i] / lambda)
            .map_err(|_| Error::NodeRange { node: i, what: "modular term" })?;
        Ok(d.weight(i) * v)
    };
    let terms: Vec<f64> = if nodes.len() >= PAR_THRESHOLD {
        nodes.par_iter().map(term).collect::<Result<_>>()?
    } else {
        nodes.iter().map(term).collect::<Result<_>>()?
    };
    let total = compensated_sum(terms);
    if total.is_finite() {
        Ok(total)
    } else {
        Err(Error::NodeRange { node: nodes.first().copied().unwrap_or(0), what: "modular sum" })
    }
}

/// `int A(x, |u(x)|) dx` over the grid, or over the nodes of `region`.
pub fn modular(a: &NFunction, u: &GridFunction, region: Option<&Ball>) -> Result<f64> {
    let nodes = region_nodes(u.domain(), region)?;
    scaled_modular(a, u, 1.0, &nodes)
}

/// Luxemburg norm `inf { lambda > 0 : modular(u / lambda) <= 1 }`, found by
/// bisection in `log lambda` starting from `[|u|_inf / 1e6, 1e6 |u|_inf]`.
pub fn luxemburg_norm(a: &NFunction, u: &GridFunction) -> Result<f64> {
    let sup = u.sup_norm();
    if sup == 0.0 {
        return Ok(0.0);
    }
    let nodes: Vec<usize> = (0..u.len()).collect();
    // an overflowing modular means lambda is far too small
    let m = |lambda: f64| -> Result<f64> {
        match scaled_modular(a, u, lambda, &nodes) {
            Ok(v) => Ok(v),
            Err(Error::NodeRange { .. }) => Ok(f64::INFINITY),
            Err(e) => Err(e),
        }
    };
    let (mut lo, mut hi) = (sup * 1e-6, sup * 1e6);
    let mut grow = 0;
    while m(hi)? > 1.0 {
        lo = hi;
        hi *= 1e6;
        grow += 1;
        if grow > 40 {
            return Err(Error::NodeRange { node: 0, what: "modular at every bracket" });
        }
    }
    let mut shrink = 0;
    while m(lo)? <= 1.0 {
        hi = lo;
        lo *= 1e-6;
        shrink += 1;
        if shrink > 40 {
            return Err(Error::NodeRange { node: 0, what: "modular at every bracket" });
        }
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        let v = m(mid)?;
        if (v - 1.0).abs() < 1e-10 {
            return Ok(mid);
        }
        if v > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(hi)
}

/// Discrete gradient: central differences at interior nodes, one-sided at
/// the faces. Exact for affine functions.
pub fn gradient(u: &GridFunction) -> VectorField {
    let d = u.domain();
    let n = d.dim();
    let vals = u.values();
    let mut data = vec![0.0; d.node_count() * n];
    data.par_chunks_mut(n).enumerate().for_each(|(i, g)| {
        for (a, ga) in g.iter_mut().enumerate() {
            let (m, p, c) = stencil(d, i, a);
            *ga = c * (vals[p] - vals[m]);
        }
    });
    VectorField::from_raw(d.clone(), data)
}

/// Discrete measure of `ball ∩ Ω`.
pub fn ball_measure(domain: &DomainSpec, ball: &Ball) -> Result<f64> {
    let nodes = ball.nodes(domain)?;
    Ok(compensated_sum(nodes.iter().map(|&i| domain.weight(i))))
}

/// Measure of `{ x in B : u(x) > k }`.
pub fn level_set_measure(u: &GridFunction, k: f64, ball: &Ball) -> Result<f64> {
    let d = u.domain();
    let nodes = ball.nodes(d)?;
    Ok(compensated_sum(nodes.iter().filter(|&&i| u.values()[i] > k).map(|&i| d.weight(i))))
}

/// `max u - min u` over the nodes of the region.
pub fn oscillation(u: &GridFunction, region: &Ball) -> Result<f64> {
    let nodes = region.nonempty_nodes(u.domain())?;
    Ok(oscillation_on(u, &nodes))
}

pub(crate) fn oscillation_on(u: &GridFunction, nodes: &[usize]) -> f64 {
    let (lo, hi) = nodes.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
        let v = u.values()[i];
        (lo.min(v), hi.max(v))
    });
    hi - lo
}

/// Outcome of the sampled Hölder inequality `|int u v| <= 2 |u|_A |v|_{~A}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HolderReport {
    pub lhs: f64,
    pub norm_u: f64,
    pub norm_v: f64,
    pub rhs: f64,
    pub deficit: f64,
    pub pass: bool,
}

pub fn holder_pairing_check(a: &NFunction, u: &GridFunction, v: &GridFunction) -> Result<HolderReport> {
    u.check_same_grid(v)?;
    let d = u.domain();
    let lhs = compensated_sum((0..u.len()).map(|i| d.weight(i) * u.values()[i] * v.values()[i])).abs();
    let norm_u = luxemburg_norm(a, u)?;
    let norm_v = luxemburg_norm(&a.conjugate(), v)?;
    let rhs = 2.0 * norm_u * norm_v;
    let deficit = rhs - lhs;
    Ok(HolderReport { lhs, norm_u, norm_v, rhs, deficit, pass: deficit >= -1e-8 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn square(res: usize) -> DomainSpec {
        DomainSpec::unit_cube(2, res).unwrap()
    }

    #[test]
    fn modular_examples() {
        let a = NFunction::power(2.0, 2).unwrap();
        let one = GridFunction::constant(square(17), 1.0);
        assert_relative_eq!(modular(&a, &one, None).unwrap(), 1.0, max_relative = 1e-14);
        assert_eq!(modular(&a, &GridFunction::zeros(square(9)), None).unwrap(), 0.0);
        let d = DomainSpec::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![129, 3]).unwrap();
        let u = GridFunction::from_fn(d, |x| x[0]).unwrap();
        let h = 1.0 / 128.0;
        // trapezoid rule error for x^2 is h^2 / 6
        assert_relative_eq!(modular(&a, &u, None).unwrap(), 1.0 / 3.0 + h * h / 6.0, max_relative = 1e-12);
    }

    #[test]
    fn norm_examples() {
        for p in [1.5, 2.0, 3.0] {
            let a = NFunction::power(p, 2).unwrap();
            let u = GridFunction::constant(square(9), 2.5);
            assert_relative_eq!(luxemburg_norm(&a, &u).unwrap(), 2.5, max_relative = 1e-10);
        }
        let a = NFunction::power(2.0, 2).unwrap();
        let d = DomainSpec::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![257, 3]).unwrap();
        let u = GridFunction::from_fn(d, |x| x[0]).unwrap();
        let nrm = luxemburg_norm(&a, &u).unwrap();
        assert!((nrm - 1.0 / 3f64.sqrt()).abs() < 1e-5);
        assert_relative_eq!(luxemburg_norm(&a, &u.scaled(3.0)).unwrap(), 3.0 * nrm, max_relative = 1e-9);
        assert_eq!(luxemburg_norm(&a, &GridFunction::zeros(square(5))).unwrap(), 0.0);
    }

    #[test]
    fn gradient_examples() {
        let g = gradient(&GridFunction::from_fn(square(9), |x| 2.0 * x[0] + 3.0 * x[1]).unwrap());
        for i in 0..81 {
            assert!((g.at(i)[0] - 2.0).abs() < 1e-12 && (g.at(i)[1] - 3.0).abs() < 1e-12);
        }
        let d = square(11);
        let u = GridFunction::from_fn(d.clone(), |x| x[0] * x[0]).unwrap();
        let g = gradient(&u);
        for i in 0..d.node_count() {
            if !d.is_boundary(i) {
                assert!((g.at(i)[0] - 2.0 * d.coord(i, 0)).abs() < 1e-12);
            }
        }
        let c = gradient(&GridFunction::constant(square(5), 4.0));
        assert!((0..25).all(|i| c.norm_at(i) == 0.0));
    }

    #[test]
    fn level_sets_and_oscillation() {
        let d = square(65);
        let u = GridFunction::from_fn(d.clone(), |x| x[0]).unwrap();
        let whole = Ball::new(vec![0.5, 0.5], 0.75).unwrap();
        let h = 1.0 / 64.0;
        assert!((level_set_measure(&u, 0.5, &whole).unwrap() - 0.5).abs() <= h);
        assert_eq!(level_set_measure(&u, 1.0, &whole).unwrap(), 0.0);
        assert_relative_eq!(level_set_measure(&u, -1.0, &whole).unwrap(), ball_measure(&d, &whole).unwrap());
        let b = Ball::new(vec![0.5, 0.5], 0.3).unwrap();
        assert!((oscillation(&u, &b).unwrap() - 0.6).abs() <= h);
        assert!(oscillation(&u, &b.scaled(0.5)).unwrap() <= oscillation(&u, &b).unwrap());
        assert_eq!(oscillation(&GridFunction::constant(d, 2.0), &b).unwrap(), 0.0);
    }

    #[test]
    fn holder_examples() {
        let a = NFunction::power(2.0, 2).unwrap();
        let one = GridFunction::constant(square(9), 1.0);
        let r = holder_pairing_check(&a, &one, &one).unwrap();
        assert_relative_eq!(r.lhs, 1.0, max_relative = 1e-12);
        // the conjugate of t^2 is s^2/4, whose norm of 1 is 1/2
        assert_relative_eq!(r.rhs, 1.0, max_relative = 1e-6);
        assert!(r.pass);
        let r = holder_pairing_check(&a, &one, &GridFunction::zeros(square(9))).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert!(r.pass);
    }
}
