//! De Giorgi machinery: the level-set gradient inequality, the measure
//! iteration and its threshold, the constants `(theta, s, tau, alpha)`,
//! class-B fits of Caccioppoli constants, and oscillation-decay analysis.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{unit_ball_volume, DomainSpec};
use crate::error::{Error, Result};
use crate::grid::{Ball, GridFunction};
use crate::growth::DerivedGrowth;
use crate::modular::{ball_measure, gradient, level_set_measure, oscillation_on};
use crate::nfunction::{NFunction, MAX_DIM};
use crate::numeric::{compensated_sum, geometric_ladder};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelsetGradient {
    /// `(l - k) |Omega_l|^{1 - 1/n}`.
    pub lhs: f64,
    /// `rho^n / |B \ Omega_k| * int_{Omega_k \ Omega_l} |grad u|`.
    pub rhs_factor: f64,
    pub c_estimate: f64,
}

/// Both sides of `(l-k)|Omega_{l,rho}|^{1-1/n} <= C rho^n / |B_rho \ Omega_{k,rho}| int |grad u|`.
pub fn levelset_gradient_inequality(u: &GridFunction, k: f64, l: f64, ball: &Ball) -> Result<LevelsetGradient> {
    if !(l > k) {
        return Err(Error::Invalid(format!("need l > k, got k = {k}, l = {l}")));
    }
    let d = u.domain();
    let n = d.dim() as f64;
    let nodes = ball.nonempty_nodes(d)?;
    let vals = u.values();
    let ball_m = compensated_sum(nodes.iter().map(|&i| d.weight(i)));
    let above_k = compensated_sum(nodes.iter().filter(|&&i| vals[i] > k).map(|&i| d.weight(i)));
    let below = ball_m - above_k;
    if !(below > 0.0) {
        return Err(Error::DegenerateLevel { k });
    }
    let above_l = compensated_sum(nodes.iter().filter(|&&i| vals[i] > l).map(|&i| d.weight(i)));
    let g = gradient(u);
    let slab =
        compensated_sum(nodes.iter().filter(|&&i| vals[i] > k && vals[i] <= l).map(|&i| d.weight(i) * g.norm_at(i)));
    let lhs = (l - k) * above_l.powf(1.0 - 1.0 / n);
    let rhs_factor = ball.radius().powf(n) / below * slab;
    let c_estimate = if lhs == 0.0 {
        0.0
    } else if rhs_factor == 0.0 {
        f64::INFINITY
    } else {
        lhs / rhs_factor
    };
    Ok(LevelsetGradient { lhs, rhs_factor, c_estimate })
}

/// Trajectory of the measure iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationState {
    pub c: f64,
    pub beta: f64,
    pub y: Vec<f64>,
    pub converged: bool,
    pub diverged: bool,
}

impl IterationState {
    /// Radii `rho_h = R/4 + R/2^{h+2}` and levels `k_h = k0 + H/2 - H/2^{h+1}`
    /// matching the trajectory.
    pub fn geometry(&self, r: f64, k0: f64, big_h: f64) -> (Vec<f64>, Vec<f64>) {
        (0..self.y.len())
            .map(|h| {
                let p = 2f64.powi(h as i32);
                (r / 4.0 + r / (4.0 * p), k0 + big_h / 2.0 - big_h / (2.0 * p))
            })
            .unzip()
    }
}

const CONVERGED_BELOW: f64 = 1e-12;
const DIVERGED_ABOVE: f64 = 1e100;

/// Shared pieces of the recurrence for fixed `(G, n, c)`.
struct Recurrence<'a> {
    g: &'a DerivedGrowth,
    c: f64,
    /// `G_*(2^{h+2})`, infinite where it overflows.
    stars: Vec<f64>,
}

impl<'a> Recurrence<'a> {
    fn new(g: &'a DerivedGrowth, c: f64) -> Self {
        Self { g, c, stars: Vec::new() }
    }

    fn star_at(&mut self, h: usize) -> f64 {
        while self.stars.len() <= h {
            let arg = 2f64.powi(self.stars.len() as i32 + 2);
            self.stars.push(self.g.star(arg).unwrap_or(f64::INFINITY));
        }
        self.stars[h]
    }

    fn run(&mut self, beta: f64, y0: f64, hmax: usize) -> Result<IterationState> {
        let n = self.g.dim() as f64;
        let base = self.g.base();
        let lead = base.inverse(beta)? / beta.powf(1.0 / n) * self.c;
        let mut y = vec![y0];
        let mut diverged = false;
        let mut cur = y0;
        for h in 0..hmax {
            if cur == 0.0 {
                break;
            }
            let inner = self.c * self.star_at(h) * cur;
            let next = base.inverse(inner).and_then(|v| self.g.star(lead * 2f64.powi(h as i32) * v)).map(|v| v / beta);
            let next = match next {
                Ok(v) => v,
                Err(Error::Inverse { .. }) => f64::INFINITY,
                Err(e) => return Err(e),
            };
            if !next.is_finite() || next > DIVERGED_ABOVE {
                diverged = true;
                y.push(if next.is_finite() { next } else { f64::INFINITY });
                break;
            }
            cur = if next < f64::MIN_POSITIVE { 0.0 } else { next };
            y.push(cur);
        }
        let last = *y.last().unwrap();
        Ok(IterationState { c: self.c, beta, converged: !diverged && last < CONVERGED_BELOW, diverged, y })
    }
}

/// Iterates `y_{h+1} = (1/beta) G_*( G^{-1}(beta) beta^{-1/n} c 2^h G^{-1}(c G_*(2^{h+2}) y_h) )`.
///
/// Convergence is judged on the whole trajectory: it stops when `y` underflows
/// to 0 (converged), exceeds `1e100` or overflows (diverged), or after `hmax`
/// steps, in which case it counts as converged when the last value is below
/// `1e-12`.
pub fn iterate_sequence(g: &DerivedGrowth, c: f64, beta: f64, y0: f64, hmax: usize) -> Result<IterationState> {
    if !(c > 0.0 && beta > 0.0 && y0 >= 0.0) {
        return Err(Error::Invalid(format!("need c, beta > 0 and y0 >= 0, got {c}, {beta}, {y0}")));
    }
    Recurrence::new(g, c).run(beta, y0, hmax)
}

/// `beta` values tried by [`find_y0_star`].
pub fn beta_ladder() -> Vec<f64> {
    geometric_ladder(1e-3, 1e3, 4)
}

pub const SEQUENCE_HMAX: usize = 200;

/// Best trajectory over the beta ladder: the first convergent one, else the
/// last tried.
fn best_trajectory(rec: &mut Recurrence<'_>, y0: f64, betas: &[f64]) -> Result<IterationState> {
    let mut last = None;
    for &b in betas {
        let st = rec.run(b, y0, SEQUENCE_HMAX)?;
        if st.converged {
            return Ok(st);
        }
        last = Some(st);
    }
    Ok(last.expect("nonempty ladder"))
}

/// Trajectory from `y0` under the first convergent `beta` of
/// [`beta_ladder`], or under the last one when none converges.
pub fn best_beta_trajectory(g: &DerivedGrowth, c: f64, y0: f64, hmax: usize) -> Result<IterationState> {
    if !(c > 0.0 && y0 >= 0.0) {
        return Err(Error::Invalid(format!("need c > 0 and y0 >= 0, got {c}, {y0}")));
    }
    let mut rec = Recurrence::new(g, c);
    let mut last = None;
    for b in beta_ladder() {
        let st = rec.run(b, y0, hmax)?;
        if st.converged {
            return Ok(st);
        }
        last = Some(st);
    }
    Ok(last.expect("nonempty ladder"))
}

/// Largest `y0` (to relative tolerance `tol`) whose best-beta trajectory
/// converges, by log-space bisection between a convergent and a
/// nonconvergent seed.
pub fn find_y0_star(g: &DerivedGrowth, c: f64, tol: f64) -> Result<f64> {
    if !(c > 0.0 && tol > 0.0) {
        return Err(Error::Invalid(format!("need c > 0 and tol > 0, got {c}, {tol}")));
    }
    let betas = beta_ladder();
    let mut rec = Recurrence::new(g, c);
    let conv = |rec: &mut Recurrence<'_>, y: f64| -> Result<bool> { Ok(best_trajectory(rec, y, &betas)?.converged) };

    let (mut lo, mut hi);
    if conv(&mut rec, 1.0)? {
        lo = 1.0;
        hi = 10.0;
        while conv(&mut rec, hi)? {
            lo = hi;
            hi *= 10.0;
            if hi > 1e30 {
                return Ok(lo);
            }
        }
    } else {
        hi = 1.0;
        lo = 0.1;
        while !conv(&mut rec, lo)? {
            hi = lo;
            lo *= 0.1;
            if lo < 1e-30 {
                return Err(Error::Infeasible(format!("no convergent seed down to 1e-30 for c = {c}")));
            }
        }
    }
    while hi / lo - 1.0 > tol {
        let mid = (lo * hi).sqrt();
        if conv(&mut rec, mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if !conv(&mut rec, lo)? || conv(&mut rec, hi)? {
        return Err(Error::Infeasible(format!("convergence is not monotone in y0 near {lo:e}")));
    }
    Ok(lo)
}

/// `alpha = -log_4(1 - tau^{-1} 2^{-s})`, evaluated through `ln_1p`.
pub fn holder_exponent(tau: f64, s: u64) -> f64 {
    let x = (-(s as f64)).exp2() / tau;
    -(-x).ln_1p() / 4f64.ln()
}

/// `tau = max(2, 2/delta)`.
pub fn tau_from_delta(delta: f64) -> f64 {
    2f64.max(2.0 / delta)
}

/// Chain constants the theory leaves unquantified.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainConstants {
    pub c0: f64,
    pub m3: f64,
    pub c: f64,
}

impl Default for ChainConstants {
    fn default() -> Self {
        Self { c0: 1.0, m3: 1.0, c: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeGiorgiConstants {
    pub tau: f64,
    pub theta: f64,
    /// `1/2 4^{-n} omega_n`.
    pub theta_cap: f64,
    pub s: u64,
    pub y0_star: f64,
    pub alpha: f64,
    pub chain: ChainConstants,
}

/// Largest natural number tried for `s`.
pub const S_CAP: usize = 1_000_000;

/// `theta = min(y0*, 1/2 4^{-n} omega_n)` with the iteration run at constant
/// `c max(gamma, 1)`; `s` is the least natural number above
/// `c0 2^{-n} omega_n + 1` with
/// `(M3 ^~G^{-1}(c0 2^{-n} omega_n / (s-1)))^{n/(n-1)} < theta`;
/// `tau = max(2, 2/delta)` and `alpha = -log_4(1 - tau^{-1} 2^{-s})`.
pub fn degiorgi_constants(
    g: &DerivedGrowth,
    gamma: f64,
    delta: f64,
    chain: ChainConstants,
) -> Result<DeGiorgiConstants> {
    let n = g.dim();
    if !(gamma > 0.0 && delta > 0.0 && delta <= 2.0) {
        return Err(Error::Invalid(format!("need gamma > 0 and delta in (0, 2], got {gamma}, {delta}")));
    }
    if !(chain.c0 > 0.0 && chain.m3 > 0.0 && chain.c > 0.0) {
        return Err(Error::Invalid("chain constants must be positive".into()));
    }
    let nf = n as f64;
    let omega = unit_ball_volume(n);
    let theta_cap = 0.5 * 4f64.powf(-nf) * omega;
    let y0_star = find_y0_star(g, chain.c * gamma.max(1.0), 1e-6)?;
    let theta = y0_star.min(theta_cap);
    let k = chain.c0 * 2f64.powf(-nf) * omega;
    let start = ((k.ceil() as usize) + 2).max(3);
    let expo = nf / (nf - 1.0);
    let mut s = start;
    loop {
        if s as f64 - 1.0 > k {
            let v = (chain.m3 * g.hat_tilde_inv(k / (s as f64 - 1.0))?).powf(expo);
            if v < theta {
                break;
            }
        }
        s += 1;
        if s > S_CAP {
            let v = (chain.m3 * g.hat_tilde_inv(k / (S_CAP as f64 - 1.0))?).powf(expo);
            return Err(Error::ConstantExplosion {
                cap: S_CAP,
                detail: format!("theta = {theta:e}, condition value at the cap = {v:e}"),
            });
        }
    }
    let tau = tau_from_delta(delta);
    let alpha = holder_exponent(tau, s as u64);
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Infeasible(format!(
            "alpha = {alpha:e} outside (0, 1) for s = {s}, tau = {tau} (2^-s underflows past s = 1074)"
        )));
    }
    Ok(DeGiorgiConstants { tau, theta, theta_cap, s: s as u64, y0_star, alpha, chain })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassBParams {
    pub m: f64,
    pub gamma: f64,
    pub gamma1: f64,
    pub delta: f64,
}

/// Sampling of `(ball, sigma, k)` triples for [`caccioppoli_fit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CaccioppoliSampling {
    /// Ball centers on a lattice at fractions `(i+1)/(k+1)` of each side.
    pub centers_per_axis: usize,
    /// Radii as fractions of the shortest box side.
    pub radius_fractions: Vec<f64>,
    pub sigmas: Vec<f64>,
    /// Levels spaced evenly over `[max w - delta M, max w)`.
    pub levels: usize,
    pub gamma_lo: f64,
    pub gamma_hi: f64,
    pub gamma_per_decade: usize,
    /// Largest admissible `gamma1`; without a cap every `gamma` works.
    pub gamma1_cap: f64,
}

impl Default for CaccioppoliSampling {
    fn default() -> Self {
        Self {
            centers_per_axis: 3,
            radius_fractions: vec![0.1, 0.15, 0.2],
            sigmas: vec![0.5, 0.75],
            levels: 8,
            gamma_lo: 1e-2,
            gamma_hi: 1e8,
            gamma_per_decade: 40,
            gamma1_cap: 0.0,
        }
    }
}

/// One sampled instance of the Caccioppoli inequality.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaccioppoliSample {
    pub center: Vec<f64>,
    pub radius: f64,
    pub sigma: f64,
    pub sign: i8,
    pub k: f64,
    /// `int_{Omega_{k, sigma rho}} A(x, |grad w|)`.
    pub lhs: f64,
    /// `int_{Omega_{k, rho}} A(x, (w - k)/((1 - sigma) rho))`.
    pub r1: f64,
    /// `|Omega_{k, rho}|`.
    pub r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassBFit {
    pub params: ClassBParams,
    pub samples: Vec<CaccioppoliSample>,
    pub violations: usize,
}

const FIT_SLACK: f64 = 1e-10;

/// Does `lhs <= gamma r1 + gamma1 r2 + 1e-10` fail for a sample?
pub fn caccioppoli_violated(s: &CaccioppoliSample, gamma: f64, gamma1: f64) -> bool {
    s.lhs > gamma * s.r1 + gamma1 * s.r2 + FIT_SLACK
}

fn lattice_centers(d: &DomainSpec, per_axis: usize) -> Vec<Vec<f64>> {
    let n = d.dim();
    let total = per_axis.pow(n as u32);
    (0..total)
        .map(|mut id| {
            let mut c = vec![0.0; n];
            for a in (0..n).rev() {
                let i = id % per_axis;
                id /= per_axis;
                let f = (i + 1) as f64 / (per_axis + 1) as f64;
                c[a] = d.lower()[a] + f * (d.upper()[a] - d.lower()[a]);
            }
            c
        })
        .collect()
}

/// Evaluates the three terms of the class-B inequality on every admissible
/// sampled triple for `w = u` and `w = -u`.
pub fn caccioppoli_samples(
    a: &NFunction,
    u: &GridFunction,
    m: f64,
    delta: f64,
    sampling: &CaccioppoliSampling,
) -> Result<Vec<CaccioppoliSample>> {
    let d = u.domain();
    let n = d.dim();
    let side = (0..n).map(|i| d.upper()[i] - d.lower()[i]).fold(f64::INFINITY, f64::min);
    let mut balls = Vec::new();
    for c in lattice_centers(d, sampling.centers_per_axis) {
        for &f in &sampling.radius_fractions {
            let r = f * side;
            if r > 0.0 && d.distance_to_boundary(&c) >= r {
                for &sigma in &sampling.sigmas {
                    if sigma > 0.0 && sigma < 1.0 {
                        balls.push((c.clone(), r, sigma));
                    }
                }
            }
        }
    }
    let grad = gradient(u);
    // A(x, |grad u|) per node, shared by both signs
    let grad_density: Vec<f64> = (0..d.node_count())
        .into_par_iter()
        .map(|i| {
            let mut x = [0.0; MAX_DIM];
            d.point_into(i, &mut x[..n]);
            a.value(&x[..n], grad.norm_at(i)).map_err(|_| Error::NodeRange { node: i, what: "gradient modular" })
        })
        .collect::<Result<_>>()?;
    let per_ball: Vec<Vec<CaccioppoliSample>> = balls
        .par_iter()
        .map(|(c, r, sigma)| {
            let outer = Ball::new(c.clone(), *r)?.nodes(d)?;
            let inner = Ball::new(c.clone(), sigma * r)?.nodes(d)?;
            let mut out = Vec::new();
            if outer.is_empty() {
                return Ok(out);
            }
            for sign in [1i8, -1] {
                let w = |i: usize| sign as f64 * u.values()[i];
                let wmax = outer.iter().map(|&i| w(i)).fold(f64::NEG_INFINITY, f64::max);
                for j in 0..sampling.levels {
                    let k = wmax - delta * m + j as f64 * delta * m / sampling.levels as f64;
                    let lhs =
                        compensated_sum(inner.iter().filter(|&&i| w(i) > k).map(|&i| d.weight(i) * grad_density[i]));
                    let scale = (1.0 - sigma) * r;
                    let mut x = [0.0; MAX_DIM];
                    let mut r1 = crate::numeric::NeumaierSum::new();
                    let mut r2 = crate::numeric::NeumaierSum::new();
                    for &i in outer.iter().filter(|&&i| w(i) > k) {
                        d.point_into(i, &mut x[..n]);
                        let v = a
                            .value(&x[..n], (w(i) - k) / scale)
                            .map_err(|_| Error::NodeRange { node: i, what: "level modular" })?;
                        r1.add(d.weight(i) * v);
                        r2.add(d.weight(i));
                    }
                    out.push(CaccioppoliSample {
                        center: c.clone(),
                        radius: *r,
                        sigma: *sigma,
                        sign,
                        k,
                        lhs,
                        r1: r1.value(),
                        r2: r2.value(),
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(per_ball.into_iter().flatten().collect())
}

/// Fits class-B constants: the least `gamma` on the candidate ladder for
/// which some `gamma1 <= gamma1_cap` makes every sampled triple satisfy
/// `LHS <= gamma R1 + gamma1 R2 + 1e-10`, then the least such `gamma1`.
pub fn caccioppoli_fit(
    a: &NFunction,
    u: &GridFunction,
    m: f64,
    delta: f64,
    sampling: &CaccioppoliSampling,
) -> Result<ClassBFit> {
    if !(m > 0.0 && delta > 0.0 && delta <= 2.0) {
        return Err(Error::Invalid(format!("need M > 0 and delta in (0, 2], got {m}, {delta}")));
    }
    if u.sup_norm() > m * (1.0 + 1e-12) {
        return Err(Error::Invalid(format!("max |u| = {} exceeds M = {m}", u.sup_norm())));
    }
    let samples = caccioppoli_samples(a, u, m, delta, sampling)?;
    let has = |sign: i8| samples.iter().any(|s| s.sign == sign);
    if samples.is_empty() || !has(1) || !has(-1) {
        return Err(Error::Sampling(
            "no admissible (ball, sigma, k) triple: no sampled ball fits inside the domain".into(),
        ));
    }
    let cap = sampling.gamma1_cap.max(0.0);
    let mut need = 0.0f64;
    for s in &samples {
        let excess = s.lhs - cap * s.r2 - FIT_SLACK;
        if excess > 0.0 {
            if s.r1 > 0.0 {
                need = need.max(excess / s.r1);
            } else {
                return Err(Error::Infeasible(format!(
                    "sample at {:?} (radius {}, k = {}) has a positive left side but no level excess",
                    s.center, s.radius, s.k
                )));
            }
        }
    }
    let ladder = geometric_ladder(sampling.gamma_lo, sampling.gamma_hi, sampling.gamma_per_decade);
    let gamma = ladder
        .iter()
        .copied()
        .find(|&g| g >= need && samples.iter().all(|s| s.lhs <= g * s.r1 + cap * s.r2 + FIT_SLACK))
        .ok_or_else(|| Error::Infeasible(format!("required gamma {need:e} exceeds the candidate ladder")))?;
    let gamma1 = samples
        .iter()
        .filter(|s| s.r2 > 0.0)
        .map(|s| (s.lhs - gamma * s.r1 - FIT_SLACK) / s.r2)
        .fold(0.0f64, f64::max)
        .min(cap);
    let violations = samples.iter().filter(|s| caccioppoli_violated(s, gamma, gamma1)).count();
    Ok(ClassBFit { params: ClassBParams { m, gamma, gamma1, delta }, samples, violations })
}

/// Which of the two decay alternatives holds at a scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    /// `osc(B_R) <= c1 R^eps`.
    First,
    /// `osc(B_R) <= theta osc(B_{bR})`.
    Second,
    Both,
    Neither,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleRecord {
    pub radius: f64,
    pub nodes: usize,
    pub osc: f64,
    pub alternative: Alternative,
    /// `log(osc_j / osc_{j-1}) / log(R_j / R_{j-1})`, absent at the first scale.
    pub local_slope: Option<f64>,
    pub usable: bool,
    /// `+1` when `w = u` satisfies the half-measure condition, else `-1`.
    pub w_sign: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayReport {
    pub scales: Vec<ScaleRecord>,
    pub noise_floor: f64,
    pub alpha_hat: f64,
    /// `min(eps, -log_b theta)`.
    pub alpha_formula: f64,
}

/// Parameters of the decay analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayParams {
    pub r0: f64,
    pub b: f64,
    pub theta: f64,
    pub c1: f64,
    pub eps: f64,
}

const MIN_NODES: usize = 4;

/// Per-scale oscillations on `R_j = R0 b^{-j}`, stopping once a ball holds
/// fewer than four nodes. Balls are intersected with the box.
pub fn oscillation_scales(u: &GridFunction, center: &[f64], p: &DecayParams) -> Result<(Vec<ScaleRecord>, f64)> {
    let d = u.domain();
    if !(p.r0 > 0.0 && p.b > 1.0 && p.theta > 0.0 && p.theta < 1.0 && p.c1 > 0.0 && p.eps > 0.0 && p.eps <= 1.0) {
        return Err(Error::Invalid(format!("invalid decay parameters {p:?}")));
    }
    if !d.contains(center) {
        return Err(Error::Region(format!("center {center:?} lies outside the domain")));
    }
    let base = Ball::new(center.to_vec(), p.r0)?.nonempty_nodes(d)?;
    let g = gradient(u);
    let mut mags: Vec<f64> = base.iter().map(|&i| g.norm_at(i)).collect();
    mags.sort_by(f64::total_cmp);
    let median = mags[mags.len() / 2];
    let noise_floor = 10.0 * d.h_max() * median;

    let mut out: Vec<ScaleRecord> = Vec::new();
    let mut r = p.r0;
    loop {
        let nodes = Ball::new(center.to_vec(), r)?.nodes(d)?;
        if nodes.len() < MIN_NODES {
            break;
        }
        let osc = oscillation_on(u, &nodes);
        let first = osc <= p.c1 * r.powf(p.eps);
        let prev = out.last();
        let second = prev.map(|q| osc <= p.theta * q.osc).unwrap_or(false);
        let alternative = match (first, second) {
            (true, true) => Alternative::Both,
            (true, false) => Alternative::First,
            (false, true) => Alternative::Second,
            (false, false) => Alternative::Neither,
        };
        let local_slope = prev.filter(|q| q.osc > 0.0 && osc > 0.0).map(|q| (osc / q.osc).ln() / (r / q.radius).ln());
        let w_sign = half_measure_sign(u, center, r, osc, &nodes)?;
        out.push(ScaleRecord {
            radius: r,
            nodes: nodes.len(),
            osc,
            alternative,
            local_slope,
            usable: osc > noise_floor,
            w_sign,
        });
        r /= p.b;
    }
    Ok((out, noise_floor))
}

/// Chooses `w = u` when `|{x in B_{R/2} : w > max_{B_R} w - osc/2}| <= |B_{R/2}|/2`,
/// else `w = -u`.
fn half_measure_sign(u: &GridFunction, center: &[f64], r: f64, osc: f64, nodes: &[usize]) -> Result<i8> {
    let d = u.domain();
    let umax = nodes.iter().map(|&i| u.values()[i]).fold(f64::NEG_INFINITY, f64::max);
    let half = Ball::new(center.to_vec(), 0.5 * r)?;
    let total = ball_measure(d, &half)?;
    let upper = level_set_measure(u, umax - 0.5 * osc, &half)?;
    Ok(if upper <= 0.5 * total { 1 } else { -1 })
}

/// Oscillation decay around `center` with a least-squares fit of
/// `log osc` against `log R` over the scales whose oscillation exceeds the
/// noise floor `10 h median |grad u|` (median over `B_{R0}`).
pub fn oscillation_decay_analysis(u: &GridFunction, center: &[f64], p: &DecayParams) -> Result<DecayReport> {
    let (scales, noise_floor) = oscillation_scales(u, center, p)?;
    let pts: Vec<(f64, f64)> = scales.iter().filter(|s| s.usable).map(|s| (s.radius.ln(), s.osc.ln())).collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientScales { usable: pts.len() });
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let alpha_hat = sxy / sxx;
    let alpha_formula = p.eps.min(-p.theta.ln() / p.b.ln());
    Ok(DecayReport { scales, noise_floor, alpha_hat, alpha_formula })
}
