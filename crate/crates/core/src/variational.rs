//! Discretized energies `int f(x, u, grad u)` with Dirichlet data: assembly,
//! minimization, local-minimality tests, growth sandwiches and the weak form
//! `int L . grad v - int F v`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::DomainSpec;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::grid::{stencil, Ball, GridFunction};
use crate::modular::region_nodes;
use crate::nfunction::{NFunction, MAX_DIM};
use crate::numeric::compensated_sum;

/// Regularization of `|z|` near the origin: `|z|` becomes `sqrt(|z|^2 + eps^2)`.
pub const REGULARIZATION: f64 = 1e-8;

/// `f(x, s, z) = scale * Phi(x, |z|) + B(x, s)` together with the reference
/// function `A` and the constants `(a, b)` of the growth sandwich
/// `A(x, N(z)) - B(x, s) - b <= f <= a (A(x, N(z)) + B(x, s) + b)`.
#[derive(Debug, Clone)]
pub struct EnergyDensity {
    integrand: NFunction,
    scale: f64,
    lower: Option<NFunction>,
    reference: NFunction,
    a: f64,
    b: f64,
}

impl EnergyDensity {
    /// `f = Phi(x, |z|)` with `A = Phi`, `a = 1`, `b = 0`.
    pub fn new(integrand: NFunction) -> Self {
        Self { reference: integrand.clone(), integrand, scale: 1.0, lower: None, a: 1.0, b: 0.0 }
    }

    pub fn p_dirichlet(p: f64, n: usize) -> Result<Self> {
        Ok(Self::new(NFunction::power(p, n)?))
    }

    pub fn with_scale(mut self, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Invalid(format!("density scale must be positive, got {scale}")));
        }
        self.scale = scale;
        Ok(self)
    }

    pub fn with_lower(mut self, b: NFunction) -> Self {
        self.lower = Some(b);
        self
    }

    pub fn with_reference(mut self, a: NFunction) -> Self {
        self.reference = a;
        self
    }

    pub fn with_sandwich(mut self, a: f64, b: f64) -> Result<Self> {
        if !(a >= 1.0 && b >= 0.0) {
            return Err(Error::Invalid(format!("sandwich needs a >= 1, b >= 0, got {a}, {b}")));
        }
        self.a = a;
        self.b = b;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.integrand.dim()
    }

    pub fn integrand(&self) -> &NFunction {
        &self.integrand
    }

    pub fn lower(&self) -> Option<&NFunction> {
        self.lower.as_ref()
    }

    pub fn reference(&self) -> &NFunction {
        &self.reference
    }

    pub fn sandwich(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    fn lower_value(&self, x: &[f64], s: f64) -> Result<f64> {
        match &self.lower {
            Some(b) => b.value(x, s),
            None => Ok(0.0),
        }
    }

    /// Unregularized `f(x, s, z)`.
    pub fn value(&self, x: &[f64], s: f64, z: &[f64]) -> Result<f64> {
        let r = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        Ok(self.scale * self.integrand.value(x, r)? + self.lower_value(x, s)?)
    }

    /// Regularized `f`, its `s`-derivative, and its `z`-gradient written to
    /// `dz`.
    pub fn value_and_gradient(&self, x: &[f64], s: f64, z: &[f64], dz: &mut [f64]) -> Result<(f64, f64)> {
        let r = (z.iter().map(|v| v * v).sum::<f64>() + REGULARIZATION * REGULARIZATION).sqrt();
        let (phi, dphi) = self.integrand.eval_pair(x, r)?;
        let k = self.scale * dphi / r;
        for (d, zi) in dz.iter_mut().zip(z) {
            *d = k * zi;
        }
        let (bv, bd) = match &self.lower {
            Some(b) => b.eval_pair(x, s)?,
            None => (0.0, 0.0),
        };
        Ok((self.scale * phi + bv, bd))
    }
}

/// Per-node `z = (D u)_i` at node `i`.
fn node_gradient(d: &DomainSpec, vals: &[f64], i: usize, z: &mut [f64]) {
    for (a, za) in z.iter_mut().enumerate() {
        let (m, p, c) = stencil(d, i, a);
        *za = c * (vals[p] - vals[m]);
    }
}

/// Energy over a node set: raw and regularized.
fn energy_on(f: &EnergyDensity, u: &GridFunction, nodes: &[usize]) -> Result<(f64, f64)> {
    let d = u.domain();
    let n = d.dim();
    let vals = u.values();
    let terms: Vec<(f64, f64)> = nodes
        .par_iter()
        .map(|&i| {
            let mut x = [0.0; MAX_DIM];
            let mut z = [0.0; MAX_DIM];
            let mut dz = [0.0; MAX_DIM];
            d.point_into(i, &mut x[..n]);
            node_gradient(d, vals, i, &mut z[..n]);
            let err = |_| Error::NodeRange { node: i, what: "energy density" };
            let raw = f.value(&x[..n], vals[i], &z[..n]).map_err(err)?;
            let (reg, _) = f.value_and_gradient(&x[..n], vals[i], &z[..n], &mut dz[..n]).map_err(err)?;
            Ok((d.weight(i) * raw, d.weight(i) * reg))
        })
        .collect::<Result<_>>()?;
    Ok((compensated_sum(terms.iter().map(|t| t.0)), compensated_sum(terms.iter().map(|t| t.1))))
}

/// `E(u) = int f(x, u, grad u)` (unregularized) over the grid or a region.
pub fn energy(f: &EnergyDensity, u: &GridFunction, region: Option<&Ball>) -> Result<f64> {
    let nodes = region_nodes(u.domain(), region)?;
    Ok(energy_on(f, u, &nodes)?.0)
}

/// Regularized energy, the quantity [`minimize`] decreases.
pub fn energy_regularized(f: &EnergyDensity, u: &GridFunction, region: Option<&Ball>) -> Result<f64> {
    let nodes = region_nodes(u.domain(), region)?;
    Ok(energy_on(f, u, &nodes)?.1)
}

/// Regularized energy and its gradient with respect to every node value.
fn energy_and_gradient(f: &EnergyDensity, d: &DomainSpec, vals: &[f64]) -> Result<(f64, Vec<f64>)> {
    let n = d.dim();
    let per_node: Vec<(f64, f64, [f64; MAX_DIM])> = (0..d.node_count())
        .into_par_iter()
        .map(|i| {
            let mut x = [0.0; MAX_DIM];
            let mut z = [0.0; MAX_DIM];
            let mut dz = [0.0; MAX_DIM];
            d.point_into(i, &mut x[..n]);
            node_gradient(d, vals, i, &mut z[..n]);
            let (v, ds) = f
                .value_and_gradient(&x[..n], vals[i], &z[..n], &mut dz[..n])
                .map_err(|_| Error::NodeRange { node: i, what: "energy density" })?;
            let w = d.weight(i);
            for q in dz[..n].iter_mut() {
                *q *= w;
            }
            Ok((w * v, w * ds, dz))
        })
        .collect::<Result<_>>()?;
    let e = compensated_sum(per_node.iter().map(|t| t.0));
    let mut g: Vec<f64> = per_node.iter().map(|t| t.1).collect();
    for (i, (_, _, q)) in per_node.iter().enumerate() {
        for (a, qa) in q[..n].iter().enumerate() {
            let (m, p, c) = stencil(d, i, a);
            g[p] += c * qa;
            g[m] -= c * qa;
        }
    }
    for (i, gi) in g.iter_mut().enumerate() {
        if d.is_boundary(i) {
            *gi = 0.0;
        }
    }
    Ok((e, g))
}

/// Directional derivative of the regularized energy along `dir`.
pub fn energy_directional_derivative(f: &EnergyDensity, u: &GridFunction, dir: &GridFunction) -> Result<f64> {
    u.check_same_grid(dir)?;
    let (_, g) = energy_and_gradient(f, u.domain(), u.values())?;
    Ok(compensated_sum(g.iter().zip(dir.values()).map(|(a, b)| a * b)))
}

/// Dirichlet data on the boundary nodes.
#[derive(Debug, Clone)]
pub enum BoundaryData {
    Expression(Expr),
    Tabulated(GridFunction),
}

impl BoundaryData {
    pub fn expression(src: &str, n: usize) -> Result<Self> {
        Ok(Self::Expression(Expr::parse_field(src, n)?))
    }

    fn value_at(&self, d: &DomainSpec, i: usize) -> Result<f64> {
        let v = match self {
            BoundaryData::Expression(e) => e.eval(&d.point(i)),
            BoundaryData::Tabulated(g) => {
                if g.domain() != d {
                    return Err(Error::Invalid("tabulated boundary data lives on another grid".into()));
                }
                g.values()[i]
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NodeRange { node: i, what: "boundary value" })
        }
    }

    /// Copy of `init` with boundary values overwritten.
    pub fn apply(&self, init: &GridFunction) -> Result<GridFunction> {
        let d = init.domain().clone();
        let mut vals = init.values().to_vec();
        for (i, v) in vals.iter_mut().enumerate() {
            if d.is_boundary(i) {
                *v = self.value_at(&d, i)?;
            }
        }
        GridFunction::new(d, vals)
    }

    /// The data on the boundary and `fill` inside.
    pub fn with_interior(&self, domain: &DomainSpec, fill: f64) -> Result<GridFunction> {
        self.apply(&GridFunction::constant(domain.clone(), fill))
    }

    fn check(&self, u: &GridFunction) -> Result<()> {
        let d = u.domain();
        for i in 0..d.node_count() {
            if d.is_boundary(i) {
                let b = self.value_at(d, i)?;
                if (u.values()[i] - b).abs() > 1e-12 * (1.0 + b.abs()) {
                    return Err(Error::Contract(format!("initial guess differs from the boundary data at node {i}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    /// Stop when the sup-norm of the projected gradient density drops below.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_iter: 20_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub energy: f64,
    pub step: f64,
    pub gradient_sup: f64,
}

#[derive(Debug, Clone)]
pub struct MinimizeOutcome {
    pub solution: GridFunction,
    pub converged: bool,
    pub iterations: usize,
    /// Regularized energy, the minimized quantity.
    pub energy: f64,
    pub energy_raw: f64,
    pub gradient_sup: f64,
    pub log: Vec<IterationRecord>,
}

const ARMIJO: f64 = 1e-4;
const BACKTRACK: f64 = 0.5;
const MAX_BACKTRACKS: usize = 50;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    compensated_sum(a.iter().zip(b).map(|(x, y)| x * y))
}

/// Sup-norm of the gradient density `g_j / w_j` over interior nodes.
fn gradient_sup(d: &DomainSpec, g: &[f64]) -> f64 {
    g.iter().enumerate().filter(|(i, _)| !d.is_boundary(*i)).fold(0.0, |m, (i, gi)| m.max((gi / d.weight(i)).abs()))
}

/// Minimizes the regularized energy over the interior node values, keeping
/// boundary values fixed.
///
/// Search directions are Polak-Ribière nonlinear conjugate gradients
/// (restarted with steepest descent whenever they fail to descend); steps
/// come from a secant estimate of the minimizer along the line followed by
/// Armijo backtracking. Near the minimum, where energy differences reach
/// rounding level, a step is also accepted when the energy has not grown
/// beyond rounding and the directional derivative has dropped enough.
pub fn minimize(
    f: &EnergyDensity,
    boundary: &BoundaryData,
    init: &GridFunction,
    opts: &SolverOptions,
) -> Result<MinimizeOutcome> {
    boundary.check(init)?;
    let d = init.domain().clone();
    if d.dim() != f.dim() {
        return Err(Error::Invalid("density and grid dimensions differ".into()));
    }
    let mut u = init.values().to_vec();
    let (mut e, mut g) = energy_and_gradient(f, &d, &u)?;
    let mut gsup = gradient_sup(&d, &g);
    let mut log = vec![IterationRecord { iteration: 0, energy: e, step: 0.0, gradient_sup: gsup }];
    let mut dir: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut g_prev = g.clone();
    let mut step_guess = 0.0;
    let mut iter = 0;
    let mut trial = vec![0.0; u.len()];

    while gsup >= opts.tol && iter < opts.max_iter {
        iter += 1;
        if iter > 1 {
            let gg_prev = dot(&g_prev, &g_prev);
            let beta = if gg_prev > 0.0 {
                (compensated_sum(g.iter().zip(&g_prev).map(|(a, b)| a * (a - b))) / gg_prev).max(0.0)
            } else {
                0.0
            };
            for (di, gi) in dir.iter_mut().zip(&g) {
                *di = -gi + beta * *di;
            }
        }
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            for (di, gi) in dir.iter_mut().zip(&g) {
                *di = -gi;
            }
            slope = dot(&g, &dir);
        }

        let mut attempt = 0;
        let accepted = loop {
            let dsup = dir.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let probe = if step_guess > 0.0 { step_guess } else { d.h_max() / dsup.max(1e-300) * 1e-2 };
            // secant estimate of the zero of the directional derivative
            for ((t, ui), di) in trial.iter_mut().zip(&u).zip(&dir) {
                *t = ui + probe * di;
            }
            let mut alpha = match energy_and_gradient(f, &d, &trial) {
                Ok((_, gp)) => {
                    let sp = dot(&gp, &dir);
                    if sp > slope {
                        probe * slope / (slope - sp)
                    } else {
                        2.0 * probe
                    }
                }
                Err(_) => 0.5 * probe,
            };
            let mut found = None;
            for _ in 0..MAX_BACKTRACKS {
                for ((t, ui), di) in trial.iter_mut().zip(&u).zip(&dir) {
                    *t = ui + alpha * di;
                }
                if let Ok((et, gt)) = energy_and_gradient(f, &d, &trial) {
                    let armijo = et <= e + ARMIJO * alpha * slope;
                    let approx =
                        et <= e + 4.0 * f64::EPSILON * e.abs() && dot(&gt, &dir) <= (2.0 * ARMIJO - 1.0) * slope;
                    if armijo || approx {
                        found = Some((alpha, et, gt));
                        break;
                    }
                }
                alpha *= BACKTRACK;
            }
            match found {
                Some(v) => break Some(v),
                None if attempt == 0 => {
                    // restart with steepest descent before giving up
                    attempt += 1;
                    step_guess = 0.0;
                    for (di, gi) in dir.iter_mut().zip(&g) {
                        *di = -gi;
                    }
                    slope = dot(&g, &dir);
                }
                None => break None,
            }
        };

        let Some((alpha, et, gt)) = accepted else {
            return Err(Error::Stagnation { iterations: iter, energy: e, last: Box::new(GridFunction::new(d, u)?) });
        };
        for (ui, di) in u.iter_mut().zip(&dir) {
            *ui += alpha * di;
        }
        step_guess = alpha;
        g_prev = std::mem::replace(&mut g, gt);
        e = et;
        gsup = gradient_sup(&d, &g);
        log.push(IterationRecord { iteration: iter, energy: e, step: alpha, gradient_sup: gsup });
    }

    let solution = GridFunction::new(d, u)?;
    let energy_raw = energy(f, &solution, None)?;
    Ok(MinimizeOutcome {
        solution,
        converged: gsup < opts.tol,
        iterations: iter,
        energy: e,
        energy_raw,
        gradient_sup: gsup,
        log,
    })
}

/// `amp * (1 - (r/R)^2)^2` inside the ball, zero outside.
pub fn bump(domain: &DomainSpec, center: &[f64], radius: f64, amp: f64) -> GridFunction {
    let values = (0..domain.node_count())
        .map(|i| {
            let r2: f64 = (0..domain.dim()).map(|a| (domain.coord(i, a) - center[a]).powi(2)).sum();
            let q = r2 / (radius * radius);
            if q < 1.0 {
                amp * (1.0 - q) * (1.0 - q)
            } else {
                0.0
            }
        })
        .collect();
    GridFunction::new(domain.clone(), values).expect("finite bump")
}

/// A random compactly supported bump: center at an interior node, radius up
/// to the distance to the boundary, amplitude in `[-amp_max, amp_max]`.
pub fn random_bump(domain: &DomainSpec, rng: &mut ChaCha8Rng, amp_max: f64) -> (GridFunction, Vec<f64>, f64) {
    let h = domain.spacing().iter().copied().fold(f64::INFINITY, f64::min);
    loop {
        let idx = rng.gen_range(0..domain.node_count());
        if domain.is_boundary(idx) {
            continue;
        }
        let c = domain.point(idx);
        let dist = domain.distance_to_boundary(&c);
        if dist < 2.0 * h {
            continue;
        }
        let radius = rng.gen_range(2.0 * h..=dist);
        let amp = rng.gen_range(-amp_max..=amp_max);
        return (bump(domain, &c, radius, amp), c, radius);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalMinTrial {
    pub center: Vec<f64>,
    pub radius: f64,
    pub amplitude: f64,
    /// `E(u + phi; supp phi) - E(u; supp phi)`.
    pub difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalMinReport {
    pub seed: u64,
    pub trials: usize,
    pub violations: Vec<LocalMinTrial>,
    pub min_difference: f64,
}

/// Random bump battery for `E(u + phi; supp phi) >= E(u; supp phi) - tol`.
/// The local energy is taken over the bump's ball enlarged by two grid
/// spacings so that every node whose difference stencil sees the bump counts.
pub fn local_min_test(
    f: &EnergyDensity,
    u: &GridFunction,
    trials: usize,
    tol: f64,
    seed: u64,
) -> Result<LocalMinReport> {
    let d = u.domain();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amp_max = 0.1 * (u.max() - u.min());
    let mut violations = Vec::new();
    let mut min_difference = f64::INFINITY;
    for _ in 0..trials {
        let (phi, center, radius) = random_bump(d, &mut rng, amp_max);
        let amplitude = phi.values().iter().cloned().fold(0.0, |m: f64, v| if v.abs() > m.abs() { v } else { m });
        let region = Ball::new(center.clone(), radius + 2.0 * d.h_max())?;
        let nodes = region.nonempty_nodes(d)?;
        let base = energy_on(f, u, &nodes)?.0;
        let moved = energy_on(f, &u.axpy(1.0, &phi)?, &nodes)?.0;
        let difference = moved - base;
        min_difference = min_difference.min(difference);
        if difference < -tol {
            violations.push(LocalMinTrial { center, radius, amplitude, difference });
        }
    }
    Ok(LocalMinReport { seed, trials, violations, min_difference })
}

/// Gradient norm used in the sandwich.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientNorm {
    /// `sum |z_i|`.
    L1,
    /// `|z|`.
    L2,
}

impl GradientNorm {
    pub fn of(self, z: &[f64]) -> f64 {
        match self {
            GradientNorm::L1 => z.iter().map(|v| v.abs()).sum(),
            GradientNorm::L2 => z.iter().map(|v| v * v).sum::<f64>().sqrt(),
        }
    }
}

/// Sample ladders for the growth checks: `|z|` geometric, a fixed set of
/// directions (axes, the diagonal, and seeded random unit vectors), `s`
/// values, and `x` on a tensor grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GrowthSamples {
    pub z_lo: f64,
    pub z_hi: f64,
    pub per_decade: usize,
    pub random_directions: usize,
    pub s_values: Vec<f64>,
    pub x_per_axis: usize,
    pub seed: u64,
}

impl Default for GrowthSamples {
    fn default() -> Self {
        Self {
            z_lo: 1e-2,
            z_hi: 1e2,
            per_decade: 5,
            random_directions: 4,
            s_values: vec![-10.0, -1.0, -0.1, 0.0, 0.1, 1.0, 10.0],
            x_per_axis: 3,
            seed: 0,
        }
    }
}

impl GrowthSamples {
    fn magnitudes(&self) -> Vec<f64> {
        crate::numeric::geometric_ladder(self.z_lo, self.z_hi, self.per_decade)
    }

    fn directions(&self, n: usize) -> Vec<Vec<f64>> {
        let mut dirs = Vec::new();
        for a in 0..n {
            let mut e = vec![0.0; n];
            e[a] = 1.0;
            dirs.push(e);
        }
        dirs.push(vec![1.0 / (n as f64).sqrt(); n]);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        for _ in 0..self.random_directions {
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if nv > 1e-3 {
                dirs.push(v.iter().map(|x| x / nv).collect());
            }
        }
        dirs
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SampleWitness {
    pub x: Vec<f64>,
    pub s: f64,
    pub z: Vec<f64>,
}

/// Worst slack of one sampled inequality, relative to the size of its sides.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Margin {
    pub margin: f64,
    pub pass: bool,
    pub witness: SampleWitness,
}

impl Margin {
    fn new() -> Self {
        Self { margin: f64::INFINITY, pass: true, witness: SampleWitness::default() }
    }

    fn record(&mut self, lhs: f64, rhs: f64, x: &[f64], s: f64, z: &[f64]) {
        let scale = lhs.abs().max(rhs.abs()).max(1e-300);
        let m = (rhs - lhs) / scale;
        if m < self.margin {
            self.margin = m;
            self.witness = SampleWitness { x: x.to_vec(), s, z: z.to_vec() };
        }
        self.pass = self.margin >= -1e-10;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SandwichReport {
    pub norm: GradientNorm,
    pub lower: Margin,
    pub upper: Margin,
}

/// Sampled `A(x, N(z)) - B(x, s) - b <= f(x, s, z) <= a (A(x, N(z)) + B(x, s) + b)`
/// for both gradient norms `N`.
pub fn growth_sandwich_check(f: &EnergyDensity, samples: &GrowthSamples) -> Result<Vec<SandwichReport>> {
    let n = f.dim();
    let unit = DomainSpec::unit_cube(n, 3)?;
    let xs = unit.sample_points(samples.x_per_axis);
    let mags = samples.magnitudes();
    let dirs = samples.directions(n);
    let (a, b) = f.sandwich();
    let mut out = Vec::new();
    for norm in [GradientNorm::L1, GradientNorm::L2] {
        let mut lower = Margin::new();
        let mut upper = Margin::new();
        for x in &xs {
            for &s in &samples.s_values {
                let bv = f.lower_value(x, s)?;
                for dir in &dirs {
                    for &m in &mags {
                        let z: Vec<f64> = dir.iter().map(|v| v * m).collect();
                        let av = f.reference().value(x, norm.of(&z))?;
                        let fv = f.value(x, s, &z)?;
                        lower.record(av - bv - b, fv, x, s, &z);
                        upper.record(fv, a * (av + bv + b), x, s, &z);
                    }
                }
            }
        }
        out.push(SandwichReport { norm, lower, upper });
    }
    Ok(out)
}

/// Constants of the weak-form growth conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeakConstants {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    pub b: f64,
    pub c: f64,
}

#[derive(Debug, Clone)]
enum PairKind {
    /// `L = grad_z f`, `F = -d_s f` of a (regularized) density.
    Gradient(EnergyDensity),
    /// Closed forms in `x1..xn, s, z1..zn`.
    Custom { l: Vec<Expr>, f: Expr },
}

/// The pair `(L, F)` of `div L(x, u, grad u) + F(x, u, grad u) = 0`.
#[derive(Debug, Clone)]
pub struct WeakFormPair {
    kind: PairKind,
    n: usize,
    pub constants: WeakConstants,
}

impl WeakFormPair {
    pub fn gradient_of(f: &EnergyDensity, constants: WeakConstants) -> Self {
        Self { n: f.dim(), kind: PairKind::Gradient(f.clone()), constants }
    }

    /// `l[i]` and `f` are expressions in `x1..xn`, `s`, `z1..zn`.
    pub fn custom(l: &[&str], f: &str, n: usize, constants: WeakConstants) -> Result<Self> {
        if l.len() != n {
            return Err(Error::Invalid(format!("L needs {n} components, got {}", l.len())));
        }
        let mut names: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
        names.push("s".into());
        names.extend((1..=n).map(|i| format!("z{i}")));
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let l = l.iter().map(|e| Expr::parse(e, &refs)).collect::<Result<_>>()?;
        let f = Expr::parse(f, &refs)?;
        Ok(Self { n, kind: PairKind::Custom { l, f }, constants })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Writes `L(x, s, z)` to `l_out` and returns `F(x, s, z)`.
    pub fn eval(&self, x: &[f64], s: f64, z: &[f64], l_out: &mut [f64]) -> Result<f64> {
        match &self.kind {
            PairKind::Gradient(f) => {
                let (_, ds) = f.value_and_gradient(x, s, z, l_out)?;
                Ok(-ds)
            }
            PairKind::Custom { l, f } => {
                let n = self.n;
                let mut buf = [0.0; 2 * MAX_DIM + 1];
                buf[..n].copy_from_slice(&x[..n]);
                buf[n] = s;
                buf[n + 1..=2 * n].copy_from_slice(&z[..n]);
                for (o, e) in l_out.iter_mut().zip(l) {
                    *o = e.eval(&buf[..=2 * n]);
                }
                Ok(f.eval(&buf[..=2 * n]))
            }
        }
    }
}

/// `sum_i w_i (L(x_i, u_i, Du_i) . Dv_i - F(x_i, u_i, Du_i) v_i)`.
pub fn weak_residual(pair: &WeakFormPair, u: &GridFunction, v: &GridFunction) -> Result<f64> {
    u.check_same_grid(v)?;
    let d = u.domain();
    let n = d.dim();
    if let Some(i) = (0..d.node_count()).find(|&i| d.is_boundary(i) && v.values()[i] != 0.0) {
        return Err(Error::Contract(format!("test function is nonzero on boundary node {i}")));
    }
    let terms: Vec<f64> = (0..d.node_count())
        .into_par_iter()
        .map(|i| {
            let mut x = [0.0; MAX_DIM];
            let mut z = [0.0; MAX_DIM];
            let mut dv = [0.0; MAX_DIM];
            let mut l = [0.0; MAX_DIM];
            d.point_into(i, &mut x[..n]);
            node_gradient(d, u.values(), i, &mut z[..n]);
            node_gradient(d, v.values(), i, &mut dv[..n]);
            let fv = pair.eval(&x[..n], u.values()[i], &z[..n], &mut l[..n])?;
            let t = (0..n).map(|a| l[a] * dv[a]).sum::<f64>() - fv * v.values()[i];
            if t.is_finite() {
                Ok(d.weight(i) * t)
            } else {
                Err(Error::NodeRange { node: i, what: "weak form" })
            }
        })
        .collect::<Result<_>>()?;
    Ok(compensated_sum(terms))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakGrowthReport {
    /// `L . z >= a0 A(x,|z|) - b B(x,s) - c`.
    pub coercivity: Margin,
    /// `|L| <= a1 ~A^{-1}(A(x,|z|)) + b ~A^{-1}(B(x,s)) + c`.
    pub l_bound: Margin,
    /// `|F| <= a2 ~B^{-1}(A(x,|z|)) + b ~B^{-1}(B(x,s)) + c`.
    pub f_bound: Margin,
    /// Largest `a0` for which coercivity holds on the samples.
    pub a0_max: f64,
    /// Smallest `a1` for which the `L` bound holds on the samples.
    pub a1_min: f64,
    /// Smallest `a2` for which the `F` bound holds on the samples.
    pub a2_min: f64,
}

pub fn weak_growth_check(
    pair: &WeakFormPair,
    a: &NFunction,
    b: &NFunction,
    samples: &GrowthSamples,
) -> Result<WeakGrowthReport> {
    let n = pair.dim();
    let k = pair.constants;
    let unit = DomainSpec::unit_cube(n, 3)?;
    let xs = unit.sample_points(samples.x_per_axis);
    let mags = samples.magnitudes();
    let dirs = samples.directions(n);
    let at = a.conjugate();
    let bt = b.conjugate();
    let mut coercivity = Margin::new();
    let mut l_bound = Margin::new();
    let mut f_bound = Margin::new();
    let (mut a0_max, mut a1_min, mut a2_min) = (f64::INFINITY, 0.0f64, 0.0f64);
    let mut l = vec![0.0; n];
    for x in &xs {
        // conjugate inverses depend on (x, |z|) and (x, s) only
        let per_mag: Vec<(f64, f64, f64)> = mags
            .iter()
            .map(|&m| {
                let av = a.value(x, m)?;
                Ok((av, at.inverse(x, av)?, bt.inverse(x, av)?))
            })
            .collect::<Result<_>>()?;
        let per_s: Vec<(f64, f64, f64)> = samples
            .s_values
            .iter()
            .map(|&s| {
                let bv = b.value(x, s)?;
                Ok((bv, at.inverse(x, bv)?, bt.inverse(x, bv)?))
            })
            .collect::<Result<_>>()?;
        for (si, &s) in samples.s_values.iter().enumerate() {
            let (bv, at_b, bt_b) = per_s[si];
            for dir in &dirs {
                for (mi, &m) in mags.iter().enumerate() {
                    let (av, at_a, bt_a) = per_mag[mi];
                    let z: Vec<f64> = dir.iter().map(|v| v * m).collect();
                    let fv = pair.eval(x, s, &z, &mut l)?;
                    let lz: f64 = l.iter().zip(&z).map(|(p, q)| p * q).sum();
                    let lnorm = l.iter().map(|v| v * v).sum::<f64>().sqrt();
                    coercivity.record(k.a0 * av - k.b * bv - k.c, lz, x, s, &z);
                    l_bound.record(lnorm, k.a1 * at_a + k.b * at_b + k.c, x, s, &z);
                    f_bound.record(fv.abs(), k.a2 * bt_a + k.b * bt_b + k.c, x, s, &z);
                    if av > 0.0 {
                        a0_max = a0_max.min((lz + k.b * bv + k.c) / av);
                    }
                    if at_a > 0.0 {
                        a1_min = a1_min.max((lnorm - k.b * at_b - k.c) / at_a);
                    }
                    if bt_a > 0.0 {
                        a2_min = a2_min.max((fv.abs() - k.b * bt_b - k.c) / bt_a);
                    }
                }
            }
        }
    }
    Ok(WeakGrowthReport { coercivity, l_bound, f_bound, a0_max, a1_min, a2_min })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn square(res: usize) -> DomainSpec {
        DomainSpec::unit_cube(2, res).unwrap()
    }

    #[test]
    fn energy_examples() {
        let u = GridFunction::from_fn(square(17), |x| x[0]).unwrap();
        let f2 = EnergyDensity::p_dirichlet(2.0, 2).unwrap();
        assert_relative_eq!(energy(&f2, &u, None).unwrap(), 1.0, max_relative = 1e-13);
        let f3 = EnergyDensity::p_dirichlet(3.0, 2).unwrap();
        assert_relative_eq!(energy(&f3, &u.scaled(2.0), None).unwrap(), 8.0, max_relative = 1e-13);
        let dp = EnergyDensity::new(NFunction::double_phase(2.0, 3.0, "x1", 2).unwrap());
        let v = GridFunction::from_fn(square(33), |x| x[1]).unwrap();
        assert_relative_eq!(energy(&dp, &v, None).unwrap(), 1.5, max_relative = 1e-12);
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let d = square(9);
        let u = GridFunction::from_fn(d.clone(), |x| (3.0 * x[0]).sin() * x[1] + x[0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for f in [
            EnergyDensity::p_dirichlet(1.5, 2).unwrap(),
            EnergyDensity::p_dirichlet(3.0, 2).unwrap(),
            EnergyDensity::new(NFunction::double_phase(2.0, 3.0, "x1", 2).unwrap())
                .with_lower(NFunction::power(1.5, 2).unwrap()),
        ] {
            let dir = GridFunction::from_fn(d.clone(), |_| rng.gen_range(-1.0..1.0)).unwrap();
            let dir = GridFunction::new(
                d.clone(),
                dir.values().iter().enumerate().map(|(i, v)| if d.is_boundary(i) { 0.0 } else { *v }).collect(),
            )
            .unwrap();
            let an = energy_directional_derivative(&f, &u, &dir).unwrap();
            let h = 1e-5;
            let ep = energy_regularized(&f, &u.axpy(h, &dir).unwrap(), None).unwrap();
            let em = energy_regularized(&f, &u.axpy(-h, &dir).unwrap(), None).unwrap();
            assert_relative_eq!(an, (ep - em) / (2.0 * h), max_relative = 1e-5);
        }
    }

    #[test]
    fn optimal_init_returns_immediately() {
        let d = square(9);
        let bd = BoundaryData::expression("2*x1 - x2", 2).unwrap();
        let init = GridFunction::from_fn(d, |x| 2.0 * x[0] - x[1]).unwrap();
        let f = EnergyDensity::p_dirichlet(2.0, 2).unwrap();
        let out = minimize(&f, &bd, &init, &SolverOptions::default()).unwrap();
        assert!(out.converged);
        assert!(out.iterations <= 1);
        assert_eq!(out.solution, init);
    }

    #[test]
    fn affine_section_problem() {
        let d = DomainSpec::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![33, 3]).unwrap();
        let bd = BoundaryData::expression("x1", 2).unwrap();
        for p in [1.5, 2.0, 3.0] {
            let f = EnergyDensity::p_dirichlet(p, 2).unwrap();
            let init = bd.with_interior(&d, 0.0).unwrap();
            let out = minimize(&f, &bd, &init, &SolverOptions { tol: 1e-10, max_iter: 5000 }).unwrap();
            assert!(out.converged, "p = {p}");
            let exact = GridFunction::from_fn(d.clone(), |x| x[0]).unwrap();
            assert!(out.solution.max_abs_diff(&exact).unwrap() < 1e-8);
            assert!(out.log.windows(2).all(|w| w[1].energy <= w[0].energy + 1e-14));
        }
    }

    #[test]
    fn rejects_inconsistent_init_and_boundary_test_functions() {
        let d = square(5);
        let bd = BoundaryData::expression("x1", 2).unwrap();
        let f = EnergyDensity::p_dirichlet(2.0, 2).unwrap();
        assert!(matches!(
            minimize(&f, &bd, &GridFunction::zeros(d.clone()), &SolverOptions::default()),
            Err(Error::Contract(_))
        ));
        let pair = WeakFormPair::gradient_of(&f, WeakConstants { a0: 2.0, a1: 2.0, a2: 0.0, b: 0.0, c: 0.0 });
        let u = GridFunction::zeros(d.clone());
        assert!(weak_residual(&pair, &u, &GridFunction::constant(d, 1.0)).is_err());
    }

    #[test]
    fn summation_by_parts_on_affine() {
        let d = square(17);
        let u = GridFunction::from_fn(d.clone(), |x| x[0]).unwrap();
        let pair = WeakFormPair::custom(
            &["2*z1", "2*z2"],
            "0",
            2,
            WeakConstants { a0: 2.0, a1: 2.0, a2: 0.0, b: 0.0, c: 0.0 },
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let (v, _, _) = random_bump(&d, &mut rng, 1.0);
            assert!(weak_residual(&pair, &u, &v).unwrap().abs() < 1e-13);
        }
        assert_eq!(weak_residual(&pair, &u, &GridFunction::zeros(d)).unwrap(), 0.0);
    }

    #[test]
    fn sandwich_examples() {
        let s = GrowthSamples::default();
        // f = A(|z|): saturated for the Euclidean norm
        let f = EnergyDensity::p_dirichlet(2.0, 2).unwrap();
        let r = growth_sandwich_check(&f, &s).unwrap();
        let l2 = r.iter().find(|v| v.norm == GradientNorm::L2).unwrap();
        assert!(l2.lower.pass && l2.upper.pass);
        assert!(l2.lower.margin.abs() < 1e-12);
        // with sum |z_i| the plain p-norm density fails the lower bound
        let l1 = r.iter().find(|v| v.norm == GradientNorm::L1).unwrap();
        assert!(l1.upper.pass && !l1.lower.pass);
        // n^{p/2} |z|^p sits between (sum|z_i|)^p and n^{p/2} (sum|z_i|)^p
        let p = 3.0;
        let k = 2f64.powf(p / 2.0);
        let f = EnergyDensity::p_dirichlet(p, 2).unwrap().with_scale(k).unwrap().with_sandwich(k, 0.0).unwrap();
        let r = growth_sandwich_check(&f, &s).unwrap();
        let l1 = r.iter().find(|v| v.norm == GradientNorm::L1).unwrap();
        assert!(l1.lower.pass && l1.upper.pass, "{l1:?}");
    }

    #[test]
    fn weak_growth_power_constants() {
        let p = 3.0;
        let a = NFunction::power(p, 2).unwrap();
        let b = NFunction::power(1.5, 2).unwrap();
        let pair = WeakFormPair::custom(
            &["3*(z1^2+z2^2)^0.5*z1", "3*(z1^2+z2^2)^0.5*z2"],
            "0",
            2,
            WeakConstants { a0: p, a1: 1.0001 * (p - 1.0f64).powf((p - 1.0) / p), a2: 1.0, b: 0.0, c: 0.0 },
        )
        .unwrap();
        let r = weak_growth_check(&pair, &a, &b, &GrowthSamples::default()).unwrap();
        assert!(r.coercivity.pass && r.coercivity.margin.abs() < 1e-9);
        assert_relative_eq!(r.a0_max, p, max_relative = 1e-9);
        assert_relative_eq!(r.a1_min, (p - 1.0f64).powf((p - 1.0) / p), max_relative = 1e-6);
        assert!(r.l_bound.pass);
        assert!(r.f_bound.pass);
        assert_eq!(r.a2_min, 0.0);
    }
}
