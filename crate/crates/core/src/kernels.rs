//! The exact memory-kernel equation for the projected evolution.
//!
//! With `X = X^λ`, `U = U^λ` and `W = W^λ`,
//!
//! ```text
//! W_t = X_t + λ² ∫_0^t ds ∫_0^s du X_{t-s} A01 U_{s-u} A10 W_u.
//! ```
//!
//! In the rescaled interaction picture `f(τ) = X_{-λ⁻²τ} W_{λ⁻²τ} b` this is
//! the Volterra equation `f = b + H f` with
//! `(H g)(τ) = ∫_0^τ dσ X_{-λ⁻²σ} K(λ, τ-σ) X_{λ⁻²σ} g(σ)` and
//! `K(λ, τ) = ∫_0^{λ⁻²τ} X_{-x} A01 U_x A10 dx`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{QuadScheme, QuadratureConfig, SystemModel};
use crate::opalg::{Operator, C64};
use crate::propagate::Dynamics;
use crate::quadrature::{
    integrate_1d, integrate_ordered_2d, integrate_triangle_with, uniform_weights, Panelization, Triangle,
    TriangleRule,
};

/// Cap on fixed-point sweeps in [`volterra_solve`].
pub const VOLTERRA_MAX_ITER: usize = 200;

fn require_coupling(m: &SystemModel) -> Result<()> {
    if m.lambda == 0.0 {
        Err(Error::CouplingZero)
    } else {
        Ok(())
    }
}

fn panel_nodes(qc: &QuadratureConfig) -> usize {
    match qc.quad_scheme {
        QuadScheme::CompositeSimpson => 3,
        QuadScheme::GaussLegendrePanels => qc.gl_nodes,
    }
}

/// Node spacing (in unrescaled time) for integrands built from the groups of `d`.
fn time_step(d: &Dynamics, qc: &QuadratureConfig) -> f64 {
    qc.step(1.0, d.memory_bandwidth())
}

/// `X_{-x} A01 U_x A10` on range(P0).
fn kernel_integrand(d: &Dynamics, x: f64) -> DMatrix<C64> {
    d.reduced(-x) * d.memory(x)
}

/// `K(λ, τ) = ∫_0^{λ⁻²τ} X^λ_{-x} A01 U^λ_x A10 dx` on range(P0).
pub fn memory_kernel(m: &SystemModel, tau: f64, qc: &QuadratureConfig) -> Result<Operator> {
    require_coupling(m)?;
    if !(tau >= 0.0) {
        return Err(Error::InvalidArgument(format!("tau must be >= 0, got {tau}")));
    }
    let d = Dynamics::new(m);
    if tau == 0.0 {
        return Ok(Operator::zeros(m.n0));
    }
    let upper = tau / (m.lambda * m.lambda);
    let p = Panelization::with_step(0.0, upper, time_step(&d, qc), qc.quad_scheme, panel_nodes(qc))?;
    integrate_1d(|x| kernel_integrand(&d, x), &p).map(Operator::from_square)
}

/// Grid solution of `f = b + H f`.
#[derive(Clone, Debug)]
pub struct VolterraSolution {
    pub lambda: f64,
    /// Uniform τ-grid starting at 0.
    pub tau: Vec<f64>,
    /// `f(τ_k)`, each of the shape of `b`.
    pub values: Vec<DMatrix<C64>>,
    /// Sup-norm change of each fixed-point sweep.
    pub increments: Vec<f64>,
}

impl VolterraSolution {
    pub fn step(&self) -> f64 {
        if self.tau.len() > 1 {
            self.tau[1] - self.tau[0]
        } else {
            0.0
        }
    }

    pub fn iterations(&self) -> usize {
        self.increments.len()
    }

    /// Linear interpolation between grid values.
    pub fn at(&self, tau: f64) -> DMatrix<C64> {
        let n = self.tau.len();
        if n == 1 || tau <= 0.0 {
            return self.values[0].clone();
        }
        let h = self.step();
        let pos = (tau / h).min((n - 1) as f64);
        let k = (pos.floor() as usize).min(n - 2);
        let frac = pos - k as f64;
        &self.values[k] * C64::new(1.0 - frac, 0.0) + &self.values[k + 1] * C64::new(frac, 0.0)
    }

    /// `X^λ_{λ⁻²τ_k} f(τ_k)`, the Schrödinger-picture value `W^λ_{λ⁻²τ_k} b`.
    pub fn schrodinger(&self, d: &Dynamics, k: usize) -> DMatrix<C64> {
        let t = self.tau[k] / (self.lambda * self.lambda);
        d.reduced(t) * &self.values[k]
    }
}

/// Solves `f = b + H_λ f` on `[0, tau_bar]` by fixed-point iteration.
///
/// The τ-grid spacing is `λ² · qc.step(1, ν)` with `ν` the frequency spread of
/// the dressed generator; integrals in `H_λ` use composite Simpson weights on
/// that grid (3/8 closing panel on odd interval counts). `b` may be a vector
/// or an `n0 x k` block of vectors.
pub fn volterra_solve(m: &SystemModel, tau_bar: f64, b: &DMatrix<C64>, qc: &QuadratureConfig) -> Result<VolterraSolution> {
    require_coupling(m)?;
    if !(tau_bar > 0.0) || !tau_bar.is_finite() {
        return Err(Error::InvalidArgument(format!("tau_bar must be positive, got {tau_bar}")));
    }
    if b.nrows() != m.n0 {
        return Err(Error::InvalidArgument(format!(
            "right-hand side has {} rows, expected n0 = {}",
            b.nrows(),
            m.n0
        )));
    }
    let d = Dynamics::new(m);
    let lam2 = m.lambda * m.lambda;
    let h_t = time_step(&d, qc);
    let steps = (tau_bar / (lam2 * h_t)).ceil().max(2.0) as usize;
    let h = tau_bar / steps as f64;
    let n = steps + 1;
    let tau: Vec<f64> = (0..n).map(|k| k as f64 * h).collect();

    // Cumulative K(λ, nh).
    let sub = Panelization::uniform(0.0, 1.0, 1, qc.quad_scheme, panel_nodes(qc))?;
    let mut kern = Vec::with_capacity(n);
    kern.push(DMatrix::<C64>::zeros(m.n0, m.n0));
    for j in 1..n {
        let (lo, hi) = (tau[j - 1] / lam2, tau[j] / lam2);
        let p = Panelization { intervals: vec![(lo, hi)], ..sub.clone() };
        let inc: DMatrix<C64> = integrate_1d(|x| kernel_integrand(&d, x), &p)?;
        let next = &kern[j - 1] + inc;
        kern.push(next);
    }
    let x_minus: Vec<DMatrix<C64>> = tau.iter().map(|s| d.reduced(-s / lam2)).collect();
    let x_plus: Vec<DMatrix<C64>> = tau.iter().map(|s| d.reduced(s / lam2)).collect();

    let mut f: Vec<DMatrix<C64>> = vec![b.clone(); n];
    let mut increments = Vec::new();
    loop {
        // Right-conjugated samples g_j = X_{λ⁻²σ_j} f(σ_j).
        let g: Vec<DMatrix<C64>> = x_plus.iter().zip(&f).map(|(x, v)| x * v).collect();
        let mut next = Vec::with_capacity(n);
        let mut incr: f64 = 0.0;
        for k in 0..n {
            let w = uniform_weights(k + 1, h);
            let mut acc = DMatrix::<C64>::zeros(b.nrows(), b.ncols());
            for j in 0..=k {
                if w[j] == 0.0 {
                    continue;
                }
                let term = &x_minus[j] * (&kern[k - j] * &g[j]);
                acc += term * C64::new(w[j], 0.0);
            }
            let val = b + acc;
            incr = incr.max(crate::opalg::spectral_norm(&(&val - &f[k])));
            next.push(val);
        }
        if !incr.is_finite() {
            return Err(Error::VolterraDivergence { iterations: increments.len() + 1, increment: incr });
        }
        f = next;
        increments.push(incr);
        if incr <= qc.volterra_tol {
            break;
        }
        if increments.len() >= VOLTERRA_MAX_ITER {
            return Err(Error::VolterraDivergence { iterations: increments.len(), increment: incr });
        }
    }
    Ok(VolterraSolution { lambda: m.lambda, tau, values: f, increments })
}

/// `λ² ∫_0^t ds ∫_0^s du X_{t-s} A01 U_{s-u} A10 W_u` on range(P0), with `w`
/// giving `W_u`.
pub fn second_order_term_su<W>(m: &SystemModel, t: f64, qc: &QuadratureConfig, w: W) -> Result<Operator>
where
    W: Fn(f64) -> DMatrix<C64> + Sync,
{
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("t must be >= 0, got {t}")));
    }
    let d = Dynamics::new(m);
    second_order_su_with(&d, t, time_step(&d, qc), qc, &w)
}

pub(crate) fn second_order_su_with<W>(d: &Dynamics, t: f64, step: f64, qc: &QuadratureConfig, w: &W) -> Result<Operator>
where
    W: Fn(f64) -> DMatrix<C64> + Sync,
{
    let n0 = d.n0();
    if t == 0.0 {
        return Ok(Operator::zeros(n0));
    }
    let p = Panelization::with_step(0.0, t, step, qc.quad_scheme, panel_nodes(qc))?;
    let val: DMatrix<C64> = integrate_ordered_2d(|s, u| d.reduced(t - s) * d.memory(s - u) * w(u), &p)?;
    let lam2 = d.lambda() * d.lambda();
    Ok(Operator::from_square(val * C64::new(lam2, 0.0)))
}

/// Triangle in the `(σ, x)` plane carrying the second-order term after the
/// substitution `s = λ⁻²σ - q + (α+½)x`, `u = λ⁻²σ - q + (α-½)x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TriangleDomain {
    pub lambda: f64,
    pub tau: f64,
    pub alpha: f64,
    pub q: f64,
    /// Intersect with the strip `0 <= σ <= τ`, `x >= 0`.
    pub truncated: bool,
}

impl TriangleDomain {
    pub fn new(lambda: f64, tau: f64, alpha: f64, q: f64) -> Self {
        Self { lambda, tau, alpha, q, truncated: false }
    }

    pub fn truncated(self) -> Self {
        Self { truncated: true, ..self }
    }

    /// `(λ²q, 0)`, `(τ + λ²q, 0)`, `((½-α)τ + λ²q, λ⁻²τ)`.
    pub fn vertices(&self) -> [(f64, f64); 3] {
        let l2 = self.lambda * self.lambda;
        let shift = l2 * self.q;
        [
            (shift, 0.0),
            (self.tau + shift, 0.0),
            ((0.5 - self.alpha) * self.tau + shift, self.tau / l2),
        ]
    }

    pub fn triangle(&self) -> Triangle {
        let [a, b, c] = self.vertices();
        Triangle::new(a, b, c)
    }

    pub fn area(&self) -> f64 {
        0.5 * self.tau * self.tau / (self.lambda * self.lambda)
    }
}

/// Closed membership test: `x >= 0`, `u >= 0` and `s <= λ⁻²τ` in the
/// substituted variables, plus `0 <= σ <= τ` when truncated.
pub fn domain_contains(d: &TriangleDomain, sigma: f64, x: f64) -> bool {
    let l2 = d.lambda * d.lambda;
    let lower = l2 * d.q - l2 * (d.alpha - 0.5) * x;
    let upper = d.tau + l2 * d.q - l2 * (d.alpha + 0.5) * x;
    let inside = x >= 0.0 && sigma >= lower && sigma <= upper;
    if d.truncated {
        inside && sigma >= 0.0 && sigma <= d.tau
    } else {
        inside
    }
}

/// The second-order term computed over [`TriangleDomain`].
///
/// The integrand is evaluated in the interaction picture,
/// `X_{-s} A01 U_x A10 X_u · W^i(λ²u)` with `W^i(σ') = X_{-λ⁻²σ'} W_{λ⁻²σ'}`,
/// and the result is mapped back by `X_{λ⁻²τ}` so that it is directly
/// comparable with [`second_order_term_su`] at `t = λ⁻²τ`. The `λ⁻²` Jacobian
/// of the substitution cancels the `λ²` prefactor. Inside the triangle the
/// argument `λ²u` is never negative.
pub fn second_order_term_triangle<W>(
    m: &SystemModel,
    tau: f64,
    alpha: f64,
    q: f64,
    qc: &QuadratureConfig,
    w: W,
) -> Result<Operator>
where
    W: Fn(f64) -> DMatrix<C64> + Sync,
{
    require_coupling(m)?;
    if !(tau >= 0.0) {
        return Err(Error::InvalidArgument(format!("tau must be >= 0, got {tau}")));
    }
    let d = Dynamics::new(m);
    let rule = triangle_rule(&d, m.lambda, tau, qc);
    second_order_triangle_with(&d, tau, alpha, q, &rule, &w)
}

pub(crate) fn triangle_rule(d: &Dynamics, lambda: f64, tau: f64, qc: &QuadratureConfig) -> TriangleRule {
    let npp = qc.gl_nodes;
    let len = tau / (lambda * lambda);
    let panels = (len / (time_step(d, qc) * npp as f64)).ceil().max(1.0) as usize;
    TriangleRule { panels_a: panels, panels_b: panels, nodes_per_panel: npp }
}

pub(crate) fn second_order_triangle_with<W>(
    d: &Dynamics,
    tau: f64,
    alpha: f64,
    q: f64,
    rule: &TriangleRule,
    w: &W,
) -> Result<Operator>
where
    W: Fn(f64) -> DMatrix<C64> + Sync,
{
    let lam = d.lambda();
    let l2 = lam * lam;
    let dom = TriangleDomain::new(lam, tau, alpha, q);
    let integrand = |sigma: f64, x: f64| {
        let base = sigma / l2 - q;
        let s = base + (alpha + 0.5) * x;
        let u = base + (alpha - 0.5) * x;
        let wi = d.reduced(-u) * w(u);
        d.reduced(-s) * d.memory(x) * d.reduced(u) * wi
    };
    let val: Option<DMatrix<C64>> = integrate_triangle_with(integrand, &dom.triangle(), rule)?;
    Ok(match val {
        Some(v) => Operator::from_square(d.reduced(tau / l2) * v),
        None => Operator::zeros(d.n0()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_random_model;
    use crate::opalg::spectral_norm;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model(lambda: f64) -> SystemModel {
        build_random_model(7, 2, 8, 1.0, 1.0).unwrap().with_lambda(lambda).unwrap()
    }

    fn identity(n: usize) -> DMatrix<C64> {
        DMatrix::identity(n, n)
    }

    #[test]
    fn memory_kernel_trivial_cases() {
        let qc = QuadratureConfig::default();
        let m = model(0.3);
        assert_eq!(memory_kernel(&m, 0.0, &qc).unwrap(), Operator::zeros(2));
        assert_eq!(memory_kernel(&m.decoupled(), 0.2, &qc).unwrap().max_abs(), 0.0);
        assert!(matches!(memory_kernel(&model(0.0), 0.2, &qc), Err(Error::CouplingZero)));
    }

    #[test]
    fn memory_kernel_self_convergence() {
        let qc = QuadratureConfig::default();
        let m = model(0.3);
        let a = memory_kernel(&m, 0.4, &qc).unwrap();
        let b = memory_kernel(&m, 0.4, &qc.refined()).unwrap();
        assert!(spectral_norm(&(a.matrix() - b.matrix())) <= 1e-8);
    }

    #[test]
    fn volterra_trivial_cases() {
        let qc = QuadratureConfig::default();
        let m = model(0.3);
        let b = DMatrix::from_column_slice(2, 1, &[C64::new(1.0, 0.0), C64::new(0.0, -1.0)]);
        let dec = volterra_solve(&m.decoupled(), 0.3, &b, &qc).unwrap();
        assert!(dec.values.iter().all(|v| v == &b));
        let zero = volterra_solve(&m, 0.3, &DMatrix::zeros(2, 1), &qc).unwrap();
        assert!(zero.values.iter().all(|v| v.iter().all(|z| z.norm() == 0.0)));
    }

    #[test]
    fn volterra_matches_exact_projection() {
        let qc = QuadratureConfig::default();
        let m = model(0.3);
        let sol = volterra_solve(&m, 0.5, &identity(2), &qc).unwrap();
        let d = Dynamics::new(&m);
        let mut worst: f64 = 0.0;
        for k in 0..sol.tau.len() {
            let w = d.projected(sol.tau[k] / 0.09);
            worst = worst.max(spectral_norm(&(sol.schrodinger(&d, k) - w)));
        }
        assert!(worst <= 1e-6, "worst {worst}");
        // Increments shrink at least geometrically once the iteration settles.
        let inc = &sol.increments;
        assert!(inc.len() >= 3);
        for w in inc[2..].windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn su_term_trivial_cases() {
        let qc = QuadratureConfig::default();
        let m = model(0.4);
        let zero = |_u: f64| DMatrix::<C64>::zeros(2, 2);
        assert_eq!(second_order_term_su(&m, 1.0, &qc, zero).unwrap().max_abs(), 0.0);
        assert_eq!(second_order_term_su(&m, 0.0, &qc, |_u| identity(2)).unwrap(), Operator::zeros(2));
    }

    #[test]
    fn exact_equation_residual() {
        let qc = QuadratureConfig::default();
        let m = model(0.4);
        let d = Dynamics::new(&m);
        for t in [0.7, 2.5] {
            let term = second_order_term_su(&m, t, &qc, |u| d.projected(u)).unwrap();
            let resid = d.projected(t) - d.reduced(t) - term.matrix();
            assert!(spectral_norm(&resid) < 1e-9, "t={t}");
        }
    }

    #[test]
    fn triangle_matches_su() {
        let qc = QuadratureConfig::default();
        let m = model(0.4);
        let d = Dynamics::new(&m);
        let tau = 0.4;
        let su = second_order_term_su(&m, tau / 0.16, &qc, |u| d.projected(u)).unwrap();
        for (alpha, q) in [(-1.0, 0.3), (0.5, 0.0), (0.0, -0.5)] {
            let tri = second_order_term_triangle(&m, tau, alpha, q, &qc, |u| d.projected(u)).unwrap();
            assert!(spectral_norm(&(tri.matrix() - su.matrix())) <= 1e-6, "({alpha}, {q})");
        }
        let zero = second_order_term_triangle(&m, tau, 0.2, 0.1, &qc, |_u| DMatrix::zeros(2, 2)).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
    }

    #[test]
    fn davies_parameterization_at_half() {
        // At α = ½, q = 0 the substitution is s = λ⁻²σ, u = s - x.
        let dom = TriangleDomain::new(0.4, 0.4, 0.5, 0.0);
        let [a, b, c] = dom.vertices();
        assert_eq!(a, (0.0, 0.0));
        assert_eq!(b, (0.4, 0.0));
        assert_eq!(c.0, 0.0);
        let l2 = 0.16;
        for (sigma, x) in [(0.1f64, 0.3f64), (0.35, 0.1)] {
            let s: f64 = sigma / l2 + (0.5 + 0.5) * x;
            assert!((s - (sigma / l2 + x)).abs() < 1e-15);
            let u: f64 = sigma / l2 + (0.5 - 0.5) * x;
            assert!((u - sigma / l2).abs() < 1e-15);
        }
    }

    #[test]
    fn domain_membership() {
        let dom = TriangleDomain::new(0.4, 0.4, -1.0, 0.3);
        let [v0, v1, _] = dom.vertices();
        assert!(domain_contains(&dom, v0.0, v0.1));
        assert!(domain_contains(&dom, v1.0, v1.1));
        assert!(!domain_contains(&dom.truncated(), 0.1, -0.01));
        assert!(!domain_contains(&dom, 0.1, -0.01));
        let centroid = dom.vertices().iter().fold((0.0, 0.0), |acc, v| (acc.0 + v.0 / 3.0, acc.1 + v.1 / 3.0));
        assert!(domain_contains(&dom, centroid.0, centroid.1));
    }

    #[test]
    fn domain_monte_carlo_area() {
        let dom = TriangleDomain::new(0.4, 0.4, -1.0, 0.3);
        let vs = dom.vertices();
        let (xlo, xhi) = vs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, v| (a.0.min(v.0), a.1.max(v.0)));
        let yhi = dom.tau / 0.16;
        let box_area = (xhi - xlo) * yhi;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 400_000;
        let hits = (0..n)
            .filter(|_| {
                let s = xlo + (xhi - xlo) * rng.random::<f64>();
                let x = yhi * rng.random::<f64>();
                domain_contains(&dom, s, x)
            })
            .count();
        let p = hits as f64 / n as f64;
        let est = p * box_area;
        let sigma = box_area * (p * (1.0 - p) / n as f64).sqrt();
        assert!((est - dom.area()).abs() <= 4.0 * sigma, "est {est} area {}", dom.area());
        assert!((dom.triangle().area() - dom.area()).abs() < 1e-12);
    }

    #[test]
    fn triangle_argument_stays_nonnegative() {
        // λ²u = σ - λ²q + λ²(α-½)x is >= 0 on the whole closed triangle.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..2000 {
            let alpha = -1.0 + 2.0 * rng.random::<f64>();
            let q = -0.5 + rng.random::<f64>();
            let dom = TriangleDomain::new(0.4, 0.4, alpha, q);
            let tri = dom.triangle();
            let (a, b): (f64, f64) = (rng.random(), rng.random());
            let [v0, v1, v2] = tri.vertices;
            let sigma = v0.0 + a * (v1.0 - v0.0) + a * b * (v2.0 - v1.0);
            let x = v0.1 + a * (v1.1 - v0.1) + a * b * (v2.1 - v1.1);
            let l2 = 0.16;
            let arg = sigma - l2 * q + l2 * (alpha - 0.5) * x;
            assert!(arg >= -1e-12, "arg {arg}");
        }
    }
}
