//! Composite quadrature for operator-valued integrands.
//!
//! Every rule first fixes an ordered list of nodes and weights, evaluates the
//! integrand (in parallel, chunk by chunk) and then accumulates the weighted
//! values strictly left to right, so results are bitwise reproducible
//! regardless of the thread count.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{QuadScheme, QuadratureConfig};
use crate::opalg::{Operator, C64};

/// Values that can be summed with real weights.
pub trait Accumulate: Sized {
    fn zero_like(&self) -> Self;
    fn axpy(&mut self, w: f64, x: &Self);
    fn all_finite(&self) -> bool;
}

impl Accumulate for f64 {
    fn zero_like(&self) -> Self {
        0.0
    }
    fn axpy(&mut self, w: f64, x: &Self) {
        *self += w * x;
    }
    fn all_finite(&self) -> bool {
        self.is_finite()
    }
}

impl Accumulate for C64 {
    fn zero_like(&self) -> Self {
        C64::new(0.0, 0.0)
    }
    fn axpy(&mut self, w: f64, x: &Self) {
        *self += x * w;
    }
    fn all_finite(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

impl Accumulate for DMatrix<C64> {
    fn zero_like(&self) -> Self {
        DMatrix::zeros(self.nrows(), self.ncols())
    }
    fn axpy(&mut self, w: f64, x: &Self) {
        self.zip_apply(x, |a, b| *a += b * w);
    }
    fn all_finite(&self) -> bool {
        self.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl Accumulate for DVector<C64> {
    fn zero_like(&self) -> Self {
        DVector::zeros(self.len())
    }
    fn axpy(&mut self, w: f64, x: &Self) {
        self.zip_apply(x, |a, b| *a += b * w);
    }
    fn all_finite(&self) -> bool {
        self.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl Accumulate for Operator {
    fn zero_like(&self) -> Self {
        Operator::zeros(self.dim())
    }
    fn axpy(&mut self, w: f64, x: &Self) {
        let mut m = std::mem::replace(self, Operator::zeros(0)).into_matrix();
        m.axpy(w, x.matrix());
        *self = Operator::from_square(m);
    }
    fn all_finite(&self) -> bool {
        self.is_finite()
    }
}

impl<A: Accumulate, B: Accumulate> Accumulate for (A, B) {
    fn zero_like(&self) -> Self {
        (self.0.zero_like(), self.1.zero_like())
    }
    fn axpy(&mut self, w: f64, x: &Self) {
        self.0.axpy(w, &x.0);
        self.1.axpy(w, &x.1);
    }
    fn all_finite(&self) -> bool {
        self.0.all_finite() && self.1.all_finite()
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n.
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        dp = if d != 0.0 { d } else { dp };
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Ordered, non-overlapping panels with a per-panel rule.
#[derive(Clone, Debug, PartialEq)]
pub struct Panelization {
    pub intervals: Vec<(f64, f64)>,
    pub nodes_per_panel: usize,
    pub scheme: QuadScheme,
}

impl Panelization {
    /// `panels` equal panels on `[lo, hi]`. Simpson panels must carry an odd
    /// node count of at least 3.
    pub fn uniform(lo: f64, hi: f64, panels: usize, scheme: QuadScheme, nodes_per_panel: usize) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() || hi < lo {
            return Err(Error::InvalidArgument(format!("invalid interval [{lo}, {hi}]")));
        }
        match scheme {
            QuadScheme::CompositeSimpson if nodes_per_panel < 3 || nodes_per_panel % 2 == 0 => {
                return Err(Error::InvalidArgument(format!(
                    "Simpson panels need an odd node count >= 3, got {nodes_per_panel}"
                )));
            }
            QuadScheme::GaussLegendrePanels if nodes_per_panel == 0 => {
                return Err(Error::InvalidArgument("Gauss-Legendre panels need nodes".into()));
            }
            _ => {}
        }
        let panels = panels.max(1);
        let width = (hi - lo) / panels as f64;
        let intervals = (0..panels)
            .map(|k| {
                let a = lo + k as f64 * width;
                let b = if k + 1 == panels { hi } else { lo + (k + 1) as f64 * width };
                (a, b)
            })
            .collect();
        Ok(Self { intervals, nodes_per_panel, scheme })
    }

    /// Panels on `[lo, hi]` whose node spacing does not exceed `step`.
    pub fn with_step(lo: f64, hi: f64, step: f64, scheme: QuadScheme, nodes_per_panel: usize) -> Result<Self> {
        if !(step > 0.0) {
            return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
        }
        let per_panel = match scheme {
            QuadScheme::CompositeSimpson => (nodes_per_panel.max(3) - 1) as f64,
            QuadScheme::GaussLegendrePanels => nodes_per_panel.max(1) as f64,
        };
        let panels = ((hi - lo) / (step * per_panel)).ceil().max(1.0) as usize;
        Self::uniform(lo, hi, panels, scheme, nodes_per_panel)
    }

    /// Panelization following a quadrature config: node spacing
    /// `qc.step(t_scale, nu_max)`, panel rule from `qc`.
    pub fn from_config(lo: f64, hi: f64, t_scale: f64, nu_max: f64, qc: &QuadratureConfig) -> Result<Self> {
        let npp = match qc.quad_scheme {
            QuadScheme::CompositeSimpson => 3,
            QuadScheme::GaussLegendrePanels => qc.gl_nodes,
        };
        Self::with_step(lo, hi, qc.step(t_scale, nu_max), qc.quad_scheme, npp)
    }

    pub fn lo(&self) -> f64 {
        self.intervals.first().map_or(0.0, |p| p.0)
    }

    pub fn hi(&self) -> f64 {
        self.intervals.last().map_or(0.0, |p| p.1)
    }

    /// Reference rule on `[0, 1]`.
    fn reference_rule(&self) -> (Vec<f64>, Vec<f64>) {
        reference_rule(self.scheme, self.nodes_per_panel)
    }

    /// All `(node, weight)` pairs in ascending order.
    pub fn nodes(&self) -> Vec<(f64, f64)> {
        let (rx, rw) = self.reference_rule();
        let mut out = Vec::with_capacity(self.intervals.len() * rx.len());
        for &(a, b) in &self.intervals {
            let h = b - a;
            for (x, w) in rx.iter().zip(&rw) {
                out.push((a + h * x, h * w));
            }
        }
        out
    }
}

fn reference_rule(scheme: QuadScheme, n: usize) -> (Vec<f64>, Vec<f64>) {
    match scheme {
        QuadScheme::GaussLegendrePanels => {
            let (x, w) = gauss_legendre(n);
            (
                x.iter().map(|v| 0.5 * (v + 1.0)).collect(),
                w.iter().map(|v| 0.5 * v).collect(),
            )
        }
        QuadScheme::CompositeSimpson => {
            let h = 1.0 / (n - 1) as f64;
            let x = (0..n).map(|k| k as f64 * h).collect();
            (x, uniform_weights(n, h))
        }
    }
}

/// Weights for integrating samples on `n` equispaced points of spacing `h`:
/// composite Simpson, with a closing 3/8 panel when the interval count is odd,
/// trapezoid for two points, zero for one.
pub fn uniform_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![0.0; n];
    match n {
        0 | 1 => {}
        2 => {
            w[0] = 0.5 * h;
            w[1] = 0.5 * h;
        }
        3 => simpson_into(&mut w[..], h),
        _ => {
            let intervals = n - 1;
            if intervals % 2 == 0 {
                simpson_into(&mut w[..], h);
            } else {
                simpson_into(&mut w[..n - 3], h);
                let c = 3.0 * h / 8.0;
                w[n - 4] += c;
                w[n - 3] += 3.0 * c;
                w[n - 2] += 3.0 * c;
                w[n - 1] += c;
            }
        }
    }
    w
}

fn simpson_into(w: &mut [f64], h: f64) {
    let n = w.len();
    if n < 3 {
        if n == 2 {
            w[0] += 0.5 * h;
            w[1] += 0.5 * h;
        }
        return;
    }
    let c = h / 3.0;
    for k in 0..n {
        w[k] += c * if k == 0 || k == n - 1 {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
    }
}

const CHUNK: usize = 64;

/// Evaluates `f` at every point (in parallel, chunked) and accumulates the
/// weighted values in list order.
pub(crate) fn accumulate<P, T, F>(points: &[(P, f64)], node_of: impl Fn(&P) -> f64, f: F) -> Result<T>
where
    P: Sync,
    T: Accumulate + Send,
    F: Fn(&P) -> T + Sync,
{
    let mut acc: Option<T> = None;
    for chunk in points.chunks(CHUNK) {
        let values: Vec<T> = chunk.par_iter().map(|(p, _)| f(p)).collect();
        for ((p, w), v) in chunk.iter().zip(values) {
            if !v.all_finite() {
                return Err(Error::IntegrandBlowup { node: node_of(p) });
            }
            let a = acc.get_or_insert_with(|| v.zero_like());
            a.axpy(*w, &v);
        }
    }
    acc.ok_or_else(|| Error::InvalidArgument("quadrature rule has no nodes".into()))
}

/// `int f(x) dx` over the panelization.
pub fn integrate_1d<T, F>(f: F, p: &Panelization) -> Result<T>
where
    T: Accumulate + Send,
    F: Fn(f64) -> T + Sync,
{
    let nodes = p.nodes();
    accumulate(&nodes, |x| *x, |x| f(*x))
}

/// Triangle given by its vertices in the plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Triangle {
    pub vertices: [(f64, f64); 3],
}

impl Triangle {
    pub fn new(v0: (f64, f64), v1: (f64, f64), v2: (f64, f64)) -> Self {
        Self { vertices: [v0, v1, v2] }
    }

    pub fn area(&self) -> f64 {
        let [a, b, c] = self.vertices;
        0.5 * ((b.0 - a.0) * (c.1 - a.1) - (c.0 - a.0) * (b.1 - a.1)).abs()
    }

    /// Image of `(a, b)` in the unit square under the collapsed map
    /// `v0 + a (v1 - v0) + a b (v2 - v1)`.
    fn map(&self, a: f64, b: f64) -> (f64, f64) {
        let [v0, v1, v2] = self.vertices;
        (
            v0.0 + a * (v1.0 - v0.0) + a * b * (v2.0 - v1.0),
            v0.1 + a * (v1.1 - v0.1) + a * b * (v2.1 - v1.1),
        )
    }
}

/// Integration rule on a triangle: Gauss-Legendre panels along both reference
/// axes of the collapsed map.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TriangleRule {
    pub panels_a: usize,
    pub panels_b: usize,
    pub nodes_per_panel: usize,
}

impl TriangleRule {
    pub fn square(density: usize) -> Self {
        Self { panels_a: density.max(1), panels_b: density.max(1), nodes_per_panel: 8 }
    }

    pub fn refined(&self) -> Self {
        Self { panels_a: 2 * self.panels_a, panels_b: 2 * self.panels_b, ..*self }
    }

    /// `((x, y), weight)` points in fixed order; empty for a degenerate triangle.
    pub fn points(&self, tri: &Triangle) -> Vec<((f64, f64), f64)> {
        let area = tri.area();
        if area == 0.0 || !area.is_finite() {
            return Vec::new();
        }
        let pa = Panelization::uniform(0.0, 1.0, self.panels_a, QuadScheme::GaussLegendrePanels, self.nodes_per_panel)
            .expect("unit interval");
        let pb = Panelization::uniform(0.0, 1.0, self.panels_b, QuadScheme::GaussLegendrePanels, self.nodes_per_panel)
            .expect("unit interval");
        let na = pa.nodes();
        let nb = pb.nodes();
        let mut out = Vec::with_capacity(na.len() * nb.len());
        for &(a, wa) in &na {
            for &(b, wb) in &nb {
                out.push((tri.map(a, b), 2.0 * area * a * wa * wb));
            }
        }
        out
    }
}

/// `∬_tri f(x, y) dx dy` with `density` panels per reference axis.
/// A degenerate (zero-area) triangle integrates to zero.
pub fn integrate_triangle<T, F>(f: F, tri: &Triangle, density: usize) -> Result<Option<T>>
where
    T: Accumulate + Send,
    F: Fn(f64, f64) -> T + Sync,
{
    integrate_triangle_with(f, tri, &TriangleRule::square(density))
}

/// As [`integrate_triangle`] with an explicit rule. Returns `None` when the
/// triangle is degenerate, since no integrand value is available to shape a
/// zero.
pub fn integrate_triangle_with<T, F>(f: F, tri: &Triangle, rule: &TriangleRule) -> Result<Option<T>>
where
    T: Accumulate + Send,
    F: Fn(f64, f64) -> T + Sync,
{
    let pts = rule.points(tri);
    if pts.is_empty() {
        return Ok(None);
    }
    accumulate(&pts, |p| p.0, |p| f(p.0, p.1)).map(Some)
}

/// `∫_lo^hi dt1 ∫_lo^t1 dt2 f(t1, t2)`.
///
/// The outer variable uses the nodes of `p`. For each outer node the inner
/// integral runs over the complete panels below it and the rule mapped onto
/// the partial panel containing it.
pub fn integrate_ordered_2d<T, F>(f: F, p: &Panelization) -> Result<T>
where
    T: Accumulate + Send,
    F: Fn(f64, f64) -> T + Sync,
{
    let (rx, rw) = reference_rule(p.scheme, p.nodes_per_panel);
    let mut pts: Vec<((f64, f64), f64)> = Vec::new();
    for (k, &(a, b)) in p.intervals.iter().enumerate() {
        let h = b - a;
        for (x, w) in rx.iter().zip(&rw) {
            let t1 = a + h * x;
            let w1 = h * w;
            for &(c, d) in &p.intervals[..k] {
                let hi = d - c;
                for (y, v) in rx.iter().zip(&rw) {
                    pts.push(((t1, c + hi * y), w1 * hi * v));
                }
            }
            let hp = t1 - a;
            for (y, v) in rx.iter().zip(&rw) {
                pts.push(((t1, a + hp * y), w1 * hp * v));
            }
        }
    }
    accumulate(&pts, |q| q.0, |q| f(q.0, q.1))
}

/// `∫_lo^hi ∫_lo^hi f(t1, t2)` by the tensor rule of `p`.
pub fn integrate_box<T, F>(f: F, p: &Panelization) -> Result<T>
where
    T: Accumulate + Send,
    F: Fn(f64, f64) -> T + Sync,
{
    let nodes = p.nodes();
    let mut pts = Vec::with_capacity(nodes.len() * nodes.len());
    for &(t1, w1) in &nodes {
        for &(t2, w2) in &nodes {
            pts.push(((t1, t2), w1 * w2));
        }
    }
    accumulate(&pts, |q| q.0, |q| f(q.0, q.1))
}

/// Ordered double integral of a product-structured integrand,
/// `∫_lo^hi dt1 ∫_lo^t1 dt2 combine(left(t1), right(t2))`, where `combine` is
/// linear in its second argument.
///
/// Computes the cumulative inner integral of `right` once per outer node, so
/// the cost is linear in the number of nodes instead of quadratic.
pub fn integrate_ordered_bilinear<L, R, T, FL, FR, FC>(left: FL, right: FR, combine: FC, p: &Panelization) -> Result<T>
where
    L: Send,
    R: Accumulate + Send + Sync + Clone,
    T: Accumulate + Send,
    FL: Fn(f64) -> L + Sync,
    FR: Fn(f64) -> R + Sync,
    FC: Fn(&L, &R) -> T + Sync,
{
    let (rx, rw) = reference_rule(p.scheme, p.nodes_per_panel);
    // Inner integrals: complete panels and partial panels per outer node.
    let mut partial_pts: Vec<(f64, f64)> = Vec::new();
    let mut partial_ranges = Vec::new();
    for &(a, b) in &p.intervals {
        let h = b - a;
        for x in &rx {
            let t1 = a + h * x;
            let hp = t1 - a;
            let start = partial_pts.len();
            for (y, v) in rx.iter().zip(&rw) {
                partial_pts.push((a + hp * y, hp * v));
            }
            partial_ranges.push((start, partial_pts.len()));
        }
    }
    let full_panels: Vec<R> = p
        .intervals
        .iter()
        .map(|&(a, b)| {
            let sub = Panelization { intervals: vec![(a, b)], ..p.clone() };
            integrate_1d(&right, &sub)
        })
        .collect::<Result<_>>()?;
    let mut partials: Vec<R> = Vec::with_capacity(partial_ranges.len());
    for &(s, e) in &partial_ranges {
        partials.push(accumulate(&partial_pts[s..e], |x| *x, |x| right(*x))?);
    }
    let nodes = p.nodes();
    let mut running: Option<R> = None;
    let mut inner: Vec<R> = Vec::with_capacity(nodes.len());
    let per = rx.len();
    for (k, full) in full_panels.iter().enumerate() {
        for j in 0..per {
            let mut v = partials[k * per + j].clone();
            if let Some(r) = &running {
                v.axpy(1.0, r);
            }
            inner.push(v);
        }
        match running.as_mut() {
            Some(r) => r.axpy(1.0, full),
            None => running = Some(full.clone()),
        }
    }
    let outer: Vec<((f64, usize), f64)> = nodes
        .iter()
        .enumerate()
        .map(|(i, &(t, w))| ((t, i), w))
        .collect();
    accumulate(&outer, |q| q.0, |q| combine(&left(q.0), &inner[q.1]))
}

/// Ordered double integral `∫∫_{lo <= t_lo <= t_hi <= hi} combine(left(t_hi), right(t_lo))`
/// by the collapsed map `t_hi = lo + L a`, `t_lo = lo + L a b` of the unit
/// square onto the triangle (Jacobian `L² a`), with Gauss-Legendre panels in
/// both `a` and `b`. `combine` must be linear in its second argument.
pub fn integrate_collapsed_bilinear<L, R, T, FL, FR, FC>(
    left: FL,
    right: FR,
    combine: FC,
    lo: f64,
    hi: f64,
    rule: &TriangleRule,
) -> Result<T>
where
    R: Accumulate + Send,
    T: Accumulate + Send,
    FL: Fn(f64) -> L + Sync,
    FR: Fn(f64) -> R + Sync,
    FC: Fn(&L, &R) -> T + Sync,
{
    let len = hi - lo;
    let pa = Panelization::uniform(0.0, 1.0, rule.panels_a, QuadScheme::GaussLegendrePanels, rule.nodes_per_panel)?;
    // The inner segment at `a` has length `L a`, so it needs only a fraction
    // `a` of the panels.
    let inner_rules: Vec<Vec<(f64, f64)>> = (1..=rule.panels_b)
        .map(|k| {
            Panelization::uniform(0.0, 1.0, k, QuadScheme::GaussLegendrePanels, rule.nodes_per_panel).map(|p| p.nodes())
        })
        .collect::<Result<_>>()?;
    let outer: Vec<(f64, f64)> = pa.nodes().into_iter().map(|(a, w)| (a, w * len * len * a)).collect();
    let mut acc: Option<T> = None;
    for chunk in outer.chunks(CHUNK) {
        let values: Vec<Result<T>> = chunk
            .par_iter()
            .map(|&(a, _)| {
                let t_hi = lo + len * a;
                let mut inner: Option<R> = None;
                let k = ((a * rule.panels_b as f64).ceil() as usize).clamp(1, rule.panels_b);
                for &(b, wb) in &inner_rules[k - 1] {
                    let t_lo = lo + len * a * b;
                    let v = right(t_lo);
                    if !v.all_finite() {
                        return Err(Error::IntegrandBlowup { node: t_lo });
                    }
                    inner.get_or_insert_with(|| v.zero_like()).axpy(wb, &v);
                }
                let inner = inner.expect("panel rule has nodes");
                Ok(combine(&left(t_hi), &inner))
            })
            .collect();
        for (&(a, w), v) in chunk.iter().zip(values) {
            let v = v?;
            if !v.all_finite() {
                return Err(Error::IntegrandBlowup { node: lo + len * a });
            }
            acc.get_or_insert_with(|| v.zero_like()).axpy(w, &v);
        }
    }
    acc.ok_or_else(|| Error::InvalidArgument("quadrature rule has no nodes".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const GL: QuadScheme = QuadScheme::GaussLegendrePanels;
    const SIMPSON: QuadScheme = QuadScheme::CompositeSimpson;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in 1..=20 {
            let (x, w) = gauss_legendre(n);
            for deg in 0..2 * n {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "n={n} deg={deg}");
            }
            assert!(x.windows(2).all(|p| p[0] < p[1]));
        }
    }

    #[test]
    fn zero_integrand() {
        let p = Panelization::uniform(0.0, 3.0, 4, GL, 5).unwrap();
        let r: Operator = integrate_1d(|_| Operator::zeros(3), &p).unwrap();
        assert_eq!(r, Operator::zeros(3));
    }

    #[test]
    fn gaussian_integral() {
        for scheme in [GL, SIMPSON] {
            let npp = if scheme == GL { 8 } else { 3 };
            let p = Panelization::with_step(-8.0, 8.0, 1.0 / 64.0, scheme, npp).unwrap();
            let r: Operator = integrate_1d(|x| Operator::identity(2).scale_real((-x * x).exp()), &p).unwrap();
            let expect = std::f64::consts::PI.sqrt();
            assert!((r[(0, 0)].re - expect).abs() < 1e-10, "{scheme:?}");
            assert!((r[(1, 1)].re - expect).abs() < 1e-10);
            assert_eq!(r[(0, 1)], C64::new(0.0, 0.0));
        }
    }

    #[test]
    fn simpson_richardson_ratio() {
        let f = |x: f64| (3.0 * x).sin() * (-x * x / 4.0).exp();
        let run = |panels| {
            let p = Panelization::uniform(0.0, 2.0, panels, SIMPSON, 3).unwrap();
            integrate_1d(f, &p).unwrap()
        };
        let (a, b, c) = (run(8), run(16), run(32));
        let ratio = (a - b).abs() / (b - c).abs();
        assert!(ratio >= 8.0, "ratio {ratio}");
    }

    #[test]
    fn uniform_weights_are_exact_on_cubics() {
        for n in 2..12 {
            let h = 0.3;
            let w = uniform_weights(n, h);
            let len = h * (n - 1) as f64;
            let deg = if n == 2 { 1 } else { 3 };
            let q: f64 = w.iter().enumerate().map(|(k, w)| w * (k as f64 * h).powi(deg)).sum();
            let exact = len.powi(deg + 1) / (deg + 1) as f64;
            assert!((q - exact).abs() < 1e-12, "n={n}");
        }
        assert_eq!(uniform_weights(1, 0.5), vec![0.0]);
    }

    #[test]
    fn blowup_is_reported() {
        let p = Panelization::uniform(-1.0, 1.0, 2, GL, 4).unwrap();
        let r: Result<f64> = integrate_1d(|x| 1.0 / x.max(0.0).min(0.0), &p);
        assert!(matches!(r, Err(Error::IntegrandBlowup { .. })));
    }

    #[test]
    fn triangle_constant_gives_area() {
        let tri = Triangle::new((0.1, 0.0), (1.1, 0.0), (0.3, 2.5));
        let r = integrate_triangle(|_, _| 3.0, &tri, 2).unwrap().unwrap();
        assert!((r - 3.0 * tri.area()).abs() < 1e-13);
        assert!((tri.area() - 1.25).abs() < 1e-15);
        let flat = Triangle::new((0.0, 0.0), (0.0, 0.0), (0.5, 0.0));
        assert!(integrate_triangle(|_, _| 1.0, &flat, 2).unwrap().is_none());
    }

    #[test]
    fn triangle_matches_monte_carlo() {
        let tri = Triangle::new((-0.2, 0.0), (0.8, 0.0), (0.5, 1.5));
        let f = |x: f64, y: f64| (x * 2.0).cos() * (-y).exp() + x * y;
        let q = integrate_triangle(f, &tri, 4).unwrap().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 200_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            // Uniform point on the triangle via reflected barycentric samples.
            let (mut u, mut v): (f64, f64) = (rng.random(), rng.random());
            if u + v > 1.0 {
                u = 1.0 - u;
                v = 1.0 - v;
            }
            let [a, b, c] = tri.vertices;
            let x = a.0 + u * (b.0 - a.0) + v * (c.0 - a.0);
            let y = a.1 + u * (b.1 - a.1) + v * (c.1 - a.1);
            let val = f(x, y) * tri.area();
            s += val;
            s2 += val * val;
        }
        let mean = s / n as f64;
        let sigma = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((q - mean).abs() <= 3.0 * sigma, "q={q} mc={mean} sigma={sigma}");
    }

    #[test]
    fn ordered_partition_identity() {
        let p = Panelization::uniform(-1.0, 2.0, 5, GL, 6).unwrap();
        let f = |a: f64, b: f64| C64::new((a - 2.0 * b).sin(), a * b * b);
        let lower: C64 = integrate_ordered_2d(f, &p).unwrap();
        let upper: C64 = integrate_ordered_2d(|a, b| f(b, a), &p).unwrap();
        let full: C64 = integrate_box(f, &p).unwrap();
        assert!((lower + upper - full).norm() < 1e-12);
    }

    #[test]
    fn ordered_separable_is_half_square() {
        let g = |t: f64| (-t * t).exp() * (1.0 + 0.3 * t);
        let p = Panelization::with_step(-6.0, 6.0, 1.0 / 32.0, GL, 8).unwrap();
        let full: f64 = integrate_1d(g, &p).unwrap();
        let ordered: f64 = integrate_ordered_2d(|a, b| g(a) * g(b), &p).unwrap();
        assert!((ordered - 0.5 * full * full).abs() < 1e-9);
        let fast: f64 = integrate_ordered_bilinear(g, g, |l: &f64, r: &f64| l * r, &p).unwrap();
        assert!((fast - ordered).abs() < 1e-12);
        let rule = TriangleRule { panels_a: 48, panels_b: 48, nodes_per_panel: 8 };
        let collapsed: f64 = integrate_collapsed_bilinear(g, g, |l: &f64, r: &f64| l * r, -6.0, 6.0, &rule).unwrap();
        assert!((collapsed - 0.5 * full * full).abs() < 1e-9);
        let zero: f64 = integrate_ordered_2d(|_, _| 0.0, &p).unwrap();
        assert_eq!(zero, 0.0);
    }

    #[test]
    fn bilinear_matches_generic_on_matrices() {
        let p = Panelization::uniform(0.0, 3.0, 6, GL, 5).unwrap();
        let left = |t: f64| DMatrix::from_fn(2, 3, |r, c| C64::from_polar(1.0, t * (r + c) as f64));
        let right = |t: f64| DMatrix::from_fn(3, 2, |r, c| C64::new((t * r as f64).cos(), c as f64 * t));
        let fast: DMatrix<C64> = integrate_ordered_bilinear(left, right, |l, r| l * r, &p).unwrap();
        let slow: DMatrix<C64> = integrate_ordered_2d(|a, b| left(a) * right(b), &p).unwrap();
        assert!((fast - slow).iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn accumulation_is_deterministic() {
        let p = Panelization::uniform(0.0, 10.0, 300, GL, 8).unwrap();
        let f = |x: f64| DMatrix::from_fn(3, 3, |r, c| C64::from_polar(1.0 / (1.0 + x), x * (r * 3 + c) as f64));
        let a: DMatrix<C64> = integrate_1d(f, &p).unwrap();
        let b: DMatrix<C64> = integrate_1d(f, &p).unwrap();
        assert_eq!(a, b);
    }
}
