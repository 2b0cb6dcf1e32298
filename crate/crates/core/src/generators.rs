//! Markov generators on range(P0) built from the free dynamics `U_t`.
//!
//! All generators are returned as `n0 x n0` operators. Gaussian-weighted
//! integrals are truncated at `R = x_max_factor * T` in every variable, and the
//! neglected Gaussian mass is reported as a tail bound.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{QuadratureConfig, SystemModel};
use crate::opalg::{expm, spectral_norm, spread, Operator, C64};
use crate::quadrature::{
    integrate_1d, integrate_collapsed_bilinear, integrate_ordered_bilinear, Panelization, TriangleRule,
};

/// Route used to evaluate the dynamical average `K_T`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DynAvgForm {
    /// Gaussian `q`-average of `K_(0,q,T) = U_q K_(0,0,T) U_{-q}`.
    #[default]
    QAverage,
    /// `∫ dt1 g(t1) A01(t1) ∫_{-∞}^{t1} dt2 g(t2) A10(t2)`.
    OrderedDouble,
    /// Full-plane integral of the time-ordered product.
    TimeOrdered,
}

impl DynAvgForm {
    pub const ALL: [DynAvgForm; 3] = [DynAvgForm::QAverage, DynAvgForm::OrderedDouble, DynAvgForm::TimeOrdered];

    pub fn name(&self) -> &'static str {
        match self {
            DynAvgForm::QAverage => "q-average",
            DynAvgForm::OrderedDouble => "ordered-double",
            DynAvgForm::TimeOrdered => "time-ordered",
        }
    }
}

impl std::str::FromStr for DynAvgForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "q-average" => Ok(DynAvgForm::QAverage),
            "ordered-double" => Ok(DynAvgForm::OrderedDouble),
            "time-ordered" => Ok(DynAvgForm::TimeOrdered),
            _ => Err(Error::InvalidArgument(format!("unknown dyn-avg form '{s}'"))),
        }
    }
}

/// Which generator to build. `T` may be left out when a transition-time rule
/// supplies it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GeneratorKind {
    Davies {
        x_max: f64,
    },
    Family {
        alpha: f64,
        q: f64,
        #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
        t: Option<f64>,
    },
    #[serde(rename = "dynavg")]
    DynAvg {
        #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
        t: Option<f64>,
        #[serde(default)]
        form: DynAvgForm,
    },
    SpectralAvg {
        base: Box<GeneratorKind>,
        delta_omega: f64,
    },
}

impl GeneratorKind {
    fn validate(&self) -> Result<()> {
        match self {
            GeneratorKind::Davies { x_max } if !(*x_max > 0.0) => {
                Err(Error::InvalidArgument(format!("x_max must be positive, got {x_max}")))
            }
            GeneratorKind::Family { t: Some(t), .. } | GeneratorKind::DynAvg { t: Some(t), .. } if !(*t > 0.0) => {
                Err(Error::InvalidTimescale(*t))
            }
            GeneratorKind::SpectralAvg { base, delta_omega } => {
                if !(*delta_omega >= 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "delta_omega must be >= 0, got {delta_omega}"
                    )));
                }
                base.validate()
            }
            _ => Ok(()),
        }
    }

    /// Timescale fixed by the kind itself, if any.
    pub fn timescale(&self) -> Option<f64> {
        resolved_t(self, None)
    }

    /// `true` when the generator needs a timescale.
    pub fn uses_timescale(&self) -> bool {
        match self {
            GeneratorKind::Davies { .. } => false,
            GeneratorKind::Family { .. } | GeneratorKind::DynAvg { .. } => true,
            GeneratorKind::SpectralAvg { base, .. } => base.uses_timescale(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    #[serde(flatten)]
    pub kind: GeneratorKind,
    #[serde(default)]
    pub qc: QuadratureConfig,
}

impl GeneratorSpec {
    pub fn new(kind: GeneratorKind) -> Self {
        Self { kind, qc: QuadratureConfig::default() }
    }

    pub fn with_qc(mut self, qc: QuadratureConfig) -> Self {
        self.qc = qc;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.qc.validate()?;
        self.kind.validate()
    }
}

/// Free-dynamics data shared by every generator.
struct FreeCoupling {
    w0: Vec<f64>,
    w1: Vec<f64>,
    a01: DMatrix<C64>,
    a10: DMatrix<C64>,
    /// Spread of all free frequencies.
    spread: f64,
    spread0: f64,
}

impl FreeCoupling {
    fn new(m: &SystemModel) -> Self {
        Self {
            w0: m.system_omega().to_vec(),
            w1: m.env_omega().to_vec(),
            a01: m.a_sub(0, 1),
            a10: m.a_sub(1, 0),
            spread: spread(&m.omega),
            spread0: spread(m.system_omega()),
        }
    }

    fn coupling_norm(&self) -> f64 {
        spectral_norm(&self.a01) * spectral_norm(&self.a10)
    }

    /// `A01 U_x A10`.
    fn correlation(&self, x: f64) -> DMatrix<C64> {
        let mut left = self.a01.clone();
        for (mut col, &w) in left.column_iter_mut().zip(&self.w1) {
            col *= C64::from_polar(1.0, w * x);
        }
        left * &self.a10
    }

    /// `U_{l} M U_{r}` for an `n0 x n0` matrix `M`.
    fn sandwich(&self, l: f64, mut m: DMatrix<C64>, r: f64) -> DMatrix<C64> {
        for (i, &wa) in self.w0.iter().enumerate() {
            for (j, &wb) in self.w0.iter().enumerate() {
                m[(i, j)] *= C64::from_polar(1.0, wa * l + wb * r);
            }
        }
        m
    }

    /// `U_{-(α+½)x+q} A01 U_x A10 U_{(α-½)x-q}`.
    fn family_core(&self, alpha: f64, q: f64, x: f64) -> DMatrix<C64> {
        self.sandwich(q - (alpha + 0.5) * x, self.correlation(x), (alpha - 0.5) * x - q)
    }

    /// `c U_{-t} A01 U_t`, an `n0 x n1` block.
    fn a01_at(&self, t: f64, c: f64) -> DMatrix<C64> {
        let p0: Vec<C64> = self.w0.iter().map(|&w| C64::from_polar(c, -w * t)).collect();
        let p1: Vec<C64> = self.w1.iter().map(|&w| C64::from_polar(1.0, w * t)).collect();
        DMatrix::from_fn(self.w0.len(), self.w1.len(), |a, m| self.a01[(a, m)] * p0[a] * p1[m])
    }

    /// `c U_{-t} A10 U_t`, an `n1 x n0` block.
    fn a10_at(&self, t: f64, c: f64) -> DMatrix<C64> {
        let p0: Vec<C64> = self.w0.iter().map(|&w| C64::from_polar(c, w * t)).collect();
        let p1: Vec<C64> = self.w1.iter().map(|&w| C64::from_polar(1.0, -w * t)).collect();
        DMatrix::from_fn(self.w1.len(), self.w0.len(), |m, b| self.a10[(m, b)] * p1[m] * p0[b])
    }
}

fn check_timescale(t: f64) -> Result<()> {
    if t > 0.0 && !t.is_nan() {
        Ok(())
    } else {
        Err(Error::InvalidTimescale(t))
    }
}

/// `∫_{X}^∞ e^{-x²/(4T²)} dx ≤ (2T²/X) e^{-X²/(4T²)}`.
fn half_gaussian_tail(t: f64, x: f64) -> f64 {
    2.0 * t * t / x * (-(x * x) / (4.0 * t * t)).exp()
}

/// Truncated Davies generator `∫_0^{x_max} U_{-x} A01 U_x A10 dx`.
pub fn davies_generator(m: &SystemModel, x_max: f64, qc: &QuadratureConfig) -> Result<Operator> {
    if !(x_max > 0.0) || !x_max.is_finite() {
        return Err(Error::InvalidArgument(format!("x_max must be positive and finite, got {x_max}")));
    }
    family_generator_truncated(m, 0.5, 0.0, f64::INFINITY, x_max, qc)
}

/// Integrand of the family at `x`, including the Gaussian damping;
/// `T = ∞` removes the damping.
pub fn family_integrand(m: &SystemModel, alpha: f64, q: f64, t: f64, x: f64) -> DMatrix<C64> {
    let fc = FreeCoupling::new(m);
    let damp = if t.is_infinite() { 1.0 } else { (-(x / (2.0 * t)).powi(2)).exp() };
    fc.family_core(alpha, q, x) * C64::new(damp, 0.0)
}

/// `K_(α,q,T) = ∫_0^∞ dx e^{-(x/2)²/T²} U_{-(α+½)x+q} A01 U_x A10 U_{(α-½)x-q}`,
/// truncated at `x_max_factor * T`.
pub fn family_generator(m: &SystemModel, alpha: f64, q: f64, t: f64, qc: &QuadratureConfig) -> Result<Operator> {
    check_timescale(t)?;
    if t.is_infinite() {
        return Err(Error::InvalidTimescale(t));
    }
    family_generator_truncated(m, alpha, q, t, qc.x_max_factor * t, qc)
}

/// Family member with an explicit truncation point; `T = ∞` is allowed and
/// yields the undamped integral on `[0, x_max]`.
pub fn family_generator_truncated(
    m: &SystemModel,
    alpha: f64,
    q: f64,
    t: f64,
    x_max: f64,
    qc: &QuadratureConfig,
) -> Result<Operator> {
    check_timescale(t)?;
    let fc = FreeCoupling::new(m);
    let scale = if t.is_finite() { t } else { x_max / qc.x_max_factor };
    let nu = (alpha.abs() + 1.5) * fc.spread;
    let p = Panelization::from_config(0.0, x_max, scale, nu, qc)?;
    let val: DMatrix<C64> = integrate_1d(
        |x| {
            let damp = if t.is_infinite() { 1.0 } else { (-(x / (2.0 * t)).powi(2)).exp() };
            fc.family_core(alpha, q, x) * C64::new(damp, 0.0)
        },
        &p,
    )?;
    Ok(Operator::from_square(val))
}

/// Dynamical average `K_T` by the selected route.
pub fn dyn_avg_generator(m: &SystemModel, t: f64, form: DynAvgForm, qc: &QuadratureConfig) -> Result<Operator> {
    check_timescale(t)?;
    if t.is_infinite() {
        return Err(Error::InvalidTimescale(t));
    }
    let fc = FreeCoupling::new(m);
    let r = qc.x_max_factor * t;
    let norm = 1.0 / (std::f64::consts::PI.sqrt() * t);
    let g = |s: f64| (-(s * s) / (2.0 * t * t)).exp();
    let val = match form {
        DynAvgForm::QAverage => {
            // x = t1 - t2 ranges over [0, 2r] on the square of the other forms.
            let k0 = family_generator_truncated(m, 0.0, 0.0, t, 2.0 * r, qc)?.into_matrix();
            let p = Panelization::from_config(-r, r, t, fc.spread0, qc)?;
            let avg: DMatrix<C64> = integrate_1d(
                |q| fc.sandwich(q, k0.clone(), -q) * C64::new((-(q * q) / (t * t)).exp(), 0.0),
                &p,
            )?;
            avg * C64::new(norm, 0.0)
        }
        DynAvgForm::OrderedDouble => {
            let p = Panelization::from_config(-r, r, t, fc.spread, qc)?;
            let v: DMatrix<C64> = integrate_ordered_bilinear(
                |s| fc.a01_at(s, g(s)),
                |s| fc.a10_at(s, g(s)),
                |l: &DMatrix<C64>, rr: &DMatrix<C64>| l * rr,
                &p,
            )?;
            v * C64::new(norm, 0.0)
        }
        DynAvgForm::TimeOrdered => {
            // The time-ordered integrand depends on (max(t1,t2), min(t1,t2))
            // only, so the two halves of the box carry the same value.
            let rule = collapsed_rule(2.0 * r, t, fc.spread, qc);
            let half: DMatrix<C64> = integrate_collapsed_bilinear(
                |s| fc.a01_at(s, g(s)),
                |s| fc.a10_at(s, g(s)),
                |l: &DMatrix<C64>, rr: &DMatrix<C64>| l * rr,
                -r,
                r,
                &rule,
            )?;
            let lower = half.clone();
            (lower + half) * C64::new(0.5 * norm, 0.0)
        }
    };
    Ok(Operator::from_square(val))
}

fn collapsed_rule(len: f64, t: f64, nu: f64, qc: &QuadratureConfig) -> TriangleRule {
    let npp = qc.gl_nodes;
    let panels = (len / (qc.step(t, nu) * npp as f64)).ceil().max(1.0) as usize;
    TriangleRule { panels_a: panels, panels_b: panels, nodes_per_panel: npp }
}

/// Cluster label for each frequency: sorted frequencies whose consecutive
/// gaps are `<= delta_omega` share a label (single linkage).
pub fn spectral_clusters(freqs: &[f64], delta_omega: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..freqs.len()).collect();
    order.sort_by(|&a, &b| freqs[a].total_cmp(&freqs[b]));
    let mut labels = vec![0; freqs.len()];
    let mut label = 0;
    for (k, &idx) in order.iter().enumerate() {
        if k > 0 && freqs[idx] - freqs[order[k - 1]] > delta_omega {
            label += 1;
        }
        labels[idx] = label;
    }
    labels
}

/// `Σ_α Q_α K Q_α` for the spectral projections of `Z0`, with frequencies
/// merged by [`spectral_clusters`].
pub fn spectral_average(k: &Operator, m: &SystemModel, delta_omega: f64) -> Result<Operator> {
    if !(delta_omega >= 0.0) {
        return Err(Error::InvalidArgument(format!("delta_omega must be >= 0, got {delta_omega}")));
    }
    if k.dim() != m.n0 {
        return Err(Error::InvalidArgument(format!(
            "generator has dimension {}, expected n0 = {}",
            k.dim(),
            m.n0
        )));
    }
    let labels = spectral_clusters(m.system_omega(), delta_omega);
    Ok(Operator::from_fn(m.n0, |a, b| {
        if labels[a] == labels[b] {
            k[(a, b)]
        } else {
            C64::new(0.0, 0.0)
        }
    }))
}

/// The two terms of the full-space generator `K̃_T`.
#[derive(Clone, Debug)]
pub struct TildeDecomposition {
    /// `½ (C - C00)²`.
    pub dissipative: Operator,
    /// `½ ∫∫_{t2 <= t1} [D(t1), D(t2)]` with `D = Φ - Φ00`.
    pub conservative: Operator,
    /// `C = ∫ Φ`.
    pub c: Operator,
    /// `C00 = P0 C P0`.
    pub c00: Operator,
    pub n0: usize,
}

impl TildeDecomposition {
    pub fn total(&self) -> Operator {
        &self.dissipative + &self.conservative
    }

    /// `P0 K̃_T P0` on range(P0).
    pub fn reduced(&self) -> Operator {
        self.total().leading_block(self.n0)
    }
}

/// Splits `K̃_T` into its dissipative and conservative parts on the full
/// space, with `Φ(t) = (√π T)^{-1/2} e^{-t²/2T²} U_{-t} A U_t`.
pub fn tilde_decomposition(m: &SystemModel, t: f64, qc: &QuadratureConfig) -> Result<TildeDecomposition> {
    check_timescale(t)?;
    if t.is_infinite() {
        return Err(Error::InvalidTimescale(t));
    }
    let n = m.dim();
    let n0 = m.n0;
    let omega = m.omega.clone();
    let a = m.a.matrix().clone();
    let amp = (std::f64::consts::PI.sqrt() * t).powf(-0.5);
    let phi = |s: f64| {
        let g = amp * (-(s * s) / (2.0 * t * t)).exp();
        DMatrix::from_fn(n, n, |r, c| a[(r, c)] * C64::from_polar(g, (omega[c] - omega[r]) * s))
    };
    let d = |s: f64| {
        let mut v = phi(s);
        v.view_mut((0, 0), (n0, n0)).fill(C64::new(0.0, 0.0));
        v
    };
    let r = qc.x_max_factor * t;
    let p = Panelization::from_config(-r, r, t, spread(&m.omega), qc)?;
    let c: DMatrix<C64> = integrate_1d(phi, &p)?;
    let mut c00 = DMatrix::zeros(n, n);
    c00.view_mut((0, 0), (n0, n0)).copy_from(&c.view((0, 0), (n0, n0)));
    let off = &c - &c00;
    let dissipative = &off * &off * C64::new(0.5, 0.0);
    let comm: DMatrix<C64> =
        integrate_ordered_bilinear(d, d, |l: &DMatrix<C64>, rr: &DMatrix<C64>| l * rr - rr * l, &p)?;
    Ok(TildeDecomposition {
        dissipative: Operator::from_square(dissipative),
        conservative: Operator::from_square(comm * C64::new(0.5, 0.0)),
        c: Operator::from_square(c),
        c00: Operator::from_square(c00),
        n0,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransitionRule {
    Natural,
    PowerLaw,
}

/// Rule choosing the averaging scale `T(λ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionTime {
    pub rule: TransitionRule,
    #[serde(default = "default_xi")]
    pub xi: f64,
    #[serde(rename = "T_ref", default = "default_t_ref")]
    pub t_ref: f64,
}

fn default_xi() -> f64 {
    1.0
}

fn default_t_ref() -> f64 {
    1.0
}

impl TransitionTime {
    pub fn natural() -> Self {
        Self { rule: TransitionRule::Natural, xi: default_xi(), t_ref: default_t_ref() }
    }

    pub fn power_law(xi: f64, t_ref: f64) -> Self {
        Self { rule: TransitionRule::PowerLaw, xi, t_ref }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rule == TransitionRule::PowerLaw {
            if !(self.xi > 0.0 && self.xi < 2.0) {
                return Err(Error::InvalidArgument(format!("xi must lie in (0, 2), got {}", self.xi)));
            }
            if !(self.t_ref > 0.0) || !self.t_ref.is_finite() {
                return Err(Error::InvalidTimescale(self.t_ref));
            }
        }
        Ok(())
    }
}

/// `T(λ)`: `1/(|λ| ‖A‖)` or `T_ref |λ|^{-ξ}`.
pub fn transition_time(tt: &TransitionTime, m: &SystemModel, lambda: f64) -> Result<f64> {
    tt.validate()?;
    if lambda == 0.0 {
        return Err(Error::CouplingZero);
    }
    let t = match tt.rule {
        TransitionRule::Natural => 1.0 / (lambda.abs() * m.a_norm()),
        TransitionRule::PowerLaw => tt.t_ref * lambda.abs().powf(-tt.xi),
    };
    if t.is_finite() && t > 0.0 {
        Ok(t)
    } else {
        Err(Error::InvalidTimescale(t))
    }
}

/// `exp((Z0 + λA00 + λ²K) t)` on range(P0).
pub fn semigroup_approx(m: &SystemModel, k: &Operator, t: f64) -> Result<Operator> {
    let g = semigroup_generator(m, k)?;
    expm(&g, t)
}

/// `Z0 + λA00 + λ²K`.
pub fn semigroup_generator(m: &SystemModel, k: &Operator) -> Result<Operator> {
    if k.dim() != m.n0 {
        return Err(Error::InvalidArgument(format!(
            "generator has dimension {}, expected n0 = {}",
            k.dim(),
            m.n0
        )));
    }
    let lam = m.lambda;
    Ok(&(&m.z0() + &m.a00().scale_real(lam)) + &k.scale_real(lam * lam))
}

/// Generator with its error budget.
#[derive(Clone, Debug)]
pub struct GeneratorOutput {
    pub op: Operator,
    /// Timescale used (absent for the Davies generator).
    pub t: Option<f64>,
    /// Bound on the neglected Gaussian mass; absent for the undamped Davies
    /// integral.
    pub tail_bound: Option<f64>,
    /// `‖K(qc) - K(qc.refined())‖`.
    pub self_convergence: f64,
    /// Accumulated rounding allowance `ε √N ‖scale‖`.
    pub rounding_floor: f64,
}

impl GeneratorOutput {
    /// Combined error estimate: self-convergence, tail bound and rounding.
    pub fn estimate(&self) -> f64 {
        self.self_convergence + self.tail_bound.unwrap_or(0.0) + self.rounding_floor
    }
}

fn build_op(m: &SystemModel, kind: &GeneratorKind, t: Option<f64>, qc: &QuadratureConfig) -> Result<Operator> {
    match kind {
        GeneratorKind::Davies { x_max } => davies_generator(m, *x_max, qc),
        GeneratorKind::Family { alpha, q, t: own } => {
            let t = own.or(t).ok_or(Error::InvalidArgument("family generator needs T".into()))?;
            family_generator(m, *alpha, *q, t, qc)
        }
        GeneratorKind::DynAvg { t: own, form } => {
            let t = own.or(t).ok_or(Error::InvalidArgument("dynavg generator needs T".into()))?;
            dyn_avg_generator(m, t, *form, qc)
        }
        GeneratorKind::SpectralAvg { base, delta_omega } => {
            let k = build_op(m, base, t, qc)?;
            spectral_average(&k, m, *delta_omega)
        }
    }
}

fn resolved_t(kind: &GeneratorKind, t: Option<f64>) -> Option<f64> {
    match kind {
        GeneratorKind::Davies { .. } => None,
        GeneratorKind::Family { t: own, .. } | GeneratorKind::DynAvg { t: own, .. } => own.or(t),
        GeneratorKind::SpectralAvg { base, .. } => resolved_t(base, t),
    }
}

/// Gaussian tail bound for a generator kind at timescale `t`.
pub fn tail_bound(m: &SystemModel, kind: &GeneratorKind, t: Option<f64>, qc: &QuadratureConfig) -> Option<f64> {
    let c = FreeCoupling::new(m).coupling_norm();
    let f = qc.x_max_factor;
    match kind {
        GeneratorKind::Davies { .. } => None,
        GeneratorKind::Family { .. } => {
            let t = resolved_t(kind, t)?;
            Some(c * half_gaussian_tail(t, f * t))
        }
        GeneratorKind::DynAvg { form, .. } => {
            let t = resolved_t(kind, t)?;
            let r = f * t;
            let sqrt_pi = std::f64::consts::PI.sqrt();
            Some(match form {
                // x tail at unit q-weight plus the q tail times ‖K_(0,0,T)‖ <= c √π T.
                DynAvgForm::QAverage => {
                    c * half_gaussian_tail(t, 2.0 * r) + c * sqrt_pi * t * (t / (r * sqrt_pi)) * (-(r * r) / (t * t)).exp()
                }
                // Mass of g(t1) g(t2) outside the square, relative to √π T.
                DynAvgForm::OrderedDouble | DynAvgForm::TimeOrdered => {
                    let gauss_tail = 2.0 * t * t / r * (-(r * r) / (2.0 * t * t)).exp();
                    c * 2.0 * gauss_tail * (2.0 * std::f64::consts::PI).sqrt() * t / (sqrt_pi * t)
                }
            })
        }
        GeneratorKind::SpectralAvg { base, .. } => tail_bound(m, base, t, qc),
    }
}

fn node_count(m: &SystemModel, kind: &GeneratorKind, t: Option<f64>, qc: &QuadratureConfig) -> f64 {
    let s = spread(&m.omega);
    match kind {
        GeneratorKind::Davies { x_max } => x_max / qc.step(x_max / qc.x_max_factor, 1.5 * s),
        GeneratorKind::Family { alpha, .. } => {
            let t = resolved_t(kind, t).unwrap_or(1.0);
            qc.x_max_factor * t / qc.step(t, (alpha.abs() + 1.5) * s)
        }
        GeneratorKind::DynAvg { .. } => {
            let t = resolved_t(kind, t).unwrap_or(1.0);
            let n1d = 2.0 * qc.x_max_factor * t / qc.step(t, 1.5 * s);
            n1d * n1d
        }
        GeneratorKind::SpectralAvg { base, .. } => node_count(m, base, t, qc),
    }
}

/// Builds the generator of `spec` at timescale `t` (ignored when the spec
/// carries its own `T`), together with its error budget.
pub fn build_generator(m: &SystemModel, spec: &GeneratorSpec, t: Option<f64>) -> Result<GeneratorOutput> {
    spec.validate()?;
    if let Some(t) = t {
        check_timescale(t)?;
    }
    let qc = &spec.qc;
    let op = build_op(m, &spec.kind, t, qc)?;
    let fine = build_op(m, &spec.kind, t, &qc.refined())?;
    let self_convergence = spectral_norm(&(op.matrix() - fine.matrix()));
    let scale = spectral_norm(op.matrix()).max(FreeCoupling::new(m).coupling_norm());
    let rounding_floor = 4.0 * f64::EPSILON * node_count(m, &spec.kind, t, qc).sqrt() * scale;
    Ok(GeneratorOutput {
        op,
        t: resolved_t(&spec.kind, t),
        tail_bound: tail_bound(m, &spec.kind, t, qc),
        self_convergence,
        rounding_floor,
    })
}
