//! Finite-dimensional split systems `(n0, n1, Z, A, P0, lambda)`.
//!
//! `Z = i diag(omega)` and `P0` projects on the first `n0` coordinates, so
//! `[Z, P0] = 0` holds exactly. The environment occupies the remaining `n1`
//! coordinates.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::opalg::{self, coordinate_projector, expm, op_norm, Operator, C64};

/// Entrywise tolerance for `A + A* = 0`.
pub const SKEW_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct SystemModel {
    pub n0: usize,
    pub n1: usize,
    pub omega: Vec<f64>,
    pub a: Operator,
    pub lambda: f64,
    pub seed: u64,
}

impl SystemModel {
    /// Checks shapes, finiteness and `|lambda| <= 1`. Skew-Hermiticity is left
    /// to [`validate_model`] so that deliberately broken models can be built.
    pub fn new(n0: usize, n1: usize, omega: Vec<f64>, a: Operator, lambda: f64, seed: u64) -> Result<Self> {
        if n0 == 0 || n1 == 0 {
            return Err(Error::InvalidArgument(format!(
                "n0 and n1 must be positive, got n0={n0}, n1={n1}"
            )));
        }
        let dim = n0 + n1;
        if omega.len() != dim {
            return Err(Error::InvalidArgument(format!(
                "expected {dim} frequencies, got {}",
                omega.len()
            )));
        }
        if omega.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidArgument("non-finite frequency".into()));
        }
        if a.dim() != dim {
            return Err(Error::InvalidArgument(format!(
                "perturbation has dimension {}, expected {dim}",
                a.dim()
            )));
        }
        a.check_finite()?;
        check_lambda(lambda)?;
        Ok(Self { n0, n1, omega, a, lambda, seed })
    }

    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        self.lambda = lambda;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.n0 + self.n1
    }

    pub fn system_omega(&self) -> &[f64] {
        &self.omega[..self.n0]
    }

    pub fn env_omega(&self) -> &[f64] {
        &self.omega[self.n0..]
    }

    /// `Z = i diag(omega)`.
    pub fn z(&self) -> Operator {
        diag_generator(&self.omega)
    }

    /// `Z0`, the restriction of `Z` to range(P0), as an `n0 x n0` operator.
    pub fn z0(&self) -> Operator {
        diag_generator(self.system_omega())
    }

    pub fn p0(&self) -> Operator {
        coordinate_projector(self.dim(), self.n0)
    }

    /// Full-dimension block `P_i A P_j`.
    pub fn a_block(&self, i: usize, j: usize) -> Operator {
        opalg::block(&self.a, i, j, &self.p0()).expect("coordinate projector is orthogonal")
    }

    /// `P_i A P_j` as a rectangular matrix between the subspace coordinates.
    pub fn a_sub(&self, i: usize, j: usize) -> DMatrix<C64> {
        let (r0, nr) = if i == 0 { (0, self.n0) } else { (self.n0, self.n1) };
        let (c0, nc) = if j == 0 { (0, self.n0) } else { (self.n0, self.n1) };
        self.a.view((r0, c0), (nr, nc)).into_owned()
    }

    /// `A00` restricted to range(P0).
    pub fn a00(&self) -> Operator {
        Operator::from_square(self.a_sub(0, 0))
    }

    /// `true` when `A01` and `A10` vanish identically.
    pub fn is_decoupled(&self) -> bool {
        opalg::max_abs(&self.a_sub(0, 1)) == 0.0 && opalg::max_abs(&self.a_sub(1, 0)) == 0.0
    }

    /// Copy of the model with the off-diagonal blocks of `A` removed.
    pub fn decoupled(&self) -> Self {
        let mut a = self.a.clone().into_matrix();
        let (n0, n1) = (self.n0, self.n1);
        a.view_mut((0, n0), (n0, n1)).fill(C64::new(0.0, 0.0));
        a.view_mut((n0, 0), (n1, n0)).fill(C64::new(0.0, 0.0));
        Self { a: Operator::from_square(a), ..self.clone() }
    }

    pub fn a_norm(&self) -> f64 {
        opalg::spectral_norm(self.a.matrix())
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !lambda.is_finite() || lambda.abs() > 1.0 {
        return Err(Error::InvalidArgument(format!(
            "coupling constant must satisfy |lambda| <= 1, got {lambda}"
        )));
    }
    Ok(())
}

pub(crate) fn diag_generator(omega: &[f64]) -> Operator {
    let d: Vec<C64> = omega.iter().map(|&w| C64::new(0.0, w)).collect();
    Operator::from_diagonal(&d)
}

/// Integration scheme for composite panel rules.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadScheme {
    CompositeSimpson,
    GaussLegendrePanels,
}

/// Node counts, truncation radii and tolerances for every operator integral.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureConfig {
    /// Gaussian-weighted variables are truncated at `x_max_factor * T`.
    pub x_max_factor: f64,
    /// Minimum node density per unit of `T`.
    pub nodes_per_unit_t: usize,
    /// Minimum node density per period of the fastest oscillation in the
    /// integrand; the finer of the two densities wins.
    pub nodes_per_period: usize,
    pub expm_tol: f64,
    pub volterra_tol: f64,
    pub quad_scheme: QuadScheme,
    /// Nodes per Gauss-Legendre panel (Simpson panels always use 3 nodes).
    pub gl_nodes: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            x_max_factor: 8.0,
            nodes_per_unit_t: 64,
            nodes_per_period: 16,
            expm_tol: opalg::DEFAULT_EXPM_TOL,
            volterra_tol: 1e-10,
            quad_scheme: QuadScheme::GaussLegendrePanels,
            gl_nodes: 8,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.x_max_factor >= 6.0) {
            return Err(Error::InvalidArgument(format!(
                "x_max_factor must be >= 6, got {}",
                self.x_max_factor
            )));
        }
        if self.nodes_per_unit_t < 16 {
            return Err(Error::InvalidArgument(format!(
                "nodes_per_unit_t must be >= 16, got {}",
                self.nodes_per_unit_t
            )));
        }
        if self.nodes_per_period < 4 {
            return Err(Error::InvalidArgument(format!(
                "nodes_per_period must be >= 4, got {}",
                self.nodes_per_period
            )));
        }
        if !(self.expm_tol > 0.0) || !(self.volterra_tol > 0.0) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        if self.gl_nodes == 0 || self.gl_nodes > 64 {
            return Err(Error::InvalidArgument(format!(
                "gl_nodes must lie in 1..=64, got {}",
                self.gl_nodes
            )));
        }
        Ok(())
    }

    /// Same configuration with both node densities doubled.
    pub fn refined(&self) -> Self {
        Self {
            nodes_per_unit_t: 2 * self.nodes_per_unit_t,
            nodes_per_period: 2 * self.nodes_per_period,
            ..self.clone()
        }
    }

    /// Quadrature step for an integrand of timescale `t_scale` whose fastest
    /// angular frequency is `nu_max`.
    pub fn step(&self, t_scale: f64, nu_max: f64) -> f64 {
        let mut h = f64::INFINITY;
        if t_scale.is_finite() && t_scale > 0.0 {
            h = t_scale / self.nodes_per_unit_t as f64;
        }
        if nu_max > 0.0 {
            h = h.min(2.0 * std::f64::consts::PI / (self.nodes_per_period as f64 * nu_max));
        }
        if !h.is_finite() {
            h = 1.0 / self.nodes_per_unit_t as f64;
        }
        h
    }

    /// Gaussian tail mass `e^{-(x_max_factor/2)^2}` beyond the truncation.
    pub fn tail_factor(&self) -> f64 {
        (-(self.x_max_factor / 2.0).powi(2)).exp()
    }
}

fn standard_complex(rng: &mut ChaCha8Rng) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn rescale(a: DMatrix<C64>, coupling_scale: f64) -> Operator {
    let norm = opalg::spectral_norm(&a);
    if coupling_scale == 0.0 || norm == 0.0 {
        let n = a.nrows();
        return Operator::zeros(n);
    }
    Operator::from_square(a * C64::new(coupling_scale / norm, 0.0))
}

fn check_builder_args(n0: usize, n1: usize, coupling_scale: f64) -> Result<()> {
    if n0 == 0 || n1 == 0 {
        return Err(Error::InvalidArgument(format!(
            "n0 and n1 must be positive, got n0={n0}, n1={n1}"
        )));
    }
    if !coupling_scale.is_finite() || coupling_scale < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "coupling_scale must be finite and non-negative, got {coupling_scale}"
        )));
    }
    Ok(())
}

/// Uniform frequencies in `[-omega_band, omega_band]` and a dense Gaussian
/// skew-Hermitian perturbation rescaled to `op_norm(A) = coupling_scale`.
/// The coupling constant is zero; set it with [`SystemModel::with_lambda`].
pub fn build_random_model(seed: u64, n0: usize, n1: usize, omega_band: f64, coupling_scale: f64) -> Result<SystemModel> {
    check_builder_args(n0, n1, coupling_scale)?;
    if !omega_band.is_finite() || omega_band < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "omega_band must be finite and non-negative, got {omega_band}"
        )));
    }
    let dim = n0 + n1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega: Vec<f64> = (0..dim)
        .map(|_| omega_band * (2.0 * rng.random::<f64>() - 1.0))
        .collect();
    let g = DMatrix::from_fn(dim, dim, |_, _| standard_complex(&mut rng));
    let a = (&g - g.adjoint()) * C64::new(0.5, 0.0);
    SystemModel::new(n0, n1, omega, rescale(a, coupling_scale), 0.0, seed)
}

/// Builder for environments with an equispaced spectrum and a Gaussian
/// coupling profile.
///
/// Only `A01` and `A10 = -A01*` are populated. The coupling to environment
/// mode `m` has modulus `sqrt(d_omega * J(omega_m))` with
/// `J(w) = exp(-(w - center)^2 / (2 width^2))` and a seeded phase, so that
/// `A01 U_x A10` approximates the Fourier transform of `J` and decays on the
/// scale `1 / width` until the recurrence time `2 pi / d_omega`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuasiContinuum {
    pub seed: u64,
    pub n0: usize,
    pub n1: usize,
    pub bandwidth: f64,
    pub profile_width: f64,
    pub profile_center: f64,
    pub coupling_scale: f64,
    /// Frequencies of the observed subspace; seeded in
    /// `[-bandwidth/4, bandwidth/4]` when absent.
    pub system_omega: Option<Vec<f64>>,
}

impl QuasiContinuum {
    pub fn new(seed: u64, n0: usize, n1: usize, bandwidth: f64, profile_width: f64, coupling_scale: f64) -> Self {
        Self {
            seed,
            n0,
            n1,
            bandwidth,
            profile_width,
            profile_center: 0.0,
            coupling_scale,
            system_omega: None,
        }
    }

    pub fn profile_center(mut self, center: f64) -> Self {
        self.profile_center = center;
        self
    }

    pub fn system_omega(mut self, omega: Vec<f64>) -> Self {
        self.system_omega = Some(omega);
        self
    }

    /// Spacing of the environment spectrum.
    pub fn spacing(&self) -> f64 {
        if self.n1 > 1 {
            self.bandwidth / (self.n1 - 1) as f64
        } else {
            self.bandwidth
        }
    }

    pub fn build(&self) -> Result<SystemModel> {
        check_builder_args(self.n0, self.n1, self.coupling_scale)?;
        if !(self.bandwidth > 0.0) || !self.bandwidth.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "bandwidth must be positive and finite, got {}",
                self.bandwidth
            )));
        }
        if !(self.profile_width > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "profile_width must be positive, got {}",
                self.profile_width
            )));
        }
        if !self.profile_center.is_finite() {
            return Err(Error::InvalidArgument("profile_center must be finite".into()));
        }
        let (n0, n1) = (self.n0, self.n1);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let sys: Vec<f64> = match &self.system_omega {
            Some(w) => {
                if w.len() != n0 {
                    return Err(Error::InvalidArgument(format!(
                        "expected {n0} system frequencies, got {}",
                        w.len()
                    )));
                }
                w.clone()
            }
            None => (0..n0)
                .map(|_| 0.25 * self.bandwidth * (2.0 * rng.random::<f64>() - 1.0))
                .collect(),
        };
        let dw = self.spacing();
        let env: Vec<f64> = (0..n1)
            .map(|m| {
                if n1 > 1 {
                    -0.5 * self.bandwidth + m as f64 * dw
                } else {
                    0.0
                }
            })
            .collect();
        let mut a = DMatrix::<C64>::zeros(n0 + n1, n0 + n1);
        for r in 0..n0 {
            for (m, &w) in env.iter().enumerate() {
                let x = (w - self.profile_center) / self.profile_width;
                let amp = (dw * (-0.5 * x * x).exp()).sqrt();
                let phase = 2.0 * std::f64::consts::PI * rng.random::<f64>();
                let g = C64::from_polar(amp, phase);
                a[(r, n0 + m)] = g;
                a[(n0 + m, r)] = -g.conj();
            }
        }
        let mut omega = sys;
        omega.extend(env);
        SystemModel::new(n0, n1, omega, rescale(a, self.coupling_scale), 0.0, self.seed)
    }
}

/// Quasi-continuum model with centred profile and seeded system frequencies.
pub fn build_quasi_continuum_model(
    seed: u64,
    n0: usize,
    n1: usize,
    bandwidth: f64,
    profile_width: f64,
    coupling_scale: f64,
) -> Result<SystemModel> {
    QuasiContinuum::new(seed, n0, n1, bandwidth, profile_width, coupling_scale).build()
}

/// Residuals of the standing hypotheses on a model.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    /// `max |A + A*|` entrywise.
    pub skew_residual: f64,
    /// `max |[Z, P0]|` entrywise.
    pub commutator_residual: f64,
    /// `op_norm(P0)`.
    pub projector_norm: f64,
    /// `max_t |op_norm(e^{At}) - 1|` over `t in {-5, -1, 1, 5}`.
    pub isometry_residual: f64,
    pub skew_ok: bool,
    pub commutator_ok: bool,
    pub projector_ok: bool,
    pub isometry_ok: bool,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.skew_ok && self.commutator_ok && self.projector_ok && self.isometry_ok
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = |ok: bool| if ok { "ok" } else { "FAIL" };
        writeln!(f, "skew-hermitian A     {:>4}  residual {:.3e}", tag(self.skew_ok), self.skew_residual)?;
        writeln!(f, "[Z, P0] = 0          {:>4}  residual {:.3e}", tag(self.commutator_ok), self.commutator_residual)?;
        writeln!(f, "op_norm(P0) = 1      {:>4}  value    {:.15}", tag(self.projector_ok), self.projector_norm)?;
        write!(f, "e^(At) isometric     {:>4}  residual {:.3e}", tag(self.isometry_ok), self.isometry_residual)
    }
}

pub fn validate_model(m: &SystemModel) -> ValidationReport {
    validate_operators(&m.z(), &m.a, &m.p0())
}

/// Runs the model checks on explicit `(Z, A, P0)`.
pub fn validate_operators(z: &Operator, a: &Operator, p0: &Operator) -> ValidationReport {
    let skew_residual = a.skew_hermitian_residual();
    let commutator_residual = z.commutator(p0).max_abs();
    let projector_norm = op_norm(p0).unwrap_or(f64::INFINITY);
    let mut isometry_residual: f64 = 0.0;
    for t in [-5.0, -1.0, 1.0, 5.0] {
        let dev = match expm(a, t).and_then(|e| op_norm(&e)) {
            Ok(n) => (n - 1.0).abs(),
            Err(_) => f64::INFINITY,
        };
        isometry_residual = isometry_residual.max(dev);
    }
    ValidationReport {
        skew_residual,
        commutator_residual,
        projector_norm,
        isometry_residual,
        skew_ok: skew_residual <= SKEW_TOL,
        commutator_ok: commutator_residual <= 1e-12,
        projector_ok: (projector_norm - 1.0).abs() <= 1e-12,
        isometry_ok: isometry_residual <= 1e-10,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_model_is_deterministic() {
        let a = build_random_model(7, 2, 8, 1.0, 1.0).unwrap();
        let b = build_random_model(7, 2, 8, 1.0, 1.0).unwrap();
        assert_eq!(a, b);
        let c = build_random_model(8, 2, 8, 1.0, 1.0).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn random_model_scaling_and_band() {
        let m = build_random_model(3, 3, 5, 2.5, 0.7).unwrap();
        assert!((m.a_norm() - 0.7).abs() < 1e-12);
        assert!(m.omega.iter().all(|w| w.abs() <= 2.5));
        let zero = build_random_model(3, 3, 5, 2.5, 0.0).unwrap();
        assert_eq!(zero.a.max_abs(), 0.0);
    }

    #[test]
    fn random_model_validates() {
        let m = build_random_model(1, 4, 64, 5.0, 1.0).unwrap();
        let r = validate_model(&m);
        assert!(r.passed(), "{r}");
        assert!(r.skew_residual <= 1e-10 && r.isometry_residual <= 1e-10);
    }

    #[test]
    fn hermitian_perturbation_fails_skew_check() {
        let m = build_random_model(2, 2, 3, 1.0, 1.0).unwrap();
        // Hermitian G = iA has |G + G*| = 2|G| entrywise.
        let g = m.a.scale(C64::new(0.0, 1.0));
        let r = validate_operators(&m.z(), &g, &m.p0());
        assert!(!r.skew_ok);
        assert!((r.skew_residual - 2.0 * g.max_abs()).abs() < 1e-12);
    }

    #[test]
    fn oblique_projector_fails_norm_check() {
        let m = build_random_model(2, 1, 1, 1.0, 1.0).unwrap();
        // P = [[1, 1], [0, 0]] is idempotent but not self-adjoint.
        let p = Operator::from_fn(2, |r, _| {
            if r == 0 { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }
        });
        assert!((&p * &p).max_abs() > 0.0);
        let r = validate_operators(&m.z(), &m.a, &p);
        assert!(!r.projector_ok);
        assert!(r.projector_norm > 1.0);
    }

    #[test]
    fn quasi_continuum_structure() {
        let b = QuasiContinuum::new(5, 2, 64, 20.0, 3.0, 1.0);
        let m = b.build().unwrap();
        assert!(validate_model(&m).passed());
        assert!((m.a_norm() - 1.0).abs() < 1e-12);
        assert_eq!(opalg::max_abs(&m.a_sub(0, 0)), 0.0);
        assert_eq!(opalg::max_abs(&m.a_sub(1, 1)), 0.0);
        let env = m.env_omega();
        assert!((env[0] + 10.0).abs() < 1e-12 && (env[63] - 10.0).abs() < 1e-12);
        for w in env.windows(2) {
            assert!((w[1] - w[0] - b.spacing()).abs() < 1e-12);
        }
        assert!(m.system_omega().iter().all(|w| w.abs() <= 5.0));
        let zero = build_quasi_continuum_model(5, 2, 64, 20.0, 3.0, 0.0).unwrap();
        assert_eq!(zero.a.max_abs(), 0.0);
    }

    #[test]
    fn lambda_is_bounded() {
        let m = build_random_model(1, 1, 1, 1.0, 1.0).unwrap();
        assert!(m.clone().with_lambda(1.5).is_err());
        assert_eq!(m.with_lambda(-0.3).unwrap().lambda, -0.3);
    }

    #[test]
    fn quadrature_config_bounds() {
        let qc = QuadratureConfig::default();
        qc.validate().unwrap();
        assert!(QuadratureConfig { x_max_factor: 5.0, ..qc.clone() }.validate().is_err());
        assert!(QuadratureConfig { nodes_per_unit_t: 8, ..qc.clone() }.validate().is_err());
        let r = qc.refined();
        assert_eq!(r.nodes_per_unit_t, 128);
        assert!((qc.step(1.0, 0.0) - 1.0 / 64.0).abs() < 1e-15);
        assert!(qc.step(100.0, 10.0) < 0.04);
    }
}
