//! One-parameter groups of a split model and the exact projected evolution.
//!
//! Operators tied to range(P0) (`X`, `W`) are returned as `n0 x n0` matrices in
//! the coordinates of the observed subspace; `U`, `U^λ` and `V^λ` act on the
//! full space.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{diag_generator, SystemModel};
use crate::opalg::{expm, Operator, UnitaryGroup, C64};

/// Cached spectral data for every group of a model.
#[derive(Clone, Debug)]
pub struct Dynamics {
    pub model: SystemModel,
    /// `Z0 + λ A00` on range(P0).
    reduced: UnitaryGroup,
    /// `Z1 + λ A11` on range(P1).
    env: UnitaryGroup,
    /// `Z + λ A`.
    full: UnitaryGroup,
    a01: DMatrix<C64>,
    a10: DMatrix<C64>,
    /// `A01 V1`, `V1* A10` for the environment eigenbasis `V1`.
    a01_v: DMatrix<C64>,
    v_a10: DMatrix<C64>,
}

impl Dynamics {
    pub fn new(model: &SystemModel) -> Self {
        let lam = C64::new(model.lambda, 0.0);
        let n0 = model.n0;
        let z = model.z();
        let gen_full = z.matrix() + model.a.matrix() * lam;
        let gen_reduced = gen_full.view((0, 0), (n0, n0)).into_owned();
        let gen_env = gen_full.view((n0, n0), (model.n1, model.n1)).into_owned();
        let reduced = UnitaryGroup::from_skew_hermitian(&gen_reduced);
        let env = UnitaryGroup::from_skew_hermitian(&gen_env);
        let full = UnitaryGroup::from_skew_hermitian(&gen_full);
        let a01 = model.a_sub(0, 1);
        let a10 = model.a_sub(1, 0);
        let a01_v = &a01 * env.vectors();
        let v_a10 = env.vectors().adjoint() * &a10;
        Self { model: model.clone(), reduced, env, full, a01, a10, a01_v, v_a10 }
    }

    pub fn n0(&self) -> usize {
        self.model.n0
    }

    pub fn lambda(&self) -> f64 {
        self.model.lambda
    }

    /// `U_t = diag(e^{i ω_k t})`.
    pub fn free(&self, t: f64) -> Operator {
        free_diag(&self.model.omega, t)
    }

    /// `X^λ_t` on range(P0).
    pub fn reduced(&self, t: f64) -> DMatrix<C64> {
        self.reduced.at(t)
    }

    /// `U^λ_t` restricted to range(P1).
    pub fn env(&self, t: f64) -> DMatrix<C64> {
        self.env.at(t)
    }

    /// `U^λ_t`, block diagonal.
    pub fn dressed(&self, t: f64) -> Operator {
        let n0 = self.n0();
        let mut m = DMatrix::zeros(self.model.dim(), self.model.dim());
        m.view_mut((0, 0), (n0, n0)).copy_from(&self.reduced(t));
        m.view_mut((n0, n0), (self.model.n1, self.model.n1)).copy_from(&self.env(t));
        Operator::from_square(m)
    }

    /// `V^λ_t`.
    pub fn full(&self, t: f64) -> Operator {
        Operator::from_square(self.full.at(t))
    }

    /// `W^λ_t = P0 V^λ_t P0` on range(P0).
    pub fn projected(&self, t: f64) -> DMatrix<C64> {
        let n0 = self.n0();
        let v = &self.full;
        let top = v.vectors().rows(0, n0).into_owned();
        let ph = v.phases(t);
        let mut scaled = top.clone();
        for (mut col, p) in scaled.column_iter_mut().zip(ph.iter()) {
            col *= *p;
        }
        scaled * top.adjoint()
    }

    /// `A01 U^λ_x A10` on range(P0).
    pub fn memory(&self, x: f64) -> DMatrix<C64> {
        let ph = self.env.phases(x);
        let mut scaled = self.a01_v.clone();
        for (mut col, p) in scaled.column_iter_mut().zip(ph.iter()) {
            col *= *p;
        }
        scaled * &self.v_a10
    }

    pub fn a01(&self) -> &DMatrix<C64> {
        &self.a01
    }

    pub fn a10(&self) -> &DMatrix<C64> {
        &self.a10
    }

    /// Largest frequency gap of `Z0 + λA00`.
    pub fn reduced_spread(&self) -> f64 {
        self.reduced.spread()
    }

    /// Largest frequency gap of `Z1 + λA11`.
    pub fn env_spread(&self) -> f64 {
        self.env.spread()
    }

    /// Largest frequency gap of `Z + λA`.
    pub fn full_spread(&self) -> f64 {
        self.full.spread()
    }

    /// Bound on the angular frequencies present in `X^λ_{-a} A01 U^λ_x A10 X^λ_b`
    /// as a function of its time arguments.
    pub fn memory_bandwidth(&self) -> f64 {
        let all: Vec<f64> = self.reduced.freqs().iter().chain(self.env.freqs()).copied().collect();
        crate::opalg::spread(&all)
    }
}

pub(crate) fn free_diag(omega: &[f64], t: f64) -> Operator {
    let d: Vec<C64> = omega.iter().map(|&w| C64::from_polar(1.0, w * t)).collect();
    Operator::from_diagonal(&d)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PropagatorKind {
    /// `U_t`
    Free,
    /// `U^λ_t`
    Dressed,
    /// `V^λ_t`
    Full,
    /// `X^λ_t`
    Reduced,
    /// `W^λ_t`
    Projected,
}

/// A propagator of a given kind backed by the shared spectral cache.
#[derive(Clone, Debug)]
pub struct Propagator {
    pub kind: PropagatorKind,
    dynamics: Arc<Dynamics>,
}

impl Propagator {
    pub fn new(kind: PropagatorKind, dynamics: Arc<Dynamics>) -> Self {
        Self { kind, dynamics }
    }

    pub fn model(&self) -> &SystemModel {
        &self.dynamics.model
    }

    /// Full-dimension operator for `Free`, `Dressed`, `Full`; `n0 x n0` for
    /// `Reduced` and `Projected`.
    pub fn at(&self, t: f64) -> Operator {
        let d = &self.dynamics;
        match self.kind {
            PropagatorKind::Free => d.free(t),
            PropagatorKind::Dressed => d.dressed(t),
            PropagatorKind::Full => d.full(t),
            PropagatorKind::Reduced => Operator::from_square(d.reduced(t)),
            PropagatorKind::Projected => Operator::from_square(d.projected(t)),
        }
    }
}

/// `U_t = e^{Zt}`.
pub fn free_group(m: &SystemModel, t: f64) -> Operator {
    free_diag(&m.omega, t)
}

/// `U^λ_t = e^{(Z + λ(A00 + A11)) t}`, evaluated blockwise so that it commutes
/// with `P0` exactly.
pub fn dressed_group(m: &SystemModel, t: f64) -> Result<Operator> {
    let n0 = m.n0;
    let lam = C64::new(m.lambda, 0.0);
    let gen = m.z().into_matrix() + m.a.matrix() * lam;
    let g0 = Operator::from_square(gen.view((0, 0), (n0, n0)).into_owned());
    let g1 = Operator::from_square(gen.view((n0, n0), (m.n1, m.n1)).into_owned());
    let mut out = DMatrix::zeros(m.dim(), m.dim());
    out.view_mut((0, 0), (n0, n0)).copy_from(expm(&g0, t)?.matrix());
    out.view_mut((n0, n0), (m.n1, m.n1)).copy_from(expm(&g1, t)?.matrix());
    Ok(Operator::from_square(out))
}

/// `V^λ_t = e^{(Z + λA) t}`.
pub fn full_group(m: &SystemModel, t: f64) -> Result<Operator> {
    let gen = &m.z() + &m.a.scale_real(m.lambda);
    expm(&gen, t)
}

/// `X^λ_t = P0 U^λ_t` on range(P0).
pub fn reduced_free(m: &SystemModel, t: f64) -> Result<Operator> {
    let gen = &diag_generator(m.system_omega()) + &m.a00().scale_real(m.lambda);
    expm(&gen, t)
}

/// `W^λ_t = P0 e^{(Z + λA) t} P0` on range(P0).
pub fn exact_projected(m: &SystemModel, t: f64) -> Result<Operator> {
    Ok(full_group(m, t)?.leading_block(m.n0))
}

/// `f_λ(τ) = X^λ_{-λ⁻²τ} W^λ_{λ⁻²τ} b`.
pub fn interaction_picture(m: &SystemModel, tau: f64, b: &DVector<C64>) -> Result<DVector<C64>> {
    if m.lambda == 0.0 {
        return Err(Error::CouplingZero);
    }
    if b.len() != m.n0 {
        return Err(Error::InvalidArgument(format!(
            "vector has length {}, expected n0 = {}",
            b.len(),
            m.n0
        )));
    }
    let t = tau / (m.lambda * m.lambda);
    let w = exact_projected(m, t)?;
    let x = reduced_free(m, -t)?;
    Ok(x.matrix() * (w.matrix() * b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_random_model;
    use crate::opalg::{coordinate_projector, max_abs, op_norm};
    use crate::quadrature::{integrate_1d, Panelization};
    use crate::model::QuadScheme;

    fn model(lambda: f64) -> SystemModel {
        build_random_model(7, 2, 8, 1.0, 1.0).unwrap().with_lambda(lambda).unwrap()
    }

    fn norm(m: &DMatrix<C64>) -> f64 {
        crate::opalg::spectral_norm(m)
    }

    #[test]
    fn free_group_basics() {
        let m = model(0.3);
        assert_eq!(free_group(&m, 0.0), Operator::identity(10));
        let lhs = &free_group(&m, 0.7) * &free_group(&m, -1.9);
        assert!((&lhs - &free_group(&m, -1.2)).max_abs() < 1e-15);
        let a01 = m.a_block(0, 1);
        let conj = &(&free_group(&m, -2.3) * &a01) * &free_group(&m, 2.3);
        assert!((op_norm(&conj).unwrap() - op_norm(&a01).unwrap()).abs() <= 1e-12);
        let p0 = coordinate_projector(10, 2);
        assert_eq!(free_group(&m, 1.3).commutator(&p0).max_abs(), 0.0);
    }

    #[test]
    fn dressed_group_properties() {
        let m = model(0.3);
        let p0 = m.p0();
        let u = dressed_group(&m, 2.1).unwrap();
        assert!(u.commutator(&p0).max_abs() <= 1e-10);
        assert!((op_norm(&u).unwrap() - 1.0).abs() <= 1e-10);
        let m0 = model(0.0);
        assert!((&dressed_group(&m0, 2.1).unwrap() - &free_group(&m0, 2.1)).max_abs() < 1e-13);
        let d = Dynamics::new(&m);
        assert!((&d.dressed(2.1) - &u).max_abs() < 1e-12);
    }

    #[test]
    fn full_group_properties() {
        let m = model(0.3);
        let v = full_group(&m, 4.0).unwrap();
        assert!((op_norm(&v).unwrap() - 1.0).abs() <= 1e-10);
        let m0 = model(0.0);
        assert!((&full_group(&m0, 4.0).unwrap() - &free_group(&m0, 4.0)).max_abs() < 1e-13);
        let d = Dynamics::new(&m);
        assert!((&d.full(4.0) - &v).max_abs() < 1e-12);
    }

    #[test]
    fn full_group_duhamel_residual() {
        let m = model(0.3);
        let d = Dynamics::new(&m);
        let t = 1.5;
        let a_off = &m.a_block(0, 1) + &m.a_block(1, 0);
        let p = Panelization::uniform(0.0, t, 24, QuadScheme::GaussLegendrePanels, 8).unwrap();
        let integral: DMatrix<C64> =
            integrate_1d(|s| d.dressed(t - s).matrix() * a_off.matrix() * d.full(s).matrix(), &p).unwrap();
        let resid = d.full(t).matrix() - d.dressed(t).matrix() - integral * C64::new(m.lambda, 0.0);
        assert!(max_abs(&resid) < 1e-11);
    }

    #[test]
    fn reduced_free_properties() {
        let m = model(0.3);
        assert!((&reduced_free(&m, 0.0).unwrap() - &Operator::identity(2)).max_abs() < 1e-15);
        let x = reduced_free(&m, 3.3).unwrap();
        assert!((op_norm(&x).unwrap() - 1.0).abs() <= 1e-10);
        let lhs = &reduced_free(&m, 1.1).unwrap() * &reduced_free(&m, 2.2).unwrap();
        assert!(op_norm(&(&lhs - &x)).unwrap() <= 1e-10);
        let d = Dynamics::new(&m);
        assert!(max_abs(&(d.reduced(3.3) - x.matrix())) < 1e-12);
    }

    #[test]
    fn exact_projected_properties() {
        let m = model(0.3);
        assert!((&exact_projected(&m, 0.0).unwrap() - &Operator::identity(2)).max_abs() < 1e-15);
        let t = 2.7;
        let full = full_group(&m, t).unwrap();
        let blk = crate::opalg::block(&full, 0, 0, &m.p0()).unwrap();
        assert_eq!(blk.leading_block(2), exact_projected(&m, t).unwrap());
        let dec = m.decoupled();
        for t in [0.5, 3.0, 9.0] {
            let w = exact_projected(&dec, t).unwrap();
            let x = reduced_free(&dec, t).unwrap();
            assert!((&w - &x).max_abs() < 1e-12);
        }
        let d = Dynamics::new(&m);
        assert!(max_abs(&(d.projected(t) - exact_projected(&m, t).unwrap().matrix())) < 1e-12);
    }

    #[test]
    fn interaction_picture_properties() {
        let m = model(0.3);
        let b = DVector::from_vec(vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)]);
        let f0 = interaction_picture(&m, 0.0, &b).unwrap();
        assert!((f0 - &b).norm() < 1e-14);
        for tau in [0.1, 0.3, 0.45] {
            let f = interaction_picture(&m, tau, &b).unwrap();
            assert!(f.norm() <= b.norm() + 1e-8);
        }
        let dec = m.decoupled();
        let f = interaction_picture(&dec, 0.4, &b).unwrap();
        assert!((f - &b).norm() < 1e-12);
        assert!(matches!(interaction_picture(&model(0.0), 0.1, &b), Err(Error::CouplingZero)));
    }

    #[test]
    fn memory_matches_direct_product() {
        let m = model(0.3);
        let d = Dynamics::new(&m);
        let x = 1.7;
        let direct = d.a01() * d.env(x) * d.a10();
        assert!(norm(&(direct - d.memory(x))) < 1e-12);
    }

    #[test]
    fn propagator_kinds_share_cache() {
        let m = model(0.2);
        let d = Arc::new(Dynamics::new(&m));
        let p = Propagator::new(PropagatorKind::Projected, d.clone());
        let x = Propagator::new(PropagatorKind::Reduced, d);
        assert_eq!(p.at(0.9).dim(), 2);
        assert_eq!(x.at(0.9).dim(), 2);
        for kind in [PropagatorKind::Free, PropagatorKind::Dressed, PropagatorKind::Full] {
            let g = Propagator::new(kind, Arc::new(Dynamics::new(&m)));
            let lhs = &g.at(0.4) * &g.at(1.3);
            assert!((&lhs - &g.at(1.7)).max_abs() < 1e-10);
            assert!((op_norm(&g.at(5.0)).unwrap() - 1.0).abs() < 1e-10);
        }
    }
}
