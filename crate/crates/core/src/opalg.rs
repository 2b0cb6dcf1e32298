//! Dense complex operator algebra.
//!
//! [`Operator`] wraps a square `DMatrix<Complex64>`. The norm used throughout
//! the crate is the spectral norm (largest singular value), i.e. the operator
//! norm induced by the Euclidean vector norm.

use std::ops::{Add, AddAssign, Deref, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Tolerance used by [`block`] to accept `P0` as an orthogonal projector.
pub const PROJECTOR_TOL: f64 = 1e-12;

/// Default relative accuracy requested from [`expm`].
pub const DEFAULT_EXPM_TOL: f64 = 1e-12;

/// Square dense complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator(DMatrix<C64>);

impl Operator {
    pub fn new(m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::InvalidOperator(format!(
                "expected a square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(Self(m))
    }

    /// Wraps a matrix already known to be square.
    pub(crate) fn from_square(m: DMatrix<C64>) -> Self {
        debug_assert_eq!(m.nrows(), m.ncols());
        Self(m)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(DMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    pub fn from_diagonal(diag: &[C64]) -> Self {
        Self(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        Self(DMatrix::from_fn(dim, dim, f))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.0
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn scale(&self, s: C64) -> Self {
        Self(&self.0 * s)
    }

    pub fn scale_real(&self, s: f64) -> Self {
        Self(self.0.map(|z| z * s))
    }

    pub fn commutator(&self, other: &Operator) -> Self {
        Self(&self.0 * &other.0 - &other.0 * &self.0)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        max_abs(&self.0)
    }

    /// Largest entry modulus of `M + M*`; zero for skew-Hermitian `M`.
    pub fn skew_hermitian_residual(&self) -> f64 {
        max_abs(&(&self.0 + self.0.adjoint()))
    }

    /// Largest entry modulus of `M - M*`; zero for Hermitian `M`.
    pub fn hermitian_residual(&self) -> f64 {
        max_abs(&(&self.0 - self.0.adjoint()))
    }

    /// Leading `n x n` principal block.
    pub fn leading_block(&self, n: usize) -> Operator {
        Self(self.0.view((0, 0), (n, n)).into_owned())
    }

    /// Embeds `self` in the leading block of a `dim x dim` zero matrix.
    pub fn embed(&self, dim: usize) -> Operator {
        let mut out = DMatrix::zeros(dim, dim);
        out.view_mut((0, 0), (self.dim(), self.dim()))
            .copy_from(&self.0);
        Self(out)
    }

    pub(crate) fn check_finite(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidOperator("non-finite entry".into()))
        }
    }
}

impl Deref for Operator {
    type Target = DMatrix<C64>;

    fn deref(&self) -> &DMatrix<C64> {
        &self.0
    }
}

impl From<Operator> for DMatrix<C64> {
    fn from(op: Operator) -> Self {
        op.0
    }
}

impl<'a> Add<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn add(self, rhs: &'a Operator) -> Operator {
        Operator(&self.0 + &rhs.0)
    }
}

impl Add for Operator {
    type Output = Operator;
    fn add(self, rhs: Operator) -> Operator {
        Operator(self.0 + rhs.0)
    }
}

impl AddAssign<&Operator> for Operator {
    fn add_assign(&mut self, rhs: &Operator) {
        self.0 += &rhs.0;
    }
}

impl<'a> Sub<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn sub(self, rhs: &'a Operator) -> Operator {
        Operator(&self.0 - &rhs.0)
    }
}

impl Sub for Operator {
    type Output = Operator;
    fn sub(self, rhs: Operator) -> Operator {
        Operator(self.0 - rhs.0)
    }
}

impl<'a> Mul<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn mul(self, rhs: &'a Operator) -> Operator {
        Operator(&self.0 * &rhs.0)
    }
}

impl Mul for Operator {
    type Output = Operator;
    fn mul(self, rhs: Operator) -> Operator {
        Operator(self.0 * rhs.0)
    }
}

impl Neg for Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        Operator(-self.0)
    }
}

pub(crate) fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

/// Spectral norm of an arbitrary (possibly rectangular) complex matrix.
pub fn spectral_norm(m: &DMatrix<C64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .singular_values()
        .iter()
        .fold(0.0_f64, |acc, &s| acc.max(s))
}

/// Largest singular value of `m`.
pub fn op_norm(m: &Operator) -> Result<f64> {
    m.check_finite()?;
    Ok(spectral_norm(m.matrix()))
}

/// `P_i M P_j` with `P_1 = 1 - P_0`, kept in the full dimension.
pub fn block(m: &Operator, i: usize, j: usize, p0: &Operator) -> Result<Operator> {
    if i > 1 || j > 1 {
        return Err(Error::InvalidArgument(format!(
            "block indices must be 0 or 1, got ({i}, {j})"
        )));
    }
    if p0.dim() != m.dim() {
        return Err(Error::InvalidArgument(format!(
            "projector dimension {} does not match operator dimension {}",
            p0.dim(),
            m.dim()
        )));
    }
    let residual = projector_residual(p0);
    if !(residual <= PROJECTOR_TOL) {
        return Err(Error::NotAProjector { residual });
    }
    let id = DMatrix::<C64>::identity(m.dim(), m.dim());
    let p1 = &id - p0.matrix();
    let left = if i == 0 { p0.matrix() } else { &p1 };
    let right = if j == 0 { p0.matrix() } else { &p1 };
    Ok(Operator(left * m.matrix() * right))
}

/// `max(|P^2 - P|, |P - P*|)` entrywise.
pub fn projector_residual(p: &Operator) -> f64 {
    let idem = max_abs(&(p.matrix() * p.matrix() - p.matrix()));
    idem.max(p.hermitian_residual())
}

/// Coordinate projector onto the first `n0` axes of a `dim`-dimensional space.
pub fn coordinate_projector(dim: usize, n0: usize) -> Operator {
    Operator::from_fn(dim, |r, c| {
        if r == c && r < n0 {
            C64::new(1.0, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

/// `e^{M t}` with the default tolerance.
pub fn expm(m: &Operator, t: f64) -> Result<Operator> {
    expm_with_tol(m, t, DEFAULT_EXPM_TOL)
}

// Pade coefficients b_0..b_m for the diagonal [m/m] approximants.
const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

// 1-norm thresholds below which the [m/m] approximant meets the backward
// error bound for unit roundoff 2^-53 (double) and 2^-24 (single).
const THETA_DOUBLE: [(usize, f64); 5] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068),
    (13, 5.371920351148152),
];
const THETA_SINGLE: [(usize, f64); 3] = [
    (3, 4.258730016922831e-1),
    (5, 1.880152677804762),
    (7, 3.925724783138660),
];

/// `e^{M t}` by scaling and squaring around a diagonal Pade approximant.
///
/// Requests of `tol >= 2^-24` use the cheaper single-precision degree table;
/// anything tighter uses the double-precision table (relative backward error
/// of order 1e-16).
pub fn expm_with_tol(m: &Operator, t: f64, tol: f64) -> Result<Operator> {
    m.check_finite()?;
    if !t.is_finite() {
        return Err(Error::InvalidArgument(format!("non-finite time {t}")));
    }
    let n = m.dim();
    if n == 0 {
        return Ok(Operator::zeros(0));
    }
    let a: DMatrix<C64> = m.matrix() * C64::new(t, 0.0);
    let norm1 = one_norm(&a);
    let table: &[(usize, f64)] = if tol >= 2f64.powi(-24) {
        &THETA_SINGLE
    } else {
        &THETA_DOUBLE
    };
    for &(deg, theta) in table {
        if norm1 <= theta {
            return Ok(Operator(pade(&a, deg)?));
        }
    }
    let (top_deg, top_theta) = table[table.len() - 1];
    let s = (norm1 / top_theta).log2().ceil().max(0.0) as i32;
    let scaled = &a * C64::new(2f64.powi(-s), 0.0);
    let mut r = pade(&scaled, top_deg)?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(Operator(r))
}

fn one_norm(a: &DMatrix<C64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn pade(a: &DMatrix<C64>, deg: usize) -> Result<DMatrix<C64>> {
    let n = a.nrows();
    let id = DMatrix::<C64>::identity(n, n);
    let c = |x: f64| C64::new(x, 0.0);
    let (u, v) = if deg == 13 {
        let b = &B13;
        let a2 = a * a;
        let a4 = &a2 * &a2;
        let a6 = &a4 * &a2;
        let inner_u = &a6 * (&a6 * c(b[13]) + &a4 * c(b[11]) + &a2 * c(b[9]))
            + &a6 * c(b[7])
            + &a4 * c(b[5])
            + &a2 * c(b[3])
            + &id * c(b[1]);
        let u = a * inner_u;
        let v = &a6 * (&a6 * c(b[12]) + &a4 * c(b[10]) + &a2 * c(b[8]))
            + &a6 * c(b[6])
            + &a4 * c(b[4])
            + &a2 * c(b[2])
            + &id * c(b[0]);
        (u, v)
    } else {
        let b: &[f64] = match deg {
            3 => &B3,
            5 => &B5,
            7 => &B7,
            9 => &B9,
            _ => unreachable!("unsupported Pade degree {deg}"),
        };
        let a2 = a * a;
        let mut odd = &id * c(b[1]);
        let mut even = &id * c(b[0]);
        let mut pow = id.clone();
        let mut k = 2;
        while k <= deg {
            pow = &pow * &a2;
            even += &pow * c(b[k]);
            if k + 1 <= deg {
                odd += &pow * c(b[k + 1]);
            }
            k += 2;
        }
        (a * odd, even)
    };
    let p = &v + &u;
    let q = &v - &u;
    q.lu()
        .solve(&p)
        .ok_or_else(|| Error::InvalidOperator("singular Pade denominator".into()))
}

/// Eigendecomposition `H = V diag(mu) V*` of a Hermitian matrix, stored so that
/// the group generated by the skew-Hermitian `G = i H` is evaluated as
/// `e^{G t} = V diag(e^{i mu t}) V*`.
#[derive(Clone, Debug)]
pub struct UnitaryGroup {
    vectors: DMatrix<C64>,
    freqs: Vec<f64>,
}

impl UnitaryGroup {
    /// Diagonalises a skew-Hermitian generator.
    pub fn from_skew_hermitian(g: &DMatrix<C64>) -> Self {
        let n = g.nrows();
        if n == 0 {
            return Self {
                vectors: DMatrix::zeros(0, 0),
                freqs: Vec::new(),
            };
        }
        // H = -i G, symmetrised against rounding.
        let h = g * C64::new(0.0, -1.0);
        let h = (&h + h.adjoint()) * C64::new(0.5, 0.0);
        let eig = nalgebra::SymmetricEigen::new(h);
        Self {
            vectors: eig.eigenvectors,
            freqs: eig.eigenvalues.iter().copied().collect(),
        }
    }

    /// Group generated by `i diag(freqs)`.
    pub fn diagonal(freqs: &[f64]) -> Self {
        let n = freqs.len();
        Self {
            vectors: DMatrix::identity(n, n),
            freqs: freqs.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.freqs.len()
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn vectors(&self) -> &DMatrix<C64> {
        &self.vectors
    }

    /// Spread `max mu - min mu` of the spectrum.
    pub fn spread(&self) -> f64 {
        spread(&self.freqs)
    }

    pub fn phases(&self, t: f64) -> Vec<C64> {
        self.freqs
            .iter()
            .map(|&w| C64::from_polar(1.0, w * t))
            .collect()
    }

    pub fn at(&self, t: f64) -> DMatrix<C64> {
        let ph = self.phases(t);
        let mut scaled = self.vectors.clone();
        for (mut col, p) in scaled.column_iter_mut().zip(ph.iter()) {
            col *= *p;
        }
        scaled * self.vectors.adjoint()
    }
}

pub(crate) fn spread(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    hi - lo
}
