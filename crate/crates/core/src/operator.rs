//! Dense operators, Hilbert–Schmidt geometry and superoperators.
//!
//! Vectorization is column stacking throughout the crate: the entry `X[(i, j)]`
//! of an `n × n` operator sits at index `i + j * n` of `vec(X)`. This is also
//! nalgebra's storage order, so `vec` is a plain copy. With this convention
//! `vec(A X B) = (Bᵀ ⊗ A) vec(X)`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{check_dim, QmrError, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Default tolerance for orthonormality, Hermiticity and rank decisions.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Bound on the trace error and negative eigenvalues accepted for density operators.
pub const STATE_TOL: f64 = 1e-9;

/// A dense `n × n` complex operator on `ℂⁿ`.
#[derive(Clone, PartialEq)]
pub struct Operator(CMatrix);

impl fmt::Debug for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Operator{}", self.0)
    }
}

impl Operator {
    /// Wraps a square matrix with finite entries.
    pub fn new(m: CMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(QmrError::invalid(format!(
                "operator must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(QmrError::invalid("operator has non-finite entries"));
        }
        Ok(Operator(m))
    }

    /// Wraps a matrix that must be self-adjoint to within `tol` (relative).
    pub fn hermitian(m: CMatrix, tol: f64) -> Result<Self> {
        let op = Operator::new(m)?;
        let dev = op.hermiticity_residual();
        if dev > tol * op.norm().max(f64::MIN_POSITIVE) && dev > 0.0 {
            return Err(QmrError::invalid(format!(
                "operator is not self-adjoint (‖X − X†‖/‖X‖ = {:.3e})",
                dev / op.norm()
            )));
        }
        Ok(op)
    }

    pub(crate) fn from_matrix_unchecked(m: CMatrix) -> Self {
        debug_assert!(m.is_square());
        Operator(m)
    }

    pub fn zeros(n: usize) -> Self {
        Operator(CMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        Operator(CMatrix::identity(n, n))
    }

    /// The matrix unit `|i⟩⟨j|`.
    pub fn unit(n: usize, i: usize, j: usize) -> Self {
        let mut m = CMatrix::zeros(n, n);
        m[(i, j)] = ONE;
        Operator(m)
    }

    pub fn from_real(n: usize, data: &[f64]) -> Result<Self> {
        check_dim(n * n, data.len())?;
        Operator::new(CMatrix::from_row_iterator(
            n,
            n,
            data.iter().map(|&x| C64::new(x, 0.0)),
        ))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn adjoint(&self) -> Operator {
        Operator(self.0.adjoint())
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    /// Hilbert–Schmidt (Frobenius) norm.
    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn scale(&self, c: C64) -> Operator {
        Operator(&self.0 * c)
    }

    pub fn hermiticity_residual(&self) -> f64 {
        (&self.0 - self.0.adjoint()).norm()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_residual() <= tol * self.norm().max(1.0)
    }

    pub fn commutator(&self, other: &Operator) -> Operator {
        Operator(&self.0 * &other.0 - &other.0 * &self.0)
    }

    pub fn anticommutator(&self, other: &Operator) -> Operator {
        Operator(&self.0 * &other.0 + &other.0 * &self.0)
    }

    pub fn kron(&self, other: &Operator) -> Operator {
        Operator(self.0.kronecker(&other.0))
    }

    /// Column-stacked vectorization.
    pub fn vec(&self) -> CVector {
        CVector::from_column_slice(self.0.as_slice())
    }

    pub fn from_vec(n: usize, v: &CVector) -> Result<Self> {
        check_dim(n * n, v.len())?;
        Ok(Operator(CMatrix::from_column_slice(n, n, v.as_slice())))
    }

    /// Spectral norm (largest singular value).
    pub fn operator_norm(&self) -> f64 {
        self.0
            .clone()
            .singular_values()
            .iter()
            .cloned()
            .fold(0.0, f64::max)
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        Operator(&self.0 + &rhs.0)
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        Operator(&self.0 - &rhs.0)
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        Operator(&self.0 * &rhs.0)
    }
}

impl Neg for &Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        Operator(-&self.0)
    }
}

/// Single-qubit Pauli matrix by letter (`I`, `X`, `Y`, `Z`).
pub fn pauli(letter: char) -> Option<Operator> {
    let z = ZERO;
    let o = ONE;
    let m = match letter.to_ascii_uppercase() {
        'I' => CMatrix::from_row_slice(2, 2, &[o, z, z, o]),
        'X' => CMatrix::from_row_slice(2, 2, &[z, o, o, z]),
        'Y' => CMatrix::from_row_slice(2, 2, &[z, -I, I, z]),
        'Z' => CMatrix::from_row_slice(2, 2, &[o, z, z, -o]),
        _ => return None,
    };
    Some(Operator(m))
}

/// Tensor product of Paulis; the leftmost letter acts on qubit 0, which is the
/// most significant factor of the Kronecker product.
pub fn pauli_string(s: &str) -> Result<Operator> {
    if s.is_empty() {
        return Err(QmrError::invalid("empty Pauli string"));
    }
    let mut acc: Option<Operator> = None;
    for c in s.chars() {
        let p = pauli(c)
            .ok_or_else(|| QmrError::invalid(format!("invalid Pauli letter `{c}` in `{s}`")))?;
        acc = Some(match acc {
            None => p,
            Some(a) => a.kron(&p),
        });
    }
    Ok(acc.expect("non-empty string"))
}

/// Single-site Pauli `σ_letter` on `site` of an `n_qubits` register.
pub fn local_pauli(letter: char, site: usize, n_qubits: usize) -> Result<Operator> {
    if site >= n_qubits {
        return Err(QmrError::invalid(format!(
            "site {site} out of range for {n_qubits} qubits"
        )));
    }
    let s: String = (0..n_qubits)
        .map(|k| if k == site { letter } else { 'I' })
        .collect();
    pauli_string(&s)
}

/// Hilbert–Schmidt inner product `tr(A†B)`.
pub fn hs_inner(a: &Operator, b: &Operator) -> Result<C64> {
    check_dim(a.dim(), b.dim())?;
    Ok(a.0.dotc(&b.0))
}

/// Validates a density operator: self-adjoint, unit trace, positive semidefinite.
pub fn validate_density(rho: &Operator) -> Result<()> {
    let herm = rho.hermiticity_residual();
    if herm > DEFAULT_TOL * rho.norm().max(1.0) {
        return Err(QmrError::invalid(format!(
            "state is not self-adjoint (residual {herm:.3e})"
        )));
    }
    let tr = rho.trace();
    if (tr.re - 1.0).abs() > STATE_TOL || tr.im.abs() > STATE_TOL {
        return Err(QmrError::invalid(format!(
            "state trace is {tr}, expected 1"
        )));
    }
    let h = crate::linalg::hermitian_part(rho.matrix());
    let min = h.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -STATE_TOL {
        return Err(QmrError::invalid(format!(
            "state has negative eigenvalue {min:.3e}"
        )));
    }
    Ok(())
}

/// A subspace of operator space held as an HS-orthonormal basis.
#[derive(Clone, Debug)]
pub struct OperatorSubspace {
    dim_h: usize,
    basis: Vec<Operator>,
}

impl OperatorSubspace {
    /// The zero subspace of `𝔅(ℂⁿ)`. Only used as a starting point for
    /// incremental constructions.
    pub(crate) fn empty(dim_h: usize) -> Self {
        OperatorSubspace {
            dim_h,
            basis: Vec::new(),
        }
    }

    /// Builds a subspace from a basis that is already orthonormal.
    pub fn from_orthonormal(dim_h: usize, basis: Vec<Operator>, tol: f64) -> Result<Self> {
        for b in &basis {
            check_dim(dim_h, b.dim())?;
        }
        let s = OperatorSubspace { dim_h, basis };
        let dev = s.orthonormality_residual();
        if dev > tol {
            return Err(QmrError::invalid(format!(
                "basis is not orthonormal (max Gram deviation {dev:.3e})"
            )));
        }
        Ok(s)
    }

    /// All of `𝔅(ℂⁿ)` in the matrix-unit basis.
    pub fn full(dim_h: usize) -> Self {
        let mut basis = Vec::with_capacity(dim_h * dim_h);
        for j in 0..dim_h {
            for i in 0..dim_h {
                basis.push(Operator::unit(dim_h, i, j));
            }
        }
        OperatorSubspace { dim_h, basis }
    }

    pub fn dim_h(&self) -> usize {
        self.dim_h
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[Operator] {
        &self.basis
    }

    pub fn is_full(&self) -> bool {
        self.dim() == self.dim_h * self.dim_h
    }

    /// Largest deviation of the Gram matrix from the identity.
    pub fn orthonormality_residual(&self) -> f64 {
        let mut dev: f64 = 0.0;
        for (i, a) in self.basis.iter().enumerate() {
            for (j, b) in self.basis.iter().enumerate().skip(i) {
                let g = a.0.dotc(&b.0);
                let target = if i == j { ONE } else { ZERO };
                dev = dev.max((g - target).norm());
            }
        }
        dev
    }

    /// Orthogonal projection of `x` and the HS norm of what is left over.
    pub fn residual(&self, x: &Operator) -> Result<(Operator, f64)> {
        check_dim(self.dim_h, x.dim())?;
        let mut proj = CMatrix::zeros(self.dim_h, self.dim_h);
        for b in &self.basis {
            let c = b.0.dotc(&x.0);
            proj.zip_apply(&b.0, |p, q| *p += c * q);
        }
        let res = (&x.0 - &proj).norm();
        Ok((Operator(proj), res))
    }

    /// Membership test: residual at most `tol · max(1, ‖x‖)`.
    pub fn contains(&self, x: &Operator, tol: f64) -> Result<bool> {
        let (_, r) = self.residual(x)?;
        Ok(r <= tol * x.norm().max(1.0))
    }

    /// Relative residual `‖x − Πx‖ / max(1, ‖x‖)`.
    pub fn relative_residual(&self, x: &Operator) -> Result<f64> {
        let (_, r) = self.residual(x)?;
        Ok(r / x.norm().max(1.0))
    }

    /// Gram–Schmidt step: orthogonalizes `x` against the basis (two passes) and
    /// appends it when the leftover exceeds `tol · max(1, ‖x‖)`.
    pub(crate) fn try_push(&mut self, x: &Operator, tol: f64) -> bool {
        let input_norm = x.norm();
        let mut w = x.0.clone();
        for _ in 0..2 {
            for b in &self.basis {
                let c = b.0.dotc(&w);
                w.zip_apply(&b.0, |p, q| *p -= c * q);
            }
        }
        let r = w.norm();
        if r <= tol * input_norm.max(1.0) || r == 0.0 {
            return false;
        }
        w /= C64::new(r, 0.0);
        self.basis.push(Operator(w));
        true
    }

    /// Largest relative residual of `other`'s basis elements inside `self`.
    pub fn containment_residual(&self, other: &OperatorSubspace) -> Result<f64> {
        check_dim(self.dim_h, other.dim_h)?;
        let mut worst: f64 = 0.0;
        for b in &other.basis {
            worst = worst.max(self.relative_residual(b)?);
        }
        Ok(worst)
    }

    /// `other ⊆ self` up to `tol`.
    pub fn contains_subspace(&self, other: &OperatorSubspace, tol: f64) -> Result<bool> {
        Ok(self.containment_residual(other)? <= tol)
    }
}

/// HS-orthonormal basis of `span(ops)` by modified Gram–Schmidt with
/// re-orthogonalization, in input order.
pub fn orthonormalize(ops: &[Operator], tol: f64) -> Result<OperatorSubspace> {
    let first = ops
        .first()
        .ok_or_else(|| QmrError::invalid("cannot orthonormalize an empty list"))?;
    if !(tol > 0.0) {
        return Err(QmrError::invalid("tolerance must be positive"));
    }
    let n = first.dim();
    let mut s = OperatorSubspace::empty(n);
    for op in ops {
        check_dim(n, op.dim())?;
        s.try_push(op, tol);
    }
    Ok(s)
}

/// Projection of `x` onto `s` and the residual norm.
pub fn residual(s: &OperatorSubspace, x: &Operator) -> Result<(Operator, f64)> {
    s.residual(x)
}

/// Equality of subspaces: each basis is contained in the other within `tol`.
pub fn subspace_equal(a: &OperatorSubspace, b: &OperatorSubspace, tol: f64) -> Result<bool> {
    check_dim(a.dim_h, b.dim_h)?;
    Ok(a.contains_subspace(b, tol)? && b.contains_subspace(a, tol)?)
}

/// Matrix of a linear map `𝔅(ℂ^{n_in}) → 𝔅(ℂ^{n_out})` acting on column-stacked
/// vectors. Square maps (`n_in == n_out`) are the usual superoperators.
#[derive(Clone, Debug)]
pub struct Superoperator {
    dim_in: usize,
    dim_out: usize,
    matrix: CMatrix,
}

impl Superoperator {
    pub fn from_matrix(dim_in: usize, dim_out: usize, matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() != dim_out * dim_out || matrix.ncols() != dim_in * dim_in {
            return Err(QmrError::invalid(format!(
                "superoperator matrix is {}x{}, expected {}x{}",
                matrix.nrows(),
                matrix.ncols(),
                dim_out * dim_out,
                dim_in * dim_in
            )));
        }
        if matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(QmrError::invalid("superoperator has non-finite entries"));
        }
        Ok(Superoperator {
            dim_in,
            dim_out,
            matrix,
        })
    }

    pub fn identity(n: usize) -> Self {
        Superoperator {
            dim_in: n,
            dim_out: n,
            matrix: CMatrix::identity(n * n, n * n),
        }
    }

    pub fn zeros(n: usize) -> Self {
        Superoperator {
            dim_in: n,
            dim_out: n,
            matrix: CMatrix::zeros(n * n, n * n),
        }
    }

    /// Hilbert dimension of a square superoperator.
    pub fn dim(&self) -> usize {
        self.dim_in
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    pub fn is_square(&self) -> bool {
        self.dim_in == self.dim_out
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn apply(&self, x: &Operator) -> Result<Operator> {
        check_dim(self.dim_in, x.dim())?;
        let v = &self.matrix * x.vec();
        Operator::from_vec(self.dim_out, &v)
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Superoperator) -> Result<Superoperator> {
        check_dim(self.dim_in, other.dim_out)?;
        Ok(Superoperator {
            dim_in: other.dim_in,
            dim_out: self.dim_out,
            matrix: &self.matrix * &other.matrix,
        })
    }

    pub fn add(&self, other: &Superoperator) -> Result<Superoperator> {
        check_dim(self.dim_in, other.dim_in)?;
        check_dim(self.dim_out, other.dim_out)?;
        Ok(Superoperator {
            dim_in: self.dim_in,
            dim_out: self.dim_out,
            matrix: &self.matrix + &other.matrix,
        })
    }

    pub fn scale(&self, c: f64) -> Superoperator {
        Superoperator {
            dim_in: self.dim_in,
            dim_out: self.dim_out,
            matrix: &self.matrix * C64::new(c, 0.0),
        }
    }

    /// Choi matrix `Σ_ij E_ij ⊗ Φ(E_ij)`, of size `n_in·n_out`.
    pub fn choi(&self) -> CMatrix {
        let (a, b) = (self.dim_in, self.dim_out);
        let mut c = CMatrix::zeros(a * b, a * b);
        for j in 0..a {
            for i in 0..a {
                let col = self.matrix.column(i + j * a);
                for s in 0..b {
                    for r in 0..b {
                        c[(i * b + r, j * b + s)] = col[r + s * b];
                    }
                }
            }
        }
        c
    }

    /// HS adjoint map, `⟨Φ(X), Y⟩ = ⟨X, Φ†(Y)⟩`.
    pub fn hs_adjoint(&self) -> Superoperator {
        Superoperator {
            dim_in: self.dim_out,
            dim_out: self.dim_in,
            matrix: self.matrix.adjoint(),
        }
    }
}

/// Superoperator matrix of a linear map, built column by column from its action
/// on the matrix units.
pub fn superoperator_from_map<F>(f: F, n: usize) -> Result<Superoperator>
where
    F: Fn(&Operator) -> Operator,
{
    linear_map_matrix(f, n, n)
}

/// As [`superoperator_from_map`] for maps between spaces of different dimension.
pub fn linear_map_matrix<F>(f: F, n_in: usize, n_out: usize) -> Result<Superoperator>
where
    F: Fn(&Operator) -> Operator,
{
    let mut m = CMatrix::zeros(n_out * n_out, n_in * n_in);
    for j in 0..n_in {
        for i in 0..n_in {
            let y = f(&Operator::unit(n_in, i, j));
            check_dim(n_out, y.dim())?;
            m.set_column(i + j * n_in, &y.vec());
        }
    }
    Superoperator::from_matrix(n_in, n_out, m)
}

/// `vec(A X B) = (Bᵀ ⊗ A) vec(X)`.
pub fn sandwich_superoperator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    b.transpose().kronecker(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use crate::linalg::random_operator;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn hs_inner_of_paulis() {
        let x = pauli('X').unwrap();
        let z = pauli('Z').unwrap();
        let id = Operator::identity(2);
        assert_eq!(hs_inner(&x, &x).unwrap(), c(2.0));
        assert_eq!(hs_inner(&id, &z).unwrap(), ZERO);
    }

    #[test]
    fn hs_inner_self_is_entry_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_operator(3, &mut rng);
        let oracle: f64 = a.matrix().iter().map(|z| z.norm_sqr()).sum();
        let v = hs_inner(&a, &a).unwrap();
        assert!((v.re - oracle).abs() < 1e-12 && v.im.abs() < 1e-12);
    }

    #[test]
    fn hs_inner_dimension_mismatch() {
        assert!(hs_inner(&Operator::identity(2), &Operator::identity(3)).is_err());
    }

    #[test]
    fn orthonormalize_drops_dependent() {
        let id = Operator::identity(2);
        let z = pauli('Z').unwrap();
        let s = orthonormalize(&[id.clone(), z.clone(), &id + &z], DEFAULT_TOL).unwrap();
        assert_eq!(s.dim(), 2);
    }

    #[test]
    fn orthonormalize_normalizes() {
        let x = pauli('X').unwrap();
        let s = orthonormalize(&[x.clone()], DEFAULT_TOL).unwrap();
        let expected = x.scale(c(1.0 / 2f64.sqrt()));
        assert!((s.basis()[0].matrix() - expected.matrix()).norm() < 1e-15);
    }

    #[test]
    fn orthonormalize_rejects_empty() {
        assert!(orthonormalize(&[], DEFAULT_TOL).is_err());
    }

    #[test]
    fn orthonormalize_random_rank_matches_svd() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        // 10 operators living in a 6-dimensional span.
        let gens: Vec<Operator> = (0..6).map(|_| random_operator(4, &mut rng)).collect();
        let ops: Vec<Operator> = (0..10)
            .map(|k| {
                let a = &gens[k % 6];
                let b = &gens[(k * 5 + 1) % 6];
                &a.scale(C64::new(1.0, k as f64)) + &b.scale(c(0.5))
            })
            .collect();
        let mut stacked = CMatrix::zeros(16, ops.len());
        for (k, o) in ops.iter().enumerate() {
            stacked.set_column(k, &o.vec());
        }
        let sv = stacked.singular_values();
        let oracle_rank = sv.iter().filter(|&&s| s > 1e-10 * sv.max()).count();
        let s = orthonormalize(&ops, DEFAULT_TOL).unwrap();
        assert_eq!(s.dim(), oracle_rank);
        assert!(s.dim() <= 10);
        assert!(s.orthonormality_residual() < 1e-12);
    }

    #[test]
    fn residual_examples() {
        let s = orthonormalize(
            &[Operator::identity(2), pauli('Z').unwrap()],
            DEFAULT_TOL,
        )
        .unwrap();
        let (_, r) = s.residual(&pauli('Y').unwrap()).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-14);
        let (_, r) = s.residual(&pauli('Z').unwrap()).unwrap();
        assert!(r < 1e-14);
    }

    #[test]
    fn residual_of_member_built_from_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ops: Vec<Operator> = (0..5).map(|_| random_operator(3, &mut rng)).collect();
        let s = orthonormalize(&ops, DEFAULT_TOL).unwrap();
        let mut x = Operator::zeros(3);
        for (k, b) in ops.iter().enumerate() {
            x = &x + &b.scale(C64::new(0.3 * k as f64 - 1.0, 0.7));
        }
        let (_, r) = s.residual(&x).unwrap();
        assert!(r <= 1e-12);
    }

    #[test]
    fn subspace_equal_examples() {
        let id = Operator::identity(2);
        let z = pauli('Z').unwrap();
        let a = orthonormalize(&[id.clone(), z.clone()], DEFAULT_TOL).unwrap();
        let b = orthonormalize(&[&id + &z, &id - &z], DEFAULT_TOL).unwrap();
        assert!(subspace_equal(&a, &b, 1e-10).unwrap());
        let sx = orthonormalize(&[pauli('X').unwrap()], DEFAULT_TOL).unwrap();
        let sy = orthonormalize(&[pauli('Y').unwrap()], DEFAULT_TOL).unwrap();
        assert!(!subspace_equal(&sx, &sy, 1e-10).unwrap());
    }

    #[test]
    fn superoperator_identity_and_dephasing() {
        let id = superoperator_from_map(|x| x.clone(), 2).unwrap();
        assert_eq!(id.matrix(), &CMatrix::identity(4, 4));

        let z = pauli('Z').unwrap();
        let deph = superoperator_from_map(|x| &(&z * x) * &z, 2).unwrap();
        for (letter, sign) in [('I', 1.0), ('X', -1.0), ('Y', -1.0), ('Z', 1.0)] {
            let p = pauli(letter).unwrap();
            let out = deph.apply(&p).unwrap();
            assert!((out.matrix() - p.matrix() * c(sign)).norm() < 1e-15);
        }
    }

    #[test]
    fn superoperator_of_commutator_matches_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = crate::linalg::random_hermitian(3, &mut rng);
        let s = superoperator_from_map(|x| h.commutator(x), 3).unwrap();
        for _ in 0..10 {
            let x = random_operator(3, &mut rng);
            let direct = h.commutator(&x);
            assert!((s.apply(&x).unwrap().matrix() - direct.matrix()).norm() < 1e-12);
        }
    }

    #[test]
    fn sandwich_matches_vec_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_operator(3, &mut rng);
        let b = random_operator(3, &mut rng);
        let x = random_operator(3, &mut rng);
        let lhs = (&(&a * &x) * &b).vec();
        let rhs = sandwich_superoperator(a.matrix(), b.matrix()) * x.vec();
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn pauli_string_order() {
        let zi = pauli_string("ZI").unwrap();
        let expected = pauli('Z').unwrap().kron(&Operator::identity(2));
        assert_eq!(zi, expected);
        assert!(pauli_string("ZQ").is_err());
    }

    #[test]
    fn density_validation() {
        let rho = Operator::identity(2).scale(c(0.5));
        assert!(validate_density(&rho).is_ok());
        assert!(validate_density(&Operator::identity(2)).is_err());
        assert!(validate_density(&pauli('Z').unwrap()).is_err());
    }
}
