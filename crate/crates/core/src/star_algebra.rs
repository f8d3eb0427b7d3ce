//! Unital ∗-algebras of operators: closure of a subspace, commutants and the
//! Wedderburn decomposition `U 𝒜 U† = ⊕_k 𝔅(ℂ^{dF_k}) ⊗ 𝟙_{dG_k}`.

use log::debug;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, QmrError, Result};
use crate::linalg::{
    block_hermitian_spectrum, cluster_sorted, hermitian_eigen, polar_unitary, random_complex,
    random_real,
};
use crate::operator::{CMatrix, Operator, OperatorSubspace, C64, ZERO};

/// Residual tolerance for structure certificates.
pub const STRUCT_TOL: f64 = 1e-8;

const MAX_RESAMPLES: usize = 5;
const CLUSTER_GAP: f64 = 1e-8;

/// Block structure of a ∗-algebra. Row `o_k + f·dG_k + g` of `u` is the
/// `f`-th basis vector of the `g`-th copy of `ℂ^{dF_k}` in block `k`.
#[derive(Clone, Debug)]
pub struct WedderburnStructure {
    pub dim_h: usize,
    pub u: CMatrix,
    /// `(dF_k, dG_k)` per block.
    pub blocks: Vec<(usize, usize)>,
}

impl WedderburnStructure {
    /// Row offset of each block inside `u`.
    pub fn block_offsets(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.blocks.len());
        let mut o = 0;
        for &(f, g) in &self.blocks {
            out.push(o);
            o += f * g;
        }
        out
    }

    /// Offsets of the blocks in the reduced space `⊕_k ℂ^{dF_k}`.
    pub fn reduced_offsets(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.blocks.len());
        let mut o = 0;
        for &(f, _) in &self.blocks {
            out.push(o);
            o += f;
        }
        out
    }

    pub fn dim_reduced(&self) -> usize {
        self.blocks.iter().map(|b| b.0).sum()
    }

    pub fn algebra_dim(&self) -> usize {
        self.blocks.iter().map(|b| b.0 * b.0).sum()
    }

    pub fn commutant_dim(&self) -> usize {
        self.blocks.iter().map(|b| b.1 * b.1).sum()
    }

    /// Rows of `u` belonging to block `k` (a `dF·dG × n` coisometry).
    pub fn block_rows(&self, k: usize) -> CMatrix {
        let off = self.block_offsets()[k];
        let (f, g) = self.blocks[k];
        self.u.rows(off, f * g).into_owned()
    }
}

fn is_star_closed(a: &OperatorSubspace, tol: f64) -> Result<bool> {
    for b in a.basis() {
        if !a.contains(&b.adjoint(), tol)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Smallest unital ∗-algebra containing `s`. Closure proceeds by multiplying
/// basis elements on the left by a ∗-closed generating set until no new
/// directions appear; the result is audited on all pairwise products.
pub fn algebra_closure(s: &OperatorSubspace, tol: f64, max_dim: usize) -> Result<OperatorSubspace> {
    let n = s.dim_h();
    let mut seeds = vec![Operator::identity(n)];
    for b in s.basis() {
        seeds.push(b.clone());
        seeds.push(b.adjoint());
    }
    let gens = crate::operator::orthonormalize(&seeds, tol)?;
    let mut space = gens.clone();
    let mut next = 0;
    while next < space.dim() && !space.is_full() {
        let b = space.basis()[next].clone();
        next += 1;
        for g in gens.basis() {
            space.try_push(&(g * &b), tol);
            if space.dim() > max_dim {
                return Err(QmrError::NotConverged(format!(
                    "algebra closure exceeded max_dim = {max_dim}"
                )));
            }
        }
    }
    if !space.is_full() {
        let audit = closure_residual(&space)?;
        if audit > tol.max(STRUCT_TOL) {
            return Err(QmrError::Numerical(format!(
                "algebra closure audit failed: product residual {audit:.3e}"
            )));
        }
    }
    debug!("algebra closure: dim {} from {} generators", space.dim(), gens.dim());
    Ok(space)
}

/// Largest relative residual of `B_i B_j` and `B_i†` inside the subspace.
pub fn closure_residual(a: &OperatorSubspace) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for x in a.basis() {
        worst = worst.max(a.relative_residual(&x.adjoint())?);
        for y in a.basis() {
            worst = worst.max(a.relative_residual(&(x * y))?);
        }
    }
    Ok(worst)
}

/// `Σ_B C_B† C_B` with `C_B = 𝟙⊗B − Bᵀ⊗𝟙` the matrix of `X ↦ BX − XB`.
fn commutator_gram(ops: &[&CMatrix], n: usize) -> CMatrix {
    let id = CMatrix::identity(n, n);
    let mut g = CMatrix::zeros(n * n, n * n);
    for b in ops {
        let bt = b.transpose();
        let bc = b.map(|z| z.conj());
        g += id.kronecker(&(b.adjoint() * *b));
        g -= bt.kronecker(&b.adjoint());
        g -= bc.kronecker(*b);
        g += (&bc * &bt).kronecker(&id);
    }
    g
}

/// Eigenvectors of a PSD Gram matrix with eigenvalue at most
/// `rel · max(λ_max, scale)`. `scale` is the size the Gram matrix would have
/// if nothing commuted, so an all-commuting input is not judged by roundoff.
fn gram_null_vectors(g: &CMatrix, rel: f64, scale: f64) -> Vec<DVector<C64>> {
    let spec = block_hermitian_spectrum(g, true);
    let lmax = spec.pairs.last().map(|p| p.0).unwrap_or(0.0).max(scale);
    spec.pairs
        .into_iter()
        .filter(|(l, _)| *l <= rel * lmax || lmax == 0.0)
        .map(|(_, v)| v)
        .collect()
}

fn commutes_with_all(x: &CMatrix, ops: &[&CMatrix]) -> f64 {
    ops.iter()
        .map(|b| (*b * x - x * *b).norm() / b.norm().max(1.0))
        .fold(0.0, f64::max)
}

/// Operators commuting with every element of `ops` (the commutant of the
/// algebra they generate), as an orthonormal subspace of `𝔅(ℂⁿ)`.
fn commutant_of(ops: &[&CMatrix], n: usize, tol: f64) -> Result<OperatorSubspace> {
    let g = commutator_gram(ops, n);
    let scale = ops.iter().map(|b| b.norm_squared()).sum();
    let vecs = gram_null_vectors(&g, 1e-10, scale);
    let mut out = OperatorSubspace::empty(n);
    for v in vecs {
        let x = Operator::from_vec(n, &v)?;
        let r = commutes_with_all(x.matrix(), ops);
        if r > tol.max(STRUCT_TOL) * x.norm().max(1.0) {
            return Err(QmrError::Numerical(format!(
                "commutant candidate fails to commute (residual {r:.3e})"
            )));
        }
        out.try_push(&x, tol);
    }
    Ok(out)
}

/// Commutant `{X : XB = BX for all B ∈ 𝒜}` of a ∗-closed subspace.
pub fn commutant(a: &OperatorSubspace, tol: f64) -> Result<OperatorSubspace> {
    if !is_star_closed(a, tol.max(STRUCT_TOL))? {
        return Err(QmrError::invalid("commutant requires a ∗-closed subspace"));
    }
    let n = a.dim_h();
    if a.dim() == 0 {
        return Ok(OperatorSubspace::full(n));
    }
    let ops: Vec<&CMatrix> = a.basis().iter().map(|b| b.matrix()).collect();
    commutant_of(&ops, n, tol)
}

/// Hermitian orthonormal basis of a ∗-closed subspace.
fn hermitian_basis(a: &OperatorSubspace, tol: f64) -> OperatorSubspace {
    let n = a.dim_h();
    let mut out = OperatorSubspace::empty(n);
    let half = C64::new(0.5, 0.0);
    let half_i = C64::new(0.0, -0.5);
    for b in a.basis() {
        let m = b.matrix();
        let re = (m + m.adjoint()) * half;
        let im = (m - m.adjoint()) * half_i;
        out.try_push(&Operator::from_matrix_unchecked(re), tol);
        out.try_push(&Operator::from_matrix_unchecked(im), tol);
    }
    out
}

fn random_hermitian_element(h: &OperatorSubspace, rng: &mut ChaCha8Rng) -> CMatrix {
    let n = h.dim_h();
    let mut x = CMatrix::zeros(n, n);
    for b in h.basis() {
        x += b.matrix() * C64::new(random_real(rng), 0.0);
    }
    crate::linalg::hermitian_part(&x)
}

fn random_element(a: &OperatorSubspace, rng: &mut ChaCha8Rng) -> CMatrix {
    let n = a.dim_h();
    let mut x = CMatrix::zeros(n, n);
    for b in a.basis() {
        x += b.matrix() * random_complex(rng);
    }
    x
}

/// Center `𝒜 ∩ 𝒜′`, found in coefficient space: `X = Σ c_i B_i` with
/// `[X, g] = 0` for a few random elements `g`, then audited against the
/// whole basis (falling back to the full constraint set if the audit fails).
fn center(a: &OperatorSubspace, tol: f64, rng: &mut ChaCha8Rng) -> Result<OperatorSubspace> {
    let n = a.dim_h();
    let d = a.dim();
    let solve = |constraints: &[CMatrix]| -> Result<OperatorSubspace> {
        // Gram of the stacked map c ↦ ([Σ c_i B_i, g_j])_j.
        let comms: Vec<Vec<CMatrix>> = constraints
            .iter()
            .map(|g| {
                a.basis()
                    .iter()
                    .map(|b| b.matrix() * g - g * b.matrix())
                    .collect()
            })
            .collect();
        let mut gram = CMatrix::zeros(d, d);
        for cs in &comms {
            for i in 0..d {
                for k in i..d {
                    let v = cs[i].dotc(&cs[k]);
                    gram[(i, k)] += v;
                    if k != i {
                        gram[(k, i)] += v.conj();
                    }
                }
            }
        }
        let mut z = OperatorSubspace::empty(n);
        let scale = constraints.iter().map(|g| g.norm_squared()).sum();
        for c in gram_null_vectors(&gram, 1e-12, scale) {
            let mut x = CMatrix::zeros(n, n);
            for (i, b) in a.basis().iter().enumerate() {
                x += b.matrix() * c[i];
            }
            z.try_push(&Operator::from_matrix_unchecked(x), tol);
        }
        Ok(z)
    };
    let all: Vec<&CMatrix> = a.basis().iter().map(|b| b.matrix()).collect();
    let samples: Vec<CMatrix> = (0..3).map(|_| random_element(a, rng)).collect();
    let z = solve(&samples)?;
    let audit = z
        .basis()
        .iter()
        .map(|x| commutes_with_all(x.matrix(), &all))
        .fold(0.0, f64::max);
    if audit <= STRUCT_TOL {
        return Ok(z);
    }
    debug!("center audit failed ({audit:.3e}); using the full constraint set");
    let full: Vec<CMatrix> = all.iter().map(|m| (*m).clone()).collect();
    solve(&full)
}

/// Orthonormal basis of the range of the projector `p` (rank `r`), built by
/// Gram–Schmidt on its columns with pivoting towards the largest residual,
/// ties broken by lowest index. Independent of how `p` was computed.
fn canonical_range_basis(p: &CMatrix, r: usize) -> Result<Vec<DVector<C64>>> {
    let n = p.nrows();
    let mut basis: Vec<DVector<C64>> = Vec::with_capacity(r);
    let mut cols: Vec<DVector<C64>> = (0..n).map(|i| p.column(i).into_owned()).collect();
    let mut used = vec![false; n];
    for _ in 0..r {
        let norms: Vec<f64> = cols.iter().map(|c| c.norm()).collect();
        let max = (0..n).filter(|&i| !used[i]).map(|i| norms[i]).fold(0.0, f64::max);
        if max < 1e-6 {
            return Err(QmrError::Numerical(
                "projector range basis lost rank".into(),
            ));
        }
        let pick = (0..n)
            .find(|&i| !used[i] && norms[i] >= (1.0 - 1e-9) * max)
            .expect("maximum exists");
        used[pick] = true;
        let mut v = cols[pick].clone();
        for b in &basis {
            let c = b.dotc(&v);
            v -= b * c;
        }
        v /= C64::new(v.norm(), 0.0);
        for (i, c) in cols.iter_mut().enumerate() {
            if !used[i] {
                let proj = v.dotc(c);
                *c -= &v * proj;
            }
        }
        basis.push(v);
    }
    Ok(basis)
}

fn columns_to_matrix(cols: &[DVector<C64>], n: usize) -> CMatrix {
    let mut m = CMatrix::zeros(n, cols.len());
    for (j, c) in cols.iter().enumerate() {
        m.set_column(j, c);
    }
    m
}

struct RawBlock {
    df: usize,
    dg: usize,
    /// `copies[g]` is an `n × dF` isometry onto the `g`-th copy.
    copies: Vec<CMatrix>,
    first_index: usize,
}

fn isqrt(x: usize) -> Option<usize> {
    let r = (x as f64).sqrt().round() as usize;
    (r * r == x).then_some(r)
}

/// Eigenspaces of a random Hermitian element of `space`, grouped by cluster;
/// retries until exactly `expected` clusters appear.
fn separate(
    space: &OperatorSubspace,
    expected: usize,
    rng: &mut ChaCha8Rng,
    what: &str,
) -> Result<Vec<CMatrix>> {
    let herm = hermitian_basis(space, 1e-10);
    for attempt in 0..MAX_RESAMPLES {
        let x = random_hermitian_element(&herm, rng);
        let (vals, vecs) = hermitian_eigen(&x);
        let clusters = cluster_sorted(&vals, CLUSTER_GAP);
        if clusters.len() == expected {
            return Ok(clusters
                .iter()
                .map(|c| {
                    let mut m = CMatrix::zeros(vecs.nrows(), c.len());
                    for (dst, &src) in c.iter().enumerate() {
                        m.set_column(dst, &vecs.column(src));
                    }
                    m
                })
                .collect());
        }
        debug!(
            "{what}: attempt {attempt} found {} clusters, expected {expected}",
            clusters.len()
        );
    }
    Err(QmrError::Numerical(format!(
        "{what}: could not separate {expected} eigenvalue clusters after {MAX_RESAMPLES} samples"
    )))
}

fn decompose_block(
    a: &OperatorSubspace,
    q: &CMatrix,
    tol: f64,
    rng: &mut ChaCha8Rng,
) -> Result<RawBlock> {
    let n = a.dim_h();
    let dk = q.ncols();
    let mut local = OperatorSubspace::empty(dk);
    for b in a.basis() {
        let m = q.adjoint() * b.matrix() * q;
        local.try_push(&Operator::from_matrix_unchecked(m), tol);
    }
    let df = isqrt(local.dim()).ok_or_else(|| {
        QmrError::Numerical(format!(
            "central block algebra has dimension {}, not a perfect square",
            local.dim()
        ))
    })?;
    if df == 0 || dk % df != 0 {
        return Err(QmrError::Numerical(format!(
            "block of size {dk} is not a multiple of its factor dimension {df}"
        )));
    }
    let dg = dk / df;
    let projector = q * q.adjoint();
    let first_index = (0..n)
        .find(|&i| projector[(i, i)].re > 1e-8)
        .unwrap_or(n);

    let copies = if dg == 1 {
        vec![columns_to_matrix(&canonical_range_basis(&projector, dk)?, n)]
    } else {
        let ops: Vec<&CMatrix> = local.basis().iter().map(|b| b.matrix()).collect();
        let rel = commutant_of(&ops, dk, tol)?;
        if rel.dim() != dg * dg {
            return Err(QmrError::Numerical(format!(
                "relative commutant has dimension {}, expected {}",
                rel.dim(),
                dg * dg
            )));
        }
        let spaces = separate(&rel, dg, rng, "multiplicity splitting")?;
        if spaces.iter().any(|s| s.ncols() != df) {
            return Err(QmrError::Numerical(
                "multiplicity eigenspaces have unequal dimensions".into(),
            ));
        }
        let v: Vec<CMatrix> = spaces.iter().map(|e| q * e).collect();
        let first = columns_to_matrix(
            &canonical_range_basis(&(&v[0] * v[0].adjoint()), df)?,
            n,
        );
        let t_local = random_element(&rel, rng);
        let t = q * t_local * q.adjoint();
        let mut copies = vec![first.clone()];
        for vj in v.iter().skip(1) {
            let overlap = vj.adjoint() * &t * &first;
            if overlap.norm() < 1e-8 {
                return Err(QmrError::Numerical(
                    "random intertwiner vanished between multiplicity copies".into(),
                ));
            }
            copies.push(vj * polar_unitary(&overlap));
        }
        copies
    };
    Ok(RawBlock {
        df,
        dg,
        copies,
        first_index,
    })
}

/// Wedderburn decomposition of a unital ∗-algebra. Randomized steps draw from
/// a ChaCha8 stream seeded with `seed`; every outcome is verified.
pub fn wedderburn(a: &OperatorSubspace, tol: f64, seed: u64) -> Result<WedderburnStructure> {
    let n = a.dim_h();
    if a.is_full() {
        return Ok(WedderburnStructure {
            dim_h: n,
            u: CMatrix::identity(n, n),
            blocks: vec![(n, 1)],
        });
    }
    if !a.contains(&Operator::identity(n), tol.max(STRUCT_TOL))? {
        return Err(QmrError::invalid("algebra does not contain the identity"));
    }
    if !is_star_closed(a, tol.max(STRUCT_TOL))? {
        return Err(QmrError::invalid("subspace is not ∗-closed"));
    }
    let closure = closure_residual(a)?;
    if closure > tol.max(STRUCT_TOL) {
        return Err(QmrError::invalid(format!(
            "subspace is not closed under products (residual {closure:.3e})"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = center(a, tol, &mut rng)?;
    debug!("center dimension {}", z.dim());
    let central = separate(&z, z.dim(), &mut rng, "central projections")?;

    let mut raw = Vec::with_capacity(central.len());
    for q in &central {
        raw.push(decompose_block(a, q, tol, &mut rng)?);
    }
    raw.sort_by(|x, y| {
        y.df.cmp(&x.df)
            .then(y.dg.cmp(&x.dg))
            .then(x.first_index.cmp(&y.first_index))
    });

    let mut u = CMatrix::zeros(n, n);
    let mut row = 0;
    for b in &raw {
        for f in 0..b.df {
            for g in 0..b.dg {
                let col = b.copies[g].column(f);
                for c in 0..n {
                    u[(row, c)] = col[c].conj();
                }
                row += 1;
            }
        }
    }
    if row != n {
        return Err(QmrError::Numerical(format!(
            "blocks cover {row} of {n} dimensions"
        )));
    }
    let w = WedderburnStructure {
        dim_h: n,
        u,
        blocks: raw.iter().map(|b| (b.df, b.dg)).collect(),
    };
    let (ok, res) = verify_structure(a, &w, STRUCT_TOL)?;
    if !ok {
        return Err(QmrError::Numerical(format!(
            "Wedderburn structure failed verification (residual {res:.3e})"
        )));
    }
    Ok(w)
}

/// Block-wise factor `M_k = tr_G(Y_k)/dG_k` of an operator `Y = U X U†`.
pub(crate) fn block_factor(y: &CMatrix, off: usize, df: usize, dg: usize) -> CMatrix {
    let mut m = CMatrix::zeros(df, df);
    for f in 0..df {
        for f2 in 0..df {
            let mut acc = ZERO;
            for g in 0..dg {
                acc += y[(off + f * dg + g, off + f2 * dg + g)];
            }
            m[(f, f2)] = acc / C64::new(dg as f64, 0.0);
        }
    }
    m
}

/// Checks unitarity of `U`, the dimension counts, and that every basis
/// element of `a` becomes `⊕_k M_k ⊗ 𝟙_{dG_k}` after conjugation.
pub fn verify_structure(
    a: &OperatorSubspace,
    w: &WedderburnStructure,
    tol: f64,
) -> Result<(bool, f64)> {
    let n = a.dim_h();
    check_dim(n, w.dim_h)?;
    check_dim(n, w.u.nrows())?;
    check_dim(n, w.u.ncols())?;
    let mut worst = (w.u.adjoint() * &w.u - CMatrix::identity(n, n)).norm();
    let covered: usize = w.blocks.iter().map(|b| b.0 * b.1).sum();
    if covered != n || w.algebra_dim() != a.dim() || w.blocks.iter().any(|b| b.0 == 0 || b.1 == 0)
    {
        return Ok((false, f64::INFINITY));
    }
    let offsets = w.block_offsets();
    for b in a.basis() {
        let y = &w.u * b.matrix() * w.u.adjoint();
        let mut rebuilt = CMatrix::zeros(n, n);
        for (k, &(df, dg)) in w.blocks.iter().enumerate() {
            let m = block_factor(&y, offsets[k], df, dg);
            let blk = m.kronecker(&CMatrix::identity(dg, dg));
            rebuilt
                .view_mut((offsets[k], offsets[k]), (df * dg, df * dg))
                .copy_from(&blk);
        }
        worst = worst.max((y - rebuilt).norm() / b.norm().max(1.0));
    }
    Ok((worst <= tol, worst))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{random_hermitian, random_unitary};
    use crate::operator::{local_pauli, orthonormalize, pauli, subspace_equal, ONE};

    fn span(ops: &[Operator]) -> OperatorSubspace {
        orthonormalize(ops, 1e-10).unwrap()
    }

    fn diagonal_algebra(n: usize) -> OperatorSubspace {
        span(&(0..n).map(|i| Operator::unit(n, i, i)).collect::<Vec<_>>())
    }

    fn central_spin_frame(nbath: usize) -> OperatorSubspace {
        let nb = 1usize << nbath;
        let mut ops = Vec::new();
        for a in ['I', 'X', 'Y', 'Z'] {
            for q in 0..nb {
                ops.push(pauli(a).unwrap().kron(&Operator::unit(nb, q, q)));
            }
        }
        span(&ops)
    }

    #[test]
    fn closure_of_algebra_is_itself() {
        let s = span(&[Operator::identity(2), pauli('Z').unwrap()]);
        let c = algebra_closure(&s, 1e-10, 4).unwrap();
        assert_eq!(c.dim(), 2);
        assert!(subspace_equal(&s, &c, 1e-10).unwrap());
    }

    #[test]
    fn closure_generates_full_algebra() {
        let s = span(&[Operator::identity(2), pauli('X').unwrap(), pauli('Y').unwrap()]);
        let c = algebra_closure(&s, 1e-10, 4).unwrap();
        assert_eq!(c.dim(), 4);
    }

    #[test]
    fn closure_respects_max_dim() {
        let s = span(&[pauli('X').unwrap(), pauli('Y').unwrap()]);
        assert!(matches!(
            algebra_closure(&s, 1e-10, 3),
            Err(QmrError::NotConverged(_))
        ));
    }

    #[test]
    fn commutant_examples() {
        let full = OperatorSubspace::full(3);
        assert_eq!(commutant(&full, 1e-10).unwrap().dim(), 1);
        let id = span(&[Operator::identity(3)]);
        assert_eq!(commutant(&id, 1e-10).unwrap().dim(), 9);
        let diag = diagonal_algebra(3);
        let c = commutant(&diag, 1e-10).unwrap();
        assert!(subspace_equal(&c, &diag, 1e-9).unwrap());
    }

    #[test]
    fn commutant_rejects_non_star_closed() {
        let s = span(&[Operator::unit(2, 0, 1)]);
        assert!(commutant(&s, 1e-10).is_err());
    }

    #[test]
    fn wedderburn_full_and_diagonal() {
        let w = wedderburn(&OperatorSubspace::full(3), 1e-10, 1).unwrap();
        assert_eq!(w.blocks, vec![(3, 1)]);
        let diag = diagonal_algebra(4);
        let w = wedderburn(&diag, 1e-10, 1).unwrap();
        assert_eq!(w.blocks, vec![(1, 1); 4]);
        assert!(verify_structure(&diag, &w, 1e-10).unwrap().0);
    }

    #[test]
    fn wedderburn_central_spin_is_swap() {
        for nbath in 1..=2 {
            let a = central_spin_frame(nbath);
            let nb = 1usize << nbath;
            let w = wedderburn(&a, 1e-10, 7).unwrap();
            assert_eq!(w.blocks, vec![(2, 1); nb]);
            // Row q·2 + f picks |f⟩ ⊗ |q⟩, i.e. column f·2^N + q.
            let n = 2 * nb;
            let mut swap = CMatrix::zeros(n, n);
            for q in 0..nb {
                for f in 0..2 {
                    swap[(q * 2 + f, f * nb + q)] = ONE;
                }
            }
            assert!((&w.u - swap).norm() < 1e-12);
        }
    }

    #[test]
    fn wedderburn_multiplicity_block() {
        let ops: Vec<Operator> = ['I', 'X', 'Y', 'Z']
            .iter()
            .map(|&c| pauli(c).unwrap().kron(&Operator::identity(2)))
            .collect();
        let a = span(&ops);
        let w = wedderburn(&a, 1e-10, 3).unwrap();
        assert_eq!(w.blocks, vec![(2, 2)]);
        let (ok, res) = verify_structure(&a, &w, 1e-10).unwrap();
        assert!(ok, "residual {res}");
    }

    #[test]
    fn wedderburn_mixed_blocks_in_random_basis() {
        // 𝔅(ℂ²)⊗𝟙₂ ⊕ ℂ ⊕ ℂ, hidden by a random unitary.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v = random_unitary(6, &mut rng);
        let mut ops = Vec::new();
        for c in ['I', 'X', 'Y', 'Z'] {
            let mut m = CMatrix::zeros(6, 6);
            m.view_mut((0, 0), (4, 4))
                .copy_from(pauli(c).unwrap().kron(&Operator::identity(2)).matrix());
            ops.push(Operator::new(v.adjoint() * m * &v).unwrap());
        }
        for i in 4..6 {
            let m = Operator::unit(6, i, i);
            ops.push(Operator::new(v.adjoint() * m.matrix() * &v).unwrap());
        }
        let a = span(&ops);
        let w = wedderburn(&a, 1e-10, 11).unwrap();
        assert_eq!(w.blocks, vec![(2, 2), (1, 1), (1, 1)]);
        let (ok, res) = verify_structure(&a, &w, 1e-9).unwrap();
        assert!(ok, "residual {res}");
        assert_eq!(commutant(&a, 1e-10).unwrap().dim(), w.commutant_dim());
    }

    #[test]
    fn wedderburn_commutative_in_random_basis() {
        // Everything commutes, so every commutator Gram is pure roundoff.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let v = random_unitary(2, &mut rng);
        let p = Operator::new(v.adjoint() * Operator::unit(2, 0, 0).matrix() * &v).unwrap();
        let a = span(&[Operator::identity(2), p]);
        let w = wedderburn(&a, 1e-10, 3).unwrap();
        assert_eq!(w.blocks, vec![(1, 1), (1, 1)]);

        // ℂ⊗𝟙₂ ⊕ ℂ
        let v = random_unitary(3, &mut rng);
        let mut d = CMatrix::zeros(3, 3);
        d[(0, 0)] = ONE;
        d[(1, 1)] = ONE;
        let p = Operator::new(v.adjoint() * d * &v).unwrap();
        let a = span(&[Operator::identity(3), p]);
        let w = wedderburn(&a, 1e-10, 3).unwrap();
        assert_eq!(w.blocks, vec![(1, 2), (1, 1)]);
    }

    #[test]
    fn wedderburn_is_deterministic() {
        let a = central_spin_frame(2);
        let w1 = wedderburn(&a, 1e-10, 99).unwrap();
        let w2 = wedderburn(&a, 1e-10, 99).unwrap();
        assert_eq!(w1.u, w2.u);
    }

    #[test]
    fn verify_structure_rejects_random_unitary() {
        let a = diagonal_algebra(3);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = WedderburnStructure {
            dim_h: 3,
            u: random_unitary(3, &mut rng),
            blocks: vec![(1, 1); 3],
        };
        let (ok, res) = verify_structure(&a, &w, 1e-10).unwrap();
        assert!(!ok);
        assert!(res > 1e-3);
    }

    #[test]
    fn verify_structure_accepts_consistent_permutation() {
        let ops: Vec<Operator> = vec![
            Operator::identity(3),
            {
                let mut m = CMatrix::zeros(3, 3);
                m.view_mut((0, 0), (2, 2)).copy_from(pauli('X').unwrap().matrix());
                Operator::new(m).unwrap()
            },
            {
                let mut m = CMatrix::zeros(3, 3);
                m.view_mut((0, 0), (2, 2)).copy_from(pauli('Y').unwrap().matrix());
                Operator::new(m).unwrap()
            },
            {
                let mut m = CMatrix::zeros(3, 3);
                m.view_mut((0, 0), (2, 2)).copy_from(pauli('Z').unwrap().matrix());
                Operator::new(m).unwrap()
            },
            Operator::unit(3, 2, 2),
        ];
        let a = span(&ops);
        let w = wedderburn(&a, 1e-10, 1).unwrap();
        assert_eq!(w.blocks, vec![(2, 1), (1, 1)]);
        // Put the 1×1 block first and permute the rows of U to match.
        let mut u = CMatrix::zeros(3, 3);
        u.set_row(0, &w.u.row(2));
        u.set_row(1, &w.u.row(0));
        u.set_row(2, &w.u.row(1));
        let permuted = WedderburnStructure {
            dim_h: 3,
            u,
            blocks: vec![(1, 1), (2, 1)],
        };
        assert!(verify_structure(&a, &permuted, 1e-10).unwrap().0);
    }

    #[test]
    fn double_commutant_of_random_closure() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let z0 = local_pauli('Z', 0, 2).unwrap();
        let h = random_hermitian(2, &mut rng).kron(&Operator::identity(2));
        let a = algebra_closure(&span(&[z0, h]), 1e-10, 16).unwrap();
        let cc = commutant(&commutant(&a, 1e-10).unwrap(), 1e-10).unwrap();
        assert!(subspace_equal(&a, &cc, 1e-9).unwrap());
    }
}
