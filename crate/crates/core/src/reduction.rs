//! Reduction onto a ∗-algebra `𝒜 = U†(⊕_k 𝔅(ℂ^{dF_k}) ⊗ 𝟙_{dG_k})U`.
//!
//! With `W_k` the rows of `U` belonging to block `k`,
//!
//! ```text
//! R(X) = ⊕_k tr_G(W_k X W_k†) / dG_k        𝔅(H) → 𝔅(Ȟ)
//! J(X̌) = Σ_k W_k† (X̌_k ⊗ 𝟙_{dG_k}) W_k      𝔅(Ȟ) → 𝔅(H)
//! P = J ∘ R
//! ```
//!
//! `J` only reads the diagonal blocks of its argument. The reduced generator of
//! a part with GKS operator `K` is
//! `Ľ(X̌) = R(L(J(X̌))) + R(K)† Q(X̌) + Q(X̌) R(K)`, where `Q` removes the
//! diagonal blocks. On block-diagonal operators this is `R L J`; the extra
//! terms complete it to a Lindblad generator on all of `𝔅(Ȟ)`.

use log::{debug, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, QmrError, Result};
use crate::lindblad::{
    is_lindblad, ChannelKind, CoefficientDomain, ControlledLindbladGenerator, GeneratorPart,
    LindbladCertificate, PSD_TOL,
};
use crate::linalg::{min_hermitian_eigenvalue, random_operator};
use crate::operator::{
    linear_map_matrix, superoperator_from_map, validate_density, CMatrix, Operator,
    OperatorSubspace, Superoperator, C64, ZERO,
};
use crate::star_algebra::{block_factor, WedderburnStructure};

/// Coisometries `W_k` and the reduced-space layout for one Wedderburn structure.
#[derive(Clone, Debug)]
pub struct ReductionMaps {
    pub wedderburn: WedderburnStructure,
    /// `W_k`, each `dF_k·dG_k × n`.
    pub isometries: Vec<CMatrix>,
    pub dim_reduced: usize,
}

impl ReductionMaps {
    pub fn dim_full(&self) -> usize {
        self.wedderburn.dim_h
    }

    /// Whether the algebra is all of `𝔅(H)`.
    pub fn is_trivial(&self) -> bool {
        self.wedderburn.blocks == [(self.dim_full(), 1)]
    }

    /// `dF_k` per block.
    pub fn block_dims(&self) -> Vec<usize> {
        self.wedderburn.blocks.iter().map(|b| b.0).collect()
    }

    pub fn reduced_offsets(&self) -> Vec<usize> {
        self.wedderburn.reduced_offsets()
    }

    /// Keeps the diagonal blocks of a reduced-space matrix.
    pub fn pinch(&self, x: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(self.dim_reduced, self.dim_reduced);
        for (off, df) in self.reduced_offsets().into_iter().zip(self.block_dims()) {
            out.view_mut((off, off), (df, df))
                .copy_from(&x.view((off, off), (df, df)));
        }
        out
    }

    /// Frobenius norm of the part of `x` outside the diagonal blocks.
    pub fn off_block_norm(&self, x: &CMatrix) -> f64 {
        (x - self.pinch(x)).norm()
    }

    /// Column-stacked indices `i + j·ň` of the entries inside diagonal blocks.
    pub fn block_coordinates(&self) -> Vec<usize> {
        let nr = self.dim_reduced;
        let mut out = Vec::new();
        for (off, df) in self.reduced_offsets().into_iter().zip(self.block_dims()) {
            for j in off..off + df {
                for i in off..off + df {
                    out.push(i + j * nr);
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Extracts `W_k` from the rows of `U` and checks the coisometry property.
pub fn build_reduction_maps(w: &WedderburnStructure) -> Result<ReductionMaps> {
    let covered: usize = w.blocks.iter().map(|b| b.0 * b.1).sum();
    if covered != w.dim_h || w.u.nrows() != w.dim_h || w.u.ncols() != w.dim_h {
        return Err(QmrError::invalid("Wedderburn blocks do not cover the Hilbert space"));
    }
    let isometries: Vec<CMatrix> = (0..w.blocks.len()).map(|k| w.block_rows(k)).collect();
    for (k, wk) in isometries.iter().enumerate() {
        let r = coisometry_residual(wk);
        if r > 1e-10 {
            return Err(QmrError::Certificate(format!(
                "W_{k} is not a coisometry (residual {r:.3e})"
            )));
        }
    }
    Ok(ReductionMaps {
        dim_reduced: w.dim_reduced(),
        wedderburn: w.clone(),
        isometries,
    })
}

fn coisometry_residual(wk: &CMatrix) -> f64 {
    (wk * wk.adjoint() - CMatrix::identity(wk.nrows(), wk.nrows())).norm()
}

fn r_matrix(maps: &ReductionMaps, x: &CMatrix) -> CMatrix {
    let mut out = CMatrix::zeros(maps.dim_reduced, maps.dim_reduced);
    for ((wk, &(df, dg)), off) in maps
        .isometries
        .iter()
        .zip(&maps.wedderburn.blocks)
        .zip(maps.reduced_offsets())
    {
        let y = wk * x * wk.adjoint();
        out.view_mut((off, off), (df, df))
            .copy_from(&block_factor(&y, 0, df, dg));
    }
    out
}

fn j_matrix(maps: &ReductionMaps, x: &CMatrix) -> CMatrix {
    let n = maps.dim_full();
    let mut out = CMatrix::zeros(n, n);
    for ((wk, &(df, dg)), off) in maps
        .isometries
        .iter()
        .zip(&maps.wedderburn.blocks)
        .zip(maps.reduced_offsets())
    {
        let blk = x
            .view((off, off), (df, df))
            .into_owned()
            .kronecker(&CMatrix::identity(dg, dg));
        out += wk.adjoint() * blk * wk;
    }
    out
}

/// `⊕_k tr_G(W_k X W_k†)`, the HS adjoint of `J`.
fn j_dual_matrix(maps: &ReductionMaps, x: &CMatrix) -> CMatrix {
    let mut out = CMatrix::zeros(maps.dim_reduced, maps.dim_reduced);
    for ((wk, &(df, dg)), off) in maps
        .isometries
        .iter()
        .zip(&maps.wedderburn.blocks)
        .zip(maps.reduced_offsets())
    {
        let y = wk * x * wk.adjoint();
        let m = block_factor(&y, 0, df, dg) * C64::new(dg as f64, 0.0);
        out.view_mut((off, off), (df, df)).copy_from(&m);
    }
    out
}

/// `R(X) = ⊕_k tr_G(W_k X W_k†)/dG_k`.
pub fn map_r(maps: &ReductionMaps, x: &Operator) -> Result<Operator> {
    check_dim(maps.dim_full(), x.dim())?;
    Ok(Operator::from_matrix_unchecked(r_matrix(maps, x.matrix())))
}

/// `J(X̌) = Σ_k W_k†(X̌_k ⊗ 𝟙)W_k`; `X̌` must be block diagonal.
pub fn map_j(maps: &ReductionMaps, x: &Operator) -> Result<Operator> {
    check_dim(maps.dim_reduced, x.dim())?;
    let off = maps.off_block_norm(x.matrix());
    if off > 1e-9 * x.norm().max(1.0) {
        return Err(QmrError::invalid(format!(
            "reduced operator is not block diagonal (off-block norm {off:.3e})"
        )));
    }
    Ok(Operator::from_matrix_unchecked(j_matrix(maps, x.matrix())))
}

/// `J†` on arbitrary operators (no state validation).
pub fn map_j_dual(maps: &ReductionMaps, x: &Operator) -> Result<Operator> {
    check_dim(maps.dim_full(), x.dim())?;
    Ok(Operator::from_matrix_unchecked(j_dual_matrix(maps, x.matrix())))
}

/// Reduced state `J†(ρ) = ⊕_k tr_G(W_k ρ W_k†)`.
pub fn map_state(maps: &ReductionMaps, rho: &Operator) -> Result<Operator> {
    check_dim(maps.dim_full(), rho.dim())?;
    validate_density(rho)?;
    let out = map_j_dual(maps, rho)?;
    let tr = out.trace();
    if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
        return Err(QmrError::Numerical(format!(
            "reduced state has trace {tr}"
        )));
    }
    Ok(out)
}

pub fn projector_superoperator(maps: &ReductionMaps) -> Superoperator {
    superoperator_from_map(
        |x| Operator::from_matrix_unchecked(j_matrix(maps, &r_matrix(maps, x.matrix()))),
        maps.dim_full(),
    )
    .expect("dimensions fixed by construction")
}

pub fn r_superoperator(maps: &ReductionMaps) -> Superoperator {
    linear_map_matrix(
        |x| Operator::from_matrix_unchecked(r_matrix(maps, x.matrix())),
        maps.dim_full(),
        maps.dim_reduced,
    )
    .expect("dimensions fixed by construction")
}

/// `J` extended to all of `𝔅(Ȟ)` (off-diagonal blocks are discarded).
pub fn j_superoperator(maps: &ReductionMaps) -> Superoperator {
    linear_map_matrix(
        |x| Operator::from_matrix_unchecked(j_matrix(maps, x.matrix())),
        maps.dim_reduced,
        maps.dim_full(),
    )
    .expect("dimensions fixed by construction")
}

pub fn j_dual_superoperator(maps: &ReductionMaps) -> Superoperator {
    linear_map_matrix(
        |x| Operator::from_matrix_unchecked(j_dual_matrix(maps, x.matrix())),
        maps.dim_full(),
        maps.dim_reduced,
    )
    .expect("dimensions fixed by construction")
}

/// Reduced generator of one part, as a superoperator on `𝔅(Ȟ)`.
pub fn reduce_part(part: &GeneratorPart, maps: &ReductionMaps) -> Result<Superoperator> {
    check_dim(maps.dim_full(), part.dim())?;
    let rk = r_matrix(maps, part.gks_operator().matrix());
    let rk_adj = rk.adjoint();
    superoperator_from_map(
        |x| {
            let xm = x.matrix();
            let full = Operator::from_matrix_unchecked(j_matrix(maps, xm));
            let mut out = r_matrix(maps, part.apply(&full).matrix());
            let q = xm - maps.pinch(xm);
            if q.iter().any(|z| *z != ZERO) {
                out += &rk_adj * &q + &q * &rk;
            }
            Operator::from_matrix_unchecked(out)
        },
        maps.dim_reduced,
    )
}

/// A control channel of the reduced model.
#[derive(Clone, Debug)]
pub struct ReducedChannel {
    pub label: String,
    pub kind: ChannelKind,
    pub domain: CoefficientDomain,
    /// Reduced Hamiltonian and noise operators of the channel direction.
    pub part: GeneratorPart,
}

/// One Lindblad certificate, for a single part or a sampled control value.
#[derive(Clone, Debug)]
pub struct CertificateEntry {
    pub label: String,
    pub controls: Option<Vec<f64>>,
    pub certificate: LindbladCertificate,
}

impl CertificateEntry {
    pub fn passed(&self, tol: f64) -> bool {
        self.certificate.is_lindblad && self.certificate.reconstruction_residual <= tol.max(1e-10)
    }
}

#[derive(Clone, Debug)]
pub struct ReducedModel {
    pub maps: ReductionMaps,
    pub drift: GeneratorPart,
    pub channels: Vec<ReducedChannel>,
    pub reduced_drift: Superoperator,
    pub reduced_channels: Vec<Superoperator>,
    /// Reduced observables `R(O)`, block diagonal.
    pub observables: Vec<(String, Operator)>,
    pub certificates: Vec<CertificateEntry>,
    /// Set when the algebra is all of `𝔅(H)`: one block `(n, 1)`.
    pub no_reduction: bool,
}

impl ReducedModel {
    /// Rebuilds the reduced superoperators from stored Hamiltonian/noise data.
    pub fn from_parts(
        maps: ReductionMaps,
        drift: GeneratorPart,
        channels: Vec<ReducedChannel>,
        observables: Vec<(String, Operator)>,
        certificates: Vec<CertificateEntry>,
    ) -> Result<Self> {
        let nr = maps.dim_reduced;
        check_dim(nr, drift.dim())?;
        for c in &channels {
            check_dim(nr, c.part.dim())?;
        }
        for (label, o) in &observables {
            check_dim(nr, o.dim())?;
            if maps.off_block_norm(o.matrix()) > 1e-9 * o.norm().max(1.0) {
                return Err(QmrError::invalid(format!(
                    "reduced observable `{label}` is not block diagonal"
                )));
            }
        }
        let reduced_drift = drift.superoperator();
        let reduced_channels = channels.iter().map(|c| c.part.superoperator()).collect();
        let no_reduction = maps.is_trivial();
        Ok(ReducedModel {
            maps,
            drift,
            channels,
            reduced_drift,
            reduced_channels,
            observables,
            certificates,
            no_reduction,
        })
    }

    pub fn dim_reduced(&self) -> usize {
        self.maps.dim_reduced
    }

    pub fn dim_full(&self) -> usize {
        self.maps.dim_full()
    }

    pub fn block_dims(&self) -> Vec<usize> {
        self.maps.block_dims()
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn validate_controls(&self, u: &[f64]) -> Result<()> {
        check_dim(self.channels.len(), u.len())?;
        for (c, &x) in self.channels.iter().zip(u) {
            if !c.domain.contains(x) {
                return Err(QmrError::ControlOutOfDomain {
                    label: c.label.clone(),
                    value: x,
                });
            }
        }
        Ok(())
    }

    pub fn superoperator_at(&self, u: &[f64]) -> Result<Superoperator> {
        self.validate_controls(u)?;
        let mut s = self.reduced_drift.clone();
        for (c, &w) in self.reduced_channels.iter().zip(u) {
            s = s.add(&c.scale(w))?;
        }
        Ok(s)
    }

    /// Reduced Hamiltonian `Ȟ_0 + Σ u_ℓ Ȟ_ℓ` at a control value.
    pub fn hamiltonian_at(&self, u: &[f64]) -> Result<Operator> {
        self.validate_controls(u)?;
        let mut h = self.drift.hamiltonian_op().matrix().clone();
        for (c, &w) in self.channels.iter().zip(u) {
            h += c.part.hamiltonian_op().matrix() * C64::new(w, 0.0);
        }
        Ok(Operator::from_matrix_unchecked(h))
    }

    pub fn observable(&self, label: &str) -> Option<&Operator> {
        self.observables
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, o)| o)
    }

    pub fn all_certified(&self, tol: f64) -> bool {
        self.certificates.iter().all(|c| c.passed(tol))
    }
}

/// Control values at which sampled-sum certificates are issued: the vertices
/// and midpoint of the sampling box, plus 8 seeded interior points. Unbounded
/// sides are cut at unit distance.
pub fn certificate_samples(domains: &[CoefficientDomain], seed: u64) -> Vec<Vec<f64>> {
    let m = domains.len();
    let windows: Vec<(f64, f64)> = domains.iter().map(|d| d.sampling_window()).collect();
    let mut out = Vec::new();
    if m == 0 {
        out.push(Vec::new());
        return out;
    }
    if m <= 10 {
        for mask in 0..(1usize << m) {
            out.push(
                windows
                    .iter()
                    .enumerate()
                    .map(|(i, w)| if mask >> i & 1 == 1 { w.1 } else { w.0 })
                    .collect(),
            );
        }
    }
    out.push(windows.iter().map(|w| 0.5 * (w.0 + w.1)).collect());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..8 {
        out.push(
            windows
                .iter()
                .map(|w| w.0 + (w.1 - w.0) * rng.random::<f64>())
                .collect(),
        );
    }
    out
}

/// Reduced generator, reduced observables and Lindblad certificates for each
/// part and for sampled admissible controls.
pub fn reduce_generator(
    gen: &ControlledLindbladGenerator,
    maps: &ReductionMaps,
    observables: &[(String, Operator)],
    tol: f64,
    seed: u64,
) -> Result<ReducedModel> {
    check_dim(gen.dim(), maps.dim_full())?;
    let reduced_drift = reduce_part(gen.drift_part(), maps)?;
    let reduced_channels: Vec<Superoperator> = gen
        .channel_parts()
        .iter()
        .map(|p| reduce_part(p, maps))
        .collect::<Result<_>>()?;

    let mut certificates = Vec::new();
    let drift_cert = is_lindblad(&reduced_drift, tol)?;
    let drift = drift_cert.part();
    certificates.push(CertificateEntry {
        label: "drift".into(),
        controls: None,
        certificate: drift_cert,
    });
    let mut channels = Vec::with_capacity(gen.num_channels());
    for (ch, s) in gen.channels().iter().zip(&reduced_channels) {
        let cert = is_lindblad(s, tol)?;
        channels.push(ReducedChannel {
            label: ch.label.clone(),
            kind: ch.kind,
            domain: ch.domain,
            part: cert.part(),
        });
        certificates.push(CertificateEntry {
            label: format!("channel:{}", ch.label),
            controls: None,
            certificate: cert,
        });
    }
    let domains: Vec<CoefficientDomain> = gen.channels().iter().map(|c| c.domain).collect();
    for u in certificate_samples(&domains, seed) {
        let mut s = reduced_drift.clone();
        for (c, &w) in reduced_channels.iter().zip(&u) {
            s = s.add(&c.scale(w))?;
        }
        certificates.push(CertificateEntry {
            label: "sample".into(),
            controls: Some(u),
            certificate: is_lindblad(&s, tol)?,
        });
    }
    let failed = certificates.iter().filter(|c| !c.passed(tol)).count();
    if failed > 0 {
        warn!("{failed} reduced-generator certificates failed");
    }

    let mut reduced_obs = Vec::with_capacity(observables.len());
    for (label, o) in observables {
        reduced_obs.push((label.clone(), map_r(maps, o)?));
    }
    debug!(
        "reduced generator: n = {} → ň = {}, {} certificates",
        maps.dim_full(),
        maps.dim_reduced,
        certificates.len()
    );
    Ok(ReducedModel {
        no_reduction: maps.is_trivial(),
        maps: maps.clone(),
        drift,
        channels,
        reduced_drift,
        reduced_channels,
        observables: reduced_obs,
        certificates,
    })
}

/// Residuals of the projector certificate.
#[derive(Clone, Debug, Default, serde::Serialize)]
pub struct ProjectorReport {
    pub coisometry_residual: f64,
    pub idempotence_residual: f64,
    pub unitality_residual: f64,
    pub self_adjointness_residual: f64,
    pub choi_min_p: f64,
    pub choi_min_r: f64,
    pub choi_min_j: f64,
    pub choi_min_j_dual: f64,
    /// `P(B) = B` on the algebra basis and `P(X) ∈ 𝒜` on random operators.
    pub image_residual: f64,
    pub projector_rank: usize,
    pub algebra_dim: usize,
    /// `P(O) = O` on the observable space basis.
    pub observable_residual: f64,
    pub trace_preservation_residual: f64,
    /// `⟨R(X), Y̌⟩_w − ⟨X, J(Y̌)⟩` with the block weights `dG_k`.
    pub duality_residual: f64,
    pub passed: bool,
}

/// Certifies the projector built from `maps` against the algebra `algebra`
/// and the observable space `o_space`.
pub fn verify_projector(
    maps: &ReductionMaps,
    algebra: &OperatorSubspace,
    o_space: &OperatorSubspace,
    tol: f64,
    seed: u64,
) -> Result<ProjectorReport> {
    let n = maps.dim_full();
    check_dim(n, algebra.dim_h())?;
    check_dim(n, o_space.dim_h())?;
    let nr = maps.dim_reduced;
    let mut rep = ProjectorReport {
        algebra_dim: algebra.dim(),
        ..Default::default()
    };
    rep.coisometry_residual = maps
        .isometries
        .iter()
        .map(coisometry_residual)
        .fold(0.0, f64::max);

    let p = |x: &CMatrix| j_matrix(maps, &r_matrix(maps, x));
    let mut idem: f64 = 0.0;
    for j in 0..n {
        for i in 0..n {
            let e = Operator::unit(n, i, j);
            let px = p(e.matrix());
            idem = idem.max((p(&px) - &px).norm());
        }
    }
    rep.idempotence_residual = idem;
    let id = CMatrix::identity(n, n);
    rep.unitality_residual = (p(&id) - &id)
        .norm()
        .max((r_matrix(maps, &id) - CMatrix::identity(nr, nr)).norm())
        .max((j_matrix(maps, &CMatrix::identity(nr, nr)) - &id).norm());

    let ps = projector_superoperator(maps);
    rep.self_adjointness_residual = (ps.matrix() - ps.matrix().adjoint()).norm();
    rep.projector_rank = ps.matrix().trace().re.round().max(0.0) as usize;
    rep.choi_min_p = min_hermitian_eigenvalue(&ps.choi());
    rep.choi_min_r = min_hermitian_eigenvalue(&r_superoperator(maps).choi());
    rep.choi_min_j = min_hermitian_eigenvalue(&j_superoperator(maps).choi());
    let jd = j_dual_superoperator(maps);
    rep.choi_min_j_dual = min_hermitian_eigenvalue(&jd.choi());

    let mut image: f64 = 0.0;
    for b in algebra.basis() {
        image = image.max((p(b.matrix()) - b.matrix()).norm());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..50 {
        let x = random_operator(n, &mut rng);
        let px = Operator::from_matrix_unchecked(p(x.matrix()));
        image = image.max(algebra.relative_residual(&px)?);
    }
    rep.image_residual = image;

    rep.observable_residual = o_space
        .basis()
        .iter()
        .map(|o| (p(o.matrix()) - o.matrix()).norm())
        .fold(0.0, f64::max);

    // tr J†(E_ij) = δ_ij.
    let mut tp: f64 = 0.0;
    for j in 0..n {
        for i in 0..n {
            let t = j_dual_matrix(maps, Operator::unit(n, i, j).matrix()).trace();
            let target = if i == j { 1.0 } else { 0.0 };
            tp = tp.max((t - C64::new(target, 0.0)).norm());
        }
    }
    rep.trace_preservation_residual = tp;

    let weights: Vec<f64> = maps.wedderburn.blocks.iter().map(|b| b.1 as f64).collect();
    let mut dual: f64 = 0.0;
    for _ in 0..10 {
        let x = random_operator(n, &mut rng);
        let y = maps.pinch(random_operator(nr, &mut rng).matrix());
        let rx = r_matrix(maps, x.matrix());
        let mut lhs = ZERO;
        for ((off, df), w) in maps.reduced_offsets().into_iter().zip(maps.block_dims()).zip(&weights) {
            let a = rx.view((off, off), (df, df)).into_owned();
            let b = y.view((off, off), (df, df)).into_owned();
            lhs += a.dotc(&b) * *w;
        }
        let rhs = x.matrix().dotc(&j_matrix(maps, &y));
        dual = dual.max((lhs - rhs).norm() / (1.0 + rhs.norm()));
    }
    rep.duality_residual = dual;

    let t = tol.max(1e-12);
    rep.passed = rep.coisometry_residual <= 1e-10
        && rep.idempotence_residual <= t
        && rep.unitality_residual <= t
        && rep.self_adjointness_residual <= t
        && rep.choi_min_p >= -PSD_TOL
        && rep.choi_min_r >= -PSD_TOL
        && rep.choi_min_j >= -PSD_TOL
        && rep.choi_min_j_dual >= -PSD_TOL
        && rep.image_residual <= t
        && rep.projector_rank == rep.algebra_dim
        && rep.observable_residual <= t
        && rep.trace_preservation_residual <= t
        && rep.duality_residual <= t;
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lindblad::ControlChannel;
    use crate::linalg::{random_density, random_hermitian};
    use crate::operator::{orthonormalize, pauli};
    use crate::star_algebra::{algebra_closure, wedderburn};

    fn span(ops: &[Operator]) -> OperatorSubspace {
        orthonormalize(ops, 1e-10).unwrap()
    }

    fn maps_for(a: &OperatorSubspace) -> ReductionMaps {
        build_reduction_maps(&wedderburn(a, 1e-10, 1).unwrap()).unwrap()
    }

    fn diagonal(n: usize) -> OperatorSubspace {
        span(&(0..n).map(|i| Operator::unit(n, i, i)).collect::<Vec<_>>())
    }

    #[test]
    fn full_algebra_projector_is_identity() {
        let maps = maps_for(&OperatorSubspace::full(3));
        let p = projector_superoperator(&maps);
        assert!((p.matrix() - Superoperator::identity(3).matrix()).norm() < 1e-14);
    }

    #[test]
    fn diagonal_projector_is_pinching() {
        let maps = maps_for(&diagonal(3));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_operator(3, &mut rng);
        let px = map_j(&maps, &map_r(&maps, &x).unwrap()).unwrap();
        let mut expect = CMatrix::zeros(3, 3);
        for i in 0..3 {
            expect[(i, i)] = x.matrix()[(i, i)];
        }
        assert!((px.matrix() - expect).norm() < 1e-14);
    }

    #[test]
    fn r_and_j_basic_properties() {
        let ops: Vec<Operator> = ['I', 'X', 'Y', 'Z']
            .iter()
            .map(|&c| pauli(c).unwrap().kron(&Operator::identity(2)))
            .collect();
        let maps = maps_for(&span(&ops));
        assert_eq!(maps.dim_reduced, 2);
        let id = map_r(&maps, &Operator::identity(4)).unwrap();
        assert!((id.matrix() - CMatrix::identity(2, 2)).norm() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let y = random_operator(2, &mut rng);
            let back = map_r(&maps, &map_j(&maps, &y).unwrap()).unwrap();
            assert!((back.matrix() - y.matrix()).norm() < 1e-12);
        }
        let z = map_j(&maps, &pauli('Z').unwrap()).unwrap();
        let u = &maps.wedderburn.u;
        let expect = u.adjoint() * pauli('Z').unwrap().kron(&Operator::identity(2)).matrix() * u;
        assert!((z.matrix() - expect).norm() < 1e-12);
    }

    #[test]
    fn map_j_rejects_off_block() {
        let maps = maps_for(&diagonal(2));
        assert!(map_j(&maps, &pauli('X').unwrap()).is_err());
    }

    #[test]
    fn reduced_state_is_valid() {
        let a = span(&[
            Operator::identity(4),
            pauli('Z').unwrap().kron(&Operator::identity(2)),
            Operator::identity(2).kron(&pauli('X').unwrap()),
        ]);
        let a = algebra_closure(&a, 1e-10, 16).unwrap();
        let maps = maps_for(&a);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let rho = random_density(4, &mut rng);
            let r = map_state(&maps, &rho).unwrap();
            assert!((r.trace().re - 1.0).abs() < 1e-12);
            assert!(min_hermitian_eigenvalue(r.matrix()) >= -1e-12);
        }
        let mixed = map_state(&maps, &Operator::identity(4).scale(C64::new(0.25, 0.0))).unwrap();
        assert!((mixed.trace().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn projector_certificate_passes_and_detects_corruption() {
        let a = algebra_closure(
            &span(&[pauli('Z').unwrap().kron(&pauli('Z').unwrap()), pauli('X').unwrap().kron(&Operator::identity(2))]),
            1e-10,
            16,
        )
        .unwrap();
        let maps = maps_for(&a);
        let rep = verify_projector(&maps, &a, &a, 1e-9, 5).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert_eq!(rep.projector_rank, a.dim());

        let mut bad = maps.clone();
        bad.isometries[0].row_mut(0).fill(ZERO);
        let rep = verify_projector(&bad, &a, &a, 1e-9, 5).unwrap();
        assert!(!rep.passed);
        assert!(rep.coisometry_residual > 0.5);
    }

    #[test]
    fn full_reduction_reproduces_generator() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let ch = ControlChannel::new(
            ChannelKind::Dissipator,
            random_operator(3, &mut rng),
            "d",
            CoefficientDomain::Interval { min: 0.0, max: 1.0 },
        )
        .unwrap();
        let gen = ControlledLindbladGenerator::new(
            random_hermitian(3, &mut rng),
            vec![random_operator(3, &mut rng)],
            vec![ch],
        )
        .unwrap();
        let maps = maps_for(&OperatorSubspace::full(3));
        let red = reduce_generator(&gen, &maps, &[], 1e-10, 1).unwrap();
        assert!(red.no_reduction);
        let (d, c) = gen.affine_superoperators();
        assert!((red.reduced_drift.matrix() - d.matrix()).norm() < 1e-12);
        assert!((red.reduced_channels[0].matrix() - c[0].matrix()).norm() < 1e-12);
        assert!(red.all_certified(1e-10));
    }

    #[test]
    fn block_coupling_dissipator_stays_lindblad() {
        // L = |0⟩⟨1| couples the two blocks of the diagonal algebra on ℂ².
        let l = Operator::unit(2, 0, 1);
        let gen = ControlledLindbladGenerator::new(Operator::zeros(2), vec![l], vec![]).unwrap();
        let maps = maps_for(&diagonal(2));
        let red = reduce_generator(&gen, &maps, &[], 1e-10, 1).unwrap();
        assert!(red.all_certified(1e-10));
        // On block-diagonal inputs the reduced generator is R L J.
        let x = Operator::from_real(2, &[0.3, 0.0, 0.0, -1.2]).unwrap();
        let rlj = map_r(&maps, &gen.apply(&[], &map_j(&maps, &x).unwrap()).unwrap()).unwrap();
        let lx = red.reduced_drift.apply(&x).unwrap();
        assert!((rlj.matrix() - lx.matrix()).norm() < 1e-14);
    }

    #[test]
    fn certificate_sample_layout() {
        let doms = [
            CoefficientDomain::Unconstrained,
            CoefficientDomain::Interval { min: 0.0, max: f64::INFINITY },
        ];
        let s = certificate_samples(&doms, 1);
        assert_eq!(s.len(), 4 + 1 + 8);
        assert_eq!(s[0], vec![-1.0, 0.0]);
        assert_eq!(s[3], vec![1.0, 1.0]);
        assert!(s.iter().all(|u| doms.iter().zip(u).all(|(d, &x)| d.contains(x))));
        assert_eq!(s, certificate_samples(&doms, 1));
    }
}
