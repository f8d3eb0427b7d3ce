//! Controlled Lindblad generators in the Heisenberg picture,
//!
//! ```text
//! L_u(X) = i[H_u, X] + Σ_k D_{L_k}(X),    D_L(X) = L†XL − ½{L†L, X},
//! ```
//!
//! with `H_u = H_0 + Σ_ℓ u_ℓ H_ℓ` over Hamiltonian channels and dissipator
//! channels entering as `u_ℓ · D_{L_ℓ}`, so that `L_u` is affine in `u`.
//!
//! Lindblad form of a superoperator is certified through its Kossakowski
//! matrix in the basis `{𝟙/√n, traceless diagonal, off-diagonal matrix units}`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, QmrError, Result};
use crate::linalg::{block_hermitian_spectrum, spectral_norm_estimate};
use crate::operator::{
    sandwich_superoperator, CMatrix, Operator, Superoperator, C64, DEFAULT_TOL, I, ZERO,
};

/// Kossakowski positivity tolerance, absolute after scaling to unit spectral norm.
pub const PSD_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    Hamiltonian,
    Dissipator,
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChannelKind::Hamiltonian => f.write_str("hamiltonian"),
            ChannelKind::Dissipator => f.write_str("dissipator"),
        }
    }
}

/// Admissible values of one control coefficient.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CoefficientDomain {
    Unconstrained,
    /// Closed interval; `max` may be `+∞`.
    Interval { min: f64, max: f64 },
}

impl CoefficientDomain {
    pub fn contains(&self, x: f64) -> bool {
        match *self {
            CoefficientDomain::Unconstrained => x.is_finite(),
            CoefficientDomain::Interval { min, max } => x.is_finite() && x >= min && x <= max,
        }
    }

    pub fn has_interior(&self) -> bool {
        match *self {
            CoefficientDomain::Unconstrained => true,
            CoefficientDomain::Interval { min, max } => max > min,
        }
    }

    /// Finite window used when sampling controls: unbounded sides are cut at
    /// unit distance (`[-1, 1]` when unconstrained).
    pub fn sampling_window(&self) -> (f64, f64) {
        match *self {
            CoefficientDomain::Unconstrained => (-1.0, 1.0),
            CoefficientDomain::Interval { min, max } => {
                let lo = if min.is_finite() { min } else { max.min(0.0) - 1.0 };
                let hi = if max.is_finite() { max } else { lo + 1.0 };
                (lo, hi)
            }
        }
    }
}

/// One affine control direction.
#[derive(Clone, Debug)]
pub struct ControlChannel {
    pub kind: ChannelKind,
    pub operator: Operator,
    pub label: String,
    pub domain: CoefficientDomain,
}

impl ControlChannel {
    pub fn new(
        kind: ChannelKind,
        operator: Operator,
        label: impl Into<String>,
        domain: CoefficientDomain,
    ) -> Result<Self> {
        let label = label.into();
        if let CoefficientDomain::Interval { min, max } = domain {
            if min.is_nan() || max.is_nan() || min > max || min == f64::INFINITY {
                return Err(QmrError::invalid(format!(
                    "channel `{label}`: invalid coefficient interval [{min}, {max}]"
                )));
            }
        }
        match kind {
            ChannelKind::Hamiltonian => {
                if !operator.is_hermitian(DEFAULT_TOL) {
                    return Err(QmrError::invalid(format!(
                        "channel `{label}`: Hamiltonian direction is not self-adjoint"
                    )));
                }
            }
            ChannelKind::Dissipator => match domain {
                CoefficientDomain::Interval { min, .. } if min >= 0.0 => {}
                _ => {
                    return Err(QmrError::invalid(format!(
                        "channel `{label}`: dissipator rate domain must lie in [0, ∞)"
                    )))
                }
            },
        }
        Ok(ControlChannel {
            kind,
            operator,
            label,
            domain,
        })
    }

    pub fn part(&self) -> GeneratorPart {
        match self.kind {
            ChannelKind::Hamiltonian => GeneratorPart::hamiltonian(self.operator.clone()),
            ChannelKind::Dissipator => GeneratorPart::dissipator(self.operator.clone()),
        }
    }
}

/// A term `i[H, ·] + Σ_k D_{L_k}` of a generator.
#[derive(Clone, Debug)]
pub struct GeneratorPart {
    hamiltonian: Operator,
    noise: Vec<Operator>,
    noise_gram: CMatrix,
}

impl GeneratorPart {
    pub fn new(hamiltonian: Operator, noise: Vec<Operator>) -> Result<Self> {
        let n = hamiltonian.dim();
        for l in &noise {
            check_dim(n, l.dim())?;
        }
        let mut gram = CMatrix::zeros(n, n);
        for l in &noise {
            gram += l.matrix().adjoint() * l.matrix();
        }
        Ok(GeneratorPart {
            hamiltonian,
            noise,
            noise_gram: gram,
        })
    }

    pub fn hamiltonian(h: Operator) -> Self {
        let n = h.dim();
        GeneratorPart {
            hamiltonian: h,
            noise: Vec::new(),
            noise_gram: CMatrix::zeros(n, n),
        }
    }

    pub fn dissipator(l: Operator) -> Self {
        let n = l.dim();
        GeneratorPart::new(Operator::zeros(n), vec![l]).expect("dims agree")
    }

    pub fn zero(n: usize) -> Self {
        GeneratorPart::hamiltonian(Operator::zeros(n))
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    pub fn hamiltonian_op(&self) -> &Operator {
        &self.hamiltonian
    }

    pub fn noise(&self) -> &[Operator] {
        &self.noise
    }

    pub fn apply(&self, x: &Operator) -> Operator {
        let h = self.hamiltonian.matrix();
        let xm = x.matrix();
        let mut out = (h * xm - xm * h) * I;
        if !self.noise.is_empty() {
            for l in &self.noise {
                let lm = l.matrix();
                out += lm.adjoint() * xm * lm;
            }
            out -= (&self.noise_gram * xm + xm * &self.noise_gram) * C64::new(0.5, 0.0);
        }
        Operator::from_matrix_unchecked(out)
    }

    /// GKS operator `K = −iH − ½ Σ L†L`, so that the part reads
    /// `X ↦ K†X + XK + Σ L†XL`.
    pub fn gks_operator(&self) -> Operator {
        let k = self.hamiltonian.matrix() * (-I) - &self.noise_gram * C64::new(0.5, 0.0);
        Operator::from_matrix_unchecked(k)
    }

    pub fn superoperator(&self) -> Superoperator {
        let n = self.dim();
        let id = CMatrix::identity(n, n);
        let h = self.hamiltonian.matrix();
        let mut m = (sandwich_superoperator(h, &id) - sandwich_superoperator(&id, h)) * I;
        for l in &self.noise {
            m += sandwich_superoperator(&l.matrix().adjoint(), l.matrix());
        }
        if !self.noise.is_empty() {
            let g = &self.noise_gram;
            m -= (sandwich_superoperator(g, &id) + sandwich_superoperator(&id, g))
                * C64::new(0.5, 0.0);
        }
        Superoperator::from_matrix(n, n, m).expect("shape by construction")
    }

    /// `Σ_k w_k · part_k`, merging Hamiltonians and scaling noise by `√w_k`.
    /// Noise weights must be non-negative.
    pub fn combine(parts: &[(&GeneratorPart, f64)]) -> Result<GeneratorPart> {
        let n = parts
            .first()
            .map(|(p, _)| p.dim())
            .ok_or_else(|| QmrError::invalid("no parts to combine"))?;
        let mut h = CMatrix::zeros(n, n);
        let mut noise = Vec::new();
        for (p, w) in parts {
            check_dim(n, p.dim())?;
            h += p.hamiltonian.matrix() * C64::new(*w, 0.0);
            if !p.noise.is_empty() && *w != 0.0 {
                if *w < 0.0 {
                    return Err(QmrError::invalid("negative weight on a dissipative part"));
                }
                for l in &p.noise {
                    noise.push(l.scale(C64::new(w.sqrt(), 0.0)));
                }
            }
        }
        GeneratorPart::new(Operator::from_matrix_unchecked(h), noise)
    }
}

/// Drift plus affine control channels.
#[derive(Clone, Debug)]
pub struct ControlledLindbladGenerator {
    dim: usize,
    h0: Operator,
    noise_drift: Vec<Operator>,
    channels: Vec<ControlChannel>,
    drift_part: GeneratorPart,
    channel_parts: Vec<GeneratorPart>,
}

impl ControlledLindbladGenerator {
    pub fn new(
        h0: Operator,
        noise_drift: Vec<Operator>,
        channels: Vec<ControlChannel>,
    ) -> Result<Self> {
        let dim = h0.dim();
        if dim == 0 {
            return Err(QmrError::invalid("Hilbert dimension must be positive"));
        }
        if !h0.is_hermitian(DEFAULT_TOL) {
            return Err(QmrError::invalid("drift Hamiltonian is not self-adjoint"));
        }
        for l in &noise_drift {
            check_dim(dim, l.dim())?;
        }
        let mut labels = std::collections::HashSet::new();
        for c in &channels {
            check_dim(dim, c.operator.dim())?;
            if !labels.insert(c.label.clone()) {
                return Err(QmrError::invalid(format!(
                    "duplicate channel label `{}`",
                    c.label
                )));
            }
        }
        let drift_part = GeneratorPart::new(h0.clone(), noise_drift.clone())?;
        let channel_parts: Vec<GeneratorPart> = channels.iter().map(|c| c.part()).collect();
        let gen = ControlledLindbladGenerator {
            dim,
            h0,
            noise_drift,
            channels,
            drift_part,
            channel_parts,
        };
        let id = Operator::identity(dim);
        let scale = (dim as f64).sqrt();
        for (label, part) in std::iter::once(("drift", &gen.drift_part)).chain(
            gen.channels
                .iter()
                .map(|c| c.label.as_str())
                .zip(gen.channel_parts.iter()),
        ) {
            let r = part.apply(&id).norm();
            let part_scale = part.hamiltonian.norm()
                + part.noise.iter().map(|l| l.norm_sqr_hs()).sum::<f64>();
            if r > DEFAULT_TOL * scale * part_scale.max(1.0) {
                return Err(QmrError::invalid(format!(
                    "{label} part does not annihilate the identity (residual {r:.3e})"
                )));
            }
        }
        Ok(gen)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn h0(&self) -> &Operator {
        &self.h0
    }

    pub fn noise_drift(&self) -> &[Operator] {
        &self.noise_drift
    }

    pub fn channels(&self) -> &[ControlChannel] {
        &self.channels
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn drift_part(&self) -> &GeneratorPart {
        &self.drift_part
    }

    pub fn channel_parts(&self) -> &[GeneratorPart] {
        &self.channel_parts
    }

    pub fn channel_index(&self, label: &str) -> Option<usize> {
        self.channels.iter().position(|c| c.label == label)
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

    /// Every channel domain has nonempty interior, so the admissible set
    /// affinely spans `ℝ^m`.
    pub fn validate_affine_span(&self) -> Result<()> {
        for c in &self.channels {
            if !c.domain.has_interior() {
                return Err(QmrError::DegenerateControlSet(format!(
                    "channel `{}` admits a single value; supply explicit control samples instead",
                    c.label
                )));
            }
        }
        Ok(())
    }

    pub fn apply(&self, u: &[f64], x: &Operator) -> Result<Operator> {
        check_dim(self.dim, x.dim())?;
        self.validate_controls(u)?;
        let mut out = self.drift_part.apply(x).into_matrix();
        for (part, &w) in self.channel_parts.iter().zip(u) {
            if w != 0.0 {
                out += part.apply(x).matrix() * C64::new(w, 0.0);
            }
        }
        Ok(Operator::from_matrix_unchecked(out))
    }

    /// The generator at a fixed control value as a single part.
    pub fn part_at(&self, u: &[f64]) -> Result<GeneratorPart> {
        self.validate_controls(u)?;
        let mut parts = vec![(&self.drift_part, 1.0)];
        parts.extend(self.channel_parts.iter().zip(u.iter().cloned()));
        GeneratorPart::combine(&parts)
    }

    pub fn affine_superoperators(&self) -> (Superoperator, Vec<Superoperator>) {
        (
            self.drift_part.superoperator(),
            self.channel_parts.iter().map(|p| p.superoperator()).collect(),
        )
    }

    pub fn superoperator_at(&self, u: &[f64]) -> Result<Superoperator> {
        self.validate_controls(u)?;
        let (mut s, parts) = self.affine_superoperators();
        for (p, &w) in parts.iter().zip(u) {
            s = s.add(&p.scale(w))?;
        }
        Ok(s)
    }
}

trait NormSqr {
    fn norm_sqr_hs(&self) -> f64;
}

impl NormSqr for Operator {
    fn norm_sqr_hs(&self) -> f64 {
        self.matrix().norm_squared()
    }
}

/// `L_u(O)` for a control vector `u`.
pub fn apply_generator(
    gen: &ControlledLindbladGenerator,
    u: &[f64],
    o: &Operator,
) -> Result<Operator> {
    gen.apply(u, o)
}

/// `(L_0, [K_1, …, K_m])` with `L_u = L_0 + Σ u_ℓ K_ℓ`.
pub fn affine_superoperators(
    gen: &ControlledLindbladGenerator,
) -> (Superoperator, Vec<Superoperator>) {
    gen.affine_superoperators()
}

/// Outcome of the Lindblad-form test.
#[derive(Clone, Debug)]
pub struct LindbladCertificate {
    pub dim: usize,
    pub is_unital: bool,
    /// `‖S(𝟙)‖ / (spectral_scale·√n)`.
    pub unitality_residual: f64,
    /// Relative deviation of the process matrix from Hermitian.
    pub hermiticity_residual: f64,
    pub kossakowski_min_eigenvalue: f64,
    /// Minimum Kossakowski eigenvalue divided by `spectral_scale`.
    pub normalized_min_eigenvalue: f64,
    /// `max(‖S‖₂, 1)`.
    pub spectral_scale: f64,
    pub hamiltonian: Operator,
    pub noise_ops: Vec<Operator>,
    /// Frobenius error of the superoperator rebuilt from `hamiltonian` and
    /// `noise_ops`, relative to `max(‖S‖_F, 1)`.
    pub reconstruction_residual: f64,
    pub is_lindblad: bool,
}

impl LindbladCertificate {
    pub fn part(&self) -> GeneratorPart {
        GeneratorPart::new(self.hamiltonian.clone(), self.noise_ops.clone())
            .expect("extracted operators share a dimension")
    }
}

/// Orthonormal operator basis `F_0 = 𝟙/√n`, then `n−1` traceless diagonal
/// matrices, then the off-diagonal matrix units in column-stacked order. Each
/// element is given by its (real) coefficients on the matrix units `E_p`,
/// `p = vec index`.
fn gks_basis(n: usize) -> Vec<Vec<(usize, f64)>> {
    let mut rows = Vec::with_capacity(n * n);
    let inv = 1.0 / (n as f64).sqrt();
    rows.push((0..n).map(|i| (i + i * n, inv)).collect());
    for r in 1..n {
        let norm = 1.0 / ((r * (r + 1)) as f64).sqrt();
        let mut row: Vec<(usize, f64)> = (0..r).map(|i| (i + i * n, norm)).collect();
        row.push((r + r * n, -(r as f64) * norm));
        rows.push(row);
    }
    for j in 0..n {
        for i in 0..n {
            if i != j {
                rows.push(vec![(i + j * n, 1.0)]);
            }
        }
    }
    rows
}

fn basis_operator(n: usize, row: &[(usize, f64)]) -> CMatrix {
    let mut m = CMatrix::zeros(n, n);
    for &(p, c) in row {
        m[(p % n, p / n)] += C64::new(c, 0.0);
    }
    m
}

/// Process matrix `χ` with `S(X) = Σ_{αβ} χ_{αβ} F_α† X F_β` in the GKS basis.
fn process_matrix(s: &Superoperator) -> CMatrix {
    let n = s.dim();
    let n2 = n * n;
    let sm = s.matrix();
    // In the matrix-unit basis χ is a reshuffle of the superoperator:
    // χ[vec(E_ij), vec(E_kl)] = S[j + l n, i + k n].
    let chi_e = |p: usize, q: usize| -> C64 {
        let (i, j) = (p % n, p / n);
        let (k, l) = (q % n, q / n);
        sm[(j + l * n, i + k * n)]
    };
    let basis = gks_basis(n);
    let mut chi = CMatrix::zeros(n2, n2);
    for (b, col) in basis.iter().enumerate() {
        for (a, row) in basis.iter().enumerate() {
            let mut acc = ZERO;
            for &(p, cp) in row {
                for &(q, cq) in col {
                    acc += chi_e(p, q) * (cp * cq);
                }
            }
            chi[(a, b)] = acc;
        }
    }
    chi
}

fn fix_phase(m: &mut CMatrix) {
    let max = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return;
    }
    if let Some(z) = m.iter().find(|z| z.norm() >= (1.0 - 1e-9) * max).cloned() {
        let phase = z.conj() / z.norm();
        *m *= phase;
    }
}

/// Certificate of Lindblad (GKS) form for a square superoperator: unitality,
/// Hermiticity preservation and positivity of the Kossakowski matrix, together
/// with the extracted Hamiltonian and noise operators.
pub fn is_lindblad(s: &Superoperator, tol: f64) -> Result<LindbladCertificate> {
    if !s.is_square() {
        return Err(QmrError::invalid("superoperator is not square"));
    }
    let n = s.dim();
    if n == 0 {
        return Err(QmrError::invalid("empty superoperator"));
    }
    let n2 = n * n;
    // Residuals are relative to max(‖S‖, 1) so that roundoff-sized generators
    // are judged absolutely.
    let scale = spectral_norm_estimate(s.matrix()).max(1.0);

    let id = Operator::identity(n);
    let unit_res = s.apply(&id)?.norm() / (scale * (n as f64).sqrt());

    let chi = process_matrix(s);
    let herm_res = (&chi - chi.adjoint()).norm() / (scale * n as f64);

    let mut c = CMatrix::zeros(n2 - 1, n2 - 1);
    c.copy_from(&chi.view((1, 1), (n2 - 1, n2 - 1)));
    let spectrum = block_hermitian_spectrum(&c, true);
    let min_eig = spectrum
        .pairs
        .first()
        .map(|p| p.0)
        .unwrap_or(0.0)
        - spectrum.dropped_norm;

    // Noise operators from the positive Kossakowski directions, largest first.
    let basis = gks_basis(n);
    let keep = 1e-12 * scale;
    let mut noise = Vec::new();
    for (lambda, v) in spectrum.pairs.iter().rev() {
        if *lambda <= keep {
            break;
        }
        let mut l = CMatrix::zeros(n, n);
        for (b, coeff) in v.iter().enumerate() {
            if *coeff != ZERO {
                l += basis_operator(n, &basis[b + 1]) * coeff.conj();
            }
        }
        l *= C64::new(lambda.sqrt(), 0.0);
        fix_phase(&mut l);
        noise.push(Operator::from_matrix_unchecked(l));
    }

    // K = χ_00/(2n) 𝟙 + n^{-1/2} Σ_β χ_0β F_β, symmetrized against χ_β0.
    let sqrt_n = (n as f64).sqrt();
    let mut k = CMatrix::identity(n, n) * C64::new(chi[(0, 0)].re / (2.0 * n as f64), 0.0);
    for b in 1..n2 {
        let coeff = (chi[(0, b)] + chi[(b, 0)].conj()) * C64::new(0.5 / sqrt_n, 0.0);
        if coeff != ZERO {
            k += basis_operator(n, &basis[b]) * coeff;
        }
    }
    let h = (&k - k.adjoint()) * C64::new(0.0, 0.5);
    let hamiltonian = Operator::from_matrix_unchecked(crate::linalg::hermitian_part(&h));

    let rebuilt = GeneratorPart::new(hamiltonian.clone(), noise.clone())?.superoperator();
    let recon = (rebuilt.matrix() - s.matrix()).norm() / s.matrix().norm().max(1.0);

    let normalized = min_eig / scale;
    let is_unital = unit_res <= tol;
    let is_lindblad = is_unital && herm_res <= tol && normalized >= -PSD_TOL;
    Ok(LindbladCertificate {
        dim: n,
        is_unital,
        unitality_residual: unit_res,
        hermiticity_residual: herm_res,
        kossakowski_min_eigenvalue: min_eig,
        normalized_min_eigenvalue: normalized,
        spectral_scale: scale,
        hamiltonian,
        noise_ops: noise,
        reconstruction_residual: recon,
        is_lindblad,
    })
}

/// Hamiltonian (traceless) and traceless noise operators of a Lindblad
/// superoperator, rebuilt to within `tol`.
pub fn extract_hamiltonian_and_noise(
    s: &Superoperator,
    tol: f64,
) -> Result<(Operator, Vec<Operator>)> {
    let cert = is_lindblad(s, tol)?;
    if !cert.is_lindblad {
        return Err(QmrError::Certificate(format!(
            "not a Lindblad generator: unitality {:.3e}, hermiticity {:.3e}, Kossakowski min {:.3e}",
            cert.unitality_residual, cert.hermiticity_residual, cert.normalized_min_eigenvalue
        )));
    }
    if cert.reconstruction_residual > tol.max(1e-10) {
        return Err(QmrError::Certificate(format!(
            "extracted operators rebuild the generator only to {:.3e}",
            cert.reconstruction_residual
        )));
    }
    Ok((cert.hamiltonian, cert.noise_ops))
}
