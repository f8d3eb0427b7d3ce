//! Krylov observable spaces: the smallest subspace containing the target
//! observables that is invariant under every admissible generator, plus the
//! cross-checks built around it.

use log::{debug, warn};

use crate::error::{check_dim, QmrError, Result};
use crate::lindblad::{ControlledLindbladGenerator, GeneratorPart};
use crate::operator::{validate_density, Operator, OperatorSubspace};
use crate::star_algebra::algebra_closure;

/// Result of the observable-space iteration.
#[derive(Clone, Debug)]
pub struct ObservableSpaceReport {
    pub space: OperatorSubspace,
    pub iterations: usize,
    /// `(iteration, dimension)` after each sweep.
    pub growth_log: Vec<(usize, usize)>,
    /// Largest relative residual of `g(B)` in the space, over generators `g`
    /// and basis elements `B`.
    pub invariance_residual: f64,
    pub converged: bool,
    /// Whether `𝟙` had to be added to the seed observables.
    pub identity_adjoined: bool,
}

/// Seeds the space with `𝟙` (warning when it was absent) and the basis of `omega`.
fn seeded(omega: &OperatorSubspace, tol: f64) -> Result<(OperatorSubspace, bool)> {
    let n = omega.dim_h();
    let id = Operator::identity(n);
    let adjoined = !omega.contains(&id, tol)?;
    if adjoined {
        warn!("identity not in the observable set; adjoining it");
    }
    let mut space = OperatorSubspace::empty(n);
    space.try_push(&id, tol);
    for b in omega.basis() {
        space.try_push(b, tol);
    }
    Ok((space, adjoined))
}

/// Breadth-first Krylov closure of `space` under `parts`. Each sweep applies
/// the generators, in order, to the basis elements added by the previous
/// sweep. Returns `(iterations, growth_log, converged)`.
fn krylov_extend(
    space: &mut OperatorSubspace,
    parts: &[&GeneratorPart],
    tol: f64,
    max_dim: usize,
) -> (usize, Vec<(usize, usize)>, bool) {
    let mut frontier = 0..space.dim();
    let mut iterations = 0;
    let mut log = vec![(0, space.dim())];
    while !frontier.is_empty() {
        iterations += 1;
        let end_before = space.dim();
        for g in parts {
            for k in frontier.clone() {
                let img = g.apply(&space.basis()[k]);
                space.try_push(&img, tol);
                if space.dim() > max_dim {
                    log.push((iterations, space.dim()));
                    return (iterations, log, false);
                }
            }
        }
        log.push((iterations, space.dim()));
        frontier = end_before..space.dim();
    }
    (iterations, log, true)
}

fn invariance_residual_parts(space: &OperatorSubspace, parts: &[&GeneratorPart]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for g in parts {
        for b in space.basis() {
            worst = worst.max(space.relative_residual(&g.apply(b))?);
        }
    }
    Ok(worst)
}

fn all_parts(gen: &ControlledLindbladGenerator) -> Vec<&GeneratorPart> {
    std::iter::once(gen.drift_part())
        .chain(gen.channel_parts().iter())
        .collect()
}

/// Largest relative residual of `𝓛_0(B)` and `𝒦_ℓ(B)` in `space`.
pub fn generator_invariance_residual(
    gen: &ControlledLindbladGenerator,
    space: &OperatorSubspace,
) -> Result<f64> {
    check_dim(gen.dim(), space.dim_h())?;
    invariance_residual_parts(space, &all_parts(gen))
}

/// Krylov observable space of the controlled generator: invariant under the
/// drift and every channel part, containing `omega` and `𝟙`. Exceeding
/// `max_dim` returns the partial space with `converged = false`.
pub fn observable_space(
    gen: &ControlledLindbladGenerator,
    omega: &OperatorSubspace,
    tol: f64,
    max_dim: usize,
) -> Result<ObservableSpaceReport> {
    check_dim(gen.dim(), omega.dim_h())?;
    gen.validate_affine_span()?;
    let (mut space, identity_adjoined) = seeded(omega, tol)?;
    let parts = all_parts(gen);
    let (iterations, growth_log, converged) = krylov_extend(&mut space, &parts, tol, max_dim);
    let invariance_residual = invariance_residual_parts(&space, &parts)?;
    debug!(
        "observable space: dim {} after {iterations} sweeps (converged: {converged})",
        space.dim()
    );
    Ok(ObservableSpaceReport {
        space,
        iterations,
        growth_log,
        invariance_residual,
        converged,
        identity_adjoined,
    })
}

/// Largest Hilbert dimension accepted by the superoperator-algebra oracle.
pub const SUPERALG_MAX_DIM: usize = 8;

/// Observable space obtained from the associative algebra generated by the
/// superoperators `{𝓛_0, 𝒦_ℓ}` (closure under composition), applied to
/// `omega ∪ {𝟙}`. Independent of the operator-level Krylov iteration.
pub fn observable_space_superalg_oracle(
    gen: &ControlledLindbladGenerator,
    omega: &OperatorSubspace,
    tol: f64,
    max_dim: usize,
) -> Result<OperatorSubspace> {
    let n = gen.dim();
    check_dim(n, omega.dim_h())?;
    if n > SUPERALG_MAX_DIM {
        return Err(QmrError::invalid(format!(
            "superoperator-algebra oracle is limited to n ≤ {SUPERALG_MAX_DIM} (got {n})"
        )));
    }
    let n2 = n * n;
    let (drift, channels) = gen.affine_superoperators();
    let gens: Vec<Operator> = std::iter::once(drift)
        .chain(channels)
        .map(|s| Operator::from_matrix_unchecked(s.into_matrix()))
        .collect();
    // Span of all nonempty words in the generators, as n²×n² matrices.
    let mut alg = OperatorSubspace::empty(n2);
    for g in &gens {
        alg.try_push(g, tol);
    }
    let mut next = 0;
    while next < alg.dim() {
        let w = alg.basis()[next].clone();
        next += 1;
        for g in &gens {
            alg.try_push(&(g * &w), tol);
            if alg.dim() > max_dim {
                return Err(QmrError::NotConverged(format!(
                    "superoperator algebra exceeded max_dim = {max_dim}"
                )));
            }
        }
    }
    let (mut out, _) = seeded(omega, tol)?;
    let seeds: Vec<Operator> = out.basis().to_vec();
    for s in alg.basis() {
        for o in &seeds {
            let v = s.matrix() * o.vec();
            out.try_push(&Operator::from_vec(n, &v)?, tol);
        }
    }
    Ok(out)
}

/// Parametric observable space `Õ = span ∪_u {𝓛_u^k(O)}` together with its
/// relation to the full observable space.
#[derive(Clone, Debug)]
pub struct ParametricSpaceReport {
    pub space: OperatorSubspace,
    /// `None` when the control set is degenerate and `𝒪` is unavailable.
    pub containment_residual: Option<f64>,
    pub contained_in_full: Option<bool>,
    pub equals_full: Option<bool>,
}

pub fn observable_space_parametric(
    gen: &ControlledLindbladGenerator,
    omega: &OperatorSubspace,
    sample_controls: &[Vec<f64>],
    tol: f64,
) -> Result<ParametricSpaceReport> {
    let n = gen.dim();
    check_dim(n, omega.dim_h())?;
    if sample_controls.is_empty() {
        return Err(QmrError::invalid("at least one control sample is required"));
    }
    let (seed_space, _) = seeded(omega, tol)?;
    let mut union = seed_space.clone();
    for u in sample_controls {
        let part = gen.part_at(u)?;
        let mut k = seed_space.clone();
        let (_, _, converged) = krylov_extend(&mut k, &[&part], tol, n * n);
        if !converged {
            return Err(QmrError::NotConverged(
                "time-independent Krylov space exceeded n²".into(),
            ));
        }
        for b in k.basis() {
            union.try_push(b, tol);
        }
    }
    let mut report = ParametricSpaceReport {
        space: union,
        containment_residual: None,
        contained_in_full: None,
        equals_full: None,
    };
    if gen.validate_affine_span().is_ok() {
        let full = observable_space(gen, omega, tol, n * n)?;
        let res = full.space.containment_residual(&report.space)?;
        let contained = res <= tol.max(1e-9);
        if !contained {
            warn!("parametric space is not contained in the observable space (residual {res:.3e})");
        }
        report.containment_residual = Some(res);
        report.contained_in_full = Some(contained);
        report.equals_full = Some(contained && full.space.dim() == report.space.dim());
    }
    Ok(report)
}

/// Frame algebra: the unital ∗-algebra generated by the drift Hamiltonian,
/// channel Hamiltonians, all noise operators and the observables.
pub fn frame_algebra(
    gen: &ControlledLindbladGenerator,
    omega: &OperatorSubspace,
    tol: f64,
    max_dim: usize,
) -> Result<OperatorSubspace> {
    let n = gen.dim();
    check_dim(n, omega.dim_h())?;
    let mut ops: Vec<Operator> = vec![Operator::identity(n), gen.h0().clone()];
    ops.extend(gen.noise_drift().iter().cloned());
    ops.extend(gen.channels().iter().map(|c| c.operator.clone()));
    ops.extend(omega.basis().iter().cloned());
    let ops: Vec<Operator> = ops.into_iter().filter(|o| o.norm() > 0.0).collect();
    let seeds = crate::operator::orthonormalize(&ops, tol)?;
    let f = algebra_closure(&seeds, tol, max_dim)?;
    let res = generator_invariance_residual(gen, &f)?;
    if res > tol.max(1e-8) {
        return Err(QmrError::Numerical(format!(
            "frame algebra is not generator-invariant (residual {res:.3e})"
        )));
    }
    Ok(f)
}

/// Outcome of the drift-reduction invariance test.
#[derive(Clone, Debug)]
pub struct DriftReductionCheck {
    pub holds: bool,
    /// Krylov space of the base family (drift plus non-designated channels).
    pub o0: OperatorSubspace,
    /// Largest relative residual of a designated channel applied to `o0`.
    pub residual: f64,
}

/// Splits the generator into a base family (drift and every channel not listed
/// in `designated`) and the designated channel parts, builds the base family's
/// observable space `𝒪₀` and tests its invariance under each designated part.
pub fn check_drift_reduction(
    gen: &ControlledLindbladGenerator,
    designated: &[usize],
    omega: &OperatorSubspace,
    tol: f64,
) -> Result<DriftReductionCheck> {
    let n = gen.dim();
    check_dim(n, omega.dim_h())?;
    for &d in designated {
        if d >= gen.num_channels() {
            return Err(QmrError::invalid(format!(
                "designated channel index {d} out of range"
            )));
        }
    }
    let mut base: Vec<&GeneratorPart> = vec![gen.drift_part()];
    let mut split: Vec<&GeneratorPart> = Vec::new();
    for (i, p) in gen.channel_parts().iter().enumerate() {
        if designated.contains(&i) {
            split.push(p);
        } else {
            base.push(p);
        }
    }
    let (mut o0, _) = seeded(omega, tol)?;
    let (_, _, converged) = krylov_extend(&mut o0, &base, tol, n * n);
    if !converged {
        return Err(QmrError::NotConverged("base Krylov space exceeded n²".into()));
    }
    let residual = invariance_residual_parts(&o0, &split)?;
    Ok(DriftReductionCheck {
        holds: residual <= tol.max(1e-9),
        o0,
        residual,
    })
}

/// Whether two states give identical expectations on every operator of `space`.
pub fn indistinguishable(
    rho1: &Operator,
    rho2: &Operator,
    space: &OperatorSubspace,
    tol: f64,
) -> Result<bool> {
    check_dim(rho1.dim(), rho2.dim())?;
    check_dim(space.dim_h(), rho1.dim())?;
    validate_density(rho1)?;
    validate_density(rho2)?;
    let diff = Operator::from_matrix_unchecked(rho1.matrix() - rho2.matrix());
    let (proj, _) = space.residual(&diff)?;
    Ok(proj.norm() <= tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lindblad::{ChannelKind, CoefficientDomain, ControlChannel};
    use crate::linalg::{random_hermitian, random_operator};
    use crate::operator::{orthonormalize, pauli, subspace_equal, C64};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn span(ops: &[Operator]) -> OperatorSubspace {
        orthonormalize(ops, 1e-10).unwrap()
    }

    fn p(c: char) -> Operator {
        pauli(c).unwrap()
    }

    fn random_model(n: usize, m: usize, seed: u64) -> ControlledLindbladGenerator {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chans = (0..m)
            .map(|k| {
                if k % 2 == 0 {
                    ControlChannel::new(
                        ChannelKind::Hamiltonian,
                        random_hermitian(n, &mut rng),
                        format!("h{k}"),
                        CoefficientDomain::Interval { min: -1.0, max: 1.0 },
                    )
                } else {
                    ControlChannel::new(
                        ChannelKind::Dissipator,
                        random_operator(n, &mut rng),
                        format!("d{k}"),
                        CoefficientDomain::Interval { min: 0.0, max: 2.0 },
                    )
                }
                .unwrap()
            })
            .collect();
        let noise = vec![random_operator(n, &mut rng).scale(C64::new(0.3, 0.0))];
        ControlledLindbladGenerator::new(random_hermitian(n, &mut rng), noise, chans).unwrap()
    }

    #[test]
    fn identity_only() {
        let gen = random_model(3, 2, 1);
        let omega = span(&[Operator::identity(3)]);
        let r = observable_space(&gen, &omega, 1e-10, 9).unwrap();
        assert_eq!(r.space.dim(), 1);
        assert!(r.converged && !r.identity_adjoined);
    }

    #[test]
    fn commutator_closes_on_xy() {
        let gen = ControlledLindbladGenerator::new(p('Z'), vec![], vec![]).unwrap();
        let omega = span(&[Operator::identity(2), p('X')]);
        let r = observable_space(&gen, &omega, 1e-10, 4).unwrap();
        assert_eq!(r.space.dim(), 3);
        assert!(r.space.contains(&p('Y'), 1e-10).unwrap());
        assert!(r.invariance_residual <= 1e-10);
        let oracle = observable_space_superalg_oracle(&gen, &omega, 1e-10, 16).unwrap();
        assert!(subspace_equal(&oracle, &r.space, 1e-9).unwrap());
    }

    #[test]
    fn identity_is_adjoined() {
        let gen = ControlledLindbladGenerator::new(p('Z'), vec![], vec![]).unwrap();
        let r = observable_space(&gen, &span(&[p('Z')]), 1e-10, 4).unwrap();
        assert!(r.identity_adjoined);
        assert_eq!(r.space.dim(), 2);
    }

    #[test]
    fn non_convergence_is_flagged() {
        let gen = random_model(3, 1, 4);
        let omega = span(&[random_hermitian(3, &mut ChaCha8Rng::seed_from_u64(1))]);
        let r = observable_space(&gen, &omega, 1e-10, 3).unwrap();
        assert!(!r.converged);
        assert!(observable_space(&gen, &span(&[p('Z')]), 1e-10, 9).is_err());
    }

    #[test]
    fn degenerate_controls_rejected() {
        let ch = ControlChannel::new(
            ChannelKind::Hamiltonian,
            p('X'),
            "x",
            CoefficientDomain::Interval { min: 0.5, max: 0.5 },
        )
        .unwrap();
        let gen = ControlledLindbladGenerator::new(p('Z'), vec![], vec![ch]).unwrap();
        assert!(matches!(
            observable_space(&gen, &span(&[p('X')]), 1e-10, 4),
            Err(QmrError::DegenerateControlSet(_))
        ));
        let par = observable_space_parametric(&gen, &span(&[p('X')]), &[vec![0.5]], 1e-10).unwrap();
        assert!(par.contained_in_full.is_none());
        assert_eq!(par.space.dim(), 4);
    }

    #[test]
    fn oracle_matches_on_random_models() {
        for seed in 0..5 {
            let gen = random_model(3, 2, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let omega = span(&[random_hermitian(3, &mut rng)]);
            let r = observable_space(&gen, &omega, 1e-10, 9).unwrap();
            let o = observable_space_superalg_oracle(&gen, &omega, 1e-10, 81).unwrap();
            assert!(subspace_equal(&r.space, &o, 1e-9).unwrap());
        }
    }

    #[test]
    fn oracle_with_zero_generator_returns_omega() {
        let gen = ControlledLindbladGenerator::new(Operator::zeros(2), vec![], vec![]).unwrap();
        let omega = span(&[Operator::identity(2), p('X')]);
        let o = observable_space_superalg_oracle(&gen, &omega, 1e-10, 16).unwrap();
        assert!(subspace_equal(&o, &omega, 1e-12).unwrap());
    }

    #[test]
    fn oracle_guard() {
        let gen = ControlledLindbladGenerator::new(Operator::zeros(9), vec![], vec![]).unwrap();
        let omega = span(&[Operator::identity(9)]);
        assert!(observable_space_superalg_oracle(&gen, &omega, 1e-10, 10).is_err());
    }

    #[test]
    fn parametric_single_sample_is_time_independent_krylov() {
        let gen = random_model(3, 2, 7);
        let r = observable_space_parametric(&gen, &span(&[Operator::identity(3)]), &[vec![0.2, 0.5]], 1e-10)
            .unwrap();
        assert_eq!(r.space.dim(), 1);

        let omega = span(&[random_hermitian(3, &mut ChaCha8Rng::seed_from_u64(2))]);
        let u = vec![0.2, 0.5];
        let r = observable_space_parametric(&gen, &omega, &[u.clone()], 1e-10).unwrap();
        let part = gen.part_at(&u).unwrap();
        let mut k = seeded(&omega, 1e-10).unwrap().0;
        krylov_extend(&mut k, &[&part], 1e-10, 9);
        assert!(subspace_equal(&r.space, &k, 1e-9).unwrap());
        assert_eq!(r.contained_in_full, Some(true));
    }

    #[test]
    fn frame_algebra_diagonal() {
        let d = |v: [f64; 3]| Operator::from_real(3, &[v[0], 0., 0., 0., v[1], 0., 0., 0., v[2]]).unwrap();
        let gen = ControlledLindbladGenerator::new(d([1., 2., 3.]), vec![d([0.5, 0., 0.])], vec![]).unwrap();
        let f = frame_algebra(&gen, &span(&[d([0., 1., 0.])]), 1e-10, 9).unwrap();
        assert_eq!(f.dim(), 3);
    }

    #[test]
    fn frame_algebra_generic_is_full() {
        let gen = random_model(3, 2, 3);
        let omega = span(&[Operator::identity(3)]);
        assert_eq!(frame_algebra(&gen, &omega, 1e-10, 9).unwrap().dim(), 9);
    }

    #[test]
    fn drift_reduction_trivial_and_failing() {
        // No designated channels: holds, 𝒪₀ = 𝒪.
        let gen = random_model(2, 2, 5);
        let omega = span(&[p('Z')]);
        let c = check_drift_reduction(&gen, &[], &omega, 1e-10).unwrap();
        assert!(c.holds);
        let o = observable_space(&gen, &omega, 1e-10, 4).unwrap();
        assert!(subspace_equal(&c.o0, &o.space, 1e-9).unwrap());

        // Dephasing drift, σ_x rotation designated: σ_z leaves 𝒪₀ = span{𝟙, σ_z}.
        let x = ControlChannel::new(ChannelKind::Hamiltonian, p('X'), "x", CoefficientDomain::Unconstrained).unwrap();
        let gen = ControlledLindbladGenerator::new(Operator::zeros(2), vec![p('Z')], vec![x]).unwrap();
        let c = check_drift_reduction(&gen, &[0], &omega, 1e-10).unwrap();
        assert!(!c.holds);
        assert_eq!(c.o0.dim(), 2);
    }

    #[test]
    fn indistinguishability() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r1 = crate::linalg::random_density(2, &mut rng);
        let r2 = crate::linalg::random_density(2, &mut rng);
        let full = OperatorSubspace::full(2);
        assert!(indistinguishable(&r1, &r1, &full, 1e-12).unwrap());
        assert!(!indistinguishable(&r1, &r2, &full, 1e-12).unwrap());
        let id = span(&[Operator::identity(2)]);
        assert!(indistinguishable(&r1, &r2, &id, 1e-12).unwrap());
    }
}
