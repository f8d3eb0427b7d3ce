#![allow(dead_code)]

use qmr_core::lindblad::{ChannelKind, CoefficientDomain, ControlChannel, ControlledLindbladGenerator};
use qmr_core::linalg::{random_hermitian, random_operator, random_unitary};
use qmr_core::model_file::Model;
use qmr_core::operator::{CMatrix, Operator, C64};
use rand::Rng;

/// Kind of random test model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    /// Unstructured operators; generically no reduction.
    Generic,
    /// Every operator lies in `V (⊕_k 𝔅(ℂ^{dF_k}) ⊗ 𝟙_{dG_k}) V†`.
    Symmetric,
    /// A qubit coupled to an `n/2`-level classical register: Hamiltonians are
    /// block diagonal in the register, noise operators are register jumps.
    Register,
}

pub fn random_domain<R: Rng>(kind: ChannelKind, rng: &mut R) -> CoefficientDomain {
    match kind {
        ChannelKind::Hamiltonian => match rng.random_range(0..3) {
            0 => CoefficientDomain::Unconstrained,
            1 => CoefficientDomain::Interval { min: -1.0, max: 2.0 },
            _ => CoefficientDomain::Interval { min: 0.5, max: f64::INFINITY },
        },
        ChannelKind::Dissipator => match rng.random_range(0..2) {
            0 => CoefficientDomain::Interval { min: 0.0, max: 1.0 },
            _ => CoefficientDomain::Interval { min: 0.0, max: f64::INFINITY },
        },
    }
}

fn random_shapes<R: Rng>(n: usize, rng: &mut R) -> Vec<(usize, usize)> {
    loop {
        let mut rem = n;
        let mut out = Vec::new();
        while rem > 0 {
            let df = rng.random_range(1..=rem);
            let dg = rng.random_range(1..=rem / df);
            out.push((df, dg));
            rem -= df * dg;
        }
        if out != [(n, 1)] || n == 1 {
            return out;
        }
    }
}

/// `V (⊕_k A_k ⊗ 𝟙_{dG_k}) V†` with random `A_k` produced by `f`.
fn embed<R: Rng>(
    shapes: &[(usize, usize)],
    v: &CMatrix,
    rng: &mut R,
    f: &dyn Fn(usize, &mut R) -> CMatrix,
) -> Operator {
    let n = v.nrows();
    let mut m = CMatrix::zeros(n, n);
    let mut off = 0;
    for &(df, dg) in shapes {
        let a = f(df, rng);
        for i in 0..df {
            for j in 0..df {
                for g in 0..dg {
                    m[(off + i * dg + g, off + j * dg + g)] = a[(i, j)];
                }
            }
        }
        off += df * dg;
    }
    Operator::new(v * m * v.adjoint()).unwrap()
}

fn herm<R: Rng>(d: usize, rng: &mut R) -> CMatrix {
    random_hermitian(d, rng).into_matrix()
}

fn general<R: Rng>(d: usize, rng: &mut R) -> CMatrix {
    random_operator(d, rng).into_matrix()
}

/// A random controlled model with 1–3 channels and 1–4 observables.
pub fn random_model<R: Rng>(family: Family, n: usize, rng: &mut R) -> Model {
    let family = if family == Family::Register && n % 2 == 1 {
        Family::Symmetric
    } else {
        family
    };
    let n_channels = rng.random_range(1..=3);
    let n_noise = rng.random_range(0..=2);
    let n_obs = rng.random_range(1..=4);
    let kinds: Vec<ChannelKind> = (0..n_channels)
        .map(|_| {
            if rng.random_bool(0.5) {
                ChannelKind::Hamiltonian
            } else {
                ChannelKind::Dissipator
            }
        })
        .collect();

    let (h0, noise, ops, obs): (Operator, Vec<Operator>, Vec<Operator>, Vec<Operator>) = match family {
        Family::Generic => (
            random_hermitian(n, rng),
            (0..n_noise).map(|_| random_operator(n, rng)).collect(),
            kinds
                .iter()
                .map(|k| match k {
                    ChannelKind::Hamiltonian => random_hermitian(n, rng),
                    ChannelKind::Dissipator => random_operator(n, rng),
                })
                .collect(),
            (0..n_obs).map(|_| random_hermitian(n, rng)).collect(),
        ),
        Family::Symmetric => {
            let shapes = random_shapes(n, rng);
            let v = random_unitary(n, rng);
            (
                embed(&shapes, &v, rng, &herm),
                (0..n_noise).map(|_| embed(&shapes, &v, rng, &general)).collect(),
                kinds
                    .iter()
                    .map(|k| match k {
                        ChannelKind::Hamiltonian => embed(&shapes, &v, rng, &herm),
                        ChannelKind::Dissipator => embed(&shapes, &v, rng, &general),
                    })
                    .collect(),
                (0..n_obs).map(|_| embed(&shapes, &v, rng, &herm)).collect(),
            )
        }
        Family::Register => {
            let m = n / 2;
            let qubit = |rng: &mut R| random_hermitian(2, rng);
            let proj = |q: usize, p: usize| Operator::unit(m, q, p);
            let mut h = Operator::zeros(n);
            for q in 0..m {
                h = &h + &qubit(rng).kron(&proj(q, q));
            }
            let jump = |rng: &mut R| {
                let (q, p) = (rng.random_range(0..m), rng.random_range(0..m));
                let c = C64::new(rng.random_range(0.2..1.0), 0.0);
                Operator::identity(2).kron(&proj(q, p)).scale(c)
            };
            (
                h,
                (0..n_noise).map(|_| jump(rng)).collect(),
                kinds
                    .iter()
                    .map(|k| match k {
                        ChannelKind::Hamiltonian => qubit(rng).kron(&Operator::identity(m)),
                        ChannelKind::Dissipator => jump(rng),
                    })
                    .collect(),
                (0..n_obs).map(|_| qubit(rng).kron(&Operator::identity(m))).collect(),
            )
        }
    };
    let channels = kinds
        .iter()
        .zip(ops)
        .enumerate()
        .map(|(i, (&k, op))| ControlChannel::new(k, op, format!("c{i}"), random_domain(k, rng)).unwrap())
        .collect();
    Model {
        generator: ControlledLindbladGenerator::new(h0, noise, channels).unwrap(),
        observables: obs.into_iter().enumerate().map(|(i, o)| (format!("o{i}"), o)).collect(),
    }
}

pub fn family_for(seed: u64) -> Family {
    match seed % 3 {
        0 => Family::Generic,
        1 => Family::Symmetric,
        _ => Family::Register,
    }
}
