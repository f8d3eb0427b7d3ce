//! Central-spin model: qubit 0 coupled to `N` dephasing bath spins by
//! `σ_z ⊗ σ_z` interactions, driven by `σ_x` and `σ_z` controls on the central
//! spin. Also provides the classical-ensemble simulator, which evolves one
//! 2×2 Hamiltonian per bath configuration `q`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, QmrError, Result};
use crate::lindblad::{ChannelKind, CoefficientDomain};
use crate::model_file::{
    ChannelSpec, DomainSpec, MatrixSpec, ModelFile, ObservableSpec, PauliTerm, FORMAT_VERSION,
};
use crate::operator::{validate_density, CMatrix, Operator, C64, I};
use crate::propagation::{ControlSchedule, Trajectory};

/// Optional controlled dissipation on the bath.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BathDissipation {
    /// `σ_x` on bath spin `k` (1-based).
    Single(usize),
    /// `Σ_k σ_x^{(k)}` as one noise operator.
    Collective,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CentralSpinParams {
    pub n_bath: usize,
    /// Symmetric `(N+1)×(N+1)` couplings: `J[0][k]` central–bath, `J[k][k]`
    /// bath fields, `J[j][k]` bath–bath (`1 ≤ j < k`).
    pub couplings: Vec<Vec<f64>>,
    /// Bath dephasing strengths; noise operators are `γ_k σ_z^{(k)}`.
    pub gammas: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dissipation: Option<BathDissipation>,
}

impl CentralSpinParams {
    /// Couplings uniform in `[-1, 1]`, dephasing strengths uniform in `[0.1, 0.5]`.
    pub fn random(n_bath: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = n_bath + 1;
        let mut j = vec![vec![0.0; n]; n];
        for a in 0..n {
            for b in a..n {
                if a == 0 && b == 0 {
                    continue;
                }
                let x = rng.random_range(-1.0..1.0);
                j[a][b] = x;
                j[b][a] = x;
            }
        }
        CentralSpinParams {
            n_bath,
            couplings: j,
            gammas: (0..n_bath).map(|_| rng.random_range(0.1..0.5)).collect(),
            dissipation: None,
        }
    }

    pub fn with_dissipation(mut self, d: BathDissipation) -> Self {
        self.dissipation = Some(d);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_bath;
        if n == 0 {
            return Err(QmrError::invalid("central-spin model needs N ≥ 1 bath spins"));
        }
        if n > 10 {
            return Err(QmrError::invalid("central-spin model limited to N ≤ 10"));
        }
        if self.couplings.len() != n + 1 || self.couplings.iter().any(|r| r.len() != n + 1) {
            return Err(QmrError::invalid(format!(
                "couplings must be a {}×{} matrix",
                n + 1,
                n + 1
            )));
        }
        for a in 0..=n {
            for b in 0..=n {
                let (x, y) = (self.couplings[a][b], self.couplings[b][a]);
                if !x.is_finite() || (x - y).abs() > 1e-12 * x.abs().max(1.0) {
                    return Err(QmrError::invalid("couplings must be finite and symmetric"));
                }
            }
        }
        if self.gammas.len() != n {
            return Err(QmrError::invalid(format!("expected {n} dephasing strengths")));
        }
        if self.gammas.iter().any(|g| !(*g >= 0.0) || !g.is_finite()) {
            return Err(QmrError::invalid("dephasing strengths must be non-negative"));
        }
        if let Some(BathDissipation::Single(k)) = self.dissipation {
            if k == 0 || k > n {
                return Err(QmrError::invalid(format!("bath spin index {k} outside 1..={n}")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        1 << (self.n_bath + 1)
    }

    /// `β_q = Σ_k ±J_{0,k}`, sign `−` when bath spin `k` is down in
    /// configuration `q`. Bath spin `k` is bit `N − k` of `q`, matching the
    /// Kronecker order where the leftmost factor is most significant.
    pub fn beta(&self, q: usize) -> f64 {
        let n = self.n_bath;
        (1..=n)
            .map(|k| {
                let bit = (q >> (n - k)) & 1;
                if bit == 1 {
                    -self.couplings[0][k]
                } else {
                    self.couplings[0][k]
                }
            })
            .sum()
    }
}

fn string_with(n_qubits: usize, letters: &[(usize, char)]) -> String {
    let mut s: Vec<char> = vec!['I'; n_qubits];
    for &(site, c) in letters {
        s[site] = c;
    }
    s.into_iter().collect()
}

fn term(n_qubits: usize, letters: &[(usize, char)], coeff: f64) -> PauliTerm {
    PauliTerm {
        string: string_with(n_qubits, letters),
        coeff: [coeff, 0.0],
    }
}

/// Model file for the central-spin system. The parameters are stored under
/// `metadata.central_spin`.
pub fn generate_central_spin(params: &CentralSpinParams) -> Result<ModelFile> {
    params.validate()?;
    let n = params.n_bath;
    let q = n + 1;
    let j = &params.couplings;
    let mut h = Vec::new();
    for k in 1..=n {
        if j[k][k] != 0.0 {
            h.push(term(q, &[(k, 'Z')], j[k][k]));
        }
        for l in k + 1..=n {
            if j[k][l] != 0.0 {
                h.push(term(q, &[(k, 'Z'), (l, 'Z')], j[k][l]));
            }
        }
    }
    for k in 1..=n {
        if j[0][k] != 0.0 {
            h.push(term(q, &[(0, 'Z'), (k, 'Z')], j[0][k]));
        }
    }
    if h.is_empty() {
        h.push(term(q, &[], 0.0));
    }
    let noise = (1..=n)
        .filter(|&k| params.gammas[k - 1] != 0.0)
        .map(|k| MatrixSpec::Pauli(vec![term(q, &[(k, 'Z')], params.gammas[k - 1])]))
        .collect();
    let mut channels = vec![
        ChannelSpec {
            kind: ChannelKind::Hamiltonian,
            label: "u0".into(),
            operator: MatrixSpec::Pauli(vec![term(q, &[(0, 'X')], 1.0)]),
            coefficient_domain: DomainSpec(CoefficientDomain::Unconstrained),
        },
        ChannelSpec {
            kind: ChannelKind::Hamiltonian,
            label: "u1".into(),
            operator: MatrixSpec::Pauli(vec![term(q, &[(0, 'Z')], 1.0)]),
            coefficient_domain: DomainSpec(CoefficientDomain::Unconstrained),
        },
    ];
    if let Some(d) = params.dissipation {
        let terms = match d {
            BathDissipation::Single(k) => vec![term(q, &[(k, 'X')], 1.0)],
            BathDissipation::Collective => (1..=n).map(|k| term(q, &[(k, 'X')], 1.0)).collect(),
        };
        channels.push(ChannelSpec {
            kind: ChannelKind::Dissipator,
            label: "u2".into(),
            operator: MatrixSpec::Pauli(terms),
            coefficient_domain: DomainSpec(CoefficientDomain::Interval {
                min: 0.0,
                max: f64::INFINITY,
            }),
        });
    }
    let observables = [("sigma_0", 'I'), ("sigma_x", 'X'), ("sigma_y", 'Y'), ("sigma_z", 'Z')]
        .iter()
        .map(|&(label, c)| ObservableSpec {
            label: label.into(),
            operator: MatrixSpec::Pauli(vec![term(q, &[(0, c)], 1.0)]),
        })
        .collect();
    let metadata = serde_json::json!({ "central_spin": params });
    Ok(ModelFile {
        format_version: FORMAT_VERSION,
        kind: "model".into(),
        dim: params.dim(),
        hamiltonian_drift: MatrixSpec::Pauli(h),
        noise_drift: noise,
        control_channels: channels,
        observables,
        metadata: Some(metadata),
    })
}

/// Central-spin parameters stored in a generated model file, if any.
pub fn params_from_metadata(file: &ModelFile) -> Option<CentralSpinParams> {
    let v = file.metadata.as_ref()?.get("central_spin")?;
    serde_json::from_value(v.clone()).ok()
}

/// Per-configuration reduced Hamiltonian `(β_q + u₁)σ_z + u₀σ_x`.
pub fn block_hamiltonian(params: &CentralSpinParams, q: usize, u0: f64, u1: f64) -> CMatrix {
    let z = params.beta(q) + u1;
    CMatrix::from_row_slice(2, 2, &[C64::new(z, 0.0), C64::new(u0, 0.0), C64::new(u0, 0.0), C64::new(-z, 0.0)])
}

/// `e^{iHt}` for a real traceless 2×2 Hamiltonian `H = a σ_z + b σ_x`.
fn su2_exp(h: &CMatrix, t: f64) -> CMatrix {
    let a = h[(0, 0)].re;
    let b = h[(0, 1)].re;
    let w = (a * a + b * b).sqrt();
    let (c, s) = ((w * t).cos(), (w * t).sin());
    let sinc = if w > 0.0 { s / w } else { t };
    let mut out = CMatrix::identity(2, 2) * C64::new(c, 0.0);
    out += h * (I * sinc);
    out
}

/// `⟨σ_ℓ^{(0)}(t)⟩_ρ` from the ensemble of independent two-level systems:
/// `Σ_q tr[V_q σ_ℓ V_q† ρ̌_q]`, `V_q` the ordered product of `e^{iȞ_q Δ}`
/// and `ρ̌_q` the central-spin block of `ρ` at bath configuration `q`.
/// Requires any bath-dissipation control to stay at zero.
pub fn analytic_central_spin(
    params: &CentralSpinParams,
    schedule: &ControlSchedule,
    rho: &Operator,
    letter: char,
    sample_times: &[f64],
) -> Result<Trajectory<f64>> {
    params.validate()?;
    let dim = params.dim();
    check_dim(dim, rho.dim())?;
    validate_density(rho)?;
    let expected_controls = 2 + usize::from(params.dissipation.is_some());
    check_dim(expected_controls, schedule.num_controls())?;
    if schedule.segments().iter().any(|s| s.u.len() > 2 && s.u[2] != 0.0) {
        return Err(QmrError::invalid(
            "the ensemble simulator needs the bath-dissipation control at zero",
        ));
    }
    let sigma = crate::operator::pauli(letter.to_ascii_uppercase())
        .ok_or_else(|| QmrError::invalid(format!("unknown Pauli letter `{letter}`")))?
        .into_matrix();
    let total = schedule.total_duration();
    let mut prev = 0.0;
    for &t in sample_times {
        if !(t >= 0.0) || t > total * (1.0 + 1e-12) || t < prev {
            return Err(QmrError::invalid(format!("invalid sample time {t}")));
        }
        prev = t;
    }

    let half = dim / 2;
    let m = rho.matrix();
    let mut values = vec![0.0; sample_times.len()];
    for q in 0..half {
        let rq = CMatrix::from_fn(2, 2, |a, b| m[(a * half + q, b * half + q)]);
        let mut v = CMatrix::identity(2, 2);
        let mut t_cur = 0.0;
        let mut start = 0.0;
        let mut seg = 0;
        let segs = schedule.segments();
        for (ti, &t) in sample_times.iter().enumerate() {
            while seg + 1 < segs.len() && t > start + segs[seg].duration {
                let h = block_hamiltonian(params, q, segs[seg].u[0], segs[seg].u[1]);
                let end = start + segs[seg].duration;
                v = su2_exp(&h, end - t_cur) * v;
                t_cur = end;
                start = end;
                seg += 1;
            }
            if t > t_cur {
                let h = block_hamiltonian(params, q, segs[seg].u[0], segs[seg].u[1]);
                v = su2_exp(&h, t - t_cur) * v;
                t_cur = t;
            }
            let o = &v * &sigma * v.adjoint();
            let e: C64 = (o * &rq).trace();
            values[ti] += e.re;
        }
    }
    Ok(Trajectory {
        label: format!("sigma_{}", letter.to_ascii_lowercase()),
        times: sample_times.to_vec(),
        values,
        max_imag_residue: 0.0,
    })
}

/// `|+⟩⟨+|^{⊗(N+1)}`.
pub fn product_plus_state(n_bath: usize) -> Operator {
    let d = 1usize << (n_bath + 1);
    let w = C64::new(1.0 / d as f64, 0.0);
    Operator::new(CMatrix::from_element(d, d, w)).expect("square")
}
