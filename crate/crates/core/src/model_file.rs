//! JSON file formats: models, schedules, states, trajectories and reduced
//! models. Every document carries `format_version` and `kind`.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{QmrError, Result};
use crate::lindblad::{
    ChannelKind, CoefficientDomain, ControlChannel, ControlledLindbladGenerator, GeneratorPart,
};
use crate::operator::{pauli_string, validate_density, CMatrix, Operator, C64, ZERO};
use crate::propagation::{ControlSchedule, Segment, Trajectory};
use crate::reduction::{build_reduction_maps, ReducedChannel, ReducedModel};
use crate::star_algebra::WedderburnStructure;

pub const FORMAT_VERSION: u32 = 1;

/// `qmr <version>`, embedded in emitted documents.
pub fn tool_version() -> String {
    format!("qmr {}", env!("CARGO_PKG_VERSION"))
}

fn parse_err(context: impl Into<String>, message: impl Into<String>) -> QmrError {
    QmrError::Parse {
        context: context.into(),
        message: message.into(),
    }
}

/// Deserializes JSON text, reporting the failing field path and position.
pub fn from_json_str<T: DeserializeOwned>(text: &str, context: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        parse_err(
            context,
            format!(
                "at `{path}` (line {}, column {}): {inner}",
                inner.line(),
                inner.column()
            ),
        )
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|source| QmrError::Io {
        context: format!("reading {}", path.display()),
        source,
    })?;
    from_json_str(&text, &path.display().to_string())
}

pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| parse_err("serializing", e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| QmrError::Io {
        context: format!("writing {}", path.display()),
        source,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &to_json_string(value)?)
}

fn check_header(version: u32, kind: &str, expected: &str, context: &str) -> Result<()> {
    if version != FORMAT_VERSION {
        return Err(parse_err(
            context,
            format!("unsupported format_version {version} (expected {FORMAT_VERSION})"),
        ));
    }
    if kind != expected {
        return Err(parse_err(
            context,
            format!("document kind is `{kind}`, expected `{expected}`"),
        ));
    }
    Ok(())
}

/// One term `coeff · P` of a Pauli-string expansion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PauliTerm {
    pub string: String,
    pub coeff: [f64; 2],
}

/// A matrix, either dense row-major or a sum of Pauli strings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix", into = "RawMatrix")]
pub enum MatrixSpec {
    Dense {
        re: Vec<Vec<f64>>,
        im: Option<Vec<Vec<f64>>>,
    },
    Pauli(Vec<PauliTerm>),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMatrix {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    re: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    im: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pauli: Option<Vec<PauliTerm>>,
}

impl TryFrom<RawMatrix> for MatrixSpec {
    type Error = String;

    fn try_from(raw: RawMatrix) -> std::result::Result<Self, String> {
        match (raw.re, raw.im, raw.pauli) {
            (Some(re), im, None) => Ok(MatrixSpec::Dense { re, im }),
            (None, None, Some(p)) => Ok(MatrixSpec::Pauli(p)),
            (None, Some(_), None) => Err("dense matrix needs `re` (`im` alone given)".into()),
            (None, None, None) => Err("matrix needs `re`/`im` or `pauli`".into()),
            _ => Err("matrix cannot mix `pauli` with `re`/`im`".into()),
        }
    }
}

impl From<MatrixSpec> for RawMatrix {
    fn from(m: MatrixSpec) -> RawMatrix {
        match m {
            MatrixSpec::Dense { re, im } => RawMatrix {
                re: Some(re),
                im,
                pauli: None,
            },
            MatrixSpec::Pauli(p) => RawMatrix {
                re: None,
                im: None,
                pauli: Some(p),
            },
        }
    }
}

impl MatrixSpec {
    /// Dense form; the `im` part is omitted when the matrix is real.
    pub fn from_operator(o: &Operator) -> Self {
        MatrixSpec::from_matrix(o.matrix())
    }

    pub fn from_matrix(m: &CMatrix) -> Self {
        let rows = |f: &dyn Fn(C64) -> f64| -> Vec<Vec<f64>> {
            (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| f(m[(i, j)])).collect())
                .collect()
        };
        let re = rows(&|z| z.re);
        let im = if m.iter().any(|z| z.im != 0.0) {
            Some(rows(&|z| z.im))
        } else {
            None
        };
        MatrixSpec::Dense { re, im }
    }

    /// Expands to a `rows × cols` matrix.
    pub fn to_matrix(&self, rows: usize, cols: usize, context: &str) -> Result<CMatrix> {
        match self {
            MatrixSpec::Dense { re, im } => {
                let shape_ok = |a: &Vec<Vec<f64>>| a.len() == rows && a.iter().all(|r| r.len() == cols);
                if !shape_ok(re) || im.as_ref().is_some_and(|a| !shape_ok(a)) {
                    return Err(parse_err(
                        context,
                        format!("dense matrix must be {rows}×{cols}"),
                    ));
                }
                Ok(CMatrix::from_fn(rows, cols, |i, j| {
                    C64::new(re[i][j], im.as_ref().map_or(0.0, |a| a[i][j]))
                }))
            }
            MatrixSpec::Pauli(terms) => {
                if rows != cols {
                    return Err(parse_err(context, "Pauli expansions are square"));
                }
                let mut acc = CMatrix::from_element(rows, cols, ZERO);
                for (k, t) in terms.iter().enumerate() {
                    let p = pauli_string(&t.string)
                        .map_err(|e| parse_err(format!("{context}: pauli[{k}]"), e.to_string()))?;
                    if p.dim() != rows {
                        return Err(parse_err(
                            format!("{context}: pauli[{k}]"),
                            format!(
                                "string `{}` acts on dimension {}, expected {rows}",
                                t.string,
                                p.dim()
                            ),
                        ));
                    }
                    acc += p.matrix() * C64::new(t.coeff[0], t.coeff[1]);
                }
                Ok(acc)
            }
        }
    }

    pub fn to_operator(&self, dim: usize, context: &str) -> Result<Operator> {
        Operator::new(self.to_matrix(dim, dim, context)?)
    }
}

/// Coefficient domain: `"unconstrained"` or `{"min": a, "max": b | null}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDomain", into = "RawDomain")]
pub struct DomainSpec(pub CoefficientDomain);

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawDomain {
    Named(String),
    Interval {
        min: f64,
        #[serde(default)]
        max: Option<f64>,
    },
}

impl TryFrom<RawDomain> for DomainSpec {
    type Error = String;

    fn try_from(raw: RawDomain) -> std::result::Result<Self, String> {
        match raw {
            RawDomain::Named(s) if s == "unconstrained" => Ok(DomainSpec(CoefficientDomain::Unconstrained)),
            RawDomain::Named(s) => Err(format!("unknown coefficient domain `{s}`")),
            RawDomain::Interval { min, max } => Ok(DomainSpec(CoefficientDomain::Interval {
                min,
                max: max.unwrap_or(f64::INFINITY),
            })),
        }
    }
}

impl From<DomainSpec> for RawDomain {
    fn from(d: DomainSpec) -> RawDomain {
        match d.0 {
            CoefficientDomain::Unconstrained => RawDomain::Named("unconstrained".into()),
            CoefficientDomain::Interval { min, max } => RawDomain::Interval {
                min,
                max: max.is_finite().then_some(max),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    pub kind: ChannelKind,
    pub label: String,
    pub operator: MatrixSpec,
    pub coefficient_domain: DomainSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableSpec {
    pub label: String,
    pub operator: MatrixSpec,
}

fn model_kind() -> String {
    "model".into()
}

/// Controlled Lindblad model with its target observables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format_version: u32,
    #[serde(default = "model_kind")]
    pub kind: String,
    pub dim: usize,
    pub hamiltonian_drift: MatrixSpec,
    #[serde(default)]
    pub noise_drift: Vec<MatrixSpec>,
    #[serde(default)]
    pub control_channels: Vec<ChannelSpec>,
    #[serde(default)]
    pub observables: Vec<ObservableSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<serde_json::Value>,
}

/// A parsed model: generator plus labelled observables `Ω`.
pub struct Model {
    pub generator: ControlledLindbladGenerator,
    pub observables: Vec<(String, Operator)>,
}

impl ModelFile {
    pub fn build(&self) -> Result<Model> {
        check_header(self.format_version, &self.kind, "model", "model")?;
        let n = self.dim;
        if n == 0 {
            return Err(parse_err("model", "`dim` must be positive"));
        }
        let h0 = self.hamiltonian_drift.to_operator(n, "hamiltonian_drift")?;
        let noise = self
            .noise_drift
            .iter()
            .enumerate()
            .map(|(k, m)| m.to_operator(n, &format!("noise_drift[{k}]")))
            .collect::<Result<Vec<_>>>()?;
        let mut channels = Vec::with_capacity(self.control_channels.len());
        for (k, c) in self.control_channels.iter().enumerate() {
            let op = c.operator.to_operator(n, &format!("control_channels[{k}].operator"))?;
            channels.push(ControlChannel::new(c.kind, op, c.label.clone(), c.coefficient_domain.0)?);
        }
        let generator = ControlledLindbladGenerator::new(h0, noise, channels)?;
        let mut observables = Vec::with_capacity(self.observables.len());
        for (k, o) in self.observables.iter().enumerate() {
            if observables.iter().any(|(l, _): &(String, Operator)| *l == o.label) {
                return Err(parse_err(
                    format!("observables[{k}]"),
                    format!("duplicate label `{}`", o.label),
                ));
            }
            observables.push((o.label.clone(), o.operator.to_operator(n, &format!("observables[{k}]"))?));
        }
        Ok(Model {
            generator,
            observables,
        })
    }

    /// Dense serialization of an in-memory model.
    pub fn from_model(model: &Model) -> Self {
        let g = &model.generator;
        ModelFile {
            format_version: FORMAT_VERSION,
            kind: model_kind(),
            dim: g.dim(),
            hamiltonian_drift: MatrixSpec::from_operator(g.h0()),
            noise_drift: g.noise_drift().iter().map(MatrixSpec::from_operator).collect(),
            control_channels: g
                .channels()
                .iter()
                .map(|c| ChannelSpec {
                    kind: c.kind,
                    label: c.label.clone(),
                    operator: MatrixSpec::from_operator(&c.operator),
                    coefficient_domain: DomainSpec(c.domain),
                })
                .collect(),
            observables: model
                .observables
                .iter()
                .map(|(l, o)| ObservableSpec {
                    label: l.clone(),
                    operator: MatrixSpec::from_operator(o),
                })
                .collect(),
            metadata: None,
        }
    }
}

pub fn parse_model(path: &Path) -> Result<Model> {
    read_json::<ModelFile>(path)?.build()
}

pub fn serialize_model(model: &ModelFile, path: &Path) -> Result<()> {
    write_json(path, model)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentSpec {
    pub duration: f64,
    pub u: Vec<f64>,
}

fn schedule_kind() -> String {
    "schedule".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleFile {
    pub format_version: u32,
    #[serde(default = "schedule_kind")]
    pub kind: String,
    pub segments: Vec<SegmentSpec>,
}

impl ScheduleFile {
    pub fn build(&self) -> Result<ControlSchedule> {
        check_header(self.format_version, &self.kind, "schedule", "schedule")?;
        ControlSchedule::new(
            self.segments
                .iter()
                .map(|s| Segment {
                    duration: s.duration,
                    u: s.u.clone(),
                })
                .collect(),
        )
    }

    pub fn from_schedule(s: &ControlSchedule) -> Self {
        ScheduleFile {
            format_version: FORMAT_VERSION,
            kind: schedule_kind(),
            segments: s
                .segments()
                .iter()
                .map(|s| SegmentSpec {
                    duration: s.duration,
                    u: s.u.clone(),
                })
                .collect(),
        }
    }
}

fn state_kind() -> String {
    "state".into()
}

/// A density matrix `rho`, or a pure state `ket` of `[re, im]` amplitudes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateFile {
    pub format_version: u32,
    #[serde(default = "state_kind")]
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<MatrixSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ket: Option<Vec<[f64; 2]>>,
}

impl StateFile {
    /// The state as a validated density matrix of dimension `dim`.
    pub fn build(&self, dim: usize) -> Result<Operator> {
        check_header(self.format_version, &self.kind, "state", "state")?;
        let rho = match (&self.rho, &self.ket) {
            (Some(m), None) => m.to_operator(dim, "rho")?,
            (None, Some(k)) => {
                if k.len() != dim {
                    return Err(parse_err("ket", format!("expected {dim} amplitudes, got {}", k.len())));
                }
                let psi: Vec<C64> = k.iter().map(|z| C64::new(z[0], z[1])).collect();
                let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                if !(norm > 0.0) {
                    return Err(parse_err("ket", "zero vector"));
                }
                Operator::new(CMatrix::from_fn(dim, dim, |i, j| psi[i] * psi[j].conj() / (norm * norm)))?
            }
            _ => return Err(parse_err("state", "exactly one of `rho` and `ket` is required")),
        };
        validate_density(&rho)?;
        Ok(rho)
    }

    pub fn from_density(rho: &Operator) -> Self {
        StateFile {
            format_version: FORMAT_VERSION,
            kind: state_kind(),
            rho: Some(MatrixSpec::from_operator(rho)),
            ket: None,
        }
    }

    /// Dimension declared by the document.
    pub fn dim(&self) -> Option<usize> {
        match (&self.rho, &self.ket) {
            (Some(MatrixSpec::Dense { re, .. }), _) => Some(re.len()),
            (Some(MatrixSpec::Pauli(t)), _) => t.first().map(|t| 1usize << t.string.len()),
            (None, Some(k)) => Some(k.len()),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesSpec {
    pub label: String,
    pub values: Vec<f64>,
    pub max_imag_residue: f64,
}

fn trajectories_kind() -> String {
    "trajectories".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryFile {
    pub format_version: u32,
    #[serde(default = "trajectories_kind")]
    pub kind: String,
    pub times: Vec<f64>,
    pub series: Vec<SeriesSpec>,
}

impl TrajectoryFile {
    pub fn from_trajectories(ts: &[Trajectory<f64>]) -> Self {
        TrajectoryFile {
            format_version: FORMAT_VERSION,
            kind: trajectories_kind(),
            times: ts.first().map(|t| t.times.clone()).unwrap_or_default(),
            series: ts
                .iter()
                .map(|t| SeriesSpec {
                    label: t.label.clone(),
                    values: t.values.clone(),
                    max_imag_residue: t.max_imag_residue,
                })
                .collect(),
        }
    }

    /// CSV with a `time` column followed by one column per series.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time");
        for s in &self.series {
            out.push(',');
            out.push_str(&s.label);
        }
        out.push('\n');
        for (i, t) in self.times.iter().enumerate() {
            out.push_str(&format!("{t:.17e}"));
            for s in &self.series {
                out.push_str(&format!(",{:.17e}", s.values[i]));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| parse_err("csv", "empty file"))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.first() != Some(&"time") {
            return Err(parse_err("csv", "first column must be `time`"));
        }
        let mut file = TrajectoryFile {
            format_version: FORMAT_VERSION,
            kind: trajectories_kind(),
            times: Vec::new(),
            series: cols[1..]
                .iter()
                .map(|l| SeriesSpec {
                    label: l.to_string(),
                    values: Vec::new(),
                    max_imag_residue: 0.0,
                })
                .collect(),
        };
        for (row, line) in lines.enumerate() {
            let vals = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| parse_err(format!("csv line {}", row + 2), e.to_string()))?;
            if vals.len() != cols.len() {
                return Err(parse_err(
                    format!("csv line {}", row + 2),
                    format!("expected {} columns, got {}", cols.len(), vals.len()),
                ));
            }
            file.times.push(vals[0]);
            for (s, v) in file.series.iter_mut().zip(&vals[1..]) {
                s.values.push(*v);
            }
        }
        Ok(file)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartSpec {
    pub hamiltonian: MatrixSpec,
    pub noise: Vec<MatrixSpec>,
}

impl PartSpec {
    fn from_part(p: &GeneratorPart) -> Self {
        PartSpec {
            hamiltonian: MatrixSpec::from_operator(p.hamiltonian_op()),
            noise: p.noise().iter().map(MatrixSpec::from_operator).collect(),
        }
    }

    fn build(&self, dim: usize, context: &str) -> Result<GeneratorPart> {
        let h = self.hamiltonian.to_operator(dim, &format!("{context}.hamiltonian"))?;
        let noise = self
            .noise
            .iter()
            .enumerate()
            .map(|(k, m)| m.to_operator(dim, &format!("{context}.noise[{k}]")))
            .collect::<Result<Vec<_>>>()?;
        GeneratorPart::new(h, noise)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReducedChannelSpec {
    pub label: String,
    pub kind: ChannelKind,
    pub coefficient_domain: DomainSpec,
    pub hamiltonian: MatrixSpec,
    pub noise: Vec<MatrixSpec>,
}

/// Summary of one Lindblad certificate as stored in files and reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateSummary {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controls: Option<Vec<f64>>,
    pub is_lindblad: bool,
    pub unitality_residual: f64,
    pub hermiticity_residual: f64,
    pub kossakowski_min_eigenvalue: f64,
    pub normalized_min_eigenvalue: f64,
    pub reconstruction_residual: f64,
}

impl CertificateSummary {
    pub fn from_entry(e: &crate::reduction::CertificateEntry) -> Self {
        let c = &e.certificate;
        CertificateSummary {
            label: e.label.clone(),
            controls: e.controls.clone(),
            is_lindblad: c.is_lindblad,
            unitality_residual: c.unitality_residual,
            hermiticity_residual: c.hermiticity_residual,
            kossakowski_min_eigenvalue: c.kossakowski_min_eigenvalue,
            normalized_min_eigenvalue: c.normalized_min_eigenvalue,
            reconstruction_residual: c.reconstruction_residual,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub subspace: f64,
    pub certificate: f64,
}

fn reduced_kind() -> String {
    "reduced_model".into()
}

/// Reduced model: Wedderburn data, reduced Lindblad parts and observables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReducedModelFile {
    pub format_version: u32,
    #[serde(default = "reduced_kind")]
    pub kind: String,
    pub dim_full: usize,
    pub dim_reduced: usize,
    /// `[dF, dG]` per block.
    pub blocks: Vec<[usize; 2]>,
    /// Unitary `U` whose rows span the blocks.
    pub u: MatrixSpec,
    pub drift: PartSpec,
    pub channels: Vec<ReducedChannelSpec>,
    pub observables: Vec<ObservableSpec>,
    pub certificates: Vec<CertificateSummary>,
    pub no_reduction: bool,
    pub path: String,
    pub seed: u64,
    pub tolerances: Tolerances,
    pub generator: String,
}

impl ReducedModelFile {
    pub fn from_reduced(m: &ReducedModel, path: &str, seed: u64, tolerances: Tolerances) -> Self {
        let w = &m.maps.wedderburn;
        ReducedModelFile {
            format_version: FORMAT_VERSION,
            kind: reduced_kind(),
            dim_full: m.dim_full(),
            dim_reduced: m.dim_reduced(),
            blocks: w.blocks.iter().map(|&(f, g)| [f, g]).collect(),
            u: MatrixSpec::from_matrix(&w.u),
            drift: PartSpec::from_part(&m.drift),
            channels: m
                .channels
                .iter()
                .map(|c| ReducedChannelSpec {
                    label: c.label.clone(),
                    kind: c.kind,
                    coefficient_domain: DomainSpec(c.domain),
                    hamiltonian: MatrixSpec::from_operator(c.part.hamiltonian_op()),
                    noise: c.part.noise().iter().map(MatrixSpec::from_operator).collect(),
                })
                .collect(),
            observables: m
                .observables
                .iter()
                .map(|(l, o)| ObservableSpec {
                    label: l.clone(),
                    operator: MatrixSpec::from_operator(o),
                })
                .collect(),
            certificates: m.certificates.iter().map(CertificateSummary::from_entry).collect(),
            no_reduction: m.no_reduction,
            path: path.into(),
            seed,
            tolerances,
            generator: tool_version(),
        }
    }

    /// Rebuilds the reduced model. Stored certificates stay in the file; the
    /// rebuilt model carries none.
    pub fn build(&self) -> Result<ReducedModel> {
        check_header(self.format_version, &self.kind, "reduced_model", "reduced model")?;
        let n = self.dim_full;
        let blocks: Vec<(usize, usize)> = self.blocks.iter().map(|b| (b[0], b[1])).collect();
        if blocks.iter().map(|(f, g)| f * g).sum::<usize>() != n
            || blocks.iter().map(|(f, _)| f).sum::<usize>() != self.dim_reduced
        {
            return Err(parse_err("reduced model", "block shapes inconsistent with dimensions"));
        }
        let u = self.u.to_matrix(n, n, "u")?;
        if (u.adjoint() * &u - CMatrix::identity(n, n)).norm() > 1e-8 {
            return Err(parse_err("u", "matrix is not unitary"));
        }
        let maps = build_reduction_maps(&WedderburnStructure { dim_h: n, u, blocks })?;
        let nr = self.dim_reduced;
        let drift = self.drift.build(nr, "drift")?;
        let channels = self
            .channels
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let ctx = format!("channels[{k}]");
                Ok(ReducedChannel {
                    label: c.label.clone(),
                    kind: c.kind,
                    domain: c.coefficient_domain.0,
                    part: PartSpec {
                        hamiltonian: c.hamiltonian.clone(),
                        noise: c.noise.clone(),
                    }
                    .build(nr, &ctx)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let observables = self
            .observables
            .iter()
            .enumerate()
            .map(|(k, o)| Ok((o.label.clone(), o.operator.to_operator(nr, &format!("observables[{k}]"))?)))
            .collect::<Result<Vec<_>>>()?;
        ReducedModel::from_parts(maps, drift, channels, observables, Vec::new())
    }
}

/// Either kind of model document, distinguished by its `kind` field.
pub enum AnyModel {
    Full(Model),
    Reduced(Box<ReducedModel>),
}

pub fn read_any_model(path: &Path) -> Result<AnyModel> {
    let text = fs::read_to_string(path).map_err(|source| QmrError::Io {
        context: format!("reading {}", path.display()),
        source,
    })?;
    let ctx = path.display().to_string();
    let v: serde_json::Value = from_json_str(&text, &ctx)?;
    match v.get("kind").and_then(|k| k.as_str()) {
        Some("reduced_model") => Ok(AnyModel::Reduced(Box::new(
            from_json_str::<ReducedModelFile>(&text, &ctx)?.build()?,
        ))),
        None | Some("model") => Ok(AnyModel::Full(from_json_str::<ModelFile>(&text, &ctx)?.build()?)),
        Some(other) => Err(parse_err(ctx, format!("`{other}` is not a model document"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::pauli;

    #[test]
    fn pauli_spec_expands_in_string_order() {
        let m: MatrixSpec = from_json_str(r#"{"pauli":[{"string":"ZI","coeff":[1,0]}]}"#, "t").unwrap();
        let op = m.to_operator(4, "t").unwrap();
        let expected = pauli('Z').unwrap().kron(&Operator::identity(2));
        assert!((op.matrix() - expected.matrix()).norm() < 1e-15);
    }

    #[test]
    fn dense_identity() {
        let m: MatrixSpec = from_json_str(r#"{"re":[[1,0],[0,1]]}"#, "t").unwrap();
        assert_eq!(m.to_operator(2, "t").unwrap(), Operator::identity(2));
    }

    #[test]
    fn mixed_matrix_forms_rejected() {
        let r: Result<MatrixSpec> = from_json_str(r#"{"re":[[1]],"pauli":[]}"#, "t");
        assert!(r.is_err());
        let r: Result<MatrixSpec> = from_json_str(r#"{"im":[[1]]}"#, "t");
        assert!(r.is_err());
    }

    #[test]
    fn wrong_shape_rejected() {
        let m: MatrixSpec = from_json_str(r#"{"re":[[1,0],[0]]}"#, "t").unwrap();
        assert!(m.to_operator(2, "t").is_err());
    }

    #[test]
    fn domains_round_trip() {
        for text in [r#""unconstrained""#, r#"{"min":0.0,"max":null}"#, r#"{"min":-1.0,"max":2.0}"#] {
            let d: DomainSpec = from_json_str(text, "t").unwrap();
            let back = serde_json::to_string(&d).unwrap();
            let d2: DomainSpec = from_json_str(&back, "t").unwrap();
            assert_eq!(d, d2);
        }
        let d: DomainSpec = from_json_str(r#"{"min":0}"#, "t").unwrap();
        assert_eq!(d.0, CoefficientDomain::Interval { min: 0.0, max: f64::INFINITY });
        assert!(from_json_str::<DomainSpec>(r#""positive""#, "t").is_err());
    }

    #[test]
    fn parse_errors_name_the_field() {
        let text = r#"{"format_version":1,"dim":2,"hamiltonian_drift":{"re":[[1,0],[0,1]]},"observables":[{"label":"z"}]}"#;
        let err = from_json_str::<ModelFile>(text, "m").unwrap_err().to_string();
        assert!(err.contains("observables[0]"), "{err}");
        assert!(err.contains("line 1"), "{err}");
    }

    #[test]
    fn non_hermitian_hamiltonian_rejected() {
        let text = r#"{"format_version":1,"dim":2,"hamiltonian_drift":{"re":[[0,1],[0,0]]}}"#;
        let f: ModelFile = from_json_str(text, "m").unwrap();
        assert!(f.build().is_err());
    }

    #[test]
    fn negative_dissipator_domain_rejected() {
        let text = r#"{"format_version":1,"dim":2,"hamiltonian_drift":{"re":[[0,0],[0,0]]},
            "control_channels":[{"kind":"dissipator","label":"g","operator":{"pauli":[{"string":"Z","coeff":[1,0]}]},
            "coefficient_domain":{"min":-1,"max":1}}]}"#;
        let f: ModelFile = from_json_str(text, "m").unwrap();
        assert!(f.build().is_err());
    }

    #[test]
    fn ket_state() {
        let s: StateFile = from_json_str(r#"{"format_version":1,"kind":"state","ket":[[1,0],[1,0]]}"#, "s").unwrap();
        let rho = s.build(2).unwrap();
        assert!((rho.matrix()[(0, 1)].re - 0.5).abs() < 1e-15);
        assert!(s.build(4).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let f = TrajectoryFile {
            format_version: 1,
            kind: trajectories_kind(),
            times: vec![0.0, 0.5],
            series: vec![SeriesSpec {
                label: "x".into(),
                values: vec![1.0, -0.123456789012345],
                max_imag_residue: 0.0,
            }],
        };
        assert_eq!(TrajectoryFile::from_csv(&f.to_csv()).unwrap(), f);
    }
}
