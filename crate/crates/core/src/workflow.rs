//! End-to-end pipelines behind the command-line tool: reduce, check and
//! compare, with their JSON reports.

use std::time::Instant;

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{QmrError, Result};
use crate::krylov::{check_drift_reduction, frame_algebra, observable_space};
use crate::lindblad::{ChannelKind, ControlledLindbladGenerator};
use crate::linalg::random_density;
use crate::model_file::{tool_version, CertificateSummary, Model, Tolerances, FORMAT_VERSION};
use crate::operator::{orthonormalize, Operator, OperatorSubspace};
use crate::propagation::{compare_full_reduced, uniform_times, ComparisonReport, ControlSchedule};
use crate::reduction::{build_reduction_maps, reduce_generator, verify_projector, ProjectorReport, ReducedModel};
use crate::star_algebra::{algebra_closure, verify_structure, wedderburn, STRUCT_TOL};

/// Default seed when neither `--seed` nor `QMR_SEED` is given.
pub const DEFAULT_SEED: u64 = 20240917;
pub const DEFAULT_TOL: f64 = 1e-10;

/// Which algebra the reduction projects onto.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReductionPath {
    /// Drift-reduction test first, falling back to the observable algebra.
    Auto,
    /// The frame algebra `𝓕`.
    Frame,
    /// `alg(𝒪₀)` for a designated channel split; fails if the test fails.
    Drift,
    /// `alg(𝒪)`.
    Observable,
}

impl std::str::FromStr for ReductionPath {
    type Err = QmrError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(ReductionPath::Auto),
            "frame" => Ok(ReductionPath::Frame),
            "drift" => Ok(ReductionPath::Drift),
            "observable" => Ok(ReductionPath::Observable),
            _ => Err(QmrError::invalid(format!(
                "unknown path `{s}` (expected auto, frame, drift or observable)"
            ))),
        }
    }
}

/// Labelled observables of `model`, optionally restricted to `selection`.
pub fn select_observables(model: &Model, selection: Option<&[String]>) -> Result<Vec<(String, Operator)>> {
    match selection {
        None => Ok(model.observables.clone()),
        Some(labels) => labels
            .iter()
            .map(|l| {
                model
                    .observables
                    .iter()
                    .find(|(m, _)| m == l)
                    .cloned()
                    .ok_or_else(|| QmrError::invalid(format!("no observable labelled `{l}`")))
            })
            .collect(),
    }
}

fn omega_space(n: usize, obs: &[(String, Operator)], tol: f64) -> Result<OperatorSubspace> {
    let ops: Vec<Operator> = obs.iter().map(|(_, o)| o.clone()).filter(|o| o.norm() > 0.0).collect();
    if ops.is_empty() {
        return Ok(OperatorSubspace::from_orthonormal(n, vec![], tol)?);
    }
    orthonormalize(&ops, tol)
}

/// Channel indices for a drift-reduction split: the listed labels, or every
/// dissipator channel when `split` is `None`.
pub fn designated_channels(gen: &ControlledLindbladGenerator, split: Option<&[String]>) -> Result<Vec<usize>> {
    match split {
        Some(labels) => labels
            .iter()
            .map(|l| {
                gen.channel_index(l)
                    .ok_or_else(|| QmrError::invalid(format!("split names unknown channel `{l}`")))
            })
            .collect(),
        None => Ok(gen
            .channels()
            .iter()
            .enumerate()
            .filter(|(_, c)| c.kind == ChannelKind::Dissipator)
            .map(|(i, _)| i)
            .collect()),
    }
}

#[derive(Clone, Debug)]
pub struct ReduceOptions {
    pub path: ReductionPath,
    pub tol: f64,
    pub seed: u64,
    pub observables: Option<Vec<String>>,
    pub split: Option<Vec<String>>,
}

impl Default for ReduceOptions {
    fn default() -> Self {
        ReduceOptions {
            path: ReductionPath::Auto,
            tol: DEFAULT_TOL,
            seed: DEFAULT_SEED,
            observables: None,
            split: None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DriftCheckSummary {
    pub designated: Vec<String>,
    pub holds: bool,
    pub residual: f64,
    pub dim_o0: usize,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Timing {
    pub krylov: f64,
    pub closure: f64,
    pub frame: f64,
    pub drift_check: f64,
    pub wedderburn: f64,
    pub reduction: f64,
    pub projector: f64,
    pub total: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReductionReport {
    pub format_version: u32,
    pub kind: String,
    pub generator: String,
    pub seed: u64,
    pub tolerances: Tolerances,
    pub requested_path: ReductionPath,
    /// `observable_algebra`, `frame_algebra` or `drift_algebra`.
    pub path: String,
    pub observables: Vec<String>,
    pub dim_full: usize,
    pub dim_reduced: usize,
    pub no_reduction: bool,
    pub dim_observable_space: usize,
    pub dim_observable_algebra: usize,
    pub dim_frame_algebra: usize,
    pub dim_algebra_used: usize,
    pub krylov_iterations: usize,
    pub krylov_growth: Vec<(usize, usize)>,
    pub krylov_invariance_residual: f64,
    pub identity_adjoined: bool,
    pub drift_check: Option<DriftCheckSummary>,
    /// `[dF, dG]` per block.
    pub blocks: Vec<[usize; 2]>,
    pub structure_residual: f64,
    pub certificates: Vec<CertificateSummary>,
    pub certificates_passed: bool,
    pub projector: ProjectorReport,
    pub certified: bool,
    pub timing: Timing,
    pub warnings: Vec<String>,
}

pub struct ReduceOutcome {
    pub reduced: ReducedModel,
    pub report: ReductionReport,
}

fn elapsed(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

/// Krylov space, algebra closure, Wedderburn decomposition and reduced
/// generator, with certificates. Certificate failures are recorded in the
/// report (`certified = false`) rather than returned as errors.
pub fn run_reduce(model: &Model, opts: &ReduceOptions) -> Result<ReduceOutcome> {
    let start = Instant::now();
    let gen = &model.generator;
    let n = gen.dim();
    let tol = opts.tol;
    let mut timing = Timing::default();
    let mut warnings = Vec::new();
    let obs = select_observables(model, opts.observables.as_deref())?;
    let omega = omega_space(n, &obs, tol)?;

    let t = Instant::now();
    let krylov = observable_space(gen, &omega, tol, n * n)?;
    timing.krylov = elapsed(t);
    if !krylov.converged {
        return Err(QmrError::NotConverged(format!(
            "observable space exceeded dimension {}",
            n * n
        )));
    }
    if krylov.identity_adjoined {
        warnings.push("identity was not among the observables and has been adjoined".into());
    }

    let t = Instant::now();
    let alg_o = algebra_closure(&krylov.space, tol, n * n)?;
    timing.closure = elapsed(t);
    let t = Instant::now();
    let frame = frame_algebra(gen, &omega, tol, n * n)?;
    timing.frame = elapsed(t);

    let mut drift_check = None;
    let mut drift_algebra = None;
    if matches!(opts.path, ReductionPath::Auto | ReductionPath::Drift) {
        let designated = designated_channels(gen, opts.split.as_deref())?;
        if designated.is_empty() {
            if opts.path == ReductionPath::Drift {
                return Err(QmrError::invalid("drift path needs at least one designated channel"));
            }
        } else {
            let t = Instant::now();
            let check = check_drift_reduction(gen, &designated, &omega, tol)?;
            timing.drift_check = elapsed(t);
            drift_check = Some(DriftCheckSummary {
                designated: designated.iter().map(|&i| gen.channels()[i].label.clone()).collect(),
                holds: check.holds,
                residual: check.residual,
                dim_o0: check.o0.dim(),
            });
            if check.holds {
                let t = Instant::now();
                drift_algebra = Some(algebra_closure(&check.o0, tol, n * n)?);
                timing.closure += elapsed(t);
            } else if opts.path == ReductionPath::Drift {
                return Err(QmrError::Certificate(format!(
                    "drift-reduction test failed (residual {:.3e})",
                    check.residual
                )));
            } else {
                warnings.push(format!(
                    "drift-reduction test failed (residual {:.3e}); using the observable algebra",
                    check.residual
                ));
            }
        }
    }

    let (path, algebra) = match (opts.path, drift_algebra) {
        (ReductionPath::Frame, _) => ("frame_algebra", frame.clone()),
        (ReductionPath::Observable, _) => ("observable_algebra", alg_o.clone()),
        (_, Some(a)) => ("drift_algebra", a),
        (_, None) => ("observable_algebra", alg_o.clone()),
    };

    let t = Instant::now();
    let w = wedderburn(&algebra, tol, opts.seed)?;
    let (structure_ok, structure_residual) = verify_structure(&algebra, &w, STRUCT_TOL)?;
    timing.wedderburn = elapsed(t);
    if !structure_ok {
        return Err(QmrError::Numerical(format!(
            "Wedderburn structure failed verification (residual {structure_residual:.3e})"
        )));
    }
    let maps = build_reduction_maps(&w)?;

    let t = Instant::now();
    let reduced = reduce_generator(gen, &maps, &obs, tol, opts.seed)?;
    timing.reduction = elapsed(t);
    let t = Instant::now();
    let projector = verify_projector(&maps, &algebra, &krylov.space, tol, opts.seed)?;
    timing.projector = elapsed(t);

    let certificates_passed = reduced.all_certified(tol);
    if !certificates_passed {
        warnings.push("some reduced-generator certificates failed".into());
    }
    if !projector.passed {
        warnings.push("projector certificate failed".into());
    }
    if reduced.no_reduction {
        warnings.push("no reduction achieved".into());
    }
    for m in &warnings {
        warn!("{m}");
    }
    timing.total = elapsed(start);
    info!("reduced n = {n} to ň = {} via {path}", reduced.dim_reduced());

    let report = ReductionReport {
        format_version: FORMAT_VERSION,
        kind: "reduction_report".into(),
        generator: tool_version(),
        seed: opts.seed,
        tolerances: Tolerances {
            subspace: tol,
            certificate: tol,
        },
        requested_path: opts.path,
        path: path.into(),
        observables: obs.iter().map(|(l, _)| l.clone()).collect(),
        dim_full: n,
        dim_reduced: reduced.dim_reduced(),
        no_reduction: reduced.no_reduction,
        dim_observable_space: krylov.space.dim(),
        dim_observable_algebra: alg_o.dim(),
        dim_frame_algebra: frame.dim(),
        dim_algebra_used: algebra.dim(),
        krylov_iterations: krylov.iterations,
        krylov_growth: krylov.growth_log.clone(),
        krylov_invariance_residual: krylov.invariance_residual,
        identity_adjoined: krylov.identity_adjoined,
        drift_check,
        blocks: w.blocks.iter().map(|&(f, g)| [f, g]).collect(),
        structure_residual,
        certificates: reduced.certificates.iter().map(CertificateSummary::from_entry).collect(),
        certificates_passed,
        certified: certificates_passed && projector.passed,
        projector,
        timing,
        warnings,
    };
    Ok(ReduceOutcome { reduced, report })
}

impl ReductionReport {
    pub fn summary(&self) -> String {
        let blocks: Vec<String> = self.blocks.iter().map(|b| format!("({},{})", b[0], b[1])).collect();
        let mut s = format!(
            "reduce: n = {} → ň = {}{}\n\
             path: {} (requested {:?})\n\
             dim 𝒪 = {}, dim alg(𝒪) = {}, dim 𝓕 = {}, algebra used: {}\n\
             blocks (dF,dG): {}\n\
             certificates: {} ({} checked), projector: {}\n",
            self.dim_full,
            self.dim_reduced,
            if self.no_reduction { " (no reduction achieved)" } else { "" },
            self.path,
            self.requested_path,
            self.dim_observable_space,
            self.dim_observable_algebra,
            self.dim_frame_algebra,
            self.dim_algebra_used,
            blocks.join(" "),
            if self.certificates_passed { "passed" } else { "FAILED" },
            self.certificates.len(),
            if self.projector.passed { "passed" } else { "FAILED" },
        );
        if let Some(d) = &self.drift_check {
            s.push_str(&format!(
                "drift-reduction test on [{}]: {} (residual {:.3e}, dim 𝒪₀ = {})\n",
                d.designated.join(", "),
                if d.holds { "holds" } else { "fails" },
                d.residual,
                d.dim_o0
            ));
        }
        for w in &self.warnings {
            s.push_str(&format!("warning: {w}\n"));
        }
        s.push_str(&format!("time: {:.3} s\n", self.timing.total));
        s
    }
}

#[derive(Clone, Debug)]
pub struct CheckOptions {
    pub tol: f64,
    pub seed: u64,
    pub observables: Option<Vec<String>>,
    pub frame_test: bool,
    pub drift_test: bool,
    pub split: Option<Vec<String>>,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            tol: DEFAULT_TOL,
            seed: DEFAULT_SEED,
            observables: None,
            frame_test: true,
            drift_test: false,
            split: None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FrameCheck {
    pub dim_frame_algebra: usize,
    pub n_squared: usize,
    pub blocks: Vec<[usize; 2]>,
    /// `Σ dF_k`.
    pub reducible_to: usize,
    pub verdict: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckReport {
    pub format_version: u32,
    pub kind: String,
    pub generator: String,
    pub seed: u64,
    pub tol: f64,
    pub dim_full: usize,
    pub frame: Option<FrameCheck>,
    pub drift_check: Option<DriftCheckSummary>,
    pub drift_verdict: Option<String>,
}

/// Frame-algebra reducibility verdict and, optionally, the drift-reduction
/// invariance test for a channel split.
pub fn run_check(model: &Model, opts: &CheckOptions) -> Result<CheckReport> {
    let gen = &model.generator;
    let n = gen.dim();
    let obs = select_observables(model, opts.observables.as_deref())?;
    let omega = omega_space(n, &obs, opts.tol)?;
    let frame = if opts.frame_test {
        let f = frame_algebra(gen, &omega, opts.tol, n * n)?;
        let w = wedderburn(&f, opts.tol, opts.seed)?;
        let reducible_to = w.dim_reduced();
        let verdict = if f.dim() < n * n {
            format!("reducible at least to {reducible_to}")
        } else {
            "inconclusive".to_string()
        };
        Some(FrameCheck {
            dim_frame_algebra: f.dim(),
            n_squared: n * n,
            blocks: w.blocks.iter().map(|&(a, b)| [a, b]).collect(),
            reducible_to,
            verdict,
        })
    } else {
        None
    };
    let (drift_check, drift_verdict) = if opts.drift_test {
        let designated = designated_channels(gen, opts.split.as_deref())?;
        if designated.is_empty() {
            return Err(QmrError::invalid(
                "drift-reduction test needs a split (no dissipator channels to designate)",
            ));
        }
        let c = check_drift_reduction(gen, &designated, &omega, opts.tol)?;
        let verdict = if c.holds { "holds" } else { "fails" }.to_string();
        (
            Some(DriftCheckSummary {
                designated: designated.iter().map(|&i| gen.channels()[i].label.clone()).collect(),
                holds: c.holds,
                residual: c.residual,
                dim_o0: c.o0.dim(),
            }),
            Some(verdict),
        )
    } else {
        (None, None)
    };
    Ok(CheckReport {
        format_version: FORMAT_VERSION,
        kind: "check_report".into(),
        generator: tool_version(),
        seed: opts.seed,
        tol: opts.tol,
        dim_full: n,
        frame,
        drift_check,
        drift_verdict,
    })
}

impl CheckReport {
    pub fn summary(&self) -> String {
        let mut s = format!("check: n = {}\n", self.dim_full);
        if let Some(f) = &self.frame {
            s.push_str(&format!(
                "frame algebra: dim 𝓕 = {} vs n² = {} → {}\n",
                f.dim_frame_algebra, f.n_squared, f.verdict
            ));
        }
        if let (Some(d), Some(v)) = (&self.drift_check, &self.drift_verdict) {
            s.push_str(&format!(
                "drift-reduction test on [{}]: {} (residual {:.3e}, dim 𝒪₀ = {})\n",
                d.designated.join(", "),
                v,
                d.residual,
                d.dim_o0
            ));
        }
        s
    }
}

#[derive(Clone, Debug)]
pub struct CompareOptions {
    pub n_states: usize,
    pub n_schedules: usize,
    pub n_segments: usize,
    /// Total schedule duration; `None` means `0.1` per segment.
    pub duration: Option<f64>,
    pub n_times: usize,
    pub seed: u64,
    pub observables: Option<Vec<String>>,
}

impl Default for CompareOptions {
    fn default() -> Self {
        CompareOptions {
            n_states: 3,
            n_schedules: 3,
            n_segments: 20,
            duration: None,
            n_times: 201,
            seed: DEFAULT_SEED,
            observables: None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ComparisonDocument {
    pub format_version: u32,
    pub kind: String,
    pub generator: String,
    pub seed: u64,
    pub n_states: usize,
    pub n_schedules: usize,
    pub n_segments: usize,
    pub duration: f64,
    pub tolerance: String,
    #[serde(flatten)]
    pub report: ComparisonReport,
}

/// Seeded random mixed states and schedules.
pub fn random_inputs(
    gen: &ControlledLindbladGenerator,
    opts: &CompareOptions,
) -> Result<(Vec<Operator>, Vec<ControlSchedule>, Vec<f64>, f64)> {
    if opts.n_states == 0 || opts.n_schedules == 0 || opts.n_segments == 0 || opts.n_times < 2 {
        return Err(QmrError::invalid(
            "compare needs at least one state, one schedule, one segment and two sample times",
        ));
    }
    let total = opts.duration.unwrap_or(0.1 * opts.n_segments as f64);
    if !(total > 0.0) || !total.is_finite() {
        return Err(QmrError::invalid("schedule duration must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let n = gen.dim();
    let states = (0..opts.n_states).map(|_| random_density(n, &mut rng)).collect();
    let domains: Vec<_> = gen.channels().iter().map(|c| c.domain).collect();
    let schedules = (0..opts.n_schedules)
        .map(|_| ControlSchedule::random(&domains, opts.n_segments, total, &mut rng))
        .collect::<Result<_>>()?;
    Ok((states, schedules, uniform_times(total, opts.n_times), total))
}

/// Full-versus-reduced trajectories on seeded random inputs.
pub fn run_compare(model: &Model, reduced: &ReducedModel, opts: &CompareOptions) -> Result<ComparisonDocument> {
    let gen = &model.generator;
    let obs = match &opts.observables {
        Some(_) => select_observables(model, opts.observables.as_deref())?,
        None => {
            let labels: Vec<String> = reduced.observables.iter().map(|(l, _)| l.clone()).collect();
            let chosen: Vec<_> = model
                .observables
                .iter()
                .filter(|(l, _)| labels.is_empty() || labels.contains(l))
                .cloned()
                .collect();
            chosen
        }
    };
    let (states, schedules, times, total) = random_inputs(gen, opts)?;
    let report = compare_full_reduced(gen, reduced, &obs, &states, &schedules, &times)?;
    Ok(ComparisonDocument {
        format_version: FORMAT_VERSION,
        kind: "comparison_report".into(),
        generator: tool_version(),
        seed: opts.seed,
        n_states: opts.n_states,
        n_schedules: opts.n_schedules,
        n_segments: opts.n_segments,
        duration: total,
        tolerance: "max deviation <= 1e-8 * (1 + scale)".into(),
        report,
    })
}

impl ComparisonDocument {
    pub fn summary(&self) -> String {
        let r = &self.report;
        format!(
            "compare: {} states × {} schedules × {} observables, {} segments over t ∈ [0, {}], {} samples\n\
             max deviation {:.3e} (scale {:.3}) → {}\n\
             full {:.3} s, reduced {:.3} s, speedup {:.1}×\n",
            self.n_states,
            self.n_schedules,
            r.entries.len() / (self.n_states * self.n_schedules).max(1),
            self.n_segments,
            self.duration,
            r.num_times,
            r.max_deviation,
            r.scale,
            if r.passed { "PASS" } else { "FAIL" },
            r.full_seconds,
            r.reduced_seconds,
            r.speedup,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::central_spin::{generate_central_spin, BathDissipation, CentralSpinParams};

    fn central(n: usize) -> Model {
        generate_central_spin(&CentralSpinParams::random(n, 5)).unwrap().build().unwrap()
    }

    #[test]
    fn central_spin_n2_blocks() {
        let out = run_reduce(&central(2), &ReduceOptions::default()).unwrap();
        let r = &out.report;
        assert_eq!(r.dim_reduced, 8);
        assert_eq!(r.blocks, vec![[2, 1]; 4]);
        assert_eq!(r.dim_frame_algebra, 16);
        assert_eq!(r.dim_observable_space, 1 + 3 * 4);
        assert!(r.certified, "{}", r.summary());
    }

    #[test]
    fn identity_only_reduces_to_dimension_one() {
        let mut m = central(1);
        m.observables.retain(|(l, _)| l == "sigma_0");
        let out = run_reduce(&m, &ReduceOptions::default()).unwrap();
        assert_eq!(out.report.dim_reduced, 1);
        assert!(out.report.certified, "{}\n{:?}\n{:?}", out.report.summary(), out.report.projector, out.report.certificates);
    }

    #[test]
    fn path_names_and_frame_path() {
        let m = central(1);
        let auto = run_reduce(&m, &ReduceOptions::default()).unwrap();
        assert_eq!(auto.report.path, "observable_algebra");
        let frame = run_reduce(&m, &ReduceOptions { path: ReductionPath::Frame, ..Default::default() }).unwrap();
        assert_eq!(frame.report.path, "frame_algebra");
        assert_eq!(frame.report.dim_reduced, 4);
    }

    #[test]
    fn check_central_spin_is_reducible() {
        let r = run_check(&central(2), &CheckOptions::default()).unwrap();
        let f = r.frame.unwrap();
        assert_eq!(f.dim_frame_algebra, 16);
        assert_eq!(f.verdict, "reducible at least to 8");

        // The σ_x bath channel enlarges 𝓕, but leaves 𝒪₀ invariant.
        let p = CentralSpinParams::random(2, 1).with_dissipation(BathDissipation::Single(1));
        let m = generate_central_spin(&p).unwrap().build().unwrap();
        let r = run_check(&m, &CheckOptions { drift_test: true, ..Default::default() }).unwrap();
        assert!(r.frame.unwrap().dim_frame_algebra > 16);
        assert_eq!(r.drift_verdict.as_deref(), Some("holds"));
    }

    #[test]
    fn unknown_split_label_rejected() {
        let m = central(1);
        let opts = CheckOptions {
            drift_test: true,
            split: Some(vec!["nope".into()]),
            ..Default::default()
        };
        assert!(run_check(&m, &opts).is_err());
    }

    #[test]
    fn compare_passes_and_corruption_fails() {
        let m = central(2);
        let out = run_reduce(&m, &ReduceOptions::default()).unwrap();
        let opts = CompareOptions { n_states: 2, n_schedules: 2, n_segments: 10, ..Default::default() };
        let doc = run_compare(&m, &out.reduced, &opts).unwrap();
        assert!(doc.report.passed, "{}", doc.summary());
        let mut bad = out.reduced.clone();
        bad.reduced_drift = bad.reduced_drift.scale(1.5);
        let doc = run_compare(&m, &bad, &opts).unwrap();
        assert!(!doc.report.passed);
        assert!(doc.report.max_deviation > 1e-3);
    }
}
