//! `qmr`: reduce, simulate, compare and check controlled Lindblad models.
//!
//! Exit codes: 0 success, 2 validation/input errors, 3 certificate or
//! comparison failure, 4 non-convergence.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use qmr_core::central_spin::{generate_central_spin, BathDissipation, CentralSpinParams};
use qmr_core::model_file::{
    parse_model, read_any_model, read_json, serialize_model, to_json_string, write_json, write_text,
    AnyModel, ReducedModelFile, ScheduleFile, StateFile, Tolerances, TrajectoryFile,
};
use qmr_core::propagation::{uniform_times, InputSpace, SimModel, Simulator};
use qmr_core::workflow::{
    run_check, run_compare, run_reduce, select_observables, CheckOptions, CompareOptions, ReduceOptions,
    ReductionPath, DEFAULT_SEED, DEFAULT_TOL,
};
use qmr_core::{QmrError, Result};

#[derive(Parser)]
#[command(name = "qmr", version, about = "Exact model reduction for controlled Lindblad dynamics")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Seed for every randomized step.
    #[arg(long, env = "QMR_SEED", default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Numerical tolerance for subspace and certificate tests.
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    /// Comma-separated observable labels (default: all).
    #[arg(long, value_delimiter = ',')]
    obs: Option<Vec<String>>,
}

#[derive(Subcommand)]
enum Command {
    /// Reduce a model and write the reduced model and a report.
    Reduce {
        model: PathBuf,
        #[command(flatten)]
        common: Common,
        /// auto, frame, drift or observable.
        #[arg(long, default_value = "auto")]
        path: String,
        /// Channel labels designated for the drift-reduction test.
        #[arg(long, value_delimiter = ',')]
        split: Option<Vec<String>>,
        /// Reduced model output.
        #[arg(long)]
        out: PathBuf,
        /// Reduction report output (JSON).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Expectation trajectories of a full or reduced model.
    Simulate {
        model: PathBuf,
        #[arg(long)]
        schedule: PathBuf,
        #[arg(long)]
        state: PathBuf,
        /// Comma-separated sample times.
        #[arg(long, value_delimiter = ',', conflicts_with = "samples")]
        times: Option<Vec<f64>>,
        /// Number of uniformly spaced sample times over the schedule.
        #[arg(long, default_value_t = 101)]
        samples: usize,
        /// Comma-separated observable labels (default: all).
        #[arg(long, value_delimiter = ',')]
        obs: Option<Vec<String>>,
        /// For reduced models: the state is given on the reduced space
        /// (default: full space when its dimension is n).
        #[arg(long)]
        reduced_state: bool,
        /// Output file; `.json` selects JSON, anything else CSV. Stdout if absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare full and reduced trajectories on seeded random inputs.
    Compare {
        model: PathBuf,
        reduced: PathBuf,
        #[arg(long, env = "QMR_SEED", default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        schedules: usize,
        #[arg(long, default_value_t = 3)]
        states: usize,
        #[arg(long, default_value_t = 20)]
        segments: usize,
        /// Total schedule duration (default 0.1 per segment).
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long, default_value_t = 201)]
        samples: usize,
        #[arg(long, value_delimiter = ',')]
        obs: Option<Vec<String>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reducibility tests: frame-algebra dimension and drift-reduction invariance.
    Check {
        model: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Tests to run: 3 (frame algebra), 4 (drift reduction).
        #[arg(long, value_delimiter = ',', default_value = "3")]
        props: Vec<u8>,
        /// Channel labels designated for the drift-reduction test.
        #[arg(long, value_delimiter = ',')]
        split: Option<Vec<String>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a central-spin model file.
    GenCentralSpin {
        /// Number of bath spins.
        #[arg(long, required_unless_present = "params")]
        n: Option<usize>,
        /// Explicit parameters (JSON with n_bath, couplings, gammas).
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, env = "QMR_SEED", default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Controlled bath dissipation: `single:K` or `collective`.
        #[arg(long)]
        dissipation: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_dissipation(s: &str) -> Result<BathDissipation> {
    if s == "collective" {
        return Ok(BathDissipation::Collective);
    }
    s.strip_prefix("single:")
        .and_then(|k| k.parse().ok())
        .map(BathDissipation::Single)
        .ok_or_else(|| QmrError::invalid(format!("bad dissipation `{s}` (use single:K or collective)")))
}

/// Outcome of a command that ran to completion.
enum Verdict {
    Ok,
    Failed,
}

fn emit_json<T: serde::Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    if let Some(p) = path {
        write_json(p, value)?;
        info!("wrote {}", p.display());
    }
    Ok(())
}

fn cmd_reduce(
    model: &Path,
    common: &Common,
    path: &str,
    split: Option<Vec<String>>,
    out: &Path,
    report: Option<&Path>,
) -> Result<Verdict> {
    let m = parse_model(model)?;
    let opts = ReduceOptions {
        path: path.parse::<ReductionPath>()?,
        tol: common.tol,
        seed: common.seed,
        observables: common.obs.clone(),
        split,
    };
    let outcome = run_reduce(&m, &opts)?;
    let file = ReducedModelFile::from_reduced(
        &outcome.reduced,
        &outcome.report.path,
        common.seed,
        Tolerances {
            subspace: common.tol,
            certificate: common.tol,
        },
    );
    write_json(out, &file)?;
    emit_json(report, &outcome.report)?;
    print!("{}", outcome.report.summary());
    Ok(if outcome.report.certified { Verdict::Ok } else { Verdict::Failed })
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    model: &Path,
    schedule: &Path,
    state: &Path,
    times: Option<Vec<f64>>,
    samples: usize,
    obs: Option<Vec<String>>,
    reduced_state: bool,
    out: Option<&Path>,
) -> Result<Verdict> {
    let schedule = read_json::<ScheduleFile>(schedule)?.build()?;
    let state_file: StateFile = read_json(state)?;
    let times = times.unwrap_or_else(|| uniform_times(schedule.total_duration(), samples.max(1)));
    let any = read_any_model(model)?;
    let trajectories = match &any {
        AnyModel::Full(m) => {
            let rho = state_file.build(m.generator.dim())?;
            let o = select_observables(m, obs.as_deref())?;
            Simulator::new(SimModel::Full(&m.generator)).expectations(&schedule, &rho, &o, &times)?
        }
        AnyModel::Reduced(r) => {
            let (dim, space) = match state_file.dim() {
                Some(d) if d == r.dim_full() && !reduced_state => (d, InputSpace::Full),
                _ => (r.dim_reduced(), InputSpace::Reduced),
            };
            let rho = state_file.build(dim)?;
            let o: Vec<_> = match &obs {
                None => r.observables.clone(),
                Some(labels) => labels
                    .iter()
                    .map(|l| {
                        r.observable(l)
                            .map(|op| (l.clone(), op.clone()))
                            .ok_or_else(|| QmrError::invalid(format!("no observable labelled `{l}`")))
                    })
                    .collect::<Result<_>>()?,
            };
            Simulator::new(SimModel::Reduced(r)).expectations_in(
                &schedule,
                &rho,
                space,
                &o,
                InputSpace::Reduced,
                &times,
            )?
        }
    };
    let file = TrajectoryFile::from_trajectories(&trajectories);
    let text = match out {
        Some(p) if p.extension().is_some_and(|e| e == "json") => to_json_string(&file)?,
        _ => file.to_csv(),
    };
    match out {
        Some(p) => {
            write_text(p, &text)?;
            println!(
                "simulate: {} observables × {} samples written to {}",
                file.series.len(),
                file.times.len(),
                p.display()
            );
        }
        None => print!("{text}"),
    }
    Ok(Verdict::Ok)
}

#[allow(clippy::too_many_arguments)]
fn cmd_compare(
    model: &Path,
    reduced: &Path,
    seed: u64,
    schedules: usize,
    states: usize,
    segments: usize,
    duration: Option<f64>,
    samples: usize,
    obs: Option<Vec<String>>,
    out: Option<&Path>,
) -> Result<Verdict> {
    let m = parse_model(model)?;
    let r = read_json::<ReducedModelFile>(reduced)?.build()?;
    let opts = CompareOptions {
        n_states: states,
        n_schedules: schedules,
        n_segments: segments,
        duration,
        n_times: samples,
        seed,
        observables: obs,
    };
    let doc = run_compare(&m, &r, &opts)?;
    emit_json(out, &doc)?;
    print!("{}", doc.summary());
    Ok(if doc.report.passed { Verdict::Ok } else { Verdict::Failed })
}

fn cmd_check(
    model: &Path,
    common: &Common,
    props: &[u8],
    split: Option<Vec<String>>,
    out: Option<&Path>,
) -> Result<Verdict> {
    if let Some(p) = props.iter().find(|p| **p != 3 && **p != 4) {
        return Err(QmrError::invalid(format!("unknown test `{p}` (expected 3 or 4)")));
    }
    let m = parse_model(model)?;
    let opts = CheckOptions {
        tol: common.tol,
        seed: common.seed,
        observables: common.obs.clone(),
        frame_test: props.contains(&3),
        drift_test: props.contains(&4) || split.is_some(),
        split,
    };
    let report = run_check(&m, &opts)?;
    emit_json(out, &report)?;
    print!("{}", report.summary());
    Ok(Verdict::Ok)
}

fn cmd_gen(
    n: Option<usize>,
    params: Option<&Path>,
    seed: u64,
    dissipation: Option<&str>,
    out: &Path,
) -> Result<Verdict> {
    let mut p = match params {
        Some(path) => read_json::<CentralSpinParams>(path)?,
        None => CentralSpinParams::random(n.expect("clap enforces --n"), seed),
    };
    if let Some(d) = dissipation {
        p.dissipation = Some(parse_dissipation(d)?);
    }
    let file = generate_central_spin(&p)?;
    serialize_model(&file, out)?;
    println!(
        "gen-central-spin: N = {}, dim {}, written to {}",
        p.n_bath,
        p.dim(),
        out.display()
    );
    Ok(Verdict::Ok)
}

fn run(cli: Cli) -> Result<Verdict> {
    match cli.command {
        Command::Reduce {
            model,
            common,
            path,
            split,
            out,
            report,
        } => cmd_reduce(&model, &common, &path, split, &out, report.as_deref()),
        Command::Simulate {
            model,
            schedule,
            state,
            times,
            samples,
            obs,
            reduced_state,
            out,
        } => cmd_simulate(&model, &schedule, &state, times, samples, obs, reduced_state, out.as_deref()),
        Command::Compare {
            model,
            reduced,
            seed,
            schedules,
            states,
            segments,
            duration,
            samples,
            obs,
            out,
        } => cmd_compare(
            &model,
            &reduced,
            seed,
            schedules,
            states,
            segments,
            duration,
            samples,
            obs,
            out.as_deref(),
        ),
        Command::Check {
            model,
            common,
            props,
            split,
            out,
        } => cmd_check(&model, &common, &props, split, out.as_deref()),
        Command::GenCentralSpin {
            n,
            params,
            seed,
            dissipation,
            out,
        } => cmd_gen(n, params.as_deref(), seed, dissipation.as_deref(), &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(Verdict::Ok) => ExitCode::SUCCESS,
        Ok(Verdict::Failed) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
