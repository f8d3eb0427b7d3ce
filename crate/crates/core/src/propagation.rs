//! Heisenberg-picture propagation under piecewise-constant controls.
//!
//! A schedule is a list of segments `(Δ_k, u_k)`. The observable after the
//! whole schedule is `e^{𝓛_{u_m}Δ_m} ⋯ e^{𝓛_{u_1}Δ_1}(O)`: later segments
//! compose on the left. Segment exponentials are computed on the connected
//! components of the generator's sparsity pattern and cached per
//! `(segment, step length)`.

use std::collections::HashMap;
use std::time::Instant;

use log::warn;
use rand::Rng;

use crate::error::{check_dim, QmrError, Result};
use crate::lindblad::{CoefficientDomain, ControlledLindbladGenerator};
use crate::linalg::{expm_blocks, sparsity_components, submatrix};
use crate::operator::{validate_density, CMatrix, CVector, Operator, Superoperator, C64, ZERO};
use crate::reduction::{map_r, map_state, ReducedModel};

/// One constant-control interval.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub duration: f64,
    pub u: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControlSchedule {
    segments: Vec<Segment>,
}

impl ControlSchedule {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        let first = segments
            .first()
            .ok_or_else(|| QmrError::invalid("schedule has no segments"))?;
        let m = first.u.len();
        for (k, s) in segments.iter().enumerate() {
            if !(s.duration > 0.0) || !s.duration.is_finite() {
                return Err(QmrError::invalid(format!(
                    "segment {k}: duration must be positive (got {})",
                    s.duration
                )));
            }
            if s.u.len() != m {
                return Err(QmrError::invalid(format!(
                    "segment {k}: {} controls, expected {m}",
                    s.u.len()
                )));
            }
            if s.u.iter().any(|x| !x.is_finite()) {
                return Err(QmrError::invalid(format!("segment {k}: non-finite control")));
            }
        }
        Ok(ControlSchedule { segments })
    }

    pub fn constant(duration: f64, u: Vec<f64>) -> Result<Self> {
        ControlSchedule::new(vec![Segment { duration, u }])
    }

    /// `n_segments` segments with random durations summing to `total` and
    /// controls drawn uniformly from each domain's sampling window.
    pub fn random<R: Rng + ?Sized>(
        domains: &[CoefficientDomain],
        n_segments: usize,
        total: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if n_segments == 0 || !(total > 0.0) {
            return Err(QmrError::invalid(
                "random schedules need at least one segment and positive duration",
            ));
        }
        let weights: Vec<f64> = (0..n_segments).map(|_| 0.5 + rng.random::<f64>()).collect();
        let sum: f64 = weights.iter().sum();
        let segments = weights
            .iter()
            .map(|w| Segment {
                duration: total * w / sum,
                u: domains
                    .iter()
                    .map(|d| {
                        let (lo, hi) = d.sampling_window();
                        lo + (hi - lo) * rng.random::<f64>()
                    })
                    .collect(),
            })
            .collect();
        ControlSchedule::new(segments)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn num_controls(&self) -> usize {
        self.segments[0].u.len()
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// `self` followed by `other`.
    pub fn concat(&self, other: &ControlSchedule) -> Result<ControlSchedule> {
        let mut segs = self.segments.clone();
        segs.extend(other.segments.iter().cloned());
        ControlSchedule::new(segs)
    }

    fn boundaries(&self) -> Vec<f64> {
        let mut b = Vec::with_capacity(self.segments.len() + 1);
        let mut t = 0.0;
        b.push(t);
        for s in &self.segments {
            t += s.duration;
            b.push(t);
        }
        b
    }
}

/// Sampled values of one quantity along a schedule.
#[derive(Clone, Debug)]
pub struct Trajectory<T> {
    pub label: String,
    pub times: Vec<f64>,
    pub values: Vec<T>,
    /// Largest `|Im⟨O⟩|` encountered (expectation trajectories only).
    pub max_imag_residue: f64,
}

/// `n` equally spaced times covering `[0, total]`.
pub fn uniform_times(total: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n)
            .map(|k| total * k as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Affine family of generator matrices restricted to an invariant set of
/// column-stacked coordinates.
#[derive(Clone, Debug)]
pub struct AffineDynamics {
    dim_h: usize,
    coords: Vec<usize>,
    drift: CMatrix,
    channels: Vec<CMatrix>,
    domains: Option<Vec<CoefficientDomain>>,
}

impl AffineDynamics {
    /// `coords = None` keeps every coordinate. The caller guarantees that the
    /// span of the kept coordinates is invariant.
    pub fn new(
        drift: &Superoperator,
        channels: &[Superoperator],
        coords: Option<Vec<usize>>,
    ) -> Result<Self> {
        if !drift.is_square() {
            return Err(QmrError::invalid("drift superoperator is not square"));
        }
        let n = drift.dim();
        for c in channels {
            check_dim(n, c.dim_in())?;
            check_dim(n, c.dim_out())?;
        }
        let coords = coords.unwrap_or_else(|| (0..n * n).collect());
        if coords.iter().any(|&c| c >= n * n) {
            return Err(QmrError::invalid("coordinate index out of range"));
        }
        Ok(AffineDynamics {
            dim_h: n,
            drift: submatrix(drift.matrix(), &coords, &coords),
            channels: channels
                .iter()
                .map(|c| submatrix(c.matrix(), &coords, &coords))
                .collect(),
            coords,
            domains: None,
        })
    }

    pub fn full(gen: &ControlledLindbladGenerator) -> Self {
        let (d, c) = gen.affine_superoperators();
        let mut out = AffineDynamics::new(&d, &c, None).expect("generator is consistent");
        out.domains = Some(gen.channels().iter().map(|c| c.domain).collect());
        out
    }

    /// Reduced dynamics on the block-diagonal coordinates of `𝔅(Ȟ)`.
    pub fn reduced(model: &ReducedModel) -> Self {
        let coords = model.maps.block_coordinates();
        let mut out = AffineDynamics::new(&model.reduced_drift, &model.reduced_channels, Some(coords))
            .expect("reduced model is consistent");
        out.domains = Some(model.channels.iter().map(|c| c.domain).collect());
        out
    }

    pub fn dim_h(&self) -> usize {
        self.dim_h
    }

    pub fn num_coordinates(&self) -> usize {
        self.coords.len()
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    fn check_schedule(&self, schedule: &ControlSchedule) -> Result<()> {
        check_dim(self.channels.len(), schedule.num_controls())?;
        if let Some(domains) = &self.domains {
            for s in schedule.segments() {
                for (i, (d, &x)) in domains.iter().zip(&s.u).enumerate() {
                    if !d.contains(x) {
                        return Err(QmrError::ControlOutOfDomain {
                            label: format!("#{i}"),
                            value: x,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    fn generator(&self, u: &[f64]) -> CMatrix {
        let mut g = self.drift.clone();
        for (c, &w) in self.channels.iter().zip(u) {
            if w != 0.0 {
                g += c * C64::new(w, 0.0);
            }
        }
        g
    }

    pub fn encode(&self, o: &Operator) -> Result<CVector> {
        check_dim(self.dim_h, o.dim())?;
        let v = o.vec();
        let kept = CVector::from_iterator(self.coords.len(), self.coords.iter().map(|&c| v[c]));
        let mut in_coords = vec![false; v.len()];
        for &c in &self.coords {
            in_coords[c] = true;
        }
        let lost: f64 = v
            .iter()
            .zip(&in_coords)
            .filter(|(_, &k)| !k)
            .map(|(z, _)| z.norm_sqr())
            .sum();
        if lost > 1e-18 * v.norm_squared().max(1.0) {
            return Err(QmrError::invalid(
                "operator has components outside the propagated coordinates",
            ));
        }
        Ok(kept)
    }

    pub fn decode(&self, v: &CVector) -> Operator {
        let n = self.dim_h;
        let mut full = CVector::from_element(n * n, ZERO);
        for (k, &c) in self.coords.iter().enumerate() {
            full[c] = v[k];
        }
        Operator::from_vec(n, &full).expect("length n²")
    }

    /// Coordinates of `ρᵀ`, so that `tr(Oρ) = Σ_k encode(O)_k · pairing(ρ)_k`.
    fn pairing(&self, rho: &Operator) -> Result<CVector> {
        check_dim(self.dim_h, rho.dim())?;
        let n = self.dim_h;
        let m = rho.matrix();
        Ok(CVector::from_iterator(
            self.coords.len(),
            self.coords.iter().map(|&c| m[(c / n, c % n)]),
        ))
    }
}

struct BlockExp {
    comps: Vec<Vec<usize>>,
    blocks: Vec<CMatrix>,
}

impl BlockExp {
    fn apply(&self, v: &CVector) -> CVector {
        let mut out = CVector::from_element(v.len(), ZERO);
        for (comp, b) in self.comps.iter().zip(&self.blocks) {
            let sub = CVector::from_iterator(comp.len(), comp.iter().map(|&i| v[i]));
            let w = b * sub;
            for (k, &i) in comp.iter().enumerate() {
                out[i] = w[k];
            }
        }
        out
    }
}

/// Evolves coordinate vectors along one schedule, caching exponentials.
pub struct Propagator<'a> {
    dynamics: &'a AffineDynamics,
    schedule: &'a ControlSchedule,
    boundaries: Vec<f64>,
    generators: Vec<(CMatrix, Vec<Vec<usize>>)>,
    cache: HashMap<(usize, u64), BlockExp>,
}

impl<'a> Propagator<'a> {
    pub fn new(dynamics: &'a AffineDynamics, schedule: &'a ControlSchedule) -> Result<Self> {
        dynamics.check_schedule(schedule)?;
        let generators = schedule
            .segments()
            .iter()
            .map(|s| {
                let g = dynamics.generator(&s.u);
                let max = g.iter().map(|z| z.norm()).fold(0.0, f64::max);
                let comps = sparsity_components(&g, 1e-14 * max);
                (g, comps)
            })
            .collect();
        Ok(Propagator {
            dynamics,
            schedule,
            boundaries: schedule.boundaries(),
            generators,
            cache: HashMap::new(),
        })
    }

    fn step(&mut self, seg: usize, dt: f64, v: &CVector) -> CVector {
        let gens = &self.generators;
        let e = self.cache.entry((seg, dt.to_bits())).or_insert_with(|| {
            let (g, comps) = &gens[seg];
            let scaled = g * C64::new(dt, 0.0);
            BlockExp {
                comps: comps.clone(),
                blocks: expm_blocks(&scaled, comps),
            }
        });
        e.apply(v)
    }

    fn check_times(&self, times: &[f64]) -> Result<()> {
        let total = self.schedule.total_duration();
        let mut prev = 0.0;
        for &t in times {
            if !(t >= 0.0) || t > total * (1.0 + 1e-12) {
                return Err(QmrError::invalid(format!(
                    "sample time {t} outside the schedule [0, {total}]"
                )));
            }
            if t < prev {
                return Err(QmrError::invalid("sample times must be non-decreasing"));
            }
            prev = t;
        }
        Ok(())
    }

    /// Coordinates of `O(t)` at each sample time.
    pub fn evolve(&mut self, v0: &CVector, times: &[f64]) -> Result<Vec<CVector>> {
        check_dim(self.dynamics.num_coordinates(), v0.len())?;
        self.check_times(times)?;
        let last = self.boundaries.len() - 2;
        let mut out = Vec::with_capacity(times.len());
        let mut v = v0.clone();
        let mut t_cur = 0.0;
        let mut seg = 0;
        for &t in times {
            while seg < last && t > self.boundaries[seg + 1] {
                let dt = self.boundaries[seg + 1] - t_cur;
                if dt > 0.0 {
                    v = self.step(seg, dt, &v);
                }
                t_cur = self.boundaries[seg + 1];
                seg += 1;
            }
            let dt = t - t_cur;
            if dt > 0.0 {
                v = self.step(seg, dt, &v);
                t_cur = t;
            }
            out.push(v.clone());
        }
        Ok(out)
    }
}

/// Evolved observables `O(t)` for an affine family of superoperators.
pub fn propagate_heisenberg(
    drift: &Superoperator,
    channels: &[Superoperator],
    schedule: &ControlSchedule,
    o: &Operator,
    sample_times: &[f64],
) -> Result<Trajectory<Operator>> {
    let dynamics = AffineDynamics::new(drift, channels, None)?;
    let mut prop = Propagator::new(&dynamics, schedule)?;
    let v0 = dynamics.encode(o)?;
    let values = prop
        .evolve(&v0, sample_times)?
        .iter()
        .map(|v| dynamics.decode(v))
        .collect();
    Ok(Trajectory {
        label: String::new(),
        times: sample_times.to_vec(),
        values,
        max_imag_residue: 0.0,
    })
}

/// A model to simulate: the original generator or a reduced model.
#[derive(Clone, Copy)]
pub enum SimModel<'a> {
    Full(&'a ControlledLindbladGenerator),
    Reduced(&'a ReducedModel),
}

/// Space in which a state or observable handed to a reduced simulation lives.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputSpace {
    /// Original Hilbert space: states go through `J†`, observables through `R`.
    Full,
    /// Already reduced (block diagonal on `Ȟ`).
    Reduced,
    /// `Full` when the dimension is `n`, otherwise `Reduced`.
    Auto,
}

/// Expectation-value simulator; reduced models accept full-space states and
/// observables and map them with `J†` and `R`.
pub struct Simulator<'a> {
    model: SimModel<'a>,
    dynamics: AffineDynamics,
}

impl<'a> Simulator<'a> {
    pub fn new(model: SimModel<'a>) -> Self {
        let dynamics = match model {
            SimModel::Full(g) => AffineDynamics::full(g),
            SimModel::Reduced(r) => AffineDynamics::reduced(r),
        };
        Simulator { model, dynamics }
    }

    pub fn dynamics(&self) -> &AffineDynamics {
        &self.dynamics
    }

    fn resolve(r: &ReducedModel, dim: usize, space: InputSpace) -> Result<InputSpace> {
        let want = match space {
            InputSpace::Auto if dim == r.dim_full() => InputSpace::Full,
            InputSpace::Auto => InputSpace::Reduced,
            s => s,
        };
        let expected = match want {
            InputSpace::Full => r.dim_full(),
            _ => r.dim_reduced(),
        };
        check_dim(expected, dim)?;
        Ok(want)
    }

    fn prepare_state(&self, rho: &Operator, space: InputSpace) -> Result<Operator> {
        match self.model {
            SimModel::Full(g) => {
                check_dim(g.dim(), rho.dim())?;
                validate_density(rho)?;
                Ok(rho.clone())
            }
            SimModel::Reduced(r) => {
                if Self::resolve(r, rho.dim(), space)? == InputSpace::Full {
                    map_state(&r.maps, rho)
                } else {
                    validate_density(rho)?;
                    if r.maps.off_block_norm(rho.matrix()) > 1e-9 {
                        return Err(QmrError::invalid("reduced state is not block diagonal"));
                    }
                    Ok(rho.clone())
                }
            }
        }
    }

    fn prepare_observable(&self, o: &Operator, space: InputSpace) -> Result<Operator> {
        match self.model {
            SimModel::Full(g) => {
                check_dim(g.dim(), o.dim())?;
                Ok(o.clone())
            }
            SimModel::Reduced(r) => {
                if Self::resolve(r, o.dim(), space)? == InputSpace::Full {
                    map_r(&r.maps, o)
                } else {
                    Ok(o.clone())
                }
            }
        }
    }

    /// One expectation trajectory per observable, sharing cached exponentials.
    /// Inputs to reduced models are taken from the full space when their
    /// dimension is `n`.
    pub fn expectations(
        &self,
        schedule: &ControlSchedule,
        rho: &Operator,
        observables: &[(String, Operator)],
        times: &[f64],
    ) -> Result<Vec<Trajectory<f64>>> {
        self.expectations_in(schedule, rho, InputSpace::Auto, observables, InputSpace::Auto, times)
    }

    /// As [`Simulator::expectations`] with explicit input spaces.
    pub fn expectations_in(
        &self,
        schedule: &ControlSchedule,
        rho: &Operator,
        rho_space: InputSpace,
        observables: &[(String, Operator)],
        obs_space: InputSpace,
        times: &[f64],
    ) -> Result<Vec<Trajectory<f64>>> {
        let mut all = self.expectations_multi(
            schedule,
            std::slice::from_ref(rho),
            rho_space,
            observables,
            obs_space,
            times,
        )?;
        Ok(all.remove(0))
    }

    /// Trajectories indexed `[state][observable]`. Each observable is evolved
    /// once and paired with every state.
    pub fn expectations_multi(
        &self,
        schedule: &ControlSchedule,
        states: &[Operator],
        rho_space: InputSpace,
        observables: &[(String, Operator)],
        obs_space: InputSpace,
        times: &[f64],
    ) -> Result<Vec<Vec<Trajectory<f64>>>> {
        let pairings = states
            .iter()
            .map(|rho| self.dynamics.pairing(&self.prepare_state(rho, rho_space)?))
            .collect::<Result<Vec<_>>>()?;
        let mut prop = Propagator::new(&self.dynamics, schedule)?;
        let mut out: Vec<Vec<Trajectory<f64>>> = vec![Vec::with_capacity(observables.len()); states.len()];
        for (label, o) in observables {
            let o = self.prepare_observable(o, obs_space)?;
            let v0 = self.dynamics.encode(&o)?;
            let vs = prop.evolve(&v0, times)?;
            for (pairing, dest) in pairings.iter().zip(out.iter_mut()) {
                let mut values = Vec::with_capacity(vs.len());
                let mut imag: f64 = 0.0;
                for v in &vs {
                    let e = v.iter().zip(pairing.iter()).map(|(a, b)| a * b).sum::<C64>();
                    imag = imag.max(e.im.abs());
                    values.push(e.re);
                }
                if o.is_hermitian(1e-10) && imag > 1e-10 {
                    warn!("observable `{label}`: imaginary expectation residue {imag:.3e}");
                }
                dest.push(Trajectory {
                    label: label.clone(),
                    times: times.to_vec(),
                    values,
                    max_imag_residue: imag,
                });
            }
        }
        Ok(out)
    }
}

/// `⟨O(t)⟩_ρ` along a schedule.
pub fn expectation_trajectory(
    model: SimModel<'_>,
    schedule: &ControlSchedule,
    rho: &Operator,
    o: &Operator,
    sample_times: &[f64],
) -> Result<Trajectory<f64>> {
    let sim = Simulator::new(model);
    let mut t = sim.expectations(schedule, rho, &[(String::new(), o.clone())], sample_times)?;
    Ok(t.remove(0))
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct TrajectoryDeviation {
    pub state: usize,
    pub schedule: usize,
    pub observable: String,
    pub max_abs_deviation: f64,
    /// Largest `|⟨O(t)⟩|` on the full model.
    pub scale: f64,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct ComparisonReport {
    pub entries: Vec<TrajectoryDeviation>,
    pub max_deviation: f64,
    pub scale: f64,
    pub passed: bool,
    pub full_seconds: f64,
    pub reduced_seconds: f64,
    pub speedup: f64,
    pub max_imag_residue: f64,
    pub num_times: usize,
}

/// Exactness tolerance: deviations up to `1e-8 · (1 + scale)` pass.
pub const EXACTNESS_TOL: f64 = 1e-8;

/// Full-versus-reduced expectation trajectories for every combination of
/// state, schedule and observable.
pub fn compare_full_reduced(
    gen: &ControlledLindbladGenerator,
    reduced: &ReducedModel,
    observables: &[(String, Operator)],
    states: &[Operator],
    schedules: &[ControlSchedule],
    sample_times: &[f64],
) -> Result<ComparisonReport> {
    check_dim(gen.dim(), reduced.dim_full())?;
    check_dim(gen.num_channels(), reduced.num_channels())?;
    if states.is_empty() || schedules.is_empty() || observables.is_empty() {
        return Err(QmrError::invalid(
            "comparison needs at least one state, schedule and observable",
        ));
    }
    let full = Simulator::new(SimModel::Full(gen));
    let red = Simulator::new(SimModel::Reduced(reduced));
    let mut entries = Vec::new();
    let (mut tf, mut tr) = (0.0, 0.0);
    let mut imag: f64 = 0.0;
    for (si, schedule) in schedules.iter().enumerate() {
        let t0 = Instant::now();
        let a = full.expectations_multi(schedule, states, InputSpace::Full, observables, InputSpace::Full, sample_times)?;
        tf += t0.elapsed().as_secs_f64();
        let t0 = Instant::now();
        let b = red.expectations_multi(schedule, states, InputSpace::Full, observables, InputSpace::Full, sample_times)?;
        tr += t0.elapsed().as_secs_f64();
        for (ri, (xs, ys)) in a.iter().zip(&b).enumerate() {
            for (x, y) in xs.iter().zip(ys) {
                imag = imag.max(x.max_imag_residue).max(y.max_imag_residue);
                let dev = x
                    .values
                    .iter()
                    .zip(&y.values)
                    .map(|(p, q)| (p - q).abs())
                    .fold(0.0, f64::max);
                let scale = x.values.iter().map(|v| v.abs()).fold(0.0, f64::max);
                entries.push(TrajectoryDeviation {
                    state: ri,
                    schedule: si,
                    observable: x.label.clone(),
                    max_abs_deviation: dev,
                    scale,
                });
            }
        }
    }
    let max_deviation = entries.iter().map(|e| e.max_abs_deviation).fold(0.0, f64::max);
    let scale = entries.iter().map(|e| e.scale).fold(0.0, f64::max);
    Ok(ComparisonReport {
        passed: max_deviation <= EXACTNESS_TOL * (1.0 + scale),
        entries,
        max_deviation,
        scale,
        full_seconds: tf,
        reduced_seconds: tr,
        speedup: if tr > 0.0 { tf / tr } else { f64::INFINITY },
        max_imag_residue: imag,
        num_times: sample_times.len(),
    })
}
