//! The `run` subcommand: drive an ensemble of trajectories for one scenario
//! and emit the documented artifacts.
//!
//! Every trajectory is an independent replay: its RNG stream depends only on
//! the master seed and the trajectory index, never on scheduling, so the
//! worker count changes wall time and nothing else. All artifact bodies are
//! assembled in memory and written only after the whole ensemble succeeded.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use sha2::{Digest, Sha256};

use qcollapse_core::cost::stencil_ops;
use qcollapse_core::csl::{csl_step, csl_step_raw, reduction_event, CslOperators};
use qcollapse_core::dynamics::Hamiltonian;
use qcollapse_core::entropy::{wavefunction_entropy, EntropyRecord};
use qcollapse_core::grw::{
    collapse_center_density, grw_hit, sample_center, sample_hit_particle, sample_wait,
    total_hit_rate,
};
use qcollapse_core::registry::{RegistryConfig, WaveFunctionRegistry};
use qcollapse_core::rng::{trajectory_rng, SimRng};
use qcollapse_core::{CollapseEvent, DiscreteWaveFunction};

use crate::config::{prepare, Model, Prepared, ScenarioConfig};
use crate::CliError;

/// What `run` reports on stdout after a successful ensemble.
#[derive(Debug)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub trajectories: u64,
    pub events: u64,
}

struct VolumeRow {
    trajectory: u64,
    step: u64,
    time: f64,
    wf_id: u64,
    volume: u64,
    max_magnitude: f64,
    norm_squared: f64,
}

struct EntropyRow {
    trajectory: u64,
    step: u64,
    time: f64,
    wf_id: u64,
    volume: u64,
    entropy: f64,
    system_entropy: f64,
    reference_entropy: Option<f64>,
    post_collapse: bool,
    post_split: bool,
}

struct MemberSummary {
    wf_id: u64,
    volume: u64,
    norm_squared: f64,
    max_magnitude: f64,
    peak_position: Vec<f64>,
    basin_mass: f64,
}

struct TrajectoryData {
    index: u64,
    events: Vec<CollapseEvent>,
    volume_rows: Vec<VolumeRow>,
    entropy_rows: Vec<EntropyRow>,
    members: Vec<MemberSummary>,
}

/// Per-run immutable state shared by every worker.
struct RunContext {
    prep: Prepared,
    /// Hamiltonian for the single-wave-function drivers; `None` means the
    /// config froze the dynamics (`one_body: none`).
    hamiltonian: Option<Hamiltonian>,
    csl_ops: Option<CslOperators>,
}

pub fn execute_run(
    config_path: &Path,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<RunOutcome, CliError> {
    let raw = fs::read(config_path)
        .map_err(|e| CliError::Io(format!("{}: {e}", config_path.display())))?;
    let text = String::from_utf8(raw.clone())
        .map_err(|_| CliError::Schema("config file is not UTF-8".to_string()))?;
    let mut config = ScenarioConfig::from_json(&text)?;
    if let Some(s) = seed {
        config.ensemble.master_seed = s;
    }
    if let Some(dir) = out {
        config.outputs.dir = dir.to_string_lossy().into_owned();
    }

    let prep = prepare(config)?;
    let ctx = build_context(prep)?;
    let trajectories = run_ensemble(&ctx)?;

    let events: u64 = trajectories.iter().map(|t| t.events.len() as u64).sum();
    let out_dir = PathBuf::from(&ctx.prep.config.outputs.dir);
    write_artifacts(&ctx, &trajectories, &raw, &out_dir)?;
    Ok(RunOutcome { out_dir, trajectories: trajectories.len() as u64, events })
}

fn build_context(prep: Prepared) -> Result<RunContext, CliError> {
    let constraint = |e: qcollapse_core::CoreError| CliError::Constraint(e.to_string());
    let hamiltonian = match (&prep.one_body, prep.config.model) {
        // the registry builds per-member Hamiltonians itself
        (_, Model::Ccqm) => None,
        (None, _) => None,
        (Some(one_body), _) => Some(
            Hamiltonian::build(
                prep.lattice.clone(),
                &prep.particles,
                &prep.units,
                prep.boundary,
                one_body,
                prep.pair.as_ref(),
            )
            .map_err(constraint)?,
        ),
    };
    let csl_ops = match &prep.csl {
        Some(params) => Some(
            CslOperators::build(&prep.lattice, &prep.particles, params, &prep.units, prep.boundary)
                .map_err(constraint)?,
        ),
        None => None,
    };
    Ok(RunContext { prep, hamiltonian, csl_ops })
}

/// Worker threads pull trajectory indices from a shared counter; results go
/// back into an index-addressed table so output order never depends on
/// scheduling. On failure the error from the smallest failing index wins.
fn run_ensemble(ctx: &RunContext) -> Result<Vec<TrajectoryData>, CliError> {
    let n = ctx.prep.config.ensemble.trajectories;
    let workers = worker_count(n)?;
    let mut slots: Vec<Option<Result<TrajectoryData, CliError>>> = Vec::new();
    slots.resize_with(n as usize, || None);

    if workers <= 1 {
        for (i, slot) in slots.iter_mut().enumerate() {
            *slot = Some(run_trajectory(ctx, i as u64));
        }
    } else {
        let next = AtomicU64::new(0);
        let table = Mutex::new(&mut slots);
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= n {
                        break;
                    }
                    let result = run_trajectory(ctx, i);
                    table.lock().expect("result table poisoned")[i as usize] = Some(result);
                });
            }
        });
    }

    let mut out = Vec::with_capacity(n as usize);
    for slot in slots {
        out.push(slot.expect("every trajectory ran")?);
    }
    Ok(out)
}

fn worker_count(trajectories: u64) -> Result<usize, CliError> {
    let configured = match std::env::var("QCOLLAPSE_WORKERS") {
        Ok(s) => s.trim().parse::<usize>().ok().filter(|&w| w >= 1).ok_or_else(|| {
            CliError::Constraint(format!("QCOLLAPSE_WORKERS must be a positive integer, got {s:?}"))
        })?,
        Err(std::env::VarError::NotPresent) => std::thread::available_parallelism()
            .map(|p| p.get())
            .unwrap_or(1)
            .min(8),
        Err(e) => return Err(CliError::Io(e.to_string())),
    };
    Ok(configured.min(trajectories.max(1) as usize))
}

fn run_trajectory(ctx: &RunContext, index: u64) -> Result<TrajectoryData, CliError> {
    let mut rng = trajectory_rng(ctx.prep.config.ensemble.master_seed, index);
    match ctx.prep.config.model {
        Model::Unitary => run_unitary(ctx, index),
        Model::Grw => run_grw(ctx, index, &mut rng),
        Model::Csl => run_csl(ctx, index, &mut rng),
        Model::Ccqm => run_ccqm(ctx, index, &mut rng),
    }
}

fn should_record(step: u64, every: u64, total: u64) -> bool {
    step == 0 || step == total || step % every == 0
}

impl TrajectoryData {
    fn new(index: u64) -> Self {
        TrajectoryData {
            index,
            events: Vec::new(),
            volume_rows: Vec::new(),
            entropy_rows: Vec::new(),
            members: Vec::new(),
        }
    }

    /// One record point for a single-wave-function driver: volume row plus
    /// an entropy row where the single member is the whole system.
    fn record_single(
        &mut self,
        psi: &DiscreteWaveFunction,
        step: u64,
        time: f64,
        prep: &Prepared,
        event_this_step: bool,
    ) -> Result<(), CliError> {
        let volume = psi.relative_volume(prep.f0);
        self.volume_rows.push(VolumeRow {
            trajectory: self.index,
            step,
            time,
            wf_id: 0,
            volume,
            max_magnitude: psi.max_magnitude(),
            norm_squared: psi.norm_squared(),
        });
        let entropy = wavefunction_entropy(psi, prep.f0, prep.units.boltzmann)?;
        self.entropy_rows.push(EntropyRow {
            trajectory: self.index,
            step,
            time,
            wf_id: 0,
            volume,
            entropy,
            system_entropy: entropy,
            reference_entropy: prep.config.entropy.reference,
            post_collapse: event_this_step,
            post_split: false,
        });
        Ok(())
    }
}

fn run_unitary(ctx: &RunContext, index: u64) -> Result<TrajectoryData, CliError> {
    let prep = &ctx.prep;
    let s = &prep.config.schedule;
    let mut psi = prep.initial[0].clone();
    let mut data = TrajectoryData::new(index);
    data.record_single(&psi, 0, 0.0, prep, false)?;
    for step in 1..=s.steps {
        if let Some(h) = &ctx.hamiltonian {
            h.step_in_place(&mut psi, s.dt)?;
        }
        if should_record(step, s.record_every, s.steps) {
            data.record_single(&psi, step, step as f64 * s.dt, prep, false)?;
        }
    }
    data.members.push(member_summary(0, &psi, prep));
    Ok(data)
}

fn run_grw(ctx: &RunContext, index: u64, rng: &mut SimRng) -> Result<TrajectoryData, CliError> {
    let prep = &ctx.prep;
    let s = &prep.config.schedule;
    let params = prep.grw.as_ref().expect("grw driver needs grw params");
    let rate = total_hit_rate(params, &prep.particles, &prep.units);
    let mut psi = prep.initial[0].clone();
    let mut data = TrajectoryData::new(index);
    data.record_single(&psi, 0, 0.0, prep, false)?;

    // absolute time of the next hit in the Poisson stream; redrawn after
    // each hit so multiple hits inside one step are handled too
    let mut next_hit = sample_wait(rate, rng);
    let mut stop = false;
    for step in 1..=s.steps {
        if let Some(h) = &ctx.hamiltonian {
            h.step_in_place(&mut psi, s.dt)?;
        }
        let t_end = step as f64 * s.dt;
        let mut hit_this_step = false;
        while next_hit <= t_end && !stop {
            let particle = sample_hit_particle(params, &prep.particles, &prep.units, rng);
            let (sub, density) =
                collapse_center_density(&psi, particle, params.alpha, prep.boundary)?;
            let center = sample_center(&sub, &density, rng);
            let (collapsed, mut event) = grw_hit(
                &psi,
                particle,
                &center,
                params,
                prep.f0,
                prep.boundary,
                ctx.hamiltonian.as_ref(),
            )?;
            psi = collapsed;
            event.time = next_hit;
            event.wave_functions = vec![0];
            data.events.push(event);
            hit_this_step = true;
            if s.max_events > 0 && data.events.len() as u64 >= s.max_events {
                stop = true;
            } else {
                next_hit += sample_wait(rate, rng);
            }
        }
        if stop || should_record(step, s.record_every, s.steps) {
            data.record_single(&psi, step, t_end, prep, hit_this_step)?;
        }
        if stop {
            break;
        }
    }
    data.members.push(member_summary(0, &psi, prep));
    Ok(data)
}

fn run_csl(ctx: &RunContext, index: u64, rng: &mut SimRng) -> Result<TrajectoryData, CliError> {
    let prep = &ctx.prep;
    let s = &prep.config.schedule;
    let params = prep.csl.as_ref().expect("csl driver needs csl params");
    let ops = ctx.csl_ops.as_ref().expect("csl driver needs operators");
    let raw = prep.config.params.csl.as_ref().is_some_and(|c| c.raw);
    let mut psi = prep.initial[0].clone();
    let mut data = TrajectoryData::new(index);
    data.record_single(&psi, 0, 0.0, prep, false)?;

    let v_start = psi.relative_volume(prep.f0);
    let mut reduced = false;
    let mut stop = false;
    for step in 1..=s.steps {
        psi = if raw {
            csl_step_raw(&psi, ctx.hamiltonian.as_ref(), ops, params, rng)?
        } else {
            csl_step(&psi, ctx.hamiltonian.as_ref(), ops, params, rng)?
        };
        let t = step as f64 * s.dt;
        let mut event_this_step = false;
        // a cooked trajectory has completed its reduction once essentially
        // all probability sits in one cell; tag that moment exactly once
        if !raw && !reduced {
            let (peak_mass, peak) = peak_cell_mass(&psi);
            if peak_mass >= 0.999 {
                reduced = true;
                event_this_step = true;
                let mut event =
                    reduction_event(t, v_start, psi.relative_volume(prep.f0), Some(peak));
                event.wave_functions = vec![0];
                data.events.push(event);
                if s.max_events > 0 && data.events.len() as u64 >= s.max_events {
                    stop = true;
                }
            }
        }
        if stop || should_record(step, s.record_every, s.steps) {
            data.record_single(&psi, step, t, prep, event_this_step)?;
        }
        if stop {
            break;
        }
    }
    data.members.push(member_summary(0, &psi, prep));
    Ok(data)
}

fn run_ccqm(ctx: &RunContext, index: u64, rng: &mut SimRng) -> Result<TrajectoryData, CliError> {
    let prep = &ctx.prep;
    let s = &prep.config.schedule;
    let params = prep.ccqm.as_ref().expect("ccqm driver needs ccqm params");
    let one_body = prep.one_body.clone().expect("validated: ccqm needs a one-body potential");
    let mut registry = WaveFunctionRegistry::new(RegistryConfig {
        units: prep.units,
        boundary: prep.boundary,
        one_body,
        pair: prep.pair.clone(),
        combine_budget_cells: prep.config.budget.combine_budget_cells,
    });
    for wf in &prep.initial {
        registry
            .add_wave_function(wf.clone())
            .map_err(|e| CliError::Constraint(e.to_string()))?;
    }

    let mut data = TrajectoryData::new(index);
    record_registry(&mut data, &registry, 0, prep, &[])?;
    let mut stop = false;
    for step in 1..=s.steps {
        let new_events = registry.tick(params, s.dt, rng)?;
        if s.max_events > 0 && (data.events.len() + new_events.len()) as u64 >= s.max_events {
            stop = true;
        }
        if stop || should_record(step, s.record_every, s.steps) {
            record_registry(&mut data, &registry, step, prep, &new_events)?;
        }
        data.events.extend(new_events);
        if stop {
            break;
        }
    }
    for (id, wf) in registry.iter() {
        data.members.push(member_summary(id, wf, prep));
    }
    Ok(data)
}

fn record_registry(
    data: &mut TrajectoryData,
    registry: &WaveFunctionRegistry,
    step: u64,
    prep: &Prepared,
    new_events: &[CollapseEvent],
) -> Result<(), CliError> {
    let time = registry.time();
    for (id, wf) in registry.iter() {
        data.volume_rows.push(VolumeRow {
            trajectory: data.index,
            step,
            time,
            wf_id: id,
            volume: wf.relative_volume(prep.f0),
            max_magnitude: wf.max_magnitude(),
            norm_squared: wf.norm_squared(),
        });
    }
    let record = EntropyRecord::measure(
        registry,
        prep.f0,
        prep.units.boltzmann,
        prep.config.entropy.identical_correction,
        prep.config.entropy.reference,
        new_events,
    )?;
    for m in &record.members {
        data.entropy_rows.push(EntropyRow {
            trajectory: data.index,
            step,
            time,
            wf_id: m.id,
            volume: m.volume,
            entropy: m.entropy,
            system_entropy: record.system,
            reference_entropy: record.reference,
            post_collapse: record.post_collapse,
            post_split: record.post_split,
        });
    }
    Ok(())
}

/// Largest single-cell probability mass and that cell's coordinates.
fn peak_cell_mass(psi: &DiscreteWaveFunction) -> (f64, Vec<f64>) {
    let lat = psi.lattice();
    let norm2 = psi.norm_squared();
    let (mut best, mut best_m) = (0usize, -1.0f64);
    for (i, z) in psi.amplitudes().iter().enumerate() {
        let m = z.norm_sqr();
        if m > best_m {
            best_m = m;
            best = i;
        }
    }
    let mut coords = vec![0usize; lat.axis_count()];
    lat.coords_of(best, &mut coords);
    let position: Vec<f64> =
        (0..lat.axis_count()).map(|ax| lat.position(ax, coords[ax])).collect();
    let mass = if norm2 > 0.0 { best_m * lat.cell_volume() / norm2 } else { 0.0 };
    (mass, position)
}

/// Terminal member facts for `summary.json`. `basin_mass` is the fraction of
/// probability within the per-axis quarter-extent window around the peak; in
/// a two-outcome scenario with well-separated branches, 1 - basin_mass is
/// the mass left on the branch that lost.
fn member_summary(wf_id: u64, wf: &DiscreteWaveFunction, prep: &Prepared) -> MemberSummary {
    let lat = wf.lattice();
    let axes = lat.axis_count();
    let (mut best, mut best_m) = (0usize, -1.0f64);
    for (i, z) in wf.amplitudes().iter().enumerate() {
        let m = z.norm_sqr();
        if m > best_m {
            best_m = m;
            best = i;
        }
    }
    let mut coords = vec![0usize; axes];
    lat.coords_of(best, &mut coords);
    let peak: Vec<f64> = (0..axes).map(|ax| lat.position(ax, coords[ax])).collect();
    let window: Vec<f64> = (0..axes)
        .map(|ax| lat.cells_per_axis()[ax] as f64 * lat.cell_size()[ax] / 4.0)
        .collect();

    let mut inside = 0.0;
    let mut total = 0.0;
    for (i, z) in wf.amplitudes().iter().enumerate() {
        let m = z.norm_sqr();
        if m == 0.0 {
            continue;
        }
        total += m;
        lat.coords_of(i, &mut coords);
        let near = (0..axes).all(|ax| {
            let x = lat.position(ax, coords[ax]);
            lat.displacement(ax, x, peak[ax], prep.boundary).abs() <= window[ax]
        });
        if near {
            inside += m;
        }
    }
    MemberSummary {
        wf_id,
        volume: wf.relative_volume(prep.f0),
        norm_squared: wf.norm_squared(),
        max_magnitude: wf.max_magnitude(),
        peak_position: peak,
        basin_mass: if total > 0.0 { inside / total } else { 0.0 },
    }
}

// ---- artifact emission ------------------------------------------------

fn csv_err(e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("csv assembly: {e}"))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn join_f64(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

fn join_u64(xs: &[u64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

fn events_csv(trajectories: &[TrajectoryData]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "trajectory",
        "seq",
        "time",
        "mechanism",
        "wave_functions",
        "produced",
        "particle",
        "center",
        "epsilon",
        "v_pre",
        "v_post",
        "delta_energy",
    ])
    .map_err(csv_err)?;
    for t in trajectories {
        for (seq, e) in t.events.iter().enumerate() {
            w.write_record([
                t.index.to_string(),
                seq.to_string(),
                e.time.to_string(),
                e.mechanism.name().to_string(),
                join_u64(&e.wave_functions),
                join_u64(&e.produced),
                e.particle.map(|p| p.to_string()).unwrap_or_default(),
                e.center.as_deref().map(join_f64).unwrap_or_default(),
                fmt_opt(e.epsilon),
                e.v_pre.to_string(),
                e.v_post.to_string(),
                fmt_opt(e.delta_energy),
            ])
            .map_err(csv_err)?;
        }
    }
    w.into_inner().map_err(csv_err)
}

fn volume_csv(trajectories: &[TrajectoryData]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["trajectory", "step", "time", "wf_id", "volume", "max_magnitude", "norm_squared"])
        .map_err(csv_err)?;
    for t in trajectories {
        for r in &t.volume_rows {
            w.write_record([
                r.trajectory.to_string(),
                r.step.to_string(),
                r.time.to_string(),
                r.wf_id.to_string(),
                r.volume.to_string(),
                r.max_magnitude.to_string(),
                r.norm_squared.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.into_inner().map_err(csv_err)
}

fn entropy_csv(trajectories: &[TrajectoryData]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "trajectory",
        "step",
        "time",
        "wf_id",
        "volume",
        "entropy",
        "system_entropy",
        "reference_entropy",
        "post_collapse",
        "post_split",
    ])
    .map_err(csv_err)?;
    for t in trajectories {
        for r in &t.entropy_rows {
            w.write_record([
                r.trajectory.to_string(),
                r.step.to_string(),
                r.time.to_string(),
                r.wf_id.to_string(),
                r.volume.to_string(),
                r.entropy.to_string(),
                r.system_entropy.to_string(),
                fmt_opt(r.reference_entropy),
                u8::from(r.post_collapse).to_string(),
                u8::from(r.post_split).to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.into_inner().map_err(csv_err)
}

fn summary_json(ctx: &RunContext, trajectories: &[TrajectoryData]) -> Vec<u8> {
    let mut counts = std::collections::BTreeMap::<&'static str, u64>::new();
    for t in trajectories {
        for e in &t.events {
            *counts.entry(e.mechanism.name()).or_insert(0) += 1;
        }
    }
    let per_trajectory: Vec<serde_json::Value> = trajectories
        .iter()
        .map(|t| {
            let members: Vec<serde_json::Value> = t
                .members
                .iter()
                .map(|m| {
                    serde_json::json!({
                        "wf_id": m.wf_id,
                        "volume": m.volume,
                        "norm_squared": m.norm_squared,
                        "max_magnitude": m.max_magnitude,
                        "peak_position": m.peak_position,
                        "basin_mass": m.basin_mass,
                    })
                })
                .collect();
            serde_json::json!({
                "trajectory": t.index,
                "events": t.events.len(),
                "members": members,
            })
        })
        .collect();
    let doc = serde_json::json!({
        "model": ctx.prep.config.model.name(),
        "trajectories": trajectories.len(),
        "steps": ctx.prep.config.schedule.steps,
        "dt": ctx.prep.config.schedule.dt,
        "event_counts": counts,
        "per_trajectory": per_trajectory,
    });
    to_pretty_bytes(&doc)
}

/// Cost profile of the configured scenario: one entry per initial member,
/// dense vs support-mode memory and the stencil work one step costs at each.
fn cost_json(ctx: &RunContext) -> Vec<u8> {
    let axes = ctx.prep.lattice.axis_count();
    let members: Vec<serde_json::Value> = ctx
        .prep
        .initial
        .iter()
        .enumerate()
        .map(|(i, wf)| {
            let support = wf.relative_volume(ctx.prep.f0);
            let dense = wf.lattice().total_cells() as u64;
            serde_json::json!({
                "wf_id": i as u64,
                "particle_count": wf.lattice().particle_count(),
                "lattice_cells": dense,
                "support_cells": support,
                "dense_step_ops": stencil_ops(dense, axes),
                "support_step_ops": stencil_ops(support, axes),
            })
        })
        .collect();
    let total: u64 =
        ctx.prep.initial.iter().map(|wf| wf.lattice().total_cells() as u64).sum();
    let doc = serde_json::json!({
        "axes": axes,
        "members": members,
        "total_lattice_cells": total,
    });
    to_pretty_bytes(&doc)
}

fn to_pretty_bytes(doc: &serde_json::Value) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(doc).expect("in-memory json");
    bytes.push(b'\n');
    bytes
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_artifacts(
    ctx: &RunContext,
    trajectories: &[TrajectoryData],
    raw_config: &[u8],
    out_dir: &Path,
) -> Result<(), CliError> {
    let files = [
        ("events.csv", events_csv(trajectories)?),
        ("volume.csv", volume_csv(trajectories)?),
        ("entropy.csv", entropy_csv(trajectories)?),
        ("summary.json", summary_json(ctx, trajectories)),
        ("cost.json", cost_json(ctx)),
    ];
    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Io(format!("{}: {e}", out_dir.display())))?;
    let mut hashes = std::collections::BTreeMap::new();
    for (name, body) in &files {
        hashes.insert(name.to_string(), sha256_hex(body));
        fs::write(out_dir.join(name), body)
            .map_err(|e| CliError::Io(format!("{name}: {e}")))?;
    }
    let manifest = serde_json::json!({
        "config_sha256": sha256_hex(raw_config),
        "master_seed": ctx.prep.config.ensemble.master_seed,
        "versions": {
            "qcollapse-cli": env!("CARGO_PKG_VERSION"),
            "qcollapse-core": qcollapse_core::VERSION,
        },
        "files": hashes,
    });
    fs::write(out_dir.join("manifest.json"), to_pretty_bytes(&manifest))
        .map_err(|e| CliError::Io(format!("manifest.json: {e}")))?;
    Ok(())
}
