use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde_json::{json, Value};

use rnic_core::analysis::{
    classify_full, drift_check, explosivity_report, resolve_lyapunov, DriftMode, DriftVerdict, FullVerdict, LyapunovError,
    Reachability,
};
use rnic_core::coarse::Region;
use rnic_core::model::{parse_model, validate as validate_model, CompartmentParams, RnicModel};
use rnic_core::sim::{self, rng_from_seed, EndReason, EnsembleOptions, SimError, Simulator};
use rnic_core::stationary::{
    alpha, compare_stats, compartment_count_marginal, AlphaOptions, AlphaRoute, EmpiricalStats, StationaryError,
};
use rnic_core::{CoarseState, SimState};

use crate::error::CliError;
use crate::samples::{parse_box, parse_counts, parse_times};
use crate::{ClassifyArgs, CompareArgs, EnsembleArgs, Format, LyapunovArgs, ModeArg, RouteArg, SimulateArgs, StationaryArgs};

fn load_model(path: &Path) -> Result<RnicModel, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_model(&text).map_err(|e| CliError::Parse(format!("{}\n{e}", path.display())))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Writes to `path` when given, else to stdout.
fn emit(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => write_file(p, text),
        None => {
            print!("{text}");
            if !text.ends_with('\n') {
                println!();
            }
            Ok(())
        }
    }
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("json value serializes")
}

fn sim_error(e: SimError) -> CliError {
    match e {
        SimError::StateParse(_) | SimError::DimensionMismatch { .. } => CliError::Usage(e.to_string()),
        other => CliError::Precondition(other.to_string()),
    }
}

fn parse_init(text: &str, model: &RnicModel) -> Result<SimState, CliError> {
    let s: SimState = text.parse().map_err(sim_error)?;
    if let Some(x) = s.compartments().iter().find(|x| x.dim() != model.dim()) {
        return Err(CliError::Usage(format!(
            "--init: compartment {x} has {} entries, the model has {} species",
            x.dim(),
            model.dim()
        )));
    }
    Ok(s)
}

fn cap_warning(model: &RnicModel, what: &str) -> String {
    let report = explosivity_report(model);
    format!("{what} hit the event cap; explosivity check says {:?}", report.verdict)
}

pub fn validate(path: &Path) -> Result<(), CliError> {
    let model = load_model(path)?;
    let diags = validate_model(&model);
    for d in &diags {
        println!("{d}");
    }
    println!("ok: {} species, {} reactions, {} diagnostics", model.dim(), model.chemistry.reactions.len(), diags.len());
    Ok(())
}

pub fn simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let model = load_model(&a.model)?;
    if a.t_end.is_nan() || a.t_end < 0.0 {
        return Err(CliError::Usage(format!("--t-end must be non-negative, got {}", a.t_end)));
    }
    let init = parse_init(&a.init, &model)?;
    let d = model.dim();
    let mut log = match &a.out {
        Some(p) => Some((p, BufWriter::new(File::create(p).map_err(|e| CliError::io(p, e))?))),
        None => None,
    };
    let mut io_err = None;
    let mut last = init.clone();
    let mut prev_totals = init.totals(d);
    let mut monotone = vec![true; d];
    let mut rng = rng_from_seed(a.seed);
    let summary = sim::run(&model, init.clone(), a.t_end, a.max_events, &mut rng, |ev, s| {
        if let Some((p, w)) = log.as_mut() {
            if io_err.is_none() {
                if let Err(e) = writeln!(w, "{}", ev.to_json()) {
                    io_err = Some(CliError::io(p, e));
                }
            }
        }
        let totals = s.totals(d);
        for ((m, new), old) in monotone.iter_mut().zip(&totals).zip(&prev_totals) {
            *m &= new >= old;
        }
        prev_totals = totals;
        last.clone_from(s);
    })
    .map_err(sim_error)?;
    if let Some((p, mut w)) = log {
        if let Some(e) = io_err {
            return Err(e);
        }
        w.flush().map_err(|e| CliError::io(p, e))?;
    }
    let names = model.chemistry.species.names();
    let totals = last.totals(d);
    let per_species =
        |f: &dyn Fn(usize) -> Value| -> Value { names.iter().enumerate().map(|(k, n)| (n.clone(), f(k))).collect() };
    let rate = |k: usize| if summary.end_time > 0.0 { json!(totals[k] as f64 / summary.end_time) } else { Value::Null };
    let out = json!({
        "seed": a.seed,
        "initial": init.to_string(),
        "events": summary.events,
        "end_reason": summary.end_reason,
        "end_time": summary.end_time,
        "final_m_c": last.len(),
        "final_totals": per_species(&|k| json!(totals[k])),
        "totals_per_time": per_species(&rate),
        "total_monotone": per_species(&|k| json!(monotone[k])),
    });
    println!("{}", pretty(&out));
    if summary.end_reason == EndReason::MaxEventsReached {
        let msg = cap_warning(&model, &format!("run stopped at t = {} after {} events:", summary.end_time, summary.events));
        if a.strict {
            return Err(CliError::Guard(msg));
        }
        eprintln!("warning: {msg}");
    }
    Ok(())
}

fn parse_coarse(text: &str, model: &RnicModel) -> Result<CoarseState, CliError> {
    let n = if text.trim_start().starts_with('[') {
        CoarseState::from_sim(&parse_init(text, model)?)
    } else {
        text.parse::<CoarseState>().map_err(|e| CliError::Usage(format!("--state '{text}': {e}")))?
    };
    if let Some((x, _)) = n.iter().find(|(x, _)| x.dim() != model.dim()) {
        return Err(CliError::Usage(format!(
            "--state: compartment {x} has {} entries, the model has {} species",
            x.dim(),
            model.dim()
        )));
    }
    Ok(n)
}

pub fn classify(a: &ClassifyArgs) -> Result<(), CliError> {
    let model = load_model(&a.model)?;
    let n = parse_coarse(&a.state, &model)?;
    let full = classify_full(&model, &n, a.depth).map_err(|e| CliError::Precondition(e.to_string()))?;
    println!("state: {n}");
    println!("compartment chain: {:?} on {}", full.compartments.verdict, full.compartments.irreducible_set);
    println!("verdict: {:?}", full.verdict);
    match &full.reachability {
        Some(Reachability::Reachable(path)) => {
            println!("reachable from the empty state in {} transitions:", path.len());
            for (i, t) in path.iter().enumerate() {
                println!("  {}. {t}", i + 1);
            }
        }
        Some(Reachability::NotReachableWithinDepth { depth, states_visited, budget_exhausted }) => {
            println!(
                "not reached from the empty state within depth {depth} ({states_visited} states visited{})",
                if *budget_exhausted { ", search budget exhausted" } else { "" }
            );
        }
        None => {}
    }
    println!("note: {}", full.note);
    println!("explosivity:");
    for line in explosivity_report(&model).to_string().lines() {
        println!("  {line}");
    }
    if full.verdict != FullVerdict::Unknown {
        println!("(the verdict assumes the model is non-explosive)");
    }
    Ok(())
}

pub fn lyapunov(a: &LyapunovArgs) -> Result<(), CliError> {
    let model = load_model(&a.model)?;
    let v = resolve_lyapunov(&a.function, &model.chemistry.species).map_err(|e| match e {
        LyapunovError::UnknownName(_) | LyapunovError::MissingSpecies { .. } | LyapunovError::Parse { .. } => {
            CliError::UnknownFunction(e.to_string())
        }
    })?;
    let upper = parse_box(&a.bounds, model.dim())?;
    if a.min_c > a.max_c {
        return Err(CliError::Usage(format!("--min-c {} exceeds --max-c {}", a.min_c, a.max_c)));
    }
    let mut region = Region::new(a.max_c, upper).with_min_compartments(a.min_c);
    if let Some(cap) = a.max_total {
        region = region.with_max_total(cap);
    }
    let states = region.states();
    let mode = match a.mode {
        ModeArg::Recurrence => DriftMode::RecurrenceLe,
        ModeArg::Transience => DriftMode::TransienceGe,
    };
    let exceptional = a.exceptional_c.as_deref().map(parse_counts).transpose()?;
    let report = drift_check(
        &model,
        |n| v.eval(n),
        &states,
        mode,
        exceptional.map(|cs| move |n: &CoarseState| cs.binary_search(&n.num_compartments()).is_ok()),
    )
    .map_err(|e| CliError::Precondition(e.to_string()))?;
    emit(a.out.as_deref(), &report.to_json())?;
    eprintln!(
        "{}: {} states checked, {} failing, {} outside the exceptional set",
        report.verdict,
        report.checked,
        report.exceptional_set.len(),
        report.violations.len()
    );
    match report.verdict {
        DriftVerdict::HypothesisFailsAtListedStates => Err(CliError::DriftViolation),
        _ => Ok(()),
    }
}

fn stationary_error(e: StationaryError) -> CliError {
    match e {
        StationaryError::PreconditionViolation(m) => CliError::Precondition(m),
        StationaryError::BoxDimension { .. } | StationaryError::BoxTooLarge | StationaryError::BoxTooSmall { .. } => {
            CliError::Usage(format!("--box: {e}"))
        }
        StationaryError::AlphaNotCovering(_) | StationaryError::Cme(_) => CliError::Guard(e.to_string()),
    }
}

fn alpha_options(route: RouteArg) -> AlphaOptions {
    AlphaOptions {
        route: match route {
            RouteArg::Auto => AlphaRoute::Auto,
            RouteArg::ClosedForm => AlphaRoute::ClosedForm,
            RouteArg::Cme => AlphaRoute::Cme,
        },
        ..AlphaOptions::default()
    }
}

pub fn stationary(a: &StationaryArgs) -> Result<(), CliError> {
    let model = load_model(&a.model)?;
    let upper = parse_box(&a.bounds, model.dim())?;
    let table = alpha(&model, &upper, &alpha_options(a.route)).map_err(stationary_error)?;
    let marginal = compartment_count_marginal(&model.compartments).map_err(stationary_error)?;
    if let Some(path) = &a.out {
        let text = match a.format {
            Format::Csv => table.to_csv(),
            Format::Json => serde_json::to_string_pretty(&table).expect("alpha table serializes"),
        };
        write_file(path, &text)?;
    }
    let summary = json!({
        "species": table.species,
        "box": table.upper,
        "route": table.route,
        "alpha_mass": table.mass(),
        "alpha_tail_mass": table.tail_mass,
        "alpha_mean": table.mean(),
        "alpha_variance": table.variance(),
        "compartment_count": {"law": "Poisson", "mean": marginal.mean},
        "table": a.out.as_ref().map(|p| p.display().to_string()),
    });
    println!("{}", pretty(&summary));
    Ok(())
}

pub fn ensemble(a: &EnsembleArgs) -> Result<(), CliError> {
    let model = load_model(&a.model)?;
    let init = parse_init(&a.init, &model)?;
    let times = parse_times(&a.samples)?;
    let opts = EnsembleOptions { max_events: a.max_events, ..EnsembleOptions::new(times, a.n_traj, a.seed) };
    let matrix = sim::ensemble(&model, &init, &opts).map_err(sim_error)?;
    let text = match a.format {
        Format::Csv => matrix.to_csv(),
        Format::Json => serde_json::to_string_pretty(&matrix).expect("sample matrix serializes"),
    };
    emit(a.out.as_deref(), &text)?;
    if !matrix.capped.is_empty() {
        let msg = cap_warning(&model, &format!("trajectories {:?}", matrix.capped));
        if a.strict {
            return Err(CliError::Guard(msg));
        }
        eprintln!("warning: {msg}");
    }
    Ok(())
}

/// `10 / min(kappa_E, kappa_C, 1)` over the positive entries.
fn default_burn_in(p: &CompartmentParams) -> f64 {
    let slowest = [p.kappa_e, p.kappa_c, 1.0].into_iter().filter(|&k| k > 0.0).fold(f64::INFINITY, f64::min);
    10.0 / slowest
}

pub fn compare(a: &CompareArgs) -> Result<(), CliError> {
    let model = load_model(&a.model)?;
    let upper = parse_box(&a.bounds, model.dim())?;
    let table = alpha(&model, &upper, &alpha_options(RouteArg::Auto)).map_err(stationary_error)?;
    let init = parse_init(&a.init, &model)?;
    let burn_in = a.burn_in.unwrap_or_else(|| default_burn_in(&model.compartments));
    let times: Vec<f64> = match &a.samples {
        Some(s) => parse_times(s)?.into_iter().filter(|&t| t >= burn_in && t <= a.t_end).collect(),
        None => {
            if a.dt.is_nan() || a.dt <= 0.0 {
                return Err(CliError::Usage(format!("--dt must be positive, got {}", a.dt)));
            }
            let count = if a.t_end >= burn_in { ((a.t_end - burn_in) / a.dt).floor() as usize + 1 } else { 0 };
            (0..count).map(|i| burn_in + i as f64 * a.dt).collect()
        }
    };
    let per_traj: Vec<Result<(EmpiricalStats, bool), SimError>> = (0..a.n_traj)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng_from_seed(a.seed);
            rng.set_stream(k as u64);
            let mut sim = Simulator::new(&model, init.clone())?;
            let mut stats = EmpiricalStats::default();
            let mut capped = false;
            for &t in &times {
                while sim.events() < a.max_events {
                    if sim.next_event(&mut rng, t)?.is_none() {
                        break;
                    }
                }
                if sim.events() >= a.max_events {
                    capped = true;
                    break;
                }
                stats.add(&CoarseState::from_sim(sim.state()));
            }
            Ok((stats, capped))
        })
        .collect();
    let mut stats = EmpiricalStats::default();
    let mut capped = Vec::new();
    for (k, r) in per_traj.into_iter().enumerate() {
        let (s, c) = r.map_err(sim_error)?;
        stats.merge(&s);
        if c {
            capped.push(k);
        }
    }
    let report = compare_stats(&stats, &table, &model.compartments);
    let mut out = serde_json::to_value(&report).expect("report serializes");
    out["burn_in"] = json!(burn_in);
    out["seed"] = json!(a.seed);
    out["n_traj"] = json!(a.n_traj);
    emit(a.out.as_deref(), &pretty(&out))?;
    if !capped.is_empty() {
        let msg = cap_warning(&model, &format!("trajectories {capped:?}"));
        if a.strict {
            return Err(CliError::Guard(msg));
        }
        eprintln!("warning: {msg}; their samples stop at the cap");
    }
    Ok(())
}
