use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use jmeas_core::boundary::{sample_boundary, SamplerConfig};
use jmeas_core::caratheodory::{ambient_dimension, reduce_parent_traced, ReduceOptions};
use jmeas_core::catalog;
use jmeas_core::compat::{decide_with, qutrit_certificate, qutrit_certificate_value, CompatOptions, CompatVerdict, Verdict};
use jmeas_core::exec::ExecMode;
use jmeas_core::hermitian::HermitianMatrix;
use jmeas_core::povm::{enumerate_partition_children, MeasurementSet, ParentPovm, Shape};
use jmeas_core::prob_parent::{
    noisy_pauli_deterministic_min_eigenvalue, noisy_pauli_prob_parent, search_prob_parent_with, threshold_scan, ProbSearchOptions,
};
use jmeas_core::random::random_povm;
use jmeas_core::search::{
    min_parent_size_with, reduction_upper_bound, trivial_lower_bound, ProgressEvent, SearchOptions, Shard,
};
use jmeas_core::steering::{
    assemblage_from_measurements, lhs_from_parent, measurements_from_assemblage, parent_from_lhs, Assemblage,
};

use crate::checkpoint::{self, Checkpoint};
use crate::{exit, Cli, Command, ExampleName, Global, MinParentArgs, ProbCommand, SampleFormat};

/// Children of a random parent are capped at this many outcomes.
const CHILDREN_CAP: usize = 12;

#[derive(Debug)]
pub enum CliError {
    /// Bad input file or argument.
    Malformed(String),
    Failure(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Malformed(_) => exit::MALFORMED,
            CliError::Failure(_) => exit::FAILURE,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Malformed(m) => write!(f, "malformed input: {m}"),
            CliError::Failure(m) => write!(f, "{m}"),
        }
    }
}

impl From<jmeas_core::Error> for CliError {
    fn from(e: jmeas_core::Error) -> Self {
        match e {
            jmeas_core::Error::InvalidArgument(_) | jmeas_core::Error::Json(_) => CliError::Malformed(e.to_string()),
            other => CliError::Failure(other.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// One JSON line on stderr.
pub fn log(event: &str, mut fields: Value) {
    if let Value::Object(map) = &mut fields {
        map.insert("event".into(), Value::String(event.into()));
    }
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{fields}");
}

fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let bytes = fs::read(path).map_err(|e| CliError::Malformed(format!("{}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::Malformed(format!("{}: {e}", path.display())))
}

fn emit_text(global: &Global, text: &str) -> CliResult<()> {
    match &global.out {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Failure(format!("{}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).and_then(|_| out.flush()).map_err(|e| CliError::Failure(e.to_string()))
        }
    }
}

fn emit<T: Serialize>(global: &Global, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Failure(e.to_string()))?;
    text.push('\n');
    emit_text(global, &text)
}

fn require_seed(global: &Global, what: &str) -> CliResult<u64> {
    global.seed.ok_or_else(|| CliError::Malformed(format!("{what} is stochastic and needs --seed")))
}

fn compat_options(global: &Global) -> CliResult<CompatOptions> {
    if !(global.tol.is_finite() && global.tol > 0.0) {
        return Err(CliError::Malformed(format!("tolerance must be positive, got {}", global.tol)));
    }
    Ok(CompatOptions::with_tol(global.tol))
}

/// Maps `--workers` to an execution mode, sizing the global pool.
fn exec_mode(workers: usize) -> CliResult<ExecMode> {
    if workers == 1 {
        return Ok(ExecMode::Sequential);
    }
    #[cfg(feature = "parallel")]
    if workers > 1 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| CliError::Failure(format!("thread pool: {e}")))?;
    }
    Ok(ExecMode::Parallel)
}

fn verdict_code(v: Verdict) -> u8 {
    match v {
        Verdict::Compatible => exit::COMPATIBLE,
        Verdict::Incompatible => exit::INCOMPATIBLE,
        Verdict::Indeterminate => exit::INDETERMINATE,
    }
}

pub fn run(cli: Cli) -> CliResult<u8> {
    let g = cli.global;
    let mode = exec_mode(g.workers)?;
    match cli.command {
        Command::Check { input } => check(&g, &input),
        Command::MinParent(args) => min_parent(&g, mode, &args),
        Command::Reduce { input, parent, greedy } => reduce(&g, &input, parent.as_deref(), greedy),
        Command::Sample { shape, n, format } => sample(&g, mode, shape, n, format),
        Command::Steer { input, state, from_assemblage } => steer(&g, &input, state.as_deref(), from_assemblage),
        Command::Prob(cmd) => prob(&g, mode, cmd),
        Command::Examples { name, eta, outcomes, list } => examples(&g, name, eta, outcomes, list),
    }
}

fn check(g: &Global, input: &Path) -> CliResult<u8> {
    let ms: MeasurementSet = read_json(input)?;
    let v = decide_with(&ms, None, &compat_options(g)?)?;
    log("verdict", json!({ "verdict": v.verdict, "nu_star": v.nu_star }));
    emit(g, &v)?;
    Ok(verdict_code(v.verdict))
}

/// Full-support verdict; callers stop unless it is compatible.
fn require_compatible(g: &Global, ms: &MeasurementSet, opts: &CompatOptions) -> CliResult<Result<CompatVerdict, u8>> {
    let v = decide_with(ms, None, opts)?;
    if v.verdict == Verdict::Compatible {
        return Ok(Ok(v));
    }
    log("verdict", json!({ "verdict": v.verdict, "nu_star": v.nu_star }));
    emit(g, &v)?;
    Ok(Err(verdict_code(v.verdict)))
}

fn min_parent(g: &Global, mode: ExecMode, args: &MinParentArgs) -> CliResult<u8> {
    let ms: MeasurementSet = read_json(&args.input)?;
    let opts = compat_options(g)?;
    let shard = args.shard.as_deref().map(Shard::parse).transpose()?;
    if let Err(code) = require_compatible(g, &ms, &opts)? {
        return Ok(code);
    }
    let lower = args.lower.unwrap_or_else(|| trivial_lower_bound(&ms));
    let upper = match args.upper {
        Some(u) => u,
        None => reduction_upper_bound(&ms, &opts)?.0,
    };

    let hash = checkpoint::ms_hash(&ms);
    let cp_file = args.checkpoint.as_ref().map(|dir| checkpoint::path(dir, &hash, shard));
    if let Some(dir) = &args.checkpoint {
        fs::create_dir_all(dir).map_err(|e| CliError::Failure(format!("{}: {e}", dir.display())))?;
    }
    let resume = cp_file.as_deref().and_then(|f| checkpoint::load(f, &hash, shard)).map(|cp| (cp.size, cp.offset));
    if let Some((size, offset)) = resume {
        log("resume", json!({ "size": size, "offset": offset.to_string() }));
    }

    let events: Arc<Mutex<Vec<ProgressEvent>>> = Arc::default();
    let mut search = SearchOptions::new(lower, upper);
    search.mode = mode;
    search.shard = shard;
    search.compat = opts;
    search.resume = resume;
    search.progress = Some(progress_sink(hash.clone(), shard, cp_file.clone(), events.clone()));
    log("scan", json!({ "lower": lower, "upper": upper, "shard": args.shard, "ms_hash": hash }));

    let result = match shard {
        None => min_parent_size_with(&ms, &search).map(|r| serde_json::to_value(r).expect("report serializes")),
        Some(sh) => shard_scan(&ms, &search, sh, &events),
    };
    let value = match result {
        Ok(v) => v,
        Err(jmeas_core::Error::AllSizesInfeasible { lower, upper }) => {
            return Err(CliError::Failure(format!("no parent with support size in [{lower}, {upper}]")))
        }
        Err(e) => return Err(e.into()),
    };
    if let Some(f) = &cp_file {
        let _ = fs::remove_file(f);
    }
    emit(g, &value)?;
    Ok(exit::COMPATIBLE)
}

/// Streams progress to stderr and advances the checkpoint.
fn progress_sink(
    hash: String,
    shard: Option<Shard>,
    file: Option<PathBuf>,
    events: Arc<Mutex<Vec<ProgressEvent>>>,
) -> jmeas_core::search::ProgressSink {
    Arc::new(move |ev: &ProgressEvent| {
        log("support", json!({ "size": ev.size, "index": ev.index.to_string(), "verdict": ev.verdict }));
        if let Some(f) = &file {
            let cp = Checkpoint { ms_hash: hash.clone(), shard, size: ev.size, offset: ev.index + 1 };
            if let Err(e) = checkpoint::save(f, &cp) {
                log("warning", json!({ "message": format!("checkpoint not written: {e}") }));
            }
        }
        events.lock().expect("progress lock").push(ev.clone());
    })
}

/// Scans this shard's supports size by size, stopping at the first size
/// where it finds a parent. Results are partial: the minimum over all
/// shards is the smallest size any shard reports feasible.
fn shard_scan(
    ms: &MeasurementSet,
    base: &SearchOptions,
    shard: Shard,
    events: &Arc<Mutex<Vec<ProgressEvent>>>,
) -> jmeas_core::Result<Value> {
    let first = base.resume.map(|(s, _)| s.max(base.lower)).unwrap_or(base.lower);
    let mut sizes = Vec::new();
    let mut feasible = Value::Null;
    for size in first..=base.upper {
        let mut opts = base.clone();
        opts.lower = size;
        opts.upper = size;
        opts.resume = base.resume.filter(|(s, _)| *s == size);
        let found = match min_parent_size_with(ms, &opts) {
            Ok(report) => Some(report.witness_parent),
            Err(jmeas_core::Error::AllSizesInfeasible { .. }) => None,
            Err(e) => return Err(e),
        };
        let seen: Vec<ProgressEvent> = std::mem::take(&mut *events.lock().expect("progress lock"));
        let indices = |v: Verdict| -> Vec<String> {
            seen.iter().filter(|e| e.verdict == v).map(|e| e.index.to_string()).collect()
        };
        sizes.push(json!({
            "size": size,
            "tested": seen.len(),
            "compatible": indices(Verdict::Compatible),
            "incompatible": indices(Verdict::Incompatible),
            "indeterminate": indices(Verdict::Indeterminate),
        }));
        if let Some(parent) = found {
            feasible = json!({ "size": size, "parent": parent });
            break;
        }
    }
    Ok(json!({
        "shard": { "index": shard.index + 1, "count": shard.count },
        "sizes": sizes,
        "feasible": feasible,
    }))
}

fn reduce(g: &Global, input: &Path, parent: Option<&Path>, greedy: bool) -> CliResult<u8> {
    let ms: MeasurementSet = read_json(input)?;
    let parent: ParentPovm = match parent {
        Some(p) => read_json(p)?,
        None => match require_compatible(g, &ms, &compat_options(g)?)? {
            Ok(v) => v.parent.expect("compatible verdicts carry a parent"),
            Err(code) => return Ok(code),
        },
    };
    let start = parent.support_size();
    let (reduced, trace) = reduce_parent_traced(&ms, &parent, ReduceOptions { greedy })?;
    log("reduced", json!({ "from": start, "to": reduced.support_size(), "steps": trace.len() }));
    emit(
        g,
        &json!({
            "bound": ambient_dimension(&ms.shape()),
            "input_support": start,
            "support": reduced.support_size(),
            "marginal_deviation": reduced.marginal_deviation(&ms),
            "parent": reduced,
            "trace": trace,
        }),
    )?;
    Ok(exit::COMPATIBLE)
}

fn sample(g: &Global, mode: ExecMode, (d, m, o): (usize, usize, usize), n: usize, format: SampleFormat) -> CliResult<u8> {
    let seed = require_seed(g, "sample")?;
    let shape = Shape::uniform(d, m, o)?;
    let cfg = SamplerConfig { mode, compat: compat_options(g)?, ..SamplerConfig::default() };
    log("sample", json!({ "shape": shape.dmo(), "n": n, "seed": seed }));
    let run = sample_boundary(&shape, n, seed, &cfg)?;
    for (i, msg) in &run.failures {
        log("point_failed", json!({ "index": i, "message": msg }));
    }
    let hist = &run.histogram;
    log("histogram", json!({ "total": hist.total, "fraction_maximal": hist.fraction_maximal() }));
    match format {
        SampleFormat::Csv => emit_text(g, &hist.to_csv())?,
        SampleFormat::Gnuplot => emit_text(g, &hist.to_gnuplot())?,
        SampleFormat::Json => emit(g, &json!({ "histogram": hist, "fraction_maximal": hist.fraction_maximal() }))?,
    }
    Ok(exit::COMPATIBLE)
}

fn steer(g: &Global, input: &Path, state: Option<&Path>, from_assemblage: bool) -> CliResult<u8> {
    if from_assemblage {
        let asm: Assemblage = read_json(input)?;
        asm.validate(jmeas_core::steering::STEERING_TOL).map_err(|e| CliError::Malformed(e.to_string()))?;
        let sm = measurements_from_assemblage(&asm)?;
        let back = assemblage_from_measurements(&sm.measurements, &sm.state)?;
        let residual = back.max_abs_diff(&asm);
        log("round_trip", json!({ "assemblage_residual": residual }));
        emit(g, &json!({ "measurements": sm.measurements, "state": sm.state, "assemblage_residual": residual }))?;
        return Ok(exit::COMPATIBLE);
    }
    let ms: MeasurementSet = read_json(input)?;
    let rho: HermitianMatrix = match state {
        Some(p) => read_json(p)?,
        None => HermitianMatrix::identity(ms.dim()).scale(1.0 / ms.dim() as f64),
    };
    let asm = assemblage_from_measurements(&ms, &rho)?;
    let sm = measurements_from_assemblage(&asm)?;
    let asm_residual = assemblage_from_measurements(&sm.measurements, &sm.state)?.max_abs_diff(&asm);
    let mut out = json!({
        "assemblage": asm,
        "assemblage_residual": asm_residual,
        "full_rank": sm.frame.is_full_rank(),
    });
    if sm.frame.is_full_rank() {
        out["measurement_residual"] = json!(sm.measurements.max_abs_diff(&ms));
    }
    let v = decide_with(&ms, None, &compat_options(g)?)?;
    out["verdict"] = json!(v.verdict);
    if let Some(parent) = &v.parent {
        let lhs = lhs_from_parent(parent, &rho)?;
        out["lhs_size"] = json!(lhs.len());
        out["parent_support"] = json!(parent.support_size());
        if sm.frame.is_full_rank() {
            let back = parent_from_lhs(&lhs, parent.shape(), &rho)?;
            let residual = parent.iter().map(|(t, c)| back.get(t).map_or(f64::INFINITY, |b| b.max_abs_diff(c))).fold(0.0, f64::max);
            out["parent_residual"] = json!(residual);
        }
        out["lhs"] = json!(lhs);
    }
    log("round_trip", json!({ "assemblage_residual": asm_residual, "parent_residual": out.get("parent_residual") }));
    emit(g, &out)?;
    Ok(exit::COMPATIBLE)
}

fn prob(g: &Global, mode: ExecMode, cmd: ProbCommand) -> CliResult<u8> {
    match cmd {
        ProbCommand::Construct { eta } => {
            let c = noisy_pauli_prob_parent(eta)?;
            let parent = c.parent();
            let residual = match &parent {
                Some(pp) => Some(pp.residual(&catalog::example_noisy_pauli(eta)?)?),
                None => None,
            };
            emit(
                g,
                &json!({
                    "eta": eta,
                    "valid": c.is_valid(),
                    "min_eigenvalue": c.min_eigenvalue,
                    "elements": c.elements,
                    "responses": c.responses,
                    "residual": residual,
                }),
            )?;
            Ok(if c.is_valid() { exit::COMPATIBLE } else { exit::INCOMPATIBLE })
        }
        ProbCommand::Threshold { lo, hi, step } => {
            if !(lo < hi && step > 0.0) {
                return Err(CliError::Malformed(format!("need lo < hi and step > 0, got {lo} {hi} {step}")));
            }
            let construction = threshold_scan(
                |eta| noisy_pauli_prob_parent(eta).map_or(f64::NEG_INFINITY, |c| c.min_eigenvalue),
                lo,
                hi,
                step,
            );
            let deterministic = threshold_scan(noisy_pauli_deterministic_min_eigenvalue, lo, 1.0, step);
            emit(g, &json!({ "probabilistic_three_outcome": construction, "deterministic_four_outcome": deterministic }))?;
            Ok(exit::COMPATIBLE)
        }
        ProbCommand::Search { input, k, restarts } => {
            let seed = require_seed(g, "prob search")?;
            let ms: MeasurementSet = read_json(&input)?;
            let opts = ProbSearchOptions { restarts, mode, ..ProbSearchOptions::default() };
            let found = search_prob_parent_with(&ms, k, seed, &opts)?;
            log("prob_search", json!({ "k": k, "restarts": restarts, "found": found.is_some() }));
            let residual = found.as_ref().map(|pp| pp.residual(&ms)).transpose()?;
            // not finding one says nothing about existence
            emit(g, &json!({ "k": k, "status": if found.is_some() { "found" } else { "unknown" }, "parent": found, "residual": residual }))?;
            Ok(if found.is_some() { exit::COMPATIBLE } else { exit::INDETERMINATE })
        }
    }
}

fn examples(g: &Global, name: Option<ExampleName>, eta: f64, outcomes: usize, list: bool) -> CliResult<u8> {
    use clap::ValueEnum;
    if list {
        let names: Vec<String> =
            ExampleName::value_variants().iter().filter_map(|v| v.to_possible_value()).map(|p| p.get_name().to_string()).collect();
        emit_text(g, &(names.join("\n") + "\n"))?;
        return Ok(exit::COMPATIBLE);
    }
    let name = name.expect("clap requires a name without --list");
    let value = match name {
        ExampleName::NoisyPauli => json!(catalog::example_noisy_pauli(eta)?),
        ExampleName::NoisyPauliParent => json!(catalog::noisy_pauli_parent(eta)?),
        ExampleName::NoisyPauliProbParent => {
            let c = noisy_pauli_prob_parent(eta)?;
            match c.parent() {
                Some(pp) => json!(pp),
                None => {
                    return Err(CliError::Malformed(format!(
                        "construction is not a POVM at eta = {eta} (min eigenvalue {:.3e})",
                        c.min_eigenvalue
                    )))
                }
            }
        }
        ExampleName::QutritTriple => json!(catalog::example_qutrit_triple()),
        ExampleName::QutritParent => json!(catalog::example_qutrit_parent()),
        ExampleName::QutritCertificates => {
            let certs = Shape::uniform(3, 3, 2)?
                .tuples()
                .into_iter()
                .map(|t| Ok(json!({ "excluded": t, "value": qutrit_certificate_value(&t), "witness": qutrit_certificate(&t)? })))
                .collect::<jmeas_core::Result<Vec<_>>>()?;
            json!(certs)
        }
        ExampleName::Trine => json!(catalog::trine_povm()),
        ExampleName::TrineParent => json!(catalog::trine_parent()),
        ExampleName::TrineChildren => {
            json!(MeasurementSet::new(enumerate_partition_children(&catalog::trine_povm(), CHILDREN_CAP)?)?)
        }
        ExampleName::RandomChildren => {
            use rand::SeedableRng;
            let seed = require_seed(g, "random-children")?;
            if !(2..=CHILDREN_CAP).contains(&outcomes) {
                return Err(CliError::Malformed(format!("outcomes must lie in [2, {CHILDREN_CAP}], got {outcomes}")));
            }
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let parent = random_povm(2, outcomes, &mut rng);
            json!({ "parent": parent, "children": MeasurementSet::new(enumerate_partition_children(&parent, CHILDREN_CAP)?)? })
        }
    };
    emit(g, &value)?;
    Ok(exit::COMPATIBLE)
}
