//! The `vmc` command-line front end.
//!
//! Exit codes: 0 success (and `Trivial` for `zolaw`), 1 a failed check (and
//! `NonTrivial`), 2 `Inconclusive`, 64 usage errors, 65 invalid models or
//! data, 70 internal invariant violations, 74 I/O failures.

use std::ffi::OsString;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tempfile::NamedTempFile;

use crate::error::{Result, VmcError};
use crate::kernels::{
    project_matrix, validate_compatibility, validate_vtm, Balayage, CompatibilityReport, Family, NamedBalayage,
    StochasticLevelMatrix, VtmGenerator, VtmPrefix, VtmReport,
};
use crate::levels::{LevelPath, State, VirtualPathPrefix};
use crate::rational::{format_rational, to_decimal, Rational};
use crate::simplex::{
    delta_point, k0_sequence, limit_scan, sternfeld_statistic, ExtendedBalayageTable, MarginalSequence, SequenceModel,
};
use crate::smc::{backward_check, empirical_marginals, BackwardCheck, EmpiricalMarginals, SmcKernel};
use crate::vmcsim::{classify_states, staircase_decomposition, DecompositionPrefix, VmcSampler, DEFAULT_A, DEFAULT_KMAX};
use crate::zolaw::{evaluate, EvaluateOptions};

pub const EXIT_USAGE: i32 = 64;
pub const EXIT_DATA: i32 = 65;
pub const EXIT_INTERNAL: i32 = 70;
pub const EXIT_IO: i32 = 74;

const DECIMALS: usize = 12;

#[derive(Debug, Parser)]
#[command(name = "vmc", version, about = "Virtual Markov chains: simulation, decomposition, simplex diagnostics and tail zero-one laws")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate coupled level paths and decompose them.
    Simulate(SimulateArgs),
    /// Staircase decomposition of a path table.
    Decompose(DecomposeArgs),
    /// Project a top-level path, or a model matrix, down one level.
    Project(ProjectArgs),
    /// Validate a VTM (and optionally a compatible VID).
    Check(CheckArgs),
    /// Delta points and compactness diagnostics of a balayage.
    #[command(subcommand)]
    Simplex(SimplexCommand),
    /// Staircase Markov chains.
    #[command(subcommand)]
    Smc(SmcCommand),
    /// Exact visit classification of states.
    Classify(ClassifyArgs),
    /// Zero-one law verdict for the tail σ-algebra.
    Zolaw(ZolawArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BalayageKind {
    Uniform,
    Down,
    TwoDown,
}

impl From<BalayageKind> for NamedBalayage {
    fn from(k: BalayageKind) -> Self {
        match k {
            BalayageKind::Uniform => NamedBalayage::Uniform,
            BalayageKind::Down => NamedBalayage::Down,
            BalayageKind::TwoDown => NamedBalayage::TwoDown,
        }
    }
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct BalayageSource {
    /// A named balayage.
    #[arg(long, value_enum)]
    pub balayage: Option<BalayageKind>,
    /// The balayage of a model VTM.
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub vid: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub level: usize,
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    #[arg(long, default_value_t = 1)]
    pub replicates: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_A)]
    pub amax: usize,
    #[arg(long, default_value_t = DEFAULT_KMAX)]
    pub kmax: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    /// Path table: a list of level paths, a list of integer rows, or one
    /// top-level path.
    #[arg(long)]
    pub paths: PathBuf,
    #[arg(long, default_value_t = DEFAULT_A)]
    pub amax: usize,
    /// Visit indices `k < kmax`.
    #[arg(long, default_value_t = DEFAULT_KMAX)]
    pub kmax: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[arg(long, conflicts_with = "model", required_unless_present = "model")]
    pub paths: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Target level (all levels when omitted for paths).
    #[arg(long)]
    pub level: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub vid: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    pub levels: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DeltaFormat {
    Json,
    Bracket,
}

#[derive(Debug, Subcommand)]
pub enum SimplexCommand {
    /// `δ_a^π` through a level.
    Delta {
        #[command(flatten)]
        source: BalayageSource,
        #[arg(long)]
        a: State,
        #[arg(long, default_value_t = 8)]
        levels: usize,
        #[arg(long, value_enum, default_value_t = DeltaFormat::Json)]
        format: DeltaFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// `Σ_b π_{b,M}(c)²·π_{a,N}(b)` against `π_{a,M}(c)²` for `N ≤ a ≤ amax`.
    Sternfeld {
        #[command(flatten)]
        source: BalayageSource,
        #[arg(long = "M")]
        m: usize,
        #[arg(long)]
        c: State,
        #[arg(long = "N")]
        n: usize,
        #[arg(long, default_value_t = 256)]
        amax: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// `π_{a,N}(N)` for `a ≤ amax`.
    K0 {
        #[command(flatten)]
        source: BalayageSource,
        #[arg(long = "N")]
        n: usize,
        #[arg(long, default_value_t = 256)]
        amax: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Group `δ_a^π` by their truncation and list limit candidates.
    LimitScan {
        #[command(flatten)]
        source: BalayageSource,
        #[arg(long, default_value_t = 8)]
        level: usize,
        #[arg(long, default_value_t = 64)]
        amax: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct SmcArgs {
    #[command(flatten)]
    pub source: BalayageSource,
    /// Marginal sequence description.
    #[arg(long)]
    pub vid: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub levels: usize,
    #[arg(long, default_value_t = 1000)]
    pub replicates: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum SmcCommand {
    /// Sample staircases as CSV rows `replicate, s_0, ..., s_L`.
    Sample(SmcArgs),
    /// Compare sampled marginals and backward conditionals with the exact
    /// ones.
    Verify {
        #[command(flatten)]
        common: SmcArgs,
        #[arg(long, default_value_t = 0.02)]
        tolerance: f64,
    },
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub vid: PathBuf,
    #[arg(long, default_value_t = DEFAULT_A)]
    pub amax: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ZolawArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub vid: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub amax: usize,
    /// Certificate level (default `amax + 2`).
    #[arg(long)]
    pub truncation: Option<usize>,
    /// Largest `a` scanned for limit candidates (default twice the truncation).
    #[arg(long)]
    pub scan_max: Option<usize>,
    #[arg(long)]
    pub no_shortcut: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Maps an error to its exit code.
pub fn exit_code(e: &VmcError) -> i32 {
    use VmcError::*;
    match e {
        ParameterOutOfRange(_) | PrefixTooShort { .. } | ResourceGuard { .. } | ZeroHorizon | LevelTooHigh { .. } => {
            EXIT_USAGE
        }
        InvalidPath { .. }
        | InvalidDistribution { .. }
        | InvalidMatrix { .. }
        | InvalidModel(_)
        | Json(_)
        | Incompatible(_)
        | MembershipViolation { .. }
        | LengthMismatch(_)
        | ConditioningEventUnobserved { .. } => EXIT_DATA,
        Io(_) => EXIT_IO,
        InternalUnreachableState { .. } | SingularSystem { .. } | CertificateRejected(_) => EXIT_INTERNAL,
    }
}

/// Parses `args` (including the program name) and runs one subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("vmc: {e}");
            exit_code(&e)
        }
    }
}

/// Seed precedence: flag, then `VMC_SEED`, then 0.
pub fn resolve_seed(flag: Option<u64>) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("VMC_SEED") {
        Ok(v) => v.trim().parse().map_err(|_| VmcError::ParameterOutOfRange(format!("VMC_SEED={v:?} is not a u64"))),
        Err(_) => Ok(0),
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn csv_err(e: csv::Error) -> VmcError {
    VmcError::Io(io::Error::other(e))
}

/// Writes through a temporary file in the target directory, then renames.
fn write_atomic(path: &Path, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        f(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path).map_err(|e| VmcError::Io(e.error))?;
    Ok(())
}

fn emit(out: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match out {
        Some(p) => write_atomic(p, f),
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock)?;
            lock.flush()?;
            Ok(())
        }
    }
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    emit(out, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)?;
        Ok(())
    })
}

fn rational_cells(r: &Rational) -> [String; 2] {
    [format_rational(r), to_decimal(r, DECIMALS)]
}

/// A model with its VTM generator.
struct Model {
    family: Family,
    generator: VtmGenerator,
}

impl Model {
    fn load(path: &Path) -> Result<Self> {
        let family: Family = read_json(path).map_err(|e| match e {
            VmcError::Json(j) => VmcError::InvalidModel(format!("{}: {j}", path.display())),
            other => other,
        })?;
        let generator = VtmGenerator::new(family.clone())?;
        Ok(Model { family, generator })
    }

    fn vtm(&self, top: usize) -> Result<VtmPrefix> {
        self.generator.prefix(top)
    }
}

fn load_sequence(path: &Path) -> Result<SequenceModel> {
    read_json(path).map_err(|e| match e {
        VmcError::Json(j) => VmcError::InvalidModel(format!("{}: {j}", path.display())),
        other => other,
    })
}

/// `(K, π, ν)` through level `top`; `K` reaches far enough to resolve `ν`.
fn model_and_vid(model: &Path, vid: &Path, top: usize) -> Result<(Model, VtmPrefix, Balayage, MarginalSequence)> {
    let m = Model::load(model)?;
    let seq = load_sequence(vid)?;
    let k = m.vtm(top.max(seq.max_state()).max(1))?;
    let pi = Balayage::of_vtm(&k)?;
    let nu = seq.resolve(&pi, Some(&k), top)?;
    Ok((m, k, pi, nu))
}

/// A balayage with at least `len` rows, and the model VTM if there is one.
fn balayage_of(source: &BalayageSource, len: usize) -> Result<(Balayage, Option<VtmPrefix>)> {
    match (&source.balayage, &source.model) {
        (Some(kind), _) => Ok((Balayage::named((*kind).into(), len), None)),
        (None, Some(path)) => {
            let k = Model::load(path)?.vtm(len.max(1))?;
            Ok((Balayage::of_vtm(&k)?, Some(k)))
        }
        (None, None) => Err(VmcError::ParameterOutOfRange("need --balayage or --model".into())),
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PathTable {
    Levels(Vec<LevelPath>),
    Rows(Vec<Vec<State>>),
    Top(LevelPath),
}

/// Reads a path table in any of its accepted forms.
pub fn load_paths(path: &Path) -> Result<VirtualPathPrefix> {
    let table: PathTable = read_json(path).map_err(|e| match e {
        VmcError::Json(j) => VmcError::InvalidModel(format!("{}: {j}", path.display())),
        other => other,
    })?;
    match table {
        PathTable::Levels(levels) => VirtualPathPrefix::new(levels),
        PathTable::Rows(rows) => VirtualPathPrefix::new(
            rows.into_iter().enumerate().map(|(n, r)| LevelPath::determined(n, r)).collect::<Result<_>>()?,
        ),
        PathTable::Top(top) => VirtualPathPrefix::from_top(top),
    }
}

fn execute(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Simulate(a) => simulate(a),
        Command::Decompose(a) => {
            let vp = load_paths(&a.paths)?;
            let mismatches = crate::levels::validate_virtual_prefix(&vp);
            if let Some(m) = mismatches.first() {
                return Err(VmcError::InvalidPath {
                    level: m.lower,
                    reason: format!("not the projection of level {} (index {})", m.upper, m.index),
                });
            }
            emit_json(a.out.as_deref(), &staircase_decomposition(&vp, a.amax, a.kmax))?;
            Ok(0)
        }
        Command::Project(a) => project(a),
        Command::Check(a) => check(a),
        Command::Simplex(s) => simplex(s),
        Command::Smc(s) => smc(s),
        Command::Classify(a) => {
            let (_, k, _, nu) = model_and_vid(&a.model, &a.vid, a.amax)?;
            let rows = classify_states(&nu.to_vid(), &k.truncated(a.amax)?, a.amax)?;
            emit(a.out.as_deref(), |w| {
                let mut csv = csv::Writer::from_writer(w);
                csv.write_record(["a", "q_a", "p_a", "verdict", "q_a_decimal", "p_a_decimal"]).map_err(csv_err)?;
                for c in &rows {
                    let [q, qd] = rational_cells(&c.q);
                    let [p, pd] = rational_cells(&c.p);
                    csv.write_record([c.a.to_string(), q, p, c.verdict.name().to_string(), qd, pd]).map_err(csv_err)?;
                }
                csv.flush()?;
                Ok(())
            })?;
            Ok(0)
        }
        Command::Zolaw(a) => {
            let mut opts = EvaluateOptions::new(a.amax);
            if let Some(t) = a.truncation {
                opts.truncation = t;
                opts.scan_max = 2 * t;
            }
            if let Some(s) = a.scan_max {
                opts.scan_max = s;
            }
            opts.use_irreducible_shortcut = !a.no_shortcut;
            let m = Model::load(&a.model)?;
            let seq = load_sequence(&a.vid)?;
            let k = m.vtm(opts.vtm_level().max(seq.max_state()))?;
            let pi = Balayage::of_vtm(&k)?;
            let nu = seq.resolve(&pi, Some(&k), opts.truncation)?;
            let report = evaluate(&nu, &k, Some(&m.family), opts)?;
            emit_json(a.out.as_deref(), &report)?;
            Ok(report.verdict.exit_code())
        }
    }
}

#[derive(Serialize)]
struct ReplicateLine<'a, T> {
    replicate: u64,
    #[serde(flatten)]
    body: &'a T,
}

#[derive(Serialize)]
struct TopPath<'a> {
    top: &'a LevelPath,
}

#[derive(Serialize)]
struct Decomposed<'a> {
    decomposition: &'a DecompositionPrefix,
}

#[derive(Serialize)]
struct SimulationSummary {
    level: usize,
    steps: usize,
    replicates: usize,
    seed: u64,
    /// Total variation between the empirical law of `X_N(0)` and `ν_N`,
    /// over replicates where `X_N(0)` is determined.
    initial_tv: Vec<f64>,
    undetermined_initial: Vec<usize>,
}

const CHUNK: usize = 4096;

fn simulate(a: SimulateArgs) -> Result<i32> {
    let seed = resolve_seed(a.seed)?;
    let (_, k, _, nu) = model_and_vid(&a.model, &a.vid, a.level)?;
    let vid = nu.to_vid();
    let sampler = VmcSampler::new(&vid, &k, a.level)?;
    if a.steps == 0 {
        return Err(VmcError::ZeroHorizon);
    }
    let max_a = a.amax.min(a.level);
    fs::create_dir_all(&a.out)?;

    let mut counts: Vec<Vec<u64>> = (0..=a.level).map(|n| vec![0; n + 1]).collect();
    let mut undetermined = vec![0usize; a.level + 1];
    let mut paths = NamedTempFile::new_in(&a.out)?;
    let mut decomp = NamedTempFile::new_in(&a.out)?;
    {
        let mut pw = BufWriter::new(paths.as_file_mut());
        let mut dw = BufWriter::new(decomp.as_file_mut());
        for start in (0..a.replicates).step_by(CHUNK) {
            let end = (start + CHUNK).min(a.replicates);
            let batch: Vec<(VirtualPathPrefix, DecompositionPrefix)> = {
                use rayon::prelude::*;
                (start as u64..end as u64)
                    .into_par_iter()
                    .map(|r| {
                        let vp = sampler.sample(a.steps, seed, r)?;
                        let d = staircase_decomposition(&vp, max_a, a.kmax);
                        Ok((vp, d))
                    })
                    .collect::<Result<_>>()?
            };
            for (i, (vp, d)) in batch.iter().enumerate() {
                let replicate = (start + i) as u64;
                serde_json::to_writer(&mut pw, &ReplicateLine { replicate, body: &TopPath { top: vp.top() } })?;
                writeln!(pw)?;
                serde_json::to_writer(&mut dw, &ReplicateLine { replicate, body: &Decomposed { decomposition: d } })?;
                writeln!(dw)?;
                for n in 0..=a.level {
                    match vp.level(n).entry(0) {
                        Some(x) => counts[n][x] += 1,
                        None => undetermined[n] += 1,
                    }
                }
            }
        }
        pw.flush()?;
        dw.flush()?;
    }
    paths.persist(a.out.join("paths.jsonl")).map_err(|e| VmcError::Io(e.error))?;
    decomp.persist(a.out.join("decomposition.jsonl")).map_err(|e| VmcError::Io(e.error))?;

    let initial_tv = (0..=a.level)
        .map(|n| {
            let total: u64 = counts[n].iter().sum();
            if total == 0 {
                return f64::NAN;
            }
            let freq: Vec<f64> = counts[n].iter().map(|&c| c as f64 / total as f64).collect();
            crate::kernels::tv_distance(&freq, &vid.level(n).to_f64())
        })
        .collect();
    let summary =
        SimulationSummary { level: a.level, steps: a.steps, replicates: a.replicates, seed, initial_tv, undetermined_initial: undetermined };
    emit_json(Some(&a.out.join("summary.json")), &summary)?;

    let classes = classify_states(&vid, &k.truncated(a.level)?, max_a)?;
    write_atomic(&a.out.join("classification.csv"), |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["a", "q_a", "p_a", "verdict"]).map_err(csv_err)?;
        for c in &classes {
            csv.write_record([c.a.to_string(), format_rational(&c.q), format_rational(&c.p), c.verdict.name().into()])
                .map_err(csv_err)?;
        }
        csv.flush()?;
        Ok(())
    })?;
    Ok(0)
}

#[derive(Serialize)]
struct ProjectedMatrix {
    level: usize,
    matrix: StochasticLevelMatrix,
    /// The projection equals the model's own `K_N`.
    consistent: bool,
}

fn project(a: ProjectArgs) -> Result<i32> {
    if let Some(model) = &a.model {
        let n = a.level.ok_or_else(|| VmcError::ParameterOutOfRange("--level is required with --model".into()))?;
        let m = Model::load(model)?;
        let projected = project_matrix(&*m.generator.level(n + 1)?)?;
        let own = m.generator.level(n)?;
        let consistent = projected == *own;
        emit_json(a.out.as_deref(), &ProjectedMatrix { level: n, matrix: projected, consistent })?;
        return Ok(if consistent { 0 } else { 1 });
    }
    let vp = load_paths(a.paths.as_deref().expect("clap requires --paths or --model"))?;
    let vp = VirtualPathPrefix::from_top(vp.top().clone())?;
    match a.level {
        Some(n) if n > vp.top_level() => Err(VmcError::LevelTooHigh { target: n, source_level: vp.top_level() }),
        Some(n) => {
            emit_json(a.out.as_deref(), vp.level(n))?;
            Ok(0)
        }
        None => {
            emit_json(a.out.as_deref(), &vp)?;
            Ok(0)
        }
    }
}

#[derive(Serialize)]
struct CheckReport {
    vtm: VtmReport,
    compatibility: Option<CompatibilityReport>,
}

fn check(a: CheckArgs) -> Result<i32> {
    let m = Model::load(&a.model)?;
    let k = m.vtm(a.levels)?;
    let vtm = validate_vtm(&k);
    let compatibility = match &a.vid {
        Some(v) => {
            let seq = load_sequence(v)?;
            let kk = m.vtm(a.levels.max(seq.max_state()))?;
            let nu = seq.resolve(&Balayage::of_vtm(&kk)?, Some(&kk), a.levels)?;
            Some(validate_compatibility(&nu.to_vid(), &k)?)
        }
        None => None,
    };
    let ok = vtm.is_valid() && compatibility.as_ref().is_none_or(|c| c.is_compatible());
    emit_json(a.out.as_deref(), &CheckReport { vtm, compatibility })?;
    Ok(if ok { 0 } else { 1 })
}

#[derive(Serialize)]
struct DeltaOutput<'a> {
    a: State,
    sequence: &'a MarginalSequence,
}

fn simplex(cmd: SimplexCommand) -> Result<i32> {
    match cmd {
        SimplexCommand::Delta { source, a, levels, format, out } => {
            let (pi, _) = balayage_of(&source, a.max(levels))?;
            let d = delta_point(&pi, a, levels)?;
            match format {
                DeltaFormat::Json => emit_json(out.as_deref(), &DeltaOutput { a, sequence: &d })?,
                DeltaFormat::Bracket => emit(out.as_deref(), |w| {
                    for row in d.bracket(levels) {
                        let cells: Vec<String> = row.iter().map(format_rational).collect();
                        writeln!(w, "{}", cells.join(" "))?;
                    }
                    Ok(())
                })?,
            }
            Ok(0)
        }
        SimplexCommand::Sternfeld { source, m, c, n, amax, out } => {
            if n > amax {
                return Err(VmcError::ParameterOutOfRange(format!("N = {n} exceeds amax = {amax}")));
            }
            let (pi, _) = balayage_of(&source, amax)?;
            let table = ExtendedBalayageTable::build(&pi, amax)?;
            let report = sternfeld_statistic(&table, m, c, n, n..=amax)?;
            emit(out.as_deref(), |w| {
                let mut csv = csv::Writer::from_writer(w);
                csv.write_record(["M", "c", "N", "a", "sum", "target", "abs_dev", "sum_decimal", "target_decimal", "abs_dev_decimal"])
                    .map_err(csv_err)?;
                for cell in &report.cells {
                    let [s, sd] = rational_cells(&cell.sum);
                    let [t, td] = rational_cells(&cell.target);
                    let [d, dd] = rational_cells(&cell.abs_dev());
                    let head = [cell.m, cell.c, cell.n, cell.a].map(|x| x.to_string());
                    csv.write_record(head.into_iter().chain([s, t, d, sd, td, dd])).map_err(csv_err)?;
                }
                csv.flush()?;
                Ok(())
            })?;
            Ok(0)
        }
        SimplexCommand::K0 { source, n, amax, out } => {
            let (pi, _) = balayage_of(&source, amax.max(n))?;
            let table = ExtendedBalayageTable::build(&pi, amax.max(n))?;
            let values = k0_sequence(&table, n, n..=amax.max(n))?;
            emit(out.as_deref(), |w| {
                let mut csv = csv::Writer::from_writer(w);
                csv.write_record(["N", "a", "value", "value_decimal"]).map_err(csv_err)?;
                for (a, v) in &values {
                    let [x, xd] = rational_cells(v);
                    csv.write_record([n.to_string(), a.to_string(), x, xd]).map_err(csv_err)?;
                }
                csv.flush()?;
                Ok(())
            })?;
            Ok(0)
        }
        SimplexCommand::LimitScan { source, level, amax, out } => {
            let (pi, _) = balayage_of(&source, amax.max(level))?;
            emit_json(out.as_deref(), &limit_scan(&pi, level, 0..=amax)?)?;
            Ok(0)
        }
    }
}

fn smc_kernel(args: &SmcArgs) -> Result<(Balayage, SmcKernel)> {
    let seq = load_sequence(&args.vid)?;
    let (pi, k) = balayage_of(&args.source, args.levels.max(seq.max_state()) + 1)?;
    let nu = seq.resolve(&pi, k.as_ref(), args.levels)?;
    if let Some((level, state)) = crate::simplex::membership(&nu, &pi)?.first_violation {
        return Err(VmcError::MembershipViolation { level, state });
    }
    Ok((pi, SmcKernel::new(nu)?))
}

#[derive(Serialize)]
struct VerifyReport {
    replicates: usize,
    seed: u64,
    tolerance: f64,
    marginals: EmpiricalMarginals,
    backward: Vec<BackwardCheck>,
    unobserved_levels: Vec<usize>,
    pass: bool,
}

fn smc(cmd: SmcCommand) -> Result<i32> {
    match cmd {
        SmcCommand::Sample(args) => {
            let seed = resolve_seed(args.seed)?;
            let (_, kernel) = smc_kernel(&args)?;
            let samples = kernel.sample_many(args.levels, args.replicates, seed)?;
            emit(args.out.as_deref(), |w| {
                let mut csv = csv::Writer::from_writer(w);
                let header = std::iter::once("replicate".to_string()).chain((0..=args.levels).map(|n| format!("s_{n}")));
                csv.write_record(header).map_err(csv_err)?;
                for (r, s) in samples.iter().enumerate() {
                    let row = std::iter::once(r.to_string()).chain(s.entries().iter().map(|x| x.to_string()));
                    csv.write_record(row).map_err(csv_err)?;
                }
                csv.flush()?;
                Ok(())
            })?;
            Ok(0)
        }
        SmcCommand::Verify { common: args, tolerance } => {
            let seed = resolve_seed(args.seed)?;
            let (pi, kernel) = smc_kernel(&args)?;
            let samples = kernel.sample_many(args.levels, args.replicates, seed)?;
            let marginals = empirical_marginals(&samples, Some(kernel.marginals()))?;
            let mut backward = Vec::new();
            let mut unobserved_levels = Vec::new();
            for n in 0..args.levels {
                match backward_check(&samples, &pi, n) {
                    Ok(b) => backward.push(b),
                    Err(VmcError::ConditioningEventUnobserved { level }) => unobserved_levels.push(level),
                    Err(e) => return Err(e),
                }
            }
            let pass = marginals.max_tv().unwrap_or(0.0) <= tolerance;
            let report = VerifyReport { replicates: args.replicates, seed, tolerance, marginals, backward, unobserved_levels, pass };
            emit_json(args.out.as_deref(), &report)?;
            Ok(if pass { 0 } else { 1 })
        }
    }
}
