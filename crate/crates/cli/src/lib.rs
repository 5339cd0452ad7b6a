//! Commands behind the `lachesis` binary.

pub mod range;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use lachesis_core::export::{read_any, to_dot, write_log, write_main_chain, write_order, LogError};
use lachesis_core::node::Node;
use lachesis_core::{Consensus, ConsensusError, DagError, EventBlock, OperaChain};
use lachesis_oracle::cross_check;
use lachesis_sim::{run_traced, ConfigError, SimConfig, SimReport, World};

pub use range::{parse_seeds, FrameRange, RangeError};

/// Errors that stop a command before it can judge anything. They all map to
/// exit code 2.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Range(#[from] RangeError),
    #[error("frame {frame} is not in the chain (frames 1..={max})")]
    UnknownFrame { frame: u32, max: u32 },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Log { path: PathBuf, source: LogError },
    #[error("cannot rebuild the chain: {0}")]
    Chain(#[from] DagError),
    #[error("cannot rebuild consensus: {0}")]
    Consensus(#[from] ConsensusError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        2
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

/// Whether the command's checks passed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn exit_code(self) -> u8 {
        match self {
            Verdict::Pass => 0,
            Verdict::Fail => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Csv,
    Dot,
}

/// Network size and parameters needed to rebuild a chain from a log.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Model {
    pub n: usize,
    pub k: usize,
    pub h: u32,
}

impl Model {
    /// Guesses the model from the log itself: the highest creator id plus
    /// one, and the widest reference list.
    pub fn infer(events: &[EventBlock]) -> Model {
        let n = events.iter().map(|e| e.creator().index() + 1).max().unwrap_or(2).max(2);
        let k = events.iter().map(|e| e.parents().count()).max().unwrap_or(2).max(2);
        Model { n, k, h: 10 }
    }

    pub fn from_config(config: &SimConfig) -> Model {
        Model { n: config.n, k: config.k, h: config.h }
    }
}

pub fn read_events(path: &Path) -> Result<Vec<EventBlock>, CliError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    read_any(&bytes).map_err(|source| CliError::Log { path: path.to_path_buf(), source })
}

/// Rebuilds chain and consensus state by inserting `events` in log order.
pub fn rebuild(events: &[EventBlock], model: Model) -> Result<(OperaChain, Consensus), CliError> {
    let mut chain = OperaChain::new(model.n, model.k);
    let mut cs = Consensus::new(model.n, model.h);
    for ev in events {
        let idx = chain.insert(ev.clone())?;
        cs.on_insert(&chain, idx)?;
    }
    Ok((chain, cs))
}

/// Checks a non-empty frame range against the chain's frames.
pub fn check_frames(frames: &FrameRange, max: u32) -> Result<(), CliError> {
    if frames.is_empty() {
        return Ok(());
    }
    for frame in [*frames.0.start(), *frames.0.end()] {
        if frame == 0 || frame > max {
            return Err(CliError::UnknownFrame { frame, max });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Default)]
pub struct SimulateOptions {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub seeds: Option<Vec<u64>>,
    pub frames: Option<FrameRange>,
    pub format: Format,
}

/// One finished run, with the world kept for artifact export.
pub struct RunOutput {
    pub report: SimReport,
    pub world: World,
}

impl RunOutput {
    /// The lowest-id honest node, whose chain stands in for the network.
    pub fn reference(&self) -> &Node {
        let id = self.report.nodes.iter().find(|r| r.honest).map_or(0, |r| r.node.index());
        &self.world.actors[id].node
    }

    /// No audit violation, one honest order, and no fork event accepted.
    pub fn passed(&self) -> bool {
        self.report.violations.is_empty() && self.report.honest_agree() && self.report.fork_clothos.is_empty()
    }

    pub fn summary(&self) -> String {
        let r = &self.report;
        let node = &r.nodes[self.reference().id().index()];
        format!(
            "seed {}: n={} k={} events={} frames={} atropos={} finalized={} forks={} violations={} agree={} trace={}",
            r.config.seed,
            r.config.n,
            r.config.k,
            r.events_created,
            node.frames,
            node.atropos,
            node.finalized,
            r.forks.len(),
            r.violations.len(),
            r.honest_agree(),
            &r.trace_hash[..16],
        )
    }
}

pub fn simulate_one(config: &SimConfig) -> Result<RunOutput, CliError> {
    let (report, world) = run_traced(config, true)?;
    Ok(RunOutput { report, world })
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

/// Writes every artifact of one run into `dir`.
pub fn write_artifacts(run: &RunOutput, dir: &Path, frames: Option<&FrameRange>) -> Result<(), CliError> {
    fs::create_dir_all(dir.join("dot")).map_err(io_err(dir))?;
    let node = run.reference();
    let (chain, cs) = (node.chain(), node.consensus());

    let path = dir.join("report.json");
    let mut w = create(&path)?;
    serde_json::to_writer_pretty(&mut w, &run.report).map_err(|e| io_err(&path)(e.into()))?;
    writeln!(w).and_then(|_| w.flush()).map_err(io_err(&path))?;

    let path = dir.join("trace.jsonl");
    let mut w = create(&path)?;
    for entry in run.world.trace().unwrap_or_default() {
        serde_json::to_writer(&mut w, entry).map_err(|e| io_err(&path)(e.into()))?;
        writeln!(w).map_err(io_err(&path))?;
    }
    w.flush().map_err(io_err(&path))?;

    let path = dir.join("stats.csv");
    let w = create(&path)?;
    run.report.write_csv(w).map_err(|e| io_err(&path)(io::Error::other(e)))?;

    let path = dir.join("events.log");
    let mut w = create(&path)?;
    write_log(&mut w, chain.iter()).and_then(|_| w.flush()).map_err(io_err(&path))?;

    let path = dir.join("main_chain.jsonl");
    let mut w = create(&path)?;
    write_main_chain(&mut w, cs.main_chain()).and_then(|_| w.flush()).map_err(io_err(&path))?;

    let path = dir.join("order.jsonl");
    let mut w = create(&path)?;
    write_order(&mut w, cs.order()).and_then(|_| w.flush()).map_err(io_err(&path))?;

    let wanted = frames.map_or(1..=cs.max_frame(), |f| f.0.clone());
    for f in wanted {
        if f == 0 || f > cs.max_frame() {
            continue;
        }
        let path = dir.join("dot").join(format!("frame-{f:04}.dot"));
        fs::write(&path, to_dot(chain, Some(cs), Some(f..=f))).map_err(io_err(&path))?;
    }
    Ok(())
}

/// Runs seeds on scoped threads, keeping results in seed order.
pub fn run_seeds(base: &SimConfig, seeds: &[u64]) -> Vec<Result<RunOutput, CliError>> {
    let workers = std::thread::available_parallelism().map_or(1, |p| p.get()).min(seeds.len().max(1));
    let mut results: Vec<Option<Result<RunOutput, CliError>>> = seeds.iter().map(|_| None).collect();
    let chunk = seeds.len().div_ceil(workers).max(1);
    std::thread::scope(|s| {
        for (slots, seeds) in results.chunks_mut(chunk).zip(seeds.chunks(chunk)) {
            s.spawn(move || {
                for (slot, &seed) in slots.iter_mut().zip(seeds) {
                    *slot = Some(simulate_one(&SimConfig { seed, ..base.clone() }));
                }
            });
        }
    });
    results.into_iter().map(|r| r.expect("every seed ran")).collect()
}

/// `simulate`: runs the configured seeds, writes artifacts, and fails when
/// any run does not pass.
pub fn simulate(opts: &SimulateOptions, stdout: &mut impl Write, stderr: &mut impl Write) -> Result<Verdict, CliError> {
    let mut config = SimConfig::load(&opts.config)?;
    if let Some(seed) = opts.seed {
        config.seed = seed;
    }
    config.validate()?;
    let seeds = opts.seeds.clone().unwrap_or_else(|| vec![config.seed]);
    let many = seeds.len() > 1;
    let mut verdict = Verdict::Pass;
    for result in run_seeds(&config, &seeds) {
        let run = result?;
        let _ = writeln!(stderr, "{}", run.summary());
        if !run.passed() {
            verdict = Verdict::Fail;
            for v in run.report.violations.iter().take(5) {
                let _ = writeln!(stderr, "  {:?} between {} and {}: {}", v.kind, v.nodes.0, v.nodes.1, v.detail);
            }
        }
        if !run.report.fork_clothos.is_empty() {
            let _ = writeln!(stderr, "  {} fork events accepted as Clotho", run.report.fork_clothos.len());
        }
        match &opts.out {
            Some(out) => {
                let dir = if many { out.join(format!("seed-{}", run.report.config.seed)) } else { out.clone() };
                write_artifacts(&run, &dir, opts.frames.as_ref())?;
            }
            None if !many => print_artifact(&run, opts, stdout)?,
            None => {}
        }
    }
    Ok(verdict)
}

fn print_artifact(run: &RunOutput, opts: &SimulateOptions, stdout: &mut impl Write) -> Result<(), CliError> {
    let fail = |e: io::Error| CliError::Io { path: PathBuf::from("<stdout>"), source: e };
    match opts.format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut *stdout, &run.report).map_err(|e| fail(e.into()))?;
            writeln!(stdout).map_err(fail)?;
        }
        Format::Csv => run.report.write_csv(&mut *stdout).map_err(|e| fail(io::Error::other(e)))?,
        Format::Dot => {
            let node = run.reference();
            if let Some(frames) = &opts.frames {
                check_frames(frames, node.consensus().max_frame())?;
            }
            let frames = opts.frames.as_ref().map(|f| f.0.clone());
            write!(stdout, "{}", to_dot(node.chain(), Some(node.consensus()), frames)).map_err(fail)?;
        }
    }
    Ok(())
}

/// `verify`: rebuilds the chain from a log and runs every oracle check.
pub fn verify(log: &Path, model: Option<Model>, stdout: &mut impl Write) -> Result<Verdict, CliError> {
    let events = read_events(log)?;
    let model = model.unwrap_or_else(|| Model::infer(&events));
    match cross_check(&events, model.n, model.k, model.h) {
        Ok(report) => {
            let _ = writeln!(
                stdout,
                "ok: {} events, {} frames, {} ordered, dom sets {}",
                report.events,
                report.frames,
                report.ordered,
                if report.dom_sets_checked { "checked" } else { "skipped (forked chain)" },
            );
            for (x, y) in &report.forks {
                let _ = writeln!(stdout, "fork: {} {}", x.short(), y.short());
            }
            Ok(Verdict::Pass)
        }
        Err(failure) => {
            let _ = writeln!(stdout, "FAILED {failure}");
            Ok(Verdict::Fail)
        }
    }
}

/// `export-dot`: renders a log, optionally restricted to a frame range.
pub fn export_dot(log: &Path, model: Option<Model>, frames: Option<&FrameRange>) -> Result<String, CliError> {
    let events = read_events(log)?;
    let model = model.unwrap_or_else(|| Model::infer(&events));
    let (chain, cs) = rebuild(&events, model)?;
    if let Some(frames) = frames {
        check_frames(frames, cs.max_frame())?;
    }
    Ok(to_dot(&chain, Some(&cs), frames.map(|f| f.0.clone())))
}
