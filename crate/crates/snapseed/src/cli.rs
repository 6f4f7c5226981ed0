//! Command-line front end. Every verb reads its inputs, runs one analysis
//! and prints a report; `--out` always receives the structured form.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use snapseed_core::analyses::{
    check_property, compare_path_sets, emit_exploits, ispe_config, ispe_verdict, run_mode, AnalysisError, EmitConfig,
    ExploitManifest, UcseComparison,
};
use snapseed_core::concrete::{dump_snapshot, replay, run_init, InitError, InitInputs, ReplayError};
use snapseed_core::host::{ExternHost, NoHost};
use snapseed_core::isa::{render, CmpOp, Location, Program};
use snapseed_core::snapshot::{SnapshotIndex, SnapshotQuery};
use snapseed_core::symbolic::{
    explore, Budget, Exploration, ExploreConfig, ExploreError, Mode, ParamSpec, Property, TestDriver,
};

use crate::extern_host::ProcessHost;
use crate::files::{self, FileError};
use crate::report;

pub const SEED_ENV: &str = "SNAPSEED_SEED";

/// Exit status for a run that found a violation of the checked kind.
pub const EXIT_FINDING: u8 = 1;
pub const EXIT_ERROR: u8 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    File(#[from] FileError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Explore(#[from] ExploreError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Init(#[from] InitError),
    #[error("{0}")]
    Usage(String),
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Debug, Parser)]
#[command(name = "snapseed", about = "Snapshot-seeded symbolic execution of service entrypoints")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Structured,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Seeded,
    Ucse,
}

#[derive(Debug, Args)]
pub struct Output {
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
    /// Also write the structured report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Assembly sources, concatenated in the order given.
    #[arg(long = "prog", required = true, num_args = 1..)]
    pub prog: Vec<PathBuf>,
    #[arg(long = "snap", required = true, num_args = 1..)]
    pub snap: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "seeded")]
    pub mode: ModeArg,
    /// Overridden by the SNAPSEED_SEED environment variable.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = Budget::default().max_depth)]
    pub max_depth: u64,
    #[arg(long, default_value_t = Budget::default().max_states)]
    pub max_states: usize,
    #[arg(long, default_value_t = Budget::default().solver_steps)]
    pub solver_steps: u64,
    #[arg(long)]
    pub check_invariants: bool,
    /// Command line of the delegate extern host.
    #[arg(long)]
    pub extern_host: Option<String>,
    /// Independent explorations run on this many threads.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Assemble and print the normalized listing.
    Asm {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run initialization and dump the heap snapshot.
    Init {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long)]
        apps: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        extern_host: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Explore one entrypoint.
    Explore {
        #[command(flatten)]
        run: RunArgs,
        /// Driver file, or an entrypoint name with all parameters symbolic.
        #[arg(long)]
        driver: String,
        /// `Class.method:label` or `Class.method@pc`.
        #[arg(long)]
        target: Option<String>,
        #[arg(long)]
        dump_symbolic_inputs: bool,
    },
    /// Compare the permissions two entrypoints need to reach a statement.
    Ispe {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        ep1: String,
        #[arg(long)]
        ep2: String,
        #[arg(long)]
        target: String,
    },
    /// Report paths on which a terminal-state property holds.
    PropCheck {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        driver: String,
        /// `true`, `false`, `ret <op> N` or `Class.field <op> N`.
        #[arg(long)]
        property: String,
    },
    /// Solve path conditions into exploit manifests and judge legality.
    EmitExploits {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        driver: String,
        #[arg(long)]
        apps: PathBuf,
        #[arg(long)]
        property: Option<String>,
        #[arg(long, default_value_t = EmitConfig::default().models_per_path)]
        models: usize,
        /// Write each manifest to its own file here, ready for `replay`.
        #[arg(long)]
        manifest_dir: Option<PathBuf>,
    },
    /// Replay a manifest concretely and compare branch traces.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        /// Override the program recorded in the manifest.
        #[arg(long = "prog", num_args = 1..)]
        prog: Vec<PathBuf>,
        #[arg(long)]
        snap: Option<PathBuf>,
        #[arg(long)]
        extern_host: Option<String>,
        #[command(flatten)]
        output: Output,
    },
    /// Compare canonical path-condition sets across snapshots.
    SnapDiff {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        driver: String,
    },
    /// Run seeded and ucse exploration under one budget.
    CompareUcse {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        driver: String,
    },
}

/// Manifest as written by `emit-exploits --manifest-dir`: the manifest
/// plus the inputs needed to replay it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestFile {
    pub program: Vec<PathBuf>,
    pub snapshot: PathBuf,
    #[serde(flatten)]
    pub manifest: ExploitManifest,
}

/// Parsed and loaded inputs shared by the checker verbs.
struct Session {
    program: Program,
    snaps: Vec<SnapshotIndex>,
    prog_paths: Vec<PathBuf>,
    snap_paths: Vec<PathBuf>,
    config: ExploreConfig,
    extern_host: Option<String>,
    jobs: usize,
}

fn effective_seed(flag: u64) -> Result<u64, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map_err(|_| usage(format!("{} must be an unsigned integer, got `{}`", SEED_ENV, s))),
        Err(_) => Ok(flag),
    }
}

fn make_host(cmd: Option<&str>) -> Result<Box<dyn ExternHost>, CliError> {
    match cmd {
        None => Ok(Box::new(NoHost)),
        Some(c) => ProcessHost::spawn(c)
            .map(|h| Box::new(h) as Box<dyn ExternHost>)
            .map_err(|e| usage(format!("cannot start extern host `{}`: {}", c, e))),
    }
}

impl Session {
    fn load(run: &RunArgs) -> Result<Session, CliError> {
        let program = files::load_program(&run.prog)?;
        let snaps = run.snap.iter().map(|p| files::load_snapshot(p)).collect::<Result<Vec<_>, _>>()?;
        let config = ExploreConfig {
            mode: match run.mode {
                ModeArg::Seeded => Mode::Seeded,
                ModeArg::Ucse => Mode::Ucse,
            },
            budget: Budget {
                max_depth: run.max_depth,
                max_states: run.max_states,
                solver_steps: run.solver_steps,
            },
            seed: effective_seed(run.seed)?,
            check_invariants: run.check_invariants,
            ..ExploreConfig::default()
        };
        Ok(Session {
            program,
            snaps,
            prog_paths: run.prog.clone(),
            snap_paths: run.snap.clone(),
            config,
            extern_host: run.extern_host.clone(),
            jobs: run.jobs.max(1),
        })
    }

    fn single_snapshot(&self) -> Result<&SnapshotIndex, CliError> {
        match self.snaps.as_slice() {
            [s] => Ok(s),
            _ => Err(usage(format!("this verb takes one snapshot, got {}", self.snaps.len()))),
        }
    }

    fn host(&self) -> Result<Box<dyn ExternHost>, CliError> {
        make_host(self.extern_host.as_deref())
    }

    fn driver(&self, spec: &str) -> Result<TestDriver, CliError> {
        resolve_driver(&self.program, self.snaps.first().expect("at least one snapshot"), spec)
    }

    fn explore_one(
        &self,
        snap: &SnapshotIndex,
        driver: &TestDriver,
        config: ExploreConfig,
    ) -> Result<Exploration, CliError> {
        let mut host = self.host()?;
        Ok(explore(&self.program, snap, driver, config, host.as_mut())?)
    }

    /// Run `jobs` independent explorations, in parallel when `--jobs` > 1.
    /// Results keep the input order.
    fn explore_all(&self, jobs: &[(&SnapshotIndex, &TestDriver, ExploreConfig)]) -> Result<Vec<Exploration>, CliError> {
        if self.jobs == 1 || jobs.len() < 2 {
            return jobs.iter().map(|(s, d, c)| self.explore_one(s, d, c.clone())).collect();
        }
        let next = AtomicUsize::new(0);
        let results: Mutex<Vec<Option<Result<Exploration, CliError>>>> =
            Mutex::new((0..jobs.len()).map(|_| None).collect());
        std::thread::scope(|scope| {
            for _ in 0..self.jobs.min(jobs.len()) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some((s, d, c)) = jobs.get(i) else { break };
                    let r = self.explore_one(s, d, c.clone());
                    results.lock().unwrap()[i] = Some(r);
                });
            }
        });
        results.into_inner().unwrap().into_iter().map(|r| r.expect("every job ran")).collect()
    }
}

/// A driver file, `Service.method`, or a bare method name looked up on
/// the snapshot's service roots. Named entrypoints get all-symbolic
/// parameters.
pub fn resolve_driver(program: &Program, snapshot: &SnapshotIndex, spec: &str) -> Result<TestDriver, CliError> {
    let path = Path::new(spec);
    if path.is_file() {
        return Ok(files::load_driver(path)?);
    }
    let (service, method) = match spec.rsplit_once('.') {
        Some((s, m)) => (Some(s), m),
        None => (None, spec),
    };
    let roots: Vec<String> = match service {
        Some(s) => vec![s.to_string()],
        None => snapshot.roots().keys().cloned().collect(),
    };
    let mut found = Vec::new();
    for root in roots {
        let Ok(id) = snapshot.find_root(&root) else { continue };
        let Ok(obj) = snapshot.get_object(id) else { continue };
        let Ok(m) = program.resolve_dispatch(&obj.class, method) else { continue };
        let def = program.method(m);
        if def.is_static {
            continue;
        }
        let params = def.params.iter().map(|(_, t)| ParamSpec::Symbolic(t.clone())).collect();
        found.push(TestDriver {
            service: root,
            class: None,
            entrypoint: method.to_string(),
            params,
        });
    }
    match found.len() {
        1 => Ok(found.pop().unwrap()),
        0 => Err(usage(format!("`{}` is neither a driver file nor an entrypoint of a snapshot service", spec))),
        _ => Err(usage(format!(
            "entrypoint `{}` exists on several services ({}); write Service.method",
            spec,
            found.iter().map(|d| d.service.as_str()).collect::<Vec<_>>().join(", ")
        ))),
    }
}

pub fn parse_property(text: &str) -> Result<Property, CliError> {
    let t = text.trim();
    match t {
        "true" => return Ok(Property::True),
        "false" => return Ok(Property::False),
        _ => {}
    }
    let parts: Vec<&str> = t.split_whitespace().collect();
    let [lhs, op, rhs] = parts.as_slice() else {
        return Err(usage(format!("cannot parse property `{}`", text)));
    };
    let ops = [CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Ge, CmpOp::Gt, CmpOp::Le];
    let op = *ops
        .iter()
        .find(|o| o.symbol() == *op)
        .ok_or_else(|| usage(format!("unknown comparison `{}`", op)))?;
    let value: i32 = rhs.parse().map_err(|_| usage(format!("`{}` is not an integer", rhs)))?;
    if *lhs == "ret" {
        return Ok(Property::Return { op, value });
    }
    let (class, field) = lhs
        .rsplit_once('.')
        .ok_or_else(|| usage(format!("`{}` is neither `ret` nor Class.field", lhs)))?;
    Ok(Property::Static {
        class: class.into(),
        field: field.into(),
        op,
        value,
    })
}

fn locate(program: &Program, spec: &str) -> Result<Location, CliError> {
    program
        .locate(spec)
        .map_err(|e| usage(format!("bad target `{}`: {}", spec, e)))
}

/// Print the chosen rendering and write the structured one to `--out`.
fn emit<T: Serialize>(output: &Output, doc: &T, text: String) -> Result<(), CliError> {
    let json = files::to_json(doc);
    match output.format {
        Format::Text => print!("{}", text),
        Format::Structured => print!("{}", json),
    }
    if let Some(p) = &output.out {
        files::write_text(p, &json)?;
    }
    Ok(())
}

fn absolute(p: &Path) -> PathBuf {
    std::fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf())
}

/// Run one command; the result is the process exit status.
pub fn run(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Asm { files: paths, out } => {
            let program = files::load_program(&paths)?;
            let listing = render(&program);
            match out {
                Some(p) => files::write_text(&p, &listing)?,
                None => print!("{}", listing),
            }
            Ok(0)
        }
        Command::Init {
            files: paths,
            apps,
            config,
            extern_host,
            out,
        } => {
            let program = files::load_program(&paths)?;
            let inputs = InitInputs {
                apps: files::load_apps(&apps)?,
                config: match config {
                    Some(c) => files::load_config(&c)?,
                    None => Default::default(),
                },
            };
            let mut host = make_host(extern_host.as_deref())?;
            let heap = run_init(&program, &inputs, host.as_mut())?;
            let doc = dump_snapshot(&heap, &program, &inputs.apps);
            files::write_text(&out, &files::to_json(&doc))?;
            Ok(0)
        }
        Command::Explore {
            run,
            driver,
            target,
            dump_symbolic_inputs,
        } => {
            let s = Session::load(&run)?;
            let snap = s.single_snapshot()?;
            let driver = s.driver(&driver)?;
            let config = ExploreConfig {
                target: target.map(|t| locate(&s.program, &t)).transpose()?,
                ..s.config.clone()
            };
            let ex = s.explore_one(snap, &driver, config)?;
            let doc = report::exploration_doc(&driver.service, &driver.entrypoint, &ex);
            emit(&run.output, &doc, report::exploration_text(&doc, dump_symbolic_inputs))?;
            Ok(0)
        }
        Command::Ispe { run, ep1, ep2, target } => {
            let s = Session::load(&run)?;
            let snap = s.single_snapshot()?;
            let (d1, d2) = (s.driver(&ep1)?, s.driver(&ep2)?);
            let sensitive = locate(&s.program, &target)?;
            let config = ispe_config(&s.program, [&d1, &d2], sensitive, &s.config)?;
            let mut exs = s.explore_all(&[(snap, &d1, config.clone()), (snap, &d2, config)])?;
            let b = exs.pop().unwrap();
            let a = exs.pop().unwrap();
            let outcome = ispe_verdict(&s.program, [&d1, &d2], sensitive, [a, b]);
            emit(&run.output, &outcome.verdict, report::ispe_text(&outcome.verdict))?;
            Ok(if outcome.verdict.inconsistent { EXIT_FINDING } else { 0 })
        }
        Command::PropCheck { run, driver, property } => {
            let s = Session::load(&run)?;
            let snap = s.single_snapshot()?;
            let driver = s.driver(&driver)?;
            let prop = parse_property(&property)?;
            let mut host = s.host()?;
            let out = check_property(&s.program, snap, &driver, prop, &s.config, host.as_mut())?;
            let doc = report::PropertyDoc {
                property: property.trim().to_string(),
                violations: out.violations.iter().map(report::path_doc).collect(),
                stats: (&out.stats).into(),
            };
            emit(&run.output, &doc, report::property_text(&doc))?;
            Ok(if doc.violations.is_empty() { 0 } else { EXIT_FINDING })
        }
        Command::EmitExploits {
            run,
            driver,
            apps,
            property,
            models,
            manifest_dir,
        } => {
            let s = Session::load(&run)?;
            let snap = s.single_snapshot()?;
            let driver = s.driver(&driver)?;
            let registry = files::load_apps(&apps)?;
            let config = ExploreConfig {
                property: property.as_deref().map(parse_property).transpose()?,
                ..s.config.clone()
            };
            let ex = s.explore_one(snap, &driver, config)?;
            let emit_config = EmitConfig {
                models_per_path: models,
                seed: s.config.seed,
                solver_steps: s.config.budget.solver_steps,
            };
            let (manifests, stats) = emit_exploits(&ex.reports, &driver, &registry, snap, &emit_config)?;
            if let Some(dir) = &manifest_dir {
                std::fs::create_dir_all(dir).map_err(|source| FileError::Io {
                    path: dir.clone(),
                    source,
                })?;
                for m in &manifests {
                    let file = ManifestFile {
                        program: s.prog_paths.iter().map(|p| absolute(p)).collect(),
                        snapshot: absolute(&s.snap_paths[0]),
                        manifest: m.clone(),
                    };
                    let name = format!("manifest-{}-{}.json", m.path, m.model_index);
                    files::write_text(&dir.join(name), &files::to_json(&file))?;
                }
            }
            let doc = report::EmitDoc { stats, manifests };
            emit(&run.output, &doc, report::emit_text(&doc))?;
            Ok(0)
        }
        Command::Replay {
            manifest,
            prog,
            snap,
            extern_host,
            output,
        } => {
            let file: ManifestFile = files::read_json(&manifest)?;
            let prog = if prog.is_empty() { file.program.clone() } else { prog };
            let program = files::load_program(&prog)?;
            let index = files::load_snapshot(snap.as_deref().unwrap_or(&file.snapshot))?;
            let mut host = make_host(extern_host.as_deref())?;
            let outcome = replay(&program, &index, &file.manifest.replay_request(), host.as_mut())?;
            let recorded = &file.manifest.trace;
            let divergence = (0..recorded.len().max(outcome.trace.len()))
                .find(|&i| recorded.get(i) != outcome.trace.get(i));
            let doc = report::ReplayDoc {
                status: outcome.status.clone(),
                ret: outcome.ret.map(|v| format!("{:?}", v)),
                trace_match: divergence.is_none(),
                trace: outcome.trace,
                divergence,
            };
            emit(&output, &doc, report::replay_text(&doc))?;
            Ok(if doc.trace_match { 0 } else { EXIT_FINDING })
        }
        Command::SnapDiff { run, driver } => {
            let s = Session::load(&run)?;
            let driver = s.driver(&driver)?;
            let jobs: Vec<_> = s.snaps.iter().map(|snap| (snap, &driver, s.config.clone())).collect();
            let exs = s.explore_all(&jobs)?;
            let r = compare_path_sets(&driver, &exs)?;
            emit(&run.output, &r, report::consistency_text(&r))?;
            Ok(if r.equal { 0 } else { EXIT_FINDING })
        }
        Command::CompareUcse { run, driver } => {
            let s = Session::load(&run)?;
            let snap = s.single_snapshot()?;
            let driver = s.driver(&driver)?;
            let mut times = Vec::new();
            let mut metrics = Vec::new();
            for mode in [Mode::Seeded, Mode::Ucse] {
                let mut host = s.host()?;
                let t = Instant::now();
                metrics.push(run_mode(&s.program, snap, &driver, mode, &s.config, host.as_mut())?);
                times.push(t.elapsed());
            }
            let c = UcseComparison {
                seeded: metrics[0],
                ucse: metrics[1],
            };
            // Wall time stays out of the structured report so that reruns
            // produce identical files.
            let mut text = report::ucse_text(&c);
            text.push_str(&format!(
                "wall time: seeded {:.1} ms, ucse {:.1} ms\n",
                times[0].as_secs_f64() * 1e3,
                times[1].as_secs_f64() * 1e3
            ));
            emit(&run.output, &c, text)?;
            Ok(0)
        }
    }
}
