//! `mmm`: command-line front end for finite marked metric measure spaces.
//!
//! Every subcommand is deterministic given its inputs and seed. With
//! `--out f` the result goes to `f` and a manifest to `f.manifest.json`
//! (or `--manifest`); `mmm replay` re-runs a manifest and compares output
//! digests.
//!
//! Exit status: 0 on success, 1 on a domain error (a JSON object
//! `{"error", "message", ...}` on stderr), 2 on a usage error.

mod commands;
mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use manifest::{sha256_hex, sidecar, FileDigest, Manifest};

#[derive(Parser, Debug)]
#[command(name = "mmm", version, about = "Computations on finite marked metric measure spaces")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Global {
    /// Random seed.
    #[arg(long, global = true, env = "MMM_SEED", default_value_t = 0)]
    seed: u64,
    /// Worker threads; defaults to the available cores. Results do not
    /// depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write the primary output here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Manifest path; defaults to `<out>.manifest.json` when `--out` is set.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Clone)]
enum Command {
    /// Check metric axioms and weight normalization of a space file.
    Validate {
        #[arg(long)]
        space: PathBuf,
        /// Relative tolerance for the metric axioms.
        #[arg(long, default_value_t = mmm::space::DEFAULT_TOLERANCE)]
        tolerance: f64,
    },
    /// Draw marked distance matrices, one JSON line per sample.
    Sample {
        #[arg(long)]
        space: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        count: usize,
    },
    /// Evaluate a polynomial panel on a space (CSV).
    PolyEval {
        #[arg(long)]
        space: PathBuf,
        #[command(flatten)]
        panel: PanelArgs,
        /// Monte Carlo samples per polynomial.
        #[arg(long, default_value_t = 100_000)]
        mc: usize,
        /// Enumeration budget for exact values.
        #[arg(long, default_value_t = mmm::dmat::EXACT_LAW_BUDGET)]
        budget: u128,
    },
    /// Prohorov distance between two measures on a shared finite metric.
    Prohorov {
        /// Distance matrix: an array of rows, or `{"n", "distances"}` with
        /// the strict upper triangle.
        #[arg(long)]
        metric: PathBuf,
        /// Measure: an array of masses, or `{"atoms", "probs"}`.
        #[arg(long)]
        p: PathBuf,
        #[arg(long)]
        q: PathBuf,
    },
    /// Marked Gromov-Prohorov distance bounds between two spaces.
    Dist {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Also compute the exact value (discrete marks only).
        #[arg(long)]
        exact: bool,
        /// Candidate budget of the upper-bound search.
        #[arg(long, default_value_t = mmm::mgp::DEFAULT_UPPER_BUDGET)]
        budget: usize,
        #[arg(long, default_value = "identity-ish")]
        strategy: mmm::mgp::Strategy,
        /// Clique budget of the exact search.
        #[arg(long, default_value_t = mmm::mgp::DEFAULT_EXACT_BUDGET)]
        exact_budget: u128,
    },
    /// Tightness diagnostics for a family of spaces (CSV curves and verdicts).
    Tightness {
        /// Directory of space files; every `*.json` is a family member.
        #[arg(long)]
        spaces: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        eps: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        delta: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16")]
        distance_grid: Vec<f64>,
        #[arg(long, default_value_t = mmm::compact::DEFAULT_THRESHOLD)]
        modulus_threshold: f64,
        #[arg(long, default_value_t = mmm::compact::DEFAULT_THRESHOLD)]
        tail_threshold: f64,
        /// Write the verdicts JSON here instead of a trailing `# verdicts:`
        /// line.
        #[arg(long)]
        verdicts: Option<PathBuf>,
    },
    /// Generate a random space.
    Simulate {
        #[arg(long, value_enum)]
        model: Model,
        /// Model parameters as JSON; the seed always comes from `--seed`.
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Permutation test of equal order-n distance matrix distributions.
    Test {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = 3)]
        n: usize,
        /// Samples per side.
        #[arg(long, default_value_t = 500)]
        m: usize,
        #[arg(long, default_value_t = 999)]
        perms: usize,
    },
    /// Panel values along a sequence of spaces, with gaps to a target (CSV).
    Converge {
        /// Directory of space files, taken in file-name order.
        #[arg(long)]
        seq: PathBuf,
        /// Target space file.
        #[arg(long, conflicts_with = "target_values")]
        target: Option<PathBuf>,
        /// Target panel values, one per polynomial.
        #[arg(long, value_delimiter = ',')]
        target_values: Option<Vec<f64>>,
        #[command(flatten)]
        panel: PanelArgs,
        /// Monte Carlo samples when a law is too large to enumerate.
        #[arg(long, default_value_t = 10_000)]
        mc: usize,
    },
    /// Re-run a manifest and compare output digests.
    Replay {
        /// Manifest file written by an earlier run.
        path: PathBuf,
    },
}

#[derive(Args, Debug, Clone)]
struct PanelArgs {
    #[arg(long, value_enum, default_value_t = Panel::Default)]
    panel: Panel,
    /// Largest polynomial degree in the panel.
    #[arg(long, default_value_t = 3)]
    n_max: usize,
    /// Number of panel members.
    #[arg(long, default_value_t = 5)]
    panel_size: usize,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Panel {
    /// Products of exponential distance kernels and mark functions.
    Default,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Model {
    Kingman,
    Moran,
    Cloud,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Validate { .. } => "validate",
            Command::Sample { .. } => "sample",
            Command::PolyEval { .. } => "poly-eval",
            Command::Prohorov { .. } => "prohorov",
            Command::Dist { .. } => "dist",
            Command::Tightness { .. } => "tightness",
            Command::Simulate { .. } => "simulate",
            Command::Test { .. } => "test",
            Command::Converge { .. } => "converge",
            Command::Replay { .. } => "replay",
        }
    }
}

/// A failure reported as `{"error": kind, "message": ..., ...details}`.
#[derive(Debug)]
pub struct Failure {
    kind: String,
    message: String,
    details: Option<(String, Value)>,
}

impl Failure {
    pub fn new(kind: impl Into<String>, message: impl Into<String>) -> Failure {
        Failure {
            kind: kind.into(),
            message: message.into(),
            details: None,
        }
    }

    pub fn with(mut self, key: &str, value: Value) -> Failure {
        self.details = Some((key.into(), value));
        self
    }

    pub fn io(path: &Path, e: std::io::Error) -> Failure {
        Failure::new("io", format!("{}: {e}", path.display()))
    }

    fn to_json(&self) -> Value {
        let mut v = json!({"error": self.kind, "message": self.message});
        if let Some((k, d)) = &self.details {
            v[k] = d.clone();
        }
        v
    }
}

impl From<mmm::Error> for Failure {
    fn from(e: mmm::Error) -> Failure {
        Failure::new(e.kind(), e.to_string())
    }
}

pub type Outcome<T> = Result<T, Failure>;

/// Everything a command produces, held in memory until the run succeeds.
#[derive(Default)]
pub struct Artifacts {
    pub primary: Vec<u8>,
    /// Additional files named by command flags.
    pub extra: Vec<(PathBuf, Vec<u8>)>,
}

/// Seed plus a record of every input file read.
pub struct Context {
    pub seed: u64,
    inputs: Vec<FileDigest>,
}

impl Context {
    pub fn new(seed: u64) -> Context {
        Context {
            seed,
            inputs: Vec::new(),
        }
    }

    pub fn read(&mut self, path: &Path) -> Outcome<String> {
        let bytes = fs::read(path).map_err(|e| Failure::io(path, e))?;
        self.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
        String::from_utf8(bytes).map_err(|e| Failure::new("parse", format!("{}: {e}", path.display())))
    }

    /// `*.json` files of a directory in file-name order, manifests excluded.
    pub fn list_json(&self, dir: &Path) -> Outcome<Vec<PathBuf>> {
        let mut files: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| Failure::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json"))
            .filter(|p| !p.to_string_lossy().ends_with(".manifest.json"))
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(Failure::new("empty", format!("no .json files in {}", dir.display())));
        }
        Ok(files)
    }
}

fn execute(command: &Command, ctx: &mut Context) -> Outcome<Artifacts> {
    match command {
        Command::Validate { space, tolerance } => commands::validate(ctx, space, *tolerance),
        Command::Sample { space, n, count } => commands::sample(ctx, space, *n, *count),
        Command::PolyEval {
            space,
            panel,
            mc,
            budget,
        } => commands::poly_eval(ctx, space, panel, *mc, *budget),
        Command::Prohorov { metric, p, q } => commands::prohorov(ctx, metric, p, q),
        Command::Dist {
            a,
            b,
            exact,
            budget,
            strategy,
            exact_budget,
        } => {
            let opts = mmm::mgp::MgpOptions {
                strategy: *strategy,
                budget: *budget,
                seed: ctx.seed,
                exact: *exact,
                exact_budget: *exact_budget,
            };
            commands::dist(ctx, a, b, &opts)
        }
        Command::Tightness {
            spaces,
            eps,
            delta,
            distance_grid,
            modulus_threshold,
            tail_threshold,
            verdicts,
        } => {
            let mut config = mmm::compact::TightnessConfig::new(eps.clone(), delta.clone(), distance_grid.clone());
            config.modulus_threshold = *modulus_threshold;
            config.tail_threshold = *tail_threshold;
            commands::tightness(ctx, spaces, &config, verdicts.as_deref())
        }
        Command::Simulate { model, params } => commands::simulate(ctx, *model, params.as_deref()),
        Command::Test { a, b, n, m, perms } => commands::two_sample(ctx, a, b, *n, *m, *perms),
        Command::Converge {
            seq,
            target,
            target_values,
            panel,
            mc,
        } => commands::converge(ctx, seq, target.as_deref(), target_values.as_deref(), panel, *mc),
        Command::Replay { .. } => Err(Failure::new("invalid_parameter", "a manifest cannot record a replay")),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Outcome<()> {
    fs::write(path, bytes).map_err(|e| Failure::io(path, e))
}

fn output_digests(global: &Global, artifacts: &Artifacts) -> Vec<FileDigest> {
    let primary = FileDigest {
        path: global
            .out
            .as_ref()
            .map_or_else(|| "-".to_string(), |p| p.display().to_string()),
        sha256: sha256_hex(&artifacts.primary),
    };
    std::iter::once(primary)
        .chain(artifacts.extra.iter().map(|(p, b)| FileDigest {
            path: p.display().to_string(),
            sha256: sha256_hex(b),
        }))
        .collect()
}

fn run(cli: Cli, args: Vec<String>) -> Outcome<()> {
    if let Some(threads) = cli.global.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Failure::new("invalid_parameter", e.to_string()))?;
    }
    if let Command::Replay { path } = &cli.command {
        return replay(path);
    }
    let mut ctx = Context::new(cli.global.seed);
    let artifacts = execute(&cli.command, &mut ctx)?;
    match &cli.global.out {
        Some(out) => write_file(out, &artifacts.primary)?,
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(&artifacts.primary)
                .and_then(|_| stdout.flush())
                .map_err(|e| Failure::new("io", e.to_string()))?;
        }
    }
    for (path, bytes) in &artifacts.extra {
        write_file(path, bytes)?;
    }
    let manifest_path = cli
        .global
        .manifest
        .clone()
        .or_else(|| cli.global.out.as_deref().map(sidecar));
    if let Some(path) = manifest_path {
        let outputs = output_digests(&cli.global, &artifacts);
        let m = Manifest::new(cli.command.name(), args, ctx.seed, ctx.inputs, outputs);
        let text = serde_json::to_string_pretty(&m).expect("manifest serializes");
        write_file(&path, format!("{text}\n").as_bytes())?;
    }
    Ok(())
}

fn replay(path: &Path) -> Outcome<()> {
    let text = fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    let recorded: Manifest =
        serde_json::from_str(&text).map_err(|e| Failure::new("parse", format!("{}: {e}", path.display())))?;
    if recorded.schema != manifest::MANIFEST_SCHEMA {
        return Err(Failure::new(
            "parse",
            format!("unsupported manifest schema {:?}", recorded.schema),
        ));
    }
    let argv = std::iter::once("mmm".to_string()).chain(recorded.args.iter().cloned());
    let cli = Cli::try_parse_from(argv).map_err(|e| Failure::new("parse", format!("recorded arguments: {e}")))?;
    if !recorded.cwd.as_os_str().is_empty() {
        std::env::set_current_dir(&recorded.cwd).map_err(|e| Failure::io(&recorded.cwd, e))?;
    }
    let mut ctx = Context::new(recorded.seed);
    let artifacts = execute(&cli.command, &mut ctx)?;
    let replayed = output_digests(&cli.global, &artifacts);
    let outputs: Vec<Value> = recorded
        .outputs
        .iter()
        .zip(&replayed)
        .map(|(r, n)| json!({"path": r.path, "recorded": r.sha256, "replayed": n.sha256, "identical": r.sha256 == n.sha256}))
        .collect();
    let identical = recorded.outputs == replayed;
    let inputs_unchanged = recorded.inputs == ctx.inputs;
    let report = json!({
        "identical": identical,
        "inputs_unchanged": inputs_unchanged,
        "recorded_version": recorded.version,
        "version": mmm::VERSION,
        "outputs": outputs,
    });
    if !identical {
        return Err(
            Failure::new("replay_mismatch", "replayed outputs differ from the manifest").with("report", report),
        );
    }
    println!("{}", serde_json::to_string(&report).expect("report serializes"));
    Ok(())
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::parse();
    match run(cli, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.to_json());
            ExitCode::from(1)
        }
    }
}
