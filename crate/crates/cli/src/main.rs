use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mogfn::conditioning::{Conditioning, FocusGoal, Mode, PreferenceVector};
use mogfn::experiment::compare::{run_compare, CompareGrid};
use mogfn::experiment::scatter::{density_bins, scatter_svg, Coloring, DENSITY_BINS};
use mogfn::experiment::{
    checkpoint, evaluate, oracle, read_sample_log, run_all, write_jsonl, write_oracle, RunConfig, SeedReport,
};
use mogfn::metrics::ReferenceKind;
use mogfn_service::ServiceState;

/// Environment variable naming the root that relative output paths resolve
/// against.
const OUTPUT_ROOT_VAR: &str = "MOGFN_OUTPUT_ROOT";
const FULL_SCALE_STEPS: &str = "train.n_steps=40000";

#[derive(Parser)]
#[command(name = "mogfn", version, about = "Goal- and preference-conditioned GFlowNets on multi-objective hypergrids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Run configuration file (key = value lines).
    config: PathBuf,
    /// Override a config key, e.g. `--set n_steps=0`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Train for the full 40000 steps instead of the desk-scale default.
    #[arg(long)]
    full_scale: bool,
    /// Output directory; defaults to the config's run.output_dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ColoringArg {
    Angle,
    Density,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReferenceArg {
    Front,
    Faces,
    Auto,
}

#[derive(Subcommand)]
enum Command {
    /// Train every configured seed and evaluate it.
    Train(ConfigArgs),
    /// Sample from a checkpoint and compute metrics.
    Eval {
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 5000)]
        n_samples: usize,
        /// File with one goal direction per line (comma separated).
        #[arg(long, conflicts_with = "preferences")]
        goals: Option<PathBuf>,
        /// File with one preference vector per line (comma separated).
        #[arg(long)]
        preferences: Option<PathBuf>,
        #[arg(long, value_enum)]
        reference: Option<ReferenceArg>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the enumerated Pareto front and the exact terminal distribution.
    Oracle(ConfigArgs),
    /// Run a variants × landscapes × seeds grid.
    Compare(ConfigArgs),
    /// Serve a checkpoint over HTTP.
    Serve {
        checkpoint: PathBuf,
        #[arg(long, default_value = "127.0.0.1")]
        bind: IpAddr,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Send permissive cross-origin headers.
        #[arg(long)]
        cors: bool,
    },
    /// Render a sample log as an SVG scatter plot.
    Scatter {
        samples: PathBuf,
        #[arg(long, value_enum, default_value = "angle")]
        coloring: ColoringArg,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the 64 × 64 density bin counts of the first objective
        /// pair as JSON.
        #[arg(long)]
        bins: Option<PathBuf>,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<mogfn::Error> for Failure {
    fn from(e: mogfn::Error) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn config_err(e: mogfn::Error) -> Failure {
    Failure::Config(e.to_string())
}

fn resolve_out(path: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_VAR) {
        Some(root) if path.is_relative() => PathBuf::from(root).join(path),
        _ => path.to_path_buf(),
    }
}

fn load_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))
}

fn overrides(args: &ConfigArgs) -> Vec<String> {
    let mut o = Vec::new();
    if args.full_scale {
        o.push(FULL_SCALE_STEPS.to_string());
    }
    o.extend(args.set.iter().cloned());
    o
}

fn load_config(args: &ConfigArgs) -> Result<(RunConfig, PathBuf), Failure> {
    let text = load_text(&args.config)?;
    let cfg = RunConfig::parse_with_overrides(&text, &overrides(args)).map_err(config_err)?;
    let out = resolve_out(args.out.as_deref().unwrap_or(&cfg.output_dir));
    Ok((cfg, out))
}

fn parse_payloads(path: &Path, mode: Mode, k: usize, cfg: &RunConfig) -> Result<Vec<Conditioning>, Failure> {
    let text = load_text(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |msg: String| Failure::Config(format!("{}:{}: {msg}", path.display(), i + 1));
        let v: Vec<f64> = line
            .split([',', ' ', '\t'])
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|e| bad(format!("`{s}`: {e}"))))
            .collect::<Result<_, _>>()?;
        if v.len() != k {
            return Err(bad(format!("expected {k} values, got {}", v.len())));
        }
        let c = match mode {
            Mode::Goal => FocusGoal::new(v, cfg.train.focus_cosine_threshold, cfg.train.limit_reward_coef)
                .map(Conditioning::Goal),
            Mode::Preference => PreferenceVector::normalized(v).map(Conditioning::Preference),
        };
        out.push(c.map_err(|e| bad(e.to_string()))?);
    }
    Ok(out)
}

fn write(path: &Path, contents: &[u8]) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut stdout = std::io::stdout();
    match cli.command {
        Command::Train(args) => {
            let (cfg, out) = load_config(&args)?;
            println!("config: {}", args.config.display());
            println!("output: {}", out.display());
            let agg = run_all(&cfg, &out, &mut stdout)?;
            println!("aggregate: {}", out.join("aggregate.json").display());
            println!("{}", serde_json::to_string_pretty(&agg).map_err(|e| Failure::Runtime(e.to_string()))?);
        }
        Command::Eval {
            checkpoint: ck,
            n_samples,
            goals,
            preferences,
            reference,
            seed,
            out,
        } => {
            println!("checkpoint: {}", ck.display());
            let (mut cfg, trainer) = checkpoint::load(&ck)?;
            if let Some(r) = reference {
                cfg.reference = match r {
                    ReferenceArg::Front => ReferenceKind::Front,
                    ReferenceArg::Faces => ReferenceKind::Faces,
                    ReferenceArg::Auto => ReferenceKind::Auto,
                };
            }
            let k = cfg.grid.objectives;
            let conds = match (&goals, &preferences) {
                (Some(p), _) if cfg.mode == Mode::Goal => Some(parse_payloads(p, Mode::Goal, k, &cfg)?),
                (_, Some(p)) if cfg.mode == Mode::Preference => Some(parse_payloads(p, Mode::Preference, k, &cfg)?),
                (None, None) => None,
                _ => {
                    return Err(Failure::Config(format!(
                        "checkpoint is {}-conditioned; pass a matching conditioning set",
                        cfg.mode.name()
                    )))
                }
            };
            let out = resolve_out(&out.unwrap_or_else(|| ck.with_extension("eval")));
            println!("output: {}", out.display());
            let ev = evaluate(&trainer, &cfg, n_samples, conds.as_deref(), seed)?;
            write_jsonl(&out.join("samples.jsonl"), &ev.samples)?;
            let report = SeedReport {
                config: cfg.to_text(),
                seed,
                metrics: ev.report,
            };
            let json = serde_json::to_string_pretty(&report).map_err(|e| Failure::Runtime(e.to_string()))?;
            write(&out.join("report.json"), json.as_bytes())?;
            println!("{}", serde_json::to_string_pretty(&report.metrics).unwrap_or_default());
        }
        Command::Oracle(args) => {
            let (cfg, out) = load_config(&args)?;
            println!("config: {}", args.config.display());
            println!("output: {}", out.display());
            let o = oracle(&cfg)?;
            write_oracle(&out, &o)?;
            println!("front: {} points", o.front.len());
        }
        Command::Compare(args) => {
            let text = load_text(&args.config)?;
            let grid = CompareGrid::parse(&text, &overrides(&args)).map_err(config_err)?;
            let out = resolve_out(args.out.as_deref().unwrap_or(&grid.base.output_dir));
            println!("grid: {}", args.config.display());
            println!("output: {}", out.display());
            println!("cells: {}", grid.cells().len());
            let records = run_compare(&grid, Some(&out), &mut stdout)?;
            print!("{}", mogfn::experiment::compare::render_table(&grid, &records));
            let failed = records.iter().filter(|r| r.failed()).count();
            if failed > 0 {
                return Err(Failure::Runtime(format!("{failed} of {} cells failed", records.len())));
            }
        }
        Command::Serve {
            checkpoint: ck,
            bind,
            port,
            cors,
        } => {
            println!("checkpoint: {}", ck.display());
            let state = Arc::new(ServiceState::load(&ck)?);
            let addr = SocketAddr::new(bind, port);
            println!("listening on http://{addr}");
            let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::Runtime(e.to_string()))?;
            rt.block_on(mogfn_service::serve(state, addr, cors))
                .map_err(|e| Failure::Runtime(format!("{addr}: {e}")))?;
        }
        Command::Scatter {
            samples,
            coloring,
            out,
            bins,
        } => {
            println!("samples: {}", samples.display());
            let records = read_sample_log(&samples)?;
            let coloring = match coloring {
                ColoringArg::Angle => Coloring::Angle,
                ColoringArg::Density => Coloring::Density,
            };
            let out = resolve_out(&out.unwrap_or_else(|| samples.with_extension("svg")));
            println!("output: {}", out.display());
            write(&out, scatter_svg(&records, coloring)?.as_bytes())?;
            if let Some(b) = bins {
                let b = resolve_out(&b);
                let counts = density_bins(records.iter().map(|r| (r.r[0], r.r[1])));
                let rows: Vec<&[u64]> = counts.chunks(DENSITY_BINS).collect();
                write(&b, serde_json::to_string(&rows).unwrap_or_default().as_bytes())?;
                println!("bins: {}", b.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
