//! `adhoc`: simulate episodes, train behaviour models, run and compare
//! experiments, and question the ad hoc guard about recorded traces.

use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adhoc_core::agent::{run_games, RunOptions};
use adhoc_core::explain::{Explainer, ExplainError, Templates, Trace, QUERY_GRAMMAR};
use adhoc_core::features::write_csv;
use adhoc_core::harness::{
    compare, episodes_csv, load_library, run_experiment, train_models, ExperimentConfig, HarnessError, Summary,
    TrainConfig, DEFAULT_RESAMPLES,
};
use adhoc_core::kr::{fort_attack_domain, load_domain};
use adhoc_core::models::{write_library, ModelConfig, ModelLibrary, ModelManager};
use adhoc_core::policies::{PolicyName, PolicySpec};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "adhoc", version, about = "Ad hoc teamwork in Fort Attack")]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Play episodes and write per-episode CSV and JSONL traces.
    Simulate {
        /// key = value experiment config; flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        policy: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        episodes: Option<usize>,
        /// Let guard 0 follow the team policy instead of reasoning.
        #[arg(long)]
        no_adhoc: bool,
        /// Model file; without one the ad hoc guard starts with no models.
        #[arg(long)]
        models: Option<PathBuf>,
        /// Directory for episodes.csv and traces/; CSV goes to stdout otherwise.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Learn behaviour models from handcrafted-policy episodes.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Examples per agent type.
        #[arg(long)]
        examples: Option<usize>,
        /// Model file to write.
        #[arg(long, default_value = "models.txt")]
        out: PathBuf,
        /// Accuracy report CSV; printed to stdout otherwise.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Also write each type's examples as `<type>.csv` here.
        #[arg(long)]
        examples_dir: Option<PathBuf>,
    },
    /// Run one experiment arm from a config file and print its summary.
    Experiment {
        config: PathBuf,
        /// Output directory, overriding `out_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Bootstrap comparison of two experiment summaries.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Compare summaries of different policies.
        #[arg(long)]
        force: bool,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = DEFAULT_RESAMPLES)]
        resamples: usize,
    },
    /// Ask why / why-not questions about a trace; interactive unless --batch.
    Explain {
        trace: PathBuf,
        /// File with one question per line; answers are written as JSONL.
        #[arg(long)]
        batch: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Alternative answer templates.
        #[arg(long)]
        templates: Option<PathBuf>,
        /// Alternative domain description.
        #[arg(long)]
        domain: Option<PathBuf>,
    },
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(_) | HarnessError::Mismatch(_) | HarnessError::TooFew(_) => Failure::Usage(e.to_string()),
            e => Failure::Runtime(e.to_string()),
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn io_at(path: &Path) -> impl FnOnce(io::Error) -> Failure + '_ {
    move |e| Failure::Runtime(format!("{}: {e}", path.display()))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(std::fs::File::create(p).map_err(io_at(p))?)),
        None => Box::new(io::stdout().lock()),
    })
}

/// Writes a line to stdout; a reader that went away early is not an error.
fn emit(text: &str) -> Result<(), Failure> {
    let mut out = io::stdout().lock();
    match writeln!(out, "{text}").and_then(|_| out.flush()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(runtime(e)),
        _ => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

fn run(cmd: Cmd) -> Result<(), Failure> {
    match cmd {
        Cmd::Simulate { config, policy, seed, episodes, no_adhoc, models, out } => {
            let mut cfg = match &config {
                Some(p) => ExperimentConfig::load(p)?,
                None => ExperimentConfig::default(),
            };
            if let Some(p) = policy {
                cfg.policy = PolicyName::parse(&p).ok_or_else(|| Failure::Usage(format!("unknown policy `{p}`")))?;
            }
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.episodes = episodes.unwrap_or(cfg.episodes);
            cfg.adhoc &= !no_adhoc;
            cfg.validate()?;
            simulate(&cfg, models.or(cfg.models.clone()), out.or(cfg.out_dir.clone()))
        }
        Cmd::Train { config, seed, examples, out, report, examples_dir } => {
            let mut cfg = match &config {
                Some(p) => TrainConfig::parse(&std::fs::read_to_string(p).map_err(io_at(p))?)?,
                None => TrainConfig::default(),
            };
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.examples_per_type = examples.unwrap_or(cfg.examples_per_type);
            let (lib, rep) = train_models(&cfg)?;
            let mut w = output(Some(&out))?;
            write_library(&mut w, &lib).and_then(|_| w.flush()).map_err(io_at(&out))?;
            let mut r = output(report.as_deref())?;
            r.write_all(rep.to_csv().as_bytes()).and_then(|_| r.flush()).map_err(runtime)?;
            if let Some(dir) = examples_dir {
                std::fs::create_dir_all(&dir).map_err(io_at(&dir))?;
                for (i, t) in cfg.types.iter().enumerate() {
                    let (rows, _) = cfg.examples_for(i)?;
                    let path = dir.join(format!("{}.csv", t.name));
                    let mut f = output(Some(&path))?;
                    write_csv(&mut f, &rows).and_then(|_| f.flush()).map_err(io_at(&path))?;
                }
            }
            log::info!("trained {} types in {:.1}s", rep.rows.len(), rep.seconds);
            Ok(())
        }
        Cmd::Experiment { config, out, models } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if out.is_some() {
                cfg.out_dir = out;
            }
            if models.is_some() {
                cfg.models = models;
            }
            let r = run_experiment(&cfg, None)?;
            let mut json = serde_json::to_value(&r.summary).map_err(runtime)?;
            if let Some(t) = &r.train {
                json["train"] = serde_json::to_value(t).map_err(runtime)?;
            }
            emit(&serde_json::to_string_pretty(&json).map_err(runtime)?)
        }
        Cmd::Compare { a, b, force, alpha, resamples } => {
            if !(alpha > 0.0 && alpha < 1.0) || resamples == 0 {
                return Err(Failure::Usage("alpha must lie in (0,1) and resamples be positive".into()));
            }
            let c = compare(&Summary::load(&a)?, &Summary::load(&b)?, force, resamples, alpha)?;
            emit(&serde_json::to_string_pretty(&c).map_err(runtime)?)
        }
        Cmd::Explain { trace, batch, out, templates, domain } => {
            let trace = Trace::load(&trace).map_err(runtime)?;
            let desc = match &domain {
                Some(p) => load_domain(p).map_err(runtime)?,
                None => fort_attack_domain().map_err(runtime)?,
            };
            let templates = match &templates {
                Some(p) => Templates::parse(&std::fs::read_to_string(p).map_err(io_at(p))?).map_err(runtime)?,
                None => Templates::bundled(),
            };
            let ex = Explainer::new(trace, &desc, templates).map_err(runtime)?;
            match batch {
                Some(q) => explain_batch(&ex, &q, out.as_deref()),
                None => explain_repl(&ex),
            }
        }
    }
}

fn simulate(cfg: &ExperimentConfig, models: Option<PathBuf>, out: Option<PathBuf>) -> Result<(), Failure> {
    let library = match &models {
        Some(p) => load_library(p)?,
        None => ModelLibrary::default(),
    };
    if let Some(d) = &out {
        std::fs::create_dir_all(d).map_err(io_at(d))?;
    }
    let mut grid = cfg.grid.clone();
    grid.adhoc_guard = cfg.adhoc;
    let mut manager = ModelManager::new(library, ModelConfig { learn_online: cfg.learn_online, ..ModelConfig::default() });
    let opts = RunOptions { seed: cfg.seed, agent: cfg.agent.clone(), trace_dir: out.as_ref().map(|d| d.join("traces")) };
    let domain = fort_attack_domain().map_err(runtime)?;
    let stats =
        run_games(cfg.episodes, &grid, &domain, &mut manager, &PolicySpec::new(cfg.policy), &opts).map_err(runtime)?;
    let csv = episodes_csv(&Summary::from_stats(cfg, &stats), &stats);
    match &out {
        Some(d) => {
            let p = d.join("episodes.csv");
            std::fs::write(&p, csv).map_err(io_at(&p))
        }
        None => emit(csv.trim_end()),
    }
}

fn answer_json(ex: &Explainer, q: &str) -> serde_json::Value {
    match ex.ask(q) {
        Ok(a) => serde_json::json!({ "question": q, "answer": a }),
        Err(e) => serde_json::json!({ "question": q, "error": e.to_string() }),
    }
}

fn explain_batch(ex: &Explainer, queries: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let text = std::fs::read_to_string(queries).map_err(io_at(queries))?;
    let mut w = output(out)?;
    for q in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let line = serde_json::to_string(&answer_json(ex, q)).map_err(runtime)?;
        writeln!(w, "{line}").map_err(runtime)?;
    }
    w.flush().map_err(runtime)
}

fn explain_repl(ex: &Explainer) -> Result<(), Failure> {
    let steps = ex.trace.steps.len();
    eprintln!("{steps} steps loaded. Ask a question, `help` for the grammar, `quit` to leave.");
    let stdin = io::stdin();
    let mut out = io::stdout().lock();
    loop {
        write!(out, "> ").and_then(|_| out.flush()).map_err(runtime)?;
        let mut line = String::new();
        if stdin.lock().read_line(&mut line).map_err(runtime)? == 0 {
            return Ok(());
        }
        let q = line.trim();
        match q {
            "" => continue,
            "quit" | "exit" => return Ok(()),
            "help" => writeln!(out, "{QUERY_GRAMMAR}"),
            _ => match ex.ask(q) {
                Ok(a) => writeln!(out, "{}", a.text),
                Err(ExplainError::Query { grammar, .. }) => writeln!(out, "I did not understand. Try:\n{grammar}"),
                Err(e) => writeln!(out, "{e}"),
            },
        }
        .map_err(runtime)?;
    }
}
