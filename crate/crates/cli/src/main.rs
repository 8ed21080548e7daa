//! `causal-attn`: explain, inspect and benchmark attention-based recommendations.
//!
//! Exit status is 0 on success, 2 when no session received an explanation
//! and 1 on any error.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use causal_attn::ci::{correlation_from_attention, AttentionMatrix, HeadSelection};
use causal_attn::discovery::{PossibleDsep, RuleSet};
use causal_attn::eval::{
    eval_run, summarize, synthetic_cases, write_report, EvalCase, BENCHMARK_SAMPLE_SIZE, BENCHMARK_SEED,
};
use causal_attn::explain::{explain, learn_session_graph, ExplainConfig, ExplanationResult, Method};
use causal_attn::graph::ItemId;
use causal_attn::model::ipc::{serve, IpcClient};
use causal_attn::model::sem::BenchmarkParams;
use causal_attn::model::tiny::{TinyModel, TinyWeights};
use causal_attn::model::trace::{read_trace, write_trace, TraceModel, TraceRecord};
use causal_attn::model::{ModelError, Recommender, Scored, Session};
use causal_attn::pi::CircleMode;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "causal-attn", version, about = "Counterfactual explanations from recommender attention")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Explain sessions and print one JSON result per line.
    Explain(ExplainArgs),
    /// Learn the causal graph of one session and print it.
    Discover(DiscoverArgs),
    /// Write a trace of synthetic sessions, including every query both methods make.
    Simulate(SimulateArgs),
    /// Run both methods over many sessions and write a comparison report.
    Eval(EvalArgs),
    /// Answer model queries over standard input and output.
    Serve(ServeArgs),
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Recorded model outputs (JSON lines).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Command of a model process speaking the line protocol.
    #[arg(long)]
    serve: Option<String>,
    /// Weights of the built-in attention model (JSON).
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Attention head aggregation: `mean` or a head index.
    #[arg(long, default_value = "mean")]
    heads: HeadSelection,
}

#[derive(Args, Clone)]
struct SearchArgs {
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
    #[arg(long, default_value_t = 5)]
    top_k: usize,
    #[arg(long, default_value = "core")]
    rule_set: RuleSet,
    #[arg(long, value_enum, default_value_t = DsepArg::Auto)]
    possible_dsep: DsepArg,
    #[arg(long, default_value = "strict")]
    circle_mode: CircleMode,
    /// Sample size of the independence test; defaults to the token count.
    #[arg(long)]
    sample_size: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DsepArg {
    Auto,
    Always,
    Never,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Causal,
    Attention,
    Both,
}

#[derive(Args)]
struct ExplainArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    search: SearchArgs,
    /// Comma-separated item ids; every trace session when omitted.
    #[arg(long, value_delimiter = ',')]
    session: Option<Vec<u32>>,
    #[arg(long, value_enum, default_value_t = MethodArg::Causal)]
    method: MethodArg,
    /// Omit the learned graph from the output.
    #[arg(long)]
    no_graph: bool,
}

#[derive(Args)]
struct DiscoverArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    search: SearchArgs,
    #[arg(long, value_delimiter = ',', required = true)]
    session: Vec<u32>,
    /// Print Graphviz instead of the text format.
    #[arg(long)]
    dot: bool,
    /// Also write the derived correlation matrix as CSV.
    #[arg(long)]
    correlation_csv: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = BENCHMARK_SEED)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    count: usize,
    #[arg(long, default_value_t = 6)]
    session_len: usize,
    #[command(flatten)]
    search: SearchArgs,
    /// Output trace; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    search: SearchArgs,
    /// Run the seeded synthetic benchmark instead of a model.
    #[arg(long)]
    synthetic: bool,
    #[arg(long, default_value_t = BENCHMARK_SEED)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    count: usize,
    /// Sessions to explain, one comma-separated list per line.
    #[arg(long)]
    sessions: Option<PathBuf>,
    #[arg(long, default_value = "report")]
    out_dir: PathBuf,
    /// Worker threads; all cores when omitted.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Serve synthetic session `index` of the benchmark with this seed.
    #[arg(long)]
    synthetic_seed: Option<u64>,
    #[arg(long, default_value_t = 0)]
    index: usize,
}

impl SearchArgs {
    fn config(&self) -> ExplainConfig {
        let mut cfg = ExplainConfig {
            top_k: self.top_k,
            circle_mode: self.circle_mode,
            sample_size: self.sample_size,
            ..ExplainConfig::default()
        };
        cfg.discovery.alpha = self.alpha;
        cfg.discovery.rule_set = self.rule_set;
        cfg.discovery.possible_dsep = match self.possible_dsep {
            DsepArg::Auto => PossibleDsep::Auto,
            DsepArg::Always => PossibleDsep::Always,
            DsepArg::Never => PossibleDsep::Never,
        };
        cfg
    }
}

type Shared = Arc<dyn Recommender + Send + Sync>;

/// Lets several trace models share one live fallback.
struct SharedModel(Shared);

impl Recommender for SharedModel {
    fn recommend(&self, items: &[ItemId], k: usize) -> Result<Vec<Scored>, ModelError> {
        self.0.recommend(items, k)
    }

    fn attention(&self, tokens: &[ItemId]) -> Result<AttentionMatrix, ModelError> {
        self.0.attention(tokens)
    }
}

/// A live model, recorded sessions, or recorded sessions backed by a live model.
struct Models {
    live: Option<Shared>,
    traces: Vec<(String, Session, TraceModel)>,
}

impl Models {
    fn load(args: &ModelArgs) -> Result<Self> {
        let live: Option<Shared> = match (&args.serve, &args.weights) {
            (Some(_), Some(_)) => bail!("--serve and --weights are mutually exclusive"),
            (Some(cmd), None) => Some(Arc::new(IpcClient::spawn(cmd)?)),
            (None, Some(path)) => Some(Arc::new(TinyModel::new(&TinyWeights::load(path)?, args.heads)?)),
            (None, None) => None,
        };
        let mut traces = Vec::new();
        if let Some(path) = &args.trace {
            let mut by_session: BTreeMap<String, Vec<TraceRecord>> = BTreeMap::new();
            for r in read_trace(path)? {
                by_session.entry(r.session_id.clone()).or_default().push(r);
            }
            for (id, records) in by_session {
                let session = Session::new(records[0].items.clone())?;
                let mut model = TraceModel::new(records).with_context(|| format!("session {id}"))?;
                if let Some(live) = &live {
                    model = model.with_fallback(Box::new(SharedModel(live.clone())));
                }
                traces.push((id, session, model));
            }
        }
        if live.is_none() && traces.is_empty() {
            bail!("no model: pass --trace, --serve or --weights");
        }
        Ok(Models { live, traces })
    }

    /// The model answering for `session`: its trace if recorded, else the live model.
    fn for_session(&self, session: &Session) -> Result<&(dyn Recommender + Sync)> {
        if let Some((_, _, m)) = self.traces.iter().find(|(_, s, _)| s == session) {
            return Ok(m);
        }
        match (&self.live, self.traces.as_slice()) {
            (Some(live), _) => Ok(live.as_ref()),
            (None, [(_, _, only)]) => Ok(only),
            (None, _) => bail!("session {:?} is not in the trace", session.items()),
        }
    }
}

fn parse_session(ids: &[u32]) -> Result<Session> {
    Ok(Session::new(ids.iter().copied().map(ItemId).collect())?)
}

fn print_json(out: &mut impl Write, value: &serde_json::Value) -> Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

fn methods(m: MethodArg) -> Vec<Method> {
    match m {
        MethodArg::Causal => vec![Method::Causal],
        MethodArg::Attention => vec![Method::Attention],
        MethodArg::Both => vec![Method::Causal, Method::Attention],
    }
}

fn run_explain(args: &ExplainArgs) -> Result<bool> {
    let models = Models::load(&args.model)?;
    let cfg = args.search.config();
    let sessions: Vec<(String, Session)> = match &args.session {
        Some(ids) => vec![("cli".to_string(), parse_session(ids)?)],
        None if !models.traces.is_empty() => models.traces.iter().map(|(id, s, _)| (id.clone(), s.clone())).collect(),
        None => bail!("--session is required without --trace"),
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let mut any_found = false;
    for (id, session) in &sessions {
        let model = models.for_session(session)?;
        for method in methods(args.method) {
            let mut r: ExplanationResult =
                explain(method, session, model, &cfg).with_context(|| format!("session {id}, {method}"))?;
            if args.no_graph {
                r.pag = None;
            }
            any_found |= r.found();
            if let Some(hint) = &r.hint {
                eprintln!("{id} ({method}): {hint}");
            }
            print_json(&mut out, &serde_json::json!({ "session_id": id, "result": r }))?;
        }
    }
    Ok(any_found)
}

fn run_discover(args: &DiscoverArgs) -> Result<()> {
    let models = Models::load(&args.model)?;
    let cfg = args.search.config();
    let session = parse_session(&args.session)?;
    let model = models.for_session(&session)?;
    let rec = model
        .recommend(session.items(), 1)?
        .first()
        .context("model returned no recommendation")?
        .item;
    let attention = model.attention(&session.extended_with(rec))?;
    if let Some(path) = &args.correlation_csv {
        let mut rho = correlation_from_attention(&attention)?;
        if let Some(n) = cfg.sample_size {
            rho = rho.with_sample_size(n);
        }
        std::fs::write(path, rho.to_csv()).with_context(|| path.display().to_string())?;
    }
    let pag = learn_session_graph(&session, rec, &attention, &cfg)?;
    if args.dot {
        print!("{}", pag.to_dot());
    } else {
        print!("{pag}");
    }
    Ok(())
}

fn run_simulate(args: &SimulateArgs) -> Result<()> {
    let mut cfg = args.search.config();
    cfg.sample_size = cfg.sample_size.or(Some(BENCHMARK_SAMPLE_SIZE));
    let params = BenchmarkParams {
        session_len: args.session_len,
        ..BenchmarkParams::default()
    };
    let mut records = Vec::new();
    for c in synthetic_cases(args.seed, args.count, &params)? {
        let mut removals = Vec::new();
        for method in [Method::Causal, Method::Attention] {
            if let Ok(r) = explain(method, &c.session, &c.model, &cfg) {
                removals.extend(r.probes.into_iter().map(|p| p.removed));
            }
        }
        removals.sort();
        removals.dedup();
        records.push(TraceRecord::capture(&c.model, c.id.clone(), &c.session, cfg.top_k, &removals)?);
    }
    match &args.out {
        Some(path) => {
            let file = std::fs::File::create(path).with_context(|| path.display().to_string())?;
            write_trace(std::io::BufWriter::new(file), &records)?;
        }
        None => write_trace(std::io::stdout().lock(), &records)?,
    }
    Ok(())
}

fn read_sessions(path: &Path) -> Result<Vec<Session>> {
    let file = std::fs::File::open(path).with_context(|| path.display().to_string())?;
    let mut sessions = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ids = line
            .split(',')
            .map(|t| t.trim().parse::<u32>())
            .collect::<Result<Vec<_>, _>>()
            .with_context(|| format!("{}:{}", path.display(), i + 1))?;
        sessions.push(parse_session(&ids)?);
    }
    Ok(sessions)
}

fn run_eval(args: &EvalArgs) -> Result<bool> {
    let mut cfg = args.search.config();
    let records = if args.synthetic {
        cfg.sample_size = cfg.sample_size.or(Some(BENCHMARK_SAMPLE_SIZE));
        let cases = synthetic_cases(args.seed, args.count, &BenchmarkParams::default())?;
        eval_run(&cases, &cfg, args.workers)
    } else {
        let models = Models::load(&args.model)?;
        let mut cases = Vec::new();
        match &args.sessions {
            Some(path) => {
                for (i, session) in read_sessions(path)?.into_iter().enumerate() {
                    let model = models.for_session(&session)?;
                    cases.push(EvalCase {
                        id: format!("s{i:04}"),
                        session,
                        model,
                    });
                }
            }
            None => {
                for (id, session, model) in &models.traces {
                    cases.push(EvalCase {
                        id: id.clone(),
                        session: session.clone(),
                        model: model as &(dyn Recommender + Sync),
                    });
                }
            }
        }
        if cases.is_empty() {
            bail!("no sessions to evaluate: pass --sessions or a non-empty --trace");
        }
        // a single model process cannot answer concurrent queries faster
        let workers = if args.model.serve.is_some() { Some(1) } else { args.workers };
        eval_run(&cases, &cfg, workers)
    };
    let written = write_report(&args.out_dir, &records, cfg.top_k)
        .with_context(|| args.out_dir.display().to_string())?;
    let summary = summarize(&records, cfg.top_k);
    print_json(&mut std::io::stdout().lock(), &serde_json::to_value(&summary)?)?;
    for p in written {
        eprintln!("wrote {}", p.display());
    }
    Ok(summary.stats.iter().any(|s| s.found > 0))
}

fn run_serve(args: &ServeArgs) -> Result<()> {
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    if let Some(seed) = args.synthetic_seed {
        let cases = synthetic_cases(seed, args.index + 1, &BenchmarkParams::default())?;
        serve(&cases[args.index].model, stdin.lock(), stdout.lock())?;
        return Ok(());
    }
    let models = Models::load(&args.model)?;
    match (&models.live, models.traces.as_slice()) {
        (Some(live), []) => serve(live.as_ref(), stdin.lock(), stdout.lock())?,
        (_, [(_, _, only)]) => serve(only, stdin.lock(), stdout.lock())?,
        _ => bail!("serve needs exactly one model: a single-session trace, --weights or --synthetic-seed"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Explain(a) => run_explain(&a),
        Command::Discover(a) => run_discover(&a).map(|_| true),
        Command::Simulate(a) => run_simulate(&a).map(|_| true),
        Command::Eval(a) => run_eval(&a),
        Command::Serve(a) => run_serve(&a).map(|_| true),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
