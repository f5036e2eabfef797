use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use tactic_forge::corpus::{Corpus, FileHeader, Record};
use tactic_forge::env::{run_script, ProofEnv, RuleKernel};
use tactic_forge::eval::{
    eval_predictions, eval_search, histogram_csv, length_stats, replay_kernel, search_lemma, PredictionEvalConfig,
    PredictorConfig, PredictorKind, SearchConfig, WindowSpec,
};
use tactic_forge::lsh::ForestConfig;
use tactic_forge::recorder::RecordingSession;
use tactic_forge::search::{SearchBudget, SearchOutcome, DEFAULT_K};
use tactic_forge::{instrument, parse_script, GoalStack, ProofOutcome};

#[derive(Parser)]
#[command(name = "tactic-forge", version, about = "Tactic prediction and proof search from recorded proofs")]
struct Cli {
    /// Seed for every randomized path.
    #[arg(long, global = true, env = "TACTIC_FORGE_SEED", default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a corpus and print a summary.
    Ingest {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        /// Write the corpus back out in canonical JSONL form.
        #[arg(long)]
        export: Option<PathBuf>,
    },
    /// Offline k-NN evaluation: cumulative top-k accuracy curve as CSV.
    EvalKnn {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        /// cosine, euclid, jaccard, tfidf, lshf, random or reverse.
        #[arg(long, value_parser = parse_kind)]
        metric: PredictorKind,
        #[arg(long, default_value_t = 30, value_parser = clap::value_parser!(u32).range(1..))]
        kmax: u32,
        /// Let predictions use pairs recorded earlier in the same lemma.
        #[arg(long)]
        intra_lemma: bool,
        /// file, last:N or all.
        #[arg(long, default_value = "all", value_parser = parse_window)]
        window: WindowSpec,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        forest: ForestArgs,
    },
    /// Search for a proof of a single lemma.
    Search {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        #[arg(long)]
        lemma: String,
        /// Restrict the lemma lookup to this file.
        #[arg(long)]
        file: Option<String>,
        #[arg(long, default_value = "jaccard", value_parser = parse_kind)]
        predictor: PredictorKind,
        #[arg(long, default_value = "all", value_parser = parse_window)]
        window: WindowSpec,
        #[command(flatten)]
        budget: BudgetArgs,
        /// Rule kernel; without it, recorded traces are replayed.
        #[arg(long)]
        rules: Option<PathBuf>,
        #[command(flatten)]
        forest: ForestArgs,
    },
    /// Proof-search evaluation over every lemma of the corpus.
    EvalSearch {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        /// `[NAME=]PREDICTOR[@WINDOW]`, repeatable. Defaults to `jaccard@all`.
        #[arg(long = "config", value_parser = parse_config)]
        configs: Vec<SearchConfig>,
        #[command(flatten)]
        budget: BudgetArgs,
        #[arg(long)]
        rules: Option<PathBuf>,
        /// Per-development summary CSV (stdout if absent).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Found-proof length histogram CSV for `--hist-config`.
        #[arg(long)]
        hist_out: Option<PathBuf>,
        /// Configuration whose histogram is written; defaults to the first.
        #[arg(long)]
        hist_config: Option<String>,
        /// Per-lemma outcome CSV.
        #[arg(long)]
        lemmas_out: Option<PathBuf>,
        #[command(flatten)]
        forest: ForestArgs,
    },
    /// Run instrumented proof scripts on a rule kernel and emit pair records.
    Record {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        #[arg(long)]
        rules: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Proof-length quartiles per development and the length histogram.
    Stats {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        hist_out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct BudgetArgs {
    #[arg(long)]
    budget_expansions: Option<usize>,
    #[arg(long)]
    budget_seconds: Option<f64>,
    /// Predictions tried per node.
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
}

impl BudgetArgs {
    fn budget(&self) -> Result<SearchBudget, CliError> {
        let secs = self
            .budget_seconds
            .map(|s| Duration::try_from_secs_f64(s).map_err(|e| CliError::Usage(format!("--budget-seconds: {e}"))))
            .transpose()?;
        let expansions = if secs.is_none() && self.budget_expansions.is_none() { Some(10_000) } else { self.budget_expansions };
        SearchBudget::new(secs, expansions, self.k).map_err(|e| CliError::Usage(e.to_string()))
    }
}

#[derive(Args)]
struct ForestArgs {
    #[arg(long, default_value_t = ForestConfig::default().trees)]
    trees: usize,
    #[arg(long, default_value_t = ForestConfig::default().depth)]
    depth: usize,
    #[arg(long, default_value_t = ForestConfig::default().pool_cap)]
    pool_cap: usize,
    /// Re-rank LSH Forest candidates with TfIdf-weighted Jaccard.
    #[arg(long)]
    weighted_rerank: bool,
}

impl ForestArgs {
    fn config(&self, seed: u64) -> ForestConfig {
        ForestConfig { trees: self.trees, depth: self.depth, pool_cap: self.pool_cap, seed }
    }

    fn predictor(&self, kind: PredictorKind, seed: u64) -> PredictorConfig {
        PredictorConfig { kind, seed, lshf_weighted_rerank: self.weighted_rerank }
    }
}

fn parse_kind(s: &str) -> Result<PredictorKind, String> {
    PredictorKind::parse(s).ok_or_else(|| format!("unknown predictor `{s}`"))
}

fn parse_window(s: &str) -> Result<WindowSpec, String> {
    WindowSpec::parse(s).ok_or_else(|| format!("bad window `{s}`; expected file, last:N or all"))
}

fn parse_config(s: &str) -> Result<SearchConfig, String> {
    let (name, spec) = match s.split_once('=') {
        Some((n, rest)) => (Some(n), rest),
        None => (None, s),
    };
    let (kind, window) = match spec.split_once('@') {
        Some((k, w)) => (parse_kind(k)?, parse_window(w)?),
        None => (parse_kind(spec)?, WindowSpec::All),
    };
    let mut c = SearchConfig::new(kind, window);
    if let Some(n) = name {
        c.name = n.to_owned();
    }
    Ok(c)
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Input(String),
}

impl<E: std::error::Error> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Input(e.to_string())
    }
}

fn emit(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Input(format!("writing {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_env(rules: Option<&Path>, corpus: &Corpus) -> Result<Box<dyn ProofEnv>, CliError> {
    Ok(match rules {
        Some(p) => Box::new(RuleKernel::load(p)?),
        None => Box::new(replay_kernel(corpus)?),
    })
}

fn record(paths: &[PathBuf], rules: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let corpus = Corpus::ingest(paths)?;
    let kernel = RuleKernel::load(rules)?;
    let mut records = Vec::new();
    let (mut proved, mut failed) = (0, 0);
    for f in &corpus.files {
        records.push(Record::Header(FileHeader { file: f.name.clone(), deps: f.deps.clone() }));
        let mut seq = 0;
        for l in &f.lemmas {
            let Some(script) = &l.script else { continue };
            let ast = instrument(&parse_script(&script.script).map_err(|e| {
                CliError::Input(format!("{}:{}: {e}", f.name, l.name))
            })?)?;
            let statement = l
                .statement()
                .ok_or_else(|| CliError::Input(format!("{}:{}: script record has no goal", f.name, l.name)))?;
            let mut session = RecordingSession::new(f.name.clone(), l.name.clone(), seq);
            let outcome = run_script(&kernel, &GoalStack::single(statement), &ast, Some(&mut session));
            records.push(Record::Script(script.clone()));
            if outcome == ProofOutcome::Solved {
                seq = session.next_seq();
                records.extend(session.finish()?.into_iter().map(Record::Pair));
                proved += 1;
            } else {
                eprintln!("warning: {}:{}: script does not prove the lemma: {outcome:?}", f.name, l.name);
                failed += 1;
            }
        }
    }
    let mut text = String::new();
    for r in &records {
        text.push_str(&r.to_json());
        text.push('\n');
    }
    emit(out, &text)?;
    let pairs = records.iter().filter(|r| matches!(r, Record::Pair(_))).count();
    eprintln!("recorded {pairs} pairs from {proved} lemmas ({failed} scripts failed)");
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let seed = cli.seed;
    match cli.command {
        Command::Ingest { paths, export } => {
            let corpus = Corpus::ingest(&paths)?;
            println!(
                "{} files, {} lemmas, {} pairs",
                corpus.files.len(),
                corpus.lemma_count(),
                corpus.pair_count()
            );
            if let Some(p) = export {
                emit(Some(&p), &corpus.to_jsonl())?;
            }
        }
        Command::EvalKnn { paths, metric, kmax, intra_lemma, window, out, forest } => {
            let corpus = Corpus::ingest(&paths)?;
            let config = PredictionEvalConfig {
                predictor: forest.predictor(metric, seed),
                k_max: kmax as usize,
                intra_lemma,
                window,
                forest: forest.config(seed),
            };
            let curve = eval_predictions(&corpus, &config)?;
            emit(out.as_deref(), &curve.to_csv())?;
            eprintln!(
                "{}: {} pairs, top-1 {:.6}, top-{} {:.6}, theoretical max {:.6}",
                metric.name(),
                curve.pairs,
                curve.proportion(1),
                curve.k_max(),
                curve.proportion(curve.k_max()),
                curve.theoretical_max()
            );
        }
        Command::Search { paths, lemma, file, predictor, window, budget, rules, forest } => {
            let corpus = Corpus::ingest(&paths)?;
            let (fi, li) = corpus.find_lemma(file.as_deref(), &lemma)?;
            if corpus.files[fi].lemmas[li].statement().is_none() {
                return Err(CliError::Input(format!("lemma `{lemma}` has no statement")));
            }
            let env = load_env(rules.as_deref(), &corpus)?;
            let mut config = SearchConfig::new(predictor, window);
            config.predictor = forest.predictor(predictor, seed);
            let res = search_lemma(&corpus, fi, li, &config, &budget.budget()?, env.as_ref(), forest.config(seed))?;
            match &res.outcome {
                SearchOutcome::Found(script) => println!("found ({} tactics): {}", script.len(), script.join(". ")),
                SearchOutcome::Exhausted => println!("exhausted"),
                SearchOutcome::BudgetExceeded => println!("budget exceeded"),
            }
            eprintln!(
                "expansions {}, applications {}, max depth {}, {:.3}s",
                res.stats.expansions,
                res.stats.applications,
                res.stats.max_depth,
                res.stats.elapsed.as_secs_f64()
            );
        }
        Command::EvalSearch { paths, mut configs, budget, rules, out, hist_out, hist_config, lemmas_out, forest } => {
            let corpus = Corpus::ingest(&paths)?;
            let env = load_env(rules.as_deref(), &corpus)?;
            if configs.is_empty() {
                configs.push(SearchConfig::new(PredictorKind::Knn(tactic_forge::Metric::Jaccard), WindowSpec::All));
            }
            for c in &mut configs {
                c.predictor = forest.predictor(c.predictor.kind, seed);
            }
            let budget = budget.budget()?;
            let report = eval_search(&corpus, &configs, &budget, env.as_ref(), forest.config(seed))?;
            emit(out.as_deref(), &report.to_csv())?;
            if let Some(p) = hist_out {
                let idx = match &hist_config {
                    Some(name) => report
                        .configs
                        .iter()
                        .position(|c| c == name)
                        .ok_or_else(|| CliError::Usage(format!("no configuration named `{name}`")))?,
                    None => 0,
                };
                emit(Some(&p), &histogram_csv(&report.found_histograms[idx]))?;
            }
            if let Some(p) = lemmas_out {
                emit(Some(&p), &report.lemmas_csv(budget.wall_clock.is_some()))?;
            }
            let total = report.total();
            for (name, rate) in report.configs.iter().zip(&total.success) {
                eprintln!("{name}: {:.6}", rate);
            }
            eprintln!("union: {:.6} over {} lemmas", total.union, total.lengths.lemmas);
        }
        Command::Record { paths, rules, out } => record(&paths, &rules, out.as_deref())?,
        Command::Stats { paths, out, hist_out } => {
            let corpus = Corpus::ingest(&paths)?;
            let stats = length_stats(&corpus);
            emit(out.as_deref(), &stats.to_csv())?;
            if let Some(p) = hist_out {
                emit(Some(&p), &histogram_csv(&stats.histogram))?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
