//! Offline prediction evaluation and proof-search evaluation over a corpus.
//!
//! Each file is evaluated against a database seeded only with the pairs of
//! its transitive dependencies. Within a file, pairs are processed in order:
//! a pair is predicted (or its lemma searched) first and inserted afterwards,
//! so nothing is ever predicted from itself.

use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Duration;

use rayon::prelude::*;

use crate::corpus::{Corpus, CorpusFile, Lemma, Pair};
use crate::db::{DbView, LemmaRef, TacticDatabase, Window};
use crate::env::{GoalStack, KernelError, ProofEnv, ProofOutcome, ReplayKernel};
use crate::lsh::{ForestConfig, ForestError, ForestIndex};
use crate::predict::{jaccard, knn_predict, random_predict, reverse_predict, weighted_jaccard, Metric, Prediction};
use crate::search::{diagonal_search, replay, SearchBudget, SearchOutcome, TacticPredictor};
use crate::term::{state_features, FeatureSet, ProofState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PredictorKind {
    Knn(Metric),
    /// Approximate Jaccard through the LSH Forest.
    Lshf,
    Random,
    Reverse,
}

impl PredictorKind {
    pub fn name(&self) -> &'static str {
        match self {
            PredictorKind::Knn(Metric::Cosine) => "cosine",
            PredictorKind::Knn(Metric::Euclid) => "euclid",
            PredictorKind::Knn(Metric::Jaccard) => "jaccard",
            PredictorKind::Knn(Metric::WeightedJaccard) => "tfidf",
            PredictorKind::Lshf => "lshf",
            PredictorKind::Random => "random",
            PredictorKind::Reverse => "reverse",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "cosine" => PredictorKind::Knn(Metric::Cosine),
            "euclid" => PredictorKind::Knn(Metric::Euclid),
            "jaccard" => PredictorKind::Knn(Metric::Jaccard),
            "tfidf" => PredictorKind::Knn(Metric::WeightedJaccard),
            "lshf" => PredictorKind::Lshf,
            "random" => PredictorKind::Random,
            "reverse" => PredictorKind::Reverse,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PredictorConfig {
    pub kind: PredictorKind,
    /// Seed for the random baseline.
    pub seed: u64,
    /// Re-rank LSH Forest candidates with TfIdf-weighted Jaccard instead of plain Jaccard.
    pub lshf_weighted_rerank: bool,
}

impl PredictorConfig {
    pub fn new(kind: PredictorKind) -> Self {
        PredictorConfig { kind, seed: 0, lshf_weighted_rerank: false }
    }
}

/// Which part of the database a query may see, resolved per file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowSpec {
    File,
    Last(usize),
    All,
}

impl WindowSpec {
    fn resolve(self, file: &CorpusFile) -> Window {
        match self {
            WindowSpec::File => Window::FileOnly(file.name.as_str().into()),
            WindowSpec::Last(n) => Window::LastN(n),
            WindowSpec::All => Window::All,
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "file" => Some(WindowSpec::File),
            "all" => Some(WindowSpec::All),
            _ => text.strip_prefix("last:")?.parse().ok().map(WindowSpec::Last),
        }
    }
}

impl std::fmt::Display for WindowSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            WindowSpec::File => f.write_str("file"),
            WindowSpec::Last(n) => write!(f, "last:{n}"),
            WindowSpec::All => f.write_str("all"),
        }
    }
}

pub(crate) fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A tactic database plus, when LSHF is in use, its forest index.
pub struct Learner {
    db: TacticDatabase,
    forest: Option<ForestIndex>,
}

impl Learner {
    pub fn new(forest: Option<ForestConfig>) -> Result<Self, ForestError> {
        Ok(Learner { db: TacticDatabase::new(), forest: forest.map(ForestIndex::new).transpose()? })
    }

    pub fn db(&self) -> &TacticDatabase {
        &self.db
    }

    pub fn insert(&mut self, file: &Arc<str>, lemma: &Arc<str>, features: &FeatureSet, tactic: &str) {
        let seq = self.db.insert(file.clone(), lemma.clone(), features.clone(), tactic);
        if let Some(forest) = self.forest.as_mut() {
            if !features.is_empty() {
                let tactic = self.db.entries()[seq as usize].tactic.clone();
                forest.insert(seq, features.clone(), tactic).expect("nonempty features");
            }
        }
    }

    /// Seeds the learner with every pair of the given files, in order.
    pub fn seed_files<'a>(&mut self, files: impl IntoIterator<Item = &'a CorpusFile>) {
        for f in files {
            let name: Arc<str> = f.name.as_str().into();
            for l in &f.lemmas {
                let lemma: Arc<str> = l.name.as_str().into();
                for p in &l.pairs {
                    self.insert(&name, &lemma, &p.features, &p.tactic);
                }
            }
        }
    }

    /// Predicts from `view`. LSHF without a forest, or on an empty query,
    /// falls back to exhaustive Jaccard.
    pub fn predict(
        &self,
        config: &PredictorConfig,
        view: &DbView<'_>,
        query: &FeatureSet,
        k: usize,
        call_seed: u64,
    ) -> Vec<Prediction> {
        match config.kind {
            PredictorKind::Knn(metric) => knn_predict(view, query, k, metric),
            PredictorKind::Reverse => reverse_predict(view, k),
            PredictorKind::Random => random_predict(view, k, mix_seed(config.seed, call_seed)),
            PredictorKind::Lshf => match &self.forest {
                Some(forest) if !query.is_empty() => {
                    let admit = |seq| view.admits(seq);
                    if config.lshf_weighted_rerank {
                        forest.query_with(query, k, &admit, |a, b| weighted_jaccard(a, b, &self.db)).predictions
                    } else {
                        forest.query_with(query, k, &admit, jaccard).predictions
                    }
                }
                _ => knn_predict(view, query, k, Metric::Jaccard),
            },
        }
    }
}

fn needs_forest(kind: PredictorKind, forest: ForestConfig) -> Option<ForestConfig> {
    (kind == PredictorKind::Lshf).then_some(forest)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PredictionEvalConfig {
    pub predictor: PredictorConfig,
    pub k_max: usize,
    pub intra_lemma: bool,
    pub window: WindowSpec,
    pub forest: ForestConfig,
}

impl PredictionEvalConfig {
    pub fn new(kind: PredictorKind) -> Self {
        PredictionEvalConfig {
            predictor: PredictorConfig::new(kind),
            k_max: 30,
            intra_lemma: true,
            window: WindowSpec::All,
            forest: ForestConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CumulativeCurve {
    /// `hits[k - 1]`: pairs whose true tactic was within the top `k`.
    pub hits: Vec<usize>,
    pub pairs: usize,
    /// Pairs whose true tactic was present in the view at prediction time.
    pub available: usize,
}

fn fraction(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl CumulativeCurve {
    pub fn k_max(&self) -> usize {
        self.hits.len()
    }

    pub fn proportion(&self, k: usize) -> f64 {
        fraction(self.hits[k - 1], self.pairs)
    }

    pub fn proportions(&self) -> Vec<f64> {
        (1..=self.k_max()).map(|k| self.proportion(k)).collect()
    }

    pub fn theoretical_max(&self) -> f64 {
        fraction(self.available, self.pairs)
    }

    /// `k,proportion` rows with six decimals.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,proportion\n");
        for k in 1..=self.k_max() {
            let _ = writeln!(s, "{k},{:.6}", self.proportion(k));
        }
        s
    }
}

struct FileTally {
    ranks: Vec<Option<usize>>,
    available: usize,
}

/// Runs the insert-after-evaluate protocol over one file; `on_pair` sees
/// the view each pair is predicted from.
fn walk_file(
    corpus: &Corpus,
    fi: usize,
    forest: Option<ForestConfig>,
    window: WindowSpec,
    intra_lemma: bool,
    mut on_pair: impl FnMut(&Learner, &DbView<'_>, &Lemma, &Pair, usize),
) -> Result<(), ForestError> {
    let file = &corpus.files[fi];
    let mut learner = Learner::new(forest)?;
    learner.seed_files(corpus.transitive_deps(fi).into_iter().map(|d| &corpus.files[d]));
    let name: Arc<str> = file.name.as_str().into();
    let window = window.resolve(file);
    let mut index = 0;
    for lemma in &file.lemmas {
        let lemma_name: Arc<str> = lemma.name.as_str().into();
        let exclude = (!intra_lemma).then(|| LemmaRef::new(name.clone(), lemma_name.clone()));
        for pair in &lemma.pairs {
            {
                let view = learner.db().view(window.clone(), exclude.clone());
                on_pair(&learner, &view, lemma, pair, index);
            }
            learner.insert(&name, &lemma_name, &pair.features, &pair.tactic);
            index += 1;
        }
    }
    Ok(())
}

/// Offline prediction evaluation; files are evaluated in parallel.
pub fn eval_predictions(corpus: &Corpus, config: &PredictionEvalConfig) -> Result<CumulativeCurve, ForestError> {
    assert!(config.k_max >= 1, "k_max must be at least 1");
    let forest = needs_forest(config.predictor.kind, config.forest);
    let tallies = (0..corpus.files.len())
        .into_par_iter()
        .map(|fi| {
            let mut tally = FileTally { ranks: Vec::new(), available: 0 };
            walk_file(corpus, fi, forest, config.window, config.intra_lemma, |learner, view, _, pair, index| {
                let call_seed = mix_seed(fi as u64, index as u64);
                let preds = learner.predict(&config.predictor, view, &pair.features, config.k_max, call_seed);
                tally.ranks.push(preds.iter().position(|p| *p.tactic == *pair.tactic));
                if view.contains_tactic(&pair.tactic) {
                    tally.available += 1;
                }
            })?;
            Ok(tally)
        })
        .collect::<Result<Vec<_>, ForestError>>()?;

    let mut curve = CumulativeCurve { hits: vec![0; config.k_max], pairs: 0, available: 0 };
    for t in tallies {
        curve.pairs += t.ranks.len();
        curve.available += t.available;
        for r in t.ranks.into_iter().flatten() {
            curve.hits[r..].iter_mut().for_each(|h| *h += 1);
        }
    }
    Ok(curve)
}

/// Fraction of pairs whose true tactic is in the view available when it is predicted.
pub fn theoretical_max(corpus: &Corpus, window: WindowSpec, intra_lemma: bool) -> f64 {
    let (mut available, mut pairs) = (0, 0);
    for fi in 0..corpus.files.len() {
        walk_file(corpus, fi, None, window, intra_lemma, |_, view, _, pair, _| {
            pairs += 1;
            available += usize::from(view.contains_tactic(&pair.tactic));
        })
        .expect("no forest requested");
    }
    fraction(available, pairs)
}

/// Nearest-rank percentile of a sorted, nonempty slice.
pub fn nearest_rank(sorted: &[usize], p: f64) -> usize {
    let rank = (p * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LengthRow {
    pub development: String,
    pub lemmas: usize,
    pub q2: usize,
    pub q3: usize,
    pub max: usize,
}

fn length_row(development: &str, mut lengths: Vec<usize>) -> LengthRow {
    lengths.sort_unstable();
    let (q2, q3, max) = if lengths.is_empty() {
        (0, 0, 0)
    } else {
        (nearest_rank(&lengths, 0.5), nearest_rank(&lengths, 0.75), *lengths.last().unwrap())
    };
    LengthRow { development: development.to_owned(), lemmas: lengths.len(), q2, q3, max }
}

/// `(value, count)` pairs sorted by value.
pub fn histogram(values: impl IntoIterator<Item = usize>) -> Vec<(usize, usize)> {
    let mut counts = std::collections::BTreeMap::new();
    for v in values {
        *counts.entry(v).or_insert(0) += 1;
    }
    counts.into_iter().collect()
}

pub fn histogram_csv(hist: &[(usize, usize)]) -> String {
    let mut s = String::from("length,count\n");
    for (l, c) in hist {
        let _ = writeln!(s, "{l},{c}");
    }
    s
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LengthStats {
    /// One row per development, then a final `total` row.
    pub rows: Vec<LengthRow>,
    pub histogram: Vec<(usize, usize)>,
}

impl LengthStats {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("development,lemmas,q2,q3,max\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{},{}", r.development, r.lemmas, r.q2, r.q3, r.max);
        }
        s
    }
}

fn developments(corpus: &Corpus) -> Vec<&str> {
    let mut out: Vec<&str> = Vec::new();
    for f in &corpus.files {
        if !out.contains(&f.development()) {
            out.push(f.development());
        }
    }
    out
}

/// Original proof lengths (recorded pairs per lemma) by development.
pub fn length_stats(corpus: &Corpus) -> LengthStats {
    let lengths = |dev: Option<&str>| -> Vec<usize> {
        corpus
            .files
            .iter()
            .filter(|f| dev.is_none_or(|d| f.development() == d))
            .flat_map(|f| f.lemmas.iter().filter(|l| !l.pairs.is_empty()).map(Lemma::length))
            .collect()
    };
    let mut rows: Vec<LengthRow> = developments(corpus).into_iter().map(|d| length_row(d, lengths(Some(d)))).collect();
    rows.push(length_row("total", lengths(None)));
    LengthStats { rows, histogram: histogram(lengths(None)) }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchConfig {
    pub name: String,
    pub predictor: PredictorConfig,
    pub window: WindowSpec,
}

impl SearchConfig {
    pub fn new(kind: PredictorKind, window: WindowSpec) -> Self {
        SearchConfig { name: format!("{}@{window}", kind.name()), predictor: PredictorConfig::new(kind), window }
    }
}

/// Drives a [`Learner`] as a search-time predictor over a fixed window.
pub struct LearnerPredictor<'a> {
    learner: &'a Learner,
    config: PredictorConfig,
    window: Window,
    calls: u64,
}

impl<'a> LearnerPredictor<'a> {
    pub fn new(learner: &'a Learner, config: PredictorConfig, window: Window) -> Self {
        LearnerPredictor { learner, config, window, calls: 0 }
    }
}

impl TacticPredictor for LearnerPredictor<'_> {
    fn predict(&mut self, state: &ProofState, k: usize) -> Vec<Prediction> {
        self.calls += 1;
        let view = self.learner.db().view(self.window.clone(), None);
        self.learner.predict(&self.config, &view, &state_features(state), k, self.calls)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LemmaSearch {
    pub success: bool,
    pub found_length: Option<usize>,
    pub elapsed: Duration,
    pub expansions: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LemmaRecord {
    pub file: String,
    pub lemma: String,
    pub development: String,
    pub original_length: usize,
    /// One entry per configuration, in configuration order.
    pub results: Vec<LemmaSearch>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DevelopmentRow {
    pub lengths: LengthRow,
    pub success: Vec<f64>,
    pub union: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchReport {
    pub configs: Vec<String>,
    /// Per development, then a `total` row.
    pub rows: Vec<DevelopmentRow>,
    pub lemmas: Vec<LemmaRecord>,
    /// Found-proof length histogram per configuration.
    pub found_histograms: Vec<Vec<(usize, usize)>>,
    pub original_histogram: Vec<(usize, usize)>,
}

impl SearchReport {
    pub fn total(&self) -> &DevelopmentRow {
        self.rows.last().expect("report always has a total row")
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("development,lemmas,q2,q3,max");
        for c in &self.configs {
            let _ = write!(s, ",{c}");
        }
        s.push_str(",union\n");
        for r in &self.rows {
            let l = &r.lengths;
            let _ = write!(s, "{},{},{},{},{}", l.development, l.lemmas, l.q2, l.q3, l.max);
            for v in &r.success {
                let _ = write!(s, ",{v:.6}");
            }
            let _ = writeln!(s, ",{:.6}", r.union);
        }
        s
    }

    /// Per-lemma outcomes; elapsed time is included only when `with_time`.
    pub fn lemmas_csv(&self, with_time: bool) -> String {
        let mut s = String::from("file,lemma,original_length,config,success,found_length,expansions");
        s.push_str(if with_time { ",time_ms\n" } else { "\n" });
        for l in &self.lemmas {
            for (c, r) in self.configs.iter().zip(&l.results) {
                let found = r.found_length.map(|n| n.to_string()).unwrap_or_default();
                let _ = write!(s, "{},{},{},{},{},{},{}", l.file, l.lemma, l.original_length, c, r.success, found, r.expansions);
                if with_time {
                    let _ = write!(s, ",{:.3}", r.elapsed.as_secs_f64() * 1e3);
                }
                s.push('\n');
            }
        }
        s
    }
}

/// Builds a replay kernel from every lemma trace in the corpus.
pub fn replay_kernel(corpus: &Corpus) -> Result<ReplayKernel, KernelError> {
    let mut k = ReplayKernel::new();
    for f in &corpus.files {
        for l in &f.lemmas {
            k.add_trace(&format!("{}:{}", f.name, l.name), &l.trace())?;
        }
    }
    Ok(k)
}

fn run_config(env: &dyn ProofEnv, root: &GoalStack, learner: &Learner, file: &CorpusFile, config: &SearchConfig, budget: &SearchBudget) -> LemmaSearch {
    let mut predictor = LearnerPredictor::new(learner, config.predictor, config.window.resolve(file));
    let res = diagonal_search(env, root, &mut predictor, budget);
    let found_length = match &res.outcome {
        SearchOutcome::Found(script) => {
            debug_assert_eq!(replay(env, root, script), Ok(ProofOutcome::Solved));
            Some(script.len())
        }
        _ => None,
    };
    LemmaSearch { success: found_length.is_some(), found_length, elapsed: res.stats.elapsed, expansions: res.stats.expansions }
}

fn forest_for(configs: &[SearchConfig], forest: ForestConfig) -> Option<ForestConfig> {
    configs.iter().any(|c| c.predictor.kind == PredictorKind::Lshf).then_some(forest)
}

/// Searches one lemma with the database as it stood when the lemma began.
pub fn search_lemma(
    corpus: &Corpus,
    file: usize,
    lemma: usize,
    config: &SearchConfig,
    budget: &SearchBudget,
    env: &dyn ProofEnv,
    forest: ForestConfig,
) -> Result<crate::search::SearchResult, ForestError> {
    let f = &corpus.files[file];
    let mut learner = Learner::new(needs_forest(config.predictor.kind, forest))?;
    learner.seed_files(corpus.transitive_deps(file).into_iter().map(|d| &corpus.files[d]));
    let name: Arc<str> = f.name.as_str().into();
    for l in &f.lemmas[..lemma] {
        let lname: Arc<str> = l.name.as_str().into();
        for p in &l.pairs {
            learner.insert(&name, &lname, &p.features, &p.tactic);
        }
    }
    let root = GoalStack::single(f.lemmas[lemma].statement().expect("lemma has a statement"));
    let mut predictor = LearnerPredictor::new(&learner, config.predictor, config.window.resolve(f));
    Ok(diagonal_search(env, &root, &mut predictor, budget))
}

/// Proof-search evaluation: every lemma is searched under each
/// configuration, then its recorded pairs join the database.
pub fn eval_search(
    corpus: &Corpus,
    configs: &[SearchConfig],
    budget: &SearchBudget,
    env: &dyn ProofEnv,
    forest: ForestConfig,
) -> Result<SearchReport, ForestError> {
    let mut lemmas = Vec::new();
    for (fi, file) in corpus.files.iter().enumerate() {
        let mut learner = Learner::new(forest_for(configs, forest))?;
        learner.seed_files(corpus.transitive_deps(fi).into_iter().map(|d| &corpus.files[d]));
        let name: Arc<str> = file.name.as_str().into();
        for lemma in &file.lemmas {
            let Some(statement) = lemma.statement() else { continue };
            let root = GoalStack::single(statement);
            let results = configs.iter().map(|c| run_config(env, &root, &learner, file, c, budget)).collect();
            lemmas.push(LemmaRecord {
                file: file.name.clone(),
                lemma: lemma.name.clone(),
                development: file.development().to_owned(),
                original_length: lemma.length(),
                results,
            });
            let lname: Arc<str> = lemma.name.as_str().into();
            for p in &lemma.pairs {
                learner.insert(&name, &lname, &p.features, &p.tactic);
            }
        }
    }

    let row = |dev: &str, recs: Vec<&LemmaRecord>| {
        let n = recs.len();
        let success = (0..configs.len()).map(|c| fraction(recs.iter().filter(|r| r.results[c].success).count(), n)).collect();
        let union = fraction(recs.iter().filter(|r| r.results.iter().any(|x| x.success)).count(), n);
        let lengths = length_row(dev, recs.iter().map(|r| r.original_length).collect());
        DevelopmentRow { lengths, success, union }
    };
    let mut rows: Vec<DevelopmentRow> = developments(corpus)
        .into_iter()
        .map(|d| row(d, lemmas.iter().filter(|r| r.development == d).collect()))
        .collect();
    rows.push(row("total", lemmas.iter().collect()));

    let found_histograms = (0..configs.len())
        .map(|c| histogram(lemmas.iter().filter_map(|r| r.results[c].found_length)))
        .collect();
    let original_histogram = histogram(lemmas.iter().map(|r| r.original_length));
    Ok(SearchReport {
        configs: configs.iter().map(|c| c.name.clone()).collect(),
        rows,
        lemmas,
        found_histograms,
        original_histogram,
    })
}
