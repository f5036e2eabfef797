//! Set-similarity k-NN tactic prediction and the Random/Reverse baselines.
//!
//! Every predictor returns a deduplicated list of [`Prediction`]s ordered by
//! non-increasing score, ties broken by larger source seq, then tactic text.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::sync::Arc;

use num_traits::Float;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::db::{DbView, TacticDatabase};
use crate::term::{FeatureId, FeatureSet};

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<S = f64> {
    /// Higher is better.
    pub score: S,
    pub tactic: Arc<str>,
    pub source_seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    Cosine,
    Euclid,
    Jaccard,
    /// Jaccard with TfIdf feature weights taken from the database.
    WeightedJaccard,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Cosine, Metric::Euclid, Metric::Jaccard, Metric::WeightedJaccard];
}

fn ratio<S: Float>(num: usize, den: S) -> S {
    if den == S::zero() {
        S::zero()
    } else {
        S::from(num).unwrap() / den
    }
}

pub fn cosine<S: Float>(f1: &FeatureSet, f2: &FeatureSet) -> S {
    let den = S::from(f1.len() * f2.len()).unwrap().sqrt();
    ratio(f1.intersection_len(f2), den)
}

/// A distance: zero iff the sets are equal.
pub fn euclid<S: Float>(f1: &FeatureSet, f2: &FeatureSet) -> S {
    let inter = f1.intersection_len(f2);
    S::from(f1.len() + f2.len() - 2 * inter).unwrap().sqrt()
}

pub fn jaccard<S: Float>(f1: &FeatureSet, f2: &FeatureSet) -> S {
    ratio(f1.intersection_len(f2), S::from(f1.union_len(f2)).unwrap())
}

/// TfIdf-weighted Jaccard index; zero when the union carries no weight.
pub fn weighted_jaccard<S: Float>(f1: &FeatureSet, f2: &FeatureSet, db: &TacticDatabase) -> S {
    let (a, b) = (f1.ids(), f2.ids());
    let (mut i, mut j) = (0, 0);
    let (mut inter, mut union) = (S::zero(), S::zero());
    let w = |id: u32| db.tfidf::<S>(FeatureId(id));
    while i < a.len() || j < b.len() {
        let ord = match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) => x.cmp(y),
            (Some(_), None) => Ordering::Less,
            _ => Ordering::Greater,
        };
        match ord {
            Ordering::Less => {
                union = union + w(a[i]);
                i += 1;
            }
            Ordering::Greater => {
                union = union + w(b[j]);
                j += 1;
            }
            Ordering::Equal => {
                let x = w(a[i]);
                inter = inter + x;
                union = union + x;
                i += 1;
                j += 1;
            }
        }
    }
    if union == S::zero() {
        S::zero()
    } else {
        inter / union
    }
}

/// Similarity with a uniform "higher is better" orientation; Euclid
/// distances map through `1 / (1 + d)`.
pub fn similarity<S: Float>(metric: Metric, f1: &FeatureSet, f2: &FeatureSet, db: &TacticDatabase) -> S {
    match metric {
        Metric::Cosine => cosine(f1, f2),
        Metric::Euclid => S::one() / (S::one() + euclid::<S>(f1, f2)),
        Metric::Jaccard => jaccard(f1, f2),
        Metric::WeightedJaccard => weighted_jaccard(f1, f2, db),
    }
}

fn prediction_order<S: Float>(a: &Prediction<S>, b: &Prediction<S>) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then(b.source_seq.cmp(&a.source_seq))
        .then_with(|| a.tactic.cmp(&b.tactic))
}

/// Keeps the best (score, then seq) candidate per tactic and returns the
/// top `k` in prediction order.
pub fn rank_candidates<S: Float>(
    candidates: impl IntoIterator<Item = (S, u64, Arc<str>)>,
    k: usize,
) -> Vec<Prediction<S>> {
    let mut best: HashMap<Arc<str>, (S, u64)> = HashMap::new();
    for (score, seq, tactic) in candidates {
        best.entry(tactic)
            .and_modify(|cur| {
                if score > cur.0 || (score == cur.0 && seq > cur.1) {
                    *cur = (score, seq);
                }
            })
            .or_insert((score, seq));
    }
    let mut out: Vec<Prediction<S>> = best
        .into_iter()
        .map(|(tactic, (score, source_seq))| Prediction { score, tactic, source_seq })
        .collect();
    out.sort_by(prediction_order);
    out.truncate(k);
    out
}

/// Exhaustive k-NN over every entry in the view.
pub fn knn_predict<S: Float>(view: &DbView<'_>, query: &FeatureSet, k: usize, metric: Metric) -> Vec<Prediction<S>> {
    let db = view.db();
    rank_candidates(
        view.iter().map(|e| (similarity::<S>(metric, query, &e.features, db), e.seq, e.tactic.clone())),
        k,
    )
}

fn rank_score<S: Float>(rank: usize) -> S {
    S::one() / S::from(rank + 1).unwrap()
}

/// Distinct tactics ordered by when they were last added.
pub fn reverse_predict<S: Float>(view: &DbView<'_>, k: usize) -> Vec<Prediction<S>> {
    let mut seen = std::collections::HashSet::new();
    view.iter()
        .rev()
        .filter(|e| seen.insert(e.tactic.clone()))
        .take(k)
        .enumerate()
        .map(|(rank, e)| Prediction { score: rank_score(rank), tactic: e.tactic.clone(), source_seq: e.seq })
        .collect()
}

/// `k` distinct tactics drawn uniformly without replacement.
pub fn random_predict<S: Float>(view: &DbView<'_>, k: usize, seed: u64) -> Vec<Prediction<S>> {
    let mut last: HashMap<Arc<str>, usize> = HashMap::new();
    let mut distinct: Vec<(Arc<str>, u64)> = Vec::new();
    for e in view.iter() {
        match last.get(&e.tactic) {
            Some(&i) => distinct[i].1 = e.seq,
            None => {
                last.insert(e.tactic.clone(), distinct.len());
                distinct.push((e.tactic.clone(), e.seq));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let take = k.min(distinct.len());
    let (chosen, _) = distinct.partial_shuffle(&mut rng, take);
    chosen
        .iter()
        .enumerate()
        .map(|(rank, (tactic, seq))| Prediction { score: rank_score(rank), tactic: tactic.clone(), source_seq: *seq })
        .collect()
}
