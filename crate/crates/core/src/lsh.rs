//! MinHash LSH Forest: approximate top-k Jaccard neighbors with incremental
//! insertion and a bounded candidate pool per query.
//!
//! Each tree orders the signature coordinates by its own permutation and
//! reduces every coordinate to an 8-bit bucket. A tree is a sorted set of
//! `(bucket string, seq)` keys, so the items sharing a prefix of length `d`
//! form one contiguous range.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::Arc;

use num_traits::Float;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::predict::{jaccard, rank_candidates, Prediction};
use crate::term::FeatureSet;

/// Longest bucket string a tree can hold.
pub const MAX_DEPTH: usize = 32;

type Key = [u8; MAX_DEPTH];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ForestError {
    #[error("MinHash is undefined on an empty feature set")]
    EmptySet,
    #[error("forest depth {0} is outside 1..={MAX_DEPTH}")]
    BadDepth(usize),
    #[error("forest needs at least one tree and a nonzero pool cap")]
    BadShape,
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn splitmix_stream(seed: u64) -> impl Iterator<Item = u64> {
    let mut state = seed;
    std::iter::repeat_with(move || {
        state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        mix64(state)
    })
}

/// `depth` seeded hash functions over feature ids. Each function is a
/// bijection on `u64` (offset then an invertible mixer).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashFamily {
    seed: u64,
    offsets: Vec<u64>,
}

impl HashFamily {
    pub fn new(seed: u64, depth: usize) -> Self {
        HashFamily { seed, offsets: splitmix_stream(seed).take(depth).collect() }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn depth(&self) -> usize {
        self.offsets.len()
    }

    pub fn hash(&self, i: usize, feature: u32) -> u64 {
        mix64((feature as u64).wrapping_add(self.offsets[i]))
    }

    pub fn signature(&self, features: &FeatureSet) -> Result<MinHashSignature, ForestError> {
        if features.is_empty() {
            return Err(ForestError::EmptySet);
        }
        let values = self
            .offsets
            .iter()
            .map(|&off| features.ids().iter().map(|&x| mix64((x as u64).wrapping_add(off))).min().unwrap())
            .collect();
        Ok(MinHashSignature { values })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinHashSignature {
    pub values: Vec<u64>,
}

impl MinHashSignature {
    /// Fraction of coordinates on which two signatures agree; an unbiased
    /// estimate of the Jaccard index of the underlying sets.
    pub fn agreement(&self, other: &MinHashSignature) -> f64 {
        let same = self.values.iter().zip(&other.values).filter(|(a, b)| a == b).count();
        same as f64 / self.values.len() as f64
    }
}

pub fn signature(features: &FeatureSet, family: &HashFamily) -> Result<MinHashSignature, ForestError> {
    family.signature(features)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForestConfig {
    pub trees: usize,
    pub depth: usize,
    pub pool_cap: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig { trees: 16, depth: 32, pool_cap: 1024, seed: 0x5eed }
    }
}

#[derive(Debug, Clone)]
pub struct QueryOutcome<S = f64> {
    pub predictions: Vec<Prediction<S>>,
    /// Candidates scored exactly; never exceeds the pool cap.
    pub scored: usize,
}

#[derive(Debug, Clone)]
pub struct ForestIndex {
    config: ForestConfig,
    family: HashFamily,
    axes: Vec<Vec<usize>>,
    trees: Vec<BTreeSet<(Key, u64)>>,
    items: HashMap<u64, (FeatureSet, Arc<str>, Vec<Key>)>,
}

impl ForestIndex {
    pub fn new(config: ForestConfig) -> Result<Self, ForestError> {
        if config.depth == 0 || config.depth > MAX_DEPTH {
            return Err(ForestError::BadDepth(config.depth));
        }
        if config.trees == 0 || config.pool_cap == 0 {
            return Err(ForestError::BadShape);
        }
        let family = HashFamily::new(config.seed, config.depth);
        let mut rng = ChaCha8Rng::seed_from_u64(mix64(config.seed ^ 0xa5a5_a5a5));
        let axes = (0..config.trees)
            .map(|_| {
                let mut order: Vec<usize> = (0..config.depth).collect();
                order.shuffle(&mut rng);
                order
            })
            .collect();
        Ok(ForestIndex { config, family, axes, trees: vec![BTreeSet::new(); config.trees], items: HashMap::new() })
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    fn keys(&self, sig: &MinHashSignature) -> Vec<Key> {
        self.axes
            .iter()
            .map(|order| {
                let mut key = [0u8; MAX_DEPTH];
                for (slot, &axis) in key.iter_mut().zip(order) {
                    *slot = mix64(sig.values[axis]) as u8;
                }
                key
            })
            .collect()
    }

    /// Indexes an item under `seq`, replacing any previous item with that seq.
    pub fn insert(&mut self, seq: u64, features: FeatureSet, tactic: Arc<str>) -> Result<(), ForestError> {
        let keys = self.keys(&self.family.signature(&features)?);
        if let Some((_, _, old)) = self.items.remove(&seq) {
            for (tree, key) in self.trees.iter_mut().zip(old) {
                tree.remove(&(key, seq));
            }
        }
        for (tree, key) in self.trees.iter_mut().zip(&keys) {
            tree.insert((*key, seq));
        }
        self.items.insert(seq, (features, tactic, keys));
        Ok(())
    }

    /// Collects up to `pool_cap` candidate seqs, deepest shared prefixes
    /// first, descending all trees in lockstep.
    pub fn candidates(&self, features: &FeatureSet, admit: &dyn Fn(u64) -> bool) -> Vec<u64> {
        let Ok(sig) = self.family.signature(features) else {
            return Vec::new();
        };
        let keys = self.keys(&sig);
        let cap = self.config.pool_cap;
        let mut pool = Vec::new();
        let mut seen = HashSet::new();
        for d in (0..=self.config.depth).rev() {
            for (tree, key) in self.trees.iter().zip(&keys) {
                let mut lo = *key;
                let mut hi = *key;
                lo[d..].fill(0);
                hi[d..].fill(u8::MAX);
                for &(_, seq) in tree.range((lo, 0)..=(hi, u64::MAX)) {
                    if seen.insert(seq) && admit(seq) {
                        pool.push(seq);
                        if pool.len() == cap {
                            return pool;
                        }
                    }
                }
            }
            if seen.len() == self.items.len() {
                break;
            }
        }
        pool
    }

    /// Approximate top-k by exact unweighted Jaccard over the candidate pool.
    pub fn query<S: Float>(&self, features: &FeatureSet, k: usize) -> Vec<Prediction<S>> {
        self.query_with(features, k, &|_| true, |a, b| jaccard(a, b)).predictions
    }

    /// Query restricted to admitted seqs, re-ranking the pool with `score`.
    pub fn query_with<S: Float>(
        &self,
        features: &FeatureSet,
        k: usize,
        admit: &dyn Fn(u64) -> bool,
        score: impl Fn(&FeatureSet, &FeatureSet) -> S,
    ) -> QueryOutcome<S> {
        let pool = self.candidates(features, admit);
        let scored = pool.len();
        let predictions = rank_candidates(
            pool.into_iter().map(|seq| {
                let (f, tactic, _) = &self.items[&seq];
                (score(features, f), seq, tactic.clone())
            }),
            k,
        );
        QueryOutcome { predictions, scored }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fs(ids: impl IntoIterator<Item = u32>) -> FeatureSet {
        FeatureSet::from_ids(ids)
    }

    #[test]
    fn signatures() {
        let fam = HashFamily::new(1, 16);
        assert_eq!(fam.signature(&fs([3, 1, 2])).unwrap(), fam.signature(&fs([1, 2, 3])).unwrap());
        let single = fam.signature(&fs([9])).unwrap();
        for i in 0..16 {
            assert_eq!(single.values[i], fam.hash(i, 9));
        }
        assert_eq!(fam.signature(&FeatureSet::new()), Err(ForestError::EmptySet));
        assert_ne!(HashFamily::new(2, 16).signature(&fs([9])).unwrap(), single);
    }

    #[test]
    fn rejects_bad_config() {
        let bad = |c: ForestConfig| ForestIndex::new(c).unwrap_err();
        assert_eq!(bad(ForestConfig { depth: 33, ..Default::default() }), ForestError::BadDepth(33));
        assert_eq!(bad(ForestConfig { trees: 0, ..Default::default() }), ForestError::BadShape);
    }

    #[test]
    fn exact_duplicate_ranks_first() {
        let mut ix = ForestIndex::new(ForestConfig::default()).unwrap();
        assert!(ix.query::<f64>(&fs([1, 2]), 3).is_empty());
        ix.insert(0, fs(0..20), "a".into()).unwrap();
        ix.insert(1, fs(10..30), "b".into()).unwrap();
        ix.insert(2, fs(100..120), "c".into()).unwrap();
        let out = ix.query::<f64>(&fs(10..30), 3);
        assert_eq!(&*out[0].tactic, "b");
        assert_eq!(out[0].score, 1.0);
        assert!(ix.insert(3, FeatureSet::new(), "d".into()).is_err());
        // a disjoint query never fails
        let _ = ix.query::<f64>(&fs(500..510), 3);
    }

    #[test]
    fn single_item_scores_exactly() {
        let mut ix = ForestIndex::new(ForestConfig::default()).unwrap();
        ix.insert(7, fs([1, 2, 3]), "t".into()).unwrap();
        let out = ix.query::<f64>(&fs([2, 3, 4, 5]), 1);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].source_seq, 7);
        assert!((out[0].score - 0.4).abs() < 1e-12);
    }

    #[test]
    fn pool_is_capped_and_filtered() {
        let cfg = ForestConfig { pool_cap: 10, ..Default::default() };
        let mut ix = ForestIndex::new(cfg).unwrap();
        for i in 0..200u32 {
            ix.insert(i as u64, fs(i..i + 5), format!("t{i}").into()).unwrap();
        }
        let out = ix.query_with(&fs(50..55), 5, &|s| s % 2 == 0, jaccard::<f64>);
        assert!(out.scored <= 10);
        assert!(out.predictions.iter().all(|p| p.source_seq % 2 == 0));
    }

    #[test]
    fn reinsert_replaces() {
        let mut ix = ForestIndex::new(ForestConfig::default()).unwrap();
        ix.insert(0, fs([1, 2]), "a".into()).unwrap();
        ix.insert(0, fs([5, 6]), "b".into()).unwrap();
        assert_eq!(ix.len(), 1);
        assert_eq!(ix.candidates(&fs([5, 6]), &|_| true), vec![0]);
        assert!(ix.trees.iter().all(|t| t.len() == 1));
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let build = || {
            let mut ix = ForestIndex::new(ForestConfig { seed: 99, ..Default::default() }).unwrap();
            for i in 0..300u32 {
                ix.insert(i as u64, fs((i % 37)..(i % 37) + 12), format!("t{}", i % 50).into()).unwrap();
            }
            ix
        };
        let (a, b) = (build(), build());
        assert_eq!(a.query::<f64>(&fs(3..15), 10), b.query::<f64>(&fs(3..15), 10));
    }
}
