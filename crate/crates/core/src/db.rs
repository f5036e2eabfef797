//! Append-only store of recorded (state features, tactic) pairs.

use std::sync::Arc;

use num_traits::Float;

use crate::term::{FeatureId, FeatureSet};

/// Collapses runs of whitespace and trims, so tactic text equality is meaningful.
pub fn normalize_tactic(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq)]
pub struct TacticEntry {
    pub file: Arc<str>,
    pub lemma: Arc<str>,
    pub seq: u64,
    pub features: FeatureSet,
    pub tactic: Arc<str>,
}

/// A lemma is identified by its file together with its name.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LemmaRef {
    pub file: Arc<str>,
    pub lemma: Arc<str>,
}

impl LemmaRef {
    pub fn new(file: impl Into<Arc<str>>, lemma: impl Into<Arc<str>>) -> Self {
        LemmaRef { file: file.into(), lemma: lemma.into() }
    }

    fn matches(&self, e: &TacticEntry) -> bool {
        *self.lemma == *e.lemma && *self.file == *e.file
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Window {
    /// Only entries recorded in the named file.
    FileOnly(Arc<str>),
    /// The `n` most recent entries.
    LastN(usize),
    All,
}

#[derive(Debug, Default, Clone)]
pub struct TacticDatabase {
    entries: Vec<TacticEntry>,
    /// Indexed by feature id: number of entries containing that feature.
    feature_counts: Vec<u32>,
}

impl TacticDatabase {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends an entry and returns its sequence number.
    pub fn insert(
        &mut self,
        file: impl Into<Arc<str>>,
        lemma: impl Into<Arc<str>>,
        features: FeatureSet,
        tactic: &str,
    ) -> u64 {
        let seq = self.entries.len() as u64;
        for &id in features.ids() {
            let id = id as usize;
            if id >= self.feature_counts.len() {
                self.feature_counts.resize(id + 1, 0);
            }
            self.feature_counts[id] += 1;
        }
        self.entries.push(TacticEntry {
            file: file.into(),
            lemma: lemma.into(),
            seq,
            features,
            tactic: normalize_tactic(tactic).into(),
        });
        seq
    }

    /// Number of entries, `N`.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[TacticEntry] {
        &self.entries
    }

    pub fn get(&self, seq: u64) -> Option<&TacticEntry> {
        self.entries.get(seq as usize)
    }

    pub fn feature_count(&self, id: FeatureId) -> u32 {
        self.feature_counts.get(id.0 as usize).copied().unwrap_or(0)
    }

    /// `ln(N / max(1, count))`, or zero for an empty database.
    pub fn tfidf<S: Float>(&self, id: FeatureId) -> S {
        if self.entries.is_empty() {
            return S::zero();
        }
        let n = S::from(self.entries.len()).unwrap();
        let c = S::from(self.feature_count(id).max(1)).unwrap();
        (n / c).ln()
    }

    pub fn view(&self, window: Window, exclude: Option<LemmaRef>) -> DbView<'_> {
        DbView { db: self, upto: self.entries.len(), window, exclude }
    }

    pub fn all(&self) -> DbView<'_> {
        self.view(Window::All, None)
    }
}

/// A filtered, read-only snapshot of a database, bounded by the entry count
/// at the time it was taken.
#[derive(Debug, Clone)]
pub struct DbView<'a> {
    db: &'a TacticDatabase,
    upto: usize,
    window: Window,
    exclude: Option<LemmaRef>,
}

impl<'a> DbView<'a> {
    pub fn db(&self) -> &'a TacticDatabase {
        self.db
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    fn start(&self) -> usize {
        match self.window {
            Window::LastN(n) => self.upto.saturating_sub(n),
            _ => 0,
        }
    }

    /// Whether the entry with this seq passes the filter.
    pub fn admits(&self, seq: u64) -> bool {
        let i = seq as usize;
        if i < self.start() || i >= self.upto {
            return false;
        }
        let e = &self.db.entries[i];
        if let Window::FileOnly(f) = &self.window {
            if **f != *e.file {
                return false;
            }
        }
        !self.exclude.as_ref().is_some_and(|l| l.matches(e))
    }

    /// Matching entries in seq order.
    pub fn iter(&self) -> impl DoubleEndedIterator<Item = &'a TacticEntry> + '_ {
        let entries = &self.db.entries[self.start()..self.upto];
        entries.iter().filter(move |e| {
            if let Window::FileOnly(f) = &self.window {
                if **f != *e.file {
                    return false;
                }
            }
            !self.exclude.as_ref().is_some_and(|l| l.matches(e))
        })
    }

    pub fn contains_tactic(&self, tactic: &str) -> bool {
        self.iter().any(|e| &*e.tactic == tactic)
    }
}
