//! Term ASTs, their s-expression syntax, and shingle features.
//!
//! A proof state is characterized by the set of one-shingles (node labels)
//! and two-shingles (ordered ancestor/descendant label pairs at tree
//! distance 1 or 2, with distinct labels) of every sentence it contains.

use std::collections::HashMap;
use std::fmt;
use std::sync::{OnceLock, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TermError {
    #[error("malformed term at byte {pos}: {reason}")]
    MalformedTerm { pos: usize, reason: &'static str },
}

/// A rooted, ordered tree of identifiers.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Term {
    label: String,
    children: Vec<Term>,
}

fn is_delimiter(c: char) -> bool {
    c.is_whitespace() || c == '(' || c == ')'
}

impl Term {
    /// Builds a node. Panics if `label` is empty or contains whitespace or
    /// parentheses, since such a label could not be printed back.
    pub fn new(label: impl Into<String>, children: Vec<Term>) -> Self {
        let label = label.into();
        assert!(
            !label.is_empty() && !label.chars().any(is_delimiter),
            "invalid term label {label:?}"
        );
        Term { label, children }
    }

    pub fn leaf(label: impl Into<String>) -> Self {
        Term::new(label, Vec::new())
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn children(&self) -> &[Term] {
        &self.children
    }

    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(Term::node_count).sum::<usize>()
    }

    /// Pre-order iterator over every node label.
    pub fn labels(&self) -> impl Iterator<Item = &str> {
        let mut stack = vec![self];
        std::iter::from_fn(move || {
            let t = stack.pop()?;
            stack.extend(t.children.iter().rev());
            Some(t.label.as_str())
        })
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.children.is_empty() {
            return f.write_str(&self.label);
        }
        write!(f, "({}", self.label)?;
        for c in &self.children {
            write!(f, " {c}")?;
        }
        f.write_str(")")
    }
}

impl std::str::FromStr for Term {
    type Err = TermError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_term(s)
    }
}

impl Serialize for Term {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Term {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        parse_term(&s).map_err(serde::de::Error::custom)
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        let rest = &self.src[self.pos..];
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn err(&self, reason: &'static str) -> TermError {
        TermError::MalformedTerm { pos: self.pos, reason }
    }

    fn ident(&mut self) -> Option<&'a str> {
        let rest = &self.src[self.pos..];
        let end = rest.find(is_delimiter).unwrap_or(rest.len());
        if end == 0 {
            return None;
        }
        self.pos += end;
        Some(&rest[..end])
    }

    fn term(&mut self) -> Result<Term, TermError> {
        self.skip_ws();
        match self.peek() {
            None => Err(self.err("unexpected end of input")),
            Some(')') => Err(self.err("unexpected ')'")),
            Some('(') => {
                self.pos += 1;
                self.skip_ws();
                let head = self.ident().ok_or_else(|| self.err("empty head"))?;
                let mut children = Vec::new();
                loop {
                    self.skip_ws();
                    match self.peek() {
                        None => return Err(self.err("unbalanced parentheses")),
                        Some(')') => {
                            self.pos += 1;
                            break;
                        }
                        Some(_) => children.push(self.term()?),
                    }
                }
                Ok(Term { label: head.to_owned(), children })
            }
            Some(_) => {
                let id = self.ident().ok_or_else(|| self.err("expected identifier"))?;
                Ok(Term::leaf(id))
            }
        }
    }
}

/// Parses `IDENT | "(" IDENT term* ")"`.
pub fn parse_term(text: &str) -> Result<Term, TermError> {
    let mut p = Parser { src: text, pos: 0 };
    let t = p.term()?;
    p.skip_ws();
    if p.pos != text.len() {
        return Err(p.err("trailing input"));
    }
    Ok(t)
}

/// A one-shingle or two-shingle.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Feature {
    Unigram(String),
    /// Ancestor label first.
    Bigram(String, String),
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Feature::Unigram(a) => f.write_str(a),
            Feature::Bigram(a, b) => write!(f, "{a}_{b}"),
        }
    }
}

/// Dense id of an interned [`Feature`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FeatureId(pub u32);

#[derive(Default)]
struct Interner {
    ids: HashMap<Feature, FeatureId>,
    features: Vec<Feature>,
}

fn interner() -> &'static RwLock<Interner> {
    static TABLE: OnceLock<RwLock<Interner>> = OnceLock::new();
    TABLE.get_or_init(Default::default)
}

impl Feature {
    /// Interns the feature in the process-wide table.
    pub fn intern(&self) -> FeatureId {
        if let Some(&id) = interner().read().unwrap().ids.get(self) {
            return id;
        }
        let mut table = interner().write().unwrap();
        if let Some(&id) = table.ids.get(self) {
            return id;
        }
        let id = FeatureId(u32::try_from(table.features.len()).expect("feature table overflow"));
        table.features.push(self.clone());
        table.ids.insert(self.clone(), id);
        id
    }

    /// Looks a feature up without interning it.
    pub fn lookup(&self) -> Option<FeatureId> {
        interner().read().unwrap().ids.get(self).copied()
    }
}

impl FeatureId {
    /// Panics on ids that were never handed out by [`Feature::intern`].
    pub fn resolve(self) -> Feature {
        interner().read().unwrap().features[self.0 as usize].clone()
    }
}

/// An immutable set of feature ids, stored sorted for merge-based set algebra.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct FeatureSet {
    ids: Vec<u32>,
}

impl FeatureSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a set from raw ids; duplicates collapse.
    pub fn from_ids(ids: impl IntoIterator<Item = u32>) -> Self {
        let mut ids: Vec<u32> = ids.into_iter().collect();
        ids.sort_unstable();
        ids.dedup();
        FeatureSet { ids }
    }

    pub fn from_features<'a>(features: impl IntoIterator<Item = &'a Feature>) -> Self {
        Self::from_ids(features.into_iter().map(|f| f.intern().0))
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains(&self, id: FeatureId) -> bool {
        self.ids.binary_search(&id.0).is_ok()
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn iter(&self) -> impl Iterator<Item = FeatureId> + '_ {
        self.ids.iter().map(|&i| FeatureId(i))
    }

    /// Resolves every id back to its feature, in id order.
    pub fn features(&self) -> Vec<Feature> {
        self.iter().map(FeatureId::resolve).collect()
    }

    /// Sorted canonical text forms; handy in tests and debugging output.
    pub fn to_strings(&self) -> Vec<String> {
        let mut v: Vec<String> = self.features().iter().map(ToString::to_string).collect();
        v.sort();
        v
    }

    pub fn intersection_len(&self, other: &FeatureSet) -> usize {
        let (mut i, mut j, mut n) = (0, 0, 0);
        let (a, b) = (&self.ids, &other.ids);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }

    pub fn union_len(&self, other: &FeatureSet) -> usize {
        self.len() + other.len() - self.intersection_len(other)
    }

    pub fn union(&self, other: &FeatureSet) -> FeatureSet {
        Self::from_ids(self.ids.iter().chain(&other.ids).copied())
    }
}

impl FromIterator<FeatureId> for FeatureSet {
    fn from_iter<I: IntoIterator<Item = FeatureId>>(iter: I) -> Self {
        Self::from_ids(iter.into_iter().map(|f| f.0))
    }
}

fn collect_shingles<'t>(t: &'t Term, parent: Option<&'t str>, grand: Option<&'t str>, out: &mut Vec<Feature>) {
    let label = t.label.as_str();
    out.push(Feature::Unigram(label.to_owned()));
    for anc in [parent, grand].into_iter().flatten() {
        if anc != label {
            out.push(Feature::Bigram(anc.to_owned(), label.to_owned()));
        }
    }
    for c in &t.children {
        collect_shingles(c, Some(label), parent, out);
    }
}

/// Shingle features of a term, uninterned.
pub fn shingle_features(t: &Term) -> Vec<Feature> {
    let mut out = Vec::new();
    collect_shingles(t, None, None, &mut out);
    out.sort();
    out.dedup();
    out
}

pub fn shingles(t: &Term) -> FeatureSet {
    FeatureSet::from_features(&shingle_features(t))
}

/// Hypotheses plus the goal to prove.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ProofState {
    pub hyps: Vec<Term>,
    pub goal: Term,
}

impl ProofState {
    pub fn new(hyps: Vec<Term>, goal: Term) -> Self {
        ProofState { hyps, goal }
    }

    pub fn goal_only(goal: Term) -> Self {
        ProofState { hyps: Vec::new(), goal }
    }

    pub fn features(&self) -> FeatureSet {
        state_features(self)
    }
}

impl fmt::Display for ProofState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for h in &self.hyps {
            write!(f, "{h}, ")?;
        }
        write!(f, "|- {}", self.goal)
    }
}

/// Union of the shingles of every hypothesis and the goal.
pub fn state_features(s: &ProofState) -> FeatureSet {
    let mut out = Vec::new();
    for t in s.hyps.iter().chain(std::iter::once(&s.goal)) {
        collect_shingles(t, None, None, &mut out);
    }
    out.sort();
    out.dedup();
    FeatureSet::from_features(&out)
}
