//! JSONL corpus format, ingestion and export.
//!
//! Three record kinds, one per line:
//!
//! ```text
//! {"file": "Arith/Plus.v", "deps": ["Init/Logic.v"]}
//! {"file": "Arith/Plus.v", "lemma": "plus_comm", "seq": 0,
//!  "state": {"hyps": ["(le n m)"], "goal": "(eq (plus n m) (plus m n))"}, "tactic": "intros"}
//! {"file": "Arith/Plus.v", "lemma": "plus_comm", "script": "intros; auto", "goal": "(eq ...)"}
//! ```
//!
//! A header must precede the records of its file. Pair records may carry
//! `subgoals`, the number of goals the tactic produced when recorded; script
//! records may carry the lemma statement (`goal`, `hyps`) so they can be run.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::db::normalize_tactic;
use crate::env::TraceStep;
use crate::term::{state_features, FeatureSet, ProofState, Term};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileHeader {
    pub file: String,
    pub deps: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairRecord {
    pub file: String,
    pub lemma: String,
    pub seq: u64,
    pub state: ProofState,
    pub tactic: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subgoals: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptRecord {
    pub file: String,
    pub lemma: String,
    pub script: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<Term>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub hyps: Vec<Term>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Record {
    Header(FileHeader),
    Pair(PairRecord),
    Script(ScriptRecord),
}

impl Record {
    pub fn parse(line: &str) -> Result<Record, String> {
        let value: serde_json::Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let obj = value.as_object().ok_or("record is not a JSON object")?;
        let res = if obj.contains_key("deps") {
            serde_json::from_value(value).map(Record::Header)
        } else if obj.contains_key("tactic") {
            serde_json::from_value(value).map(Record::Pair)
        } else if obj.contains_key("script") {
            serde_json::from_value(value).map(Record::Script)
        } else {
            return Err("unrecognized record: expected `deps`, `tactic` or `script`".into());
        };
        res.map_err(|e| e.to_string())
    }

    pub fn to_json(&self) -> String {
        match self {
            Record::Header(h) => serde_json::to_string(h),
            Record::Pair(p) => serde_json::to_string(p),
            Record::Script(s) => serde_json::to_string(s),
        }
        .expect("records always serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    pub source: String,
    pub line: usize,
    pub reason: String,
}

impl std::fmt::Display for LineError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}: {}", self.source, self.line, self.reason)
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{} bad record(s); first: {}", .0.len(), .0[0])]
    Records(Vec<LineError>),
    #[error("file `{file}` depends on unknown file `{dep}`")]
    UnresolvedDep { file: String, dep: String },
    #[error("dependency cycle through `{0}`")]
    Cycle(String),
    #[error("no lemma `{lemma}` in {}", file.as_deref().unwrap_or("corpus"))]
    UnknownLemma { file: Option<String>, lemma: String },
}

/// One recorded tactic application with its precomputed features.
#[derive(Debug, Clone, PartialEq)]
pub struct Pair {
    pub seq: u64,
    pub state: ProofState,
    pub features: FeatureSet,
    pub tactic: String,
    pub subgoals: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lemma {
    pub name: String,
    pub pairs: Vec<Pair>,
    pub script: Option<ScriptRecord>,
}

impl Lemma {
    /// Original proof length: the number of recorded tactic executions.
    pub fn length(&self) -> usize {
        self.pairs.len()
    }

    /// The statement: the first recorded state, or the script's goal.
    pub fn statement(&self) -> Option<ProofState> {
        self.pairs.first().map(|p| p.state.clone()).or_else(|| {
            let s = self.script.as_ref()?;
            Some(ProofState::new(s.hyps.clone(), s.goal.clone()?))
        })
    }

    pub fn trace(&self) -> Vec<TraceStep> {
        self.pairs
            .iter()
            .map(|p| TraceStep { state: p.state.clone(), tactic: p.tactic.clone(), subgoals: p.subgoals })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusFile {
    pub name: String,
    pub deps: Vec<String>,
    pub lemmas: Vec<Lemma>,
}

impl CorpusFile {
    /// Top-level directory of the file path.
    pub fn development(&self) -> &str {
        self.name.split('/').next().unwrap_or(&self.name)
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&Lemma, &Pair)> {
        self.lemmas.iter().flat_map(|l| l.pairs.iter().map(move |p| (l, p)))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    pub files: Vec<CorpusFile>,
}

#[derive(Default)]
struct Builder {
    files: Vec<CorpusFile>,
    index: HashMap<String, usize>,
    seqs: Vec<HashSet<u64>>,
    errors: Vec<LineError>,
}

impl Builder {
    fn lemma_mut(&mut self, fi: usize, lemma: &str) -> &mut Lemma {
        let lemmas = &mut self.files[fi].lemmas;
        match lemmas.iter().position(|l| l.name == lemma) {
            Some(i) => &mut lemmas[i],
            None => {
                lemmas.push(Lemma { name: lemma.to_owned(), pairs: Vec::new(), script: None });
                lemmas.last_mut().unwrap()
            }
        }
    }

    fn add(&mut self, record: Record) -> Result<(), String> {
        match record {
            Record::Header(h) => {
                if self.index.contains_key(&h.file) {
                    return Err(format!("duplicate header for `{}`", h.file));
                }
                self.index.insert(h.file.clone(), self.files.len());
                self.files.push(CorpusFile { name: h.file, deps: h.deps, lemmas: Vec::new() });
                self.seqs.push(HashSet::new());
            }
            Record::Pair(p) => {
                let fi = *self.index.get(&p.file).ok_or_else(|| format!("pair before header of `{}`", p.file))?;
                if !self.seqs[fi].insert(p.seq) {
                    return Err(format!("duplicate seq {} in `{}`", p.seq, p.file));
                }
                let tactic = normalize_tactic(&p.tactic);
                if tactic.is_empty() {
                    return Err("empty tactic".into());
                }
                let pair = Pair { seq: p.seq, features: state_features(&p.state), state: p.state, tactic, subgoals: p.subgoals };
                self.lemma_mut(fi, &p.lemma).pairs.push(pair);
            }
            Record::Script(s) => {
                let fi = *self.index.get(&s.file).ok_or_else(|| format!("script before header of `{}`", s.file))?;
                let lemma = self.lemma_mut(fi, &s.lemma);
                if lemma.script.is_some() {
                    return Err(format!("duplicate script for lemma `{}`", s.lemma));
                }
                lemma.script = Some(s);
            }
        }
        Ok(())
    }
}

impl Corpus {
    /// Parses JSONL text; `source` names it in error messages.
    pub fn from_jsonl(source: &str, text: &str) -> Result<Corpus, CorpusError> {
        Self::from_sources(&[(source.to_owned(), text.to_owned())])
    }

    pub fn ingest<P: AsRef<Path>>(paths: &[P]) -> Result<Corpus, CorpusError> {
        let sources = paths
            .iter()
            .map(|p| {
                let path = p.as_ref().display().to_string();
                std::fs::read_to_string(p).map(|t| (path.clone(), t)).map_err(|source| CorpusError::Io { path, source })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_sources(&sources)
    }

    fn from_sources(sources: &[(String, String)]) -> Result<Corpus, CorpusError> {
        let mut b = Builder::default();
        for (source, text) in sources {
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                if let Err(reason) = Record::parse(line).and_then(|r| b.add(r)) {
                    b.errors.push(LineError { source: source.clone(), line: i + 1, reason });
                }
            }
        }
        if !b.errors.is_empty() {
            return Err(CorpusError::Records(b.errors));
        }
        let mut corpus = Corpus { files: b.files };
        for f in &mut corpus.files {
            f.lemmas.iter_mut().for_each(|l| l.pairs.sort_by_key(|p| p.seq));
            f.lemmas.sort_by_key(|l| l.pairs.first().map_or(u64::MAX, |p| p.seq));
        }
        corpus.validate()?;
        Ok(corpus)
    }

    fn validate(&self) -> Result<(), CorpusError> {
        let names: HashMap<&str, usize> = self.files.iter().enumerate().map(|(i, f)| (f.name.as_str(), i)).collect();
        for f in &self.files {
            for d in &f.deps {
                if !names.contains_key(d.as_str()) {
                    return Err(CorpusError::UnresolvedDep { file: f.name.clone(), dep: d.clone() });
                }
            }
        }
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut mark = vec![0u8; self.files.len()];
        fn visit(c: &Corpus, names: &HashMap<&str, usize>, mark: &mut [u8], i: usize) -> Result<(), CorpusError> {
            match mark[i] {
                1 => return Err(CorpusError::Cycle(c.files[i].name.clone())),
                2 => return Ok(()),
                _ => {}
            }
            mark[i] = 1;
            for d in &c.files[i].deps {
                visit(c, names, mark, names[d.as_str()])?;
            }
            mark[i] = 2;
            Ok(())
        }
        for i in 0..self.files.len() {
            visit(self, &names, &mut mark, i)?;
        }
        Ok(())
    }

    pub fn file_index(&self, name: &str) -> Option<usize> {
        self.files.iter().position(|f| f.name == name)
    }

    /// Transitive dependencies of a file, in corpus order.
    pub fn transitive_deps(&self, file: usize) -> Vec<usize> {
        let mut seen = vec![false; self.files.len()];
        let mut stack: Vec<usize> = Vec::new();
        let push_deps = |i: usize, stack: &mut Vec<usize>| {
            for d in &self.files[i].deps {
                stack.push(self.file_index(d).expect("validated corpus"));
            }
        };
        push_deps(file, &mut stack);
        while let Some(i) = stack.pop() {
            if !std::mem::replace(&mut seen[i], true) {
                push_deps(i, &mut stack);
            }
        }
        (0..self.files.len()).filter(|&i| seen[i]).collect()
    }

    /// Finds a lemma by name, optionally within one file.
    pub fn find_lemma(&self, file: Option<&str>, lemma: &str) -> Result<(usize, usize), CorpusError> {
        self.files
            .iter()
            .enumerate()
            .filter(|(_, f)| file.is_none_or(|n| f.name == n))
            .find_map(|(fi, f)| f.lemmas.iter().position(|l| l.name == lemma).map(|li| (fi, li)))
            .ok_or_else(|| CorpusError::UnknownLemma { file: file.map(str::to_owned), lemma: lemma.to_owned() })
    }

    pub fn pair_count(&self) -> usize {
        self.files.iter().map(|f| f.pairs().count()).sum()
    }

    pub fn lemma_count(&self) -> usize {
        self.files.iter().map(|f| f.lemmas.len()).sum()
    }

    /// Canonical records: each header, then per lemma its script and pairs.
    pub fn records(&self) -> Vec<Record> {
        let mut out = Vec::new();
        for f in &self.files {
            out.push(Record::Header(FileHeader { file: f.name.clone(), deps: f.deps.clone() }));
            for l in &f.lemmas {
                if let Some(s) = &l.script {
                    out.push(Record::Script(s.clone()));
                }
                for p in &l.pairs {
                    out.push(Record::Pair(PairRecord {
                        file: f.name.clone(),
                        lemma: l.name.clone(),
                        seq: p.seq,
                        state: p.state.clone(),
                        tactic: p.tactic.clone(),
                        subgoals: p.subgoals,
                    }));
                }
            }
        }
        out
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for r in self.records() {
            let _ = writeln!(s, "{}", r.to_json());
        }
        s
    }
}
