//! Collects the (state, tactic) pairs emitted by recording nodes while a
//! script runs.

use std::io::Write;

use thiserror::Error;

use crate::corpus::PairRecord;
use crate::term::ProofState;

#[derive(Debug, Error)]
pub enum SinkError {
    #[error("writing pair records: {0}")]
    Io(#[from] std::io::Error),
    #[error("serializing pair record: {0}")]
    Json(#[from] serde_json::Error),
}

/// Receives pairs from [`crate::env::run_script`].
pub trait Recorder {
    /// Called with the focused state before the tactic runs.
    fn record(&mut self, state: &ProofState, tactic: &str) -> Result<(), SinkError>;

    /// Called after an atom ran successfully, with the number of goals it produced.
    fn executed(&mut self, _produced: usize) {}
}

/// Pairs recorded for one lemma. Seqs continue from `start_seq`, so a file
/// is recorded by chaining sessions through [`RecordingSession::next_seq`].
pub struct RecordingSession {
    file: String,
    lemma: String,
    next_seq: u64,
    pairs: Vec<PairRecord>,
    pending: Option<usize>,
    writer: Option<Box<dyn Write>>,
}

impl RecordingSession {
    pub fn new(file: impl Into<String>, lemma: impl Into<String>, start_seq: u64) -> Self {
        RecordingSession {
            file: file.into(),
            lemma: lemma.into(),
            next_seq: start_seq,
            pairs: Vec::new(),
            pending: None,
            writer: None,
        }
    }

    /// Also stream the pairs as JSONL to `writer` on [`finish`](Self::finish).
    pub fn with_writer(mut self, writer: Box<dyn Write>) -> Self {
        self.writer = Some(writer);
        self
    }

    pub fn pairs(&self) -> &[PairRecord] {
        &self.pairs
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    pub fn record_pair(&mut self, state: &ProofState, tactic: &str) -> Result<(), SinkError> {
        self.pending = Some(self.pairs.len());
        self.pairs.push(PairRecord {
            file: self.file.clone(),
            lemma: self.lemma.clone(),
            seq: self.next_seq,
            state: state.clone(),
            tactic: tactic.to_owned(),
            subgoals: None,
        });
        self.next_seq += 1;
        Ok(())
    }

    /// Flushes to the writer, if any, and returns the recorded pairs.
    pub fn finish(mut self) -> Result<Vec<PairRecord>, SinkError> {
        if let Some(w) = self.writer.as_mut() {
            for p in &self.pairs {
                serde_json::to_writer(&mut *w, p)?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
        }
        Ok(self.pairs)
    }
}

impl Recorder for RecordingSession {
    fn record(&mut self, state: &ProofState, tactic: &str) -> Result<(), SinkError> {
        self.record_pair(state, tactic)
    }

    fn executed(&mut self, produced: usize) {
        if let Some(i) = self.pending.take() {
            self.pairs[i].subgoals = Some(produced);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{run_script, GoalStack, ProofOutcome, RuleKernel};
    use crate::script::{instrument, parse_script};
    use crate::term::parse_term;
    use std::sync::{Arc, Mutex};

    fn kernel() -> RuleKernel {
        RuleKernel::from_json(
            r#"[
              {"tactic": "split", "match_root": "and", "subgoal_templates": ["$1", "$2"]},
              {"tactic": "trivial", "match_root": "true", "subgoal_templates": []},
              {"tactic": "cases", "match_root": "four", "subgoal_templates": ["$1", "$2", "$3", "$4"]},
              {"tactic": "close", "match_root": "*", "subgoal_templates": []}
            ]"#,
        )
        .unwrap()
    }

    fn goal(s: &str) -> GoalStack {
        GoalStack::single(ProofState::goal_only(parse_term(s).unwrap()))
    }

    #[test]
    fn seqs_and_subgoal_counts() {
        let ast = instrument(&parse_script("split; [trivial | trivial]").unwrap()).unwrap();
        let mut s = RecordingSession::new("f", "l", 0);
        assert_eq!(run_script(&kernel(), &goal("(and true true)"), &ast, Some(&mut s)), ProofOutcome::Solved);
        let pairs = s.finish().unwrap();
        assert_eq!(pairs.iter().map(|p| p.seq).collect::<Vec<_>>(), [0, 1, 2]);
        assert_eq!(pairs.iter().map(|p| p.tactic.as_str()).collect::<Vec<_>>(), ["split", "trivial", "trivial"]);
        assert_eq!(pairs.iter().map(|p| p.subgoals).collect::<Vec<_>>(), [Some(2), Some(0), Some(0)]);
    }

    #[test]
    fn uninstrumented_records_nothing() {
        let ast = parse_script("split; [trivial | trivial]").unwrap();
        let mut s = RecordingSession::new("f", "l", 5);
        assert_eq!(run_script(&kernel(), &goal("(and true true)"), &ast, Some(&mut s)), ProofOutcome::Solved);
        assert!(s.pairs().is_empty());
        assert_eq!(s.next_seq(), 5);
    }

    #[test]
    fn case_split_then_shared_tactic() {
        // n cases closed by one shared tactic record n + 1 executions
        let ast = instrument(&parse_script("cases; close").unwrap()).unwrap();
        let mut s = RecordingSession::new("f", "l", 0);
        assert_eq!(run_script(&kernel(), &goal("(four a b c d)"), &ast, Some(&mut s)), ProofOutcome::Solved);
        assert_eq!(s.pairs().len(), 5);
    }

    #[derive(Clone, Default)]
    struct Shared(Arc<Mutex<Vec<u8>>>);

    impl Write for Shared {
        fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
            self.0.lock().unwrap().extend_from_slice(buf);
            Ok(buf.len())
        }
        fn flush(&mut self) -> std::io::Result<()> {
            Ok(())
        }
    }

    #[test]
    fn writes_jsonl() {
        let buf = Shared::default();
        let mut s = RecordingSession::new("A/f.v", "lem", 0).with_writer(Box::new(buf.clone()));
        s.record_pair(&ProofState::goal_only(parse_term("(f x)").unwrap()), "auto").unwrap();
        s.finish().unwrap();
        let text = String::from_utf8(buf.0.lock().unwrap().clone()).unwrap();
        assert_eq!(
            text,
            "{\"file\":\"A/f.v\",\"lemma\":\"lem\",\"seq\":0,\"state\":{\"hyps\":[],\"goal\":\"(f x)\"},\"tactic\":\"auto\"}\n"
        );
    }
}
