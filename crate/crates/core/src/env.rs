//! Proof environments: the [`ProofEnv`] abstraction, a rewrite-rule kernel,
//! a kernel replaying recorded traces, and tactic-script execution.
//!
//! Tactics always act on the first goal of the stack; subgoals they produce
//! are prepended in order.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::db::normalize_tactic;
use crate::recorder::Recorder;
use crate::script::ScriptAst;
use crate::term::{parse_term, ProofState, Term, TermError};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct GoalStack {
    goals: Vec<ProofState>,
}

impl GoalStack {
    pub fn new(goals: Vec<ProofState>) -> Self {
        GoalStack { goals }
    }

    pub fn single(state: ProofState) -> Self {
        GoalStack { goals: vec![state] }
    }

    pub fn goals(&self) -> &[ProofState] {
        &self.goals
    }

    pub fn focused(&self) -> Option<&ProofState> {
        self.goals.first()
    }

    // `is_solved` is the emptiness test.
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.goals.len()
    }

    pub fn is_solved(&self) -> bool {
        self.goals.is_empty()
    }

    /// Replaces the focused goal with `produced`.
    pub fn replace_focused(&self, produced: Vec<ProofState>) -> GoalStack {
        let mut goals = produced;
        goals.extend(self.goals.iter().skip(1).cloned());
        GoalStack { goals }
    }
}

impl fmt::Display for GoalStack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, g) in self.goals.iter().enumerate() {
            if i > 0 {
                f.write_str(" ;; ")?;
            }
            write!(f, "{g}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Error)]
pub enum Failure {
    #[error("unknown tactic `{0}`")]
    UnknownTactic(String),
    #[error("tactic does not apply to the focused goal")]
    NoMatch,
    #[error("dispatch has {branches} branches but {goals} goals were produced")]
    DispatchArity { branches: usize, goals: usize },
    #[error("tactic left the goal stack unchanged")]
    NoProgress,
    #[error("no goals to work on")]
    EmptyStack,
    #[error("recorder failed: {0}")]
    Recorder(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProofOutcome {
    Solved,
    Progress(GoalStack),
    Failure(Failure),
}

impl ProofOutcome {
    pub fn is_solved(&self) -> bool {
        matches!(self, ProofOutcome::Solved)
    }

    fn from_stack(before: &GoalStack, after: GoalStack) -> ProofOutcome {
        if after.is_solved() {
            ProofOutcome::Solved
        } else if after == *before {
            ProofOutcome::Failure(Failure::NoProgress)
        } else {
            ProofOutcome::Progress(after)
        }
    }
}

/// Something that can execute a tactic on a single focused goal.
pub trait ProofEnv {
    /// Goals that replace `goal` after running `tactic` on it.
    fn apply_to_goal(&self, goal: &ProofState, tactic: &str) -> Result<Vec<ProofState>, Failure>;

    fn apply_tactic(&self, stack: &GoalStack, tactic: &str) -> ProofOutcome {
        let Some(goal) = stack.focused() else {
            return ProofOutcome::Failure(Failure::EmptyStack);
        };
        match self.apply_to_goal(goal, &normalize_tactic(tactic)) {
            Ok(produced) => ProofOutcome::from_stack(stack, stack.replace_focused(produced)),
            Err(f) => ProofOutcome::Failure(f),
        }
    }
}

impl<E: ProofEnv + ?Sized> ProofEnv for &E {
    fn apply_to_goal(&self, goal: &ProofState, tactic: &str) -> Result<Vec<ProofState>, Failure> {
        (**self).apply_to_goal(goal, tactic)
    }
}

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("reading rules: {0}")]
    Io(#[from] std::io::Error),
    #[error("rule file is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("rule {index} (`{tactic}`): bad template: {source}")]
    Template { index: usize, tactic: String, source: TermError },
    #[error("rule {index} (`{tactic}`): {reason}")]
    Rule { index: usize, tactic: String, reason: String },
    #[error("trace for {lemma}: {reason}")]
    Trace { lemma: String, reason: String },
}

/// Serialized rule: on a goal whose root label is `match_root` (or any goal
/// for `*`), replace it by the instantiated templates. In a template, `$0`
/// is the whole goal and `$n` its n-th child.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleSpec {
    pub tactic: String,
    pub match_root: String,
    pub subgoal_templates: Vec<String>,
}

#[derive(Debug, Clone)]
struct Rule {
    root: Option<String>,
    templates: Vec<Term>,
}

fn instantiate(template: &Term, goal: &Term) -> Option<Term> {
    if let Some(pos) = template.label().strip_prefix('$') {
        if let Ok(n) = pos.parse::<usize>() {
            return match n {
                0 => Some(goal.clone()),
                n => goal.children().get(n - 1).cloned(),
            };
        }
    }
    let children = template.children().iter().map(|c| instantiate(c, goal)).collect::<Option<Vec<_>>>()?;
    Some(Term::new(template.label(), children))
}

/// Tactic name to rewrite rules; the first matching rule wins.
#[derive(Debug, Clone, Default)]
pub struct RuleKernel {
    rules: HashMap<String, Vec<Rule>>,
    specs: Vec<RuleSpec>,
}

impl RuleKernel {
    pub fn from_specs(specs: Vec<RuleSpec>) -> Result<Self, KernelError> {
        let mut rules: HashMap<String, Vec<Rule>> = HashMap::new();
        for (index, spec) in specs.iter().enumerate() {
            let tactic = normalize_tactic(&spec.tactic);
            if tactic.is_empty() || spec.match_root.trim().is_empty() {
                return Err(KernelError::Rule { index, tactic, reason: "empty tactic or match_root".into() });
            }
            let templates = spec
                .subgoal_templates
                .iter()
                .map(|t| parse_term(t))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|source| KernelError::Template { index, tactic: tactic.clone(), source })?;
            let root = match spec.match_root.trim() {
                "*" => None,
                r => Some(r.to_owned()),
            };
            rules.entry(tactic).or_default().push(Rule { root, templates });
        }
        Ok(RuleKernel { rules, specs })
    }

    pub fn from_json(text: &str) -> Result<Self, KernelError> {
        Self::from_specs(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, KernelError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn specs(&self) -> &[RuleSpec] {
        &self.specs
    }

    /// Distinct tactic names, sorted.
    pub fn tactics(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.rules.keys().map(String::as_str).collect();
        v.sort();
        v
    }
}

impl ProofEnv for RuleKernel {
    fn apply_to_goal(&self, goal: &ProofState, tactic: &str) -> Result<Vec<ProofState>, Failure> {
        let rules = self.rules.get(tactic).ok_or_else(|| Failure::UnknownTactic(tactic.to_owned()))?;
        for rule in rules {
            if rule.root.as_deref().is_some_and(|r| r != goal.goal.label()) {
                continue;
            }
            let produced: Option<Vec<ProofState>> = rule
                .templates
                .iter()
                .map(|t| instantiate(t, &goal.goal).map(|g| ProofState::new(goal.hyps.clone(), g)))
                .collect();
            if let Some(p) = produced {
                return Ok(p);
            }
        }
        Err(Failure::NoMatch)
    }
}

/// One recorded tactic application inside a lemma trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceStep {
    pub state: ProofState,
    pub tactic: String,
    /// Goals the tactic produced, when known.
    pub subgoals: Option<usize>,
}

/// Re-executes recorded proofs: applying a recorded tactic at a recorded
/// state yields the recorded children; anything else fails.
#[derive(Debug, Clone, Default)]
pub struct ReplayKernel {
    edges: HashMap<(ProofState, String), Vec<ProofState>>,
    tactics: HashSet<String>,
    conflicts: usize,
}

impl ReplayKernel {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds the edges of one lemma's pre-order trace. Steps without a
    /// subgoal count are read as a chain: each produces the next step's
    /// state, the last one closes the goal.
    pub fn add_trace(&mut self, lemma: &str, steps: &[TraceStep]) -> Result<(), KernelError> {
        let err = |reason: String| KernelError::Trace { lemma: lemma.to_owned(), reason };
        if steps.iter().all(|s| s.subgoals.is_none()) {
            for (i, s) in steps.iter().enumerate() {
                let children = steps.get(i + 1).map(|n| vec![n.state.clone()]).unwrap_or_default();
                self.add_edge(s, children);
            }
            return Ok(());
        }
        let mut next = 0;
        while next < steps.len() {
            next = self.add_subtree(steps, next).map_err(err)?;
        }
        Ok(())
    }

    fn add_subtree(&mut self, steps: &[TraceStep], i: usize) -> Result<usize, String> {
        let step = &steps[i];
        let count = step.subgoals.ok_or_else(|| format!("step {i} has no subgoal count"))?;
        let mut children = Vec::with_capacity(count);
        let mut next = i + 1;
        for _ in 0..count {
            let child = steps.get(next).ok_or_else(|| format!("step {i} expects {count} subgoals, trace ends"))?;
            children.push(child.state.clone());
            next = self.add_subtree(steps, next)?;
        }
        self.add_edge(step, children);
        Ok(next)
    }

    fn add_edge(&mut self, step: &TraceStep, children: Vec<ProofState>) {
        let tactic = normalize_tactic(&step.tactic);
        self.tactics.insert(tactic.clone());
        match self.edges.entry((step.state.clone(), tactic)) {
            std::collections::hash_map::Entry::Occupied(e) => {
                if *e.get() != children {
                    self.conflicts += 1;
                }
            }
            std::collections::hash_map::Entry::Vacant(e) => {
                e.insert(children);
            }
        }
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Recorded edges that disagreed with an earlier edge for the same
    /// (state, tactic) and were dropped.
    pub fn conflicts(&self) -> usize {
        self.conflicts
    }
}

impl ProofEnv for ReplayKernel {
    fn apply_to_goal(&self, goal: &ProofState, tactic: &str) -> Result<Vec<ProofState>, Failure> {
        // TODO: avoid cloning the state for the lookup key
        match self.edges.get(&(goal.clone(), tactic.to_owned())) {
            Some(children) => Ok(children.clone()),
            None if self.tactics.contains(tactic) => Err(Failure::NoMatch),
            None => Err(Failure::UnknownTactic(tactic.to_owned())),
        }
    }
}

/// Runs `ast` on a single goal, returning the goals that replace it.
pub fn run_on_goal(
    env: &dyn ProofEnv,
    goal: &ProofState,
    ast: &ScriptAst,
    recorder: &mut Option<&mut dyn Recorder>,
) -> Result<Vec<ProofState>, Failure> {
    match ast {
        ScriptAst::Atom(t) => {
            let produced = env.apply_to_goal(goal, t);
            if let (Some(r), Ok(p)) = (recorder.as_deref_mut(), &produced) {
                r.executed(p.len());
            }
            produced
        }
        ScriptAst::Recorded(inner) => {
            if let Some(r) = recorder.as_deref_mut() {
                r.record(goal, &inner.to_string()).map_err(|e| Failure::Recorder(e.to_string()))?;
            }
            run_on_goal(env, goal, inner, recorder)
        }
        ScriptAst::Then(a, b) => {
            let mut out = Vec::new();
            for g in run_on_goal(env, goal, a, recorder)? {
                out.extend(run_on_goal(env, &g, b, recorder)?);
            }
            Ok(out)
        }
        ScriptAst::ThenDispatch(a, branches) => {
            let produced = run_on_goal(env, goal, a, recorder)?;
            if produced.len() != branches.len() {
                return Err(Failure::DispatchArity { branches: branches.len(), goals: produced.len() });
            }
            let mut out = Vec::new();
            for (g, b) in produced.iter().zip(branches) {
                out.extend(run_on_goal(env, g, b, recorder)?);
            }
            Ok(out)
        }
    }
}

/// Runs a script on the focused goal of `stack`.
pub fn run_script(
    env: &dyn ProofEnv,
    stack: &GoalStack,
    ast: &ScriptAst,
    mut recorder: Option<&mut dyn Recorder>,
) -> ProofOutcome {
    let Some(goal) = stack.focused() else {
        return ProofOutcome::Failure(Failure::EmptyStack);
    };
    match run_on_goal(env, goal, ast, &mut recorder) {
        Ok(produced) => ProofOutcome::from_stack(stack, stack.replace_focused(produced)),
        Err(f) => ProofOutcome::Failure(f),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recorder::RecordingSession;
    use crate::script::{instrument, parse_script};

    fn st(s: &str) -> ProofState {
        ProofState::goal_only(parse_term(s).unwrap())
    }

    fn kernel() -> RuleKernel {
        RuleKernel::from_json(
            r#"[
              {"tactic": "split", "match_root": "and", "subgoal_templates": ["$1", "$2"]},
              {"tactic": "trivial", "match_root": "true", "subgoal_templates": []},
              {"tactic": "left", "match_root": "or", "subgoal_templates": ["$1"]},
              {"tactic": "swap", "match_root": "and", "subgoal_templates": ["(and $2 $1)"]},
              {"tactic": "cases", "match_root": "four", "subgoal_templates": ["$1", "$2", "$3", "$4"]},
              {"tactic": "idle", "match_root": "*", "subgoal_templates": ["$0"]},
              {"tactic": "third", "match_root": "*", "subgoal_templates": ["$3"]}
            ]"#,
        )
        .unwrap()
    }

    #[test]
    fn rule_application() {
        let k = kernel();
        let stack = GoalStack::new(vec![st("(and A B)"), st("C")]);
        assert_eq!(k.apply_tactic(&stack, "split"), ProofOutcome::Progress(GoalStack::new(vec![st("A"), st("B"), st("C")])));
        assert_eq!(k.apply_tactic(&GoalStack::single(st("true")), "trivial"), ProofOutcome::Solved);
        assert_eq!(
            k.apply_tactic(&GoalStack::single(st("true")), "frobnicate"),
            ProofOutcome::Failure(Failure::UnknownTactic("frobnicate".into()))
        );
        assert_eq!(k.apply_tactic(&GoalStack::single(st("A")), "split"), ProofOutcome::Failure(Failure::NoMatch));
        assert_eq!(k.apply_tactic(&GoalStack::single(st("(f a b)")), "third"), ProofOutcome::Failure(Failure::NoMatch));
        assert_eq!(k.apply_tactic(&GoalStack::single(st("A")), "idle"), ProofOutcome::Failure(Failure::NoProgress));
        assert_eq!(k.apply_tactic(&GoalStack::default(), "idle"), ProofOutcome::Failure(Failure::EmptyStack));
        assert_eq!(
            k.apply_tactic(&GoalStack::single(st("(and A (f B))")), "swap"),
            ProofOutcome::Progress(GoalStack::single(st("(and (f B) A)")))
        );
    }

    #[test]
    fn hypotheses_are_inherited() {
        let k = kernel();
        let goal = ProofState::new(vec![parse_term("H").unwrap()], parse_term("(and A B)").unwrap());
        match k.apply_tactic(&GoalStack::single(goal), "split") {
            ProofOutcome::Progress(s) => assert!(s.goals().iter().all(|g| g.hyps.len() == 1)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_rule_files() {
        assert!(RuleKernel::from_json("not json").is_err());
        assert!(RuleKernel::from_json(r#"[{"tactic": "x", "match_root": "a", "subgoal_templates": ["(b"]}]"#).is_err());
        assert!(RuleKernel::from_json(r#"[{"tactic": " ", "match_root": "a", "subgoal_templates": []}]"#).is_err());
    }

    #[test]
    fn scripts_record_every_atom() {
        let k = kernel();
        let ast = instrument(&parse_script("split; [trivial | trivial]").unwrap()).unwrap();
        let mut session = RecordingSession::new("f", "l", 0);
        let out = run_script(&k, &GoalStack::single(st("(and true true)")), &ast, Some(&mut session));
        assert_eq!(out, ProofOutcome::Solved);
        let tactics: Vec<&str> = session.pairs().iter().map(|p| p.tactic.as_str()).collect();
        assert_eq!(tactics, ["split", "trivial", "trivial"]);
        assert_eq!(session.pairs()[0].state, st("(and true true)"));
        assert_eq!(session.pairs()[1].state, st("true"));
    }

    #[test]
    fn composition_applies_to_every_produced_goal() {
        let k = kernel();
        let ast = instrument(&parse_script("cases; trivial").unwrap()).unwrap();
        let mut session = RecordingSession::new("f", "l", 0);
        let out = run_script(&k, &GoalStack::single(st("(four true true true true)")), &ast, Some(&mut session));
        assert_eq!(out, ProofOutcome::Solved);
        assert_eq!(session.pairs().len(), 5);
    }

    #[test]
    fn dispatch_arity_and_failures() {
        let k = kernel();
        let root = GoalStack::single(st("(and true true)"));
        let ast = parse_script("split; [trivial]").unwrap();
        assert_eq!(run_script(&k, &root, &ast, None), ProofOutcome::Failure(Failure::DispatchArity { branches: 1, goals: 2 }));
        let partial = parse_script("split").unwrap();
        assert!(matches!(run_script(&k, &root, &partial, None), ProofOutcome::Progress(s) if s.len() == 2));
        // a failing recorded atom still leaves its pair behind
        let ast = instrument(&parse_script("split; left").unwrap()).unwrap();
        let mut session = RecordingSession::new("f", "l", 0);
        assert_eq!(run_script(&k, &root, &ast, Some(&mut session)), ProofOutcome::Failure(Failure::NoMatch));
        assert_eq!(session.pairs().len(), 2);
    }

    #[test]
    fn replay_kernel_follows_recorded_edges() {
        let steps = vec![
            TraceStep { state: st("(and true true)"), tactic: "split".into(), subgoals: Some(2) },
            TraceStep { state: st("true"), tactic: "trivial".into(), subgoals: Some(0) },
            TraceStep { state: st("true"), tactic: "trivial".into(), subgoals: Some(0) },
        ];
        let mut k = ReplayKernel::new();
        k.add_trace("l", &steps).unwrap();
        assert_eq!(k.conflicts(), 0);
        let root = GoalStack::single(st("(and true true)"));
        let ProofOutcome::Progress(s) = k.apply_tactic(&root, "split") else { panic!() };
        assert_eq!(s.len(), 2);
        let ProofOutcome::Progress(s) = k.apply_tactic(&s, "trivial") else { panic!() };
        assert_eq!(k.apply_tactic(&s, "trivial"), ProofOutcome::Solved);
        assert_eq!(k.apply_tactic(&root, "trivial"), ProofOutcome::Failure(Failure::NoMatch));
        assert_eq!(k.apply_tactic(&root, "magic"), ProofOutcome::Failure(Failure::UnknownTactic("magic".into())));

        let truncated = &steps[..2];
        assert!(ReplayKernel::new().add_trace("l", truncated).is_err());
    }

    #[test]
    fn replay_kernel_chain_mode() {
        let steps = vec![
            TraceStep { state: st("a"), tactic: "t1".into(), subgoals: None },
            TraceStep { state: st("b"), tactic: "t2".into(), subgoals: None },
        ];
        let mut k = ReplayKernel::new();
        k.add_trace("l", &steps).unwrap();
        let ProofOutcome::Progress(s) = k.apply_tactic(&GoalStack::single(st("a")), "t1") else { panic!() };
        assert_eq!(k.apply_tactic(&s, "t2"), ProofOutcome::Solved);
    }
}
