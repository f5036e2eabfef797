//! Diagonal best-first proof search.
//!
//! A node reached through prediction ranks `r1, r2, ...` costs
//! `sum(1 + r_i)`. Expanding nodes in cost order gives the subtree under the
//! rank-`i` prediction exactly one more level of depth than the subtree under
//! its rank-`i + 1` sibling. Equal costs expand shorter rank paths first,
//! then lexicographically smaller ones.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet};
use std::sync::Arc;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::env::{Failure, GoalStack, ProofEnv, ProofOutcome};
use crate::predict::Prediction;
use crate::term::ProofState;

/// Default number of predictions tried per node.
pub const DEFAULT_K: usize = 16;

/// Produces ranked tactic predictions for a proof state.
pub trait TacticPredictor {
    fn predict(&mut self, state: &ProofState, k: usize) -> Vec<Prediction>;
}

impl<F: FnMut(&ProofState, usize) -> Vec<Prediction>> TacticPredictor for F {
    fn predict(&mut self, state: &ProofState, k: usize) -> Vec<Prediction> {
        self(state, k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchBudget {
    pub wall_clock: Option<Duration>,
    pub max_expansions: Option<usize>,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("a search budget needs a wall-clock or expansion limit and k >= 1")]
pub struct BudgetError;

impl SearchBudget {
    pub fn new(wall_clock: Option<Duration>, max_expansions: Option<usize>, k: usize) -> Result<Self, BudgetError> {
        if (wall_clock.is_none() && max_expansions.is_none()) || k == 0 {
            return Err(BudgetError);
        }
        Ok(SearchBudget { wall_clock, max_expansions, k })
    }

    pub fn expansions(max: usize, k: usize) -> Self {
        SearchBudget { wall_clock: None, max_expansions: Some(max), k }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchNode {
    pub stack: GoalStack,
    pub rank_path: Vec<usize>,
    pub cost: usize,
    pub script: Vec<Arc<str>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SearchOutcome {
    Found(Vec<String>),
    Exhausted,
    BudgetExceeded,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SearchStats {
    pub expansions: usize,
    pub applications: usize,
    pub elapsed: Duration,
    pub max_depth: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchResult {
    pub outcome: SearchOutcome,
    pub stats: SearchStats,
}

impl SearchResult {
    pub fn found(&self) -> Option<&[String]> {
        match &self.outcome {
            SearchOutcome::Found(s) => Some(s),
            _ => None,
        }
    }
}

type QueueKey = Reverse<(usize, usize, Vec<usize>, usize)>;

pub fn diagonal_search(
    env: &dyn ProofEnv,
    root: &GoalStack,
    predictor: &mut dyn TacticPredictor,
    budget: &SearchBudget,
) -> SearchResult {
    diagonal_search_observed(env, root, predictor, budget, &mut |_| {})
}

/// Like [`diagonal_search`], calling `observe` on every node as it is expanded.
pub fn diagonal_search_observed(
    env: &dyn ProofEnv,
    root: &GoalStack,
    predictor: &mut dyn TacticPredictor,
    budget: &SearchBudget,
    observe: &mut dyn FnMut(&SearchNode),
) -> SearchResult {
    let start = Instant::now();
    let mut stats = SearchStats::default();
    let mut nodes: Vec<SearchNode> = Vec::new();
    let mut queue: BinaryHeap<QueueKey> = BinaryHeap::new();
    let mut visited: HashSet<GoalStack> = HashSet::new();

    let finish = |outcome, mut stats: SearchStats| {
        stats.elapsed = start.elapsed();
        SearchResult { outcome, stats }
    };

    if root.is_solved() {
        return finish(SearchOutcome::Found(Vec::new()), stats);
    }
    visited.insert(root.clone());
    nodes.push(SearchNode { stack: root.clone(), rank_path: Vec::new(), cost: 0, script: Vec::new() });
    queue.push(Reverse((0, 0, Vec::new(), 0)));

    while let Some(Reverse((_, _, _, idx))) = queue.pop() {
        if budget.max_expansions.is_some_and(|m| stats.expansions >= m)
            || budget.wall_clock.is_some_and(|w| start.elapsed() >= w)
        {
            return finish(SearchOutcome::BudgetExceeded, stats);
        }
        stats.expansions += 1;
        let node = std::mem::replace(
            &mut nodes[idx],
            SearchNode { stack: GoalStack::default(), rank_path: Vec::new(), cost: 0, script: Vec::new() },
        );
        stats.max_depth = stats.max_depth.max(node.rank_path.len());
        observe(&node);

        let focused = node.stack.focused().expect("queued stacks are unsolved");
        let predictions = predictor.predict(focused, budget.k);
        for (rank, p) in predictions.into_iter().take(budget.k).enumerate() {
            stats.applications += 1;
            match env.apply_tactic(&node.stack, &p.tactic) {
                ProofOutcome::Solved => {
                    let mut script: Vec<String> = node.script.iter().map(|t| t.to_string()).collect();
                    script.push(p.tactic.to_string());
                    return finish(SearchOutcome::Found(script), stats);
                }
                ProofOutcome::Progress(stack) => {
                    if !visited.insert(stack.clone()) {
                        continue;
                    }
                    let mut rank_path = node.rank_path.clone();
                    rank_path.push(rank);
                    let mut script = node.script.clone();
                    script.push(p.tactic.clone());
                    let cost = node.cost + 1 + rank;
                    queue.push(Reverse((cost, rank_path.len(), rank_path.clone(), nodes.len())));
                    nodes.push(SearchNode { stack, rank_path, cost, script });
                }
                ProofOutcome::Failure(_) => {}
            }
        }
    }
    finish(SearchOutcome::Exhausted, stats)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("step {step} failed: {failure}")]
pub struct ReplayError {
    pub step: usize,
    pub failure: Failure,
}

/// Applies a script tactic by tactic. An empty script on a nonempty stack
/// yields `Progress` with the stack unchanged.
pub fn replay<S: AsRef<str>>(env: &dyn ProofEnv, root: &GoalStack, script: &[S]) -> Result<ProofOutcome, ReplayError> {
    let mut stack = root.clone();
    for (step, t) in script.iter().enumerate() {
        if stack.is_solved() {
            return Err(ReplayError { step, failure: Failure::EmptyStack });
        }
        match env.apply_tactic(&stack, t.as_ref()) {
            ProofOutcome::Solved => stack = GoalStack::default(),
            ProofOutcome::Progress(s) => stack = s,
            ProofOutcome::Failure(failure) => return Err(ReplayError { step, failure }),
        }
    }
    Ok(if stack.is_solved() { ProofOutcome::Solved } else { ProofOutcome::Progress(stack) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::RuleKernel;
    use crate::term::{parse_term, Term};

    /// Every tactic `t<i>` succeeds below `depth`, producing a goal that
    /// encodes the rank path.
    pub(crate) struct UniformTree {
        pub depth: usize,
    }

    pub(crate) fn path_of(goal: &Term) -> Vec<usize> {
        goal.children().iter().map(|c| c.label()[1..].parse().unwrap()).collect()
    }

    impl ProofEnv for UniformTree {
        fn apply_to_goal(&self, goal: &ProofState, tactic: &str) -> Result<Vec<ProofState>, Failure> {
            let path = path_of(&goal.goal);
            if path.len() >= self.depth {
                return Err(Failure::NoMatch);
            }
            let mut children = goal.goal.children().to_vec();
            children.push(Term::leaf(format!("r{}", &tactic[1..])));
            Ok(vec![ProofState::goal_only(Term::new("node", children))])
        }
    }

    fn fixed(k: usize) -> impl FnMut(&ProofState, usize) -> Vec<Prediction> {
        move |_: &ProofState, _| {
            (0..k).map(|i| Prediction { score: 1.0 / (1 + i) as f64, tactic: format!("t{i}").into(), source_seq: 0 }).collect()
        }
    }

    fn root() -> GoalStack {
        GoalStack::single(ProofState::goal_only(Term::leaf("node")))
    }

    #[test]
    fn first_six_expansions() {
        let mut order = Vec::new();
        let env = UniformTree { depth: 10 };
        let budget = SearchBudget::expansions(6, 2);
        let res = diagonal_search_observed(&env, &root(), &mut fixed(2), &budget, &mut |n| order.push(n.rank_path.clone()));
        assert_eq!(res.outcome, SearchOutcome::BudgetExceeded);
        assert_eq!(order, vec![vec![], vec![0], vec![1], vec![0, 0], vec![0, 1], vec![1, 0]]);
    }

    #[test]
    fn zero_budget() {
        let env = UniformTree { depth: 3 };
        let res = diagonal_search(&env, &root(), &mut fixed(2), &SearchBudget::expansions(0, 2));
        assert_eq!(res.outcome, SearchOutcome::BudgetExceeded);
        assert_eq!((res.stats.expansions, res.stats.applications, res.stats.max_depth), (0, 0, 0));
    }

    #[test]
    fn exhausts_finite_tree() {
        let env = UniformTree { depth: 2 };
        let res = diagonal_search(&env, &root(), &mut fixed(2), &SearchBudget::expansions(100, 2));
        assert_eq!(res.outcome, SearchOutcome::Exhausted);
        assert_eq!(res.stats.expansions, 7);
    }

    fn kernel() -> RuleKernel {
        RuleKernel::from_json(
            r#"[
              {"tactic": "split", "match_root": "and", "subgoal_templates": ["$1", "$2"]},
              {"tactic": "trivial", "match_root": "true", "subgoal_templates": []},
              {"tactic": "flip", "match_root": "and", "subgoal_templates": ["(and $2 $1)"]}
            ]"#,
        )
        .unwrap()
    }

    fn ranked(tactics: &'static [&'static str]) -> impl FnMut(&ProofState, usize) -> Vec<Prediction> {
        move |_: &ProofState, _| {
            tactics.iter().map(|t| Prediction { score: 1.0, tactic: (*t).into(), source_seq: 0 }).collect()
        }
    }

    #[test]
    fn immediate_solution() {
        let root = GoalStack::single(ProofState::goal_only(parse_term("true").unwrap()));
        let res = diagonal_search(&kernel(), &root, &mut ranked(&["trivial", "split"]), &SearchBudget::expansions(10, 4));
        assert_eq!(res.found().unwrap(), ["trivial"]);
        assert_eq!(res.stats.expansions, 1);
    }

    #[test]
    fn finds_and_replays_multi_step_proof() {
        let root = GoalStack::single(ProofState::goal_only(parse_term("(and true (and true true))").unwrap()));
        let res = diagonal_search(&kernel(), &root, &mut ranked(&["flip", "split", "trivial"]), &SearchBudget::expansions(1000, 3));
        let script = res.found().unwrap().to_vec();
        assert_eq!(replay(&kernel(), &root, &script), Ok(ProofOutcome::Solved));
        // flip cycles back to a visited stack and is pruned
        assert!(res.stats.expansions < 20);
    }

    #[test]
    fn replay_outcomes() {
        let root = GoalStack::single(ProofState::goal_only(parse_term("(and true true)").unwrap()));
        assert_eq!(replay::<&str>(&kernel(), &root, &[]), Ok(ProofOutcome::Progress(root.clone())));
        let err = replay(&kernel(), &root, &["split", "split"]).unwrap_err();
        assert_eq!((err.step, err.failure), (1, Failure::NoMatch));
        assert_eq!(replay(&kernel(), &root, &["split", "trivial", "trivial"]), Ok(ProofOutcome::Solved));
    }

    #[test]
    fn rank_zero_chain_is_depth_first() {
        // only rank-0 predictions apply: the proof is found in depth expansions
        let env = RuleKernel::from_json(
            r#"[{"tactic": "peel", "match_root": "s", "subgoal_templates": ["$1"]},
                {"tactic": "done", "match_root": "z", "subgoal_templates": []}]"#,
        )
        .unwrap();
        let goal = parse_term("(s (s (s (s z))))").unwrap();
        let mut pred = |s: &ProofState, _: usize| {
            let first = if s.goal.label() == "z" { "done" } else { "peel" };
            [first, "bogus1", "bogus2"]
                .iter()
                .map(|t| Prediction { score: 1.0, tactic: (*t).into(), source_seq: 0 })
                .collect::<Vec<_>>()
        };
        let res = diagonal_search(&env, &GoalStack::single(ProofState::goal_only(goal)), &mut pred, &SearchBudget::expansions(100, 3));
        assert_eq!(res.found().unwrap().len(), 5);
        assert_eq!(res.stats.expansions, 5);
    }

    #[test]
    fn budget_requires_a_limit() {
        assert!(SearchBudget::new(None, None, 4).is_err());
        assert!(SearchBudget::new(None, Some(1), 0).is_err());
        assert!(SearchBudget::new(Some(Duration::from_secs(1)), None, 4).is_ok());
    }
}
