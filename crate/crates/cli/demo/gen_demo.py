#!/usr/bin/env python3
"""Regenerates the rule-kernel demo: rules.json and scripts.jsonl.

Lemma statements are random propositions whose proofs take at most five
tactic executions; each lemma ships the script that proves it. Running
`tactic-forge record --rules rules.json scripts.jsonl` turns the scripts
into pair records.
"""

import json
import random
from pathlib import Path

RULES = [
    ("split", "and", ["$1", "$2"]),
    ("split", "iff", ["(impl $1 $2)", "(impl $2 $1)"]),
    ("constructor", "and", ["$1", "$2"]),
    ("constructor", "true", []),
    ("left", "or", ["$1"]),
    ("right", "or", ["$2"]),
    ("intro", "impl", ["$2"]),
    ("intros", "forall", ["$2"]),
    ("intros", "impl", ["$2"]),
    ("trivial", "true", []),
    ("reflexivity", "eq", []),
    ("auto", "true", []),
    ("auto", "eq", []),
    ("omega", "le", []),
    ("omega", "lt", []),
    ("discriminate", "neq", []),
    ("unfold not", "not", ["(impl $1 false)"]),
    ("exfalso", "impl", ["(impl $1 false)"]),
    ("contradiction", "impl", []),
    ("destruct b", "bool_cases", ["$1", "$2"]),
    ("induction n", "nat_ind", ["$1", "$2"]),
    ("simpl", "eval", ["$1"]),
    ("exists 0", "ex", ["$2"]),
]

VARS = ["n", "m", "p", "k"]


def arith(rng, depth=2):
    if depth == 0 or rng.random() < 0.35:
        return rng.choice(VARS + ["zero"])
    op = rng.choice(["plus", "mult", "succ", "minus"])
    if op == "succ":
        return f"(succ {arith(rng, depth - 1)})"
    return f"({op} {arith(rng, depth - 1)} {arith(rng, depth - 1)})"


def junk(rng):
    """A proposition with no rule that closes it."""
    return rng.choice(["false", f"(p {rng.choice(VARS)})", f"(q {rng.choice(VARS)})", f"(gt {arith(rng, 1)} zero)"])


# Each generator returns (goal text, proof tree); a proof tree is
# (tactic, [subtrees]) and its node count is the proof length.

def leaf(rng, theme):
    kinds = {
        "logic": ["true", "true", "eq"],
        "arith": ["eq", "le", "lt", "neq"],
        "bool": ["eq", "true", "neq"],
    }[theme]
    kind = rng.choice(kinds)
    if kind == "true":
        return "true", (rng.choice(["trivial", "auto", "constructor"]), [])
    if kind == "eq":
        a = arith(rng)
        return f"(eq {a} {a})", (rng.choice(["reflexivity", "auto"]), [])
    if kind == "neq":
        return f"(neq (succ {arith(rng, 1)}) zero)", ("discriminate", [])
    return f"({kind} {arith(rng, 1)} {arith(rng)})", ("omega", [])


def prop(rng, budget, theme):
    """A goal provable in at most `budget` steps."""
    if budget <= 1:
        return leaf(rng, theme)
    choices = {
        "logic": ["and", "or", "impl", "iff", "not", "leaf"],
        "arith": ["and", "forall", "nat_ind", "eval", "ex", "leaf"],
        "bool": ["bool_cases", "or", "impl", "and", "leaf"],
    }[theme]
    c = rng.choice(choices)
    if c == "leaf":
        return leaf(rng, theme)
    if c in ("and", "bool_cases", "nat_ind") and budget >= 3:
        b1 = rng.randint(1, budget - 2)
        g1, p1 = prop(rng, b1, theme)
        g2, p2 = prop(rng, budget - 1 - b1, theme)
        tac = {"and": rng.choice(["split", "split", "constructor"]), "bool_cases": "destruct b", "nat_ind": "induction n"}[c]
        return f"({c} {g1} {g2})", (tac, [p1, p2])
    if c == "or":
        g, p = prop(rng, budget - 1, theme)
        if rng.random() < 0.5:
            return f"(or {g} {junk(rng)})", ("left", [p])
        return f"(or {junk(rng)} {g})", ("right", [p])
    if c == "impl":
        g, p = prop(rng, budget - 1, theme)
        return f"(impl {junk(rng)} {g})", (rng.choice(["intro", "intros"]), [p])
    if c == "forall":
        g, p = prop(rng, budget - 1, theme)
        return f"(forall {rng.choice(VARS)} {g})", ("intros", [p])
    if c == "eval":
        g, p = prop(rng, budget - 1, theme)
        return f"(eval {g})", ("simpl", [p])
    if c == "ex":
        g, p = prop(rng, budget - 1, theme)
        return f"(ex {rng.choice(VARS)} {g})", ("exists 0", [p])
    if c == "iff" and budget >= 5:
        g1, p1 = leaf(rng, theme)
        g2, p2 = leaf(rng, theme)
        return f"(iff {g1} {g2})", ("split", [("intro", [p2]), ("intro", [p1])])
    if c == "not" and budget >= 3:
        g = junk(rng)
        return f"(not {g})", ("unfold not", [("contradiction", [])])
    return leaf(rng, theme)


def size(tree):
    return 1 + sum(size(c) for c in tree[1])


def script(tree):
    tac, kids = tree
    if not kids:
        return tac
    if len(kids) == 1:
        return f"{tac}; {script(kids[0])}"
    subs = [script(k) for k in kids]
    if all(s == subs[0] for s in subs) and ";" not in subs[0]:
        return f"{tac}; {subs[0]}"
    return f"{tac}; [{' | '.join(subs)}]"


FILES = [
    ("Logic/Basics.v", [], "logic", 14),
    ("Logic/Connectives.v", ["Logic/Basics.v"], "logic", 14),
    ("Arith/Eq.v", ["Logic/Basics.v"], "arith", 14),
    ("Arith/Order.v", ["Arith/Eq.v"], "arith", 12),
    ("Bool/Cases.v", ["Logic/Basics.v"], "bool", 12),
]


def main():
    rng = random.Random(20190101)
    here = Path(__file__).parent
    rules = [{"tactic": t, "match_root": r, "subgoal_templates": s} for t, r, s in RULES]
    (here / "rules.json").write_text(json.dumps(rules, indent=2) + "\n")
    lines = []
    for name, deps, theme, count in FILES:
        lines.append({"file": name, "deps": deps})
        stem = name.split("/")[-1].removesuffix(".v").lower()
        for i in range(count):
            goal, tree = prop(rng, rng.choice([1, 2, 3, 3, 4, 4, 5, 5]), theme)
            assert size(tree) <= 5
            lines.append({"file": name, "lemma": f"{stem}_{i}", "script": script(tree), "goal": goal})
    with open(here / "scripts.jsonl", "w") as f:
        for rec in lines:
            f.write(json.dumps(rec) + "\n")


if __name__ == "__main__":
    main()
