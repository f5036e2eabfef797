//! A miniature tactic-script language: atoms, composition (`a; b`) and
//! dispatch (`a; [b | c]`). Everything else is opaque atom text and is
//! recorded as a single tactic.

use std::fmt;

use thiserror::Error;

use crate::db::normalize_tactic;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScriptAst {
    Atom(String),
    Then(Box<ScriptAst>, Box<ScriptAst>),
    ThenDispatch(Box<ScriptAst>, Vec<ScriptAst>),
    /// Records the state before running the wrapped atom.
    Recorded(Box<ScriptAst>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScriptError {
    #[error("parse error at byte {pos}: {reason}")]
    Parse { pos: usize, reason: &'static str },
    #[error("script is already instrumented")]
    AlreadyInstrumented,
}

fn parse_err(pos: usize, reason: &'static str) -> ScriptError {
    ScriptError::Parse { pos, reason }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        let rest = &self.src[self.pos..];
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.src[self.pos..].chars().next()
    }

    /// Atom text runs up to a top-level `;`, `|`, `[` or `]`. Parentheses
    /// group, so separators inside them belong to the atom.
    fn atom(&mut self) -> Result<ScriptAst, ScriptError> {
        self.skip_ws();
        let start = self.pos;
        let mut depth = 0usize;
        for (i, c) in self.src[start..].char_indices() {
            match c {
                '(' => depth += 1,
                ')' if depth == 0 => return Err(parse_err(start + i, "unbalanced ')'")),
                ')' => depth -= 1,
                ';' | '|' | '[' | ']' if depth == 0 => {
                    self.pos = start + i;
                    return self.finish_atom(start);
                }
                _ => {}
            }
        }
        if depth > 0 {
            return Err(parse_err(self.src.len(), "unbalanced '('"));
        }
        self.pos = self.src.len();
        self.finish_atom(start)
    }

    fn finish_atom(&self, start: usize) -> Result<ScriptAst, ScriptError> {
        let text = normalize_tactic(&self.src[start..self.pos]);
        if text.is_empty() {
            return Err(parse_err(start, "empty tactic"));
        }
        Ok(ScriptAst::Atom(text))
    }

    fn seq(&mut self) -> Result<ScriptAst, ScriptError> {
        if self.peek() == Some('[') {
            return Err(parse_err(self.pos, "dispatch must follow ';'"));
        }
        let mut acc = self.atom()?;
        while self.peek() == Some(';') {
            self.pos += 1;
            if self.peek() == Some('[') {
                self.pos += 1;
                let branches = self.branches()?;
                acc = ScriptAst::ThenDispatch(Box::new(acc), branches);
            } else {
                acc = ScriptAst::Then(Box::new(acc), Box::new(self.atom()?));
            }
        }
        Ok(acc)
    }

    fn branches(&mut self) -> Result<Vec<ScriptAst>, ScriptError> {
        let mut out = Vec::new();
        loop {
            if matches!(self.peek(), Some('|' | ']')) {
                return Err(parse_err(self.pos, "empty branch"));
            }
            if self.peek().is_none() {
                return Err(parse_err(self.pos, "unbalanced '['"));
            }
            out.push(self.seq()?);
            match self.peek() {
                Some('|') => self.pos += 1,
                Some(']') => {
                    self.pos += 1;
                    return Ok(out);
                }
                None => return Err(parse_err(self.pos, "unbalanced '['")),
                Some(_) => return Err(parse_err(self.pos, "expected '|' or ']'")),
            }
        }
    }
}

pub fn parse_script(text: &str) -> Result<ScriptAst, ScriptError> {
    let mut p = Parser { src: text, pos: 0 };
    let ast = p.seq()?;
    match p.peek() {
        None => Ok(ast),
        Some('[') => Err(parse_err(p.pos, "dispatch must follow ';'")),
        Some(']') => Err(parse_err(p.pos, "unbalanced ']'")),
        Some(_) => Err(parse_err(p.pos, "unexpected separator")),
    }
}

impl ScriptAst {
    pub fn atom(text: &str) -> Self {
        ScriptAst::Atom(normalize_tactic(text))
    }

    pub fn is_instrumented(&self) -> bool {
        match self {
            ScriptAst::Atom(_) => false,
            ScriptAst::Recorded(_) => true,
            ScriptAst::Then(a, b) => a.is_instrumented() || b.is_instrumented(),
            ScriptAst::ThenDispatch(a, bs) => a.is_instrumented() || bs.iter().any(ScriptAst::is_instrumented),
        }
    }

    /// Atom texts in left-to-right order.
    pub fn atoms(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            ScriptAst::Atom(t) => out.push(t),
            ScriptAst::Recorded(a) => a.collect_atoms(out),
            ScriptAst::Then(a, b) => {
                a.collect_atoms(out);
                b.collect_atoms(out);
            }
            ScriptAst::ThenDispatch(a, bs) => {
                a.collect_atoms(out);
                bs.iter().for_each(|b| b.collect_atoms(out));
            }
        }
    }

    fn wrap(self) -> Self {
        match self {
            a @ ScriptAst::Atom(_) => ScriptAst::Recorded(Box::new(a)),
            ScriptAst::Then(a, b) => ScriptAst::Then(Box::new(a.wrap()), Box::new(b.wrap())),
            ScriptAst::ThenDispatch(a, bs) => {
                ScriptAst::ThenDispatch(Box::new(a.wrap()), bs.into_iter().map(ScriptAst::wrap).collect())
            }
            r @ ScriptAst::Recorded(_) => r,
        }
    }
}

/// Wraps every atom in a recording node.
pub fn instrument(ast: &ScriptAst) -> Result<ScriptAst, ScriptError> {
    if ast.is_instrumented() {
        return Err(ScriptError::AlreadyInstrumented);
    }
    Ok(ast.clone().wrap())
}

impl fmt::Display for ScriptAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScriptAst::Atom(t) => f.write_str(t),
            ScriptAst::Recorded(a) => write!(f, "r {a}"),
            ScriptAst::Then(a, b) => write!(f, "{a}; {b}"),
            ScriptAst::ThenDispatch(a, bs) => {
                write!(f, "{a}; [")?;
                for (i, b) in bs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" | ")?;
                    }
                    write!(f, "{b}")?;
                }
                f.write_str("]")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use ScriptAst::*;

    fn atom(s: &str) -> ScriptAst {
        Atom(s.into())
    }

    #[test]
    fn composition_and_dispatch() {
        let ast = parse_script("tac1; [tac2 | tac3]; tac4").unwrap();
        assert_eq!(
            ast,
            Then(Box::new(ThenDispatch(Box::new(atom("tac1")), vec![atom("tac2"), atom("tac3")])), Box::new(atom("tac4")))
        );
        assert_eq!(instrument(&ast).unwrap().to_string(), "r tac1; [r tac2 | r tac3]; r tac4");
    }

    #[test]
    fn single_atom() {
        let ast = parse_script("auto").unwrap();
        assert_eq!(ast, atom("auto"));
        let r = instrument(&ast).unwrap();
        assert_eq!(r, Recorded(Box::new(atom("auto"))));
        assert_eq!(r.to_string(), "r auto");
        assert_eq!(instrument(&r), Err(ScriptError::AlreadyInstrumented));
    }

    #[test]
    fn nested_branches() {
        let ast = parse_script("a; [b; c | d]").unwrap();
        assert_eq!(instrument(&ast).unwrap().to_string(), "r a; [r b; r c | r d]");
    }

    #[test]
    fn atoms_keep_parenthesized_separators() {
        let ast = parse_script("apply (f; g)  ;  exact   (x | y)").unwrap();
        assert_eq!(ast.atoms(), ["apply (f; g)", "exact (x | y)"]);
    }

    #[test]
    fn malformed_scripts() {
        for bad in ["a; [b | ]", "a; [b", "[a | b]", "a [b]", "a;", "; a", "a; [b] c", "a ]", "", "a; (b", "a) ; b", "a; [ ]", "a | b"] {
            assert!(matches!(parse_script(bad), Err(ScriptError::Parse { .. })), "{bad:?} should fail");
        }
    }

    fn arb_ast() -> impl Strategy<Value = ScriptAst> {
        let leaf = "[a-z]{1,6}( [a-z0-9]{1,3})?".prop_map(Atom);
        leaf.prop_recursive(4, 24, 4, |inner| {
            prop_oneof![
                (inner.clone(), "[a-z]{1,5}").prop_map(|(a, b)| Then(Box::new(a), Box::new(Atom(b)))),
                (inner.clone(), prop::collection::vec(inner, 1..4)).prop_map(|(a, bs)| ThenDispatch(Box::new(a), bs)),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(ast in arb_ast()) {
            let printed = ast.to_string();
            let reparsed = parse_script(&printed).unwrap();
            prop_assert_eq!(parse_script(&reparsed.to_string()).unwrap(), reparsed.clone());
            let inst = instrument(&reparsed).unwrap();
            prop_assert_eq!(inst.atoms(), reparsed.atoms());
            prop_assert!(instrument(&inst).is_err());
        }
    }
}
