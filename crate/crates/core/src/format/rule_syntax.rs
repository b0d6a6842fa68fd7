//! Textual rule language: `body -> head`, e.g.
//! `vehicle(?v), on(?v, ?p), not occupied_position(?q) -> can_perform(?v, follow)`.

use std::fmt;

use thiserror::Error;

use crate::kb::{Atom, Rule, RuleHead, Term, VerdictKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("at offset {offset}: {message}")]
pub struct RuleSyntaxError {
    /// Byte offset into the rule text.
    pub offset: usize,
    pub message: String,
}

/// Parses the body and head of a rule. The name is supplied by the caller.
pub fn parse_rule(name: &str, text: &str) -> Result<Rule, RuleSyntaxError> {
    let mut p = Parser { src: text, pos: 0 };
    let (body, negated) = p.literals()?;
    p.skip_ws();
    if !p.eat("->") {
        return Err(p.error("expected `,` or `->`"));
    }
    let head = p.head()?;
    p.skip_ws();
    if p.pos != text.len() {
        return Err(p.error("unexpected trailing input after rule head"));
    }
    Ok(Rule { name: name.to_owned(), body, negated, head })
}

/// Parses a single atom, e.g. `left_of(?q, ?p)`.
pub fn parse_atom(text: &str) -> Result<Atom, RuleSyntaxError> {
    let mut p = Parser { src: text, pos: 0 };
    let atom = p.atom()?;
    p.skip_ws();
    if p.pos != text.len() {
        return Err(p.error("unexpected trailing input after atom"));
    }
    Ok(atom)
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn error(&self, message: &str) -> RuleSyntaxError {
        let message = if self.rest().starts_with('#') || self.rest().starts_with("//") {
            "comments are not permitted in rules".to_owned()
        } else {
            message.to_owned()
        };
        RuleSyntaxError { offset: self.pos, message }
    }

    fn rest(&self) -> &str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    fn eat(&mut self, token: &str) -> bool {
        if self.rest().starts_with(token) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Option<&'a str> {
        let rest = self.rest();
        let mut end = 0;
        for (i, c) in rest.char_indices() {
            let ok =
                if i == 0 { c.is_ascii_lowercase() } else { c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' };
            if !ok {
                break;
            }
            end = i + c.len_utf8();
        }
        if end == 0 {
            return None;
        }
        let start = self.pos;
        self.pos += end;
        Some(&self.src[start..start + end])
    }

    fn literals(&mut self) -> Result<(Vec<Atom>, Vec<Atom>), RuleSyntaxError> {
        let mut body = Vec::new();
        let mut negated = Vec::new();
        loop {
            self.skip_ws();
            let save = self.pos;
            let negate = self.eat("not") && {
                let after = self.rest();
                let spaced = after.starts_with(char::is_whitespace);
                self.skip_ws();
                spaced && self.rest().starts_with(|c: char| c.is_ascii_lowercase())
            };
            if !negate {
                self.pos = save;
            }
            let atom = self.atom()?;
            if negate {
                negated.push(atom);
            } else {
                body.push(atom);
            }
            self.skip_ws();
            if !self.eat(",") {
                return Ok((body, negated));
            }
        }
    }

    fn atom(&mut self) -> Result<Atom, RuleSyntaxError> {
        self.skip_ws();
        let predicate = self.ident().ok_or_else(|| self.error("expected a predicate name"))?.to_owned();
        self.skip_ws();
        if !self.eat("(") {
            return Err(self.error("expected `(` after predicate name"));
        }
        let mut args = Vec::new();
        loop {
            self.skip_ws();
            args.push(self.term()?);
            self.skip_ws();
            if self.eat(")") {
                break;
            }
            if !self.eat(",") {
                return Err(self.error("expected `,` or `)` in argument list"));
            }
        }
        Ok(Atom { predicate, args })
    }

    fn term(&mut self) -> Result<Term, RuleSyntaxError> {
        if self.eat("?") {
            let name = self.ident().ok_or_else(|| self.error("expected a variable name after `?`"))?;
            Ok(Term::Var(name.to_owned()))
        } else {
            let name = self.ident().ok_or_else(|| self.error("expected a variable (`?x`) or a class name"))?;
            Ok(Term::Const(name.to_owned()))
        }
    }

    fn head(&mut self) -> Result<RuleHead, RuleSyntaxError> {
        self.skip_ws();
        let save = self.pos;
        for kind in [VerdictKind::Forbidden, VerdictKind::InvalidComfortOnly] {
            if self.eat(kind.keyword()) {
                let after = self.rest().trim_start();
                if after.is_empty() {
                    return Ok(RuleHead::Verdict(kind));
                }
                self.pos = save;
            }
        }
        Ok(RuleHead::Atom(self.atom()?))
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "?{v}"),
            Term::Const(c) => f.write_str(c),
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.predicate)?;
        for (i, t) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{t}")?;
        }
        f.write_str(")")
    }
}

impl fmt::Display for RuleHead {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuleHead::Atom(a) => write!(f, "{a}"),
            RuleHead::Verdict(v) => f.write_str(v.keyword()),
        }
    }
}

/// Canonical text: positive atoms, then negated atoms, then the head.
impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let literals = self
            .body
            .iter()
            .map(|a| a.to_string())
            .chain(self.negated.iter().map(|a| format!("not {a}")))
            .collect::<Vec<_>>()
            .join(", ");
        write!(f, "{literals} -> {}", self.head)
    }
}
