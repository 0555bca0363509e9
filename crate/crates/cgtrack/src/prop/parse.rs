//! Recursive-descent parser for the proposition grammar.

use super::{AtomicProp, PropError, PropFormula, Relation, TaskDomain, Term, Weight};

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Number(u64),
    Eq,
    Lt,
    Gt,
    Neq,
    Plus,
    Wedge,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Number(n) => format!("`{n}`"),
            Tok::Eq => "`=`".into(),
            Tok::Lt => "`<`".into(),
            Tok::Gt => "`>`".into(),
            Tok::Neq => "`!=`".into(),
            Tok::Plus => "`+`".into(),
            Tok::Wedge => "`∧`".into(),
        }
    }
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>, PropError> {
    let mut toks = Vec::new();
    let mut iter = text.char_indices().peekable();
    while let Some(&(pos, c)) = iter.peek() {
        if c.is_whitespace() {
            iter.next();
        } else if c.is_ascii_alphabetic() || c == '_' {
            let mut word = String::new();
            while let Some(&(_, c)) = iter.peek() {
                if c.is_ascii_alphanumeric() || c == '_' {
                    word.push(c);
                    iter.next();
                } else {
                    break;
                }
            }
            toks.push((pos, Tok::Ident(word)));
        } else if c.is_ascii_digit() {
            let mut number: u64 = 0;
            while let Some(&(_, c)) = iter.peek() {
                if let Some(d) = c.to_digit(10) {
                    number = number.saturating_mul(10).saturating_add(d as u64);
                    iter.next();
                } else {
                    break;
                }
            }
            toks.push((pos, Tok::Number(number)));
        } else {
            match c {
                '=' => {
                    iter.next();
                    toks.push((pos, Tok::Eq));
                }
                '<' => {
                    iter.next();
                    toks.push((pos, Tok::Lt));
                }
                '>' => {
                    iter.next();
                    toks.push((pos, Tok::Gt));
                }
                '+' => {
                    iter.next();
                    toks.push((pos, Tok::Plus));
                }
                '∧' => {
                    iter.next();
                    toks.push((pos, Tok::Wedge));
                }
                '!' => {
                    iter.next();
                    match iter.peek() {
                        Some(&(_, '=')) => {
                            iter.next();
                            toks.push((pos, Tok::Neq));
                        }
                        other => {
                            return Err(PropError::Syntax {
                                pos,
                                expected: "`=` after `!`",
                                found: other
                                    .map(|&(_, c)| format!("`{c}`"))
                                    .unwrap_or_else(|| "end of input".into()),
                            })
                        }
                    }
                }
                other => {
                    return Err(PropError::Syntax {
                        pos,
                        expected: "a block name, number, relation, `+`, or `and`",
                        found: format!("`{other}`"),
                    })
                }
            }
        }
    }
    Ok(toks)
}

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    at: usize,
    domain: &'a TaskDomain,
    len: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&(usize, Tok)> {
        self.toks.get(self.at)
    }

    fn next(&mut self) -> Option<(usize, Tok)> {
        let t = self.toks.get(self.at).cloned();
        if t.is_some() {
            self.at += 1;
        }
        t
    }

    fn err_here(&self, expected: &'static str) -> PropError {
        match self.peek() {
            Some((pos, tok)) => PropError::Syntax {
                pos: *pos,
                expected,
                found: tok.describe(),
            },
            None => PropError::Syntax {
                pos: self.len,
                expected,
                found: "end of input".into(),
            },
        }
    }

    fn block(&mut self, expected: &'static str) -> Result<super::BlockId, PropError> {
        match self.peek() {
            Some((pos, Tok::Ident(name))) => {
                let (pos, name) = (*pos, name.clone());
                self.at += 1;
                self.domain
                    .block_named(&name)
                    .ok_or(PropError::UnknownBlock { pos, name })
            }
            _ => Err(self.err_here(expected)),
        }
    }

    fn atom(&mut self) -> Result<AtomicProp, PropError> {
        let lhs = self.block("a block name")?;
        let rel = match self.next() {
            Some((_, Tok::Eq)) => Relation::Eq,
            Some((_, Tok::Lt)) => Relation::Lt,
            Some((_, Tok::Gt)) => Relation::Gt,
            Some((_, Tok::Neq)) => Relation::Neq,
            other => {
                if other.is_some() {
                    self.at -= 1;
                }
                return Err(self.err_here("a relation (`=`, `<`, `>`, or `!=`)"));
            }
        };
        let rhs = match self.peek() {
            Some((_, Tok::Number(grams))) => {
                let grams = *grams;
                self.at += 1;
                let weight = u32::try_from(grams)
                    .ok()
                    .map(Weight::new)
                    .filter(|w| self.domain.has_weight(*w))
                    .ok_or(PropError::WeightOutOfDomain { grams })?;
                Term::Weight(weight)
            }
            Some((_, Tok::Ident(_))) => {
                let first = self.block("a block name")?;
                let mut sum = vec![first];
                while matches!(self.peek(), Some((_, Tok::Plus))) {
                    self.at += 1;
                    sum.push(self.block("a block name after `+`")?);
                }
                if sum.len() == 1 {
                    Term::Block(sum.pop().expect("one block"))
                } else {
                    Term::Sum(sum)
                }
            }
            _ => return Err(self.err_here("a weight or block name")),
        };
        AtomicProp::new(lhs, rel, rhs)
    }
}

pub(super) fn parse_formula(text: &str, domain: &TaskDomain) -> Result<PropFormula, PropError> {
    let toks = tokenize(text)?;
    let mut parser = Parser {
        toks,
        at: 0,
        domain,
        len: text.len(),
    };
    let mut atoms = vec![parser.atom()?];
    loop {
        match parser.peek() {
            Some((_, Tok::Wedge)) => {
                parser.at += 1;
                atoms.push(parser.atom()?);
            }
            Some((_, Tok::Ident(word))) if word.eq_ignore_ascii_case("and") => {
                parser.at += 1;
                atoms.push(parser.atom()?);
            }
            Some(_) => return Err(parser.err_here("`and` or end of input")),
            None => break,
        }
    }
    PropFormula::new(atoms)
}
