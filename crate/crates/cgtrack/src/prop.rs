//! The task proposition language: blocks, weights, relations, canonical
//! formatting, evaluation against weight assignments, and enumeration of the
//! proposition catalog for a task domain.
//!
//! Every atomic proposition relates a block to a weight, another block, or a
//! sum of blocks (`red = 10`, `red < blue`, `green = red + blue`). Formulas
//! are conjunctions of atoms. All values canonicalize on construction so that
//! set membership and string comparison are stable: symmetric relations are
//! reordered by block order, `>` over an out-of-order pair flips to `<`, sum
//! members sort by block order, and formula atoms sort by canonical text.

mod parse;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use itertools::Itertools;
use thiserror::Error;

/// Errors from parsing, canonicalization, evaluation, and catalog
/// enumeration.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PropError {
    #[error("syntax error at byte {pos}: expected {expected}, found {found}")]
    Syntax {
        pos: usize,
        expected: &'static str,
        found: String,
    },
    #[error("unknown block `{name}` at byte {pos}")]
    UnknownBlock { pos: usize, name: String },
    #[error("weight {grams} is outside the configured weight domain")]
    WeightOutOfDomain { grams: u64 },
    #[error("block `{block}` may not appear on both sides of a relation")]
    SelfReference { block: String },
    #[error("block `{block}` appears more than once in a sum")]
    DuplicateSumBlock { block: String },
    #[error("a sum term needs at least two blocks")]
    ShortSum,
    #[error("a formula needs at least one atom")]
    EmptyFormula,
    #[error("block `{block}` has no assigned weight")]
    MissingBlock { block: String },
    #[error("target block `{block}` does not occur in the atom")]
    TargetNotInAtom { block: String },
    #[error("catalog would hold {size} formulas, exceeding the cap of {cap}")]
    CatalogTooLarge { size: u128, cap: usize },
    #[error("max_conjuncts must be at least 1")]
    ZeroConjuncts,
    #[error("invalid task domain: {0}")]
    InvalidDomain(String),
}

/// A block weight in grams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Weight(u32);

impl Weight {
    pub const fn new(grams: u32) -> Self {
        Weight(grams)
    }

    pub const fn grams(self) -> u32 {
        self.0
    }
}

impl fmt::Display for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One block of the task, identified by its position in the configured block
/// order. The name travels along so values format without a domain at hand.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BlockId {
    index: usize,
    name: Arc<str>,
}

impl BlockId {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn index(&self) -> usize {
        self.index
    }
}

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// The block set (in canonical order) and weight domain of one task
/// configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskDomain {
    blocks: Vec<Arc<str>>,
    weights: Vec<Weight>,
}

impl TaskDomain {
    /// Builds a domain from block names (order preserved and canonical) and a
    /// weight set in grams. Names are lowercased; duplicates are rejected.
    pub fn new<S: AsRef<str>>(blocks: &[S], weights: &[u32]) -> Result<Self, PropError> {
        if blocks.is_empty() {
            return Err(PropError::InvalidDomain("block set is empty".into()));
        }
        if weights.is_empty() {
            return Err(PropError::InvalidDomain("weight domain is empty".into()));
        }
        let mut seen = BTreeSet::new();
        let mut names: Vec<Arc<str>> = Vec::with_capacity(blocks.len());
        for raw in blocks {
            let name = raw.as_ref().trim().to_ascii_lowercase();
            let well_formed = name.chars().next().is_some_and(|c| c.is_ascii_alphabetic())
                && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
            if !well_formed {
                return Err(PropError::InvalidDomain(format!(
                    "block name `{}` is not an identifier",
                    raw.as_ref()
                )));
            }
            if name == "and" {
                return Err(PropError::InvalidDomain(
                    "`and` is reserved and cannot name a block".into(),
                ));
            }
            if !seen.insert(name.clone()) {
                return Err(PropError::InvalidDomain(format!(
                    "duplicate block name `{name}`"
                )));
            }
            names.push(Arc::from(name.as_str()));
        }
        let mut ws = weights.to_vec();
        ws.sort_unstable();
        ws.dedup();
        if ws.len() != weights.len() {
            return Err(PropError::InvalidDomain("duplicate weight".into()));
        }
        Ok(TaskDomain {
            blocks: names,
            weights: ws.into_iter().map(Weight).collect(),
        })
    }

    /// The default task domain: five blocks, 10–50 g in 10 g steps.
    pub fn weights_task() -> Self {
        TaskDomain::new(
            &["red", "blue", "green", "purple", "yellow"],
            &[10, 20, 30, 40, 50],
        )
        .expect("built-in domain is valid")
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn weight_count(&self) -> usize {
        self.weights.len()
    }

    pub fn blocks(&self) -> impl Iterator<Item = BlockId> + '_ {
        self.blocks.iter().enumerate().map(|(index, name)| BlockId {
            index,
            name: name.clone(),
        })
    }

    /// Case-insensitive lookup of a configured block.
    pub fn block_named(&self, name: &str) -> Option<BlockId> {
        let wanted = name.to_ascii_lowercase();
        self.blocks
            .iter()
            .position(|b| **b == wanted)
            .map(|index| BlockId {
                index,
                name: self.blocks[index].clone(),
            })
    }

    pub fn weights(&self) -> impl Iterator<Item = Weight> + Clone + '_ {
        self.weights.iter().copied()
    }

    pub fn has_weight(&self, w: Weight) -> bool {
        self.weights.contains(&w)
    }

    /// Number of total weight assignments, `weights^blocks`. `None` on
    /// overflow (astronomically large domains).
    pub fn world_count(&self) -> Option<u128> {
        let base = self.weights.len() as u128;
        let mut total: u128 = 1;
        for _ in 0..self.blocks.len() {
            total = total.checked_mul(base)?;
        }
        Some(total)
    }
}

/// The four relations an atomic proposition can assert.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Relation {
    Eq,
    Lt,
    Gt,
    Neq,
}

impl Relation {
    pub const ALL: [Relation; 4] = [Relation::Eq, Relation::Lt, Relation::Gt, Relation::Neq];

    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Eq => "=",
            Relation::Lt => "<",
            Relation::Gt => ">",
            Relation::Neq => "!=",
        }
    }

    pub fn holds(self, lhs: u64, rhs: u64) -> bool {
        match self {
            Relation::Eq => lhs == rhs,
            Relation::Lt => lhs < rhs,
            Relation::Gt => lhs > rhs,
            Relation::Neq => lhs != rhs,
        }
    }

    fn flipped(self) -> Relation {
        match self {
            Relation::Eq => Relation::Eq,
            Relation::Lt => Relation::Gt,
            Relation::Gt => Relation::Lt,
            Relation::Neq => Relation::Neq,
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// The right-hand side of an atomic proposition.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Weight(Weight),
    Block(BlockId),
    /// At least two distinct blocks, sorted by block order.
    Sum(Vec<BlockId>),
}

impl Term {
    pub fn blocks(&self) -> impl Iterator<Item = &BlockId> {
        match self {
            Term::Weight(_) => [].iter(),
            Term::Block(b) => std::slice::from_ref(b).iter(),
            Term::Sum(bs) => bs.iter(),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Weight(w) => write!(f, "{w}"),
            Term::Block(b) => write!(f, "{b}"),
            Term::Sum(bs) => {
                let joined = bs.iter().map(|b| b.name()).join(" + ");
                f.write_str(&joined)
            }
        }
    }
}

/// A map from blocks to weights; total over the domain when used as a world.
pub type Assignment = BTreeMap<BlockId, Weight>;

/// Possibility sets per block, as maintained by the tracker.
pub type Possibilities = BTreeMap<BlockId, BTreeSet<Weight>>;

/// An atomic proposition `lhs REL rhs`, held in canonical form: the left
/// block never occurs on the right, block pairs are oriented by block order
/// (with `<`/`>` flipped to compensate), and sum members are sorted.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AtomicProp {
    lhs: BlockId,
    rel: Relation,
    rhs: Term,
}

impl AtomicProp {
    pub fn new(lhs: BlockId, rel: Relation, rhs: Term) -> Result<Self, PropError> {
        let rhs = match rhs {
            Term::Sum(mut bs) => {
                if bs.len() < 2 {
                    return Err(PropError::ShortSum);
                }
                bs.sort();
                if let Some(dup) = bs.windows(2).find(|w| w[0] == w[1]) {
                    return Err(PropError::DuplicateSumBlock {
                        block: dup[0].name().to_string(),
                    });
                }
                Term::Sum(bs)
            }
            other => other,
        };
        if rhs.blocks().any(|b| *b == lhs) {
            return Err(PropError::SelfReference {
                block: lhs.name().to_string(),
            });
        }
        if let Term::Block(r) = &rhs {
            if *r < lhs {
                return Ok(AtomicProp {
                    lhs: r.clone(),
                    rel: rel.flipped(),
                    rhs: Term::Block(lhs),
                });
            }
        }
        Ok(AtomicProp { lhs, rel, rhs })
    }

    pub fn lhs(&self) -> &BlockId {
        &self.lhs
    }

    pub fn relation(&self) -> Relation {
        self.rel
    }

    pub fn rhs(&self) -> &Term {
        &self.rhs
    }

    /// All blocks occurring in the atom, left side first.
    pub fn blocks(&self) -> impl Iterator<Item = &BlockId> {
        std::iter::once(&self.lhs).chain(self.rhs.blocks())
    }

    pub fn references(&self, block: &BlockId) -> bool {
        self.blocks().any(|b| b == block)
    }

    /// True when the right-hand side is a block or a sum; such atoms enter
    /// the relational store rather than the per-block evidence sets.
    pub fn is_relational(&self) -> bool {
        !matches!(self.rhs, Term::Weight(_))
    }

    /// Truth of the atom under a weight assignment covering its blocks.
    pub fn eval(&self, assignment: &Assignment) -> Result<bool, PropError> {
        let lhs = lookup(assignment, &self.lhs)? as u64;
        let rhs: u64 = match &self.rhs {
            Term::Weight(w) => w.grams() as u64,
            Term::Block(b) => lookup(assignment, b)? as u64,
            Term::Sum(bs) => {
                let mut total = 0u64;
                for b in bs {
                    total += lookup(assignment, b)? as u64;
                }
                total
            }
        };
        Ok(self.rel.holds(lhs, rhs))
    }

    /// The weights in `possibilities[target]` that cannot satisfy this atom
    /// no matter which weights the other blocks take from their own
    /// possibility sets. Every other block must have a nonempty set.
    pub fn inconsistent_weights(
        &self,
        target: &BlockId,
        possibilities: &Possibilities,
    ) -> Result<BTreeSet<Weight>, PropError> {
        if !self.references(target) {
            return Err(PropError::TargetNotInAtom {
                block: target.name().to_string(),
            });
        }
        let target_poss = possibilities
            .get(target)
            .ok_or_else(|| PropError::MissingBlock {
                block: target.name().to_string(),
            })?;
        let others: Vec<&BlockId> = self.blocks().filter(|b| *b != target).collect();
        let mut choices: Vec<Vec<Weight>> = Vec::with_capacity(others.len());
        for b in &others {
            let set = possibilities
                .get(*b)
                .ok_or_else(|| PropError::MissingBlock {
                    block: b.name().to_string(),
                })?;
            choices.push(set.iter().copied().collect());
        }

        let mut inconsistent = BTreeSet::new();
        for &w in target_poss {
            let satisfiable = if others.is_empty() {
                let mut asg = Assignment::new();
                asg.insert(target.clone(), w);
                self.eval(&asg)?
            } else {
                choices
                    .iter()
                    .map(|c| c.iter().copied())
                    .multi_cartesian_product()
                    .any(|combo| {
                        let mut asg = Assignment::new();
                        asg.insert(target.clone(), w);
                        for (b, cw) in others.iter().zip(combo) {
                            asg.insert((*b).clone(), cw);
                        }
                        self.eval(&asg).expect("all atom blocks assigned")
                    })
            };
            if !satisfiable {
                inconsistent.insert(w);
            }
        }
        Ok(inconsistent)
    }
}

impl fmt::Display for AtomicProp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.lhs, self.rel, self.rhs)
    }
}

fn lookup(assignment: &Assignment, block: &BlockId) -> Result<u32, PropError> {
    assignment
        .get(block)
        .map(|w| w.grams())
        .ok_or_else(|| PropError::MissingBlock {
            block: block.name().to_string(),
        })
}

/// A conjunction of atomic propositions, duplicate-free and sorted by
/// canonical text.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PropFormula {
    atoms: Vec<AtomicProp>,
}

impl PropFormula {
    pub fn new(mut atoms: Vec<AtomicProp>) -> Result<Self, PropError> {
        if atoms.is_empty() {
            return Err(PropError::EmptyFormula);
        }
        atoms.sort_by_cached_key(|a| a.to_string());
        atoms.dedup();
        Ok(PropFormula { atoms })
    }

    pub fn from_atom(atom: AtomicProp) -> Self {
        PropFormula { atoms: vec![atom] }
    }

    /// Parses the canonical grammar: `atom ("and" atom)*` with
    /// `atom ::= block rel rhs`, `rel ::= "=" | "<" | ">" | "!="`, and
    /// `rhs ::= weight | block | block ("+" block)+`. Whitespace-insensitive;
    /// block names case-insensitive; `∧` accepted for `and`.
    pub fn parse(text: &str, domain: &TaskDomain) -> Result<Self, PropError> {
        parse::parse_formula(text, domain)
    }

    pub fn atoms(&self) -> &[AtomicProp] {
        &self.atoms
    }

    pub fn eval(&self, assignment: &Assignment) -> Result<bool, PropError> {
        for atom in &self.atoms {
            if !atom.eval(assignment)? {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

impl fmt::Display for PropFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let joined = self.atoms.iter().map(|a| a.to_string()).join(" and ");
        f.write_str(&joined)
    }
}

/// Enumerates every canonical atomic proposition of the domain — block-weight
/// equalities, all four relations per block pair, and block = sum-of-blocks —
/// plus their duplicate-free conjunctions of up to `max_conjuncts` atoms.
/// Output is deterministic: sorted by atom count, then canonical text.
pub fn generate_catalog(
    domain: &TaskDomain,
    max_conjuncts: usize,
    cap: usize,
) -> Result<Vec<PropFormula>, PropError> {
    if max_conjuncts == 0 {
        return Err(PropError::ZeroConjuncts);
    }
    let blocks: Vec<BlockId> = domain.blocks().collect();
    let mut atoms: Vec<AtomicProp> = Vec::new();
    for b in &blocks {
        for w in domain.weights() {
            atoms.push(
                AtomicProp::new(b.clone(), Relation::Eq, Term::Weight(w))
                    .expect("weight atom is canonical"),
            );
        }
    }
    for i in 0..blocks.len() {
        for j in i + 1..blocks.len() {
            for rel in Relation::ALL {
                atoms.push(
                    AtomicProp::new(blocks[i].clone(), rel, Term::Block(blocks[j].clone()))
                        .expect("ordered pair is canonical"),
                );
            }
        }
    }
    for lhs in &blocks {
        let others: Vec<BlockId> = blocks.iter().filter(|b| *b != lhs).cloned().collect();
        for k in 2..=others.len() {
            for combo in others.iter().cloned().combinations(k) {
                atoms.push(
                    AtomicProp::new(lhs.clone(), Relation::Eq, Term::Sum(combo))
                        .expect("distinct sum members"),
                );
            }
        }
    }

    let n = atoms.len() as u128;
    let mut size: u128 = 0;
    for k in 1..=max_conjuncts.min(atoms.len()) {
        size = size
            .checked_add(binomial(n, k as u128).ok_or(PropError::CatalogTooLarge {
                size: u128::MAX,
                cap,
            })?)
            .ok_or(PropError::CatalogTooLarge {
                size: u128::MAX,
                cap,
            })?;
    }
    if size > cap as u128 {
        return Err(PropError::CatalogTooLarge { size, cap });
    }

    let mut formulas = Vec::with_capacity(size as usize);
    for k in 1..=max_conjuncts.min(atoms.len()) {
        for combo in atoms.iter().cloned().combinations(k) {
            formulas.push(PropFormula::new(combo).expect("combination is nonempty"));
        }
    }
    formulas.sort_by_cached_key(|f| (f.atoms().len(), f.to_string()));
    Ok(formulas)
}

fn binomial(n: u128, k: u128) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut result: u128 = 1;
    for i in 0..k {
        result = result.checked_mul(n - i)?;
        result /= i + 1;
    }
    Some(result)
}
