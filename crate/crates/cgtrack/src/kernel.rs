//! Brute-force finite-model semantics for the evidence logic.
//!
//! A model is a nonempty set of worlds (total weight assignments over the
//! configured blocks) plus a family of evidence neighborhoods, each a
//! nonempty subset of the surviving worlds. The group is tracked jointly, so
//! the evidence family is world-independent. Three modalities are evaluated
//! by exhaustive enumeration:
//!
//! * `[E]φ` — some evidence neighborhood lies inside the extension of `φ`;
//! * `[B]φ` — the intersection of every maximal consistent subfamily of the
//!   evidence lies inside the extension of `φ` (consistency being the finite
//!   intersection property);
//! * `[A]φ` — `φ` holds at every world.
//!
//! Announcing a proposition removes the worlds where it is false, restricts
//! every evidence neighborhood accordingly (dropping emptied ones), and
//! records the announced extension as a fresh piece of direct evidence.
//! Announcing something already falsified is an error — a model value is
//! never contradictory, so the modal evaluators are total.

use std::collections::BTreeSet;

use itertools::Itertools;
use thiserror::Error;

use crate::prop::{Assignment, AtomicProp, BlockId, PropFormula, TaskDomain, Weight};

/// Upper bound on eagerly enumerated worlds.
pub const DEFAULT_WORLD_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KernelError {
    #[error("cannot build a model over an empty domain")]
    EmptyDomain,
    #[error("domain spans {worlds} worlds, over the cap of {cap}")]
    ModelTooLarge { worlds: u128, cap: usize },
    #[error("announcing `{prop}` contradicts the model (no worlds survive)")]
    ContradictoryModel { prop: String },
    #[error("`{prop}` holds at no remaining world, evidence would be empty")]
    EmptyEvidence { prop: String },
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

/// One possible state of affairs: a total weight assignment.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct World {
    assignment: Assignment,
}

impl World {
    pub fn new(assignment: Assignment) -> Self {
        World { assignment }
    }

    pub fn assignment(&self) -> &Assignment {
        &self.assignment
    }

    pub fn weight_of(&self, block: &BlockId) -> Option<Weight> {
        self.assignment.get(block).copied()
    }
}

/// Formulas of the epistemic language. `Announce`'s first argument is purely
/// propositional.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EpistemicFormula {
    Atom(AtomicProp),
    Not(Box<EpistemicFormula>),
    And(Box<EpistemicFormula>, Box<EpistemicFormula>),
    /// `[E]φ` — there is evidence in favor of φ.
    Ev(Box<EpistemicFormula>),
    /// `[B]φ` — φ is believed.
    Bel(Box<EpistemicFormula>),
    /// `[A]φ` — φ holds universally ("knowledge").
    All(Box<EpistemicFormula>),
    /// `[!p]φ` — after p is announced, φ.
    Announce(PropFormula, Box<EpistemicFormula>),
}

impl EpistemicFormula {
    pub fn atom(a: AtomicProp) -> Self {
        EpistemicFormula::Atom(a)
    }

    pub fn not(f: EpistemicFormula) -> Self {
        EpistemicFormula::Not(Box::new(f))
    }

    pub fn and(f: EpistemicFormula, g: EpistemicFormula) -> Self {
        EpistemicFormula::And(Box::new(f), Box::new(g))
    }

    pub fn ev(f: EpistemicFormula) -> Self {
        EpistemicFormula::Ev(Box::new(f))
    }

    pub fn bel(f: EpistemicFormula) -> Self {
        EpistemicFormula::Bel(Box::new(f))
    }

    pub fn all(f: EpistemicFormula) -> Self {
        EpistemicFormula::All(Box::new(f))
    }

    pub fn announce(p: PropFormula, f: EpistemicFormula) -> Self {
        EpistemicFormula::Announce(p, Box::new(f))
    }
}

/// A finite evidence model. Immutable: updates return new models.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpistemicModel {
    domain: TaskDomain,
    worlds: BTreeSet<World>,
    evidence: BTreeSet<BTreeSet<World>>,
}

/// Builds the initial model: every total assignment is a world, and the
/// evidence family is empty.
pub fn init_model(domain: &TaskDomain) -> Result<EpistemicModel, KernelError> {
    init_model_with_cap(domain, DEFAULT_WORLD_CAP)
}

pub fn init_model_with_cap(domain: &TaskDomain, cap: usize) -> Result<EpistemicModel, KernelError> {
    if domain.block_count() == 0 || domain.weight_count() == 0 {
        return Err(KernelError::EmptyDomain);
    }
    let count = domain.world_count().ok_or(KernelError::ModelTooLarge {
        worlds: u128::MAX,
        cap,
    })?;
    if count > cap as u128 {
        return Err(KernelError::ModelTooLarge { worlds: count, cap });
    }
    let blocks: Vec<BlockId> = domain.blocks().collect();
    let worlds: BTreeSet<World> = blocks
        .iter()
        .map(|_| domain.weights())
        .multi_cartesian_product()
        .map(|ws| World::new(blocks.iter().cloned().zip(ws).collect()))
        .collect();
    Ok(EpistemicModel {
        domain: domain.clone(),
        worlds,
        evidence: BTreeSet::new(),
    })
}

impl EpistemicModel {
    /// Assembles a model from explicit parts, validating the invariants.
    pub fn from_parts(
        domain: TaskDomain,
        worlds: BTreeSet<World>,
        evidence: BTreeSet<BTreeSet<World>>,
    ) -> Result<Self, KernelError> {
        if worlds.is_empty() {
            return Err(KernelError::InvalidModel("no worlds".into()));
        }
        for x in &evidence {
            if x.is_empty() {
                return Err(KernelError::InvalidModel(
                    "empty evidence neighborhood".into(),
                ));
            }
            if !x.is_subset(&worlds) {
                return Err(KernelError::InvalidModel(
                    "evidence neighborhood not a subset of the worlds".into(),
                ));
            }
        }
        Ok(EpistemicModel {
            domain,
            worlds,
            evidence,
        })
    }

    pub fn domain(&self) -> &TaskDomain {
        &self.domain
    }

    pub fn worlds(&self) -> &BTreeSet<World> {
        &self.worlds
    }

    pub fn world_count(&self) -> usize {
        self.worlds.len()
    }

    pub fn evidence(&self) -> impl Iterator<Item = &BTreeSet<World>> {
        self.evidence.iter()
    }

    pub fn evidence_count(&self) -> usize {
        self.evidence.len()
    }

    /// The worlds where a propositional formula holds.
    pub fn extension(&self, p: &PropFormula) -> BTreeSet<World> {
        self.worlds
            .iter()
            .filter(|w| p.eval(w.assignment()).expect("worlds assign every block"))
            .cloned()
            .collect()
    }

    /// Public announcement: keeps the worlds where `p` holds, restricts each
    /// evidence neighborhood to the survivors (dropping emptied ones), and
    /// adds the announced extension as direct evidence.
    pub fn announce(&self, p: &PropFormula) -> Result<Self, KernelError> {
        let survivors = self.extension(p);
        if survivors.is_empty() {
            return Err(KernelError::ContradictoryModel {
                prop: p.to_string(),
            });
        }
        let mut evidence: BTreeSet<BTreeSet<World>> = BTreeSet::new();
        for x in &self.evidence {
            let restricted: BTreeSet<World> = x.intersection(&survivors).cloned().collect();
            if !restricted.is_empty() {
                evidence.insert(restricted);
            }
        }
        evidence.insert(survivors.clone());
        Ok(EpistemicModel {
            domain: self.domain.clone(),
            worlds: survivors,
            evidence,
        })
    }

    /// Records `p`'s extension as an evidence neighborhood without removing
    /// any worlds. Models a statement that has not been accepted.
    pub fn add_evidence(&self, p: &PropFormula) -> Result<Self, KernelError> {
        let ext = self.extension(p);
        if ext.is_empty() {
            return Err(KernelError::EmptyEvidence {
                prop: p.to_string(),
            });
        }
        let mut next = self.clone();
        next.evidence.insert(ext);
        Ok(next)
    }

    /// `[E]f`: some evidence neighborhood is contained in f's extension.
    pub fn holds_e(&self, f: &EpistemicFormula) -> bool {
        let sat = self.sat_set(f);
        self.evidence.iter().any(|x| x.is_subset(&sat))
    }

    /// `[B]f`: the intersection of every maximal consistent subfamily of the
    /// evidence is contained in f's extension. With no evidence at all this
    /// degenerates to truth at every world.
    pub fn holds_b(&self, f: &EpistemicFormula) -> bool {
        let sat = self.sat_set(f);
        self.maximal_consistent_intersections()
            .iter()
            .all(|i| i.is_subset(&sat))
    }

    /// `[A]f`: f holds at every world.
    pub fn holds_a(&self, f: &EpistemicFormula) -> bool {
        self.sat_set(f) == self.worlds
    }

    /// Model-level truth: f holds at every world, with announcements
    /// evaluated in the updated model (vacuously true when the announcement
    /// is contradictory).
    pub fn check(&self, f: &EpistemicFormula) -> bool {
        self.sat_set(f) == self.worlds
    }

    /// The worlds satisfying an epistemic formula. The modalities are
    /// world-independent (group-level evidence), so each contributes either
    /// all worlds or none.
    fn sat_set(&self, f: &EpistemicFormula) -> BTreeSet<World> {
        match f {
            EpistemicFormula::Atom(a) => self
                .worlds
                .iter()
                .filter(|w| a.eval(w.assignment()).expect("worlds assign every block"))
                .cloned()
                .collect(),
            EpistemicFormula::Not(g) => {
                let sat = self.sat_set(g);
                self.worlds.difference(&sat).cloned().collect()
            }
            EpistemicFormula::And(g, h) => {
                let sat_g = self.sat_set(g);
                let sat_h = self.sat_set(h);
                sat_g.intersection(&sat_h).cloned().collect()
            }
            EpistemicFormula::Ev(g) => self.globally(self.holds_e(g)),
            EpistemicFormula::Bel(g) => self.globally(self.holds_b(g)),
            EpistemicFormula::All(g) => {
                let sat = self.sat_set(g);
                self.globally(sat == self.worlds)
            }
            EpistemicFormula::Announce(p, g) => {
                let ext = self.extension(p);
                match self.announce(p) {
                    // Standard convention: a contradicted announcement makes
                    // the formula vacuously true everywhere.
                    Err(KernelError::ContradictoryModel { .. }) => self.worlds.clone(),
                    Err(_) => unreachable!("announce only fails on contradiction"),
                    Ok(updated) => {
                        let inner = updated.sat_set(g);
                        self.worlds
                            .iter()
                            .filter(|w| !ext.contains(w) || inner.contains(w))
                            .cloned()
                            .collect()
                    }
                }
            }
        }
    }

    fn globally(&self, condition: bool) -> BTreeSet<World> {
        if condition {
            self.worlds.clone()
        } else {
            BTreeSet::new()
        }
    }

    /// Intersections of the maximal subfamilies of the evidence that enjoy
    /// the finite intersection property. Enumerates subfamilies exhaustively,
    /// which is fine for the small families this crate deals in.
    fn maximal_consistent_intersections(&self) -> Vec<BTreeSet<World>> {
        let family: Vec<&BTreeSet<World>> = self.evidence.iter().collect();
        if family.is_empty() {
            return vec![self.worlds.clone()];
        }
        let n = family.len();
        assert!(
            n <= 20,
            "evidence family of {n} neighborhoods is too large for belief enumeration"
        );
        let mut result = Vec::new();
        for mask in 1u32..(1 << n) {
            let mut inter: Option<BTreeSet<World>> = None;
            for (i, x) in family.iter().enumerate() {
                if mask & (1 << i) == 0 {
                    continue;
                }
                inter = Some(match inter {
                    None => (*x).clone(),
                    Some(acc) => acc.intersection(x).cloned().collect(),
                });
            }
            let inter = inter.expect("mask selects at least one neighborhood");
            if inter.is_empty() {
                continue;
            }
            // Maximal iff no excluded neighborhood can join while keeping the
            // intersection nonempty.
            let maximal = (0..n)
                .all(|i| mask & (1 << i) != 0 || inter.intersection(family[i]).next().is_none());
            if maximal {
                result.push(inter);
            }
        }
        result
    }
}
