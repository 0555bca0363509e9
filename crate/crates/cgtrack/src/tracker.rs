//! The common-ground tracker: possibility and evidence sets per block, a
//! relational constraint store, and the closure rules that turn dialogue
//! moves into bank updates.
//!
//! The rules, move by move:
//!
//! * **STATEMENT** — `block = weight` atoms put the weight in that block's
//!   `evidence_for`. Any other atom adds the weights it rules out to the
//!   target block's `evidence_against`; relational atoms are also recorded
//!   as evidenced. Possibility sets never change.
//! * **ACCEPT** — each atom's inconsistent weights leave the target block's
//!   possibility set and both evidence sets; relational atoms are promoted
//!   from evidenced to accepted; then constraint propagation runs to a
//!   fixpoint.
//! * Every other label passes through with no bank effect.
//!
//! Atoms usually update the left-hand block. When the right side is a single
//! block that is *less known* — fewer eliminated possibilities, then less
//! evidence — the update targets that block instead.
//!
//! Bank generation reads the state back out: a block with one possibility
//! left contributes a fact, evidenced weights and relations show as evidence,
//! and the remaining unevidenced possibilities are the open questions.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Move, MoveLabel};
use crate::kernel::{init_model, EpistemicModel, KernelError};
use crate::prop::{
    AtomicProp, BlockId, Possibilities, PropError, PropFormula, Relation, TaskDomain, Term, Weight,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrackError {
    #[error("invalid seed fact: {0}")]
    InvalidSeed(String),
    #[error("no possible weight remains for block `{block}`")]
    InconsistentState { block: String },
    #[error("move `{utterance_id}` needs a proposition but carries none")]
    MissingProposition { utterance_id: String },
    #[error(transparent)]
    Prop(#[from] PropError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// What is known about one block: which weights remain possible and which
/// have evidence for or against them. The evidence sets stay inside the
/// possibility set; they may overlap each other, since the group can hold
/// conflicting evidence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockKnowledge {
    possibilities: BTreeSet<Weight>,
    evidence_for: BTreeSet<Weight>,
    evidence_against: BTreeSet<Weight>,
}

impl BlockKnowledge {
    fn full(domain: &TaskDomain) -> Self {
        BlockKnowledge {
            possibilities: domain.weights().collect(),
            evidence_for: BTreeSet::new(),
            evidence_against: BTreeSet::new(),
        }
    }

    pub fn possibilities(&self) -> &BTreeSet<Weight> {
        &self.possibilities
    }

    pub fn evidence_for(&self) -> &BTreeSet<Weight> {
        &self.evidence_for
    }

    pub fn evidence_against(&self) -> &BTreeSet<Weight> {
        &self.evidence_against
    }

    /// The weight this block is pinned to, when only one possibility is left.
    pub fn resolved_weight(&self) -> Option<Weight> {
        if self.possibilities.len() == 1 {
            self.possibilities.iter().next().copied()
        } else {
            None
        }
    }

    /// Drops `bad` from the possibility set and both evidence sets. Reports
    /// whether anything changed.
    fn remove(&mut self, bad: &BTreeSet<Weight>) -> bool {
        let before =
            self.possibilities.len() + self.evidence_for.len() + self.evidence_against.len();
        self.possibilities.retain(|w| !bad.contains(w));
        self.evidence_for.retain(|w| !bad.contains(w));
        self.evidence_against.retain(|w| !bad.contains(w));
        before != self.possibilities.len() + self.evidence_for.len() + self.evidence_against.len()
    }
}

/// Block-to-block and sum constraints, by epistemic status.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RelationalStore {
    evidenced: BTreeSet<AtomicProp>,
    accepted: BTreeSet<AtomicProp>,
    derived: BTreeSet<AtomicProp>,
}

impl RelationalStore {
    pub fn evidenced(&self) -> &BTreeSet<AtomicProp> {
        &self.evidenced
    }

    pub fn accepted(&self) -> &BTreeSet<AtomicProp> {
        &self.accepted
    }

    pub fn derived(&self) -> &BTreeSet<AtomicProp> {
        &self.derived
    }
}

/// The bank snapshot after a move: canonical question and proposition
/// strings.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Banks {
    pub qbank: BTreeSet<String>,
    pub ebank: BTreeSet<String>,
    pub fbank: BTreeSet<String>,
}

/// The full common-ground state. A deterministic function of the initial
/// configuration and the applied move sequence; applying a move returns a new
/// value.
#[derive(Debug, Clone, PartialEq)]
pub struct CGState {
    domain: TaskDomain,
    relational_facts: bool,
    per_block: BTreeMap<BlockId, BlockKnowledge>,
    relations: RelationalStore,
    move_history: Vec<Move>,
}

impl CGState {
    /// Initializes the state: full possibility sets, empty evidence, and each
    /// seed fact (a weight equality the group is told up front) pinning its
    /// block.
    pub fn new(
        domain: &TaskDomain,
        relational_facts: bool,
        seed_facts: &[AtomicProp],
    ) -> Result<Self, TrackError> {
        let mut per_block: BTreeMap<BlockId, BlockKnowledge> = domain
            .blocks()
            .map(|b| (b, BlockKnowledge::full(domain)))
            .collect();
        for seed in seed_facts {
            let weight = match (seed.relation(), seed.rhs()) {
                (Relation::Eq, Term::Weight(w)) => *w,
                _ => {
                    return Err(TrackError::InvalidSeed(format!(
                        "`{seed}` is not a weight equality"
                    )))
                }
            };
            let knowledge = per_block
                .get_mut(seed.lhs())
                .ok_or_else(|| TrackError::InvalidSeed(format!("unknown block in `{seed}`")))?;
            if !knowledge.possibilities.contains(&weight) {
                return Err(TrackError::InvalidSeed(format!(
                    "`{seed}` conflicts with an earlier seed"
                )));
            }
            knowledge.possibilities = BTreeSet::from([weight]);
        }
        Ok(CGState {
            domain: domain.clone(),
            relational_facts,
            per_block,
            relations: RelationalStore::default(),
            move_history: Vec::new(),
        })
    }

    pub fn domain(&self) -> &TaskDomain {
        &self.domain
    }

    pub fn block(&self, b: &BlockId) -> Option<&BlockKnowledge> {
        self.per_block.get(b)
    }

    pub fn relations(&self) -> &RelationalStore {
        &self.relations
    }

    pub fn move_history(&self) -> &[Move] {
        &self.move_history
    }

    fn possibilities_map(&self) -> Possibilities {
        self.per_block
            .iter()
            .map(|(b, k)| (b.clone(), k.possibilities.clone()))
            .collect()
    }

    /// How much is known about a block, for target selection: eliminated
    /// possibilities first, then amount of evidence.
    fn knowledge_score(&self, b: &BlockId) -> (usize, usize) {
        let k = &self.per_block[b];
        (
            self.domain.weight_count() - k.possibilities.len(),
            k.evidence_for.len() + k.evidence_against.len(),
        )
    }

    /// The block an atom updates: the left-hand side, unless the right side
    /// is a single strictly less-known block. Ties keep the left.
    pub fn select_target(&self, atom: &AtomicProp) -> BlockId {
        if let Term::Block(rhs) = atom.rhs() {
            if self.knowledge_score(rhs) < self.knowledge_score(atom.lhs()) {
                return rhs.clone();
            }
        }
        atom.lhs().clone()
    }

    /// Applies a STATEMENT: evidence accrues, possibilities stay put.
    /// Statements are set-semantic — restating an already-recorded relation
    /// changes nothing.
    pub fn apply_statement(&self, p: &PropFormula) -> Result<CGState, TrackError> {
        let mut next = self.clone();
        for atom in p.atoms() {
            if let (Relation::Eq, Term::Weight(w)) = (atom.relation(), atom.rhs()) {
                let knowledge =
                    next.per_block
                        .get_mut(atom.lhs())
                        .ok_or_else(|| PropError::MissingBlock {
                            block: atom.lhs().name().to_string(),
                        })?;
                if knowledge.possibilities.contains(w) {
                    knowledge.evidence_for.insert(*w);
                } else {
                    log::warn!("dropping evidence `{atom}`: weight already ruled out");
                }
            } else {
                if atom.is_relational()
                    && (next.relations.evidenced.contains(atom)
                        || next.relations.accepted.contains(atom)
                        || next.relations.derived.contains(atom))
                {
                    continue;
                }
                let target = next.select_target(atom);
                let bad = atom.inconsistent_weights(&target, &next.possibilities_map())?;
                next.per_block
                    .get_mut(&target)
                    .expect("target comes from the atom")
                    .evidence_against
                    .extend(bad);
                if atom.is_relational() {
                    next.relations.evidenced.insert(atom.clone());
                }
            }
        }
        Ok(next)
    }

    /// Applies an ACCEPT: inconsistent weights leave the possibility and
    /// evidence sets, relational atoms are promoted to accepted, and
    /// propagation closes over the result. An accept that would empty a
    /// possibility set is an error; the caller keeps the prior state.
    pub fn apply_accept(&self, p: &PropFormula) -> Result<CGState, TrackError> {
        let mut next = self.clone();
        for atom in p.atoms() {
            let target = next.select_target(atom);
            let bad = atom.inconsistent_weights(&target, &next.possibilities_map())?;
            next.remove_weights(&target, &bad)?;
            if atom.is_relational() {
                next.relations.evidenced.remove(atom);
                next.relations.derived.remove(atom);
                next.relations.accepted.insert(atom.clone());
            }
        }
        next.propagate_in_place()?;
        Ok(next)
    }

    fn remove_weights(
        &mut self,
        block: &BlockId,
        bad: &BTreeSet<Weight>,
    ) -> Result<bool, TrackError> {
        let knowledge = self
            .per_block
            .get_mut(block)
            .ok_or_else(|| PropError::MissingBlock {
                block: block.name().to_string(),
            })?;
        let changed = knowledge.remove(bad);
        if knowledge.possibilities.is_empty() {
            return Err(TrackError::InconsistentState {
                block: block.name().to_string(),
            });
        }
        Ok(changed)
    }

    /// Constraint propagation to a fixpoint: every accepted relational atom
    /// re-prunes the possibility sets of each block it mentions, and new
    /// relational atoms are derived by equality substitution and
    /// transitivity of `<`/`>`. Terminates because possibility sets only
    /// shrink and the atom universe is finite.
    pub fn propagate(&self) -> Result<CGState, TrackError> {
        let mut next = self.clone();
        next.propagate_in_place()?;
        Ok(next)
    }

    fn propagate_in_place(&mut self) -> Result<(), TrackError> {
        loop {
            let mut changed = false;
            for atom in self.relations.accepted.clone() {
                let blocks: Vec<BlockId> = atom.blocks().cloned().collect();
                for b in blocks {
                    let bad = atom.inconsistent_weights(&b, &self.possibilities_map())?;
                    if !bad.is_empty() {
                        changed |= self.remove_weights(&b, &bad)?;
                    }
                }
            }
            changed |= self.derive_relations();
            if !changed {
                return Ok(());
            }
        }
    }

    /// One round of entailment over the accepted and derived atoms:
    /// equality substitution (`a = b` lets `b` stand in for `a` anywhere) and
    /// transitivity of the order relations. Newly entailed atoms land in the
    /// derived set; anything already evidenced is promoted out of it.
    fn derive_relations(&mut self) -> bool {
        let base: Vec<AtomicProp> = self
            .relations
            .accepted
            .iter()
            .chain(self.relations.derived.iter())
            .cloned()
            .collect();
        let known = |relations: &RelationalStore, atom: &AtomicProp| {
            relations.accepted.contains(atom) || relations.derived.contains(atom)
        };

        let mut fresh: Vec<AtomicProp> = Vec::new();
        let equalities: Vec<(BlockId, BlockId)> = base
            .iter()
            .filter(|a| a.relation() == Relation::Eq)
            .filter_map(|a| match a.rhs() {
                Term::Block(r) => Some((a.lhs().clone(), r.clone())),
                _ => None,
            })
            .collect();
        for (x, y) in &equalities {
            for atom in &base {
                for (from, to) in [(x, y), (y, x)] {
                    if let Some(rewritten) = substitute(atom, from, to) {
                        fresh.push(rewritten);
                    }
                }
            }
        }

        // a < b and b < c entail a < c (and the mirrored Gt forms).
        let edges: Vec<(BlockId, BlockId)> = base
            .iter()
            .filter_map(|a| match (a.relation(), a.rhs()) {
                (Relation::Lt, Term::Block(r)) => Some((a.lhs().clone(), r.clone())),
                (Relation::Gt, Term::Block(r)) => Some((r.clone(), a.lhs().clone())),
                _ => None,
            })
            .collect();
        for (a, b) in &edges {
            for (b2, c) in &edges {
                if b == b2 && a != c {
                    if let Ok(atom) =
                        AtomicProp::new(a.clone(), Relation::Lt, Term::Block(c.clone()))
                    {
                        fresh.push(atom);
                    }
                }
            }
        }

        let mut changed = false;
        for atom in fresh {
            if !known(&self.relations, &atom) {
                self.relations.evidenced.remove(&atom);
                self.relations.derived.insert(atom);
                changed = true;
            }
        }
        changed
    }

    /// Reads the bank contents off the current state.
    pub fn banks(&self) -> Banks {
        let mut banks = Banks::default();
        for (b, k) in &self.per_block {
            if let Some(w) = k.resolved_weight() {
                banks.fbank.insert(format!("{b} = {w}"));
                continue;
            }
            for w in &k.evidence_for {
                banks.ebank.insert(format!("{b} = {w}"));
            }
            for w in &k.evidence_against {
                banks.ebank.insert(format!("{b} != {w}"));
            }
            for w in &k.possibilities {
                if !k.evidence_for.contains(w) && !k.evidence_against.contains(w) {
                    banks.qbank.insert(format!("{b} = {w}?"));
                }
            }
        }
        for atom in &self.relations.evidenced {
            banks.ebank.insert(atom.to_string());
        }
        if self.relational_facts {
            for atom in self
                .relations
                .accepted
                .iter()
                .chain(&self.relations.derived)
            {
                banks.fbank.insert(atom.to_string());
            }
        }
        banks
    }

    /// Dispatches one move and returns the successor state with its bank
    /// snapshot. STATEMENT and ACCEPT need a proposition; every other label
    /// (and an absent one) passes through with the banks untouched.
    pub fn apply_move(&self, mv: &Move) -> Result<(CGState, Banks), TrackError> {
        let mut next = match mv.label {
            Some(MoveLabel::Statement) | Some(MoveLabel::Accept) => {
                let text =
                    mv.prop_text
                        .as_deref()
                        .ok_or_else(|| TrackError::MissingProposition {
                            utterance_id: mv.utterance_id.clone(),
                        })?;
                let formula = PropFormula::parse(text, &self.domain)?;
                if mv.label == Some(MoveLabel::Statement) {
                    self.apply_statement(&formula)?
                } else {
                    self.apply_accept(&formula)?
                }
            }
            _ => self.clone(),
        };
        next.move_history.push(mv.clone());
        let banks = next.banks();
        Ok((next, banks))
    }
}

/// Replays a move sequence on the evidence-logic kernel for oracle checks:
/// seeds and ACCEPTs announce, STATEMENTs add evidence. Statements whose
/// content is already ruled out add nothing, mirroring the tracker's
/// clamping; moves without propositions are skipped. A contradictory ACCEPT
/// surfaces as an error, flagging inconsistent annotations.
pub fn mirror_to_kernel(
    domain: &TaskDomain,
    seed_facts: &[AtomicProp],
    moves: &[Move],
) -> Result<EpistemicModel, TrackError> {
    let mut model = init_model(domain)?;
    for seed in seed_facts {
        model = model.announce(&PropFormula::from_atom(seed.clone()))?;
    }
    for mv in moves {
        let Some(text) = mv.prop_text.as_deref() else {
            continue;
        };
        match mv.label {
            Some(MoveLabel::Accept) => {
                let p = PropFormula::parse(text, domain)?;
                model = model.announce(&p)?;
            }
            Some(MoveLabel::Statement) => {
                let p = PropFormula::parse(text, domain)?;
                if !model.extension(&p).is_empty() {
                    model = model.add_evidence(&p)?;
                }
            }
            _ => {}
        }
    }
    Ok(model)
}

/// A per-utterance bank snapshot, as written to trajectory streams.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub group_id: String,
    pub utterance_id: String,
    #[serde(flatten)]
    pub banks: Banks,
}

/// A move the pipeline could not apply, with the reason.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MoveSkip {
    pub utterance_id: String,
    pub reason: String,
}

/// Outcome of running a whole move sequence.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub snapshots: Vec<Snapshot>,
    pub skipped: Vec<MoveSkip>,
    pub final_state: CGState,
}

/// Runs every move in order, snapshotting the banks after each one. Moves
/// that fail to apply are recorded and leave the state (and that move's
/// snapshot) unchanged, keeping snapshots aligned one-to-one with moves.
pub fn run_moves(initial: &CGState, moves: &[Move]) -> RunResult {
    let mut state = initial.clone();
    let mut snapshots = Vec::with_capacity(moves.len());
    let mut skipped = Vec::new();
    for mv in moves {
        let banks = match state.apply_move(mv) {
            Ok((next, banks)) => {
                state = next;
                banks
            }
            Err(e) => {
                skipped.push(MoveSkip {
                    utterance_id: mv.utterance_id.clone(),
                    reason: e.to_string(),
                });
                state.banks()
            }
        };
        snapshots.push(Snapshot {
            group_id: mv.group_id.clone(),
            utterance_id: mv.utterance_id.clone(),
            banks,
        });
    }
    RunResult {
        snapshots,
        skipped,
        final_state: state,
    }
}

/// Substitutes `from` by `to` at one position of the atom, returning the
/// canonical result when it stays well-formed (no self-reference, no
/// duplicate sum member).
fn substitute(atom: &AtomicProp, from: &BlockId, to: &BlockId) -> Option<AtomicProp> {
    if atom.lhs() == from {
        return AtomicProp::new(to.clone(), atom.relation(), atom.rhs().clone()).ok();
    }
    match atom.rhs() {
        Term::Block(r) if r == from => {
            AtomicProp::new(atom.lhs().clone(), atom.relation(), Term::Block(to.clone())).ok()
        }
        Term::Sum(bs) if bs.contains(from) => {
            let replaced: Vec<BlockId> = bs
                .iter()
                .map(|b| if b == from { to.clone() } else { b.clone() })
                .collect();
            AtomicProp::new(atom.lhs().clone(), atom.relation(), Term::Sum(replaced)).ok()
        }
        _ => None,
    }
}
