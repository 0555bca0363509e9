//! Differential testing of the closure-rule tracker against the evidence
//! kernel.
//!
//! Each trial builds a random move sequence over the atomic proposition
//! catalog, runs it through both the tracker and the kernel mirror, and
//! checks after every move that the banks respect the model:
//!
//! * every `block = weight` fact in FBank holds at all worlds (`[A]`);
//! * every `block = weight` entry in EBank (evidence-for) has a supporting
//!   evidence neighborhood (`[E]`).
//!
//! ACCEPT propositions are drawn so the announced model stays consistent,
//! matching the assumption that annotated gold data never contradicts
//! itself. Under that guarantee the tracker must accept every move too, so a
//! rejection is itself reported as a violation.
//!
//! On two-block domains the per-constraint pruning of the closure rules is
//! exactly the projection of the kernel's world set, so every trial passes.
//! With three or more blocks the closure rules are deliberately weaker:
//! constraints interacting through shared blocks (say `x = z` with
//! `y = x + z`) can leave a weight locally possible that the kernel has
//! globally refuted, and a statement about it then shows up in EBank with no
//! supporting neighborhood. The oracle reports such divergences with a
//! replayable counterexample; that is its job, not a failure of either side.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::ingest::{Move, MoveLabel};
use crate::kernel::{init_model, EpistemicFormula, EpistemicModel, KernelError};
use crate::prop::{
    generate_catalog, AtomicProp, PropError, PropFormula, Relation, TaskDomain, Term,
};
use crate::tracker::{Banks, CGState, TrackError};

/// Largest domain (in worlds) the oracle will exercise.
pub const WORLD_GUARD: u128 = 10_000;

const CATALOG_CAP: usize = 100_000;
const ACCEPT_RESEED_ATTEMPTS: usize = 32;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("domain spans {worlds} worlds; the oracle is limited to {guard}")]
    DomainTooLarge { worlds: u128, guard: u128 },
    #[error(transparent)]
    Track(#[from] TrackError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Prop(#[from] PropError),
}

#[derive(Debug, Clone, Copy)]
pub struct OracleSettings {
    pub trials: usize,
    pub seed: u64,
    pub max_len: usize,
}

impl Default for OracleSettings {
    fn default() -> Self {
        OracleSettings {
            trials: 1000,
            seed: 0,
            max_len: 8,
        }
    }
}

/// One disagreement between tracker and kernel, with everything needed to
/// replay it.
#[derive(Debug, Clone)]
pub struct Violation {
    pub trial: usize,
    pub step: usize,
    pub detail: String,
    pub seed_facts: Vec<String>,
    pub moves: Vec<Move>,
}

#[derive(Debug, Clone, Default)]
pub struct OracleReport {
    pub trials: usize,
    pub passed: usize,
    pub violations: Vec<Violation>,
}

impl OracleReport {
    pub fn first_counterexample(&self) -> Option<&Violation> {
        self.violations.first()
    }
}

/// Runs `settings.trials` random move sequences, checking the tracker's
/// banks against the mirrored kernel model after every move.
pub fn run_oracle(
    domain: &TaskDomain,
    relational_facts: bool,
    settings: &OracleSettings,
) -> Result<OracleReport, OracleError> {
    let worlds = domain.world_count().unwrap_or(u128::MAX);
    if worlds > WORLD_GUARD {
        return Err(OracleError::DomainTooLarge {
            worlds,
            guard: WORLD_GUARD,
        });
    }
    let catalog = generate_catalog(domain, 1, CATALOG_CAP)?;
    let blocks: Vec<_> = domain.blocks().collect();
    let weights: Vec<_> = domain.weights().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut report = OracleReport {
        trials: settings.trials,
        ..OracleReport::default()
    };

    'trial: for trial in 0..settings.trials {
        let len = if settings.max_len == 0 {
            0
        } else {
            rng.random_range(1..=settings.max_len)
        };
        let seed_facts: Vec<AtomicProp> = if rng.random_bool(0.5) {
            let block = blocks[rng.random_range(0..blocks.len())].clone();
            let weight = weights[rng.random_range(0..weights.len())];
            vec![AtomicProp::new(block, Relation::Eq, Term::Weight(weight))
                .expect("weight atom is canonical")]
        } else {
            Vec::new()
        };

        let mut state = CGState::new(domain, relational_facts, &seed_facts)?;
        let mut model = init_model(domain)?;
        for seed in &seed_facts {
            model = model.announce(&PropFormula::from_atom(seed.clone()))?;
        }
        let mut moves: Vec<Move> = Vec::with_capacity(len);

        for step in 0..len {
            let label = match rng.random_range(0..100u32) {
                0..45 => MoveLabel::Statement,
                45..85 => MoveLabel::Accept,
                _ => MoveLabel::Doubt,
            };
            let (prop, announced) = match label {
                MoveLabel::Accept => {
                    // Only announceable propositions keep the trial's gold
                    // story consistent; resample until one fits.
                    let mut picked = None;
                    for _ in 0..ACCEPT_RESEED_ATTEMPTS {
                        let candidate = &catalog[rng.random_range(0..catalog.len())];
                        if let Ok(next) = model.announce(candidate) {
                            picked = Some((candidate.clone(), Some(next)));
                            break;
                        }
                    }
                    picked.unwrap_or_else(|| {
                        // Announce a world's own weight: always consistent.
                        let world = model
                            .worlds()
                            .iter()
                            .nth(rng.random_range(0..model.world_count()))
                            .expect("model has worlds");
                        let block = blocks[rng.random_range(0..blocks.len())].clone();
                        let weight = world.weight_of(&block).expect("world is total");
                        let atom = AtomicProp::new(block, Relation::Eq, Term::Weight(weight))
                            .expect("weight atom is canonical");
                        let p = PropFormula::from_atom(atom);
                        let next = model.announce(&p).expect("true at a surviving world");
                        (p, Some(next))
                    })
                }
                _ => (catalog[rng.random_range(0..catalog.len())].clone(), None),
            };

            let mv = Move {
                utterance_id: format!("t{trial}-m{step}"),
                group_id: format!("t{trial}"),
                start_s: step as f64,
                end_s: step as f64 + 1.0,
                participant: "P1".into(),
                text: String::new(),
                label: Some(label),
                prop_text: Some(prop.to_string()),
            };
            moves.push(mv.clone());

            match state.apply_move(&mv) {
                Ok((next, banks)) => {
                    state = next;
                    match label {
                        MoveLabel::Accept => {
                            model = announced.expect("accepts pre-announce");
                        }
                        MoveLabel::Statement => {
                            if !model.extension(&prop).is_empty() {
                                model = model.add_evidence(&prop)?;
                            }
                        }
                        _ => {}
                    }
                    if let Some(detail) = check_banks_against_model(&banks, &model, domain) {
                        report.violations.push(Violation {
                            trial,
                            step,
                            detail,
                            seed_facts: seed_facts.iter().map(|a| a.to_string()).collect(),
                            moves: moves.clone(),
                        });
                        continue 'trial;
                    }
                }
                Err(e) => {
                    report.violations.push(Violation {
                        trial,
                        step,
                        detail: format!("tracker rejected a consistent move: {e}"),
                        seed_facts: seed_facts.iter().map(|a| a.to_string()).collect(),
                        moves: moves.clone(),
                    });
                    continue 'trial;
                }
            }
        }
        report.passed += 1;
    }
    Ok(report)
}

/// The oracle-soundness invariant for one snapshot.
pub fn check_banks_against_model(
    banks: &Banks,
    model: &EpistemicModel,
    domain: &TaskDomain,
) -> Option<String> {
    for entry in &banks.fbank {
        if let Some(atom) = weight_equality(entry, domain) {
            if !model.holds_a(&EpistemicFormula::atom(atom)) {
                return Some(format!("FBank fact `{entry}` does not hold at every world"));
            }
        }
    }
    for entry in &banks.ebank {
        if let Some(atom) = weight_equality(entry, domain) {
            if !model.holds_e(&EpistemicFormula::atom(atom)) {
                return Some(format!("EBank entry `{entry}` has no supporting evidence"));
            }
        }
    }
    None
}

fn weight_equality(entry: &str, domain: &TaskDomain) -> Option<AtomicProp> {
    let formula = PropFormula::parse(entry, domain).ok()?;
    let atom = formula.atoms().first()?.clone();
    if formula.atoms().len() == 1
        && atom.relation() == Relation::Eq
        && matches!(atom.rhs(), Term::Weight(_))
    {
        Some(atom)
    } else {
        None
    }
}
