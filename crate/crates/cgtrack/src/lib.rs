//! Common ground tracking for collaborative weight-deduction dialogues.
//!
//! A group deduces the weights of colored blocks with a balance scale; their
//! dialogue moves (statements, acceptances, doubts, ...) carry task
//! propositions like `red = 10` or `green = red + blue`. This crate tracks
//! what the group jointly knows after each move as three banks:
//!
//! * **QBank** — open questions (`"blue = 20?"`),
//! * **EBank** — propositions with some supporting evidence,
//! * **FBank** — propositions the whole group has settled on.
//!
//! [`tracker`] maintains that state with deterministic closure rules over
//! per-block possibility and evidence sets. [`kernel`] is a brute-force
//! finite-model implementation of the underlying evidence logic, used as an
//! oracle to cross-check the tracker (see [`oracle`]). [`ingest`] loads move
//! logs and resolves propositional content, [`metrics`] scores predicted bank
//! trajectories against gold with the Sørensen-Dice coefficient, and [`cli`]
//! wires everything into the `cgtrack` binary.

pub mod cli;
pub mod config;
pub mod ingest;
pub mod kernel;
pub mod metrics;
pub mod oracle;
pub mod prop;
pub mod tracker;
