//! Move-log loading and propositional-content resolution.
//!
//! Move logs are line-delimited JSON, one record per utterance. Propositions
//! are resolved through pluggable extractors: the dictionary extractor maps
//! annotated utterance ids (falling back to the record's own `prop_text`),
//! and the similarity extractor retrieves the catalog formula whose phrasing
//! is closest to the utterance under term-frequency cosine similarity.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prop::{PropFormula, TaskDomain};

/// The dialogue-act categories a move can carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MoveLabel {
    Statement,
    Accept,
    Doubt,
    Observation,
    Inference,
    Question,
    Answer,
}

impl fmt::Display for MoveLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            MoveLabel::Statement => "STATEMENT",
            MoveLabel::Accept => "ACCEPT",
            MoveLabel::Doubt => "DOUBT",
            MoveLabel::Observation => "OBSERVATION",
            MoveLabel::Inference => "INFERENCE",
            MoveLabel::Question => "QUESTION",
            MoveLabel::Answer => "ANSWER",
        };
        f.write_str(name)
    }
}

/// One labeled dialogue act. Unknown fields in the serialized form are
/// ignored on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Move {
    pub utterance_id: String,
    pub group_id: String,
    #[serde(default)]
    pub start_s: f64,
    #[serde(default)]
    pub end_s: f64,
    #[serde(default)]
    pub participant: String,
    #[serde(default)]
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<MoveLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prop_text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for RecordError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{} invalid record(s); first: {}", .0.len(), .0[0])]
    InvalidLog(Vec<RecordError>),
    #[error("the proposition catalog is empty")]
    EmptyCatalog,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl IngestError {
    pub fn record_errors(&self) -> &[RecordError] {
        match self {
            IngestError::InvalidLog(errs) => errs,
            _ => &[],
        }
    }
}

/// Loads a move log, validating every record. Returns the moves sorted by
/// (group, start time, utterance id), or every located error at once.
pub fn load_move_log(reader: impl BufRead, domain: &TaskDomain) -> Result<Vec<Move>, IngestError> {
    let mut moves: Vec<Move> = Vec::new();
    let mut errors: Vec<RecordError> = Vec::new();
    let mut seen_ids: BTreeSet<(String, String)> = BTreeSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mv: Move = match serde_json::from_str(&line) {
            Ok(mv) => mv,
            Err(e) => {
                errors.push(RecordError {
                    line: line_no,
                    message: format!("malformed record: {e}"),
                });
                continue;
            }
        };
        if mv.start_s > mv.end_s {
            errors.push(RecordError {
                line: line_no,
                message: format!(
                    "utterance `{}`: start_s {} is after end_s {}",
                    mv.utterance_id, mv.start_s, mv.end_s
                ),
            });
            continue;
        }
        if let Some(prop) = &mv.prop_text {
            if let Err(e) = PropFormula::parse(prop, domain) {
                errors.push(RecordError {
                    line: line_no,
                    message: format!("utterance `{}`: bad proposition: {e}", mv.utterance_id),
                });
                continue;
            }
        }
        if !seen_ids.insert((mv.group_id.clone(), mv.utterance_id.clone())) {
            errors.push(RecordError {
                line: line_no,
                message: format!(
                    "duplicate utterance id `{}` in group `{}`",
                    mv.utterance_id, mv.group_id
                ),
            });
            continue;
        }
        moves.push(mv);
    }
    if !errors.is_empty() {
        return Err(IngestError::InvalidLog(errors));
    }
    moves.sort_by(|a, b| {
        a.group_id
            .cmp(&b.group_id)
            .then(a.start_s.total_cmp(&b.start_s))
            .then(a.utterance_id.cmp(&b.utterance_id))
    });
    Ok(moves)
}

/// Annotated utterance-id → proposition mapping.
#[derive(Debug, Clone, Default)]
pub struct PropositionDictionary {
    entries: BTreeMap<String, PropFormula>,
}

impl PropositionDictionary {
    pub fn new(entries: BTreeMap<String, PropFormula>) -> Self {
        PropositionDictionary { entries }
    }

    pub fn get(&self, utterance_id: &str) -> Option<&PropFormula> {
        self.entries.get(utterance_id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Deserialize)]
struct DictionaryRecord {
    utterance_id: String,
    proposition: String,
}

/// Loads a dictionary file: JSON lines of `{utterance_id, proposition}`.
pub fn load_dictionary(
    reader: impl BufRead,
    domain: &TaskDomain,
) -> Result<PropositionDictionary, IngestError> {
    let mut entries = BTreeMap::new();
    let mut errors = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<DictionaryRecord>(&line) {
            Ok(rec) => match PropFormula::parse(&rec.proposition, domain) {
                Ok(formula) => {
                    if entries.insert(rec.utterance_id.clone(), formula).is_some() {
                        errors.push(RecordError {
                            line: line_no,
                            message: format!("duplicate utterance id `{}`", rec.utterance_id),
                        });
                    }
                }
                Err(e) => errors.push(RecordError {
                    line: line_no,
                    message: format!("bad proposition: {e}"),
                }),
            },
            Err(e) => errors.push(RecordError {
                line: line_no,
                message: format!("malformed record: {e}"),
            }),
        }
    }
    if !errors.is_empty() {
        return Err(IngestError::InvalidLog(errors));
    }
    Ok(PropositionDictionary::new(entries))
}

/// A retrieval target: one formula with the surface phrasings that express it.
#[derive(Debug, Clone, PartialEq)]
pub struct CatalogEntry {
    pub formula: PropFormula,
    pub phrasings: Vec<String>,
}

/// The set of candidate propositions for similarity-based extraction.
#[derive(Debug, Clone, Default)]
pub struct PropositionCatalog {
    entries: Vec<CatalogEntry>,
}

impl PropositionCatalog {
    /// Entries must be duplicate-free by formula.
    pub fn new(entries: Vec<CatalogEntry>) -> Result<Self, IngestError> {
        let mut seen = BTreeSet::new();
        for e in &entries {
            if !seen.insert(e.formula.to_string()) {
                return Err(IngestError::InvalidLog(vec![RecordError {
                    line: 0,
                    message: format!("duplicate catalog formula `{}`", e.formula),
                }]));
            }
        }
        Ok(PropositionCatalog { entries })
    }

    pub fn entries(&self) -> &[CatalogEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Deserialize)]
struct CatalogRecord {
    proposition: String,
    #[serde(default)]
    phrasings: Vec<String>,
}

/// Loads a catalog file: JSON lines of `{proposition, phrasings}`.
pub fn load_catalog(
    reader: impl BufRead,
    domain: &TaskDomain,
) -> Result<PropositionCatalog, IngestError> {
    let mut entries = Vec::new();
    let mut errors = Vec::new();
    let mut seen = BTreeSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<CatalogRecord>(&line) {
            Ok(rec) => match PropFormula::parse(&rec.proposition, domain) {
                Ok(formula) => {
                    if !seen.insert(formula.to_string()) {
                        errors.push(RecordError {
                            line: line_no,
                            message: format!("duplicate catalog formula `{formula}`"),
                        });
                    } else {
                        entries.push(CatalogEntry {
                            formula,
                            phrasings: rec.phrasings,
                        });
                    }
                }
                Err(e) => errors.push(RecordError {
                    line: line_no,
                    message: format!("bad proposition: {e}"),
                }),
            },
            Err(e) => errors.push(RecordError {
                line: line_no,
                message: format!("malformed record: {e}"),
            }),
        }
    }
    if !errors.is_empty() {
        return Err(IngestError::InvalidLog(errors));
    }
    Ok(PropositionCatalog { entries })
}

/// Tokens dropped before building term-frequency vectors.
#[derive(Debug, Clone)]
pub struct StopWords(BTreeSet<String>);

/// Filler vocabulary kept deliberately free of number words, color words,
/// and comparison words, which carry the propositional signal.
const BUILTIN_STOPWORDS: &[&str] = &[
    "a",
    "about",
    "actually",
    "also",
    "an",
    "and",
    "are",
    "as",
    "at",
    "basically",
    "be",
    "been",
    "being",
    "but",
    "by",
    "can",
    "could",
    "d",
    "did",
    "do",
    "does",
    "doing",
    "for",
    "from",
    "get",
    "go",
    "going",
    "gonna",
    "got",
    "guess",
    "had",
    "has",
    "have",
    "he",
    "here",
    "hm",
    "hmm",
    "how",
    "i",
    "if",
    "im",
    "in",
    "is",
    "it",
    "its",
    "just",
    "kind",
    "know",
    "let",
    "lets",
    "like",
    "ll",
    "look",
    "looks",
    "m",
    "may",
    "maybe",
    "me",
    "might",
    "must",
    "my",
    "now",
    "of",
    "oh",
    "ok",
    "okay",
    "on",
    "or",
    "our",
    "out",
    "probably",
    "re",
    "really",
    "s",
    "said",
    "say",
    "see",
    "shall",
    "she",
    "should",
    "so",
    "sort",
    "t",
    "than",
    "that",
    "thats",
    "the",
    "their",
    "them",
    "then",
    "there",
    "these",
    "they",
    "thing",
    "things",
    "think",
    "this",
    "those",
    "to",
    "too",
    "try",
    "uh",
    "um",
    "up",
    "us",
    "ve",
    "very",
    "was",
    "we",
    "well",
    "were",
    "what",
    "when",
    "where",
    "which",
    "who",
    "why",
    "will",
    "with",
    "would",
    "yeah",
    "yes",
    "you",
    "your",
];

impl StopWords {
    pub fn builtin() -> Self {
        StopWords(BUILTIN_STOPWORDS.iter().map(|s| s.to_string()).collect())
    }

    pub fn from_words<S: AsRef<str>>(words: &[S]) -> Self {
        StopWords(
            words
                .iter()
                .map(|w| w.as_ref().trim().to_ascii_lowercase())
                .filter(|w| !w.is_empty())
                .collect(),
        )
    }

    /// One token per line; blank lines and `#` comments skipped.
    pub fn from_reader(reader: impl BufRead) -> Result<Self, IngestError> {
        let mut words = BTreeSet::new();
        for line in reader.lines() {
            let line = line?;
            let tok = line.trim();
            if tok.is_empty() || tok.starts_with('#') {
                continue;
            }
            words.insert(tok.to_ascii_lowercase());
        }
        Ok(StopWords(words))
    }

    pub fn contains(&self, token: &str) -> bool {
        self.0.contains(token)
    }
}

/// Lowercases and splits on every non-alphanumeric character.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_ascii_lowercase()
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_string())
        .collect()
}

fn term_frequencies(text: &str, stop: &StopWords) -> BTreeMap<String, f64> {
    let mut tf: BTreeMap<String, f64> = BTreeMap::new();
    for tok in tokenize(text) {
        if stop.contains(&tok) {
            continue;
        }
        *tf.entry(tok).or_insert(0.0) += 1.0;
    }
    tf
}

fn cosine(a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>) -> f64 {
    let dot: f64 = a
        .iter()
        .filter_map(|(k, va)| b.get(k).map(|vb| va * vb))
        .sum();
    let na: f64 = a.values().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = b.values().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Dictionary extraction: the annotated mapping wins, then the record's own
/// `prop_text`, then nothing. Move logs are validated on load, so a present
/// `prop_text` always parses.
pub fn extract_dictionary(
    mv: &Move,
    dictionary: &PropositionDictionary,
    domain: &TaskDomain,
) -> Option<PropFormula> {
    dictionary.get(&mv.utterance_id).cloned().or_else(|| {
        mv.prop_text
            .as_deref()
            .and_then(|text| PropFormula::parse(text, domain).ok())
    })
}

/// Similarity extraction: scores each catalog formula by the best cosine
/// similarity between the utterance's term-frequency vector and its
/// phrasings', and returns the argmax. Ties break toward the smaller
/// canonical string; a best score below `threshold` returns nothing.
pub fn extract_similarity(
    mv: &Move,
    catalog: &PropositionCatalog,
    stop: &StopWords,
    threshold: f64,
) -> Result<Option<PropFormula>, IngestError> {
    if catalog.is_empty() {
        return Err(IngestError::EmptyCatalog);
    }
    let tf = term_frequencies(&mv.text, stop);
    let mut best: Option<(f64, String, &CatalogEntry)> = None;
    for entry in catalog.entries() {
        let score = entry
            .phrasings
            .iter()
            .map(|p| cosine(&tf, &term_frequencies(p, stop)))
            .fold(0.0_f64, f64::max);
        let key = entry.formula.to_string();
        let better = match &best {
            None => true,
            Some((s, k, _)) => score > *s || (score == *s && key < *k),
        };
        if better {
            best = Some((score, key, entry));
        }
    }
    Ok(best.and_then(|(score, _, entry)| {
        if score < threshold {
            None
        } else {
            Some(entry.formula.clone())
        }
    }))
}

const AFFIRMATION_LEXICON: &[&str] = &["yeah", "yes", "right", "sure"];
const DOUBT_LEXICON: &[&str] = &["wait", "hmm", "really"];
const COMPARISON_WORDS: &[&str] = &[
    "equal", "equals", "same", "less", "more", "greater", "lighter", "heavier", "plus",
];
const NUMBER_WORDS: &[&str] = &["ten", "twenty", "thirty", "forty", "fifty"];

/// Keyword stand-in for a trained move classifier. A rule cascade over the
/// lowercased, punctuation-stripped text: bare affirmations are ACCEPTs,
/// doubt cues are DOUBTs, extractable content is a STATEMENT, anything else
/// an OBSERVATION.
pub fn classify_move_heuristic(
    text: &str,
    prop_extractable: bool,
    domain: &TaskDomain,
) -> MoveLabel {
    let tokens = tokenize(text);
    let is_prop_token = |t: &str| {
        domain.block_named(t).is_some()
            || t.chars().all(|c| c.is_ascii_digit())
            || NUMBER_WORDS.contains(&t)
            || COMPARISON_WORDS.contains(&t)
    };
    let affirmation = tokens
        .iter()
        .any(|t| AFFIRMATION_LEXICON.contains(&t.as_str()));
    let any_prop_token = tokens.iter().any(|t| is_prop_token(t));
    if affirmation && !any_prop_token {
        return MoveLabel::Accept;
    }
    if tokens.iter().any(|t| DOUBT_LEXICON.contains(&t.as_str())) {
        return MoveLabel::Doubt;
    }
    if prop_extractable {
        MoveLabel::Statement
    } else {
        MoveLabel::Observation
    }
}

/// Which extractor chain resolves a move's propositional content.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtractorPolicy {
    DictionaryOnly,
    SimilarityOnly,
    DictionaryFirst,
    SimilarityFirst,
}

/// Where move labels come from: the annotations in the log, or the keyword
/// heuristic for moves that lack one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelPolicy {
    Gold,
    Heuristic,
}

/// Everything resolution needs, borrowed from the caller.
pub struct ResolveContext<'a> {
    pub domain: &'a TaskDomain,
    pub dictionary: Option<&'a PropositionDictionary>,
    pub catalog: Option<&'a PropositionCatalog>,
    pub stopwords: &'a StopWords,
    pub similarity_threshold: f64,
    pub extractor: ExtractorPolicy,
    pub labels: LabelPolicy,
}

impl ResolveContext<'_> {
    fn dictionary_route(&self, mv: &Move) -> Option<PropFormula> {
        let empty = PropositionDictionary::default();
        let dict = self.dictionary.unwrap_or(&empty);
        extract_dictionary(mv, dict, self.domain)
    }

    fn similarity_route(&self, mv: &Move) -> Option<PropFormula> {
        let catalog = self.catalog?;
        extract_similarity(mv, catalog, self.stopwords, self.similarity_threshold)
            .ok()
            .flatten()
    }
}

/// Fills in a move's label and proposition where resolvable. STATEMENT and
/// ACCEPT moves left without a proposition are skipped (and logged) when the
/// tracker later applies them.
pub fn resolve(mv: &Move, ctx: &ResolveContext<'_>) -> Move {
    let extracted = match ctx.extractor {
        ExtractorPolicy::DictionaryOnly => ctx.dictionary_route(mv),
        ExtractorPolicy::SimilarityOnly => ctx.similarity_route(mv),
        ExtractorPolicy::DictionaryFirst => ctx
            .dictionary_route(mv)
            .or_else(|| ctx.similarity_route(mv)),
        ExtractorPolicy::SimilarityFirst => ctx
            .similarity_route(mv)
            .or_else(|| ctx.dictionary_route(mv)),
    };
    let label = match (mv.label, ctx.labels) {
        (Some(l), _) => Some(l),
        (None, LabelPolicy::Gold) => None,
        (None, LabelPolicy::Heuristic) => Some(classify_move_heuristic(
            &mv.text,
            extracted.is_some(),
            ctx.domain,
        )),
    };
    Move {
        label,
        prop_text: extracted.map(|f| f.to_string()),
        ..mv.clone()
    }
}
