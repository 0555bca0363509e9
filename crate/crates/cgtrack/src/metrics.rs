//! Sørensen-Dice scoring of predicted bank trajectories against gold, per
//! utterance, per group, and aggregated across groups.
//!
//! Groups finish the task after different numbers of moves, so when
//! aggregating a per-utterance series across groups the shorter trajectories
//! are padded to the longest by copying their final banks forward — the
//! common ground is in a steady state once a group is done. Per-group
//! averages are taken over the unpadded lengths.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tracker::Banks;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("no trajectory pairs to aggregate")]
    EmptyInput,
    #[error("group `{group}`: predicted {pred_len} snapshots but gold has {gold_len}")]
    LengthMismatch {
        group: String,
        pred_len: usize,
        gold_len: usize,
    },
    #[error("group `{group}`, snapshot {index}: predicted utterance `{pred_id}` but gold has `{gold_id}`")]
    IdMismatch {
        group: String,
        index: usize,
        pred_id: String,
        gold_id: String,
    },
    #[error("trajectory pair mixes groups `{pred}` and `{gold}`")]
    GroupMismatch { pred: String, gold: String },
    #[error("group `{group}` has an empty trajectory but padding is required")]
    EmptyTrajectory { group: String },
    #[error("report (de)serialization failed: {0}")]
    Serde(String),
}

/// Sørensen-Dice coefficient, `2|a ∩ b| / (|a| + |b|)`. Two empty sets count
/// as a perfect match — at the start of a dialogue both sides are empty.
pub fn dsc(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let shared = a.intersection(b).count();
    2.0 * shared as f64 / (a.len() + b.len()) as f64
}

/// DSC per bank, plus the union of facts and evidence, which measures
/// whether the right propositions were retrieved regardless of the evidence
/// level assigned to them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BankScores {
    pub qbank: f64,
    pub ebank: f64,
    pub fbank: f64,
    pub f_union_e: f64,
}

pub fn compare_banks(pred: &Banks, gold: &Banks) -> BankScores {
    let pred_fe: BTreeSet<String> = pred.fbank.union(&pred.ebank).cloned().collect();
    let gold_fe: BTreeSet<String> = gold.fbank.union(&gold.ebank).cloned().collect();
    BankScores {
        qbank: dsc(&pred.qbank, &gold.qbank),
        ebank: dsc(&pred.ebank, &gold.ebank),
        fbank: dsc(&pred.fbank, &gold.fbank),
        f_union_e: dsc(&pred_fe, &gold_fe),
    }
}

/// One group's bank snapshots, in move order.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub group_id: String,
    pub snapshots: Vec<(String, Banks)>,
}

impl Trajectory {
    pub fn new(group_id: impl Into<String>, snapshots: Vec<(String, Banks)>) -> Self {
        Trajectory {
            group_id: group_id.into(),
            snapshots,
        }
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }
}

/// Pointwise scores for one predicted/gold pair, plus their means.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryScores {
    pub per_utterance: Vec<BankScores>,
    pub mean: BankScores,
}

fn mean_scores(scores: &[BankScores]) -> BankScores {
    let n = scores.len().max(1) as f64;
    BankScores {
        qbank: scores.iter().map(|s| s.qbank).sum::<f64>() / n,
        ebank: scores.iter().map(|s| s.ebank).sum::<f64>() / n,
        fbank: scores.iter().map(|s| s.fbank).sum::<f64>() / n,
        f_union_e: scores.iter().map(|s| s.f_union_e).sum::<f64>() / n,
    }
}

/// Compares two trajectories snapshot by snapshot. Lengths and utterance ids
/// must line up exactly.
pub fn trajectory_eval(
    pred: &Trajectory,
    gold: &Trajectory,
) -> Result<TrajectoryScores, MetricsError> {
    if pred.group_id != gold.group_id {
        return Err(MetricsError::GroupMismatch {
            pred: pred.group_id.clone(),
            gold: gold.group_id.clone(),
        });
    }
    if pred.len() != gold.len() {
        return Err(MetricsError::LengthMismatch {
            group: gold.group_id.clone(),
            pred_len: pred.len(),
            gold_len: gold.len(),
        });
    }
    let mut per_utterance = Vec::with_capacity(pred.len());
    for (index, ((pid, pbanks), (gid, gbanks))) in
        pred.snapshots.iter().zip(&gold.snapshots).enumerate()
    {
        if pid != gid {
            return Err(MetricsError::IdMismatch {
                group: gold.group_id.clone(),
                index,
                pred_id: pid.clone(),
                gold_id: gid.clone(),
            });
        }
        per_utterance.push(compare_banks(pbanks, gbanks));
    }
    let mean = mean_scores(&per_utterance);
    Ok(TrajectoryScores {
        per_utterance,
        mean,
    })
}

/// Per-group average DSC and the cross-group per-utterance series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DscReport {
    pub per_group: BTreeMap<String, BankScores>,
    pub series: Vec<BankScores>,
}

/// Evaluates every (predicted, gold) trajectory pair and aggregates. The
/// cross-group series pads shorter groups by re-comparing a copy of their
/// final banks at each missing index; per-group averages ignore the padding.
pub fn aggregate_groups(pairs: &[(Trajectory, Trajectory)]) -> Result<DscReport, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut per_group = BTreeMap::new();
    let mut padded_series: Vec<Vec<BankScores>> = Vec::with_capacity(pairs.len());
    let max_len = pairs.iter().map(|(_, gold)| gold.len()).max().unwrap_or(0);
    for (pred, gold) in pairs {
        let scores = trajectory_eval(pred, gold)?;
        per_group.insert(gold.group_id.clone(), scores.mean);
        let mut series = scores.per_utterance;
        if series.len() < max_len {
            let (final_pred, final_gold) = match (pred.snapshots.last(), gold.snapshots.last()) {
                (Some((_, p)), Some((_, g))) => (p, g),
                _ => {
                    return Err(MetricsError::EmptyTrajectory {
                        group: gold.group_id.clone(),
                    })
                }
            };
            let steady = compare_banks(final_pred, final_gold);
            series.resize(max_len, steady);
        }
        padded_series.push(series);
    }
    let series = (0..max_len)
        .map(|i| {
            let column: Vec<BankScores> = padded_series.iter().map(|s| s[i]).collect();
            mean_scores(&column)
        })
        .collect();
    Ok(DscReport { per_group, series })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    /// Per-group table, one row per bank.
    Markdown,
    /// `index,bank,dsc` rows of the cross-group series.
    CsvSeries,
    /// JSON, round-trippable through [`load_report`].
    Structured,
}

const BANK_ROWS: [(&str, fn(&BankScores) -> f64); 4] = [
    ("QBank", |s| s.qbank),
    ("EBank", |s| s.ebank),
    ("FBank", |s| s.fbank),
    ("F ∪ E", |s| s.f_union_e),
];

const CSV_BANKS: [(&str, fn(&BankScores) -> f64); 4] = [
    ("qbank", |s| s.qbank),
    ("ebank", |s| s.ebank),
    ("fbank", |s| s.fbank),
    ("f_union_e", |s| s.f_union_e),
];

pub fn render_report(report: &DscReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Markdown => {
            let mut out = String::new();
            out.push_str("| Bank |");
            for group in report.per_group.keys() {
                out.push_str(&format!(" {group} |"));
            }
            out.push('\n');
            out.push_str("| --- |");
            for _ in report.per_group.keys() {
                out.push_str(" --- |");
            }
            out.push('\n');
            for (name, pick) in BANK_ROWS {
                out.push_str(&format!("| {name} |"));
                for scores in report.per_group.values() {
                    out.push_str(&format!(" {:.3} |", pick(scores)));
                }
                out.push('\n');
            }
            out
        }
        ReportFormat::CsvSeries => {
            let mut out = String::from("index,bank,dsc\n");
            for (i, scores) in report.series.iter().enumerate() {
                for (bank, pick) in CSV_BANKS {
                    out.push_str(&format!("{},{},{:.6}\n", i + 1, bank, pick(scores)));
                }
            }
            out
        }
        ReportFormat::Structured => {
            let mut out = serde_json::to_string_pretty(report).expect("report serializes");
            out.push('\n');
            out
        }
    }
}

pub fn load_report(text: &str) -> Result<DscReport, MetricsError> {
    serde_json::from_str(text).map_err(|e| MetricsError::Serde(e.to_string()))
}
