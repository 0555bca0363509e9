//! The `cgtrack` command line: `track`, `eval`, `oracle-check`, and `repl`.

mod repl;

use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use crate::config::TaskConfig;
use crate::ingest::{self, ExtractorPolicy, LabelPolicy, Move, ResolveContext};
use crate::metrics::{self, ReportFormat, Trajectory};
use crate::oracle::{self, OracleSettings};
use crate::prop::TaskDomain;
use crate::tracker::{run_moves, CGState, RunResult};

const ENV_HELP: &str = "Configuration comes from --config (TOML) with CGT_-prefixed environment \
overrides: CGT_BLOCKS, CGT_WEIGHTS, CGT_SEED_FACTS (comma-separated), CGT_RELATIONAL_FACTS, \
CGT_SIMILARITY_THRESHOLD, CGT_STOPWORD_PATH, CGT_CATALOG_PATH, CGT_DICTIONARY_PATH, \
CGT_CATALOG_CAP, CGT_MAX_CONJUNCTS.";

#[derive(Debug, Parser)]
#[command(
    name = "cgtrack",
    about = "Track the common ground of weight-deduction dialogues",
    after_help = ENV_HELP
)]
pub struct Cli {
    /// Task configuration file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExtractorArg {
    /// Annotated propositions: dictionary lookup, then the record's own text.
    Dictionary,
    /// Retrieval by token similarity against the phrasing catalog.
    Similarity,
    /// Dictionary first, similarity as fallback.
    DictionaryThenSimilarity,
}

impl From<ExtractorArg> for ExtractorPolicy {
    fn from(arg: ExtractorArg) -> Self {
        match arg {
            ExtractorArg::Dictionary => ExtractorPolicy::DictionaryOnly,
            ExtractorArg::Similarity => ExtractorPolicy::SimilarityOnly,
            ExtractorArg::DictionaryThenSimilarity => ExtractorPolicy::DictionaryFirst,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LabelsArg {
    /// Use the labels annotated in the log.
    Gold,
    /// Fill missing labels with the keyword heuristic.
    Heuristic,
}

impl From<LabelsArg> for LabelPolicy {
    fn from(arg: LabelsArg) -> Self {
        match arg {
            LabelsArg::Gold => LabelPolicy::Gold,
            LabelsArg::Heuristic => LabelPolicy::Heuristic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Markdown,
    Csv,
    Structured,
}

impl From<FormatArg> for ReportFormat {
    fn from(arg: FormatArg) -> Self {
        match arg {
            FormatArg::Markdown => ReportFormat::Markdown,
            FormatArg::Csv => ReportFormat::CsvSeries,
            FormatArg::Structured => ReportFormat::Structured,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a move log through the closure rules and emit bank snapshots.
    Track {
        /// Move log (JSON lines).
        move_log: PathBuf,
        #[arg(long, value_enum, default_value_t = ExtractorArg::Dictionary)]
        extractor: ExtractorArg,
        #[arg(long, value_enum, default_value_t = LabelsArg::Gold)]
        labels: LabelsArg,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a predicted move log against a gold one.
    Eval {
        pred_log: PathBuf,
        gold_log: PathBuf,
        #[arg(long, value_enum, default_value_t = ExtractorArg::Dictionary)]
        extractor: ExtractorArg,
        #[arg(long, value_enum, default_value_t = LabelsArg::Gold)]
        labels: LabelsArg,
        #[arg(long, value_enum, default_value_t = FormatArg::Markdown)]
        format: FormatArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Differential-test the tracker against the evidence-logic kernel.
    /// Exact on two-block domains; on larger ones the closure rules are
    /// knowingly weaker and genuine divergences are reported for replay.
    OracleCheck {
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Longest generated move sequence.
        #[arg(long, default_value_t = 8)]
        max_len: usize,
        /// Where to write a counterexample move log; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Step moves interactively and inspect bank diffs.
    Repl,
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    let config = TaskConfig::resolve(cli.config.as_deref())?;
    match cli.command {
        Command::Track {
            move_log,
            extractor,
            labels,
            out,
        } => cmd_track(
            &config,
            &move_log,
            extractor.into(),
            labels.into(),
            out.as_deref(),
        ),
        Command::Eval {
            pred_log,
            gold_log,
            extractor,
            labels,
            format,
            out,
        } => cmd_eval(
            &config,
            &pred_log,
            &gold_log,
            extractor.into(),
            labels.into(),
            format.into(),
            out.as_deref(),
        ),
        Command::OracleCheck {
            trials,
            seed,
            max_len,
            out,
        } => cmd_oracle_check(
            &config,
            OracleSettings {
                trials,
                seed,
                max_len,
            },
            out.as_deref(),
        ),
        Command::Repl => {
            let stdin = io::stdin();
            let mut stdout = io::stdout();
            repl::run_repl(&config, stdin.lock(), &mut stdout)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn open_log(path: &Path) -> Result<impl BufRead> {
    let file =
        File::open(path).with_context(|| format!("cannot open move log `{}`", path.display()))?;
    Ok(BufReader::new(file))
}

fn out_writer(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(
            File::create(path).with_context(|| format!("cannot create `{}`", path.display()))?,
        ),
        None => Box::new(io::stdout()),
    })
}

struct Resources {
    domain: TaskDomain,
    dictionary: Option<ingest::PropositionDictionary>,
    catalog: Option<ingest::PropositionCatalog>,
    stopwords: ingest::StopWords,
    threshold: f64,
}

impl Resources {
    fn load(config: &TaskConfig) -> Result<Self> {
        let domain = config.domain()?;
        Ok(Resources {
            dictionary: config.dictionary(&domain)?,
            catalog: config.catalog(&domain)?,
            stopwords: config.stopwords()?,
            threshold: config.similarity_threshold,
            domain,
        })
    }

    fn context(&self, extractor: ExtractorPolicy, labels: LabelPolicy) -> ResolveContext<'_> {
        ResolveContext {
            domain: &self.domain,
            dictionary: self.dictionary.as_ref(),
            catalog: self.catalog.as_ref(),
            stopwords: &self.stopwords,
            similarity_threshold: self.threshold,
            extractor,
            labels,
        }
    }
}

fn resolve_log(
    path: &Path,
    res: &Resources,
    extractor: ExtractorPolicy,
    labels: LabelPolicy,
) -> Result<Vec<Move>> {
    if matches!(
        extractor,
        ExtractorPolicy::SimilarityOnly | ExtractorPolicy::SimilarityFirst
    ) && res.catalog.is_none()
    {
        bail!("the similarity extractor needs catalog_path in the configuration");
    }
    let moves = ingest::load_move_log(open_log(path)?, &res.domain)
        .with_context(|| format!("invalid move log `{}`", path.display()))?;
    let ctx = res.context(extractor, labels);
    Ok(moves.iter().map(|m| ingest::resolve(m, &ctx)).collect())
}

/// Splits a sorted move list into per-group runs, preserving order.
fn group_moves(moves: &[Move]) -> Vec<(String, Vec<Move>)> {
    let mut groups: Vec<(String, Vec<Move>)> = Vec::new();
    for mv in moves {
        match groups.last_mut() {
            Some((gid, bucket)) if *gid == mv.group_id => bucket.push(mv.clone()),
            _ => groups.push((mv.group_id.clone(), vec![mv.clone()])),
        }
    }
    groups
}

fn run_grouped(
    config: &TaskConfig,
    domain: &TaskDomain,
    moves: &[Move],
) -> Result<Vec<(String, RunResult)>> {
    let seeds = config.seed_atoms(domain)?;
    let mut runs = Vec::new();
    for (group_id, group) in group_moves(moves) {
        let initial = CGState::new(domain, config.relational_facts, &seeds)?;
        runs.push((group_id, run_moves(&initial, &group)));
    }
    Ok(runs)
}

pub fn cmd_track(
    config: &TaskConfig,
    move_log: &Path,
    extractor: ExtractorPolicy,
    labels: LabelPolicy,
    out: Option<&Path>,
) -> Result<ExitCode> {
    let res = Resources::load(config)?;
    let moves = resolve_log(move_log, &res, extractor, labels)?;
    let runs = run_grouped(config, &res.domain, &moves)?;
    let mut writer = out_writer(out)?;
    let mut tracked = 0usize;
    let mut skipped = 0usize;
    for (group_id, run) in &runs {
        for snapshot in &run.snapshots {
            serde_json::to_writer(&mut writer, snapshot)?;
            writer.write_all(b"\n")?;
        }
        tracked += run.snapshots.len();
        skipped += run.skipped.len();
        for skip in &run.skipped {
            eprintln!("skipped {group_id}/{}: {}", skip.utterance_id, skip.reason);
        }
    }
    writer.flush()?;
    eprintln!(
        "tracked {tracked} move(s) across {} group(s); skipped {skipped}",
        runs.len()
    );
    Ok(if skipped == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

pub fn cmd_eval(
    config: &TaskConfig,
    pred_log: &Path,
    gold_log: &Path,
    extractor: ExtractorPolicy,
    labels: LabelPolicy,
    format: ReportFormat,
    out: Option<&Path>,
) -> Result<ExitCode> {
    let res = Resources::load(config)?;
    let pred_moves = resolve_log(pred_log, &res, extractor, labels)?;
    let gold_moves = ingest::load_move_log(open_log(gold_log)?, &res.domain)
        .with_context(|| format!("invalid move log `{}`", gold_log.display()))?;

    let pred_runs = run_grouped(config, &res.domain, &pred_moves)?;
    let gold_runs = run_grouped(config, &res.domain, &gold_moves)?;
    let pred_groups: Vec<&String> = pred_runs.iter().map(|(g, _)| g).collect();
    let gold_groups: Vec<&String> = gold_runs.iter().map(|(g, _)| g).collect();
    if pred_groups != gold_groups {
        bail!("group ids differ between logs: predicted {pred_groups:?}, gold {gold_groups:?}");
    }

    let to_trajectory = |group_id: &str, run: &RunResult| {
        Trajectory::new(
            group_id,
            run.snapshots
                .iter()
                .map(|s| (s.utterance_id.clone(), s.banks.clone()))
                .collect(),
        )
    };
    let pairs: Vec<(Trajectory, Trajectory)> = pred_runs
        .iter()
        .zip(&gold_runs)
        .map(|((gid, pred), (_, gold))| (to_trajectory(gid, pred), to_trajectory(gid, gold)))
        .collect();
    let report = metrics::aggregate_groups(&pairs)?;
    let mut writer = out_writer(out)?;
    writer.write_all(metrics::render_report(&report, format).as_bytes())?;
    writer.flush()?;
    Ok(ExitCode::SUCCESS)
}

pub fn cmd_oracle_check(
    config: &TaskConfig,
    settings: OracleSettings,
    out: Option<&Path>,
) -> Result<ExitCode> {
    let domain = config.domain()?;
    let report = oracle::run_oracle(&domain, config.relational_facts, &settings)?;
    println!(
        "oracle-check: trials={} passed={} violations={} (seed={})",
        report.trials,
        report.passed,
        report.violations.len(),
        settings.seed
    );
    if let Some(violation) = report.first_counterexample() {
        println!(
            "first counterexample at trial {}, step {}: {}",
            violation.trial, violation.step, violation.detail
        );
        println!("seed facts: {:?}", violation.seed_facts);
        let mut writer = out_writer(out)?;
        for mv in &violation.moves {
            serde_json::to_writer(&mut writer, mv)?;
            writer.write_all(b"\n")?;
        }
        writer.flush()?;
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grouping_preserves_order_within_groups() {
        let mv = |group: &str, id: &str| Move {
            utterance_id: id.into(),
            group_id: group.into(),
            start_s: 0.0,
            end_s: 0.0,
            participant: String::new(),
            text: String::new(),
            label: None,
            prop_text: None,
        };
        let grouped = group_moves(&[mv("a", "u1"), mv("a", "u2"), mv("b", "u1")]);
        assert_eq!(grouped.len(), 2);
        assert_eq!(grouped[0].0, "a");
        assert_eq!(grouped[0].1.len(), 2);
        assert_eq!(grouped[1].0, "b");
    }
}
