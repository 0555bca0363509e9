//! Acceptance suite: golden-scenario and property checks for the whole
//! pipeline, one test per criterion. Each prints a pass/fail line (visible
//! with `--nocapture`) and enforces its runtime budget.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufReader;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config as ProptestConfig, TestRunner};

use cgtrack::cli;
use cgtrack::config::TaskConfig;
use cgtrack::ingest::{
    self, CatalogEntry, ExtractorPolicy, LabelPolicy, Move, MoveLabel, PropositionCatalog,
    PropositionDictionary, ResolveContext, StopWords,
};
use cgtrack::kernel::{init_model, EpistemicFormula, EpistemicModel, World};
use cgtrack::metrics::{
    self, aggregate_groups, compare_banks, dsc, load_report, trajectory_eval, BankScores,
    Trajectory,
};
use cgtrack::oracle::{run_oracle, OracleSettings};
use cgtrack::prop::{generate_catalog, AtomicProp, PropFormula, Relation, TaskDomain, Term};
use cgtrack::tracker::{run_moves, Banks, CGState, Snapshot};

fn criterion(number: usize, name: &str, budget: Duration, body: impl FnOnce()) {
    let started = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(body));
    let elapsed = started.elapsed();
    let verdict = if outcome.is_ok() && elapsed <= budget {
        "PASS"
    } else {
        "FAIL"
    };
    println!(
        "acceptance criterion {number} ({name}): {verdict} in {:.2?} (budget {budget:?})",
        elapsed
    );
    if let Err(panic) = outcome {
        std::panic::resume_unwind(panic);
    }
    assert!(
        elapsed <= budget,
        "criterion {number} exceeded its {budget:?} budget ({elapsed:.2?})"
    );
}

fn data_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

fn default_domain() -> TaskDomain {
    TaskDomain::weights_task()
}

fn seed_red_10(domain: &TaskDomain) -> Vec<AtomicProp> {
    vec![PropFormula::parse("red = 10", domain).unwrap().atoms()[0].clone()]
}

fn load_log(name: &str, domain: &TaskDomain) -> Vec<Move> {
    let file = std::fs::File::open(data_path(name)).unwrap();
    ingest::load_move_log(BufReader::new(file), domain).unwrap()
}

fn mv(group: &str, id: &str, at: f64, label: MoveLabel, prop: Option<&str>) -> Move {
    Move {
        utterance_id: id.to_string(),
        group_id: group.to_string(),
        start_s: at,
        end_s: at + 1.0,
        participant: "P1".into(),
        text: String::new(),
        label: Some(label),
        prop_text: prop.map(Into::into),
    }
}

fn trajectory_of(
    group: &str,
    moves: &[Move],
    domain: &TaskDomain,
    seeds: &[AtomicProp],
) -> Trajectory {
    let initial = CGState::new(domain, true, seeds).unwrap();
    let run = run_moves(&initial, moves);
    assert!(
        run.skipped.is_empty(),
        "unexpected skips: {:?}",
        run.skipped
    );
    Trajectory::new(
        group,
        run.snapshots
            .into_iter()
            .map(|s| (s.utterance_id, s.banks))
            .collect(),
    )
}

#[test]
fn criterion_1_golden_dialogue() {
    criterion(1, "golden dialogue", Duration::from_secs(1), || {
        let domain = default_domain();
        let moves = load_log("golden_moves.jsonl", &domain);
        let initial = CGState::new(&domain, true, &seed_red_10(&domain)).unwrap();
        let run = run_moves(&initial, &moves);
        assert!(run.skipped.is_empty());

        // Exact equality against the checked-in gold trajectory.
        let golden = std::fs::read_to_string(data_path("golden_banks.jsonl")).unwrap();
        let expected: Vec<Snapshot> = golden
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(run.snapshots, expected);

        // After the ACCEPT: the facts are in, and blue is fully resolved.
        let after_accept = &run.snapshots[1].banks;
        for fact in ["red = 10", "blue = 10", "red = blue"] {
            assert!(after_accept.fbank.contains(fact), "missing fact `{fact}`");
        }
        assert!(after_accept.qbank.iter().all(|q| !q.starts_with("blue")));
        assert!(after_accept.ebank.iter().all(|e| !e.starts_with("blue")));
        // The DOUBT leaves the banks unchanged.
        assert_eq!(run.snapshots[3].banks, run.snapshots[2].banks);
    });
}

#[test]
fn criterion_2_qbank_initialization() {
    criterion(2, "QBank initialization", Duration::from_secs(1), || {
        let domain = default_domain();
        let expected_full: BTreeSet<String> = domain
            .blocks()
            .flat_map(|b| domain.weights().map(move |w| format!("{b} = {w}?")))
            .collect();
        assert_eq!(expected_full.len(), 25);

        let unseeded = CGState::new(&domain, true, &[]).unwrap().banks();
        assert_eq!(unseeded.qbank, expected_full);
        assert!(unseeded.ebank.is_empty());
        assert!(unseeded.fbank.is_empty());

        let seeded = CGState::new(&domain, true, &seed_red_10(&domain))
            .unwrap()
            .banks();
        let expected_seeded: BTreeSet<String> = expected_full
            .iter()
            .filter(|q| !q.starts_with("red"))
            .cloned()
            .collect();
        assert_eq!(expected_seeded.len(), 20);
        assert_eq!(seeded.qbank, expected_seeded);
    });
}

#[test]
fn criterion_3_self_consistency() {
    criterion(
        3,
        "self-consistency of gold runs",
        Duration::from_secs(5),
        || {
            let config = TaskConfig::default();
            for log in ["golden_moves.jsonl", "gold_multi.jsonl", "noisy.jsonl"] {
                let out = tempfile::NamedTempFile::new().unwrap();
                let code = cli::cmd_eval(
                    &config,
                    &data_path(log),
                    &data_path(log),
                    ExtractorPolicy::DictionaryOnly,
                    LabelPolicy::Gold,
                    metrics::ReportFormat::Structured,
                    Some(out.path()),
                )
                .unwrap();
                assert_eq!(code, std::process::ExitCode::SUCCESS);
                let report = load_report(&std::fs::read_to_string(out.path()).unwrap()).unwrap();
                assert!(!report.per_group.is_empty());
                let perfect = |s: &BankScores| {
                    s.qbank == 1.0 && s.ebank == 1.0 && s.fbank == 1.0 && s.f_union_e == 1.0
                };
                for (group, scores) in &report.per_group {
                    assert!(perfect(scores), "log {log}, group {group}: {scores:?}");
                }
                assert!(report.series.iter().all(perfect), "log {log} series");
            }
        },
    );
}

#[test]
fn criterion_4_oracle_equivalence() {
    criterion(
        4,
        "tracker/kernel oracle equivalence",
        Duration::from_secs(60),
        || {
            let domain = TaskDomain::new(&["x", "y"], &[10, 20, 30]).unwrap();
            let report = run_oracle(
                &domain,
                true,
                &OracleSettings {
                    trials: 1000,
                    seed: 20240817,
                    max_len: 8,
                },
            )
            .unwrap();
            assert_eq!(report.trials, 1000);
            assert_eq!(
                report.passed,
                1000,
                "first violation: {:?}",
                report.first_counterexample().map(|v| &v.detail)
            );
            assert!(report.violations.is_empty());
        },
    );
}

fn arb_small_model() -> impl Strategy<Value = EpistemicModel> {
    let domain = TaskDomain::new(&["x", "y"], &[10, 20]).unwrap();
    let full = init_model(&domain).unwrap();
    let all_worlds: Vec<World> = full.worlds().iter().cloned().collect();
    proptest::sample::subsequence(all_worlds, 1..=4).prop_flat_map(move |worlds| {
        let worlds: BTreeSet<World> = worlds.into_iter().collect();
        let pool: Vec<World> = worlds.iter().cloned().collect();
        let domain = TaskDomain::new(&["x", "y"], &[10, 20]).unwrap();
        proptest::collection::vec(proptest::sample::subsequence(pool, 1..=worlds.len()), 0..4)
            .prop_map(move |nbhds| {
                let evidence: BTreeSet<BTreeSet<World>> = nbhds
                    .into_iter()
                    .map(|n| n.into_iter().collect::<BTreeSet<World>>())
                    .collect();
                EpistemicModel::from_parts(domain.clone(), worlds.clone(), evidence).unwrap()
            })
    })
}

fn arb_small_prop() -> impl Strategy<Value = PropFormula> {
    let domain = TaskDomain::new(&["x", "y"], &[10, 20]).unwrap();
    proptest::sample::select(generate_catalog(&domain, 1, 10_000).unwrap())
}

fn arb_small_formula() -> impl Strategy<Value = EpistemicFormula> {
    let leaf = arb_small_prop().prop_map(|p| EpistemicFormula::atom(p.atoms()[0].clone()));
    leaf.prop_recursive(3, 16, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(EpistemicFormula::not),
            (inner.clone(), inner.clone()).prop_map(|(f, g)| EpistemicFormula::and(f, g)),
            inner.clone().prop_map(EpistemicFormula::ev),
            inner.clone().prop_map(EpistemicFormula::bel),
            inner.clone().prop_map(EpistemicFormula::all),
            (arb_small_prop(), inner).prop_map(|(p, f)| EpistemicFormula::announce(p, f)),
        ]
    })
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new(ProptestConfig {
        cases,
        failure_persistence: None,
        ..ProptestConfig::default()
    })
}

#[test]
fn criterion_5_kernel_laws() {
    criterion(5, "epistemic kernel laws", Duration::from_secs(30), || {
        // Announcement idempotence.
        runner(500)
            .run(&(arb_small_model(), arb_small_prop()), |(m, p)| {
                if let Ok(once) = m.announce(&p) {
                    let twice = once.announce(&p).unwrap();
                    prop_assert_eq!(once, twice);
                }
                Ok(())
            })
            .unwrap();

        // World-set monotonicity along announcement chains.
        runner(500)
            .run(
                &(
                    arb_small_model(),
                    proptest::collection::vec(arb_small_prop(), 1..5),
                ),
                |(m, props)| {
                    let mut current = m;
                    for p in &props {
                        match current.announce(p) {
                            Ok(next) => {
                                prop_assert!(next.world_count() <= current.world_count());
                                current = next;
                            }
                            Err(_) => break,
                        }
                    }
                    Ok(())
                },
            )
            .unwrap();

        // Knowledge implies belief.
        runner(500)
            .run(&(arb_small_model(), arb_small_formula()), |(m, f)| {
                if m.holds_a(&f) {
                    prop_assert!(m.holds_b(&f));
                }
                Ok(())
            })
            .unwrap();

        // Contradictory evidence coexists: [E]p and [E]¬p at once.
        let domain = TaskDomain::new(&["x", "y"], &[10, 20]).unwrap();
        runner(500)
            .run(
                &(
                    arb_small_model(),
                    proptest::sample::select(vec![10u32, 20u32]),
                ),
                move |(m, grams)| {
                    let pro = PropFormula::parse(&format!("x = {grams}"), &domain).unwrap();
                    let contra = PropFormula::parse(&format!("x != {grams}"), &domain).unwrap();
                    if m.extension(&pro).is_empty() || m.extension(&contra).is_empty() {
                        return Ok(());
                    }
                    let both = m.add_evidence(&pro).unwrap().add_evidence(&contra).unwrap();
                    let pro_atom = EpistemicFormula::atom(pro.atoms()[0].clone());
                    let contra_atom = EpistemicFormula::atom(contra.atoms()[0].clone());
                    prop_assert!(both.holds_e(&pro_atom));
                    prop_assert!(both.holds_e(&contra_atom));
                    prop_assert!(both.holds_e(&EpistemicFormula::not(pro_atom)));
                    Ok(())
                },
            )
            .unwrap();
    });
}

#[test]
fn criterion_6_dsc_algebra() {
    criterion(6, "DSC algebra", Duration::from_secs(10), || {
        let empty: BTreeSet<String> = BTreeSet::new();
        assert_eq!(dsc(&empty, &empty), 1.0);
        let a: BTreeSet<String> = ["x", "y", "z"].iter().map(|s| s.to_string()).collect();
        let b: BTreeSet<String> = ["x", "y", "w"].iter().map(|s| s.to_string()).collect();
        assert!((dsc(&a, &b) - 0.6667).abs() < 1e-3);
        assert!((dsc(&a, &b) - 2.0 / 3.0).abs() < 1e-9);

        let arb_set = || proptest::collection::btree_set("[a-f]{1,2}", 0..8);
        runner(10_000)
            .run(&(arb_set(), arb_set()), |(a, b)| {
                let ab = dsc(&a, &b);
                prop_assert_eq!(ab, dsc(&b, &a));
                prop_assert!((0.0..=1.0).contains(&ab));
                prop_assert_eq!(dsc(&a, &a), 1.0);
                Ok(())
            })
            .unwrap();
    });
}

#[test]
fn criterion_7_evidence_level_degradation() {
    criterion(
        7,
        "evidence-level degradation",
        Duration::from_secs(5),
        || {
            let domain = default_domain();
            let seeds = seed_red_10(&domain);
            let gold = [
                mv("g", "u1", 0.0, MoveLabel::Statement, Some("blue = 10")),
                mv("g", "u2", 1.0, MoveLabel::Accept, Some("blue = 10")),
                mv("g", "u3", 2.0, MoveLabel::Statement, Some("green = 20")),
                mv("g", "u4", 3.0, MoveLabel::Accept, Some("green = 20")),
                mv("g", "u5", 4.0, MoveLabel::Statement, Some("purple = 30")),
                mv("g", "u6", 5.0, MoveLabel::Doubt, Some("purple = 30")),
            ];
            // The predicted run sees every ACCEPT misclassified as a STATEMENT.
            let pred: Vec<Move> = gold
                .iter()
                .map(|m| Move {
                    label: match m.label {
                        Some(MoveLabel::Accept) => Some(MoveLabel::Statement),
                        other => other,
                    },
                    ..m.clone()
                })
                .collect();
            let gold_traj = trajectory_of("g", &gold, &domain, &seeds);
            let pred_traj = trajectory_of("g", &pred, &domain, &seeds);
            let scores = trajectory_eval(&pred_traj, &gold_traj).unwrap();
            assert!(
                scores.per_utterance.iter().all(|s| s.f_union_e >= s.fbank),
                "F ∪ E should never trail FBank: {:?}",
                scores.per_utterance
            );
            assert!(
                scores.per_utterance.iter().any(|s| s.f_union_e > s.fbank),
                "expected a strict gap at some index"
            );
        },
    );
}

#[test]
fn criterion_8_padding_aggregation() {
    criterion(8, "padding aggregation", Duration::from_secs(1), || {
        let set =
            |items: &[&str]| -> BTreeSet<String> { items.iter().map(|s| s.to_string()).collect() };
        let banks = |q: &[&str], e: &[&str], f: &[&str]| Banks {
            qbank: set(q),
            ebank: set(e),
            fbank: set(f),
        };
        let perfect = banks(&["qa"], &[], &["fa"]);
        // Group a, 3 snapshots: perfect, perfect, then FBank dsc 0.5.
        let a_pred = Trajectory::new(
            "a",
            vec![
                ("u1".into(), perfect.clone()),
                ("u2".into(), perfect.clone()),
                ("u3".into(), banks(&["qa"], &[], &["fa"])),
            ],
        );
        let a_gold = Trajectory::new(
            "a",
            vec![
                ("u1".into(), perfect.clone()),
                ("u2".into(), perfect.clone()),
                ("u3".into(), banks(&["qa"], &[], &["fa", "fb", "fc"])),
            ],
        );
        // Group b, 5 perfect snapshots.
        let b_snaps: Vec<(String, Banks)> = (1..=5)
            .map(|i| (format!("u{i}"), perfect.clone()))
            .collect();
        let b = Trajectory::new("b", b_snaps);
        let report = aggregate_groups(&[(a_pred.clone(), a_gold.clone()), (b.clone(), b)]).unwrap();

        let third = compare_banks(&a_pred.snapshots[2].1, &a_gold.snapshots[2].1);
        assert_eq!(third.fbank, 0.5);
        let expect = |fbank: f64, f_union_e: f64| BankScores {
            qbank: 1.0,
            ebank: 1.0,
            fbank,
            f_union_e,
        };
        let expected = vec![
            expect(1.0, 1.0),
            expect(1.0, 1.0),
            expect(0.75, 0.75),
            expect(0.75, 0.75), // padded from group a's final snapshot
            expect(0.75, 0.75),
        ];
        assert_eq!(report.series, expected);
        // Padding leaves the per-group average over real snapshots alone.
        assert_eq!(report.per_group["a"].fbank, (1.0 + 1.0 + 0.5) / 3.0);
        assert_eq!(report.per_group["b"].fbank, 1.0);
    });
}

#[test]
fn criterion_9_extraction_fidelity() {
    criterion(9, "extraction fidelity", Duration::from_secs(5), || {
        let domain = default_domain();
        // Dictionary route: every annotated proposition comes back verbatim.
        let annotations: Vec<(&str, &str)> = vec![
            ("d-u1", "red = blue"),
            ("d-u2", "blue = 10"),
            ("d-u3", "green = red + blue"),
            ("d-u4", "red < yellow"),
            ("d-u5", "purple != 40"),
            ("d-u6", "purple = 30 and yellow = 50"),
        ];
        let dictionary = PropositionDictionary::new(
            annotations
                .iter()
                .map(|(id, text)| (id.to_string(), PropFormula::parse(text, &domain).unwrap()))
                .collect::<BTreeMap<_, _>>(),
        );
        let stop = StopWords::builtin();
        let ctx = ResolveContext {
            domain: &domain,
            dictionary: Some(&dictionary),
            catalog: None,
            stopwords: &stop,
            similarity_threshold: 0.2,
            extractor: ExtractorPolicy::DictionaryOnly,
            labels: LabelPolicy::Gold,
        };
        for (i, (id, text)) in annotations.iter().enumerate() {
            let raw = mv("d", id, i as f64, MoveLabel::Statement, None);
            let resolved = ingest::resolve(&raw, &ctx);
            let expected = PropFormula::parse(text, &domain).unwrap().to_string();
            assert_eq!(resolved.prop_text.as_deref(), Some(expected.as_str()));
        }

        // Similarity route: the worked retrieval example.
        let catalog = PropositionCatalog::new(vec![
            CatalogEntry {
                formula: PropFormula::parse("red = 10", &domain).unwrap(),
                phrasings: vec!["red block is ten".into()],
            },
            CatalogEntry {
                formula: PropFormula::parse("blue = 10", &domain).unwrap(),
                phrasings: vec!["blue block is ten".into()],
            },
            CatalogEntry {
                formula: PropFormula::parse("red = blue", &domain).unwrap(),
                phrasings: vec!["red and blue are equal".into()],
            },
        ])
        .unwrap();
        let got = ingest::extract_similarity(
            &Move {
                text: "red block's ten so then".into(),
                ..mv("d", "s-u1", 0.0, MoveLabel::Statement, None)
            },
            &catalog,
            &stop,
            0.2,
        )
        .unwrap()
        .unwrap();
        let red_10 = PropFormula::parse("red = 10", &domain).unwrap();
        assert_eq!(got, red_10);
        assert_eq!(got.atoms()[0].relation(), Relation::Eq);
        assert!(matches!(got.atoms()[0].rhs(), Term::Weight(w) if w.grams() == 10));
    });
}

// Sanity check used by the suite itself: the checked-in golden log parses
// through the same loader the CLI uses.
#[test]
fn golden_inputs_are_valid() {
    let domain = default_domain();
    for log in ["golden_moves.jsonl", "gold_multi.jsonl", "noisy.jsonl"] {
        let moves = load_log(log, &domain);
        assert!(!moves.is_empty());
    }
    let raw = std::fs::read_to_string(data_path("golden_banks.jsonl")).unwrap();
    for line in raw.lines().filter(|l| !l.trim().is_empty()) {
        let snap: Snapshot = serde_json::from_str(line).unwrap();
        assert!(!snap.utterance_id.is_empty());
    }
}
