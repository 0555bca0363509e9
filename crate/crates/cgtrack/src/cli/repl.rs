//! Interactive stepping of moves with bank diffs after each one.

use std::io::{BufRead, Write};

use anyhow::Result;

use crate::config::TaskConfig;
use crate::ingest::{Move, MoveLabel};
use crate::tracker::{Banks, CGState};

const HELP: &str =
    "commands: statement <prop> | accept <prop> | doubt <prop> | banks | undo | help | quit";

pub fn run_repl(config: &TaskConfig, input: impl BufRead, out: &mut impl Write) -> Result<()> {
    let domain = config.domain()?;
    let seeds = config.seed_atoms(&domain)?;
    let initial = CGState::new(&domain, config.relational_facts, &seeds)?;
    let mut states: Vec<(CGState, Banks)> = vec![(initial.clone(), initial.banks())];
    let mut counter = 0usize;

    writeln!(out, "{HELP}")?;
    write!(out, "cgs> ")?;
    out.flush()?;
    for line in input.lines() {
        let line = line?;
        let line = line.trim();
        let (command, rest) = match line.split_once(char::is_whitespace) {
            Some((c, r)) => (c, r.trim()),
            None => (line, ""),
        };
        match command {
            "" => {}
            "quit" | "exit" => break,
            "help" => writeln!(out, "{HELP}")?,
            "banks" => {
                let (_, banks) = states.last().expect("initial state is always present");
                print_banks(out, banks)?;
            }
            "undo" => {
                if states.len() > 1 {
                    let (_, before) = states.pop().expect("checked length");
                    let (_, after) = states.last().expect("initial state remains");
                    print_diff(out, &before, after)?;
                } else {
                    writeln!(out, "nothing to undo")?;
                }
            }
            "statement" | "accept" | "doubt" => {
                if rest.is_empty() {
                    writeln!(out, "error: `{command}` needs a proposition")?;
                } else {
                    let label = match command {
                        "statement" => MoveLabel::Statement,
                        "accept" => MoveLabel::Accept,
                        _ => MoveLabel::Doubt,
                    };
                    counter += 1;
                    let mv = Move {
                        utterance_id: format!("repl-{counter}"),
                        group_id: "repl".into(),
                        start_s: counter as f64,
                        end_s: counter as f64,
                        participant: "you".into(),
                        text: rest.to_string(),
                        label: Some(label),
                        prop_text: Some(rest.to_string()),
                    };
                    let (state, before) = states.last().expect("initial state is always present");
                    match state.apply_move(&mv) {
                        Ok((next, banks)) => {
                            print_diff(out, before, &banks)?;
                            states.push((next, banks));
                        }
                        Err(e) => writeln!(out, "error: {e}")?,
                    }
                }
            }
            other => writeln!(out, "error: unknown command `{other}` ({HELP})")?,
        }
        write!(out, "cgs> ")?;
        out.flush()?;
    }
    writeln!(out)?;
    Ok(())
}

fn print_banks(out: &mut impl Write, banks: &Banks) -> Result<()> {
    for (name, set) in [
        ("QBank", &banks.qbank),
        ("EBank", &banks.ebank),
        ("FBank", &banks.fbank),
    ] {
        let items: Vec<&str> = set.iter().map(String::as_str).collect();
        writeln!(out, "{name}: {{{}}}", items.join(", "))?;
    }
    Ok(())
}

fn print_diff(out: &mut impl Write, before: &Banks, after: &Banks) -> Result<()> {
    let mut any = false;
    for (name, old, new) in [
        ("QBank", &before.qbank, &after.qbank),
        ("EBank", &before.ebank, &after.ebank),
        ("FBank", &before.fbank, &after.fbank),
    ] {
        let mut parts: Vec<String> = new.difference(old).map(|s| format!("+{s}")).collect();
        parts.extend(old.difference(new).map(|s| format!("-{s}")));
        if !parts.is_empty() {
            writeln!(out, "{name}: {}", parts.join(" "))?;
            any = true;
        }
    }
    if !any {
        writeln!(out, "(no bank changes)")?;
    }
    Ok(())
}
