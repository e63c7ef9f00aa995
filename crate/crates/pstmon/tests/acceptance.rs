//! The acceptance suite: one test per criterion, each printing a pass
//! line (visible with `cargo test -- --nocapture`).

mod support;

use pstmon::monitor::{Boundary, Endpoint, MonitorEvent, MonitorState};
use pstmon::pst::{parse, validate};
use pstmon::sim::{conforming_game_models, run_experiment, PartyModel, StopRule};
use pstmon::stats::{check_interval, estimate, judge, z_of, BranchStatus};
use pstmon::transport::{exit, parse_trace, replay};
use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;
use support::*;

fn warning_key(e: &MonitorEvent) -> Option<(usize, String, Boundary)> {
    match e {
        MonitorEvent::Warning {
            choice_point,
            branch,
            boundary,
            ..
        }
        | MonitorEvent::Retraction {
            choice_point,
            branch,
            boundary,
            ..
        } => Some((*choice_point, branch.clone(), *boundary)),
        _ => None,
    }
}

#[test]
fn criterion_1_example2_high_confidence() {
    let started = Instant::now();
    let lvl = level(0.99999);

    let early = check_interval(&lvl, 9, 5, 0.2);
    assert_eq!(round2(early.estimated), 0.56);
    assert_eq!(round2(early.error), 0.59);
    assert_eq!(round2(early.low), -0.39);
    assert_eq!(round2(early.high), 0.79);
    assert!(early.inside);

    let late = check_interval(&lvl, 17, 13, 0.2);
    assert_eq!(round2(late.estimated), 0.76);
    assert_eq!(round2(late.error), 0.43);
    assert_eq!(round2(late.low), -0.23);
    assert_eq!(round2(late.high), 0.63);
    assert!(!late.inside);

    let t = load_type("s_game.pst");
    let report = replay(&t, lvl, &load_trace("example2.trace")).unwrap();
    let help_high: Vec<_> = report
        .events
        .iter()
        .filter(|e| {
            matches!(e, MonitorEvent::Warning { branch, boundary, blamed, .. }
                if branch == "Help" && *boundary == Boundary::High && *blamed == Endpoint::Right)
        })
        .collect();
    assert_eq!(help_high.len(), 1, "exactly one Help/High warning");
    assert!(started.elapsed().as_secs_f64() < 1.0);
    println!("criterion 1: pass — worked example reproduced at 0.99999");
}

#[test]
fn criterion_2_example2_low_confidence() {
    let lvl = level(0.95);
    let early = check_interval(&lvl, 9, 5, 0.2);
    assert_eq!(round2(early.error), 0.26);
    assert_eq!(round2(early.low), -0.06);
    assert_eq!(round2(early.high), 0.46);

    // The first nine external rounds of the same trace (18 messages).
    let records: Vec<_> = load_trace("example2.trace").into_iter().take(18).collect();
    let t = load_type("s_game.pst");
    let report = replay(&t, lvl, &records).unwrap();
    let first_warning = report.events.iter().find_map(|e| match e {
        MonitorEvent::Warning {
            branch,
            boundary,
            count_total,
            ..
        } if branch == "Help" && *boundary == Boundary::High => Some(*count_total),
        _ => None,
    });
    assert!(
        first_warning.is_some_and(|c| c <= 9),
        "a warning must already exist by the ninth visit"
    );
    println!("criterion 2: pass — lower confidence warns earlier");
}

#[test]
fn criterion_3_example3_golden_log() {
    let lvl = level(0.99999);

    // Internal-choice snapshots from the narrative, at two decimals.
    let at6 = check_interval(&lvl, 6, 2, 0.01);
    assert_eq!(round2(at6.estimated), 0.33);
    assert_eq!(round2(at6.error), 0.18);
    assert_eq!(round2(at6.low), -0.17);
    assert_eq!(round2(at6.high), 0.19);
    let at6_inc = check_interval(&lvl, 6, 4, 0.99);
    assert_eq!(round2(at6_inc.estimated), 0.67);
    assert_eq!(round2(at6_inc.low), 0.81);
    assert_eq!(round2(at6_inc.high), 1.17);
    let at12 = check_interval(&lvl, 12, 2, 0.01);
    assert_eq!(round2(at12.error), 0.13);
    let at18 = check_interval(&lvl, 18, 2, 0.01);
    assert_eq!(round2(at18.error), 0.10);
    assert_eq!(round2(at18.estimated), 0.11);
    assert_eq!(round2(estimate(18, 16)), 0.89);
    assert!(at18.inside);
    assert!(check_interval(&lvl, 18, 16, 0.99).inside);

    let t = load_type("s_game.pst");
    let report = replay(&t, lvl, &load_trace("example3.trace")).unwrap();
    let golden = std::fs::read_to_string(data_path("example3.golden.jsonl")).unwrap();
    let golden_lines: Vec<&str> = golden.lines().collect();
    assert_eq!(report.log, golden_lines, "event log must match the golden file exactly");
    // No internal-choice events between the 6- and 18-visit snapshots.
    assert!(!golden.contains("\"count_total\":12"));
    println!("criterion 3: pass — golden log matches byte for byte");
}

#[test]
fn criterion_4_z_values_against_oracle() {
    assert!((z_of(0.95).unwrap() - 1.9599).abs() < 1e-3);
    assert!((z_of(0.99999).unwrap() - 4.4172).abs() < 1e-3);
    for i in 1..=100 {
        let lvl = i as f64 / 101.0;
        let got = z_of(lvl).unwrap();
        let want = quantile_oracle((1.0 + lvl) / 2.0);
        assert!(
            (got - want).abs() <= 1e-4,
            "z_of({lvl}) = {got}, oracle {want}"
        );
    }
    println!("criterion 4: pass — quantiles agree with the integration oracle");
}

#[test]
fn criterion_5_wildcard_semantics() {
    let t = load_type("s_game_prime.pst");
    let lvl = level(0.99999);

    // The help-heavy trace still trips the one-sided upper bound on Help.
    let report = replay(&t, lvl, &load_trace("example2.trace")).unwrap();
    assert!(report.events.iter().any(|e| {
        matches!(e, MonitorEvent::Warning { branch, boundary, .. }
            if branch == "Help" && *boundary == Boundary::High)
    }));
    for e in &report.events {
        if let Some((_, branch, boundary)) = warning_key(e) {
            assert!(!(branch == "Guess" && boundary == Boundary::High));
            assert_ne!(branch, "Quit");
            assert_ne!(branch, "Incorrect");
        }
    }

    // A guess-only client exceeds the upper bound on Guess, yet the
    // lower-only annotation never warns High.
    let mut lines = String::new();
    for i in 0..80 {
        lines.push_str(&format!("R: Guess({i})\nL: Incorrect\n"));
    }
    lines.push_str("R: Quit\n");
    let records = parse_trace(&lines).unwrap();
    let exceeded = check_interval(&lvl, 80, 80, 0.75);
    assert!(exceeded.estimated > exceeded.high, "frequency exceeds the upper bound");
    let report = replay(&t, lvl, &records).unwrap();
    for e in &report.events {
        assert!(warning_key(e).is_none(), "unexpected statistical event {e:?}");
    }
    assert_eq!(report.exit_code, exit::CLEAN);
    println!("criterion 5: pass — wildcard annotations suppress the right warnings");
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

#[test]
fn criterion_6_property_suites() {
    let started = Instant::now();
    let mut rng = pstmon::rng::XorShift64Star::new(0xACCE97);

    // Parse/pretty round-trip and dual involution.
    for _ in 0..1000 {
        let t = random_type(&mut rng);
        let printed = t.pretty();
        let back = parse(&printed).unwrap();
        assert_eq!(back, t, "round-trip failed for {printed}");
        assert_eq!(t.dual().dual(), t);
        assert!(validate(&t.dual()).is_empty());
    }

    // Counter conservation over random conforming sessions.
    for case in 0..1000 {
        let t = random_type(&mut rng);
        let (monitor, messages) = random_session(&t, level(0.9), &mut rng, 100);
        let mut grand_total = 0;
        for j in 0..monitor.table().len() {
            let c = monitor.counters(j);
            let sum: u64 = c.per_branch.values().sum();
            assert_eq!(c.total, sum, "case {case}: per-branch counts must add up");
            grand_total += c.total;
        }
        assert_eq!(grand_total, messages.len() as u64);
    }

    // Warning/retraction alternation and active-set oracle equivalence.
    let mut event_sessions = 0;
    while event_sessions < 1000 {
        let t = random_type(&mut rng);
        let lvl = level(0.5 + rng.next_f64() * 0.4);
        let mut monitor = MonitorState::new(&t, lvl).unwrap();
        let mut events = Vec::new();
        let mut steps = 0;
        while let pstmon::pst::Successor::Index(j) = monitor.position() {
            if steps >= 150 {
                break;
            }
            steps += 1;
            let entry = monitor.table().entry(j).clone();
            let b = &entry.branches[rng.next_below(entry.branches.len() as u64) as usize];
            let msg = pstmon::monitor::Message {
                origin: pstmon::monitor::controller(entry.direction),
                label: b.label.clone(),
                payload: b
                    .sorts
                    .iter()
                    .map(|s| random_literal(*s, &mut rng))
                    .collect(),
            };
            let (evs, _) = monitor.step(&msg).unwrap();
            events.extend(evs);
        }
        event_sessions += 1;

        // Alternation: per key, warning, retraction, warning, ... strictly.
        let mut last: BTreeMap<(usize, String, Boundary), bool> = BTreeMap::new();
        for e in &events {
            let Some(key) = warning_key(e) else { continue };
            let is_warning = matches!(e, MonitorEvent::Warning { .. });
            let was_warning = last.insert(key.clone(), is_warning);
            match was_warning {
                None => assert!(is_warning, "first event for {key:?} must be a warning"),
                Some(prev) => assert_ne!(prev, is_warning, "events for {key:?} must alternate"),
            }
        }

        // Oracle: the active set equals a from-scratch recomputation of
        // the estimate/error/interval pipeline on the final counters.
        let mut expected: BTreeSet<(usize, String, Boundary)> = BTreeSet::new();
        for j in 0..monitor.table().len() {
            let counters = monitor.counters(j);
            if counters.total == 0 {
                continue;
            }
            for b in &monitor.table().entry(j).branches {
                let Some(p) = b.annotation.probability() else { continue };
                let c_branch = counters.per_branch.get(&b.label).copied().unwrap_or(0);
                let report = check_interval(&lvl, counters.total, c_branch, p);
                match judge(&b.annotation, &report) {
                    BranchStatus::DeviatedLow => {
                        expected.insert((j, b.label.clone(), Boundary::Low));
                    }
                    BranchStatus::DeviatedHigh => {
                        expected.insert((j, b.label.clone(), Boundary::High));
                    }
                    BranchStatus::Ok | BranchStatus::Suppressed => {}
                }
            }
        }
        assert_eq!(monitor.active_warnings(), &expected);
    }

    // Proxy forwarding transparency (asserted inside the scripted
    // parties) and live-vs-replay log equality, on short live sessions.
    let t = load_type("s_game.pst");
    let lvl = level(0.95);
    let (left, right) = conforming_game_models(1);
    for seed in 0..1000u64 {
        let run = pstmon::sim::run_session_model(&t, lvl, &left, &right, seed + 1, 1000).unwrap();
        let outcome = scripted_proxy_session(&t, lvl, &run.messages);
        let replayed = replay(&t, lvl, &outcome.capture).unwrap();
        assert_eq!(replayed.log, outcome.report.log);
        assert_eq!(replayed.exit_code, outcome.report.exit_code);
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 30, "property suites took {elapsed:?}");
    println!("criterion 6: pass — seven property suites in {elapsed:?}");
}

#[test]
fn criterion_7_monte_carlo() {
    let started = Instant::now();
    let t = load_type("s_game.pst");
    let lvl = level(0.99999);

    // Honest parties: Quit is sampled at its true rate and ends the
    // session; the step cap bounds each run at 1,000 external visits.
    let (left, mut right) = conforming_game_models(0);
    right.stop = None;
    let conforming = run_experiment(&t, lvl, &left, &right, 100, 2024, 2_000).unwrap();
    assert!(
        conforming.active_at_end <= 20,
        "{} conforming runs ended with active warnings",
        conforming.active_at_end
    );

    let deviant_right = PartyModel {
        dists: BTreeMap::from([(
            0,
            vec![
                ("Guess".to_string(), 0.35),
                ("Help".to_string(), 0.6),
                ("Quit".to_string(), 0.05),
            ],
        )]),
        stop: Some(StopRule {
            after_visits: 1000,
            choice_point: 0,
            branch: "Quit".to_string(),
        }),
    };
    let deviant = run_experiment(&t, lvl, &left, &deviant_right, 100, 77, 1_000_000).unwrap();
    let detected = deviant
        .per_run
        .iter()
        .filter(|run| {
            run.first_warnings
                .get(&(0, "Help".to_string(), Boundary::High))
                .is_some_and(|&c| c <= 200)
        })
        .count();
    assert!(detected >= 99, "only {detected}/100 runs warned within 200 visits");

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 60);
    println!("criterion 7: pass — Monte Carlo thresholds hold in {elapsed:?}");
}

#[test]
fn criterion_8_qualitative_violations() {
    use std::io::{BufRead, BufReader, Write};
    use std::thread;
    let t = load_type("s_game.pst");
    let lvl = level(0.99999);

    // (frames from client, frames from server, expected blame)
    let scenarios: [(&[&str], &[&str], Endpoint); 3] = [
        (&["Jump"], &[], Endpoint::Right),
        (&["Guess(abc)"], &[], Endpoint::Right),
        (&[], &["Incorrect"], Endpoint::Left),
    ];
    for (client_frames, server_frames, expected_blame) in scenarios {
        let (client_peer, client_proxy) = tcp_pair();
        let (server_peer, server_proxy) = tcp_pair();
        let frames: Vec<String> = client_frames.iter().map(|s| s.to_string()).collect();
        let client = thread::spawn(move || {
            let mut w = client_peer.try_clone().unwrap();
            for f in &frames {
                if writeln!(w, "{f}").is_err() {
                    return 0;
                }
            }
            let mut r = BufReader::new(client_peer);
            let mut received = 0;
            let mut s = String::new();
            while r.read_line(&mut s).unwrap_or(0) > 0 {
                received += 1;
                s.clear();
            }
            received
        });
        let frames: Vec<String> = server_frames.iter().map(|s| s.to_string()).collect();
        let server = thread::spawn(move || {
            let mut w = server_peer.try_clone().unwrap();
            for f in &frames {
                if writeln!(w, "{f}").is_err() {
                    return 0;
                }
            }
            let mut r = BufReader::new(server_peer);
            let mut received = 0;
            let mut s = String::new();
            while r.read_line(&mut s).unwrap_or(0) > 0 {
                received += 1;
                s.clear();
            }
            received
        });
        let outcome =
            pstmon::transport::proxy::run_session(client_proxy, server_proxy, &t, lvl, true)
                .unwrap();
        let client_received = client.join().unwrap();
        let server_received = server.join().unwrap();

        assert_eq!(outcome.report.exit_code, exit::VIOLATION);
        let violations: Vec<_> = outcome
            .report
            .events
            .iter()
            .filter_map(|e| match e {
                MonitorEvent::Violation { blamed, .. } => Some(*blamed),
                _ => None,
            })
            .collect();
        assert_eq!(violations, vec![expected_blame]);
        assert_eq!(client_received, 0, "nothing may be forwarded after a violation");
        assert_eq!(server_received, 0, "nothing may be forwarded after a violation");
    }
    println!("criterion 8: pass — violations halt with correct blame");
}
