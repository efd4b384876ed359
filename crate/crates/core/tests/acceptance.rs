//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Tolerances and time limits are pinned below.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use adder_spir::bits::BitString;
use adder_spir::capacity::{finite_difference_check, maximize_f, region_check, verify_g_monotone, RatePair};
use adder_spir::channel::{classify_indices, transmit};
use adder_spir::harness::{maximal_sizing, run_trials, summarize, SessionRecord, SessionTranscript};
use adder_spir::oracle::{audit, otp_lemma_check, AuditConfig, Conditioning, LeakageReport, ProtocolMode};
use adder_spir::protocol::{partition, Mutation};
use adder_spir::{IndexSet, ProtocolParams, Selection};

const LEAKAGE_TOL: f64 = 1e-9;
const MUTATION_MIN_LEAK: f64 = 0.1;
const RATE_REL_TOL: f64 = 0.05;
const MAX_VALUE_TOL: f64 = 1e-9;
const ARGMAX_TOL: f64 = 1e-6;
const FD_STEP: f64 = 1e-6;
const FD_TOL: f64 = 1e-5;
const FD_GRID: f64 = 0.01;
const MONOTONE_SAMPLES: usize = 10_000;

const SEED_TWO_FILE: u64 = 0x5eed_0003;
const SEED_RATE: u64 = 0x5eed_0005;
const SEED_MULTIFILE: u64 = 0x5eed_0008;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            detail: detail.into(),
        }
    }
}

struct Report {
    failures: usize,
}

impl Report {
    fn check(&mut self, id: u32, name: &str, limit: Option<Duration>, body: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let mut out = body();
        let elapsed = start.elapsed();
        if let Some(limit) = limit {
            if elapsed > limit {
                out.pass = false;
                out.detail.push_str(&format!("; over time limit {limit:?}"));
            }
        }
        let verdict = if out.pass { "PASS" } else { "FAIL" };
        if !out.pass {
            self.failures += 1;
        }
        println!("criterion {id:>2} {verdict} {name} [{elapsed:.2?}] {}", out.detail);
    }
}

fn set(v: &[usize]) -> IndexSet {
    IndexSet::new(v.iter().copied())
}

fn rates(records: &[SessionRecord]) -> Vec<RatePair> {
    records.iter().filter_map(|r| r.rates).collect()
}

fn leak_summary(r: &LeakageReport) -> String {
    let mut s = String::new();
    for (name, v) in r.leakages() {
        s.push_str(&format!("{name}={v:.3e} "));
    }
    s.push_str(&format!("reliability_error={:.3e}", r.reliability_error));
    s
}

/// Request tables of the two worked examples: row = round, column = the
/// file the client wants from that server.
fn table_equal_counts(server: u8) -> Vec<Vec<&'static str>> {
    match server {
        1 => vec![
            vec!["F_{1,1}", "S", "S"],
            vec!["F_{1,2} ⊕ S", "F_{1,2} ⊕ S", "F_{1,3} ⊕ S"],
        ],
        _ => vec![
            vec!["F_{2,1}", "T", "T"],
            vec!["F_{2,2} ⊕ T", "F_{2,2} ⊕ T", "F_{2,3} ⊕ T"],
        ],
    }
}

fn table_three_by_four(server: u8) -> Vec<Vec<&'static str>> {
    match server {
        1 => vec![
            vec!["F_{1,1,1}", "S1", "S1"],
            vec!["F_{1,2,1} ⊕ S1", "F_{1,2,1} ⊕ S1", "F_{1,3,1} ⊕ S1"],
            vec!["F_{1,1,2}", "S2", "S2"],
            vec!["F_{1,2,2} ⊕ S2", "F_{1,2,2} ⊕ S2", "F_{1,3,2} ⊕ S2"],
            vec!["F_{1,1,3}", "S3", "S3"],
            vec!["F_{1,2,3} ⊕ S3", "F_{1,2,3} ⊕ S3", "F_{1,3,3} ⊕ S3"],
        ],
        _ => vec![
            vec!["F_{2,1,1}", "T1", "T1", "T1"],
            vec!["F_{2,1,2}", "T3", "T3", "T3"],
            vec!["F_{2,2,1} ⊕ T1", "F_{2,2,1} ⊕ T1", "T1 ⊕ T2", "T1 ⊕ T2"],
            vec!["F_{2,2,2} ⊕ T3", "F_{2,2,2} ⊕ T3", "T3 ⊕ T4", "T3 ⊕ T4"],
            vec!["F_{2,3,1} ⊕ T2", "F_{2,3,1} ⊕ T2", "F_{2,3,1} ⊕ T2", "F_{2,4,1} ⊕ T2"],
            vec!["F_{2,3,2} ⊕ T4", "F_{2,3,2} ⊕ T4", "F_{2,3,2} ⊕ T4", "F_{2,4,2} ⊕ T4"],
        ],
    }
}

/// Pairs each server offers in the 3 x 4 example, as `(first, second)`.
fn offered_three_by_four(server: u8) -> BTreeSet<(&'static str, &'static str)> {
    match server {
        1 => [
            ("F_{1,1,1}", "S1"),
            ("F_{1,2,1} ⊕ S1", "F_{1,3,1} ⊕ S1"),
            ("F_{1,1,2}", "S2"),
            ("F_{1,2,2} ⊕ S2", "F_{1,3,2} ⊕ S2"),
            ("F_{1,1,3}", "S3"),
            ("F_{1,2,3} ⊕ S3", "F_{1,3,3} ⊕ S3"),
        ]
        .into(),
        _ => [
            ("F_{2,1,1}", "T1"),
            ("F_{2,1,2}", "T3"),
            ("F_{2,2,1} ⊕ T1", "T1 ⊕ T2"),
            ("F_{2,2,2} ⊕ T3", "T3 ⊕ T4"),
            ("F_{2,3,1} ⊕ T2", "F_{2,4,1} ⊕ T2"),
            ("F_{2,3,2} ⊕ T4", "F_{2,4,2} ⊕ T4"),
        ]
        .into(),
    }
}

/// Checks one multifile transcript against a request table.
fn schedule_matches(rec: &SessionRecord, table: fn(u8) -> Vec<Vec<&'static str>>) -> Result<(), String> {
    let Some(SessionTranscript::Multifile(t)) = &rec.transcript else {
        return Err("no multifile transcript".into());
    };
    let sel = rec.seeds.selection;
    let (t1, t2) = (table(1), table(2));
    if t.requests.len() != t1.len() {
        return Err(format!("{} requests, table has {}", t.requests.len(), t1.len()));
    }
    for (k, (a, b)) in t.requests.iter().enumerate() {
        if a != t1[k][sel.z1 - 1] || b != t2[k][sel.z2 - 1] {
            return Err(format!("round {} for {sel:?}: ({a}, {b})", k + 1));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let mut report = Report { failures: 0 };
    let mut region_inputs: Vec<(usize, usize, RatePair)> = Vec::new();

    report.check(1, "channel law truth table", Some(Duration::from_millis(1)), || {
        let mut ok = true;
        for (x1, x2) in [(0u8, 0u8), (0, 1), (1, 0), (1, 1)] {
            let r = transmit(&BitString::from_u64(x1 as u64, 1), &BitString::from_u64(x2 as u64, 1)).unwrap();
            ok &= r.y.symbols() == [x1 + x2];
        }
        Outcome::new(ok, "Y = X1 + X2 on all four input pairs")
    });

    report.check(2, "twelve-use partition example", Some(Duration::from_millis(1)), || {
        let y: Vec<u8> = vec![1, 0, 2, 0, 1, 2, 0, 1, 1, 2, 1, 1];
        let (g, b) = classify_indices(&y).unwrap();
        let p = partition(&g, &b, 1.0 / 3.0, 2, 4).unwrap();
        let ok = p.m == 6
            && g == set(&[2, 3, 4, 6, 7, 10])
            && b == set(&[1, 5, 8, 9, 11, 12])
            && p.good1 == set(&[2, 3])
            && p.good2 == set(&[4, 6, 7, 10])
            && p.bad1 == set(&[1, 5])
            && p.bad2 == set(&[8, 9, 11, 12]);
        Outcome::new(
            ok,
            format!(
                "M = {}, G1 = {:?}, G2 = {:?}, B1 = {:?}, B2 = {:?}",
                p.m, p.good1, p.good2, p.bad1, p.bad2
            ),
        )
    });

    // Criteria 3 and 4 share one sweep.
    let two_file = ProtocolParams::two_file(4096, 0.4, 0.5, 0, 0);
    let (e1, e2) = maximal_sizing(&two_file).unwrap();
    let two_file = ProtocolParams {
        ell1: e1,
        ell2: e2,
        ..two_file
    };
    let mut two_file_records = Vec::new();
    report.check(3, "two-file correctness", Some(Duration::from_secs(10)), || {
        two_file_records = run_trials(&two_file, SEED_TWO_FILE, 1000, false, None).unwrap();
        let done: Vec<_> = two_file_records.iter().filter(|r| !r.aborted).collect();
        let wrong = done.iter().filter(|r| !r.correct || r.bit_errors != 0).count();
        let covered: BTreeSet<Selection> = done.iter().map(|r| r.seeds.selection).collect();
        let ok = wrong == 0 && covered.len() == 4;
        Outcome::new(
            ok,
            format!(
                "{} of 1000 completed, {wrong} with bit errors, {} selections covered, ell = ({e1}, {e2})",
                done.len(),
                covered.len()
            ),
        )
    });

    report.check(4, "abort rate within Chebyshev bound", None, || {
        let cell = summarize(&two_file, &two_file_records).unwrap();
        Outcome::new(
            cell.abort_rate <= cell.abort_bound + cell.sampling_slack,
            format!(
                "rate {:.4} vs bound {:.4} + slack {:.4}",
                cell.abort_rate, cell.abort_bound, cell.sampling_slack
            ),
        )
    });

    report.check(5, "rate convergence at n = 2^16", Some(Duration::from_secs(30)), || {
        let p = ProtocolParams::two_file(1 << 16, 0.4, 0.5, 0, 0);
        let (e1, e2) = maximal_sizing(&p).unwrap();
        let p = ProtocolParams {
            ell1: e1,
            ell2: e2,
            ..p
        };
        let recs = run_trials(&p, SEED_RATE, 20, false, None).unwrap();
        let rs = rates(&recs);
        let n = rs.len().max(1) as f64;
        let (m1, m2) = (
            rs.iter().map(|r| r.r1).sum::<f64>() / n,
            rs.iter().map(|r| r.r2).sum::<f64>() / n,
        );
        region_inputs.extend(rs.iter().map(|&r| (2, 2, r)));
        let close = |m: f64| (m - 0.25).abs() <= RATE_REL_TOL * 0.25;
        Outcome::new(
            !rs.is_empty() && close(m1) && close(m2),
            format!("mean (R1, R2) = ({m1:.5}, {m2:.5}) over {} sessions", rs.len()),
        )
    });

    report.check(6, "exact privacy zeros at n = 4", Some(Duration::from_secs(60)), || {
        let tiny = ProtocolParams::two_file(4, 0.4, 0.5, 1, 1);
        let no_abort = audit(
            &AuditConfig::new(tiny.clone().without_abort_rule(), ProtocolMode::TwoFile),
            Conditioning::Unconditioned,
        )
        .unwrap();
        let non_abort = audit(&AuditConfig::new(tiny, ProtocolMode::TwoFile), Conditioning::NonAbort).unwrap();
        let ok = no_abort.passes(LEAKAGE_TOL) && non_abort.passes(LEAKAGE_TOL);
        Outcome::new(
            ok,
            format!(
                "abort disabled: {}; non-abort: {}",
                leak_summary(&no_abort),
                leak_summary(&non_abort)
            ),
        )
    });

    report.check(7, "mutation sensitivity", Some(Duration::from_secs(60)), || {
        let base = AuditConfig::new(ProtocolParams::two_file(4, 0.4, 0.5, 1, 1), ProtocolMode::TwoFile);
        let reuse = audit(&base.clone().with_mutation(Mutation::MaskReuse), Conditioning::NonAbort).unwrap();
        let disclose = audit(
            &base.with_mutation(Mutation::SelectionDisclosure),
            Conditioning::NonAbort,
        )
        .unwrap();
        Outcome::new(
            reuse.servers_vs_client >= MUTATION_MIN_LEAK && disclose.client_privacy_s1 >= MUTATION_MIN_LEAK,
            format!(
                "mask reuse: servers_vs_client = {:.4}; selection disclosure: client_privacy_s1 = {:.4}",
                reuse.servers_vs_client, disclose.client_privacy_s1
            ),
        )
    });

    // Criteria 8, 9 and 11 share the multifile runs.
    let mut multifile_runs: Vec<(ProtocolParams, Vec<SessionRecord>)> = Vec::new();
    report.check(
        8,
        "multifile reconstruction and schedules",
        Some(Duration::from_secs(60)),
        || {
            let mut problems = Vec::new();
            let mut sessions = 0;
            let mut completed = 0;
            for l1 in 2..=4 {
                for l2 in 2..=4 {
                    let p = ProtocolParams::two_file(512, 0.4, 0.5, 0, 0).with_counts(l1, l2);
                    let (e1, e2) = maximal_sizing(&p).unwrap();
                    let p = ProtocolParams {
                        ell1: e1,
                        ell2: e2,
                        ..p
                    };
                    let keep = (l1, l2) == (3, 3) || (l1, l2) == (3, 4);
                    let recs =
                        run_trials(&p, SEED_MULTIFILE ^ (l1 * 16 + l2) as u64, 100 * l1 * l2, keep, None).unwrap();
                    sessions += recs.len();
                    for r in &recs {
                        if r.aborted {
                            continue;
                        }
                        completed += 1;
                        if !r.correct {
                            problems.push(format!("L = ({l1}, {l2}) trial {} wrong", r.trial));
                        }
                    }
                    let per_selection: BTreeSet<Selection> =
                        recs.iter().filter(|r| !r.aborted).map(|r| r.seeds.selection).collect();
                    if per_selection.len() != l1 * l2 {
                        problems.push(format!(
                            "L = ({l1}, {l2}): only {} selections completed",
                            per_selection.len()
                        ));
                    }
                    if keep {
                        let table: fn(u8) -> Vec<Vec<&'static str>> = if l2 == 3 {
                            table_equal_counts
                        } else {
                            table_three_by_four
                        };
                        for r in recs.iter().take(l1 * l2) {
                            if let Err(e) = schedule_matches(r, table) {
                                problems.push(format!("L = ({l1}, {l2}): {e}"));
                            }
                        }
                        if l2 == 4 {
                            if let Some(SessionTranscript::Multifile(t)) = &recs[0].transcript {
                                for server in [1u8, 2] {
                                    let got: BTreeSet<(&str, &str)> = t
                                        .header
                                        .offered
                                        .iter()
                                        .map(|o| {
                                            let i = if server == 1 { 0 } else { 2 };
                                            (o[i].as_str(), o[i + 1].as_str())
                                        })
                                        .collect();
                                    if got != offered_three_by_four(server) {
                                        problems.push(format!("server {server} offered pairs differ: {got:?}"));
                                    }
                                }
                            }
                        }
                    }
                    multifile_runs.push((p, recs));
                }
            }
            Outcome::new(
                problems.is_empty(),
                format!(
                    "{completed} of {sessions} sessions completed{}",
                    if problems.is_empty() {
                        String::new()
                    } else {
                        format!("; {}", problems.join("; "))
                    }
                ),
            )
        },
    );

    report.check(9, "download cost 2(L_i - 1) bits per file bit", None, || {
        let mut checked = 0;
        let mut bad = Vec::new();
        for (p, recs) in &multifile_runs {
            for r in recs.iter().filter(|r| !r.aborted) {
                checked += 1;
                let (b1, b2) = r.public_bits;
                let (f1, f2) = r.recovered_bits;
                if b1 != 2 * (p.l1 - 1) * f1 || b2 != 2 * (p.l2 - 1) * f2 {
                    bad.push(format!(
                        "L = ({}, {}) trial {}: {b1}/{f1}, {b2}/{f2}",
                        p.l1, p.l2, r.trial
                    ));
                }
            }
        }
        let mut detail = format!("{checked} completed sessions checked");
        if !bad.is_empty() {
            detail.push_str(&format!("; {}", bad.join("; ")));
        }
        Outcome::new(checked > 0 && bad.is_empty(), detail)
    });

    report.check(10, "entropy maximum and monotonicity", Some(Duration::from_secs(10)), || {
        let m = maximize_f();
        let g = verify_g_monotone(MONOTONE_SAMPLES).unwrap();
        let fd = finite_difference_check(FD_GRID, FD_STEP, FD_TOL);
        let ok = (m.value - 0.5).abs() <= MAX_VALUE_TOL
            && (m.argmax.p1 - 0.5).abs() <= ARGMAX_TOL
            && (m.argmax.p2 - 0.5).abs() <= ARGMAX_TOL
            && m.grid_consistent
            && g.monotone
            && fd.worst_residual <= FD_TOL;
        Outcome::new(
            ok,
            format!(
                "max {:.12} at ({:.9}, {:.9}); g monotone {} (worst step {:.2e}); derivative residual {:.2e} over {} points",
                m.value, m.argmax.p1, m.argmax.p2, g.monotone, g.worst_violation, fd.worst_residual, fd.points
            ),
        )
    });

    for (p, recs) in &multifile_runs {
        region_inputs.extend(rates(recs).into_iter().map(|r| (p.l1, p.l2, r)));
    }
    report.check(11, "region compliance", None, || {
        let outside: Vec<_> = region_inputs
            .iter()
            .filter(|(l1, l2, r)| !region_check(*r, *l1, *l2))
            .collect();
        let worst = region_inputs
            .iter()
            .map(|(l1, l2, r)| r.region_margin(*l1, *l2))
            .fold(f64::INFINITY, f64::min);
        Outcome::new(
            !region_inputs.is_empty() && outside.is_empty(),
            format!("{} rate pairs, smallest margin {worst:.6}", region_inputs.len()),
        )
    });

    report.check(12, "one-time-pad lemma", Some(Duration::from_secs(10)), || {
        let reports: Vec<_> = [1, 2].iter().map(|&m| otp_lemma_check(m).unwrap()).collect();
        let detail = reports
            .iter()
            .map(|r| {
                format!(
                    "m = {}: {} cases, slack {:.1e}/{:.1e}",
                    r.m, r.cases, r.max_slack_first, r.max_slack_second
                )
            })
            .collect::<Vec<_>>()
            .join("; ");
        Outcome::new(reports.iter().all(|r| r.passed()), detail)
    });

    println!("{} of 12 criteria failed", report.failures);
    if report.failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
