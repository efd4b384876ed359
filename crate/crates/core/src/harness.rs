//! Seeded batches of sessions and Monte Carlo sweeps.
//!
//! Seeding scheme: trial `i` of master seed `s` reads four `u64` values from
//! ChaCha8 stream `i` of `s`, in order the client seed, the server 1 seed,
//! the server 2 seed and the file seed. Trial `i` asks for selection number
//! `i mod (L1 L2)` in row-major order, so a batch covers every selection
//! evenly. Sweep cell `c` runs its trials under the master seed taken from
//! the first word of stream `2^63 + c` of `s`.

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::capacity::{region_check, RatePair};
use crate::error::{Error, Result};
use crate::model::{FileStore, ProtocolParams, Reduction, Selection};
use crate::multifile::{run_multifile, MultifilePlan, MultifileTranscript};
use crate::protocol::{maximal_lengths, run_session, AbortReason, Transcript};
use crate::rng::{stream, PartyRandomness};

/// Everything a trial needs, derived from the master seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSeeds {
    pub trial: u64,
    pub parties: PartyRandomness,
    pub files_seed: u64,
    pub selection: Selection,
}

impl TrialSeeds {
    pub fn derive(master: u64, trial: u64, l1: usize, l2: usize) -> Self {
        let mut s = stream(master, trial);
        let parties = PartyRandomness::new(s.next_u64(), s.next_u64(), s.next_u64());
        let files_seed = s.next_u64();
        let idx = (trial % (l1 * l2) as u64) as usize;
        TrialSeeds {
            trial,
            parties,
            files_seed,
            selection: Selection::new(idx / l2 + 1, idx % l2 + 1),
        }
    }
}

/// Either kind of session transcript.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SessionTranscript {
    TwoFile(Transcript),
    Multifile(MultifileTranscript),
}

/// Outcome of one seeded session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub trial: u64,
    pub seeds: TrialSeeds,
    pub aborted: bool,
    pub abort_reason: Option<AbortReason>,
    pub rounds: usize,
    pub channel_uses: usize,
    /// Both recovered files equal the selected ones; false on abort.
    pub correct: bool,
    pub bit_errors: usize,
    pub public_bits: (usize, usize),
    pub recovered_bits: (usize, usize),
    pub rates: Option<RatePair>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub transcript: Option<SessionTranscript>,
}

fn hamming(a: &BitString, b: &BitString) -> usize {
    a.xor(b).map_or(a.len().max(b.len()), |d| d.count_ones())
}

fn uses_multifile(params: &ProtocolParams) -> bool {
    params.l1 != 2 || params.l2 != 2
}

/// Runs trial `trial` of `master`. Two-file parameters go through the base
/// protocol, anything larger through the multifile reduction.
pub fn run_trial(params: &ProtocolParams, master: u64, trial: u64, keep_transcript: bool) -> Result<SessionRecord> {
    params.validate()?;
    let seeds = TrialSeeds::derive(master, trial, params.l1, params.l2);
    let mut frng = stream(seeds.files_seed, 0);
    let files1 = FileStore::random(1, params.l1, params.ell1, &mut frng)?;
    let files2 = FileStore::random(2, params.l2, params.ell2, &mut frng)?;
    let sel = seeds.selection;
    let want1 = files1.file(sel.z1);
    let want2 = files2.file(sel.z2);

    let (transcript, aborted, abort_reason, rounds, recovered, public_bits) = if uses_multifile(params) {
        let t = run_multifile(params, &files1, &files2, sel, &seeds.parties)?;
        let reason = t.rounds.last().and_then(|r| r.abort_reason);
        let (aborted, rounds, rec, pb) = (t.aborted, t.header.rounds, t.recovered.clone(), t.public_bits());
        (SessionTranscript::Multifile(t), aborted, reason, rounds, rec, pb)
    } else {
        let t = run_session(params, &files1, &files2, sel, &seeds.parties)?;
        let (aborted, reason, rec, pb) = (t.aborted, t.abort_reason, t.recovered.clone(), t.public_bits());
        (SessionTranscript::TwoFile(t), aborted, reason, 1, rec, pb)
    };

    let channel_uses = params.n * rounds;
    let (correct, bit_errors, recovered_bits, rates) = match &recovered {
        Some((r1, r2)) => {
            let errors = hamming(r1, want1) + hamming(r2, want2);
            let rates = RatePair::new(
                r1.len() as f64 / channel_uses as f64,
                r2.len() as f64 / channel_uses as f64,
            )?;
            (errors == 0, errors, (r1.len(), r2.len()), Some(rates))
        }
        None => (false, 0, (0, 0), None),
    };
    Ok(SessionRecord {
        trial,
        seeds,
        aborted,
        abort_reason,
        rounds,
        channel_uses,
        correct,
        bit_errors,
        public_bits,
        recovered_bits,
        rates,
        transcript: keep_transcript.then_some(transcript),
    })
}

fn with_workers<T: Send>(workers: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(job()),
        Some(0) => Err(Error::config("worker count must be at least 1")),
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map(|pool| pool.install(job))
            .map_err(|e| Error::config(format!("cannot start {w} workers: {e}"))),
    }
}

/// Runs `trials` sessions in parallel; the result is ordered by trial index
/// and does not depend on the worker count.
pub fn run_trials(
    params: &ProtocolParams,
    master: u64,
    trials: usize,
    keep_transcripts: bool,
    workers: Option<usize>,
) -> Result<Vec<SessionRecord>> {
    if trials == 0 {
        return Err(Error::config("trials must be at least 1"));
    }
    params.validate()?;
    with_workers(workers, || {
        (0..trials as u64)
            .into_par_iter()
            .map(|i| run_trial(params, master, i, keep_transcripts))
            .collect::<Result<Vec<_>>>()
    })?
}

/// Largest file lengths that every non-aborted realization can carry,
/// with each file split into as many parts as the reduction asks for.
pub fn maximal_sizing(params: &ProtocolParams) -> Result<(usize, usize)> {
    let (m1, m2) = maximal_lengths(params.n, params.t, params.alpha);
    if !uses_multifile(params) {
        return Ok((m1, m2));
    }
    // Each round carries one part of each selected file.
    let plan = MultifilePlan::new(params.l1, params.l2, params.reduction)?;
    Ok((m1 * plan.parts1, m2 * plan.parts2))
}

/// Chebyshev bound on the abort probability of one block of `n` uses.
pub fn chebyshev_bound(n: usize, t: f64) -> f64 {
    (n as f64).powf(2.0 * t - 1.0) / 4.0
}

/// One `(n, alpha)` cell of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub n: usize,
    pub t: f64,
    pub alpha: f64,
    pub l1: usize,
    pub l2: usize,
    pub ell1: usize,
    pub ell2: usize,
    pub rounds: usize,
    pub trials: usize,
    pub aborts: usize,
    pub abort_rate: f64,
    /// Union of the per-round Chebyshev bounds, capped at 1.
    pub abort_bound: f64,
    /// Three binomial standard deviations at the bound.
    pub sampling_slack: f64,
    pub abort_ok: bool,
    /// Non-aborted sessions that returned a wrong file.
    pub failures: usize,
    pub mean_r1: f64,
    pub mean_r2: f64,
    pub target_r1: f64,
    pub target_r2: f64,
    /// Smallest `1/2 - ((L1-1) R1 + (L2-1) R2)` over completed sessions.
    pub region_margin: f64,
    pub region_ok: bool,
}

/// Summarizes a batch run under `params`.
pub fn summarize(params: &ProtocolParams, records: &[SessionRecord]) -> Result<SweepCell> {
    if records.is_empty() {
        return Err(Error::config("cannot summarize an empty batch"));
    }
    let rounds = records[0].rounds;
    let trials = records.len();
    let aborts = records.iter().filter(|r| r.aborted).count();
    let done: Vec<&SessionRecord> = records.iter().filter(|r| !r.aborted).collect();
    let failures = done.iter().filter(|r| !r.correct).count();
    let rates: Vec<RatePair> = done.iter().filter_map(|r| r.rates).collect();
    let mean = |f: fn(&RatePair) -> f64| {
        if rates.is_empty() {
            0.0
        } else {
            rates.iter().map(f).sum::<f64>() / rates.len() as f64
        }
    };
    let abort_bound = if params.abort_rule {
        (rounds as f64 * chebyshev_bound(params.n, params.t)).min(1.0)
    } else {
        0.0
    };
    let sampling_slack = 3.0 * (abort_bound * (1.0 - abort_bound) / trials as f64).sqrt();
    let abort_rate = aborts as f64 / trials as f64;
    let region_margin = rates
        .iter()
        .map(|r| r.region_margin(params.l1, params.l2))
        .fold(f64::INFINITY, f64::min);
    let k = rounds as f64;
    let per_file = |parts: usize| parts as f64 / k;
    let (parts1, parts2) = if uses_multifile(params) {
        let plan = MultifilePlan::new(params.l1, params.l2, params.reduction)?;
        (plan.parts1, plan.parts2)
    } else {
        (1, 1)
    };
    Ok(SweepCell {
        n: params.n,
        t: params.t,
        alpha: params.alpha,
        l1: params.l1,
        l2: params.l2,
        ell1: params.ell1,
        ell2: params.ell2,
        rounds,
        trials,
        aborts,
        abort_rate,
        abort_bound,
        sampling_slack,
        abort_ok: abort_rate <= abort_bound + sampling_slack,
        failures,
        mean_r1: mean(|r| r.r1),
        mean_r2: mean(|r| r.r2),
        target_r1: params.alpha / 2.0 * per_file(parts1),
        target_r2: (1.0 - params.alpha) / 2.0 * per_file(parts2),
        region_margin,
        region_ok: rates.iter().all(|&r| region_check(r, params.l1, params.l2)),
    })
}

/// Master seed of sweep cell `cell`.
pub fn cell_seed(master: u64, cell: u64) -> u64 {
    stream(master, (1 << 63) + cell).next_u64()
}

/// Runs every `(n, alpha)` cell with maximal sizing, `n` outermost.
pub fn sweep(
    base: &ProtocolParams,
    ns: &[usize],
    alphas: &[f64],
    trials: usize,
    master: u64,
    workers: Option<usize>,
) -> Result<Vec<SweepCell>> {
    if ns.is_empty() || alphas.is_empty() {
        return Err(Error::config("sweep grid is empty"));
    }
    let mut cells = Vec::with_capacity(ns.len() * alphas.len());
    for (c, (n, alpha)) in ns.iter().flat_map(|&n| alphas.iter().map(move |&a| (n, a))).enumerate() {
        let mut params = ProtocolParams {
            n,
            alpha,
            ..base.clone()
        };
        params.validate()?;
        let (ell1, ell2) = maximal_sizing(&params)?;
        params.ell1 = ell1;
        params.ell2 = ell2;
        let records = run_trials(&params, cell_seed(master, c as u64), trials, false, workers)?;
        cells.push(summarize(&params, &records)?);
    }
    Ok(cells)
}

/// Resolved reduction for `params`, for reporting.
pub fn resolved_reduction(params: &ProtocolParams) -> Result<Reduction> {
    params.reduction.resolve(params.l1, params.l2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_are_deterministic_and_cover_selections() {
        let a = TrialSeeds::derive(7, 3, 2, 2);
        assert_eq!(a, TrialSeeds::derive(7, 3, 2, 2));
        assert_ne!(a.parties, TrialSeeds::derive(7, 4, 2, 2).parties);
        let sels: Vec<Selection> = (0..6).map(|i| TrialSeeds::derive(1, i, 3, 2).selection).collect();
        let all: Vec<Selection> = Selection::all(3, 2).collect();
        assert_eq!(sels, all);
    }

    #[test]
    fn trials_are_order_deterministic_across_worker_counts() {
        let p = ProtocolParams::two_file(256, 0.4, 0.5, 40, 40);
        let a = run_trials(&p, 11, 24, true, Some(1)).unwrap();
        let b = run_trials(&p, 11, 24, true, Some(4)).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|r| r.aborted || r.correct));
        assert!(run_trials(&p, 11, 0, false, None).is_err());
        assert!(run_trials(&p, 11, 1, false, Some(0)).is_err());
    }

    #[test]
    fn zero_length_files_succeed_trivially() {
        let p = ProtocolParams::two_file(64, 0.4, 0.5, 0, 0);
        let r = run_trial(&p, 1, 0, false).unwrap();
        assert!(r.aborted || (r.correct && r.recovered_bits == (0, 0)));
    }

    #[test]
    fn maximal_sizing_matches_rounds() {
        let p = ProtocolParams::two_file(1024, 0.4, 0.5, 0, 0);
        assert_eq!(maximal_sizing(&p).unwrap(), maximal_lengths(1024, 0.4, 0.5));
        let p = p.with_counts(3, 4);
        let (a, b) = maximal_lengths(1024, 0.4, 0.5);
        let plan = MultifilePlan::new(3, 4, Reduction::Auto).unwrap();
        assert_eq!(maximal_sizing(&p).unwrap(), (a * plan.parts1, b * plan.parts2));
    }

    #[test]
    fn small_sweep_is_consistent() {
        let base = ProtocolParams::two_file(1, 0.4, 0.5, 0, 0);
        let cells = sweep(&base, &[1024, 4096], &[0.0, 0.5], 40, 3, None).unwrap();
        assert_eq!(cells.len(), 4);
        for c in &cells {
            assert_eq!(c.failures, 0);
            assert!(c.region_ok && c.abort_ok, "{c:?}");
            assert!((0.0..=1.0).contains(&c.abort_rate));
        }
        assert_eq!(cells[0].mean_r1, 0.0);
        assert_eq!(cells[2].mean_r1, 0.0);
        assert!((cells[3].mean_r1 - 0.25).abs() < 0.25 * 0.1);
    }

    #[test]
    fn chebyshev_value() {
        assert!((chebyshev_bound(4096, 0.4) - 0.0474).abs() < 1e-3);
    }
}
