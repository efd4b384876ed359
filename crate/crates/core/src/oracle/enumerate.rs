//! Exhaustive enumeration of a tiny protocol instance into an exact joint
//! distribution, and the leakage audit computed from it.
//!
//! Every random input is enumerated with its exact weight: the selection,
//! all files, all chain masks, both channel inputs of every round and the
//! client's partition choice of every round. The protocol engine itself
//! produces each outcome, so the audit checks the code that runs sessions.

use std::fmt;
use std::time::Instant;

use num_rational::BigRational;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::{BitString, IndexSet};
use crate::channel::{classify_indices, transmit};
use crate::error::{Error, Result};
use crate::model::{FileStore, PartitionStrategy, ProtocolParams, Selection};
use crate::multifile::{build_chain, reconstruct, ChainedPairs, MultifilePlan};
use crate::oracle::distribution::{DistributionBuilder, JointDistribution, Probability};
use crate::protocol::{abort_check, execute, partition, partition_choices, IndexPartition, Mutation, Transcript};

/// Default cap on enumerated weighted assignments.
pub const DEFAULT_BUDGET: u128 = 1 << 28;

/// Variables of an enumerated protocol, in table order.
pub const VARIABLES: [&str; 15] = [
    "Z1",
    "Z2",
    "F1",
    "F2",
    "F1_unselected",
    "F2_unselected",
    "X1",
    "X2",
    "U0",
    "U1",
    "U2",
    "Y",
    "A",
    "aborted",
    "ok",
];

/// Everything server 1 holds at the end: its files, inputs, masks and the
/// public transcript.
pub const SERVER1_VIEW: [&str; 4] = ["F1", "X1", "U1", "A"];
pub const SERVER2_VIEW: [&str; 4] = ["F2", "X2", "U2", "A"];
/// Everything the client holds at the end.
pub const CLIENT_VIEW: [&str; 5] = ["Z1", "Z2", "Y", "U0", "A"];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolMode {
    /// One two-file session; needs `L1 = L2 = 2`.
    #[default]
    TwoFile,
    /// The chained reduction for the configured file counts.
    Multifile,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Conditioning {
    /// Over all runs; an aborted run publishes only the abort flag.
    #[default]
    Unconditioned,
    /// Given that no round aborted.
    NonAbort,
}

impl fmt::Display for Conditioning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Conditioning::Unconditioned => "unconditioned",
            Conditioning::NonAbort => "non-abort",
        })
    }
}

struct Setup {
    plan: MultifilePlan,
    inner: ProtocolParams,
    part_len1: usize,
    part_len2: usize,
}

fn setup(params: &ProtocolParams, mode: ProtocolMode) -> Result<Setup> {
    params.validate()?;
    if mode == ProtocolMode::TwoFile && (params.l1 != 2 || params.l2 != 2) {
        return Err(Error::config("two-file enumeration needs L1 = L2 = 2"));
    }
    let plan = MultifilePlan::new(params.l1, params.l2, params.reduction)?;
    if !params.ell1.is_multiple_of(plan.parts1) || !params.ell2.is_multiple_of(plan.parts2) {
        return Err(Error::config(format!(
            "file lengths ({}, {}) must be divisible by the part counts ({}, {})",
            params.ell1, params.ell2, plan.parts1, plan.parts2
        )));
    }
    let part_len1 = params.ell1 / plan.parts1;
    let part_len2 = params.ell2 / plan.parts2;
    let inner = ProtocolParams {
        l1: 2,
        l2: 2,
        ell1: part_len1,
        ell2: part_len2,
        ..params.clone()
    };
    Ok(Setup {
        plan,
        inner,
        part_len1,
        part_len2,
    })
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

fn pow2(bits: usize) -> u128 {
    if bits >= 128 {
        u128::MAX
    } else {
        1u128 << bits
    }
}

/// Upper bound on enumerated assignments for an instance.
pub fn estimate_assignments(params: &ProtocolParams, mode: ProtocolMode) -> Result<u128> {
    let s = setup(params, mode)?;
    let n = params.n;
    let (a, b) = (s.part_len1, s.part_len2);
    let splits = |m: usize| binomial(m, a) * binomial(m.saturating_sub(a), b);
    let choices = (0..=n)
        .map(|g| {
            if (params.abort_rule && !abort_check(g, n, params.t)) || params.partition == PartitionStrategy::LowestIndex
            {
                1
            } else {
                (splits(g) * splits(n - g)).max(1)
            }
        })
        .max()
        .unwrap_or(1);
    let file_bits = params.l1 * params.ell1 + params.l2 * params.ell2;
    let mask_bits = s.plan.mask_count(1) * s.part_len1 + s.plan.mask_count(2) * s.part_len2;
    let per_round = pow2(2 * n).saturating_mul(choices);
    let mut total = ((params.l1 * params.l2) as u128)
        .saturating_mul(pow2(file_bits))
        .saturating_mul(pow2(mask_bits));
    for _ in 0..s.plan.round_count() {
        total = total.saturating_mul(per_round);
    }
    Ok(total)
}

/// An enumerated instance.
pub struct Enumeration<P: Probability> {
    pub distribution: JointDistribution<P>,
    /// Weighted assignments visited.
    pub assignments: u64,
}

fn bits_bytes(b: &BitString) -> impl Iterator<Item = u8> + '_ {
    b.iter().map(u8::from)
}

fn encode_set(out: &mut Vec<u8>, set: &IndexSet) {
    out.extend_from_slice(&(set.len() as u16).to_le_bytes());
    for &p in set {
        out.extend_from_slice(&(p as u16).to_le_bytes());
    }
}

fn encode_bits(out: &mut Vec<u8>, b: &BitString) {
    out.extend_from_slice(&(b.len() as u16).to_le_bytes());
    out.extend(bits_bytes(b));
}

/// Public part of one round: abort flag, then sets, messages and any
/// disclosed selection.
fn encode_public(out: &mut Vec<u8>, tr: &Transcript) {
    out.push(u8::from(tr.aborted));
    if let Some(sets) = &tr.sets {
        for s in [
            &sets.s1_for_server1,
            &sets.s2_for_server1,
            &sets.s1_for_server2,
            &sets.s2_for_server2,
        ] {
            encode_set(out, s);
        }
    }
    if let Some(m) = &tr.messages {
        for b in [&m.m11, &m.m12, &m.m21, &m.m22] {
            encode_bits(out, b);
        }
    }
    if let Some(z) = tr.disclosed_selection {
        out.push(0xd0);
        out.push(z as u8);
    }
}

struct Outer {
    sel: Selection,
    files1: FileStore,
    files2: FileStore,
    masks1: Vec<BitString>,
    masks2: Vec<BitString>,
    /// Per round: (server-1 pair store, server-2 pair store, branch selection).
    rounds: Vec<(FileStore, FileStore, Selection)>,
}

#[derive(Clone, Default)]
struct Path {
    x1: Vec<u8>,
    x2: Vec<u8>,
    y: Vec<u8>,
    u0: Vec<u8>,
    a: Vec<u8>,
    picks1: Vec<Vec<Option<BitString>>>,
    picks2: Vec<Vec<Option<BitString>>>,
}

struct Ctx<'a> {
    setup: &'a Setup,
    mutation: Mutation,
}

fn round_options(params: &ProtocolParams, good: &IndexSet, bad: &IndexSet) -> Vec<Result<IndexPartition>> {
    let (alpha, a, b) = (params.alpha, params.ell1, params.ell2);
    if params.abort_rule && !abort_check(good.len(), params.n, params.t) {
        // The engine aborts before consulting the partition.
        return vec![Err(Error::Aborted)];
    }
    match params.partition {
        PartitionStrategy::LowestIndex => vec![partition(good, bad, alpha, a, b)],
        PartitionStrategy::Randomized => match partition_choices(good, bad, alpha, a, b) {
            Ok(v) => v.into_iter().map(Ok).collect(),
            Err(e) => vec![Err(e)],
        },
    }
}

fn leaf<P: Probability>(
    outer: &Outer,
    plan: &MultifilePlan,
    path: &Path,
    aborted: bool,
    w: &P,
    out: &mut Vec<(Vec<Vec<u8>>, P)>,
) {
    let files_bytes = |s: &FileStore, skip: Option<usize>| -> Vec<u8> {
        s.files()
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(i + 1) != skip)
            .flat_map(|(_, f)| bits_bytes(f).collect::<Vec<_>>())
            .collect()
    };
    let masks_bytes =
        |m: &[BitString]| -> Vec<u8> { m.iter().flat_map(|b| bits_bytes(b).collect::<Vec<_>>()).collect() };
    let ok = if aborted {
        true
    } else {
        let assemble = |picks: &[Vec<Option<BitString>>], z: usize, l: usize| -> BitString {
            let parts: Vec<BitString> = picks
                .iter()
                .map(|chain| {
                    let chosen: Vec<BitString> = chain.iter().map(|c| c.clone().expect("all rounds ran")).collect();
                    reconstruct(z, l, &chosen).expect("well-formed picks")
                })
                .collect();
            BitString::concat(&parts)
        };
        assemble(&path.picks1, outer.sel.z1, plan.l1) == *outer.files1.file(outer.sel.z1)
            && assemble(&path.picks2, outer.sel.z2, plan.l2) == *outer.files2.file(outer.sel.z2)
    };
    let values = vec![
        vec![outer.sel.z1 as u8],
        vec![outer.sel.z2 as u8],
        files_bytes(&outer.files1, None),
        files_bytes(&outer.files2, None),
        files_bytes(&outer.files1, Some(outer.sel.z1)),
        files_bytes(&outer.files2, Some(outer.sel.z2)),
        path.x1.clone(),
        path.x2.clone(),
        path.u0.clone(),
        masks_bytes(&outer.masks1),
        masks_bytes(&outer.masks2),
        path.y.clone(),
        path.a.clone(),
        vec![u8::from(aborted)],
        vec![u8::from(ok)],
    ];
    out.push((values, w.clone()));
}

fn walk<P: Probability>(
    ctx: &Ctx,
    outer: &Outer,
    k: usize,
    w: P,
    path: Path,
    out: &mut Vec<(Vec<Vec<u8>>, P)>,
) -> Result<()> {
    let plan = &ctx.setup.plan;
    if k > plan.round_count() {
        leaf(outer, plan, &path, false, &w, out);
        return Ok(());
    }
    let params = &ctx.setup.inner;
    let n = params.n;
    let (store1, store2, sel) = &outer.rounds[k - 1];
    let w_x = w.mul(&P::ratio(1, 1u64 << (2 * n)));
    for v1 in 0..1u64 << n {
        let x1 = BitString::from_u64(v1, n);
        for v2 in 0..1u64 << n {
            let x2 = BitString::from_u64(v2, n);
            let round = transmit(&x1, &x2)?;
            let (good, bad) = classify_indices(round.y.symbols())?;
            let options = round_options(params, &good, &bad);
            let w_c = w_x.mul(&P::ratio(1, options.len() as u64));
            for (choice_id, choice) in options.into_iter().enumerate() {
                let tr = execute(params, store1, store2, *sel, &round, |_, _| choice, ctx.mutation)?;
                let mut next = path.clone();
                next.x1.extend(bits_bytes(&x1));
                next.x2.extend(bits_bytes(&x2));
                next.y.extend_from_slice(round.y.symbols());
                next.u0.extend_from_slice(&(choice_id as u32).to_le_bytes());
                encode_public(&mut next.a, &tr);
                if tr.aborted {
                    leaf(outer, plan, &next, true, &w_c, out);
                    continue;
                }
                let (r1, r2) = tr.recovered.expect("non-aborted rounds recover");
                let (t1, p1) = plan.position(1, k);
                let (t2, p2) = plan.position(2, k);
                next.picks1[p1 - 1][t1 - 1] = Some(r1);
                next.picks2[p2 - 1][t2 - 1] = Some(r2);
                walk(ctx, outer, k + 1, w_c.clone(), next, out)?;
            }
        }
    }
    Ok(())
}

fn chains(server: u8, store: &FileStore, parts: usize, masks: &[BitString]) -> Result<Vec<ChainedPairs<BitString>>> {
    let l = store.file_count();
    let split: Vec<Vec<BitString>> = store.files().iter().map(|f| f.split(parts)).collect::<Result<_>>()?;
    (0..parts)
        .map(|p| {
            let items: Vec<BitString> = split.iter().map(|f| f[p].clone()).collect();
            build_chain(server, &items, &masks[p * (l - 2)..(p + 1) * (l - 2)])
        })
        .collect()
}

fn unpack(value: u64, count: usize, len: usize) -> Vec<BitString> {
    (0..count)
        .map(|i| BitString::from_u64(if len == 0 { 0 } else { value >> (i * len) }, len))
        .collect()
}

/// Builds the exact joint distribution of an instance.
pub fn enumerate_protocol<P: Probability>(
    params: &ProtocolParams,
    mode: ProtocolMode,
    mutation: Mutation,
    budget: u128,
) -> Result<Enumeration<P>> {
    let required = estimate_assignments(params, mode)?;
    if required > budget {
        return Err(Error::BudgetExceeded { required, budget });
    }
    let s = setup(params, mode)?;
    let plan = &s.plan;
    let (mc1, mc2) = (plan.mask_count(1), plan.mask_count(2));
    let (fb1, fb2) = (params.l1 * params.ell1, params.l2 * params.ell2);
    let (mb1, mb2) = (mc1 * s.part_len1, mc2 * s.part_len2);
    let outer_count = ((params.l1 * params.l2) as u64) << (fb1 + fb2 + mb1 + mb2);
    let w0 = P::ratio(1, outer_count);

    let mut specs = Vec::new();
    for sel in Selection::all(params.l1, params.l2) {
        for f1 in 0..1u64 << fb1 {
            for f2 in 0..1u64 << fb2 {
                for m1 in 0..1u64 << mb1 {
                    for m2 in 0..1u64 << mb2 {
                        specs.push((sel, f1, f2, m1, m2));
                    }
                }
            }
        }
    }
    let build_outer = |&(sel, f1, f2, m1, m2): &(Selection, u64, u64, u64, u64)| -> Result<Outer> {
        let files1 = FileStore::new(1, unpack(f1, params.l1, params.ell1))?;
        let files2 = FileStore::new(2, unpack(f2, params.l2, params.ell2))?;
        let masks1 = unpack(m1, mc1, s.part_len1);
        let masks2 = unpack(m2, mc2, s.part_len2);
        let c1 = chains(1, &files1, plan.parts1, &masks1)?;
        let c2 = chains(2, &files2, plan.parts2, &masks2)?;
        let selections = plan.round_selections(sel);
        let rounds = (1..=plan.round_count())
            .map(|k| {
                let (t1, p1) = plan.position(1, k);
                let (t2, p2) = plan.position(2, k);
                let (a1, b1) = &c1[p1 - 1].pairs[t1 - 1];
                let (a2, b2) = &c2[p2 - 1].pairs[t2 - 1];
                Ok((
                    FileStore::new(1, vec![a1.clone(), b1.clone()])?,
                    FileStore::new(2, vec![a2.clone(), b2.clone()])?,
                    selections[k - 1],
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Outer {
            sel,
            files1,
            files2,
            masks1,
            masks2,
            rounds,
        })
    };

    let ctx = Ctx { setup: &s, mutation };
    let empty = Path {
        picks1: vec![vec![None; plan.l1 - 1]; plan.parts1],
        picks2: vec![vec![None; plan.l2 - 1]; plan.parts2],
        ..Path::default()
    };
    let mut builder = DistributionBuilder::<P>::new(VARIABLES);
    let mut assignments = 0u64;
    // Shards run in parallel; merging follows shard order so reports are
    // bit-reproducible.
    for chunk in specs.chunks(64) {
        let shards: Vec<Vec<(Vec<Vec<u8>>, P)>> = chunk
            .par_iter()
            .map(|spec| {
                let outer = build_outer(spec)?;
                let mut out = Vec::new();
                walk(&ctx, &outer, 1, w0.clone(), empty.clone(), &mut out)?;
                Ok(out)
            })
            .collect::<Result<_>>()?;
        for shard in shards {
            assignments += shard.len() as u64;
            for (values, p) in &shard {
                builder.add(values, p);
            }
        }
    }
    Ok(Enumeration {
        distribution: builder.build(),
        assignments,
    })
}

/// Instance description carried by a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    pub params: ProtocolParams,
    pub mode: ProtocolMode,
    pub mutation: Mutation,
    pub budget: u128,
    /// Exact rational arithmetic instead of double precision.
    pub exact: bool,
}

impl AuditConfig {
    pub fn new(params: ProtocolParams, mode: ProtocolMode) -> Self {
        AuditConfig {
            params,
            mode,
            mutation: Mutation::None,
            budget: DEFAULT_BUDGET,
            exact: false,
        }
    }

    pub fn with_mutation(mut self, mutation: Mutation) -> Self {
        self.mutation = mutation;
        self
    }

    pub fn with_budget(mut self, budget: u128) -> Self {
        self.budget = budget;
        self
    }

    pub fn exact(mut self, exact: bool) -> Self {
        self.exact = exact;
        self
    }
}

/// The six audited quantities, in bits (reliability as a probability).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub config: AuditConfig,
    pub conditioning: Conditioning,
    /// `I(F1 X1 U1 A; Z1 Z2)`
    pub client_privacy_s1: f64,
    /// `I(F2 X2 U2 A; Z1 Z2)`
    pub client_privacy_s2: f64,
    /// `I(F1 X1 U1 A; F2)`: what server 1 learns about server 2's files.
    pub server2_vs_server1: f64,
    /// `I(F2 X2 U2 A; F1)`: what server 2 learns about server 1's files.
    pub server1_vs_server2: f64,
    /// `I(Z1 Z2 Y U0 A; unselected files)`
    pub servers_vs_client: f64,
    /// Probability of a wrong file among non-aborted runs.
    pub reliability_error: f64,
    pub abort_probability: f64,
    pub assignments: u64,
    pub support: usize,
    pub wall_time_ms: f64,
}

impl LeakageReport {
    /// The five leakage quantities with their names.
    pub fn leakages(&self) -> [(&'static str, f64); 5] {
        [
            ("client_privacy_s1", self.client_privacy_s1),
            ("client_privacy_s2", self.client_privacy_s2),
            ("server2_vs_server1", self.server2_vs_server1),
            ("server1_vs_server2", self.server1_vs_server2),
            ("servers_vs_client", self.servers_vs_client),
        ]
    }

    pub fn max_leakage(&self) -> f64 {
        self.leakages().iter().map(|(_, v)| *v).fold(0.0, f64::max)
    }

    /// All leakage at most `tol` bits and no recovery errors.
    pub fn passes(&self, tol: f64) -> bool {
        self.max_leakage() <= tol && self.reliability_error == 0.0
    }
}

impl fmt::Display for LeakageReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = &self.config.params;
        writeln!(
            f,
            "instance n={} t={} alpha={} L1={} L2={} ell1={} ell2={} abort_rule={} partition={:?} mode={:?} mutation={:?} exact={}",
            p.n, p.t, p.alpha, p.l1, p.l2, p.ell1, p.ell2, p.abort_rule, p.partition, self.config.mode, self.config.mutation, self.config.exact
        )?;
        writeln!(f, "conditioning {}", self.conditioning)?;
        for (name, v) in self.leakages() {
            writeln!(f, "{name} {v:e}")?;
        }
        writeln!(f, "reliability_error {:e}", self.reliability_error)?;
        writeln!(f, "abort_probability {:e}", self.abort_probability)?;
        write!(
            f,
            "assignments {} support {} wall_time_ms {:.1}",
            self.assignments, self.support, self.wall_time_ms
        )
    }
}

fn report_from<P: Probability>(
    config: &AuditConfig,
    full: &JointDistribution<P>,
    assignments: u64,
    conditioning: Conditioning,
    started: Instant,
) -> Result<LeakageReport> {
    let abort_probability = full.probability_of("aborted", &[1])?.to_f64();
    let d = match conditioning {
        Conditioning::Unconditioned => full.clone(),
        Conditioning::NonAbort => full
            .condition("aborted", &[0])
            .map_err(|_| Error::config("every run of this instance aborts; nothing to condition on"))?,
    };
    let selection = ["Z1", "Z2"];
    let unselected = ["F1_unselected", "F2_unselected"];
    let live = d.probability_of("aborted", &[0])?;
    let reliability_error = if live.is_zero() {
        0.0
    } else {
        d.probability_of("ok", &[0])?.div(&live).to_f64()
    };
    Ok(LeakageReport {
        config: config.clone(),
        conditioning,
        client_privacy_s1: d.mutual_information(&SERVER1_VIEW, &selection)?,
        client_privacy_s2: d.mutual_information(&SERVER2_VIEW, &selection)?,
        server2_vs_server1: d.mutual_information(&SERVER1_VIEW, &["F2"])?,
        server1_vs_server2: d.mutual_information(&SERVER2_VIEW, &["F1"])?,
        servers_vs_client: d.mutual_information(&CLIENT_VIEW, &unselected)?,
        reliability_error,
        abort_probability,
        assignments,
        support: full.support_size(),
        wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}

fn audit_many<P: Probability>(config: &AuditConfig, modes: &[Conditioning]) -> Result<Vec<LeakageReport>> {
    let started = Instant::now();
    let e = enumerate_protocol::<P>(&config.params, config.mode, config.mutation, config.budget)?;
    modes
        .iter()
        .map(|&c| report_from(config, &e.distribution, e.assignments, c, started))
        .collect()
}

/// Audits one instance under the requested conditionings, sharing a single
/// enumeration.
pub fn audit_all(config: &AuditConfig, modes: &[Conditioning]) -> Result<Vec<LeakageReport>> {
    if config.exact {
        audit_many::<BigRational>(config, modes)
    } else {
        audit_many::<f64>(config, modes)
    }
}

pub fn audit(config: &AuditConfig, conditioning: Conditioning) -> Result<LeakageReport> {
    Ok(audit_all(config, &[conditioning])?.remove(0))
}
