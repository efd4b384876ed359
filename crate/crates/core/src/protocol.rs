//! Two-file-per-server SPIR over the adder channel.
//!
//! One session runs in four causally ordered phases:
//!
//! 1. both servers send uniform inputs `x1, x2` over `n` channel uses and the
//!    client observes `y = x1 + x2`;
//! 2. the client splits positions into good (`y` in `{0,2}`) and bad
//!    (`y = 1`), carves `G1, G2 ⊂ G` and `B1, B2 ⊂ B`, and hides which of the
//!    two sets it publishes for server `i` is the decodable one;
//! 3. the client aborts unless `| |G|/n - 1/2 | <= n^-t`, otherwise it
//!    publishes all four sets;
//! 4. server `i` one-time pads file `k` with its own input restricted to
//!    `S_k^(i)`; the client unpads the message on its decodable set.

use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::bits::{sample_uniform, BitString, IndexSet};
use crate::channel::{classify_indices, transmit, ChannelOutput, ChannelRound};
use crate::error::{Error, Result};
use crate::model::{FileStore, PartitionStrategy, ProtocolParams, Selection};
use crate::rng::PartyRandomness;

/// Returns `true` (continue) iff `| g_size/n - 1/2 | <= n^-t`.
pub fn abort_check(g_size: usize, n: usize, t: f64) -> bool {
    let deviation = (g_size as f64 / n as f64 - 0.5).abs();
    deviation <= (n as f64).powf(-t)
}

/// `floor(alpha * m)`, robust to `alpha` values like 1/3 that are not exact
/// in binary.
pub fn share(alpha: f64, m: usize) -> usize {
    (alpha * m as f64 + 1e-9).floor() as usize
}

/// Largest file lengths `(floor(alpha M), floor((1 - alpha) M))` for a given `M`.
pub fn max_lengths(m: usize, alpha: f64) -> (usize, usize) {
    (share(alpha, m), share(1.0 - alpha, m))
}

/// Smallest `M = min(|G|, |B|)` over every `|G|` that passes the abort rule.
pub fn min_guaranteed_m(n: usize, t: f64) -> usize {
    (0..=n)
        .filter(|&g| abort_check(g, n, t))
        .map(|g| g.min(n - g))
        .min()
        .unwrap_or(0)
}

/// File lengths that every non-aborted session can carry: the sizing used
/// for rate measurements.
pub fn maximal_lengths(n: usize, t: f64, alpha: f64) -> (usize, usize) {
    max_lengths(min_guaranteed_m(n, t), alpha)
}

/// The client's split of channel positions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexPartition {
    pub good: IndexSet,
    pub bad: IndexSet,
    pub good1: IndexSet,
    pub good2: IndexSet,
    pub bad1: IndexSet,
    pub bad2: IndexSet,
    pub m: usize,
}

fn check_budget(good: &IndexSet, bad: &IndexSet, alpha: f64, ell1: usize, ell2: usize) -> Result<usize> {
    debug_assert!(good.is_disjoint(bad));
    let m = good.len().min(bad.len());
    let (max1, max2) = max_lengths(m, alpha);
    if ell1 > max1 || ell2 > max2 {
        return Err(Error::CapacityShortfall { ell1, ell2, max1, max2 });
    }
    Ok(m)
}

/// Deterministic partition: `G1` is the `ell1` lowest positions of `G`, `G2`
/// the next `ell2`; likewise `B1, B2` in `B`.
pub fn partition(good: &IndexSet, bad: &IndexSet, alpha: f64, ell1: usize, ell2: usize) -> Result<IndexPartition> {
    let m = check_budget(good, bad, alpha, ell1, ell2)?;
    let g = good.as_slice();
    let b = bad.as_slice();
    Ok(IndexPartition {
        good: good.clone(),
        bad: bad.clone(),
        good1: IndexSet::new(g[..ell1].iter().copied()),
        good2: IndexSet::new(g[ell1..ell1 + ell2].iter().copied()),
        bad1: IndexSet::new(b[..ell1].iter().copied()),
        bad2: IndexSet::new(b[ell1..ell1 + ell2].iter().copied()),
        m,
    })
}

/// Uniformly random partition: `(G1, G2)` is a uniform ordered pair of
/// disjoint subsets of `G` with the requested sizes, independently `(B1, B2)`
/// in `B`.
pub fn partition_randomized<R: RngCore + ?Sized>(
    good: &IndexSet,
    bad: &IndexSet,
    alpha: f64,
    ell1: usize,
    ell2: usize,
    rng: &mut R,
) -> Result<IndexPartition> {
    let m = check_budget(good, bad, alpha, ell1, ell2)?;
    let mut pick = |set: &IndexSet| {
        let mut v = set.as_slice().to_vec();
        let (chosen, _) = v.partial_shuffle(rng, ell1 + ell2);
        (
            IndexSet::new(chosen[..ell1].iter().copied()),
            IndexSet::new(chosen[ell1..].iter().copied()),
        )
    };
    let (good1, good2) = pick(good);
    let (bad1, bad2) = pick(bad);
    Ok(IndexPartition {
        good: good.clone(),
        bad: bad.clone(),
        good1,
        good2,
        bad1,
        bad2,
        m,
    })
}

/// Every partition the randomized strategy can return, each equally likely.
pub fn partition_choices(
    good: &IndexSet,
    bad: &IndexSet,
    alpha: f64,
    ell1: usize,
    ell2: usize,
) -> Result<Vec<IndexPartition>> {
    let m = check_budget(good, bad, alpha, ell1, ell2)?;
    let splits_g = ordered_splits(good.as_slice(), ell1, ell2);
    let splits_b = ordered_splits(bad.as_slice(), ell1, ell2);
    let mut out = Vec::with_capacity(splits_g.len() * splits_b.len());
    for (good1, good2) in &splits_g {
        for (bad1, bad2) in &splits_b {
            out.push(IndexPartition {
                good: good.clone(),
                bad: bad.clone(),
                good1: good1.clone(),
                good2: good2.clone(),
                bad1: bad1.clone(),
                bad2: bad2.clone(),
                m,
            });
        }
    }
    Ok(out)
}

fn subsets(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    if items.len() < k {
        return Vec::new();
    }
    let mut with_first = subsets(&items[1..], k - 1);
    for s in &mut with_first {
        s.insert(0, items[0]);
    }
    with_first.extend(subsets(&items[1..], k));
    with_first
}

fn ordered_splits(items: &[usize], a: usize, b: usize) -> Vec<(IndexSet, IndexSet)> {
    let mut out = Vec::new();
    for first in subsets(items, a) {
        let rest: Vec<usize> = items.iter().copied().filter(|p| !first.contains(p)).collect();
        for second in subsets(&rest, b) {
            out.push((IndexSet::new(first.iter().copied()), IndexSet::new(second)));
        }
    }
    out
}

/// The four published sets `S_1^(1), S_2^(1), S_1^(2), S_2^(2)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionSets {
    pub s1_for_server1: IndexSet,
    pub s2_for_server1: IndexSet,
    pub s1_for_server2: IndexSet,
    pub s2_for_server2: IndexSet,
}

impl SelectionSets {
    /// `(S_1^(i), S_2^(i))` for server `i`.
    pub fn for_server(&self, server: u8) -> (&IndexSet, &IndexSet) {
        match server {
            1 => (&self.s1_for_server1, &self.s2_for_server1),
            2 => (&self.s1_for_server2, &self.s2_for_server2),
            other => panic!("no server {other}"),
        }
    }
}

/// Server `i` gets `(G_i, B_i)` when `z_i = 1` and `(B_i, G_i)` when `z_i = 2`,
/// so the set with index `z_i` is always the decodable one.
pub fn build_selection_sets(sel: Selection, p: &IndexPartition) -> SelectionSets {
    let order = |z: usize, g: &IndexSet, b: &IndexSet| match z {
        1 => (g.clone(), b.clone()),
        2 => (b.clone(), g.clone()),
        other => panic!("two-file selection must be 1 or 2, got {other}"),
    };
    let (s1_for_server1, s2_for_server1) = order(sel.z1, &p.good1, &p.bad1);
    let (s1_for_server2, s2_for_server2) = order(sel.z2, &p.good2, &p.bad2);
    SelectionSets {
        s1_for_server1,
        s2_for_server1,
        s1_for_server2,
        s2_for_server2,
    }
}

/// `(x[S1] ⊕ f1, x[S2] ⊕ f2)`.
pub fn server_mask(
    x: &BitString,
    sets: (&IndexSet, &IndexSet),
    f1: &BitString,
    f2: &BitString,
) -> Result<(BitString, BitString)> {
    Ok((x.subselect(sets.0)?.xor(f1)?, x.subselect(sets.1)?.xor(f2)?))
}

/// Reads the server input off the channel output on `set` (0 for `y = 0`,
/// 1 for `y = 2`) and removes it from `message`.
pub fn client_recover(y: &ChannelOutput, set: &IndexSet, message: &BitString) -> Result<BitString> {
    let mut pad = BitString::zeros(set.len());
    for (k, &pos) in set.iter().enumerate() {
        if pos == 0 || pos > y.len() {
            return Err(Error::IndexOutOfRange {
                index: pos,
                len: y.len(),
            });
        }
        match y.at(pos) {
            0 => {}
            2 => pad.set(k, true),
            _ => return Err(Error::UndecodablePosition { index: pos }),
        }
    }
    pad.xor(message)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AbortReason {
    /// `|G|/n` strayed more than `n^-t` from 1/2.
    Deviation,
    /// The realization cannot carry the requested file lengths.
    CapacityShortfall,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerMessages {
    pub m11: BitString,
    pub m12: BitString,
    pub m21: BitString,
    pub m22: BitString,
}

/// Everything one session produced. On abort only `y` is present: the
/// client saw the channel but nothing was published.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub aborted: bool,
    pub abort_reason: Option<AbortReason>,
    pub y: ChannelOutput,
    pub sets: Option<SelectionSets>,
    pub messages: Option<ServerMessages>,
    pub recovered: Option<(BitString, BitString)>,
    /// Only set by the [`Mutation::SelectionDisclosure`] variant.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub disclosed_selection: Option<usize>,
}

impl Transcript {
    fn aborted_with(y: ChannelOutput, reason: AbortReason) -> Self {
        Transcript {
            aborted: true,
            abort_reason: Some(reason),
            y,
            sets: None,
            messages: None,
            recovered: None,
            disclosed_selection: None,
        }
    }

    /// Bits sent publicly by server 1 and server 2.
    pub fn public_bits(&self) -> (usize, usize) {
        self.messages
            .as_ref()
            .map_or((0, 0), |m| (m.m11.len() + m.m12.len(), m.m21.len() + m.m22.len()))
    }
}

/// Deliberately broken protocol variants used to show that the privacy
/// oracle notices violations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mutation {
    #[default]
    None,
    /// Server 1 pads both files with `x1[S_1^(1)]`.
    MaskReuse,
    /// The client also publishes `z1`.
    SelectionDisclosure,
    /// Server 2 sends its files unpadded.
    NoPad,
}

impl std::str::FromStr for Mutation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Mutation::None),
            "mask-reuse" => Ok(Mutation::MaskReuse),
            "leak-selection" | "selection-disclosure" => Ok(Mutation::SelectionDisclosure),
            "no-pad" => Ok(Mutation::NoPad),
            other => Err(Error::config(format!(
                "unknown mutation `{other}` (expected none, mask-reuse, leak-selection, no-pad)"
            ))),
        }
    }
}

fn check_session_inputs(params: &ProtocolParams, files1: &FileStore, files2: &FileStore, sel: Selection) -> Result<()> {
    params.validate()?;
    if params.l1 != 2 || params.l2 != 2 || files1.file_count() != 2 || files2.file_count() != 2 {
        return Err(Error::config("the base protocol needs exactly two files per server"));
    }
    if files1.file_len() != params.ell1 || files2.file_len() != params.ell2 {
        return Err(Error::config(format!(
            "file lengths ({}, {}) differ from ell = ({}, {})",
            files1.file_len(),
            files2.file_len(),
            params.ell1,
            params.ell2
        )));
    }
    sel.validate(2, 2)
}

/// Runs phases 2-4 on a given channel realization. `choose` yields the
/// client's partition (or the shortfall error).
pub(crate) fn execute(
    params: &ProtocolParams,
    files1: &FileStore,
    files2: &FileStore,
    sel: Selection,
    round: &ChannelRound,
    choose: impl FnOnce(&IndexSet, &IndexSet) -> Result<IndexPartition>,
    mutation: Mutation,
) -> Result<Transcript> {
    let y = round.y.clone();
    let (good, bad) = classify_indices(y.symbols())?;
    if params.abort_rule && !abort_check(good.len(), params.n, params.t) {
        return Ok(Transcript::aborted_with(y, AbortReason::Deviation));
    }
    let part = match choose(&good, &bad) {
        Ok(p) => p,
        Err(Error::CapacityShortfall { .. }) => return Ok(Transcript::aborted_with(y, AbortReason::CapacityShortfall)),
        Err(e) => return Err(e),
    };
    let sets = build_selection_sets(sel, &part);

    let (m11, m12) = match mutation {
        Mutation::MaskReuse => {
            let pad = round.x1.subselect(&sets.s1_for_server1)?;
            (pad.xor(files1.file(1))?, pad.xor(files1.file(2))?)
        }
        _ => server_mask(&round.x1, sets.for_server(1), files1.file(1), files1.file(2))?,
    };
    let (m21, m22) = match mutation {
        Mutation::NoPad => (files2.file(1).clone(), files2.file(2).clone()),
        _ => server_mask(&round.x2, sets.for_server(2), files2.file(1), files2.file(2))?,
    };
    let messages = ServerMessages { m11, m12, m21, m22 };

    let (set1, msg1) = match sel.z1 {
        1 => (&sets.s1_for_server1, &messages.m11),
        _ => (&sets.s2_for_server1, &messages.m12),
    };
    let (set2, msg2) = match sel.z2 {
        1 => (&sets.s1_for_server2, &messages.m21),
        _ => (&sets.s2_for_server2, &messages.m22),
    };
    let recovered = (client_recover(&y, set1, msg1)?, client_recover(&y, set2, msg2)?);

    Ok(Transcript {
        aborted: false,
        abort_reason: None,
        y,
        sets: Some(sets),
        messages: Some(messages),
        recovered: Some(recovered),
        disclosed_selection: (mutation == Mutation::SelectionDisclosure).then_some(sel.z1),
    })
}

fn choose_partition<R: RngCore + ?Sized>(
    params: &ProtocolParams,
    good: &IndexSet,
    bad: &IndexSet,
    client_rng: &mut R,
) -> Result<IndexPartition> {
    match params.partition {
        PartitionStrategy::LowestIndex => partition(good, bad, params.alpha, params.ell1, params.ell2),
        PartitionStrategy::Randomized => {
            partition_randomized(good, bad, params.alpha, params.ell1, params.ell2, client_rng)
        }
    }
}

/// One session using sub-stream `round` of every party's seed.
pub(crate) fn run_round(
    params: &ProtocolParams,
    files1: &FileStore,
    files2: &FileStore,
    sel: Selection,
    rnd: &PartyRandomness,
    round: u64,
) -> Result<Transcript> {
    check_session_inputs(params, files1, files2, sel)?;
    let x1 = sample_uniform(params.n, &mut rnd.server(1, round));
    let x2 = sample_uniform(params.n, &mut rnd.server(2, round));
    let channel = transmit(&x1, &x2)?;
    let mut client = rnd.client(round);
    execute(
        params,
        files1,
        files2,
        sel,
        &channel,
        |g, b| choose_partition(params, g, b, &mut client),
        Mutation::None,
    )
}

/// Runs a full two-file session with fresh channel inputs.
pub fn run_session(
    params: &ProtocolParams,
    files1: &FileStore,
    files2: &FileStore,
    sel: Selection,
    rnd: &PartyRandomness,
) -> Result<Transcript> {
    run_round(params, files1, files2, sel, rnd, 1)
}

/// Runs a session on a caller-supplied channel realization instead of fresh
/// uniform inputs. Meant for reaching specific branches in tests; sessions
/// driven this way say nothing about privacy.
pub fn run_session_on_channel(
    params: &ProtocolParams,
    files1: &FileStore,
    files2: &FileStore,
    sel: Selection,
    rnd: &PartyRandomness,
    x1: &BitString,
    x2: &BitString,
) -> Result<Transcript> {
    check_session_inputs(params, files1, files2, sel)?;
    if x1.len() != params.n {
        return Err(Error::LengthMismatch {
            left: x1.len(),
            right: params.n,
        });
    }
    let channel = transmit(x1, x2)?;
    let mut client = rnd.client(1);
    execute(
        params,
        files1,
        files2,
        sel,
        &channel,
        |g, b| choose_partition(params, g, b, &mut client),
        Mutation::None,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    fn twelve_use_sets() -> (IndexSet, IndexSet) {
        let y: ChannelOutput = "102012011211".parse().unwrap();
        classify_indices(y.symbols()).unwrap()
    }

    #[test]
    fn abort_check_examples() {
        assert!(abort_check(50, 100, 0.25));
        assert!(!abort_check(90, 100, 0.25));
    }

    #[test]
    fn abort_check_boundary_at_n_10000() {
        // Brute evaluation of the inequality: threshold 10000^-0.4 = 0.0251188...
        // so |g - 5000| <= 251.188..., i.e. g in [4749, 5251].
        let threshold = 10000f64.powf(-0.4);
        let admissible: Vec<usize> = (0..=10000)
            .filter(|&g| ((g as f64) / 10000.0 - 0.5).abs() <= threshold)
            .collect();
        assert_eq!((admissible[0], *admissible.last().unwrap()), (4749, 5251));
        for g in [4748, 4749, 5000, 5251, 5252] {
            assert_eq!(abort_check(g, 10000, 0.4), (4749..=5251).contains(&g), "g = {g}");
        }
    }

    #[test]
    fn twelve_use_partition() {
        let (g, b) = twelve_use_sets();
        let p = partition(&g, &b, 1.0 / 3.0, 2, 4).unwrap();
        assert_eq!(p.m, 6);
        assert_eq!(p.good1, IndexSet::new([2, 3]));
        assert_eq!(p.good2, IndexSet::new([4, 6, 7, 10]));
        assert_eq!(p.bad1, IndexSet::new([1, 5]));
        assert_eq!(p.bad2, IndexSet::new([8, 9, 11, 12]));
    }

    #[test]
    fn partition_degenerate_shares() {
        let (g, b) = twelve_use_sets();
        let p = partition(&g, &b, 0.0, 0, 6).unwrap();
        assert!(p.good1.is_empty() && p.bad1.is_empty());
        assert_eq!(p.good2, g);

        let empty = IndexSet::default();
        let all = IndexSet::full(5);
        let p = partition(&empty, &all, 0.5, 0, 0).unwrap();
        assert_eq!(p.m, 0);
        assert!(matches!(
            partition(&empty, &all, 0.5, 1, 0),
            Err(Error::CapacityShortfall { max1: 0, max2: 0, .. })
        ));
    }

    #[test]
    fn partition_rejects_oversized_requests() {
        let (g, b) = twelve_use_sets();
        assert!(matches!(
            partition(&g, &b, 1.0 / 3.0, 3, 4),
            Err(Error::CapacityShortfall { max1: 2, max2: 4, .. })
        ));
        assert!(partition(&g, &b, 1.0 / 3.0, 2, 5).is_err());
    }

    #[test]
    fn selection_set_table() {
        let (g, b) = twelve_use_sets();
        let p = partition(&g, &b, 1.0 / 3.0, 2, 4).unwrap();
        let s = build_selection_sets(Selection::new(1, 2), &p);
        assert_eq!((&s.s1_for_server1, &s.s2_for_server1), (&p.good1, &p.bad1));
        assert_eq!(s.s1_for_server2, IndexSet::new([8, 9, 11, 12]));
        assert_eq!(s.s2_for_server2, IndexSet::new([4, 6, 7, 10]));
        let s = build_selection_sets(Selection::new(2, 1), &p);
        assert_eq!((&s.s1_for_server1, &s.s2_for_server1), (&p.bad1, &p.good1));
        assert_eq!((&s.s1_for_server2, &s.s2_for_server2), (&p.good2, &p.bad2));
    }

    #[test]
    fn randomized_partition_is_well_formed_and_varies() {
        let (g, b) = twelve_use_sets();
        let mut seen = std::collections::BTreeSet::new();
        for seed in 0..50 {
            let p = partition_randomized(&g, &b, 0.5, 3, 3, &mut stream(seed, 0)).unwrap();
            assert!(p.good1.is_subset(&g) && p.good2.is_subset(&g));
            assert!(p.bad1.is_subset(&b) && p.bad2.is_subset(&b));
            assert!(p.good1.is_disjoint(&p.good2) && p.bad1.is_disjoint(&p.bad2));
            assert_eq!((p.good1.len(), p.good2.len(), p.bad1.len(), p.bad2.len()), (3, 3, 3, 3));
            seen.insert(p.good1.clone());
        }
        assert!(seen.len() > 5);
    }

    #[test]
    fn partition_choices_counts() {
        let (g, b) = twelve_use_sets();
        // C(6,2) * C(4,4) ordered splits on each side.
        assert_eq!(partition_choices(&g, &b, 1.0 / 3.0, 2, 4).unwrap().len(), 15 * 15);
        // C(6,1) * C(5,1) per side.
        assert_eq!(partition_choices(&g, &b, 0.5, 1, 1).unwrap().len(), 30 * 30);
        let all = partition_choices(&g, &b, 0.5, 1, 1).unwrap();
        assert!(all.iter().all(|p| p.good1.is_disjoint(&p.good2)));
    }

    #[test]
    fn server_mask_identities() {
        let x: BitString = "110100".parse().unwrap();
        let s1 = IndexSet::new([1, 3]);
        let s2 = IndexSet::new([2, 6]);
        let f2: BitString = "11".parse().unwrap();
        let (m1, m2) = server_mask(&x, (&s1, &s2), &BitString::zeros(2), &f2).unwrap();
        assert_eq!(m1, x.subselect(&s1).unwrap());
        assert_eq!(m2, "01".parse().unwrap());
        let f1: BitString = "01".parse().unwrap();
        let (m1, m2) = server_mask(&BitString::zeros(6), (&s1, &s2), &f1, &f2).unwrap();
        assert_eq!((m1, m2), (f1.clone(), f2));
        assert!(server_mask(&x, (&s1, &s2), &BitString::zeros(3), &f1).is_err());
    }

    #[test]
    fn client_recover_reads_inputs_off_the_output() {
        let y: ChannelOutput = "0021".parse().unwrap();
        let m: BitString = "10".parse().unwrap();
        assert_eq!(client_recover(&y, &IndexSet::new([1, 2]), &m).unwrap(), m);
        assert_eq!(
            client_recover(&y, &IndexSet::new([2, 3]), &m).unwrap(),
            "11".parse().unwrap()
        );
        let y2: ChannelOutput = "22".parse().unwrap();
        assert_eq!(
            client_recover(&y2, &IndexSet::new([1, 2]), &m).unwrap(),
            m.xor(&BitString::ones(2)).unwrap()
        );
        assert_eq!(
            client_recover(&y, &IndexSet::new([4]), &"1".parse().unwrap()),
            Err(Error::UndecodablePosition { index: 4 })
        );
    }

    fn stores(ell1: usize, ell2: usize, seed: u64) -> (FileStore, FileStore) {
        let mut rng = stream(seed, 99);
        (
            FileStore::random(1, 2, ell1, &mut rng).unwrap(),
            FileStore::random(2, 2, ell2, &mut rng).unwrap(),
        )
    }

    #[test]
    fn twelve_use_end_to_end() {
        // x1 chosen freely; x2 forced so that y matches the twelve-use example.
        let y = [1u8, 0, 2, 0, 1, 2, 0, 1, 1, 2, 1, 1];
        let x1: BitString = "101001010110".parse().unwrap();
        let x2 = BitString::from_bits(y.iter().zip(x1.iter()).map(|(&s, a)| s - a as u8 == 1));
        let (f1, f2) = stores(2, 4, 3);
        let params = ProtocolParams::two_file(12, 0.25, 1.0 / 3.0, 2, 4).with_partition(PartitionStrategy::LowestIndex);
        for sel in Selection::all(2, 2) {
            let tr = run_session_on_channel(&params, &f1, &f2, sel, &PartyRandomness::new(1, 2, 3), &x1, &x2).unwrap();
            assert_eq!(tr.y.to_string(), "102012011211");
            let (r1, r2) = tr.recovered.unwrap();
            assert_eq!((&r1, &r2), (f1.file(sel.z1), f2.file(sel.z2)));
        }
    }

    #[test]
    fn forced_all_ones_output_aborts() {
        let (f1, f2) = stores(1, 1, 4);
        // 16^-0.3 ~ 0.435 < 1/2, so |G| = 0 is rejected.
        let params = ProtocolParams::two_file(16, 0.3, 0.5, 1, 1);
        let tr = run_session_on_channel(
            &params,
            &f1,
            &f2,
            Selection::new(1, 1),
            &PartyRandomness::new(1, 2, 3),
            &BitString::ones(16),
            &BitString::zeros(16),
        )
        .unwrap();
        assert!(tr.aborted);
        assert_eq!(tr.abort_reason, Some(AbortReason::Deviation));
        assert!(tr.sets.is_none() && tr.messages.is_none() && tr.recovered.is_none());
        assert_eq!(tr.y.to_string(), "1".repeat(16));

        // With the rule disabled the same output fails on capacity instead.
        let tr = run_session_on_channel(
            &params.clone().without_abort_rule(),
            &f1,
            &f2,
            Selection::new(1, 1),
            &PartyRandomness::new(1, 2, 3),
            &BitString::ones(16),
            &BitString::zeros(16),
        )
        .unwrap();
        assert_eq!(tr.abort_reason, Some(AbortReason::CapacityShortfall));
    }

    #[test]
    fn empty_files_trivially_succeed() {
        let (f1, f2) = stores(0, 0, 5);
        let params = ProtocolParams::two_file(64, 0.4, 0.5, 0, 0);
        let tr = run_session(&params, &f1, &f2, Selection::new(2, 1), &PartyRandomness::new(4, 5, 6)).unwrap();
        assert!(!tr.aborted);
        let (r1, r2) = tr.recovered.unwrap();
        assert!(r1.is_empty() && r2.is_empty());
    }

    #[test]
    fn configuration_errors_precede_channel_use() {
        let (f1, f2) = stores(3, 3, 6);
        let rnd = PartyRandomness::new(1, 1, 1);
        let params = ProtocolParams::two_file(64, 0.4, 0.5, 4, 3);
        assert!(matches!(
            run_session(&params, &f1, &f2, Selection::new(1, 1), &rnd),
            Err(Error::Config(_))
        ));
        let params = ProtocolParams::two_file(64, 0.6, 0.5, 3, 3);
        assert!(matches!(
            run_session(&params, &f1, &f2, Selection::new(1, 1), &rnd),
            Err(Error::Config(_))
        ));
        let params = ProtocolParams::two_file(64, 0.4, 0.5, 3, 3);
        assert!(matches!(
            run_session(&params, &f1, &f2, Selection::new(3, 1), &rnd),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn maximal_lengths_never_fall_short() {
        for n in [16usize, 100, 1000, 4096] {
            for t in [0.2, 0.4, 0.49] {
                let m_min = min_guaranteed_m(n, t);
                for g in (0..=n).filter(|&g| abort_check(g, n, t)) {
                    assert!(g.min(n - g) >= m_min);
                }
            }
        }
        // n = 2^16, t = 0.4: |G| >= 32768 - 776.04..., so M >= 31992.
        assert_eq!(min_guaranteed_m(1 << 16, 0.4), 31992);
        assert_eq!(maximal_lengths(1 << 16, 0.4, 0.5), (15996, 15996));
    }

    #[test]
    fn session_is_deterministic() {
        let (f1, f2) = stores(40, 30, 7);
        let params = ProtocolParams::two_file(512, 0.4, 0.5, 40, 30);
        let rnd = PartyRandomness::new(10, 20, 30);
        let a = run_session(&params, &f1, &f2, Selection::new(2, 2), &rnd).unwrap();
        let b = run_session(&params, &f1, &f2, Selection::new(2, 2), &rnd).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn abort_rate_respects_chebyshev_bound() {
        let (n, t, trials) = (64usize, 0.3, 2000u64);
        let (f1, f2) = stores(0, 0, 8);
        let params = ProtocolParams::two_file(n, t, 0.5, 0, 0);
        let aborts = (0..trials)
            .filter(|&k| {
                run_session(
                    &params,
                    &f1,
                    &f2,
                    Selection::new(1, 1),
                    &PartyRandomness::new(k, k + 1, k + 2),
                )
                .unwrap()
                .aborted
            })
            .count();
        let bound = (n as f64).powf(2.0 * t - 1.0) / 4.0;
        let slack = 3.0 * (bound * (1.0 - bound) / trials as f64).sqrt();
        let rate = aborts as f64 / trials as f64;
        assert!(rate <= bound + slack, "rate {rate} bound {bound}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn honest_sessions_recover_and_hide_set_roles(
            seeds in any::<(u64, u64, u64)>(),
            z1 in 1usize..=2,
            z2 in 1usize..=2,
            randomized in any::<bool>(),
        ) {
            let n = 256;
            let (ell1, ell2) = maximal_lengths(n, 0.4, 0.5);
            let (f1, f2) = stores(ell1, ell2, seeds.0 ^ 0x55);
            let strategy = if randomized { PartitionStrategy::Randomized } else { PartitionStrategy::LowestIndex };
            let params = ProtocolParams::two_file(n, 0.4, 0.5, ell1, ell2).with_partition(strategy);
            let rnd = PartyRandomness::new(seeds.0, seeds.1, seeds.2);
            let sel = Selection::new(z1, z2);
            let tr = run_session(&params, &f1, &f2, sel, &rnd).unwrap();
            if !tr.aborted {
                let (r1, r2) = tr.recovered.clone().unwrap();
                prop_assert_eq!(&r1, f1.file(z1));
                prop_assert_eq!(&r2, f2.file(z2));
                let sets = tr.sets.unwrap();
                for (server, z) in [(1u8, z1), (2u8, z2)] {
                    let (s1, s2) = sets.for_server(server);
                    prop_assert_eq!(s1.len(), s2.len());
                    let hidden = if z == 1 { s2 } else { s1 };
                    prop_assert!(hidden.iter().all(|&p| tr.y.at(p) == 1));
                }
                let m = tr.messages.unwrap();
                prop_assert_eq!((m.m11.len(), m.m12.len()), (ell1, ell1));
                prop_assert_eq!((m.m21.len(), m.m22.len()), (ell2, ell2));
            }
        }

        #[test]
        fn mask_then_recover_round_trips(
            bits in proptest::collection::vec(any::<bool>(), 24),
            f in proptest::collection::vec(any::<bool>(), 4),
        ) {
            // Decodable positions: force x2 = x1 on the first set.
            let x1 = BitString::from_bits(bits.clone());
            let x2 = BitString::from_bits(bits.iter().enumerate().map(|(i, &b)| if i < 12 { b } else { !b }));
            let round = transmit(&x1, &x2).unwrap();
            let s_good = IndexSet::new([1, 4, 7, 10]);
            let s_bad = IndexSet::new([13, 16, 19, 22]);
            let f1 = BitString::from_bits(f);
            let (m1, _) = server_mask(&x1, (&s_good, &s_bad), &f1, &BitString::zeros(4)).unwrap();
            prop_assert_eq!(client_recover(&round.y, &s_good, &m1).unwrap(), f1);
        }
    }
}
