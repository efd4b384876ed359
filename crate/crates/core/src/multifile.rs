//! Retrieval from `L1 x L2` files by repeated two-file sessions.
//!
//! Each server links its files through a chain of fresh one-time pads:
//!
//! ```text
//! (F1, S1), (F2 ⊕ S1, S1 ⊕ S2), ..., (F_{L-1} ⊕ S_{L-2}, S_{L-2} ⊕ F_L)
//! ```
//!
//! and offers one pair per round. Taking the mask branch strictly before the
//! target position and the file branch from then on lets the client XOR its
//! picks down to exactly one file. With unequal file counts every file is
//! cut into parts so both servers need the same number of rounds.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::bits::{sample_uniform, BitString};
use crate::error::{Error, Result};
use crate::model::{FileStore, ProtocolParams, Reduction, Selection};
use crate::protocol::{run_round, Transcript};
use crate::rng::PartyRandomness;

/// Values that can be chained: real bit strings, or symbolic XOR expressions
/// used to print and check request schedules.
pub trait ChainElement: Clone {
    fn xor(&self, other: &Self) -> Result<Self>;

    /// Bit length, when the element has one.
    fn bit_len(&self) -> Option<usize>;
}

impl ChainElement for BitString {
    fn xor(&self, other: &Self) -> Result<Self> {
        BitString::xor(self, other)
    }

    fn bit_len(&self) -> Option<usize> {
        Some(self.len())
    }
}

/// A symbolic atom of a chain.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Term {
    /// File `file` of `server`, optionally one of its parts.
    File {
        server: u8,
        file: usize,
        part: Option<usize>,
    },
    /// Mask of `server` (`S` for server 1, `T` for server 2). `index` is
    /// `None` when the server draws a single mask.
    Mask { server: u8, index: Option<usize> },
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Term::File {
                server,
                file,
                part: None,
            } => write!(f, "F_{{{server},{file}}}"),
            Term::File {
                server,
                file,
                part: Some(p),
            } => write!(f, "F_{{{server},{file},{p}}}"),
            Term::Mask { server, index } => {
                f.write_str(if server == 1 { "S" } else { "T" })?;
                match index {
                    Some(i) => write!(f, "{i}"),
                    None => Ok(()),
                }
            }
        }
    }
}

/// XOR of distinct terms. Files print before masks.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct XorExpr(BTreeSet<Term>);

impl XorExpr {
    pub fn term(t: Term) -> Self {
        XorExpr(BTreeSet::from([t]))
    }

    pub fn terms(&self) -> impl Iterator<Item = &Term> {
        self.0.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_empty()
    }
}

impl ChainElement for XorExpr {
    fn xor(&self, other: &Self) -> Result<Self> {
        Ok(XorExpr(self.0.symmetric_difference(&other.0).cloned().collect()))
    }

    fn bit_len(&self) -> Option<usize> {
        None
    }
}

impl fmt::Display for XorExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("0");
        }
        for (k, t) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(" ⊕ ")?;
            }
            write!(f, "{t}")?;
        }
        Ok(())
    }
}

/// The `L - 1` pairs offered by one server along one chain.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainedPairs<E> {
    pub server: u8,
    pub pairs: Vec<(E, E)>,
}

/// Builds the chain over `items` (files or parts, in file order) with
/// `items.len() - 2` masks.
pub fn build_chain<E: ChainElement>(server: u8, items: &[E], masks: &[E]) -> Result<ChainedPairs<E>> {
    let l = items.len();
    if l < 2 {
        return Err(Error::config(format!("a chain needs at least 2 files, got {l}")));
    }
    if masks.len() != l - 2 {
        return Err(Error::config(format!(
            "{l} files need {} masks, got {}",
            l - 2,
            masks.len()
        )));
    }
    if let Some(len) = items[0].bit_len() {
        for e in items.iter().chain(masks) {
            let other = e.bit_len().unwrap_or(len);
            if other != len {
                return Err(Error::LengthMismatch {
                    left: len,
                    right: other,
                });
            }
        }
    }
    if l == 2 {
        return Ok(ChainedPairs {
            server,
            pairs: vec![(items[0].clone(), items[1].clone())],
        });
    }
    let mut pairs = Vec::with_capacity(l - 1);
    pairs.push((items[0].clone(), masks[0].clone()));
    for t in 2..=l - 2 {
        pairs.push((items[t - 1].xor(&masks[t - 2])?, masks[t - 2].xor(&masks[t - 1])?));
    }
    pairs.push((items[l - 2].xor(&masks[l - 3])?, masks[l - 3].xor(&items[l - 1])?));
    Ok(ChainedPairs { server, pairs })
}

/// Branch picked at each chain position `t = 1..L-1` to end up with file `z`:
/// 2 while `t < z`, 1 afterwards.
pub fn round_selection(z: usize, l: usize) -> Vec<usize> {
    (1..l).map(|t| if t < z { 2 } else { 1 }).collect()
}

/// Folds the per-position picks `chosen[0..L-1]` back into file `z`.
pub fn reconstruct<E: ChainElement>(z: usize, l: usize, chosen: &[E]) -> Result<E> {
    if chosen.len() != l - 1 || z == 0 || z > l {
        return Err(Error::config(format!(
            "reconstruct needs {} picks and 1 <= z <= {l}, got {} picks and z = {z}",
            l - 1,
            chosen.len()
        )));
    }
    let last = if z < l { z } else { l - 1 };
    let mut acc = chosen[last - 1].clone();
    for c in &chosen[..last - 1] {
        acc = acc.xor(c)?;
    }
    Ok(acc)
}

/// Which chain position and part each server serves in round `k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundPairing {
    pub k: usize,
    /// `(t, i)`: chain position and part index at server 1.
    pub server1: (usize, usize),
    /// `(t, j)`: chain position and part index at server 2.
    pub server2: (usize, usize),
}

/// Round order for the general reduction: server 1 walks part by part
/// (`k = (i-1)(L1-1) + t`), server 2 walks chain position by chain position
/// (`k = (t-1)(L1-1) + j`).
pub fn flatten_rounds(l1: usize, l2: usize) -> Vec<RoundPairing> {
    let rounds = (l1 - 1) * (l2 - 1);
    (1..=rounds)
        .map(|k| {
            let a = (k - 1) / (l1 - 1);
            let b = (k - 1) % (l1 - 1);
            RoundPairing {
                k,
                server1: (b + 1, a + 1),
                server2: (a + 1, b + 1),
            }
        })
        .collect()
}

/// Shape of a multifile run: how files are cut and how rounds pair up.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultifilePlan {
    pub l1: usize,
    pub l2: usize,
    pub reduction: Reduction,
    /// Parts per file at server 1 and server 2.
    pub parts1: usize,
    pub parts2: usize,
    pub rounds: Vec<RoundPairing>,
}

impl MultifilePlan {
    pub fn new(l1: usize, l2: usize, reduction: Reduction) -> Result<Self> {
        if l1 < 2 || l2 < 2 {
            return Err(Error::config(format!("need L1, L2 >= 2, got {l1}, {l2}")));
        }
        let reduction = reduction.resolve(l1, l2)?;
        Ok(match reduction {
            Reduction::EqualCounts => MultifilePlan {
                l1,
                l2,
                reduction,
                parts1: 1,
                parts2: 1,
                rounds: (1..l1)
                    .map(|k| RoundPairing {
                        k,
                        server1: (k, 1),
                        server2: (k, 1),
                    })
                    .collect(),
            },
            _ => MultifilePlan {
                l1,
                l2,
                reduction,
                parts1: l2 - 1,
                parts2: l1 - 1,
                rounds: flatten_rounds(l1, l2),
            },
        })
    }

    pub fn round_count(&self) -> usize {
        self.rounds.len()
    }

    fn count(&self, server: u8) -> usize {
        if server == 1 {
            self.l1
        } else {
            self.l2
        }
    }

    fn parts(&self, server: u8) -> usize {
        if server == 1 {
            self.parts1
        } else {
            self.parts2
        }
    }

    /// Masks each server draws: `L - 2` per part.
    pub fn mask_count(&self, server: u8) -> usize {
        (self.count(server) - 2) * self.parts(server)
    }

    /// `(t, part)` served by `server` in round `k` (1-based).
    pub fn position(&self, server: u8, k: usize) -> (usize, usize) {
        let r = &self.rounds[k - 1];
        if server == 1 {
            r.server1
        } else {
            r.server2
        }
    }

    /// Symbolic chains of `server`, one per part.
    pub fn symbolic_chains(&self, server: u8) -> Vec<ChainedPairs<XorExpr>> {
        let l = self.count(server);
        let parts = self.parts(server);
        let single_mask = self.mask_count(server) == 1;
        (1..=parts)
            .map(|p| {
                let files: Vec<XorExpr> = (1..=l)
                    .map(|file| {
                        XorExpr::term(Term::File {
                            server,
                            file,
                            part: (self.reduction == Reduction::General).then_some(p),
                        })
                    })
                    .collect();
                let masks: Vec<XorExpr> = (1..=l - 2)
                    .map(|t| {
                        XorExpr::term(Term::Mask {
                            server,
                            index: (!single_mask).then_some((p - 1) * (l - 2) + t),
                        })
                    })
                    .collect();
                build_chain(server, &files, &masks).expect("symbolic chains are well formed")
            })
            .collect()
    }

    /// Symbolic pair offered by `server` in each round.
    pub fn offered(&self, server: u8) -> Vec<(XorExpr, XorExpr)> {
        let chains = self.symbolic_chains(server);
        (1..=self.round_count())
            .map(|k| {
                let (t, p) = self.position(server, k);
                chains[p - 1].pairs[t - 1].clone()
            })
            .collect()
    }

    /// Branch `(z1_k, z2_k)` the client requests in every round.
    pub fn round_selections(&self, sel: Selection) -> Vec<Selection> {
        let b1 = round_selection(sel.z1, self.l1);
        let b2 = round_selection(sel.z2, self.l2);
        (1..=self.round_count())
            .map(|k| Selection::new(b1[self.position(1, k).0 - 1], b2[self.position(2, k).0 - 1]))
            .collect()
    }

    /// What the client asks each server for in each round, symbolically.
    pub fn requests(&self, sel: Selection) -> Vec<(XorExpr, XorExpr)> {
        let o1 = self.offered(1);
        let o2 = self.offered(2);
        self.round_selections(sel)
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let pick = |pair: &(XorExpr, XorExpr), z: usize| if z == 1 { pair.0.clone() } else { pair.1.clone() };
                (pick(&o1[k], s.z1), pick(&o2[k], s.z2))
            })
            .collect()
    }

    /// Request table for `server`: row `k` lists the request of round `k`
    /// for every target file `z = 1..L`.
    pub fn request_table(&self, server: u8) -> Vec<Vec<String>> {
        let l = self.count(server);
        let columns: Vec<Vec<XorExpr>> = (1..=l)
            .map(|z| {
                let sel = if server == 1 {
                    Selection::new(z, 1)
                } else {
                    Selection::new(1, z)
                };
                self.requests(sel)
                    .into_iter()
                    .map(|(a, b)| if server == 1 { a } else { b })
                    .collect()
            })
            .collect();
        (0..self.round_count())
            .map(|k| columns.iter().map(|c| c[k].to_string()).collect())
            .collect()
    }

    /// Pair matrix of `server`: for server 1 rows are parts and columns are
    /// chain positions; for server 2 rows are chain positions and columns
    /// are parts.
    pub fn pair_matrix(&self, server: u8) -> Vec<Vec<String>> {
        let chains = self.symbolic_chains(server);
        let render = |(a, b): &(XorExpr, XorExpr)| format!("({a}, {b})");
        let l = self.count(server);
        if server == 1 {
            chains.iter().map(|c| c.pairs.iter().map(render).collect()).collect()
        } else {
            (0..l - 1)
                .map(|t| chains.iter().map(|c| render(&c.pairs[t])).collect())
                .collect()
        }
    }
}

/// Static description of a multifile run, written ahead of the rounds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultifileHeader {
    pub l1: usize,
    pub l2: usize,
    pub reduction: Reduction,
    pub rounds: usize,
    pub parts1: usize,
    pub parts2: usize,
    pub part_len1: usize,
    pub part_len2: usize,
    pub pairing: Vec<RoundPairing>,
    /// Symbolic pair offered by each server in each round.
    pub offered: Vec<[String; 4]>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultifileTranscript {
    pub header: MultifileHeader,
    /// What the client asked each server for, per round.
    pub requests: Vec<(String, String)>,
    pub round_selections: Vec<Selection>,
    /// Completed rounds. On abort the last entry is the aborting round.
    pub rounds: Vec<Transcript>,
    pub aborted: bool,
    pub abort_round: Option<usize>,
    pub recovered: Option<(BitString, BitString)>,
}

impl MultifileTranscript {
    /// Public bits sent by server 1 and server 2 over all rounds.
    pub fn public_bits(&self) -> (usize, usize) {
        self.rounds.iter().fold((0, 0), |(a, b), t| {
            let (x, y) = t.public_bits();
            (a + x, b + y)
        })
    }

    /// Channel blocks used so far.
    pub fn channel_blocks(&self) -> usize {
        self.rounds.len()
    }
}

fn split_store(store: &FileStore, parts: usize) -> Result<Vec<Vec<BitString>>> {
    store.files().iter().map(|f| f.split(parts)).collect()
}

/// Splits, chains and runs every round, then rebuilds the two selected files.
pub fn run_multifile(
    params: &ProtocolParams,
    files1: &FileStore,
    files2: &FileStore,
    sel: Selection,
    rnd: &PartyRandomness,
) -> Result<MultifileTranscript> {
    params.validate()?;
    sel.validate(params.l1, params.l2)?;
    if files1.file_count() != params.l1 || files2.file_count() != params.l2 {
        return Err(Error::config(format!(
            "servers hold ({}, {}) files but L = ({}, {})",
            files1.file_count(),
            files2.file_count(),
            params.l1,
            params.l2
        )));
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
    let plan = MultifilePlan::new(params.l1, params.l2, params.reduction)?;
    if !params.ell1.is_multiple_of(plan.parts1) || !params.ell2.is_multiple_of(plan.parts2) {
        return Err(Error::config(format!(
            "file lengths ({}, {}) must be divisible by the part counts ({}, {})",
            params.ell1, params.ell2, plan.parts1, plan.parts2
        )));
    }
    let part_len1 = params.ell1 / plan.parts1;
    let part_len2 = params.ell2 / plan.parts2;

    // parts[f][p] -> chains[p] over files
    let build =
        |server: u8, store: &FileStore, parts: usize, part_len: usize| -> Result<Vec<ChainedPairs<BitString>>> {
            let split = split_store(store, parts)?;
            let l = store.file_count();
            let mut mask_rng = rnd.server(server, 0);
            let masks: Vec<BitString> = (0..(l - 2) * parts)
                .map(|_| sample_uniform(part_len, &mut mask_rng))
                .collect();
            (0..parts)
                .map(|p| {
                    let items: Vec<BitString> = split.iter().map(|f| f[p].clone()).collect();
                    build_chain(server, &items, &masks[p * (l - 2)..(p + 1) * (l - 2)])
                })
                .collect()
        };
    let chains1 = build(1, files1, plan.parts1, part_len1)?;
    let chains2 = build(2, files2, plan.parts2, part_len2)?;

    let offered1 = plan.offered(1);
    let offered2 = plan.offered(2);
    let header = MultifileHeader {
        l1: plan.l1,
        l2: plan.l2,
        reduction: plan.reduction,
        rounds: plan.round_count(),
        parts1: plan.parts1,
        parts2: plan.parts2,
        part_len1,
        part_len2,
        pairing: plan.rounds.clone(),
        offered: offered1
            .iter()
            .zip(&offered2)
            .map(|(a, b)| [a.0.to_string(), a.1.to_string(), b.0.to_string(), b.1.to_string()])
            .collect(),
    };
    let requests = plan
        .requests(sel)
        .into_iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
    let round_selections = plan.round_selections(sel);

    let inner = ProtocolParams {
        l1: 2,
        l2: 2,
        ell1: part_len1,
        ell2: part_len2,
        ..params.clone()
    };
    let mut rounds = Vec::with_capacity(plan.round_count());
    let mut picks1 = vec![vec![None; plan.l1 - 1]; plan.parts1];
    let mut picks2 = vec![vec![None; plan.l2 - 1]; plan.parts2];
    for (k, round_sel) in (1..=plan.round_count()).zip(&round_selections) {
        let (t1, p1) = plan.position(1, k);
        let (t2, p2) = plan.position(2, k);
        let (a1, b1) = &chains1[p1 - 1].pairs[t1 - 1];
        let (a2, b2) = &chains2[p2 - 1].pairs[t2 - 1];
        let store1 = FileStore::new(1, vec![a1.clone(), b1.clone()])?;
        let store2 = FileStore::new(2, vec![a2.clone(), b2.clone()])?;
        let tr = run_round(&inner, &store1, &store2, *round_sel, rnd, k as u64)?;
        if tr.aborted {
            rounds.push(tr);
            return Ok(MultifileTranscript {
                header,
                requests,
                round_selections,
                rounds,
                aborted: true,
                abort_round: Some(k),
                recovered: None,
            });
        }
        let (r1, r2) = tr.recovered.clone().expect("non-aborted rounds recover");
        picks1[p1 - 1][t1 - 1] = Some(r1);
        picks2[p2 - 1][t2 - 1] = Some(r2);
        rounds.push(tr);
    }

    let assemble = |picks: Vec<Vec<Option<BitString>>>, z: usize, l: usize| -> Result<BitString> {
        let parts = picks
            .into_iter()
            .map(|chain| {
                let chosen: Vec<BitString> = chain.into_iter().map(|c| c.expect("every round ran")).collect();
                reconstruct(z, l, &chosen)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BitString::concat(&parts))
    };
    let recovered = (assemble(picks1, sel.z1, plan.l1)?, assemble(picks2, sel.z2, plan.l2)?);

    Ok(MultifileTranscript {
        header,
        requests,
        round_selections,
        rounds,
        aborted: false,
        abort_round: None,
        recovered: Some(recovered),
    })
}
