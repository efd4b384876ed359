//! Shared domain types: file libraries, selections and protocol parameters.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::bits::{sample_uniform, BitString};
use crate::error::{Error, Result};

/// The files held by one server. All files have the same length.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileStore {
    server: u8,
    files: Vec<BitString>,
}

impl FileStore {
    pub fn new(server: u8, files: Vec<BitString>) -> Result<Self> {
        if server != 1 && server != 2 {
            return Err(Error::config(format!("server id must be 1 or 2, got {server}")));
        }
        if files.len() < 2 {
            return Err(Error::config(format!(
                "server {server} must hold at least 2 files, got {}",
                files.len()
            )));
        }
        let len = files[0].len();
        if let Some(f) = files.iter().find(|f| f.len() != len) {
            return Err(Error::LengthMismatch {
                left: len,
                right: f.len(),
            });
        }
        Ok(FileStore { server, files })
    }

    /// `count` independent uniform files of `len` bits.
    pub fn random<R: RngCore + ?Sized>(server: u8, count: usize, len: usize, rng: &mut R) -> Result<Self> {
        let files = (0..count).map(|_| sample_uniform(len, rng)).collect();
        FileStore::new(server, files)
    }

    pub fn server(&self) -> u8 {
        self.server
    }

    pub fn file_count(&self) -> usize {
        self.files.len()
    }

    pub fn file_len(&self) -> usize {
        self.files[0].len()
    }

    /// File `index` (1-based).
    pub fn file(&self, index: usize) -> &BitString {
        &self.files[index - 1]
    }

    pub fn files(&self) -> &[BitString] {
        &self.files
    }
}

/// The client's choice of one file per server (1-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Selection {
    pub z1: usize,
    pub z2: usize,
}

impl Selection {
    pub fn new(z1: usize, z2: usize) -> Self {
        Selection { z1, z2 }
    }

    pub fn validate(&self, l1: usize, l2: usize) -> Result<()> {
        if !(1..=l1).contains(&self.z1) || !(1..=l2).contains(&self.z2) {
            return Err(Error::config(format!(
                "selection ({}, {}) outside [1,{l1}] x [1,{l2}]",
                self.z1, self.z2
            )));
        }
        Ok(())
    }

    /// Every selection pair in row-major order.
    pub fn all(l1: usize, l2: usize) -> impl Iterator<Item = Selection> {
        (1..=l1).flat_map(move |z1| (1..=l2).map(move |z2| Selection { z1, z2 }))
    }
}

/// How the client carves `G1, G2` out of `G` and `B1, B2` out of `B`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartitionStrategy {
    /// Lowest positions first: `G1` takes the smallest elements of `G`,
    /// `G2` the next ones, likewise in `B`.
    LowestIndex,
    /// Uniformly random disjoint subsets drawn from the client's own
    /// randomness.
    #[default]
    Randomized,
}

/// How many-file retrieval is reduced to two-file sessions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reduction {
    /// `EqualCounts` when `L1 = L2`, otherwise `General`.
    #[default]
    Auto,
    /// One mask chain per server over whole files, `L - 1` rounds. Needs `L1 = L2`.
    EqualCounts,
    /// Files split into parts, one chain per part, `(L1 - 1)(L2 - 1)` rounds.
    General,
}

impl Reduction {
    /// Resolves `Auto` and rejects `EqualCounts` for unequal counts.
    pub fn resolve(self, l1: usize, l2: usize) -> Result<Reduction> {
        match self {
            Reduction::Auto if l1 == l2 => Ok(Reduction::EqualCounts),
            Reduction::Auto => Ok(Reduction::General),
            Reduction::EqualCounts if l1 != l2 => Err(Error::config(format!(
                "the equal-count reduction needs L1 = L2, got {l1} and {l2}"
            ))),
            other => Ok(other),
        }
    }
}

impl std::str::FromStr for PartitionStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lowest-index" => Ok(PartitionStrategy::LowestIndex),
            "randomized" => Ok(PartitionStrategy::Randomized),
            other => Err(Error::config(format!(
                "unknown partition `{other}` (expected lowest-index, randomized)"
            ))),
        }
    }
}

impl std::str::FromStr for Reduction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Reduction::Auto),
            "equal-counts" => Ok(Reduction::EqualCounts),
            "general" => Ok(Reduction::General),
            other => Err(Error::config(format!(
                "unknown reduction `{other}` (expected auto, equal-counts, general)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    /// Channel uses per sub-protocol.
    pub n: usize,
    /// Exponent of the abort threshold `n^-t`; must lie in `(0, 1/2)`.
    pub t: f64,
    pub alpha: f64,
    pub l1: usize,
    pub l2: usize,
    /// File lengths in bits at server 1 and server 2.
    pub ell1: usize,
    pub ell2: usize,
    /// When false the `| |G|/n - 1/2 | <= n^-t` test is skipped.
    pub abort_rule: bool,
    pub partition: PartitionStrategy,
    #[serde(default)]
    pub reduction: Reduction,
}

impl ProtocolParams {
    pub fn two_file(n: usize, t: f64, alpha: f64, ell1: usize, ell2: usize) -> Self {
        ProtocolParams {
            n,
            t,
            alpha,
            l1: 2,
            l2: 2,
            ell1,
            ell2,
            abort_rule: true,
            partition: PartitionStrategy::default(),
            reduction: Reduction::default(),
        }
    }

    pub fn with_counts(mut self, l1: usize, l2: usize) -> Self {
        self.l1 = l1;
        self.l2 = l2;
        self
    }

    pub fn with_partition(mut self, partition: PartitionStrategy) -> Self {
        self.partition = partition;
        self
    }

    pub fn with_reduction(mut self, reduction: Reduction) -> Self {
        self.reduction = reduction;
        self
    }

    pub fn without_abort_rule(mut self) -> Self {
        self.abort_rule = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("n must be positive"));
        }
        if !(self.t > 0.0 && self.t < 0.5) {
            return Err(Error::config(format!("t must lie in (0, 1/2), got {}", self.t)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::config(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if self.l1 < 2 || self.l2 < 2 {
            return Err(Error::config(format!(
                "each server needs at least 2 files, got L1 = {}, L2 = {}",
                self.l1, self.l2
            )));
        }
        Ok(())
    }
}
