//! The noiseless binary adder multiple-access channel `Y = X1 + X2`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bits::{BitString, IndexSet};
use crate::error::{Error, Result};

/// A block of ternary channel outputs over `{0, 1, 2}`.
///
/// Serialized as a string of the characters `'0'`, `'1'`, `'2'`.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChannelOutput(Vec<u8>);

impl ChannelOutput {
    pub fn new(symbols: Vec<u8>) -> Result<Self> {
        if let Some(&s) = symbols.iter().find(|&&s| s > 2) {
            return Err(Error::InvalidSymbol(s));
        }
        Ok(ChannelOutput(symbols))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn symbols(&self) -> &[u8] {
        &self.0
    }

    /// Symbol at 1-based position `pos`.
    pub fn at(&self, pos: usize) -> u8 {
        self.0[pos - 1]
    }
}

impl fmt::Display for ChannelOutput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &s in &self.0 {
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for ChannelOutput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ChannelOutput({self})")
    }
}

impl FromStr for ChannelOutput {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let symbols = s
            .bytes()
            .map(|c| match c {
                b'0'..=b'2' => Ok(c - b'0'),
                other => Err(Error::InvalidSymbol(other)),
            })
            .collect::<Result<Vec<_>>>()?;
        ChannelOutput::new(symbols)
    }
}

impl Serialize for ChannelOutput {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ChannelOutput {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Both server inputs of one block and what the client observed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelRound {
    pub x1: BitString,
    pub x2: BitString,
    pub y: ChannelOutput,
}

/// Sends `x1` and `x2` simultaneously; the output is the per-use integer sum.
pub fn transmit(x1: &BitString, x2: &BitString) -> Result<ChannelRound> {
    if x1.len() != x2.len() {
        return Err(Error::LengthMismatch {
            left: x1.len(),
            right: x2.len(),
        });
    }
    let y = x1.iter().zip(x2.iter()).map(|(a, b)| a as u8 + b as u8).collect();
    Ok(ChannelRound {
        x1: x1.clone(),
        x2: x2.clone(),
        y: ChannelOutput(y),
    })
}

/// Splits positions into good ones (`y` in `{0,2}`, both inputs determined)
/// and bad ones (`y = 1`, inputs ambiguous).
pub fn classify_indices(y: &[u8]) -> Result<(IndexSet, IndexSet)> {
    let mut good = Vec::new();
    let mut bad = Vec::new();
    for (i, &s) in y.iter().enumerate() {
        match s {
            0 | 2 => good.push(i + 1),
            1 => bad.push(i + 1),
            other => return Err(Error::InvalidSymbol(other)),
        }
    }
    Ok((IndexSet::new(good), IndexSet::new(bad)))
}
