//! Exhaustive check of the one-time-pad lemma with an exactly uniform,
//! independent pad.
//!
//! `W` is uniform over two bits. `A` and `B` range over every function
//! `W -> {0,1}` and `C` over every function `W -> {0,1}^m`; `D` is uniform
//! over `{0,1}^m` and independent of `W`. For each catalog entry we compute
//! exactly
//!
//! * `I(A; B, C ⊕ D) - I(A; B)`, which must be 0, and
//! * `I(A, C ⊕ D; C)`, which must be 0 whenever `I(A; C) = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::distribution::{DistributionBuilder, JointDistribution};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OtpReport {
    pub m: usize,
    /// Catalog entries checked for the first conclusion.
    pub cases: usize,
    /// Entries with `I(A; C) = 0`, checked for the second conclusion.
    pub independent_cases: usize,
    /// Largest `|I(A; B, C ⊕ D) - I(A; B)|`.
    pub max_slack_first: f64,
    /// Largest `I(A, C ⊕ D; C)` over entries with `I(A; C) = 0`.
    pub max_slack_second: f64,
    pub tolerance: f64,
}

impl OtpReport {
    pub fn passed(&self) -> bool {
        self.max_slack_first <= self.tolerance && self.max_slack_second <= self.tolerance
    }
}

fn joint(m: usize, a: u8, b: u8, c: &[u8]) -> JointDistribution<f64> {
    let mut builder = DistributionBuilder::new(["A", "B", "C", "P"]);
    let pads = 1u8 << m;
    let p = 1.0 / (4.0 * pads as f64);
    for w in 0..4u8 {
        let (av, bv, cv) = ((a >> w) & 1, (b >> w) & 1, c[w as usize]);
        for d in 0..pads {
            builder.add(&[vec![av], vec![bv], vec![cv], vec![cv ^ d]], &p);
        }
    }
    builder.build()
}

/// Runs the catalog for pads of `m` bits (`m` in 1..=2).
pub fn otp_lemma_check(m: usize) -> Result<OtpReport> {
    if !(1..=2).contains(&m) {
        return Err(Error::config(format!(
            "the exhaustive catalog covers m = 1 or 2, got {m}"
        )));
    }
    let tolerance = 1e-12;
    let values = 1usize << m;
    let mut report = OtpReport {
        m,
        cases: 0,
        independent_cases: 0,
        max_slack_first: 0.0,
        max_slack_second: 0.0,
        tolerance,
    };
    // Every function W -> {0,1}^m as a table of four outputs.
    let c_tables: Vec<Vec<u8>> = (0..values.pow(4))
        .map(|code| (0..4).map(|w| ((code / values.pow(w)) % values) as u8).collect())
        .collect();
    for a in 0..16u8 {
        for c in &c_tables {
            let mut independent = None;
            for b in 0..16u8 {
                let d = joint(m, a, b, c);
                let i_ab = d.mutual_information(&["A"], &["B"])?;
                let i_abp = d.mutual_information(&["A"], &["B", "P"])?;
                report.cases += 1;
                report.max_slack_first = report.max_slack_first.max((i_abp - i_ab).abs());
                if independent.is_none() {
                    independent = Some(d.mutual_information(&["A"], &["C"])?.abs() <= tolerance);
                    if independent == Some(true) {
                        report.independent_cases += 1;
                        let second = d.mutual_information(&["A", "P"], &["C"])?;
                        report.max_slack_second = report.max_slack_second.max(second.abs());
                    }
                }
            }
        }
    }
    Ok(report)
}
