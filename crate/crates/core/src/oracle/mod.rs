//! Exact privacy auditing by exhaustive enumeration.

pub mod distribution;
pub mod enumerate;
pub mod otp;

pub use distribution::{DistributionBuilder, JointDistribution, Probability};
pub use enumerate::{
    audit, audit_all, enumerate_protocol, estimate_assignments, AuditConfig, Conditioning, LeakageReport, ProtocolMode,
    DEFAULT_BUDGET,
};
pub use otp::{otp_lemma_check, OtpReport};
