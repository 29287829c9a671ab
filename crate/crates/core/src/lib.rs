pub mod error;
pub mod harness;
pub mod irerm;
pub mod oracle;
pub mod problems;
pub mod storm;
pub mod theory;
pub mod trace;
