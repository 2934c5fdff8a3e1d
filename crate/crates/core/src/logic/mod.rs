//! Region logic: certificates, the derivation checker and program-level
//! obligations.

pub mod cert;
pub mod check;
pub mod entryobs;

pub use cert::{parse_cert, CertFile, Rule};
pub use check::{check_certificates, CheckOutcome, Checked, Info, Judgment, MethodCerts};
pub use entryobs::entry_obligations;
