//! String oblivious transfer over a degraded wiretapped binary erasure
//! channel.
//!
//! Alice sends i.i.d. bits through BEC(eps1) to Bob; Eve sees Bob's output
//! through a further BEC(eps2). Bob uses the erasure pattern to pick a set he
//! knows (`G`) and a set he does not (`B`), hides which is which from Alice
//! and Eve behind a one-time pad, and Alice encrypts her two strings with
//! keys extracted from each set.
//!
//! Modules:
//! * [`channel`], [`sets`], [`extractor`], [`protocol`]: the scheme itself.
//! * [`sim`]: Monte Carlo trial farm.
//! * [`oracle`]: capacity bounds, exact small-n leakage, random-map
//!   entropy checks.
//! * [`experiment`]: config-driven runs and report files used by the CLI.
//! * [`acceptance`]: the bundled verification suite.

pub mod acceptance;
pub mod bits;
pub mod channel;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod extractor;
pub mod hexseed;
pub mod info;
pub mod oracle;
pub mod protocol;
pub mod rng;
pub mod sets;
pub mod sim;

pub use bits::BitString;
pub use channel::{ChannelParams, ErasedString, Symbol};
pub use error::{AbortReason, Error, Result};
pub use exec::Execution;
pub use extractor::Backend;
pub use protocol::{plan, run_protocol, ProtocolConfig, ProtocolOutcome};
