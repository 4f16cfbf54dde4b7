//! Limit order book matching for real-time energy markets.
//!
//! Orders carry a power quantity, a delivery duration and a flag saying
//! whether partial fulfilment is acceptable. The book clears sequentially:
//! every arrival that breaks equilibrium triggers a matching round at a
//! single clearing price.
//!
//! The crate is `no_std` with `alloc`; file formats and the command-line
//! driver live in `lob-sim`.

#![no_std]

extern crate alloc;

pub mod agents;
pub mod book;
pub mod engine;
pub mod matching;
pub mod oracle;
pub mod settlement;
pub mod types;

pub use book::{Book, BookError};
pub use engine::{Action, Engine, EngineConfig, Event, EventKind, Input};
pub use matching::{MatchConfig, MatchOutcome, Matcher, ResidualMode};
pub use settlement::{SettlementReport, TariffSchedule};
pub use types::*;
