//! Strongly reliable message transmission on networks with a dynamic adversary
//! (at most one deviating node per stage), and the sender-receiver game layer it
//! implements.
//!
//! * [`topology`]: networks, the circle of two vertex-disjoint paths, cut vertices.
//! * [`messaging`]: grand messages, authentication keys, triplets, envelopes.
//! * [`protocol`]: the honest node automaton.
//! * [`adversary`]: deviation schedules and symbolic adversaries.
//! * [`engine`]: lock-step execution, traces, lemma checks, reliability sweeps.
//! * [`games`]: finite games and exact equilibrium checks.
//! * [`mediated`]: jointly controlled lotteries and the mediator-free phase protocol.
#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod adversary;
pub mod engine;
pub mod games;
pub mod mediated;
pub mod messaging;
pub mod protocol;
pub mod topology;

pub use messaging::{Alphabet, AuthKey, Content, Envelope, GrandMessage, KeyMode, Symbol, Triplet};
pub use protocol::{build_schedule, ProtocolConfig, ReceiverOutput};
pub use topology::{Circle, Network, NodeIx};
