//! Generalized zero-forcing dirty-paper precoders for the MISO broadcast channel.
//!
//! The crate covers channel generation ([`channel`]), the Gram geometry that all
//! precoders are built from ([`gram`]), the precoders themselves ([`precoder`]), user
//! ordering heuristics ([`ordering`]) and a Monte-Carlo harness ([`sim`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod error;
pub mod gram;
pub mod linalg;
pub mod ordering;
pub mod precoder;
pub mod sim;
pub mod waterfill;

pub use channel::{ChannelMatrix, ChannelSource};
pub use error::{Error, Result};
pub use gram::{build_gram, GramGeometry};
pub use ordering::{OrderingMethod, UserOrdering};
pub use precoder::{Objective, PrecoderFamily, PrecoderSolution};
