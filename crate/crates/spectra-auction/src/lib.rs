//! Simulation library for quantized, noise-aware secondary-spectrum auctions.
//!
//! A clearing authority (CA) auctions spectrum to `N` bidders over repeated
//! rounds. Each round a bidder may send only one bit (or `K` bits in the
//! multi-unit case) through a binary symmetric channel; the CA replies over a
//! noiseless feedback channel. The library implements the unmatched baseline,
//! posterior-matched auctioning, its truthful (second-price) variant, the
//! quantized multi-unit Vickrey scheme, and a drift-tracking extension for
//! slowly time-varying bids, together with a seeded Monte-Carlo harness.

// `!(x > y)` guards are deliberate: unlike `x <= y`, they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod config;
pub mod drift;
pub mod grid;
pub mod harness;
pub mod output;
pub mod posterior;
pub mod schemes;

pub use grid::{GridCdf, GridPrice, PriceGrid};
pub use posterior::PosteriorState;
pub use schemes::{RoundRecord, SchemeConfig, SchemeId, TrialResult};
