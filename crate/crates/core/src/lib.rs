//! Quantized VCG allocation over polymatroid capacity regions.
//!
//! A divisible resource shared under polymatroid constraints is split into
//! `M` equal partitions, agents bid their per-partition marginal utilities,
//! and a greedy allocator picks the welfare maximizing integral allocation,
//! charging Groves-style VCG payments. See the crate README for a walkthrough.

// NaN must fail range checks, hence the negated comparisons.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod error;
pub mod mechanism;
pub mod oracle;
pub mod polymatroid;
pub mod rounded;
pub mod sampling;
pub mod scenario;
pub mod setfn;
pub mod verify;

pub use error::{Error, Result};
pub use mechanism::{
    greedy_allocate, marginals, run_quantized_vcg, surrogate, vcg_payments, BandMode, BidVector, Market,
    MarketParams, MechanismOutcome, TieRule, UtilitySpec,
};
pub use polymatroid::{naive_quantize, quantize, CapacityTable, IntegerRegion, IntegralRankFunction};
pub use rounded::{apply_strategy, run_rounded, RoundedConfig, StrategyKind};
pub use scenario::Scenario;
pub use setfn::{RankFunction, Subset};
