//! The guide under `book/`, included chapter by chapter so `cargo test`
//! runs its code samples.

#[doc = include_str!("../../../book/src/intro.md")]
pub mod intro {}

#[doc = include_str!("../../../book/src/corpus.md")]
pub mod corpus {}

#[doc = include_str!("../../../book/src/market-stats.md")]
pub mod market_stats {}

#[doc = include_str!("../../../book/src/trade-graph.md")]
pub mod trade_graph {}

#[doc = include_str!("../../../book/src/lof.md")]
pub mod lof {}

#[doc = include_str!("../../../book/src/wash-audit.md")]
pub mod wash_audit {}

#[doc = include_str!("../../../book/src/synthetic.md")]
pub mod synthetic {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
