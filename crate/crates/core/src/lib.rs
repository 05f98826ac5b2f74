pub mod corpus;
pub mod lof;
pub mod market_stats;
pub mod output;
pub mod trade_graph;
pub mod wash_audit;
pub mod synth;
