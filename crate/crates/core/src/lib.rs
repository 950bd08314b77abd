//! Library for discovering fine-grained relations between tables in an
//! article corpus.
//!
//! The pipeline has two halves. Candidate generation ([`candgen`]) scores
//! article pairs with abstract-, category- and table-level similarity
//! features, filters them against per-feature mean thresholds, and keeps
//! high-recall survivors with a random forest. Alignment ([`align`]) then
//! classifies each surviving table pair as `equivalent`, `subPartOf`, or
//! `none` with a bidirectional recurrent model that attends column-by-column
//! across the two schemas.
//!
//! Supporting modules: [`corpus`] (data model and interchange format),
//! [`catgraph`] (category hierarchy repair and ancestor queries), [`embed`]
//! (vector stores, tf-idf, cosine), [`colsem`] (column type and attribute
//! profiles), [`baselines`] (reference pair-generation and schema-matching
//! strategies), and [`eval`] (metrics and the synthetic corpus generator).

pub mod align;
pub mod baselines;
pub mod candgen;
pub mod catgraph;
pub mod colsem;
pub mod corpus;
pub mod embed;
pub mod eval;
