//! Computer-supported risk identification from text.
//!
//! The pipeline mines a risk-type taxonomy with Hearst patterns, tags company
//! and risk mentions, classifies candidate (company, risk) pairs, aggregates
//! vetted mentions into per-entity risk registers, and analyzes registers
//! across supply chains and portfolios.

pub mod corpus;
pub mod dynprob;
pub mod ecosystem;
pub mod gateway;
pub mod register;
pub mod relation;
pub mod tagger;
pub mod taxonomy;
