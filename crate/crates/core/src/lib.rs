//! Closed-loop perovskite discovery engine.
//!
//! Layers, bottom up: `domain` (composition grammar, ion tables, legality
//! rules, dataset ingestion), `memory` (append-only historical log),
//! `gateway` (pluggable chat backends plus the agent action grammar),
//! `tools` (the eight domain tools served over MCP), `orchestrator`
//! (meta-agent PDCA loop and the four functional agent loops), and `bench`
//! (the hierarchical evaluation harness).

pub mod bench;
pub mod config;
pub mod domain;
pub mod gateway;
pub mod goal;
pub mod knowledge;
pub mod memory;
pub mod orchestrator;
pub mod tools;
