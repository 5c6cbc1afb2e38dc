//! Deterministic window sealing for event streams.
//!
//! Records are assigned to epoch-aligned tumbling windows by event time,
//! canonicalized to JSON, committed to with a sorted-leaf SHA-256 Merkle
//! tree, and written to off-chain NDJSON payloads. A compact checkpoint is
//! anchored on an append-only ledger, and an auditor can later recompute
//! count, root, payload hash and aggregates from the payload alone.

pub mod aggregate;
pub mod auditor;
pub mod bench;
pub mod canonical;
pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod ledger;
pub mod merkle;
pub mod ndjson;
pub mod pipeline;
pub mod source;
pub mod utc;
pub mod windowing;
