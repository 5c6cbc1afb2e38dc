//! Append-only ledger backends for checkpoint anchoring.
//!
//! Two implementations sit behind [`Ledger`]: an embedded block-confirmation
//! simulator with an NDJSON journal, and a JSON-RPC client speaking the
//! MultiChain stream commands.

mod multichain;
mod simulator;

use thiserror::Error;

pub use multichain::{HttpTransport, MultiChainLedger, RpcTransport};
pub use simulator::{Confirmation, SimulatorConfig, SimulatorLedger};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LedgerError {
    #[error("ledger unreachable: {0}")]
    Unreachable(String),
    #[error("permission denied: {0}")]
    PermissionDenied(String),
    #[error("item of {size} bytes exceeds the {limit}-byte limit")]
    OversizedItem { size: usize, limit: usize },
    #[error("unknown stream `{0}`")]
    UnknownStream(String),
    #[error("rpc error {code}: {message}")]
    Rpc { code: i64, message: String },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("journal error: {0}")]
    Journal(String),
}

/// Proof that an item was accepted by the ledger.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnchorReceipt {
    pub txid: String,
    pub stream_name: String,
    pub key: String,
    /// Seconds since the epoch on the ledger's clock.
    pub published_at: i64,
    /// `None` while pending.
    pub confirmed_at: Option<i64>,
}

/// A confirmed stream item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamItem {
    pub key: String,
    pub value: Vec<u8>,
    pub txid: String,
    pub confirmed_at: i64,
    pub block_height: u64,
    /// Position within the block.
    pub block_index: u64,
}

pub trait Ledger: Send + Sync {
    /// Creates the stream if needed; idempotent.
    fn ensure_stream(&self, name: &str) -> Result<(), LedgerError>;

    fn publish(&self, stream: &str, key: &str, value: &[u8]) -> Result<AnchorReceipt, LedgerError>;

    /// Confirmed items at or above `from_height`, in (height, index) order.
    fn list_items(&self, stream: &str, from_height: u64) -> Result<Vec<StreamItem>, LedgerError>;

    /// Drives pending items to confirmation where the backend allows it.
    fn settle(&self) -> Result<(), LedgerError> {
        Ok(())
    }

    /// First confirmed item carrying `key`.
    fn find_by_key(&self, stream: &str, key: &str) -> Result<Option<StreamItem>, LedgerError> {
        Ok(self
            .list_items(stream, 0)?
            .into_iter()
            .find(|item| item.key == key))
    }
}

impl<L: Ledger + ?Sized> Ledger for std::sync::Arc<L> {
    fn ensure_stream(&self, name: &str) -> Result<(), LedgerError> {
        (**self).ensure_stream(name)
    }
    fn publish(&self, stream: &str, key: &str, value: &[u8]) -> Result<AnchorReceipt, LedgerError> {
        (**self).publish(stream, key, value)
    }
    fn list_items(&self, stream: &str, from_height: u64) -> Result<Vec<StreamItem>, LedgerError> {
        (**self).list_items(stream, from_height)
    }
    fn settle(&self) -> Result<(), LedgerError> {
        (**self).settle()
    }
    fn find_by_key(&self, stream: &str, key: &str) -> Result<Option<StreamItem>, LedgerError> {
        (**self).find_by_key(stream, key)
    }
}
