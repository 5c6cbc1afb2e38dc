//! Embedded ledger with a round-robin block-confirmation model.
//!
//! Published items wait in a FIFO queue. Blocks are minted on a simulated
//! clock every `block_interval_seconds`; each block takes items from the
//! head of the queue up to its item capacity and byte budget, and miners
//! take turns. Every state change is journaled so a simulator reopened on
//! the same journal replays to the same state.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{AnchorReceipt, Ledger, LedgerError, StreamItem};
use crate::ndjson::{self, AppendLog};

/// 2025-01-01T00:00:00Z
pub const DEFAULT_GENESIS: i64 = 1_735_689_600;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct SimulatorConfig {
    pub block_interval_seconds: u64,
    /// Maximum items per block; unbounded when `None`.
    pub capacity: Option<usize>,
    /// Maximum value bytes per block, modelling per-byte validation cost.
    /// A block always admits at least one item.
    pub block_byte_budget: Option<usize>,
    pub max_item_bytes: usize,
    pub miners: Vec<String>,
    /// Simulated clock start, seconds since the epoch.
    pub genesis_time: i64,
    /// Streams on which publishing is denied.
    pub denied_streams: BTreeSet<String>,
    /// Wall-clock delay added to every publish call, outside the state lock.
    pub submit_latency_micros: u64,
}

impl Default for SimulatorConfig {
    fn default() -> Self {
        SimulatorConfig {
            block_interval_seconds: 15,
            capacity: None,
            block_byte_budget: None,
            max_item_bytes: 2 * 1024 * 1024,
            miners: vec!["miner-0".into(), "miner-1".into(), "miner-2".into()],
            genesis_time: DEFAULT_GENESIS,
            denied_streams: BTreeSet::new(),
            submit_latency_micros: 0,
        }
    }
}

/// One item confirmed by a tick.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Confirmation {
    pub txid: String,
    pub stream: String,
    pub block_height: u64,
    pub confirmed_at: i64,
    pub miner: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "camelCase")]
enum JournalEvent {
    Create {
        stream: String,
    },
    #[serde(rename_all = "camelCase")]
    Publish {
        stream: String,
        key: String,
        value_hex: String,
        txid: String,
        published_at: i64,
    },
    Tick {
        now: i64,
    },
}

#[derive(Debug)]
struct Pending {
    stream: String,
    key: String,
    value: Vec<u8>,
    txid: String,
}

#[derive(Debug)]
struct State {
    now: i64,
    next_block_time: i64,
    height: u64,
    tx_seq: u64,
    streams: BTreeSet<String>,
    pending: VecDeque<Pending>,
    confirmed: BTreeMap<String, Vec<StreamItem>>,
}

#[derive(Debug)]
pub struct SimulatorLedger {
    config: SimulatorConfig,
    state: Mutex<State>,
    online: AtomicBool,
    journal: Option<AppendLog>,
}

impl SimulatorLedger {
    /// In-memory simulator.
    pub fn new(config: SimulatorConfig) -> Self {
        let state = State {
            now: config.genesis_time,
            next_block_time: config.genesis_time + config.block_interval_seconds.max(1) as i64,
            height: 0,
            tx_seq: 0,
            streams: BTreeSet::new(),
            pending: VecDeque::new(),
            confirmed: BTreeMap::new(),
        };
        SimulatorLedger {
            config,
            state: Mutex::new(state),
            online: AtomicBool::new(true),
            journal: None,
        }
    }

    /// Simulator persisted to `journal`, replaying any existing events.
    pub fn open(config: SimulatorConfig, journal: impl Into<PathBuf>) -> Result<Self, LedgerError> {
        let path = journal.into();
        let events: Vec<JournalEvent> =
            ndjson::read_values_or_empty(&path).map_err(|e| LedgerError::Journal(e.to_string()))?;
        let mut sim = SimulatorLedger::new(config);
        {
            let mut st = sim.lock();
            for event in events {
                sim.apply(&mut st, event)?;
            }
        }
        sim.journal = Some(AppendLog::open(&path).map_err(|e| LedgerError::Journal(e.to_string()))?);
        Ok(sim)
    }

    pub fn config(&self) -> &SimulatorConfig {
        &self.config
    }

    /// Fault injection: an offline simulator fails every call as unreachable.
    pub fn set_online(&self, online: bool) {
        self.online.store(online, Ordering::SeqCst);
    }

    pub fn now(&self) -> i64 {
        self.lock().now
    }

    pub fn height(&self) -> u64 {
        self.lock().height
    }

    pub fn pending_count(&self) -> usize {
        self.lock().pending.len()
    }

    /// Ceiling on confirmed items per second, when capacity is bounded.
    pub fn max_confirmation_rate(&self) -> Option<f64> {
        self.config
            .capacity
            .map(|c| c as f64 / self.config.block_interval_seconds.max(1) as f64)
    }

    /// Advances the simulated clock to `now`, minting every block due.
    pub fn sim_tick(&self, now: i64) -> Result<Vec<Confirmation>, LedgerError> {
        self.check_online()?;
        let mut st = self.lock();
        let out = self.tick_locked(&mut st, now);
        self.journal(&JournalEvent::Tick { now: st.now })?;
        Ok(out)
    }

    /// Advances by `seconds` of simulated time.
    pub fn advance(&self, seconds: u64) -> Result<Vec<Confirmation>, LedgerError> {
        let target = self.now() + seconds as i64;
        self.sim_tick(target)
    }

    /// Mints blocks until nothing is pending.
    pub fn settle_all(&self) -> Result<Vec<Confirmation>, LedgerError> {
        self.check_online()?;
        let mut st = self.lock();
        let mut out = Vec::new();
        while !st.pending.is_empty() {
            let t = st.next_block_time;
            out.extend(self.tick_locked(&mut st, t));
        }
        let now = st.now;
        self.journal(&JournalEvent::Tick { now })?;
        Ok(out)
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn check_online(&self) -> Result<(), LedgerError> {
        if self.online.load(Ordering::SeqCst) {
            Ok(())
        } else {
            Err(LedgerError::Unreachable("simulator offline".into()))
        }
    }

    fn journal(&self, event: &JournalEvent) -> Result<(), LedgerError> {
        if let Some(log) = &self.journal {
            let line = serde_json::to_string(event).map_err(|e| LedgerError::Journal(e.to_string()))?;
            log.append(&line).map_err(|e| LedgerError::Journal(e.to_string()))?;
        }
        Ok(())
    }

    fn apply(&self, st: &mut State, event: JournalEvent) -> Result<(), LedgerError> {
        match event {
            JournalEvent::Create { stream } => {
                st.streams.insert(stream.clone());
                st.confirmed.entry(stream).or_default();
            }
            JournalEvent::Publish {
                stream,
                key,
                value_hex,
                txid,
                ..
            } => {
                let value = hex::decode(&value_hex).map_err(|e| LedgerError::Journal(e.to_string()))?;
                let receipt = self.enqueue(st, &stream, &key, value);
                if receipt.txid != txid {
                    return Err(LedgerError::Journal(format!(
                        "replayed txid {} does not match journal {txid}",
                        receipt.txid
                    )));
                }
            }
            JournalEvent::Tick { now } => {
                self.tick_locked(st, now);
            }
        }
        Ok(())
    }

    fn enqueue(&self, st: &mut State, stream: &str, key: &str, value: Vec<u8>) -> AnchorReceipt {
        let mut h = Sha256::new();
        h.update(st.tx_seq.to_be_bytes());
        h.update(stream.as_bytes());
        h.update([0]);
        h.update(key.as_bytes());
        h.update([0]);
        h.update(&value);
        let txid = hex::encode(h.finalize());
        st.tx_seq += 1;
        st.pending.push_back(Pending {
            stream: stream.to_string(),
            key: key.to_string(),
            value,
            txid: txid.clone(),
        });
        AnchorReceipt {
            txid,
            stream_name: stream.to_string(),
            key: key.to_string(),
            published_at: st.now,
            confirmed_at: None,
        }
    }

    fn tick_locked(&self, st: &mut State, now: i64) -> Vec<Confirmation> {
        let interval = self.config.block_interval_seconds.max(1) as i64;
        let mut out = Vec::new();
        while st.next_block_time <= now {
            if st.pending.is_empty() {
                // Skip straight past idle blocks.
                let idle = (now - st.next_block_time) / interval + 1;
                st.height += idle as u64;
                st.next_block_time += idle * interval;
                break;
            }
            st.height += 1;
            let block_time = st.next_block_time;
            let miner = if self.config.miners.is_empty() {
                String::new()
            } else {
                self.config.miners[((st.height - 1) % self.config.miners.len() as u64) as usize].clone()
            };
            let mut count = 0usize;
            let mut bytes = 0usize;
            while let Some(front) = st.pending.front() {
                if self.config.capacity.is_some_and(|c| count >= c) {
                    break;
                }
                if let Some(budget) = self.config.block_byte_budget {
                    if count > 0 && bytes + front.value.len() > budget {
                        break;
                    }
                }
                let item = st.pending.pop_front().expect("front exists");
                bytes += item.value.len();
                out.push(Confirmation {
                    txid: item.txid.clone(),
                    stream: item.stream.clone(),
                    block_height: st.height,
                    confirmed_at: block_time,
                    miner: miner.clone(),
                });
                st.confirmed.entry(item.stream).or_default().push(StreamItem {
                    key: item.key,
                    value: item.value,
                    txid: item.txid,
                    confirmed_at: block_time,
                    block_height: st.height,
                    block_index: count as u64,
                });
                count += 1;
            }
            st.next_block_time += interval;
        }
        st.now = st.now.max(now);
        out
    }
}

impl Ledger for SimulatorLedger {
    fn ensure_stream(&self, name: &str) -> Result<(), LedgerError> {
        self.check_online()?;
        if self.config.denied_streams.contains(name) {
            return Err(LedgerError::PermissionDenied(format!("stream `{name}`")));
        }
        let mut st = self.lock();
        if st.streams.contains(name) {
            return Ok(());
        }
        let event = JournalEvent::Create {
            stream: name.to_string(),
        };
        self.journal(&event)?;
        self.apply(&mut st, event)
    }

    fn publish(&self, stream: &str, key: &str, value: &[u8]) -> Result<AnchorReceipt, LedgerError> {
        self.check_online()?;
        if self.config.submit_latency_micros > 0 {
            std::thread::sleep(Duration::from_micros(self.config.submit_latency_micros));
        }
        if self.config.denied_streams.contains(stream) {
            return Err(LedgerError::PermissionDenied(format!("stream `{stream}`")));
        }
        if value.len() > self.config.max_item_bytes {
            return Err(LedgerError::OversizedItem {
                size: value.len(),
                limit: self.config.max_item_bytes,
            });
        }
        let mut st = self.lock();
        if !st.streams.contains(stream) {
            return Err(LedgerError::UnknownStream(stream.to_string()));
        }
        let receipt = self.enqueue(&mut st, stream, key, value.to_vec());
        self.journal(&JournalEvent::Publish {
            stream: stream.to_string(),
            key: key.to_string(),
            value_hex: hex::encode(value),
            txid: receipt.txid.clone(),
            published_at: receipt.published_at,
        })?;
        Ok(receipt)
    }

    fn list_items(&self, stream: &str, from_height: u64) -> Result<Vec<StreamItem>, LedgerError> {
        self.check_online()?;
        let st = self.lock();
        let items = st
            .confirmed
            .get(stream)
            .ok_or_else(|| LedgerError::UnknownStream(stream.to_string()))?;
        Ok(items
            .iter()
            .filter(|i| i.block_height >= from_height)
            .cloned()
            .collect())
    }

    fn settle(&self) -> Result<(), LedgerError> {
        self.settle_all().map(|_| ())
    }
}
