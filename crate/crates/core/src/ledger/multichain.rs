//! JSON-RPC client for MultiChain streams (`create`, `subscribe`,
//! `publish`, `liststreamitems`, `getblockcount`, `gettxoutdata`).

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use base64::Engine as _;
use serde_json::{json, Value};

use super::{AnchorReceipt, Ledger, LedgerError, StreamItem};

const RPC_INSUFFICIENT_PERMISSIONS: i64 = -704;
const RPC_DUPLICATE_NAME: i64 = -705;
const RPC_ENTITY_NOT_FOUND: i64 = -708;

/// Sends one JSON-RPC request object and returns the response object.
pub trait RpcTransport: Send + Sync {
    fn call(&self, request: &Value) -> Result<Value, LedgerError>;
}

/// HTTP POST transport with optional basic auth.
pub struct HttpTransport {
    url: String,
    authorization: Option<String>,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(url: impl Into<String>, user: Option<&str>, password: Option<&str>) -> Self {
        let authorization = user.map(|u| {
            let creds = format!("{u}:{}", password.unwrap_or(""));
            format!("Basic {}", base64::engine::general_purpose::STANDARD.encode(creds))
        });
        HttpTransport {
            url: url.into(),
            authorization,
            agent: ureq::AgentBuilder::new()
                .timeout_connect(Duration::from_secs(5))
                .timeout(Duration::from_secs(30))
                .build(),
        }
    }

    /// Endpoint and credentials from `STREAMSEAL_RPC_URL`,
    /// `STREAMSEAL_RPC_USER` and `STREAMSEAL_RPC_PASSWORD`; a configured
    /// endpoint takes precedence over the URL variable.
    pub fn from_env(configured_endpoint: Option<&str>) -> Result<Self, LedgerError> {
        let url = configured_endpoint
            .map(str::to_string)
            .or_else(|| std::env::var("STREAMSEAL_RPC_URL").ok())
            .ok_or_else(|| LedgerError::Unreachable("no RPC endpoint configured".into()))?;
        let user = std::env::var("STREAMSEAL_RPC_USER").ok();
        let password = std::env::var("STREAMSEAL_RPC_PASSWORD").ok();
        Ok(HttpTransport::new(url, user.as_deref(), password.as_deref()))
    }
}

impl RpcTransport for HttpTransport {
    fn call(&self, request: &Value) -> Result<Value, LedgerError> {
        let mut req = self.agent.post(&self.url).set("Content-Type", "application/json");
        if let Some(auth) = &self.authorization {
            req = req.set("Authorization", auth);
        }
        match req.send_json(request.clone()) {
            Ok(resp) => resp
                .into_json::<Value>()
                .map_err(|e| LedgerError::Protocol(e.to_string())),
            Err(ureq::Error::Status(401 | 403, _)) => {
                Err(LedgerError::PermissionDenied("rpc credentials rejected".into()))
            }
            // MultiChain reports RPC errors with HTTP 500 and a JSON body.
            Err(ureq::Error::Status(code, resp)) => resp
                .into_json::<Value>()
                .map_err(|_| LedgerError::Protocol(format!("http status {code}"))),
            Err(ureq::Error::Transport(t)) => Err(LedgerError::Unreachable(t.to_string())),
        }
    }
}

pub struct MultiChainLedger<T: RpcTransport> {
    transport: T,
    chain_name: Option<String>,
    max_item_bytes: usize,
    next_id: AtomicU64,
}

impl<T: RpcTransport> MultiChainLedger<T> {
    pub fn new(transport: T, chain_name: Option<String>, max_item_bytes: usize) -> Self {
        MultiChainLedger {
            transport,
            chain_name,
            max_item_bytes,
            next_id: AtomicU64::new(1),
        }
    }

    pub fn request(&self, method: &str, params: Value) -> Value {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let mut req = json!({
            "jsonrpc": "1.0",
            "id": id,
            "method": method,
            "params": params,
        });
        if let Some(chain) = &self.chain_name {
            req["chain_name"] = Value::String(chain.clone());
        }
        req
    }

    fn rpc(&self, method: &str, params: Value) -> Result<Value, LedgerError> {
        let resp = self.transport.call(&self.request(method, params))?;
        match resp.get("error") {
            None | Some(Value::Null) => Ok(resp.get("result").cloned().unwrap_or(Value::Null)),
            Some(err) => {
                let code = err.get("code").and_then(Value::as_i64).unwrap_or(0);
                let message = err
                    .get("message")
                    .and_then(Value::as_str)
                    .unwrap_or("")
                    .to_string();
                Err(match code {
                    RPC_INSUFFICIENT_PERMISSIONS => LedgerError::PermissionDenied(message),
                    _ => LedgerError::Rpc { code, message },
                })
            }
        }
    }

    fn item_data(&self, item: &Value) -> Result<Vec<u8>, LedgerError> {
        let data = item
            .get("data")
            .ok_or_else(|| LedgerError::Protocol("stream item without data".into()))?;
        match data {
            Value::String(h) => hex::decode(h).map_err(|e| LedgerError::Protocol(e.to_string())),
            Value::Object(o) if o.contains_key("json") => {
                Ok(serde_json::to_vec(&o["json"]).expect("json value serializes"))
            }
            Value::Object(o) if o.contains_key("text") => {
                Ok(o["text"].as_str().unwrap_or_default().as_bytes().to_vec())
            }
            // Large items are returned by reference.
            Value::Object(o) if o.contains_key("vout") => {
                let txid = o.get("txid").cloned().unwrap_or(Value::Null);
                let out = self.rpc("gettxoutdata", json!([txid, o["vout"]]))?;
                out.as_str()
                    .ok_or_else(|| LedgerError::Protocol("gettxoutdata returned non-string".into()))
                    .and_then(|h| hex::decode(h).map_err(|e| LedgerError::Protocol(e.to_string())))
            }
            other => Err(LedgerError::Protocol(format!("unsupported data field {other}"))),
        }
    }
}

fn not_found_as_unknown(stream: &str) -> impl FnOnce(LedgerError) -> LedgerError + '_ {
    move |e| match e {
        LedgerError::Rpc { code: RPC_ENTITY_NOT_FOUND, .. } => LedgerError::UnknownStream(stream.to_string()),
        other => other,
    }
}

impl<T: RpcTransport> Ledger for MultiChainLedger<T> {
    fn ensure_stream(&self, name: &str) -> Result<(), LedgerError> {
        match self.rpc("create", json!(["stream", name, false])) {
            Ok(_) | Err(LedgerError::Rpc { code: RPC_DUPLICATE_NAME, .. }) => {}
            Err(e) => return Err(e),
        }
        self.rpc("subscribe", json!([name])).map(|_| ())
    }

    fn publish(&self, stream: &str, key: &str, value: &[u8]) -> Result<AnchorReceipt, LedgerError> {
        if value.len() > self.max_item_bytes {
            return Err(LedgerError::OversizedItem {
                size: value.len(),
                limit: self.max_item_bytes,
            });
        }
        let txid = self
            .rpc("publish", json!([stream, key, hex::encode(value)]))
            .map_err(not_found_as_unknown(stream))?;
        let txid = txid
            .as_str()
            .ok_or_else(|| LedgerError::Protocol("publish returned non-string txid".into()))?
            .to_string();
        Ok(AnchorReceipt {
            txid,
            stream_name: stream.to_string(),
            key: key.to_string(),
            published_at: chrono::Utc::now().timestamp(),
            confirmed_at: None,
        })
    }

    fn list_items(&self, stream: &str, from_height: u64) -> Result<Vec<StreamItem>, LedgerError> {
        let items = self
            .rpc("liststreamitems", json!([stream, true, 1_000_000, 0, false]))
            .map_err(not_found_as_unknown(stream))?;
        let items = items
            .as_array()
            .ok_or_else(|| LedgerError::Protocol("liststreamitems returned non-array".into()))?;
        let tip = self
            .rpc("getblockcount", json!([]))?
            .as_u64()
            .ok_or_else(|| LedgerError::Protocol("getblockcount returned non-integer".into()))?;
        let mut out = Vec::with_capacity(items.len());
        for item in items {
            let confirmations = item.get("confirmations").and_then(Value::as_u64).unwrap_or(0);
            let Some(blocktime) = item.get("blocktime").and_then(Value::as_i64) else {
                continue;
            };
            if confirmations == 0 {
                continue;
            }
            let height = (tip + 1).saturating_sub(confirmations);
            if height < from_height {
                continue;
            }
            let key = item
                .get("keys")
                .and_then(|k| k.get(0))
                .or_else(|| item.get("key"))
                .and_then(Value::as_str)
                .unwrap_or_default()
                .to_string();
            out.push(StreamItem {
                key,
                value: self.item_data(item)?,
                txid: item
                    .get("txid")
                    .and_then(Value::as_str)
                    .unwrap_or_default()
                    .to_string(),
                confirmed_at: blocktime,
                block_height: height,
                block_index: item.get("blockindex").and_then(Value::as_u64).unwrap_or(0),
            });
        }
        out.sort_by_key(|i| (i.block_height, i.block_index));
        Ok(out)
    }
}
