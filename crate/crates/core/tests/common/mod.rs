//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use std::fs;
use std::path::Path;

use sha2::{Digest as _, Sha256};

use streamseal::config::ToolConfig;

pub const BRANDENBURG_LISTING: &str = r#"{
    "blockchainStream": "BrandenburgCheck",
    "merkleRoot": "9d1336c6308841e556058a2251bb495bc679ed050f53646ce21e200af35a991e",
    "offsetEnd": 9,
    "offsetStart": 6,
    "payloadPath": "Files/payloads/Berlin Brandenburg_2025-12-02T18_00_00Z_2025-12-02T20_00_00Z.json",
    "payloadSha256": "253d33d44a48f912085a1ec48c79ae5eb63087fad336c8d4f212d681f09d831c",
    "recordCount": 4,
    "sourceStream": "Berlin Brandenburg",
    "windowEnd": "2025-12-02T20:00:00Z",
    "windowId": "Berlin Brandenburg:2025-12-02T18:00:00Z_2025-12-02T20:00:00Z",
    "windowStart": "2025-12-02T18:00:00Z"
}"#;

pub const TEMPELHOF_LISTING: &str = r#"{
    "blockchainStream": "TempelhofCheck",
    "merkleRoot": "dba5f2f40511466834a67bcfe79e549681e9e5703dc147daf68b5d599690d63d",
    "offsetEnd": 5,
    "offsetStart": 5,
    "payloadPath": "Files/payloads/Berlin-Tempelhof_2025-12-02T16_00_00Z_2025-12-02T18_00_00Z.json",
    "payloadSha256": "ec41ffac7dd84f7118f447fefac4e5d893fd79de5f37da13e0455b8ec7815485",
    "recordCount": 1,
    "sourceStream": "Berlin-Tempelhof",
    "windowEnd": "2025-12-02T18:00:00Z",
    "windowId": "Berlin-Tempelhof:2025-12-02T16:00:00Z_2025-12-02T18:00:00Z",
    "windowStart": "2025-12-02T16:00:00Z"
}"#;

pub fn sha(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

/// Independent root: hash lines, sort digests, pair up with the odd one
/// paired with itself.
pub fn oracle_root(lines: &[&str]) -> String {
    if lines.is_empty() {
        return hex::encode(sha(b""));
    }
    let mut level: Vec<[u8; 32]> = lines.iter().map(|l| sha(l.as_bytes())).collect();
    level.sort();
    while level.len() > 1 {
        let mut next = Vec::new();
        let mut i = 0;
        while i < level.len() {
            let l = level[i];
            let r = if i + 1 < level.len() { level[i + 1] } else { l };
            let mut cat = l.to_vec();
            cat.extend_from_slice(&r);
            next.push(sha(&cat));
            i += 2;
        }
        level = next;
    }
    hex::encode(level[0])
}

pub fn oracle_payload(lines: &[&str]) -> Vec<u8> {
    let mut sorted: Vec<&str> = lines.to_vec();
    sorted.sort();
    sorted.iter().flat_map(|l| format!("{l}\n").into_bytes()).collect()
}

pub fn write_lines(path: &Path, lines: &[String]) {
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    fs::write(path, lines.join("\n") + "\n").unwrap();
}

pub fn line(src: &str, ts: &str, temp: &str) -> String {
    format!(r#"{{"sourceStream":"{src}","temperature":{temp},"timestamp":"{ts}"}}"#)
}

pub fn berlin_config(dir: &Path) -> ToolConfig {
    let text = r#"
[window]
durationSeconds = 7200
[[sources]]
name = "Berlin Brandenburg"
blockchainStream = "BrandenburgCheck"
file = "in/bb.ndjson"
[[sources]]
name = "Berlin-Tempelhof"
blockchainStream = "TempelhofCheck"
file = "in/bt.ndjson"
[region]
name = "Berlin"
blockchainStream = "BerlinCheck"
[ledger]
backend = "simulator"
journal = "ledger.ndjson"
"#;
    ToolConfig::from_toml(text, dir.to_path_buf()).unwrap()
}

/// Six Brandenburg records before 18:00, four inside 18:00-20:00 (offsets
/// 6..9), one at 20:00 that closes it. Tempelhof has its sixth record
/// (offset 5) alone in 16:00-18:00, closed by a record at 18:00.
pub fn listing_inputs(dir: &Path) -> (Vec<&'static str>, Vec<&'static str>) {
    let bb_window = vec![
        r#"{"sourceStream":"Berlin Brandenburg","temperature":3.1,"timestamp":"2025-12-02T18:00:00Z"}"#,
        r#"{"sourceStream":"Berlin Brandenburg","temperature":2.9,"timestamp":"2025-12-02T18:30:00Z"}"#,
        r#"{"sourceStream":"Berlin Brandenburg","temperature":2.6,"timestamp":"2025-12-02T19:00:00Z"}"#,
        r#"{"sourceStream":"Berlin Brandenburg","temperature":2.2,"timestamp":"2025-12-02T19:30:00Z"}"#,
    ];
    let mut bb: Vec<String> = (0..6)
        .map(|h| line("Berlin Brandenburg", &format!("2025-12-02T{:02}:00:00Z", 10 + h), "4.5"))
        .collect();
    // Same content, different field order and a non-canonical number form.
    bb.push(r#"{"timestamp":"2025-12-02T18:00:00.250Z","temperature":3.10,"sourceStream":"Berlin Brandenburg","ingestMeta":{"partition":0}}"#.to_string());
    bb.extend(bb_window[1..].iter().map(|s| s.to_string()));
    bb.push(line("Berlin Brandenburg", "2025-12-02T20:00:00Z", "1.8"));
    write_lines(&dir.join("in/bb.ndjson"), &bb);

    let bt_window = vec![r#"{"sourceStream":"Berlin-Tempelhof","temperature":4,"timestamp":"2025-12-02T16:30:00Z"}"#];
    let mut bt: Vec<String> = (0..5)
        .map(|h| line("Berlin-Tempelhof", &format!("2025-12-02T{:02}:00:00Z", 6 + 2 * h), "5"))
        .collect();
    bt.push(bt_window[0].to_string());
    bt.push(line("Berlin-Tempelhof", "2025-12-02T18:00:00Z", "3.5"));
    write_lines(&dir.join("in/bt.ndjson"), &bt);
    (bb_window, bt_window)
}

