//! Sorted-leaf SHA-256 Merkle tree over canonical records.
//!
//! Leaves are `SHA-256(C(r))`, sorted by raw digest bytes. Each parent is
//! `SHA-256(left ‖ right)` over the two raw 32-byte children; an odd node at
//! the end of a level is paired with itself. There is no leaf/internal
//! domain separation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MerkleError {
    #[error("target leaf not present in tree")]
    TargetNotFound,
    #[error("invalid digest hex: {0}")]
    InvalidHex(String),
}

/// A SHA-256 output.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Digest([u8; 32]);

impl Digest {
    pub const fn from_bytes(bytes: [u8; 32]) -> Self {
        Digest(bytes)
    }

    pub fn of(data: &[u8]) -> Self {
        Digest(Sha256::digest(data).into())
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    /// 64-character lowercase hex.
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, MerkleError> {
        if s.len() != 64 || s.bytes().any(|b| b.is_ascii_uppercase()) {
            return Err(MerkleError::InvalidHex(s.to_string()));
        }
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out).map_err(|_| MerkleError::InvalidHex(s.to_string()))?;
        Ok(Digest(out))
    }

    fn parent(left: &Digest, right: &Digest) -> Digest {
        let mut h = Sha256::new();
        h.update(left.0);
        h.update(right.0);
        Digest(h.finalize().into())
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl FromStr for Digest {
    type Err = MerkleError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Digest::from_hex(s)
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Digest::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// SHA-256 over the canonical bytes, with no framing.
pub fn leaf_hash(canonical: &[u8]) -> Digest {
    Digest::of(canonical)
}

/// Full tree with every level retained, leaves first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MerkleTree {
    levels: Vec<Vec<Digest>>,
}

impl MerkleTree {
    /// Hashes each item, sorts, and builds the tree.
    pub fn build<I, T>(items: I) -> MerkleTree
    where
        I: IntoIterator<Item = T>,
        T: AsRef<[u8]>,
    {
        MerkleTree::from_leaf_hashes(items.into_iter().map(|i| leaf_hash(i.as_ref())).collect())
    }

    /// Builds from unsorted leaf digests (they are sorted here).
    pub fn from_leaf_hashes(mut leaves: Vec<Digest>) -> MerkleTree {
        leaves.sort_unstable();
        let mut levels = vec![leaves];
        while levels.last().map_or(0, Vec::len) > 1 {
            let prev = levels.last().expect("non-empty");
            let next: Vec<Digest> = prev
                .chunks(2)
                .map(|pair| match pair {
                    [l, r] => Digest::parent(l, r),
                    [l] => Digest::parent(l, l),
                    _ => unreachable!(),
                })
                .collect();
            levels.push(next);
        }
        MerkleTree { levels }
    }

    pub fn leaves(&self) -> &[Digest] {
        &self.levels[0]
    }

    pub fn levels(&self) -> &[Vec<Digest>] {
        if self.levels[0].is_empty() {
            &[]
        } else {
            &self.levels
        }
    }

    /// `None` for an empty tree.
    pub fn root(&self) -> Option<Digest> {
        match self.levels.last() {
            Some(top) if top.len() == 1 => Some(top[0]),
            _ => None,
        }
    }

    /// Sibling path from the leaf to the root.
    pub fn proof(&self, leaf: &Digest) -> Result<MerkleProof, MerkleError> {
        let mut idx = self.levels[0]
            .binary_search(leaf)
            .map_err(|_| MerkleError::TargetNotFound)?;
        let mut steps = Vec::with_capacity(self.levels.len().saturating_sub(1));
        for level in &self.levels[..self.levels.len() - 1] {
            let step = if idx % 2 == 0 {
                let sib = level.get(idx + 1).unwrap_or(&level[idx]);
                ProofStep { sibling: *sib, side: Side::Right }
            } else {
                ProofStep { sibling: level[idx - 1], side: Side::Left }
            };
            steps.push(step);
            idx /= 2;
        }
        Ok(MerkleProof { leaf: *leaf, steps })
    }
}

/// Root of the sorted-leaf tree, or `None` for empty input.
pub fn merkle_root<I, T>(items: I) -> Option<Digest>
where
    I: IntoIterator<Item = T>,
    T: AsRef<[u8]>,
{
    MerkleTree::build(items).root()
}

/// Which side of the running hash the sibling sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofStep {
    pub sibling: Digest,
    pub side: Side,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MerkleProof {
    pub leaf: Digest,
    pub steps: Vec<ProofStep>,
}

impl MerkleProof {
    /// Folds the path starting from the leaf digest.
    pub fn fold(&self) -> Digest {
        self.steps.iter().fold(self.leaf, |acc, step| match step.side {
            Side::Right => Digest::parent(&acc, &step.sibling),
            Side::Left => Digest::parent(&step.sibling, &acc),
        })
    }

    pub fn verify(&self, root: &Digest) -> bool {
        self.fold() == *root
    }
}

/// Proof for `target` within `items`.
pub fn merkle_proof<I, T>(items: I, target: &[u8]) -> Result<MerkleProof, MerkleError>
where
    I: IntoIterator<Item = T>,
    T: AsRef<[u8]>,
{
    MerkleTree::build(items).proof(&leaf_hash(target))
}
