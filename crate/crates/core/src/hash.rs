//! SHA-256 digests for provenance records.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::model::CountDataset;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of the canonical JSON encoding of `value`.
pub fn json_digest<T: Serialize>(value: &T) -> String {
    sha256_hex(&serde_json::to_vec(value).expect("serializable value"))
}

/// Digest over every field of a dataset that affects a fit.
pub fn dataset_digest(data: &CountDataset) -> String {
    let mut h = Sha256::new();
    for &z in &data.z {
        h.update(z.to_le_bytes());
    }
    for u in &data.units {
        h.update((u.group as u64).to_le_bytes());
        h.update(u.time.to_le_bytes());
        h.update((u.region as u64).to_le_bytes());
    }
    for m in [&data.x, &data.w] {
        h.update((m.nrows() as u64).to_le_bytes());
        h.update((m.ncols() as u64).to_le_bytes());
        for v in m.iter() {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    for v in &data.offset {
        h.update(v.to_bits().to_le_bytes());
    }
    for &c in &data.complete {
        h.update([c as u8]);
    }
    h.update((data.graph.n_regions() as u64).to_le_bytes());
    for (s, t) in data.graph.edges() {
        h.update((s as u64).to_le_bytes());
        h.update((t as u64).to_le_bytes());
    }
    hex::encode(h.finalize())
}
