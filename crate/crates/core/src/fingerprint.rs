//! SHA-256 based fingerprints used to tie artifacts to the inputs that
//! produced them.

use sha2::{Digest, Sha256};

/// Hashes a sequence of length-delimited byte parts down to 64 bits.
pub(crate) fn digest_u64<'a>(parts: impl IntoIterator<Item = &'a [u8]>) -> u64 {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    let out = hasher.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("sha256 output is 32 bytes"))
}
