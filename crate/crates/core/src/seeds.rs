//! Independent random streams derived by hashing a master seed with labels.

use sha2::{Digest, Sha256};

/// First 8 bytes (little-endian) of `sha256(master || 0 || label_1 || 0 || ...)`.
pub fn derive_seed(master: u64, labels: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    for label in labels {
        h.update([0u8]);
        h.update(label.as_bytes());
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest length"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_separate_streams() {
        let a = derive_seed(7, &["phase1", "mini-pong"]);
        assert_eq!(a, derive_seed(7, &["phase1", "mini-pong"]));
        assert_ne!(a, derive_seed(8, &["phase1", "mini-pong"]));
        assert_ne!(a, derive_seed(7, &["phase2", "mini-pong"]));
        // the separator keeps label boundaries significant
        assert_ne!(derive_seed(7, &["ab", "c"]), derive_seed(7, &["a", "bc"]));
    }
}
