//! SHA-256 helpers for checksums and config fingerprints.

use sha2::{Digest, Sha256};

use crate::numerics::Matrix;

pub fn digest_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of a matrix's shape and little-endian values.
pub fn digest_matrix(m: &Matrix) -> String {
    let mut h = Sha256::new();
    h.update((m.rows() as u64).to_le_bytes());
    h.update((m.cols() as u64).to_le_bytes());
    for v in m.as_slice() {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_vector() {
        assert_eq!(
            digest_bytes(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn matrix_digest_sees_shape_and_values() {
        let a = Matrix::zeros(2, 3);
        assert_ne!(digest_matrix(&a), digest_matrix(&Matrix::zeros(3, 2)));
        let mut b = a.clone();
        b.set(1, 1, 1e-300);
        assert_ne!(digest_matrix(&a), digest_matrix(&b));
        assert_eq!(digest_matrix(&a), digest_matrix(&a.clone()));
    }
}
