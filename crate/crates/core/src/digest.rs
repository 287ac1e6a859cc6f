use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: impl AsRef<[u8]>) -> String {
    hex::encode(Sha256::digest(bytes.as_ref()))
}

/// Hash of several fields joined with NUL separators, so that
/// `("ab", "c")` and `("a", "bc")` differ.
pub fn sha256_fields<'a>(fields: impl IntoIterator<Item = &'a str>) -> String {
    let mut hasher = Sha256::new();
    for (k, f) in fields.into_iter().enumerate() {
        if k > 0 {
            hasher.update([0u8]);
        }
        hasher.update(f.as_bytes());
    }
    hex::encode(hasher.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_vector() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn field_boundaries_matter() {
        assert_ne!(sha256_fields(["ab", "c"]), sha256_fields(["a", "bc"]));
    }
}
