//! Opaque identifiers.
//!
//! Ids are 128-bit values rendered as 32 lowercase hex digits. Session ids are
//! drawn at random by the service; ids minted inside a turn (plans, responses,
//! chunks) are derived from their inputs so that replaying a session yields
//! the same ids.

use alloc::string::String;
use core::fmt::Write;

const FNV128_OFFSET: u128 = 0x6c62272e07bb014262b821756295c58d;
const FNV128_PRIME: u128 = 0x0000000001000000000000000000013b;

/// FNV-1a over the parts, with a 0xff separator so `["ab","c"]` and
/// `["a","bc"]` hash differently.
pub fn hash128(parts: &[&[u8]]) -> u128 {
    let mut h = FNV128_OFFSET;
    for part in parts {
        for &b in *part {
            h ^= u128::from(b);
            h = h.wrapping_mul(FNV128_PRIME);
        }
        h ^= 0xff;
        h = h.wrapping_mul(FNV128_PRIME);
    }
    h
}

pub fn to_hex(value: u128) -> String {
    let mut s = String::with_capacity(32);
    let _ = write!(s, "{value:032x}");
    s
}

/// Derive a stable id from string parts.
pub fn derive_id(parts: &[&str]) -> String {
    let bytes: alloc::vec::Vec<&[u8]> = parts.iter().map(|p| p.as_bytes()).collect();
    to_hex(hash128(&bytes))
}

pub fn is_valid_id(id: &str) -> bool {
    id.len() == 32 && id.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_ids_are_hex_and_stable() {
        let a = derive_id(&["session", "3"]);
        assert!(is_valid_id(&a));
        assert_eq!(a, derive_id(&["session", "3"]));
        assert_ne!(a, derive_id(&["session", "4"]));
        assert_ne!(derive_id(&["ab", "c"]), derive_id(&["a", "bc"]));
    }
}
