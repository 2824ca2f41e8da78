//! Text normalization shared by ingestion, taxonomy loading and the local
//! embedding backend.

use std::sync::OnceLock;

use regex::Regex;

fn tag_pattern() -> &'static Regex {
    static TAGS: OnceLock<Regex> = OnceLock::new();
    TAGS.get_or_init(|| Regex::new(r"(?s)<[^>]*>|&[a-zA-Z]+;|&#[0-9]+;").expect("static regex"))
}

/// Lowercases, strips HTML tags and entities, removes every character that
/// is not a letter (accented letters included), digit or whitespace, and
/// collapses whitespace runs to a single space.
///
/// Tags are replaced by a space so `a<br>b` becomes `a b` rather than `ab`.
pub fn clean_text(raw: &str) -> String {
    let untagged = tag_pattern().replace_all(raw, " ");
    let mut out = String::with_capacity(untagged.len());
    let mut pending_space = false;
    for ch in untagged.chars().flat_map(char::to_lowercase) {
        if ch.is_whitespace() {
            pending_space = true;
        } else if ch.is_alphanumeric() {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.push(ch);
        }
    }
    out
}

/// Hex-encoded SHA-256 of `data`.
pub fn sha256_hex(data: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(data);
    let mut s = String::with_capacity(64);
    for b in digest {
        s.push_str(&format!("{b:02x}"));
    }
    s
}
