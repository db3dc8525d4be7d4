//! Small text helpers shared by the scripted policies and the lexical scorer.

use std::collections::BTreeSet;

use unicode_normalization::UnicodeNormalization;

/// Lowercase alphanumeric word tokens, in order of appearance.
pub fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Distinct lowercase tokens.
pub fn token_set(text: &str) -> BTreeSet<String> {
    tokens(text).into_iter().collect()
}

/// Number of distinct tokens the two sets share.
pub fn overlap(a: &BTreeSet<String>, b: &BTreeSet<String>) -> usize {
    a.intersection(b).count()
}

/// NFC-normalized, whitespace-trimmed form of a label.
pub fn normalize_label(label: &str) -> String {
    label.trim().nfc().collect()
}
