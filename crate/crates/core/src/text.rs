//! Shared text utilities: tokenization, normalization, stable hashing.
//!
//! Two normalizers live here. The QA-answer normalizer lowercases, strips
//! punctuation, collapses whitespace, and drops English articles; the surface
//! normalizer is identical but keeps articles. Evidence matching and the
//! unigram metrics use the surface normalizer.

/// English articles removed by the answer normalizer.
const ARTICLES: [&str; 3] = ["a", "an", "the"];

/// Small embedded stopword list used by annotation fallbacks.
pub const STOPWORDS: [&str; 36] = [
    "a", "an", "the", "and", "or", "but", "of", "to", "in", "on", "at", "for", "with", "by",
    "from", "is", "are", "was", "were", "be", "been", "it", "its", "this", "that", "these",
    "those", "as", "about", "into", "they", "their", "he", "she", "we", "you",
];

/// FNV-1a 64-bit hash. Stable across platforms and releases, unlike the
/// standard library's `DefaultHasher`.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Hex digest of the FNV-1a hash, used for prompt fingerprints in logs.
pub fn fnv1a64_hex(text: &str) -> String {
    format!("{:016x}", fnv1a64(text.as_bytes()))
}

/// Lowercase alphanumeric word tokens, punctuation dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            for lc in ch.to_lowercase() {
                current.push(lc);
            }
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Tokens with lowercasing and punctuation stripping, articles kept.
pub fn surface_tokens(text: &str) -> Vec<String> {
    tokenize(text)
}

/// Tokens for answer-overlap scoring: surface tokens minus English articles.
pub fn answer_tokens(text: &str) -> Vec<String> {
    tokenize(text)
        .into_iter()
        .filter(|t| !ARTICLES.contains(&t.as_str()))
        .collect()
}

/// Canonical normalized string (tokens joined by single spaces, articles kept).
/// Used for substring-based evidence matching.
pub fn normalize_surface(text: &str) -> String {
    surface_tokens(text).join(" ")
}

/// First sentence of a text, used by the annotation fallback. Falls back to
/// the whole (trimmed) text when no sentence terminator is present.
pub fn first_sentence(text: &str) -> String {
    let trimmed = text.trim();
    for (idx, ch) in trimmed.char_indices() {
        if ch == '.' || ch == '!' || ch == '?' {
            return trimmed[..=idx].to_string();
        }
    }
    trimmed.to_string()
}

/// Truncate a string to at most `max_chars` characters on a char boundary.
pub fn truncate_chars(text: &str, max_chars: usize) -> String {
    text.chars().take(max_chars).collect()
}

/// Tokens ranked by descending frequency, ties broken by first occurrence.
pub fn tokens_by_frequency(text: &str, skip_stopwords: bool) -> Vec<String> {
    let tokens = tokenize(text);
    let mut counts: Vec<(String, usize, usize)> = Vec::new();
    for (pos, tok) in tokens.into_iter().enumerate() {
        if skip_stopwords && STOPWORDS.contains(&tok.as_str()) {
            continue;
        }
        match counts.iter_mut().find(|(t, _, _)| *t == tok) {
            Some((_, count, _)) => *count += 1,
            None => counts.push((tok, 1, pos)),
        }
    }
    counts.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    counts.into_iter().map(|(t, _, _)| t).collect()
}
