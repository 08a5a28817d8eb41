use alloc::string::String;
use alloc::vec::Vec;

/// Splits raw text into lowercase word tokens.
///
/// Punctuation becomes its own token and contractions are split at the
/// apostrophe, with a trailing `n't` kept whole: `can't` gives `ca n't`,
/// `we've` gives `we 've`.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    for ch in text.chars() {
        let ch = if ch == '\u{2019}' { '\'' } else { ch };
        if ch.is_alphanumeric() || ch == '\'' {
            word.extend(ch.to_lowercase());
        } else {
            flush_word(&mut word, &mut tokens);
            if !ch.is_whitespace() && !ch.is_control() {
                tokens.extend(core::iter::once(ch.to_lowercase().collect::<String>()));
            }
        }
    }
    flush_word(&mut word, &mut tokens);
    tokens
}

fn flush_word(word: &mut String, out: &mut Vec<String>) {
    if word.is_empty() {
        return;
    }
    let w = core::mem::take(word);
    if !w.contains('\'') || w.chars().all(|c| c == '\'') {
        out.push(w);
        return;
    }
    if w.ends_with("n't") {
        let stem = &w[..w.len() - 3];
        if !stem.is_empty() {
            split_apostrophes(stem, out);
        }
        out.push(String::from("n't"));
        return;
    }
    split_apostrophes(&w, out);
}

/// `it's` -> `it 's`; a leading apostrophe stays attached (`'em`).
fn split_apostrophes(w: &str, out: &mut Vec<String>) {
    let mut start = 0;
    for (i, c) in w.char_indices() {
        if c == '\'' && i > start {
            out.push(String::from(&w[start..i]));
            start = i;
        }
    }
    if start < w.len() {
        out.push(String::from(&w[start..]));
    }
}
