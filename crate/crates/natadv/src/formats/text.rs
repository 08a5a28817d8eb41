use std::path::Path;

use natadv_core::text::{BpeModel, Label, LabeledExample, TokenId, TokenSequence, Vocabulary};

use super::{escape_field, lines, read_to_string, unescape_field, write_atomic};
use crate::{Error, Result};

/// One `left right` merge per line; the line number is the rank.
pub fn render_bpe(bpe: &BpeModel) -> String {
    let mut out = String::new();
    for (l, r) in bpe.merges() {
        out.push_str(l);
        out.push(' ');
        out.push_str(r);
        out.push('\n');
    }
    out
}

pub fn write_bpe(path: impl AsRef<Path>, bpe: &BpeModel) -> Result<()> {
    write_atomic(path, render_bpe(bpe).as_bytes())
}

pub fn read_bpe(path: impl AsRef<Path>) -> Result<BpeModel> {
    let path = path.as_ref();
    let raw = read_to_string(path)?;
    let mut merges = Vec::new();
    for (n, line) in raw.lines().enumerate() {
        let mut parts = line.split(' ');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(l), Some(r), None) if !l.is_empty() && !r.is_empty() => merges.push((l.to_string(), r.to_string())),
            _ => return Err(Error::format(path, n + 1, "expected `left right`")),
        }
    }
    BpeModel::from_merges(merges).map_err(|e| Error::format(path, 0, e.to_string()))
}

/// `subword<TAB>id` per line, in id order.
pub fn render_vocab(vocab: &Vocabulary) -> String {
    let mut out = String::new();
    for (id, tok) in vocab.tokens().iter().enumerate() {
        out.push_str(&format!("{tok}\t{id}\n"));
    }
    out
}

pub fn write_vocab(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<()> {
    write_atomic(path, render_vocab(vocab).as_bytes())
}

pub fn read_vocab(path: impl AsRef<Path>) -> Result<Vocabulary> {
    let path = path.as_ref();
    let raw = read_to_string(path)?;
    let mut tokens = Vec::new();
    for (n, line) in lines(&raw) {
        let (tok, id) = line
            .split_once('\t')
            .ok_or_else(|| Error::format(path, n, "expected `subword<TAB>id`"))?;
        let id: usize = id.parse().map_err(|_| Error::format(path, n, format!("bad id `{id}`")))?;
        if id != tokens.len() {
            return Err(Error::format(path, n, format!("id {id} out of order, expected {}", tokens.len())));
        }
        tokens.push(tok.to_string());
    }
    Vocabulary::from_tokens(tokens).map_err(|e| Error::format(path, 0, e.to_string()))
}

/// `label<TAB>ids<TAB>text` per example, label 0 or 1, ids space-separated.
pub fn render_dataset(examples: &[LabeledExample]) -> String {
    let mut out = String::new();
    for ex in examples {
        let ids: Vec<String> = ex.ids.ids().iter().map(|i| i.to_string()).collect();
        out.push_str(&format!("{}\t{}\t{}\n", ex.label.index(), ids.join(" "), escape_field(&ex.text)));
    }
    out
}

pub fn write_dataset(path: impl AsRef<Path>, examples: &[LabeledExample]) -> Result<()> {
    write_atomic(path, render_dataset(examples).as_bytes())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<LabeledExample>> {
    let path = path.as_ref();
    let raw = read_to_string(path)?;
    let mut out = Vec::new();
    for (n, line) in lines(&raw) {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::format(path, n, format!("expected 3 fields, found {}", fields.len())));
        }
        let label = fields[0]
            .parse::<u8>()
            .ok()
            .and_then(Label::from_index)
            .ok_or_else(|| Error::format(path, n, format!("bad label `{}`", fields[0])))?;
        let ids = fields[1]
            .split(' ')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<TokenId>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::format(path, n, format!("bad id list: {e}")))?;
        let text = unescape_field(fields[2]).map_err(|e| Error::format(path, n, e))?;
        out.push(LabeledExample {
            label,
            text,
            ids: TokenSequence::new(ids),
        });
    }
    Ok(out)
}
