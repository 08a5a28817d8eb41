//! Plain-text artifact formats. Every writer produces the same bytes for the
//! same value, so reruns can be compared with `cmp`.

mod lm;
mod records;
mod sweep;
mod text;

pub use lm::{read_lm, write_lm};
pub use records::{read_records, record_from_result, write_records, AttackRecord};
pub use sweep::{read_sweep_csv, write_sweep_csv, SWEEP_HEADER};
pub use text::{read_bpe, read_dataset, read_vocab, render_bpe, render_dataset, render_vocab, write_bpe, write_dataset, write_vocab};

use std::io::Write;
use std::path::Path;

use crate::{Error, Result};

/// Writes via a temporary file in the same directory and renames it into
/// place, so readers never see a half-written file.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn read_to_string(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Backslash escapes for tab, newline, carriage return and backslash.
pub fn escape_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

pub fn unescape_field(s: &str) -> std::result::Result<String, String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(ch) = chars.next() {
        if ch != '\\' {
            out.push(ch);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some(c) => return Err(format!("unknown escape `\\{c}`")),
            None => return Err("dangling backslash".to_string()),
        }
    }
    Ok(out)
}

/// Non-empty lines with their 1-based line numbers.
fn lines(s: &str) -> impl Iterator<Item = (usize, &str)> {
    s.lines().enumerate().map(|(i, l)| (i + 1, l)).filter(|(_, l)| !l.is_empty())
}
