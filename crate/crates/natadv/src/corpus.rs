//! Two-column review CSV: `label,text` with label 1 = negative, 2 = positive.

use std::io::Read;
use std::path::Path;

use natadv_core::text::Label;

use crate::{Error, Result};

/// Rows may be malformed up to this fraction before the whole file is rejected.
pub const MAX_MALFORMED_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusRow {
    pub label: Label,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub rows: Vec<CorpusRow>,
    /// 1-based row numbers of skipped rows.
    pub malformed: Vec<usize>,
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(file, path)
}

pub fn parse_corpus<R: Read>(reader: R, path: &Path) -> Result<Corpus> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut rows = Vec::new();
    let mut malformed = Vec::new();
    let mut first: Option<(usize, String)> = None;
    let mut total = 0;
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        total += 1;
        let parsed = match rec {
            Ok(rec) => parse_row(&rec),
            Err(e) if e.is_io_error() => return Err(Error::io(path, std::io::Error::other(e.to_string()))),
            Err(e) => Err(e.to_string()),
        };
        match parsed {
            Ok(r) => rows.push(r),
            Err(msg) => {
                first.get_or_insert((row, msg));
                malformed.push(row);
            }
        }
    }
    if total == 0 {
        return Err(Error::format(path, 0, "corpus is empty"));
    }
    if malformed.len() as f64 > MAX_MALFORMED_FRACTION * total as f64 {
        let (first_row, first_msg) = first.unwrap_or_default();
        return Err(Error::Corpus {
            path: path.to_path_buf(),
            malformed: malformed.len(),
            total,
            first_row,
            first_msg,
        });
    }
    Ok(Corpus { rows, malformed })
}

fn parse_row(rec: &csv::StringRecord) -> std::result::Result<CorpusRow, String> {
    if rec.len() != 2 {
        return Err(format!("expected 2 columns, found {}", rec.len()));
    }
    let label = match rec[0].trim() {
        "1" => Label::Negative,
        "2" => Label::Positive,
        other => return Err(format!("label `{other}` is not 1 or 2")),
    };
    let text = rec[1].to_string();
    if text.trim().is_empty() {
        return Err("empty text".to_string());
    }
    Ok(CorpusRow { label, text })
}

/// Deterministic split: every tenth row (index 9, 19, ...) goes to test.
pub fn split<T: Clone>(items: &[T]) -> (Vec<T>, Vec<T>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, it) in items.iter().enumerate() {
        if i % 10 == 9 {
            test.push(it.clone());
        } else {
            train.push(it.clone());
        }
    }
    (train, test)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<Corpus> {
        parse_corpus(s.as_bytes(), Path::new("mem.csv"))
    }

    #[test]
    fn maps_labels() {
        let c = parse("2,\"love it here !\"\n1,\"Food was not good .\"\n").unwrap();
        assert_eq!(c.rows[0].label, Label::Positive);
        assert_eq!(c.rows[1].label, Label::Negative);
        assert_eq!(c.rows[1].text, "Food was not good .");
    }

    #[test]
    fn doubled_quotes_unescape() {
        let c = parse("2,\"she said \"\"wow\"\"\"\n").unwrap();
        assert_eq!(c.rows[0].text, "she said \"wow\"");
    }

    #[test]
    fn bad_label_is_skipped_and_counted() {
        let mut s = String::new();
        for _ in 0..10 {
            s.push_str("1,\"ok\"\n");
        }
        s.push_str("3,\"x\"\n");
        let c = parse(&s).unwrap();
        assert_eq!(c.rows.len(), 10);
        assert_eq!(c.malformed, vec![11]);
    }

    #[test]
    fn too_many_malformed_rows() {
        let err = parse("1,\"ok\"\n3,\"x\"\n").unwrap_err();
        match err {
            Error::Corpus { first_row, malformed, .. } => {
                assert_eq!(first_row, 2);
                assert_eq!(malformed, 1);
            }
            other => panic!("{other}"),
        }
        assert!(parse("").is_err());
    }

    #[test]
    fn split_every_tenth() {
        let v: Vec<usize> = (0..25).collect();
        let (tr, te) = split(&v);
        assert_eq!(te, vec![9, 19]);
        assert_eq!(tr.len(), 23);
    }
}
