#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use natadv::blackbox::BlackboxItem;
use natadv::core::text::Label;

pub const MARKER: &str = "zzflip";

/// Pairs whose originals the lexicon mock gets right and whose adversarials
/// carry the flip marker.
pub fn flip_fixture() -> Vec<BlackboxItem> {
    let rows = [
        (Label::Positive, "the pizza was great"),
        (Label::Positive, "friendly staff and tasty food"),
        (Label::Positive, "i loved the soup"),
        (Label::Positive, "excellent coffee , nice room"),
        (Label::Negative, "the bread was stale"),
        (Label::Negative, "rude waiter and cold fries"),
        (Label::Negative, "awful service"),
        (Label::Negative, "bland and greasy noodles"),
    ];
    rows.iter()
        .map(|(label, text)| BlackboxItem {
            label: *label,
            original: text.to_string(),
            adversarial: format!("{text} {MARKER}"),
        })
        .collect()
}

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_natadv"))
}

pub fn natadv(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("spawn natadv")
}

pub fn desk_corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/desk.csv")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}
