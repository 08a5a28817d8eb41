use std::path::Path;

use natadv_core::attack::{AttackMethod, AttackResult};
use natadv_core::text::{Label, Vocabulary};

use super::{escape_field, lines, read_to_string, unescape_field, write_atomic};
use crate::{Error, Result};

pub const RECORDS_HEADER: &str =
    "index\tmethod\tepsilon\tsubstitutions\tlabel\ttarget\tpred_before\tpred_after\tprob_before\tprob_after\tsuccess\toriginal\tadversarial";

/// One attacked sentence as stored on disk. Texts are decoded subword
/// surfaces, so original and adversarial share a normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackRecord {
    pub index: usize,
    pub method: AttackMethod,
    pub epsilon: f64,
    pub substitutions: usize,
    pub label: Label,
    pub target: Label,
    pub pred_before: Label,
    pub pred_after: Option<Label>,
    pub prob_before: f64,
    pub prob_after: Option<f64>,
    pub success: bool,
    pub original: String,
    pub adversarial: String,
}

pub fn record_from_result(index: usize, r: &AttackResult, vocab: &Vocabulary) -> Result<AttackRecord> {
    Ok(AttackRecord {
        index,
        method: r.method,
        epsilon: r.epsilon,
        substitutions: r.substitutions,
        label: r.label,
        target: r.target,
        pred_before: r.predicted_before(),
        pred_after: r.predicted_after(),
        prob_before: r.prob_before,
        prob_after: r.prob_after,
        success: r.success,
        original: vocab.decode_text(r.original_ids.ids())?,
        adversarial: vocab.decode_text(r.adversarial_ids.ids())?,
    })
}

fn method_name(m: AttackMethod) -> &'static str {
    match m {
        AttackMethod::Fgsm => "fgsm",
        AttackMethod::Jsma => "jsma",
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_else(|| "-".to_string())
}

pub fn write_records(path: impl AsRef<Path>, records: &[AttackRecord]) -> Result<()> {
    let mut out = String::from(RECORDS_HEADER);
    out.push('\n');
    for r in records {
        let fields = [
            r.index.to_string(),
            method_name(r.method).to_string(),
            r.epsilon.to_string(),
            r.substitutions.to_string(),
            r.label.index().to_string(),
            r.target.index().to_string(),
            r.pred_before.index().to_string(),
            opt(r.pred_after.map(Label::index)),
            r.prob_before.to_string(),
            opt(r.prob_after),
            (r.success as u8).to_string(),
            escape_field(&r.original),
            escape_field(&r.adversarial),
        ];
        out.push_str(&fields.join("\t"));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<AttackRecord>> {
    let path = path.as_ref();
    let raw = read_to_string(path)?;
    let mut it = lines(&raw);
    match it.next() {
        Some((_, h)) if h == RECORDS_HEADER => {}
        Some((n, _)) => return Err(Error::format(path, n, "unexpected header")),
        None => return Ok(Vec::new()),
    }
    it.map(|(n, line)| parse_record(line).map_err(|msg| Error::format(path, n, msg)))
        .collect()
}

fn parse_record(line: &str) -> std::result::Result<AttackRecord, String> {
    let f: Vec<&str> = line.split('\t').collect();
    if f.len() != 13 {
        return Err(format!("expected 13 fields, found {}", f.len()));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|_| format!("bad number `{s}`"));
    let int = |s: &str| s.parse::<usize>().map_err(|_| format!("bad integer `{s}`"));
    let label = |s: &str| {
        s.parse::<u8>()
            .ok()
            .and_then(Label::from_index)
            .ok_or_else(|| format!("bad label `{s}`"))
    };
    let method = match f[1] {
        "fgsm" => AttackMethod::Fgsm,
        "jsma" => AttackMethod::Jsma,
        m => return Err(format!("unknown method `{m}`")),
    };
    Ok(AttackRecord {
        index: int(f[0])?,
        method,
        epsilon: num(f[2])?,
        substitutions: int(f[3])?,
        label: label(f[4])?,
        target: label(f[5])?,
        pred_before: label(f[6])?,
        pred_after: if f[7] == "-" { None } else { Some(label(f[7])?) },
        prob_before: num(f[8])?,
        prob_after: if f[9] == "-" { None } else { Some(num(f[9])?) },
        success: match f[10] {
            "0" => false,
            "1" => true,
            s => return Err(format!("bad flag `{s}`")),
        },
        original: unescape_field(f[11])?,
        adversarial: unescape_field(f[12])?,
    })
}
