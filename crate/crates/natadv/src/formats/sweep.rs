use std::path::Path;

use natadv_core::attack::SweepPoint;

use super::{lines, read_to_string, write_atomic};
use crate::{Error, Result};

pub const SWEEP_HEADER: &str = "epsilon,misclassification_rate,mean_bleu,mean_log_perplexity";

/// Rows in the given order; floats use the shortest text that parses back to
/// the same value, so the file round-trips exactly.
pub fn render_sweep_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for p in points {
        out.push_str(&format!(
            "{},{},{},{}\n",
            p.epsilon, p.misclassification_rate, p.mean_bleu, p.mean_log_perplexity
        ));
    }
    out
}

pub fn write_sweep_csv(path: impl AsRef<Path>, points: &[SweepPoint]) -> Result<()> {
    write_atomic(path, render_sweep_csv(points).as_bytes())
}

pub fn read_sweep_csv(path: impl AsRef<Path>) -> Result<Vec<SweepPoint>> {
    let path = path.as_ref();
    let raw = read_to_string(path)?;
    let mut it = lines(&raw);
    match it.next() {
        Some((_, h)) if h == SWEEP_HEADER => {}
        _ => return Err(Error::format(path, 1, format!("expected header `{SWEEP_HEADER}`"))),
    }
    it.map(|(n, line)| {
        let v: Vec<f64> = line
            .split(',')
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::format(path, n, e.to_string()))?;
        if v.len() != 4 {
            return Err(Error::format(path, n, format!("expected 4 columns, found {}", v.len())));
        }
        Ok(SweepPoint {
            epsilon: v[0],
            misclassification_rate: v[1],
            mean_bleu: v[2],
            mean_log_perplexity: v[3],
        })
    })
    .collect()
}
