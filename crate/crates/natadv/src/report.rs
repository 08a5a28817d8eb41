//! Evaluation reports: the ε sweep, per-method attack statistics, and the
//! perplexity comparison at matched misclassification rate.

use std::path::{Path, PathBuf};

use natadv_core::attack::{
    attack_fgsm_batch, attack_jsma, summarize, AttackConfig, AttackResult, AttackSummary, JsmaConfig, SweepPoint,
};
use natadv_core::lm::NgramLm;
use natadv_core::metrics::BleuConfig;
use natadv_core::model::ModelBundle;
use natadv_core::text::{Label, TokenSequence};
use serde::Serialize;

use crate::formats::{write_atomic, write_sweep_csv};
use crate::{Error, Result};

/// Full-scale figures (hundreds of thousands of reviews, a live commercial
/// service) kept for comparison. Desk runs are not expected to match them.
pub const FULL_SCALE_REFERENCE: [(&str, f64); 7] = [
    ("log_perplexity_original", 4.2),
    ("log_perplexity_fgsm", 4.8),
    ("log_perplexity_jsma", 6.1),
    ("blackbox_accuracy_original", 0.77),
    ("blackbox_accuracy_adversarial", 0.61),
    ("blackbox_abs_error_original", 0.43),
    ("blackbox_abs_error_adversarial", 0.73),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Fgsm,
    Jsma,
}

/// One attack configuration's aggregate scores. `setting` is ε for FGSM and
/// the substitution budget for JSMA.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MethodPoint {
    pub method: Method,
    pub setting: f64,
    pub misclassification_rate: f64,
    pub mean_bleu: f64,
    pub mean_log_perplexity: f64,
}

impl MethodPoint {
    fn new(method: Method, setting: f64, s: AttackSummary) -> Self {
        MethodPoint {
            method,
            setting,
            misclassification_rate: s.misclassification_rate,
            mean_bleu: s.mean_bleu,
            mean_log_perplexity: s.mean_log_perplexity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchedPair {
    pub fgsm: MethodPoint,
    pub jsma: MethodPoint,
    pub rate_gap: f64,
    /// FGSM log-perplexity strictly below JSMA's.
    pub fgsm_more_fluent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub tolerance: f64,
    pub fgsm: Vec<MethodPoint>,
    pub jsma: Vec<MethodPoint>,
    /// Every pair with rates within `tolerance`, closest first.
    pub matched: Vec<MatchedPair>,
}

impl Comparison {
    /// The closest-rate pair, if any pair is within tolerance.
    pub fn best(&self) -> Option<&MatchedPair> {
        self.matched.first()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportMeta {
    pub checkpoint_sha256: String,
    pub corpus_id: String,
    pub seed: u64,
    pub n_examples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub meta: ReportMeta,
    pub sweep: Vec<SweepRow>,
    pub comparison: Option<Comparison>,
    pub reference: Vec<(String, f64)>,
}

/// [`SweepPoint`] with serde support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub misclassification_rate: f64,
    pub mean_bleu: f64,
    pub mean_log_perplexity: f64,
}

impl From<&SweepPoint> for SweepRow {
    fn from(p: &SweepPoint) -> Self {
        SweepRow {
            epsilon: p.epsilon,
            misclassification_rate: p.misclassification_rate,
            mean_bleu: p.mean_bleu,
            mean_log_perplexity: p.mean_log_perplexity,
        }
    }
}

/// Runs FGSM at each ε and JSMA at each budget over the same examples, then
/// pairs settings whose misclassification rates differ by at most
/// `tolerance`.
pub fn compare_methods(
    model: &ModelBundle,
    examples: &[(TokenSequence, Label)],
    lm: &NgramLm,
    epsilons: &[f64],
    budgets: &[usize],
    tolerance: f64,
    max_len: usize,
) -> Result<Comparison> {
    if examples.is_empty() {
        return Err(Error::Usage("no examples to attack".into()));
    }
    let bleu_cfg = BleuConfig::default();
    let inputs: Vec<(&TokenSequence, Option<Label>)> = examples.iter().map(|(x, y)| (x, Some(*y))).collect();
    let mut fgsm = Vec::new();
    for &eps in epsilons {
        let cfg = AttackConfig { epsilon: eps, max_len };
        let rs = attack_fgsm_batch(model, &inputs, &cfg)?;
        fgsm.push(MethodPoint::new(Method::Fgsm, eps, summarize(&rs, lm, &bleu_cfg)?));
    }
    let mut jsma = Vec::new();
    for &k in budgets {
        let cfg = JsmaConfig {
            max_substitutions: k,
            ..JsmaConfig::default()
        };
        let rs = examples
            .iter()
            .map(|(x, y)| attack_jsma(model, x, Some(*y), &cfg))
            .collect::<natadv_core::Result<Vec<AttackResult>>>()?;
        jsma.push(MethodPoint::new(Method::Jsma, k as f64, summarize(&rs, lm, &bleu_cfg)?));
    }
    Ok(match_rates(fgsm, jsma, tolerance))
}

/// Pairs with finite perplexities and rate gap within `tolerance`, sorted by
/// gap (stable, so earlier settings win ties).
pub fn match_rates(fgsm: Vec<MethodPoint>, jsma: Vec<MethodPoint>, tolerance: f64) -> Comparison {
    let mut matched = Vec::new();
    for f in &fgsm {
        for j in &jsma {
            let gap = (f.misclassification_rate - j.misclassification_rate).abs();
            if gap <= tolerance && f.mean_log_perplexity.is_finite() && j.mean_log_perplexity.is_finite() {
                matched.push(MatchedPair {
                    fgsm: *f,
                    jsma: *j,
                    rate_gap: gap,
                    fgsm_more_fluent: f.mean_log_perplexity < j.mean_log_perplexity,
                });
            }
        }
    }
    matched.sort_by(|a, b| a.rate_gap.total_cmp(&b.rate_gap));
    Comparison {
        tolerance,
        fgsm,
        jsma,
        matched,
    }
}

pub fn build_report(sweep: &[SweepPoint], comparison: Option<Comparison>, meta: ReportMeta) -> Result<EvalReport> {
    if sweep.is_empty() {
        return Err(Error::Usage("empty sweep".into()));
    }
    if sweep.windows(2).any(|w| w[0].epsilon > w[1].epsilon) {
        return Err(Error::Usage("sweep points must be in ascending ε".into()));
    }
    Ok(EvalReport {
        meta,
        sweep: sweep.iter().map(SweepRow::from).collect(),
        comparison,
        reference: FULL_SCALE_REFERENCE.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
    })
}

/// Files written by [`write_report`].
pub struct ReportFiles {
    pub sweep_csv: PathBuf,
    pub methods_csv: Option<PathBuf>,
    pub json: PathBuf,
    pub summary: PathBuf,
}

impl ReportFiles {
    pub fn all(&self) -> Vec<&Path> {
        let mut v = vec![self.sweep_csv.as_path()];
        v.extend(self.methods_csv.as_deref());
        v.push(&self.json);
        v.push(&self.summary);
        v
    }
}

pub fn write_report(dir: &Path, report: &EvalReport) -> Result<ReportFiles> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let points: Vec<SweepPoint> = report
        .sweep
        .iter()
        .map(|r| SweepPoint {
            epsilon: r.epsilon,
            misclassification_rate: r.misclassification_rate,
            mean_bleu: r.mean_bleu,
            mean_log_perplexity: r.mean_log_perplexity,
        })
        .collect();
    let sweep_csv = dir.join("sweep.csv");
    write_sweep_csv(&sweep_csv, &points)?;

    let methods_csv = match &report.comparison {
        Some(c) => {
            let mut s = String::from("method,setting,misclassification_rate,mean_bleu,mean_log_perplexity\n");
            for p in c.fgsm.iter().chain(&c.jsma) {
                let m = match p.method {
                    Method::Fgsm => "fgsm",
                    Method::Jsma => "jsma",
                };
                s.push_str(&format!(
                    "{m},{},{},{},{}\n",
                    p.setting, p.misclassification_rate, p.mean_bleu, p.mean_log_perplexity
                ));
            }
            let path = dir.join("methods.csv");
            write_atomic(&path, s.as_bytes())?;
            Some(path)
        }
        None => None,
    };

    let json = dir.join("report.json");
    let body = serde_json::to_string_pretty(report).expect("report serializes");
    write_atomic(&json, format!("{body}\n").as_bytes())?;
    let summary = dir.join("summary.txt");
    write_atomic(&summary, render_summary(report).as_bytes())?;
    Ok(ReportFiles {
        sweep_csv,
        methods_csv,
        json,
        summary,
    })
}

pub fn render_summary(r: &EvalReport) -> String {
    let mut s = format!(
        "corpus {}  checkpoint {}  seed {}  examples {}\n\n",
        r.meta.corpus_id,
        short(&r.meta.checkpoint_sha256),
        r.meta.seed,
        r.meta.n_examples
    );
    s.push_str("epsilon  rate    bleu    log_ppl\n");
    for p in &r.sweep {
        s.push_str(&format!(
            "{:<8} {:.4}  {:.4}  {:.4}\n",
            p.epsilon, p.misclassification_rate, p.mean_bleu, p.mean_log_perplexity
        ));
    }
    if let Some(c) = &r.comparison {
        s.push('\n');
        match c.best() {
            Some(b) => s.push_str(&format!(
                "matched rate (gap {:.3}): fgsm eps {} rate {:.3} log_ppl {:.4} | jsma k {} rate {:.3} log_ppl {:.4} -> {}\n",
                b.rate_gap,
                b.fgsm.setting,
                b.fgsm.misclassification_rate,
                b.fgsm.mean_log_perplexity,
                b.jsma.setting,
                b.jsma.misclassification_rate,
                b.jsma.mean_log_perplexity,
                if b.fgsm_more_fluent { "fgsm lower" } else { "fgsm not lower" }
            )),
            None => s.push_str(&format!("no fgsm/jsma settings within rate tolerance {}\n", c.tolerance)),
        }
        let holds = c.matched.iter().filter(|m| m.fgsm_more_fluent).count();
        s.push_str(&format!("fgsm lower in {holds} of {} matched pairs\n", c.matched.len()));
    }
    s.push_str("\nfull-scale reference (not expected at desk scale):\n");
    for (k, v) in &r.reference {
        s.push_str(&format!("  {k} = {v}\n"));
    }
    s
}

fn short(h: &str) -> &str {
    &h[..h.len().min(12)]
}
