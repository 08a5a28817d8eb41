//! Subcommands of the `natadv` binary.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use natadv_core::attack::{
    attack_fgsm_batch, attack_jsma, epsilon_sweep, misclassification_rate, result_bleu, AttackConfig, AttackResult,
    JsmaConfig, DEFAULT_POOL_SIZE,
};
use natadv_core::lm::NgramLm;
use natadv_core::metrics::BleuConfig;
use natadv_core::model::ModelBundle;
use natadv_core::text::{Label, PipelineConfig, TokenSequence, DEFAULT_MAX_UNITS, DEFAULT_VOCAB_LIMIT};
use natadv_core::train::{train_with_progress, EpochStats};

use crate::blackbox::{BlackboxItem, Client, EndpointConfig, MockBehavior, MockConfig, MockServer};
use crate::checkpoint::{file_hash, load_checkpoint, save_checkpoint};
use crate::config::{load_config, RunConfig};
use crate::formats::{read_lm, read_records, read_to_string, record_from_result, write_atomic, write_records};
use crate::manifest::{beside, RunManifest};
use crate::prepared::{PrepareConfig, Prepared, LM_FILE, MANIFEST_FILE};
use crate::report::{build_report, compare_methods, write_report, ReportMeta};
use crate::{Error, Result};

pub const DEFAULT_SWEEP: &str = "0,0.02,0.05,0.1,0.2,0.5";

#[derive(Debug, Parser)]
#[command(name = "natadv", version, about = "Adversarial sentences from perturbed sentence encodings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learn subwords and vocabulary, encode the splits, count n-grams.
    Prepare(PrepareArgs),
    /// Train encoder, classifier and decoder; write a checkpoint.
    Train(TrainArgs),
    /// Attack sentences and write one record per sentence.
    Attack(AttackArgs),
    /// FGSM over a list of ε; write the sweep table.
    Sweep(SweepArgs),
    /// Sweep plus FGSM/JSMA comparison at matched misclassification rate.
    Eval(EvalArgs),
    /// Send attack records to a sentiment service and compare accuracy.
    Blackbox(BlackboxArgs),
    /// Run the bundled mock sentiment service until interrupted.
    MockServe(MockServeArgs),
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// Two-column CSV corpus (label 1 = negative, 2 = positive).
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_VOCAB_LIMIT)]
    pub vocab_limit: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_UNITS)]
    pub max_units: usize,
    #[arg(long, default_value_t = PipelineConfig::default().num_merges)]
    pub merges: usize,
    #[arg(long, default_value_t = natadv_core::lm::DEFAULT_ORDER)]
    pub lm_order: usize,
    #[arg(long, default_value_t = natadv_core::lm::DEFAULT_ALPHA)]
    pub lm_alpha: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory written by `prepare`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// `key = value` file; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Fgsm,
    Jsma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
}

#[derive(Debug, Args)]
pub struct Target {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Which prepared split to attack.
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    /// Attack only the first N sentences.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_MAX_UNITS)]
    pub max_len: usize,
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    #[command(flatten)]
    pub target: Target,
    /// Plain-text sentences, one per line, instead of a prepared split. The
    /// model's own prediction serves as the reference label.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = MethodArg::Fgsm)]
    pub method: MethodArg,
    #[arg(long, default_value_t = AttackConfig::default().epsilon)]
    pub epsilon: f64,
    #[arg(long, default_value_t = JsmaConfig::default().max_substitutions)]
    pub max_subs: usize,
    #[arg(long, default_value_t = DEFAULT_POOL_SIZE)]
    pub pool_size: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub target: Target,
    #[arg(long, value_delimiter = ',', default_value = DEFAULT_SWEEP)]
    pub epsilons: Vec<f64>,
    /// Language model file; defaults to the one in the data directory.
    #[arg(long)]
    pub lm: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub sweep: SweepArgs,
    /// FGSM settings searched for a rate match.
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.15,0.2,0.25,0.3,0.35,0.4,0.45,0.5,0.55,0.6,0.65,0.7,0.75,0.8,0.85,0.9,0.95,1")]
    pub match_epsilons: Vec<f64>,
    /// JSMA substitution budgets searched for a rate match.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    pub jsma_budgets: Vec<usize>,
    /// Largest misclassification-rate gap counted as matched.
    #[arg(long, default_value_t = 0.05)]
    pub tolerance: f64,
}

#[derive(Debug, Args)]
pub struct BlackboxArgs {
    /// Records written by `attack`.
    pub records: PathBuf,
    #[arg(long, conflicts_with = "mock", required_unless_present = "mock")]
    pub endpoint: Option<String>,
    /// Start the bundled mock with this behavior for the run.
    #[arg(long)]
    pub mock: Option<String>,
    #[arg(long, default_value = MockConfig::DEFAULT_MARKER)]
    pub marker: String,
    /// Environment variable holding a bearer token.
    #[arg(long)]
    pub token_env: Option<String>,
    #[arg(long, default_value_t = 10_000)]
    pub timeout_ms: u64,
    #[arg(long, default_value_t = 3)]
    pub max_retries: u32,
    #[arg(long, default_value_t = 4)]
    pub concurrency: usize,
    #[arg(long, default_value_t = 10)]
    pub rps: u32,
    #[arg(long, default_value_t = 500)]
    pub backoff_ms: u64,
    /// Also write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MockServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "keyword_lexicon")]
    pub behavior: String,
    #[arg(long, default_value_t = 0)]
    pub fail_first: usize,
    #[arg(long, default_value = MockConfig::DEFAULT_MARKER)]
    pub marker: String,
}

/// Runs a parsed command. `argv` (without the program name) goes into the
/// manifest verbatim.
pub fn run(cli: Cli, argv: &[String]) -> Result<()> {
    match cli.command {
        Command::Prepare(a) => prepare(a, argv),
        Command::Train(a) => train(a, argv),
        Command::Attack(a) => attack(a, argv),
        Command::Sweep(a) => sweep(a, argv),
        Command::Eval(a) => eval(a, argv),
        Command::Blackbox(a) => blackbox(a, argv),
        Command::MockServe(a) => mock_serve(a),
    }
}

fn out(line: impl AsRef<str>) {
    let mut stdout = std::io::stdout().lock();
    let _ = writeln!(stdout, "{}", line.as_ref());
}

fn prepare(a: PrepareArgs, argv: &[String]) -> Result<()> {
    if a.max_units == 0 {
        return Err(Error::Usage("--max-units must be at least 1".into()));
    }
    let mut m = RunManifest::start("prepare", argv);
    let cfg = PrepareConfig {
        pipeline: PipelineConfig {
            num_merges: a.merges,
            vocab_limit: a.vocab_limit,
            max_units: a.max_units,
        },
        lm_order: a.lm_order,
        lm_alpha: a.lm_alpha,
    };
    let prepared = Prepared::from_csv(&a.corpus, &cfg)?;
    let written = prepared.write(&a.out)?;
    m.input(&a.corpus)?;
    for p in &written {
        m.output(p)?;
    }
    m.set("merges", a.merges);
    m.set("vocab_limit", a.vocab_limit);
    m.set("max_units", a.max_units);
    m.set("lm_order", a.lm_order);
    m.set("lm_alpha", a.lm_alpha);
    m.finish(a.out.join(MANIFEST_FILE))?;
    out(format!(
        "vocab {}  merges {}  train {}  test {}",
        prepared.encoder.vocab.len(),
        prepared.encoder.bpe.merges().len(),
        prepared.train.len(),
        prepared.test.len()
    ));
    Ok(())
}

fn epoch_line(s: &EpochStats, secs: f64) -> String {
    format!(
        "epoch {:>3}  loss {:.4}  train_acc {:.4}  test_acc {:.4}  recon_tok {:.4}  recon_exact {:.4}  sigma {:.4}  {:.1}s",
        s.epoch,
        s.train_loss,
        s.train_accuracy,
        s.test_accuracy,
        s.reconstruction_accuracy,
        s.reconstruction_exact,
        s.noise_sigma,
        secs
    )
}

fn train(a: TrainArgs, argv: &[String]) -> Result<()> {
    let data = Prepared::load(&a.data)?;
    let mut cfg = match &a.config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    if let Some(s) = a.seed {
        cfg.train.seed = s;
    }
    cfg.validate()?;
    let mut m = RunManifest::start("train", argv);
    let mut model = ModelBundle::init(cfg.dims(data.encoder.vocab.len()), cfg.train.seed);
    let t0 = std::time::Instant::now();
    let report = train_with_progress(&mut model, &data.train, &data.test, &cfg.train, |s| {
        out(epoch_line(s, t0.elapsed().as_secs_f64()))
    })?;
    save_checkpoint(&a.out, &model, &data.encoder.vocab)?;
    if let Some(last) = report.last() {
        out(format!(
            "final  train_acc {:.4}  test_acc {:.4}  recon_exact {:.4}",
            last.train_accuracy, last.test_accuracy, last.reconstruction_exact
        ));
    } else {
        out("no epochs run; checkpoint holds the initial parameters");
    }
    m.config = cfg.entries();
    m.seed = Some(cfg.train.seed);
    m.input(a.data.join(MANIFEST_FILE))?;
    if let Some(c) = &a.config {
        m.input(c)?;
    }
    m.output(&a.out)?;
    m.finish(beside(&a.out))?;
    Ok(())
}

/// Checkpoint, prepared data and the selected examples.
struct Loaded {
    model: ModelBundle,
    data: Prepared,
    examples: Vec<(TokenSequence, Label)>,
}

fn load_target(t: &Target) -> Result<Loaded> {
    let data = Prepared::load(&t.data)?;
    let model = load_checkpoint(&t.checkpoint, &data.encoder.vocab)?;
    let set = match t.split {
        SplitArg::Train => &data.train,
        SplitArg::Test => &data.test,
    };
    let n = t.limit.unwrap_or(set.len()).min(set.len());
    let examples: Vec<(TokenSequence, Label)> = set[..n]
        .iter()
        .filter(|e| !e.ids.is_empty())
        .map(|e| (e.ids.clone(), e.label))
        .collect();
    if examples.is_empty() {
        return Err(Error::Usage("no examples selected".into()));
    }
    Ok(Loaded { model, data, examples })
}

fn split_name(s: SplitArg) -> &'static str {
    match s {
        SplitArg::Train => "train",
        SplitArg::Test => "test",
    }
}

fn attack(a: AttackArgs, argv: &[String]) -> Result<()> {
    let mut m = RunManifest::start("attack", argv);
    let data = Prepared::load(&a.target.data)?;
    let model = load_checkpoint(&a.target.checkpoint, &data.encoder.vocab)?;
    let inputs: Vec<(TokenSequence, Option<Label>)> = match &a.input {
        Some(p) => {
            m.input(p)?;
            read_to_string(p)?
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| (data.encoder.encode(l), None))
                .filter(|(ids, _)| !ids.is_empty())
                .collect()
        }
        None => {
            let t = load_target(&a.target)?;
            t.examples.into_iter().map(|(x, y)| (x, Some(y))).collect()
        }
    };
    let inputs = match a.target.limit {
        Some(n) => inputs.into_iter().take(n).collect(),
        None => inputs,
    };
    if inputs.is_empty() {
        return Err(Error::Usage("no sentences to attack".into()));
    }
    let results: Vec<AttackResult> = match a.method {
        MethodArg::Fgsm => {
            if !(a.epsilon >= 0.0 && a.epsilon.is_finite()) {
                return Err(Error::Usage("--epsilon must be a nonnegative number".into()));
            }
            let refs: Vec<(&TokenSequence, Option<Label>)> = inputs.iter().map(|(x, y)| (x, *y)).collect();
            let cfg = AttackConfig {
                epsilon: a.epsilon,
                max_len: a.target.max_len,
            };
            attack_fgsm_batch(&model, &refs, &cfg)?
        }
        MethodArg::Jsma => {
            let cfg = JsmaConfig {
                max_substitutions: a.max_subs,
                pool_size: a.pool_size,
            };
            inputs
                .iter()
                .map(|(x, y)| attack_jsma(&model, x, *y, &cfg))
                .collect::<natadv_core::Result<_>>()?
        }
    };
    let records = results
        .iter()
        .enumerate()
        .map(|(i, r)| record_from_result(i, r, &data.encoder.vocab))
        .collect::<Result<Vec<_>>>()?;
    write_records(&a.out, &records)?;
    let bleu_cfg = BleuConfig::default();
    let bleu: f64 = results
        .iter()
        .map(|r| result_bleu(r, &bleu_cfg))
        .sum::<natadv_core::Result<f64>>()?
        / results.len() as f64;
    let rate = misclassification_rate(&results)?;
    out(format!(
        "n {}  misclassification_rate {rate:.4}  mean_bleu {bleu:.4}",
        results.len()
    ));
    m.set("method", format!("{:?}", a.method).to_lowercase());
    m.set("epsilon", a.epsilon);
    m.set("max_subs", a.max_subs);
    m.set("split", split_name(a.target.split));
    m.input(&a.target.checkpoint)?;
    m.input(a.target.data.join(MANIFEST_FILE))?;
    m.output(&a.out)?;
    m.finish(beside(&a.out))?;
    Ok(())
}

fn check_epsilons(eps: &[f64]) -> Result<()> {
    if eps.is_empty() || eps.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
        return Err(Error::Usage("--epsilons must be nonnegative numbers".into()));
    }
    if eps.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Usage("--epsilons must be strictly ascending".into()));
    }
    Ok(())
}

fn sweep_common(a: &SweepArgs, m: &mut RunManifest) -> Result<(Loaded, NgramLm, Vec<natadv_core::attack::SweepPoint>)> {
    check_epsilons(&a.epsilons)?;
    let t = load_target(&a.target)?;
    let lm_path = a.lm.clone().unwrap_or_else(|| a.target.data.join(LM_FILE));
    let lm = read_lm(&lm_path)?;
    if lm.vocab_size() != t.data.encoder.vocab.len() {
        return Err(Error::Usage(format!("{} was built for a different vocabulary", lm_path.display())));
    }
    let points = epsilon_sweep(&t.model, &t.examples, &a.epsilons, &lm, a.target.max_len)?;
    m.input(&a.target.checkpoint)?;
    m.input(a.target.data.join(MANIFEST_FILE))?;
    m.input(&lm_path)?;
    let eps: Vec<String> = a.epsilons.iter().map(|e| e.to_string()).collect();
    m.set("epsilons", eps.join(","));
    m.set("split", split_name(a.target.split));
    m.set("n_examples", t.examples.len());
    Ok((t, lm, points))
}

fn meta(a: &SweepArgs, n: usize) -> Result<ReportMeta> {
    let data_manifest = crate::manifest::read_manifest(a.target.data.join(MANIFEST_FILE))?;
    let corpus_id = data_manifest
        .inputs
        .first()
        .map(|f| f.sha256.clone())
        .unwrap_or_default();
    let ckpt_manifest = crate::manifest::read_manifest(beside(&a.target.checkpoint)).ok();
    Ok(ReportMeta {
        checkpoint_sha256: file_hash(&a.target.checkpoint)?,
        corpus_id,
        seed: ckpt_manifest.and_then(|m| m.seed).unwrap_or(0),
        n_examples: n,
    })
}

fn sweep(a: SweepArgs, argv: &[String]) -> Result<()> {
    let mut m = RunManifest::start("sweep", argv);
    let (t, _, points) = sweep_common(&a, &mut m)?;
    let report = build_report(&points, None, meta(&a, t.examples.len())?)?;
    let files = write_report(&a.out, &report)?;
    for p in &points {
        out(format!(
            "epsilon {}  rate {:.4}  bleu {:.4}  log_ppl {:.4}",
            p.epsilon, p.misclassification_rate, p.mean_bleu, p.mean_log_perplexity
        ));
    }
    for f in files.all() {
        m.output(f)?;
    }
    m.finish(a.out.join(MANIFEST_FILE))?;
    Ok(())
}

fn eval(a: EvalArgs, argv: &[String]) -> Result<()> {
    let mut m = RunManifest::start("eval", argv);
    let (t, lm, points) = sweep_common(&a.sweep, &mut m)?;
    check_epsilons(&a.match_epsilons)?;
    let cmp = compare_methods(
        &t.model,
        &t.examples,
        &lm,
        &a.match_epsilons,
        &a.jsma_budgets,
        a.tolerance,
        a.sweep.target.max_len,
    )?;
    let report = build_report(&points, Some(cmp), meta(&a.sweep, t.examples.len())?)?;
    let files = write_report(&a.sweep.out, &report)?;
    out(crate::report::render_summary(&report).trim_end());
    for f in files.all() {
        m.output(f)?;
    }
    m.set("tolerance", a.tolerance);
    let budgets: Vec<String> = a.jsma_budgets.iter().map(|k| k.to_string()).collect();
    m.set("jsma_budgets", budgets.join(","));
    m.finish(a.sweep.out.join(MANIFEST_FILE))?;
    Ok(())
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .map_err(|e| Error::Harness(format!("runtime: {e}")))
}

fn blackbox(a: BlackboxArgs, argv: &[String]) -> Result<()> {
    let mut m = RunManifest::start("blackbox", argv);
    let records = read_records(&a.records)?;
    if records.is_empty() {
        return Err(Error::Usage(format!("{} holds no records", a.records.display())));
    }
    let items: Vec<BlackboxItem> = records.iter().map(BlackboxItem::from).collect();
    let behavior = a.mock.as_deref().map(str::parse::<MockBehavior>).transpose()?;
    let rt = runtime()?;
    let report = rt.block_on(async {
        let mock = match behavior {
            Some(b) => {
                let mut cfg = MockConfig::new(b);
                cfg.marker = a.marker.clone();
                Some(MockServer::start(0, cfg).await?)
            }
            None => None,
        };
        let base = match (&mock, &a.endpoint) {
            (Some(s), _) => s.base_url(),
            (None, Some(u)) => u.clone(),
            (None, None) => return Err(Error::Usage("give --endpoint or --mock".into())),
        };
        let cfg = EndpointConfig {
            base_url: base,
            token_env: a.token_env.clone(),
            timeout: Duration::from_millis(a.timeout_ms),
            max_retries: a.max_retries,
            max_concurrent: a.concurrency,
            requests_per_second: a.rps,
            backoff_base: Duration::from_millis(a.backoff_ms),
        };
        let client = Arc::new(Client::new(cfg)?);
        let report = client.evaluate(&items).await;
        if let Some(s) = mock {
            s.shutdown().await;
        }
        report
    })?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    out(&json);
    m.input(&a.records)?;
    m.set("target", a.mock.as_deref().map(|b| format!("mock:{b}")).unwrap_or_else(|| a.endpoint.clone().unwrap_or_default()));
    m.set("rps", a.rps);
    m.set("concurrency", a.concurrency);
    m.set("max_retries", a.max_retries);
    let manifest_path = match &a.out {
        Some(p) => {
            write_atomic(p, format!("{json}\n").as_bytes())?;
            m.output(p)?;
            beside(p)
        }
        None => {
            let mut p = a.records.clone().into_os_string();
            p.push(".blackbox");
            beside(Path::new(&p))
        }
    };
    m.finish(manifest_path)?;
    if report.n_scored_pairs == 0 {
        return Err(Error::Harness(format!("all {} queries failed", report.n_queries)));
    }
    Ok(())
}

fn mock_serve(a: MockServeArgs) -> Result<()> {
    let behavior: MockBehavior = a.behavior.parse()?;
    let rt = runtime()?;
    rt.block_on(async {
        let mut cfg = MockConfig::new(behavior);
        cfg.fail_first_n = a.fail_first;
        cfg.marker = a.marker;
        let server = MockServer::start(a.port, cfg).await?;
        out(format!("listening on {}", server.base_url()));
        let _ = tokio::signal::ctrl_c().await;
        server.shutdown().await;
        Ok(())
    })
}
