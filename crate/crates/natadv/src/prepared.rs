//! A prepared data directory: subword model, vocabulary, encoded splits and
//! a language model for fluency scoring.

use std::path::{Path, PathBuf};

use natadv_core::lm::NgramLm;
use natadv_core::text::{LabeledExample, PipelineConfig, TextEncoder};

use crate::corpus::{load_corpus, split, Corpus};
use crate::formats::{read_bpe, read_dataset, read_lm, read_vocab, write_bpe, write_dataset, write_lm, write_vocab};
use crate::manifest::read_manifest;
use crate::{Error, Result};

pub const BPE_FILE: &str = "bpe.txt";
pub const VOCAB_FILE: &str = "vocab.tsv";
pub const TRAIN_FILE: &str = "train.tsv";
pub const TEST_FILE: &str = "test.tsv";
pub const LM_FILE: &str = "lm.tsv";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrepareConfig {
    pub pipeline: PipelineConfig,
    pub lm_order: usize,
    pub lm_alpha: f64,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        PrepareConfig {
            pipeline: PipelineConfig::default(),
            lm_order: natadv_core::lm::DEFAULT_ORDER,
            lm_alpha: natadv_core::lm::DEFAULT_ALPHA,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub encoder: TextEncoder,
    pub train: Vec<LabeledExample>,
    pub test: Vec<LabeledExample>,
    pub lm: NgramLm,
}

impl Prepared {
    /// Splits the corpus, fits subwords and vocabulary on the training split
    /// only, encodes both splits and counts n-grams over the training ids.
    pub fn build(corpus: &Corpus, cfg: &PrepareConfig) -> Result<Self> {
        let (train_rows, test_rows) = split(&corpus.rows);
        if train_rows.is_empty() {
            return Err(Error::Usage("corpus too small to split".into()));
        }
        let texts: Vec<&str> = train_rows.iter().map(|r| r.text.as_str()).collect();
        let encoder = TextEncoder::fit(&texts, &cfg.pipeline)?;
        let encode = |rows: &[crate::corpus::CorpusRow]| -> Vec<LabeledExample> {
            rows.iter().map(|r| encoder.example(r.label, r.text.clone())).collect()
        };
        let train = encode(&train_rows);
        let test = encode(&test_rows);
        let lm = NgramLm::train(train.iter().map(|e| &e.ids), cfg.lm_order, cfg.lm_alpha, encoder.vocab.len())?;
        Ok(Prepared {
            encoder,
            train,
            test,
            lm,
        })
    }

    pub fn from_csv(path: impl AsRef<Path>, cfg: &PrepareConfig) -> Result<Self> {
        Self::build(&load_corpus(path)?, cfg)
    }

    /// Writes every artifact and returns the paths written.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let p = |f: &str| dir.join(f);
        write_bpe(p(BPE_FILE), &self.encoder.bpe)?;
        write_vocab(p(VOCAB_FILE), &self.encoder.vocab)?;
        write_dataset(p(TRAIN_FILE), &self.train)?;
        write_dataset(p(TEST_FILE), &self.test)?;
        write_lm(p(LM_FILE), &self.lm)?;
        Ok([BPE_FILE, VOCAB_FILE, TRAIN_FILE, TEST_FILE, LM_FILE].iter().map(|f| p(f)).collect())
    }

    /// Reads a directory written by [`Prepared::write`]. The crop length
    /// comes from the directory's manifest.
    pub fn load(dir: &Path) -> Result<Self> {
        if !dir.is_dir() {
            return Err(Error::Usage(format!("data directory {} does not exist", dir.display())));
        }
        let manifest = read_manifest(dir.join(MANIFEST_FILE))?;
        let max_units = manifest
            .config
            .get("max_units")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::format(dir.join(MANIFEST_FILE), 0, "missing max_units"))?;
        let encoder = TextEncoder {
            bpe: read_bpe(dir.join(BPE_FILE))?,
            vocab: read_vocab(dir.join(VOCAB_FILE))?,
            max_units,
        };
        let train = read_dataset(dir.join(TRAIN_FILE))?;
        let test = read_dataset(dir.join(TEST_FILE))?;
        let lm = read_lm(dir.join(LM_FILE))?;
        if lm.vocab_size() != encoder.vocab.len() {
            return Err(Error::format(dir.join(LM_FILE), 1, "language model vocabulary size mismatch"));
        }
        for (file, set) in [(TRAIN_FILE, &train), (TEST_FILE, &test)] {
            if let Some(ex) = set.iter().find(|e| e.ids.ids().iter().any(|&i| i as usize >= encoder.vocab.len())) {
                return Err(Error::format(dir.join(file), 0, format!("id out of vocabulary in `{}`", ex.text)));
            }
        }
        Ok(Prepared {
            encoder,
            train,
            test,
            lm,
        })
    }
}
