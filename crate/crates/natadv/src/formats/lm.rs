use std::path::Path;

use natadv_core::lm::NgramLm;
use natadv_core::text::TokenId;

use super::{lines, read_to_string, write_atomic};
use crate::{Error, Result};

const MAGIC: &str = "ngram";

/// Header `ngram<TAB>order<TAB>alpha<TAB>vocab`, then one
/// `context ids<TAB>token<TAB>count` line per observed n-gram.
pub fn write_lm(path: impl AsRef<Path>, lm: &NgramLm) -> Result<()> {
    let mut out = format!("{MAGIC}\t{}\t{}\t{}\n", lm.order(), lm.alpha(), lm.vocab_size());
    for (ctx, w, c) in lm.counts() {
        let ctx: Vec<String> = ctx.iter().map(|i| i.to_string()).collect();
        out.push_str(&format!("{}\t{w}\t{c}\n", ctx.join(" ")));
    }
    write_atomic(path, out.as_bytes())
}

pub fn read_lm(path: impl AsRef<Path>) -> Result<NgramLm> {
    let path = path.as_ref();
    let raw = read_to_string(path)?;
    let mut it = lines(&raw);
    let (_, header) = it.next().ok_or_else(|| Error::format(path, 1, "empty language model file"))?;
    let h: Vec<&str> = header.split('\t').collect();
    if h.len() != 4 || h[0] != MAGIC {
        return Err(Error::format(path, 1, "expected `ngram<TAB>order<TAB>alpha<TAB>vocab`"));
    }
    fn bad<E>(path: &Path, n: usize) -> impl Fn(E) -> Error + '_ {
        move |_| Error::format(path, n, "unparsable number")
    }
    let order: usize = h[1].parse().map_err(bad(path, 1))?;
    let alpha: f64 = h[2].parse().map_err(bad(path, 1))?;
    let vocab: usize = h[3].parse().map_err(bad(path, 1))?;
    let mut lm = NgramLm::new(order, alpha, vocab).map_err(|e| Error::format(path, 1, e.to_string()))?;
    for (n, line) in it {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(Error::format(path, n, "expected `context<TAB>token<TAB>count`"));
        }
        let ctx = f[0]
            .split(' ')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<TokenId>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(bad(path, n))?;
        let w: TokenId = f[1].parse().map_err(bad(path, n))?;
        let c: u64 = f[2].parse().map_err(bad(path, n))?;
        lm.add_count(&ctx, w, c).map_err(|e| Error::format(path, n, e.to_string()))?;
    }
    Ok(lm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use natadv_core::text::TokenSequence;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("lm.tsv");
        let corpus = [TokenSequence::new(vec![4, 5, 6]), TokenSequence::new(vec![5, 5])];
        for order in [1, 2, 3] {
            let lm = NgramLm::train(&corpus, order, 0.1, 9).unwrap();
            write_lm(&p, &lm).unwrap();
            assert_eq!(read_lm(&p).unwrap(), lm);
        }
    }
}
