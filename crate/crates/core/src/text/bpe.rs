//! Byte-pair-encoding subword segmentation.
//!
//! Words start as a sequence of characters followed by a standalone
//! end-of-word symbol. Learning repeatedly merges the most frequent adjacent
//! pair (ties go to the lexicographically smallest pair) until the merge
//! budget is spent or no pair occurs at least twice.
//!
//! Encoded output attaches a leftover end-of-word symbol to the subword in
//! front of it, so `abc` under the single merge `a b` segments as
//! `ab c</w>`. Because a merge `(x, </w>)` produces the same string, both
//! paths yield identical subwords.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::{Error, Result};

pub const END_OF_WORD: &str = "</w>";

/// Ordered merge rules; a rule's rank is its position in learning order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BpeModel {
    merges: Vec<(String, String)>,
    ranks: BTreeMap<(String, String), usize>,
}

impl BpeModel {
    pub fn from_merges(merges: Vec<(String, String)>) -> Result<Self> {
        let mut ranks = BTreeMap::new();
        for (rank, pair) in merges.iter().enumerate() {
            if pair.0.is_empty() || pair.1.is_empty() {
                return Err(Error::contract("merge rule with an empty side"));
            }
            if ranks.insert(pair.clone(), rank).is_some() {
                return Err(Error::contract(alloc::format!(
                    "duplicate merge rule `{} {}`",
                    pair.0,
                    pair.1
                )));
            }
        }
        Ok(BpeModel { merges, ranks })
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn rank(&self, left: &str, right: &str) -> Option<usize> {
        self.ranks.get(&(left.to_string(), right.to_string())).copied()
    }

    /// Learns up to `num_merges` rules from a word frequency table.
    pub fn learn(word_frequencies: &BTreeMap<String, u64>, num_merges: usize) -> Result<Self> {
        if word_frequencies.is_empty() {
            return Err(Error::contract("empty word frequency table"));
        }
        let mut interner = Interner::default();
        let eow = interner.intern(END_OF_WORD);
        let mut words: Vec<(Vec<u32>, u64)> = word_frequencies
            .iter()
            .filter(|(w, &c)| !w.is_empty() && c > 0)
            .map(|(w, &c)| {
                let mut syms: Vec<u32> = w.chars().map(|ch| interner.intern(ch.encode_utf8(&mut [0; 4]))).collect();
                syms.push(eow);
                (syms, c)
            })
            .collect();

        let mut pair_counts: BTreeMap<(u32, u32), u64> = BTreeMap::new();
        for (syms, c) in &words {
            for pair in syms.windows(2) {
                *pair_counts.entry((pair[0], pair[1])).or_insert(0) += c;
            }
        }

        let mut merges = Vec::new();
        while merges.len() < num_merges {
            let best = pair_counts
                .iter()
                .filter(|(_, &c)| c >= 2)
                .max_by(|(pa, ca), (pb, cb)| {
                    ca.cmp(cb).then_with(|| {
                        // Smaller pair wins a tie, so reverse the ordering.
                        let ka = (interner.get(pa.0), interner.get(pa.1));
                        let kb = (interner.get(pb.0), interner.get(pb.1));
                        kb.cmp(&ka)
                    })
                })
                .map(|(&p, _)| p);
            let Some((left, right)) = best else { break };

            let merged_str = {
                let mut s = String::from(interner.get(left));
                s.push_str(interner.get(right));
                s
            };
            let merged = interner.intern(&merged_str);
            merges.push((interner.get(left).to_string(), interner.get(right).to_string()));

            for (syms, c) in words.iter_mut() {
                if !syms.windows(2).any(|p| p[0] == left && p[1] == right) {
                    continue;
                }
                for pair in syms.windows(2) {
                    decrement(&mut pair_counts, (pair[0], pair[1]), *c);
                }
                *syms = merge_pair(syms, left, right, merged);
                for pair in syms.windows(2) {
                    *pair_counts.entry((pair[0], pair[1])).or_insert(0) += *c;
                }
            }
        }
        BpeModel::from_merges(merges)
    }

    /// Segments a single word, applying merges in rank order.
    pub fn encode_word(&self, word: &str) -> Vec<String> {
        if word.is_empty() {
            return Vec::new();
        }
        let mut syms: Vec<String> = word.chars().map(|c| c.to_string()).collect();
        syms.push(END_OF_WORD.to_string());

        loop {
            let best = syms
                .windows(2)
                .filter_map(|p| self.ranks.get(&(p[0].clone(), p[1].clone())).map(|&r| (r, p[0].clone(), p[1].clone())))
                .min_by_key(|(r, _, _)| *r);
            let Some((_, left, right)) = best else { break };
            let mut out = Vec::with_capacity(syms.len());
            let mut i = 0;
            while i < syms.len() {
                if i + 1 < syms.len() && syms[i] == left && syms[i + 1] == right {
                    let mut m = core::mem::take(&mut syms[i]);
                    m.push_str(&syms[i + 1]);
                    out.push(m);
                    i += 2;
                } else {
                    out.push(core::mem::take(&mut syms[i]));
                    i += 1;
                }
            }
            syms = out;
        }

        if syms.len() >= 2 && syms.last().map(String::as_str) == Some(END_OF_WORD) {
            syms.pop();
            if let Some(last) = syms.last_mut() {
                last.push_str(END_OF_WORD);
            }
        }
        syms
    }

    /// Every subword [`encode_word`](Self::encode_word) can emit for words
    /// drawn from `alphabet`: single characters, the merge results, and
    /// either of those with the end-of-word marker attached.
    pub fn symbol_set<'a>(&self, alphabet: impl IntoIterator<Item = char> + 'a) -> alloc::collections::BTreeSet<String> {
        let mut set = alloc::collections::BTreeSet::new();
        let mut add = |s: String| {
            let mut with_eow = s.clone();
            with_eow.push_str(END_OF_WORD);
            set.insert(s);
            set.insert(with_eow);
        };
        for c in alphabet {
            add(c.to_string());
        }
        for (l, r) in &self.merges {
            let mut m = l.clone();
            m.push_str(r);
            add(m);
        }
        set
    }
}

fn decrement(counts: &mut BTreeMap<(u32, u32), u64>, key: (u32, u32), by: u64) {
    if let Some(c) = counts.get_mut(&key) {
        *c = c.saturating_sub(by);
        if *c == 0 {
            counts.remove(&key);
        }
    }
}

fn merge_pair(syms: &[u32], left: u32, right: u32, merged: u32) -> Vec<u32> {
    let mut out = Vec::with_capacity(syms.len());
    let mut i = 0;
    while i < syms.len() {
        if i + 1 < syms.len() && syms[i] == left && syms[i + 1] == right {
            out.push(merged);
            i += 2;
        } else {
            out.push(syms[i]);
            i += 1;
        }
    }
    out
}

#[derive(Default)]
struct Interner {
    strings: Vec<String>,
    ids: BTreeMap<String, u32>,
}

impl Interner {
    fn intern(&mut self, s: &str) -> u32 {
        if let Some(&id) = self.ids.get(s) {
            return id;
        }
        let id = self.strings.len() as u32;
        self.strings.push(s.to_string());
        self.ids.insert(s.to_string(), id);
        id
    }

    fn get(&self, id: u32) -> &str {
        &self.strings[id as usize]
    }
}
