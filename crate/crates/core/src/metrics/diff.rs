use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

/// One step of a token alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffOp<'a, T> {
    Keep(&'a T),
    Delete(&'a T),
    Insert(&'a T),
}

/// Longest-common-subsequence alignment of two token lists. Matches are
/// taken as early as possible and deletions come before insertions.
pub fn diff_tokens<'a, T: PartialEq>(original: &'a [T], adversarial: &'a [T]) -> Vec<DiffOp<'a, T>> {
    let (n, m) = (original.len(), adversarial.len());
    // lcs[i][j] = LCS length of original[i..] and adversarial[j..]
    let mut lcs = vec![vec![0u32; m + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            lcs[i][j] = if original[i] == adversarial[j] {
                lcs[i + 1][j + 1] + 1
            } else {
                lcs[i + 1][j].max(lcs[i][j + 1])
            };
        }
    }
    let mut ops = Vec::with_capacity(n + m);
    let (mut i, mut j) = (0, 0);
    while i < n && j < m {
        if original[i] == adversarial[j] {
            ops.push(DiffOp::Keep(&original[i]));
            i += 1;
            j += 1;
        } else if lcs[i + 1][j] >= lcs[i][j + 1] {
            ops.push(DiffOp::Delete(&original[i]));
            i += 1;
        } else {
            ops.push(DiffOp::Insert(&adversarial[j]));
            j += 1;
        }
    }
    ops.extend(original[i..].iter().map(DiffOp::Delete));
    ops.extend(adversarial[j..].iter().map(DiffOp::Insert));
    ops
}

/// Word diff with deletions as `[-...-]` and insertions as `{+...+}`.
pub fn render_diff<S: AsRef<str> + PartialEq>(original: &[S], adversarial: &[S]) -> String {
    let ops = diff_tokens(original, adversarial);
    let mut parts: Vec<String> = Vec::new();
    let mut k = 0;
    while k < ops.len() {
        match ops[k] {
            DiffOp::Keep(t) => {
                parts.push(String::from(t.as_ref()));
                k += 1;
            }
            DiffOp::Delete(_) | DiffOp::Insert(_) => {
                let start = k;
                let kind = core::mem::discriminant(&ops[start]);
                while k < ops.len() && core::mem::discriminant(&ops[k]) == kind {
                    k += 1;
                }
                let words: Vec<&str> = ops[start..k]
                    .iter()
                    .map(|op| match op {
                        DiffOp::Keep(t) | DiffOp::Delete(t) | DiffOp::Insert(t) => t.as_ref(),
                    })
                    .collect();
                let (open, close) = match ops[start] {
                    DiffOp::Delete(_) => ("[-", "-]"),
                    _ => ("{+", "+}"),
                };
                parts.push(alloc::format!("{open}{}{close}", words.join(" ")));
            }
        }
    }
    parts.join(" ")
}
