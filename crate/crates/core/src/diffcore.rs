//! Line-level diffing and token-level edit distance.
//!
//! The diff is a longest-matching-block recursion: find the longest block of
//! identical lines, then recurse on the flanks. No junk heuristics are
//! applied and ties are broken deterministically (earliest position in `a`,
//! then earliest in `b`), so results are stable across implementations.

use std::collections::HashMap;
use std::fmt;

/// Tokens of one line, in order. Slices borrow from the input line.
pub type TokenSeq<'a> = Vec<&'a str>;

/// Splits a line into tokens: each maximal run of identifier characters
/// (letters, digits, underscore) is one token, every other non-space
/// character is its own token, whitespace only separates.
pub fn tokenize(line: &str) -> TokenSeq<'_> {
    let mut tokens = Vec::new();
    let mut run_start: Option<usize> = None;
    for (idx, ch) in line.char_indices() {
        if ch.is_alphanumeric() || ch == '_' {
            if run_start.is_none() {
                run_start = Some(idx);
            }
        } else {
            if let Some(start) = run_start.take() {
                tokens.push(&line[start..idx]);
            }
            if !ch.is_whitespace() {
                tokens.push(&line[idx..idx + ch.len_utf8()]);
            }
        }
    }
    if let Some(start) = run_start {
        tokens.push(&line[start..]);
    }
    tokens
}

/// Minimal number of token insertions, deletions, and substitutions
/// transforming `a` into `b`. Two-row dynamic program.
pub fn token_levenshtein(a: &[&str], b: &[&str]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, at) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, bt) in b.iter().enumerate() {
            let cost = usize::from(at != bt);
            cur[j + 1] = (cur[j] + 1).min(prev[j + 1] + 1).min(prev[j] + cost);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Normalized token-level error between two lines:
/// `lev(tokens(t), tokens(p)) / max(|tokens(t)|, |tokens(p)|, 1)`.
/// Always in `[0, 1]`; `0` iff both lines tokenize identically.
pub fn normalized_line_error(t_line: &str, p_line: &str) -> f64 {
    let t = tokenize(t_line);
    let p = tokenize(p_line);
    let denom = t.len().max(p.len()).max(1);
    token_levenshtein(&t, &p) as f64 / denom as f64
}

/// Splits text into lines on `\n` without losing bytes: joining the result
/// with `\n` reproduces the input. Empty text has no lines.
pub fn split_lines(text: &str) -> Vec<&str> {
    if text.is_empty() {
        Vec::new()
    } else {
        text.split('\n').collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpTag {
    Equal,
    Replace,
    Delete,
    Insert,
}

impl fmt::Display for OpTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            OpTag::Equal => "equal",
            OpTag::Replace => "replace",
            OpTag::Delete => "delete",
            OpTag::Insert => "insert",
        };
        f.write_str(name)
    }
}

/// One edit operation over half-open line ranges `a[a_start..a_end]` and
/// `b[b_start..b_end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Opcode {
    pub tag: OpTag,
    pub a_start: usize,
    pub a_end: usize,
    pub b_start: usize,
    pub b_end: usize,
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "a[{}:{}] {} b[{}:{}]",
            self.a_start, self.a_end, self.tag, self.b_start, self.b_end
        )
    }
}

/// Edit script whose opcodes tile both input sequences completely, in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EditScript {
    opcodes: Vec<Opcode>,
}

impl EditScript {
    pub fn opcodes(&self) -> &[Opcode] {
        &self.opcodes
    }

    /// Total number of lines covered by equal opcodes.
    pub fn equal_total(&self) -> usize {
        self.opcodes
            .iter()
            .filter(|op| op.tag == OpTag::Equal)
            .map(|op| op.a_end - op.a_start)
            .sum()
    }

    pub fn is_all_equal(&self) -> bool {
        self.opcodes.iter().all(|op| op.tag == OpTag::Equal)
    }
}

impl fmt::Display for EditScript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (idx, op) in self.opcodes.iter().enumerate() {
            if idx > 0 {
                writeln!(f)?;
            }
            write!(f, "{op}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Block {
    a: usize,
    b: usize,
    len: usize,
}

/// Longest matching block within `a[alo..ahi]` and `b[blo..bhi]`; ties are
/// broken by earliest start in `a`, then earliest start in `b`.
#[allow(clippy::needless_range_loop)]
fn longest_match(
    a: &[&str],
    b2j: &HashMap<&str, Vec<usize>>,
    alo: usize,
    ahi: usize,
    blo: usize,
    bhi: usize,
) -> Block {
    let mut best = Block { a: alo, b: blo, len: 0 };
    // j2len maps a position j in b to the length of the match ending at
    // (i, j); rebuilt per row.
    let mut j2len: HashMap<usize, usize> = HashMap::new();
    for i in alo..ahi {
        let mut new_j2len: HashMap<usize, usize> = HashMap::new();
        if let Some(positions) = b2j.get(a[i]) {
            for &j in positions {
                if j < blo {
                    continue;
                }
                if j >= bhi {
                    break;
                }
                let k = j.checked_sub(1).and_then(|p| j2len.get(&p)).copied().unwrap_or(0) + 1;
                new_j2len.insert(j, k);
                if k > best.len {
                    best = Block {
                        a: i + 1 - k,
                        b: j + 1 - k,
                        len: k,
                    };
                }
            }
        }
        j2len = new_j2len;
    }
    best
}

/// Computes the longest-matching-block edit script between two line
/// sequences. Deterministic for fixed inputs.
pub fn line_diff(a: &[&str], b: &[&str]) -> EditScript {
    let mut b2j: HashMap<&str, Vec<usize>> = HashMap::new();
    for (j, line) in b.iter().enumerate() {
        b2j.entry(line).or_default().push(j);
    }

    // Iterative flank recursion, collecting matching blocks in order.
    let mut blocks: Vec<Block> = Vec::new();
    let mut queue: Vec<(usize, usize, usize, usize)> = vec![(0, a.len(), 0, b.len())];
    while let Some((alo, ahi, blo, bhi)) = queue.pop() {
        let m = longest_match(a, &b2j, alo, ahi, blo, bhi);
        if m.len > 0 {
            blocks.push(m);
            queue.push((alo, m.a, blo, m.b));
            queue.push((m.a + m.len, ahi, m.b + m.len, bhi));
        }
    }
    blocks.sort_by_key(|blk| (blk.a, blk.b));

    // Merge adjacent blocks, then emit opcodes covering the gaps.
    let mut merged: Vec<Block> = Vec::new();
    for blk in blocks {
        match merged.last_mut() {
            Some(last) if last.a + last.len == blk.a && last.b + last.len == blk.b => {
                last.len += blk.len;
            }
            _ => merged.push(blk),
        }
    }

    let mut opcodes = Vec::new();
    let (mut ai, mut bi) = (0usize, 0usize);
    for blk in &merged {
        let tag = match (ai < blk.a, bi < blk.b) {
            (true, true) => Some(OpTag::Replace),
            (true, false) => Some(OpTag::Delete),
            (false, true) => Some(OpTag::Insert),
            (false, false) => None,
        };
        if let Some(tag) = tag {
            opcodes.push(Opcode {
                tag,
                a_start: ai,
                a_end: blk.a,
                b_start: bi,
                b_end: blk.b,
            });
        }
        opcodes.push(Opcode {
            tag: OpTag::Equal,
            a_start: blk.a,
            a_end: blk.a + blk.len,
            b_start: blk.b,
            b_end: blk.b + blk.len,
        });
        ai = blk.a + blk.len;
        bi = blk.b + blk.len;
    }
    if ai < a.len() || bi < b.len() {
        let tag = match (ai < a.len(), bi < b.len()) {
            (true, true) => OpTag::Replace,
            (true, false) => OpTag::Delete,
            _ => OpTag::Insert,
        };
        opcodes.push(Opcode {
            tag,
            a_start: ai,
            a_end: a.len(),
            b_start: bi,
            b_end: b.len(),
        });
    }
    EditScript { opcodes }
}
