//! Sharded exact-substring deduplication.
//!
//! Documents of one shard are concatenated with a two-byte separator
//! (`0xFF 0xFE`, never present in UTF-8) and indexed with a suffix array.
//! Any span of at least `min_length` units that also occurs at an earlier
//! buffer position is cut; the earliest occurrence is always kept. Shards
//! are processed independently, so duplicates across shards survive.
//!
//! Excision can join text into new repeats, so a shard is re-indexed until
//! a pass removes nothing.

pub mod sharding;
pub mod suffix_array;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::Shard;
use crate::error::{Error, Result};
use crate::tokenize::Tokenizer;

pub use sharding::{balanced_cuts, shard_corpus};
pub use suffix_array::{lcp_array, suffix_array, suffix_array_symbols};

pub const SEPARATOR: [u8; 2] = [0xFF, 0xFE];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DedupUnit {
    #[default]
    Bytes,
    Tokens,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DedupConfig {
    /// Minimum repeated length, in `unit`s.
    pub min_length: usize,
    pub unit: DedupUnit,
    /// Widen cut ranges to whole characters. When off, ranges shrink to the
    /// characters fully inside them instead.
    pub snap_to_char_boundary: bool,
}

impl Default for DedupConfig {
    fn default() -> Self {
        DedupConfig {
            min_length: 50,
            unit: DedupUnit::Bytes,
            snap_to_char_boundary: true,
        }
    }
}

/// Byte span to remove from one document, half-open.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct DuplicateRange {
    pub doc_index: usize,
    pub start_byte: usize,
    pub end_byte: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DocOffset {
    pub doc: usize,
    pub start: usize,
    pub end: usize,
}

/// Concatenated shard content ready for suffix-array queries.
#[derive(Debug, Clone)]
pub struct ConcatIndex {
    symbols: Vec<u32>,
    upper: u32,
    doc_offsets: Vec<DocOffset>,
    /// Token mode: byte span in the owning document for each symbol.
    token_spans: Option<Vec<(usize, usize)>>,
}

impl ConcatIndex {
    /// Byte-level index over `texts` joined by [`SEPARATOR`].
    pub fn from_texts<S: AsRef<str>>(texts: &[S]) -> Self {
        let total: usize = texts.iter().map(|t| t.as_ref().len() + SEPARATOR.len()).sum();
        let mut symbols = Vec::with_capacity(total);
        let mut doc_offsets = Vec::with_capacity(texts.len());
        for (doc, text) in texts.iter().enumerate() {
            if doc > 0 {
                symbols.extend(SEPARATOR.iter().map(|&b| u32::from(b)));
            }
            let start = symbols.len();
            symbols.extend(text.as_ref().bytes().map(u32::from));
            doc_offsets.push(DocOffset { doc, start, end: symbols.len() });
        }
        ConcatIndex {
            symbols,
            upper: 255,
            doc_offsets,
            token_spans: None,
        }
    }

    /// Token-level index: every distinct token surface gets one symbol, with
    /// symbol 0 as the separator.
    pub fn from_tokens<S: AsRef<str>>(texts: &[S], tokenizer: &dyn Tokenizer) -> Result<Self> {
        let mut intern: HashMap<&str, u32> = HashMap::new();
        let mut symbols = Vec::new();
        let mut spans = Vec::new();
        let mut doc_offsets = Vec::with_capacity(texts.len());
        for (doc, text) in texts.iter().enumerate() {
            let text = text.as_ref();
            if doc > 0 {
                symbols.push(0);
                spans.push((0, 0));
            }
            let start = symbols.len();
            for t in tokenizer.tokenize_spans(text)? {
                let next = intern.len() as u32 + 1;
                symbols.push(*intern.entry(&text[t.start..t.end]).or_insert(next));
                spans.push((t.start, t.end));
            }
            doc_offsets.push(DocOffset { doc, start, end: symbols.len() });
        }
        Ok(ConcatIndex {
            symbols,
            upper: intern.len() as u32,
            doc_offsets,
            token_spans: Some(spans),
        })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn doc_offsets(&self) -> &[DocOffset] {
        &self.doc_offsets
    }

    /// The concatenated bytes; only meaningful for byte-level indexes.
    pub fn buffer(&self) -> Option<Vec<u8>> {
        match self.token_spans {
            None => Some(self.symbols.iter().map(|&s| s as u8).collect()),
            Some(_) => None,
        }
    }

    fn is_separator(&self, sym: u32) -> bool {
        match self.token_spans {
            None => sym == u32::from(SEPARATOR[0]) || sym == u32::from(SEPARATOR[1]),
            Some(_) => sym == 0,
        }
    }

    /// Buffer spans `[p, p + len)` that repeat an earlier position, merged.
    pub fn later_duplicate_spans(&self, min_length: usize) -> Vec<(usize, usize)> {
        let n = self.symbols.len();
        if n == 0 || min_length == 0 {
            return Vec::new();
        }
        let sa = suffix_array_symbols(&self.symbols, self.upper);
        let lcp = lcp_array(&self.symbols, &sa);

        // Longest match with any suffix starting earlier in the buffer. The
        // best partner is the nearest such suffix on either side in SA order.
        let mut best = vec![0usize; n];
        nearest_earlier_lcp(&sa, 0..n, |i| lcp[i], &mut best);
        nearest_earlier_lcp(&sa, (0..n).rev(), |i| if i + 1 < n { lcp[i + 1] } else { 0 }, &mut best);

        // Matches never extend into a separator.
        let mut spans: Vec<(usize, usize)> = Vec::new();
        let mut next_sep = n;
        let mut clipped = vec![0usize; n];
        for p in (0..n).rev() {
            if self.is_separator(self.symbols[p]) {
                next_sep = p;
            }
            clipped[p] = best[p].min(next_sep - p);
        }
        for (p, &len) in clipped.iter().enumerate() {
            if len < min_length {
                continue;
            }
            match spans.last_mut() {
                Some(last) if p <= last.1 => last.1 = last.1.max(p + len),
                _ => spans.push((p, p + len)),
            }
        }
        spans
    }

    /// Map buffer spans onto per-document byte ranges.
    fn to_ranges(&self, spans: &[(usize, usize)]) -> Vec<DuplicateRange> {
        let mut out = Vec::with_capacity(spans.len());
        let mut d = 0;
        for &(s, e) in spans {
            while self.doc_offsets[d].end <= s {
                d += 1;
            }
            let off = self.doc_offsets[d];
            debug_assert!(e <= off.end, "span crosses a separator");
            let (start_byte, end_byte) = match &self.token_spans {
                None => (s - off.start, e - off.start),
                Some(t) => (t[s].0, t[e - 1].1),
            };
            out.push(DuplicateRange { doc_index: off.doc, start_byte, end_byte });
        }
        out
    }
}

/// For each SA index, in scan order, the LCP with the nearest earlier-scanned
/// suffix whose start position is smaller. `adjacent(i)` is the LCP between
/// `i` and the previously scanned index. Results are max-merged into `best`.
fn nearest_earlier_lcp(
    sa: &[usize],
    order: impl Iterator<Item = usize>,
    adjacent: impl Fn(usize) -> usize,
    best: &mut [usize],
) {
    // (position, lcp with the entry above it; for the top: with the current index)
    let mut stack: Vec<(usize, usize)> = Vec::new();
    for i in order {
        let pos = sa[i];
        if let Some(top) = stack.last_mut() {
            top.1 = adjacent(i);
        }
        let mut run = usize::MAX;
        while let Some(&(p, link)) = stack.last() {
            run = run.min(link);
            if p < pos {
                best[pos] = best[pos].max(run);
                break;
            }
            stack.pop();
            if let Some(below) = stack.last_mut() {
                below.1 = below.1.min(run);
            }
        }
        if let Some(top) = stack.last_mut() {
            top.1 = run;
        }
        stack.push((pos, 0));
    }
}

/// Ranges of later duplicates, per document, merged and sorted.
pub fn find_repeats(index: &ConcatIndex, min_length: usize) -> Vec<DuplicateRange> {
    let spans = index.later_duplicate_spans(min_length);
    merge_ranges(index.to_ranges(&spans))
}

fn merge_ranges(mut ranges: Vec<DuplicateRange>) -> Vec<DuplicateRange> {
    ranges.sort();
    let mut out: Vec<DuplicateRange> = Vec::with_capacity(ranges.len());
    for r in ranges {
        match out.last_mut() {
            Some(last) if last.doc_index == r.doc_index && r.start_byte <= last.end_byte => {
                last.end_byte = last.end_byte.max(r.end_byte)
            }
            _ => out.push(r),
        }
    }
    out
}

fn snap(text: &str, range: DuplicateRange, outward: bool) -> DuplicateRange {
    let (mut s, mut e) = (range.start_byte, range.end_byte);
    if outward {
        while !text.is_char_boundary(s) {
            s -= 1;
        }
        while !text.is_char_boundary(e) {
            e += 1;
        }
    } else {
        while !text.is_char_boundary(s) {
            s += 1;
        }
        while !text.is_char_boundary(e) {
            e -= 1;
        }
        e = e.max(s);
    }
    DuplicateRange { start_byte: s, end_byte: e, ..range }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DedupStats {
    pub shard: usize,
    pub docs_in: usize,
    pub docs_out: usize,
    pub bytes_in: usize,
    pub bytes_out: usize,
    pub bytes_removed: usize,
    pub docs_touched: usize,
    pub docs_dropped: usize,
    /// Index/cut passes that removed something.
    pub passes: usize,
}

impl DedupStats {
    pub fn summary(&self) -> serde_json::Value {
        serde_json::json!({
            "shard": self.shard,
            "bytes_in": self.bytes_in,
            "bytes_removed": self.bytes_removed,
            "docs_dropped": self.docs_dropped,
        })
    }
}

/// One pass: find, snap and excise. Returns bytes removed and touched docs.
fn dedup_pass(
    texts: &mut [String],
    config: &DedupConfig,
    tokenizer: Option<&dyn Tokenizer>,
    touched: &mut [bool],
) -> Result<usize> {
    let index = match config.unit {
        DedupUnit::Bytes => ConcatIndex::from_texts(texts),
        DedupUnit::Tokens => {
            let tok = tokenizer.ok_or_else(|| {
                Error::Config("token-unit dedup needs a tokenizer".into())
            })?;
            ConcatIndex::from_tokens(texts, tok)?
        }
    };
    let ranges = find_repeats(&index, config.min_length);
    let snapped: Vec<DuplicateRange> = ranges
        .into_iter()
        .map(|r| snap(&texts[r.doc_index], r, config.snap_to_char_boundary))
        .filter(|r| r.end_byte > r.start_byte)
        .collect();
    let snapped = merge_ranges(snapped);

    let mut removed = 0;
    let mut i = 0;
    while i < snapped.len() {
        let doc = snapped[i].doc_index;
        let text = &texts[doc];
        let mut out = String::with_capacity(text.len());
        let mut cursor = 0;
        while i < snapped.len() && snapped[i].doc_index == doc {
            let r = snapped[i];
            out.push_str(&text[cursor..r.start_byte]);
            removed += r.end_byte - r.start_byte;
            cursor = r.end_byte;
            i += 1;
        }
        out.push_str(&text[cursor..]);
        texts[doc] = out;
        touched[doc] = true;
    }
    Ok(removed)
}

/// Deduplicate one shard. Documents whose whole text is cut are dropped.
pub fn dedup_shard(
    shard: Shard,
    config: &DedupConfig,
    tokenizer: Option<&dyn Tokenizer>,
) -> Result<(Shard, DedupStats)> {
    let docs_in = shard.documents.len();
    let bytes_in = shard.text_bytes();
    let mut texts: Vec<String> = shard.documents.iter().map(|d| d.text.clone()).collect();
    let mut touched = vec![false; docs_in];
    let mut passes = 0;
    loop {
        let removed = dedup_pass(&mut texts, config, tokenizer, &mut touched)?;
        if removed == 0 {
            break;
        }
        passes += 1;
    }

    let mut documents = Vec::with_capacity(docs_in);
    let mut docs_dropped = 0;
    for ((mut doc, text), was_touched) in shard.documents.into_iter().zip(texts).zip(&touched) {
        if *was_touched && text.is_empty() {
            docs_dropped += 1;
            continue;
        }
        doc.text = text;
        documents.push(doc);
    }
    let out = Shard { index: shard.index, documents };
    let bytes_out = out.text_bytes();
    let stats = DedupStats {
        shard: shard.index,
        docs_in,
        docs_out: out.documents.len(),
        bytes_in,
        bytes_out,
        bytes_removed: bytes_in - bytes_out,
        docs_touched: touched.iter().filter(|&&t| t).count(),
        docs_dropped,
        passes,
    };
    Ok((out, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;
    use crate::rng::stream_rng;
    use crate::tokenize::WhitespaceTokenizer;
    use proptest::prelude::*;
    use rand::Rng;

    /// Quadratic oracle: is there a substring of length `len` occurring twice
    /// (at distinct positions) inside the documents?
    fn has_repeat(texts: &[&[u8]], len: usize) -> bool {
        let mut windows: Vec<&[u8]> = Vec::new();
        for t in texts {
            if t.len() >= len {
                windows.extend(t.windows(len));
            }
        }
        for i in 0..windows.len() {
            for j in i + 1..windows.len() {
                if windows[i] == windows[j] {
                    return true;
                }
            }
        }
        false
    }

    fn shard_of(texts: &[&str]) -> Shard {
        Shard {
            index: 0,
            documents: texts.iter().enumerate().map(|(i, t)| Document::new(i.to_string(), *t)).collect(),
        }
    }

    fn dedup_texts(texts: &[&str], min_length: usize) -> (Vec<String>, DedupStats) {
        let config = DedupConfig { min_length, ..DedupConfig::default() };
        let (shard, stats) = dedup_shard(shard_of(texts), &config, None).unwrap();
        (shard.documents.into_iter().map(|d| d.text).collect(), stats)
    }

    #[test]
    fn separated_pair() {
        let index = ConcatIndex::from_texts(&["abcdefgh", "abcdefgh"]);
        assert_eq!(index.buffer().unwrap(), b"abcdefgh\xFF\xFEabcdefgh");
        assert_eq!(
            find_repeats(&index, 5),
            vec![DuplicateRange { doc_index: 1, start_byte: 0, end_byte: 8 }]
        );
    }

    #[test]
    fn repeat_within_one_doc() {
        let index = ConcatIndex::from_texts(&["abcabc"]);
        assert_eq!(
            find_repeats(&index, 3),
            vec![DuplicateRange { doc_index: 0, start_byte: 3, end_byte: 6 }]
        );
        assert!(find_repeats(&index, 4).is_empty());
    }

    #[test]
    fn separators_never_match() {
        // "xyz" ends both of the first two docs; the shared suffix runs into
        // the separator and must be clipped there.
        let index = ConcatIndex::from_texts(&["1xyz", "2xyz", "3"]);
        assert!(find_repeats(&index, 4).is_empty());
        assert_eq!(find_repeats(&index, 3).len(), 1);
    }

    #[test]
    fn shared_sentence_is_cut_from_later_doc() {
        let sentence = "The quick brown fox jumps over the lazy dog every day.";
        assert!(sentence.len() >= 50 && sentence.len() < 60);
        let padded = format!("{sentence}!!!!!!");
        let a = format!("First doc opens here. {padded} And closes differently.");
        let b = format!("Second doc has its own start. {padded} Then its own end, too.");
        let (out, stats) = dedup_texts(&[&a, &b], 50);
        assert_eq!(out[0], a);
        assert!(!out[1].contains(sentence));
        // The shared run also takes in the ". " before and the " " after.
        assert_eq!(stats.bytes_removed, padded.len() + 3);
        assert_eq!(stats.docs_dropped, 0);
        let refs: Vec<&[u8]> = out.iter().map(|s| s.as_bytes()).collect();
        assert!(!has_repeat(&refs, 50));
    }

    #[test]
    fn unique_shard_is_untouched() {
        let texts = ["alpha beta gamma", "delta epsilon", "zeta eta theta iota"];
        let (out, stats) = dedup_texts(&texts, 5);
        assert_eq!(out, texts);
        assert_eq!(
            (stats.bytes_removed, stats.docs_touched, stats.docs_dropped, stats.passes),
            (0, 0, 0, 0)
        );
    }

    #[test]
    fn full_copy_is_dropped() {
        let doc = "This whole document is copied verbatim somewhere later in the shard.";
        let (out, stats) = dedup_texts(&[doc, "unrelated", doc], 50);
        assert_eq!(out, vec![doc.to_string(), "unrelated".to_string()]);
        assert_eq!(stats.docs_dropped, 1);
        assert_eq!(stats.docs_out, 2);
    }

    #[test]
    fn originally_empty_docs_are_kept() {
        let (out, stats) = dedup_texts(&["", "abc"], 2);
        assert_eq!(out.len(), 2);
        assert_eq!(stats.docs_dropped, 0);
    }

    #[test]
    fn snapping_keeps_utf8_valid() {
        // The repeated run starts in the middle of 'é' in the second doc.
        // 'é' is C3 A9 and 'ĩ' is C4 A9: only the continuation byte matches.
        let a = "xé0123456789";
        let b = "yĩ0123456789";
        let (out, _) = dedup_texts(&[a, b], 10);
        assert_eq!(out[1], "y");
        let config = DedupConfig { min_length: 10, snap_to_char_boundary: false, ..DedupConfig::default() };
        let (shard, _) = dedup_shard(shard_of(&[a, b]), &config, None).unwrap();
        assert_eq!(shard.documents[1].text, "yĩ");
    }

    #[test]
    fn token_mode() {
        let a = "one two three four five six";
        let b = "zero two three four five seven";
        let config = DedupConfig { min_length: 4, unit: DedupUnit::Tokens, ..DedupConfig::default() };
        let (shard, stats) = dedup_shard(shard_of(&[a, b]), &config, Some(&WhitespaceTokenizer)).unwrap();
        assert_eq!(shard.documents[1].text, "zero  seven");
        assert_eq!(stats.bytes_removed, "two three four five".len());
        assert!(dedup_shard(shard_of(&[a]), &config, None).is_err());
    }

    #[test]
    fn adjacent_marking_gap_is_closed() {
        // Four copies of the same run placed so that suffix order interleaves
        // positions; every copy but the first must go.
        let run = "0123456789";
        let texts = [format!("{run}a"), format!("{run}d"), format!("{run}b"), format!("{run}c")];
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let (out, _) = dedup_texts(&refs, 10);
        assert_eq!(out, vec![format!("{run}a"), "d".into(), "b".into(), "c".into()]);
    }

    fn random_text(rng: &mut impl Rng, len: usize, alphabet: &[char]) -> String {
        (0..len).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect()
    }

    /// Brute-force spans: longest match of each position with any earlier
    /// position, stopping at separators, merged like the indexed version.
    fn brute_spans(buffer: &[u8], min_length: usize) -> Vec<(usize, usize)> {
        let n = buffer.len();
        let mut spans: Vec<(usize, usize)> = Vec::new();
        for p in 0..n {
            let mut best = 0;
            for q in 0..p {
                let mut l = 0;
                while p + l < n && buffer[q + l] == buffer[p + l] && !SEPARATOR.contains(&buffer[p + l]) {
                    l += 1;
                }
                best = best.max(l);
            }
            if best >= min_length {
                match spans.last_mut() {
                    Some(last) if p <= last.1 => last.1 = last.1.max(p + best),
                    _ => spans.push((p, p + best)),
                }
            }
        }
        spans
    }

    #[test]
    fn spans_match_brute_force() {
        let mut rng = stream_rng(11, "dedup.test");
        let alphabet = ['a', 'b', 'é', ' '];
        for round in 0..60 {
            let texts: Vec<String> = (0..4).map(|_| random_text(&mut rng, 40, &alphabet)).collect();
            let index = ConcatIndex::from_texts(&texts);
            let min_length = 3 + round % 6;
            assert_eq!(
                index.later_duplicate_spans(min_length),
                brute_spans(&index.buffer().unwrap(), min_length),
                "{texts:?}"
            );
        }
    }

    proptest! {
        #[test]
        fn no_repeats_survive(texts in proptest::collection::vec("[ab]{0,30}", 1..5), min_length in 2usize..8) {
            let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
            let (out, stats) = dedup_texts(&refs, min_length);
            let bytes: Vec<&[u8]> = out.iter().map(|s| s.as_bytes()).collect();
            prop_assert!(!has_repeat(&bytes, min_length));
            prop_assert_eq!(stats.bytes_in - stats.bytes_removed, stats.bytes_out);
        }

        #[test]
        fn no_repeats_survive_multibyte(texts in proptest::collection::vec("[aé中 ]{0,20}", 1..4)) {
            let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
            let (out, _) = dedup_texts(&refs, 6);
            let bytes: Vec<&[u8]> = out.iter().map(|s| s.as_bytes()).collect();
            prop_assert!(!has_repeat(&bytes, 6));
        }

        #[test]
        fn first_document_never_shrinks_from_cross_doc_repeats(a in "[abc]{10,30}", b in "[abc]{0,30}") {
            // With the first doc free of internal repeats it is the earliest
            // copy of everything it contains.
            let index = ConcatIndex::from_texts(&[&a]);
            prop_assume!(find_repeats(&index, 5).is_empty());
            let (out, _) = dedup_texts(&[&a, &b], 5);
            prop_assert_eq!(&out[0], &a);
        }
    }
}
