//! Tokenizers and the tokens-per-char / tokens-per-byte ratios.
//!
//! Two implementations sit behind [`Tokenizer`]: a whitespace splitter used
//! in tests and small runs, and a BPE tokenizer loaded from a `vocab.json` +
//! `merges.txt` pair (the GPT-2 / StarCoder layout).

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One token with its byte span in the source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenSpan {
    pub id: u32,
    pub start: usize,
    pub end: usize,
}

pub trait Tokenizer: Send + Sync {
    fn tokenize_spans(&self, text: &str) -> Result<Vec<TokenSpan>>;

    fn tokenize(&self, text: &str) -> Result<Vec<u32>> {
        Ok(self.tokenize_spans(text)?.into_iter().map(|t| t.id).collect())
    }

    fn count_tokens(&self, text: &str) -> Result<usize> {
        Ok(self.tokenize_spans(text)?.len())
    }
}

/// Maximal non-whitespace runs. Ids follow first-seen order within one call,
/// so they are only comparable inside a single document.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn tokenize_spans(&self, text: &str) -> Result<Vec<TokenSpan>> {
        let mut ids: HashMap<&str, u32> = HashMap::new();
        let mut out = Vec::new();
        let mut start: Option<usize> = None;
        let mut push = |s: usize, e: usize, out: &mut Vec<TokenSpan>| {
            let next = ids.len() as u32;
            let id = *ids.entry(&text[s..e]).or_insert(next);
            out.push(TokenSpan { id, start: s, end: e });
        };
        for (i, c) in text.char_indices() {
            match (c.is_whitespace(), start) {
                (true, Some(s)) => {
                    push(s, i, &mut out);
                    start = None;
                }
                (false, None) => start = Some(i),
                _ => {}
            }
        }
        if let Some(s) = start {
            push(s, text.len(), &mut out);
        }
        Ok(out)
    }

    fn count_tokens(&self, text: &str) -> Result<usize> {
        Ok(text.split_whitespace().count())
    }
}

/// GPT-2 byte-to-unicode table: printable bytes map to themselves, the rest
/// to code points from U+0100 upward.
fn byte_to_unicode() -> [char; 256] {
    let mut table = ['\0'; 256];
    let mut extra = 0u32;
    for b in 0..=255u8 {
        let printable = matches!(b, 33..=126 | 161..=172 | 174..=255);
        table[b as usize] = if printable {
            char::from(b)
        } else {
            let c = char::from_u32(256 + extra).unwrap();
            extra += 1;
            c
        };
    }
    table
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CharClass {
    Letter,
    Digit,
    Space,
    Other,
}

fn class_of(c: char) -> CharClass {
    if c.is_whitespace() {
        CharClass::Space
    } else if c.is_alphabetic() {
        CharClass::Letter
    } else if c.is_numeric() {
        CharClass::Digit
    } else {
        CharClass::Other
    }
}

/// Byte-level pre-tokenization in the spirit of the GPT-2 pattern: runs of
/// letters, digits or other symbols, each optionally carrying one leading
/// space; leftover whitespace forms its own piece.
fn pretokenize_byte_level(text: &str) -> Vec<(usize, usize)> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut pieces = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (start, c) = chars[i];
        let class = class_of(c);
        if class == CharClass::Space {
            let mut j = i;
            while j < chars.len() && class_of(chars[j].1) == CharClass::Space {
                j += 1;
            }
            // A single trailing ' ' before a word belongs to that word.
            let hands_off = j < chars.len() && chars[j - 1].1 == ' ';
            let end_idx = if hands_off { j - 1 } else { j };
            if end_idx > i {
                pieces.push((start, byte_end(&chars, end_idx, text)));
            }
            if hands_off {
                let run_class = class_of(chars[j].1);
                let mut k = j;
                while k < chars.len() && class_of(chars[k].1) == run_class {
                    k += 1;
                }
                pieces.push((chars[j - 1].0, byte_end(&chars, k, text)));
                i = k;
            } else {
                i = j;
            }
            continue;
        }
        let mut j = i;
        while j < chars.len() && class_of(chars[j].1) == class {
            j += 1;
        }
        pieces.push((start, byte_end(&chars, j, text)));
        i = j;
    }
    pieces
}

fn byte_end(chars: &[(usize, char)], idx: usize, text: &str) -> usize {
    chars.get(idx).map_or(text.len(), |&(b, _)| b)
}

fn pretokenize_whitespace(text: &str) -> Vec<(usize, usize)> {
    WhitespaceTokenizer
        .tokenize_spans(text)
        .expect("whitespace tokenization is infallible")
        .into_iter()
        .map(|t| (t.start, t.end))
        .collect()
}

/// Byte-pair-encoding tokenizer.
#[derive(Debug, Clone)]
pub struct BpeTokenizer {
    vocab: HashMap<String, u32>,
    id_to_token: HashMap<u32, String>,
    /// (left id, right id) -> (rank, merged id)
    merges: HashMap<(u32, u32), (u32, u32)>,
    byte_level: bool,
    byte_table: [char; 256],
}

#[derive(Debug, Clone, Copy)]
struct Symbol {
    id: u32,
    start: usize,
    end: usize,
}

impl BpeTokenizer {
    /// Build from an in-memory vocabulary and ranked merge list.
    /// `merge_lines` carries the source line number of each merge for errors.
    pub fn from_parts(
        vocab: HashMap<String, u32>,
        merges: &[(u64, String, String)],
        byte_level: bool,
    ) -> Result<Self> {
        let mut id_to_token = HashMap::with_capacity(vocab.len());
        for (tok, &id) in &vocab {
            if let Some(prev) = id_to_token.insert(id, tok.clone()) {
                let (a, b) = if prev < *tok { (prev, tok.clone()) } else { (tok.clone(), prev) };
                return Err(Error::Tokenizer(format!(
                    "duplicate id {id} for tokens `{a}` and `{b}`"
                )));
            }
        }
        let mut merge_map = HashMap::with_capacity(merges.len());
        for (rank, (line, left, right)) in merges.iter().enumerate() {
            let lookup = |t: &str| {
                vocab.get(t).copied().ok_or_else(|| {
                    Error::Tokenizer(format!("merges line {line}: token `{t}` not in vocab"))
                })
            };
            let l = lookup(left)?;
            let r = lookup(right)?;
            let merged = lookup(&format!("{left}{right}"))?;
            merge_map.entry((l, r)).or_insert((rank as u32, merged));
        }
        Ok(BpeTokenizer {
            vocab,
            id_to_token,
            merges: merge_map,
            byte_level,
            byte_table: byte_to_unicode(),
        })
    }

    pub fn from_strs(vocab_json: &str, merges_txt: &str, byte_level: bool) -> Result<Self> {
        let vocab: HashMap<String, u32> = serde_json::from_str(vocab_json)
            .map_err(|e| Error::Tokenizer(format!("vocab: {e}")))?;
        let merges = parse_merges(merges_txt)?;
        Self::from_parts(vocab, &merges, byte_level)
    }

    pub fn load(vocab_path: &Path, merges_path: &Path, byte_level: bool) -> Result<Self> {
        let vocab = std::fs::read_to_string(vocab_path).map_err(|e| Error::io(vocab_path, e))?;
        let merges = std::fs::read_to_string(merges_path).map_err(|e| Error::io(merges_path, e))?;
        Self::from_strs(&vocab, &merges, byte_level)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(&id).map(String::as_str)
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    fn fallback(&self, bytes: &[u8], offset: usize, out: &mut Vec<Symbol>) -> Result<()> {
        for (k, b) in bytes.iter().enumerate() {
            let id = self.vocab.get(&format!("<0x{b:02X}>")).copied().ok_or_else(|| {
                Error::Tokenizer(format!(
                    "byte 0x{b:02X} at offset {} has no vocab entry",
                    offset + k
                ))
            })?;
            out.push(Symbol { id, start: offset + k, end: offset + k + 1 });
        }
        Ok(())
    }

    fn initial_symbols(&self, text: &str, start: usize, end: usize) -> Result<Vec<Symbol>> {
        let mut out = Vec::with_capacity(end - start);
        let mut buf = [0u8; 4];
        if self.byte_level {
            for (k, &b) in text.as_bytes()[start..end].iter().enumerate() {
                let pos = start + k;
                let c = self.byte_table[b as usize];
                match self.vocab.get(c.encode_utf8(&mut buf) as &str) {
                    Some(&id) => out.push(Symbol { id, start: pos, end: pos + 1 }),
                    None => self.fallback(&[b], pos, &mut out)?,
                }
            }
        } else {
            for (k, c) in text[start..end].char_indices() {
                let pos = start + k;
                let s = c.encode_utf8(&mut buf);
                match self.vocab.get(s as &str) {
                    Some(&id) => out.push(Symbol { id, start: pos, end: pos + s.len() }),
                    None => self.fallback(s.as_bytes(), pos, &mut out)?,
                }
            }
        }
        Ok(out)
    }

    /// Repeatedly merge every occurrence of the lowest-ranked adjacent pair.
    fn merge(&self, mut symbols: Vec<Symbol>) -> Vec<Symbol> {
        loop {
            let best = symbols
                .windows(2)
                .filter_map(|w| self.merges.get(&(w[0].id, w[1].id)))
                .min_by_key(|&&(rank, _)| rank)
                .copied();
            let Some((rank, merged)) = best else {
                return symbols;
            };
            let mut next = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len()
                    && self.merges.get(&(symbols[i].id, symbols[i + 1].id)).map(|m| m.0) == Some(rank)
                {
                    next.push(Symbol {
                        id: merged,
                        start: symbols[i].start,
                        end: symbols[i + 1].end,
                    });
                    i += 2;
                } else {
                    next.push(symbols[i]);
                    i += 1;
                }
            }
            symbols = next;
        }
    }
}

impl Tokenizer for BpeTokenizer {
    fn tokenize_spans(&self, text: &str) -> Result<Vec<TokenSpan>> {
        let pieces = if self.byte_level {
            pretokenize_byte_level(text)
        } else {
            pretokenize_whitespace(text)
        };
        let mut out = Vec::new();
        for (s, e) in pieces {
            let symbols = self.merge(self.initial_symbols(text, s, e)?);
            out.extend(symbols.into_iter().map(|sym| TokenSpan {
                id: sym.id,
                start: sym.start,
                end: sym.end,
            }));
        }
        Ok(out)
    }
}

/// Parse a merges file: one space-separated pair per line, rank = order.
/// A first line starting with `#` is a header. Returned tuples carry the
/// 1-based source line.
pub fn parse_merges(text: &str) -> Result<Vec<(u64, String, String)>> {
    let mut merges = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx as u64 + 1;
        if (idx == 0 && line.starts_with('#')) || line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(' ');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), None) if !a.is_empty() && !b.is_empty() => {
                merges.push((lineno, a.to_string(), b.to_string()))
            }
            _ => {
                return Err(Error::Tokenizer(format!(
                    "merges line {lineno}: expected two space-separated tokens"
                )))
            }
        }
    }
    Ok(merges)
}

/// Tokenizer selection as it appears in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TokenizerSpec {
    Whitespace,
    Bpe {
        vocab: PathBuf,
        merges: PathBuf,
        #[serde(default = "default_true")]
        byte_level: bool,
    },
}

fn default_true() -> bool {
    true
}

impl TokenizerSpec {
    pub fn build(&self) -> Result<Arc<dyn Tokenizer>> {
        Ok(match self {
            TokenizerSpec::Whitespace => Arc::new(WhitespaceTokenizer),
            TokenizerSpec::Bpe {
                vocab,
                merges,
                byte_level,
            } => Arc::new(BpeTokenizer::load(vocab, merges, *byte_level)?),
        })
    }
}

/// Tokenization-ratio annotations for one document.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioAnnotation {
    pub tokens_per_char: f64,
    pub tokens_per_byte: f64,
}

fn char_count(text: &str, include_whitespace: bool) -> usize {
    if include_whitespace {
        text.chars().count()
    } else {
        text.chars().filter(|c| !c.is_whitespace()).count()
    }
}

fn ratio(tokens: usize, denom: usize) -> Result<f64> {
    if tokens == 0 || denom == 0 {
        return Err(Error::Unscorable("no tokens"));
    }
    Ok(tokens as f64 / denom as f64)
}

/// Token count over Unicode scalar count.
pub fn tokens_per_char(
    text: &str,
    tokenizer: &dyn Tokenizer,
    include_whitespace: bool,
) -> Result<f64> {
    ratio(tokenizer.count_tokens(text)?, char_count(text, include_whitespace))
}

/// Token count over UTF-8 byte length.
pub fn tokens_per_byte(text: &str, tokenizer: &dyn Tokenizer) -> Result<f64> {
    ratio(tokenizer.count_tokens(text)?, text.len())
}

/// Both ratios from a single tokenization pass.
pub fn ratios(
    text: &str,
    tokenizer: &dyn Tokenizer,
    include_whitespace: bool,
) -> Result<RatioAnnotation> {
    let n = tokenizer.count_tokens(text)?;
    Ok(RatioAnnotation {
        tokens_per_char: ratio(n, char_count(text, include_whitespace))?,
        tokens_per_byte: ratio(n, text.len())?,
    })
}
