//! Word and sentence segmentation plus readability scores.
//!
//! McAlpine-EFLAW is the score used by the filter; Flesch-Kincaid grade,
//! ARI and Gunning Fog are kept for ablations. Segmentation is locale-free:
//!
//! * a word is a maximal run of Unicode letters/digits, with apostrophes
//!   kept when they sit between two such characters;
//! * a sentence ends at `.`, `!`, `?` or `…` followed by whitespace or end
//!   of text, or at a paragraph break (two newlines).

use crate::error::{Error, Result};

const TERMINATORS: [char; 4] = ['.', '!', '?', '…'];

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

/// Byte spans of sentences. Spans cover all non-whitespace content and never
/// start or end on whitespace.
pub fn segment_sentences(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    let mut last_end = 0;
    let mut newlines = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if c.is_whitespace() {
            if c == '\n' {
                newlines += 1;
                if newlines >= 2 {
                    if let Some(s) = start.take() {
                        spans.push((s, last_end));
                    }
                }
            }
            continue;
        }
        newlines = 0;
        start.get_or_insert(i);
        last_end = i + c.len_utf8();
        if TERMINATORS.contains(&c) && chars.peek().is_none_or(|&(_, n)| n.is_whitespace()) {
            spans.push((start.take().unwrap(), last_end));
        }
    }
    if let Some(s) = start {
        spans.push((s, last_end));
    }
    spans
}

pub fn segment_words(text: &str) -> Vec<&str> {
    let mut words = Vec::new();
    let mut start: Option<usize> = None;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if c.is_alphanumeric() {
            start.get_or_insert(i);
            continue;
        }
        if let Some(s) = start {
            let joins = is_apostrophe(c) && chars.peek().is_some_and(|&(_, n)| n.is_alphanumeric());
            if !joins {
                words.push(&text[s..i]);
                start = None;
            }
        }
    }
    if let Some(s) = start {
        words.push(&text[s..]);
    }
    words
}

fn is_vowel(c: char) -> bool {
    matches!(c.to_ascii_lowercase(), 'a' | 'e' | 'i' | 'o' | 'u' | 'y')
}

/// Vowel-group syllable heuristic, never less than 1.
pub fn count_syllables(word: &str) -> usize {
    let chars: Vec<char> = word.chars().collect();
    let mut groups = 0;
    let mut prev_vowel = false;
    for &c in &chars {
        let v = is_vowel(c);
        if v && !prev_vowel {
            groups += 1;
        }
        prev_vowel = v;
    }
    let n = chars.len();
    if groups > 1 && n >= 2 {
        let last = chars[n - 1].to_ascii_lowercase();
        let before = chars[n - 2];
        if last == 'e' && before.is_alphabetic() && !is_vowel(before) {
            groups -= 1;
        }
    }
    groups.max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TextCounts {
    pub words: usize,
    pub sentences: usize,
    /// Words of at most three characters.
    pub mini_words: usize,
    /// Alphanumeric characters inside words.
    pub letters: usize,
    pub syllables: usize,
    /// Words with three or more syllables.
    pub complex_words: usize,
}

impl TextCounts {
    pub fn from_text(text: &str) -> Self {
        let mut counts = TextCounts::default();
        for (s, e) in segment_sentences(text) {
            let words = segment_words(&text[s..e]);
            if words.is_empty() {
                continue;
            }
            counts.sentences += 1;
            for w in words {
                let len = w.chars().count();
                let syll = count_syllables(w);
                counts.words += 1;
                counts.mini_words += usize::from(len <= 3);
                counts.letters += w.chars().filter(|c| c.is_alphanumeric()).count();
                counts.syllables += syll;
                counts.complex_words += usize::from(syll >= 3);
            }
        }
        counts
    }

    fn scorable(self) -> Result<Self> {
        if self.words == 0 {
            Err(Error::Unscorable("no words"))
        } else {
            Ok(self)
        }
    }

    fn words_per_sentence(&self) -> f64 {
        self.words as f64 / self.sentences as f64
    }

    pub fn eflaw(&self) -> f64 {
        (self.words + self.mini_words) as f64 / self.sentences as f64
    }

    pub fn fkgl(&self) -> f64 {
        0.39 * self.words_per_sentence() + 11.8 * (self.syllables as f64 / self.words as f64)
            - 15.59
    }

    pub fn ari(&self) -> f64 {
        4.71 * (self.letters as f64 / self.words as f64) + 0.5 * self.words_per_sentence() - 21.43
    }

    pub fn fog(&self) -> f64 {
        0.4 * (self.words_per_sentence() + 100.0 * (self.complex_words as f64 / self.words as f64))
    }
}

/// (words + mini-words) / sentences; lower is easier to read.
pub fn mcalpine_eflaw(text: &str) -> Result<f64> {
    Ok(TextCounts::from_text(text).scorable()?.eflaw())
}

pub fn flesch_kincaid_grade(text: &str) -> Result<f64> {
    Ok(TextCounts::from_text(text).scorable()?.fkgl())
}

pub fn automated_readability_index(text: &str) -> Result<f64> {
    Ok(TextCounts::from_text(text).scorable()?.ari())
}

pub fn gunning_fog(text: &str) -> Result<f64> {
    Ok(TextCounts::from_text(text).scorable()?.fog())
}

/// All four scores from one segmentation pass; `None` for unscorable text.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReadabilityScores {
    pub eflaw: f64,
    pub fkgl: f64,
    pub ari: f64,
    pub fog: f64,
}

impl ReadabilityScores {
    pub fn compute(text: &str) -> Option<Self> {
        let c = TextCounts::from_text(text).scorable().ok()?;
        Some(ReadabilityScores {
            eflaw: c.eflaw(),
            fkgl: c.fkgl(),
            ari: c.ari(),
            fog: c.fog(),
        })
    }
}
