//! Shared fixtures for integration tests: a seeded synthetic corpus, small
//! trained classifiers, a learned byte-level BPE tokenizer and config files.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use gneissforge::classifier::{ClassifierModel, TrainConfig};
use gneissforge::corpus::write_path;
use gneissforge::rng::stream_rng;
use gneissforge::Document;

pub const SCI: &[&str] = &[
    "atom", "quantum", "energy", "particle", "galaxy", "molecule", "physics", "orbit", "photon",
    "theory", "experiment", "electron", "gravity", "spectrum", "neutron",
];
pub const EDU: &[&str] = &[
    "student", "lesson", "teacher", "school", "homework", "classroom", "curriculum", "exam",
    "learning", "grade", "lecture", "tutor", "reading", "study", "course",
];
pub const TECH: &[&str] = &[
    "software", "server", "compiler", "network", "database", "kernel", "protocol", "browser",
    "memory", "processor", "cloud", "algorithm", "router", "binary", "cache",
];
pub const MED: &[&str] = &[
    "patient", "doctor", "therapy", "vaccine", "clinic", "disease", "symptom", "surgery",
    "nurse", "diagnosis", "medicine", "hospital", "infection", "dose", "treatment",
];
pub const PLAIN: &[&str] = &[
    "the", "a", "of", "and", "to", "in", "is", "was", "it", "for", "on", "with", "as", "this",
    "by", "we", "they", "people", "time", "world", "day", "house", "city", "water", "story",
    "often", "because", "through", "between", "however", "careful", "simple", "several",
];
pub const SPAM: &[&str] = &[
    "click", "buy", "cheap", "free", "winner", "casino", "deal", "discount", "bonus", "viagra",
    "subscribe", "offer", "prize", "limited", "urgent",
];
pub const BOILERPLATE: &[&str] = &[
    "Subscribe to our newsletter to receive weekly updates straight to your inbox.",
    "All rights reserved. No part of this page may be reproduced without permission.",
    "Cookies help us deliver our services; by using the site you accept their use.",
    "Share this article with your friends and family on your favourite social networks.",
];

fn topic_words(topic: usize) -> &'static [&'static str] {
    [SCI, EDU, TECH, MED, PLAIN][topic]
}

/// One sentence mixing plain words with topic (or spam) vocabulary.
pub fn sentence(rng: &mut impl Rng, topic: usize, spammy: bool) -> String {
    let len = rng.gen_range(4..22);
    let mut words: Vec<String> = (0..len)
        .map(|_| {
            let roll: f64 = rng.gen();
            let pool = if spammy && roll < 0.4 {
                SPAM
            } else if roll < 0.55 {
                topic_words(topic)
            } else {
                PLAIN
            };
            pool.choose(rng).unwrap().to_string()
        })
        .collect();
    if rng.gen_bool(0.05) {
        words.push("café".into());
    }
    if rng.gen_bool(0.03) {
        words.push("naïve-résumé".into());
    }
    let mut s = words.join(" ");
    let mut first = s.chars();
    let head: String = first.next().unwrap().to_uppercase().collect();
    s = head + first.as_str();
    s.push(*['.', '.', '.', '!', '?'].choose(rng).unwrap());
    s
}

/// Synthetic corpus of roughly `target_bytes` text bytes. Documents carry
/// topical vocabulary, some are spammy, some are empty or whitespace, and
/// boilerplate sentences recur across documents so dedup has work to do.
pub fn synthetic_corpus(seed: u64, target_bytes: usize) -> Vec<Document> {
    let mut rng = stream_rng(seed, "fixture.corpus");
    let mut docs = Vec::new();
    let mut bytes = 0;
    while bytes < target_bytes {
        let i = docs.len();
        let text = match rng.gen_range(0..100) {
            0 => String::new(),
            1 => "   \n  ".to_string(),
            2 => "?!".to_string(),
            _ => {
                let topic = rng.gen_range(0..5);
                let spammy = rng.gen_bool(0.25);
                let mut sentences: Vec<String> =
                    (0..rng.gen_range(2..14)).map(|_| sentence(&mut rng, topic, spammy)).collect();
                if rng.gen_bool(0.3) {
                    let at = rng.gen_range(0..=sentences.len());
                    sentences.insert(at, BOILERPLATE.choose(&mut rng).unwrap().to_string());
                }
                if rng.gen_bool(0.05) && !docs.is_empty() {
                    // A verbatim copy of an earlier document.
                    let j = rng.gen_range(0..docs.len());
                    let d: &Document = &docs[j];
                    d.text.clone()
                } else {
                    sentences.join(if rng.gen_bool(0.2) { "\n\n" } else { " " })
                }
            }
        };
        bytes += text.len();
        docs.push(Document::new(format!("doc-{i:06}"), text));
    }
    docs
}

/// GPT-2 byte-to-unicode table, written out independently of the library.
pub fn byte_to_unicode() -> [char; 256] {
    let printable: Vec<u32> = (33..=126).chain(161..=172).chain(174..=255).collect();
    let mut table = ['\0'; 256];
    let mut extra = 0;
    for b in 0..256u32 {
        if printable.contains(&b) {
            table[b as usize] = char::from_u32(b).unwrap();
        } else {
            table[b as usize] = char::from_u32(256 + extra).unwrap();
            extra += 1;
        }
    }
    table
}

/// Learn `merges` byte-level BPE merges by repeated most-frequent-pair
/// counting over whitespace words (with a leading-space marker). Returns
/// (vocab JSON, merges text).
pub fn learn_bpe(texts: &[String], merges: usize) -> (String, String) {
    let table = byte_to_unicode();
    let mut words: HashMap<Vec<String>, usize> = HashMap::new();
    for t in texts {
        for (i, w) in t.split(' ').enumerate() {
            if w.is_empty() {
                continue;
            }
            let mut bytes = Vec::new();
            if i > 0 {
                bytes.push(b' ');
            }
            bytes.extend_from_slice(w.as_bytes());
            let syms: Vec<String> = bytes.iter().map(|&b| table[b as usize].to_string()).collect();
            *words.entry(syms).or_default() += 1;
        }
    }
    let mut vocab: BTreeMap<String, usize> = BTreeMap::new();
    for (i, c) in table.iter().enumerate() {
        vocab.insert(c.to_string(), i);
    }
    let mut lines = vec!["#version: 0.2".to_string()];
    for _ in 0..merges {
        let mut counts: HashMap<(String, String), usize> = HashMap::new();
        for (w, n) in &words {
            for p in w.windows(2) {
                *counts.entry((p[0].clone(), p[1].clone())).or_default() += n;
            }
        }
        let Some(best) = counts
            .into_iter()
            .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(&a.0)))
            .map(|(p, _)| p)
        else {
            break;
        };
        let merged = format!("{}{}", best.0, best.1);
        lines.push(format!("{} {}", best.0, best.1));
        let next = vocab.len();
        vocab.entry(merged.clone()).or_insert(next);
        words = words
            .into_iter()
            .map(|(w, n)| {
                let mut out: Vec<String> = Vec::with_capacity(w.len());
                let mut i = 0;
                while i < w.len() {
                    if i + 1 < w.len() && w[i] == best.0 && w[i + 1] == best.1 {
                        out.push(merged.clone());
                        i += 2;
                    } else {
                        out.push(w[i].clone());
                        i += 1;
                    }
                }
                (out, n)
            })
            .fold(HashMap::new(), |mut acc, (w, n)| {
                *acc.entry(w).or_default() += n;
                acc
            });
    }
    (serde_json::to_string(&vocab).unwrap(), lines.join("\n") + "\n")
}

fn labeled(
    rng: &mut ChaCha8Rng,
    n: usize,
    pos: impl Fn(&mut ChaCha8Rng) -> String,
    neg: impl Fn(&mut ChaCha8Rng) -> String,
) -> Vec<(String, String)> {
    (0..n)
        .map(|i| {
            if i % 2 == 0 {
                ("pos".to_string(), pos(rng))
            } else {
                ("neg".to_string(), neg(rng))
            }
        })
        .collect()
}

fn small_train_config(seed: u64) -> TrainConfig {
    TrainConfig { dim: 16, epochs: 5, buckets: 50_000, seed, ..TrainConfig::default() }
}

/// Train the six binary annotator models and save them under `dir`.
/// Returns the `models` section of a pipeline config.
pub fn write_models(dir: &Path, seed: u64) -> Value {
    let mut rng = stream_rng(seed, "fixture.models");
    let mut section = serde_json::Map::new();
    let quality = |r: &mut ChaCha8Rng| {
        let topic = r.gen_range(0..5);
        sentence(r, topic, false)
    };
    let spam = |r: &mut ChaCha8Rng| {
        let topic = r.gen_range(0..5);
        sentence(r, topic, true) + " " + SPAM.choose(r).unwrap()
    };
    for (name, offset) in [("dclm", 1u64), ("cosmo", 2)] {
        let data = labeled(&mut rng, 200, quality, spam);
        let model = ClassifierModel::train(&data, &small_train_config(seed + offset)).unwrap();
        let path = dir.join(format!("{name}.gwft"));
        model.save(&path).unwrap();
        section.insert(name.into(), json!({"path": path, "positive_label": "pos"}));
    }
    for (topic, name) in ["sci", "edu", "tech", "med"].iter().enumerate() {
        let on = move |r: &mut ChaCha8Rng| sentence(r, topic, false);
        let off = move |r: &mut ChaCha8Rng| {
            let other = (topic + r.gen_range(1..5)) % 5;
            sentence(r, other, false)
        };
        let data = labeled(&mut rng, 200, on, off);
        let model = ClassifierModel::train(&data, &small_train_config(seed + 10 + topic as u64)).unwrap();
        let path = dir.join(format!("{name}.gwft"));
        model.save(&path).unwrap();
        section.insert(name.to_string(), json!({"path": path, "positive_label": "pos"}));
    }
    Value::Object(section)
}

/// Placeholder thresholds (not tuned on any real corpus), with the `other`
/// category stricter than the four keyed ones.
pub fn ensemble_section(rule: &str) -> Value {
    let mut read = serde_json::Map::new();
    let mut bounds = serde_json::Map::new();
    for c in ["sci", "edu", "tech", "med"] {
        read.insert(c.into(), json!(30.0));
        bounds.insert(c.into(), json!([0.05, 0.6]));
    }
    read.insert("other".into(), json!(22.0));
    bounds.insert("other".into(), json!([0.08, 0.45]));
    json!({
        "tau_dclm": 0.5,
        "tau_cosmo": 0.5,
        "readability_thresholds": read,
        "ratio_bounds": bounds,
        "category_cutoff": 0.5,
        "rule": rule,
    })
}

/// Write a BPE tokenizer learned from `docs` into `dir`; returns the
/// `tokenizer` config section.
pub fn write_bpe(dir: &Path, docs: &[Document], merges: usize) -> Value {
    let sample: Vec<String> = docs.iter().take(400).map(|d| d.text.clone()).collect();
    let (vocab, merges_txt) = learn_bpe(&sample, merges);
    let vocab_path = dir.join("vocab.json");
    let merges_path = dir.join("merges.txt");
    std::fs::write(&vocab_path, vocab).unwrap();
    std::fs::write(&merges_path, merges_txt).unwrap();
    json!({"kind": "bpe", "vocab": vocab_path, "merges": merges_path})
}

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub input: PathBuf,
    pub output: PathBuf,
    pub config: PathBuf,
    pub models: Value,
    pub tokenizer: Value,
}

impl Fixture {
    /// Input corpus, trained models and a BPE tokenizer in a temp dir.
    pub fn new(docs: &[Document], seed: u64) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("input.jsonl");
        write_path(&input, docs).unwrap();
        let models = write_models(dir.path(), seed);
        let tokenizer = write_bpe(dir.path(), docs, 300);
        let output = dir.path().join("out").join("output.jsonl");
        let config = dir.path().join("config.json");
        Fixture { dir, input, output, config, models, tokenizer }
    }

    /// A full pipeline config; `extra` keys override the defaults.
    pub fn config_json(&self, extra: Value) -> Value {
        let mut base = json!({
            "input": self.input,
            "output": self.output,
            "shard_count": 4,
            "dedup": {"min_length": 50},
            "tokenizer": self.tokenizer,
            "models": self.models,
            "ensemble": ensemble_section("gneissweb"),
            "seed": 7,
        });
        for (k, v) in extra.as_object().unwrap() {
            base[k] = v.clone();
        }
        base
    }

    pub fn write_config(&self, extra: Value) -> PathBuf {
        std::fs::write(&self.config, serde_json::to_string_pretty(&self.config_json(extra)).unwrap()).unwrap();
        self.config.clone()
    }
}

/// Run the CLI binary; returns (exit code, stdout, stderr).
pub fn run_cli(args: &[&str]) -> (i32, String, String) {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_gneissforge"))
        .args(args)
        .output()
        .expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}
