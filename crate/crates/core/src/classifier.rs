//! Supervised linear text classifier in the fastText style.
//!
//! Documents are lowercased and whitespace split. Known words map to their
//! own embedding rows; word n-grams of length 2..=`ngram_order` are hashed
//! with FNV-1a into `buckets` extra rows. The document vector is the mean of
//! its rows and a softmax layer scores the labels. Training is plain SGD with
//! a linearly decaying learning rate.
//!
//! Word rows start uniform in `[-1/dim, 1/dim]`. Bucket rows start at zero and
//! are only materialized once a gradient touches them, so a model with two
//! million buckets costs memory proportional to the n-grams it has seen.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;

const MAGIC: &[u8; 4] = b"GWFT";
const FORMAT_VERSION: u32 = 1;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub dim: usize,
    pub lr: f64,
    pub epochs: usize,
    pub ngram_order: usize,
    pub buckets: usize,
    pub min_word_count: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 100,
            lr: 0.1,
            epochs: 5,
            ngram_order: 2,
            buckets: 2_000_000,
            min_word_count: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if self.epochs == 0 || self.dim == 0 || self.ngram_order == 0 {
            return Err(Error::Config("epochs, dim and ngram_order must be at least 1".into()));
        }
        if self.buckets > u32::MAX as usize {
            return Err(Error::Config("buckets must fit in 32 bits".into()));
        }
        Ok(())
    }
}

fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace().map(str::to_lowercase)
}

fn fnv1a(ids: &[u32]) -> u64 {
    let mut h = FNV_OFFSET;
    for id in ids {
        for b in id.to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    h
}

/// Row indices for `text`: in-vocabulary word ids first, then hashed n-gram
/// rows in `[vocab.len(), vocab.len() + buckets)`. Out-of-vocabulary words
/// are dropped before n-grams are formed.
pub fn featurize(
    text: &str,
    vocab: &HashMap<String, u32>,
    ngram_order: usize,
    buckets: usize,
) -> Vec<usize> {
    let ids: Vec<u32> = words(text).filter_map(|w| vocab.get(&w).copied()).collect();
    let mut features: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
    if buckets > 0 {
        let base = vocab.len();
        for n in 2..=ngram_order {
            for window in ids.windows(n) {
                features.push(base + (fnv1a(window) % buckets as u64) as usize);
            }
        }
    }
    features
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExampleGradient {
    pub loss: f64,
    pub probs: Vec<f64>,
    /// Gradient with respect to each entry of `rows`.
    pub rows: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

pub fn softmax(scores: &mut [f64]) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        sum += *s;
    }
    for s in scores.iter_mut() {
        *s /= sum;
    }
}

/// Softmax cross-entropy loss and its gradient for one example over dense
/// f64 parameters. `rows` are the embedding rows of the example's features
/// (one per occurrence), `output` is the `labels x dim` matrix in row-major
/// order.
pub fn example_gradient(rows: &[Vec<f64>], output: &[f64], dim: usize, label: usize) -> ExampleGradient {
    let mut hidden = vec![0.0; dim];
    for r in rows {
        for (h, x) in hidden.iter_mut().zip(r) {
            *h += x;
        }
    }
    let n = rows.len().max(1) as f64;
    hidden.iter_mut().for_each(|h| *h /= n);
    let mut probs: Vec<f64> = output
        .chunks(dim)
        .map(|w| w.iter().zip(&hidden).map(|(a, b)| a * b).sum())
        .collect();
    softmax(&mut probs);
    let loss = -probs[label].max(f64::MIN_POSITIVE).ln();

    let mut grad_output = vec![0.0; output.len()];
    let mut grad_hidden = vec![0.0; dim];
    for (k, (w, g)) in output.chunks(dim).zip(grad_output.chunks_mut(dim)).enumerate() {
        let coeff = probs[k] - if k == label { 1.0 } else { 0.0 };
        for j in 0..dim {
            g[j] = coeff * hidden[j];
            grad_hidden[j] += coeff * w[j];
        }
    }
    let row_grad: Vec<f64> = grad_hidden.iter().map(|g| g / n).collect();
    ExampleGradient {
        loss,
        probs,
        rows: vec![row_grad; rows.len()],
        output: grad_output,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    dim: usize,
    buckets: usize,
    ngram_order: usize,
    labels: Vec<String>,
    /// Words in row order.
    words: Vec<String>,
    vocab: HashMap<String, u32>,
    word_rows: Vec<f32>,
    bucket_rows: HashMap<u32, Vec<f32>>,
    output: Vec<f32>,
}

/// Per-epoch mean training loss, measured after each epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
}

/// Parse `__label__<name> <text>` lines. Blank lines are skipped.
pub fn parse_labeled(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut rest = line.trim_start();
        let mut label = None;
        while let Some(tail) = rest.strip_prefix("__label__") {
            let end = tail.find(char::is_whitespace).unwrap_or(tail.len());
            label.get_or_insert_with(|| tail[..end].to_string());
            rest = tail[end..].trim_start();
        }
        match label {
            Some(l) if !l.is_empty() => out.push((l, rest.to_string())),
            _ => {
                return Err(Error::Training(format!(
                    "line {}: expected `__label__<name>` prefix",
                    i + 1
                )))
            }
        }
    }
    Ok(out)
}

impl ClassifierModel {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn vocab(&self) -> &HashMap<String, u32> {
        &self.vocab
    }

    pub fn ngram_order(&self) -> usize {
        self.ngram_order
    }

    pub fn buckets(&self) -> usize {
        self.buckets
    }

    pub fn features(&self, text: &str) -> Vec<usize> {
        featurize(text, &self.vocab, self.ngram_order, self.buckets)
    }

    fn row(&self, index: usize) -> Option<&[f32]> {
        let nwords = self.words.len();
        if index < nwords {
            Some(&self.word_rows[index * self.dim..(index + 1) * self.dim])
        } else {
            self.bucket_rows.get(&((index - nwords) as u32)).map(Vec::as_slice)
        }
    }

    fn row_f64(&self, index: usize) -> Vec<f64> {
        match self.row(index) {
            Some(r) => r.iter().map(|&x| f64::from(x)).collect(),
            None => vec![0.0; self.dim],
        }
    }

    fn row_mut(&mut self, index: usize) -> &mut [f32] {
        let nwords = self.words.len();
        let dim = self.dim;
        if index < nwords {
            &mut self.word_rows[index * dim..(index + 1) * dim]
        } else {
            self.bucket_rows
                .entry((index - nwords) as u32)
                .or_insert_with(|| vec![0.0; dim])
        }
    }

    pub fn output_f64(&self) -> Vec<f64> {
        self.output.iter().map(|&x| f64::from(x)).collect()
    }

    /// Feature rows as dense f64 vectors, one per feature occurrence.
    pub fn rows_f64(&self, features: &[usize]) -> Vec<Vec<f64>> {
        features.iter().map(|&f| self.row_f64(f)).collect()
    }

    pub fn gradient(&self, features: &[usize], label: usize) -> ExampleGradient {
        example_gradient(&self.rows_f64(features), &self.output_f64(), self.dim, label)
    }

    /// One SGD step on a featurized example; returns the pre-update loss.
    pub fn sgd_step(&mut self, features: &[usize], label: usize, lr: f64) -> f64 {
        if features.is_empty() {
            return self.example_loss(features, label);
        }
        let grad = self.gradient(features, label);
        for (w, g) in self.output.iter_mut().zip(&grad.output) {
            *w = (f64::from(*w) - lr * g) as f32;
        }
        for (&f, g) in features.iter().zip(&grad.rows) {
            for (w, gj) in self.row_mut(f).iter_mut().zip(g) {
                *w = (f64::from(*w) - lr * gj) as f32;
            }
        }
        grad.loss
    }

    pub fn example_loss(&self, features: &[usize], label: usize) -> f64 {
        let probs = self.probabilities_for(features);
        -probs[label].max(f64::MIN_POSITIVE).ln()
    }

    fn probabilities_for(&self, features: &[usize]) -> Vec<f64> {
        let nlabels = self.labels.len();
        if features.is_empty() {
            return vec![1.0 / nlabels as f64; nlabels];
        }
        let mut hidden = vec![0.0f64; self.dim];
        for &f in features {
            if let Some(r) = self.row(f) {
                for (h, &x) in hidden.iter_mut().zip(r) {
                    *h += f64::from(x);
                }
            }
        }
        let n = features.len() as f64;
        hidden.iter_mut().for_each(|h| *h /= n);
        let mut scores: Vec<f64> = self
            .output
            .chunks(self.dim)
            .map(|w| w.iter().zip(&hidden).map(|(&a, b)| f64::from(a) * b).sum())
            .collect();
        softmax(&mut scores);
        scores
    }

    /// Softmax distribution over [`labels`](Self::labels).
    pub fn probabilities(&self, text: &str) -> Vec<f64> {
        self.probabilities_for(&self.features(text))
    }

    /// Most probable label; ties go to the earlier label.
    pub fn predict(&self, text: &str) -> (&str, f64) {
        let probs = self.probabilities(text);
        let mut best = 0;
        for (k, &p) in probs.iter().enumerate() {
            if p > probs[best] {
                best = k;
            }
        }
        (&self.labels[best], probs[best])
    }

    /// Probability of `positive_label` under a binary model.
    pub fn positive_confidence(&self, text: &str, positive_label: &str) -> Result<f64> {
        if self.labels.len() != 2 {
            return Err(Error::Model(format!(
                "positive confidence needs a binary model, this one has {} labels",
                self.labels.len()
            )));
        }
        self.label_index(positive_label)?;
        // predict() confidence is >= 0.5, so the complement is exact.
        let (label, conf) = self.predict(text);
        Ok(if label == positive_label { conf } else { 1.0 - conf })
    }

    pub fn label_index(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::Model(format!("label `{label}` not in model {:?}", self.labels)))
    }

    pub fn train(examples: &[(String, String)], config: &TrainConfig) -> Result<Self> {
        Ok(Self::train_with_report(examples, config)?.0)
    }

    pub fn train_with_report(
        examples: &[(String, String)],
        config: &TrainConfig,
    ) -> Result<(Self, TrainReport)> {
        config.validate()?;
        if examples.is_empty() {
            return Err(Error::Training("empty corpus".into()));
        }
        let mut labels: Vec<String> = examples.iter().map(|(l, _)| l.clone()).collect();
        labels.sort();
        labels.dedup();
        if labels.len() < 2 {
            return Err(Error::Training(format!(
                "need at least two labels, found only {:?}",
                labels
            )));
        }

        let mut counts: HashMap<String, usize> = HashMap::new();
        for (_, text) in examples {
            for w in words(text) {
                *counts.entry(w).or_default() += 1;
            }
        }
        let mut kept: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(_, c)| *c >= config.min_word_count)
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let words: Vec<String> = kept.into_iter().map(|(w, _)| w).collect();
        let vocab: HashMap<String, u32> =
            words.iter().enumerate().map(|(i, w)| (w.clone(), i as u32)).collect();

        let dim = config.dim;
        let mut init = stream_rng(config.seed, "classifier.init");
        let bound = 1.0 / dim as f32;
        let word_rows = (0..words.len() * dim).map(|_| init.gen_range(-bound..=bound)).collect();
        let mut model = ClassifierModel {
            dim,
            buckets: config.buckets,
            ngram_order: config.ngram_order,
            labels,
            words,
            vocab,
            word_rows,
            bucket_rows: HashMap::new(),
            output: vec![0.0; 0],
        };
        model.output = vec![0.0; model.labels.len() * dim];

        let data: Vec<(Vec<usize>, usize)> = examples
            .iter()
            .map(|(label, text)| {
                let k = model.label_index(label).expect("label collected above");
                (model.features(text), k)
            })
            .collect();

        let mut shuffle = stream_rng(config.seed, "classifier.shuffle");
        let mut order: Vec<usize> = (0..data.len()).collect();
        let total = (config.epochs * data.len()) as f64;
        let mut step = 0usize;
        let mut epoch_losses = Vec::with_capacity(config.epochs);
        for _ in 0..config.epochs {
            order.shuffle(&mut shuffle);
            for &i in &order {
                let lr = config.lr * (1.0 - step as f64 / total);
                step += 1;
                let (features, label) = &data[i];
                model.sgd_step(features, *label, lr);
            }
            let loss = data.iter().map(|(f, l)| model.example_loss(f, *l)).sum::<f64>()
                / data.len() as f64;
            epoch_losses.push(loss);
        }
        Ok((model, TrainReport { epoch_losses }))
    }

    /// Fraction of `examples` whose predicted label matches.
    pub fn accuracy(&self, examples: &[(String, String)]) -> f64 {
        if examples.is_empty() {
            return 0.0;
        }
        let hits = examples.iter().filter(|(l, t)| self.predict(t).0 == l).count();
        hits as f64 / examples.len() as f64
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        put_u32(&mut buf, FORMAT_VERSION);
        put_u32(&mut buf, self.dim as u32);
        put_u32(&mut buf, self.ngram_order as u32);
        buf.extend_from_slice(&(self.buckets as u64).to_le_bytes());
        put_strings(&mut buf, &self.labels);
        put_strings(&mut buf, &self.words);
        put_f32s(&mut buf, &self.word_rows);
        let mut rows: Vec<_> = self.bucket_rows.iter().collect();
        rows.sort_by_key(|(k, _)| **k);
        buf.extend_from_slice(&(rows.len() as u64).to_le_bytes());
        for (k, v) in rows {
            put_u32(&mut buf, *k);
            put_f32s(&mut buf, v);
        }
        put_f32s(&mut buf, &self.output);
        w.write_all(&buf)?;
        w.flush()?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| Error::Model(format!("{}: {e}", path.display())))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, section: "header" };
        if r.take(4)? != MAGIC {
            return Err(Error::Model("bad magic, not a GWFT model file".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Model(format!("unsupported format version {version}")));
        }
        let dim = r.u32()? as usize;
        let ngram_order = r.u32()? as usize;
        let buckets = r.u64()? as usize;
        if dim == 0 {
            return Err(Error::Model("dim must be at least 1".into()));
        }
        r.section = "labels";
        let labels = r.strings()?;
        if labels.len() < 2 {
            return Err(Error::Model("model needs at least two labels".into()));
        }
        r.section = "vocab";
        let words = r.strings()?;
        r.section = "input matrix";
        let word_rows = r.f32s(words.len() * dim)?;
        r.section = "bucket rows";
        let nrows = r.u64()? as usize;
        let mut bucket_rows = HashMap::with_capacity(nrows.min(1 << 20));
        for _ in 0..nrows {
            let k = r.u32()?;
            if k as usize >= buckets {
                return Err(Error::Model(format!("bucket row {k} out of range")));
            }
            bucket_rows.insert(k, r.f32s(dim)?);
        }
        r.section = "output matrix";
        let output = r.f32s(labels.len() * dim)?;
        if r.pos != bytes.len() {
            return Err(Error::Model("trailing bytes after output matrix".into()));
        }
        let finite = word_rows.iter().chain(&output).chain(bucket_rows.values().flatten()).all(|x| x.is_finite());
        if !finite {
            return Err(Error::Model("non-finite weight".into()));
        }
        let vocab = words.iter().enumerate().map(|(i, w)| (w.clone(), i as u32)).collect();
        Ok(ClassifierModel {
            dim,
            buckets,
            ngram_order,
            labels,
            words,
            vocab,
            word_rows,
            bucket_rows,
            output,
        })
    }
}

fn put_u32(buf: &mut Vec<u8>, x: u32) {
    buf.extend_from_slice(&x.to_le_bytes());
}

fn put_strings(buf: &mut Vec<u8>, items: &[String]) {
    put_u32(buf, items.len() as u32);
    for s in items {
        put_u32(buf, s.len() as u32);
        buf.extend_from_slice(s.as_bytes());
    }
}

fn put_f32s(buf: &mut Vec<u8>, xs: &[f32]) {
    for x in xs {
        buf.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    section: &'static str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Model(format!("truncated file in {} section", self.section))
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn strings(&mut self) -> Result<Vec<String>> {
        let n = self.u32()? as usize;
        let mut out = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            let len = self.u32()? as usize;
            let raw = self.take(len)?;
            let s = std::str::from_utf8(raw)
                .map_err(|_| Error::Model(format!("invalid UTF-8 in {} section", self.section)))?;
            out.push(s.to_string());
        }
        Ok(out)
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| Error::Model("size overflow".into()))?)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> TrainConfig {
        TrainConfig { dim: 8, buckets: 1000, seed: 7, ..TrainConfig::default() }
    }

    fn separable(n: usize) -> Vec<(String, String)> {
        let mut rng = stream_rng(7, "test.separable");
        (0..n)
            .map(|i| {
                let (label, prefix) = if i % 2 == 0 { ("A", "x") } else { ("B", "y") };
                let text: Vec<String> =
                    (0..8).map(|_| format!("{prefix}{}", rng.gen_range(1..=20))).collect();
                (label.to_string(), text.join(" "))
            })
            .collect()
    }

    #[test]
    fn featurize_examples() {
        let vocab: HashMap<String, u32> = [("the".to_string(), 0), ("cat".to_string(), 1)].into();
        assert_eq!(featurize("the cat", &vocab, 1, 100), vec![0, 1]);
        let f = featurize("The CAT", &vocab, 2, 100);
        assert_eq!(&f[..2], &[0, 1]);
        assert_eq!(f.len(), 3);
        assert!((2..102).contains(&f[2]));
        assert!(featurize("zzz", &vocab, 1, 100).is_empty());
        assert!(featurize("", &vocab, 2, 100).is_empty());
    }

    #[test]
    fn fnv_reference() {
        // FNV-1a 64 of the empty input is the offset basis.
        assert_eq!(fnv1a(&[]), FNV_OFFSET);
        // Bytes 01 00 00 00.
        let mut h = FNV_OFFSET;
        for b in [1u8, 0, 0, 0] {
            h = (h ^ u64::from(b)).wrapping_mul(FNV_PRIME);
        }
        assert_eq!(fnv1a(&[1]), h);
    }

    #[test]
    fn parses_labeled_lines() {
        let parsed = parse_labeled("__label__pos good text\n\n__label__neg  bad\n").unwrap();
        assert_eq!(parsed, vec![("pos".into(), "good text".into()), ("neg".into(), "bad".into())]);
        assert!(parse_labeled("no label here").is_err());
    }

    #[test]
    fn training_errors() {
        let one = vec![("a".to_string(), "x".to_string()), ("a".to_string(), "y".to_string())];
        assert!(matches!(ClassifierModel::train(&one, &small_config()), Err(Error::Training(_))));
        assert!(ClassifierModel::train(&[], &small_config()).is_err());
        let bad = TrainConfig { lr: 0.0, ..small_config() };
        assert!(ClassifierModel::train(&separable(4), &bad).is_err());
    }

    #[test]
    fn learns_separable_data() {
        let data = separable(200);
        let (model, report) = ClassifierModel::train_with_report(&data, &small_config()).unwrap();
        assert!(model.accuracy(&data) >= 0.99);
        assert_eq!(model.predict("x1 x2 x3").0, "A");
        assert!(report.epoch_losses.last().unwrap() <= &report.epoch_losses[0]);
    }

    #[test]
    fn oov_text_is_uniform() {
        let model = ClassifierModel::train(&separable(20), &small_config()).unwrap();
        assert_eq!(model.predict("never seen words"), ("A", 0.5));
    }

    #[test]
    fn probabilities_sum_to_one() {
        let model = ClassifierModel::train(&separable(40), &small_config()).unwrap();
        for text in ["x1 y2", "x3 x4 x5", "", "y1 y1 y1 y1"] {
            let s: f64 = model.probabilities(text).iter().sum();
            assert!((s - 1.0).abs() <= 1e-6);
            assert!(model.predict(text).1 >= 0.5);
        }
    }

    #[test]
    fn positive_confidence_is_complement() {
        let model = ClassifierModel::train(&separable(40), &small_config()).unwrap();
        for text in ["x1 x2", "y1 y2", "x1 y1"] {
            let a = model.positive_confidence(text, "A").unwrap();
            let b = model.positive_confidence(text, "B").unwrap();
            assert_eq!(a, 1.0 - b, "{text}");
            let (label, conf) = model.predict(text);
            assert_eq!(model.positive_confidence(text, label).unwrap(), conf);
        }
        assert!(model.positive_confidence("x1", "C").is_err());

        let three: Vec<_> = ["a", "b", "c"].iter().map(|l| (l.to_string(), format!("w{l}"))).collect();
        let m3 = ClassifierModel::train(&three, &small_config()).unwrap();
        assert!(m3.positive_confidence("wa", "a").is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let data = separable(60);
        let model = ClassifierModel::train(&data, &small_config()).unwrap();
        let bytes = model.to_bytes();
        let back = ClassifierModel::from_bytes(&bytes).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.to_bytes(), bytes);
        for (_, t) in &data {
            assert_eq!(back.probabilities(t), model.probabilities(t));
        }
    }

    #[test]
    fn load_rejects_bad_files() {
        let model = ClassifierModel::train(&separable(10), &small_config()).unwrap();
        let bytes = model.to_bytes();
        let mut bad = bytes.clone();
        bad[..4].copy_from_slice(b"XXXX");
        assert!(ClassifierModel::from_bytes(&bad).unwrap_err().to_string().contains("magic"));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(ClassifierModel::from_bytes(&bad).unwrap_err().to_string().contains("version"));
        let err = ClassifierModel::from_bytes(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(err.to_string().contains("output matrix"), "{err}");
    }

    #[test]
    fn training_is_deterministic() {
        let data = separable(50);
        let a = ClassifierModel::train(&data, &small_config()).unwrap().to_bytes();
        let b = ClassifierModel::train(&data, &small_config()).unwrap().to_bytes();
        assert_eq!(a, b);
        let c = ClassifierModel::train(&data, &TrainConfig { seed: 8, ..small_config() }).unwrap().to_bytes();
        assert_ne!(a, c);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let toy: Vec<(String, String)> = vec![
            ("pos".into(), "good clear text".into()),
            ("neg".into(), "spam spam click".into()),
            ("pos".into(), "clear good prose".into()),
        ];
        let config = TrainConfig { dim: 2, epochs: 2, buckets: 16, seed: 3, ..TrainConfig::default() };
        let model = ClassifierModel::train(&toy, &config).unwrap();
        let eps = 1e-6;
        for (label, text) in &toy {
            let k = model.label_index(label).unwrap();
            let rows = model.rows_f64(&model.features(text));
            let output = model.output_f64();
            let g = example_gradient(&rows, &output, 2, k);
            let loss = |rows: &[Vec<f64>], out: &[f64]| example_gradient(rows, out, 2, k).loss;
            for i in 0..output.len() {
                let (mut hi, mut lo) = (output.clone(), output.clone());
                hi[i] += eps;
                lo[i] -= eps;
                let fd = (loss(&rows, &hi) - loss(&rows, &lo)) / (2.0 * eps);
                assert!((fd - g.output[i]).abs() <= 1e-4 * fd.abs().max(1e-3), "{fd} vs {}", g.output[i]);
            }
            for r in 0..rows.len() {
                for j in 0..2 {
                    let (mut hi, mut lo) = (rows.clone(), rows.clone());
                    hi[r][j] += eps;
                    lo[r][j] -= eps;
                    let fd = (loss(&hi, &output) - loss(&lo, &output)) / (2.0 * eps);
                    assert!((fd - g.rows[r][j]).abs() <= 1e-4 * fd.abs().max(1e-3));
                }
            }
        }
    }

    #[test]
    fn sgd_step_follows_gradient() {
        let data = separable(6);
        let mut model = ClassifierModel::train(&data, &TrainConfig { epochs: 1, ..small_config() }).unwrap();
        let features = model.features(&data[0].1);
        let grad = model.gradient(&features, 0);
        let before = model.output_f64();
        let lr = 0.01;
        model.sgd_step(&features, 0, lr);
        for ((a, b), g) in before.iter().zip(model.output_f64()).zip(&grad.output) {
            assert!((b - (a - lr * g)).abs() < 1e-6);
        }
    }
}
