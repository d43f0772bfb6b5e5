//! Orchestration of the recipe: dedup → annotate → filter, plus classifier
//! training, threshold calibration, seeded sampling and corpus statistics.
//!
//! Every command takes a [`PipelineConfig`] and returns a [`RunReport`].
//! Reports contain only quantities that are independent of the worker count,
//! so a run is byte-reproducible from (input, config, seed). Wall-clock
//! timings are kept out of the serialized report.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{parse_labeled, ClassifierModel, TrainConfig};
use crate::corpus::{create_writer, keys, stream_documents, Document};
use crate::dedup::{dedup_shard, shard_corpus, DedupConfig, DedupStats, DedupUnit};
use crate::ensemble::{
    clause_values, filter_document, AnnotationGroup, Annotators, BoundModel, DropReason,
    EnsembleConfig, Rule,
};
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::tokenize::{Tokenizer, TokenizerSpec};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Dedup,
    Annotate,
    Filter,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Dedup => "dedup",
            Stage::Annotate => "annotate",
            Stage::Filter => "filter",
        }
    }
}

/// Stages must be a non-empty subsequence of dedup, annotate, filter.
pub fn validate_stages(stages: &[Stage]) -> Result<()> {
    if stages.is_empty() {
        return Err(Error::Config("stages must not be empty".into()));
    }
    for w in stages.windows(2) {
        if w[0] >= w[1] {
            return Err(Error::Config(format!(
                "stage `{}` cannot run after `{}`; the order is dedup, annotate, filter",
                w[1].as_str(),
                w[0].as_str()
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MalformedPolicy {
    /// Stop at the first malformed record.
    #[default]
    Abort,
    /// Skip malformed records and count them.
    Skip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelRef {
    pub path: PathBuf,
    pub positive_label: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelPaths {
    pub dclm: Option<ModelRef>,
    pub cosmo: Option<ModelRef>,
    pub sci: Option<ModelRef>,
    pub edu: Option<ModelRef>,
    pub tech: Option<ModelRef>,
    pub med: Option<ModelRef>,
}

impl ModelPaths {
    fn entries(&self) -> [(&'static str, Option<&ModelRef>); 6] {
        [
            ("dclm", self.dclm.as_ref()),
            ("cosmo", self.cosmo.as_ref()),
            ("sci", self.sci.as_ref()),
            ("edu", self.edu.as_ref()),
            ("tech", self.tech.as_ref()),
            ("med", self.med.as_ref()),
        ]
    }

    fn entries_mut(&mut self) -> [&mut Option<ModelRef>; 6] {
        [
            &mut self.dclm,
            &mut self.cosmo,
            &mut self.sci,
            &mut self.edu,
            &mut self.tech,
            &mut self.med,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainJob {
    /// `__label__<name> <text>` lines.
    pub data: PathBuf,
    pub output: PathBuf,
    /// Hyperparameters; the seed is taken from the pipeline seed.
    #[serde(default)]
    pub params: TrainConfig,
}

fn default_grid_steps() -> usize {
    101
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateJob {
    /// Fraction of the corpus (tokens, or documents without a tokenizer) to keep.
    pub target: f64,
    /// Search τ_DCLM and τ_Cosmo independently on a grid instead of one shared τ.
    #[serde(default)]
    pub grid_2d: bool,
    #[serde(default = "default_grid_steps")]
    pub grid_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleJob {
    pub subsets: usize,
    pub size: usize,
    pub output_dir: PathBuf,
}

fn default_shard_count() -> usize {
    1
}

fn default_true() -> bool {
    true
}

fn default_stages() -> Vec<Stage> {
    vec![Stage::Dedup, Stage::Annotate, Stage::Filter]
}

fn default_batch_size() -> usize {
    1024
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Free-form note; ignored.
    #[serde(default, rename = "_comment", skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    /// JSONL file (optionally `.gz`) or directory of them.
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    #[serde(default = "default_shard_count")]
    pub shard_count: usize,
    #[serde(default)]
    pub dedup: DedupConfig,
    pub tokenizer: Option<TokenizerSpec>,
    /// Count whitespace in the tokens-per-char denominator.
    #[serde(default = "default_true")]
    pub chars_include_whitespace: bool,
    #[serde(default)]
    pub models: ModelPaths,
    pub ensemble: Option<EnsembleConfig>,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; defaults to the available parallelism.
    pub workers: Option<usize>,
    /// Stages executed by `run`.
    #[serde(default = "default_stages")]
    pub stages: Vec<Stage>,
    /// Documents annotated/filtered per parallel batch.
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    pub train: Option<TrainJob>,
    pub calibrate: Option<CalibrateJob>,
    pub sample: Option<SampleJob>,
    /// JSONL file receiving one record per filter decision.
    pub audit_log: Option<PathBuf>,
    #[serde(default)]
    pub on_malformed: MalformedPolicy,
}

fn resolve(base: &Path, path: &mut PathBuf) {
    if path.is_relative() {
        *path = base.join(&*path);
    }
}

impl PipelineConfig {
    /// Parse a JSON config. Relative paths are resolved against `base_dir`.
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self> {
        let mut config: PipelineConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.resolve_paths(base_dir);
        config.validate()?;
        Ok(config)
    }

    /// Load a config file; relative paths are relative to the file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_json(&text, base)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), strip_config(e))))
    }

    fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.input, &mut self.output, &mut self.audit_log].into_iter().flatten() {
            resolve(base, p);
        }
        if let Some(TokenizerSpec::Bpe { vocab, merges, .. }) = &mut self.tokenizer {
            resolve(base, vocab);
            resolve(base, merges);
        }
        for m in self.models.entries_mut().into_iter().flatten() {
            resolve(base, &mut m.path);
        }
        if let Some(t) = &mut self.train {
            resolve(base, &mut t.data);
            resolve(base, &mut t.output);
        }
        if let Some(s) = &mut self.sample {
            resolve(base, &mut s.output_dir);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.shard_count == 0 {
            return Err(Error::Config("shard_count must be at least 1".into()));
        }
        if self.dedup.min_length == 0 {
            return Err(Error::Config("dedup.min_length must be at least 1".into()));
        }
        if self.dedup.unit == DedupUnit::Tokens && self.tokenizer.is_none() {
            return Err(Error::Config("dedup.unit = tokens needs a tokenizer".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        validate_stages(&self.stages)?;
        if let Some(e) = &self.ensemble {
            e.validate()?;
        }
        if let Some(t) = &self.train {
            t.params.validate()?;
        }
        if let Some(c) = &self.calibrate {
            if !(c.target > 0.0 && c.target <= 1.0) {
                return Err(Error::Config(format!(
                    "calibrate.target must lie in (0, 1], got {}",
                    c.target
                )));
            }
            if c.grid_2d && c.grid_steps < 2 {
                return Err(Error::Config("calibrate.grid_steps must be at least 2".into()));
            }
        }
        if let Some(s) = &self.sample {
            if s.subsets == 0 || s.size == 0 {
                return Err(Error::Config("sample.subsets and sample.size must be at least 1".into()));
            }
        }
        Ok(())
    }

    fn input(&self) -> Result<&Path> {
        let p = self.input.as_deref().ok_or_else(|| Error::Config("`input` is required".into()))?;
        if !p.exists() {
            return Err(Error::Config(format!("input {} does not exist", p.display())));
        }
        Ok(p)
    }

    fn output(&self) -> Result<&Path> {
        let out = self.output.as_deref().ok_or_else(|| Error::Config("`output` is required".into()))?;
        if let (Ok(a), Ok(b)) = (out.canonicalize(), self.input()?.canonicalize()) {
            if a == b {
                return Err(Error::Config("output must differ from input".into()));
            }
        }
        Ok(out)
    }

    fn ensemble(&self) -> Result<&EnsembleConfig> {
        self.ensemble.as_ref().ok_or_else(|| Error::Config("`ensemble` is required".into()))
    }

    fn build_tokenizer(&self) -> Result<Option<Arc<dyn Tokenizer>>> {
        match &self.tokenizer {
            None => Ok(None),
            Some(spec) => {
                if let TokenizerSpec::Bpe { vocab, merges, .. } = spec {
                    for p in [vocab, merges] {
                        if !p.exists() {
                            return Err(Error::Config(format!(
                                "tokenizer file {} does not exist",
                                p.display()
                            )));
                        }
                    }
                }
                spec.build().map(Some)
            }
        }
    }

    /// Load the tokenizer and classifiers. With `complete`, all of them must
    /// be configured.
    fn build_annotators(
        &self,
        tokenizer: Option<Arc<dyn Tokenizer>>,
        complete: bool,
    ) -> Result<Annotators> {
        if complete && tokenizer.is_none() {
            return Err(Error::Config("annotation needs a `tokenizer`".into()));
        }
        let mut loaded: Vec<Option<BoundModel>> = Vec::with_capacity(6);
        for (name, entry) in self.models.entries() {
            match entry {
                None if complete => {
                    return Err(Error::Config(format!("annotation needs `models.{name}`")))
                }
                None => loaded.push(None),
                Some(m) => {
                    if !m.path.exists() {
                        return Err(Error::Config(format!(
                            "model `{name}` file {} does not exist",
                            m.path.display()
                        )));
                    }
                    let model = ClassifierModel::load(&m.path)?;
                    loaded.push(Some(BoundModel::new(model, m.positive_label.as_str())?));
                }
            }
        }
        let mut it = loaded.into_iter();
        let mut next = || it.next().unwrap();
        Ok(Annotators {
            tokenizer,
            chars_include_whitespace: self.chars_include_whitespace,
            dclm: next(),
            cosmo: next(),
            sci: next(),
            edu: next(),
            tech: next(),
            med: next(),
            category_cutoff: self.ensemble.as_ref().map_or(0.5, |e| e.category_cutoff),
        })
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        let workers = self
            .workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))
    }
}

fn strip_config(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AnnotationCounts {
    /// Annotation values written.
    pub written: usize,
    /// Documents without words (readability sentinel +∞).
    pub unscorable_readability: usize,
    /// Documents without tokens (ratio sentinel 0).
    pub unscorable_ratios: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageReport {
    pub stage: Stage,
    pub docs_in: usize,
    pub docs_out: usize,
    pub bytes_in: usize,
    pub bytes_out: usize,
    /// Token counts under the configured tokenizer, when there is one.
    pub tokens_in: Option<u64>,
    pub tokens_out: Option<u64>,
    /// docs_out / docs_in; absent for empty input.
    pub retention: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shards: Option<Vec<DedupStats>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub annotations: Option<AnnotationCounts>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rule: Option<Rule>,
    /// Dropped documents per reason; sums to docs_in - docs_out.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drops: Option<BTreeMap<&'static str, usize>>,
}

impl StageReport {
    fn new(stage: Stage, counting_tokens: bool) -> Self {
        StageReport {
            stage,
            docs_in: 0,
            docs_out: 0,
            bytes_in: 0,
            bytes_out: 0,
            tokens_in: counting_tokens.then_some(0),
            tokens_out: counting_tokens.then_some(0),
            retention: None,
            shards: None,
            annotations: None,
            rule: None,
            drops: None,
        }
    }

    fn add_in(&mut self, docs: &[Document], tokens: Option<&[u64]>) {
        self.docs_in += docs.len();
        self.bytes_in += docs.iter().map(|d| d.text.len()).sum::<usize>();
        if let (Some(t), Some(counts)) = (self.tokens_in.as_mut(), tokens) {
            *t += counts.iter().sum::<u64>();
        }
    }

    fn add_out(&mut self, docs: &[Document], tokens: Option<&[u64]>) {
        self.docs_out += docs.len();
        self.bytes_out += docs.iter().map(|d| d.text.len()).sum::<usize>();
        if let (Some(t), Some(counts)) = (self.tokens_out.as_mut(), tokens) {
            *t += counts.iter().sum::<u64>();
        }
    }

    fn finish(&mut self) {
        self.retention = (self.docs_in > 0).then(|| self.docs_out as f64 / self.docs_in as f64);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub output: PathBuf,
    pub examples: usize,
    pub labels: Vec<String>,
    pub vocab: usize,
    pub train_accuracy: f64,
    pub epoch_losses: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub tau: f64,
    pub retention: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RetentionUnit {
    Tokens,
    Documents,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    pub tau_dclm: f64,
    pub tau_cosmo: f64,
    pub target: f64,
    pub achieved_retention: f64,
    pub unit: RetentionUnit,
    pub rule: Rule,
    /// Shared-τ sweep over every observed confidence value, ascending τ.
    pub curve: Vec<SweepPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsetSummary {
    pub path: PathBuf,
    pub docs: usize,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NumericSummary {
    pub count: usize,
    /// Values that are ±∞ or NaN (unscorable sentinels); excluded below.
    pub non_finite: usize,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub mean: Option<f64>,
    /// Nearest-rank 10th..90th percentiles.
    pub deciles: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub docs: usize,
    pub bytes: usize,
    pub chars: usize,
    pub tokens: Option<u64>,
    pub annotations: BTreeMap<String, NumericSummary>,
    pub categories: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub command: String,
    pub seed: u64,
    /// Malformed records skipped under `on_malformed = skip`.
    pub skipped_records: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub stages: Vec<StageReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration: Option<Calibration>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subsets: Option<Vec<SubsetSummary>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stats: Option<CorpusStats>,
    /// Seconds per stage; not serialized so reports stay reproducible.
    #[serde(skip)]
    pub timings: Vec<(String, f64)>,
}

impl RunReport {
    fn new(command: &str, config: &PipelineConfig) -> Self {
        RunReport {
            command: command.to_string(),
            seed: config.seed,
            skipped_records: 0,
            stages: Vec::new(),
            train: None,
            calibration: None,
            subsets: None,
            stats: None,
            timings: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

// ---------------------------------------------------------------------------
// Streaming input
// ---------------------------------------------------------------------------

/// Input documents with the malformed-record policy applied.
struct Source {
    inner: Box<dyn Iterator<Item = Result<Document>>>,
    policy: MalformedPolicy,
    skipped: usize,
}

impl Source {
    fn open(path: &Path, policy: MalformedPolicy) -> Result<Self> {
        Ok(Source { inner: Box::new(stream_documents(path)?), policy, skipped: 0 })
    }

    fn from_vec(docs: Vec<Document>) -> Self {
        Source { inner: Box::new(docs.into_iter().map(Ok)), policy: MalformedPolicy::Abort, skipped: 0 }
    }

    fn next_batch(&mut self, size: usize) -> Result<Vec<Document>> {
        let mut batch = Vec::with_capacity(size);
        while batch.len() < size {
            match self.inner.next() {
                None => break,
                Some(Ok(doc)) => batch.push(doc),
                Some(Err(Error::Data(_))) if self.policy == MalformedPolicy::Skip => self.skipped += 1,
                Some(Err(e)) => return Err(e),
            }
        }
        Ok(batch)
    }

    fn collect_all(&mut self) -> Result<Vec<Document>> {
        let mut all = Vec::new();
        loop {
            let batch = self.next_batch(4096)?;
            if batch.is_empty() {
                return Ok(all);
            }
            all.extend(batch);
        }
    }
}

struct Sink {
    path: PathBuf,
    writer: Box<dyn Write + Send>,
    written: usize,
}

impl Sink {
    fn create(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        Ok(Sink { path: path.to_path_buf(), writer: create_writer(path)?, written: 0 })
    }

    fn line(&mut self, line: &str) -> Result<()> {
        let index = self.written;
        self.writer
            .write_all(line.as_bytes())
            .and_then(|_| self.writer.write_all(b"\n"))
            .map_err(|source| Error::Write { index, source })?;
        self.written += 1;
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        self.writer.flush().map_err(|e| Error::io(&self.path, e))
    }
}

fn token_counts(
    pool: &rayon::ThreadPool,
    tokenizer: Option<&dyn Tokenizer>,
    docs: &[Document],
) -> Result<Option<Vec<u64>>> {
    let Some(tok) = tokenizer else { return Ok(None) };
    pool.install(|| {
        docs.par_iter()
            .map(|d| tok.count_tokens(&d.text).map(|n| n as u64))
            .collect::<Result<Vec<_>>>()
    })
    .map(Some)
}

// ---------------------------------------------------------------------------
// Stage driver
// ---------------------------------------------------------------------------

/// Deduplicate a whole corpus: contiguous byte-balanced shards, each shard
/// deduplicated independently and in parallel, output in input order.
pub fn dedup_documents(
    documents: Vec<Document>,
    shard_count: usize,
    config: &DedupConfig,
    tokenizer: Option<&dyn Tokenizer>,
    pool: &rayon::ThreadPool,
) -> Result<(Vec<Document>, Vec<DedupStats>)> {
    let shards = shard_corpus(documents, shard_count);
    let results = pool.install(|| {
        shards
            .into_par_iter()
            .map(|shard| dedup_shard(shard, config, tokenizer))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut docs = Vec::new();
    let mut stats = Vec::with_capacity(results.len());
    for (shard, s) in results {
        docs.extend(shard.documents);
        stats.push(s);
    }
    Ok((docs, stats))
}

/// Run `stages` (a subsequence of dedup, annotate, filter) from the
/// configured input to the configured output.
pub fn run_stages(
    config: &PipelineConfig,
    stages: &[Stage],
    overwrite: bool,
    command: &str,
) -> Result<RunReport> {
    validate_stages(stages)?;
    let input = config.input()?;
    let output = config.output()?;
    let has = |s: Stage| stages.contains(&s);
    let tokenizer = config.build_tokenizer()?;
    let ensemble = if has(Stage::Filter) { Some(config.ensemble()?) } else { None };
    let annotators = if has(Stage::Annotate) || has(Stage::Filter) {
        Some(config.build_annotators(tokenizer.clone(), has(Stage::Annotate))?)
    } else {
        None
    };
    let pool = config.pool()?;
    let tok = tokenizer.as_deref();
    let mut report = RunReport::new(command, config);
    let mut source = Source::open(input, config.on_malformed)?;

    if has(Stage::Dedup) {
        let started = Instant::now();
        let docs = source.collect_all()?;
        report.skipped_records = source.skipped;
        let mut stage = StageReport::new(Stage::Dedup, tok.is_some());
        stage.add_in(&docs, token_counts(&pool, tok, &docs)?.as_deref());
        let (docs, stats) = dedup_documents(docs, config.shard_count, &config.dedup, tok, &pool)?;
        stage.add_out(&docs, token_counts(&pool, tok, &docs)?.as_deref());
        stage.shards = Some(stats);
        stage.finish();
        report.stages.push(stage);
        report.timings.push(("dedup".into(), started.elapsed().as_secs_f64()));
        source = Source::from_vec(docs);
    }

    let mut annotate = has(Stage::Annotate).then(|| {
        let mut s = StageReport::new(Stage::Annotate, tok.is_some());
        s.annotations = Some(AnnotationCounts::default());
        s
    });
    let mut filter = ensemble.map(|e| {
        let mut s = StageReport::new(Stage::Filter, tok.is_some());
        s.rule = Some(e.rule);
        s.drops = Some(DropReason::ALL.iter().map(|r| (r.as_str(), 0)).collect());
        s
    });
    let mut audit = match (&filter, &config.audit_log) {
        (Some(_), Some(path)) => Some(Sink::create(path)?),
        _ => None,
    };
    let mut sink = Sink::create(output)?;
    let (mut t_annotate, mut t_filter) = (0.0, 0.0);

    loop {
        let mut batch = source.next_batch(config.batch_size)?;
        if batch.is_empty() {
            break;
        }
        let counts = if annotate.is_some() || filter.is_some() {
            token_counts(&pool, tok, &batch)?
        } else {
            None
        };

        if let Some(stage) = annotate.as_mut() {
            let started = Instant::now();
            let ann = annotators.as_ref().unwrap();
            stage.add_in(&batch, counts.as_deref());
            let outcomes = pool.install(|| {
                batch
                    .par_iter_mut()
                    .map(|d| ann.annotate(d, &AnnotationGroup::ALL, overwrite))
                    .collect::<Result<Vec<_>>>()
            })?;
            let c = stage.annotations.as_mut().unwrap();
            for o in outcomes {
                c.written += o.written;
                c.unscorable_readability += usize::from(o.unscorable_readability);
                c.unscorable_ratios += usize::from(o.unscorable_ratios);
            }
            stage.add_out(&batch, counts.as_deref());
            t_annotate += started.elapsed().as_secs_f64();
        }

        if let Some(stage) = filter.as_mut() {
            let started = Instant::now();
            let ann = annotators.as_ref().unwrap();
            let ens = ensemble.unwrap();
            stage.add_in(&batch, counts.as_deref());
            let decisions = pool.install(|| {
                batch
                    .par_iter_mut()
                    .map(|d| filter_document(d, ann, ens))
                    .collect::<Result<Vec<_>>>()
            })?;
            let drops = stage.drops.as_mut().unwrap();
            let mut kept = Vec::with_capacity(batch.len());
            let mut kept_tokens = counts.as_ref().map(|_| Vec::new());
            for (i, (doc, decision)) in batch.into_iter().zip(&decisions).enumerate() {
                if let Some(a) = audit.as_mut() {
                    a.line(&decision.audit_record(&doc.id, ens.rule).to_string())?;
                }
                match decision.reason {
                    Some(reason) => *drops.get_mut(reason.as_str()).unwrap() += 1,
                    None => {
                        if let (Some(kt), Some(c)) = (kept_tokens.as_mut(), counts.as_ref()) {
                            kt.push(c[i]);
                        }
                        kept.push(doc);
                    }
                }
            }
            stage.add_out(&kept, kept_tokens.as_deref());
            batch = kept;
            t_filter += started.elapsed().as_secs_f64();
        }

        for doc in &batch {
            sink.line(&doc.to_json_line())?;
        }
    }
    sink.finish()?;
    if let Some(a) = audit {
        a.finish()?;
    }
    if !has(Stage::Dedup) {
        report.skipped_records = source.skipped;
    }
    for (stage, secs) in [(annotate, t_annotate), (filter, t_filter)] {
        if let Some(mut s) = stage {
            s.finish();
            report.timings.push((s.stage.as_str().into(), secs));
            report.stages.push(s);
        }
    }
    Ok(report)
}

pub fn cmd_dedup(config: &PipelineConfig) -> Result<RunReport> {
    run_stages(config, &[Stage::Dedup], false, "dedup")
}

pub fn cmd_annotate(config: &PipelineConfig, overwrite: bool) -> Result<RunReport> {
    run_stages(config, &[Stage::Annotate], overwrite, "annotate")
}

pub fn cmd_filter(config: &PipelineConfig) -> Result<RunReport> {
    run_stages(config, &[Stage::Filter], false, "filter")
}

/// The configured `stages`, in recipe order.
pub fn cmd_run(config: &PipelineConfig, overwrite: bool) -> Result<RunReport> {
    run_stages(config, &config.stages, overwrite, "run")
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

pub fn cmd_train(config: &PipelineConfig) -> Result<RunReport> {
    let job = config.train.as_ref().ok_or_else(|| Error::Config("`train` is required".into()))?;
    let text = std::fs::read_to_string(&job.data).map_err(|e| Error::io(&job.data, e))?;
    let examples = parse_labeled(&text)?;
    let params = TrainConfig { seed: config.seed, ..job.params.clone() };
    let started = Instant::now();
    let (model, train) = ClassifierModel::train_with_report(&examples, &params)?;
    if let Some(dir) = job.output.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    model.save(&job.output)?;
    let mut report = RunReport::new("train", config);
    report.train = Some(TrainSummary {
        output: job.output.clone(),
        examples: examples.len(),
        labels: model.labels().to_vec(),
        vocab: model.vocab().len(),
        train_accuracy: model.accuracy(&examples),
        epoch_losses: train.epoch_losses,
    });
    report.timings.push(("train".into(), started.elapsed().as_secs_f64()));
    Ok(report)
}

// ---------------------------------------------------------------------------
// Calibration
// ---------------------------------------------------------------------------

/// When a document is retained as a function of the classifier thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Retention {
    Always,
    /// While either confidence exceeds τ.
    Either,
    /// While both confidences exceed τ.
    Both,
    Never,
}

struct CalibrationDoc {
    dclm: f64,
    cosmo: f64,
    retention: Retention,
    weight: u64,
}

impl CalibrationDoc {
    fn retained(&self, tau_dclm: f64, tau_cosmo: f64) -> bool {
        let (d, c) = (self.dclm > tau_dclm, self.cosmo > tau_cosmo);
        match self.retention {
            Retention::Always => true,
            Retention::Either => d || c,
            Retention::Both => d && c,
            Retention::Never => false,
        }
    }

    /// Retained exactly for shared τ below this value.
    fn shared_cutoff(&self) -> f64 {
        match self.retention {
            Retention::Always => f64::INFINITY,
            Retention::Either => self.dclm.max(self.cosmo),
            Retention::Both => self.dclm.min(self.cosmo),
            Retention::Never => f64::NEG_INFINITY,
        }
    }
}

fn calibration_docs(
    docs: &[Document],
    weights: Option<&[u64]>,
    config: &EnsembleConfig,
) -> Result<Vec<CalibrationDoc>> {
    docs.iter()
        .enumerate()
        .map(|(i, doc)| {
            let ann = &doc.annotations;
            let get = |k: &str| ann.number(k).ok_or_else(|| Error::MissingAnnotation(format!("{k} (document `{}`)", doc.id)));
            let (dclm, cosmo) = (get(keys::CONF_DCLM)?, get(keys::CONF_COSMO)?);
            let (eflaw, tpc) = (get(keys::EFLAW)?, get(keys::TOKENS_PER_CHAR)?);
            let clauses = clause_values(ann, config)?;
            let rule = config.rule;
            let eval = |or: bool, and: bool| {
                let mut c = clauses;
                c.fasttext_or = or;
                c.fasttext_and = and;
                rule.evaluate(&c)
            };
            let retention = if !eflaw.is_finite() || tpc.is_nan() || tpc <= 0.0 {
                Retention::Never
            } else if eval(false, false) {
                Retention::Always
            } else if eval(true, false) {
                Retention::Either
            } else if eval(true, true) {
                Retention::Both
            } else {
                Retention::Never
            };
            Ok(CalibrationDoc { dclm, cosmo, retention, weight: weights.map_or(1, |w| w[i]) })
        })
        .collect()
}

/// Choose classifier thresholds so that the configured rule keeps at least
/// `target` of the corpus weight (tokens when `weights` is given, otherwise
/// documents).
///
/// Shared mode sweeps one τ for both classifiers over 0 and every observed
/// confidence and returns the largest τ that still meets the target. Grid
/// mode searches τ_DCLM × τ_Cosmo on `grid_steps` evenly spaced values in
/// [0, 1] and returns the pair with the smallest retention meeting the
/// target (ties: larger τ_DCLM, then larger τ_Cosmo).
pub fn calibrate_fasttext_thresholds(
    docs: &[Document],
    weights: Option<&[u64]>,
    target: f64,
    config: &EnsembleConfig,
    grid: Option<usize>,
) -> Result<Calibration> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::Config(format!("target must lie in (0, 1], got {target}")));
    }
    if let Some(w) = weights {
        assert_eq!(w.len(), docs.len(), "one weight per document");
    }
    let cal = calibration_docs(docs, weights, config)?;
    let total: u64 = cal.iter().map(|d| d.weight).sum();
    if total == 0 {
        return Err(Error::Data("cannot calibrate on an empty corpus".into()));
    }
    let fraction = |w: u64| w as f64 / total as f64;

    // Shared sweep: retention(τ) = weight of docs whose cutoff exceeds τ.
    let mut cutoffs: Vec<(f64, u64)> = cal.iter().map(|d| (d.shared_cutoff(), d.weight)).collect();
    cutoffs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut suffix = vec![0u64; cutoffs.len() + 1];
    for i in (0..cutoffs.len()).rev() {
        suffix[i] = suffix[i + 1] + cutoffs[i].1;
    }
    let retained_above = |tau: f64| suffix[cutoffs.partition_point(|c| c.0 <= tau)];
    let mut taus: Vec<f64> = std::iter::once(0.0)
        .chain(cal.iter().flat_map(|d| [d.dclm, d.cosmo]))
        .filter(|t| (0.0..=1.0).contains(t))
        .collect();
    taus.sort_by(f64::total_cmp);
    taus.dedup();
    let curve: Vec<SweepPoint> = taus
        .iter()
        .map(|&tau| SweepPoint { tau, retention: fraction(retained_above(tau)) })
        .collect();

    let max_achievable = curve[0].retention;
    if max_achievable < target {
        return Err(Error::Data(format!(
            "retention target {target} is unreachable; at most {max_achievable} is retained at tau = 0"
        )));
    }

    let unit = if weights.is_some() { RetentionUnit::Tokens } else { RetentionUnit::Documents };
    let (tau_dclm, tau_cosmo, achieved) = match grid {
        None => {
            let best = curve.iter().rev().find(|p| p.retention >= target).unwrap();
            (best.tau, best.tau, best.retention)
        }
        Some(steps) => {
            let values: Vec<f64> = (0..steps).map(|i| i as f64 / (steps - 1) as f64).collect();
            let mut best: Option<(u64, f64, f64)> = None;
            for &a in &values {
                for &b in &values {
                    let kept: u64 = cal.iter().filter(|d| d.retained(a, b)).map(|d| d.weight).sum();
                    if fraction(kept) < target {
                        continue;
                    }
                    let better = match best {
                        None => true,
                        Some((k, ba, bb)) => (kept, -a, -b) < (k, -ba, -bb),
                    };
                    if better {
                        best = Some((kept, a, b));
                    }
                }
            }
            // τ = 0 on both axes always meets a reachable target.
            let (kept, a, b) = best.expect("grid contains tau = 0");
            (a, b, fraction(kept))
        }
    };
    Ok(Calibration {
        tau_dclm,
        tau_cosmo,
        target,
        achieved_retention: achieved,
        unit,
        rule: config.rule,
        curve,
    })
}

pub fn cmd_calibrate(config: &PipelineConfig) -> Result<RunReport> {
    let job = config
        .calibrate
        .as_ref()
        .ok_or_else(|| Error::Config("`calibrate` is required".into()))?;
    let ensemble = config.ensemble()?;
    let tokenizer = config.build_tokenizer()?;
    let pool = config.pool()?;
    let mut source = Source::open(config.input()?, config.on_malformed)?;
    let docs = source.collect_all()?;
    let weights = token_counts(&pool, tokenizer.as_deref(), &docs)?;
    let started = Instant::now();
    let calibration = calibrate_fasttext_thresholds(
        &docs,
        weights.as_deref(),
        job.target,
        ensemble,
        job.grid_2d.then_some(job.grid_steps),
    )?;
    let mut report = RunReport::new("calibrate", config);
    report.skipped_records = source.skipped;
    report.calibration = Some(calibration);
    report.timings.push(("calibrate".into(), started.elapsed().as_secs_f64()));
    Ok(report)
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

/// Assign `subsets` disjoint, uniformly random groups of `size` document
/// indices out of `n`. Each group is returned in corpus order.
pub fn sample_indices(n: usize, subsets: usize, size: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let needed = subsets.saturating_mul(size);
    if needed > n {
        return Err(Error::Config(format!(
            "{subsets} subsets of {size} documents need {needed} documents, the corpus has {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, "sample"));
    Ok(order[..needed]
        .chunks(size.max(1))
        .map(|c| {
            let mut c = c.to_vec();
            c.sort_unstable();
            c
        })
        .collect())
}

pub fn cmd_sample(config: &PipelineConfig) -> Result<RunReport> {
    let job = config.sample.as_ref().ok_or_else(|| Error::Config("`sample` is required".into()))?;
    let input = config.input()?;
    let started = Instant::now();

    let mut counter = Source::open(input, config.on_malformed)?;
    let mut n = 0;
    loop {
        let batch = counter.next_batch(4096)?;
        if batch.is_empty() {
            break;
        }
        n += batch.len();
    }
    let groups = sample_indices(n, job.subsets, job.size, config.seed)?;
    let mut owner: Vec<Option<usize>> = vec![None; n];
    for (g, idx) in groups.iter().enumerate() {
        for &i in idx {
            owner[i] = Some(g);
        }
    }

    std::fs::create_dir_all(&job.output_dir).map_err(|e| Error::io(&job.output_dir, e))?;
    let mut sinks = (0..job.subsets)
        .map(|g| Sink::create(&job.output_dir.join(format!("subset-{g}.jsonl"))))
        .collect::<Result<Vec<_>>>()?;
    let mut summaries: Vec<SubsetSummary> =
        sinks.iter().map(|s| SubsetSummary { path: s.path.clone(), docs: 0, bytes: 0 }).collect();
    let mut source = Source::open(input, config.on_malformed)?;
    let mut index = 0;
    loop {
        let batch = source.next_batch(4096)?;
        if batch.is_empty() {
            break;
        }
        for doc in batch {
            if let Some(g) = owner[index] {
                sinks[g].line(&doc.to_json_line())?;
                summaries[g].docs += 1;
                summaries[g].bytes += doc.text.len();
            }
            index += 1;
        }
    }
    for s in sinks {
        s.finish()?;
    }
    let mut report = RunReport::new("sample", config);
    report.skipped_records = source.skipped;
    report.subsets = Some(summaries);
    report.timings.push(("sample".into(), started.elapsed().as_secs_f64()));
    Ok(report)
}

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

/// Nearest-rank percentiles 10, 20, ..., 90 of sorted `values`.
pub fn deciles(sorted: &[f64]) -> Vec<f64> {
    if sorted.is_empty() {
        return Vec::new();
    }
    let n = sorted.len();
    (1..=9).map(|p| sorted[((p * n).div_ceil(10)).max(1) - 1]).collect()
}

fn summarize(values: &mut [f64], non_finite: usize) -> NumericSummary {
    values.sort_by(f64::total_cmp);
    let count = values.len() + non_finite;
    let mean = (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64);
    NumericSummary {
        count,
        non_finite,
        min: values.first().copied(),
        max: values.last().copied(),
        mean,
        deciles: deciles(values),
    }
}

pub fn corpus_stats(
    docs: impl IntoIterator<Item = Document>,
    tokenizer: Option<&dyn Tokenizer>,
) -> Result<CorpusStats> {
    let mut stats = CorpusStats {
        docs: 0,
        bytes: 0,
        chars: 0,
        tokens: tokenizer.map(|_| 0),
        annotations: BTreeMap::new(),
        categories: BTreeMap::new(),
    };
    let mut values: BTreeMap<String, (Vec<f64>, usize)> = BTreeMap::new();
    for doc in docs {
        stats.docs += 1;
        stats.bytes += doc.text.len();
        stats.chars += doc.text.chars().count();
        if let (Some(t), Some(tok)) = (stats.tokens.as_mut(), tokenizer) {
            *t += tok.count_tokens(&doc.text)? as u64;
        }
        for (key, value) in doc.annotations.iter() {
            if key == keys::CATEGORY {
                if let Some(c) = value.as_str() {
                    *stats.categories.entry(c.to_string()).or_default() += 1;
                }
            } else if let Some(x) = value.as_f64() {
                let entry = values.entry(key.to_string()).or_default();
                if x.is_finite() {
                    entry.0.push(x);
                } else {
                    entry.1 += 1;
                }
            }
        }
    }
    stats.annotations = values
        .into_iter()
        .map(|(k, (mut v, nf))| (k, summarize(&mut v, nf)))
        .collect();
    Ok(stats)
}

pub fn cmd_stats(config: &PipelineConfig) -> Result<RunReport> {
    let tokenizer = config.build_tokenizer()?;
    let mut source = Source::open(config.input()?, config.on_malformed)?;
    let started = Instant::now();
    let mut docs = Vec::new();
    loop {
        let batch = source.next_batch(4096)?;
        if batch.is_empty() {
            break;
        }
        docs.extend(batch);
    }
    let stats = corpus_stats(docs, tokenizer.as_deref())?;
    let mut report = RunReport::new("stats", config);
    report.skipped_records = source.skipped;
    report.stats = Some(stats);
    report.timings.push(("stats".into(), started.elapsed().as_secs_f64()));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::Category;

    fn ensemble(rule: Rule) -> EnsembleConfig {
        EnsembleConfig {
            tau_dclm: 0.5,
            tau_cosmo: 0.5,
            readability_thresholds: Category::ALL.iter().map(|&c| (c, 100.0)).collect(),
            ratio_bounds: Category::ALL.iter().map(|&c| (c, (0.0, 10.0))).collect(),
            category_cutoff: 0.5,
            rule,
        }
    }

    fn doc(dclm: f64, cosmo: f64, eflaw: f64) -> Document {
        let mut d = Document::new(format!("{dclm}-{cosmo}"), "text");
        d.annotations.insert(keys::CONF_DCLM, dclm);
        d.annotations.insert(keys::CONF_COSMO, cosmo);
        d.annotations.insert(keys::EFLAW, eflaw);
        d.annotations.insert(keys::TOKENS_PER_CHAR, 0.25);
        d.annotations.insert(keys::CATEGORY, "sci");
        d
    }

    #[test]
    fn stage_order() {
        assert!(validate_stages(&[Stage::Dedup, Stage::Annotate, Stage::Filter]).is_ok());
        assert!(validate_stages(&[Stage::Dedup, Stage::Filter]).is_ok());
        assert!(validate_stages(&[Stage::Filter]).is_ok());
        let err = validate_stages(&[Stage::Filter, Stage::Annotate]).unwrap_err();
        assert!(err.is_config(), "{err}");
        assert!(validate_stages(&[Stage::Annotate, Stage::Annotate]).is_err());
        assert!(validate_stages(&[]).is_err());
    }

    #[test]
    fn config_parsing_and_paths() {
        let base = Path::new("/data/run");
        let cfg = PipelineConfig::from_json(
            r#"{"input":"in.jsonl","output":"/abs/out.jsonl","tokenizer":{"kind":"bpe","vocab":"v.json","merges":"m.txt"},
               "models":{"dclm":{"path":"m/dclm.bin","positive_label":"hq"}}}"#,
            base,
        )
        .unwrap();
        assert_eq!(cfg.input.as_deref(), Some(Path::new("/data/run/in.jsonl")));
        assert_eq!(cfg.output.as_deref(), Some(Path::new("/abs/out.jsonl")));
        assert_eq!(cfg.models.dclm.as_ref().unwrap().path, Path::new("/data/run/m/dclm.bin"));
        assert_eq!(cfg.shard_count, 1);
        assert_eq!(cfg.dedup, DedupConfig::default());
        assert!(cfg.chars_include_whitespace);
        assert_eq!(cfg.stages, default_stages());
        match cfg.tokenizer {
            Some(TokenizerSpec::Bpe { vocab, byte_level, .. }) => {
                assert_eq!(vocab, Path::new("/data/run/v.json"));
                assert!(byte_level);
            }
            other => panic!("{other:?}"),
        }

        let example = PipelineConfig::from_json(include_str!("../config/example.json"), base).unwrap();
        assert!(example.comment.as_deref().unwrap().contains("placeholder"));
        assert_eq!(example.ensemble.unwrap().rule, Rule::Gneissweb);

        for bad in [
            r#"{"bogus":1}"#,
            r#"{"shard_count":0}"#,
            r#"{"stages":["filter","annotate"]}"#,
            r#"{"dedup":{"unit":"tokens"}}"#,
            r#"{"calibrate":{"target":0}}"#,
            r#"{"sample":{"subsets":0,"size":3,"output_dir":"x"}}"#,
            r#"{"workers":0}"#,
        ] {
            let err = PipelineConfig::from_json(bad, base).unwrap_err();
            assert!(err.is_config(), "{bad}: {err}");
        }
    }

    #[test]
    fn calibration_closed_form() {
        // Confidences on a 100-point grid; readability and ratios always pass.
        let docs: Vec<Document> = (0..100).map(|k| doc(k as f64 / 100.0, 0.0, 1.0)).collect();
        let cfg = ensemble(Rule::Gneissweb);
        let cal = calibrate_fasttext_thresholds(&docs, None, 0.5, &cfg, None).unwrap();
        assert_eq!(cal.tau_dclm, 0.49);
        assert_eq!(cal.tau_cosmo, 0.49);
        assert_eq!(cal.achieved_retention, 0.5);
        assert_eq!(cal.unit, RetentionUnit::Documents);

        // At τ = 0 the zero-confidence document is lost (strict >).
        let err = calibrate_fasttext_thresholds(&docs, None, 1.0, &cfg, None).unwrap_err();
        assert!(err.to_string().contains("0.99"), "{err}");
        let cal = calibrate_fasttext_thresholds(&docs, None, 0.99, &cfg, None).unwrap();
        assert_eq!(cal.tau_dclm, 0.0);

        for w in cal.curve.windows(2) {
            assert!(w[0].tau < w[1].tau && w[0].retention >= w[1].retention);
        }
    }

    #[test]
    fn calibration_weights_and_always_kept() {
        // Rule3 keeps read∧ext documents no matter the classifiers.
        let docs = vec![doc(0.2, 0.1, 1.0), doc(0.9, 0.8, 1.0)];
        let cal = calibrate_fasttext_thresholds(&docs, Some(&[3, 1]), 1.0, &ensemble(Rule::Rule3), None).unwrap();
        assert_eq!(cal.tau_dclm, 0.9);
        assert_eq!(cal.unit, RetentionUnit::Tokens);

        // Under gneissweb the heavy low-confidence document decides.
        let cal = calibrate_fasttext_thresholds(&docs, Some(&[3, 1]), 0.75, &ensemble(Rule::Gneissweb), None).unwrap();
        assert_eq!(cal.tau_dclm, 0.1);
        assert_eq!(cal.achieved_retention, 1.0);
        let cal = calibrate_fasttext_thresholds(&docs, Some(&[3, 1]), 0.25, &ensemble(Rule::Gneissweb), None).unwrap();
        assert_eq!(cal.tau_dclm, 0.8);
        assert_eq!(cal.achieved_retention, 0.25);
    }

    #[test]
    fn calibration_rule4_uses_both() {
        let docs = vec![doc(0.9, 0.3, 1.0), doc(0.6, 0.7, 1.0)];
        let cal = calibrate_fasttext_thresholds(&docs, None, 0.5, &ensemble(Rule::Rule4), None).unwrap();
        assert_eq!(cal.tau_dclm, 0.3);
    }

    #[test]
    fn calibration_grid_mode() {
        let docs: Vec<Document> = (0..10).map(|k| doc(k as f64 / 10.0 + 0.05, 0.0, 1.0)).collect();
        let cal = calibrate_fasttext_thresholds(&docs, None, 0.3, &ensemble(Rule::Gneissweb), Some(11)).unwrap();
        assert_eq!(cal.achieved_retention, 0.3);
        assert_eq!(cal.tau_dclm, 0.7);
        assert_eq!(cal.tau_cosmo, 1.0);
    }

    #[test]
    fn calibration_errors() {
        let mut d = doc(0.5, 0.5, 1.0);
        d.annotations = d.annotations.iter().filter(|(k, _)| *k != keys::CONF_COSMO).map(|(k, v)| (k.to_string(), v.clone())).collect();
        assert!(matches!(
            calibrate_fasttext_thresholds(&[d], None, 0.5, &ensemble(Rule::Gneissweb), None),
            Err(Error::MissingAnnotation(_))
        ));
        assert!(calibrate_fasttext_thresholds(&[], None, 0.5, &ensemble(Rule::Gneissweb), None).is_err());
        assert!(calibrate_fasttext_thresholds(&[doc(0.5, 0.5, 1.0)], None, 0.0, &ensemble(Rule::Gneissweb), None)
            .unwrap_err()
            .is_config());
    }

    #[test]
    fn sampling_is_disjoint_and_seeded() {
        let a = sample_indices(100, 3, 30, 7).unwrap();
        assert_eq!(a, sample_indices(100, 3, 30, 7).unwrap());
        assert_ne!(a, sample_indices(100, 3, 30, 8).unwrap());
        let mut all: Vec<usize> = a.iter().flatten().copied().collect();
        assert!(a.iter().all(|s| s.len() == 30 && s.windows(2).all(|w| w[0] < w[1])));
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 90);

        let mut part: Vec<usize> = sample_indices(12, 3, 4, 1).unwrap().concat();
        part.sort_unstable();
        assert_eq!(part, (0..12).collect::<Vec<_>>());
        assert!(sample_indices(10, 3, 4, 1).unwrap_err().is_config());
    }

    #[test]
    fn decile_ranks() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(deciles(&v), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
        assert_eq!(deciles(&[4.0]), vec![4.0; 9]);
        assert!(deciles(&[]).is_empty());
    }

    #[test]
    fn stats_summary() {
        let mut docs = vec![doc(0.1, 0.2, 3.0), doc(0.3, 0.4, f64::INFINITY)];
        docs[1].annotations.insert(keys::CATEGORY, "other");
        let stats = corpus_stats(docs, Some(&crate::tokenize::WhitespaceTokenizer)).unwrap();
        assert_eq!((stats.docs, stats.bytes, stats.tokens), (2, 8, Some(2)));
        let eflaw = &stats.annotations[keys::EFLAW];
        assert_eq!((eflaw.count, eflaw.non_finite, eflaw.max), (2, 1, Some(3.0)));
        assert_eq!(stats.categories.get("sci"), Some(&1));
        assert_eq!(stats.categories.get("other"), Some(&1));

        let empty = corpus_stats(Vec::new(), None).unwrap();
        assert_eq!((empty.docs, empty.bytes, empty.tokens), (0, 0, None));
    }
}
