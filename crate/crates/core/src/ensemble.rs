//! Category resolution, clause evaluation and the ensemble retention rules.
//!
//! A document is described by three clause outcomes — the fastText
//! combination (`or`/`and` over the two quality classifiers), readability
//! and extreme-tokenization — evaluated against thresholds chosen by the
//! document's category. A rule aggregates the clauses into keep/drop.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::classifier::ClassifierModel;
use crate::corpus::{keys, AnnotationSet, AnnotationValue, Document};
use crate::error::{Error, Result};
use crate::textstats::ReadabilityScores;
use crate::tokenize::{ratios, Tokenizer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Sci,
    Edu,
    Tech,
    Med,
    Other,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::Sci,
        Category::Edu,
        Category::Tech,
        Category::Med,
        Category::Other,
    ];

    /// The four classifier-backed categories, in tie-break order.
    pub const KEYED: [Category; 4] = [Category::Sci, Category::Edu, Category::Tech, Category::Med];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Sci => "sci",
            Category::Edu => "edu",
            Category::Tech => "tech",
            Category::Med => "med",
            Category::Other => "other",
        }
    }

    /// Confidence annotation for a keyed category.
    pub fn confidence_key(self) -> Option<&'static str> {
        match self {
            Category::Sci => Some(keys::CONF_SCI),
            Category::Edu => Some(keys::CONF_EDU),
            Category::Tech => Some(keys::CONF_TECH),
            Category::Med => Some(keys::CONF_MED),
            Category::Other => None,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Data(format!("unknown category `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rule {
    Rule1,
    Rule2,
    Rule3,
    Rule4,
    Gneissweb,
}

impl Rule {
    pub const ALL: [Rule; 5] = [Rule::Rule1, Rule::Rule2, Rule::Rule3, Rule::Rule4, Rule::Gneissweb];

    pub fn as_str(self) -> &'static str {
        match self {
            Rule::Rule1 => "rule1",
            Rule::Rule2 => "rule2",
            Rule::Rule3 => "rule3",
            Rule::Rule4 => "rule4",
            Rule::Gneissweb => "gneissweb",
        }
    }

    pub fn evaluate(self, c: &Clauses) -> bool {
        let (or, and, read, ext) = (c.fasttext_or, c.fasttext_and, c.readability, c.extreme_tokens);
        match self {
            Rule::Rule1 => or && read && ext,
            Rule::Rule2 => (or && read) || (or && ext) || (read && ext),
            Rule::Rule3 => or || (read && ext),
            Rule::Rule4 => (and && read) || (and && ext),
            Rule::Gneissweb => (or && read) || (or && ext),
        }
    }

    /// The fastText clause this rule reads.
    fn fasttext_clause(self, c: &Clauses) -> bool {
        match self {
            Rule::Rule4 => c.fasttext_and,
            _ => c.fasttext_or,
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Rule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Rule::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown rule `{s}`")))
    }
}

fn default_cutoff() -> f64 {
    0.5
}

fn default_rule() -> Rule {
    Rule::Gneissweb
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub tau_dclm: f64,
    pub tau_cosmo: f64,
    /// Category → r_c; readability passes when EFLAW < r_c.
    pub readability_thresholds: BTreeMap<Category, f64>,
    /// Category → (low, high); passes when low < tokens_per_char < high.
    pub ratio_bounds: BTreeMap<Category, (f64, f64)>,
    /// Documents whose best category confidence is below this are `other`.
    #[serde(default = "default_cutoff")]
    pub category_cutoff: f64,
    #[serde(default = "default_rule")]
    pub rule: Rule,
}

fn unit_interval(name: &str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must lie in [0, 1], got {x}")))
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        unit_interval("tau_dclm", self.tau_dclm)?;
        unit_interval("tau_cosmo", self.tau_cosmo)?;
        unit_interval("category_cutoff", self.category_cutoff)?;
        for c in Category::ALL {
            let r = self.readability_thresholds.get(&c).ok_or_else(|| {
                Error::Config(format!("readability_thresholds has no entry for `{c}`"))
            })?;
            if r.is_nan() {
                return Err(Error::Config(format!("readability threshold for `{c}` is NaN")));
            }
            let (lo, hi) = self
                .ratio_bounds
                .get(&c)
                .ok_or_else(|| Error::Config(format!("ratio_bounds has no entry for `{c}`")))?;
            if lo.partial_cmp(hi) != Some(std::cmp::Ordering::Less) {
                return Err(Error::Config(format!(
                    "ratio_bounds for `{c}` need low < high, got ({lo}, {hi})"
                )));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: EnsembleConfig = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("ensemble config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    fn readability_threshold(&self, c: Category) -> f64 {
        self.readability_thresholds[&c]
    }

    fn bounds(&self, c: Category) -> (f64, f64) {
        self.ratio_bounds[&c]
    }
}

fn require(annotations: &AnnotationSet, key: &str) -> Result<f64> {
    annotations
        .number(key)
        .ok_or_else(|| Error::MissingAnnotation(key.to_string()))
}

/// Argmax of the four category confidences (ties to the earlier of sci, edu,
/// tech, med); `other` when the best is below `category_cutoff`.
pub fn resolve_category(annotations: &AnnotationSet, category_cutoff: f64) -> Result<Category> {
    let mut best = (Category::Other, f64::NEG_INFINITY);
    for c in Category::KEYED {
        let conf = require(annotations, c.confidence_key().unwrap())?;
        if conf > best.1 {
            best = (c, conf);
        }
    }
    Ok(if best.1 < category_cutoff { Category::Other } else { best.0 })
}

/// The stored `category` annotation if present, otherwise resolved from the
/// confidences.
pub fn document_category(annotations: &AnnotationSet, category_cutoff: f64) -> Result<Category> {
    match annotations.get(keys::CATEGORY) {
        Some(v) => v
            .as_str()
            .ok_or_else(|| Error::Data(format!("`{}` must be a string", keys::CATEGORY)))?
            .parse(),
        None => resolve_category(annotations, category_cutoff),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Clauses {
    pub fasttext_or: bool,
    pub fasttext_and: bool,
    pub readability: bool,
    pub extreme_tokens: bool,
}

pub fn clause_values(annotations: &AnnotationSet, config: &EnsembleConfig) -> Result<Clauses> {
    let dclm = require(annotations, keys::CONF_DCLM)? > config.tau_dclm;
    let cosmo = require(annotations, keys::CONF_COSMO)? > config.tau_cosmo;
    let eflaw = require(annotations, keys::EFLAW)?;
    let tpc = require(annotations, keys::TOKENS_PER_CHAR)?;
    let category = document_category(annotations, config.category_cutoff)?;
    let (lo, hi) = config.bounds(category);
    Ok(Clauses {
        fasttext_or: dclm || cosmo,
        fasttext_and: dclm && cosmo,
        readability: eflaw < config.readability_threshold(category),
        extreme_tokens: lo < tpc && tpc < hi,
    })
}

/// Why a document was dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Fasttext,
    Readability,
    ExtremeTokens,
    Unscorable,
    MissingAnnotation,
}

impl DropReason {
    pub const ALL: [DropReason; 5] = [
        DropReason::Fasttext,
        DropReason::Readability,
        DropReason::ExtremeTokens,
        DropReason::Unscorable,
        DropReason::MissingAnnotation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::Fasttext => "fasttext",
            DropReason::Readability => "readability",
            DropReason::ExtremeTokens => "extreme_tokens",
            DropReason::Unscorable => "unscorable",
            DropReason::MissingAnnotation => "missing_annotation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterDecision {
    pub retained: bool,
    /// Absent when the document could not be evaluated.
    pub clauses: Option<Clauses>,
    /// Set exactly when the document is dropped. Rule drops are attributed
    /// to the first false clause in the order fasttext, readability,
    /// extreme_tokens.
    pub reason: Option<DropReason>,
}

pub fn apply_rule(rule: Rule, clauses: Clauses) -> FilterDecision {
    let retained = rule.evaluate(&clauses);
    let reason = if retained {
        None
    } else if !rule.fasttext_clause(&clauses) {
        Some(DropReason::Fasttext)
    } else if !clauses.readability {
        Some(DropReason::Readability)
    } else {
        Some(DropReason::ExtremeTokens)
    };
    FilterDecision { retained, clauses: Some(clauses), reason }
}

impl FilterDecision {
    fn dropped(reason: DropReason) -> Self {
        FilterDecision { retained: false, clauses: None, reason: Some(reason) }
    }

    /// JSONL audit record for this decision.
    pub fn audit_record(&self, id: &str, rule: Rule) -> serde_json::Value {
        serde_json::json!({
            "id": id,
            "clauses": self.clauses,
            "retained": self.retained,
            "rule": rule,
            "reason": self.reason,
        })
    }
}

/// A binary classifier and the label whose probability is the confidence.
#[derive(Debug, Clone)]
pub struct BoundModel {
    pub model: Arc<ClassifierModel>,
    pub positive_label: String,
}

impl BoundModel {
    pub fn new(model: ClassifierModel, positive_label: impl Into<String>) -> Result<Self> {
        let positive_label = positive_label.into();
        if model.labels().len() != 2 {
            return Err(Error::Config(format!(
                "classifier for `{positive_label}` must be binary, it has labels {:?}",
                model.labels()
            )));
        }
        model.label_index(&positive_label).map_err(|e| Error::Config(e.to_string()))?;
        Ok(BoundModel { model: Arc::new(model), positive_label })
    }

    pub fn confidence(&self, text: &str) -> Result<f64> {
        self.model.positive_confidence(text, &self.positive_label)
    }
}

/// Everything needed to compute annotations that a document lacks. Any part
/// may be absent, in which case the matching annotations must already exist.
#[derive(Clone, Default)]
pub struct Annotators {
    pub tokenizer: Option<Arc<dyn Tokenizer>>,
    pub chars_include_whitespace: bool,
    pub dclm: Option<BoundModel>,
    pub cosmo: Option<BoundModel>,
    pub sci: Option<BoundModel>,
    pub edu: Option<BoundModel>,
    pub tech: Option<BoundModel>,
    pub med: Option<BoundModel>,
    pub category_cutoff: f64,
}

/// Groups of annotations that are computed together.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnnotationGroup {
    Readability,
    Ratios,
    Confidence(&'static str),
    Category,
}

impl AnnotationGroup {
    /// Every group, in the order they are computed.
    pub const ALL: [AnnotationGroup; 9] = [
        AnnotationGroup::Readability,
        AnnotationGroup::Ratios,
        AnnotationGroup::Confidence(keys::CONF_DCLM),
        AnnotationGroup::Confidence(keys::CONF_COSMO),
        AnnotationGroup::Confidence(keys::CONF_SCI),
        AnnotationGroup::Confidence(keys::CONF_EDU),
        AnnotationGroup::Confidence(keys::CONF_TECH),
        AnnotationGroup::Confidence(keys::CONF_MED),
        AnnotationGroup::Category,
    ];

    /// Groups the filter reads; each is computed only when its first key is
    /// absent.
    pub const FILTER: [AnnotationGroup; 5] = [
        AnnotationGroup::Readability,
        AnnotationGroup::Ratios,
        AnnotationGroup::Confidence(keys::CONF_DCLM),
        AnnotationGroup::Confidence(keys::CONF_COSMO),
        AnnotationGroup::Category,
    ];

    fn keys(self) -> &'static [&'static str] {
        match self {
            AnnotationGroup::Readability => &keys::ALL[0..4],
            AnnotationGroup::Ratios => &keys::ALL[4..6],
            AnnotationGroup::Confidence(k) => match k {
                keys::CONF_DCLM => &keys::ALL[6..7],
                keys::CONF_COSMO => &keys::ALL[7..8],
                keys::CONF_SCI => &keys::ALL[8..9],
                keys::CONF_EDU => &keys::ALL[9..10],
                keys::CONF_TECH => &keys::ALL[10..11],
                _ => &keys::ALL[11..12],
            },
            AnnotationGroup::Category => &keys::ALL[12..13],
        }
    }
}

/// What annotation found while computing one document.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AnnotationOutcome {
    /// Readability was computed and the text has no words.
    pub unscorable_readability: bool,
    /// Ratios were computed and the text has no tokens.
    pub unscorable_ratios: bool,
    /// Number of annotation keys written.
    pub written: usize,
}

impl Annotators {
    fn model(&self, key: &str) -> Option<&BoundModel> {
        match key {
            keys::CONF_DCLM => self.dclm.as_ref(),
            keys::CONF_COSMO => self.cosmo.as_ref(),
            keys::CONF_SCI => self.sci.as_ref(),
            keys::CONF_EDU => self.edu.as_ref(),
            keys::CONF_TECH => self.tech.as_ref(),
            keys::CONF_MED => self.med.as_ref(),
            _ => None,
        }
    }

    /// Fill in the annotations of `groups` that `doc` lacks (or all of them
    /// with `overwrite`). Unscorable text gets sentinels: +∞ for readability
    /// scores, 0 for token ratios.
    pub fn annotate(
        &self,
        doc: &mut Document,
        groups: &[AnnotationGroup],
        overwrite: bool,
    ) -> Result<AnnotationOutcome> {
        let mut outcome = AnnotationOutcome::default();
        for &group in groups {
            let present = group.keys().iter().all(|k| doc.annotations.contains(k));
            if present && !overwrite {
                continue;
            }
            let mut computed: Vec<(&'static str, AnnotationValue)> = Vec::new();
            let ann = &doc.annotations;
            match group {
                AnnotationGroup::Readability => {
                    let scores = ReadabilityScores::compute(&doc.text);
                    outcome.unscorable_readability = scores.is_none();
                    let s = scores.unwrap_or(ReadabilityScores {
                        eflaw: f64::INFINITY,
                        fkgl: f64::INFINITY,
                        ari: f64::INFINITY,
                        fog: f64::INFINITY,
                    });
                    computed.extend([
                        (keys::EFLAW, s.eflaw.into()),
                        (keys::FKGL, s.fkgl.into()),
                        (keys::ARI, s.ari.into()),
                        (keys::FOG, s.fog.into()),
                    ]);
                }
                AnnotationGroup::Ratios => {
                    let tok = self
                        .tokenizer
                        .as_deref()
                        .ok_or_else(|| Error::MissingAnnotation(keys::TOKENS_PER_CHAR.into()))?;
                    let (tpc, tpb) = match ratios(&doc.text, tok, self.chars_include_whitespace) {
                        Ok(r) => (r.tokens_per_char, r.tokens_per_byte),
                        Err(Error::Unscorable(_)) => {
                            outcome.unscorable_ratios = true;
                            (0.0, 0.0)
                        }
                        Err(e) => return Err(e),
                    };
                    computed.extend([
                        (keys::TOKENS_PER_CHAR, tpc.into()),
                        (keys::TOKENS_PER_BYTE, tpb.into()),
                    ]);
                }
                AnnotationGroup::Confidence(key) => {
                    let model = self
                        .model(key)
                        .ok_or_else(|| Error::MissingAnnotation(key.into()))?;
                    computed.push((key, model.confidence(&doc.text)?.into()));
                }
                AnnotationGroup::Category => {
                    // Resolve from stored confidences, computing absent ones.
                    let mut confs = AnnotationSet::new();
                    for cat in Category::KEYED {
                        let key = cat.confidence_key().unwrap();
                        let conf = match ann.number(key) {
                            Some(x) if !overwrite => x,
                            _ => {
                                let model = self
                                    .model(key)
                                    .ok_or_else(|| Error::MissingAnnotation(key.into()))?;
                                let x = model.confidence(&doc.text)?;
                                computed.push((key, x.into()));
                                x
                            }
                        };
                        confs.insert(key, conf);
                    }
                    let c = resolve_category(&confs, self.category_cutoff)?;
                    computed.push((keys::CATEGORY, c.as_str().into()));
                }
            }
            for (key, value) in computed {
                if overwrite || !doc.annotations.contains(key) {
                    doc.annotations.insert(key, value);
                    outcome.written += 1;
                }
            }
        }
        Ok(outcome)
    }
}

/// Annotate what the filter needs, then decide. Documents that cannot be
/// scored, or whose required annotations can be neither found nor computed,
/// are dropped with the matching reason.
pub fn filter_document(
    doc: &mut Document,
    annotators: &Annotators,
    config: &EnsembleConfig,
) -> Result<FilterDecision> {
    let missing: Vec<AnnotationGroup> = AnnotationGroup::FILTER
        .into_iter()
        .filter(|g| !doc.annotations.contains(g.keys()[0]))
        .collect();
    match annotators.annotate(doc, &missing, false) {
        Ok(_) => {}
        Err(Error::MissingAnnotation(_)) => {
            return Ok(FilterDecision::dropped(DropReason::MissingAnnotation))
        }
        Err(e) => return Err(e),
    }
    let ann = &doc.annotations;
    let eflaw = require(ann, keys::EFLAW)?;
    let tpc = require(ann, keys::TOKENS_PER_CHAR)?;
    if !eflaw.is_finite() || tpc.is_nan() || tpc <= 0.0 {
        return Ok(FilterDecision::dropped(DropReason::Unscorable));
    }
    let clauses = match clause_values(ann, config) {
        Ok(c) => c,
        Err(Error::MissingAnnotation(_)) => {
            return Ok(FilterDecision::dropped(DropReason::MissingAnnotation))
        }
        Err(e) => return Err(e),
    };
    Ok(apply_rule(config.rule, clauses))
}
