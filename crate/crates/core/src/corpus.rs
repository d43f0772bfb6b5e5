//! Document model and streaming JSONL I/O.
//!
//! Every record is one JSON object per line. `text` is required, `id` is
//! synthesized as `<shard>:<line>` when absent, `annotations` is loaded into
//! an [`AnnotationSet`], and any other top-level field is carried through
//! untouched.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::ser::{Serialize, Serializer};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// Reserved annotation names.
pub mod keys {
    pub const EFLAW: &str = "readability.eflaw";
    pub const FKGL: &str = "readability.fkgl";
    pub const ARI: &str = "readability.ari";
    pub const FOG: &str = "readability.fog";
    pub const TOKENS_PER_CHAR: &str = "tokens_per_char";
    pub const TOKENS_PER_BYTE: &str = "tokens_per_byte";
    pub const CONF_DCLM: &str = "conf.dclm";
    pub const CONF_COSMO: &str = "conf.cosmo";
    pub const CONF_SCI: &str = "conf.sci";
    pub const CONF_EDU: &str = "conf.edu";
    pub const CONF_TECH: &str = "conf.tech";
    pub const CONF_MED: &str = "conf.med";
    pub const CATEGORY: &str = "category";

    pub const ALL: [&str; 13] = [
        EFLAW,
        FKGL,
        ARI,
        FOG,
        TOKENS_PER_CHAR,
        TOKENS_PER_BYTE,
        CONF_DCLM,
        CONF_COSMO,
        CONF_SCI,
        CONF_EDU,
        CONF_TECH,
        CONF_MED,
        CATEGORY,
    ];

    /// Reserved keys holding numbers. Non-finite sentinels for these keys are
    /// stored as the strings `Infinity`, `-Infinity` and `NaN`.
    pub fn is_numeric(key: &str) -> bool {
        ALL[..12].contains(&key)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnnotationValue {
    Number(f64),
    Text(String),
    Bool(bool),
}

impl AnnotationValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            AnnotationValue::Number(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            AnnotationValue::Text(s) => Some(s),
            _ => None,
        }
    }

    fn from_json(key: &str, value: Value) -> std::result::Result<Self, String> {
        match value {
            Value::Number(n) => n
                .as_f64()
                .map(AnnotationValue::Number)
                .ok_or_else(|| format!("annotation `{key}` is not representable as f64")),
            Value::String(s) if keys::is_numeric(key) => match s.as_str() {
                "Infinity" => Ok(AnnotationValue::Number(f64::INFINITY)),
                "-Infinity" => Ok(AnnotationValue::Number(f64::NEG_INFINITY)),
                "NaN" => Ok(AnnotationValue::Number(f64::NAN)),
                _ => Err(format!("annotation `{key}` must be a number")),
            },
            Value::String(s) => Ok(AnnotationValue::Text(s)),
            Value::Bool(b) => Ok(AnnotationValue::Bool(b)),
            other => Err(format!(
                "annotation `{key}` has unsupported value {other}"
            )),
        }
    }
}

impl From<f64> for AnnotationValue {
    fn from(x: f64) -> Self {
        AnnotationValue::Number(x)
    }
}

impl From<&str> for AnnotationValue {
    fn from(s: &str) -> Self {
        AnnotationValue::Text(s.to_string())
    }
}

impl From<String> for AnnotationValue {
    fn from(s: String) -> Self {
        AnnotationValue::Text(s)
    }
}

impl From<bool> for AnnotationValue {
    fn from(b: bool) -> Self {
        AnnotationValue::Bool(b)
    }
}

impl Serialize for AnnotationValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            AnnotationValue::Number(x) if x.is_nan() => serializer.serialize_str("NaN"),
            AnnotationValue::Number(x) if x.is_infinite() => {
                serializer.serialize_str(if *x > 0.0 { "Infinity" } else { "-Infinity" })
            }
            AnnotationValue::Number(x) => serializer.serialize_f64(*x),
            AnnotationValue::Text(s) => serializer.serialize_str(s),
            AnnotationValue::Bool(b) => serializer.serialize_bool(*b),
        }
    }
}

/// Named per-document measurements, kept in key order so output is stable.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize)]
#[serde(transparent)]
pub struct AnnotationSet(BTreeMap<String, AnnotationValue>);

impl AnnotationSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &str) -> Option<&AnnotationValue> {
        self.0.get(key)
    }

    pub fn number(&self, key: &str) -> Option<f64> {
        self.0.get(key).and_then(AnnotationValue::as_f64)
    }

    pub fn text(&self, key: &str) -> Option<&str> {
        self.0.get(key).and_then(AnnotationValue::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.0.contains_key(key)
    }

    pub fn insert(&mut self, key: impl Into<String>, value: impl Into<AnnotationValue>) {
        self.0.insert(key.into(), value.into());
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &AnnotationValue)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v))
    }
}

impl FromIterator<(String, AnnotationValue)> for AnnotationSet {
    fn from_iter<I: IntoIterator<Item = (String, AnnotationValue)>>(iter: I) -> Self {
        AnnotationSet(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub annotations: AnnotationSet,
    /// Top-level fields other than `id`, `text` and `annotations`, in input order.
    pub extra: Map<String, Value>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
            annotations: AnnotationSet::new(),
            extra: Map::new(),
        }
    }

    /// Parse one JSONL record. `shard` and `line` are used for id synthesis.
    pub fn from_json_line(line_text: &str, shard: usize, line: u64) -> Result<Self> {
        let record_err = |message: String| Error::Record { line, message };
        let value: Value =
            serde_json::from_str(line_text).map_err(|e| record_err(e.to_string()))?;
        let Value::Object(mut map) = value else {
            return Err(record_err("record is not a JSON object".into()));
        };
        let text = match map.shift_remove("text") {
            Some(Value::String(s)) => s,
            Some(_) => return Err(record_err("`text` is not a string".into())),
            None => return Err(record_err("missing `text` field".into())),
        };
        let id = match map.shift_remove("id") {
            Some(Value::String(s)) if !s.is_empty() => s,
            Some(Value::Number(n)) => n.to_string(),
            Some(Value::Null) | None => format!("{shard}:{line}"),
            Some(_) => return Err(record_err("`id` must be a non-empty string".into())),
        };
        let annotations = match map.shift_remove("annotations") {
            Some(Value::Object(entries)) => entries
                .into_iter()
                .map(|(k, v)| AnnotationValue::from_json(&k, v).map(|v| (k, v)))
                .collect::<std::result::Result<AnnotationSet, String>>()
                .map_err(record_err)?,
            Some(Value::Null) | None => AnnotationSet::new(),
            Some(_) => return Err(record_err("`annotations` is not an object".into())),
        };
        Ok(Document {
            id,
            text,
            annotations,
            extra: map,
        })
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&Record::from(self)).expect("document serialization is infallible")
    }
}

#[derive(serde::Serialize)]
struct Record<'a> {
    id: &'a str,
    text: &'a str,
    annotations: &'a AnnotationSet,
    #[serde(flatten)]
    extra: &'a Map<String, Value>,
}

impl<'a> From<&'a Document> for Record<'a> {
    fn from(d: &'a Document) -> Self {
        Record {
            id: &d.id,
            text: &d.text,
            annotations: &d.annotations,
            extra: &d.extra,
        }
    }
}

/// An ordered run of documents processed as one unit by dedup.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Shard {
    pub index: usize,
    pub documents: Vec<Document>,
}

impl Shard {
    pub fn text_bytes(&self) -> usize {
        self.documents.iter().map(|d| d.text.len()).sum()
    }
}

/// Streaming JSONL reader yielding one result per non-blank line.
pub struct JsonlReader<R> {
    inner: R,
    shard: usize,
    line: u64,
    buf: String,
}

impl<R: BufRead> JsonlReader<R> {
    pub fn new(inner: R, shard: usize) -> Self {
        JsonlReader {
            inner,
            shard,
            line: 0,
            buf: String::new(),
        }
    }
}

impl<R: BufRead> Iterator for JsonlReader<R> {
    type Item = Result<Document>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            match self.inner.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => {
                    self.line += 1;
                    return Some(Err(Error::Record {
                        line: self.line,
                        message: e.to_string(),
                    }));
                }
            }
            self.line += 1;
            let trimmed = self.buf.trim_end_matches(['\n', '\r']);
            if trimmed.trim().is_empty() {
                continue;
            }
            return Some(Document::from_json_line(trimmed, self.shard, self.line));
        }
    }
}

/// Read every document from `reader`, aborting on the first malformed record.
pub fn read_jsonl<R: BufRead>(reader: R, shard: usize) -> Result<Vec<Document>> {
    JsonlReader::new(reader, shard).collect()
}

/// Write documents one per line. An empty slice writes nothing.
pub fn write_jsonl<'a, W, I>(documents: I, writer: W) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a Document>,
{
    let mut writer = writer;
    for (index, doc) in documents.into_iter().enumerate() {
        let line = doc.to_json_line();
        writer
            .write_all(line.as_bytes())
            .and_then(|_| writer.write_all(b"\n"))
            .map_err(|source| Error::Write { index, source })?;
    }
    writer.flush()?;
    Ok(())
}

fn is_gz(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "gz")
}

pub fn open_reader(path: &Path) -> Result<Box<dyn BufRead + Send>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    if is_gz(path) {
        Ok(Box::new(BufReader::new(MultiGzDecoder::new(file))))
    } else {
        Ok(Box::new(BufReader::new(file)))
    }
}

pub fn create_writer(path: &Path) -> Result<Box<dyn Write + Send>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    if is_gz(path) {
        Ok(Box::new(BufWriter::new(GzEncoder::new(
            file,
            Compression::default(),
        ))))
    } else {
        Ok(Box::new(BufWriter::new(file)))
    }
}

/// Input files for `path`: the file itself, or every `*.jsonl` / `*.jsonl.gz`
/// file inside a directory in name order. The position in this list is the
/// shard index used for id synthesis.
pub fn input_files(path: &Path) -> Result<Vec<PathBuf>> {
    let meta = std::fs::metadata(path).map_err(|e| Error::io(path, e))?;
    if !meta.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files = Vec::new();
    for entry in std::fs::read_dir(path).map_err(|e| Error::io(path, e))? {
        let p = entry.map_err(|e| Error::io(path, e))?.path();
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.ends_with(".jsonl") || name.ends_with(".jsonl.gz") {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

/// Lazily stream every document under `path`. Errors carry the file path.
pub fn stream_documents(path: &Path) -> Result<impl Iterator<Item = Result<Document>>> {
    let files = input_files(path)?;
    let mut readers = Vec::with_capacity(files.len());
    for (shard, file) in files.into_iter().enumerate() {
        let reader = open_reader(&file)?;
        readers.push((file, JsonlReader::new(reader, shard)));
    }
    Ok(readers.into_iter().flat_map(|(file, reader)| {
        reader.map(move |r| {
            r.map_err(|e| match e {
                Error::Record { line, message } => {
                    Error::Data(format!("{}:{line}: {message}", file.display()))
                }
                other => other,
            })
        })
    }))
}

pub fn read_path(path: &Path) -> Result<Vec<Document>> {
    stream_documents(path)?.collect()
}

pub fn write_path(path: &Path, documents: &[Document]) -> Result<()> {
    let writer = create_writer(path)?;
    write_jsonl(documents, writer)
}
