//! Offline inverted index over a JSONL document corpus.
//!
//! On disk an index is a directory holding `manifest.json`,
//! `documents.jsonl` and `postings.jsonl`. All three are written in a fixed
//! order so that indexing the same corpus twice produces identical bytes.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::bm25::{idf, term_score, Bm25Params, CorpusStats};
use crate::error::IndexError;
use crate::text::tokenize;

pub const INDEX_FORMAT: &str = "claimcheck-bm25/1";
const MANIFEST: &str = "manifest.json";
const DOCUMENTS: &str = "documents.jsonl";
const POSTINGS: &str = "postings.jsonl";

/// One line of a corpus file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    #[serde(default)]
    pub title: String,
    pub body: String,
}

impl Document {
    pub fn new(
        doc_id: impl Into<String>,
        title: impl Into<String>,
        body: impl Into<String>,
    ) -> Self {
        Self {
            doc_id: doc_id.into(),
            title: title.into(),
            body: body.into(),
        }
    }

    /// Text that gets tokenized for the index.
    pub fn indexed_text(&self) -> String {
        if self.title.is_empty() {
            self.body.clone()
        } else {
            format!("{} {}", self.title, self.body)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MalformedDocument {
    pub file: PathBuf,
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexManifest {
    pub format: String,
    pub doc_count: usize,
    pub term_count: usize,
    pub total_len: usize,
    pub avg_doc_len: f64,
    pub params: Bm25Params,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StoredDocument {
    doc_id: String,
    title: String,
    body: String,
    len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct StoredPostings {
    term: String,
    postings: Vec<(u32, u32)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalIndex {
    docs: Vec<StoredDocument>,
    postings: BTreeMap<String, Vec<(u32, u32)>>,
    stats: CorpusStats,
    params: Bm25Params,
}

/// Result of indexing a corpus: the index plus every rejected line.
#[derive(Debug)]
pub struct IndexBuild {
    pub index: LocalIndex,
    pub rejected: Vec<MalformedDocument>,
}

/// Parses and indexes a JSONL file, or every `*.jsonl` file in a directory
/// (sorted by name). Bad lines are reported and skipped.
pub fn build_local_index(corpus: &Path) -> Result<IndexBuild, IndexError> {
    let (docs, rejected) = read_corpus(corpus)?;
    if docs.is_empty() {
        return Err(IndexError::EmptyCorpus);
    }
    for r in &rejected {
        log::warn!("{}:{}: {}", r.file.display(), r.line, r.reason);
    }
    let index = LocalIndex::from_documents(docs, Bm25Params::default());
    Ok(IndexBuild { index, rejected })
}

pub fn corpus_files(corpus: &Path) -> Result<Vec<PathBuf>, IndexError> {
    if !corpus.exists() {
        return Err(IndexError::MissingPath(corpus.to_owned()));
    }
    if corpus.is_file() {
        return Ok(vec![corpus.to_owned()]);
    }
    let io = |source| IndexError::Io {
        path: corpus.to_owned(),
        source,
    };
    let mut files = Vec::new();
    for entry in fs::read_dir(corpus).map_err(io)? {
        let path = entry.map_err(io)?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "jsonl") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

pub fn read_corpus(corpus: &Path) -> Result<(Vec<Document>, Vec<MalformedDocument>), IndexError> {
    let mut docs = Vec::new();
    let mut rejected = Vec::new();
    let mut seen = HashMap::new();
    for file in corpus_files(corpus)? {
        let io = |source| IndexError::Io {
            path: file.clone(),
            source,
        };
        let reader = BufReader::new(fs::File::open(&file).map_err(io)?);
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(io)?;
            if line.trim().is_empty() {
                continue;
            }
            let reject = |reason: String| MalformedDocument {
                file: file.clone(),
                line: i + 1,
                reason,
            };
            match serde_json::from_str::<Document>(&line) {
                Err(e) => rejected.push(reject(e.to_string())),
                Ok(doc) if doc.doc_id.trim().is_empty() => {
                    rejected.push(reject("empty doc_id".into()))
                }
                Ok(doc) if tokenize(&doc.indexed_text()).is_empty() => rejected.push(reject(
                    format!("document {} has no indexable text", doc.doc_id),
                )),
                Ok(doc) => {
                    if let Some(first) = seen.get(&doc.doc_id) {
                        rejected.push(reject(format!(
                            "duplicate doc_id {} (first seen at line {first})",
                            doc.doc_id
                        )));
                    } else {
                        seen.insert(doc.doc_id.clone(), i + 1);
                        docs.push(doc);
                    }
                }
            }
        }
    }
    Ok((docs, rejected))
}

impl LocalIndex {
    /// An empty document list yields an index that matches nothing.
    pub fn from_documents(docs: Vec<Document>, params: Bm25Params) -> Self {
        let mut stored = Vec::with_capacity(docs.len());
        let mut postings: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();
        let mut total_len = 0;
        for (idx, doc) in docs.into_iter().enumerate() {
            let tokens = tokenize(&doc.indexed_text());
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in &tokens {
                *tf.entry(t.clone()).or_insert(0) += 1;
            }
            for (term, count) in tf {
                postings.entry(term).or_default().push((idx as u32, count));
            }
            total_len += tokens.len();
            stored.push(StoredDocument {
                doc_id: doc.doc_id,
                title: doc.title,
                body: doc.body,
                len: tokens.len(),
            });
        }
        let stats = CorpusStats {
            doc_count: stored.len(),
            total_len,
            doc_freq: postings.iter().map(|(t, p)| (t.clone(), p.len())).collect(),
        };
        Self {
            docs: stored,
            postings,
            stats,
            params,
        }
    }

    pub fn stats(&self) -> &CorpusStats {
        &self.stats
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn term_count(&self) -> usize {
        self.postings.len()
    }

    pub fn document(&self, idx: usize) -> Option<Document> {
        self.docs
            .get(idx)
            .map(|d| Document::new(d.doc_id.clone(), d.title.clone(), d.body.clone()))
    }

    pub fn doc_id(&self, idx: usize) -> &str {
        &self.docs[idx].doc_id
    }

    pub fn manifest(&self) -> IndexManifest {
        IndexManifest {
            format: INDEX_FORMAT.to_owned(),
            doc_count: self.stats.doc_count,
            term_count: self.postings.len(),
            total_len: self.stats.total_len,
            avg_doc_len: self.stats.avg_doc_len(),
            params: self.params,
        }
    }

    /// BM25 scores for every document sharing a term with the query.
    pub fn score_all(&self, query: &str) -> HashMap<usize, f64> {
        let avgdl = self.stats.avg_doc_len();
        let mut scores: HashMap<usize, f64> = HashMap::new();
        for term in tokenize(query) {
            let Some(list) = self.postings.get(&term) else {
                continue;
            };
            let term_idf = idf(self.stats.doc_count, list.len());
            for &(doc, tf) in list {
                let doc = doc as usize;
                let s = term_score(
                    tf as usize,
                    self.docs[doc].len,
                    avgdl,
                    term_idf,
                    self.params,
                );
                *scores.entry(doc).or_insert(0.0) += s;
            }
        }
        scores
    }

    /// Top `k` documents by BM25, ties broken by ascending doc_id.
    pub fn search(&self, query: &str, k: usize) -> Vec<(usize, f64)> {
        let mut ranked: Vec<(usize, f64)> = self.score_all(query).into_iter().collect();
        self.sort_ranked(&mut ranked);
        ranked.truncate(k);
        ranked
    }

    pub(crate) fn sort_ranked(&self, ranked: &mut [(usize, f64)]) {
        ranked.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then_with(|| self.docs[a.0].doc_id.cmp(&self.docs[b.0].doc_id))
        });
    }

    pub fn save(&self, dir: &Path) -> Result<(), IndexError> {
        let io = |path: &Path| {
            let path = path.to_owned();
            move |source| IndexError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;

        let manifest_path = dir.join(MANIFEST);
        let mut manifest =
            serde_json::to_string_pretty(&self.manifest()).expect("manifest serializes");
        manifest.push('\n');
        fs::write(&manifest_path, manifest).map_err(io(&manifest_path))?;

        let docs_path = dir.join(DOCUMENTS);
        let mut w = BufWriter::new(fs::File::create(&docs_path).map_err(io(&docs_path))?);
        for d in &self.docs {
            let line = serde_json::to_string(d).expect("document serializes");
            writeln!(w, "{line}").map_err(io(&docs_path))?;
        }
        w.flush().map_err(io(&docs_path))?;

        let postings_path = dir.join(POSTINGS);
        let mut w = BufWriter::new(fs::File::create(&postings_path).map_err(io(&postings_path))?);
        for (term, postings) in &self.postings {
            let line = serde_json::to_string(&StoredPostings {
                term: term.clone(),
                postings: postings.clone(),
            })
            .expect("postings serialize");
            writeln!(w, "{line}").map_err(io(&postings_path))?;
        }
        w.flush().map_err(io(&postings_path))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, IndexError> {
        let corrupt = |reason: String| IndexError::Corrupt {
            path: dir.to_owned(),
            reason,
        };
        let read = |name: &str| {
            let path = dir.join(name);
            fs::read_to_string(&path).map_err(|source| IndexError::Io { path, source })
        };
        if !dir.exists() {
            return Err(IndexError::MissingPath(dir.to_owned()));
        }
        let manifest: IndexManifest = serde_json::from_str(&read(MANIFEST)?)
            .map_err(|e| corrupt(format!("manifest: {e}")))?;
        if manifest.format != INDEX_FORMAT {
            return Err(corrupt(format!("unsupported format {}", manifest.format)));
        }
        let docs = read(DOCUMENTS)?
            .lines()
            .map(serde_json::from_str::<StoredDocument>)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| corrupt(format!("documents: {e}")))?;
        let mut postings = BTreeMap::new();
        for line in read(POSTINGS)?.lines() {
            let p: StoredPostings =
                serde_json::from_str(line).map_err(|e| corrupt(format!("postings: {e}")))?;
            if p.postings.iter().any(|(d, _)| *d as usize >= docs.len()) {
                return Err(corrupt(format!(
                    "posting for {} points past the document table",
                    p.term
                )));
            }
            postings.insert(p.term, p.postings);
        }
        let total_len = docs.iter().map(|d| d.len).sum();
        if docs.len() != manifest.doc_count
            || postings.len() != manifest.term_count
            || total_len != manifest.total_len
        {
            return Err(corrupt("manifest counts disagree with stored data".into()));
        }
        if docs.is_empty() {
            return Err(IndexError::EmptyCorpus);
        }
        let stats = CorpusStats {
            doc_count: docs.len(),
            total_len,
            doc_freq: postings.iter().map(|(t, p)| (t.clone(), p.len())).collect(),
        };
        Ok(Self {
            docs,
            postings,
            stats,
            params: manifest.params,
        })
    }

    /// Loads a saved index directory, or indexes a corpus file/directory in memory.
    pub fn open(path: &Path) -> Result<Self, IndexError> {
        if path.is_dir() && path.join(MANIFEST).exists() {
            Self::load(path)
        } else {
            Ok(build_local_index(path)?.index)
        }
    }
}
