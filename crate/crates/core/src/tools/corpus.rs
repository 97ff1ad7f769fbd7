//! Local document corpus with deterministic lexical retrieval.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusDocument {
    pub doc_id: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub body: String,
    #[serde(default)]
    pub tags: Vec<String>,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corpus line {line}: {reason}")]
    BadLine { line: usize, reason: String },
    #[error("duplicate doc_id `{0}`")]
    DuplicateId(String),
    #[error("doc `{0}` has an empty title")]
    EmptyTitle(String),
    #[error("unknown doc_id `{0}`")]
    UnknownDoc(String),
    #[error("empty query")]
    EmptyQuery,
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    docs: Vec<CorpusDocument>,
    by_id: BTreeMap<String, usize>,
}

fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !(c.is_ascii_alphanumeric() || c == '-'))
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

impl Corpus {
    pub fn from_docs(docs: Vec<CorpusDocument>) -> Result<Self, CorpusError> {
        let mut by_id = BTreeMap::new();
        for (i, doc) in docs.iter().enumerate() {
            if doc.title.trim().is_empty() {
                return Err(CorpusError::EmptyTitle(doc.doc_id.clone()));
            }
            if by_id.insert(doc.doc_id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId(doc.doc_id.clone()));
            }
        }
        Ok(Self { docs, by_id })
    }

    /// Loads newline-delimited JSON documents.
    pub fn parse_jsonl(text: &str) -> Result<Self, CorpusError> {
        let mut docs = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let doc: CorpusDocument = serde_json::from_str(line)
                .map_err(|e| CorpusError::BadLine { line: idx + 1, reason: e.to_string() })?;
            docs.push(doc);
        }
        Self::from_docs(docs)
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        Self::parse_jsonl(&std::fs::read_to_string(path)?)
    }

    /// The corpus shipped with the crate.
    pub fn bundled() -> Self {
        static JSONL: &str = include_str!("../../data/corpus.jsonl");
        Self::parse_jsonl(JSONL).expect("bundled corpus is well-formed")
    }

    pub fn get(&self, doc_id: &str) -> Result<&CorpusDocument, CorpusError> {
        self.by_id
            .get(doc_id)
            .map(|&i| &self.docs[i])
            .ok_or_else(|| CorpusError::UnknownDoc(doc_id.to_string()))
    }

    pub fn docs(&self) -> &[CorpusDocument] {
        &self.docs
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// Term-frequency score over title + abstract + tags; positive scores
    /// only, ranked descending with doc_id as the tiebreak.
    pub fn search(&self, query: &str, limit: usize) -> Result<Vec<(String, f64)>, CorpusError> {
        let terms = tokenize(query);
        if terms.is_empty() {
            return Err(CorpusError::EmptyQuery);
        }
        let mut hits: Vec<(String, f64)> = Vec::new();
        for doc in &self.docs {
            let mut haystack = tokenize(&doc.title);
            haystack.extend(tokenize(&doc.abstract_text));
            for tag in &doc.tags {
                haystack.extend(tokenize(tag));
            }
            let score: usize =
                terms.iter().map(|t| haystack.iter().filter(|h| *h == t).count()).sum();
            if score > 0 {
                hits.push((doc.doc_id.clone(), score as f64));
            }
        }
        hits.sort_by(|a, b| {
            b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then_with(|| a.0.cmp(&b.0))
        });
        hits.truncate(limit);
        Ok(hits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, title: &str, abstract_text: &str, tags: &[&str]) -> CorpusDocument {
        CorpusDocument {
            doc_id: id.into(),
            title: title.into(),
            abstract_text: abstract_text.into(),
            body: String::new(),
            tags: tags.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn no_match_means_empty_result() {
        let corpus = Corpus::from_docs(vec![doc("d1", "tin halides", "", &[])]).unwrap();
        assert!(corpus.search("zirconia", 5).unwrap().is_empty());
    }

    #[test]
    fn single_doc_title_match_scores_positive() {
        let corpus = Corpus::from_docs(vec![doc("d1", "tin halides", "", &[])]).unwrap();
        let hits = corpus.search("tin", 5).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].0, "d1");
        assert!(hits[0].1 > 0.0);
    }

    #[test]
    fn term_frequency_orders_results() {
        let corpus = Corpus::from_docs(vec![
            doc("doc-a", "additive study", "one additive mention", &[]),
            doc("doc-b", "additive additive", "more additive text", &[]),
            doc("doc-c", "unrelated", "nothing here", &[]),
        ])
        .unwrap();
        let hits = corpus.search("additive", 5).unwrap();
        assert_eq!(hits.iter().map(|(id, _)| id.as_str()).collect::<Vec<_>>(), ["doc-b", "doc-a"]);
    }

    #[test]
    fn ties_break_by_doc_id() {
        let corpus = Corpus::from_docs(vec![
            doc("doc-z", "halide", "", &[]),
            doc("doc-a", "halide", "", &[]),
        ])
        .unwrap();
        let hits = corpus.search("halide", 5).unwrap();
        assert_eq!(hits[0].0, "doc-a");
    }

    #[test]
    fn empty_query_is_an_error() {
        let corpus = Corpus::from_docs(vec![]).unwrap();
        assert!(matches!(corpus.search("  ", 5), Err(CorpusError::EmptyQuery)));
    }

    #[test]
    fn bundled_corpus_loads_and_is_searchable() {
        let corpus = Corpus::bundled();
        assert!(corpus.len() >= 10);
        let hits = corpus.search("sn-pb stability", 4).unwrap();
        assert!(!hits.is_empty());
        corpus.get(&hits[0].0).unwrap();
    }
}
