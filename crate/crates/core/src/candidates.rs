//! Closed-set candidate construction: rank the pool by relatedness to the
//! gold label, keep an oversampled top neighborhood, then sample distractors
//! from it with a seeded generator.

use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use rand::seq::{index, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::CandidateSet;
use crate::seed::rng;
use crate::text::{token_set, tokens};
use crate::transport::{ChatClient, ChatClientConfig, ChatMessage};

pub const DEFAULT_DISTRACTORS: usize = 199;
pub const DEFAULT_NEIGHBORHOOD_FACTOR: f64 = 1.5;

#[derive(Debug, Error)]
pub enum CandidateError {
    #[error("gold label {0:?} is not in the pool")]
    GoldNotInPool(String),
    #[error("pool of {pool} labels cannot supply {requested} distractors")]
    PoolTooSmall { pool: usize, requested: usize },
    #[error("invalid label pool: {0}")]
    InvalidPool(String),
    #[error("neighborhood factor must be finite and >= 1, got {0}")]
    InvalidFactor(f64),
    #[error("scorer failed: {0}")]
    Scorer(String),
    #[error("scorer cache {path}: {message}")]
    Cache { path: PathBuf, message: String },
}

/// Ordered, duplicate-free label pool.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelPool {
    labels: Vec<String>,
    positions: HashMap<String, usize>,
}

impl LabelPool {
    pub fn new(labels: Vec<String>) -> Result<Self, CandidateError> {
        if labels.is_empty() {
            return Err(CandidateError::InvalidPool("pool is empty".into()));
        }
        let mut positions = HashMap::with_capacity(labels.len());
        for (i, label) in labels.iter().enumerate() {
            if label.trim().is_empty() {
                return Err(CandidateError::InvalidPool(format!("blank label at position {i}")));
            }
            if positions.insert(label.clone(), i).is_some() {
                return Err(CandidateError::InvalidPool(format!("duplicate label {label:?}")));
            }
        }
        Ok(Self { labels, positions })
    }

    /// One label per line; surrounding whitespace and blank lines are dropped.
    pub fn from_lines(text: &str) -> Result<Self, CandidateError> {
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(str::to_owned)
                .collect(),
        )
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn position(&self, label: &str) -> Option<usize> {
        self.positions.get(label).copied()
    }
}

pub trait RelatednessScorer: Send + Sync {
    fn score(&self, gold: &str, candidate: &str) -> Result<f64, CandidateError>;

    fn score_all(&self, gold: &str, candidates: &[&str]) -> Result<Vec<f64>, CandidateError> {
        candidates.iter().map(|c| self.score(gold, c)).collect()
    }
}

/// Jaccard similarity of the lowercase token sets plus half the shared
/// leading-token run as a fraction of the longer label. Symmetric, in `[0, 1.5]`.
pub fn lexical_relatedness(a: &str, b: &str) -> f64 {
    let (sa, sb) = (token_set(a), token_set(b));
    let union = sa.union(&sb).count();
    if union == 0 {
        return 0.0;
    }
    let jaccard = sa.intersection(&sb).count() as f64 / union as f64;
    let (ta, tb) = (tokens(a), tokens(b));
    let prefix = ta.iter().zip(&tb).take_while(|(x, y)| x == y).count();
    jaccard + 0.5 * prefix as f64 / ta.len().max(tb.len()) as f64
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalScorer;

impl RelatednessScorer for LexicalScorer {
    fn score(&self, gold: &str, candidate: &str) -> Result<f64, CandidateError> {
        Ok(lexical_relatedness(gold, candidate))
    }

    fn score_all(&self, gold: &str, candidates: &[&str]) -> Result<Vec<f64>, CandidateError> {
        Ok(candidates.par_iter().map(|c| lexical_relatedness(gold, c)).collect())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheLine {
    gold: String,
    cand: String,
    score: f64,
}

/// Wraps a scorer with a JSON-lines cache keyed by `(gold, candidate)`.
///
/// Misses are scored as one batch by the inner scorer and appended under a
/// single writer lock; lookups only take the read lock.
pub struct CachedScorer<S> {
    inner: S,
    path: Option<PathBuf>,
    entries: RwLock<HashMap<(String, String), f64>>,
    writer: Mutex<()>,
}

impl<S: RelatednessScorer> CachedScorer<S> {
    pub fn in_memory(inner: S) -> Self {
        Self {
            inner,
            path: None,
            entries: RwLock::new(HashMap::new()),
            writer: Mutex::new(()),
        }
    }

    /// Loads `path` if it exists; new scores are appended to it.
    pub fn open(inner: S, path: impl Into<PathBuf>) -> Result<Self, CandidateError> {
        let path = path.into();
        let mut entries = HashMap::new();
        if path.exists() {
            let cache_err = |message: String| CandidateError::Cache {
                path: path.clone(),
                message,
            };
            let file = File::open(&path).map_err(|e| cache_err(e.to_string()))?;
            for (n, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| cache_err(e.to_string()))?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: CacheLine =
                    serde_json::from_str(&line).map_err(|e| cache_err(format!("line {}: {e}", n + 1)))?;
                if !entry.score.is_finite() {
                    return Err(cache_err(format!("line {}: non-finite score", n + 1)));
                }
                entries.insert((entry.gold, entry.cand), entry.score);
            }
        }
        Ok(Self {
            inner,
            path: Some(path),
            entries: RwLock::new(entries),
            writer: Mutex::new(()),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn persist(&self, path: &Path, fresh: &[CacheLine]) -> Result<(), CandidateError> {
        let cache_err = |e: std::io::Error| CandidateError::Cache {
            path: path.to_owned(),
            message: e.to_string(),
        };
        let mut file = OpenOptions::new().create(true).append(true).open(path).map_err(cache_err)?;
        let mut buf = Vec::new();
        for line in fresh {
            serde_json::to_writer(&mut buf, line).expect("cache lines serialize");
            buf.push(b'\n');
        }
        file.write_all(&buf).map_err(cache_err)?;
        file.flush().map_err(cache_err)
    }
}

impl<S: RelatednessScorer> RelatednessScorer for CachedScorer<S> {
    fn score(&self, gold: &str, candidate: &str) -> Result<f64, CandidateError> {
        Ok(self.score_all(gold, &[candidate])?[0])
    }

    fn score_all(&self, gold: &str, candidates: &[&str]) -> Result<Vec<f64>, CandidateError> {
        let mut out = vec![f64::NAN; candidates.len()];
        let mut missing = Vec::new();
        {
            let entries = self.entries.read().unwrap_or_else(|e| e.into_inner());
            for (i, c) in candidates.iter().enumerate() {
                match entries.get(&(gold.to_owned(), (*c).to_owned())) {
                    Some(s) => out[i] = *s,
                    None => missing.push(i),
                }
            }
        }
        if missing.is_empty() {
            return Ok(out);
        }

        let batch: Vec<&str> = missing.iter().map(|&i| candidates[i]).collect();
        let scores = self.inner.score_all(gold, &batch)?;
        let _guard = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let mut fresh = Vec::with_capacity(batch.len());
        let mut seen = HashSet::new();
        {
            let mut entries = self.entries.write().unwrap_or_else(|e| e.into_inner());
            for ((&i, cand), score) in missing.iter().zip(&batch).zip(scores) {
                if !score.is_finite() {
                    return Err(CandidateError::Scorer(format!("non-finite score for {cand:?}")));
                }
                out[i] = score;
                let key = (gold.to_owned(), (*cand).to_owned());
                if entries.insert(key, score).is_none() && seen.insert(*cand) {
                    fresh.push(CacheLine {
                        gold: gold.to_owned(),
                        cand: (*cand).to_owned(),
                        score,
                    });
                }
            }
        }
        if let Some(path) = &self.path {
            self.persist(path, &fresh)?;
        }
        Ok(out)
    }
}

/// Asks a chat model for a 0-10 relatedness rating.
pub struct RemoteScorer {
    client: ChatClient,
}

impl RemoteScorer {
    pub fn new(cfg: ChatClientConfig) -> Result<Self, CandidateError> {
        let client = ChatClient::new(cfg).map_err(|e| CandidateError::Scorer(e.to_string()))?;
        Ok(Self { client })
    }

    fn prompt(gold: &str, candidate: &str) -> String {
        format!(
            "Rate how clinically related the diagnosis \"{candidate}\" is to \"{gold}\", \
             i.e. how plausibly a clinician could confuse them. Reply with a single number \
             from 0 (unrelated) to 10 (nearly indistinguishable)."
        )
    }
}

/// First decimal number in `text`.
fn parse_rating(text: &str) -> Option<f64> {
    let start = text.find(|c: char| c.is_ascii_digit())?;
    let rest = &text[start..];
    let end = rest
        .find(|c: char| !(c.is_ascii_digit() || c == '.'))
        .unwrap_or(rest.len());
    rest[..end].trim_end_matches('.').parse().ok()
}

impl RelatednessScorer for RemoteScorer {
    fn score(&self, gold: &str, candidate: &str) -> Result<f64, CandidateError> {
        let mut req = self.client.request(vec![ChatMessage::user(Self::prompt(gold, candidate))]);
        req.temperature = Some(0.0);
        let reply = self
            .client
            .complete(&req)
            .map_err(|e| CandidateError::Scorer(e.to_string()))?;
        let text = reply.content.unwrap_or_default();
        parse_rating(&text)
            .filter(|s| s.is_finite())
            .ok_or_else(|| CandidateError::Scorer(format!("no rating in reply {text:?}")))
    }

    /// Runs requests on scoped threads; the client's permit pool bounds how
    /// many are in flight.
    fn score_all(&self, gold: &str, candidates: &[&str]) -> Result<Vec<f64>, CandidateError> {
        let workers = self.client.config().max_concurrency.max(1);
        let chunk = candidates.len().div_ceil(workers).max(1);
        std::thread::scope(|s| {
            let handles: Vec<_> = candidates
                .chunks(chunk)
                .map(|part| s.spawn(move || part.iter().map(|c| self.score(gold, c)).collect::<Vec<_>>()))
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("scorer thread panicked"))
                .collect()
        })
    }
}

/// Builds the candidate set for `gold` with the default neighborhood factor.
pub fn build_candidates(
    gold: &str,
    pool: &LabelPool,
    n_distractors: usize,
    scorer: &dyn RelatednessScorer,
    seed: u64,
) -> Result<CandidateSet, CandidateError> {
    build_candidates_with(gold, pool, n_distractors, DEFAULT_NEIGHBORHOOD_FACTOR, scorer, seed)
}

/// Labels of the top-`k` neighborhood, best first, ties by pool position.
pub fn neighborhood(
    gold: &str,
    pool: &LabelPool,
    k: usize,
    scorer: &dyn RelatednessScorer,
) -> Result<Vec<usize>, CandidateError> {
    let gold_pos = pool
        .position(gold)
        .ok_or_else(|| CandidateError::GoldNotInPool(gold.to_owned()))?;
    let others: Vec<usize> = (0..pool.len()).filter(|&i| i != gold_pos).collect();
    let names: Vec<&str> = others.iter().map(|&i| pool.labels[i].as_str()).collect();
    let scores = scorer.score_all(gold, &names)?;
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(CandidateError::Scorer(format!("non-finite score for {:?}", names[i])));
    }
    let mut ranked: Vec<(usize, f64)> = others.into_iter().zip(scores).collect();
    // stable sort keeps pool order among equal scores
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    ranked.truncate(k);
    Ok(ranked.into_iter().map(|(i, _)| i).collect())
}

pub fn build_candidates_with(
    gold: &str,
    pool: &LabelPool,
    n_distractors: usize,
    factor: f64,
    scorer: &dyn RelatednessScorer,
    seed: u64,
) -> Result<CandidateSet, CandidateError> {
    if !(factor.is_finite() && factor >= 1.0) {
        return Err(CandidateError::InvalidFactor(factor));
    }
    if pool.position(gold).is_none() {
        return Err(CandidateError::GoldNotInPool(gold.to_owned()));
    }
    if n_distractors >= pool.len() {
        return Err(CandidateError::PoolTooSmall {
            pool: pool.len(),
            requested: n_distractors,
        });
    }
    let k = ((factor * n_distractors as f64).ceil() as usize).min(pool.len() - 1);
    let hood = neighborhood(gold, pool, k, scorer)?;

    let mut rng = rng(seed);
    let mut labels: Vec<String> = index::sample(&mut rng, hood.len(), n_distractors)
        .into_iter()
        .map(|i| pool.labels[hood[i]].clone())
        .collect();
    labels.push(gold.to_owned());
    labels.shuffle(&mut rng);
    CandidateSet::new(labels).map_err(|e| CandidateError::InvalidPool(e.to_string()))
}
