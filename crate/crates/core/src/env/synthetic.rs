//! Seeded synthetic streams with recurring latent subtypes.
//!
//! Every subtype owns a gold label and a signature of invented finding
//! tokens that is planted in each of its profiles. A case recurs (draws one
//! of the subtypes) with probability `recurrence`; otherwise it is novel, with
//! a fresh label and a fresh signature. Profiles also carry filler tokens
//! shared across the whole stream, and label tokens never appear in profiles,
//! so the only exploitable regularity is the subtype signature.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{CaseItem, PatientCase};
use crate::candidates::{build_candidates, CandidateError, LabelPool, LexicalScorer, DEFAULT_DISTRACTORS};
use crate::seed::{derive_seed, rng};

const MODIFIERS: [&str; 10] = [
    "Acute", "Chronic", "Congenital", "Idiopathic", "Primary", "Secondary", "Familial", "Autoimmune",
    "Hereditary", "Reactive",
];
const SITES: [&str; 20] = [
    "renal", "hepatic", "cardiac", "pulmonary", "gastric", "cerebral", "splenic", "pancreatic", "thyroid",
    "adrenal", "ocular", "cutaneous", "vascular", "biliary", "osseous", "muscular", "neural", "lymphatic",
    "ovarian", "colonic",
];
const PROCESSES: [&str; 10] = [
    "fibrosis", "stenosis", "carcinoma", "infarction", "abscess", "dysplasia", "neuropathy", "insufficiency",
    "hyperplasia", "vasculitis",
];

/// Largest pool the label grammar can produce.
pub const MAX_POOL_SIZE: usize = MODIFIERS.len() * SITES.len() * PROCESSES.len();

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";
const FILLER_VOCAB: usize = 40;

// seed stream tags
const POOL: u64 = 1;
const STREAM: u64 = 2;
const CANDIDATES: u64 = 3;

#[derive(Debug, Error)]
pub enum SyntheticError {
    #[error("invalid parameter: {0}")]
    ParamInvalid(String),
    #[error(transparent)]
    Candidates(#[from] CandidateError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub rounds: usize,
    pub subtypes: usize,
    /// Probability that a case belongs to one of the recurring subtypes.
    pub recurrence: f64,
    pub seed: u64,
    pub pool_size: usize,
    pub distractors: usize,
    /// Invented finding tokens per signature.
    pub signature_len: usize,
    /// Shared filler tokens per profile.
    pub filler_per_case: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            rounds: 100,
            subtypes: 5,
            recurrence: 0.4,
            seed: 7,
            pool_size: 800,
            distractors: DEFAULT_DISTRACTORS,
            signature_len: 4,
            filler_per_case: 4,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), SyntheticError> {
        let bad = |m: String| Err(SyntheticError::ParamInvalid(m));
        if self.rounds == 0 {
            return bad("rounds must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.recurrence) {
            return bad(format!("recurrence {} outside [0, 1]", self.recurrence));
        }
        if self.recurrence > 0.0 && self.subtypes == 0 {
            return bad("recurring cases need at least one subtype".into());
        }
        if self.pool_size == 0 || self.pool_size > MAX_POOL_SIZE {
            return bad(format!("pool_size must lie in 1..={MAX_POOL_SIZE}"));
        }
        if self.distractors >= self.pool_size {
            return bad(format!(
                "{} distractors need a pool larger than {}",
                self.distractors, self.pool_size
            ));
        }
        if self.subtypes >= self.pool_size {
            return bad("subtypes must be fewer than pool labels".into());
        }
        if self.signature_len == 0 {
            return bad("signature_len must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticStream {
    pub pool: LabelPool,
    pub cases: Vec<CaseItem>,
    /// Subtype of each case, `None` for novel cases.
    pub subtype_of: Vec<Option<usize>>,
}

/// Every label the grammar can produce, in grammar order.
fn label_grammar() -> Vec<String> {
    let mut out = Vec::with_capacity(MAX_POOL_SIZE);
    for m in MODIFIERS {
        for s in SITES {
            for p in PROCESSES {
                out.push(format!("{m} {s} {p}"));
            }
        }
    }
    out
}

/// Label pool for `seed`: a seeded shuffle of the grammar, truncated.
pub fn synthetic_pool(pool_size: usize, seed: u64) -> Result<LabelPool, SyntheticError> {
    if pool_size == 0 || pool_size > MAX_POOL_SIZE {
        return Err(SyntheticError::ParamInvalid(format!("pool_size must lie in 1..={MAX_POOL_SIZE}")));
    }
    let mut labels = label_grammar();
    labels.shuffle(&mut rng(derive_seed(seed, &[POOL])));
    labels.truncate(pool_size);
    Ok(LabelPool::new(labels)?)
}

/// Hands out invented words, never repeating and never colliding with the
/// label or template vocabulary.
struct WordMint {
    used: BTreeSet<String>,
}

impl WordMint {
    fn new() -> Self {
        let mut used: BTreeSet<String> = MODIFIERS
            .iter()
            .chain(&SITES)
            .chain(&PROCESSES)
            .map(|w| w.to_lowercase())
            .collect();
        used.extend(["year", "old", "female", "male", "presenting", "with", "and"].map(String::from));
        Self { used }
    }

    fn word(&mut self, rng: &mut ChaCha8Rng) -> String {
        loop {
            let w: String = (0..3)
                .flat_map(|_| {
                    [
                        CONSONANTS[rng.random_range(0..CONSONANTS.len())] as char,
                        VOWELS[rng.random_range(0..VOWELS.len())] as char,
                    ]
                })
                .collect();
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }

    fn words(&mut self, n: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
        (0..n).map(|_| self.word(rng)).collect()
    }
}

fn profile(signature: &[String], filler: &[String], n_filler: usize, rng: &mut ChaCha8Rng) -> String {
    let mut findings: Vec<&str> = signature.iter().map(String::as_str).collect();
    findings.extend(filler.choose_multiple(rng, n_filler.min(filler.len())).map(String::as_str));
    findings.shuffle(rng);
    let age = rng.random_range(18..=90);
    let sex = if rng.random_bool(0.5) { "female" } else { "male" };
    let (last, rest) = findings.split_last().expect("signatures are non-empty");
    if rest.is_empty() {
        format!("{age}-year-old {sex} presenting with {last}.")
    } else {
        format!("{age}-year-old {sex} presenting with {} and {last}.", rest.join(", "))
    }
}

pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticStream, SyntheticError> {
    cfg.validate()?;
    let pool = synthetic_pool(cfg.pool_size, cfg.seed)?;
    let mut r = rng(derive_seed(cfg.seed, &[STREAM]));
    let mut mint = WordMint::new();
    let filler = mint.words(FILLER_VOCAB, &mut r);

    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.shuffle(&mut r);
    let (subtype_idx, novel_idx) = order.split_at(cfg.subtypes);
    let subtypes: Vec<(usize, Vec<String>)> = subtype_idx
        .iter()
        .map(|&i| (i, mint.words(cfg.signature_len, &mut r)))
        .collect();
    // novel labels cycle through the rest of the pool once it runs out
    let mut novel_labels = novel_idx.iter().copied().cycle();

    let mut cases = Vec::with_capacity(cfg.rounds);
    let mut subtype_of = Vec::with_capacity(cfg.rounds);
    for t in 0..cfg.rounds {
        let recurring = !subtypes.is_empty() && r.random_bool(cfg.recurrence);
        let (label_idx, signature, subtype) = if recurring {
            let s = r.random_range(0..subtypes.len());
            (subtypes[s].0, subtypes[s].1.clone(), Some(s))
        } else {
            let idx = novel_labels.next().expect("pool has labels beyond the subtypes");
            (idx, mint.words(cfg.signature_len, &mut r), None)
        };
        let gold = pool.labels()[label_idx].clone();
        let text = profile(&signature, &filler, cfg.filler_per_case, &mut r);
        let candidates = build_candidates(
            &gold,
            &pool,
            cfg.distractors,
            &LexicalScorer,
            derive_seed(cfg.seed, &[CANDIDATES, t as u64]),
        )?;
        let case = PatientCase {
            id: format!("syn-{:04}", t + 1),
            profile: text,
            gold_label: gold,
        };
        cases.push(CaseItem::new(case, candidates).map_err(|e| SyntheticError::ParamInvalid(e.to_string()))?);
        subtype_of.push(subtype);
    }
    Ok(SyntheticStream {
        pool,
        cases,
        subtype_of,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::token_set;

    fn small() -> SyntheticConfig {
        SyntheticConfig {
            rounds: 40,
            pool_size: 120,
            distractors: 19,
            ..SyntheticConfig::default()
        }
    }

    #[test]
    fn deterministic_and_well_formed() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.cases, b.cases);
        assert_eq!(a.cases.len(), 40);
        for item in &a.cases {
            assert_eq!(item.candidates.len(), 20);
            assert_eq!(item.candidates.count_matching(&item.case.gold_label), 1);
        }
        let c = generate(&SyntheticConfig { seed: 8, ..small() }).unwrap();
        assert_ne!(a.cases, c.cases);
    }

    #[test]
    fn profiles_never_mention_label_tokens() {
        let s = generate(&small()).unwrap();
        let label_tokens: BTreeSet<String> = s.pool.labels().iter().flat_map(|l| token_set(l)).collect();
        for item in &s.cases {
            assert!(token_set(&item.case.profile).is_disjoint(&label_tokens), "{}", item.case.profile);
        }
    }

    #[test]
    fn subtype_cases_share_signature_and_label() {
        let s = generate(&small()).unwrap();
        for a in 0..s.cases.len() {
            for b in a + 1..s.cases.len() {
                if let (Some(x), Some(y)) = (s.subtype_of[a], s.subtype_of[b]) {
                    let same = x == y;
                    assert_eq!(same, s.cases[a].case.gold_label == s.cases[b].case.gold_label);
                    let shared = token_set(&s.cases[a].case.profile)
                        .intersection(&token_set(&s.cases[b].case.profile))
                        .count();
                    if same {
                        assert!(shared >= 4);
                    }
                }
            }
        }
    }

    #[test]
    fn zero_recurrence_gives_distinct_labels() {
        let s = generate(&SyntheticConfig {
            recurrence: 0.0,
            ..small()
        })
        .unwrap();
        let golds: BTreeSet<&str> = s.cases.iter().map(|c| c.case.gold_label.as_str()).collect();
        assert_eq!(golds.len(), 40);
        assert!(s.subtype_of.iter().all(Option::is_none));
    }

    #[test]
    fn rejects_bad_params() {
        for cfg in [
            SyntheticConfig { rounds: 0, ..small() },
            SyntheticConfig { recurrence: 1.5, ..small() },
            SyntheticConfig { pool_size: MAX_POOL_SIZE + 1, ..small() },
            SyntheticConfig { distractors: 120, ..small() },
            SyntheticConfig { subtypes: 0, ..small() },
        ] {
            assert!(matches!(generate(&cfg), Err(SyntheticError::ParamInvalid(_))), "{cfg:?}");
        }
    }
}
