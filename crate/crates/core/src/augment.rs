//! Synthetic utterance/program pairs from annotated abstract examples, with
//! each cluster slot filled synchronously on both sides from the lexicon.

use crate::abstraction::{slot_clusters, AbstractPair, Cluster, LexEntry, Lexicon, ProgToken};
use crate::lang::{LangError, Program};
use crate::ruleparser::AnnotationSet;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("no usable annotations")]
    NoAnnotations,
    #[error("only {produced} distinct pairs after {attempts} draws, {requested} requested")]
    Exhausted {
        produced: usize,
        requested: usize,
        attempts: usize,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Lang(#[from] LangError),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GeneratedPair {
    pub utterance: Vec<String>,
    pub program: Program,
}

/// Draws allowed per requested pair before giving up on duplicates.
const DRAWS_PER_PAIR: usize = 50;

fn usable(pair: &AbstractPair, lex: &Lexicon) -> bool {
    slot_clusters(&pair.utterance)
        .into_iter()
        .all(|c| lex.cluster_entries(c).next().is_some())
}

/// Fills every slot of `pair` with the entry chosen for it.
pub fn instantiate(pair: &AbstractPair, fillers: &[&LexEntry]) -> Result<GeneratedPair, LangError> {
    let mut utterance = Vec::new();
    let mut k = 0;
    for t in &pair.utterance {
        if Cluster::from_label(t).is_some() {
            utterance.extend(fillers[k].phrase.iter().cloned());
            k += 1;
        } else {
            utterance.push(t.clone());
        }
    }
    let mut slot = 0;
    let tokens = pair
        .program
        .tokens
        .iter()
        .map(|t| match *t {
            ProgToken::Concrete(id) => id,
            ProgToken::Slot(_) => {
                let e = fillers[pair.program.alignment[slot]];
                slot += 1;
                e.token
            }
        })
        .collect();
    Ok(GeneratedPair {
        utterance,
        program: Program::new(tokens)?,
    })
}

/// `n` distinct pairs, each from a uniformly drawn annotation with uniformly
/// drawn lexicon entries per slot. Deterministic for a seed.
pub fn generate(
    annotations: &AnnotationSet,
    lex: &Lexicon,
    n: usize,
    seed: u64,
) -> Result<Vec<GeneratedPair>, AugmentError> {
    let pairs: Vec<&AbstractPair> = annotations
        .pairs()
        .iter()
        .filter(|p| {
            let ok = usable(p, lex);
            if !ok {
                log::warn!(
                    "skipping annotation {:?}: a cluster has no entries",
                    p.key()
                );
            }
            ok
        })
        .collect();
    if pairs.is_empty() {
        return Err(AugmentError::NoAnnotations);
    }
    let entries: BTreeMap<Cluster, Vec<&LexEntry>> = Cluster::ALL
        .into_iter()
        .map(|c| (c, lex.cluster_entries(c).collect()))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    let budget = n.saturating_mul(DRAWS_PER_PAIR).max(100);
    let mut attempts = 0;
    while out.len() < n {
        if attempts == budget {
            return Err(AugmentError::Exhausted {
                produced: out.len(),
                requested: n,
                attempts,
            });
        }
        attempts += 1;
        let pair = pairs[rng.gen_range(0..pairs.len())];
        let fillers: Vec<&LexEntry> = slot_clusters(&pair.utterance)
            .into_iter()
            .map(|c| *entries[&c].choose(&mut rng).expect("usable cluster"))
            .collect();
        let g = instantiate(pair, &fillers)?;
        if seen.insert((g.utterance.clone(), g.program.to_string())) {
            out.push(g);
        }
    }
    Ok(out)
}

/// Validation size for `n` generated pairs: 560 of every 6,158.
pub fn default_validation_size(n: usize) -> usize {
    ((n as f64) * 560.0 / 6158.0).round() as usize
}

/// Random partition into (train, validation) by distinct utterance, so that
/// no utterance appears on both sides.
pub fn split(
    pairs: &[GeneratedPair],
    validation: usize,
    seed: u64,
) -> (Vec<GeneratedPair>, Vec<GeneratedPair>) {
    let mut by_utt: BTreeMap<&[String], Vec<&GeneratedPair>> = BTreeMap::new();
    for p in pairs {
        by_utt.entry(&p.utterance).or_default().push(p);
    }
    let mut groups: Vec<Vec<&GeneratedPair>> = by_utt.into_values().collect();
    groups.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for g in groups {
        let side = if val.len() < validation {
            &mut val
        } else {
            &mut train
        };
        side.extend(g.into_iter().cloned());
    }
    (train, val)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairRecord {
    sentence: String,
    program: String,
}

/// One JSON object per line with `sentence` and `program` fields.
pub fn write_pairs_jsonl(pairs: &[GeneratedPair]) -> String {
    let mut out = String::new();
    for p in pairs {
        let rec = PairRecord {
            sentence: p.utterance.join(" "),
            program: p.program.to_string(),
        };
        out.push_str(&serde_json::to_string(&rec).expect("pair record serializes"));
        out.push('\n');
    }
    out
}

pub fn read_pairs_jsonl(text: &str) -> Result<Vec<GeneratedPair>, AugmentError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| AugmentError::Malformed {
            line: i + 1,
            message,
        };
        let rec: PairRecord = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        out.push(GeneratedPair {
            utterance: rec.sentence.split_whitespace().map(String::from).collect(),
            program: Program::parse(&rec.program).map_err(|e| bad(e.to_string()))?,
        });
    }
    Ok(out)
}
