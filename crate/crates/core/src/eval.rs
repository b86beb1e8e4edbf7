//! Accuracy and consistency of predicted denotations, and the final
//! ranking used at prediction time.

use crate::lang::Grammar;
use crate::lang::{execute, Program, TokenId};
use crate::neural::{Parser, Reranker};
use crate::search::{beam_decode, BeamConfig, Bound, CacheMode, Hypothesis};
use crate::world::KnowledgeBase;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq)]
pub enum Prediction {
    Program(Program),
    /// No program; every statement is taken to be true.
    Fallback,
}

impl Prediction {
    /// Execution failures count as false.
    pub fn denotation(&self, kb: &KnowledgeBase) -> bool {
        match self {
            Prediction::Program(p) => execute(p, kb).unwrap_or(false),
            Prediction::Fallback => true,
        }
    }
}

/// Verdicts for one utterance across its KBs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupVerdict {
    pub utterance: String,
    /// `None` for the fallback.
    pub program: Option<String>,
    pub labels: Vec<bool>,
    pub predicted: Vec<bool>,
}

impl GroupVerdict {
    pub fn new(utterance: &str, prediction: &Prediction, pairs: &[(KnowledgeBase, bool)]) -> Self {
        GroupVerdict {
            utterance: utterance.to_string(),
            program: match prediction {
                Prediction::Program(p) => Some(p.to_string()),
                Prediction::Fallback => None,
            },
            labels: pairs.iter().map(|p| p.1).collect(),
            predicted: pairs
                .iter()
                .map(|(kb, _)| prediction.denotation(kb))
                .collect(),
        }
    }

    pub fn correct(&self) -> usize {
        self.labels
            .iter()
            .zip(&self.predicted)
            .filter(|(a, b)| a == b)
            .count()
    }

    pub fn consistent(&self) -> bool {
        self.correct() == self.labels.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Fraction of (utterance, KB, label) examples predicted correctly.
    pub accuracy: f64,
    /// Fraction of utterances correct on all of their KBs.
    pub consistency: f64,
    pub examples: usize,
    pub groups: usize,
}

impl Metrics {
    pub fn from_verdicts(verdicts: &[GroupVerdict]) -> Self {
        let examples: usize = verdicts.iter().map(|v| v.labels.len()).sum();
        let correct: usize = verdicts.iter().map(GroupVerdict::correct).sum();
        let consistent = verdicts.iter().filter(|v| v.consistent()).count();
        let frac = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        Metrics {
            accuracy: frac(correct, examples),
            consistency: frac(consistent, verdicts.len()),
            examples,
            groups: verdicts.len(),
        }
    }
}

/// Machine-readable evaluation output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub version: u32,
    pub metrics: Metrics,
    pub verdicts: Vec<GroupVerdict>,
}

impl Report {
    pub fn new(verdicts: Vec<GroupVerdict>) -> Self {
        Report {
            version: 1,
            metrics: Metrics::from_verdicts(&verdicts),
            verdicts,
        }
    }
}

/// Beam search without the cache, ranked by `log p′ + log p^g` when a
/// re-ranker is given and by `log p′` otherwise.
pub struct Predictor<'a> {
    pub parser: &'a Parser,
    pub reranker: Option<&'a Reranker>,
    pub beam: usize,
}

impl Predictor<'_> {
    pub fn candidates(&self, ids: &[usize]) -> Vec<Hypothesis> {
        let Ok(ctx) = self.parser.context(ids) else {
            return Vec::new();
        };
        let cfg = BeamConfig {
            beam: self.beam,
            d: 0,
            cache: CacheMode::Off,
        };
        beam_decode(
            &Bound {
                parser: self.parser,
                ctx: &ctx,
            },
            Grammar::standard(),
            &cfg,
            &[],
        )
    }

    /// Candidates with their final ranking scores, best first.
    pub fn ranked(&self, ids: &[usize]) -> Vec<(Hypothesis, f64)> {
        let beam = self.candidates(ids);
        let mut out: Vec<(Hypothesis, f64)> = match self.reranker {
            Some(r) if !beam.is_empty() => {
                let zs: Vec<&[TokenId]> = beam.iter().map(|h| h.tokens.as_slice()).collect();
                let s = r.scores(ids, &zs).expect("utterance encoded above");
                let lse = crate::neural::log_sum_exp(&s);
                beam.into_iter()
                    .zip(s)
                    .map(|(h, si)| {
                        let total = h.score + si - lse;
                        (h, total)
                    })
                    .collect()
            }
            _ => beam
                .into_iter()
                .map(|h| {
                    let s = h.score;
                    (h, s)
                })
                .collect(),
        };
        out.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.0.tokens.cmp(&b.0.tokens))
        });
        out
    }

    pub fn predict(&self, ids: &[usize]) -> Prediction {
        match self.ranked(ids).into_iter().next() {
            Some((h, _)) => {
                Prediction::Program(Program::new(h.tokens).expect("beam output is complete"))
            }
            None => Prediction::Fallback,
        }
    }
}
