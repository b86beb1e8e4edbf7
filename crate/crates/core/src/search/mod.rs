//! Grammar-constrained beam search over program tokens, optionally guided
//! by a cache of abstract programs that earned reward for the same
//! abstract utterance.

mod cache;

pub use cache::{Cache, CacheEntry};

use crate::abstraction::{deabstract, AbstractProgram, AbstractUtterance, Lexicon};
use crate::lang::{Grammar, Program, TokenId, TypeStack};
use crate::neural::{log_masked, Context, Parser};
use std::collections::HashSet;

/// Next-token scores for a fixed utterance.
pub trait StepModel {
    /// Raw logits over the whole token inventory after `prefix`.
    fn logits(&self, prefix: &[TokenId]) -> Vec<f64>;
}

/// A parser bound to one encoded utterance.
pub struct Bound<'a> {
    pub parser: &'a Parser,
    pub ctx: &'a Context,
}

impl StepModel for Bound<'_> {
    fn logits(&self, prefix: &[TokenId]) -> Vec<f64> {
        self.parser.logits(self.ctx, prefix)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum CacheMode {
    Off,
    /// Cached programs only join the returned set.
    FinalOnly,
    /// Also inject their prefixes into the beam at every step.
    #[default]
    EveryStep,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BeamConfig {
    pub beam: usize,
    pub d: usize,
    pub cache: CacheMode,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig {
            beam: 40,
            d: 10,
            cache: CacheMode::EveryStep,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Model,
    Cache,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<TokenId>,
    /// `log p′` of the tokens so far.
    pub score: f64,
    pub provenance: Provenance,
}

#[derive(Clone, Debug)]
struct Entry {
    hyp: Hypothesis,
    stack: TypeStack,
}

fn by_score(a: &Hypothesis, b: &Hypothesis) -> std::cmp::Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(std::cmp::Ordering::Equal)
        .then_with(|| a.tokens.cmp(&b.tokens))
}

/// `log p′` of every prefix of `z`, by teacher forcing. `None` if `z`
/// leaves the grammar.
pub fn prefix_scores<M: StepModel>(model: &M, g: &Grammar, z: &[TokenId]) -> Option<Vec<f64>> {
    let mut stack = TypeStack::new();
    let mut out = vec![0.0];
    for t in 0..z.len() {
        let lp = log_masked(&model.logits(&z[..t]), &stack.valid_mask(g));
        stack.step(g, z[t]).ok()?;
        out.push(out[t] + lp[z[t].index()]);
    }
    Some(out)
}

/// Beam search with completed programs collected in a pool. `cached` are
/// concrete programs retrieved from the cache; under `EveryStep` their
/// length-`t` prefixes are added to the beam after pruning at step `t`,
/// and under any mode other than `Off` they join the returned set.
/// Returns the best `beam` completed programs plus the cached ones, best
/// first.
pub fn beam_decode<M: StepModel>(
    model: &M,
    g: &Grammar,
    cfg: &BeamConfig,
    cached: &[Program],
) -> Vec<Hypothesis> {
    beam_decode_with(model, g, cfg, cached, |_, _| {})
}

/// As [`beam_decode`], calling `observe(t, B_t)` with the step-`t` beam
/// after pruning and injection.
pub fn beam_decode_with<M: StepModel>(
    model: &M,
    g: &Grammar,
    cfg: &BeamConfig,
    cached: &[Program],
    mut observe: impl FnMut(usize, &[Hypothesis]),
) -> Vec<Hypothesis> {
    let cached: Vec<(&[TokenId], Vec<f64>)> = if cfg.cache == CacheMode::Off {
        Vec::new()
    } else {
        cached
            .iter()
            .filter_map(|p| prefix_scores(model, g, p.tokens()).map(|s| (p.tokens(), s)))
            .collect()
    };
    let mut active = vec![Entry {
        hyp: Hypothesis {
            tokens: Vec::new(),
            score: 0.0,
            provenance: Provenance::Model,
        },
        stack: TypeStack::new(),
    }];
    let mut pool: Vec<Hypothesis> = Vec::new();
    let mut t = 0;
    while !active.is_empty() && t < g.max_len() {
        t += 1;
        let mut next: Vec<Entry> = Vec::new();
        for e in &active {
            let valid = e.stack.valid_mask(g);
            let lp = log_masked(&model.logits(&e.hyp.tokens), &valid);
            for (i, ok) in valid.iter().enumerate() {
                if !ok {
                    continue;
                }
                let tok = TokenId(i as u16);
                let mut stack = e.stack.clone();
                stack.step(g, tok).expect("masked token is valid");
                let mut tokens = e.hyp.tokens.clone();
                tokens.push(tok);
                next.push(Entry {
                    hyp: Hypothesis {
                        tokens,
                        score: e.hyp.score + lp[i],
                        provenance: e.hyp.provenance,
                    },
                    stack,
                });
            }
        }
        next.sort_by(|a, b| by_score(&a.hyp, &b.hyp));
        next.truncate(cfg.beam);
        if cfg.cache == CacheMode::EveryStep {
            let mut present: HashSet<Vec<TokenId>> =
                next.iter().map(|e| e.hyp.tokens.clone()).collect();
            for (z, scores) in &cached {
                if z.len() < t {
                    continue;
                }
                let prefix = &z[..t];
                if !present.insert(prefix.to_vec()) {
                    continue;
                }
                let mut stack = TypeStack::new();
                for &tok in prefix {
                    stack.step(g, tok).expect("cached program is well-typed");
                }
                next.push(Entry {
                    hyp: Hypothesis {
                        tokens: prefix.to_vec(),
                        score: scores[t],
                        provenance: Provenance::Cache,
                    },
                    stack,
                });
            }
        }
        let beam: Vec<Hypothesis> = next.iter().map(|e| e.hyp.clone()).collect();
        observe(t, &beam);
        active.clear();
        for e in next {
            if e.stack.is_complete() {
                pool.push(e.hyp);
            } else {
                active.push(e);
            }
        }
        // scores only decrease, so once the pool holds `beam` programs that
        // all beat every active prefix nothing can displace them
        if pool.len() >= cfg.beam {
            pool.sort_by(by_score);
            pool.truncate(cfg.beam);
            let worst = pool.last().map_or(f64::NEG_INFINITY, |h| h.score);
            if active.iter().all(|e| e.hyp.score < worst) {
                break;
            }
        }
    }
    pool.sort_by(by_score);
    pool.truncate(cfg.beam);
    let mut seen: HashSet<Vec<TokenId>> = pool.iter().map(|h| h.tokens.clone()).collect();
    let mut out = pool;
    for (z, scores) in &cached {
        if seen.insert(z.to_vec()) {
            out.push(Hypothesis {
                tokens: z.to_vec(),
                score: scores[z.len()],
                provenance: Provenance::Cache,
            });
        }
    }
    out.sort_by(by_score);
    out
}

/// Highest-probability token at every step.
pub fn greedy_decode<M: StepModel>(model: &M, g: &Grammar) -> Hypothesis {
    let cfg = BeamConfig {
        beam: 1,
        d: 0,
        cache: CacheMode::Off,
    };
    beam_decode(model, g, &cfg, &[])
        .into_iter()
        .next()
        .expect("the grammar always admits a complete program")
}

/// The first `min(t, |z|)` tokens of each abstract program.
pub fn truncate(programs: &[AbstractProgram], t: usize) -> Vec<AbstractProgram> {
    programs
        .iter()
        .map(|z| {
            let n = t.min(z.len());
            let slots = z.tokens[..n]
                .iter()
                .filter(|tok| matches!(tok, crate::abstraction::ProgToken::Slot(_)))
                .count();
            AbstractProgram {
                tokens: z.tokens[..n].to_vec(),
                alignment: z.alignment[..slots].to_vec(),
            }
        })
        .collect()
}

/// De-abstracts the top `d` cached programs for `x`, skipping those that
/// do not fit it.
pub fn retrieve(cache: &Cache, x: &AbstractUtterance, lex: &Lexicon, d: usize) -> Vec<Program> {
    cache
        .top_d(&x.key(), d)
        .into_iter()
        .filter_map(|e| match deabstract(&e.program, x, lex) {
            Ok(p) => Some(p),
            Err(err) => {
                log::debug!("skipping cache entry {}: {err}", e.program);
                None
            }
        })
        .collect()
}

/// Retrieval followed by beam search for one utterance.
pub fn decode(
    parser: &Parser,
    ctx: &Context,
    x: &AbstractUtterance,
    cache: Option<&Cache>,
    lex: &Lexicon,
    cfg: &BeamConfig,
) -> Vec<Hypothesis> {
    let cached = match cache {
        Some(c) if cfg.cache != CacheMode::Off => retrieve(c, x, lex, cfg.d),
        _ => Vec::new(),
    };
    beam_decode(&Bound { parser, ctx }, Grammar::standard(), cfg, &cached)
}
