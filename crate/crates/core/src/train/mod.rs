//! Supervised training on generated pairs, weakly-supervised training from
//! denotations with a program cache, and re-ranker training.

mod config;

pub use config::{ConfigError, TrainConfig};

use crate::abstraction::{abstract_utterance, AbstractUtterance, Lexicon};
use crate::eval::{GroupVerdict, Metrics, Predictor};
use crate::lang::{execute_tokens, Program, TokenId};
use crate::neural::{log_sum_exp, softmax, Adam, NeuralError, Params, Parser, Reranker, Vocab};
use crate::search::{decode, Cache, CacheMode, Hypothesis};
use crate::world::KnowledgeBase;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training diverged in epoch {epoch}: {source}")]
    Diverged {
        epoch: usize,
        #[source]
        source: NeuralError,
    },
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error("no training examples")]
    Empty,
}

/// An utterance with its gold program.
#[derive(Clone, Debug, PartialEq)]
pub struct SupExample {
    pub ids: Vec<usize>,
    pub program: Vec<TokenId>,
}

/// An utterance with the KBs and labels it was annotated against.
#[derive(Clone, Debug, PartialEq)]
pub struct WeakExample {
    pub raw: String,
    pub x: AbstractUtterance,
    pub ids: Vec<usize>,
    pub pairs: Vec<(KnowledgeBase, bool)>,
}

impl WeakExample {
    pub fn new(
        raw: &str,
        words: &[String],
        vocab: &Vocab,
        lex: &Lexicon,
        pairs: Vec<(KnowledgeBase, bool)>,
    ) -> Self {
        WeakExample {
            raw: raw.to_string(),
            x: abstract_utterance(words, lex),
            ids: vocab.encode(words),
            pairs,
        }
    }
}

/// 1 iff `z` is correct on every pair.
pub fn tied_reward(z: &[TokenId], pairs: &[(KnowledgeBase, bool)]) -> bool {
    pairs
        .iter()
        .all(|(kb, y)| execute_tokens(z, kb).is_ok_and(|d| d == *y))
}

/// Training units: whole groups, or every pair on its own when
/// `one_example` is set.
pub fn reward_units(groups: &[WeakExample], one_example: bool) -> Vec<WeakExample> {
    if !one_example {
        return groups.to_vec();
    }
    groups
        .iter()
        .flat_map(|g| {
            g.pairs.iter().map(|p| WeakExample {
                pairs: vec![p.clone()],
                ..g.clone()
            })
        })
        .collect()
}

/// `w(z) ∝ p′(z)^β · R(z)`, normalized. `None` when nothing is rewarded.
pub fn meritocratic_weights(logps: &[f64], rewards: &[bool], beta: f64) -> Option<Vec<f64>> {
    let scaled: Vec<f64> = logps
        .iter()
        .zip(rewards)
        .map(|(lp, &r)| if r { beta * lp } else { f64::NEG_INFINITY })
        .collect();
    if !rewards.iter().any(|&r| r) {
        return None;
    }
    let z = log_sum_exp(&scaled);
    Some(scaled.iter().map(|s| (s - z).exp()).collect())
}

/// Maps `f` over `items` on up to `workers` threads, keeping input order.
pub fn map_parallel<T: Sync, R: Send>(
    items: &[T],
    workers: usize,
    f: impl Fn(&T) -> R + Sync,
) -> Vec<R> {
    if workers <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(workers);
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| s.spawn(|| c.iter().map(&f).collect::<Vec<_>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

/// Sums per-item gradients in item order, so the result does not depend on
/// the number of workers.
fn reduce<P: Params>(zero: &P, grads: Vec<P>) -> P {
    let mut total = zero.clone();
    for g in &grads {
        total.add_scaled(g, 1.0);
    }
    total
}

/// One line of the training log.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub dev: Option<Metrics>,
    /// Supervised only: exact-match rate on validation.
    pub exact_match: Option<f64>,
    pub cache_size: usize,
    /// Fraction of units whose returned set had a rewarded program.
    pub hit_rate: Option<f64>,
    /// Fraction of units whose top-scoring program was rewarded.
    pub top1_reward: Option<f64>,
}

impl fmt::Display for EpochLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "epoch={} loss={:.6}", self.epoch, self.loss)?;
        if let Some(m) = self.exact_match {
            write!(f, " exact={m:.4}")?;
        }
        if let Some(d) = &self.dev {
            write!(
                f,
                " dev_acc={:.4} dev_cons={:.4}",
                d.accuracy, d.consistency
            )?;
        }
        write!(f, " cache={}", self.cache_size)?;
        if let Some(h) = self.hit_rate {
            write!(f, " hit_rate={h:.4}")?;
        }
        if let Some(t) = self.top1_reward {
            write!(f, " top1_reward={t:.4}")?;
        }
        Ok(())
    }
}

fn batches(n: usize, size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(size.max(1)).map(<[usize]>::to_vec).collect()
}

/// Mean `-log p′` of the gold programs.
pub fn supervised_loss(
    parser: &Parser,
    data: &[SupExample],
    workers: usize,
) -> Result<f64, NeuralError> {
    let lps = map_parallel(data, workers, |ex| {
        parser.sequence_logprob(&ex.ids, &ex.program)
    });
    let mut total = 0.0;
    for lp in lps {
        total -= lp?;
    }
    Ok(total / data.len().max(1) as f64)
}

/// Fraction of examples whose top beam program equals the gold one.
pub fn exact_match(parser: &Parser, data: &[SupExample], beam: usize, workers: usize) -> f64 {
    let pred = Predictor {
        parser,
        reranker: None,
        beam,
    };
    let hits = map_parallel(data, workers, |ex| match pred.predict(&ex.ids) {
        crate::eval::Prediction::Program(p) => p.tokens() == ex.program,
        crate::eval::Prediction::Fallback => false,
    });
    hits.iter().filter(|&&h| h).count() as f64 / data.len().max(1) as f64
}

/// Dev metrics of the parser (and re-ranker) with cache-free decoding.
pub fn evaluate_groups(
    parser: &Parser,
    reranker: Option<&Reranker>,
    groups: &[WeakExample],
    beam: usize,
    workers: usize,
) -> (Metrics, Vec<GroupVerdict>) {
    let pred = Predictor {
        parser,
        reranker,
        beam,
    };
    let verdicts = map_parallel(groups, workers, |g| {
        GroupVerdict::new(&g.raw, &pred.predict(&g.ids), &g.pairs)
    });
    (Metrics::from_verdicts(&verdicts), verdicts)
}

/// Maximum likelihood on gold programs. Keeps the parameters of the epoch
/// with the best validation exact match (ties: lower validation loss) and
/// stops after `patience` epochs without improvement.
pub fn train_supervised(
    parser: &mut Parser,
    train: &[SupExample],
    valid: &[SupExample],
    cfg: &TrainConfig,
    mut log: impl FnMut(&EpochLog),
) -> Result<Vec<EpochLog>, TrainError> {
    if train.is_empty() {
        return Err(TrainError::Empty);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(cfg.lr);
    let zero = parser.zeros_like();
    let mut best: Option<((f64, f64), Parser)> = None;
    let mut stale = 0;
    let mut logs = Vec::new();
    for epoch in 1..=cfg.epochs {
        for batch in batches(train.len(), cfg.batch, &mut rng) {
            let scale = 1.0 / batch.len() as f64;
            let grads = map_parallel(&batch, cfg.workers, |&i| {
                let ex = &train[i];
                let mut g = zero.clone();
                parser
                    .backprop(&ex.ids, &[(&ex.program, scale)], &mut g)
                    .map(|_| g)
            });
            let grads = grads.into_iter().collect::<Result<Vec<_>, _>>()?;
            adam.step(parser, &reduce(&zero, grads))
                .map_err(|source| TrainError::Diverged { epoch, source })?;
        }
        let loss = supervised_loss(parser, train, cfg.workers)?;
        if !loss.is_finite() {
            return Err(TrainError::Diverged {
                epoch,
                source: NeuralError::NonFinite("training loss".into()),
            });
        }
        let mut entry = EpochLog {
            epoch,
            loss,
            ..Default::default()
        };
        let key = if valid.is_empty() {
            (0.0, -loss)
        } else {
            let em = exact_match(parser, valid, cfg.beam.beam, cfg.workers);
            entry.exact_match = Some(em);
            (em, -supervised_loss(parser, valid, cfg.workers)?)
        };
        log(&entry);
        logs.push(entry);
        if best.as_ref().is_none_or(|(b, _)| key > *b) {
            best = Some((key, parser.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    if let Some((_, p)) = best {
        *parser = p;
    }
    Ok(logs)
}

/// What one unit contributed in a weak-training step.
struct UnitOutcome {
    grad: Option<Parser>,
    loss: f64,
    hit: bool,
    top1: bool,
    observed: Vec<(Vec<TokenId>, bool)>,
}

fn weak_unit(
    parser: &Parser,
    zero: &Parser,
    unit: &WeakExample,
    cache: &Cache,
    lex: &Lexicon,
    cfg: &TrainConfig,
    scale: f64,
) -> Result<UnitOutcome, NeuralError> {
    let ctx = parser.context(&unit.ids)?;
    let use_cache = (cfg.beam.cache != CacheMode::Off).then_some(cache);
    let hyps: Vec<Hypothesis> = decode(parser, &ctx, &unit.x, use_cache, lex, &cfg.beam);
    let rewards: Vec<bool> = hyps
        .iter()
        .map(|h| tied_reward(&h.tokens, &unit.pairs))
        .collect();
    let logps: Vec<f64> = hyps.iter().map(|h| h.score).collect();
    let top1 = rewards.first().copied().unwrap_or(false);
    let observed = hyps
        .iter()
        .zip(&rewards)
        .map(|(h, &r)| (h.tokens.clone(), r))
        .collect();
    let Some(w) = meritocratic_weights(&logps, &rewards, cfg.beta) else {
        return Ok(UnitOutcome {
            grad: None,
            loss: 0.0,
            hit: false,
            top1,
            observed,
        });
    };
    let targets: Vec<(&[TokenId], f64)> = hyps
        .iter()
        .zip(&w)
        .filter(|(_, &wi)| wi > 0.0)
        .map(|(h, &wi)| (h.tokens.as_slice(), wi * scale))
        .collect();
    let mut g = zero.clone();
    let lps = parser.backprop(&unit.ids, &targets, &mut g)?;
    let loss = -targets
        .iter()
        .zip(&lps)
        .map(|((_, wi), lp)| wi * lp)
        .sum::<f64>();
    Ok(UnitOutcome {
        grad: Some(g),
        loss,
        hit: true,
        top1,
        observed,
    })
}

/// Weakly-supervised training. Each unit is decoded with the cache, its
/// returned programs are rewarded, the meritocratic-weighted log-likelihood
/// of rewarded programs is ascended, and the cache records every reward.
/// Decoding within a mini-batch reads the cache as it was at the start of
/// the batch; updates are applied in unit order afterwards.
/// With `dev` groups, keeps the parameters with the best dev consistency
/// and stops after `patience` epochs without improvement.
pub fn train_weak(
    parser: &mut Parser,
    groups: &[WeakExample],
    dev: &[WeakExample],
    cache: &mut Cache,
    lex: &Lexicon,
    cfg: &TrainConfig,
    mut log: impl FnMut(&EpochLog),
) -> Result<Vec<EpochLog>, TrainError> {
    let units: Vec<WeakExample> = if cfg.one_example_reward {
        reward_units(groups, true)
    } else {
        groups
            .iter()
            .filter(|g| g.pairs.len() == 4)
            .cloned()
            .collect()
    };
    if units.is_empty() {
        return Err(TrainError::Empty);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(cfg.lr);
    let zero = parser.zeros_like();
    let mut best: Option<(f64, Parser)> = None;
    let mut stale = 0;
    let mut logs = Vec::new();
    for epoch in 1..=cfg.epochs {
        let (mut loss, mut hits, mut top1) = (0.0, 0usize, 0usize);
        for batch in batches(units.len(), cfg.batch, &mut rng) {
            let scale = 1.0 / batch.len() as f64;
            let snapshot: &Cache = cache;
            let outcomes = map_parallel(&batch, cfg.workers, |&i| {
                weak_unit(parser, &zero, &units[i], snapshot, lex, cfg, scale)
            });
            let outcomes = outcomes.into_iter().collect::<Result<Vec<_>, _>>()?;
            let mut grads = Vec::new();
            for (o, &i) in outcomes.into_iter().zip(&batch) {
                loss += o.loss / scale;
                hits += usize::from(o.hit);
                top1 += usize::from(o.top1);
                let obs: Vec<(&[TokenId], bool)> =
                    o.observed.iter().map(|(z, r)| (z.as_slice(), *r)).collect();
                cache.update(&units[i].x, &obs, lex);
                grads.extend(o.grad);
            }
            if !grads.is_empty() {
                adam.step(parser, &reduce(&zero, grads))
                    .map_err(|source| TrainError::Diverged { epoch, source })?;
            }
        }
        let n = units.len() as f64;
        let mut entry = EpochLog {
            epoch,
            loss: loss / n,
            cache_size: cache.num_programs(),
            hit_rate: Some(hits as f64 / n),
            top1_reward: Some(top1 as f64 / n),
            ..Default::default()
        };
        if !dev.is_empty() {
            entry.dev = Some(evaluate_groups(parser, None, dev, cfg.beam.beam, cfg.workers).0);
        }
        log(&entry);
        let key = entry.dev.map(|d| d.consistency);
        logs.push(entry);
        if let Some(k) = key {
            if best.as_ref().is_none_or(|(b, _)| k > *b) {
                best = Some((k, parser.clone()));
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.patience {
                    break;
                }
            }
        }
    }
    if let Some((_, p)) = best {
        *parser = p;
    }
    Ok(logs)
}

/// Top-1 tied-reward rate of cache-free decoding.
pub fn top1_reward_rate(
    parser: &Parser,
    reranker: Option<&Reranker>,
    groups: &[WeakExample],
    beam: usize,
    workers: usize,
) -> f64 {
    let (_, verdicts) = evaluate_groups(parser, reranker, groups, beam, workers);
    verdicts.iter().filter(|v| v.consistent()).count() as f64 / groups.len().max(1) as f64
}

/// A beam decoded once with the fixed parser, with rewards.
#[derive(Clone, Debug)]
pub struct RerankBeam {
    pub ids: Vec<usize>,
    pub programs: Vec<Vec<TokenId>>,
    pub rewards: Vec<bool>,
}

pub fn rerank_beams(parser: &Parser, groups: &[WeakExample], cfg: &TrainConfig) -> Vec<RerankBeam> {
    let pred = Predictor {
        parser,
        reranker: None,
        beam: cfg.beam.beam,
    };
    map_parallel(groups, cfg.workers, |g| {
        let hyps = pred.candidates(&g.ids);
        RerankBeam {
            ids: g.ids.clone(),
            rewards: hyps
                .iter()
                .map(|h| tied_reward(&h.tokens, &g.pairs))
                .collect(),
            programs: hyps.into_iter().map(|h| h.tokens).collect(),
        }
    })
}

/// `-log Σ_z p^g(z) R(z)` and its gradient with respect to the scores.
pub fn rerank_objective(scores: &[f64], rewards: &[bool]) -> Option<(f64, Vec<f64>)> {
    if !rewards.iter().any(|&r| r) {
        return None;
    }
    let p = softmax(scores);
    let mass: f64 = p
        .iter()
        .zip(rewards)
        .filter(|(_, &r)| r)
        .map(|(pi, _)| pi)
        .sum();
    let grad = p
        .iter()
        .zip(rewards)
        .map(|(pi, &r)| pi - if r { pi / mass } else { 0.0 })
        .collect();
    Some((-mass.ln(), grad))
}

/// Trains the re-ranker on beams of the fixed parser. Beams with no
/// rewarded program, or only rewarded ones, carry no signal and are skipped.
pub fn train_rerank(
    reranker: &mut Reranker,
    beams: &[RerankBeam],
    cfg: &TrainConfig,
    mut log: impl FnMut(&EpochLog),
) -> Result<Vec<EpochLog>, TrainError> {
    let useful: Vec<&RerankBeam> = beams
        .iter()
        .filter(|b| b.rewards.iter().any(|&r| r) && !b.rewards.iter().all(|&r| r))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(cfg.lr);
    let zero = reranker.zeros_like();
    let mut logs = Vec::new();
    for epoch in 1..=cfg.epochs {
        let mut loss = 0.0;
        for batch in batches(useful.len(), cfg.batch, &mut rng) {
            let scale = 1.0 / batch.len() as f64;
            let model: &Reranker = reranker;
            let out = map_parallel(
                &batch,
                cfg.workers,
                |&i| -> Result<(Reranker, f64), NeuralError> {
                    let b = useful[i];
                    let zs: Vec<&[TokenId]> = b.programs.iter().map(Vec::as_slice).collect();
                    let s = model.scores(&b.ids, &zs)?;
                    let (l, ds) = rerank_objective(&s, &b.rewards).expect("filtered");
                    let targets: Vec<(&[TokenId], f64)> =
                        zs.iter().zip(&ds).map(|(z, d)| (*z, d * scale)).collect();
                    let mut g = zero.clone();
                    model.backprop(&b.ids, &targets, &mut g)?;
                    Ok((g, l))
                },
            );
            let mut grads = Vec::new();
            for r in out {
                let (g, l) = r?;
                loss += l;
                grads.push(g);
            }
            adam.step(reranker, &reduce(&zero, grads))
                .map_err(|source| TrainError::Diverged { epoch, source })?;
        }
        let entry = EpochLog {
            epoch,
            loss: loss / useful.len().max(1) as f64,
            ..Default::default()
        };
        log(&entry);
        logs.push(entry);
    }
    Ok(logs)
}

/// The gold programs of generated pairs as supervised examples.
pub fn sup_examples<'a>(
    pairs: impl IntoIterator<Item = (&'a [String], &'a Program)>,
    vocab: &Vocab,
) -> Vec<SupExample> {
    pairs
        .into_iter()
        .map(|(u, p)| SupExample {
            ids: vocab.encode(u),
            program: p.tokens().to_vec(),
        })
        .collect()
}
