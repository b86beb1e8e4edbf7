//! The encoder-decoder parser, its type-masked output distribution and the
//! beam re-ranker, with hand-written backpropagation and Adam.

mod cbow;
mod checkpoint;
mod lstm;
mod parser;
mod reranker;

pub use cbow::{cbow_embeddings, CbowConfig};
pub use checkpoint::Checkpoint;
pub use lstm::{Encoded, Encoder, Lstm};
pub use parser::{log_masked, masked_dist, Context, Parser};
pub use reranker::Reranker;

use crate::lang::LangError;
use crate::preprocess::UNK;
use rand::Rng;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("empty utterance")]
    EmptyUtterance,
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error(transparent)]
    Lang(#[from] LangError),
    #[error("checkpoint line {line}: {message}")]
    Checkpoint { line: usize, message: String },
}

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Uniform entries in ±sqrt(6 / (rows + cols)).
    pub fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> Self {
        let a = (6.0 / (rows + cols) as f64).sqrt();
        Mat {
            rows,
            cols,
            data: (0..rows * cols).map(|_| rng.gen_range(-a..a)).collect(),
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `out += self[:, off..off+x.len()] · x`
    pub fn mul_add_cols(&self, off: usize, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.row(r)[off..off + x.len()];
            *o += dot(row, x);
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        self.mul_add_cols(0, x, &mut out);
        out
    }

    /// `out += self[:, off..off+out.len()]ᵀ · y`
    pub fn mul_t_add_cols(&self, off: usize, y: &[f64], out: &mut [f64]) {
        for (r, &yr) in y.iter().enumerate() {
            if yr == 0.0 {
                continue;
            }
            let row = &self.row(r)[off..off + out.len()];
            for (o, w) in out.iter_mut().zip(row) {
                *o += yr * w;
            }
        }
    }

    pub fn mul_t(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        self.mul_t_add_cols(0, y, &mut out);
        out
    }

    /// `self[:, off..off+b.len()] += scale · a bᵀ`
    pub fn add_outer(&mut self, off: usize, scale: f64, a: &[f64], b: &[f64]) {
        for (r, &ar) in a.iter().enumerate() {
            let s = scale * ar;
            if s == 0.0 {
                continue;
            }
            let cols = self.cols;
            let row = &mut self.data[r * cols + off..r * cols + off + b.len()];
            for (w, bv) in row.iter_mut().zip(b) {
                *w += s * bv;
            }
        }
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Softmax with max subtraction.
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = xs.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Sizes of the model. The defaults are the published ones.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub emb: usize,
    /// LSTM state per direction.
    pub hidden: usize,
    /// Decoder query size.
    pub query: usize,
    /// Number of previous program tokens fed to the decoder.
    pub history: usize,
    /// Re-ranker feed-forward hidden size.
    pub ff: usize,
}

impl Default for Dims {
    fn default() -> Self {
        Dims {
            emb: 12,
            hidden: 30,
            query: 50,
            history: 4,
            ff: 50,
        }
    }
}

impl Dims {
    pub fn to_meta(&self) -> Vec<(String, String)> {
        [
            ("emb", self.emb),
            ("hidden", self.hidden),
            ("query", self.query),
            ("history", self.history),
            ("ff", self.ff),
        ]
        .into_iter()
        .map(|(k, v)| (format!("dims.{k}"), v.to_string()))
        .collect()
    }

    pub fn from_meta(meta: &HashMap<String, String>) -> Option<Self> {
        let get = |k: &str| meta.get(&format!("dims.{k}"))?.parse().ok();
        Some(Dims {
            emb: get("emb")?,
            hidden: get("hidden")?,
            query: get("query")?,
            history: get("history")?,
            ff: get("ff")?,
        })
    }
}

/// Utterance token ids; index 0 is the UNK token.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn new<S: AsRef<str>>(words: impl IntoIterator<Item = S>) -> Self {
        let mut tokens = vec![UNK.to_string()];
        let mut index = HashMap::from([(UNK.to_string(), 0)]);
        for w in words {
            let w = w.as_ref();
            if !index.contains_key(w) {
                index.insert(w.to_string(), tokens.len());
                tokens.push(w.to_string());
            }
        }
        Vocab { tokens, index }
    }

    /// All words of the utterances, sorted.
    pub fn build<'a>(utterances: impl IntoIterator<Item = &'a [String]>) -> Self {
        let mut words: Vec<&String> = utterances.into_iter().flatten().collect();
        words.sort();
        words.dedup();
        Vocab::new(words)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, w: &str) -> usize {
        self.index.get(w).copied().unwrap_or(0)
    }

    pub fn encode(&self, words: &[String]) -> Vec<usize> {
        words.iter().map(|w| self.id(w)).collect()
    }
}

/// A set of named tensors that can be optimized and saved.
pub trait Params: Clone {
    fn tensors(&self) -> Vec<(&'static str, &Mat)>;
    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Mat)>;

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, m) in z.tensors_mut() {
            m.fill(0.0);
        }
        z
    }

    fn add_scaled(&mut self, other: &Self, scale: f64) {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += scale * y;
            }
        }
    }

    fn check_finite(&self) -> Result<(), NeuralError> {
        for (name, m) in self.tensors() {
            if m.data.iter().any(|x| !x.is_finite()) {
                return Err(NeuralError::NonFinite(name.to_string()));
            }
        }
        Ok(())
    }

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.data.len()).sum()
    }
}

#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Descends along `grads`.
    pub fn step<P: Params>(&mut self, params: &mut P, grads: &P) -> Result<(), NeuralError> {
        grads.check_finite()?;
        if self.m.is_empty() {
            for (_, g) in grads.tensors() {
                self.m.push(vec![0.0; g.data.len()]);
                self.v.push(vec![0.0; g.data.len()]);
            }
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (i, ((_, p), (_, g))) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .enumerate()
        {
            for j in 0..g.data.len() {
                let gj = g.data[j];
                let m = &mut self.m[i][j];
                let v = &mut self.v[i][j];
                *m = self.beta1 * *m + (1.0 - self.beta1) * gj;
                *v = self.beta2 * *v + (1.0 - self.beta2) * gj * gj;
                p.data[j] -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Checks `analytic`, the gradient of `loss` at `p`, against fourth-order central
/// differences (step 1e-3) over every entry. Returns the largest relative error
/// `|a - n| / max(|a|, |n|, 1e-6)` per tensor.
pub fn rel_errors<P: Params>(
    p: &P,
    analytic: &P,
    loss: impl Fn(&P) -> f64,
) -> Vec<(&'static str, f64)> {
    let h = 1e-3;
    let mut probe = p.clone();
    let names: Vec<&'static str> = p.tensors().iter().map(|(n, _)| *n).collect();
    let mut out = Vec::with_capacity(names.len());
    for (ti, name) in names.into_iter().enumerate() {
        let mut worst: f64 = 0.0;
        for j in 0..p.tensors()[ti].1.data.len() {
            let orig = probe.tensors()[ti].1.data[j];
            let mut at = |d: f64| {
                probe.tensors_mut()[ti].1.data[j] = orig + d;
                loss(&probe)
            };
            let numeric = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
            probe.tensors_mut()[ti].1.data[j] = orig;
            let a = analytic.tensors()[ti].1.data[j];
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
        }
        out.push((name, worst));
    }
    out
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn max_rel_error<P: Params>(p: &P, analytic: &P, loss: impl Fn(&P) -> f64) -> f64 {
        let worst = rel_errors(p, analytic, loss);
        for (name, e) in &worst {
            if *e > 1e-4 {
                eprintln!("{name}: relative error {e}");
            }
        }
        worst.iter().map(|(_, e)| *e).fold(0.0, f64::max)
    }

    #[derive(Clone)]
    struct Quad(Mat);

    impl Params for Quad {
        fn tensors(&self) -> Vec<(&'static str, &Mat)> {
            vec![("w", &self.0)]
        }
        fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Mat)> {
            vec![("w", &mut self.0)]
        }
    }

    #[test]
    fn quadratic_probe() {
        // loss = ½‖W - T‖², gradient W - T
        let w = Quad(Mat {
            rows: 2,
            cols: 2,
            data: vec![1.0, -2.0, 0.5, 3.0],
        });
        let target = [0.0, 1.0, 1.0, -1.0];
        let grad = Quad(Mat {
            rows: 2,
            cols: 2,
            data: w.0.data.iter().zip(target).map(|(a, b)| a - b).collect(),
        });
        let loss = |q: &Quad| {
            0.5 * q
                .0
                .data
                .iter()
                .zip(target)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        };
        assert!(max_rel_error(&w, &grad, loss) < 1e-6);
        let zero = w.zeros_like();
        assert!(max_rel_error(&w, &zero, |q| 0.0 * loss(q)) < 1e-12);
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut w = Quad(Mat::zeros(1, 3));
        let mut opt = Adam::new(0.1);
        for _ in 0..500 {
            let g = Quad(Mat {
                rows: 1,
                cols: 3,
                data: w
                    .0
                    .data
                    .iter()
                    .zip([1.0, -2.0, 3.0])
                    .map(|(a, b)| a - b)
                    .collect(),
            });
            opt.step(&mut w, &g).unwrap();
        }
        for (a, b) in w.0.data.iter().zip([1.0, -2.0, 3.0]) {
            assert!((a - b).abs() < 1e-2, "{a} vs {b}");
        }
        let bad = Quad(Mat {
            rows: 1,
            cols: 3,
            data: vec![f64::NAN, 0.0, 0.0],
        });
        assert!(matches!(opt.step(&mut w, &bad), Err(NeuralError::NonFinite(n)) if n == "w"));
    }

    #[test]
    fn vocab() {
        let utts = [
            vec!["b".to_string(), "a".to_string()],
            vec!["a".to_string()],
        ];
        let v = Vocab::build(utts.iter().map(|u| u.as_slice()));
        assert_eq!(v.tokens(), ["<unk>", "a", "b"]);
        assert_eq!(v.id("zzz"), 0);
        assert_eq!(v.encode(&utts[0]), vec![2, 1]);
    }

    #[test]
    fn softmax_normalizes() {
        let p = softmax(&[1000.0, 999.0, -5.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((log_sum_exp(&[0.0, 0.0]) - 2f64.ln()).abs() < 1e-12);
    }
}
