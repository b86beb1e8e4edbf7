use super::parser::{history, num_tokens, utterance_query, utterance_query_backward};
use super::{dot, softmax, Dims, Encoder, Mat, NeuralError, Params};
use crate::lang::TokenId;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Scores complete programs. Same encoder and query layer as the parser,
/// fed the candidate instead of generating it; the query after the last
/// token goes through a one-hidden-layer scorer.
#[derive(Clone, Debug, PartialEq)]
pub struct Reranker {
    pub dims: Dims,
    pub enc: Encoder,
    pub emb_z: Mat,
    pub w_q: Mat,
    /// `F × Q`
    pub w_h: Mat,
    pub b_h: Mat,
    /// `1 × F`
    pub w_o: Mat,
    pub b_o: Mat,
}

struct Trace {
    hist: Vec<usize>,
    pre: Vec<f64>,
    q: Vec<f64>,
    hid_pre: Vec<f64>,
    hid: Vec<f64>,
    score: f64,
}

impl Reranker {
    pub fn new(dims: Dims, vocab: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h2 = 2 * dims.hidden;
        Reranker {
            dims,
            enc: Encoder::new(vocab, dims.emb, dims.hidden, &mut rng),
            emb_z: Mat::glorot(num_tokens() + 1, dims.emb, &mut rng),
            w_q: Mat::glorot(dims.query, h2 + vocab + dims.history * dims.emb, &mut rng),
            w_h: Mat::glorot(dims.ff, dims.query, &mut rng),
            b_h: Mat::zeros(dims.ff, 1),
            w_o: Mat::glorot(1, dims.ff, &mut rng),
            b_o: Mat::zeros(1, 1),
        }
    }

    fn trace(&self, base: &[f64], z: &[TokenId]) -> Trace {
        let e = self.dims.emb;
        let hist = history(z, self.dims.history, self.emb_z.rows - 1);
        let off = self.w_q.cols - self.dims.history * e;
        let mut pre = base.to_vec();
        for (k, &t) in hist.iter().enumerate() {
            self.w_q
                .mul_add_cols(off + k * e, self.emb_z.row(t), &mut pre);
        }
        let q: Vec<f64> = pre.iter().map(|v| v.max(0.0)).collect();
        let mut hid_pre = self.b_h.data.clone();
        self.w_h.mul_add_cols(0, &q, &mut hid_pre);
        let hid: Vec<f64> = hid_pre.iter().map(|v| v.max(0.0)).collect();
        let score = dot(&self.w_o.data, &hid) + self.b_o.data[0];
        Trace {
            hist,
            pre,
            q,
            hid_pre,
            hid,
            score,
        }
    }

    /// `s_ψ(x, z)` for each candidate.
    pub fn scores(&self, ids: &[usize], zs: &[&[TokenId]]) -> Result<Vec<f64>, NeuralError> {
        let enc = self.enc.encode(ids)?;
        let base = utterance_query(&self.w_q, &enc);
        Ok(zs.iter().map(|z| self.trace(&base, z).score).collect())
    }

    pub fn score(&self, ids: &[usize], z: &[TokenId]) -> Result<f64, NeuralError> {
        Ok(self.scores(ids, &[z])?[0])
    }

    /// Smallest |pre-activation| over both ReLU layers for any of `zs`. Finite
    /// differences are only meaningful when this exceeds the probe step.
    pub fn relu_margin(&self, ids: &[usize], zs: &[&[TokenId]]) -> Result<f64, NeuralError> {
        let enc = self.enc.encode(ids)?;
        let base = utterance_query(&self.w_q, &enc);
        Ok(zs
            .iter()
            .flat_map(|z| {
                let tr = self.trace(&base, z);
                tr.pre.into_iter().chain(tr.hid_pre)
            })
            .map(f64::abs)
            .fold(f64::INFINITY, f64::min))
    }

    /// `p^g_ψ` over a beam.
    pub fn beam_probs(&self, ids: &[usize], zs: &[&[TokenId]]) -> Result<Vec<f64>, NeuralError> {
        Ok(softmax(&self.scores(ids, zs)?))
    }

    /// Adds `Σ dscore · ∂s/∂ψ` to `grad`, returning the scores.
    pub fn backprop(
        &self,
        ids: &[usize],
        targets: &[(&[TokenId], f64)],
        grad: &mut Reranker,
    ) -> Result<Vec<f64>, NeuralError> {
        let enc = self.enc.encode(ids)?;
        let base = utterance_query(&self.w_q, &enc);
        let e = self.dims.emb;
        let off = self.w_q.cols - self.dims.history * e;
        let mut dbase = vec![0.0; self.dims.query];
        let mut scores = Vec::with_capacity(targets.len());
        for &(z, ds) in targets {
            let tr = self.trace(&base, z);
            scores.push(tr.score);
            if ds == 0.0 {
                continue;
            }
            grad.b_o.data[0] += ds;
            for (g, h) in grad.w_o.data.iter_mut().zip(&tr.hid) {
                *g += ds * h;
            }
            let dhid_pre: Vec<f64> = self
                .w_o
                .data
                .iter()
                .zip(&tr.hid_pre)
                .map(|(w, p)| if *p > 0.0 { ds * w } else { 0.0 })
                .collect();
            grad.w_h.add_outer(0, 1.0, &dhid_pre, &tr.q);
            for (g, d) in grad.b_h.data.iter_mut().zip(&dhid_pre) {
                *g += d;
            }
            let dq = self.w_h.mul_t(&dhid_pre);
            let dpre: Vec<f64> = dq
                .iter()
                .zip(&tr.pre)
                .map(|(d, p)| if *p > 0.0 { *d } else { 0.0 })
                .collect();
            for (a, b) in dbase.iter_mut().zip(&dpre) {
                *a += b;
            }
            for (k, &tok) in tr.hist.iter().enumerate() {
                grad.w_q
                    .add_outer(off + k * e, 1.0, &dpre, self.emb_z.row(tok));
                let mut demb = vec![0.0; e];
                self.w_q.mul_t_add_cols(off + k * e, &dpre, &mut demb);
                for (a, b) in grad.emb_z.row_mut(tok).iter_mut().zip(&demb) {
                    *a += b;
                }
            }
        }
        let h2 = 2 * self.dims.hidden;
        let mut dsummary = vec![0.0; h2];
        utterance_query_backward(&self.w_q, &enc, &dbase, &mut grad.w_q, &mut dsummary);
        let dstates = vec![vec![0.0; h2]; ids.len()];
        self.enc.backward(&enc, &dstates, &dsummary, &mut grad.enc);
        Ok(scores)
    }

    pub fn from_tensors(dims: Dims, tensors: Vec<(String, Mat)>) -> Result<Self, NeuralError> {
        let vocab = tensors
            .iter()
            .find(|(n, _)| n == "enc.emb")
            .map(|(_, m)| m.rows)
            .ok_or(NeuralError::Checkpoint {
                line: 0,
                message: "missing enc.emb".into(),
            })?;
        let mut r = Reranker::new(dims, vocab, 0);
        super::checkpoint::assign(&mut r, tensors)?;
        Ok(r)
    }
}

impl Params for Reranker {
    fn tensors(&self) -> Vec<(&'static str, &Mat)> {
        let mut v = Vec::new();
        self.enc.tensors(&mut v);
        v.push(("dec.emb", &self.emb_z));
        v.push(("dec.wq", &self.w_q));
        v.push(("head.wh", &self.w_h));
        v.push(("head.bh", &self.b_h));
        v.push(("head.wo", &self.w_o));
        v.push(("head.bo", &self.b_o));
        v
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Mat)> {
        let mut v = Vec::new();
        self.enc.tensors_mut(&mut v);
        v.push(("dec.emb", &mut self.emb_z));
        v.push(("dec.wq", &mut self.w_q));
        v.push(("head.wh", &mut self.w_h));
        v.push(("head.bh", &mut self.b_h));
        v.push(("head.wo", &mut self.w_o));
        v.push(("head.bo", &mut self.b_o));
        v
    }
}
