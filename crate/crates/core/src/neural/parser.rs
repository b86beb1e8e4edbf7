use super::{dot, softmax, Dims, Encoded, Encoder, Mat, NeuralError, Params};
use crate::lang::{Grammar, Inventory, TokenId, TypeStack};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The locally normalized parser.
#[derive(Clone, Debug, PartialEq)]
pub struct Parser {
    pub dims: Dims,
    pub enc: Encoder,
    /// Program token embeddings; the extra last row is the padding token.
    pub emb_z: Mat,
    /// `Q × (2H + V + K·E)`
    pub w_q: Mat,
    /// `Q × 2H`
    pub w_a: Mat,
    /// `E × (Q + 2H)`
    pub w_s: Mat,
}

/// Per-utterance values shared by all decoding steps.
#[derive(Clone, Debug)]
pub struct Context {
    pub enc: Encoded,
    /// The utterance part of the query pre-activation.
    base: Vec<f64>,
    /// `W_α h_i`
    keys: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
struct Step {
    hist: Vec<usize>,
    pre: Vec<f64>,
    q: Vec<f64>,
    alpha: Vec<f64>,
    c: Vec<f64>,
    r: Vec<f64>,
    logits: Vec<f64>,
}

pub(crate) fn num_tokens() -> usize {
    Inventory::get().len()
}

/// Indices of the last `k` tokens of `prefix`, left-padded with `pad`.
pub(crate) fn history(prefix: &[TokenId], k: usize, pad: usize) -> Vec<usize> {
    let take = prefix.len().min(k);
    let mut h = vec![pad; k - take];
    h.extend(prefix[prefix.len() - take..].iter().map(|t| t.index()));
    h
}

/// The distribution restricted to `valid` and renormalized.
pub fn masked_dist(dist: &[f64], valid: &[bool]) -> Vec<f64> {
    let total: f64 = dist
        .iter()
        .zip(valid)
        .filter(|(_, &v)| v)
        .map(|(p, _)| p)
        .sum();
    let n_valid = valid.iter().filter(|&&v| v).count();
    if !(total > 0.0 && total.is_finite()) {
        log::warn!("no probability mass on {n_valid} valid tokens; using uniform");
        return valid
            .iter()
            .map(|&v| if v { 1.0 / n_valid as f64 } else { 0.0 })
            .collect();
    }
    dist.iter()
        .zip(valid)
        .map(|(p, &v)| if v { p / total } else { 0.0 })
        .collect()
}

/// `log p′` from raw logits; invalid tokens get negative infinity.
pub fn log_masked(logits: &[f64], valid: &[bool]) -> Vec<f64> {
    let kept: Vec<f64> = logits
        .iter()
        .zip(valid)
        .filter(|(_, &v)| v)
        .map(|(l, _)| *l)
        .collect();
    let z = super::log_sum_exp(&kept);
    logits
        .iter()
        .zip(valid)
        .map(|(l, &v)| if v { l - z } else { f64::NEG_INFINITY })
        .collect()
}

impl Parser {
    pub fn new(dims: Dims, vocab: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h2 = 2 * dims.hidden;
        Parser {
            dims,
            enc: Encoder::new(vocab, dims.emb, dims.hidden, &mut rng),
            emb_z: Mat::glorot(num_tokens() + 1, dims.emb, &mut rng),
            w_q: Mat::glorot(dims.query, h2 + vocab + dims.history * dims.emb, &mut rng),
            w_a: Mat::glorot(dims.query, h2, &mut rng),
            w_s: Mat::glorot(dims.emb, dims.query + h2, &mut rng),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.enc.emb.rows
    }

    fn pad(&self) -> usize {
        self.emb_z.rows - 1
    }

    fn hist_offset(&self) -> usize {
        2 * self.dims.hidden + self.vocab_size()
    }

    pub fn context(&self, ids: &[usize]) -> Result<Context, NeuralError> {
        let enc = self.enc.encode(ids)?;
        let base = utterance_query(&self.w_q, &enc);
        let keys = enc.states.iter().map(|h| self.w_a.mul(h)).collect();
        Ok(Context { enc, base, keys })
    }

    fn step(&self, ctx: &Context, prefix: &[TokenId]) -> Step {
        let e = self.dims.emb;
        let hist = history(prefix, self.dims.history, self.pad());
        let mut pre = ctx.base.clone();
        let off = self.hist_offset();
        for (k, &t) in hist.iter().enumerate() {
            self.w_q
                .mul_add_cols(off + k * e, self.emb_z.row(t), &mut pre);
        }
        let q: Vec<f64> = pre.iter().map(|&v| v.max(0.0)).collect();
        let scores: Vec<f64> = ctx.keys.iter().map(|k| dot(&q, k)).collect();
        let alpha = softmax(&scores);
        let mut c = vec![0.0; 2 * self.dims.hidden];
        for (a, h) in alpha.iter().zip(&ctx.enc.states) {
            for (ci, hi) in c.iter_mut().zip(h) {
                *ci += a * hi;
            }
        }
        let mut r = vec![0.0; e];
        self.w_s.mul_add_cols(0, &q, &mut r);
        self.w_s.mul_add_cols(q.len(), &c, &mut r);
        let logits = (0..num_tokens())
            .map(|j| dot(self.emb_z.row(j), &r))
            .collect();
        Step {
            hist,
            pre,
            q,
            alpha,
            c,
            r,
            logits,
        }
    }

    /// Unnormalized scores of every program token after `prefix`.
    pub fn logits(&self, ctx: &Context, prefix: &[TokenId]) -> Vec<f64> {
        self.step(ctx, prefix).logits
    }

    /// `p_θ(z_t | x, prefix)` over all program tokens.
    pub fn decode_dist(&self, ctx: &Context, prefix: &[TokenId]) -> Vec<f64> {
        softmax(&self.logits(ctx, prefix))
    }

    /// Attention weights at the step after `prefix`.
    pub fn attention(&self, ctx: &Context, prefix: &[TokenId]) -> Vec<f64> {
        self.step(ctx, prefix).alpha
    }

    /// `log p′_θ(z | x)` under the standard grammar.
    pub fn sequence_logprob(&self, ids: &[usize], z: &[TokenId]) -> Result<f64, NeuralError> {
        let ctx = self.context(ids)?;
        self.sequence_logprob_ctx(&ctx, z)
    }

    pub fn sequence_logprob_ctx(&self, ctx: &Context, z: &[TokenId]) -> Result<f64, NeuralError> {
        let g = Grammar::standard();
        let mut stack = TypeStack::new();
        let mut total = 0.0;
        for t in 0..z.len() {
            let valid = stack.valid_mask(g);
            let lp = log_masked(&self.logits(ctx, &z[..t]), &valid);
            stack.step(g, z[t]).map_err(crate::lang::LangError::from)?;
            total += lp[z[t].index()];
        }
        if !stack.is_complete() {
            return Err(
                crate::lang::LangError::Type(crate::lang::TypeError::Incomplete(
                    stack.top().expect("incomplete stack has a top"),
                ))
                .into(),
            );
        }
        Ok(total)
    }

    /// Adds the gradient of `-Σ w · log p′(z | x)` over `targets` to `grad`
    /// and returns each target's `log p′`.
    pub fn backprop(
        &self,
        ids: &[usize],
        targets: &[(&[TokenId], f64)],
        grad: &mut Parser,
    ) -> Result<Vec<f64>, NeuralError> {
        let ctx = self.context(ids)?;
        let n = ids.len();
        let h2 = 2 * self.dims.hidden;
        let e = self.dims.emb;
        let qn = self.dims.query;
        let g = Grammar::standard();
        let mut dstates = vec![vec![0.0; h2]; n];
        let mut dsummary = vec![0.0; h2];
        let mut dbase = vec![0.0; qn];
        let mut out = Vec::with_capacity(targets.len());
        for &(z, w) in targets {
            let mut stack = TypeStack::new();
            let mut total = 0.0;
            for t in 0..z.len() {
                let valid = stack.valid_mask(g);
                let st = self.step(&ctx, &z[..t]);
                let lp = log_masked(&st.logits, &valid);
                stack.step(g, z[t]).map_err(crate::lang::LangError::from)?;
                let y = z[t].index();
                total += lp[y];
                if w == 0.0 {
                    continue;
                }
                // loss = -w log p′_y
                let dlogits: Vec<f64> = (0..lp.len())
                    .map(|j| {
                        if !valid[j] {
                            return 0.0;
                        }
                        let p = lp[j].exp();
                        w * (p - if j == y { 1.0 } else { 0.0 })
                    })
                    .collect();
                let mut dr = vec![0.0; e];
                for (j, &d) in dlogits.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = self.emb_z.row(j);
                    for k in 0..e {
                        dr[k] += d * row[k];
                    }
                    let grow = grad.emb_z.row_mut(j);
                    for k in 0..e {
                        grow[k] += d * st.r[k];
                    }
                }
                grad.w_s.add_outer(0, 1.0, &dr, &st.q);
                grad.w_s.add_outer(qn, 1.0, &dr, &st.c);
                let mut dq = vec![0.0; qn];
                self.w_s.mul_t_add_cols(0, &dr, &mut dq);
                let mut dc = vec![0.0; h2];
                self.w_s.mul_t_add_cols(qn, &dr, &mut dc);

                let dalpha: Vec<f64> = ctx.enc.states.iter().map(|h| dot(&dc, h)).collect();
                let mean = dot(&st.alpha, &dalpha);
                for i in 0..n {
                    let ds = st.alpha[i] * (dalpha[i] - mean);
                    let h = &ctx.enc.states[i];
                    for k in 0..h2 {
                        dstates[i][k] += st.alpha[i] * dc[k];
                    }
                    if ds != 0.0 {
                        for (a, b) in dq.iter_mut().zip(&ctx.keys[i]) {
                            *a += ds * b;
                        }
                        grad.w_a.add_outer(0, ds, &st.q, h);
                        let mut dh = vec![0.0; h2];
                        self.w_a.mul_t_add_cols(0, &st.q, &mut dh);
                        for k in 0..h2 {
                            dstates[i][k] += ds * dh[k];
                        }
                    }
                }
                let dpre: Vec<f64> = dq
                    .iter()
                    .zip(&st.pre)
                    .map(|(d, p)| if *p > 0.0 { *d } else { 0.0 })
                    .collect();
                for (a, b) in dbase.iter_mut().zip(&dpre) {
                    *a += b;
                }
                let off = self.hist_offset();
                for (k, &tok) in st.hist.iter().enumerate() {
                    grad.w_q
                        .add_outer(off + k * e, 1.0, &dpre, self.emb_z.row(tok));
                    let mut demb = vec![0.0; e];
                    self.w_q.mul_t_add_cols(off + k * e, &dpre, &mut demb);
                    for (a, b) in grad.emb_z.row_mut(tok).iter_mut().zip(&demb) {
                        *a += b;
                    }
                }
            }
            out.push(total);
        }
        utterance_query_backward(&self.w_q, &ctx.enc, &dbase, &mut grad.w_q, &mut dsummary);
        self.enc
            .backward(&ctx.enc, &dstates, &dsummary, &mut grad.enc);
        Ok(out)
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
        let mut p = Parser::new(dims, vocab, 0);
        super::checkpoint::assign(&mut p, tensors)?;
        Ok(p)
    }
}

/// `W_q[:, ..2H+V] · [x̂; v̂]`
pub(crate) fn utterance_query(w_q: &Mat, enc: &Encoded) -> Vec<f64> {
    let mut base = vec![0.0; w_q.rows];
    w_q.mul_add_cols(0, &enc.summary, &mut base);
    let h2 = enc.summary.len();
    for &(id, v) in &enc.bow {
        for (r, b) in base.iter_mut().enumerate() {
            *b += w_q.data[r * w_q.cols + h2 + id] * v;
        }
    }
    base
}

pub(crate) fn utterance_query_backward(
    w_q: &Mat,
    enc: &Encoded,
    dbase: &[f64],
    grad_w_q: &mut Mat,
    dsummary: &mut [f64],
) {
    let h2 = enc.summary.len();
    grad_w_q.add_outer(0, 1.0, dbase, &enc.summary);
    for &(id, v) in &enc.bow {
        for (r, d) in dbase.iter().enumerate() {
            grad_w_q.data[r * grad_w_q.cols + h2 + id] += d * v;
        }
    }
    w_q.mul_t_add_cols(0, dbase, dsummary);
}

impl Params for Parser {
    fn tensors(&self) -> Vec<(&'static str, &Mat)> {
        let mut v = Vec::new();
        self.enc.tensors(&mut v);
        v.push(("dec.emb", &self.emb_z));
        v.push(("dec.wq", &self.w_q));
        v.push(("dec.wa", &self.w_a));
        v.push(("dec.ws", &self.w_s));
        v
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Mat)> {
        let mut v = Vec::new();
        self.enc.tensors_mut(&mut v);
        v.push(("dec.emb", &mut self.emb_z));
        v.push(("dec.wq", &mut self.w_q));
        v.push(("dec.wa", &mut self.w_a));
        v.push(("dec.ws", &mut self.w_s));
        v
    }
}
