use super::{dot, softmax, Mat};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CbowConfig {
    pub dim: usize,
    pub window: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for CbowConfig {
    fn default() -> Self {
        CbowConfig {
            dim: 12,
            window: 2,
            epochs: 15,
            lr: 0.05,
            seed: 0,
        }
    }
}

/// Continuous bag-of-words embeddings with a full softmax output layer,
/// trained by plain SGD. Sentences are vocabulary ids. Returns `vocab × dim`.
pub fn cbow_embeddings(sentences: &[Vec<usize>], vocab: usize, cfg: &CbowConfig) -> Mat {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut emb = Mat::glorot(vocab, cfg.dim, &mut rng);
    let mut out = Mat::zeros(vocab, cfg.dim);
    let mut examples: Vec<(usize, usize)> = sentences
        .iter()
        .enumerate()
        .flat_map(|(s, sent)| (0..sent.len()).map(move |i| (s, i)))
        .collect();
    for _ in 0..cfg.epochs {
        examples.shuffle(&mut rng);
        for &(s, i) in &examples {
            let sent = &sentences[s];
            let ctx: Vec<usize> = (i.saturating_sub(cfg.window)
                ..(i + cfg.window + 1).min(sent.len()))
                .filter(|&j| j != i)
                .map(|j| sent[j])
                .collect();
            if ctx.is_empty() {
                continue;
            }
            let mut h = vec![0.0; cfg.dim];
            for &c in &ctx {
                for (a, b) in h.iter_mut().zip(emb.row(c)) {
                    *a += b / ctx.len() as f64;
                }
            }
            let logits: Vec<f64> = (0..vocab).map(|w| dot(out.row(w), &h)).collect();
            let mut d = softmax(&logits);
            d[sent[i]] -= 1.0;
            let mut dh = vec![0.0; cfg.dim];
            for (w, &dw) in d.iter().enumerate() {
                for (k, o) in out.row_mut(w).iter_mut().enumerate() {
                    dh[k] += dw * *o;
                    *o -= cfg.lr * dw * h[k];
                }
            }
            for &c in &ctx {
                for (e, g) in emb.row_mut(c).iter_mut().zip(&dh) {
                    *e -= cfg.lr * g / ctx.len() as f64;
                }
            }
        }
    }
    emb
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cos(a: &[f64], b: &[f64]) -> f64 {
        dot(a, b) / (dot(a, a).sqrt() * dot(b, b).sqrt())
    }

    #[test]
    fn shared_contexts_give_close_vectors() {
        // 1 and 2 both predict 3 and 4; 5 and 6 predict disjoint words
        let mut sents = Vec::new();
        for _ in 0..30 {
            sents.push(vec![3, 1, 4]);
            sents.push(vec![3, 2, 4]);
            sents.push(vec![7, 5, 8]);
            sents.push(vec![9, 6, 10]);
        }
        let cfg = CbowConfig::default();
        let e = cbow_embeddings(&sents, 11, &cfg);
        assert_eq!((e.rows, e.cols), (11, 12));
        let same = cos(e.row(1), e.row(2));
        let diff = cos(e.row(5), e.row(6));
        assert!(same > 0.8 && same > diff + 0.3, "{same} {diff}");
        assert_eq!(cbow_embeddings(&sents, 11, &cfg), e);
    }
}
