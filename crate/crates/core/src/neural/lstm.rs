use super::{sigmoid, Mat, NeuralError};
use rand::Rng;

/// One LSTM direction. Gate rows are ordered input, forget, output, cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Lstm {
    /// `4H × (E + H)`
    pub w: Mat,
    /// `4H × 1`
    pub b: Mat,
}

#[derive(Clone, Debug, Default)]
pub(crate) struct LstmStep {
    input: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// activated i, f, o, g
    gates: Vec<f64>,
    c: Vec<f64>,
    pub(crate) h: Vec<f64>,
}

impl Lstm {
    pub fn new(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let mut b = Mat::zeros(4 * hidden, 1);
        for j in hidden..2 * hidden {
            b.data[j] = 1.0;
        }
        Lstm {
            w: Mat::glorot(4 * hidden, input + hidden, rng),
            b,
        }
    }

    pub fn hidden(&self) -> usize {
        self.w.rows / 4
    }

    pub(crate) fn run(&self, inputs: &[&[f64]]) -> Vec<LstmStep> {
        let h = self.hidden();
        let mut out: Vec<LstmStep> = Vec::with_capacity(inputs.len());
        let (mut hp, mut cp) = (vec![0.0; h], vec![0.0; h]);
        for &x in inputs {
            let mut z = self.b.data.clone();
            self.w.mul_add_cols(0, x, &mut z);
            self.w.mul_add_cols(x.len(), &hp, &mut z);
            let mut gates = vec![0.0; 4 * h];
            for j in 0..3 * h {
                gates[j] = sigmoid(z[j]);
            }
            for j in 3 * h..4 * h {
                gates[j] = z[j].tanh();
            }
            let c: Vec<f64> = (0..h)
                .map(|j| gates[h + j] * cp[j] + gates[j] * gates[3 * h + j])
                .collect();
            let hn: Vec<f64> = (0..h).map(|j| gates[2 * h + j] * c[j].tanh()).collect();
            out.push(LstmStep {
                input: x.to_vec(),
                h_prev: hp,
                c_prev: cp,
                gates,
                c: c.clone(),
                h: hn.clone(),
            });
            hp = hn;
            cp = c;
        }
        out
    }

    /// Backpropagates `dh[t]` (gradient w.r.t. each step's output) through
    /// the run, accumulating into `grad` and returning input gradients.
    pub(crate) fn backward(
        &self,
        steps: &[LstmStep],
        dh: &[Vec<f64>],
        grad: &mut Lstm,
    ) -> Vec<Vec<f64>> {
        let h = self.hidden();
        let mut dx = vec![Vec::new(); steps.len()];
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        for t in (0..steps.len()).rev() {
            let s = &steps[t];
            let g = &s.gates;
            let mut dz = vec![0.0; 4 * h];
            let mut dc_prev = vec![0.0; h];
            for j in 0..h {
                let dhj = dh[t][j] + dh_next[j];
                let tc = s.c[j].tanh();
                let (i, f, o, gg) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
                let dc = dc_next[j] + dhj * o * (1.0 - tc * tc);
                dz[j] = dc * gg * i * (1.0 - i);
                dz[h + j] = dc * s.c_prev[j] * f * (1.0 - f);
                dz[2 * h + j] = dhj * tc * o * (1.0 - o);
                dz[3 * h + j] = dc * i * (1.0 - gg * gg);
                dc_prev[j] = dc * f;
            }
            let e = s.input.len();
            grad.w.add_outer(0, 1.0, &dz, &s.input);
            grad.w.add_outer(e, 1.0, &dz, &s.h_prev);
            for (b, d) in grad.b.data.iter_mut().zip(&dz) {
                *b += d;
            }
            let mut dxi = vec![0.0; e];
            self.w.mul_t_add_cols(0, &dz, &mut dxi);
            let mut dhp = vec![0.0; h];
            self.w.mul_t_add_cols(e, &dz, &mut dhp);
            dx[t] = dxi;
            dh_next = dhp;
            dc_next = dc_prev;
        }
        dx
    }
}

/// Word embeddings and a bidirectional LSTM.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoder {
    /// `V × E`
    pub emb: Mat,
    pub fwd: Lstm,
    pub bwd: Lstm,
}

/// Encoder activations for one utterance.
#[derive(Clone, Debug)]
pub struct Encoded {
    pub ids: Vec<usize>,
    /// `[h^F_i; h^B_i]` per position.
    pub states: Vec<Vec<f64>>,
    /// `[h^F_n; h^B_1]`
    pub summary: Vec<f64>,
    /// Normalized word counts as (vocab id, weight), sorted by id.
    pub bow: Vec<(usize, f64)>,
    fwd: Vec<LstmStep>,
    /// In reverse order: entry 0 read the last word.
    bwd: Vec<LstmStep>,
}

impl Encoder {
    pub fn new(vocab: usize, emb: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        Encoder {
            emb: Mat::glorot(vocab, emb, rng),
            fwd: Lstm::new(emb, hidden, rng),
            bwd: Lstm::new(emb, hidden, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.fwd.hidden()
    }

    pub fn encode(&self, ids: &[usize]) -> Result<Encoded, NeuralError> {
        if ids.is_empty() {
            return Err(NeuralError::EmptyUtterance);
        }
        let n = ids.len();
        let h = self.hidden();
        let rows: Vec<&[f64]> = ids.iter().map(|&i| self.emb.row(i)).collect();
        let fwd = self.fwd.run(&rows);
        let rev: Vec<&[f64]> = rows.iter().rev().copied().collect();
        let bwd = self.bwd.run(&rev);
        let states: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut s = fwd[i].h.clone();
                s.extend_from_slice(&bwd[n - 1 - i].h);
                s
            })
            .collect();
        let mut summary = fwd[n - 1].h.clone();
        summary.extend_from_slice(&bwd[n - 1].h);
        debug_assert_eq!(summary.len(), 2 * h);
        let mut sorted = ids.to_vec();
        sorted.sort_unstable();
        let mut bow: Vec<(usize, f64)> = Vec::new();
        for id in sorted {
            match bow.last_mut() {
                Some((last, c)) if *last == id => *c += 1.0,
                _ => bow.push((id, 1.0)),
            }
        }
        for (_, c) in &mut bow {
            *c /= n as f64;
        }
        Ok(Encoded {
            ids: ids.to_vec(),
            states,
            summary,
            bow,
            fwd,
            bwd,
        })
    }

    /// Accumulates parameter gradients given gradients w.r.t. the states
    /// and the summary.
    pub fn backward(
        &self,
        enc: &Encoded,
        dstates: &[Vec<f64>],
        dsummary: &[f64],
        grad: &mut Encoder,
    ) {
        let n = enc.ids.len();
        let h = self.hidden();
        let mut dfh: Vec<Vec<f64>> = (0..n).map(|i| dstates[i][..h].to_vec()).collect();
        let mut dbh: Vec<Vec<f64>> = (0..n).map(|t| dstates[n - 1 - t][h..].to_vec()).collect();
        for j in 0..h {
            dfh[n - 1][j] += dsummary[j];
            dbh[n - 1][j] += dsummary[h + j];
        }
        let dxf = self.fwd.backward(&enc.fwd, &dfh, &mut grad.fwd);
        let dxb = self.bwd.backward(&enc.bwd, &dbh, &mut grad.bwd);
        for i in 0..n {
            let row = grad.emb.row_mut(enc.ids[i]);
            for (r, (a, b)) in row.iter_mut().zip(dxf[i].iter().zip(&dxb[n - 1 - i])) {
                *r += a + b;
            }
        }
    }

    pub(crate) fn tensors<'a>(&'a self, out: &mut Vec<(&'static str, &'a Mat)>) {
        out.push(("enc.emb", &self.emb));
        out.push(("enc.fwd.w", &self.fwd.w));
        out.push(("enc.fwd.b", &self.fwd.b));
        out.push(("enc.bwd.w", &self.bwd.w));
        out.push(("enc.bwd.b", &self.bwd.b));
    }

    pub(crate) fn tensors_mut<'a>(&'a mut self, out: &mut Vec<(&'static str, &'a mut Mat)>) {
        out.push(("enc.emb", &mut self.emb));
        out.push(("enc.fwd.w", &mut self.fwd.w));
        out.push(("enc.fwd.b", &mut self.fwd.b));
        out.push(("enc.bwd.w", &mut self.bwd.w));
        out.push(("enc.bwd.b", &mut self.bwd.b));
    }
}
