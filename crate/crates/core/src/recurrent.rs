//! Recurrent policy: token embedding, single GRU layer, vocabulary head.
//! Trained as a language model over interleaved sequences with loss only
//! at masked positions; at rollout time the hidden state is carried across
//! the whole episode stream.

use crate::dataset::SequenceExample;
use crate::model::{init_linear, ParamSet};
use crate::nn::{self, GruCache};
use crate::rng::Prng;
use std::ops::Range;

#[derive(Debug, Clone, Copy)]
pub struct GruCfg {
    pub vocab_size: usize,
    pub embed: usize,
    pub hidden: usize,
}

impl GruCfg {
    pub fn standard(vocab_size: usize) -> Self {
        GruCfg { vocab_size, embed: 64, hidden: 128 }
    }
}

pub struct GruPolicy {
    pub cfg: GruCfg,
    pub ps: ParamSet,
    wte: Range<usize>,
    wx: Range<usize>,
    wh: Range<usize>,
    b: Range<usize>,
    head_w: Range<usize>,
    head_b: Range<usize>,
}

impl GruPolicy {
    pub fn new(cfg: GruCfg, seed: u64) -> Self {
        let GruCfg { vocab_size: v, embed: e, hidden: h } = cfg;
        let mut ps = ParamSet::default();
        let wte = ps.alloc("wte", v * e);
        let wx = ps.alloc("wx", 3 * h * e);
        let wh = ps.alloc("wh", 3 * h * h);
        let b = ps.alloc("b", 3 * h);
        let head_w = ps.alloc("head_w", v * h);
        let head_b = ps.alloc("head_b", v);
        let mut rng = Prng::from_parts(seed, 0x33);
        for x in &mut ps.data[wte.clone()] {
            *x = 0.1 * rng.normal();
        }
        init_linear(&mut ps, &wx, e, &mut rng);
        init_linear(&mut ps, &wh, h, &mut rng);
        init_linear(&mut ps, &head_w, h, &mut rng);
        GruPolicy { cfg, ps, wte, wx, wh, b, head_w, head_b }
    }

    /// Teacher-forced loss over one window: position t with loss_mask set
    /// predicts tokens[t] from the hidden state after tokens[..t].
    /// Returns (summed loss, targets, correct). Gradients accumulate.
    pub fn loss_and_grad(&self, ex: &SequenceExample, grad: &mut [f64]) -> (f64, usize, usize) {
        let GruCfg { vocab_size: v, embed: e, hidden: hd } = self.cfg;
        let t = ex.tokens.len();
        let p = &self.ps.data;
        // Forward: hidden trajectory and caches.
        let mut hs = vec![vec![0.0; hd]];
        let mut caches = Vec::with_capacity(t);
        let mut xs = Vec::with_capacity(t);
        for step in 0..t.saturating_sub(1) {
            let tok = ex.tokens[step] as usize;
            let x = p[self.wte.start + tok * e..self.wte.start + (tok + 1) * e].to_vec();
            let mut hn = vec![0.0; hd];
            let mut cache = GruCache::new(1, hd);
            nn::gru_forward(&mut hn, &mut cache, &x, &hs[step], &p[self.wx.clone()], &p[self.wh.clone()], &p[self.b.clone()], 1, e, hd);
            hs.push(hn);
            caches.push(cache);
            xs.push(x);
        }
        // Heads at loss positions.
        let positions: Vec<usize> = (1..t).filter(|&i| ex.loss_mask[i]).collect();
        let n = positions.len();
        if n == 0 {
            return (0.0, 0, 0);
        }
        let mut hidden = vec![0.0; n * hd];
        for (row, &pos) in positions.iter().enumerate() {
            hidden[row * hd..(row + 1) * hd].copy_from_slice(&hs[pos]);
        }
        let mut logits = vec![0.0; n * v];
        nn::matmul_forward(&mut logits, &hidden, &p[self.head_w.clone()], Some(&p[self.head_b.clone()]), n, hd, v);
        let ce_targets: Vec<(usize, u32)> =
            positions.iter().enumerate().map(|(row, &pos)| (row, ex.tokens[pos])).collect();
        let mut probs = vec![0.0; n * v];
        let mean_loss = nn::ce_forward(&mut probs, &logits, &ce_targets, v);
        let correct = (0..n)
            .filter(|&row| {
                let lrow = &logits[row * v..(row + 1) * v];
                crate::transformer::argmax(lrow) as u32 == ce_targets[row].1
            })
            .count();
        // Backward.
        let mut dlogits = vec![0.0; n * v];
        nn::ce_backward(&mut dlogits, &probs, &ce_targets, v);
        let mut dhidden = vec![0.0; n * hd];
        {
            let (mut dw, mut db) = (vec![0.0; self.head_w.len()], vec![0.0; v]);
            nn::matmul_backward(&mut dhidden, &mut dw, Some(&mut db), &dlogits, &hidden, &p[self.head_w.clone()], n, hd, v);
            grad[self.head_w.clone()].iter_mut().zip(&dw).for_each(|(g, d)| *g += d);
            grad[self.head_b.clone()].iter_mut().zip(&db).for_each(|(g, d)| *g += d);
        }
        let mut dh = vec![vec![0.0; hd]; t];
        for (row, &pos) in positions.iter().enumerate() {
            for k in 0..hd {
                dh[pos][k] += dhidden[row * hd + k];
            }
        }
        let (mut dwx, mut dwh, mut dbias) =
            (vec![0.0; self.wx.len()], vec![0.0; self.wh.len()], vec![0.0; 3 * hd]);
        for step in (0..t.saturating_sub(1)).rev() {
            if dh[step + 1].iter().all(|&g| g == 0.0) {
                continue;
            }
            let mut dx = vec![0.0; e];
            let mut dh_prev = vec![0.0; hd];
            nn::gru_backward(
                &mut dx, &mut dh_prev, &mut dwx, &mut dwh, &mut dbias,
                &dh[step + 1], &caches[step], &xs[step], &hs[step],
                &p[self.wx.clone()], &p[self.wh.clone()], 1, e, hd,
            );
            for k in 0..hd {
                dh[step][k] += dh_prev[k];
            }
            let tok = ex.tokens[step] as usize;
            let te = self.wte.start + tok * e;
            for k in 0..e {
                grad[te + k] += dx[k];
            }
        }
        grad[self.wx.clone()].iter_mut().zip(&dwx).for_each(|(g, d)| *g += d);
        grad[self.wh.clone()].iter_mut().zip(&dwh).for_each(|(g, d)| *g += d);
        grad[self.b.clone()].iter_mut().zip(&dbias).for_each(|(g, d)| *g += d);
        (mean_loss, n, correct)
    }
}

/// Streaming hidden state for rollouts.
pub struct GruState {
    pub h: Vec<f64>,
}

impl GruPolicy {
    pub fn begin(&self) -> GruState {
        GruState { h: vec![0.0; self.cfg.hidden] }
    }

    /// Consume one token.
    pub fn feed(&self, st: &mut GruState, token: u32) {
        let GruCfg { embed: e, hidden: hd, .. } = self.cfg;
        let p = &self.ps.data;
        let x = &p[self.wte.start + token as usize * e..self.wte.start + (token as usize + 1) * e];
        let mut hn = vec![0.0; hd];
        let mut cache = GruCache::new(1, hd);
        nn::gru_forward(&mut hn, &mut cache, x, &st.h, &p[self.wx.clone()], &p[self.wh.clone()], &p[self.b.clone()], 1, e, hd);
        st.h = hn;
    }

    /// Next-token logits from the current hidden state.
    pub fn logits(&self, st: &GruState) -> Vec<f64> {
        let GruCfg { vocab_size: v, hidden: hd, .. } = self.cfg;
        let p = &self.ps.data;
        let mut out = vec![0.0; v];
        nn::matmul_forward(&mut out, &st.h, &p[self.head_w.clone()], Some(&p[self.head_b.clone()]), 1, hd, v);
        out
    }
}
