//! Decoder-only transformer for the scratchpad-conditioned policy:
//! pre-norm blocks, SiLU MLP, learned positions, output head tied to the
//! token embeddings. Tying matters here: the policy constantly copies
//! coordinate tokens from the observation into the scratchpad, and with a
//! tied head an attention edge to the source token already produces a
//! high logit for that token. Numeric tokens get a multi-frequency
//! sinusoidal embedding of their value so coordinate arithmetic is
//! learnable from few examples.

use crate::model::{fill, init_linear, ParamSet};
use crate::nn;
use crate::rng::Prng;
use crate::vocab::Vocab;
use std::ops::Range;

#[derive(Debug, Clone, Copy)]
pub struct TransformerCfg {
    pub vocab_size: usize,
    pub dim: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub max_t: usize,
}

impl TransformerCfg {
    pub fn standard(vocab_size: usize) -> Self {
        TransformerCfg { vocab_size, dim: 64, n_heads: 4, n_layers: 3, max_t: 1024 }
    }
}

struct LayerParams {
    ln1_g: Range<usize>,
    ln1_b: Range<usize>,
    qkv_w: Range<usize>,
    qkv_b: Range<usize>,
    proj_w: Range<usize>,
    proj_b: Range<usize>,
    ln2_g: Range<usize>,
    ln2_b: Range<usize>,
    fc_w: Range<usize>,
    fc_b: Range<usize>,
    fc2_w: Range<usize>,
    fc2_b: Range<usize>,
}

pub struct Transformer {
    pub cfg: TransformerCfg,
    pub ps: ParamSet,
    wte: Range<usize>,
    wpe: Range<usize>,
    layers: Vec<LayerParams>,
    lnf_g: Range<usize>,
    lnf_b: Range<usize>,
}

/// Normalized numeric value of a token, if it has one.
fn token_value(v: &Vocab, id: u32) -> Option<f64> {
    if let Some(c) = v.coord_of(id) {
        return Some(c as f64 / 100.0);
    }
    if let Some(a) = v.angle_of(id) {
        return Some((a as f64 + 314.0) / 628.0);
    }
    if let Some(b) = v.bin_of(id) {
        return Some(b as f64 / 32.0);
    }
    if let Some(l) = v.level_of(id) {
        return Some(l as f64 / 9.0);
    }
    v.grip_of(id).map(|g| if g { 1.0 } else { 0.0 })
}

impl Transformer {
    pub fn new(cfg: TransformerCfg, vocab: &Vocab, seed: u64) -> Self {
        let (c, v) = (cfg.dim, cfg.vocab_size);
        let mut ps = ParamSet::default();
        let wte = ps.alloc("wte", v * c);
        let wpe = ps.alloc("wpe", cfg.max_t * c);
        let mut layers = Vec::new();
        for l in 0..cfg.n_layers {
            let n = |s: &str| format!("l{l}.{s}");
            layers.push(LayerParams {
                ln1_g: ps.alloc(&n("ln1_g"), c),
                ln1_b: ps.alloc(&n("ln1_b"), c),
                qkv_w: ps.alloc(&n("qkv_w"), 3 * c * c),
                qkv_b: ps.alloc(&n("qkv_b"), 3 * c),
                proj_w: ps.alloc(&n("proj_w"), c * c),
                proj_b: ps.alloc(&n("proj_b"), c),
                ln2_g: ps.alloc(&n("ln2_g"), c),
                ln2_b: ps.alloc(&n("ln2_b"), c),
                fc_w: ps.alloc(&n("fc_w"), 4 * c * c),
                fc_b: ps.alloc(&n("fc_b"), 4 * c),
                fc2_w: ps.alloc(&n("fc2_w"), c * 4 * c),
                fc2_b: ps.alloc(&n("fc2_b"), c),
            });
        }
        let lnf_g = ps.alloc("lnf_g", c);
        let lnf_b = ps.alloc("lnf_b", c);

        let mut rng = Prng::from_parts(seed, 0x22);
        for tok in 0..v as u32 {
            let row = wte.start + tok as usize * c;
            match token_value(vocab, tok) {
                Some(u) => {
                    for k in 0..c {
                        let freq = 1.5f64.powi((k / 2) as i32);
                        let phase = u * freq * std::f64::consts::TAU;
                        ps.data[row + k] = 0.3 * if k % 2 == 0 { phase.sin() } else { phase.cos() }
                            + 0.02 * rng.normal();
                    }
                }
                None => {
                    for k in 0..c {
                        ps.data[row + k] = 0.1 * rng.normal();
                    }
                }
            }
        }
        for x in &mut ps.data[wpe.clone()] {
            *x = 0.02 * rng.normal();
        }
        for lp in &layers {
            fill(&mut ps, &lp.ln1_g, 1.0);
            fill(&mut ps, &lp.ln2_g, 1.0);
            init_linear(&mut ps, &lp.qkv_w, c, &mut rng);
            init_linear(&mut ps, &lp.proj_w, c, &mut rng);
            init_linear(&mut ps, &lp.fc_w, c, &mut rng);
            init_linear(&mut ps, &lp.fc2_w, 4 * c, &mut rng);
        }
        fill(&mut ps, &lnf_g, 1.0);
        Transformer { cfg, ps, wte, wpe, layers, lnf_g, lnf_b }
    }
}

/// All forward activations for one sequence, kept for the backward pass.
struct Acts {
    t: usize,
    emb: Vec<f64>,
    layers: Vec<LayerActs>,
    lnf_out: Vec<f64>,
    lnf_mean: Vec<f64>,
    lnf_rstd: Vec<f64>,
}

struct LayerActs {
    input: Vec<f64>,
    ln1_out: Vec<f64>,
    ln1_mean: Vec<f64>,
    ln1_rstd: Vec<f64>,
    qkv: Vec<f64>,
    att: Vec<f64>,
    att_out: Vec<f64>,
    res1: Vec<f64>,
    ln2_out: Vec<f64>,
    ln2_mean: Vec<f64>,
    ln2_rstd: Vec<f64>,
    fc: Vec<f64>,
    silu: Vec<f64>,
}

impl Transformer {
    fn forward(&self, tokens: &[u32]) -> Acts {
        let TransformerCfg { dim: c, n_heads: nh, .. } = self.cfg;
        let t = tokens.len();
        assert!(t <= self.cfg.max_t, "sequence of {} exceeds the {} context", t, self.cfg.max_t);
        let p = &self.ps.data;
        let mut emb = vec![0.0; t * c];
        for (i, &tok) in tokens.iter().enumerate() {
            let te = self.wte.start + tok as usize * c;
            let pe = self.wpe.start + i * c;
            for k in 0..c {
                emb[i * c + k] = p[te + k] + p[pe + k];
            }
        }
        let mut x = emb.clone();
        let mut layer_acts = Vec::with_capacity(self.layers.len());
        for lp in &self.layers {
            let mut a = LayerActs {
                input: x.clone(),
                ln1_out: vec![0.0; t * c],
                ln1_mean: vec![0.0; t],
                ln1_rstd: vec![0.0; t],
                qkv: vec![0.0; t * 3 * c],
                att: vec![0.0; nh * t * t],
                att_out: vec![0.0; t * c],
                res1: vec![0.0; t * c],
                ln2_out: vec![0.0; t * c],
                ln2_mean: vec![0.0; t],
                ln2_rstd: vec![0.0; t],
                fc: vec![0.0; t * 4 * c],
                silu: vec![0.0; t * 4 * c],
            };
            nn::layernorm_forward(
                &mut a.ln1_out, &mut a.ln1_mean, &mut a.ln1_rstd, &a.input,
                &p[lp.ln1_g.clone()], &p[lp.ln1_b.clone()], t, c,
            );
            nn::matmul_forward(&mut a.qkv, &a.ln1_out, &p[lp.qkv_w.clone()], Some(&p[lp.qkv_b.clone()]), t, c, 3 * c);
            nn::attention_forward(&mut a.att_out, &mut a.att, &a.qkv, t, c, nh);
            let mut proj = vec![0.0; t * c];
            nn::matmul_forward(&mut proj, &a.att_out, &p[lp.proj_w.clone()], Some(&p[lp.proj_b.clone()]), t, c, c);
            for k in 0..t * c {
                a.res1[k] = a.input[k] + proj[k];
            }
            nn::layernorm_forward(
                &mut a.ln2_out, &mut a.ln2_mean, &mut a.ln2_rstd, &a.res1,
                &p[lp.ln2_g.clone()], &p[lp.ln2_b.clone()], t, c,
            );
            nn::matmul_forward(&mut a.fc, &a.ln2_out, &p[lp.fc_w.clone()], Some(&p[lp.fc_b.clone()]), t, c, 4 * c);
            nn::silu_forward(&mut a.silu, &a.fc);
            let mut fc2 = vec![0.0; t * c];
            nn::matmul_forward(&mut fc2, &a.silu, &p[lp.fc2_w.clone()], Some(&p[lp.fc2_b.clone()]), t, 4 * c, c);
            x = a.res1.iter().zip(&fc2).map(|(r, f)| r + f).collect();
            layer_acts.push(a);
        }
        let mut lnf_out = vec![0.0; t * c];
        let mut lnf_mean = vec![0.0; t];
        let mut lnf_rstd = vec![0.0; t];
        nn::layernorm_forward(
            &mut lnf_out, &mut lnf_mean, &mut lnf_rstd, &x,
            &p[self.lnf_g.clone()], &p[self.lnf_b.clone()], t, c,
        );
        // Reuse the input slot of each layer as its residual stream value;
        // the final stream is only needed through lnf, whose input is x.
        layer_acts.push(LayerActs {
            input: x,
            ln1_out: vec![],
            ln1_mean: vec![],
            ln1_rstd: vec![],
            qkv: vec![],
            att: vec![],
            att_out: vec![],
            res1: vec![],
            ln2_out: vec![],
            ln2_mean: vec![],
            ln2_rstd: vec![],
            fc: vec![],
            silu: vec![],
        });
        Acts { t, emb, layers: layer_acts, lnf_out, lnf_mean, lnf_rstd }
    }

    /// Logits (rows.len(), V) at the requested positions.
    pub fn logits_at(&self, tokens: &[u32], rows: &[usize]) -> Vec<f64> {
        let acts = self.forward(tokens);
        self.head(&acts, rows)
    }

    fn head(&self, acts: &Acts, rows: &[usize]) -> Vec<f64> {
        let (c, v) = (self.cfg.dim, self.cfg.vocab_size);
        let mut gathered = vec![0.0; rows.len() * c];
        for (n, &r) in rows.iter().enumerate() {
            gathered[n * c..(n + 1) * c].copy_from_slice(&acts.lnf_out[r * c..(r + 1) * c]);
        }
        let mut logits = vec![0.0; rows.len() * v];
        nn::matmul_forward(&mut logits, &gathered, &self.ps.data[self.wte.clone()], None, rows.len(), c, v);
        logits
    }

    /// Teacher-forced loss: each (pos, tok) pair asks the model to predict
    /// `tok` from the prefix `tokens[..pos]`. Returns (mean loss, number
    /// of argmax-correct targets). Gradients accumulate into `grad`.
    pub fn loss_and_grad(
        &self,
        tokens: &[u32],
        targets: &[(usize, u32)],
        grad: &mut [f64],
    ) -> (f64, usize) {
        let TransformerCfg { dim: c, n_heads: nh, vocab_size: v, .. } = self.cfg;
        let acts = self.forward(tokens);
        let t = acts.t;
        let p = &self.ps.data;
        let rows: Vec<usize> = targets.iter().map(|&(pos, _)| pos - 1).collect();
        let logits = self.head(&acts, &rows);
        let ce_targets: Vec<(usize, u32)> =
            targets.iter().enumerate().map(|(n, &(_, tok))| (n, tok)).collect();
        let mut probs = vec![0.0; targets.len() * v];
        let loss = nn::ce_forward(&mut probs, &logits, &ce_targets, v);
        let correct = (0..targets.len())
            .filter(|&n| {
                let row = &logits[n * v..(n + 1) * v];
                let best = (0..v).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
                best as u32 == targets[n].1
            })
            .count();

        let mut dlogits = vec![0.0; targets.len() * v];
        nn::ce_backward(&mut dlogits, &probs, &ce_targets, v);
        let mut gathered = vec![0.0; rows.len() * c];
        for (n, &r) in rows.iter().enumerate() {
            gathered[n * c..(n + 1) * c].copy_from_slice(&acts.lnf_out[r * c..(r + 1) * c]);
        }
        let mut dgathered = vec![0.0; rows.len() * c];
        {
            // The tied head contributes to the embedding gradient.
            let mut dw = vec![0.0; self.wte.len()];
            nn::matmul_backward(&mut dgathered, &mut dw, None, &dlogits, &gathered, &p[self.wte.clone()], rows.len(), c, v);
            grad[self.wte.clone()].iter_mut().zip(&dw).for_each(|(g, d)| *g += d);
        }
        let mut dlnf_out = vec![0.0; t * c];
        for (n, &r) in rows.iter().enumerate() {
            for k in 0..c {
                dlnf_out[r * c + k] += dgathered[n * c + k];
            }
        }
        let mut dx = vec![0.0; t * c];
        {
            let (mut dg, mut db) = (vec![0.0; c], vec![0.0; c]);
            nn::layernorm_backward(
                &mut dx, &mut dg, &mut db, &dlnf_out,
                &acts.layers[self.layers.len()].input,
                &p[self.lnf_g.clone()], &acts.lnf_mean, &acts.lnf_rstd, t, c,
            );
            grad[self.lnf_g.clone()].iter_mut().zip(&dg).for_each(|(g, d)| *g += d);
            grad[self.lnf_b.clone()].iter_mut().zip(&db).for_each(|(g, d)| *g += d);
        }
        for (li, lp) in self.layers.iter().enumerate().rev() {
            let a = &acts.layers[li];
            // dx currently holds the gradient of this layer's output
            // (res1 + fc2), which flows to both summands.
            let mut dsilu = vec![0.0; t * 4 * c];
            {
                let (mut dw, mut db) = (vec![0.0; lp.fc2_w.len()], vec![0.0; c]);
                nn::matmul_backward(&mut dsilu, &mut dw, Some(&mut db), &dx, &a.silu, &p[lp.fc2_w.clone()], t, 4 * c, c);
                grad[lp.fc2_w.clone()].iter_mut().zip(&dw).for_each(|(g, d)| *g += d);
                grad[lp.fc2_b.clone()].iter_mut().zip(&db).for_each(|(g, d)| *g += d);
            }
            let mut dfc = vec![0.0; t * 4 * c];
            nn::silu_backward(&mut dfc, &dsilu, &a.fc);
            let mut dln2 = vec![0.0; t * c];
            {
                let (mut dw, mut db) = (vec![0.0; lp.fc_w.len()], vec![0.0; 4 * c]);
                nn::matmul_backward(&mut dln2, &mut dw, Some(&mut db), &dfc, &a.ln2_out, &p[lp.fc_w.clone()], t, c, 4 * c);
                grad[lp.fc_w.clone()].iter_mut().zip(&dw).for_each(|(g, d)| *g += d);
                grad[lp.fc_b.clone()].iter_mut().zip(&db).for_each(|(g, d)| *g += d);
            }
            // dres1 = dx (residual) + layernorm backward of dln2.
            let mut dres1 = dx.clone();
            {
                let (mut dg, mut db) = (vec![0.0; c], vec![0.0; c]);
                nn::layernorm_backward(
                    &mut dres1, &mut dg, &mut db, &dln2, &a.res1,
                    &p[lp.ln2_g.clone()], &a.ln2_mean, &a.ln2_rstd, t, c,
                );
                grad[lp.ln2_g.clone()].iter_mut().zip(&dg).for_each(|(g, d)| *g += d);
                grad[lp.ln2_b.clone()].iter_mut().zip(&db).for_each(|(g, d)| *g += d);
            }
            let mut datt_out = vec![0.0; t * c];
            {
                let (mut dw, mut db) = (vec![0.0; lp.proj_w.len()], vec![0.0; c]);
                nn::matmul_backward(&mut datt_out, &mut dw, Some(&mut db), &dres1, &a.att_out, &p[lp.proj_w.clone()], t, c, c);
                grad[lp.proj_w.clone()].iter_mut().zip(&dw).for_each(|(g, d)| *g += d);
                grad[lp.proj_b.clone()].iter_mut().zip(&db).for_each(|(g, d)| *g += d);
            }
            let mut dqkv = vec![0.0; t * 3 * c];
            nn::attention_backward(&mut dqkv, &datt_out, &a.att, &a.qkv, t, c, nh);
            let mut dln1 = vec![0.0; t * c];
            {
                let (mut dw, mut db) = (vec![0.0; lp.qkv_w.len()], vec![0.0; 3 * c]);
                nn::matmul_backward(&mut dln1, &mut dw, Some(&mut db), &dqkv, &a.ln1_out, &p[lp.qkv_w.clone()], t, c, 3 * c);
                grad[lp.qkv_w.clone()].iter_mut().zip(&dw).for_each(|(g, d)| *g += d);
                grad[lp.qkv_b.clone()].iter_mut().zip(&db).for_each(|(g, d)| *g += d);
            }
            // dinput = dres1 (residual) + layernorm backward of dln1.
            let mut dinput = dres1;
            {
                let (mut dg, mut db) = (vec![0.0; c], vec![0.0; c]);
                nn::layernorm_backward(
                    &mut dinput, &mut dg, &mut db, &dln1, &a.input,
                    &p[lp.ln1_g.clone()], &a.ln1_mean, &a.ln1_rstd, t, c,
                );
                grad[lp.ln1_g.clone()].iter_mut().zip(&dg).for_each(|(g, d)| *g += d);
                grad[lp.ln1_b.clone()].iter_mut().zip(&db).for_each(|(g, d)| *g += d);
            }
            dx = dinput;
        }
        for (i, &tok) in tokens.iter().enumerate() {
            let te = self.wte.start + tok as usize * c;
            let pe = self.wpe.start + i * c;
            for k in 0..c {
                grad[te + k] += dx[i * c + k];
                grad[pe + k] += dx[i * c + k];
            }
        }
        let _ = &acts.emb;
        (loss, correct)
    }
}

/// Incremental decoding state: cached keys and values per layer, plus the
/// residual stream of the newest position for on-demand logits.
pub struct DecodeState {
    k: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    last_x: Vec<f64>,
    len: usize,
}

impl DecodeState {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

impl Transformer {
    pub fn begin(&self) -> DecodeState {
        DecodeState {
            k: vec![Vec::new(); self.cfg.n_layers],
            v: vec![Vec::new(); self.cfg.n_layers],
            last_x: Vec::new(),
            len: 0,
        }
    }

    /// Feed one token, updating the cache. Logits are computed lazily by
    /// [`Transformer::logits`], which rollouts only call at generation
    /// positions.
    pub fn feed(&self, st: &mut DecodeState, token: u32) {
        let TransformerCfg { dim: c, n_heads: nh, .. } = self.cfg;
        assert!(st.len < self.cfg.max_t, "decode past the {} context", self.cfg.max_t);
        let hs = c / nh;
        let scale = 1.0 / (hs as f64).sqrt();
        let p = &self.ps.data;
        let pos = st.len;
        let mut x = vec![0.0; c];
        let te = self.wte.start + token as usize * c;
        let pe = self.wpe.start + pos * c;
        for k in 0..c {
            x[k] = p[te + k] + p[pe + k];
        }
        for (li, lp) in self.layers.iter().enumerate() {
            let mut ln1 = vec![0.0; c];
            let (mut m, mut r) = (vec![0.0], vec![0.0]);
            nn::layernorm_forward(&mut ln1, &mut m, &mut r, &x, &p[lp.ln1_g.clone()], &p[lp.ln1_b.clone()], 1, c);
            let mut qkv = vec![0.0; 3 * c];
            nn::matmul_forward(&mut qkv, &ln1, &p[lp.qkv_w.clone()], Some(&p[lp.qkv_b.clone()]), 1, c, 3 * c);
            st.k[li].extend_from_slice(&qkv[c..2 * c]);
            st.v[li].extend_from_slice(&qkv[2 * c..]);
            let mut att_out = vec![0.0; c];
            for h in 0..nh {
                let q = &qkv[h * hs..h * hs + hs];
                let mut scores = Vec::with_capacity(pos + 1);
                let mut maxv = f64::NEG_INFINITY;
                for tk in 0..=pos {
                    let krow = &st.k[li][tk * c + h * hs..tk * c + h * hs + hs];
                    let dot: f64 = q.iter().zip(krow).map(|(a, b)| a * b).sum();
                    let s = dot * scale;
                    maxv = maxv.max(s);
                    scores.push(s);
                }
                let mut denom = 0.0;
                for s in &mut scores {
                    *s = (*s - maxv).exp();
                    denom += *s;
                }
                for (tk, s) in scores.iter().enumerate() {
                    let w = s / denom;
                    let vrow = &st.v[li][tk * c + h * hs..tk * c + h * hs + hs];
                    for i in 0..hs {
                        att_out[h * hs + i] += w * vrow[i];
                    }
                }
            }
            let mut proj = vec![0.0; c];
            nn::matmul_forward(&mut proj, &att_out, &p[lp.proj_w.clone()], Some(&p[lp.proj_b.clone()]), 1, c, c);
            let res1: Vec<f64> = x.iter().zip(&proj).map(|(a, b)| a + b).collect();
            let mut ln2 = vec![0.0; c];
            nn::layernorm_forward(&mut ln2, &mut m, &mut r, &res1, &p[lp.ln2_g.clone()], &p[lp.ln2_b.clone()], 1, c);
            let mut fc = vec![0.0; 4 * c];
            nn::matmul_forward(&mut fc, &ln2, &p[lp.fc_w.clone()], Some(&p[lp.fc_b.clone()]), 1, c, 4 * c);
            let mut silu = vec![0.0; 4 * c];
            nn::silu_forward(&mut silu, &fc);
            let mut fc2 = vec![0.0; c];
            nn::matmul_forward(&mut fc2, &silu, &p[lp.fc2_w.clone()], Some(&p[lp.fc2_b.clone()]), 1, 4 * c, c);
            x = res1.iter().zip(&fc2).map(|(a, b)| a + b).collect();
        }
        st.last_x = x;
        st.len += 1;
    }

    /// Next-token logits for the most recently fed position.
    pub fn logits(&self, st: &DecodeState) -> Vec<f64> {
        let TransformerCfg { dim: c, vocab_size: vs, .. } = self.cfg;
        assert!(!st.last_x.is_empty(), "logits before any token was fed");
        let p = &self.ps.data;
        let mut lnf = vec![0.0; c];
        let (mut m, mut r) = (vec![0.0], vec![0.0]);
        nn::layernorm_forward(&mut lnf, &mut m, &mut r, &st.last_x, &p[self.lnf_g.clone()], &p[self.lnf_b.clone()], 1, c);
        let mut logits = vec![0.0; vs];
        nn::matmul_forward(&mut logits, &lnf, &p[self.wte.clone()], None, 1, c, vs);
        logits
    }

    /// Feed one token and return next-token logits.
    pub fn decode_step(&self, st: &mut DecodeState, token: u32) -> Vec<f64> {
        self.feed(st, token);
        self.logits(st)
    }
}

pub fn argmax(row: &[f64]) -> usize {
    (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap()
}
