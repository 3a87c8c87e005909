//! Shared parameter plumbing and the stateless MLP baseline.

use crate::dataset::FEATURE_DIM;
use crate::nn;
use crate::rng::Prng;
use crate::vocab::ACTION_BINS;
use std::ops::Range;

/// Flat f64 parameter vector with named, shaped segments. Optimizer state
/// and gradients are parallel vectors of the same length.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    pub data: Vec<f64>,
    segments: Vec<(String, Range<usize>)>,
}

impl ParamSet {
    pub fn alloc(&mut self, name: &str, n: usize) -> Range<usize> {
        let start = self.data.len();
        self.data.resize(start + n, 0.0);
        let r = start..start + n;
        self.segments.push((name.to_string(), r.clone()));
        r
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn segments(&self) -> impl Iterator<Item = (&str, Range<usize>)> {
        self.segments.iter().map(|(n, r)| (n.as_str(), r.clone()))
    }
}

/// Fan-in scaled normal init for a (rows, cols) weight.
pub fn init_linear(ps: &mut ParamSet, r: &Range<usize>, cols: usize, rng: &mut Prng) {
    let scale = 1.0 / (cols as f64).sqrt();
    for x in &mut ps.data[r.clone()] {
        *x = rng.normal() * scale;
    }
}

pub fn fill(ps: &mut ParamSet, r: &Range<usize>, v: f64) {
    for x in &mut ps.data[r.clone()] {
        *x = v;
    }
}

pub const ACTION_DIMS: usize = 5;
pub const ACTION_LOGITS: usize = ACTION_DIMS * ACTION_BINS;

/// Reactive baseline: two hidden layers over the flat observation
/// features, five independent 33-way softmax heads.
pub struct StatelessMlp {
    pub ps: ParamSet,
    hidden: usize,
    w1: Range<usize>,
    b1: Range<usize>,
    w2: Range<usize>,
    b2: Range<usize>,
    w3: Range<usize>,
    b3: Range<usize>,
}

impl StatelessMlp {
    pub fn new(hidden: usize, seed: u64) -> Self {
        let mut ps = ParamSet::default();
        let w1 = ps.alloc("w1", hidden * FEATURE_DIM);
        let b1 = ps.alloc("b1", hidden);
        let w2 = ps.alloc("w2", hidden * hidden);
        let b2 = ps.alloc("b2", hidden);
        let w3 = ps.alloc("w3", ACTION_LOGITS * hidden);
        let b3 = ps.alloc("b3", ACTION_LOGITS);
        let mut rng = Prng::from_parts(seed, 0x11);
        init_linear(&mut ps, &w1, FEATURE_DIM, &mut rng);
        init_linear(&mut ps, &w2, hidden, &mut rng);
        init_linear(&mut ps, &w3, hidden, &mut rng);
        StatelessMlp { ps, hidden, w1, b1, w2, b2, w3, b3 }
    }

    /// Logits for a batch of feature rows, flattened (B, 165).
    pub fn forward(&self, feats: &[f64], b: usize) -> Vec<f64> {
        let h = self.hidden;
        let p = &self.ps.data;
        let mut a1 = vec![0.0; b * h];
        nn::matmul_forward(&mut a1, feats, &p[self.w1.clone()], Some(&p[self.b1.clone()]), b, FEATURE_DIM, h);
        let mut s1 = vec![0.0; b * h];
        nn::silu_forward(&mut s1, &a1);
        let mut a2 = vec![0.0; b * h];
        nn::matmul_forward(&mut a2, &s1, &p[self.w2.clone()], Some(&p[self.b2.clone()]), b, h, h);
        let mut s2 = vec![0.0; b * h];
        nn::silu_forward(&mut s2, &a2);
        let mut out = vec![0.0; b * ACTION_LOGITS];
        nn::matmul_forward(&mut out, &s2, &p[self.w3.clone()], Some(&p[self.b3.clone()]), b, h, ACTION_LOGITS);
        out
    }

    /// Mean cross-entropy over all five action dimensions of a batch;
    /// accumulates into grad (same length as params).
    pub fn loss_and_grad(
        &self,
        feats: &[f64],
        bins: &[[u8; 5]],
        grad: &mut [f64],
    ) -> f64 {
        let b = bins.len();
        let h = self.hidden;
        let p = &self.ps.data;
        let mut a1 = vec![0.0; b * h];
        nn::matmul_forward(&mut a1, feats, &p[self.w1.clone()], Some(&p[self.b1.clone()]), b, FEATURE_DIM, h);
        let mut s1 = vec![0.0; b * h];
        nn::silu_forward(&mut s1, &a1);
        let mut a2 = vec![0.0; b * h];
        nn::matmul_forward(&mut a2, &s1, &p[self.w2.clone()], Some(&p[self.b2.clone()]), b, h, h);
        let mut s2 = vec![0.0; b * h];
        nn::silu_forward(&mut s2, &a2);
        let mut out = vec![0.0; b * ACTION_LOGITS];
        nn::matmul_forward(&mut out, &s2, &p[self.w3.clone()], Some(&p[self.b3.clone()]), b, h, ACTION_LOGITS);
        // Each sample contributes five 33-way rows; the logits layout is
        // already (B * 5, 33) row-major.
        let targets: Vec<(usize, u32)> = bins
            .iter()
            .enumerate()
            .flat_map(|(i, bs)| {
                bs.iter().enumerate().map(move |(d, &bin)| (i * ACTION_DIMS + d, bin as u32))
            })
            .collect();
        let mut probs = vec![0.0; targets.len() * ACTION_BINS];
        let loss = nn::ce_forward(&mut probs, &out, &targets, ACTION_BINS);
        let mut dout = vec![0.0; b * ACTION_LOGITS];
        nn::ce_backward(&mut dout, &probs, &targets, ACTION_BINS);
        let mut ds2 = vec![0.0; b * h];
        {
            let (dw3, db3) = (self.w3.clone(), self.b3.clone());
            let (mut dw, mut db) = (vec![0.0; dw3.len()], vec![0.0; db3.len()]);
            nn::matmul_backward(&mut ds2, &mut dw, Some(&mut db), &dout, &s2, &p[dw3.clone()], b, h, ACTION_LOGITS);
            grad[dw3].iter_mut().zip(&dw).for_each(|(g, d)| *g += d);
            grad[db3].iter_mut().zip(&db).for_each(|(g, d)| *g += d);
        }
        let mut da2 = vec![0.0; b * h];
        nn::silu_backward(&mut da2, &ds2, &a2);
        let mut ds1 = vec![0.0; b * h];
        {
            let (dw2, db2) = (self.w2.clone(), self.b2.clone());
            let (mut dw, mut db) = (vec![0.0; dw2.len()], vec![0.0; db2.len()]);
            nn::matmul_backward(&mut ds1, &mut dw, Some(&mut db), &da2, &s1, &p[dw2.clone()], b, h, h);
            grad[dw2].iter_mut().zip(&dw).for_each(|(g, d)| *g += d);
            grad[db2].iter_mut().zip(&db).for_each(|(g, d)| *g += d);
        }
        let mut da1 = vec![0.0; b * h];
        nn::silu_backward(&mut da1, &ds1, &a1);
        {
            let (dw1, db1) = (self.w1.clone(), self.b1.clone());
            let (mut dw, mut db) = (vec![0.0; dw1.len()], vec![0.0; db1.len()]);
            let mut dfeat = vec![0.0; b * FEATURE_DIM];
            nn::matmul_backward(&mut dfeat, &mut dw, Some(&mut db), &da1, feats, &p[dw1.clone()], b, FEATURE_DIM, h);
            grad[dw1].iter_mut().zip(&dw).for_each(|(g, d)| *g += d);
            grad[db1].iter_mut().zip(&db).for_each(|(g, d)| *g += d);
        }
        loss
    }

    /// Greedy action bins for one feature row.
    pub fn act(&self, feats: &[f64]) -> [u8; 5] {
        let logits = self.forward(feats, 1);
        let mut out = [0u8; 5];
        for d in 0..ACTION_DIMS {
            let row = &logits[d * ACTION_BINS..(d + 1) * ACTION_BINS];
            let mut best = 0;
            for (i, &x) in row.iter().enumerate() {
                if x > row[best] {
                    best = i;
                }
            }
            out[d] = best as u8;
        }
        out
    }
}
