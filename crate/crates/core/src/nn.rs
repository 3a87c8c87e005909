//! Dense f64 kernels with hand-written backward passes. Everything here is
//! shape-explicit and allocation-free in the hot path; models own their
//! activation buffers and call these in sequence.

/// out[b,o] = bias[o] + sum_c inp[b,c] * w[o,c]; inp is (B,C), w is (O,C).
pub fn matmul_forward(out: &mut [f64], inp: &[f64], w: &[f64], bias: Option<&[f64]>, b: usize, c: usize, o: usize) {
    for i in 0..b {
        let row = &inp[i * c..(i + 1) * c];
        let out_row = &mut out[i * o..(i + 1) * o];
        for j in 0..o {
            let wr = &w[j * c..(j + 1) * c];
            let mut acc = bias.map(|bs| bs[j]).unwrap_or(0.0);
            for k in 0..c {
                acc += row[k] * wr[k];
            }
            out_row[j] = acc;
        }
    }
}

/// Accumulates into dinp, dw, dbias.
pub fn matmul_backward(
    dinp: &mut [f64],
    dw: &mut [f64],
    dbias: Option<&mut [f64]>,
    dout: &[f64],
    inp: &[f64],
    w: &[f64],
    b: usize,
    c: usize,
    o: usize,
) {
    for i in 0..b {
        let drow = &dout[i * o..(i + 1) * o];
        let row = &inp[i * c..(i + 1) * c];
        let dinp_row = &mut dinp[i * c..(i + 1) * c];
        for j in 0..o {
            let g = drow[j];
            if g == 0.0 {
                continue;
            }
            let wr = &w[j * c..(j + 1) * c];
            let dwr = &mut dw[j * c..(j + 1) * c];
            for k in 0..c {
                dinp_row[k] += g * wr[k];
                dwr[k] += g * row[k];
            }
        }
    }
    if let Some(db) = dbias {
        for i in 0..b {
            for j in 0..o {
                db[j] += dout[i * o + j];
            }
        }
    }
}

/// Row-wise layer norm with gain and shift; caches mean and reciprocal std.
pub fn layernorm_forward(
    out: &mut [f64],
    mean: &mut [f64],
    rstd: &mut [f64],
    inp: &[f64],
    gain: &[f64],
    shift: &[f64],
    b: usize,
    c: usize,
) {
    const EPS: f64 = 1e-5;
    for i in 0..b {
        let row = &inp[i * c..(i + 1) * c];
        let m = row.iter().sum::<f64>() / c as f64;
        let v = row.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / c as f64;
        let rs = 1.0 / (v + EPS).sqrt();
        mean[i] = m;
        rstd[i] = rs;
        let out_row = &mut out[i * c..(i + 1) * c];
        for k in 0..c {
            out_row[k] = (row[k] - m) * rs * gain[k] + shift[k];
        }
    }
}

pub fn layernorm_backward(
    dinp: &mut [f64],
    dgain: &mut [f64],
    dshift: &mut [f64],
    dout: &[f64],
    inp: &[f64],
    gain: &[f64],
    mean: &[f64],
    rstd: &[f64],
    b: usize,
    c: usize,
) {
    for i in 0..b {
        let row = &inp[i * c..(i + 1) * c];
        let drow = &dout[i * c..(i + 1) * c];
        let dinp_row = &mut dinp[i * c..(i + 1) * c];
        let (m, rs) = (mean[i], rstd[i]);
        let mut dnorm_sum = 0.0;
        let mut dnorm_norm_sum = 0.0;
        for k in 0..c {
            let norm = (row[k] - m) * rs;
            let dnorm = drow[k] * gain[k];
            dnorm_sum += dnorm;
            dnorm_norm_sum += dnorm * norm;
        }
        for k in 0..c {
            let norm = (row[k] - m) * rs;
            let dnorm = drow[k] * gain[k];
            dgain[k] += drow[k] * norm;
            dshift[k] += drow[k];
            dinp_row[k] +=
                rs * (dnorm - dnorm_sum / c as f64 - norm * dnorm_norm_sum / c as f64);
        }
    }
}

pub fn silu_forward(out: &mut [f64], inp: &[f64]) {
    for (o, &x) in out.iter_mut().zip(inp) {
        *o = x / (1.0 + (-x).exp());
    }
}

pub fn silu_backward(dinp: &mut [f64], dout: &[f64], inp: &[f64]) {
    for ((di, &g), &x) in dinp.iter_mut().zip(dout).zip(inp) {
        let s = 1.0 / (1.0 + (-x).exp());
        *di += g * (s + x * s * (1.0 - s));
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Causal multi-head self-attention over a packed qkv buffer:
/// qkv is (T, 3C) laid out [q | k | v], out is (T, C), att caches the
/// post-softmax weights (heads, T, T) for the backward pass.
pub fn attention_forward(
    out: &mut [f64],
    att: &mut [f64],
    qkv: &[f64],
    t: usize,
    c: usize,
    nh: usize,
) {
    let hs = c / nh;
    let scale = 1.0 / (hs as f64).sqrt();
    for h in 0..nh {
        for tq in 0..t {
            let q = &qkv[tq * 3 * c + h * hs..tq * 3 * c + h * hs + hs];
            let arow = &mut att[h * t * t + tq * t..h * t * t + tq * t + t];
            let mut maxv = f64::NEG_INFINITY;
            for tk in 0..=tq {
                let k = &qkv[tk * 3 * c + c + h * hs..tk * 3 * c + c + h * hs + hs];
                let mut dot = 0.0;
                for i in 0..hs {
                    dot += q[i] * k[i];
                }
                let s = dot * scale;
                arow[tk] = s;
                if s > maxv {
                    maxv = s;
                }
            }
            let mut denom = 0.0;
            for tk in 0..=tq {
                let e = (arow[tk] - maxv).exp();
                arow[tk] = e;
                denom += e;
            }
            for tk in 0..=tq {
                arow[tk] /= denom;
            }
            for a in arow.iter_mut().skip(tq + 1) {
                *a = 0.0;
            }
            let orow = &mut out[tq * c + h * hs..tq * c + h * hs + hs];
            orow.fill(0.0);
            for tk in 0..=tq {
                let w = arow[tk];
                let v = &qkv[tk * 3 * c + 2 * c + h * hs..tk * 3 * c + 2 * c + h * hs + hs];
                for i in 0..hs {
                    orow[i] += w * v[i];
                }
            }
        }
    }
}

pub fn attention_backward(
    dqkv: &mut [f64],
    dout: &[f64],
    att: &[f64],
    qkv: &[f64],
    t: usize,
    c: usize,
    nh: usize,
) {
    let hs = c / nh;
    let scale = 1.0 / (hs as f64).sqrt();
    let mut datt = vec![0.0; t];
    for h in 0..nh {
        for tq in 0..t {
            let arow = &att[h * t * t + tq * t..h * t * t + tq * t + t];
            let dorow = &dout[tq * c + h * hs..tq * c + h * hs + hs];
            // dV and datt.
            for item in datt.iter_mut().take(tq + 1) {
                *item = 0.0;
            }
            for tk in 0..=tq {
                let v = &qkv[tk * 3 * c + 2 * c + h * hs..tk * 3 * c + 2 * c + h * hs + hs];
                let dv = tk * 3 * c + 2 * c + h * hs;
                let mut d = 0.0;
                for i in 0..hs {
                    d += dorow[i] * v[i];
                    dqkv[dv + i] += arow[tk] * dorow[i];
                }
                datt[tk] = d;
            }
            // Softmax backward into scores, then into q and k.
            let dot_da: f64 = (0..=tq).map(|tk| arow[tk] * datt[tk]).sum();
            let q = &qkv[tq * 3 * c + h * hs..tq * 3 * c + h * hs + hs];
            for tk in 0..=tq {
                let dscore = arow[tk] * (datt[tk] - dot_da) * scale;
                if dscore == 0.0 {
                    continue;
                }
                let k = &qkv[tk * 3 * c + c + h * hs..tk * 3 * c + c + h * hs + hs];
                let dq = tq * 3 * c + h * hs;
                let dk = tk * 3 * c + c + h * hs;
                for i in 0..hs {
                    dqkv[dq + i] += dscore * k[i];
                    dqkv[dk + i] += dscore * q[i];
                }
            }
        }
    }
}

/// Mean cross-entropy over selected rows of a logits matrix (B, V);
/// `targets` pairs row indices with target token ids. Returns the loss and
/// writes softmax probabilities for the backward pass.
pub fn ce_forward(probs: &mut [f64], logits: &[f64], targets: &[(usize, u32)], v: usize) -> f64 {
    let mut loss = 0.0;
    for (n, &(row, tgt)) in targets.iter().enumerate() {
        let lrow = &logits[row * v..(row + 1) * v];
        let prow = &mut probs[n * v..(n + 1) * v];
        let maxv = lrow.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for (p, &l) in prow.iter_mut().zip(lrow) {
            *p = (l - maxv).exp();
            denom += *p;
        }
        for p in prow.iter_mut() {
            *p /= denom;
        }
        loss -= prow[tgt as usize].ln();
    }
    loss / targets.len().max(1) as f64
}

pub fn ce_backward(dlogits: &mut [f64], probs: &[f64], targets: &[(usize, u32)], v: usize) {
    let inv_n = 1.0 / targets.len().max(1) as f64;
    for (n, &(row, tgt)) in targets.iter().enumerate() {
        let prow = &probs[n * v..(n + 1) * v];
        let drow = &mut dlogits[row * v..(row + 1) * v];
        for (d, &p) in drow.iter_mut().zip(prow) {
            *d += p * inv_n;
        }
        drow[tgt as usize] -= inv_n;
    }
}

/// Single GRU cell over a batch: x is (B, E), h is (B, H). Gate order in
/// the packed weight matrices is [reset | update | candidate], i.e.
/// wx is (3H, E), wh is (3H, H), bias is (3H).
/// Caches r, z, n and the candidate pre-activation hh = h @ wh_n + b.
pub struct GruCache {
    pub r: Vec<f64>,
    pub z: Vec<f64>,
    pub n: Vec<f64>,
    pub hh: Vec<f64>,
}

impl GruCache {
    pub fn new(b: usize, h: usize) -> Self {
        GruCache {
            r: vec![0.0; b * h],
            z: vec![0.0; b * h],
            n: vec![0.0; b * h],
            hh: vec![0.0; b * h],
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn gru_forward(
    h_next: &mut [f64],
    cache: &mut GruCache,
    x: &[f64],
    h_prev: &[f64],
    wx: &[f64],
    wh: &[f64],
    bias: &[f64],
    b: usize,
    e: usize,
    hd: usize,
) {
    for i in 0..b {
        let xr = &x[i * e..(i + 1) * e];
        let hr = &h_prev[i * hd..(i + 1) * hd];
        for j in 0..hd {
            let gate = |g: usize| -> (f64, f64) {
                let row = g * hd + j;
                let mut ax = bias[row];
                let wxr = &wx[row * e..(row + 1) * e];
                for k in 0..e {
                    ax += xr[k] * wxr[k];
                }
                let mut ah = 0.0;
                let whr = &wh[row * hd..(row + 1) * hd];
                for k in 0..hd {
                    ah += hr[k] * whr[k];
                }
                (ax, ah)
            };
            let (rx, rh) = gate(0);
            let r = sigmoid(rx + rh);
            let (zx, zh) = gate(1);
            let z = sigmoid(zx + zh);
            let (nx, nh) = gate(2);
            let n = (nx + r * nh).tanh();
            cache.r[i * hd + j] = r;
            cache.z[i * hd + j] = z;
            cache.n[i * hd + j] = n;
            cache.hh[i * hd + j] = nh;
            h_next[i * hd + j] = (1.0 - z) * n + z * hr[j];
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn gru_backward(
    dx: &mut [f64],
    dh_prev: &mut [f64],
    dwx: &mut [f64],
    dwh: &mut [f64],
    dbias: &mut [f64],
    dh_next: &[f64],
    cache: &GruCache,
    x: &[f64],
    h_prev: &[f64],
    wx: &[f64],
    wh: &[f64],
    b: usize,
    e: usize,
    hd: usize,
) {
    for i in 0..b {
        let xr = &x[i * e..(i + 1) * e];
        let hr = &h_prev[i * hd..(i + 1) * hd];
        let dxr_base = i * e;
        let dhr_base = i * hd;
        for j in 0..hd {
            let g = dh_next[i * hd + j];
            if g == 0.0 {
                continue;
            }
            let r = cache.r[i * hd + j];
            let z = cache.z[i * hd + j];
            let n = cache.n[i * hd + j];
            let nh = cache.hh[i * hd + j];
            // h' = (1 - z) n + z h.
            dh_prev[dhr_base + j] += g * z;
            let dn = g * (1.0 - z);
            let dz = g * (hr[j] - n);
            // n = tanh(nx + r * nh).
            let dpre_n = dn * (1.0 - n * n);
            let dr = dpre_n * nh;
            let dnh = dpre_n * r;
            let dpre_r = dr * r * (1.0 - r);
            let dpre_z = dz * z * (1.0 - z);
            for (gidx, dax, dah) in [
                (0usize, dpre_r, dpre_r),
                (1, dpre_z, dpre_z),
                (2, dpre_n, dnh),
            ] {
                let row = gidx * hd + j;
                dbias[row] += dax;
                let wxr = &wx[row * e..(row + 1) * e];
                let dwxr = &mut dwx[row * e..(row + 1) * e];
                for k in 0..e {
                    dwxr[k] += dax * xr[k];
                    dx[dxr_base + k] += dax * wxr[k];
                }
                let whr = &wh[row * hd..(row + 1) * hd];
                let dwhr = &mut dwh[row * hd..(row + 1) * hd];
                for k in 0..hd {
                    dwhr[k] += dah * hr[k];
                    dh_prev[dhr_base + k] += dah * whr[k];
                }
            }
        }
    }
}

/// Global l2 norm, used for gradient clipping.
pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Prng;

    const FD_EPS: f64 = 1e-5;
    const TOL: f64 = 1e-4;

    fn rand_vec(n: usize, rng: &mut Prng) -> Vec<f64> {
        (0..n).map(|_| rng.normal() * 0.5).collect()
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }

    /// Central-difference check of df/dx against an analytic gradient.
    fn check_grad(x: &mut [f64], grad: &[f64], mut f: impl FnMut(&[f64]) -> f64) {
        let mut rng = Prng::from_parts(77, 0);
        for _ in 0..12 {
            let i = rng.below(x.len());
            let orig = x[i];
            x[i] = orig + FD_EPS;
            let up = f(x);
            x[i] = orig - FD_EPS;
            let down = f(x);
            x[i] = orig;
            let fd = (up - down) / (2.0 * FD_EPS);
            assert!(
                rel_err(fd, grad[i]) <= TOL,
                "index {}: finite diff {} vs analytic {}",
                i,
                fd,
                grad[i]
            );
        }
    }

    fn scalar_loss(out: &[f64]) -> f64 {
        // Fixed quadratic head so the loss depends on every output.
        out.iter().enumerate().map(|(i, &x)| x * x * (1.0 + i as f64 * 0.01)).sum()
    }

    fn dscalar(out: &[f64]) -> Vec<f64> {
        out.iter().enumerate().map(|(i, &x)| 2.0 * x * (1.0 + i as f64 * 0.01)).collect()
    }

    #[test]
    fn matmul_gradients_match_finite_differences() {
        let (b, c, o) = (3, 5, 4);
        let mut rng = Prng::from_parts(1, 0);
        let mut inp = rand_vec(b * c, &mut rng);
        let mut w = rand_vec(o * c, &mut rng);
        let bias = rand_vec(o, &mut rng);
        let fwd = |inp: &[f64], w: &[f64]| {
            let mut out = vec![0.0; b * o];
            matmul_forward(&mut out, inp, w, Some(&bias), b, c, o);
            scalar_loss(&out)
        };
        let mut out = vec![0.0; b * o];
        matmul_forward(&mut out, &inp, &w, Some(&bias), b, c, o);
        let dout = dscalar(&out);
        let mut dinp = vec![0.0; b * c];
        let mut dw = vec![0.0; o * c];
        let mut db = vec![0.0; o];
        matmul_backward(&mut dinp, &mut dw, Some(&mut db), &dout, &inp, &w, b, c, o);
        let w2 = w.clone();
        check_grad(&mut inp, &dinp, |x| fwd(x, &w2));
        let inp2 = inp.clone();
        check_grad(&mut w, &dw, |x| fwd(&inp2, x));
    }

    #[test]
    fn layernorm_gradients_match_finite_differences() {
        let (b, c) = (4, 6);
        let mut rng = Prng::from_parts(2, 0);
        let mut inp = rand_vec(b * c, &mut rng);
        let mut gain: Vec<f64> = (0..c).map(|i| 1.0 + 0.1 * i as f64).collect();
        let shift = rand_vec(c, &mut rng);
        let fwd = |inp: &[f64], gain: &[f64]| {
            let mut out = vec![0.0; b * c];
            let mut mean = vec![0.0; b];
            let mut rstd = vec![0.0; b];
            layernorm_forward(&mut out, &mut mean, &mut rstd, inp, gain, &shift, b, c);
            scalar_loss(&out)
        };
        let mut out = vec![0.0; b * c];
        let mut mean = vec![0.0; b];
        let mut rstd = vec![0.0; b];
        layernorm_forward(&mut out, &mut mean, &mut rstd, &inp, &gain, &shift, b, c);
        let dout = dscalar(&out);
        let mut dinp = vec![0.0; b * c];
        let mut dgain = vec![0.0; c];
        let mut dshift = vec![0.0; c];
        layernorm_backward(
            &mut dinp, &mut dgain, &mut dshift, &dout, &inp, &gain, &mean, &rstd, b, c,
        );
        let g2 = gain.clone();
        check_grad(&mut inp, &dinp, |x| fwd(x, &g2));
        let i2 = inp.clone();
        check_grad(&mut gain, &dgain, |x| fwd(&i2, x));
    }

    #[test]
    fn silu_gradient_matches_finite_differences() {
        let mut rng = Prng::from_parts(3, 0);
        let mut inp = rand_vec(10, &mut rng);
        let fwd = |inp: &[f64]| {
            let mut out = vec![0.0; inp.len()];
            silu_forward(&mut out, inp);
            scalar_loss(&out)
        };
        let mut out = vec![0.0; inp.len()];
        silu_forward(&mut out, &inp);
        let dout = dscalar(&out);
        let mut dinp = vec![0.0; inp.len()];
        silu_backward(&mut dinp, &dout, &inp);
        check_grad(&mut inp, &dinp, fwd);
    }

    #[test]
    fn attention_gradient_matches_finite_differences() {
        let (t, c, nh) = (5, 8, 2);
        let mut rng = Prng::from_parts(4, 0);
        let mut qkv = rand_vec(t * 3 * c, &mut rng);
        let fwd = |qkv: &[f64]| {
            let mut out = vec![0.0; t * c];
            let mut att = vec![0.0; nh * t * t];
            attention_forward(&mut out, &mut att, qkv, t, c, nh);
            scalar_loss(&out)
        };
        let mut out = vec![0.0; t * c];
        let mut att = vec![0.0; nh * t * t];
        attention_forward(&mut out, &mut att, &qkv, t, c, nh);
        let dout = dscalar(&out);
        let mut dqkv = vec![0.0; t * 3 * c];
        attention_backward(&mut dqkv, &dout, &att, &qkv, t, c, nh);
        check_grad(&mut qkv, &dqkv, fwd);
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let (b, v) = (4, 7);
        let mut rng = Prng::from_parts(5, 0);
        let mut logits = rand_vec(b * v, &mut rng);
        let targets = vec![(0usize, 3u32), (2, 0), (3, 6)];
        let fwd = |logits: &[f64]| {
            let mut probs = vec![0.0; targets.len() * v];
            ce_forward(&mut probs, logits, &targets, v)
        };
        let mut probs = vec![0.0; targets.len() * v];
        ce_forward(&mut probs, &logits, &targets, v);
        let mut dlogits = vec![0.0; b * v];
        ce_backward(&mut dlogits, &probs, &targets, v);
        check_grad(&mut logits, &dlogits, fwd);
    }

    #[test]
    fn gru_gradients_match_finite_differences() {
        let (b, e, hd) = (2, 4, 5);
        let mut rng = Prng::from_parts(6, 0);
        let mut x = rand_vec(b * e, &mut rng);
        let mut h = rand_vec(b * hd, &mut rng);
        let mut wx = rand_vec(3 * hd * e, &mut rng);
        let mut wh = rand_vec(3 * hd * hd, &mut rng);
        let bias = rand_vec(3 * hd, &mut rng);
        let fwd = |x: &[f64], h: &[f64], wx: &[f64], wh: &[f64]| {
            let mut hn = vec![0.0; b * hd];
            let mut cache = GruCache::new(b, hd);
            gru_forward(&mut hn, &mut cache, x, h, wx, wh, &bias, b, e, hd);
            scalar_loss(&hn)
        };
        let mut hn = vec![0.0; b * hd];
        let mut cache = GruCache::new(b, hd);
        gru_forward(&mut hn, &mut cache, &x, &h, &wx, &wh, &bias, b, e, hd);
        let dout = dscalar(&hn);
        let mut dx = vec![0.0; b * e];
        let mut dh = vec![0.0; b * hd];
        let mut dwx = vec![0.0; 3 * hd * e];
        let mut dwh = vec![0.0; 3 * hd * hd];
        let mut dbias = vec![0.0; 3 * hd];
        gru_backward(
            &mut dx, &mut dh, &mut dwx, &mut dwh, &mut dbias, &dout, &cache, &x, &h, &wx, &wh,
            b, e, hd,
        );
        let (h2, wx2, wh2) = (h.clone(), wx.clone(), wh.clone());
        let x2 = x.clone();
        check_grad(&mut x, &dx, |p| fwd(p, &h2, &wx2, &wh2));
        check_grad(&mut h, &dh, |p| fwd(&x2, p, &wx2, &wh2));
        check_grad(&mut wx, &dwx, |p| fwd(&x2, &h2, p, &wh2));
        check_grad(&mut wh, &dwh, |p| fwd(&x2, &h2, &wx2, p));
    }

    #[test]
    fn attention_is_causal() {
        let (t, c, nh) = (6, 8, 2);
        let mut rng = Prng::from_parts(7, 0);
        let qkv = rand_vec(t * 3 * c, &mut rng);
        let mut out1 = vec![0.0; t * c];
        let mut att = vec![0.0; nh * t * t];
        attention_forward(&mut out1, &mut att, &qkv, t, c, nh);
        // Perturb the last timestep; earlier outputs must not move.
        let mut qkv2 = qkv.clone();
        for x in &mut qkv2[(t - 1) * 3 * c..] {
            *x += 1.0;
        }
        let mut out2 = vec![0.0; t * c];
        attention_forward(&mut out2, &mut att, &qkv2, t, c, nh);
        assert_eq!(&out1[..(t - 1) * c], &out2[..(t - 1) * c]);
    }
}
