//! Behavior-cloning training: Adam with bias correction, global-norm
//! gradient clipping, heldout metrics, plateau-based early stopping, and
//! bit-exact checkpoints.

use crate::dataset::{encode_sequence, encode_slices, sample_window, SequenceExample, SliceExample, SliceKind};
use crate::model::StatelessMlp;
use crate::nn::l2_norm;
use crate::oracle::Trajectory;
use crate::recurrent::{GruCfg, GruPolicy};
use crate::rng::Prng;
use crate::sim::SimConfig;
use crate::transformer::{Transformer, TransformerCfg};
use crate::vocab::Vocab;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch: usize,
    pub max_steps: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip: f64,
    pub eval_every: usize,
    pub window: usize,
    pub heldout_frac: f64,
    /// Stop once heldout token accuracy reaches this level.
    pub target_acc: f64,
    /// Stop after this many evals without heldout improvement.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 3e-4,
            batch: 16,
            max_steps: 20_000,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip: 10.0,
            eval_every: 250,
            window: 64,
            heldout_frac: 0.05,
            target_acc: 0.995,
            patience: 8,
            seed: 0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("non-finite loss or gradient at step {step} (seed {seed})")]
    NonFinite { step: usize, seed: u64 },
    #[error("empty training set")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("checkpoint is malformed: {0}")]
    BadCheckpoint(String),
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: usize,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Adam { m: vec![0.0; n], v: vec![0.0; n], step: 0 }
    }

    pub fn update(&mut self, params: &mut [f64], grad: &[f64], lr: f64, cfg: &TrainConfig) {
        self.step += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.step as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * grad[i];
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
}

/// Cosine decay from `lr` to `lr / 10` across the step budget. The tail
/// of training is where the rare exact-copy tokens get squeezed out, and
/// that needs smaller steps than the bulk of the fit.
fn cosine_lr(lr: f64, step: usize, max_steps: usize) -> f64 {
    let t = (step - 1) as f64 / max_steps.max(1) as f64;
    let floor = 0.1 * lr;
    floor + 0.5 * (lr - floor) * (1.0 + (std::f64::consts::PI * t).cos())
}

/// Scales grad in place to the given global norm if it exceeds it;
/// returns the pre-clip norm.
pub fn clip_gradient(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = l2_norm(grad);
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grad.iter_mut() {
            *g *= s;
        }
    }
    norm
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: usize,
    pub train_loss: f64,
    pub heldout_loss: f64,
    pub heldout_acc: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
pub struct TrainLog {
    pub rows: Vec<MetricsRow>,
    pub stopped_at: usize,
    pub stop_reason: String,
}

impl TrainLog {
    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        for row in &self.rows {
            serde_json::to_writer(&mut w, row)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }
}

/// Tracks heldout improvement for plateau stopping.
struct Plateau {
    best: f64,
    since: usize,
}

impl Plateau {
    fn new() -> Self {
        Plateau { best: f64::INFINITY, since: 0 }
    }

    /// Records one eval of a score to minimize; true when patience ran out.
    fn stalled(&mut self, score: f64, patience: usize) -> bool {
        if score < self.best - 1e-6 {
            self.best = score;
            self.since = 0;
        } else {
            self.since += 1;
        }
        self.since >= patience
    }
}

fn split_heldout<T>(items: Vec<T>, frac: f64) -> (Vec<T>, Vec<T>) {
    let n = items.len();
    let held = ((n as f64 * frac).ceil() as usize).clamp(1, n.saturating_sub(1).max(1));
    let mut train = items;
    let heldout = train.split_off(n - held);
    (train, heldout)
}

// ---------------------------------------------------------------------
// Stateless MLP.

pub fn train_mlp(
    trajs: &[Trajectory],
    cfg: &TrainConfig,
    sim_cfg: &SimConfig,
) -> Result<(StatelessMlp, TrainLog), TrainError> {
    let v = Vocab::builtin();
    let mut rows: Vec<(Vec<f64>, [u8; 5])> = Vec::new();
    for t in trajs {
        for s in encode_slices(t, v, sim_cfg) {
            if s.kind == SliceKind::Step {
                rows.push((s.features, s.action_bins));
            }
        }
    }
    if rows.is_empty() {
        return Err(TrainError::Empty);
    }
    let (train, held) = split_heldout(rows, cfg.heldout_frac);
    let model = StatelessMlp::new(128, cfg.seed);
    let mut rng = Prng::from_parts(cfg.seed, 0x41);
    let mut adam = Adam::new(model.ps.len());
    let mut grad = vec![0.0; model.ps.len()];
    let mut log = TrainLog::default();
    let mut plateau = Plateau::new();
    let mut model = model;
    for step in 1..=cfg.max_steps {
        grad.fill(0.0);
        let mut feats = Vec::with_capacity(cfg.batch * crate::dataset::FEATURE_DIM);
        let mut bins = Vec::with_capacity(cfg.batch);
        for _ in 0..cfg.batch {
            let (f, b) = &train[rng.below(train.len())];
            feats.extend_from_slice(f);
            bins.push(*b);
        }
        let loss = model.loss_and_grad(&feats, &bins, &mut grad);
        let norm = clip_gradient(&mut grad, cfg.clip);
        if !loss.is_finite() || !norm.is_finite() {
            return Err(TrainError::NonFinite { step, seed: cfg.seed });
        }
        adam.update(&mut model.ps.data, &grad, cosine_lr(cfg.lr, step, cfg.max_steps), cfg);
        if step % cfg.eval_every == 0 || step == cfg.max_steps {
            let (hl, ha) = mlp_heldout(&model, &held);
            log.rows.push(MetricsRow { step, train_loss: loss, heldout_loss: hl, heldout_acc: ha, grad_norm: norm });
            eprintln!("step {step} train {loss:.4} heldout {hl:.4} acc {ha:.4}");
            if ha >= cfg.target_acc {
                log.stopped_at = step;
                log.stop_reason = "target accuracy".into();
                return Ok((model, log));
            }
            if plateau.stalled(1.0 - ha, cfg.patience) {
                log.stopped_at = step;
                log.stop_reason = "heldout plateau".into();
                return Ok((model, log));
            }
        }
    }
    log.stopped_at = cfg.max_steps;
    log.stop_reason = "step budget".into();
    Ok((model, log))
}

fn mlp_heldout(model: &StatelessMlp, held: &[(Vec<f64>, [u8; 5])]) -> (f64, f64) {
    let mut grad = vec![0.0; model.ps.len()];
    let cap = held.len().min(256);
    let mut feats = Vec::new();
    let mut bins = Vec::new();
    for (f, b) in &held[..cap] {
        feats.extend_from_slice(f);
        bins.push(*b);
    }
    let loss = model.loss_and_grad(&feats, &bins, &mut grad);
    let mut correct = 0;
    for (i, (f, b)) in held[..cap].iter().enumerate() {
        let _ = i;
        let pred = model.act(f);
        correct += pred.iter().zip(b).filter(|(p, t)| p == t).count();
    }
    (loss, correct as f64 / (cap * 5) as f64)
}

// ---------------------------------------------------------------------
// Scratchpad transformer.

pub fn train_transformer(
    trajs: &[Trajectory],
    cfg: &TrainConfig,
    sim_cfg: &SimConfig,
) -> Result<(Transformer, TrainLog), TrainError> {
    let v = Vocab::builtin();
    let mut slices: Vec<SliceExample> = Vec::new();
    for t in trajs {
        slices.extend(encode_slices(t, v, sim_cfg));
    }
    if slices.is_empty() {
        return Err(TrainError::Empty);
    }
    let (train, held) = split_heldout(slices, cfg.heldout_frac);
    // Plan slices are one per trajectory but carry the whole
    // copy-coordinates-into-the-scratchpad skill; uniform sampling starves
    // them, so they get a fixed share of each batch.
    let plan_idx: Vec<usize> = (0..train.len())
        .filter(|&i| matches!(train[i].kind, crate::dataset::SliceKind::Plan))
        .collect();
    let mut model = Transformer::new(TransformerCfg::standard(v.len()), v, cfg.seed);
    let mut rng = Prng::from_parts(cfg.seed, 0x42);
    let mut adam = Adam::new(model.ps.len());
    let mut grad = vec![0.0; model.ps.len()];
    let mut log = TrainLog::default();
    let mut plateau = Plateau::new();
    for step in 1..=cfg.max_steps {
        grad.fill(0.0);
        let mut loss_sum = 0.0;
        for _ in 0..cfg.batch {
            let s = if !plan_idx.is_empty() && rng.below(3) == 0 {
                &train[plan_idx[rng.below(plan_idx.len())]]
            } else {
                &train[rng.below(train.len())]
            };
            let (tokens, targets) = slice_tokens(s);
            let (loss, _) = model.loss_and_grad(&tokens, &targets, &mut grad);
            loss_sum += loss;
        }
        let inv_b = 1.0 / cfg.batch as f64;
        for g in grad.iter_mut() {
            *g *= inv_b;
        }
        let loss = loss_sum * inv_b;
        let norm = clip_gradient(&mut grad, cfg.clip);
        if !loss.is_finite() || !norm.is_finite() {
            return Err(TrainError::NonFinite { step, seed: cfg.seed });
        }
        adam.update(&mut model.ps.data, &grad, cosine_lr(cfg.lr, step, cfg.max_steps), cfg);
        if step % cfg.eval_every == 0 || step == cfg.max_steps {
            let (hl, ha) = transformer_heldout(&model, &held);
            log.rows.push(MetricsRow { step, train_loss: loss, heldout_loss: hl, heldout_acc: ha, grad_norm: norm });
            eprintln!("step {step} train {loss:.4} heldout {hl:.4} acc {ha:.4}");
            if ha >= cfg.target_acc {
                log.stopped_at = step;
                log.stop_reason = "target accuracy".into();
                return Ok((model, log));
            }
            if plateau.stalled(1.0 - ha, cfg.patience) {
                log.stopped_at = step;
                log.stop_reason = "heldout plateau".into();
                return Ok((model, log));
            }
        }
    }
    log.stopped_at = cfg.max_steps;
    log.stop_reason = "step budget".into();
    Ok((model, log))
}

/// Context plus target as one token stream with teacher-forced targets at
/// the tail positions.
pub fn slice_tokens(s: &SliceExample) -> (Vec<u32>, Vec<(usize, u32)>) {
    let mut tokens = s.context.clone();
    let start = tokens.len();
    tokens.extend_from_slice(&s.target);
    let targets = (start..tokens.len()).map(|i| (i, tokens[i])).collect();
    (tokens, targets)
}

fn transformer_heldout(model: &Transformer, held: &[SliceExample]) -> (f64, f64) {
    // Plan slices are rare but their token accuracy is what decides
    // whether generated scratchpads parse, so they get a guaranteed share
    // of the heldout probe.
    let plans: Vec<&SliceExample> = held
        .iter()
        .filter(|s| matches!(s.kind, crate::dataset::SliceKind::Plan))
        .take(16)
        .collect();
    let probe: Vec<&SliceExample> = plans
        .iter()
        .copied()
        .chain(held.iter().filter(|s| matches!(s.kind, crate::dataset::SliceKind::Step)))
        .take(80)
        .collect();
    let mut grad = vec![0.0; model.ps.len()];
    let mut loss_sum = 0.0;
    let mut total = 0usize;
    let mut correct = 0usize;
    for s in &probe {
        let (tokens, targets) = slice_tokens(s);
        let (loss, c) = model.loss_and_grad(&tokens, &targets, &mut grad);
        loss_sum += loss;
        total += targets.len();
        correct += c;
    }
    (loss_sum / probe.len().max(1) as f64, correct as f64 / total.max(1) as f64)
}

// ---------------------------------------------------------------------
// Recurrent policy (with or without the scratchpad stream).

pub fn train_gru(
    trajs: &[Trajectory],
    cfg: &TrainConfig,
    sim_cfg: &SimConfig,
    with_scratchpad: bool,
) -> Result<(GruPolicy, TrainLog), TrainError> {
    let v = Vocab::builtin();
    // The scratchpad variant trains on per-step slices from a zero hidden
    // state, the same protocol its rollout replays: the pad, not the
    // hidden state, is the only memory that survives between steps. The
    // plain variant trains as a language model over truncated windows of
    // the raw interleaved stream.
    let seqs: Vec<SequenceExample> = if with_scratchpad {
        let mut out = Vec::new();
        for t in trajs {
            for s in encode_slices(t, v, sim_cfg) {
                if s.kind == SliceKind::Step {
                    let (tokens, targets) = slice_tokens(&s);
                    let mut loss_mask = vec![false; tokens.len()];
                    for (i, _) in targets {
                        loss_mask[i] = true;
                    }
                    out.push(SequenceExample { tokens, loss_mask });
                }
            }
        }
        out
    } else {
        trajs.iter().map(|t| encode_sequence(t, v, sim_cfg, false)).collect()
    };
    if seqs.is_empty() {
        return Err(TrainError::Empty);
    }
    let (train, held) = split_heldout(seqs, cfg.heldout_frac);
    let mut model = GruPolicy::new(GruCfg::standard(v.len()), cfg.seed);
    let mut rng = Prng::from_parts(cfg.seed, 0x43);
    let mut adam = Adam::new(model.ps.len());
    let mut grad = vec![0.0; model.ps.len()];
    let mut log = TrainLog::default();
    let mut plateau = Plateau::new();
    for step in 1..=cfg.max_steps {
        grad.fill(0.0);
        let mut loss_sum = 0.0;
        for _ in 0..cfg.batch {
            let seq = &train[rng.below(train.len())];
            let w = if with_scratchpad {
                seq.clone()
            } else {
                sample_window(seq, cfg.window, &mut rng)
            };
            let (loss, ..) = model.loss_and_grad(&w, &mut grad);
            loss_sum += loss;
        }
        let inv_b = 1.0 / cfg.batch as f64;
        for g in grad.iter_mut() {
            *g *= inv_b;
        }
        let loss = loss_sum * inv_b;
        let norm = clip_gradient(&mut grad, cfg.clip);
        if !loss.is_finite() || !norm.is_finite() {
            return Err(TrainError::NonFinite { step, seed: cfg.seed });
        }
        adam.update(&mut model.ps.data, &grad, cosine_lr(cfg.lr, step, cfg.max_steps), cfg);
        if step % cfg.eval_every == 0 || step == cfg.max_steps {
            let (hl, ha) = gru_heldout(&model, &held, cfg, &mut rng, with_scratchpad);
            log.rows.push(MetricsRow { step, train_loss: loss, heldout_loss: hl, heldout_acc: ha, grad_norm: norm });
            eprintln!("step {step} train {loss:.4} heldout {hl:.4} acc {ha:.4}");
            if ha >= cfg.target_acc {
                log.stopped_at = step;
                log.stop_reason = "target accuracy".into();
                return Ok((model, log));
            }
            if plateau.stalled(1.0 - ha, cfg.patience) {
                log.stopped_at = step;
                log.stop_reason = "heldout plateau".into();
                return Ok((model, log));
            }
        }
    }
    log.stopped_at = cfg.max_steps;
    log.stop_reason = "step budget".into();
    Ok((model, log))
}

fn gru_heldout(
    model: &GruPolicy,
    held: &[SequenceExample],
    cfg: &TrainConfig,
    rng: &mut Prng,
    with_scratchpad: bool,
) -> (f64, f64) {
    let mut grad = vec![0.0; model.ps.len()];
    let mut loss_sum = 0.0;
    let mut total = 0;
    let mut correct = 0;
    let mut evals = 0;
    if with_scratchpad {
        for seq in held.iter().take(96) {
            let (loss, n, c) = model.loss_and_grad(seq, &mut grad);
            if n > 0 {
                loss_sum += loss;
                total += n;
                correct += c;
                evals += 1;
            }
        }
    } else {
        for seq in held {
            for _ in 0..4 {
                let w = sample_window(seq, cfg.window, rng);
                let (loss, n, c) = model.loss_and_grad(&w, &mut grad);
                if n > 0 {
                    loss_sum += loss;
                    total += n;
                    correct += c;
                    evals += 1;
                }
            }
        }
    }
    (loss_sum / evals.max(1) as f64, correct as f64 / total.max(1) as f64)
}

// ---------------------------------------------------------------------
// Checkpoints: a JSON header line, then little-endian f64 blobs for the
// parameters and, when present, the Adam moments.

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    kind: String,
    vocab_hash: String,
    n_params: usize,
    adam_step: usize,
    has_adam: bool,
}

pub struct Checkpoint {
    pub kind: String,
    pub params: Vec<f64>,
    pub adam: Option<Adam>,
}

pub fn save_checkpoint(
    path: &Path,
    kind: &str,
    params: &[f64],
    adam: Option<&Adam>,
) -> Result<(), TrainError> {
    let v = Vocab::builtin();
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    let header = CheckpointHeader {
        kind: kind.to_string(),
        vocab_hash: v.hash_hex(),
        n_params: params.len(),
        adam_step: adam.map(|a| a.step).unwrap_or(0),
        has_adam: adam.is_some(),
    };
    serde_json::to_writer(&mut w, &header).map_err(std::io::Error::from)?;
    w.write_all(b"\n")?;
    let dump = |w: &mut BufWriter<std::fs::File>, xs: &[f64]| -> std::io::Result<()> {
        for x in xs {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    };
    dump(&mut w, params)?;
    if let Some(a) = adam {
        dump(&mut w, &a.m)?;
        dump(&mut w, &a.v)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, TrainError> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut header_line = String::new();
    r.read_line(&mut header_line)?;
    let header: CheckpointHeader = serde_json::from_str(header_line.trim_end())
        .map_err(|e| TrainError::BadCheckpoint(format!("header: {e}")))?;
    let v = Vocab::builtin();
    if header.vocab_hash != v.hash_hex() {
        return Err(TrainError::BadCheckpoint("vocabulary hash mismatch".into()));
    }
    let mut slurp = |n: usize| -> Result<Vec<f64>, TrainError> {
        let mut buf = vec![0u8; n * 8];
        r.read_exact(&mut buf)
            .map_err(|_| TrainError::BadCheckpoint("truncated parameter blob".into()))?;
        Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    };
    let params = slurp(header.n_params)?;
    let adam = if header.has_adam {
        let m = slurp(header.n_params)?;
        let vv = slurp(header.n_params)?;
        Some(Adam { m, v: vv, step: header.adam_step })
    } else {
        None
    };
    Ok(Checkpoint { kind: header.kind, params, adam })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::solve;
    use crate::task::{sample_task, TaskKind, Tolerances};

    #[test]
    fn adam_single_step_is_closed_form() {
        let cfg = TrainConfig { lr: 0.1, ..TrainConfig::default() };
        let mut adam = Adam::new(2);
        let mut params = vec![1.0, -2.0];
        let grad = vec![0.5, -0.25];
        adam.update(&mut params, &grad, cfg.lr, &cfg);
        // After one step mhat = g, vhat = g^2, so the update is
        // lr * g / (|g| + eps) = lr * sign(g) up to eps.
        for (p, (&p0, &g)) in params.iter().zip([1.0, -2.0].iter().zip(&grad)) {
            let expect = p0 - cfg.lr * g / (g.abs() + cfg.eps);
            assert!((p - expect).abs() < 1e-12, "{} vs {}", p, expect);
        }
    }

    #[test]
    fn clip_leaves_small_gradients_alone() {
        let mut g = vec![0.3, -0.4];
        let norm = clip_gradient(&mut g, 10.0);
        assert!((norm - 0.5).abs() < 1e-12);
        assert_eq!(g, vec![0.3, -0.4]);
        let mut big = vec![30.0, -40.0];
        clip_gradient(&mut big, 10.0);
        assert!((l2_norm(&big) - 10.0).abs() < 1e-9);
    }

    #[test]
    fn checkpoint_round_trips_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let params: Vec<f64> = (0..100).map(|i| (i as f64).sin() * 1e10).collect();
        let mut adam = Adam::new(100);
        adam.step = 7;
        adam.m[3] = f64::MIN_POSITIVE;
        adam.v[4] = 1e-300;
        save_checkpoint(&path, "mlp", &params, Some(&adam)).unwrap();
        let ck = load_checkpoint(&path).unwrap();
        assert_eq!(ck.kind, "mlp");
        assert_eq!(ck.params, params);
        assert_eq!(ck.adam.unwrap(), adam);
    }

    #[test]
    fn truncated_checkpoint_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&path, "mlp", &[1.0; 10], None).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(TrainError::BadCheckpoint(_))));
    }

    fn tiny_trajs(kind: TaskKind, n: u64) -> Vec<crate::oracle::Trajectory> {
        let cfg = SimConfig::default();
        let tol = Tolerances::default();
        (0..n)
            .map(|seed| {
                let (spec, init) = sample_task(kind, seed, &cfg).unwrap();
                solve(&spec, &init, seed, &cfg, &tol).unwrap()
            })
            .collect()
    }

    #[test]
    fn mlp_training_reduces_loss_deterministically() {
        let trajs = tiny_trajs(TaskKind::RotateRestore, 8);
        let cfg = TrainConfig {
            max_steps: 60,
            eval_every: 30,
            patience: 100,
            ..TrainConfig::default()
        };
        let sim_cfg = SimConfig::default();
        let (m1, log1) = train_mlp(&trajs, &cfg, &sim_cfg).unwrap();
        let (m2, log2) = train_mlp(&trajs, &cfg, &sim_cfg).unwrap();
        assert_eq!(m1.ps.data, m2.ps.data, "training is deterministic");
        assert_eq!(log1.rows.len(), log2.rows.len());
        let first = log1.rows.first().unwrap().heldout_loss;
        let last = log1.rows.last().unwrap().heldout_loss;
        assert!(last < first, "loss went {} -> {}", first, last);
    }

    #[test]
    fn gru_training_step_runs_and_improves() {
        let trajs = tiny_trajs(TaskKind::TouchResetPick, 6);
        let cfg = TrainConfig {
            max_steps: 40,
            eval_every: 20,
            patience: 100,
            ..TrainConfig::default()
        };
        let sim_cfg = SimConfig::default();
        let (_, log) = train_gru(&trajs, &cfg, &sim_cfg, true).unwrap();
        let first = log.rows.first().unwrap().heldout_loss;
        let last = log.rows.last().unwrap().heldout_loss;
        assert!(last < first, "loss went {} -> {}", first, last);
    }
}
