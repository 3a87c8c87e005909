//! Dataset encoders and on-disk format. Trajectories are stored as JSON
//! lines behind a self-describing header; training-time encoders turn them
//! into per-timestep slices (stateless and autoregressive policies) or
//! interleaved token sequences (recurrent policies).

use crate::grammar::tokenize_observation;
use crate::oracle::Trajectory;
use crate::rng::Prng;
use crate::scratchpad::Scratchpad;
use crate::sim::{Action, Observation, SimConfig};
use crate::task::{TaskKind, TaskSpec};
use crate::vocab::{Vocab, ACT, ACTION, DONE, SEP, THINK};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

pub const FORMAT_VERSION: u32 = 1;
const BINS_MINUS_ONE: f64 = (crate::vocab::ACTION_BINS - 1) as f64;

/// Fixed per-dimension ranges for the 33-bin action discretization:
/// dx, dy, dz (in levels), dtheta, grip.
pub const ACTION_RANGES: [(f64, f64); 5] = [
    (-0.05, 0.05),
    (-0.05, 0.05),
    (-1.0, 1.0),
    (-0.2, 0.2),
    (0.0, 1.0),
];

pub struct ActionCodec;

impl ActionCodec {
    fn bin(v: f64, lo: f64, hi: f64) -> u8 {
        (((v - lo) / (hi - lo) * BINS_MINUS_ONE).round()).clamp(0.0, BINS_MINUS_ONE) as u8
    }

    fn value(b: u8, lo: f64, hi: f64) -> f64 {
        lo + b as f64 / BINS_MINUS_ONE * (hi - lo)
    }

    pub fn discretize(a: &Action) -> [u8; 5] {
        let v = a.to_vec5();
        let mut out = [0u8; 5];
        for (i, &(lo, hi)) in ACTION_RANGES.iter().enumerate() {
            out[i] = Self::bin(v[i], lo, hi);
        }
        out
    }

    pub fn undiscretize(bins: &[u8; 5]) -> Action {
        let mut v = [0.0f64; 5];
        for (i, &(lo, hi)) in ACTION_RANGES.iter().enumerate() {
            v[i] = Self::value(bins[i], lo, hi);
        }
        Action::from_vec5(v)
    }

    /// Token ids for the five bins, in dimension order.
    pub fn tokens(bins: &[u8; 5], v: &Vocab) -> Vec<u32> {
        bins.iter().map(|&b| v.bin_token(b as usize)).collect()
    }

    /// Inverse of [`tokens`]; None if any id is not a bin token.
    pub fn from_tokens(ids: &[u32], v: &Vocab) -> Option<[u8; 5]> {
        if ids.len() != 5 {
            return None;
        }
        let mut out = [0u8; 5];
        for (i, &id) in ids.iter().enumerate() {
            out[i] = v.bin_of(id)? as u8;
        }
        Some(out)
    }
}

/// Feature vector width for the stateless policy.
pub const FEATURE_DIM: usize = 48;
const MAX_OBJECTS: usize = 4;
const INSTR_SLOTS: usize = 12;

/// Flat numeric view of (task, observation) for the stateless baseline:
/// task-kind one-hot, padded instruction token ids, per-object slots, and
/// the end effector.
pub fn featurize(task: &TaskSpec, obs: &Observation, v: &Vocab) -> Vec<f64> {
    let mut f = Vec::with_capacity(FEATURE_DIM);
    let ki = TaskKind::ALL.iter().position(|k| *k == task.kind).unwrap();
    for i in 0..TaskKind::ALL.len() {
        f.push(if i == ki { 1.0 } else { 0.0 });
    }
    let instr = task.instruction_tokens(v);
    let scale = v.len() as f64;
    for i in 0..INSTR_SLOTS {
        f.push(instr.get(i).map(|&t| t as f64 / scale).unwrap_or(0.0));
    }
    for i in 0..MAX_OBJECTS {
        match obs.objects.get(i) {
            Some(o) => {
                f.push(1.0);
                f.push(o.pose.x);
                f.push(o.pose.y);
                f.push(o.pose.level() as f64 / 9.0);
                f.push(o.pose.theta.sin());
                f.push(o.pose.theta.cos());
            }
            None => f.extend([0.0; 6]),
        }
    }
    f.push(obs.ee.x);
    f.push(obs.ee.y);
    f.push(obs.ee.level() as f64 / 9.0);
    f.push(obs.ee.theta.sin());
    f.push(obs.ee.theta.cos());
    f.push(if obs.grip_on { 1.0 } else { 0.0 });
    debug_assert_eq!(f.len(), FEATURE_DIM);
    f
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SliceKind {
    /// Predict the whole initial scratchpad from instruction and first
    /// observation.
    Plan,
    /// Predict think-description, action bins and the done flag for one
    /// timestep.
    Step,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceExample {
    pub kind: SliceKind,
    /// Conditioning tokens: instruction, scratchpad so far, observation.
    pub context: Vec<u32>,
    /// Tokens to predict autoregressively after the context.
    pub target: Vec<u32>,
    /// Numeric features for the stateless policy.
    pub features: Vec<f64>,
    pub action_bins: [u8; 5],
    pub done: bool,
}

/// One Plan slice plus one Step slice per trajectory step. The scratchpad
/// in each context is the fold of all earlier (description, done) pairs.
pub fn encode_slices(traj: &Trajectory, v: &Vocab, cfg: &SimConfig) -> Vec<SliceExample> {
    let observations = traj.observations(cfg);
    let instr = traj.task.instruction_tokens(v);
    let mut pad = Scratchpad::init(traj.grounding.clone(), traj.plan.clone())
        .expect("oracle trajectories carry well-formed sections");
    let mut out = Vec::with_capacity(traj.steps.len() + 1);

    let mut plan_context = instr.clone();
    plan_context.extend(tokenize_observation(&observations[0], v));
    out.push(SliceExample {
        kind: SliceKind::Plan,
        context: plan_context,
        target: pad.serialize(v),
        features: featurize(&traj.task, &observations[0], v),
        action_bins: [0; 5],
        done: false,
    });

    for (step, obs) in traj.steps.iter().zip(&observations) {
        let mut context = instr.clone();
        context.extend(pad.serialize(v));
        context.extend(tokenize_observation(obs, v));
        let bins = ActionCodec::discretize(&step.action);
        let mut target = vec![THINK];
        target.extend(step.desc.to_tokens(v));
        target.push(ACT);
        target.extend(ActionCodec::tokens(&bins, v));
        // Explicit end-of-step marker so the done decision is a trained
        // prediction at every step, not just completed ones.
        target.push(if step.done { DONE } else { SEP });
        out.push(SliceExample {
            kind: SliceKind::Step,
            context,
            target,
            features: featurize(&traj.task, obs, v),
            action_bins: bins,
            done: step.done,
        });
        pad = pad
            .update(&step.desc, step.done)
            .expect("oracle done count never exceeds the plan");
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceExample {
    pub tokens: Vec<u32>,
    /// loss_mask[t] marks tokens[t] as a prediction target given the
    /// prefix tokens[..t].
    pub loss_mask: Vec<bool>,
}

impl SequenceExample {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn loss_positions(&self) -> usize {
        self.loss_mask.iter().filter(|m| **m).count()
    }
}

/// Full interleaved sequence for the recurrent policies. Without the
/// scratchpad the stream is instruction then (obs, action) pairs only; with
/// it, each step also carries the think-description, the done marker, and a
/// fresh scratchpad serialization after every completed sub-task.
pub fn encode_sequence(
    traj: &Trajectory,
    v: &Vocab,
    cfg: &SimConfig,
    with_scratchpad: bool,
) -> SequenceExample {
    let observations = traj.observations(cfg);
    let mut tokens = traj.task.instruction_tokens(v);
    let mut mask = vec![false; tokens.len()];
    let push = |tokens: &mut Vec<u32>, mask: &mut Vec<bool>, ids: Vec<u32>, loss: bool| {
        mask.extend(std::iter::repeat(loss).take(ids.len()));
        tokens.extend(ids);
    };
    let mut pad = Scratchpad::init(traj.grounding.clone(), traj.plan.clone())
        .expect("oracle trajectories carry well-formed sections");
    if with_scratchpad {
        push(&mut tokens, &mut mask, pad.serialize(v), false);
    }
    // In scratchpad mode the token right after the action bins is always a
    // prediction target: DONE on completing steps, the next OBS otherwise.
    // Without it the done decision would only ever be trained positive.
    let mut loss_on_next_obs = false;
    for (step, obs) in traj.steps.iter().zip(&observations) {
        let obs_tokens = tokenize_observation(obs, v);
        push(&mut tokens, &mut mask, obs_tokens[..1].to_vec(), loss_on_next_obs);
        push(&mut tokens, &mut mask, obs_tokens[1..].to_vec(), false);
        loss_on_next_obs = false;
        if with_scratchpad {
            push(&mut tokens, &mut mask, vec![THINK], false);
            push(&mut tokens, &mut mask, step.desc.to_tokens(v), true);
        }
        push(&mut tokens, &mut mask, vec![ACTION], false);
        let bins = ActionCodec::discretize(&step.action);
        push(&mut tokens, &mut mask, ActionCodec::tokens(&bins, v), true);
        if with_scratchpad {
            if step.done {
                push(&mut tokens, &mut mask, vec![DONE], true);
                pad = pad
                    .update(&step.desc, true)
                    .expect("oracle done count never exceeds the plan");
                push(&mut tokens, &mut mask, pad.serialize(v), false);
            } else {
                loss_on_next_obs = true;
            }
        }
    }
    SequenceExample { tokens, loss_mask: mask }
}

/// Contiguous token window with at least one loss position, start drawn
/// uniformly. Entire sequence when it fits.
pub fn sample_window(ex: &SequenceExample, window: usize, rng: &mut Prng) -> SequenceExample {
    if ex.tokens.len() <= window {
        return ex.clone();
    }
    let span = ex.tokens.len() - window;
    for _ in 0..32 {
        let start = rng.below(span + 1);
        let w = SequenceExample {
            tokens: ex.tokens[start..start + window].to_vec(),
            loss_mask: ex.loss_mask[start..start + window].to_vec(),
        };
        if w.loss_positions() > 0 {
            return w;
        }
    }
    // Dense action stream makes this unreachable in practice.
    SequenceExample {
        tokens: ex.tokens[..window].to_vec(),
        loss_mask: ex.loss_mask[..window].to_vec(),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Corrupt { line: usize, msg: String },
    #[error("file format version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error("vocabulary hash {found} does not match {expected}")]
    VocabHash { found: String, expected: String },
    #[error("file is empty; expected a header line")]
    MissingHeader,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format_version: u32,
    pub vocab_hash: String,
    pub payload: String,
    pub count: usize,
}

fn write_lines<T: Serialize>(
    path: &Path,
    payload: &str,
    items: &[T],
    v: &Vocab,
) -> Result<(), DataError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    let header = DatasetHeader {
        format_version: FORMAT_VERSION,
        vocab_hash: v.hash_hex(),
        payload: payload.to_string(),
        count: items.len(),
    };
    serde_json::to_writer(&mut w, &header).map_err(std::io::Error::from)?;
    w.write_all(b"\n")?;
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn read_lines<T: for<'de> Deserialize<'de>>(
    path: &Path,
    payload: &str,
    v: &Vocab,
) -> Result<Vec<T>, DataError> {
    let r = BufReader::new(std::fs::File::open(path)?);
    let mut lines = r.lines();
    let header_line = lines.next().ok_or(DataError::MissingHeader)??;
    let header: DatasetHeader =
        serde_json::from_str(&header_line).map_err(|e| DataError::Corrupt {
            line: 1,
            msg: format!("bad header: {e}"),
        })?;
    if header.format_version != FORMAT_VERSION {
        return Err(DataError::Version { found: header.format_version, expected: FORMAT_VERSION });
    }
    if header.vocab_hash != v.hash_hex() {
        return Err(DataError::VocabHash { found: header.vocab_hash, expected: v.hash_hex() });
    }
    if header.payload != payload {
        return Err(DataError::Corrupt {
            line: 1,
            msg: format!("payload {:?}, expected {:?}", header.payload, payload),
        });
    }
    let mut out = Vec::with_capacity(header.count);
    for (i, line) in lines.enumerate() {
        let line = line?;
        let item = serde_json::from_str(&line).map_err(|e| DataError::Corrupt {
            line: i + 2,
            msg: e.to_string(),
        })?;
        out.push(item);
    }
    if out.len() != header.count {
        return Err(DataError::Corrupt {
            line: out.len() + 1,
            msg: format!("header promised {} records, found {}", header.count, out.len()),
        });
    }
    Ok(out)
}

pub fn write_trajectories(path: &Path, trajs: &[Trajectory], v: &Vocab) -> Result<(), DataError> {
    write_lines(path, "trajectories", trajs, v)
}

pub fn read_trajectories(path: &Path, v: &Vocab) -> Result<Vec<Trajectory>, DataError> {
    read_lines(path, "trajectories", v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::solve;
    use crate::task::{sample_task, TaskKind, Tolerances};
    use proptest::prelude::*;

    fn traj(kind: TaskKind, seed: u64) -> (Trajectory, SimConfig) {
        let cfg = SimConfig::default();
        let tol = Tolerances::default();
        let (spec, initial) = sample_task(kind, seed, &cfg).unwrap();
        (solve(&spec, &initial, seed, &cfg, &tol).unwrap(), cfg)
    }

    #[test]
    fn codec_is_exact_on_discrete_dims() {
        let a = Action { dx: 0.0, dy: 0.0, dz: -1, dtheta: 0.0, grip: true };
        let bins = ActionCodec::discretize(&a);
        let b = ActionCodec::undiscretize(&bins);
        assert_eq!(b.dz, -1);
        assert!(b.grip);
        assert_eq!(b.dx, 0.0);
    }

    proptest! {
        #[test]
        fn codec_round_trip_within_half_bin(
            dx in -0.05f64..=0.05,
            dy in -0.05f64..=0.05,
            dz in -1i8..=1,
            dtheta in -0.2f64..=0.2,
            grip in proptest::bool::ANY,
        ) {
            let a = Action { dx, dy, dz, dtheta, grip };
            let b = ActionCodec::undiscretize(&ActionCodec::discretize(&a));
            prop_assert!((a.dx - b.dx).abs() <= 0.1 / 64.0 + 1e-12);
            prop_assert!((a.dy - b.dy).abs() <= 0.1 / 64.0 + 1e-12);
            prop_assert_eq!(a.dz, b.dz);
            prop_assert!((a.dtheta - b.dtheta).abs() <= 0.4 / 64.0 + 1e-12);
            prop_assert_eq!(a.grip, b.grip);
        }
    }

    #[test]
    fn slices_cover_every_step_plus_plan() {
        let (t, cfg) = traj(TaskKind::TouchResetPick, 0);
        let v = Vocab::builtin();
        let slices = encode_slices(&t, v, &cfg);
        assert_eq!(slices.len(), t.steps.len() + 1);
        assert_eq!(slices[0].kind, SliceKind::Plan);
        assert!(slices[1..].iter().all(|s| s.kind == SliceKind::Step));
    }

    #[test]
    fn plan_slice_target_parses_as_scratchpad() {
        let (t, cfg) = traj(TaskKind::Swap, 3);
        let v = Vocab::builtin();
        let slices = encode_slices(&t, v, &cfg);
        let pad = Scratchpad::parse(&slices[0].target, v).unwrap();
        assert_eq!(pad.plan().len(), 6);
        assert!(pad.act().is_empty());
    }

    #[test]
    fn step_slice_target_has_protocol_shape() {
        let (t, cfg) = traj(TaskKind::RotateRestore, 1);
        let v = Vocab::builtin();
        for s in encode_slices(&t, v, &cfg).iter().skip(1) {
            assert_eq!(s.target[0], THINK);
            let act_at = s.target.iter().position(|&t| t == ACT).unwrap();
            let desc =
                crate::grammar::parse_description(&s.target[1..act_at], v).unwrap();
            assert!(matches!(desc, crate::grammar::Description::Rotate { .. }));
            let bins = ActionCodec::from_tokens(&s.target[act_at + 1..act_at + 6], v).unwrap();
            assert_eq!(bins, s.action_bins);
            let tail = &s.target[act_at + 6..];
            assert_eq!(tail, if s.done { &[DONE][..] } else { &[SEP][..] });
        }
    }

    #[test]
    fn scratchpad_grows_through_slice_contexts() {
        let (t, cfg) = traj(TaskKind::TouchResetPick, 2);
        let v = Vocab::builtin();
        let slices = encode_slices(&t, v, &cfg);
        let done_count = |ctx: &[u32]| ctx.iter().filter(|&&t| t == DONE).count();
        let first = done_count(&slices[1].context);
        let last = done_count(&slices.last().unwrap().context);
        assert_eq!(first, 0);
        assert_eq!(last, 2, "final context holds two completed sub-tasks");
    }

    #[test]
    fn plain_sequence_has_no_scratchpad_tokens() {
        let (t, cfg) = traj(TaskKind::Swap, 5);
        let v = Vocab::builtin();
        let ex = encode_sequence(&t, v, &cfg, false);
        assert!(!ex.tokens.contains(&THINK));
        assert!(!ex.tokens.contains(&DONE));
        assert!(!ex.tokens.contains(&crate::vocab::PLAN_OPEN));
        assert_eq!(ex.loss_positions(), t.steps.len() * 5);
    }

    #[test]
    fn scratchpad_sequence_reinjects_after_each_done() {
        let (t, cfg) = traj(TaskKind::Swap, 5);
        let v = Vocab::builtin();
        let ex = encode_sequence(&t, v, &cfg, true);
        let opens = ex.tokens.iter().filter(|&&x| x == crate::vocab::PLAN_OPEN).count();
        assert_eq!(opens, 1 + t.done_count());
        assert_eq!(ex.tokens.len(), ex.loss_mask.len());
    }

    #[test]
    fn windows_are_fixed_length_with_loss() {
        let (t, cfg) = traj(TaskKind::Swap, 4);
        let v = Vocab::builtin();
        let ex = encode_sequence(&t, v, &cfg, true);
        let mut rng = Prng::from_parts(9, 1);
        for _ in 0..50 {
            let w = sample_window(&ex, 64, &mut rng);
            assert_eq!(w.len(), 64);
            assert!(w.loss_positions() > 0);
        }
    }

    #[test]
    fn trajectory_file_round_trips() {
        let v = Vocab::builtin();
        let (t1, _) = traj(TaskKind::PutBlockBack, 0);
        let (t2, _) = traj(TaskKind::PutBlockBack, 1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pbb.jsonl");
        write_trajectories(&path, &[t1.clone(), t2.clone()], v).unwrap();
        let back = read_trajectories(&path, v).unwrap();
        assert_eq!(back, vec![t1, t2]);
    }

    #[test]
    fn corrupted_line_reports_its_number() {
        let v = Vocab::builtin();
        let (t1, _) = traj(TaskKind::TouchResetPick, 0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        write_trajectories(&path, &[t1], v).unwrap();
        let mut text = std::fs::read_to_string(&path).unwrap();
        text.push_str("{not json\n");
        // Header still promises one record, so the count check must not
        // mask the parse error.
        std::fs::write(&path, text).unwrap();
        match read_trajectories(&path, v) {
            Err(DataError::Corrupt { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected Corrupt, got {:?}", other.map(|v| v.len())),
        }
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let v = Vocab::builtin();
        let (t1, _) = traj(TaskKind::TouchResetPick, 0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vers.jsonl");
        write_trajectories(&path, &[t1], v).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let patched = text.replacen("\"format_version\":1", "\"format_version\":999", 1);
        std::fs::write(&path, patched).unwrap();
        assert!(matches!(
            read_trajectories(&path, v),
            Err(DataError::Version { found: 999, .. })
        ));
    }

    #[test]
    fn features_have_declared_width() {
        let (t, cfg) = traj(TaskKind::StackAndTopple, 0);
        let v = Vocab::builtin();
        let obs = t.observations(&cfg);
        let f = featurize(&t.task, &obs[0], v);
        assert_eq!(f.len(), FEATURE_DIM);
        assert!(f.iter().all(|x| x.is_finite()));
    }
}
