//! Closed-loop evaluation: policies act in the simulator under a step
//! budget, success comes from the task predicates, and aggregate reports
//! carry Wilson intervals. Also home to the observation-aliasing analyzer
//! that upper-bounds any reactive policy.

use crate::dataset::{featurize, ActionCodec};
use crate::grammar::{parse_description, tokenize_observation, Description, GrammarError};
use crate::model::StatelessMlp;
use crate::oracle::{plan_for, solve, Trajectory};
use crate::recurrent::{GruPolicy, GruState};
use crate::scratchpad::{PadError, Scratchpad};
use crate::sim::{self, observe, Action, SimConfig, WorldState};
use crate::task::{check_success, sample_task, TaskKind, TaskSpec, Tolerances, Trace};
use crate::transformer::{argmax, DecodeState, Transformer};
use crate::vocab::{Vocab, ACT, DONE, PLAN_CLOSE, THINK};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// First seed of the evaluation pool; training seeds stay far below it.
pub const EVAL_SEED_BASE: u64 = 1_000_000;

pub enum Policy<'a> {
    /// Scripted solver, replayed open loop; the harness ceiling.
    Oracle,
    Mlp(&'a StatelessMlp),
    /// Scratchpad-conditioned transformer following the predict-plan,
    /// then think/act/done protocol.
    ArScratchpad(&'a Transformer),
    Gru { model: &'a GruPolicy, scratchpad: bool },
}

impl Policy<'_> {
    pub fn label(&self) -> &'static str {
        match self {
            Policy::Oracle => "oracle",
            Policy::Mlp(_) => "stateless",
            Policy::ArScratchpad(_) => "ar-scratchpad",
            Policy::Gru { scratchpad: false, .. } => "recurrent",
            Policy::Gru { scratchpad: true, .. } => "recurrent-scratchpad",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    pub max_steps: usize,
    /// Relax the button press the way the evaluation protocol allows: a
    /// grip toggle within 0.06 of the button is steered onto it.
    pub sim_eval: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { max_steps: 400, sim_eval: true }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RolloutOutcome {
    pub success: bool,
    pub steps: usize,
    pub subtasks_completed: usize,
    pub subtasks_total: usize,
    pub restore_distance: Option<f64>,
    pub decode_failures: usize,
    pub protocol_violations: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Task(#[from] crate::task::TaskError),
    #[error(transparent)]
    Solver(#[from] crate::oracle::SolverError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The sim-eval relaxation: a grip toggle near the button is pulled onto
/// it before the step executes.
fn relax_press(task: &TaskSpec, state: &WorldState, action: Action, opts: &EvalOptions) -> Action {
    if !opts.sim_eval {
        return action;
    }
    let crate::task::TaskParams::PutBlockBack { button, .. } = &task.params else {
        return action;
    };
    let toggling = action.grip != state.grip_on;
    if !toggling {
        return action;
    }
    let b = &state.objects[*button as usize].pose;
    if state.ee.dist_xy(b) <= 0.06 && state.ee.level() == b.level() + 1 {
        return Action { dx: b.x - state.ee.x, dy: b.y - state.ee.y, ..action }.clamped();
    }
    action
}

pub fn rollout(
    policy: &Policy,
    task: &TaskSpec,
    initial: &WorldState,
    seed: u64,
    cfg: &SimConfig,
    tol: &Tolerances,
    opts: &EvalOptions,
) -> Result<RolloutOutcome, EvalError> {
    match policy {
        Policy::Oracle => rollout_oracle(task, initial, seed, cfg, tol, opts),
        Policy::Mlp(m) => rollout_mlp(m, task, initial, cfg, tol, opts),
        Policy::ArScratchpad(m) => rollout_ar(m, task, initial, cfg, tol, opts),
        Policy::Gru { model, scratchpad } => {
            rollout_gru(model, *scratchpad, task, initial, cfg, tol, opts)
        }
    }
}

fn finish(
    task: &TaskSpec,
    trace: &Trace,
    tol: &Tolerances,
    decode_failures: usize,
    protocol_violations: usize,
) -> Result<RolloutOutcome, EvalError> {
    let report = check_success(task, trace, tol)?;
    Ok(RolloutOutcome {
        success: report.success,
        steps: trace.actions.len(),
        subtasks_completed: report.subtasks_completed,
        subtasks_total: report.subtasks_total,
        restore_distance: report.restore_distance,
        decode_failures,
        protocol_violations,
    })
}

fn rollout_oracle(
    task: &TaskSpec,
    initial: &WorldState,
    seed: u64,
    cfg: &SimConfig,
    tol: &Tolerances,
    opts: &EvalOptions,
) -> Result<RolloutOutcome, EvalError> {
    let traj: Trajectory = solve(task, initial, seed, cfg, tol)?;
    let mut trace = Trace::start(initial.clone());
    let mut state = initial.clone();
    for st in traj.steps.iter().take(opts.max_steps) {
        let a = relax_press(task, &state, st.action, opts);
        state = sim::step(&state, &a, cfg);
        trace.push(a, state.clone());
    }
    finish(task, &trace, tol, 0, 0)
}

fn rollout_mlp(
    model: &StatelessMlp,
    task: &TaskSpec,
    initial: &WorldState,
    cfg: &SimConfig,
    tol: &Tolerances,
    opts: &EvalOptions,
) -> Result<RolloutOutcome, EvalError> {
    let v = Vocab::builtin();
    let mut trace = Trace::start(initial.clone());
    let mut state = initial.clone();
    for _ in 0..opts.max_steps {
        let feats = featurize(task, &observe(&state), v);
        let bins = model.act(&feats);
        let a = relax_press(task, &state, ActionCodec::undiscretize(&bins), opts);
        state = sim::step(&state, &a, cfg);
        trace.push(a, state.clone());
    }
    finish(task, &trace, tol, 0, 0)
}

/// Greedily decode until `stop` appears or the budget runs out; returns
/// the tokens before the stop, or None on budget exhaustion.
/// Incremental greedy decoding, shared by the transformer and the GRU.
trait Decoder {
    type St;
    fn feed(&self, st: &mut Self::St, token: u32);
    fn logits(&self, st: &Self::St) -> Vec<f64>;
}

impl Decoder for Transformer {
    type St = DecodeState;
    fn feed(&self, st: &mut DecodeState, token: u32) {
        Transformer::feed(self, st, token)
    }
    fn logits(&self, st: &DecodeState) -> Vec<f64> {
        Transformer::logits(self, st)
    }
}

impl Decoder for GruPolicy {
    type St = GruState;
    fn feed(&self, st: &mut GruState, token: u32) {
        GruPolicy::feed(self, st, token)
    }
    fn logits(&self, st: &GruState) -> Vec<f64> {
        GruPolicy::logits(self, st)
    }
}

fn generate_until<M: Decoder>(
    model: &M,
    st: &mut M::St,
    stop: u32,
    budget: usize,
) -> Option<Vec<u32>> {
    let mut out = Vec::new();
    for _ in 0..budget {
        let tok = argmax(&model.logits(st)) as u32;
        model.feed(st, tok);
        if tok == stop {
            return Some(out);
        }
        out.push(tok);
    }
    None
}

/// One control step of the token protocol: THINK description ACT five
/// bins, then DONE or an end-of-step marker.
struct StepDecode {
    desc: Result<Description, GrammarError>,
    bins: Option<[u8; 5]>,
    done: bool,
}

fn decode_step<M: Decoder>(model: &M, st: &mut M::St, v: &Vocab) -> StepDecode {
    let think = argmax(&model.logits(st)) as u32;
    model.feed(st, think);
    if think != THINK {
        return StepDecode { desc: Err(GrammarError::Unexpected(0)), bins: None, done: false };
    }
    let Some(desc_tokens) = generate_until(model, st, ACT, 24) else {
        return StepDecode { desc: Err(GrammarError::Truncated(24)), bins: None, done: false };
    };
    let desc = parse_description(&desc_tokens, v);
    let mut bin_tokens = Vec::with_capacity(5);
    for _ in 0..5 {
        let tok = argmax(&model.logits(st)) as u32;
        model.feed(st, tok);
        bin_tokens.push(tok);
    }
    let bins = ActionCodec::from_tokens(&bin_tokens, v);
    let tail = argmax(&model.logits(st)) as u32;
    model.feed(st, tail);
    StepDecode { desc, bins, done: tail == DONE }
}

fn rollout_ar(
    model: &Transformer,
    task: &TaskSpec,
    initial: &WorldState,
    cfg: &SimConfig,
    tol: &Tolerances,
    opts: &EvalOptions,
) -> Result<RolloutOutcome, EvalError> {
    let v = Vocab::builtin();
    let instr = task.instruction_tokens(v);
    let mut decode_failures = 0usize;
    let mut protocol_violations = 0usize;

    // Plan phase: the model writes the whole initial scratchpad.
    let mut st = model.begin();
    for &t in &instr {
        model.feed(&mut st, t);
    }
    for t in tokenize_observation(&observe(initial), v) {
        model.feed(&mut st, t);
    }
    let plan_tokens = {
        let first = argmax(&model.logits(&st)) as u32;
        model.feed(&mut st, first);
        let mut toks = vec![first];
        match generate_until(model, &mut st, PLAN_CLOSE, 400) {
            Some(rest) => {
                toks.extend(rest);
                toks.push(PLAN_CLOSE);
                toks
            }
            None => toks,
        }
    };
    let Ok(mut pad) = Scratchpad::parse(&plan_tokens, v) else {
        // A malformed plan leaves nothing to execute against.
        let trace = Trace::start(initial.clone());
        let mut out = finish(task, &trace, tol, 1, 0)?;
        out.success = false;
        return Ok(out);
    };
    let plan_len = pad.plan().len();

    let mut trace = Trace::start(initial.clone());
    let mut state = initial.clone();
    for _ in 0..opts.max_steps {
        let mut st = model.begin();
        for &t in &instr {
            model.feed(&mut st, t);
        }
        for t in pad.serialize(v) {
            model.feed(&mut st, t);
        }
        for t in tokenize_observation(&observe(&state), v) {
            model.feed(&mut st, t);
        }
        let decoded = decode_step(model, &mut st, v);
        let action = match decoded.bins {
            Some(bins) => ActionCodec::undiscretize(&bins),
            None => {
                decode_failures += 1;
                Action::NOOP
            }
        };
        let a = relax_press(task, &state, action, opts);
        state = sim::step(&state, &a, cfg);
        trace.push(a, state.clone());
        if decoded.done {
            match &decoded.desc {
                Ok(d) => match pad.update(d, true) {
                    Ok(next) => pad = next,
                    Err(PadError::ActBeyondPlan) => protocol_violations += 1,
                    Err(_) => protocol_violations += 1,
                },
                Err(_) => decode_failures += 1,
            }
        }
        if pad.progress() >= plan_len {
            break;
        }
    }
    finish(task, &trace, tol, decode_failures, protocol_violations)
}

fn rollout_gru(
    model: &GruPolicy,
    scratchpad: bool,
    task: &TaskSpec,
    initial: &WorldState,
    cfg: &SimConfig,
    tol: &Tolerances,
    opts: &EvalOptions,
) -> Result<RolloutOutcome, EvalError> {
    if scratchpad {
        return rollout_gru_pad(model, task, initial, cfg, tol, opts);
    }
    let v = Vocab::builtin();
    let mut decode_failures = 0usize;
    let mut st = model.begin();
    for t in task.instruction_tokens(v) {
        model.feed(&mut st, t);
    }
    let mut trace = Trace::start(initial.clone());
    let mut state = initial.clone();
    for _ in 0..opts.max_steps {
        for t in tokenize_observation(&observe(&state), v) {
            model.feed(&mut st, t);
        }
        model.feed(&mut st, crate::vocab::ACTION);
        let mut bin_tokens = Vec::with_capacity(5);
        for _ in 0..5 {
            let tok = argmax(&model.logits(&st)) as u32;
            model.feed(&mut st, tok);
            bin_tokens.push(tok);
        }
        let action = match ActionCodec::from_tokens(&bin_tokens, v) {
            Some(bins) => ActionCodec::undiscretize(&bins),
            None => {
                decode_failures += 1;
                Action::NOOP
            }
        };
        let a = relax_press(task, &state, action, opts);
        state = sim::step(&state, &a, cfg);
        trace.push(a, state.clone());
    }
    finish(task, &trace, tol, decode_failures, 0)
}

/// Scratchpad recurrent rollout replays the per-step slice protocol the
/// model was trained on: the hidden state is reset every step, so the
/// harness-maintained pad is the only memory that crosses step
/// boundaries. The harness supplies grounding and plan; the model is
/// responsible for thinks, actions, and done decisions.
fn rollout_gru_pad(
    model: &GruPolicy,
    task: &TaskSpec,
    initial: &WorldState,
    cfg: &SimConfig,
    tol: &Tolerances,
    opts: &EvalOptions,
) -> Result<RolloutOutcome, EvalError> {
    let v = Vocab::builtin();
    let instr = task.instruction_tokens(v);
    let (grounding, subs) = plan_for(task, initial);
    let plan: Vec<Description> =
        subs.iter().map(|s| crate::oracle::describe(s, initial, task)).collect();
    let mut pad = Scratchpad::init(grounding, plan).expect("planner sections are well formed");
    let plan_len = pad.plan().len();
    let mut decode_failures = 0usize;
    let mut protocol_violations = 0usize;
    let mut trace = Trace::start(initial.clone());
    let mut state = initial.clone();
    for _ in 0..opts.max_steps {
        let mut st = model.begin();
        for &t in &instr {
            model.feed(&mut st, t);
        }
        for t in pad.serialize(v) {
            model.feed(&mut st, t);
        }
        for t in tokenize_observation(&observe(&state), v) {
            model.feed(&mut st, t);
        }
        let decoded = decode_step(model, &mut st, v);
        let action = match decoded.bins {
            Some(bins) => ActionCodec::undiscretize(&bins),
            None => {
                decode_failures += 1;
                Action::NOOP
            }
        };
        let a = relax_press(task, &state, action, opts);
        state = sim::step(&state, &a, cfg);
        trace.push(a, state.clone());
        if decoded.done {
            match &decoded.desc {
                Ok(d) => match pad.update(d, true) {
                    Ok(next) => pad = next,
                    Err(_) => protocol_violations += 1,
                },
                Err(_) => decode_failures += 1,
            }
        }
        if pad.progress() >= plan_len {
            break;
        }
    }
    finish(task, &trace, tol, decode_failures, protocol_violations)
}

// ---------------------------------------------------------------------
// Aggregate evaluation.

/// Wilson score interval for a binomial proportion, z = 1.96.
pub fn wilson(successes: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.96f64;
    let p = successes as f64 / n as f64;
    let nf = n as f64;
    let denom = 1.0 + z * z / nf;
    let center = (p + z * z / (2.0 * nf)) / denom;
    let half = (z / denom) * (p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KindReport {
    pub policy: String,
    pub kind: String,
    pub n: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub mean_steps: f64,
    pub mean_subtasks: f64,
    /// Mean of per-episode completed/planned sub-task fractions.
    pub subtask_cr: f64,
    /// Mean restore distance over successful episodes, where the task
    /// defines one.
    pub restore_distance: Option<f64>,
    pub decode_failures: usize,
    pub protocol_violations: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<KindReport>,
}

impl EvalReport {
    pub fn rate(&self, kind: TaskKind) -> Option<f64> {
        self.rows.iter().find(|r| r.kind == kind.slug()).map(|r| r.success_rate)
    }

    pub fn write_tsv(&self, path: &Path) -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(
            w,
            "policy\tkind\tn\tsuccesses\trate\twilson_low\twilson_high\tmean_steps\tmean_subtasks\tsubtask_cr\trestore_distance\tdecode_failures\tprotocol_violations"
        )?;
        for r in &self.rows {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{:.1}\t{:.2}\t{:.4}\t{}\t{}\t{}",
                r.policy,
                r.kind,
                r.n,
                r.successes,
                r.success_rate,
                r.wilson_low,
                r.wilson_high,
                r.mean_steps,
                r.mean_subtasks,
                r.subtask_cr,
                r.restore_distance.map_or("-".to_string(), |d| format!("{d:.4}")),
                r.decode_failures,
                r.protocol_violations
            )?;
        }
        Ok(())
    }

    pub fn write_jsonl(&self, path: &Path) -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        for r in &self.rows {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Evaluate a policy over n held-out episodes per task kind. Episode seeds
/// live in a pool disjoint from every training seed.
pub fn evaluate(
    policy: &Policy,
    kinds: &[TaskKind],
    n: usize,
    cfg: &SimConfig,
    tol: &Tolerances,
    opts: &EvalOptions,
) -> Result<EvalReport, EvalError> {
    let mut report = EvalReport::default();
    for (ki, &kind) in kinds.iter().enumerate() {
        let mut successes = 0usize;
        let mut steps = 0usize;
        let mut subtasks = 0usize;
        let mut cr_sum = 0.0;
        let mut restore_sum = 0.0;
        let mut restore_n = 0usize;
        let mut decode_failures = 0usize;
        let mut protocol_violations = 0usize;
        for i in 0..n {
            let seed = EVAL_SEED_BASE + ki as u64 * 10_000 + i as u64;
            let (task, initial) = sample_task(kind, seed, cfg)?;
            let out = rollout(policy, &task, &initial, seed, cfg, tol, opts)?;
            successes += out.success as usize;
            steps += out.steps;
            subtasks += out.subtasks_completed;
            cr_sum += out.subtasks_completed as f64 / out.subtasks_total.max(1) as f64;
            if out.success {
                if let Some(d) = out.restore_distance {
                    restore_sum += d;
                    restore_n += 1;
                }
            }
            decode_failures += out.decode_failures;
            protocol_violations += out.protocol_violations;
        }
        let (lo, hi) = wilson(successes, n);
        report.rows.push(KindReport {
            policy: policy.label().to_string(),
            kind: kind.slug().to_string(),
            n,
            successes,
            success_rate: successes as f64 / n.max(1) as f64,
            wilson_low: lo,
            wilson_high: hi,
            mean_steps: steps as f64 / n.max(1) as f64,
            mean_subtasks: subtasks as f64 / n.max(1) as f64,
            subtask_cr: cr_sum / n.max(1) as f64,
            restore_distance: (restore_n > 0).then(|| restore_sum / restore_n as f64),
            decode_failures,
            protocol_violations,
        });
    }
    Ok(report)
}

// ---------------------------------------------------------------------
// Aliasing analysis.

/// Fraction of oracle steps whose action agrees with the majority action
/// of all steps sharing the same quantized observation. This bounds the
/// per-step accuracy of any policy that sees only the current observation,
/// which is why memory tasks defeat the stateless baseline.
pub fn aliasing_bound(
    kind: TaskKind,
    n_trajs: usize,
    cfg: &SimConfig,
    tol: &Tolerances,
) -> Result<f64, EvalError> {
    use std::collections::HashMap;
    let mut groups: HashMap<String, HashMap<[u8; 5], usize>> = HashMap::new();
    let mut total = 0usize;
    for seed in 0..n_trajs as u64 {
        let (task, initial) = sample_task(kind, seed, cfg)?;
        let traj = solve(&task, &initial, seed, cfg, tol)?;
        let mut state = initial.clone();
        for step in &traj.steps {
            let key = quantized_obs_key(&task, &state);
            let bins = ActionCodec::discretize(&step.action);
            *groups.entry(key).or_default().entry(bins).or_insert(0) += 1;
            state = sim::step(&state, &step.action, cfg);
            total += 1;
        }
    }
    let agree: usize =
        groups.values().map(|acts| acts.values().copied().max().unwrap_or(0)).sum();
    Ok(agree as f64 / total.max(1) as f64)
}

/// Observation key at the resolution a policy actually sees: hundredth
/// coordinates, discrete levels, hundredth-radian angles, gripper bit,
/// plus the instruction.
fn quantized_obs_key(task: &TaskSpec, state: &WorldState) -> String {
    use std::fmt::Write as _;
    let obs = observe(state);
    let mut key = task.instruction.clone();
    for o in &obs.objects {
        let _ = write!(
            key,
            "|{}:{}:{}:{}:{}",
            o.id,
            crate::grammar::qcoord(o.pose.x),
            crate::grammar::qcoord(o.pose.y),
            o.pose.level(),
            crate::grammar::qangle(o.pose.theta)
        );
    }
    let _ = write!(
        key,
        "|ee:{}:{}:{}:{}|g{}",
        crate::grammar::qcoord(obs.ee.x),
        crate::grammar::qcoord(obs.ee.y),
        obs.ee.level(),
        crate::grammar::qangle(obs.ee.theta),
        obs.grip_on as u8
    );
    key
}
