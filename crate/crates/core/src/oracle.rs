//! Scripted per-task solvers. Each produces a ground-truth trajectory with
//! a grounding section, a sub-task plan, and per-step think-descriptions
//! plus done flags marking sub-task completions.

use crate::grammar::{grounding_entries, qangle, qcoord, Description};
use crate::sim::{
    self, angle_diff, home_pose, observe, Action, Pose, SimConfig, WorldState, MAX_DELTA_THETA,
    MAX_DELTA_XY,
};
use crate::task::{check_success, TaskError, TaskParams, TaskSpec, Tolerances, Trace};
use serde::{Deserialize, Serialize};

/// Cruise height used between sub-goals, above any reachable stack.
const TRAVEL_LEVEL: i32 = 5;
/// Position alignment tolerance for the controller itself.
const EPS: f64 = 1e-7;
/// Hard per-episode step budget; exceeding it is a solver bug.
pub const SOLVER_BUDGET: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Verb {
    Touch,
    Reset,
    Pick,
    Place,
    PlaceNextTo,
    Restore,
    Stack,
    Topple,
    Rotate,
    Press,
    Move,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SubGoal {
    None,
    /// Absolute placement pose (level encoded in the pose).
    Pose { x: f64, y: f64, level: i32 },
    /// Another object to place next to.
    Anchor(u32),
    /// Absolute target rotation, plus the relative amount for display.
    Angle { target: f64, rel: i16 },
}

/// One sub-task of a plan: verb, target object (or the home pose), goal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubTask {
    pub verb: Verb,
    /// Object id; ignored for Reset/Move.
    pub target: u32,
    pub goal: SubGoal,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrajStep {
    pub action: Action,
    pub desc: Description,
    pub done: bool,
}

/// Oracle demonstration. Observations are recomputed by replay, keeping
/// the serialized form compact while staying bit-exact.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Trajectory {
    pub task: TaskSpec,
    pub seed: u64,
    pub initial: WorldState,
    pub grounding: Vec<Description>,
    pub plan: Vec<Description>,
    pub subtasks: Vec<SubTask>,
    pub steps: Vec<TrajStep>,
}

impl Trajectory {
    /// Re-execute the recorded actions from the initial state.
    pub fn replay(&self, cfg: &SimConfig) -> Trace {
        let mut trace = Trace::start(self.initial.clone());
        let mut s = self.initial.clone();
        for st in &self.steps {
            s = sim::step(&s, &st.action, cfg);
            trace.push(st.action, s.clone());
        }
        trace
    }

    /// Observation seen before each step, via replay.
    pub fn observations(&self, cfg: &SimConfig) -> Vec<crate::sim::Observation> {
        let trace = self.replay(cfg);
        trace.states[..self.steps.len()].iter().map(observe).collect()
    }

    pub fn done_count(&self) -> usize {
        self.steps.iter().filter(|s| s.done).count()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    #[error("solver exceeded its {0}-step budget")]
    BudgetExceeded(usize),
    #[error("solver produced an unsuccessful trajectory: {0:?}")]
    Unsound(crate::task::SuccessReport),
    #[error(transparent)]
    Task(#[from] TaskError),
}

fn obj<'a>(s: &'a WorldState, id: u32) -> &'a crate::sim::ObjectState {
    &s.objects[id as usize]
}

/// Grid point maximizing the minimum distance to the given keep-out
/// positions; used for the swap buffer.
fn farthest_free_point(avoid: &[(f64, f64)]) -> (f64, f64) {
    let mut best = (0.5, 0.5);
    let mut best_d = -1.0;
    for xi in 2..=18 {
        for yi in 2..=18 {
            let (x, y) = (xi as f64 * 0.05, yi as f64 * 0.05);
            let d = avoid
                .iter()
                .map(|&(ax, ay)| ((x - ax).powi(2) + (y - ay).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min);
            if d > best_d + 1e-12 {
                best_d = d;
                best = (x, y);
            }
        }
    }
    best
}

/// Offset point next to an anchor, picked deterministically to keep clear
/// of the other objects.
fn next_to_point(state: &WorldState, anchor: u32, exclude: u32) -> (f64, f64) {
    let a = &obj(state, anchor).pose;
    let dirs: [(f64, f64); 8] = [
        (1.0, 0.0),
        (0.7071, -0.7071),
        (0.0, -1.0),
        (-0.7071, -0.7071),
        (-1.0, 0.0),
        (-0.7071, 0.7071),
        (0.0, 1.0),
        (0.7071, 0.7071),
    ];
    let mut best = (a.x + 0.07, a.y);
    let mut best_d = -1.0;
    for (dx, dy) in dirs {
        let x = a.x + 0.07 * dx;
        let y = a.y + 0.07 * dy;
        if !(0.05..=0.95).contains(&x) || !(0.05..=0.95).contains(&y) {
            continue;
        }
        let d = state
            .objects
            .iter()
            .filter(|o| o.id != anchor && o.id != exclude)
            .map(|o| ((o.pose.x - x).powi(2) + (o.pose.y - y).powi(2)).sqrt())
            .fold(f64::INFINITY, f64::min);
        if d > best_d + 1e-12 {
            best_d = d;
            best = (x, y);
        }
    }
    best
}

/// Decompose a task into grounding entries and a sub-task plan.
pub fn plan_for(task: &TaskSpec, initial: &WorldState) -> (Vec<Description>, Vec<SubTask>) {
    let grounding = grounding_entries(&observe(initial));
    let plan = match &task.params {
        TaskParams::TouchResetPick { target_a, target_b } => vec![
            SubTask { verb: Verb::Touch, target: *target_a, goal: SubGoal::None },
            SubTask { verb: Verb::Reset, target: 0, goal: SubGoal::None },
            SubTask { verb: Verb::Pick, target: *target_b, goal: SubGoal::None },
        ],
        TaskParams::PlaceNextToRestore { target, anchor } => {
            let p0 = obj(initial, *target).pose;
            vec![
                SubTask { verb: Verb::Pick, target: *target, goal: SubGoal::None },
                SubTask { verb: Verb::PlaceNextTo, target: *target, goal: SubGoal::Anchor(*anchor) },
                SubTask { verb: Verb::Pick, target: *target, goal: SubGoal::None },
                SubTask {
                    verb: Verb::Restore,
                    target: *target,
                    goal: SubGoal::Pose { x: p0.x, y: p0.y, level: 0 },
                },
            ]
        }
        TaskParams::StackAndTopple { order } => {
            let base = obj(initial, order[0]).pose;
            let mut plan = Vec::new();
            for (lvl, &oid) in order.iter().enumerate().skip(1) {
                plan.push(SubTask { verb: Verb::Pick, target: oid, goal: SubGoal::None });
                plan.push(SubTask {
                    verb: Verb::Place,
                    target: oid,
                    goal: SubGoal::Pose { x: base.x, y: base.y, level: lvl as i32 },
                });
            }
            plan.push(SubTask { verb: Verb::Topple, target: order[1], goal: SubGoal::None });
            plan
        }
        TaskParams::Swap { a, b } => {
            let pa = obj(initial, *a).pose;
            let pb = obj(initial, *b).pose;
            let mut avoid: Vec<(f64, f64)> =
                initial.objects.iter().map(|o| (o.pose.x, o.pose.y)).collect();
            avoid.push((home_pose().x, home_pose().y));
            let buffer = farthest_free_point(&avoid);
            vec![
                SubTask { verb: Verb::Pick, target: *a, goal: SubGoal::None },
                SubTask {
                    verb: Verb::Place,
                    target: *a,
                    goal: SubGoal::Pose { x: buffer.0, y: buffer.1, level: 0 },
                },
                SubTask { verb: Verb::Pick, target: *b, goal: SubGoal::None },
                SubTask {
                    verb: Verb::Place,
                    target: *b,
                    goal: SubGoal::Pose { x: pa.x, y: pa.y, level: 0 },
                },
                SubTask { verb: Verb::Pick, target: *a, goal: SubGoal::None },
                SubTask {
                    verb: Verb::Place,
                    target: *a,
                    goal: SubGoal::Pose { x: pb.x, y: pb.y, level: 0 },
                },
            ]
        }
        TaskParams::RotateRestore { target, amount } => {
            let theta0 = obj(initial, *target).pose.theta;
            vec![
                SubTask {
                    verb: Verb::Rotate,
                    target: *target,
                    goal: SubGoal::Angle {
                        target: sim::wrap_angle(theta0 + amount),
                        rel: qangle(*amount),
                    },
                },
                SubTask {
                    verb: Verb::Rotate,
                    target: *target,
                    goal: SubGoal::Angle { target: theta0, rel: qangle(-amount) },
                },
            ]
        }
        TaskParams::PutBlockBack { cube, button, slot } => {
            let (sx, sy) = crate::task::PBB_SLOTS[*slot];
            let (mx, my) = crate::task::PBB_MIDDLE;
            vec![
                SubTask { verb: Verb::Pick, target: *cube, goal: SubGoal::None },
                SubTask {
                    verb: Verb::Place,
                    target: *cube,
                    goal: SubGoal::Pose { x: mx, y: my, level: 0 },
                },
                SubTask { verb: Verb::Press, target: *button, goal: SubGoal::None },
                SubTask { verb: Verb::Pick, target: *cube, goal: SubGoal::None },
                SubTask {
                    verb: Verb::Restore,
                    target: *cube,
                    goal: SubGoal::Pose { x: sx, y: sy, level: 0 },
                },
            ]
        }
    };
    (grounding, plan)
}

/// Render a sub-task as a grammar description against the current state.
pub fn describe(sub: &SubTask, state: &WorldState, task: &TaskSpec) -> Description {
    let name = |id: u32| task.object_names[id as usize].clone();
    match (sub.verb, &sub.goal) {
        (Verb::Touch, _) => Description::Touch { name: name(sub.target) },
        (Verb::Reset, _) => Description::Reset,
        (Verb::Pick, _) => {
            let p = obj(state, sub.target).pose;
            Description::Pick { name: name(sub.target), x: qcoord(p.x), y: qcoord(p.y) }
        }
        (Verb::Place, SubGoal::Pose { x, y, level }) => Description::Place {
            name: name(sub.target),
            x: qcoord(*x),
            y: qcoord(*y),
            level: (*level).clamp(0, 9) as u8,
        },
        (Verb::Restore, SubGoal::Pose { x, y, .. }) => {
            Description::Restore { name: name(sub.target), x: qcoord(*x), y: qcoord(*y) }
        }
        (Verb::PlaceNextTo, SubGoal::Anchor(a)) => {
            Description::PlaceNextTo { name: name(sub.target), anchor: name(*a) }
        }
        (Verb::Topple, _) => Description::Topple { name: name(sub.target) },
        (Verb::Rotate, SubGoal::Angle { rel, .. }) => {
            Description::Rotate { name: name(sub.target), by: *rel }
        }
        (Verb::Press, _) => Description::Press { name: name(sub.target) },
        (Verb::Stack, SubGoal::Anchor(a)) => {
            Description::Stack { name: name(sub.target), on: name(*a) }
        }
        (Verb::Move, SubGoal::Pose { x, y, .. }) => {
            Description::Move { x: qcoord(*x), y: qcoord(*y) }
        }
        // Arity mismatches cannot be built through plan_for.
        _ => Description::Move { x: 50, y: 50 },
    }
}

#[derive(Default)]
struct SubMemory {
    pressed_down: bool,
}

/// Proportional move toward a goal with the travel-level discipline:
/// adjust height to cruise level, translate, then descend.
fn goto(ee: &Pose, gx: f64, gy: f64, glevel: i32, gtheta: Option<f64>, grip: bool) -> Action {
    let dx = gx - ee.x;
    let dy = gy - ee.y;
    let dtheta = gtheta.map(|t| angle_diff(t, ee.theta)).unwrap_or(0.0);
    let xy_aligned = dx.abs() <= EPS && dy.abs() <= EPS;
    if !xy_aligned {
        if ee.level() < TRAVEL_LEVEL {
            return Action { dx: 0.0, dy: 0.0, dz: 1, dtheta: dtheta.clamp(-MAX_DELTA_THETA, MAX_DELTA_THETA), grip };
        }
        return Action {
            dx: dx.clamp(-MAX_DELTA_XY, MAX_DELTA_XY),
            dy: dy.clamp(-MAX_DELTA_XY, MAX_DELTA_XY),
            dz: 0,
            dtheta: dtheta.clamp(-MAX_DELTA_THETA, MAX_DELTA_THETA),
            grip,
        };
    }
    if ee.level() != glevel {
        let dz = if ee.level() < glevel { 1 } else { -1 };
        return Action { dx: 0.0, dy: 0.0, dz, dtheta: dtheta.clamp(-MAX_DELTA_THETA, MAX_DELTA_THETA), grip };
    }
    Action {
        dx: 0.0,
        dy: 0.0,
        dz: 0,
        dtheta: dtheta.clamp(-MAX_DELTA_THETA, MAX_DELTA_THETA),
        grip,
    }
}

fn at(ee: &Pose, gx: f64, gy: f64, glevel: i32) -> bool {
    (gx - ee.x).abs() <= EPS && (gy - ee.y).abs() <= EPS && ee.level() == glevel
}

/// One control step for the active sub-task.
fn control(sub: &SubTask, state: &WorldState, mem: &mut SubMemory) -> Action {
    let ee = &state.ee;
    match sub.verb {
        Verb::Touch => {
            let p = obj(state, sub.target).pose;
            goto(ee, p.x, p.y, p.level() + 1, None, false)
        }
        Verb::Reset | Verb::Move => {
            let (gx, gy, gl, gt) = match sub.goal {
                SubGoal::Pose { x, y, level } => (x, y, level, None),
                _ => {
                    let h = home_pose();
                    (h.x, h.y, h.level(), Some(h.theta))
                }
            };
            goto(ee, gx, gy, gl, gt, state.objects.iter().any(|o| o.attached))
        }
        Verb::Pick => {
            let p = obj(state, sub.target).pose;
            if at(ee, p.x, p.y, p.level() + 1) {
                Action { dx: 0.0, dy: 0.0, dz: 0, dtheta: 0.0, grip: true }
            } else {
                goto(ee, p.x, p.y, p.level() + 1, None, false)
            }
        }
        Verb::Place | Verb::Restore | Verb::PlaceNextTo => {
            let (gx, gy, glevel) = match sub.goal {
                SubGoal::Pose { x, y, level } => (x, y, level),
                SubGoal::Anchor(a) => {
                    let (x, y) = next_to_point(state, a, sub.target);
                    (x, y, 0)
                }
                _ => (0.5, 0.5, 0),
            };
            if at(ee, gx, gy, glevel + 1) {
                Action { dx: 0.0, dy: 0.0, dz: 0, dtheta: 0.0, grip: false }
            } else {
                goto(ee, gx, gy, glevel + 1, None, true)
            }
        }
        Verb::Topple | Verb::Stack => {
            let p = obj(state, sub.target).pose;
            let approach_x = p.x - 0.1;
            let pushing =
                ee.level() == p.level() && (ee.y - p.y).abs() <= EPS && ee.x >= approach_x - EPS;
            if pushing {
                Action { dx: MAX_DELTA_XY, dy: 0.0, dz: 0, dtheta: 0.0, grip: false }
            } else {
                goto(ee, approach_x, p.y, p.level(), None, false)
            }
        }
        Verb::Rotate => {
            let o = obj(state, sub.target);
            let SubGoal::Angle { target, .. } = sub.goal else {
                return Action::NOOP;
            };
            if o.attached {
                let d = angle_diff(target, ee.theta);
                if d.abs() <= EPS {
                    Action { dx: 0.0, dy: 0.0, dz: 0, dtheta: 0.0, grip: false }
                } else {
                    Action {
                        dx: 0.0,
                        dy: 0.0,
                        dz: 0,
                        dtheta: d.clamp(-MAX_DELTA_THETA, MAX_DELTA_THETA),
                        grip: true,
                    }
                }
            } else if at(ee, o.pose.x, o.pose.y, o.pose.level() + 1)
                && angle_diff(o.pose.theta, ee.theta).abs() <= EPS
            {
                Action { dx: 0.0, dy: 0.0, dz: 0, dtheta: 0.0, grip: true }
            } else {
                goto(ee, o.pose.x, o.pose.y, o.pose.level() + 1, Some(o.pose.theta), false)
            }
        }
        Verb::Press => {
            let p = obj(state, sub.target).pose;
            if !at(ee, p.x, p.y, p.level() + 1) && !state.grip_on {
                goto(ee, p.x, p.y, p.level() + 1, None, false)
            } else if !state.grip_on && !mem.pressed_down {
                Action { dx: 0.0, dy: 0.0, dz: 0, dtheta: 0.0, grip: true }
            } else {
                // Release completes the press.
                Action { dx: 0.0, dy: 0.0, dz: 0, dtheta: 0.0, grip: false }
            }
        }
    }
    .clamped()
}

fn completed(sub: &SubTask, state: &WorldState, mem: &SubMemory) -> bool {
    let ee = &state.ee;
    match sub.verb {
        Verb::Touch => {
            let p = obj(state, sub.target).pose;
            at(ee, p.x, p.y, p.level() + 1)
        }
        Verb::Reset => {
            let h = home_pose();
            at(ee, h.x, h.y, h.level()) && angle_diff(ee.theta, h.theta).abs() <= EPS
        }
        Verb::Move => match sub.goal {
            SubGoal::Pose { x, y, level } => at(ee, x, y, level),
            _ => false,
        },
        Verb::Pick => obj(state, sub.target).attached,
        Verb::Place | Verb::Restore => {
            let o = obj(state, sub.target);
            let SubGoal::Pose { x, y, level } = sub.goal else { return false };
            !o.attached
                && (o.pose.x - x).abs() <= EPS
                && (o.pose.y - y).abs() <= EPS
                && o.pose.level() == level
        }
        Verb::PlaceNextTo => {
            let o = obj(state, sub.target);
            let SubGoal::Anchor(a) = sub.goal else { return false };
            !o.attached && o.pose.dist_xy(&obj(state, a).pose) <= 0.1 && !state.grip_on
        }
        Verb::Topple | Verb::Stack => {
            let p = obj(state, sub.target).pose;
            // Column cleared: nothing above table level near any object.
            state.objects.iter().all(|o| {
                o.pose.level() == 0
                    || !state
                        .objects
                        .iter()
                        .any(|q| q.id != o.id && q.pose.dist_xy(&o.pose) <= 0.03)
            }) && p.level() == 0
        }
        Verb::Rotate => {
            let o = obj(state, sub.target);
            let SubGoal::Angle { target, .. } = sub.goal else { return false };
            !o.attached && angle_diff(o.pose.theta, target).abs() <= EPS
        }
        Verb::Press => mem.pressed_down && !state.grip_on,
    }
}

/// Execute the task plan with the greedy controller. Deterministic per
/// (task, initial).
pub fn solve(
    task: &TaskSpec,
    initial: &WorldState,
    seed: u64,
    cfg: &SimConfig,
    tol: &Tolerances,
) -> Result<Trajectory, SolverError> {
    solve_noisy(task, initial, seed, cfg, tol, 0.0)
}

/// Like [`solve`], but jitters the executed motion. The controller closes
/// the loop on the perturbed state, so the resulting demonstrations cover
/// off-path states with corrective actions; a pure-replay learner only
/// ever sees the states its own drift will visit if the data contains
/// them. Only travel-height moves that keep the gripper state are
/// jittered, so descents, grasps, presses, and pushes stay exact.
pub fn demonstrate(
    task: &TaskSpec,
    initial: &WorldState,
    seed: u64,
    cfg: &SimConfig,
    tol: &Tolerances,
    noise: f64,
) -> Result<Trajectory, SolverError> {
    // Jitter near an occupied cell can occasionally trip a stray contact
    // the controller cannot undo; those seeds fall back to a clean solve.
    solve_noisy(task, initial, seed, cfg, tol, noise)
        .or_else(|_| solve(task, initial, seed, cfg, tol))
}

pub fn solve_noisy(
    task: &TaskSpec,
    initial: &WorldState,
    seed: u64,
    cfg: &SimConfig,
    tol: &Tolerances,
    noise: f64,
) -> Result<Trajectory, SolverError> {
    let mut rng = crate::rng::Prng::from_parts(seed, 0xDA7A);
    let (grounding, subtasks) = plan_for(task, initial);
    let plan: Vec<Description> =
        subtasks.iter().map(|s| describe(s, initial, task)).collect();
    let mut steps = Vec::new();
    let mut state = initial.clone();
    let mut budget = SOLVER_BUDGET;
    for sub in &subtasks {
        let mut mem = SubMemory::default();
        loop {
            if budget == 0 {
                return Err(SolverError::BudgetExceeded(SOLVER_BUDGET));
            }
            budget -= 1;
            let desc = describe(sub, &state, task);
            let mut action = control(sub, &state, &mut mem);
            if noise > 0.0
                && action.grip == state.grip_on
                && state.ee.level() == 2
                && rng.next_f64() < 0.4
            {
                action.dx += rng.uniform(-noise, noise);
                action.dy += rng.uniform(-noise, noise);
                action = action.clamped();
            }
            let next = sim::step(&state, &action, cfg);
            if sub.verb == Verb::Press && next.grip_on {
                mem.pressed_down = true;
            }
            let done = completed(sub, &next, &mem);
            steps.push(TrajStep { action, desc, done });
            state = next;
            if done {
                break;
            }
        }
    }
    let traj = Trajectory {
        task: task.clone(),
        seed,
        initial: initial.clone(),
        grounding,
        plan,
        subtasks,
        steps,
    };
    let report = check_success(task, &traj.replay(cfg), tol)?;
    if !report.success {
        return Err(SolverError::Unsound(report));
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::{sample_task, TaskKind};
    use crate::vocab::Vocab;

    fn setup(kind: TaskKind, seed: u64) -> (TaskSpec, WorldState, SimConfig, Tolerances) {
        let cfg = SimConfig::default();
        let tol = Tolerances::default();
        let (spec, initial) = sample_task(kind, seed, &cfg).unwrap();
        (spec, initial, cfg, tol)
    }

    #[test]
    fn touch_reset_pick_plan_is_three_phase() {
        let (spec, initial, ..) = setup(TaskKind::TouchResetPick, 1);
        let (grounding, plan) = plan_for(&spec, &initial);
        assert_eq!(plan.len(), 3);
        assert_eq!(plan[0].verb, Verb::Touch);
        assert_eq!(plan[1].verb, Verb::Reset);
        assert_eq!(plan[2].verb, Verb::Pick);
        assert_eq!(grounding.len(), spec.num_objects + 1);
    }

    #[test]
    fn swap_plan_has_six_subtasks_with_buffer() {
        let (spec, initial, ..) = setup(TaskKind::Swap, 1);
        let (_, plan) = plan_for(&spec, &initial);
        assert_eq!(plan.len(), 6);
        let SubGoal::Pose { x, y, .. } = plan[1].goal else { panic!("no buffer") };
        for o in &initial.objects {
            let d = ((o.pose.x - x).powi(2) + (o.pose.y - y).powi(2)).sqrt();
            assert!(d > 0.1, "buffer too close to an object");
        }
    }

    #[test]
    fn every_kind_solves_over_seeds() {
        for kind in TaskKind::ALL {
            for seed in 0..10 {
                let (spec, initial, cfg, tol) = setup(kind, seed);
                let traj = solve(&spec, &initial, seed, &cfg, &tol)
                    .unwrap_or_else(|e| panic!("{:?} seed {}: {}", kind, seed, e));
                assert_eq!(traj.done_count(), traj.plan.len(), "{:?} seed {}", kind, seed);
            }
        }
    }

    #[test]
    fn touch_reset_pick_has_three_done_flags() {
        let (spec, initial, cfg, tol) = setup(TaskKind::TouchResetPick, 5);
        let traj = solve(&spec, &initial, 5, &cfg, &tol).unwrap();
        assert_eq!(traj.done_count(), 3);
    }

    #[test]
    fn swap_is_longer_than_touch_reset_pick() {
        // Six pick-and-place legs through a buffer beat three short phases.
        let cfg = SimConfig::default();
        let tol = Tolerances::default();
        let mut swap = 0usize;
        let mut trp = 0usize;
        for seed in 0..20 {
            let (s1, i1) = sample_task(TaskKind::Swap, seed, &cfg).unwrap();
            swap += solve(&s1, &i1, seed, &cfg, &tol).unwrap().steps.len();
            let (s2, i2) = sample_task(TaskKind::TouchResetPick, seed, &cfg).unwrap();
            trp += solve(&s2, &i2, seed, &cfg, &tol).unwrap().steps.len();
        }
        assert!(swap > trp, "swap {} vs touch-reset-pick {}", swap, trp);
    }

    #[test]
    fn done_events_partition_in_plan_order() {
        let (spec, initial, cfg, tol) = setup(TaskKind::Swap, 7);
        let traj = solve(&spec, &initial, 7, &cfg, &tol).unwrap();
        let mut idx = 0usize;
        for st in &traj.steps {
            let planned = &traj.subtasks[idx];
            let stepped = describe(planned, &initial, &spec);
            assert_eq!(
                std::mem::discriminant(&st.desc),
                std::mem::discriminant(&stepped),
            );
            if st.done {
                idx += 1;
            }
        }
        assert_eq!(idx, traj.plan.len());
    }

    #[test]
    fn descriptions_round_trip_grammar() {
        let v = Vocab::builtin();
        let (spec, initial, cfg, tol) = setup(TaskKind::PutBlockBack, 2);
        let traj = solve(&spec, &initial, 2, &cfg, &tol).unwrap();
        for st in &traj.steps {
            let toks = st.desc.to_tokens(v);
            assert_eq!(crate::grammar::parse_description(&toks, v).unwrap(), st.desc);
        }
    }

    #[test]
    fn touch_and_return_restores_observation() {
        let (spec, initial, cfg, tol) = setup(TaskKind::TouchResetPick, 3);
        let traj = solve(&spec, &initial, 3, &cfg, &tol).unwrap();
        // Find the reset-done step and compare observations.
        let mut dones = traj.steps.iter().enumerate().filter(|(_, s)| s.done);
        let _touch = dones.next().unwrap().0;
        let reset = dones.next().unwrap().0;
        let trace = traj.replay(&cfg);
        let obs0 = observe(trace.initial());
        let obs_r = observe(&trace.states[reset + 1]);
        assert_eq!(obs0.objects, obs_r.objects);
        assert!(obs0.ee.dist_xy(&obs_r.ee) < 1e-9);
        assert!((obs0.ee.z - obs_r.ee.z).abs() < 1e-12);
    }
}
