//! Deterministic 2.5-D tabletop world with a vacuum-style gripper.
//!
//! Continuous x/y in [0,1], discrete stacking levels on z (0.04 units per
//! level), per-object rotation. `step` is a pure function: replaying a
//! recorded action list reproduces the final state bit-exactly.

use crate::rng::Prng;
use serde::{Deserialize, Serialize};

/// Height of one stacking level, in workspace units.
pub const Z_LEVEL: f64 = 0.04;
/// Highest stacking level.
pub const MAX_LEVEL: i32 = 9;
/// Per-step cap on x/y deltas.
pub const MAX_DELTA_XY: f64 = 0.05;
/// Per-step cap on rotation delta, radians.
pub const MAX_DELTA_THETA: f64 = 0.2;

/// Global contact tolerances, kept in one place.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SimConfig {
    /// x/y distance within which the gripper can attach or touch.
    pub attach_tol: f64,
    /// x/y distance within which released objects stack on one another.
    pub stack_tol: f64,
    /// Minimum pairwise separation between sampled objects at reset.
    pub min_separation: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { attach_tol: 0.03, stack_tol: 0.03, min_separation: 0.15 }
    }
}

/// Offsets tried in order when a toppled object needs a landing spot,
/// clockwise starting from +x.
const TOPPLE_OFFSETS: [(f64, f64); 8] = [
    (0.12, 0.0),
    (0.085, -0.085),
    (0.0, -0.12),
    (-0.085, -0.085),
    (-0.12, 0.0),
    (-0.085, 0.085),
    (0.0, 0.12),
    (0.085, 0.085),
];

pub fn wrap_angle(t: f64) -> f64 {
    let mut t = (t + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU);
    if t < 0.0 {
        t += std::f64::consts::TAU;
    }
    t - std::f64::consts::PI
}

/// Shortest signed angular difference a−b, in [−π, π).
pub fn angle_diff(a: f64, b: f64) -> f64 {
    wrap_angle(a - b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    /// Exact multiple of [`Z_LEVEL`].
    pub z: f64,
    /// Radians in [−π, π).
    pub theta: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, level: i32, theta: f64) -> Self {
        Pose {
            x: x.clamp(0.0, 1.0),
            y: y.clamp(0.0, 1.0),
            z: level.clamp(0, MAX_LEVEL) as f64 * Z_LEVEL,
            theta: wrap_angle(theta),
        }
    }

    pub fn level(&self) -> i32 {
        (self.z / Z_LEVEL).round() as i32
    }

    pub fn dist_xy(&self, other: &Pose) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

/// The gripper's fixed home pose.
pub fn home_pose() -> Pose {
    Pose::new(0.5, 0.05, 2, 0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectState {
    pub id: u32,
    pub name: String,
    pub pose: Pose,
    pub attached: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub objects: Vec<ObjectState>,
    pub ee: Pose,
    pub grip_on: bool,
    pub step: u64,
}

/// 5-D end-effector delta action. `dz` is in whole levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub dx: f64,
    pub dy: f64,
    pub dz: i8,
    pub dtheta: f64,
    pub grip: bool,
}

impl Action {
    pub const NOOP: Action = Action { dx: 0.0, dy: 0.0, dz: 0, dtheta: 0.0, grip: false };

    pub fn clamped(&self) -> Action {
        Action {
            dx: self.dx.clamp(-MAX_DELTA_XY, MAX_DELTA_XY),
            dy: self.dy.clamp(-MAX_DELTA_XY, MAX_DELTA_XY),
            dz: self.dz.clamp(-1, 1),
            dtheta: self.dtheta.clamp(-MAX_DELTA_THETA, MAX_DELTA_THETA),
            grip: self.grip,
        }
    }

    /// Continuous 5-vector view: [dx, dy, dz(levels), dtheta, grip].
    pub fn to_vec5(&self) -> [f64; 5] {
        [self.dx, self.dy, self.dz as f64, self.dtheta, if self.grip { 1.0 } else { 0.0 }]
    }

    pub fn from_vec5(v: [f64; 5]) -> Action {
        Action {
            dx: v[0],
            dy: v[1],
            dz: v[2].round().clamp(-1.0, 1.0) as i8,
            dtheta: v[3],
            grip: v[4] >= 0.5,
        }
        .clamped()
    }
}

/// Initial placement request for one object.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectInit {
    pub name: String,
    /// Fixed (x, y) placement; sampled uniformly when absent.
    pub fixed: Option<(f64, f64)>,
}

/// Layout request consumed by [`reset`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResetSpec {
    pub objects: Vec<ObjectInit>,
    /// Sampled objects get a random rotation when true.
    pub random_theta: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("rejection sampling failed after {0} draws: too many objects for the separation constraint")]
    SamplingExhausted(usize),
}

/// Sample an initial world. Deterministic per (spec, seed).
pub fn reset(spec: &ResetSpec, seed: u64, cfg: &SimConfig) -> Result<WorldState, SimError> {
    const MAX_DRAWS: usize = 10_000;
    let mut rng = Prng::from_parts(seed, 0x5e7);
    let mut placed: Vec<(f64, f64)> = spec.objects.iter().filter_map(|o| o.fixed).collect();
    let mut objects = Vec::with_capacity(spec.objects.len());
    let mut draws = 0usize;
    for (i, init) in spec.objects.iter().enumerate() {
        let (x, y) = match init.fixed {
            Some(p) => p,
            None => loop {
                if draws >= MAX_DRAWS {
                    return Err(SimError::SamplingExhausted(MAX_DRAWS));
                }
                draws += 1;
                let x = rng.uniform(0.1, 0.9);
                let y = rng.uniform(0.1, 0.9);
                if placed
                    .iter()
                    .all(|&(px, py)| ((x - px).powi(2) + (y - py).powi(2)).sqrt() >= cfg.min_separation)
                {
                    placed.push((x, y));
                    break (x, y);
                }
            },
        };
        let theta = if init.fixed.is_none() && spec.random_theta {
            rng.uniform(-std::f64::consts::PI, std::f64::consts::PI)
        } else {
            0.0
        };
        objects.push(ObjectState {
            id: i as u32,
            name: init.name.clone(),
            pose: Pose::new(x, y, 0, theta),
            attached: false,
        });
    }
    Ok(WorldState { objects, ee: home_pose(), grip_on: false, step: 0 })
}

fn settle_level(objects: &[ObjectState], skip_id: u32, x: f64, y: f64, cfg: &SimConfig) -> i32 {
    let occupied: Vec<i32> = objects
        .iter()
        .filter(|o| {
            o.id != skip_id
                && !o.attached
                && ((o.pose.x - x).powi(2) + (o.pose.y - y).powi(2)).sqrt() < cfg.stack_tol
        })
        .map(|o| o.pose.level())
        .collect();
    let mut level = 0;
    while occupied.contains(&level) {
        level += 1;
    }
    level.min(MAX_LEVEL)
}

/// Advance the world by one clamped action. Pure function.
pub fn step(state: &WorldState, action: &Action, cfg: &SimConfig) -> WorldState {
    let a = action.clamped();
    let mut next = state.clone();

    next.ee = Pose::new(
        state.ee.x + a.dx,
        state.ee.y + a.dy,
        state.ee.level() + a.dz as i32,
        state.ee.theta + a.dtheta,
    );

    // Attached object moves rigidly with the gripper, one level below it.
    let attached_idx = next.objects.iter().position(|o| o.attached);
    if let Some(i) = attached_idx {
        let lvl = (next.ee.level() - 1).max(0);
        next.objects[i].pose = Pose::new(next.ee.x, next.ee.y, lvl, next.ee.theta);
    }

    // A lateral push through a stacked object scatters everything above
    // table level in that column to adjacent free positions.
    let moved_laterally = a.dx.abs() > 1e-12 || a.dy.abs() > 1e-12;
    if moved_laterally {
        let hit = next.objects.iter().find(|o| {
            !o.attached
                && o.pose.level() >= 1
                && o.pose.dist_xy(&next.ee) < cfg.attach_tol
                && o.pose.level() == next.ee.level()
        });
        if let Some(hit) = hit {
            let (cx, cy) = (hit.pose.x, hit.pose.y);
            topple_column(&mut next.objects, cx, cy, cfg);
        }
    }

    // Grip transitions.
    if !state.grip_on && a.grip {
        let mut best: Option<(usize, f64)> = None;
        for (i, o) in next.objects.iter().enumerate() {
            if o.attached {
                continue;
            }
            let d = o.pose.dist_xy(&next.ee);
            if d < cfg.attach_tol && o.pose.level() + 1 == next.ee.level() {
                if best.map_or(true, |(_, bd)| d < bd) {
                    best = Some((i, d));
                }
            }
        }
        if let Some((i, _)) = best {
            let lvl = next.objects[i].pose.level();
            next.objects[i].attached = true;
            next.objects[i].pose = Pose::new(next.ee.x, next.ee.y, lvl, next.ee.theta);
        }
    } else if state.grip_on && !a.grip {
        if let Some(i) = next.objects.iter().position(|o| o.attached) {
            let (x, y) = (next.objects[i].pose.x, next.objects[i].pose.y);
            let id = next.objects[i].id;
            let lvl = settle_level(&next.objects, id, x, y, cfg);
            next.objects[i].attached = false;
            let theta = next.objects[i].pose.theta;
            next.objects[i].pose = Pose::new(x, y, lvl, theta);
        }
    }
    next.grip_on = a.grip;
    next.step = state.step + 1;
    next
}

fn topple_column(objects: &mut [ObjectState], cx: f64, cy: f64, cfg: &SimConfig) {
    let mut column: Vec<usize> = (0..objects.len())
        .filter(|&i| {
            !objects[i].attached
                && objects[i].pose.level() > 0
                && ((objects[i].pose.x - cx).powi(2) + (objects[i].pose.y - cy).powi(2)).sqrt()
                    < cfg.stack_tol
        })
        .collect();
    // Top of the stack scatters first.
    column.sort_by_key(|&i| std::cmp::Reverse(objects[i].pose.level()));
    for i in column {
        let mut landed = false;
        for &(ox, oy) in TOPPLE_OFFSETS.iter() {
            let nx = (cx + ox).clamp(0.05, 0.95);
            let ny = (cy + oy).clamp(0.05, 0.95);
            let free = objects.iter().all(|o| {
                o.id == objects[i].id
                    || ((o.pose.x - nx).powi(2) + (o.pose.y - ny).powi(2)).sqrt() >= 0.06
            });
            if free {
                let theta = objects[i].pose.theta;
                objects[i].pose = Pose::new(nx, ny, 0, theta);
                landed = true;
                break;
            }
        }
        if !landed {
            // Every slot blocked: drop in place at table level.
            let p = objects[i].pose;
            objects[i].pose = Pose::new(p.x, p.y, 0, p.theta);
        }
    }
}

/// Markovian snapshot handed to policies. Carries no history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub objects: Vec<ObsObject>,
    pub ee: Pose,
    pub grip_on: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObsObject {
    pub id: u32,
    pub name: String,
    pub pose: Pose,
}

pub fn observe(state: &WorldState) -> Observation {
    Observation {
        objects: state
            .objects
            .iter()
            .map(|o| ObsObject { id: o.id, name: o.name.clone(), pose: o.pose })
            .collect(),
        ee: state.ee,
        grip_on: state.grip_on,
    }
}

const GRID: usize = 21;

/// Plain-text top-down view. Objects show their id digit (topmost wins),
/// the gripper shows '+'.
pub fn render_text(state: &WorldState) -> String {
    let mut cells = vec![vec![('.', -1i32); GRID]; GRID];
    for o in &state.objects {
        let cx = ((o.pose.x * (GRID - 1) as f64).round() as usize).min(GRID - 1);
        let cy = ((o.pose.y * (GRID - 1) as f64).round() as usize).min(GRID - 1);
        let lvl = o.pose.level();
        if lvl >= cells[cy][cx].1 {
            let ch = char::from_digit(o.id % 10, 10).unwrap_or('?');
            cells[cy][cx] = (ch, lvl);
        }
    }
    let ex = ((state.ee.x * (GRID - 1) as f64).round() as usize).min(GRID - 1);
    let ey = ((state.ee.y * (GRID - 1) as f64).round() as usize).min(GRID - 1);
    cells[ey][ex].0 = '+';
    // Row y = max at top so the picture matches (x right, y up).
    let mut out = String::new();
    for row in cells.iter().rev() {
        for &(ch, _) in row {
            out.push(ch);
        }
        out.push('\n');
    }
    out
}

/// Small PPM raster of the same view.
pub fn render_ppm(state: &WorldState) -> Vec<u8> {
    const PALETTE: [(u8, u8, u8); 6] = [
        (220, 50, 50),
        (50, 180, 50),
        (60, 60, 220),
        (220, 200, 40),
        (160, 60, 200),
        (230, 140, 40),
    ];
    const PX: usize = 4;
    let w = GRID * PX;
    let mut img = vec![(30u8, 30u8, 30u8); w * w];
    let mut put = |x: f64, y: f64, c: (u8, u8, u8)| {
        let cx = ((x * (GRID - 1) as f64).round() as usize).min(GRID - 1);
        let cy = GRID - 1 - ((y * (GRID - 1) as f64).round() as usize).min(GRID - 1);
        for dy in 0..PX {
            for dx in 0..PX {
                img[(cy * PX + dy) * w + cx * PX + dx] = c;
            }
        }
    };
    for o in &state.objects {
        put(o.pose.x, o.pose.y, PALETTE[o.id as usize % PALETTE.len()]);
    }
    put(state.ee.x, state.ee.y, (255, 255, 255));
    let mut out = format!("P6\n{} {}\n255\n", w, w).into_bytes();
    for (r, g, b) in img {
        out.extend_from_slice(&[r, g, b]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_object_spec() -> ResetSpec {
        ResetSpec {
            objects: vec![
                ObjectInit { name: "red cube".into(), fixed: None },
                ObjectInit { name: "blue ball".into(), fixed: None },
            ],
            random_theta: true,
        }
    }

    #[test]
    fn reset_is_deterministic_and_separated() {
        let cfg = SimConfig::default();
        let a = reset(&two_object_spec(), 7, &cfg).unwrap();
        let b = reset(&two_object_spec(), 7, &cfg).unwrap();
        assert_eq!(a, b);
        let d = a.objects[0].pose.dist_xy(&a.objects[1].pose);
        assert!(d >= cfg.min_separation);
        assert_eq!(a.ee, home_pose());
        assert!(a.objects.iter().all(|o| !o.attached));
    }

    #[test]
    fn reset_three_objects_distinct_ids() {
        let cfg = SimConfig::default();
        let spec = ResetSpec {
            objects: (0..3)
                .map(|i| ObjectInit { name: format!("obj {}", i), fixed: None })
                .collect(),
            random_theta: false,
        };
        let s = reset(&spec, 3, &cfg).unwrap();
        let mut ids: Vec<u32> = s.objects.iter().map(|o| o.id).collect();
        ids.dedup();
        assert_eq!(ids.len(), 3);
    }

    #[test]
    fn too_many_objects_errors() {
        let cfg = SimConfig::default();
        let spec = ResetSpec {
            objects: (0..60)
                .map(|i| ObjectInit { name: format!("obj {}", i), fixed: None })
                .collect(),
            random_theta: false,
        };
        assert!(matches!(reset(&spec, 0, &cfg), Err(SimError::SamplingExhausted(_))));
    }

    #[test]
    fn zero_action_only_increments_step() {
        let cfg = SimConfig::default();
        let s = reset(&two_object_spec(), 1, &cfg).unwrap();
        let s2 = step(&s, &Action::NOOP, &cfg);
        assert_eq!(s2.objects, s.objects);
        assert_eq!(s2.ee, s.ee);
        assert_eq!(s2.step, s.step + 1);
    }

    #[test]
    fn grip_attaches_nearest_object() {
        let cfg = SimConfig::default();
        let mut s = reset(&two_object_spec(), 1, &cfg).unwrap();
        let target = s.objects[0].pose;
        s.ee = Pose::new(target.x + 0.01, target.y, 1, 0.0);
        let s2 = step(&s, &Action { grip: true, ..Action::NOOP }, &cfg);
        assert!(s2.objects[0].attached);
        assert_eq!(s2.objects[0].pose.x, s2.ee.x);
        assert_eq!(s2.objects[0].pose.y, s2.ee.y);
        assert_eq!(s2.objects[0].pose.theta, s2.ee.theta);
    }

    #[test]
    fn release_over_object_stacks() {
        let cfg = SimConfig::default();
        let mut s = reset(&two_object_spec(), 2, &cfg).unwrap();
        // Carry object 0 directly above object 1 and release.
        let below = s.objects[1].pose;
        s.objects[0].attached = true;
        s.grip_on = true;
        s.ee = Pose::new(below.x, below.y, 2, 0.0);
        s.objects[0].pose = Pose::new(below.x, below.y, 1, 0.0);
        let s2 = step(&s, &Action::NOOP, &cfg);
        assert!(!s2.objects[0].attached);
        assert_eq!(s2.objects[0].pose.level(), 1);
        assert_eq!(s2.objects[1].pose.level(), 0);
    }

    #[test]
    fn lateral_push_topples_stack() {
        let cfg = SimConfig::default();
        let mut s = reset(&two_object_spec(), 2, &cfg).unwrap();
        let base = s.objects[1].pose;
        s.objects[0].pose = Pose::new(base.x, base.y, 1, 0.0);
        s.ee = Pose::new(base.x - 0.04, base.y, 1, 0.0);
        let s2 = step(&s, &Action { dx: 0.04, ..Action::NOOP }, &cfg);
        assert_eq!(s2.objects[0].pose.level(), 0);
        assert!(s2.objects[0].pose.dist_xy(&s2.objects[1].pose) > cfg.stack_tol);
        assert_eq!(s2.objects.len(), 2);
    }

    #[test]
    fn observation_aliases_histories() {
        let cfg = SimConfig::default();
        let s = reset(&two_object_spec(), 4, &cfg).unwrap();
        let mut s_hist = step(&s, &Action { dx: 0.02, ..Action::NOOP }, &cfg);
        s_hist = step(&s_hist, &Action { dx: -0.02, ..Action::NOOP }, &cfg);
        assert_ne!(s.step, s_hist.step);
        // Poses coincide (x clamped identically) so observations must too.
        assert_eq!(observe(&s), observe(&s_hist));
    }

    #[test]
    fn render_marks_center() {
        let cfg = SimConfig::default();
        let mut s = reset(&two_object_spec(), 5, &cfg).unwrap();
        s.objects[0].pose = Pose::new(0.5, 0.5, 0, 0.0);
        let text = render_text(&s);
        let rows: Vec<&str> = text.lines().collect();
        assert_eq!(rows.len(), GRID);
        assert_eq!(rows[GRID / 2].as_bytes()[GRID / 2], b'0');
        assert_eq!(render_text(&s), render_text(&s));
    }
}
