//! Synthetic single-stroke characters and their joint-space references.
//!
//! Each glyph is a list of waypoints in a unit box. Consecutive waypoints are
//! joined by quintic Hermite segments; a sharp waypoint is passed at rest,
//! a smooth one with a Catmull-Rom tangent, and accelerations are zero at
//! every waypoint so the path is C² everywhere.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DesiredTrajectory;
use crate::error::{Error, Result};
use crate::oracle::RobotParams;
use crate::state::JointState;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    /// Pass at rest (a corner) instead of sweeping through.
    pub sharp: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stroke {
    pub name: String,
    pub waypoints: Vec<Waypoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharacterSet {
    pub strokes: Vec<Stroke>,
}

/// Placement and timing of glyphs in the arm's workspace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CharacterSpec {
    /// Workspace position of the unit box centre (m).
    pub center: [f64; 2],
    /// Edge length of the unit box in the workspace (m).
    pub size: f64,
    /// Mean speed along each segment (m/s).
    pub speed: f64,
    /// Lower bound on a segment's duration (s).
    pub min_segment: f64,
}

impl Default for CharacterSpec {
    fn default() -> Self {
        Self {
            center: [0.35, -0.55],
            size: 0.4,
            speed: 0.6,
            min_segment: 0.15,
        }
    }
}

/// Number of built-in glyphs.
pub const CHARACTER_COUNT: usize = GLYPHS.len();

const F: bool = false;
const S: bool = true;

#[rustfmt::skip]
const GLYPHS: [(&str, &[(f64, f64, bool)]); 20] = [
    ("a", &[(0.75, 0.6, F), (0.45, 0.8, F), (0.2, 0.5, F), (0.35, 0.15, F), (0.7, 0.25, F), (0.8, 0.75, S), (0.85, 0.0, F)]),
    ("b", &[(0.25, 1.0, F), (0.22, 0.05, S), (0.35, 0.45, F), (0.65, 0.5, F), (0.75, 0.2, F), (0.45, 0.0, F), (0.25, 0.12, F)]),
    ("c", &[(0.8, 0.75, F), (0.5, 0.9, F), (0.2, 0.55, F), (0.35, 0.12, F), (0.75, 0.15, F)]),
    ("d", &[(0.7, 0.55, F), (0.4, 0.6, F), (0.2, 0.3, F), (0.4, 0.02, F), (0.7, 0.2, F), (0.75, 1.0, S), (0.8, 0.0, F)]),
    ("e", &[(0.2, 0.45, F), (0.8, 0.55, F), (0.55, 0.85, F), (0.2, 0.55, F), (0.35, 0.1, F), (0.8, 0.2, F)]),
    ("g", &[(0.75, 0.85, F), (0.4, 0.95, F), (0.25, 0.7, F), (0.5, 0.5, F), (0.75, 0.85, S), (0.72, 0.15, F), (0.45, 0.0, F), (0.2, 0.15, F)]),
    ("h", &[(0.2, 1.0, F), (0.2, 0.0, S), (0.3, 0.45, F), (0.6, 0.6, F), (0.75, 0.4, F), (0.8, 0.0, F)]),
    ("l", &[(0.2, 0.3, F), (0.6, 0.8, F), (0.5, 1.0, F), (0.35, 0.7, F), (0.4, 0.1, F), (0.8, 0.05, F)]),
    ("m", &[(0.1, 0.0, F), (0.1, 0.7, S), (0.3, 0.8, F), (0.45, 0.6, F), (0.5, 0.0, S), (0.55, 0.6, F), (0.75, 0.8, F), (0.9, 0.6, F), (0.9, 0.0, F)]),
    ("n", &[(0.2, 0.0, F), (0.2, 0.75, S), (0.45, 0.8, F), (0.7, 0.65, F), (0.8, 0.0, F)]),
    ("o", &[(0.5, 0.9, F), (0.2, 0.6, F), (0.3, 0.1, F), (0.7, 0.1, F), (0.8, 0.6, F), (0.5, 0.9, F)]),
    ("p", &[(0.25, 0.0, F), (0.25, 0.9, S), (0.6, 0.95, F), (0.8, 0.7, F), (0.6, 0.45, F), (0.25, 0.5, F)]),
    ("q", &[(0.75, 0.75, F), (0.45, 0.9, F), (0.2, 0.65, F), (0.4, 0.4, F), (0.75, 0.55, S), (0.75, 0.0, S), (0.9, 0.15, F)]),
    ("r", &[(0.25, 0.0, F), (0.25, 0.7, S), (0.45, 0.8, F), (0.75, 0.75, F)]),
    ("s", &[(0.8, 0.85, F), (0.45, 0.95, F), (0.2, 0.75, F), (0.5, 0.5, F), (0.8, 0.25, F), (0.5, 0.03, F), (0.15, 0.15, F)]),
    ("u", &[(0.2, 0.9, F), (0.25, 0.2, F), (0.5, 0.05, F), (0.75, 0.3, F), (0.8, 0.9, S), (0.85, 0.0, F)]),
    ("v", &[(0.15, 0.9, F), (0.5, 0.0, S), (0.85, 0.9, F)]),
    ("w", &[(0.05, 0.9, F), (0.25, 0.0, S), (0.5, 0.6, S), (0.75, 0.0, S), (0.95, 0.9, F)]),
    ("y", &[(0.2, 0.9, F), (0.3, 0.45, F), (0.6, 0.45, F), (0.75, 0.9, S), (0.65, 0.05, F), (0.35, 0.0, F), (0.2, 0.2, F)]),
    ("z", &[(0.15, 0.85, F), (0.85, 0.85, S), (0.15, 0.05, S), (0.85, 0.05, F)]),
];

/// The first `count` (at most 20) built-in glyphs.
pub fn synth_characters(count: usize) -> Result<CharacterSet> {
    if count > GLYPHS.len() {
        return Err(Error::InvalidArgument(format!(
            "only {} synthetic characters exist, {count} requested",
            GLYPHS.len()
        )));
    }
    let strokes = GLYPHS[..count]
        .iter()
        .map(|(name, pts)| Stroke {
            name: name.to_string(),
            waypoints: pts.iter().map(|&(x, y, sharp)| Waypoint { x, y, sharp }).collect(),
        })
        .collect();
    Ok(CharacterSet { strokes })
}

/// Seeded split of `count` character indices into `n_train` training and
/// `count − n_train` test indices, each sorted.
pub fn split_characters(count: usize, n_train: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n_train > count {
        return Err(Error::InvalidArgument(format!("cannot train on {n_train} of {count} characters")));
    }
    let mut idx: Vec<usize> = (0..count).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// One coordinate of a quintic segment on `[0, T]`.
#[derive(Clone, Copy, Debug)]
struct Quintic([f64; 6]);

impl Quintic {
    fn hermite(p0: f64, v0: f64, a0: f64, p1: f64, v1: f64, a1: f64, t: f64) -> Self {
        let d = p1 - p0;
        Quintic([
            p0,
            v0,
            0.5 * a0,
            (20.0 * d - (8.0 * v1 + 12.0 * v0) * t - (3.0 * a0 - a1) * t * t) / (2.0 * t.powi(3)),
            (-30.0 * d + (14.0 * v1 + 16.0 * v0) * t + (3.0 * a0 - 2.0 * a1) * t * t) / (2.0 * t.powi(4)),
            (12.0 * d - 6.0 * (v1 + v0) * t - (a0 - a1) * t * t) / (2.0 * t.powi(5)),
        ])
    }

    fn eval(&self, t: f64) -> (f64, f64, f64) {
        let c = &self.0;
        let p = c[0] + t * (c[1] + t * (c[2] + t * (c[3] + t * (c[4] + t * c[5]))));
        let v = c[1] + t * (2.0 * c[2] + t * (3.0 * c[3] + t * (4.0 * c[4] + t * 5.0 * c[5])));
        let a = 2.0 * c[2] + t * (6.0 * c[3] + t * (12.0 * c[4] + t * 20.0 * c[5]));
        (p, v, a)
    }
}

struct Segment {
    start: f64,
    duration: f64,
    x: Quintic,
    y: Quintic,
}

/// Workspace path of a stroke: position, velocity, acceleration over time.
pub(crate) struct TimedPath {
    segments: Vec<Segment>,
}

impl TimedPath {
    pub(crate) fn new(stroke: &Stroke, spec: &CharacterSpec) -> Result<Self> {
        if stroke.waypoints.len() < 2 {
            return Err(Error::InvalidArgument(format!("stroke '{}' needs at least two waypoints", stroke.name)));
        }
        if !(spec.size > 0.0) || !(spec.speed > 0.0) || !(spec.min_segment > 0.0) {
            return Err(Error::InvalidArgument("character size, speed and minimum segment must be positive".into()));
        }
        let pts: Vec<[f64; 2]> = stroke
            .waypoints
            .iter()
            .map(|w| {
                [
                    spec.center[0] + spec.size * (w.x - 0.5),
                    spec.center[1] + spec.size * (w.y - 0.5),
                ]
            })
            .collect();
        let m = pts.len();
        let durations: Vec<f64> = pts
            .windows(2)
            .map(|w| ((w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]) / spec.speed).max(spec.min_segment))
            .collect();
        let mut times = vec![0.0; m];
        for k in 1..m {
            times[k] = times[k - 1] + durations[k - 1];
        }
        let vel: Vec<[f64; 2]> = (0..m)
            .map(|k| {
                if k == 0 || k == m - 1 || stroke.waypoints[k].sharp {
                    [0.0, 0.0]
                } else {
                    let dt = times[k + 1] - times[k - 1];
                    [(pts[k + 1][0] - pts[k - 1][0]) / dt, (pts[k + 1][1] - pts[k - 1][1]) / dt]
                }
            })
            .collect();
        let segments = (0..m - 1)
            .map(|k| Segment {
                start: times[k],
                duration: durations[k],
                x: Quintic::hermite(pts[k][0], vel[k][0], 0.0, pts[k + 1][0], vel[k + 1][0], 0.0, durations[k]),
                y: Quintic::hermite(pts[k][1], vel[k][1], 0.0, pts[k + 1][1], vel[k + 1][1], 0.0, durations[k]),
            })
            .collect();
        Ok(Self { segments })
    }

    pub(crate) fn duration(&self) -> f64 {
        self.segments.last().map_or(0.0, |s| s.start + s.duration)
    }

    /// `([x, y], [ẋ, ẏ], [ẍ, ÿ])` at time `t`, clamped to the path's span.
    pub(crate) fn eval(&self, t: f64) -> ([f64; 2], [f64; 2], [f64; 2]) {
        let t = t.clamp(0.0, self.duration());
        let k = self
            .segments
            .iter()
            .rposition(|s| s.start <= t)
            .unwrap_or(0);
        let s = &self.segments[k];
        let local = (t - s.start).min(s.duration);
        let (px, vx, ax) = s.x.eval(local);
        let (py, vy, ay) = s.y.eval(local);
        ([px, py], [vx, vy], [ax, ay])
    }
}

/// Elbow branch with `q2 ∈ [0, π]`. `index` only labels the error.
pub fn inverse_kinematics(p: &RobotParams, x: f64, y: f64, index: usize) -> Result<[f64; 2]> {
    let r = x.hypot(y);
    let (min, max) = ((p.l1 - p.l2).abs(), p.l1 + p.l2);
    let unreachable = || Error::Unreachable {
        index,
        x,
        y,
        distance: r,
        min,
        max,
    };
    let c2 = (r * r - p.l1 * p.l1 - p.l2 * p.l2) / (2.0 * p.l1 * p.l2);
    if !c2.is_finite() || c2.abs() > 1.0 + 1e-12 {
        return Err(unreachable());
    }
    let q2 = c2.clamp(-1.0, 1.0).acos();
    let q1 = x.atan2(-y) - (p.l2 * q2.sin()).atan2(p.l1 + p.l2 * q2.cos());
    Ok([q1, q2])
}

/// Samples a stroke at `fd` and maps it to joint space through inverse
/// kinematics; `q̇ = J⁻¹ ẋ` and `q̈ = J⁻¹ (ẍ − J̇ q̇)`.
pub fn character_to_joint(stroke: &Stroke, spec: &CharacterSpec, p: &RobotParams, fd: f64) -> Result<DesiredTrajectory> {
    if !(fd > 0.0) {
        return Err(Error::InvalidArgument(format!("sample rate {fd} must be positive")));
    }
    let path = TimedPath::new(stroke, spec)?;
    let dt = 1.0 / fd;
    let count = (path.duration() * fd).ceil() as usize + 1;
    let mut points = Vec::with_capacity(count);
    for k in 0..count {
        let (pos, vel, acc) = path.eval(k as f64 * dt);
        let q = inverse_kinematics(p, pos[0], pos[1], k)?;
        let (s1, c1) = q[0].sin_cos();
        let (s12, c12) = (q[0] + q[1]).sin_cos();
        let j = [[p.l1 * c1 + p.l2 * c12, p.l2 * c12], [p.l1 * s1 + p.l2 * s12, p.l2 * s12]];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det.abs() < 1e-9 {
            let (distance, min, max) = (pos[0].hypot(pos[1]), (p.l1 - p.l2).abs(), p.l1 + p.l2);
            return Err(Error::Unreachable {
                index: k,
                x: pos[0],
                y: pos[1],
                distance,
                min,
                max,
            });
        }
        let solve = |b: [f64; 2]| [(j[1][1] * b[0] - j[0][1] * b[1]) / det, (j[0][0] * b[1] - j[1][0] * b[0]) / det];
        let qd = solve(vel);
        let w = qd[0] + qd[1];
        let jdot_qd = [
            -p.l1 * s1 * qd[0] * qd[0] - p.l2 * s12 * w * w,
            p.l1 * c1 * qd[0] * qd[0] + p.l2 * c12 * w * w,
        ];
        let qdd = solve([acc[0] - jdot_qd[0], acc[1] - jdot_qd[1]]);
        points.push(JointState::new(q.to_vec(), qd.to_vec(), qdd.to_vec())?);
    }
    DesiredTrajectory::new(dt, points)
}
