//! Desired trajectories and sample datasets.

mod characters;
mod csv_io;

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::{DynSample, JointState};

pub use characters::{
    character_to_joint, inverse_kinematics, CHARACTER_COUNT, split_characters, synth_characters, CharacterSet, CharacterSpec, Stroke,
    Waypoint,
};
pub use csv_io::{export_csv, import_csv, read_csv, write_csv, CsvHeader};

/// Joint references `(q_d, q̇_d, q̈_d)` sampled every `dt` from `t = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct DesiredTrajectory {
    pub dt: f64,
    pub points: Vec<JointState>,
}

impl DesiredTrajectory {
    pub fn new(dt: f64, points: Vec<JointState>) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidArgument(format!("sample period {dt} must be positive")));
        }
        if let Some(first) = points.first() {
            let n = first.dof();
            for (k, p) in points.iter().enumerate() {
                p.validate()?;
                if p.dof() != n {
                    return Err(Error::Shape(format!("point {k} has {} dof, expected {n}", p.dof())));
                }
            }
        }
        Ok(Self { dt, points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dof(&self) -> usize {
        self.points.first().map_or(0, JointState::dof)
    }

    pub fn duration(&self) -> f64 {
        self.points.len().saturating_sub(1) as f64 * self.dt
    }

    /// Largest deviation of `q̇_d`, `q̈_d` from central differences of `q_d`
    /// and `q̇_d` over interior points, as `(velocity, acceleration)`.
    pub fn consistency_error(&self) -> (f64, f64) {
        let mut ev: f64 = 0.0;
        let mut ea: f64 = 0.0;
        for w in self.points.windows(3) {
            for j in 0..self.dof() {
                let v = (w[2].q[j] - w[0].q[j]) / (2.0 * self.dt);
                let a = (w[2].qdot[j] - w[0].qdot[j]) / (2.0 * self.dt);
                ev = ev.max((v - w[1].qdot[j]).abs());
                ea = ea.max((a - w[1].qddot[j]).abs());
            }
        }
        (ev, ea)
    }

    /// Samples of the desired states labelled with `tau(state)`.
    pub fn label(&self, mut tau: impl FnMut(&JointState) -> Vec<f64>) -> Result<Vec<DynSample>> {
        self.points
            .iter()
            .enumerate()
            .map(|(k, p)| DynSample::new(k as f64 * self.dt, p.clone(), tau(p)))
            .collect()
    }
}

/// Per-joint cosine `q_d(t) = offset + A cos(2π f s t + φ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CosineSpec {
    pub amplitude: Vec<f64>,
    /// Hz
    pub frequency: Vec<f64>,
    pub phase: Vec<f64>,
    pub offset: Vec<f64>,
    /// Seconds; unchanged by the velocity scale.
    pub duration: f64,
}

impl Default for CosineSpec {
    /// Two joints at incommensurate frequencies so the path does not close.
    fn default() -> Self {
        Self {
            amplitude: vec![0.8, 0.8],
            frequency: vec![0.5, 0.5 * std::f64::consts::SQRT_2],
            phase: vec![0.0, 0.5 * PI],
            offset: vec![0.0, 0.0],
            duration: 8.0,
        }
    }
}

pub fn cosine_trajectory(spec: &CosineSpec, velocity_scale: f64, fd: f64) -> Result<DesiredTrajectory> {
    let n = spec.amplitude.len();
    if spec.frequency.len() != n || spec.phase.len() != n || spec.offset.len() != n {
        return Err(Error::Shape("cosine amplitude, frequency, phase and offset lengths differ".into()));
    }
    if !(fd > 0.0) || !(velocity_scale > 0.0) || !(spec.duration >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need fd > 0, velocity scale > 0 and duration ≥ 0 (got {fd}, {velocity_scale}, {})",
            spec.duration
        )));
    }
    let dt = 1.0 / fd;
    let count = (spec.duration * fd).round() as usize + 1;
    let points = (0..count)
        .map(|k| {
            let t = k as f64 * dt;
            let mut q = Vec::with_capacity(n);
            let mut qd = Vec::with_capacity(n);
            let mut qdd = Vec::with_capacity(n);
            for j in 0..n {
                let w = 2.0 * PI * spec.frequency[j] * velocity_scale;
                let (s, c) = (w * t + spec.phase[j]).sin_cos();
                q.push(spec.offset[j] + spec.amplitude[j] * c);
                qd.push(-spec.amplitude[j] * w * s);
                qdd.push(-spec.amplitude[j] * w * w * c);
            }
            JointState::new(q, qd, qdd)
        })
        .collect::<Result<Vec<_>>>()?;
    DesiredTrajectory::new(dt, points)
}

/// Adds independent `N(0, σ²)` noise to every field of every sample.
pub fn corrupt(samples: &[DynSample], sigma: f64, seed: u64) -> Result<Vec<DynSample>> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!("noise level {sigma} must be non-negative")));
    }
    if sigma == 0.0 {
        return Ok(samples.to_vec());
    }
    let normal = Normal::new(0.0, sigma).expect("valid standard deviation");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = samples.to_vec();
    for s in &mut out {
        for v in s
            .state
            .q
            .iter_mut()
            .chain(&mut s.state.qdot)
            .chain(&mut s.state.qddot)
            .chain(&mut s.tau)
        {
            *v += normal.sample(&mut rng);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_amplitude_is_constant() {
        let spec = CosineSpec {
            amplitude: vec![0.0, 0.0],
            offset: vec![0.2, -0.1],
            ..CosineSpec::default()
        };
        let tr = cosine_trajectory(&spec, 1.0, 200.0).unwrap();
        assert_eq!(tr.len(), 1601);
        for p in &tr.points {
            assert_eq!(p.q, vec![0.2, -0.1]);
            assert!(p.qdot.iter().chain(&p.qddot).all(|v| *v == 0.0));
        }
    }

    #[test]
    fn velocity_scale_scales_derivatives() {
        let spec = CosineSpec::default();
        let max = |tr: &DesiredTrajectory, f: fn(&JointState) -> &Vec<f64>| {
            tr.points.iter().flat_map(|p| f(p).clone()).fold(0.0f64, |m, v| m.max(v.abs()))
        };
        let a = cosine_trajectory(&spec, 1.0, 1000.0).unwrap();
        let b = cosine_trajectory(&spec, 2.0, 1000.0).unwrap();
        let ratio_v = max(&b, |p| &p.qdot) / max(&a, |p| &p.qdot);
        let ratio_a = max(&b, |p| &p.qddot) / max(&a, |p| &p.qddot);
        assert!((ratio_v - 2.0).abs() < 1e-3, "{ratio_v}");
        assert!((ratio_a - 4.0).abs() < 1e-2, "{ratio_a}");
    }

    #[test]
    fn emitted_derivatives_are_consistent() {
        let tr = cosine_trajectory(&CosineSpec::default(), 1.5, 200.0).unwrap();
        let (ev, ea) = tr.consistency_error();
        // central differences are O(dt²): ‖q⁽³⁾‖ dt² / 6
        assert!(ev < 1e-3 && ea < 1e-2, "{ev} {ea}");
    }

    #[test]
    fn corruption_is_seeded() {
        let tr = cosine_trajectory(&CosineSpec::default(), 1.0, 50.0).unwrap();
        let s = tr.label(|p| p.q.clone()).unwrap();
        assert_eq!(corrupt(&s, 0.0, 1).unwrap(), s);
        assert_eq!(corrupt(&s, 0.1, 1).unwrap(), corrupt(&s, 0.1, 1).unwrap());
        assert_ne!(corrupt(&s, 0.1, 1).unwrap(), corrupt(&s, 0.1, 2).unwrap());
        assert!(corrupt(&s, -1.0, 1).is_err());
    }
}
