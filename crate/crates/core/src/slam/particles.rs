use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geometry::normalize_angle;
use crate::messages::LidarScan;
use crate::{OccupancyGrid, Pose2D};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub pose: Pose2D,
    pub weight: f64,
    /// Pose before the most recent action update.
    pub parent_pose: Pose2D,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParticleSet {
    pub particles: Vec<Particle>,
}

impl ParticleSet {
    /// `n` particles drawn from a Gaussian around `center`, equally weighted.
    pub fn gaussian<R: Rng>(center: &Pose2D, n: usize, sigma_xy: f64, sigma_theta: f64, rng: &mut R) -> Self {
        let nxy = Normal::new(0.0, sigma_xy.max(0.0)).expect("finite sigma");
        let nth = Normal::new(0.0, sigma_theta.max(0.0)).expect("finite sigma");
        let w = 1.0 / n.max(1) as f64;
        let particles = (0..n)
            .map(|_| {
                let pose = Pose2D {
                    x: center.x + nxy.sample(rng),
                    y: center.y + nxy.sample(rng),
                    theta: normalize_angle(center.theta + nth.sample(rng)),
                    utime: center.utime,
                };
                Particle { pose, weight: w, parent_pose: pose }
            })
            .collect();
        Self { particles }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.weight).collect()
    }

    pub fn weight_sum(&self) -> f64 {
        self.particles.iter().map(|p| p.weight).sum()
    }

    /// `1 / sum(w^2)` of the normalized weights.
    pub fn effective_sample_size(&self) -> f64 {
        let s = self.weight_sum();
        if s <= 0.0 {
            return 0.0;
        }
        1.0 / self.particles.iter().map(|p| (p.weight / s).powi(2)).sum::<f64>()
    }

    /// Weighted mean position with circular mean heading.
    pub fn posterior(&self) -> Option<Pose2D> {
        let s = self.weight_sum();
        if self.is_empty() || !(s > 0.0) {
            return None;
        }
        let (mut x, mut y, mut sn, mut cs) = (0.0, 0.0, 0.0, 0.0);
        for p in &self.particles {
            let w = p.weight / s;
            x += w * p.pose.x;
            y += w * p.pose.y;
            sn += w * p.pose.theta.sin();
            cs += w * p.pose.theta.cos();
        }
        Some(Pose2D { x, y, theta: sn.atan2(cs), utime: self.particles[0].pose.utime })
    }

    fn normalize(&mut self) {
        let s = self.weight_sum();
        self.particles.iter_mut().for_each(|p| p.weight /= s);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActionModelConfig {
    /// Rotation noise per radian of rotation.
    pub k1: f64,
    /// Rotation noise per meter of translation.
    pub k2: f64,
    /// Translation noise per meter of translation.
    pub k3: f64,
}

impl Default for ActionModelConfig {
    fn default() -> Self {
        Self { k1: 0.2, k2: 0.05, k3: 0.1 }
    }
}

/// Odometry increment as rotate, translate, rotate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdometryDelta {
    pub rot1: f64,
    pub trans: f64,
    pub rot2: f64,
}

impl OdometryDelta {
    /// Reverse motion is expressed as negative translation so the first
    /// rotation stays small.
    pub fn between(prev: &Pose2D, now: &Pose2D) -> Self {
        let dx = now.x - prev.x;
        let dy = now.y - prev.y;
        let mut trans = dx.hypot(dy);
        let mut rot1 = if trans < 1e-9 { 0.0 } else { normalize_angle(dy.atan2(dx) - prev.theta) };
        if rot1.abs() > std::f64::consts::FRAC_PI_2 {
            rot1 = normalize_angle(rot1 - std::f64::consts::PI);
            trans = -trans;
        }
        let rot2 = normalize_angle(now.theta - prev.theta - rot1);
        Self { rot1, trans, rot2 }
    }
}

/// Moves every particle by the odometry increment from `prev` to `now`, applied
/// in the particle's own frame with Gaussian noise on each component.
pub fn apply_action_model<R: Rng>(set: &mut ParticleSet, prev: &Pose2D, now: &Pose2D, cfg: &ActionModelConfig, rng: &mut R) {
    let d = OdometryDelta::between(prev, now);
    let sd_rot1 = cfg.k1 * d.rot1.abs() + cfg.k2 * d.trans.abs();
    let sd_trans = cfg.k3 * d.trans.abs();
    let sd_rot2 = cfg.k1 * d.rot2.abs() + cfg.k2 * d.trans.abs();
    let sample = |sd: f64, rng: &mut R| if sd > 0.0 { Normal::new(0.0, sd).expect("finite sigma").sample(rng) } else { 0.0 };
    for p in &mut set.particles {
        p.parent_pose = p.pose;
        let rot1 = d.rot1 + sample(sd_rot1, rng);
        let trans = d.trans + sample(sd_trans, rng);
        let rot2 = d.rot2 + sample(sd_rot2, rng);
        let heading = p.pose.theta + rot1;
        p.pose = Pose2D {
            x: p.pose.x + trans * heading.cos(),
            y: p.pose.y + trans * heading.sin(),
            theta: normalize_angle(p.pose.theta + rot1 + rot2),
            utime: now.utime,
        };
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorModelConfig {
    /// Range error standard deviation, meters.
    pub sigma: f64,
    /// Per-beam likelihood floor.
    pub p_floor: f64,
    /// Use every n-th valid beam.
    pub beam_stride: usize,
    /// Map cells above this log-odds stop expected-range rays.
    pub occupied_threshold: i8,
    pub max_range: f64,
}

impl Default for SensorModelConfig {
    fn default() -> Self {
        Self { sigma: 0.1, p_floor: 0.01, beam_stride: 4, occupied_threshold: 0, max_range: 12.0 }
    }
}

impl SensorModelConfig {
    /// Log-likelihood of one beam given its expected range.
    #[inline]
    pub fn beam_log_likelihood(&self, measured: f64, expected: f64) -> f64 {
        let z = (measured - expected) / self.sigma;
        let ll = -0.5 * z * z - (self.sigma * (2.0 * std::f64::consts::PI).sqrt()).ln();
        ll.max(self.p_floor.ln())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorUpdate {
    pub beams_used: usize,
    /// The likelihood mass vanished and weights were reset to uniform.
    pub fell_back: bool,
}

/// Scores each particle by comparing `scan` with ranges raycast in `map` from
/// the particle pose, multiplies the result into its weight and renormalizes.
pub fn apply_sensor_model(set: &mut ParticleSet, scan: &LidarScan, map: &OccupancyGrid, cfg: &SensorModelConfig) -> SensorUpdate {
    let beams: Vec<(f64, f64)> = scan.valid_beams().step_by(cfg.beam_stride.max(1)).collect();
    let mut logw: Vec<f64> = set
        .particles
        .iter()
        .map(|p| {
            let mut ll = p.weight.ln();
            for &(range, bearing) in &beams {
                let expected = map.raycast(p.pose.x, p.pose.y, p.pose.theta + bearing, cfg.max_range, cfg.occupied_threshold);
                ll += cfg.beam_log_likelihood(range.min(cfg.max_range), expected);
            }
            ll
        })
        .collect();
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let n = set.len();
    if !max.is_finite() {
        set.particles.iter_mut().for_each(|p| p.weight = 1.0 / n as f64);
        return SensorUpdate { beams_used: beams.len(), fell_back: true };
    }
    logw.iter_mut().for_each(|l| *l = (*l - max).exp());
    for (p, w) in set.particles.iter_mut().zip(&logw) {
        p.weight = *w;
    }
    set.normalize();
    SensorUpdate { beams_used: beams.len(), fell_back: false }
}

/// Indices chosen by systematic resampling with the given offset in `[0, 1/N)`:
/// particle `j` is picked for every point `offset + i/N` that falls in its
/// cumulative-weight interval.
pub fn systematic_indices(weights: &[f64], offset: f64) -> Vec<usize> {
    let n = weights.len();
    if n == 0 {
        return Vec::new();
    }
    if weights.windows(2).all(|w| w[0] == w[1]) {
        return (0..n).collect();
    }
    let total: f64 = weights.iter().sum();
    let step = 1.0 / n as f64;
    let mut out = Vec::with_capacity(n);
    let mut j = 0;
    let mut c = weights[0] / total;
    for i in 0..n {
        let u = offset + i as f64 * step;
        while u >= c && j < n - 1 {
            j += 1;
            c += weights[j] / total;
        }
        out.push(j);
    }
    out
}

/// Low-variance resampling: one random offset, N evenly spaced picks, uniform
/// output weights.
pub fn low_variance_resample<R: Rng>(set: &mut ParticleSet, rng: &mut R) {
    let n = set.len();
    if n == 0 {
        return;
    }
    let offset = rng.gen::<f64>() / n as f64;
    let idx = systematic_indices(&set.weights(), offset);
    let w = 1.0 / n as f64;
    set.particles = idx.into_iter().map(|i| Particle { weight: w, ..set.particles[i] }).collect();
}
