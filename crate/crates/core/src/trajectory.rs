//! Recorded particle trajectories: snapshots of positions and velocities at a
//! uniform time spacing.

use crate::error::{Error, Result};
use crate::geometry::{unwrap_positions, ParticleSystem, SimBox};
use crate::vecmath::Vec3;

#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub step: u64,
    pub time: f64,
    /// Box at this frame; the Lees-Edwards offset changes over time.
    pub sim_box: SimBox,
    pub r: Vec<Vec3>,
    pub v: Vec<Vec3>,
    pub images: Option<Vec<[i32; 3]>>,
}

impl Frame {
    pub fn from_system(sys: &ParticleSystem, step: u64) -> Self {
        Self {
            step,
            time: sys.time,
            sim_box: sys.sim_box.clone(),
            r: sys.r.clone(),
            v: sys.v.clone(),
            images: Some(sys.images.clone()),
        }
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    /// Particle system with the given entropies.
    pub fn to_system(&self, s: Vec<f64>) -> ParticleSystem {
        let mut sys = ParticleSystem::new(self.sim_box.clone(), self.r.clone(), self.v.clone(), s);
        sys.time = self.time;
        if let Some(im) = &self.images {
            sys.images = im.clone();
        }
        sys
    }

    pub fn unwrapped(&self) -> Result<Vec<Vec3>> {
        let im = self.images.as_ref().ok_or(Error::MissingUnwrapData)?;
        Ok(unwrap_positions(&self.r, im, &self.sim_box))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub dim: usize,
    pub dt: f64,
    pub frames: Vec<Frame>,
    /// Reference positions of a solid.
    pub r0: Option<Vec<Vec3>>,
    /// Cached entropy labels, one vector per frame.
    pub entropy: Option<Vec<Vec<f64>>>,
}

impl Trajectory {
    pub fn new(dim: usize, dt: f64) -> Self {
        Self {
            dim,
            dt,
            frames: Vec::new(),
            r0: None,
            entropy: None,
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn n_particles(&self) -> usize {
        self.frames.first().map_or(0, |f| f.len())
    }

    pub fn push(&mut self, sys: &ParticleSystem, step: u64) {
        self.frames.push(Frame::from_system(sys, step));
    }

    /// System at frame `k` carrying the reference positions, with entropies
    /// taken from the cache or zero.
    pub fn system(&self, k: usize) -> ParticleSystem {
        let f = &self.frames[k];
        let s = self
            .entropy
            .as_ref()
            .map(|e| e[k].clone())
            .unwrap_or_else(|| vec![0.0; f.len()]);
        let mut sys = f.to_system(s);
        sys.r0 = self.r0.clone();
        sys
    }

    /// Sub-trajectory of frames `range`.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            dim: self.dim,
            dt: self.dt,
            frames: self.frames[range.clone()].to_vec(),
            r0: self.r0.clone(),
            entropy: self.entropy.as_ref().map(|e| e[range].to_vec()),
        }
    }

    /// Consistent particle count and dimension, time-ordered frames at a
    /// uniform spacing.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_particles();
        let tol = 1e-9 * self.dt.abs().max(1.0);
        for (k, f) in self.frames.iter().enumerate() {
            let bad = |msg: String| Err(Error::InconsistentFrame { frame: k, msg });
            if f.r.len() != n || f.v.len() != n {
                return bad(format!("expected {n} particles, got {}", f.r.len()));
            }
            if f.sim_box.dim != self.dim {
                return bad(format!("dimension {} differs from {}", f.sim_box.dim, self.dim));
            }
            if let Some(im) = &f.images {
                if im.len() != n {
                    return bad("image flags do not match the particle count".into());
                }
            }
            if k > 0 {
                let gap = f.time - self.frames[k - 1].time;
                if gap <= 0.0 {
                    return bad("frames are not time-ordered".into());
                }
                if self.dt > 0.0 && (gap - self.dt).abs() > tol * 1e3 {
                    return bad(format!("spacing {gap} differs from dt = {}", self.dt));
                }
            }
        }
        if let Some(r0) = &self.r0 {
            if r0.len() != n {
                return Err(Error::InconsistentFrame {
                    frame: 0,
                    msg: "reference positions do not match the particle count".into(),
                });
            }
        }
        Ok(())
    }
}
