//! Synthetic ground-truth trajectories from DPD or from a frozen model.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dpd::{dpd_step, DpdParams};
use crate::error::{Error, Result};
use crate::geometry::{BoundaryMode, ParticleSystem, SimBox};
use crate::nn::ModelParams;
use crate::training::rollout;
use crate::trajectory::Trajectory;

#[derive(Clone, Debug, Default, PartialEq)]
pub enum Forcing {
    #[default]
    None,
    /// Vortex initial velocity field of the given amplitude.
    TaylorGreen { amplitude: f64 },
    /// Lees-Edwards boundaries sheared at `rate`.
    Shear { rate: f64 },
}

/// Particles on the smallest simple lattice with at least `n` sites, with
/// Maxwell velocities at temperature `kbt / m` and zero total momentum.
pub fn lattice(n: usize, sim_box: &SimBox, kbt_over_m: f64, seed: u64) -> ParticleSystem {
    let dim = sim_box.dim;
    let mut side = 1usize;
    while side.pow(dim as u32) < n {
        side += 1;
    }
    let r: Vec<[f64; 3]> = (0..n)
        .map(|k| {
            let mut x = [0.0; 3];
            let mut rem = k;
            for a in 0..dim {
                x[a] = (rem % side) as f64 + 0.5;
                x[a] *= sim_box.lengths[a] / side as f64;
                rem /= side;
            }
            x
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, kbt_over_m.max(0.0).sqrt()).expect("finite temperature");
    let mut v: Vec<[f64; 3]> = (0..n)
        .map(|_| {
            let mut u = [0.0; 3];
            for c in u.iter_mut().take(dim) {
                *c = normal.sample(&mut rng);
            }
            u
        })
        .collect();
    if n > 0 {
        for a in 0..dim {
            let mean = v.iter().map(|u| u[a]).sum::<f64>() / n as f64;
            v.iter_mut().for_each(|u| u[a] -= mean);
        }
    }
    ParticleSystem::new(sim_box.clone(), r, v, vec![0.0; n])
}

/// Classical Taylor-Green vortex in the x-y plane.
pub fn taylor_green(sys: &mut ParticleSystem, amplitude: f64) {
    let kx = 2.0 * std::f64::consts::PI / sys.sim_box.lengths[0];
    let ky = 2.0 * std::f64::consts::PI / sys.sim_box.lengths[1];
    let kz = if sys.dim == 3 { 2.0 * std::f64::consts::PI / sys.sim_box.lengths[2] } else { 0.0 };
    for (r, v) in sys.r.iter().zip(sys.v.iter_mut()) {
        let cz = (kz * r[2]).cos();
        v[0] += amplitude * (kx * r[0]).sin() * (ky * r[1]).cos() * cz;
        v[1] -= amplitude * (kx * r[0]).cos() * (ky * r[1]).sin() * cz;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DpdGasSpec {
    pub n: usize,
    pub dim: usize,
    pub length: f64,
    pub h: f64,
    pub dt: f64,
    pub params: DpdParams,
    pub forcing: Forcing,
    pub equilibration_steps: usize,
    pub n_snapshots: usize,
    /// Integration steps between recorded snapshots.
    pub stride: usize,
    pub seed: u64,
}

impl Default for DpdGasSpec {
    fn default() -> Self {
        Self {
            n: 500,
            dim: 3,
            length: 5.5,
            h: 1.0,
            dt: 0.01,
            params: DpdParams::default(),
            forcing: Forcing::None,
            equilibration_steps: 1000,
            n_snapshots: 500,
            stride: 1,
            seed: 0,
        }
    }
}

impl DpdGasSpec {
    pub fn sim_box(&self) -> SimBox {
        match self.forcing {
            Forcing::Shear { rate } => SimBox::cube(self.dim, self.length, BoundaryMode::LeesEdwards, rate),
            _ => SimBox::cube(self.dim, self.length, BoundaryMode::Periodic, 0.0),
        }
    }
}

/// Equilibrated and then recorded DPD trajectory.
pub fn gen_dpd_gas(spec: &DpdGasSpec) -> Result<Trajectory> {
    spec.params.validate()?;
    if spec.n_snapshots == 0 || spec.stride == 0 || !(spec.dt > 0.0) {
        return Err(Error::InvalidArgument("need n_snapshots, stride and dt positive".into()));
    }
    let b = spec.sim_box();
    b.validate()?;
    let mut sys = lattice(spec.n, &b, spec.params.kbt / spec.params.m, spec.seed);
    if let Forcing::Shear { rate } = spec.forcing {
        let ly = b.lengths[1];
        for (r, v) in sys.r.iter().zip(sys.v.iter_mut()) {
            v[0] += rate * (r[1] - 0.5 * ly);
        }
    }
    let mut step = 0u64;
    for _ in 0..spec.equilibration_steps {
        sys = dpd_step(&sys, &spec.params, spec.h, spec.dt, spec.seed, step)?;
        step += 1;
    }
    if let Forcing::TaylorGreen { amplitude } = spec.forcing {
        taylor_green(&mut sys, amplitude);
    }
    sys.time = 0.0;
    sys.images.iter_mut().for_each(|m| *m = [0; 3]);
    let mut traj = Trajectory::new(spec.dim, spec.dt * spec.stride as f64);
    traj.push(&sys, 0);
    for k in 1..spec.n_snapshots {
        for _ in 0..spec.stride {
            sys = dpd_step(&sys, &spec.params, spec.h, spec.dt, spec.seed, step)?;
            step += 1;
        }
        traj.push(&sys, (k * spec.stride) as u64);
    }
    Ok(traj)
}

/// Rollout of a frozen model recording positions and velocities only.
pub fn gen_from_model(params: &ModelParams, init: &ParticleSystem, n_snapshots: usize, dt: f64, seed: u64, stride: usize) -> Result<Trajectory> {
    if n_snapshots == 0 {
        return Err(Error::InvalidArgument("need at least one snapshot".into()));
    }
    let mut traj = rollout(init, params, (n_snapshots - 1) * stride, dt, seed, stride)?;
    traj.entropy = None;
    Ok(traj)
}
