//! Classical dissipative particle dynamics and its maximum-likelihood
//! calibration.

use std::rc::Rc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::draw_pair;
use crate::error::{Error, Result};
use crate::geometry::{build_pairs, wrap_and_advect_boundary, PairSet, ParticleSystem};
use crate::nn::tape::NLL_JITTER;
use crate::nn::{Tape, Tensor};
use crate::training::{split_transitions, Adam, EpochLog};
use crate::trajectory::Trajectory;
use crate::vecmath::{dot, Vec3};

/// Conservative amplitude α, noise amplitude σ, mass m and thermal energy
/// k_BT. The friction γ = σ²/(2 k_BT) is derived.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpdParams {
    pub alpha: f64,
    pub sigma: f64,
    pub m: f64,
    pub kbt: f64,
}

impl Default for DpdParams {
    fn default() -> Self {
        Self {
            alpha: 25.0,
            sigma: 3.0,
            m: 1.0,
            kbt: 1.0,
        }
    }
}

impl DpdParams {
    pub fn gamma(&self) -> f64 {
        self.sigma * self.sigma / (2.0 * self.kbt)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.sigma >= 0.0 && self.m > 0.0 && self.kbt > 0.0 && self.alpha.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid DPD parameters {self:?}")))
        }
    }
}

/// Conservative and random weight 1 − r/h.
#[inline]
pub fn weight(r: f64, h: f64) -> f64 {
    (1.0 - r / h).max(0.0)
}

/// Deterministic pair force on i (conservative plus dissipative).
#[inline]
fn pair_drift(p: &DpdParams, r: f64, h: f64, e: &Vec3, w: &Vec3, dim: usize) -> Vec3 {
    let wc = weight(r, h);
    let mag = p.alpha * wc - p.gamma() * wc * wc * dot(e, w, dim);
    let mut f = [0.0; 3];
    for a in 0..dim {
        f[a] = mag * e[a];
    }
    f
}

/// Sum of conservative and dissipative forces per particle.
pub fn dpd_forces(sys: &ParticleSystem, pairs: &PairSet, p: &DpdParams) -> Vec<Vec3> {
    let dim = sys.dim;
    let per: Vec<Vec3> = (0..pairs.len())
        .into_par_iter()
        .map(|k| {
            let w = pairs.relative_velocity(k, &sys.v, &sys.sim_box);
            pair_drift(p, pairs.dist[k], pairs.h, &pairs.e[k], &w, dim)
        })
        .collect();
    let mut out = vec![[0.0; 3]; sys.len()];
    for (&(i, j), f) in pairs.ij.iter().zip(&per) {
        for a in 0..dim {
            out[i][a] += f[a];
            out[j][a] -= f[a];
        }
    }
    out
}

/// Total conservative potential Σ α h/2 (1 − r/h)² over pairs.
pub fn dpd_potential(pairs: &PairSet, p: &DpdParams) -> f64 {
    pairs
        .dist
        .iter()
        .map(|&r| 0.5 * p.alpha * pairs.h * weight(r, pairs.h).powi(2))
        .sum()
}

/// One semi-implicit Euler-Maruyama step.
pub fn dpd_step(sys: &ParticleSystem, p: &DpdParams, h: f64, dt: f64, seed: u64, step_index: u64) -> Result<ParticleSystem> {
    let dim = sys.dim;
    let pairs = build_pairs(sys, h)?;
    let f = dpd_forces(sys, &pairs, p);
    let kicks: Vec<Vec3> = (0..pairs.len())
        .into_par_iter()
        .map(|k| {
            let (i, j) = pairs.ij[k];
            let dw = draw_pair(seed, step_index, i, j, 1, dt).0[0];
            let s = p.sigma * weight(pairs.dist[k], h) * dw;
            let mut g = [0.0; 3];
            for a in 0..dim {
                g[a] = s * pairs.e[k][a];
            }
            g
        })
        .collect();
    let mut next = sys.clone();
    for i in 0..sys.len() {
        for a in 0..dim {
            next.v[i][a] += f[i][a] / p.m * dt;
        }
    }
    for (&(i, j), g) in pairs.ij.iter().zip(&kicks) {
        for a in 0..dim {
            next.v[i][a] += g[a] / p.m;
            next.v[j][a] -= g[a] / p.m;
        }
    }
    let mut vmax: f64 = 0.0;
    for i in 0..sys.len() {
        for a in 0..dim {
            next.r[i][a] += next.v[i][a] * dt;
        }
        vmax = vmax.max(dot(&next.v[i], &next.v[i], dim).sqrt());
    }
    next.time += dt;
    wrap_and_advect_boundary(&mut next, dt);
    if !vmax.is_finite() || vmax > 1e4 {
        return Err(Error::TrajectoryBlowup {
            step: step_index,
            vmax,
        });
    }
    Ok(next)
}

/// Parameter-independent inputs of one DPD transition.
#[derive(Clone, Debug, Default)]
pub struct DpdTransition {
    pub dim: usize,
    pub dt: f64,
    pub n: usize,
    pub dv: Vec<f64>,
    pub pi: Vec<usize>,
    pub pj: Vec<usize>,
    pub wc: Vec<f64>,
    pub e: Vec<f64>,
    pub ev: Vec<f64>,
    /// Σ_j (w^R)² e eᵀ per particle, D×D row-major.
    pub noise: Vec<f64>,
}

impl DpdTransition {
    pub fn new(traj: &Trajectory, t: usize, h: f64) -> Result<Self> {
        let dim = traj.dim;
        let sys = traj.system(t);
        let next = &traj.frames[t + 1];
        let pairs = build_pairs(&sys, h)?;
        let n = sys.len();
        let u = sys.sim_box.image_velocity();
        let mut d = Self {
            dim,
            dt: traj.dt,
            n,
            noise: vec![0.0; n * dim * dim],
            ..Default::default()
        };
        for i in 0..n {
            let shift = match (&traj.frames[t].images, &next.images) {
                (Some(a), Some(b)) => (b[i][1] - a[i][1]) as f64 * u,
                _ => 0.0,
            };
            for a in 0..dim {
                let corr = if a == 0 { shift } else { 0.0 };
                d.dv.push(next.v[i][a] + corr - sys.v[i][a]);
            }
        }
        for k in 0..pairs.len() {
            let (i, j) = pairs.ij[k];
            let w = pairs.relative_velocity(k, &sys.v, &sys.sim_box);
            let e = pairs.e[k];
            let wc = weight(pairs.dist[k], h);
            d.pi.push(i);
            d.pj.push(j);
            d.wc.push(wc);
            d.e.extend_from_slice(&e[..dim]);
            d.ev.push(dot(&e, &w, dim));
            for a in 0..dim {
                for b in 0..dim {
                    let x = wc * wc * e[a] * e[b];
                    d.noise[i * dim * dim + a * dim + b] += x;
                    d.noise[j * dim * dim + a * dim + b] += x;
                }
            }
        }
        Ok(d)
    }
}

/// Mean transition NLL of one transition and its gradient with respect to
/// (ln α, ln σ, ln m, ln k_BT).
pub fn dpd_loss(theta: &[f64; 4], d: &DpdTransition) -> Result<(f64, [f64; 4])> {
    let tape = Tape::new();
    let dim = d.dim;
    let np = d.pi.len();
    let lp: Vec<_> = theta.iter().map(|&x| tape.param(Tensor::scalar(x))).collect();
    let alpha = lp[0].exp();
    let sigma = lp[1].exp();
    let inv_m = (-lp[2]).exp();
    let kbt = lp[3].exp();
    let gamma = (sigma * sigma).scale(0.5) * kbt.recip();
    let wc = tape.constant(Tensor::column(d.wc.clone()));
    let wd_ev = tape.constant(Tensor::column(d.wc.iter().zip(&d.ev).map(|(w, v)| w * w * v).collect()));
    let mag = wc.mul_scalar(alpha) - wd_ev.mul_scalar(gamma);
    let f_pair = tape.constant(Tensor::new(np, dim, d.e.clone())).mul_col(mag);
    let pi = Rc::new(d.pi.clone());
    let pj = Rc::new(d.pj.clone());
    let force = f_pair.scatter_add(pi, d.n) - f_pair.scatter_add(pj, d.n);
    let resid = tape.constant(Tensor::new(d.n, dim, d.dv.clone())) - force.mul_scalar(inv_m).scale(d.dt);
    let cov = tape
        .constant(Tensor::new(d.n, dim * dim, d.noise.clone()))
        .mul_scalar((sigma * inv_m).square().scale(d.dt));
    let loss = cov.gaussian_nll(resid, NLL_JITTER)?.mean();
    let g = tape.backward(loss);
    let mut grad = [0.0; 4];
    for k in 0..4 {
        grad[k] = g.data_or_zero(lp[k])[0];
    }
    Ok((loss.value().item(), grad))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DpdCalibConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch: usize,
    pub split: f64,
    pub seed: u64,
    /// Hold m at its initial value. The velocity likelihood depends on the
    /// parameters only through α/m, σ/m and k_BT/m.
    pub fix_mass: bool,
}

impl Default for DpdCalibConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 2e-2,
            batch: 10,
            split: 0.75,
            seed: 0,
            fix_mass: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DpdFit {
    pub params: DpdParams,
    pub best_val: f64,
    pub history: Vec<EpochLog>,
}

fn to_params(th: &[f64; 4]) -> DpdParams {
    DpdParams {
        alpha: th[0].exp(),
        sigma: th[1].exp(),
        m: th[2].exp(),
        kbt: th[3].exp(),
    }
}

fn mean_loss(theta: &[f64; 4], data: &[&DpdTransition]) -> Result<(f64, [f64; 4])> {
    let parts: Vec<Result<(f64, [f64; 4])>> = data.par_iter().map(|d| dpd_loss(theta, d)).collect();
    let mut l = 0.0;
    let mut g = [0.0; 4];
    for p in parts {
        let (a, b) = p?;
        l += a;
        for k in 0..4 {
            g[k] += b[k];
        }
    }
    let n = data.len().max(1) as f64;
    Ok((l / n, g.map(|x| x / n)))
}

/// Gradient-descent maximum-likelihood fit of the four DPD parameters.
pub fn dpd_calibrate(traj: &Trajectory, h: f64, init: &DpdParams, cfg: &DpdCalibConfig) -> Result<DpdFit> {
    if traj.len() < 2 {
        return Err(Error::InsufficientSnapshots {
            needed: 2,
            got: traj.len(),
        });
    }
    init.validate()?;
    let data: Vec<DpdTransition> = (0..traj.len() - 1)
        .into_par_iter()
        .map(|t| DpdTransition::new(traj, t, h))
        .collect::<Result<_>>()?;
    let (train_idx, val_idx) = split_transitions(data.len(), cfg.split, cfg.seed);
    let val: Vec<&DpdTransition> = val_idx.iter().map(|&k| &data[k]).collect();
    // a zero noise amplitude has no logarithm; start just above it
    let mut theta = [
        init.alpha.max(1e-12).ln(),
        init.sigma.max(1e-6).ln(),
        init.m.ln(),
        init.kbt.ln(),
    ];
    let mut opt = Adam::new(4, cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut order = train_idx;
    let start = std::time::Instant::now();
    let mut best = (f64::INFINITY, theta);
    let mut history = Vec::new();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for chunk in order.chunks(cfg.batch.max(1)) {
            let b: Vec<&DpdTransition> = chunk.iter().map(|&k| &data[k]).collect();
            let (l, mut g) = mean_loss(&theta, &b)?;
            if !l.is_finite() || !g.iter().all(|x| x.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, last_good: None });
            }
            if cfg.fix_mass {
                g[2] = 0.0;
            }
            sum += l * chunk.len() as f64;
            opt.step(&mut theta, &g);
        }
        let train_nll = sum / order.len().max(1) as f64;
        let val_nll = if val.is_empty() { train_nll } else { mean_loss(&theta, &val)?.0 };
        if !val_nll.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, last_good: None });
        }
        if val_nll < best.0 {
            best = (val_nll, theta);
        }
        history.push(EpochLog {
            epoch,
            train_nll,
            val_nll,
            wall_time: start.elapsed().as_secs_f64(),
        });
    }
    Ok(DpdFit {
        params: to_params(&best.1),
        best_val: best.0,
        history,
    })
}
