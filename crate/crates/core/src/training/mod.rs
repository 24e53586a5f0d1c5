//! Entropy teacher, per-particle Gaussian transition densities, maximum
//! likelihood training and model rollouts.

pub mod graph;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{conservative_force, drift, evaluate_state, marginal_covariance, step, StepOptions};
use crate::error::{Error, Result};
use crate::geometry::{build_pairs, ParticleSystem};
use crate::nn::tape::{gaussian_nll, NLL_JITTER};
use crate::nn::{ModelParams, ParamVector};
use crate::thermo::Closures;
use crate::trajectory::Trajectory;

pub use graph::LossData;

/// Entropy labels from the teacher network: the mean of MLP_S(|r_ij|/h, v_ij)
/// over the neighbours, or MLP_S(1, 0) for an isolated particle.
pub fn teacher_entropy(sys: &ParticleSystem, cl: &Closures) -> Result<Vec<f64>> {
    let pairs = build_pairs(sys, cl.h)?;
    let dim = sys.dim;
    let mut sum = vec![0.0; sys.len()];
    let mut x = vec![0.0; dim + 1];
    for k in 0..pairs.len() {
        let (i, j) = pairs.ij[k];
        let w = pairs.relative_velocity(k, &sys.v, &sys.sim_box);
        x[0] = pairs.dist[k] / cl.h;
        x[1..].copy_from_slice(&w[..dim]);
        sum[i] += cl.teacher.eval(&x)[0];
        x[1..].iter_mut().for_each(|c| *c = -*c);
        sum[j] += cl.teacher.eval(&x)[0];
    }
    let mut sentinel = vec![0.0; dim + 1];
    sentinel[0] = 1.0;
    let isolated = cl.teacher.eval(&sentinel)[0];
    Ok(pairs
        .degree()
        .iter()
        .zip(sum)
        .map(|(&d, s)| if d == 0 { isolated } else { s / d as f64 })
        .collect())
}

/// Per-particle Gaussian of the (velocity, entropy) increment.
#[derive(Clone, Debug, PartialEq)]
pub struct StepDistribution {
    pub dim: usize,
    /// (v + (dv/dt)Δt, S + (dS/dt)Δt) per particle.
    pub mu: Vec<Vec<f64>>,
    /// Marginal covariance plus jitter, (D+1)×(D+1) row-major.
    pub sigma: Vec<Vec<f64>>,
}

/// Mean and marginal covariance of one step from `sys`, whose entropies
/// must already be set.
pub fn predict_distribution(sys: &ParticleSystem, cl: &Closures, dt: f64) -> Result<StepDistribution> {
    let dim = sys.dim;
    let (pairs, th) = evaluate_state(sys, cl)?;
    let f = conservative_force(&pairs, &th);
    let dr = drift(sys, &pairs, &th, cl);
    let mut sigma = marginal_covariance(sys, &pairs, &th, cl, dt);
    let k = dim + 1;
    for s in &mut sigma {
        for a in 0..k {
            s[a * k + a] += NLL_JITTER;
        }
    }
    let mu = (0..sys.len())
        .map(|i| {
            let mut m = Vec::with_capacity(k);
            for a in 0..dim {
                m.push(sys.v[i][a] + (f[i][a] + dr.dv_diss[i][a] + dr.dv_div[i][a]) / cl.mass * dt);
            }
            m.push(sys.s[i] + (dr.tds_diss[i] + dr.tds_div[i]) / th.energy.t[i] * dt);
            m
        })
        .collect();
    Ok(StepDistribution { dim, mu, sigma })
}

/// Mean over particles of ½ ln|Σ| + ½ (x − μ)ᵀ Σ⁻¹ (x − μ).
pub fn nll(dist: &StepDistribution, x: &[Vec<f64>]) -> Result<f64> {
    let k = dist.dim + 1;
    if x.len() != dist.mu.len() {
        return Err(Error::ShapeMismatch {
            expected: dist.mu.len(),
            got: x.len(),
        });
    }
    let mut total = 0.0;
    for (p, ((mu, sigma), x)) in dist.mu.iter().zip(&dist.sigma).zip(x).enumerate() {
        let r: Vec<f64> = x.iter().zip(mu).map(|(a, b)| a - b).collect();
        let (v, _, _) = gaussian_nll(sigma, &r, k, 0.0).ok_or(Error::SingularCovariance { particle: p })?;
        total += v;
    }
    Ok(total / x.len().max(1) as f64)
}

/// Observed (v, S) at frame `t + 1` with the Lees-Edwards velocity remap
/// undone relative to frame `t`.
fn observed(traj: &Trajectory, t: usize, s_next: &[f64]) -> Vec<Vec<f64>> {
    let f0 = &traj.frames[t];
    let f1 = &traj.frames[t + 1];
    let u = f0.sim_box.image_velocity();
    (0..f1.len())
        .map(|i| {
            let mut x: Vec<f64> = f1.v[i][..traj.dim].to_vec();
            if let (Some(a), Some(b)) = (&f0.images, &f1.images) {
                x[0] += (b[i][1] - a[i][1]) as f64 * u;
            }
            x.push(s_next[i]);
            x
        })
        .collect()
}

/// NLL of the transition `t → t+1` with teacher labels at both ends,
/// evaluated on the direct (non-differentiable) path.
pub fn transition_nll(params: &ModelParams, traj: &Trajectory, t: usize) -> Result<f64> {
    let cl = Closures::new(params);
    let mut sys = traj.system(t);
    sys.s = teacher_entropy(&sys, &cl)?;
    let next = traj.system(t + 1);
    let s_next = teacher_entropy(&next, &cl)?;
    let dist = predict_distribution(&sys, &cl, traj.dt)?;
    nll(&dist, &observed(traj, t, &s_next))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Transitions per minibatch.
    pub batch: usize,
    /// Fraction of transitions used for training; the rest validates.
    pub split: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 5000,
            learning_rate: 1e-2,
            batch: 1,
            split: 0.75,
            seed: 0,
        }
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, x: &mut [f64], g: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for k in 0..x.len() {
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g[k];
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g[k] * g[k];
            x[k] -= self.lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + self.eps);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_nll: f64,
    pub val_nll: f64,
    pub wall_time: f64,
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    /// Parameters with the lowest validation NLL.
    pub params: ModelParams,
    pub best_epoch: usize,
    pub best_val: f64,
    pub history: Vec<EpochLog>,
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
}

impl TrainReport {
    pub fn log_csv(&self) -> String {
        let mut s = String::from("epoch,train_nll,val_nll,wall_time\n");
        for e in &self.history {
            s.push_str(&format!("{},{:.10e},{:.10e},{:.6}\n", e.epoch, e.train_nll, e.val_nll, e.wall_time));
        }
        s
    }
}

/// Deterministic shuffled split of the transitions `0..n` into training and
/// validation indices.
pub fn split_transitions(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((n as f64 * fraction).round() as usize).clamp(1.min(n), n);
    let val = idx.split_off(n_train);
    (idx, val)
}

/// Mean NLL over the given transitions and, optionally, its gradient.
pub fn batch_loss(params: &ModelParams, data: &[&LossData], with_grad: bool) -> Result<(f64, Option<ParamVector>)> {
    let parts: Vec<Result<(f64, Option<ParamVector>)>> = data
        .par_iter()
        .map(|d| {
            if with_grad {
                graph::loss_and_grad(params, d).map(|(l, g)| (l, Some(g)))
            } else {
                graph::loss(params, d).map(|l| (l, None))
            }
        })
        .collect();
    let mut total = 0.0;
    let mut grad: Option<Vec<f64>> = None;
    for p in parts {
        let (l, g) = p?;
        total += l;
        if let Some(g) = g {
            match &mut grad {
                Some(acc) => acc.iter_mut().zip(&g.0).for_each(|(a, b)| *a += b),
                None => grad = Some(g.0),
            }
        }
    }
    let k = data.len().max(1) as f64;
    Ok((total / k, grad.map(|g| ParamVector(g.into_iter().map(|x| x / k).collect()))))
}

/// Fit `init` to the trajectory by minibatch Adam on the transition NLL.
/// Returns the parameters with the best validation loss.
pub fn train(traj: &Trajectory, init: &ModelParams, cfg: &TrainConfig) -> Result<TrainReport> {
    train_with(traj, init, cfg, |_| {})
}

/// As `train`, calling `on_epoch` after every epoch.
pub fn train_with(traj: &Trajectory, init: &ModelParams, cfg: &TrainConfig, mut on_epoch: impl FnMut(&EpochLog)) -> Result<TrainReport> {
    if traj.len() < 2 {
        return Err(Error::InsufficientSnapshots {
            needed: 2,
            got: traj.len(),
        });
    }
    traj.validate()?;
    if !(cfg.split > 0.0 && cfg.split <= 1.0) {
        return Err(Error::Config {
            key: "training.split".into(),
            msg: format!("must lie in (0, 1], got {}", cfg.split),
        });
    }
    let solid = init.strain.is_some();
    let h = init.cutoff();
    let data: Vec<LossData> = (0..traj.len() - 1)
        .into_par_iter()
        .map(|t| LossData::transition(traj, t, h, solid))
        .collect::<Result<_>>()?;
    let (train_idx, val_idx) = split_transitions(data.len(), cfg.split, cfg.seed);
    let val_data: Vec<&LossData> = val_idx.iter().map(|&k| &data[k]).collect();

    let mut params = init.clone();
    let mut x = params.flatten();
    let mut opt = Adam::new(x.len(), cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let start = Instant::now();
    let mut best: Option<(f64, usize, ModelParams)> = None;
    let mut history = Vec::with_capacity(cfg.epochs);
    let batch = cfg.batch.max(1);
    let mut order = train_idx.clone();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut count = 0usize;
        for chunk in order.chunks(batch) {
            let b: Vec<&LossData> = chunk.iter().map(|&k| &data[k]).collect();
            let (l, g) = batch_loss(&params, &b, true)?;
            let g = g.expect("gradient requested");
            if !l.is_finite() || !g.0.iter().all(|x| x.is_finite()) {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    last_good: best.map(|b| Box::new(b.2)),
                });
            }
            sum += l * chunk.len() as f64;
            count += chunk.len();
            opt.step(&mut x.0, &g.0);
            params.unflatten(&x)?;
        }
        let train_nll = sum / count.max(1) as f64;
        let val_nll = if val_data.is_empty() {
            train_nll
        } else {
            batch_loss(&params, &val_data, false)?.0
        };
        if !val_nll.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                last_good: best.map(|b| Box::new(b.2)),
            });
        }
        if best.as_ref().is_none_or(|b| val_nll < b.0) {
            best = Some((val_nll, epoch, params.clone()));
        }
        let log = EpochLog {
            epoch,
            train_nll,
            val_nll,
            wall_time: start.elapsed().as_secs_f64(),
        };
        on_epoch(&log);
        history.push(log);
    }
    let (best_val, best_epoch, best_params) = match best {
        Some(b) => b,
        None => (f64::NAN, 0, params),
    };
    Ok(TrainReport {
        params: best_params,
        best_epoch,
        best_val,
        history,
        train_indices: train_idx,
        val_indices: val_idx,
    })
}

/// Evolve `init` for `n_steps`, recording every `stride`-th state. The
/// teacher sets the initial entropies once; afterwards S follows the
/// dynamics. The recorded trajectory carries the entropies.
pub fn rollout(init: &ParticleSystem, params: &ModelParams, n_steps: usize, dt: f64, seed: u64, stride: usize) -> Result<Trajectory> {
    let cl = Closures::new(params);
    let mut sys = init.clone();
    sys.s = teacher_entropy(&sys, &cl)?;
    let stride = stride.max(1);
    let mut traj = Trajectory::new(sys.dim, dt * stride as f64);
    traj.r0 = sys.r0.clone();
    let mut entropy = vec![sys.s.clone()];
    traj.push(&sys, 0);
    let opts = StepOptions::new(dt, seed);
    for k in 0..n_steps {
        sys = step(&sys, &cl, &opts, k as u64)?.0;
        if (k + 1) % stride == 0 {
            traj.push(&sys, (k + 1) as u64);
            entropy.push(sys.s.clone());
        }
    }
    traj.entropy = Some(entropy);
    Ok(traj)
}
