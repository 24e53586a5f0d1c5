//! The metriplectic stochastic update and its structural verifiers.

pub mod forces;
pub mod noise;
pub mod verify;

pub use forces::{conservative_force, drift, fluctuation, marginal_covariance, pair_drift, Drift, Fluctuation, PairDrift, Site};
pub use noise::{draw_pair, sample_noise, PairNoise};
pub use verify::{verify_structure, Check, CheckKind, VerifyOptions, VerifyReport};

use crate::error::{Error, Result};
use crate::geometry::{build_pairs, wrap_and_advect_boundary, PairSet, ParticleSystem};
use crate::thermo::{evaluate, Closures, ThermoState};
use crate::vecmath::{norm2, Vec3};

/// One family of terms of an increment.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Parts {
    pub dv: Vec<Vec3>,
    pub ds: Vec<f64>,
}

impl Parts {
    fn zeros(n: usize) -> Self {
        Self {
            dv: vec![[0.0; 3]; n],
            ds: vec![0.0; n],
        }
    }
}

/// Increment of one step with its decomposition. `dv` and `ds` are the sums
/// of the four parts.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Increment {
    pub dr: Vec<Vec3>,
    pub dv: Vec<Vec3>,
    pub ds: Vec<f64>,
    pub conservative: Parts,
    pub dissipative: Parts,
    pub divergence: Parts,
    pub fluctuation: Parts,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOptions {
    pub dt: f64,
    pub seed: u64,
    /// Largest admissible particle speed after a step.
    pub max_speed: f64,
}

impl StepOptions {
    pub fn new(dt: f64, seed: u64) -> Self {
        Self {
            dt,
            seed,
            max_speed: 1e4,
        }
    }
}

/// Pairs and closures at the current state.
pub fn evaluate_state(sys: &ParticleSystem, cl: &Closures) -> Result<(PairSet, ThermoState)> {
    let pairs = build_pairs(sys, cl.h)?;
    let th = evaluate(sys, &pairs, cl)?;
    Ok((pairs, th))
}

/// Assemble the increment from already evaluated pairs and closures.
pub fn increment(
    sys: &ParticleSystem,
    pairs: &PairSet,
    th: &ThermoState,
    cl: &Closures,
    dt: f64,
    seed: u64,
    step_index: u64,
) -> Increment {
    let n = sys.len();
    let dim = sys.dim;
    let m = cl.mass;
    let force = conservative_force(pairs, th);
    let dr = drift(sys, pairs, th, cl);
    let noise = sample_noise(pairs, dt, seed, step_index);
    let fl = fluctuation(sys, pairs, &noise, th, cl);
    let t = &th.energy.t;

    let mut inc = Increment {
        dr: vec![[0.0; 3]; n],
        dv: vec![[0.0; 3]; n],
        ds: vec![0.0; n],
        conservative: Parts::zeros(n),
        dissipative: Parts::zeros(n),
        divergence: Parts::zeros(n),
        fluctuation: Parts::zeros(n),
    };
    for i in 0..n {
        for a in 0..dim {
            inc.conservative.dv[i][a] = force[i][a] / m * dt;
            inc.dissipative.dv[i][a] = dr.dv_diss[i][a] / m * dt;
            inc.divergence.dv[i][a] = dr.dv_div[i][a] / m * dt;
            inc.fluctuation.dv[i][a] = fl.m_dv[i][a] / m;
            inc.dv[i][a] = inc.conservative.dv[i][a]
                + inc.dissipative.dv[i][a]
                + inc.divergence.dv[i][a]
                + inc.fluctuation.dv[i][a];
        }
        inc.dissipative.ds[i] = dr.tds_diss[i] / t[i] * dt;
        inc.divergence.ds[i] = dr.tds_div[i] / t[i] * dt;
        inc.fluctuation.ds[i] = fl.t_ds[i] / t[i];
        inc.ds[i] = inc.conservative.ds[i] + inc.dissipative.ds[i] + inc.divergence.ds[i] + inc.fluctuation.ds[i];
        for a in 0..dim {
            inc.dr[i][a] = (sys.v[i][a] + inc.dv[i][a]) * dt;
        }
    }
    inc
}

/// Apply an increment with the semi-implicit rule and wrap into the box.
pub fn apply(sys: &ParticleSystem, inc: &Increment, dt: f64) -> ParticleSystem {
    let mut next = sys.clone();
    for i in 0..sys.len() {
        for a in 0..sys.dim {
            next.v[i][a] += inc.dv[i][a];
            next.r[i][a] += inc.dr[i][a];
        }
        next.s[i] += inc.ds[i];
    }
    next.time += dt;
    wrap_and_advect_boundary(&mut next, dt);
    next
}

fn check_blowup(sys: &ParticleSystem, max_speed: f64, step: u64) -> Result<()> {
    let mut vmax: f64 = 0.0;
    let mut finite = true;
    for i in 0..sys.len() {
        let s2 = norm2(&sys.v[i], sys.dim);
        vmax = vmax.max(s2.sqrt());
        finite &= s2.is_finite() && sys.s[i].is_finite() && sys.r[i].iter().all(|x| x.is_finite());
    }
    if !finite || vmax > max_speed {
        return Err(Error::TrajectoryBlowup {
            step,
            vmax: if finite { vmax } else { f64::INFINITY },
        });
    }
    Ok(())
}

/// One step of the full pipeline.
pub fn step(sys: &ParticleSystem, cl: &Closures, opts: &StepOptions, step_index: u64) -> Result<(ParticleSystem, Increment)> {
    let (pairs, th) = evaluate_state(sys, cl)?;
    let inc = increment(sys, &pairs, &th, cl, opts.dt, opts.seed, step_index);
    let next = apply(sys, &inc, opts.dt);
    check_blowup(&next, opts.max_speed, step_index)?;
    Ok((next, inc))
}

/// Total energy Σ ½ m v² + U_i.
pub fn total_energy(sys: &ParticleSystem, cl: &Closures) -> Result<f64> {
    let (_, th) = evaluate_state(sys, cl)?;
    Ok(sys.kinetic_energy(cl.mass) + th.energy.u.iter().sum::<f64>())
}
