//! Step timing against system size at fixed density.

use std::time::Instant;

use crate::datagen::lattice;
use crate::dynamics::{step, StepOptions};
use crate::error::Result;
use crate::geometry::{BoundaryMode, SimBox};
use crate::nn::ModelParams;
use crate::thermo::Closures;
use crate::training::teacher_entropy;

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub n: usize,
    pub steps: usize,
    /// Wall time per step, seconds.
    pub mean: f64,
    pub std: f64,
    /// Fastest step, seconds.
    pub min: f64,
    /// Mean wall time per particle and step, seconds.
    pub per_particle: f64,
}

impl BenchRow {
    pub const CSV_HEADER: &'static str = "n,steps,mean_step_s,std_step_s,min_step_s,per_particle_step_s";

    pub fn csv(&self) -> String {
        format!(
            "{},{},{:.6e},{:.6e},{:.6e},{:.6e}",
            self.n, self.steps, self.mean, self.std, self.min, self.per_particle
        )
    }
}

/// Time `steps` integration steps (after one warm-up step) of a lattice
/// state of each size, in a cubic periodic box at number density `density`.
pub fn bench_steps(params: &ModelParams, sizes: &[usize], density: f64, steps: usize, dt: f64, seed: u64) -> Result<Vec<BenchRow>> {
    let cl = Closures::new(params);
    let dim = params.dim();
    let mut rows = Vec::new();
    for &n in sizes {
        let len = (n as f64 / density).powf(1.0 / dim as f64);
        let b = SimBox::cube(dim, len, BoundaryMode::Periodic, 0.0);
        let mut sys = lattice(n, &b, 0.01, seed);
        sys.s = teacher_entropy(&sys, &cl)?;
        let opts = StepOptions::new(dt, seed);
        sys = step(&sys, &cl, &opts, 0)?.0;
        let mut times = Vec::with_capacity(steps);
        for k in 0..steps {
            let t0 = Instant::now();
            sys = step(&sys, &cl, &opts, k as u64 + 1)?.0;
            times.push(t0.elapsed().as_secs_f64());
        }
        let m = times.iter().sum::<f64>() / steps.max(1) as f64;
        let var = times.iter().map(|t| (t - m).powi(2)).sum::<f64>() / (steps.max(2) - 1) as f64;
        rows.push(BenchRow {
            n,
            steps,
            mean: m,
            std: var.sqrt(),
            min: times.iter().cloned().fold(f64::INFINITY, f64::min),
            per_particle: m / n as f64,
        });
    }
    Ok(rows)
}
