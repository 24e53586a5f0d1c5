//! Runtime checks of the conservation and degeneracy structure.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::forces::{conservative_force, drift, fluctuation, marginal_covariance};
use super::noise::{draw_pair, dwbar, sample_noise, trace};
use super::evaluate_state;
use crate::error::Result;
use crate::geometry::ParticleSystem;
use crate::thermo::Closures;
use crate::vecmath::dot;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Exact,
    MonteCarlo,
    Spectral,
    FiniteDifference,
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub kind: CheckKind,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl Check {
    fn new(name: &str, kind: CheckKind, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            kind,
            value,
            tolerance,
            passed: value.is_finite() && value <= tolerance,
            detail: None,
        }
    }

    fn with_detail(mut self, d: String) -> Self {
        self.detail = Some(d);
        self
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Clone, Debug)]
pub struct VerifyOptions {
    pub n_samples: usize,
    pub dt: f64,
    pub seed: u64,
    /// Noise realizations used by the exact per-sample checks.
    pub n_exact: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            n_samples: 100_000,
            dt: 5e-4,
            seed: 0,
            n_exact: 100,
        }
    }
}

/// Apply the block Poisson matrix to a vector laid out as (r, v, S) per
/// particle: (r, v) ← (v/m, −r/m), S ← 0.
pub fn apply_poisson(x: &[f64], dim: usize, m: f64) -> Vec<f64> {
    let w = 2 * dim + 1;
    let mut y = vec![0.0; x.len()];
    for p in 0..x.len() / w {
        let o = p * w;
        for a in 0..dim {
            y[o + a] = x[o + dim + a] / m;
            y[o + dim + a] = -x[o + a] / m;
        }
    }
    y
}

/// Running mean and variance.
#[derive(Clone, Copy, Debug, Default)]
pub struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn std_error(&self) -> f64 {
        (self.m2 / (self.n - 1.0) / self.n).sqrt()
    }

    /// |mean − expected| / SE.
    pub fn z(&self, expected: f64) -> f64 {
        let se = self.std_error();
        let d = (self.mean - expected).abs();
        if se == 0.0 {
            if d == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            d / se
        }
    }
}

fn sym_entries(dim: usize) -> Vec<(usize, usize)> {
    let mut v = Vec::new();
    for a in 0..dim {
        for b in a..dim {
            v.push((a, b));
        }
    }
    v
}

#[inline]
fn kd(a: usize, b: usize) -> f64 {
    if a == b {
        1.0
    } else {
        0.0
    }
}

/// Expected covariance of G = A dW̄ + B (I/D) tr dW entries (per unit dt).
fn composite_cov(a: f64, b: f64, i: (usize, usize), j: (usize, usize), dim: usize) -> f64 {
    let (al, alp) = i;
    let (be, bep) = j;
    0.5 * a * a * (kd(al, be) * kd(alp, bep) + kd(alp, be) * kd(al, bep))
        + (b * b - a * a) / dim as f64 * kd(al, alp) * kd(be, bep)
}

/// Monte-Carlo outcome: worst z-score and number of entries tested.
#[derive(Clone, Debug)]
pub struct LemmaResult {
    pub name: &'static str,
    pub max_z: f64,
    pub n_entries: usize,
}

/// Sample the four pair-noise identities. Pair (0,1) is compared with
/// itself, with its mirror (1,0), and with the independent pair (0,2).
pub fn lemma_identities(dim: usize, dt: f64, n_samples: usize, seed: u64) -> Vec<LemmaResult> {
    let ent = sym_entries(dim);
    let ne = ent.len();
    let (a1, b1, a2, b2) = (0.8, 1.3, 0.5, 0.9);
    let mut m1 = [Moments::default(); 3];
    let mut m2 = vec![Moments::default(); 2 * ne];
    let mut m3_same = vec![Moments::default(); ne * ne];
    let mut m3_dist = vec![Moments::default(); ne * ne];
    let mut m4_same = vec![Moments::default(); ne * ne];
    let mut m4_dist = vec![Moments::default(); ne * ne];
    let g = |a: f64, b: f64, dw: &[f64; 9]| {
        let wb = dwbar(dw, dim);
        let tr = trace(dw, dim) / dim as f64;
        let mut out = [0.0; 9];
        for r in 0..dim {
            for c in 0..dim {
                out[r * 3 + c] = a * wb[r * 3 + c] + kd(r, c) * b * tr;
            }
        }
        out
    };
    for s in 0..n_samples as u64 {
        let (w01, _) = draw_pair(seed, s, 0, 1, dim, dt);
        let (w10, _) = draw_pair(seed, s, 1, 0, dim, dt);
        let (w02, _) = draw_pair(seed, s, 0, 2, dim, dt);
        let t01 = trace(&w01, dim);
        m1[0].push(t01 * t01);
        m1[1].push(t01 * trace(&w10, dim));
        m1[2].push(t01 * trace(&w02, dim));
        let b01 = dwbar(&w01, dim);
        let b02 = dwbar(&w02, dim);
        for (k, &(a, b)) in ent.iter().enumerate() {
            m2[k].push(t01 * b01[a * 3 + b]);
            m2[ne + k].push(t01 * b02[a * 3 + b]);
        }
        let g01 = g(a1, b1, &w01);
        let g02 = g(a2, b2, &w02);
        for (p, &(a, b)) in ent.iter().enumerate() {
            for (q, &(c, d)) in ent.iter().enumerate() {
                if q >= p {
                    m3_same[p * ne + q].push(b01[a * 3 + b] * b01[c * 3 + d]);
                    m4_same[p * ne + q].push(g01[a * 3 + b] * g01[c * 3 + d]);
                }
                m3_dist[p * ne + q].push(b01[a * 3 + b] * b02[c * 3 + d]);
                m4_dist[p * ne + q].push(g01[a * 3 + b] * g02[c * 3 + d]);
            }
        }
    }
    let df = dim as f64;
    let z1 = [m1[0].z(df * dt), m1[1].z(df * dt), m1[2].z(0.0)];
    let z2: Vec<f64> = m2.iter().map(|m| m.z(0.0)).collect();
    let mut z3 = Vec::new();
    let mut z4 = Vec::new();
    for (p, &i) in ent.iter().enumerate() {
        for (q, &j) in ent.iter().enumerate() {
            if q >= p {
                z3.push(m3_same[p * ne + q].z(composite_cov(1.0, 0.0, i, j, dim) * dt));
                z4.push(m4_same[p * ne + q].z(composite_cov(a1, b1, i, j, dim) * dt));
            }
            z3.push(m3_dist[p * ne + q].z(0.0));
            z4.push(m4_dist[p * ne + q].z(0.0));
        }
    }
    let worst = |v: &[f64]| v.iter().cloned().fold(0.0, f64::max);
    vec![
        LemmaResult {
            name: "lemma_trace_trace",
            max_z: worst(&z1),
            n_entries: z1.len(),
        },
        LemmaResult {
            name: "lemma_trace_deviator",
            max_z: worst(&z2),
            n_entries: z2.len(),
        },
        LemmaResult {
            name: "lemma_deviator_deviator",
            max_z: worst(&z3),
            n_entries: z3.len(),
        },
        LemmaResult {
            name: "lemma_composite",
            max_z: worst(&z4),
            n_entries: z4.len(),
        },
    ]
}

/// Per-entry comparison of empirical fluctuation covariance with the closed form.
#[derive(Clone, Debug)]
pub struct CovarianceComparison {
    pub particle: usize,
    pub analytic: Vec<f64>,
    pub empirical: Vec<f64>,
    /// |empirical − analytic| / SE per entry.
    pub z: Vec<f64>,
}

/// Empirical covariance of (Δṽ_i, ΔS̃_i) over `n_draws` noise realizations
/// for the listed particles, next to the closed-form marginal.
pub fn fluctuation_covariance(
    sys: &ParticleSystem,
    cl: &Closures,
    dt: f64,
    n_draws: usize,
    seed: u64,
    particles: &[usize],
) -> Result<Vec<CovarianceComparison>> {
    let (pairs, th) = evaluate_state(sys, cl)?;
    let dim = sys.dim;
    let k = dim + 1;
    let sigma = marginal_covariance(sys, &pairs, &th, cl, dt);
    // sums of x_a x_b and x_a for the per-entry standard error of the
    // product (zero-mean increments, sample covariance about the sample mean)
    let np = particles.len();
    let mut sx = vec![vec![0.0; k]; np];
    let mut sxx = vec![vec![0.0; k * k]; np];
    let mut sxx2 = vec![vec![0.0; k * k]; np];
    let mut x = vec![0.0; k];
    for s in 0..n_draws as u64 {
        let noise = sample_noise(&pairs, dt, seed, s);
        let fl = fluctuation(sys, &pairs, &noise, &th, cl);
        for (pi, &i) in particles.iter().enumerate() {
            for a in 0..dim {
                x[a] = fl.m_dv[i][a] / cl.mass;
            }
            x[dim] = fl.t_ds[i] / th.energy.t[i];
            for a in 0..k {
                sx[pi][a] += x[a];
                for b in 0..k {
                    let p = x[a] * x[b];
                    sxx[pi][a * k + b] += p;
                    sxx2[pi][a * k + b] += p * p;
                }
            }
        }
    }
    let n = n_draws as f64;
    Ok(particles
        .iter()
        .enumerate()
        .map(|(pi, &i)| {
            let mut emp = vec![0.0; k * k];
            let mut z = vec![0.0; k * k];
            for a in 0..k {
                for b in 0..k {
                    let mean_p = sxx[pi][a * k + b] / n;
                    let c = mean_p - sx[pi][a] / n * sx[pi][b] / n;
                    emp[a * k + b] = c * n / (n - 1.0);
                    let var_p = (sxx2[pi][a * k + b] / n - mean_p * mean_p) * n / (n - 1.0);
                    let se = (var_p / n).sqrt();
                    let d = (emp[a * k + b] - sigma[i][a * k + b]).abs();
                    z[a * k + b] = if se > 0.0 {
                        d / se
                    } else if d == 0.0 {
                        0.0
                    } else {
                        f64::INFINITY
                    };
                }
            }
            CovarianceComparison {
                particle: i,
                analytic: sigma[i].clone(),
                empirical: emp,
                z,
            }
        })
        .collect())
}

/// Minimum eigenvalue of a packed symmetric k×k matrix.
pub fn min_eigenvalue(m: &[f64], k: usize) -> f64 {
    let mat = DMatrix::from_row_slice(k, k, m);
    mat.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Itô energy balance: Σ v·m dv + T dS over dissipative and divergence
/// drift plus ½ Σ (m tr Σ_vv + U_SS Σ_SS)/dt. Returns (residual, scale).
pub fn energy_balance(sys: &ParticleSystem, cl: &Closures) -> Result<(f64, f64)> {
    let (pairs, th) = evaluate_state(sys, cl)?;
    let dim = sys.dim;
    let dt = 1.0;
    let dr = drift(sys, &pairs, &th, cl);
    let sig = marginal_covariance(sys, &pairs, &th, cl, dt);
    let k = dim + 1;
    let m = cl.mass;
    let mut terms = Vec::with_capacity(4 * sys.len());
    for i in 0..sys.len() {
        terms.push(dot(&sys.v[i], &dr.dv_diss[i], dim) + dot(&sys.v[i], &dr.dv_div[i], dim));
        terms.push(dr.tds_diss[i] + dr.tds_div[i]);
        let tr: f64 = (0..dim).map(|a| sig[i][a * k + a]).sum();
        terms.push(0.5 * m * tr);
        terms.push(0.5 * th.energy.u_ss[i] * sig[i][dim * k + dim]);
    }
    let res: f64 = terms.iter().sum();
    let scale: f64 = terms.iter().map(|x| x.abs()).sum();
    Ok((res, scale))
}

/// Directional derivative of the total internal energy along the
/// velocities by central differences, and Σ F·v from the analytic force.
pub fn force_power(sys: &ParticleSystem, cl: &Closures, eps: f64) -> Result<(f64, f64)> {
    let (pairs, th) = evaluate_state(sys, cl)?;
    let f = conservative_force(&pairs, &th);
    let power: f64 = (0..sys.len()).map(|i| dot(&f[i], &sys.v[i], sys.dim)).sum();
    let shifted = |c: f64| -> Result<f64> {
        let mut s = sys.clone();
        for i in 0..s.len() {
            for a in 0..s.dim {
                s.r[i][a] += c * s.v[i][a];
            }
        }
        let (_, t) = evaluate_state(&s, cl)?;
        Ok(t.energy.u.iter().sum())
    };
    let du = (shifted(eps)? - shifted(-eps)?) / (2.0 * eps);
    Ok((power, -du))
}

pub fn verify_structure(sys: &ParticleSystem, cl: &Closures, opts: &VerifyOptions) -> Result<VerifyReport> {
    let dim = sys.dim;
    let n = sys.len();
    let m = cl.mass;
    let (pairs, th) = evaluate_state(sys, cl)?;
    let mut checks = Vec::new();

    // Poisson matrix skew-symmetry and L∇S = 0
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let w = 2 * dim + 1;
    let mut skew: f64 = 0.0;
    for _ in 0..10 {
        let x: Vec<f64> = (0..n * w).map(|_| rng.random::<f64>() - 0.5).collect();
        let lx = apply_poisson(&x, dim, m);
        let q: f64 = x.iter().zip(&lx).map(|(a, b)| a * b).sum();
        skew = skew.max(q.abs());
    }
    checks.push(Check::new("poisson_skew_symmetry", CheckKind::Exact, skew, 1e-12));
    let mut grad_s = vec![0.0; n * w];
    for p in 0..n {
        grad_s[p * w + 2 * dim] = 1.0;
    }
    let ls = apply_poisson(&grad_s, dim, m).iter().map(|x| x.abs()).fold(0.0, f64::max);
    checks.push(Check::new("poisson_entropy_degeneracy", CheckKind::Exact, ls, 1e-12));

    // per-sample noise checks
    let mut degeneracy: f64 = 0.0;
    let mut momentum: f64 = 0.0;
    for s in 0..opts.n_exact as u64 {
        let noise = sample_noise(&pairs, opts.dt, opts.seed, s);
        let fl = fluctuation(sys, &pairs, &noise, &th, cl);
        let mut e = 0.0;
        let mut p = [0.0; 3];
        for i in 0..n {
            e += dot(&sys.v[i], &fl.m_dv[i], dim) + fl.t_ds[i];
            for a in 0..dim {
                p[a] += fl.m_dv[i][a];
            }
        }
        degeneracy = degeneracy.max(e.abs());
        momentum = momentum.max(p.iter().map(|x| x.abs()).fold(0.0, f64::max));
    }
    checks.push(Check::new("noise_energy_degeneracy", CheckKind::Exact, degeneracy, 1e-10));
    checks.push(Check::new("noise_momentum", CheckKind::Exact, momentum, 1e-12));

    let force = conservative_force(&pairs, &th);
    let mut fsum = [0.0; 3];
    for f in &force {
        for a in 0..dim {
            fsum[a] += f[a];
        }
    }
    let fscale = force.iter().map(|f| f.iter().map(|x| x.abs()).sum::<f64>()).sum::<f64>().max(1.0);
    checks.push(Check::new(
        "force_momentum",
        CheckKind::Exact,
        fsum.iter().map(|x| x.abs()).fold(0.0, f64::max) / fscale,
        1e-12,
    ));

    let (res, scale) = energy_balance(sys, cl)?;
    checks.push(
        Check::new("drift_energy_balance", CheckKind::Exact, res.abs() / scale.max(1e-300), 1e-10)
            .with_detail(format!("residual {res:e}, term scale {scale:e}")),
    );

    let (power, du) = force_power(sys, cl, 1e-6)?;
    checks.push(Check::new(
        "force_energy_gradient",
        CheckKind::FiniteDifference,
        (power - du).abs() / du.abs().max(power.abs()).max(1e-12),
        1e-5,
    ));

    for r in lemma_identities(dim, opts.dt, opts.n_samples, opts.seed ^ 0x5eed) {
        checks.push(
            Check::new(r.name, CheckKind::MonteCarlo, r.max_z, 3.0)
                .with_detail(format!("max |z| over {} entries", r.n_entries)),
        );
    }

    let sig = marginal_covariance(sys, &pairs, &th, cl, opts.dt);
    let k = dim + 1;
    let mut min_eig = f64::INFINITY;
    let mut asym: f64 = 0.0;
    for s in &sig {
        min_eig = min_eig.min(min_eigenvalue(s, k));
        for a in 0..k {
            for b in 0..k {
                asym = asym.max((s[a * k + b] - s[b * k + a]).abs());
            }
        }
    }
    checks.push(Check::new("marginal_symmetry", CheckKind::Exact, asym, 0.0));
    checks.push(Check::new("marginal_psd", CheckKind::Spectral, -min_eig, 1e-10).with_detail(format!("min eigenvalue {min_eig:e}")));

    let passed = checks.iter().all(|c| c.passed);
    Ok(VerifyReport { passed, checks })
}
