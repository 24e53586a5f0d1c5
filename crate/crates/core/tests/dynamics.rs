#![allow(clippy::needless_range_loop)]

use metriplex::dynamics::verify::{energy_balance, force_power, fluctuation_covariance, verify_structure, VerifyOptions};
use metriplex::dynamics::{drift, evaluate_state, fluctuation, step, PairNoise, StepOptions};
use metriplex::geometry::{BoundaryMode, ParticleSystem, SimBox};
use metriplex::nn::{Architecture, ModelParams};
use metriplex::thermo::Closures;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cluster(n: usize, dim: usize, spread: f64, seed: u64) -> ParticleSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = SimBox::cube(dim, 1.0, BoundaryMode::Periodic, 0.0);
    let r = (0..n)
        .map(|_| {
            let mut x = [0.0; 3];
            for k in 0..dim {
                x[k] = 0.5 + spread * (rng.random::<f64>() - 0.5);
            }
            x
        })
        .collect();
    let v = (0..n)
        .map(|_| {
            let mut x = [0.0; 3];
            for k in 0..dim {
                x[k] = rng.random::<f64>() - 0.5;
            }
            x
        })
        .collect();
    let s = (0..n).map(|_| rng.random::<f64>()).collect();
    ParticleSystem::new(b, r, v, s)
}

fn model(dim: usize, solid: bool, h: f64, seed: u64) -> ModelParams {
    let arch = Architecture {
        dim,
        solid,
        cutoff: h,
        width: 10,
        hidden_layers: 2,
    };
    let mut p = ModelParams::random(&arch, seed);
    p.log_kb = 0.3f64.ln();
    p.log_m = 1.7f64.ln();
    p
}

/// Noise matrix Q: columns are (Δṽ, ΔS̃) responses to unit noise inputs.
fn noise_matrix(sys: &ParticleSystem, cl: &Closures) -> Vec<Vec<f64>> {
    let (pairs, th) = evaluate_state(sys, cl).unwrap();
    let dim = sys.dim;
    let n = sys.len();
    let per = dim * dim + 1;
    let mut cols = Vec::new();
    for k in 0..pairs.len() {
        for e in 0..per {
            let mut noise = PairNoise {
                dim,
                dw: vec![[0.0; 9]; pairs.len()],
                dv: vec![0.0; pairs.len()],
            };
            if e < dim * dim {
                noise.dw[k][(e / dim) * 3 + e % dim] = 1.0;
            } else {
                noise.dv[k] = 1.0;
            }
            let fl = fluctuation(sys, &pairs, &noise, &th, cl);
            let mut col = Vec::with_capacity(n * (dim + 1));
            for i in 0..n {
                for a in 0..dim {
                    col.push(fl.m_dv[i][a] / cl.mass);
                }
                col.push(fl.t_ds[i] / th.energy.t[i]);
            }
            cols.push(col);
        }
    }
    cols
}

/// M = Q Qᵀ / (2 k_B) over (v, S) coordinates.
fn friction_matrix(sys: &ParticleSystem, cl: &Closures) -> Vec<Vec<f64>> {
    let q = noise_matrix(sys, cl);
    let w = q[0].len();
    let mut m = vec![vec![0.0; w]; w];
    for col in &q {
        for a in 0..w {
            for b in 0..w {
                m[a][b] += col[a] * col[b] / (2.0 * cl.kb);
            }
        }
    }
    m
}

fn perturb(sys: &ParticleSystem, coord: usize, h: f64) -> ParticleSystem {
    let dim = sys.dim;
    let mut s = sys.clone();
    let (i, a) = (coord / (dim + 1), coord % (dim + 1));
    if a < dim {
        s.v[i][a] += h;
    } else {
        s.s[i] += h;
    }
    s
}

fn drift_oracle_case(dim: usize, seed: u64) {
    let h = 0.3;
    let cl = Closures::new(&model(dim, false, h, seed));
    let sys = cluster(5, dim, 0.25, seed + 100);
    let n = sys.len();
    let w = n * (dim + 1);
    let m0 = friction_matrix(&sys, &cl);
    // (∇·M)_a = Σ_b ∂M_ab/∂x_b
    let mut div = vec![0.0; w];
    let eps = 1e-5;
    for b in 0..w {
        let mp = friction_matrix(&perturb(&sys, b, eps), &cl);
        let mm = friction_matrix(&perturb(&sys, b, -eps), &cl);
        for a in 0..w {
            div[a] += (mp[a][b] - mm[a][b]) / (2.0 * eps);
        }
    }
    let mut oracle = vec![0.0; w];
    for a in 0..w {
        let mut ms = 0.0;
        for i in 0..n {
            ms += m0[a][i * (dim + 1) + dim];
        }
        oracle[a] = ms + cl.kb * div[a];
    }
    let (pairs, th) = evaluate_state(&sys, &cl).unwrap();
    let dr = drift(&sys, &pairs, &th, &cl);
    let mut got = vec![0.0; w];
    for i in 0..n {
        for a in 0..dim {
            got[i * (dim + 1) + a] = (dr.dv_diss[i][a] + dr.dv_div[i][a]) / cl.mass;
        }
        got[i * (dim + 1) + dim] = (dr.tds_diss[i] + dr.tds_div[i]) / th.energy.t[i];
    }
    let num: f64 = got.iter().zip(&oracle).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let den: f64 = oracle.iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!(num / den < 1e-6, "dim {dim}: relative drift error {:e}", num / den);
}

#[test]
fn drift_equals_friction_matrix_divergence_2d() {
    drift_oracle_case(2, 1);
}

#[test]
fn drift_equals_friction_matrix_divergence_3d() {
    drift_oracle_case(3, 2);
}

#[test]
fn conservative_force_is_negative_energy_gradient() {
    for (dim, solid) in [(2, false), (3, false), (2, true), (3, true)] {
        let cl = Closures::new(&model(dim, solid, 0.3, 7));
        let mut sys = cluster(8, dim, 0.3, 8);
        if solid {
            let mut r0 = sys.r.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            for x in &mut r0 {
                for k in 0..dim {
                    x[k] += 0.02 * (rng.random::<f64>() - 0.5);
                }
            }
            sys.r0 = Some(r0);
        }
        let (power, du) = force_power(&sys, &cl, 1e-6).unwrap();
        assert!((power - du).abs() <= 1e-5 * du.abs().max(1e-8), "dim {dim} solid {solid}: {power} vs {du}");
    }
}

#[test]
fn ito_energy_balance_is_exact() {
    for dim in [2, 3] {
        let cl = Closures::new(&model(dim, false, 0.3, 11));
        let sys = cluster(12, dim, 0.4, 12);
        let (res, scale) = energy_balance(&sys, &cl).unwrap();
        assert!(res.abs() <= 1e-12 * scale, "dim {dim}: {res:e} of {scale:e}");
    }
}

#[test]
fn structure_report_passes_on_random_model() {
    let cl = Closures::new(&model(3, false, 0.25, 21));
    let sys = cluster(30, 3, 0.8, 22);
    let opts = VerifyOptions {
        n_samples: 20_000,
        n_exact: 20,
        ..Default::default()
    };
    let rep = verify_structure(&sys, &cl, &opts).unwrap();
    for c in &rep.checks {
        if c.kind == metriplex::dynamics::CheckKind::MonteCarlo {
            continue;
        }
        assert!(c.passed, "{} = {:e} > {:e}", c.name, c.value, c.tolerance);
    }
}

#[test]
fn empirical_covariance_tracks_closed_form() {
    let cl = Closures::new(&model(2, false, 0.3, 31));
    let sys = cluster(6, 2, 0.3, 32);
    let cmp = fluctuation_covariance(&sys, &cl, 1e-3, 20_000, 33, &[0, 3]).unwrap();
    for c in &cmp {
        for k in 0..c.analytic.len() {
            assert!(c.z[k] < 5.0, "particle {} entry {k}: z = {}", c.particle, c.z[k]);
        }
    }
}

#[test]
fn momentum_is_conserved_step_by_step() {
    let cl = Closures::new(&model(3, false, 0.25, 41));
    let mut sys = cluster(40, 3, 0.9, 42);
    let opts = StepOptions::new(1e-3, 43);
    for k in 0..50 {
        let p0 = sys.momentum(cl.mass);
        sys = step(&sys, &cl, &opts, k).unwrap().0;
        let p1 = sys.momentum(cl.mass);
        for a in 0..3 {
            assert!((p1[a] - p0[a]).abs() <= 1e-10);
        }
    }
}
