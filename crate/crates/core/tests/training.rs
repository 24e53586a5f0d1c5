#![allow(clippy::needless_range_loop)]

use metriplex::geometry::{BoundaryMode, ParticleSystem, SimBox};
use metriplex::nn::{Architecture, ModelParams, ParamVector};
use metriplex::thermo::Closures;
use metriplex::training::{
    batch_loss, nll, predict_distribution, rollout, split_transitions, teacher_entropy, train, transition_nll, LossData,
    StepDistribution, TrainConfig,
};
use metriplex::trajectory::Trajectory;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn gas(n: usize, dim: usize, len: f64, seed: u64) -> ParticleSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = SimBox::cube(dim, len, BoundaryMode::Periodic, 0.0);
    let mut pick = |c: f64| {
        let mut x = [0.0; 3];
        for k in 0..dim {
            x[k] = c * rng.random::<f64>();
        }
        x
    };
    let r = (0..n).map(|_| pick(len)).collect();
    let v: Vec<_> = (0..n)
        .map(|_| {
            let mut x = pick(1.0);
            x.iter_mut().for_each(|c| *c -= 0.5);
            x
        })
        .collect();
    ParticleSystem::new(b, r, v, vec![0.0; n])
}

fn model(dim: usize, solid: bool, h: f64, width: usize, seed: u64) -> ModelParams {
    let arch = Architecture {
        dim,
        solid,
        cutoff: h,
        width,
        hidden_layers: 2,
    };
    let mut p = ModelParams::random(&arch, seed);
    p.log_kb = 0.05f64.ln();
    p.log_m = 1.3f64.ln();
    p
}

fn data_from(p: &ModelParams, sys: &ParticleSystem, steps: usize, dt: f64) -> Trajectory {
    let mut traj = rollout(sys, p, steps, dt, 17, 1).unwrap();
    traj.entropy = None;
    traj
}

fn solid_system(n: usize, dim: usize, seed: u64) -> ParticleSystem {
    let mut sys = gas(n, dim, 1.0, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
    let r0 = sys
        .r
        .iter()
        .map(|x| {
            let mut y = *x;
            for k in 0..dim {
                y[k] = (y[k] + 0.03 * (rng.random::<f64>() - 0.5)).rem_euclid(1.0);
            }
            y
        })
        .collect();
    sys.r0 = Some(r0);
    sys
}

fn cases() -> Vec<(&'static str, ModelParams, Trajectory)> {
    let mut out = Vec::new();
    for dim in [2, 3] {
        let p = model(dim, false, 0.35, 8, 3 + dim as u64);
        let sys = gas(8, dim, 1.0, 10 + dim as u64);
        out.push(("fluid", p.clone(), data_from(&p, &sys, 2, 1e-3)));
        let p = model(dim, true, 0.35, 8, 5 + dim as u64);
        let sys = solid_system(8, dim, 20 + dim as u64);
        out.push(("solid", p.clone(), data_from(&p, &sys, 2, 1e-3)));
    }
    out
}

#[test]
fn tape_loss_matches_direct_evaluation() {
    for (kind, p, traj) in cases() {
        for t in 0..traj.len() - 1 {
            let d = LossData::transition(&traj, t, p.cutoff(), kind == "solid").unwrap();
            let (tape, _) = batch_loss(&p, &[&d], false).unwrap();
            let direct = transition_nll(&p, &traj, t).unwrap();
            assert!(
                (tape - direct).abs() <= 1e-9 * direct.abs().max(1.0),
                "{kind} D={}: tape {tape} vs direct {direct}",
                traj.dim
            );
        }
    }
}

#[test]
fn tape_gradient_matches_finite_differences() {
    for (kind, p, traj) in cases() {
        let d = LossData::transition(&traj, 0, p.cutoff(), kind == "solid").unwrap();
        let (_, g) = batch_loss(&p, &[&d], true).unwrap();
        let g = g.unwrap();
        let x0 = p.flatten();
        let eps = 1e-6;
        let mut fd = vec![0.0; x0.len()];
        for k in 0..x0.len() {
            let at = |delta: f64| {
                let mut x = x0.clone();
                x.0[k] += delta;
                let mut q = p.clone();
                q.unflatten(&x).unwrap();
                transition_nll(&q, &traj, 0).unwrap()
            };
            fd[k] = (at(eps) - at(-eps)) / (2.0 * eps);
        }
        let num: f64 = g.0.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let den: f64 = fd.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(num / den <= 1e-5, "{kind} D={}: relative gradient error {:e}", traj.dim, num / den);
    }
}

#[test]
fn nll_of_identity_at_mean_is_zero() {
    let dist = StepDistribution {
        dim: 2,
        mu: vec![vec![0.3, -0.2, 1.0]],
        sigma: vec![vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]],
    };
    assert_eq!(nll(&dist, &dist.mu.clone()).unwrap(), 0.0);
}

#[test]
fn nll_of_scaled_identity_is_half_log_det() {
    let e2 = std::f64::consts::E.powi(2);
    for dim in [2usize, 3] {
        let k = dim + 1;
        let mut s = vec![0.0; k * k];
        for a in 0..k {
            s[a * k + a] = e2;
        }
        let dist = StepDistribution {
            dim,
            mu: vec![vec![0.5; k]],
            sigma: vec![s],
        };
        let v = nll(&dist, &dist.mu.clone()).unwrap();
        assert!((v - k as f64).abs() < 1e-12);
    }
}

#[test]
fn nll_matches_explicit_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let k = 4;
        let a = DMatrix::from_fn(k, k, |_, _| rng.random::<f64>() - 0.5);
        let s = &a * a.transpose() + DMatrix::identity(k, k) * 0.1;
        let mu: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
        let x: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
        let r = DMatrix::from_fn(k, 1, |i, _| x[i] - mu[i]);
        let inv = s.clone().try_inverse().unwrap();
        let expect = 0.5 * s.determinant().ln() + 0.5 * (r.transpose() * inv * &r)[(0, 0)];
        let dist = StepDistribution {
            dim: 3,
            mu: vec![mu],
            sigma: vec![s.transpose().as_slice().to_vec()],
        };
        let got = nll(&dist, &[x]).unwrap();
        assert!((got - expect).abs() < 1e-10 * expect.abs().max(1.0));
    }
}

#[test]
fn zero_amplitudes_leave_jitter_and_hamiltonian_mean() {
    let mut p = model(3, false, 0.3, 8, 9);
    p.coeff_a.zero_all();
    p.coeff_b.zero_all();
    p.coeff_c.zero_all();
    let cl = Closures::new(&p);
    let mut sys = gas(40, 3, 1.0, 8);
    sys.s = teacher_entropy(&sys, &cl).unwrap();
    let dt = 1e-3;
    let dist = predict_distribution(&sys, &cl, dt).unwrap();
    let (pairs, th) = metriplex::dynamics::evaluate_state(&sys, &cl).unwrap();
    let f = metriplex::dynamics::conservative_force(&pairs, &th);
    for i in 0..sys.len() {
        for a in 0..4 {
            for b in 0..4 {
                let expect = if a == b { 1e-8 } else { 0.0 };
                assert_eq!(dist.sigma[i][a * 4 + b], expect);
            }
        }
        for a in 0..3 {
            let expect = sys.v[i][a] + f[i][a] / cl.mass * dt;
            assert!((dist.mu[i][a] - expect).abs() < 1e-15);
        }
        assert_eq!(dist.mu[i][3], sys.s[i]);
    }
}

#[test]
fn teacher_matches_all_pairs_scan() {
    let p = model(3, false, 0.3, 8, 12);
    let cl = Closures::new(&p);
    let sys = gas(60, 3, 1.0, 13);
    let s = teacher_entropy(&sys, &cl).unwrap();
    let l = 1.0;
    for i in 0..sys.len() {
        let mut sum = 0.0;
        let mut count = 0;
        for j in 0..sys.len() {
            if i == j {
                continue;
            }
            let mut d = [0.0; 3];
            for k in 0..3 {
                let x = sys.r[i][k] - sys.r[j][k];
                d[k] = x - l * (x / l).round();
            }
            let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            if r < 0.3 {
                let x = [r / 0.3, sys.v[i][0] - sys.v[j][0], sys.v[i][1] - sys.v[j][1], sys.v[i][2] - sys.v[j][2]];
                sum += p.teacher.eval(&x).unwrap()[0];
                count += 1;
            }
        }
        let expect = if count == 0 {
            p.teacher.eval(&[1.0, 0.0, 0.0, 0.0]).unwrap()[0]
        } else {
            sum / count as f64
        };
        assert!((s[i] - expect).abs() < 1e-12, "particle {i}");
    }
}

#[test]
fn teacher_is_equivariant_and_translation_invariant() {
    let p = model(2, false, 0.3, 8, 14);
    let cl = Closures::new(&p);
    let sys = gas(50, 2, 1.0, 15);
    let s = teacher_entropy(&sys, &cl).unwrap();
    let perm: Vec<usize> = (0..50).rev().collect();
    let mut shuffled = sys.clone();
    shuffled.r = perm.iter().map(|&k| sys.r[k]).collect();
    shuffled.v = perm.iter().map(|&k| sys.v[k]).collect();
    let sp = teacher_entropy(&shuffled, &cl).unwrap();
    for (a, &k) in perm.iter().enumerate() {
        assert!((sp[a] - s[k]).abs() < 1e-13);
    }
    let mut moved = sys.clone();
    for x in &mut moved.r {
        x[0] = (x[0] + 0.37).rem_euclid(1.0);
        x[1] = (x[1] + 0.81).rem_euclid(1.0);
    }
    let st = teacher_entropy(&moved, &cl).unwrap();
    for i in 0..50 {
        assert!((st[i] - s[i]).abs() < 1e-12);
    }
    let mut uniform = sys.clone();
    uniform.v.iter_mut().for_each(|v| *v = [0.4, -0.1, 0.0]);
    let su = teacher_entropy(&uniform, &cl).unwrap();
    let mut still = sys.clone();
    still.v.iter_mut().for_each(|v| *v = [0.0; 3]);
    assert_eq!(su, teacher_entropy(&still, &cl).unwrap());
}

#[test]
fn split_is_deterministic_and_exhaustive() {
    let (a, b) = split_transitions(100, 0.75, 3);
    let (c, d) = split_transitions(100, 0.75, 3);
    assert_eq!((a.clone(), b.clone()), (c, d));
    assert_eq!(a.len(), 75);
    let mut all: Vec<usize> = a.into_iter().chain(b).collect();
    all.sort();
    assert_eq!(all, (0..100).collect::<Vec<_>>());
    assert_ne!(split_transitions(100, 0.75, 4).0, split_transitions(100, 0.75, 3).0);
}

#[test]
fn rollout_of_zero_steps_carries_teacher_entropy() {
    let p = model(3, false, 0.25, 8, 16);
    let sys = gas(30, 3, 1.0, 17);
    let traj = rollout(&sys, &p, 0, 1e-3, 1, 1).unwrap();
    assert_eq!(traj.len(), 1);
    let s = teacher_entropy(&sys, &Closures::new(&p)).unwrap();
    assert_eq!(traj.entropy.unwrap()[0], s);
    assert_eq!(traj.frames[0].r, sys.r);
}

#[test]
fn free_flight_rollout_is_ballistic() {
    let p = ModelParams::free_flight(&Architecture::fluid(3, 0.2, 8), 5);
    let sys = gas(20, 3, 1.0, 18);
    let dt = 1e-2;
    let traj = rollout(&sys, &p, 150, dt, 2, 50).unwrap();
    let last = traj.frames.last().unwrap();
    let un = last.unwrapped().unwrap();
    for i in 0..sys.len() {
        assert_eq!(last.v[i], sys.v[i]);
        for k in 0..3 {
            let expect = sys.r[i][k] + sys.v[i][k] * dt * 150.0;
            assert!((un[i][k] - expect).abs() < 1e-12);
        }
    }
}

#[test]
fn rollout_conserves_momentum() {
    let p = model(3, false, 0.25, 8, 19);
    let sys = gas(64, 3, 1.0, 20);
    let traj = rollout(&sys, &p, 300, 1e-3, 3, 1).unwrap();
    let m = p.mass();
    let p0 = sys.momentum(m);
    for f in &traj.frames {
        for k in 0..3 {
            let pk: f64 = f.v.iter().map(|v| m * v[k]).sum();
            assert!((pk - p0[k]).abs() <= 1e-8);
        }
    }
}

#[test]
fn training_reduces_loss_on_model_data() {
    let gen = model(2, false, 0.3, 8, 21);
    let sys = gas(40, 2, 1.0, 22);
    let traj = data_from(&gen, &sys, 24, 1e-3);
    let fresh = model(2, false, 0.3, 8, 23);
    let cfg = TrainConfig {
        epochs: 40,
        learning_rate: 1e-2,
        batch: 2,
        split: 0.75,
        seed: 1,
    };
    let rep = train(&traj, &fresh, &cfg).unwrap();
    assert_eq!(rep.history.len(), 40);
    assert!(rep.history.iter().all(|e| e.train_nll.is_finite() && e.val_nll.is_finite()));
    let first = rep.history[0].train_nll;
    let last = rep.history.last().unwrap().train_nll;
    assert!(last < first, "{first} -> {last}");
    assert!(rep.best_val <= rep.history[0].val_nll);
}

#[test]
fn frozen_data_does_not_crash_training() {
    let sys = gas(30, 2, 1.0, 24);
    let mut still = sys.clone();
    still.v.iter_mut().for_each(|v| *v = [0.0; 3]);
    let mut traj = Trajectory::new(2, 1e-3);
    for k in 0..6 {
        let mut s = still.clone();
        s.time = k as f64 * 1e-3;
        traj.push(&s, k);
    }
    let cfg = TrainConfig {
        epochs: 5,
        learning_rate: 1e-2,
        batch: 1,
        split: 0.75,
        seed: 0,
    };
    match train(&traj, &model(2, false, 0.3, 8, 25), &cfg) {
        Ok(rep) => assert!(rep.history.iter().all(|e| e.train_nll.is_finite())),
        Err(metriplex::Error::NonFiniteLoss { .. }) | Err(metriplex::Error::SingularCovariance { .. }) => {}
        Err(e) => panic!("unexpected error {e}"),
    }
}

#[test]
fn flatten_round_trip_is_identity() {
    let p = model(3, true, 0.3, 8, 26);
    let x = p.flatten();
    let mut q = model(3, true, 0.3, 8, 27);
    q.unflatten(&x).unwrap();
    assert_eq!(p, q);
    assert!(q.unflatten(&ParamVector(vec![0.0; 3])).is_err());
}
