//! Property tests of the invariants that hold for every input.

#![allow(clippy::needless_range_loop)]

use metriplex::analysis::{msd, rdf, vacf};
use metriplex::dpd::{dpd_forces, DpdParams};
use metriplex::dynamics::noise::{draw_pair, dwbar, trace};
use metriplex::dynamics::{evaluate_state, increment};
use metriplex::geometry::{build_pairs, minimum_image, wrap_and_advect_boundary, wrap_coordinate, BoundaryMode, ParticleSystem, SimBox};
use metriplex::io::{dump_to_string, parse_dump, RunConfig};
use metriplex::nn::{Architecture, ModelParams, Network};
use metriplex::thermo::Closures;
use metriplex::trajectory::{Frame, Trajectory};
use metriplex::training::{nll, split_transitions, teacher_entropy, StepDistribution};
use metriplex::vecmath::Vec3;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mode_of(k: u8) -> BoundaryMode {
    match k % 3 {
        0 => BoundaryMode::Periodic,
        1 => BoundaryMode::LeesEdwards,
        _ => BoundaryMode::Open,
    }
}

fn random_system(n: usize, dim: usize, mode: BoundaryMode, seed: u64) -> ParticleSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lengths: Vec<f64> = (0..dim).map(|_| 1.0 + rng.random::<f64>()).collect();
    let mut b = match mode {
        BoundaryMode::Periodic => SimBox::periodic(dim, &lengths),
        BoundaryMode::LeesEdwards => SimBox::lees_edwards(dim, &lengths, 0.5),
        BoundaryMode::Open => SimBox::open(dim, &lengths),
    };
    if mode == BoundaryMode::LeesEdwards {
        b.shear_offset = lengths[0] * rng.random::<f64>();
    }
    let pt = |rng: &mut ChaCha8Rng, s: f64| -> Vec3 { std::array::from_fn(|a| if a < dim { s * rng.random::<f64>() * b.lengths[a] } else { 0.0 }) };
    let r = (0..n).map(|_| pt(&mut rng, 1.0)).collect();
    let v = (0..n).map(|_| pt(&mut rng, 1.0)).collect();
    let s = (0..n).map(|_| rng.random()).collect();
    ParticleSystem::new(b, r, v, s)
}

/// Shortest displacement over explicit image shifts, including the sliding
/// x offset of the y-images.
fn brute_image(ri: &Vec3, rj: &Vec3, b: &SimBox) -> Vec3 {
    let dim = b.dim;
    let mut raw = [0.0; 3];
    for a in 0..dim {
        raw[a] = ri[a] - rj[a];
    }
    if b.mode == BoundaryMode::Open {
        return raw;
    }
    let off = if b.mode == BoundaryMode::LeesEdwards { b.shear_offset } else { 0.0 };
    let zr = if dim == 3 { -1..=1 } else { 0..=0 };
    let mut best = raw;
    let mut best2 = f64::INFINITY;
    for ny in -1i32..=1 {
        for nx in -2i32..=2 {
            for nz in zr.clone() {
                let d = [
                    raw[0] - ny as f64 * off - nx as f64 * b.lengths[0],
                    raw[1] - ny as f64 * b.lengths[1],
                    raw[2] - nz as f64 * b.lengths[2],
                ];
                let d2: f64 = (0..dim).map(|a| d[a] * d[a]).sum();
                if d2 < best2 {
                    best2 = d2;
                    best = d;
                }
            }
        }
    }
    best
}

fn model(dim: usize, h: f64, seed: u64) -> ModelParams {
    let mut p = ModelParams::random(&Architecture::fluid(dim, h, 8), seed);
    p.log_kb = 0.4f64.ln();
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cell_list_equals_all_pairs(n in 2usize..120, dim in 2usize..=3, mode in 0u8..3, hf in 0.05f64..0.49, seed in any::<u64>()) {
        let sys = random_system(n, dim, mode_of(mode), seed);
        let h = hf * sys.sim_box.min_length();
        let ps = build_pairs(&sys, h).unwrap();
        let mut want = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let d = brute_image(&sys.r[i], &sys.r[j], &sys.sim_box);
                let dist = (0..dim).map(|a| d[a] * d[a]).sum::<f64>().sqrt();
                if dist < h {
                    want.push((i, j, dist));
                }
            }
        }
        prop_assert_eq!(ps.ij.len(), want.len());
        for (k, &(i, j, dist)) in want.iter().enumerate() {
            prop_assert_eq!(ps.ij[k], (i, j));
            prop_assert!((ps.dist[k] - dist).abs() <= 1e-12);
            prop_assert!(ps.dist[k] > 0.0 && ps.dist[k] < h);
            let en: f64 = ps.e[k].iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!((en - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn minimum_image_never_lengthens(d in prop::array::uniform3(-5.0f64..5.0), l in prop::array::uniform3(0.5f64..3.0), dim in 2usize..=3) {
        let b = SimBox::periodic(dim, &l[..dim]);
        let mut raw = d;
        if dim == 2 {
            raw[2] = 0.0;
        }
        let m = minimum_image(&raw, &b);
        let n2 = |x: &Vec3| (0..dim).map(|a| x[a] * x[a]).sum::<f64>();
        prop_assert!(n2(&m) <= n2(&raw) + 1e-12);
        for a in 0..dim {
            prop_assert!(m[a] >= -0.5 * l[a] && m[a] < 0.5 * l[a]);
        }
        prop_assert_eq!(minimum_image(&m, &b), m);
    }

    #[test]
    fn wrap_is_idempotent(x in -1e3f64..1e3, l in 1e-2f64..10.0) {
        let (y, _) = wrap_coordinate(x, l);
        prop_assert!((0.0..l).contains(&y));
        let (z, n) = wrap_coordinate(y, l);
        prop_assert_eq!(z.to_bits(), y.to_bits());
        prop_assert_eq!(n, 0);
    }

    #[test]
    fn unsheared_lees_edwards_is_periodic(n in 2usize..60, dim in 2usize..=3, seed in any::<u64>(), step in prop::array::uniform3(-3.0f64..3.0)) {
        let per = random_system(n, dim, BoundaryMode::Periodic, seed);
        let mut le = per.clone();
        le.sim_box.mode = BoundaryMode::LeesEdwards;
        le.sim_box.shear_rate = 0.0;
        let h = 0.3 * per.sim_box.min_length();
        let a = build_pairs(&per, h).unwrap();
        let b = build_pairs(&le, h).unwrap();
        prop_assert_eq!(&a.ij, &b.ij);
        for k in 0..a.len() {
            for c in 0..3 {
                prop_assert_eq!(a.disp[k][c].to_bits(), b.disp[k][c].to_bits());
            }
        }
        let (mut p2, mut l2) = (per.clone(), le.clone());
        for i in 0..n {
            for c in 0..dim {
                p2.r[i][c] += step[c];
                l2.r[i][c] += step[c];
            }
        }
        wrap_and_advect_boundary(&mut p2, 0.1);
        wrap_and_advect_boundary(&mut l2, 0.1);
        prop_assert_eq!(&p2.r, &l2.r);
        prop_assert_eq!(&p2.v, &l2.v);
        prop_assert_eq!(&p2.images, &l2.images);
    }

    #[test]
    fn pair_noise_is_mirrored_and_deviator_traceless(seed in any::<u64>(), step in any::<u64>(), i in 0usize..1000, j in 0usize..1000, dim in 2usize..=3, dt in 1e-6f64..1.0) {
        prop_assume!(i != j);
        let (w1, v1) = draw_pair(seed, step, i, j, dim, dt);
        let (w2, v2) = draw_pair(seed, step, j, i, dim, dt);
        prop_assert_eq!(w1, w2);
        prop_assert_eq!(v1, -v2);
        let b = dwbar(&w1, dim);
        prop_assert!(trace(&b, dim).abs() <= 1e-14 * (1.0 + trace(&w1, dim).abs()));
        for a in 0..dim {
            for c in 0..dim {
                prop_assert_eq!(b[a * 3 + c], b[c * 3 + a]);
            }
        }
    }

    #[test]
    fn cmnn_is_monotone_and_convex(seed in any::<u64>(), s in -3.0f64..3.0, v in 0.01f64..3.0, scale in 0.1f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Network::cmnn(&[2, 6, 6, 1], &[1, -1], &mut rng);
        for l in &mut net.layers {
            l.w.iter_mut().for_each(|w| *w = scale * (rng.random::<f64>() - 0.5));
            l.b.iter_mut().for_each(|b| *b = scale * (rng.random::<f64>() - 0.5));
        }
        let g = net.grad_input(&[s, v]).unwrap();
        let hs = net.hess_input(&[s, v]).unwrap();
        prop_assert!(g[0] >= 0.0 && g[1] <= 0.0);
        prop_assert!(hs[0] >= 0.0 && hs[3] >= 0.0);
        prop_assert!(hs[0] * hs[3] - hs[1] * hs[2] >= -1e-9 * (hs[0] * hs[3]).abs().max(1e-300));
    }

    #[test]
    fn increment_parts_sum_and_momentum(n in 4usize..40, dim in 2usize..=3, seed in any::<u64>(), step in any::<u64>()) {
        let mut sys = random_system(n, dim, BoundaryMode::Periodic, seed);
        sys.sim_box = SimBox::cube(dim, 1.0, BoundaryMode::Periodic, 0.0);
        for x in &mut sys.r {
            for a in 0..dim {
                x[a] = x[a].rem_euclid(1.0);
            }
        }
        let p = model(dim, 0.3, seed ^ 1);
        let cl = Closures::new(&p);
        sys.s = teacher_entropy(&sys, &cl).unwrap();
        let (pairs, th) = evaluate_state(&sys, &cl).unwrap();
        let inc = increment(&sys, &pairs, &th, &cl, 1e-3, seed, step);
        let mut mom = [0.0; 3];
        for i in 0..n {
            for a in 0..dim {
                let parts = inc.conservative.dv[i][a] + inc.dissipative.dv[i][a] + inc.divergence.dv[i][a] + inc.fluctuation.dv[i][a];
                prop_assert!((parts - inc.dv[i][a]).abs() <= 1e-14 * (1.0 + inc.dv[i][a].abs()));
                mom[a] += cl.mass * inc.dv[i][a];
            }
            let parts = inc.conservative.ds[i] + inc.dissipative.ds[i] + inc.divergence.ds[i] + inc.fluctuation.ds[i];
            prop_assert!((parts - inc.ds[i]).abs() <= 1e-14 * (1.0 + inc.ds[i].abs()));
        }
        for a in 0..dim {
            prop_assert!(mom[a].abs() <= 1e-10);
        }
    }

    #[test]
    fn dpd_forces_conserve_momentum(n in 2usize..80, dim in 2usize..=3, seed in any::<u64>(), alpha in 0.0f64..50.0, sigma in 0.0f64..5.0) {
        let sys = random_system(n, dim, BoundaryMode::Periodic, seed);
        let h = 0.4 * sys.sim_box.min_length();
        let pairs = build_pairs(&sys, h).unwrap();
        let p = DpdParams { alpha, sigma, m: 1.0, kbt: 1.0 };
        let f = dpd_forces(&sys, &pairs, &p);
        for a in 0..dim {
            let s: f64 = f.iter().map(|x| x[a]).sum();
            let scale: f64 = f.iter().map(|x| x[a].abs()).sum::<f64>().max(1.0);
            prop_assert!(s.abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn statistics_ignore_particle_labels(n in 3usize..30, dim in 2usize..=3, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut traj = Trajectory::new(dim, 0.1);
        let mut sys = random_system(n, dim, BoundaryMode::Periodic, seed);
        for k in 0..6 {
            traj.push(&sys, k);
            for i in 0..n {
                for a in 0..dim {
                    sys.r[i][a] += 0.1 * sys.v[i][a];
                    sys.v[i][a] += 0.1 * (rng.random::<f64>() - 0.5);
                }
            }
            wrap_and_advect_boundary(&mut sys, 0.1);
        }
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let mut shuffled = traj.clone();
        for f in &mut shuffled.frames {
            let g = f.clone();
            for (new, &old) in perm.iter().enumerate() {
                f.r[new] = g.r[old];
                f.v[new] = g.v[old];
                if let (Some(a), Some(b)) = (&mut f.images, &g.images) {
                    a[new] = b[old];
                }
            }
        }
        let r_max = 0.4 * traj.frames[0].sim_box.min_length();
        let pairs = [
            (vacf(&traj, 4).unwrap(), vacf(&shuffled, 4).unwrap()),
            (msd(&traj, 4).unwrap(), msd(&shuffled, 4).unwrap()),
            (rdf(&traj, r_max, 7).unwrap(), rdf(&shuffled, r_max, 7).unwrap()),
        ];
        for (a, b) in &pairs {
            prop_assert_eq!(&a.counts, &b.counts);
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }
    }

    #[test]
    fn dump_text_round_trips(n in 1usize..12, dim in 2usize..=3, mode in 0u8..3, frames in 1usize..4, images in any::<bool>(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = random_system(n, dim, mode_of(mode), seed);
        let dt = 1e-3 * (1.0 + rng.random::<f64>());
        let mut traj = Trajectory::new(dim, dt);
        for k in 0..frames {
            let mut f = Frame::from_system(&sys, k as u64 * 3);
            f.time = k as f64 * dt;
            f.v.iter_mut().for_each(|v| v.iter_mut().take(dim).for_each(|x| *x = rng.random::<f64>() * 1e3 - 5e2));
            f.images = images.then(|| (0..n).map(|_| std::array::from_fn(|a| if a < dim { rng.random_range(-9..10) } else { 0 })).collect());
            traj.frames.push(f);
        }
        let text = dump_to_string(&traj);
        let back = parse_dump(&text).unwrap();
        prop_assert_eq!(&back, &traj);
        prop_assert_eq!(dump_to_string(&back), text);
    }

    #[test]
    fn unknown_config_keys_are_named(block in prop::sample::select(vec!["", "dataset", "model", "training", "analysis", "paths"]), key in "[a-z]{3,12}") {
        let known = ["dataset", "model", "training", "analysis", "paths", "n", "dim", "h", "dt", "seed", "epochs", "split", "batch", "width", "solid", "data", "log", "length", "stride", "dpd", "forcing", "boundary"];
        prop_assume!(!known.contains(&key.as_str()));
        let text = if block.is_empty() {
            format!("{{\"{key}\": 1}}")
        } else {
            format!("{{\"{block}\": {{\"{key}\": 1}}}}")
        };
        let err = RunConfig::from_json(&text).unwrap_err().to_string();
        let path = if block.is_empty() { key.clone() } else { format!("{block}.{key}") };
        prop_assert!(err.contains(&path), "{} does not name {}", err, path);
    }

    #[test]
    fn nll_vanishes_at_mean_with_identity(k in 1usize..5, mu in prop::collection::vec(-10.0f64..10.0, 1..5)) {
        let dim = k.min(mu.len());
        let mean = mu[..dim].to_vec();
        let mut x = mean.clone();
        x.push(0.5);
        let mut m = mean;
        m.push(0.5);
        let kk = dim + 1;
        let eye: Vec<f64> = (0..kk * kk).map(|i| if i % (kk + 1) == 0 { 1.0 } else { 0.0 }).collect();
        let dist = StepDistribution { dim, mu: vec![m], sigma: vec![eye] };
        prop_assert_eq!(nll(&dist, &[x]).unwrap(), 0.0);
    }

    #[test]
    fn split_is_a_deterministic_partition(n in 1usize..500, frac in 0.05f64..1.0, seed in any::<u64>()) {
        let (a, b) = split_transitions(n, frac, seed);
        let (c, d) = split_transitions(n, frac, seed);
        prop_assert_eq!(&a, &c);
        prop_assert_eq!(&b, &d);
        let mut all: Vec<usize> = a.iter().chain(&b).cloned().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn parameter_flatten_round_trips(dim in 2usize..=3, solid in any::<bool>(), width in 1usize..12, seed in any::<u64>()) {
        let arch = Architecture { dim, solid, cutoff: 0.2, width, hidden_layers: 2 };
        let p = ModelParams::random(&arch, seed);
        let mut q = ModelParams::random(&arch, seed.wrapping_add(1));
        q.unflatten(&p.flatten()).unwrap();
        prop_assert_eq!(&q, &p);
        prop_assert!(p.kb() > 0.0 && p.mass() > 0.0);
        let back = ModelParams::from_json(&p.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, p);
    }
}
