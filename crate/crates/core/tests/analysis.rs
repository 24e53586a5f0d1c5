#![allow(clippy::needless_range_loop)]

use metriplex::analysis::{d2min, l2_rel_error, msd, rdf, shear_profile, vacf, CorrelationCurve};
use metriplex::geometry::{BoundaryMode, SimBox};
use metriplex::trajectory::{Frame, Trajectory};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn frame(b: &SimBox, r: Vec<[f64; 3]>, v: Vec<[f64; 3]>, step: u64, dt: f64) -> Frame {
    let n = r.len();
    Frame {
        step,
        time: step as f64 * dt,
        sim_box: b.clone(),
        r,
        v,
        images: Some(vec![[0; 3]; n]),
    }
}

fn curve(values: Vec<f64>) -> CorrelationCurve {
    CorrelationCurve {
        metric: "x".into(),
        abscissa_name: "t".into(),
        abscissa: (0..values.len()).map(|k| k as f64).collect(),
        counts: vec![1; values.len()],
        values,
        n_origins: 1,
    }
}

fn poisson(n: usize, dim: usize, len: f64, frames: usize, seed: u64) -> Trajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = SimBox::cube(dim, len, BoundaryMode::Periodic, 0.0);
    let mut traj = Trajectory::new(dim, 1.0);
    for k in 0..frames {
        let r = (0..n)
            .map(|_| {
                let mut x = [0.0; 3];
                for a in 0..dim {
                    x[a] = len * rng.random::<f64>();
                }
                x
            })
            .collect();
        traj.frames.push(frame(&b, r, vec![[0.0; 3]; n], k as u64, 1.0));
    }
    traj
}

#[test]
fn vacf_two_snapshot_toy() {
    let b = SimBox::cube(2, 10.0, BoundaryMode::Periodic, 0.0);
    let mut traj = Trajectory::new(2, 0.5);
    traj.frames.push(frame(&b, vec![[1.0, 1.0, 0.0], [2.0, 2.0, 0.0]], vec![[1.0, 2.0, 0.0], [-1.0, 0.0, 0.0]], 0, 0.5));
    traj.frames.push(frame(&b, vec![[1.5, 2.0, 0.0], [1.5, 2.0, 0.0]], vec![[3.0, -1.0, 0.0], [2.0, 4.0, 0.0]], 1, 0.5));
    let c = vacf(&traj, 1).unwrap();
    // lag 0: (5 + 1 + 10 + 20) / 4; lag 1: (3 - 2 - 2 + 0) / 2
    assert_eq!(c.values, vec![9.0, -0.5]);
    assert_eq!(c.counts, vec![4, 2]);
    assert_eq!(c.abscissa, vec![0.0, 0.5]);
}

#[test]
fn vacf_of_constant_velocity_is_flat() {
    let b = SimBox::cube(3, 10.0, BoundaryMode::Periodic, 0.0);
    let mut traj = Trajectory::new(3, 0.1);
    for k in 0..6 {
        traj.frames.push(frame(&b, vec![[1.0, 2.0, 3.0]; 4], vec![[0.3, -0.4, 1.2]; 4], k, 0.1));
    }
    let c = vacf(&traj, 4).unwrap();
    for v in c.values {
        assert!((v - 1.69).abs() < 1e-14);
    }
    assert!(matches!(vacf(&traj, 6), Err(metriplex::Error::InsufficientSnapshots { .. })));
}

#[test]
fn msd_three_snapshot_toy() {
    let b = SimBox::cube(2, 4.0, BoundaryMode::Periodic, 0.0);
    let mut traj = Trajectory::new(2, 1.0);
    traj.frames.push(frame(&b, vec![[0.5, 0.5, 0.0], [3.0, 3.0, 0.0]], vec![[0.0; 3]; 2], 0, 1.0));
    traj.frames.push(frame(&b, vec![[1.5, 0.5, 0.0], [3.0, 3.0, 0.0]], vec![[0.0; 3]; 2], 1, 1.0));
    let mut f = frame(&b, vec![[1.5, 2.5, 0.0], [0.5, 3.0, 0.0]], vec![[0.0; 3]; 2], 2, 1.0);
    // particle 1 crossed the +x face
    f.images = Some(vec![[0; 3], [1, 0, 0]]);
    traj.frames.push(f);
    let c = msd(&traj, 2).unwrap();
    // lag 1: (1 + 0 + 4 + 2.25) / 4; lag 2: (5 + 2.25) / 2
    assert_eq!(c.values, vec![0.0, 7.25 / 4.0, 7.25 / 2.0]);
    traj.frames[0].images = None;
    assert!(matches!(msd(&traj, 1), Err(metriplex::Error::MissingUnwrapData)));
}

#[test]
fn msd_of_ballistic_flight() {
    let b = SimBox::cube(3, 2.0, BoundaryMode::Periodic, 0.0);
    let c = [0.7, -0.3, 0.25];
    let dt = 0.5;
    let mut traj = Trajectory::new(3, dt);
    for k in 0..20u64 {
        let t = k as f64 * dt;
        let mut r = [0.0; 3];
        let mut im = [0; 3];
        for a in 0..3 {
            let x = 0.3 + c[a] * t;
            r[a] = x.rem_euclid(2.0);
            im[a] = (x / 2.0).floor() as i32;
        }
        let mut f = frame(&b, vec![r], vec![c], k, dt);
        f.images = Some(vec![im]);
        traj.frames.push(f);
    }
    let m = msd(&traj, 15).unwrap();
    let c2 = c.iter().map(|x| x * x).sum::<f64>();
    for (k, v) in m.values.iter().enumerate() {
        let t = k as f64 * dt;
        assert!((v - c2 * t * t).abs() <= 1e-12 * (1.0 + c2 * t * t));
    }
}

#[test]
fn msd_second_difference_matches_vacf() {
    // smooth synthetic paths r = a sin(ωt) + c t
    let dt = 0.01;
    let b = SimBox::cube(3, 100.0, BoundaryMode::Periodic, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let parts: Vec<([f64; 3], [f64; 3], f64)> = (0..20)
        .map(|_| {
            let mut a = [0.0; 3];
            let mut c = [0.0; 3];
            for k in 0..3 {
                a[k] = rng.random::<f64>();
                c[k] = rng.random::<f64>() - 0.5;
            }
            (a, c, 0.5 + rng.random::<f64>())
        })
        .collect();
    let mut traj = Trajectory::new(3, dt);
    for s in 0..400u64 {
        let t = s as f64 * dt;
        let r = parts
            .iter()
            .map(|(a, c, w)| std::array::from_fn(|k| 50.0 + a[k] * (w * t).sin() + c[k] * t))
            .collect();
        let v = parts
            .iter()
            .map(|(a, c, w)| std::array::from_fn(|k| a[k] * w * (w * t).cos() + c[k]))
            .collect();
        traj.frames.push(frame(&b, r, v, s, dt));
    }
    let m = msd(&traj, 60).unwrap();
    let va = vacf(&traj, 60).unwrap();
    for k in 1..60 {
        let second = m.values[k + 1] - 2.0 * m.values[k] + m.values[k - 1];
        let expect = 2.0 * va.values[k] * dt * dt;
        assert!((second - expect).abs() <= 0.05 * expect.abs(), "lag {k}: {second} vs {expect}");
    }
}

#[test]
fn rdf_of_poisson_gas_is_one() {
    for dim in [2usize, 3] {
        let (n, frames) = if dim == 2 { (2000, 20) } else { (3000, 10) };
        let traj = poisson(n, dim, 1.0, frames, 3 + dim as u64);
        let g = rdf(&traj, 0.5, 50).unwrap();
        for (r, v) in g.abscissa.iter().zip(&g.values) {
            if *r >= 0.1 {
                assert!((v - 1.0).abs() < 0.05, "D={dim} r={r}: {v}");
            }
        }
    }
}

#[test]
fn rdf_of_a_fixed_pair_is_one_spike() {
    let b = SimBox::cube(3, 4.0, BoundaryMode::Periodic, 0.0);
    let mut traj = Trajectory::new(3, 1.0);
    traj.frames.push(frame(&b, vec![[0.1, 0.1, 0.1], [3.75, 0.1, 0.1]], vec![[0.0; 3]; 2], 0, 1.0));
    let g = rdf(&traj, 1.0, 10).unwrap();
    for (k, v) in g.values.iter().enumerate() {
        if k == 3 {
            let shell = 4.0 / 3.0 * std::f64::consts::PI * (0.4f64.powi(3) - 0.3f64.powi(3));
            assert!((v - 2.0 / (4.0 / 64.0 * shell)).abs() < 1e-9);
        } else {
            assert_eq!(*v, 0.0);
        }
    }
}

fn cloud(n: usize, dim: usize, len: f64, seed: u64) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| std::array::from_fn(|k| if k < dim { len * rng.random::<f64>() } else { 0.0 }))
        .collect()
}

#[test]
fn d2min_vanishes_under_affine_motion() {
    for dim in [2usize, 3] {
        let b = SimBox::cube(dim, 10.0, BoundaryMode::Open, 0.0);
        let r = cloud(300, dim, 4.0, 5);
        let f = [[1.1, 0.2, -0.1], [0.05, 0.9, 0.3], [-0.2, 0.1, 1.05]];
        let c = [0.3, -0.2, 0.1];
        let moved = r
            .iter()
            .map(|x| std::array::from_fn(|p| if p < dim { c[p] + (0..dim).map(|q| f[p][q] * x[q]).sum::<f64>() } else { 0.0 }))
            .collect();
        let a = frame(&b, r.clone(), vec![[0.0; 3]; 300], 0, 1.0);
        let bb = frame(&b, moved, vec![[0.0; 3]; 300], 1, 1.0);
        for v in d2min(&a, &bb, 1.2).unwrap() {
            assert!(v.is_nan() || v.abs() <= 1e-12, "{v}");
        }
        let same = d2min(&a, &a, 1.2).unwrap();
        assert!(same.iter().filter(|v| !v.is_nan()).count() > 250);
        assert!(same.iter().all(|v| v.is_nan() || *v <= 1e-12));
    }
}

#[test]
fn d2min_matches_pseudo_inverse_fit() {
    let dim = 3;
    let b = SimBox::cube(dim, 10.0, BoundaryMode::Open, 0.0);
    let r = cloud(200, dim, 3.5, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let moved: Vec<[f64; 3]> = r
        .iter()
        .map(|x| [1.02 * x[0] + 0.1 * x[1] + 0.02 * rng.random::<f64>(), x[1] + 0.02 * rng.random::<f64>(), 0.98 * x[2] + 0.02 * rng.random::<f64>()])
        .collect();
    let a = frame(&b, r.clone(), vec![[0.0; 3]; 200], 0, 1.0);
    let bb = frame(&b, moved.clone(), vec![[0.0; 3]; 200], 1, 1.0);
    let h = 1.0;
    let got = d2min(&a, &bb, h).unwrap();
    for i in 0..200 {
        let nb: Vec<usize> = (0..200)
            .filter(|&j| j != i && (0..3).map(|k| (r[i][k] - r[j][k]).powi(2)).sum::<f64>() < h * h)
            .collect();
        if nb.len() < 4 {
            continue;
        }
        let u = DMatrix::from_fn(nb.len(), 3, |row, k| r[i][k] - r[nb[row]][k]);
        let w = DMatrix::from_fn(nb.len(), 3, |row, k| moved[i][k] - moved[nb[row]][k]);
        let jt = u.clone().pseudo_inverse(1e-14).unwrap() * &w;
        let resid = &w - &u * jt;
        let expect = resid.norm_squared() / nb.len() as f64;
        assert!((got[i] - expect).abs() <= 1e-9 * expect.max(1e-12), "particle {i}: {} vs {expect}", got[i]);
    }
}

#[test]
fn d2min_flags_sparse_neighbourhoods() {
    let b = SimBox::cube(2, 10.0, BoundaryMode::Open, 0.0);
    let r = vec![[1.0, 1.0, 0.0], [1.5, 1.0, 0.0], [2.0, 1.0, 0.0], [8.0, 8.0, 0.0]];
    let a = frame(&b, r, vec![[0.0; 3]; 4], 0, 1.0);
    // collinear or isolated neighbourhoods cannot fix a 2×2 gradient
    assert!(d2min(&a, &a, 1.2).unwrap().iter().all(|v| v.is_nan()));
}

#[test]
fn l2_relative_error_cases() {
    let gt = curve(vec![1.0, -2.0, 3.0]);
    assert_eq!(l2_rel_error(&gt, &gt).unwrap(), 0.0);
    assert_eq!(l2_rel_error(&gt, &curve(vec![2.0, -4.0, 6.0])).unwrap(), 1.0);
    let e = l2_rel_error(&curve(vec![1.0, 0.0]), &curve(vec![0.0, 1.0])).unwrap();
    assert!((e - 2f64.sqrt()).abs() < 1e-15);
    assert!(matches!(l2_rel_error(&curve(vec![0.0, 0.0]), &curve(vec![1.0, 0.0])), Err(metriplex::Error::ZeroReference)));
    assert!(matches!(l2_rel_error(&gt, &curve(vec![1.0])), Err(metriplex::Error::AbscissaMismatch)));
}

#[test]
fn shear_profile_of_linear_field() {
    let b = SimBox::cube(2, 4.0, BoundaryMode::LeesEdwards, 0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut traj = Trajectory::new(2, 0.1);
    for k in 0..5 {
        let r: Vec<[f64; 3]> = (0..2000).map(|_| [4.0 * rng.random::<f64>(), 4.0 * rng.random::<f64>(), 0.0]).collect();
        let v = r.iter().map(|x| [0.5 * (x[1] - 2.0), 0.1, 0.0]).collect();
        traj.frames.push(frame(&b, r, v, k, 0.1));
    }
    let p = shear_profile(&traj, 8).unwrap();
    let n = p.len() as f64;
    let my = p.abscissa.iter().sum::<f64>() / n;
    let mv = p.values.iter().sum::<f64>() / n;
    let cov: f64 = p.abscissa.iter().zip(&p.values).map(|(y, v)| (y - my) * (v - mv)).sum();
    let var: f64 = p.abscissa.iter().map(|y| (y - my).powi(2)).sum();
    assert!((cov / var - 0.5).abs() < 0.01, "slope {}", cov / var);

    let mut uniform = traj.clone();
    uniform.frames.iter_mut().for_each(|f| f.v.iter_mut().for_each(|v| v[0] = 0.7));
    assert!(shear_profile(&uniform, 8).unwrap().values.iter().all(|v| (v - 0.7).abs() < 1e-12));

    let mut sparse = Trajectory::new(2, 0.1);
    sparse.frames.push(frame(&b, vec![[1.0, 0.2, 0.0]], vec![[1.0, 0.0, 0.0]], 0, 0.1));
    let p = shear_profile(&sparse, 4).unwrap();
    assert_eq!(p.values[0], 1.0);
    assert!(p.values[1..].iter().all(|v| v.is_nan()));
    assert_eq!(p.counts, vec![1, 0, 0, 0]);
}

#[test]
fn estimators_ignore_particle_labels() {
    let traj = poisson(300, 3, 1.0, 6, 9);
    let mut perm = traj.clone();
    for f in &mut perm.frames {
        f.r.reverse();
        f.v = f.r.iter().map(|x| [x[1], x[2], x[0]]).collect();
    }
    let mut orig = traj.clone();
    for f in &mut orig.frames {
        f.v = f.r.iter().map(|x| [x[1], x[2], x[0]]).collect();
    }
    let a = rdf(&orig, 0.4, 20).unwrap();
    let b = rdf(&perm, 0.4, 20).unwrap();
    assert_eq!(a.counts, b.counts);
    let va = vacf(&orig, 3).unwrap();
    let vb = vacf(&perm, 3).unwrap();
    for (x, y) in va.values.iter().zip(&vb.values) {
        assert!((x - y).abs() < 1e-14);
    }
}

#[test]
fn csv_has_header_and_rows() {
    let c = curve(vec![1.5, 0.25]);
    assert_eq!(c.to_csv(), "# x, t, 1\n0,1.5,1\n1,0.25,1\n");
}
