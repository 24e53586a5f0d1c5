#![allow(clippy::needless_range_loop)]

use metriplex::analysis::{msd, shear_profile, vacf};
use metriplex::datagen::{gen_dpd_gas, gen_from_model, lattice, DpdGasSpec, Forcing};
use metriplex::dpd::DpdParams;
use metriplex::geometry::{BoundaryMode, SimBox};
use metriplex::nn::{Architecture, ModelParams};

fn small(dim: usize, forcing: Forcing, seed: u64) -> DpdGasSpec {
    DpdGasSpec {
        n: if dim == 2 { 300 } else { 192 },
        dim,
        length: if dim == 2 { 10.0 } else { 4.0 },
        h: 1.0,
        dt: 0.01,
        params: DpdParams::default(),
        forcing,
        equilibration_steps: 200,
        n_snapshots: 200,
        stride: 2,
        seed,
    }
}

#[test]
fn generator_is_deterministic_and_valid() {
    let spec = small(3, Forcing::None, 1);
    let a = gen_dpd_gas(&spec).unwrap();
    let b = gen_dpd_gas(&spec).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 200);
    assert!((a.dt - 0.02).abs() < 1e-15);
    a.validate().unwrap();
    for f in &a.frames {
        for r in &f.r {
            assert!((0..3).all(|k| r[k] >= 0.0 && r[k] < 4.0));
        }
    }
    assert_ne!(gen_dpd_gas(&small(3, Forcing::None, 2)).unwrap(), a);
}

#[test]
fn unforced_gas_diffuses() {
    let traj = gen_dpd_gas(&small(3, Forcing::None, 3)).unwrap();
    let m = msd(&traj, 150).unwrap();
    let late = (m.values[150] - m.values[100]) / (m.abscissa[150] - m.abscissa[100]);
    assert!(late > 0.0, "slope {late}");
    assert!(m.values[150] > m.values[50]);
}

#[test]
fn shear_gives_the_imposed_profile() {
    let rate = 0.5;
    let mut spec = small(2, Forcing::Shear { rate }, 4);
    spec.n_snapshots = 300;
    let traj = gen_dpd_gas(&spec).unwrap();
    assert_eq!(traj.frames[0].sim_box.mode, BoundaryMode::LeesEdwards);
    let p = shear_profile(&traj, 10).unwrap();
    let n = p.len() as f64;
    let my = p.abscissa.iter().sum::<f64>() / n;
    let mv = p.values.iter().sum::<f64>() / n;
    let cov: f64 = p.abscissa.iter().zip(&p.values).map(|(y, v)| (y - my) * (v - mv)).sum();
    let var: f64 = p.abscissa.iter().map(|y| (y - my).powi(2)).sum();
    let slope = cov / var;
    assert!((slope / rate - 1.0).abs() < 0.1, "slope {slope}");
}

#[test]
fn taylor_green_sets_a_vortex() {
    let mut spec = small(2, Forcing::TaylorGreen { amplitude: 1.0 }, 5);
    spec.params.kbt = 1e-6;
    spec.params.sigma = 1e-3;
    spec.equilibration_steps = 0;
    spec.n_snapshots = 2;
    let traj = gen_dpd_gas(&spec).unwrap();
    let f = &traj.frames[0];
    let k = 2.0 * std::f64::consts::PI / 10.0;
    for (r, v) in f.r.iter().zip(&f.v) {
        let ux = (k * r[0]).sin() * (k * r[1]).cos();
        assert!((v[0] - ux).abs() < 0.01);
    }
}

#[test]
fn free_flight_has_flat_vacf() {
    let mut spec = small(3, Forcing::None, 6);
    spec.params = DpdParams {
        alpha: 0.0,
        sigma: 0.0,
        m: 1.0,
        kbt: 1.0,
    };
    spec.equilibration_steps = 10;
    spec.n_snapshots = 40;
    let traj = gen_dpd_gas(&spec).unwrap();
    let c = vacf(&traj, 30).unwrap();
    for v in &c.values {
        assert!((v - c.values[0]).abs() <= 1e-12 * c.values[0]);
    }
}

#[test]
fn model_generator_records_positions_and_velocities() {
    let arch = Architecture::fluid(3, 0.3, 8);
    let zero = ModelParams::free_flight(&arch, 1);
    let b = SimBox::cube(3, 1.5, BoundaryMode::Periodic, 0.0);
    let init = lattice(64, &b, 0.5, 7);
    let traj = gen_from_model(&zero, &init, 11, 1e-3, 3, 5).unwrap();
    assert_eq!(traj.len(), 11);
    assert!(traj.entropy.is_none());
    let last = traj.frames.last().unwrap().unwrapped().unwrap();
    for i in 0..64 {
        for k in 0..3 {
            let expect = init.r[i][k] + init.v[i][k] * 50.0 * 1e-3;
            assert!((last[i][k] - expect).abs() < 1e-12);
        }
    }
    let mut p = ModelParams::random(&arch, 9);
    p.log_kb = 0.01f64.ln();
    let a = gen_from_model(&p, &init, 6, 1e-3, 3, 2).unwrap();
    assert_eq!(a, gen_from_model(&p, &init, 6, 1e-3, 3, 2).unwrap());
}

#[test]
fn lattice_has_zero_momentum() {
    let b = SimBox::cube(2, 3.0, BoundaryMode::Periodic, 0.0);
    let sys = lattice(50, &b, 2.0, 8);
    let p = sys.momentum(1.0);
    assert!(p[0].abs() < 1e-12 && p[1].abs() < 1e-12);
    assert!(sys.r.iter().all(|r| r[0] > 0.0 && r[0] < 3.0 && r[1] > 0.0 && r[1] < 3.0));
}
