//! Pairwise conservative, dissipative, divergence and fluctuation terms.

use rayon::prelude::*;

use super::noise::{dwbar, trace, PairNoise};
use crate::geometry::{PairSet, ParticleSystem};
use crate::thermo::{Closures, PairCoeff, ThermoState};
use crate::vecmath::{dot, lower_triangle, Vec3};

/// Deterministic rates split by origin. Velocity parts are m·dv/dt, entropy
/// parts T·dS/dt.
#[derive(Clone, Debug, Default)]
pub struct Drift {
    pub dv_diss: Vec<Vec3>,
    pub dv_div: Vec<Vec3>,
    pub tds_diss: Vec<f64>,
    pub tds_div: Vec<f64>,
}

/// Stochastic increments: m·dṽ and T·dS̃.
#[derive(Clone, Debug, Default)]
pub struct Fluctuation {
    pub m_dv: Vec<Vec3>,
    pub t_ds: Vec<f64>,
}

/// Per-pair drift contributions; the velocity vector is added to i and
/// subtracted from j.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PairDrift {
    pub dv_diss: Vec3,
    pub dv_div: Vec3,
    pub tds_diss: [f64; 2],
    pub tds_div: [f64; 2],
}

/// Thermodynamic inputs of one particle seen by the pair terms.
#[derive(Clone, Copy, Debug)]
pub struct Site {
    pub t: f64,
    pub u_ss: f64,
}

/// Drift of one pair. `e` is the unit vector i→j convention r_ij/|r_ij| and
/// `w` the relative velocity v_ij.
#[allow(clippy::too_many_arguments)]
pub fn pair_drift(c: &PairCoeff, e: &Vec3, w: &Vec3, si: Site, sj: Site, kb: f64, m: f64, dim: usize) -> PairDrift {
    let df = dim as f64;
    let k1 = 0.5 * c.a * c.a;
    let k2 = k1 + (c.b * c.b - c.a * c.a) / df;
    let k1i = c.a * c.a_ti;
    let k1j = c.a * c.a_tj;
    let k2i = k1i + 2.0 / df * (c.b * c.b_ti - c.a * c.a_ti);
    let k2j = k1j + 2.0 / df * (c.b * c.b_tj - c.a * c.a_tj);
    let ev = dot(e, w, dim);
    let v2 = dot(w, w, dim);
    let z = k1 * v2 + k2 * ev * ev;
    let zi = k1i * v2 + k2i * ev * ev;
    let zj = k1j * v2 + k2j * ev * ev;

    let inv_ti = 1.0 / si.t;
    let inv_tj = 1.0 / sj.t;
    let ic_i = si.u_ss / si.t;
    let ic_j = sj.u_ss / sj.t;
    let itc_i = ic_i / si.t;
    let itc_j = ic_j / sj.t;

    let diss = -0.5 * (inv_ti + inv_tj);
    let div_y = 0.5 * kb * (itc_i + itc_j);
    let div_yi = -0.5 * kb * ic_i;
    let div_yj = -0.5 * kb * ic_j;
    let mut out = PairDrift::default();
    for a in 0..dim {
        let y = k1 * w[a] + k2 * ev * e[a];
        let yi = k1i * w[a] + k2i * ev * e[a];
        let yj = k1j * w[a] + k2j * ev * e[a];
        out.dv_diss[a] = diss * y;
        out.dv_div[a] = div_y * y + div_yi * yi + div_yj * yj;
    }

    let c2 = c.c * c.c;
    let heat = 0.25 * (inv_ti + inv_tj) * z;
    out.tds_diss = [heat + (inv_ti - inv_tj) * c2, heat + (inv_tj - inv_ti) * c2];
    let kin = kb / m * ((df + 1.0) * k1 + (c.b * c.b - c.a * c.a) / df);
    let zp = 0.25 * kb * (ic_i * zi + ic_j * zj);
    let cc_i = ic_i * c.c * c.c_ti;
    let cc_j = ic_j * c.c * c.c_tj;
    out.tds_div = [
        -kin - 0.25 * kb * (2.0 * itc_i + itc_j) * z - kb * (2.0 * itc_i - itc_j) * c2 + zp + 2.0 * kb * (cc_i - cc_j),
        -kin - 0.25 * kb * (2.0 * itc_j + itc_i) * z - kb * (2.0 * itc_j - itc_i) * c2 + zp + 2.0 * kb * (cc_j - cc_i),
    ];
    out
}

fn sites(th: &ThermoState) -> Vec<Site> {
    th.energy
        .t
        .iter()
        .zip(&th.energy.u_ss)
        .map(|(&t, &u_ss)| Site { t, u_ss })
        .collect()
}

pub fn drift(sys: &ParticleSystem, pairs: &PairSet, th: &ThermoState, cl: &Closures) -> Drift {
    let dim = pairs.dim;
    let st = sites(th);
    let per_pair: Vec<PairDrift> = (0..pairs.len())
        .into_par_iter()
        .map(|k| {
            let (i, j) = pairs.ij[k];
            let w = pairs.relative_velocity(k, &sys.v, &sys.sim_box);
            pair_drift(&th.coeffs.0[k], &pairs.e[k], &w, st[i], st[j], cl.kb, cl.mass, dim)
        })
        .collect();
    let n = pairs.n_particles;
    let mut out = Drift {
        dv_diss: vec![[0.0; 3]; n],
        dv_div: vec![[0.0; 3]; n],
        tds_diss: vec![0.0; n],
        tds_div: vec![0.0; n],
    };
    for (&(i, j), p) in pairs.ij.iter().zip(&per_pair) {
        for a in 0..dim {
            out.dv_diss[i][a] += p.dv_diss[a];
            out.dv_diss[j][a] -= p.dv_diss[a];
            out.dv_div[i][a] += p.dv_div[a];
            out.dv_div[j][a] -= p.dv_div[a];
        }
        out.tds_diss[i] += p.tds_diss[0];
        out.tds_diss[j] += p.tds_diss[1];
        out.tds_div[i] += p.tds_div[0];
        out.tds_div[j] += p.tds_div[1];
    }
    out
}

/// τ : ∂W̄/∂u for a lower-triangle Jacobian.
fn stress_contraction(tau: &[f64; 9], jac: &[f64], dim: usize) -> Vec3 {
    let mut f = [0.0; 3];
    for (k, (a, b)) in lower_triangle(dim).into_iter().enumerate() {
        let t = tau[a * 3 + b];
        for c in 0..dim {
            f[c] += t * jac[k * dim + c];
        }
    }
    f
}

/// Conservative force −∂U/∂r_i from the pressure and, for solids, the
/// deviatoric stress.
pub fn conservative_force(pairs: &PairSet, th: &ThermoState) -> Vec<Vec3> {
    let dim = pairs.dim;
    let d = &th.volume.d;
    let p = &th.energy.p;
    let per_pair: Vec<Vec3> = (0..pairs.len())
        .into_par_iter()
        .map(|k| {
            let (i, j) = pairs.ij[k];
            let c = p[i] / (d[i] * d[i]) + p[j] / (d[j] * d[j]);
            let g = &th.volume.grad_w[k];
            let mut f = [0.0; 3];
            for a in 0..dim {
                f[a] = -c * g[a];
            }
            if let (Some(st), Some(tau)) = (&th.strain, &th.energy.tau) {
                let fi = stress_contraction(&tau[i], &st.jac_ij[k], dim);
                let fj = stress_contraction(&tau[j], &st.jac_ji[k], dim);
                for a in 0..dim {
                    f[a] += fj[a] - fi[a];
                }
            }
            f
        })
        .collect();
    let mut out = vec![[0.0; 3]; pairs.n_particles];
    for (&(i, j), f) in pairs.ij.iter().zip(&per_pair) {
        for a in 0..dim {
            out[i][a] += f[a];
            out[j][a] -= f[a];
        }
    }
    out
}

/// G e with G = A dW̄ + B (I/D) tr dW.
#[inline]
pub fn noise_vector(a: f64, b: f64, dw: &[f64; 9], e: &Vec3, dim: usize) -> Vec3 {
    let wb = dwbar(dw, dim);
    let iso = b * trace(dw, dim) / dim as f64;
    let mut g = [0.0; 3];
    for r in 0..dim {
        let mut s = iso * e[r];
        for c in 0..dim {
            s += a * wb[r * 3 + c] * e[c];
        }
        g[r] = s;
    }
    g
}

pub fn fluctuation(sys: &ParticleSystem, pairs: &PairSet, noise: &PairNoise, th: &ThermoState, cl: &Closures) -> Fluctuation {
    let dim = pairs.dim;
    let amp = (2.0 * cl.kb).sqrt();
    let per_pair: Vec<(Vec3, f64, f64)> = (0..pairs.len())
        .into_par_iter()
        .map(|k| {
            let c = &th.coeffs.0[k];
            let g = noise_vector(c.a, c.b, &noise.dw[k], &pairs.e[k], dim);
            let w = pairs.relative_velocity(k, &sys.v, &sys.sim_box);
            let mut mv = [0.0; 3];
            for a in 0..dim {
                mv[a] = amp * g[a];
            }
            let visc = -0.5 * amp * dot(&g, &w, dim);
            let heat = amp * c.c * noise.dv[k];
            (mv, visc + heat, visc - heat)
        })
        .collect();
    let n = pairs.n_particles;
    let mut out = Fluctuation {
        m_dv: vec![[0.0; 3]; n],
        t_ds: vec![0.0; n],
    };
    for (&(i, j), (mv, si, sj)) in pairs.ij.iter().zip(&per_pair) {
        for a in 0..dim {
            out.m_dv[i][a] += mv[a];
            out.m_dv[j][a] -= mv[a];
        }
        out.t_ds[i] += si;
        out.t_ds[j] += sj;
    }
    out
}

/// Closed-form marginal covariance of (Δṽ_i, ΔS̃_i) per particle, packed
/// (D+1)×(D+1) row-major.
pub fn marginal_covariance(sys: &ParticleSystem, pairs: &PairSet, th: &ThermoState, cl: &Closures, dt: f64) -> Vec<Vec<f64>> {
    let dim = pairs.dim;
    let k = dim + 1;
    let df = dim as f64;
    let n = pairs.n_particles;
    // per particle: Σ_j [K1 I + K2 eeᵀ], Σ_j Y (oriented), Σ_j (¼Z + C²)
    let mut vv = vec![[0.0; 9]; n];
    let mut y = vec![[0.0; 3]; n];
    let mut ss = vec![0.0; n];
    for (p, &(i, j)) in pairs.ij.iter().enumerate() {
        let c = &th.coeffs.0[p];
        let e = &pairs.e[p];
        let w = pairs.relative_velocity(p, &sys.v, &sys.sim_box);
        let k1 = 0.5 * c.a * c.a;
        let k2 = k1 + (c.b * c.b - c.a * c.a) / df;
        let ev = dot(e, &w, dim);
        let z = k1 * dot(&w, &w, dim) + k2 * ev * ev;
        for a in 0..dim {
            for b in 0..=a {
                let x = k2 * e[a] * e[b] + if a == b { k1 } else { 0.0 };
                vv[i][a * 3 + b] += x;
                vv[j][a * 3 + b] += x;
            }
            let ya = k1 * w[a] + k2 * ev * e[a];
            y[i][a] += ya;
            y[j][a] -= ya;
        }
        let s = 0.25 * z + c.c * c.c;
        ss[i] += s;
        ss[j] += s;
    }
    let m = cl.mass;
    let kb = cl.kb;
    (0..n)
        .map(|i| {
            let t = th.energy.t[i];
            let mut out = vec![0.0; k * k];
            for a in 0..dim {
                for b in 0..=a {
                    let x = 2.0 * kb * dt / (m * m) * vv[i][a * 3 + b];
                    out[a * k + b] = x;
                    out[b * k + a] = x;
                }
                let x = -kb * dt / (m * t) * y[i][a];
                out[a * k + dim] = x;
                out[dim * k + a] = x;
            }
            out[dim * k + dim] = 2.0 * kb * dt / (t * t) * ss[i];
            out
        })
        .collect()
}
