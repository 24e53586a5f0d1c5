//! Per-particle thermodynamic closures: kernel volumes, strains, internal
//! energy partials and the pairwise fluctuation amplitudes.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{minimum_image, PairSet, ParticleSystem};
use crate::nn::{EffectiveNet, ModelParams, Scratch};
use crate::vecmath::{cofactor, det, lower_triangle, scale, sub, Vec3};

/// Smallest admissible ∂²U/∂S².
pub const MIN_CURVATURE: f64 = 1e-12;

/// Networks with constraint transforms applied, ready for evaluation.
#[derive(Clone, Debug)]
pub struct Closures {
    pub dim: usize,
    pub h: f64,
    pub volume: EffectiveNet,
    pub energy: EffectiveNet,
    pub energy_dev: Option<EffectiveNet>,
    pub coeff: [EffectiveNet; 3],
    pub teacher: EffectiveNet,
    pub strain: Option<EffectiveNet>,
    pub kb: f64,
    pub mass: f64,
    pub w0: f64,
    width: usize,
}

impl Closures {
    pub fn new(p: &ModelParams) -> Self {
        let volume = p.volume.effective();
        let w0 = volume.eval(&[0.0])[0].exp();
        let width = p.networks().iter().map(|(_, n)| n.effective().max_width).max().unwrap_or(1);
        Self {
            dim: p.dim(),
            h: p.cutoff(),
            volume,
            energy: p.energy.effective(),
            energy_dev: p.energy_dev.as_ref().map(|n| n.effective()),
            coeff: [p.coeff_a.effective(), p.coeff_b.effective(), p.coeff_c.effective()],
            teacher: p.teacher.effective(),
            strain: p.strain.as_ref().map(|n| n.effective()),
            kb: p.kb(),
            mass: p.mass(),
            w0,
            width,
        }
    }

    pub fn scratch(&self) -> Scratch {
        Scratch::new(self.width)
    }

    pub fn is_solid(&self) -> bool {
        self.strain.is_some()
    }
}

/// Kernel volumes: d_i = 1/V_i and the per-pair kernel and its gradient.
#[derive(Clone, Debug, Default)]
pub struct VolumeField {
    pub d: Vec<f64>,
    pub vol: Vec<f64>,
    pub w: Vec<f64>,
    /// ∂W_ij/∂r_ij; the mirror ∂W_ji/∂r_ji is its negative.
    pub grad_w: Vec<Vec3>,
}

/// Strain field of a solid.
#[derive(Clone, Debug, Default)]
pub struct StrainField {
    /// Traceless strain per particle, 3×3 row-major.
    pub eps_bar: Vec<[f64; 9]>,
    /// Per pair, Jacobians of the lower-triangle outputs of l_ij and l_ji
    /// with respect to u_ij and u_ji (n_tri × D, row-major, 1/h included).
    pub jac_ij: Vec<Vec<f64>>,
    pub jac_ji: Vec<Vec<f64>>,
}

/// Energy and its partials.
#[derive(Clone, Debug, Default)]
pub struct EnergyField {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub t: Vec<f64>,
    pub c: Vec<f64>,
    pub u_ss: Vec<f64>,
    /// Traceless deviatoric stress per particle (solids only).
    pub tau: Option<Vec<[f64; 9]>>,
}

/// Fluctuation amplitudes of one pair and their temperature partials.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PairCoeff {
    pub a: f64,
    pub a_ti: f64,
    pub a_tj: f64,
    pub b: f64,
    pub b_ti: f64,
    pub b_tj: f64,
    pub c: f64,
    pub c_ti: f64,
    pub c_tj: f64,
}

#[derive(Clone, Debug, Default)]
pub struct PairCoeffs(pub Vec<PairCoeff>);

/// Everything the dynamics needs from the closures at one state.
#[derive(Clone, Debug, Default)]
pub struct ThermoState {
    pub volume: VolumeField,
    pub strain: Option<StrainField>,
    pub energy: EnergyField,
    pub coeffs: PairCoeffs,
}

impl ThermoState {
    pub fn d(&self) -> &[f64] {
        &self.volume.d
    }
    pub fn t(&self) -> &[f64] {
        &self.energy.t
    }
    pub fn p(&self) -> &[f64] {
        &self.energy.p
    }
    pub fn c(&self) -> &[f64] {
        &self.energy.c
    }
}

/// Volume-network kernel value and radial slope at q = |r|/h.
#[inline]
pub fn kernel(net: &EffectiveNet, q: f64, h: f64, s: &mut Scratch) -> (f64, f64) {
    let (nv, dnv) = net.eval_dir(&[q], 0, s);
    let bump = (1.0 - q * q).max(0.0);
    let ex = nv.exp();
    (ex * bump, ex * (dnv * bump - 2.0 * q) / h)
}

pub fn compute_volume(pairs: &PairSet, cl: &Closures) -> Result<VolumeField> {
    let h = pairs.h;
    let kw: Vec<(f64, f64)> = pairs
        .dist
        .par_iter()
        .map_init(|| cl.scratch(), |s, &r| kernel(&cl.volume, r / h, h, s))
        .collect();
    let mut d = vec![cl.w0; pairs.n_particles];
    for (&(i, j), &(w, _)) in pairs.ij.iter().zip(&kw) {
        d[i] += w;
        d[j] += w;
    }
    if let Some(i) = d.iter().position(|&x| !(x > 0.0)) {
        return Err(Error::NonpositiveVolume(i));
    }
    let vol = d.iter().map(|x| 1.0 / x).collect();
    let grad_w = kw.iter().zip(&pairs.e).map(|(&(_, g), e)| scale(e, g)).collect();
    Ok(VolumeField {
        d,
        vol,
        w: kw.into_iter().map(|x| x.0).collect(),
        grad_w,
    })
}

/// Lower-triangle entries of l(u, r0) and their u-Jacobian (1/h included).
fn strain_pair(net: &EffectiveNet, u: &Vec3, r0: &Vec3, dim: usize, h: f64) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; 2 * dim];
    for k in 0..dim {
        x[dim + k] = r0[k] / h;
    }
    let base = net.eval(&x);
    for k in 0..dim {
        x[k] = u[k] / h;
    }
    let jet = net.jet(&x, false);
    let n_in = 2 * dim;
    let n_out = jet.value.len();
    let l: Vec<f64> = jet.value.iter().zip(&base).map(|(a, b)| a - b).collect();
    let mut jac = vec![0.0; n_out * dim];
    for o in 0..n_out {
        for k in 0..dim {
            jac[o * dim + k] = jet.grad[o * n_in + k] / h;
        }
    }
    (l, jac)
}

fn add_sym_lower(eps: &mut [f64; 9], l: &[f64], dim: usize) {
    for (k, (a, b)) in lower_triangle(dim).into_iter().enumerate() {
        eps[a * 3 + b] += 0.5 * l[k];
        eps[b * 3 + a] += 0.5 * l[k];
    }
}

/// Remove the trace of a D×D block stored in a 3×3 array.
pub fn deviator(m: &[f64; 9], dim: usize) -> [f64; 9] {
    let mut out = *m;
    let tr: f64 = (0..dim).map(|k| m[k * 4]).sum();
    for k in 0..dim {
        out[k * 4] -= tr / dim as f64;
    }
    out
}

/// Displacement relative to the reference configuration, u_ij = r_ij − r0_ij.
pub fn reference_displacements(sys: &ParticleSystem, pairs: &PairSet) -> Result<(Vec<Vec3>, Vec<Vec3>)> {
    let r0 = sys.r0.as_ref().ok_or(Error::MissingReference)?;
    let mut u = Vec::with_capacity(pairs.len());
    let mut r0ij = Vec::with_capacity(pairs.len());
    for (k, &(i, j)) in pairs.ij.iter().enumerate() {
        let d0 = minimum_image(&sub(&r0[i], &r0[j]), &sys.sim_box);
        u.push(sub(&pairs.disp[k], &d0));
        r0ij.push(d0);
    }
    Ok((u, r0ij))
}

pub fn compute_strain(sys: &ParticleSystem, pairs: &PairSet, cl: &Closures) -> Result<StrainField> {
    let net = cl.strain.as_ref().ok_or(Error::MissingReference)?;
    let (u, r0) = reference_displacements(sys, pairs)?;
    let dim = pairs.dim;
    let h = pairs.h;
    let per_pair: Vec<_> = (0..pairs.len())
        .into_par_iter()
        .map(|k| {
            let (lij, jij) = strain_pair(net, &u[k], &r0[k], dim, h);
            let (lji, jji) = strain_pair(net, &scale(&u[k], -1.0), &scale(&r0[k], -1.0), dim, h);
            (lij, jij, lji, jji)
        })
        .collect();
    let mut eps = vec![[0.0; 9]; pairs.n_particles];
    let mut jac_ij = Vec::with_capacity(pairs.len());
    let mut jac_ji = Vec::with_capacity(pairs.len());
    for (&(i, j), (lij, jij, lji, jji)) in pairs.ij.iter().zip(per_pair) {
        add_sym_lower(&mut eps[i], &lij, dim);
        add_sym_lower(&mut eps[j], &lji, dim);
        jac_ij.push(jij);
        jac_ji.push(jji);
    }
    Ok(StrainField {
        eps_bar: eps.iter().map(|e| deviator(e, dim)).collect(),
        jac_ij,
        jac_ji,
    })
}

/// ∂W̄^{ab}/∂u^c as a 3×3×3 array from a lower-triangle Jacobian.
pub fn wbar_gradient(jac: &[f64], dim: usize) -> [f64; 27] {
    let mut g = [0.0; 27];
    for (k, (a, b)) in lower_triangle(dim).into_iter().enumerate() {
        for c in 0..dim {
            let x = jac[k * dim + c];
            g[(a * 3 + b) * 3 + c] += 0.5 * x;
            g[(b * 3 + a) * 3 + c] += 0.5 * x;
            if a == b {
                for p in 0..dim {
                    g[(p * 3 + p) * 3 + c] -= x / dim as f64;
                }
            }
        }
    }
    g
}

/// Strain invariants fed to the deviatoric energy: J2 (and J3 in 3D).
pub fn invariants(eps: &[f64; 9], dim: usize) -> Vec<f64> {
    let j2 = 0.5 * eps.iter().map(|x| x * x).sum::<f64>();
    if dim == 3 {
        vec![j2, det(eps, 3)]
    } else {
        vec![j2]
    }
}

/// Per-particle energy partials: (U, U_S, U_V, U_SS).
#[inline]
fn fluid_partials(net: &EffectiveNet, s: f64, v: f64) -> (f64, f64, f64, f64) {
    let jet = net.jet(&[s, v], true);
    (jet.value[0], jet.grad[0], jet.grad[1], jet.hess[0])
}

pub fn compute_energy(s: &[f64], vol: &[f64], eps_bar: Option<&[[f64; 9]]>, cl: &Closures) -> Result<EnergyField> {
    let n = s.len();
    let dim = cl.dim;
    let dev = cl.energy_dev.as_ref();
    if dev.is_some() && eps_bar.is_none() {
        return Err(Error::MissingReference);
    }
    type Row = (f64, f64, f64, f64, Option<[f64; 9]>);
    let rows: Vec<Row> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (mut u, mut us, uv, mut uss) = fluid_partials(&cl.energy, s[i], vol[i]);
            let mut tau = None;
            if let (Some(net), Some(eps)) = (dev, eps_bar) {
                let e = &eps[i];
                let mut x = vec![s[i]];
                x.extend(invariants(e, dim));
                let jet = net.jet(&x, true);
                let ni = x.len();
                u += jet.value[0];
                us += jet.grad[0];
                uss += jet.hess[0];
                let mut t = scale9(e, jet.grad[1]);
                if dim == 3 {
                    let cof = cofactor(e, 3);
                    for k in 0..9 {
                        t[k] += jet.grad[2] * cof[k];
                    }
                }
                debug_assert_eq!(jet.grad.len(), ni);
                tau = Some(deviator(&t, dim));
            }
            (u, us, -uv, uss, tau)
        })
        .collect();
    let mut out = EnergyField {
        u: Vec::with_capacity(n),
        p: Vec::with_capacity(n),
        t: Vec::with_capacity(n),
        c: Vec::with_capacity(n),
        u_ss: Vec::with_capacity(n),
        tau: dev.map(|_| Vec::with_capacity(n)),
    };
    for (i, (u, t, p, uss, tau)) in rows.into_iter().enumerate() {
        if !(uss > MIN_CURVATURE) {
            return Err(Error::DegenerateHeatCapacity { particle: i, value: uss });
        }
        out.u.push(u);
        out.p.push(p);
        out.t.push(t);
        out.c.push(t / uss);
        out.u_ss.push(uss);
        if let (Some(v), Some(tau)) = (&mut out.tau, tau) {
            v.push(tau);
        }
    }
    Ok(out)
}

fn scale9(m: &[f64; 9], c: f64) -> [f64; 9] {
    let mut o = *m;
    o.iter_mut().for_each(|x| *x *= c);
    o
}

/// Product-form amplitudes for one pair at normalized distance q.
#[inline]
pub fn pair_coeff(cl: &Closures, q: f64, ti: f64, tj: f64, s: &mut Scratch) -> PairCoeff {
    let mut out = [0.0; 9];
    for (k, net) in cl.coeff.iter().enumerate() {
        let (fi, dfi) = net.eval_dir(&[q, ti], 1, s);
        let (fj, dfj) = net.eval_dir(&[q, tj], 1, s);
        out[3 * k] = fi * fj;
        out[3 * k + 1] = dfi * fj;
        out[3 * k + 2] = fi * dfj;
    }
    PairCoeff {
        a: out[0],
        a_ti: out[1],
        a_tj: out[2],
        b: out[3],
        b_ti: out[4],
        b_tj: out[5],
        c: out[6],
        c_ti: out[7],
        c_tj: out[8],
    }
}

pub fn compute_coefficients(pairs: &PairSet, t: &[f64], cl: &Closures) -> PairCoeffs {
    let h = pairs.h;
    PairCoeffs(
        (0..pairs.len())
            .into_par_iter()
            .map_init(
                || cl.scratch(),
                |s, k| {
                    let (i, j) = pairs.ij[k];
                    pair_coeff(cl, pairs.dist[k] / h, t[i], t[j], s)
                },
            )
            .collect(),
    )
}

/// Full closure evaluation at the current state.
pub fn evaluate(sys: &ParticleSystem, pairs: &PairSet, cl: &Closures) -> Result<ThermoState> {
    let volume = compute_volume(pairs, cl)?;
    let strain = if cl.is_solid() {
        Some(compute_strain(sys, pairs, cl)?)
    } else {
        None
    };
    let energy = compute_energy(&sys.s, &volume.vol, strain.as_ref().map(|s| &s.eps_bar[..]), cl)?;
    let coeffs = compute_coefficients(pairs, &energy.t, cl);
    Ok(ThermoState {
        volume,
        strain,
        energy,
        coeffs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_pairs, SimBox};
    use crate::nn::Architecture;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_system(n: usize, dim: usize, seed: u64) -> ParticleSystem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = SimBox::cube(dim, 1.0, crate::geometry::BoundaryMode::Periodic, 0.0);
        let r = (0..n)
            .map(|_| {
                let mut x = [0.0; 3];
                for k in 0..dim {
                    x[k] = rng.random::<f64>();
                }
                x
            })
            .collect();
        let v = (0..n).map(|_| [rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, 0.0]).collect();
        let s = (0..n).map(|_| rng.random::<f64>()).collect();
        ParticleSystem::new(b, r, v, s)
    }

    #[test]
    fn isolated_particle_has_unit_volume() {
        let p = ModelParams::random(&Architecture::fluid(3, 0.2, 8), 1);
        let cl = Closures::new(&p);
        let mut sys = random_system(1, 3, 1);
        sys.r[0] = [0.5; 3];
        let pairs = build_pairs(&sys, 0.2).unwrap();
        let v = compute_volume(&pairs, &cl).unwrap();
        assert_eq!(v.d, vec![1.0]);
    }

    #[test]
    fn kernel_vanishes_at_support_edge() {
        let p = ModelParams::random(&Architecture::fluid(3, 0.2, 8), 2);
        let cl = Closures::new(&p);
        let mut s = cl.scratch();
        assert_eq!(kernel(&cl.volume, 1.0, 0.2, &mut s).0, 0.0);
        assert!(kernel(&cl.volume, 1.0 - 1e-9, 0.2, &mut s).0 < 1e-8);
    }

    #[test]
    fn zero_displacement_gives_zero_strain() {
        let arch = Architecture {
            dim: 3,
            solid: true,
            cutoff: 0.25,
            width: 8,
            hidden_layers: 2,
        };
        let cl = Closures::new(&ModelParams::random(&arch, 5));
        let mut sys = random_system(40, 3, 3);
        sys.r0 = Some(sys.r.clone());
        let pairs = build_pairs(&sys, 0.25).unwrap();
        let st = compute_strain(&sys, &pairs, &cl).unwrap();
        assert!(st.eps_bar.iter().all(|e| e.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn coefficients_are_symmetric_in_temperature() {
        let cl = Closures::new(&ModelParams::random(&Architecture::fluid(2, 0.2, 8), 4));
        let mut s = cl.scratch();
        let a = pair_coeff(&cl, 0.3, 1.2, 0.7, &mut s);
        let b = pair_coeff(&cl, 0.3, 0.7, 1.2, &mut s);
        assert_eq!(a.a, b.a);
        assert_eq!(a.b, b.b);
        assert_eq!(a.c, b.c);
        assert_eq!(a.a_ti, b.a_tj);
    }

    #[test]
    fn wbar_gradient_is_traceless() {
        let jac: Vec<f64> = (0..18).map(|k| (k as f64 * 0.37).sin()).collect();
        let g = wbar_gradient(&jac, 3);
        for c in 0..3 {
            let tr: f64 = (0..3).map(|p| g[(p * 3 + p) * 3 + c]).sum();
            assert!(tr.abs() < 1e-15);
        }
    }
}
