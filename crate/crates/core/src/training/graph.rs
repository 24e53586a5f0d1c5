//! The transition negative log-likelihood recorded on the tape, so that its
//! gradient with respect to every parameter is available by one reverse
//! sweep. Mirrors the direct evaluation in `thermo` and `dynamics` term by
//! term.

use std::ops::Range;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::geometry::{build_pairs, minimum_image, PairSet, ParticleSystem};
use crate::nn::tape::{concat_cols, Gradients, NLL_JITTER};
use crate::nn::{Activation, ModelParams, Network, ParamVector, Tape, Tensor, Var};
use crate::thermo::MIN_CURVATURE;
use crate::trajectory::Trajectory;
use crate::vecmath::{lower_triangle, sub, Vec3};

/// Teacher inputs: one row per (particle, neighbour) plus a sentinel row for
/// every isolated particle.
#[derive(Clone, Debug, Default)]
pub struct TeacherRows {
    pub x: Vec<f64>,
    pub owner: Vec<usize>,
    pub inv_count: Vec<f64>,
}

impl TeacherRows {
    pub fn build(sys: &ParticleSystem, pairs: &PairSet) -> Self {
        let dim = sys.dim;
        let h = pairs.h;
        let mut x = Vec::with_capacity((2 * pairs.len() + 1) * (dim + 1));
        let mut owner = Vec::with_capacity(2 * pairs.len());
        for k in 0..pairs.len() {
            let (i, j) = pairs.ij[k];
            let w = pairs.relative_velocity(k, &sys.v, &sys.sim_box);
            let q = pairs.dist[k] / h;
            x.push(q);
            x.extend_from_slice(&w[..dim]);
            owner.push(i);
            x.push(q);
            x.extend(w[..dim].iter().map(|c| -c));
            owner.push(j);
        }
        let deg = pairs.degree();
        for (i, &d) in deg.iter().enumerate() {
            if d == 0 {
                x.push(1.0);
                x.extend(std::iter::repeat_n(0.0, dim));
                owner.push(i);
            }
        }
        let inv_count = deg.iter().map(|&d| 1.0 / d.max(1) as f64).collect();
        Self { x, owner, inv_count }
    }

    fn rows(&self) -> usize {
        self.owner.len()
    }
}

/// Parameter-independent inputs of the loss for one transition.
#[derive(Clone, Debug, Default)]
pub struct LossData {
    pub dim: usize,
    pub h: f64,
    pub dt: f64,
    pub n: usize,
    pub v: Vec<f64>,
    /// Observed velocity increment v(t+1) − v(t), corrected for
    /// Lees-Edwards remapping.
    pub dv: Vec<f64>,
    pub pi: Vec<usize>,
    pub pj: Vec<usize>,
    pub q: Vec<f64>,
    pub e: Vec<f64>,
    pub w: Vec<f64>,
    pub teach_now: TeacherRows,
    pub teach_next: TeacherRows,
    /// Solids: displacement relative to the reference and reference
    /// separation, per pair.
    pub u: Vec<f64>,
    pub r0: Vec<f64>,
    pub solid: bool,
}

impl LossData {
    /// Inputs of the transition from frame `t` to `t + 1`.
    pub fn transition(traj: &Trajectory, t: usize, h: f64, solid: bool) -> Result<Self> {
        let dim = traj.dim;
        let sys = traj.system(t);
        let next = traj.system(t + 1);
        let pairs = build_pairs(&sys, h)?;
        let pairs_next = build_pairs(&next, h)?;
        let n = sys.len();
        let mut d = Self {
            dim,
            h,
            dt: traj.dt,
            n,
            solid,
            ..Default::default()
        };
        let u_img = sys.sim_box.image_velocity();
        for i in 0..n {
            let shift = match (&traj.frames[t].images, &traj.frames[t + 1].images) {
                (Some(a), Some(b)) => (b[i][1] - a[i][1]) as f64 * u_img,
                _ => 0.0,
            };
            for a in 0..dim {
                d.v.push(sys.v[i][a]);
                let corr = if a == 0 { shift } else { 0.0 };
                d.dv.push(next.v[i][a] + corr - sys.v[i][a]);
            }
        }
        for k in 0..pairs.len() {
            let (i, j) = pairs.ij[k];
            d.pi.push(i);
            d.pj.push(j);
            d.q.push(pairs.dist[k] / h);
            let w = pairs.relative_velocity(k, &sys.v, &sys.sim_box);
            d.e.extend_from_slice(&pairs.e[k][..dim]);
            d.w.extend_from_slice(&w[..dim]);
        }
        if solid {
            let r0 = sys.r0.as_ref().ok_or(Error::MissingReference)?;
            for k in 0..pairs.len() {
                let (i, j) = pairs.ij[k];
                let d0: Vec3 = minimum_image(&sub(&r0[i], &r0[j]), &sys.sim_box);
                let u = sub(&pairs.disp[k], &d0);
                d.u.extend_from_slice(&u[..dim]);
                d.r0.extend_from_slice(&d0[..dim]);
            }
        }
        d.teach_now = TeacherRows::build(&sys, &pairs);
        d.teach_next = TeacherRows::build(&next, &pairs_next);
        Ok(d)
    }

    pub fn n_pairs(&self) -> usize {
        self.pi.len()
    }
}

/// Network weights as tape leaves, with the CMNN sign transform applied.
pub struct NetVars<'t> {
    act: Activation,
    raw: Vec<Var<'t>>,
    layers: Vec<(Var<'t>, Var<'t>)>,
}

/// Value, first derivatives along input columns and optionally the second
/// derivative along the first listed column.
pub struct NetJet<'t> {
    pub value: Var<'t>,
    pub d1: Vec<Var<'t>>,
    pub d2: Option<Var<'t>>,
}

impl<'t> NetVars<'t> {
    pub fn new(tape: &'t Tape, net: &Network) -> Self {
        let mut raw = Vec::new();
        let mut layers = Vec::new();
        for (li, l) in net.layers.iter().enumerate() {
            let w = tape.param(Tensor::new(l.n_out, l.n_in, l.w.clone()));
            let b = tape.param(Tensor::new(1, l.n_out, l.b.clone()));
            raw.push(w);
            raw.push(b);
            let we = match &net.indicator {
                Some(t) => {
                    let ind = if li == 0 { t.clone() } else { vec![1; l.n_in] };
                    w.constrain(Rc::new(ind))
                }
                None => w,
            };
            layers.push((we, b));
        }
        Self {
            act: net.activation,
            raw,
            layers,
        }
    }

    pub fn eval(&self, x: Var<'t>) -> Var<'t> {
        let (w0, b0) = self.layers[0];
        let mut z = x.matmul_t(w0).add_row(b0);
        for &(w, b) in &self.layers[1..] {
            z = z.act(self.act, 0).matmul_t(w).add_row(b);
        }
        z
    }

    pub fn jet(&self, tape: &'t Tape, x: Var<'t>, dirs: &[usize], second: bool) -> NetJet<'t> {
        let n = x.rows();
        let k = x.cols();
        let (w0, b0) = self.layers[0];
        let mut z = x.matmul_t(w0).add_row(b0);
        let mut dz: Vec<Var<'t>> = dirs
            .iter()
            .map(|&c| {
                let mut hot = Tensor::zeros(n, k);
                for r in 0..n {
                    hot.data[r * k + c] = 1.0;
                }
                tape.constant(hot).matmul_t(w0)
            })
            .collect();
        let mut d2z: Option<Var<'t>> = None;
        for &(w, b) in &self.layers[1..] {
            let s1 = z.act(self.act, 1);
            let d2a = if second {
                let t = z.act(self.act, 2) * dz[0] * dz[0];
                Some(match d2z {
                    Some(d2) => t + s1 * d2,
                    None => t,
                })
            } else {
                None
            };
            let a = z.act(self.act, 0);
            z = a.matmul_t(w).add_row(b);
            dz = dz.iter().map(|&d| (s1 * d).matmul_t(w)).collect();
            d2z = d2a.map(|d| d.matmul_t(w));
        }
        NetJet { value: z, d1: dz, d2: d2z }
    }
}

/// Every parameter of a model on the tape, in flat-vector order.
pub struct ModelVars<'t> {
    pub volume: NetVars<'t>,
    pub energy: NetVars<'t>,
    pub energy_dev: Option<NetVars<'t>>,
    pub coeff: [NetVars<'t>; 3],
    pub teacher: NetVars<'t>,
    pub strain: Option<NetVars<'t>>,
    pub log_kb: Var<'t>,
    pub log_m: Var<'t>,
}

impl<'t> ModelVars<'t> {
    pub fn new(tape: &'t Tape, p: &ModelParams) -> Self {
        Self {
            volume: NetVars::new(tape, &p.volume),
            energy: NetVars::new(tape, &p.energy),
            energy_dev: p.energy_dev.as_ref().map(|n| NetVars::new(tape, n)),
            coeff: [
                NetVars::new(tape, &p.coeff_a),
                NetVars::new(tape, &p.coeff_b),
                NetVars::new(tape, &p.coeff_c),
            ],
            teacher: NetVars::new(tape, &p.teacher),
            strain: p.strain.as_ref().map(|n| NetVars::new(tape, n)),
            log_kb: tape.param(Tensor::scalar(p.log_kb)),
            log_m: tape.param(Tensor::scalar(p.log_m)),
        }
    }

    fn ordered(&self) -> Vec<&NetVars<'t>> {
        let mut v = vec![&self.volume, &self.energy];
        if let Some(n) = &self.energy_dev {
            v.push(n);
        }
        v.extend(self.coeff.iter());
        v.push(&self.teacher);
        if let Some(n) = &self.strain {
            v.push(n);
        }
        v
    }

    /// Gradient gathered into the layout of `ModelParams::flatten`.
    pub fn gradient(&self, g: &Gradients) -> ParamVector {
        let mut out = Vec::new();
        for net in self.ordered() {
            for &v in &net.raw {
                out.extend(g.data_or_zero(v));
            }
        }
        out.extend(g.data_or_zero(self.log_kb));
        out.extend(g.data_or_zero(self.log_m));
        ParamVector(out)
    }
}

fn column<'t>(tape: &'t Tape, x: Vec<f64>) -> Var<'t> {
    tape.constant(Tensor::column(x))
}

fn matrix<'t>(tape: &'t Tape, rows: usize, cols: usize, x: Vec<f64>) -> Var<'t> {
    tape.constant(Tensor::new(rows, cols, x))
}

fn range(r: Range<usize>) -> Rc<Vec<usize>> {
    Rc::new(r.collect())
}

/// Teacher entropy per particle: mean of the teacher network over the
/// neighbours, or its value at the sentinel input for isolated particles.
pub fn teacher<'t>(tape: &'t Tape, net: &NetVars<'t>, rows: &TeacherRows, dim: usize, n: usize) -> Var<'t> {
    let x = matrix(tape, rows.rows(), dim + 1, rows.x.clone());
    net.eval(x)
        .scatter_add(Rc::new(rows.owner.clone()), n)
        .mul_col(column(tape, rows.inv_count.clone()))
}

/// Parts of the graph reused by the diagnostics.
pub struct LossParts<'t> {
    pub nll: Var<'t>,
    pub per_particle: Var<'t>,
    pub s_now: Var<'t>,
    pub s_next: Var<'t>,
    pub sigma: Var<'t>,
    pub resid: Var<'t>,
}

/// 3×3 cofactor entries from the columns of a flattened symmetric matrix.
fn cofactor_cols<'t>(m: Var<'t>) -> Vec<Var<'t>> {
    let e = |a: usize, b: usize| m.col(a * 3 + b);
    let minor = |a: usize, b: usize| {
        let r: Vec<usize> = (0..3).filter(|&x| x != a).collect();
        let c: Vec<usize> = (0..3).filter(|&x| x != b).collect();
        e(r[0], c[0]) * e(r[1], c[1]) - e(r[0], c[1]) * e(r[1], c[0])
    };
    let mut out = Vec::with_capacity(9);
    for a in 0..3 {
        for b in 0..3 {
            let m = minor(a, b);
            out.push(if (a + b) % 2 == 0 { m } else { -m });
        }
    }
    out
}

/// Record the mean transition NLL of the batch.
pub fn build<'t>(tape: &'t Tape, mv: &ModelVars<'t>, d: &LossData) -> Result<LossParts<'t>> {
    let dim = d.dim;
    let df = dim as f64;
    let n = d.n;
    let np = d.n_pairs();
    let h = d.h;
    let dt = d.dt;
    let pi = Rc::new(d.pi.clone());
    let pj = Rc::new(d.pj.clone());
    let kb = mv.log_kb.exp();
    let m = mv.log_m.exp();
    let inv_m = m.recip();

    let s_now = teacher(tape, &mv.teacher, &d.teach_now, dim, n);
    let s_next = teacher(tape, &mv.teacher, &d.teach_next, dim, n);

    // kernel volumes; the last row is the self term at q = 0
    let mut qv = d.q.clone();
    qv.push(0.0);
    let bump: Vec<f64> = qv.iter().map(|q| (1.0 - q * q).max(0.0)).collect();
    let jv = mv.volume.jet(tape, column(tape, qv.clone()), &[0], false);
    let ex = jv.value.exp();
    let bump = column(tape, bump);
    let kern = ex * bump;
    let two_q = column(tape, qv.iter().map(|q| 2.0 * q).collect());
    let grad_w = (ex * (jv.d1[0] * bump - two_q)).scale(1.0 / h).gather(range(0..np));
    let mut g_idx: Vec<usize> = (0..np).chain(0..np).collect();
    g_idx.extend(std::iter::repeat_n(np, n));
    let mut s_idx: Vec<usize> = d.pi.iter().chain(&d.pj).copied().collect();
    s_idx.extend(0..n);
    let dens = kern.gather(Rc::new(g_idx)).scatter_add(Rc::new(s_idx), n);
    let vol = dens.recip();

    let je = mv.energy.jet(tape, concat_cols(&[s_now, vol]), &[0, 1], true);
    let mut u_s = je.d1[0];
    let u_v = je.d1[1];
    let mut u_ss = je.d2.expect("second derivative requested");

    let e_c = matrix(tape, np, dim, d.e.clone());
    let p = -u_v;
    let pd2 = p * dens.square().recip();
    let cmag = pd2.gather(pi.clone()) + pd2.gather(pj.clone());
    let mut f_pair = e_c.mul_col(-(cmag * grad_w));

    if let (true, Some(snet), Some(dnet)) = (d.solid, &mv.strain, &mv.energy_dev) {
        let tri = lower_triangle(dim);
        let nt = tri.len();
        // rows 0..np: (u_ij, r0_ij); rows np..2np: (u_ji, r0_ji)
        let mut x1 = Vec::with_capacity(2 * np * 2 * dim);
        let mut x0 = Vec::with_capacity(2 * np * 2 * dim);
        for sign in [1.0, -1.0] {
            for k in 0..np {
                for c in 0..dim {
                    x1.push(sign * d.u[k * dim + c] / h);
                    x0.push(0.0);
                }
                for c in 0..dim {
                    x1.push(sign * d.r0[k * dim + c] / h);
                    x0.push(sign * d.r0[k * dim + c] / h);
                }
            }
        }
        let dirs: Vec<usize> = (0..dim).collect();
        let js = snet.jet(tape, matrix(tape, 2 * np, 2 * dim, x1), &dirs, false);
        let base = snet.eval(matrix(tape, 2 * np, 2 * dim, x0));
        let l = js.value - base;
        let d2 = dim * dim;
        let mut sym = vec![0.0; nt * d2];
        let mut sel = vec![0.0; d2 * nt];
        for (k, &(a, b)) in tri.iter().enumerate() {
            sym[k * d2 + a * dim + b] += 0.5;
            sym[k * d2 + b * dim + a] += 0.5;
            sel[(a * dim + b) * nt + k] = 1.0;
        }
        let mut dev = vec![0.0; d2 * d2];
        for a in 0..d2 {
            dev[a * d2 + a] = 1.0;
        }
        for a in 0..dim {
            for b in 0..dim {
                dev[(a * dim + a) * d2 + b * dim + b] -= 1.0 / df;
            }
        }
        let dev = matrix(tape, d2, d2, dev);
        let owners: Vec<usize> = d.pi.iter().chain(&d.pj).copied().collect();
        let eps = l
            .matmul(matrix(tape, nt, d2, sym))
            .scatter_add(Rc::new(owners), n)
            .matmul(dev);
        let j2 = (eps * eps).sum_cols().scale(0.5);
        let mut inputs = vec![s_now, j2];
        let cof = if dim == 3 {
            let cof = cofactor_cols(eps);
            let det = eps.col(0) * cof[0] + eps.col(1) * cof[1] + eps.col(2) * cof[2];
            inputs.push(det);
            Some(concat_cols(&cof))
        } else {
            None
        };
        let dirs: Vec<usize> = (0..inputs.len()).collect();
        let jd = dnet.jet(tape, concat_cols(&inputs), &dirs, true);
        u_s = u_s + jd.d1[0];
        u_ss = u_ss + jd.d2.expect("second derivative requested");
        let mut tau = eps.mul_col(jd.d1[1]);
        if let Some(cof) = cof {
            tau = tau + cof.mul_col(jd.d1[2]);
        }
        let tau_low = tau.matmul(dev).matmul(matrix(tape, d2, nt, sel));
        let ti = tau_low.gather(pi.clone());
        let tj = tau_low.gather(pj.clone());
        let comps: Vec<Var<'t>> = (0..dim)
            .map(|c| {
                let jij = js.d1[c].gather(range(0..np)).scale(1.0 / h);
                let jji = js.d1[c].gather(range(np..2 * np)).scale(1.0 / h);
                (tj * jji - ti * jij).sum_cols()
            })
            .collect();
        f_pair = f_pair + concat_cols(&comps);
    }

    // curvature guard, as in the direct evaluation
    {
        let uss = u_ss.value();
        if let Some(i) = uss.data.iter().position(|&x| !(x > MIN_CURVATURE)) {
            return Err(Error::DegenerateHeatCapacity {
                particle: i,
                value: uss.data[i],
            });
        }
    }
    let t = u_s;
    let inv_t = t.recip();
    let ic = u_ss * inv_t;
    let itc = ic * inv_t;

    // product-form amplitudes and their temperature partials
    let both: Rc<Vec<usize>> = Rc::new(d.pi.iter().chain(&d.pj).copied().collect());
    let q2 = column(tape, d.q.iter().chain(&d.q).copied().collect());
    let xin = concat_cols(&[q2, t.gather(both)]);
    let mut coef = Vec::with_capacity(3);
    for net in &mv.coeff {
        let jc = net.jet(tape, xin, &[1], false);
        let fi = jc.value.gather(range(0..np));
        let fj = jc.value.gather(range(np..2 * np));
        let gi = jc.d1[0].gather(range(0..np));
        let gj = jc.d1[0].gather(range(np..2 * np));
        coef.push((fi * fj, gi * fj, fi * gj));
    }
    let (a, a_ti, a_tj) = coef[0];
    let (b, b_ti, b_tj) = coef[1];
    let (c, c_ti, c_tj) = coef[2];

    // pair drift
    let ev: Vec<f64> = (0..np)
        .map(|k| (0..dim).map(|x| d.e[k * dim + x] * d.w[k * dim + x]).sum())
        .collect();
    let v2: Vec<f64> = (0..np)
        .map(|k| (0..dim).map(|x| d.w[k * dim + x].powi(2)).sum())
        .collect();
    let mut eev = vec![0.0; np * dim];
    let mut eet = vec![0.0; np * dim * dim];
    for k in 0..np {
        for x in 0..dim {
            eev[k * dim + x] = d.e[k * dim + x] * ev[k];
            for y in 0..dim {
                eet[k * dim * dim + x * dim + y] = d.e[k * dim + x] * d.e[k * dim + y];
            }
        }
    }
    let ev2 = column(tape, ev.iter().map(|x| x * x).collect());
    let v2 = column(tape, v2);
    let w_c = matrix(tape, np, dim, d.w.clone());
    let eev = matrix(tape, np, dim, eev);

    let a2 = a * a;
    let b2 = b * b;
    let k1 = a2.scale(0.5);
    let k2 = k1 + (b2 - a2).scale(1.0 / df);
    let k1i = a * a_ti;
    let k1j = a * a_tj;
    let k2i = k1i + (b * b_ti - k1i).scale(2.0 / df);
    let k2j = k1j + (b * b_tj - k1j).scale(2.0 / df);
    let z = k1 * v2 + k2 * ev2;
    let zi = k1i * v2 + k2i * ev2;
    let zj = k1j * v2 + k2j * ev2;
    let y = w_c.mul_col(k1) + eev.mul_col(k2);
    let yi = w_c.mul_col(k1i) + eev.mul_col(k2i);
    let yj = w_c.mul_col(k1j) + eev.mul_col(k2j);

    let inv_ti = inv_t.gather(pi.clone());
    let inv_tj = inv_t.gather(pj.clone());
    let ic_i = ic.gather(pi.clone());
    let ic_j = ic.gather(pj.clone());
    let itc_i = itc.gather(pi.clone());
    let itc_j = itc.gather(pj.clone());

    let dv_diss = y.mul_col((inv_ti + inv_tj).scale(-0.5));
    let dv_div = (y.mul_col(itc_i + itc_j) - yi.mul_col(ic_i) - yj.mul_col(ic_j))
        .scale(0.5)
        .mul_scalar(kb);
    let pair_v = f_pair + dv_diss + dv_div;

    let c2 = c * c;
    let heat = ((inv_ti + inv_tj) * z).scale(0.25);
    let cond = (inv_ti - inv_tj) * c2;
    let kin = (k1.scale(df + 1.0) + (b2 - a2).scale(1.0 / df)).mul_scalar(kb * inv_m);
    let zp = (ic_i * zi + ic_j * zj).scale(0.25).mul_scalar(kb);
    let cc = (ic_i * c * c_ti - ic_j * c * c_tj).scale(2.0).mul_scalar(kb);
    let tds_i = heat + cond - kin
        - ((itc_i.scale(2.0) + itc_j) * z).scale(0.25).mul_scalar(kb)
        - ((itc_i.scale(2.0) - itc_j) * c2).mul_scalar(kb)
        + zp
        + cc;
    let tds_j = heat - cond - kin
        - ((itc_j.scale(2.0) + itc_i) * z).scale(0.25).mul_scalar(kb)
        - ((itc_j.scale(2.0) - itc_i) * c2).mul_scalar(kb)
        + zp
        - cc;

    let rate_v = pair_v.scatter_add(pi.clone(), n) - pair_v.scatter_add(pj.clone(), n);
    let tds = tds_i.scatter_add(pi.clone(), n) + tds_j.scatter_add(pj.clone(), n);
    let rv = matrix(tape, n, dim, d.dv.clone()) - rate_v.mul_scalar(inv_m).scale(dt);
    let rs = s_next - s_now - (tds * inv_t).scale(dt);
    let mut cols: Vec<Var<'t>> = (0..dim).map(|x| rv.col(x)).collect();
    cols.push(rs);
    let resid = concat_cols(&cols);

    // closed-form marginal covariance
    let mut iflat = vec![0.0; dim * dim];
    for x in 0..dim {
        iflat[x * dim + x] = 1.0;
    }
    let vv_pair = k1.matmul(matrix(tape, 1, dim * dim, iflat)) + matrix(tape, np, dim * dim, eet).mul_col(k2);
    let vv = vv_pair.scatter_add(pi.clone(), n) + vv_pair.scatter_add(pj.clone(), n);
    let ysum = y.scatter_add(pi.clone(), n) - y.scatter_add(pj.clone(), n);
    let ss_pair = z.scale(0.25) + c2;
    let ss = ss_pair.scatter_add(pi.clone(), n) + ss_pair.scatter_add(pj, n);
    let kbdt = kb.scale(dt);
    let svv = vv.mul_scalar(kbdt.scale(2.0) * inv_m * inv_m);
    let svs = ysum.mul_col(inv_t).mul_scalar(-(kbdt * inv_m));
    let sss = (ss * inv_t * inv_t).mul_scalar(kbdt.scale(2.0));
    let mut sc = Vec::with_capacity((dim + 1) * (dim + 1));
    for x in 0..dim {
        sc.push(svv.cols_range(x * dim, dim));
        sc.push(svs.col(x));
    }
    sc.push(svs);
    sc.push(sss);
    let sigma = concat_cols(&sc);
    let per_particle = sigma.gaussian_nll(resid, NLL_JITTER)?;
    Ok(LossParts {
        nll: per_particle.mean(),
        per_particle,
        s_now,
        s_next,
        sigma,
        resid,
    })
}

/// Mean NLL of the batch and its gradient in flat-vector layout.
pub fn loss_and_grad(params: &ModelParams, d: &LossData) -> Result<(f64, ParamVector)> {
    let tape = Tape::new();
    let mv = ModelVars::new(&tape, params);
    let parts = build(&tape, &mv, d)?;
    let value = parts.nll.value().item();
    let g = tape.backward(parts.nll);
    Ok((value, mv.gradient(&g)))
}

/// Mean NLL of the batch without the reverse sweep.
pub fn loss(params: &ModelParams, d: &LossData) -> Result<f64> {
    let tape = Tape::new();
    let mv = ModelVars::new(&tape, params);
    Ok(build(&tape, &mv, d)?.nll.value().item())
}
