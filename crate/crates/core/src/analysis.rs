//! Ensemble statistics of trajectories (VACF, RDF, MSD, D²min, shear
//! profiles) and curve comparison.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{build_pairs, minimum_image, ParticleSystem};
use crate::trajectory::{Frame, Trajectory};
use crate::vecmath::{dot, norm2, sub, Vec3};

/// A sampled curve with per-point sample counts.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationCurve {
    pub metric: String,
    pub abscissa_name: String,
    pub abscissa: Vec<f64>,
    pub values: Vec<f64>,
    pub counts: Vec<u64>,
    pub n_origins: usize,
}

impl CorrelationCurve {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// CSV with a `# metric, abscissa_name, n_origins` header line and one
    /// `abscissa,value,count` row per point.
    pub fn to_csv(&self) -> String {
        let mut s = format!("# {}, {}, {}\n", self.metric, self.abscissa_name, self.n_origins);
        for k in 0..self.len() {
            s.push_str(&format!("{},{},{}\n", self.abscissa[k], self.values[k], self.counts[k]));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}

fn need(traj: &Trajectory, n: usize) -> Result<()> {
    if traj.len() < n {
        return Err(Error::InsufficientSnapshots {
            needed: n,
            got: traj.len(),
        });
    }
    Ok(())
}

/// Mean over particles and origins (every `stride`-th frame) of `f(τ, τ+lag)`.
fn lag_average<F>(metric: &str, traj: &Trajectory, max_lag: usize, stride: usize, f: F) -> Result<CorrelationCurve>
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    need(traj, max_lag + 1)?;
    let stride = stride.max(1);
    let n = traj.n_particles() as u64;
    let rows: Vec<(f64, u64)> = (0..=max_lag)
        .into_par_iter()
        .map(|lag| {
            let mut sum = 0.0;
            let mut count = 0;
            for t in (0..traj.len() - lag).step_by(stride) {
                sum += f(t, t + lag);
                count += n;
            }
            (sum / count.max(1) as f64, count)
        })
        .collect();
    Ok(CorrelationCurve {
        metric: metric.into(),
        abscissa_name: "t".into(),
        abscissa: (0..=max_lag).map(|k| k as f64 * traj.dt).collect(),
        values: rows.iter().map(|r| r.0).collect(),
        counts: rows.iter().map(|r| r.1).collect(),
        n_origins: traj.len().div_ceil(stride),
    })
}

/// ⟨v(τ)·v(τ+t)⟩ over particles and all origins.
pub fn vacf(traj: &Trajectory, max_lag: usize) -> Result<CorrelationCurve> {
    vacf_strided(traj, max_lag, 1)
}

pub fn vacf_strided(traj: &Trajectory, max_lag: usize, stride: usize) -> Result<CorrelationCurve> {
    let dim = traj.dim;
    lag_average("vacf", traj, max_lag, stride, |a, b| {
        let (fa, fb) = (&traj.frames[a], &traj.frames[b]);
        fa.v.iter().zip(&fb.v).map(|(x, y)| dot(x, y, dim)).sum()
    })
}

/// ⟨|r(τ+t) − r(τ)|²⟩ on unwrapped positions.
pub fn msd(traj: &Trajectory, max_lag: usize) -> Result<CorrelationCurve> {
    msd_strided(traj, max_lag, 1)
}

pub fn msd_strided(traj: &Trajectory, max_lag: usize, stride: usize) -> Result<CorrelationCurve> {
    need(traj, max_lag + 1)?;
    let dim = traj.dim;
    let un: Vec<Vec<Vec3>> = traj.frames.iter().map(Frame::unwrapped).collect::<Result<_>>()?;
    lag_average("msd", traj, max_lag, stride, |a, b| {
        un[a].iter().zip(&un[b]).map(|(x, y)| norm2(&sub(y, x), dim)).sum()
    })
}

/// Radial distribution function with `n_bins` bins on `[0, r_max)`,
/// normalised by the ideal-gas shell count at the mean density.
pub fn rdf(traj: &Trajectory, r_max: f64, n_bins: usize) -> Result<CorrelationCurve> {
    need(traj, 1)?;
    if n_bins == 0 {
        return Err(Error::InvalidArgument("rdf needs at least one bin".into()));
    }
    let dim = traj.dim;
    let dr = r_max / n_bins as f64;
    let hists: Vec<Vec<u64>> = traj
        .frames
        .par_iter()
        .map(|f| {
            let sys = f.to_system(vec![0.0; f.len()]);
            let pairs = build_pairs(&sys, r_max)?;
            let mut h = vec![0u64; n_bins];
            for &d in &pairs.dist {
                let b = (d / dr) as usize;
                if b < n_bins {
                    h[b] += 2;
                }
            }
            Ok(h)
        })
        .collect::<Result<_>>()?;
    let mut counts = vec![0u64; n_bins];
    let mut norm = 0.0;
    for (f, h) in traj.frames.iter().zip(&hists) {
        for b in 0..n_bins {
            counts[b] += h[b];
        }
        let n = f.len() as f64;
        norm += n * n / f.sim_box.volume();
    }
    let mut abscissa = Vec::with_capacity(n_bins);
    let mut values = Vec::with_capacity(n_bins);
    for b in 0..n_bins {
        let (lo, hi) = (b as f64 * dr, (b + 1) as f64 * dr);
        let shell = if dim == 2 {
            std::f64::consts::PI * (hi * hi - lo * lo)
        } else {
            4.0 / 3.0 * std::f64::consts::PI * (hi.powi(3) - lo.powi(3))
        };
        abscissa.push(lo + 0.5 * dr);
        values.push(counts[b] as f64 / (norm * shell));
    }
    Ok(CorrelationCurve {
        metric: "rdf".into(),
        abscissa_name: "r".into(),
        abscissa,
        values,
        counts,
        n_origins: traj.len(),
    })
}

/// Per-particle non-affine residual between two snapshots: the mean of
/// |u'_j − J u_j|² over neighbours within `h` in `a`, minimised over J.
/// Particles whose neighbour moment matrix is singular get NaN.
pub fn d2min(a: &Frame, b: &Frame, h: f64) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let dim = a.sim_box.dim;
    let sys: ParticleSystem = a.to_system(vec![0.0; a.len()]);
    let pairs = build_pairs(&sys, h)?;
    let n = a.len();
    let mut x = vec![[0.0; 9]; n];
    let mut y = vec![[0.0; 9]; n];
    let mut nb: Vec<Vec<(Vec3, Vec3)>> = vec![Vec::new(); n];
    for (k, &(i, j)) in pairs.ij.iter().enumerate() {
        let u = pairs.disp[k];
        let w = minimum_image(&sub(&b.r[i], &b.r[j]), &b.sim_box);
        // both orientations give the same moments
        for p in 0..dim {
            for q in 0..dim {
                x[i][p * 3 + q] += w[p] * u[q];
                y[i][p * 3 + q] += u[p] * u[q];
                x[j][p * 3 + q] += w[p] * u[q];
                y[j][p * 3 + q] += u[p] * u[q];
            }
        }
        nb[i].push((u, w));
        nb[j].push((u, w));
    }
    let out = (0..n)
        .into_par_iter()
        .map(|i| {
            if nb[i].len() < dim {
                return f64::NAN;
            }
            let ym = DMatrix::from_fn(dim, dim, |p, q| y[i][p * 3 + q]);
            let eig = SymmetricEigen::new(ym.clone());
            let top = eig.eigenvalues.max();
            if !(eig.eigenvalues.min() > 1e-12 * top) {
                return f64::NAN;
            }
            let inv = match ym.try_inverse() {
                Some(m) => m,
                None => return f64::NAN,
            };
            let xm = DMatrix::from_fn(dim, dim, |p, q| x[i][p * 3 + q]);
            let j = xm * inv;
            let mut sum = 0.0;
            for (u, w) in &nb[i] {
                for p in 0..dim {
                    let mut r = w[p];
                    for q in 0..dim {
                        r -= j[(p, q)] * u[q];
                    }
                    sum += r * r;
                }
            }
            sum / nb[i].len() as f64
        })
        .collect();
    Ok(out)
}

/// ‖gt − pred‖ / ‖gt‖ over the curve values.
pub fn l2_rel_error(gt: &CorrelationCurve, pred: &CorrelationCurve) -> Result<f64> {
    if gt.len() != pred.len() || gt.abscissa.iter().zip(&pred.abscissa).any(|(a, b)| (a - b).abs() > 1e-9 * a.abs().max(1e-300)) {
        return Err(Error::AbscissaMismatch);
    }
    let den: f64 = gt.values.iter().map(|x| x * x).sum::<f64>().sqrt();
    if den == 0.0 {
        return Err(Error::ZeroReference);
    }
    let num: f64 = gt.values.iter().zip(&pred.values).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    Ok(num / den)
}

/// Time-averaged v_x in `n_bins` slabs along y, the Lees-Edwards gradient
/// direction. Empty slabs are NaN.
pub fn shear_profile(traj: &Trajectory, n_bins: usize) -> Result<CorrelationCurve> {
    need(traj, 1)?;
    if n_bins == 0 {
        return Err(Error::InvalidArgument("shear profile needs at least one bin".into()));
    }
    let ly = traj.frames[0].sim_box.lengths[1];
    let dy = ly / n_bins as f64;
    let mut sum = vec![0.0; n_bins];
    let mut counts = vec![0u64; n_bins];
    for f in &traj.frames {
        for (r, v) in f.r.iter().zip(&f.v) {
            let b = ((r[1] / dy).floor().max(0.0) as usize).min(n_bins - 1);
            sum[b] += v[0];
            counts[b] += 1;
        }
    }
    Ok(CorrelationCurve {
        metric: "shear_profile".into(),
        abscissa_name: "y".into(),
        abscissa: (0..n_bins).map(|b| (b as f64 + 0.5) * dy).collect(),
        values: sum
            .iter()
            .zip(&counts)
            .map(|(s, &c)| if c == 0 { f64::NAN } else { s / c as f64 })
            .collect(),
        counts,
        n_origins: traj.len(),
    })
}
