//! Simulation box, boundary conditions, minimum image and cell-list pair search.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vecmath::{norm2, sub, Vec3};

/// Relative distance below which two particles count as coincident.
pub const R_MIN_FRACTION: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryMode {
    Periodic,
    LeesEdwards,
    Open,
}

/// Orthorhombic box. Under Lees-Edwards the images stacked along y slide
/// along x by `shear_offset`, which grows at `shear_rate * L_y` per unit time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimBox {
    pub dim: usize,
    pub lengths: Vec3,
    pub mode: BoundaryMode,
    pub shear_offset: f64,
    pub shear_rate: f64,
}

impl SimBox {
    pub fn periodic(dim: usize, lengths: &[f64]) -> Self {
        Self::new(dim, lengths, BoundaryMode::Periodic, 0.0)
    }

    pub fn lees_edwards(dim: usize, lengths: &[f64], shear_rate: f64) -> Self {
        Self::new(dim, lengths, BoundaryMode::LeesEdwards, shear_rate)
    }

    pub fn open(dim: usize, lengths: &[f64]) -> Self {
        Self::new(dim, lengths, BoundaryMode::Open, 0.0)
    }

    pub fn cube(dim: usize, length: f64, mode: BoundaryMode, shear_rate: f64) -> Self {
        Self::new(dim, &[length; 3][..dim], mode, shear_rate)
    }

    fn new(dim: usize, lengths: &[f64], mode: BoundaryMode, shear_rate: f64) -> Self {
        assert!(dim == 2 || dim == 3, "dimension must be 2 or 3");
        assert_eq!(lengths.len(), dim, "one length per dimension");
        let mut l = [1.0; 3];
        l[..dim].copy_from_slice(lengths);
        Self {
            dim,
            lengths: l,
            mode,
            shear_offset: 0.0,
            shear_rate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim != 2 && self.dim != 3 {
            return Err(Error::InvalidArgument(format!("dimension {}", self.dim)));
        }
        for k in 0..self.dim {
            if !(self.lengths[k] > 0.0 && self.lengths[k].is_finite()) {
                return Err(Error::InvalidArgument(format!("box length {k} must be positive")));
            }
        }
        if self.mode == BoundaryMode::Open && (self.shear_rate != 0.0 || self.shear_offset != 0.0) {
            return Err(Error::InvalidArgument("open boundaries cannot carry shear".into()));
        }
        if !(self.shear_offset >= 0.0 && self.shear_offset < self.lengths[0]) {
            return Err(Error::InvalidArgument("shear offset outside [0, L_x)".into()));
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        self.lengths[..self.dim].iter().product()
    }

    pub fn min_length(&self) -> f64 {
        self.lengths[..self.dim].iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn is_periodic(&self) -> bool {
        self.mode != BoundaryMode::Open
    }

    /// Velocity of the image one box above along y relative to the primary box.
    pub fn image_velocity(&self) -> f64 {
        match self.mode {
            BoundaryMode::LeesEdwards => self.shear_rate * self.lengths[1],
            _ => 0.0,
        }
    }
}

#[inline]
fn wrap_component(d: f64, l: f64) -> f64 {
    d - l * (d / l + 0.5).floor()
}

/// Minimum-image displacement and the number of y-images crossed (`n`):
/// the partner's image sits at `r_j + n (L_y ŷ + offset x̂)`.
pub fn minimum_image_shift(disp: &Vec3, b: &SimBox) -> (Vec3, i32) {
    let mut d = *disp;
    let mut n = 0;
    match b.mode {
        BoundaryMode::Open => {}
        BoundaryMode::Periodic => {
            for k in 0..b.dim {
                d[k] = wrap_component(d[k], b.lengths[k]);
            }
        }
        BoundaryMode::LeesEdwards => {
            let ly = b.lengths[1];
            let ny = (d[1] / ly + 0.5).floor();
            d[1] -= ny * ly;
            d[0] -= ny * b.shear_offset;
            n = ny as i32;
            d[0] = wrap_component(d[0], b.lengths[0]);
            if b.dim == 3 {
                d[2] = wrap_component(d[2], b.lengths[2]);
            }
        }
    }
    (d, n)
}

/// Minimum-image displacement. The identity for open boundaries.
pub fn minimum_image(disp: &Vec3, b: &SimBox) -> Vec3 {
    minimum_image_shift(disp, b).0
}

/// Particle state.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleSystem {
    pub dim: usize,
    pub r: Vec<Vec3>,
    pub v: Vec<Vec3>,
    pub s: Vec<f64>,
    pub r0: Option<Vec<Vec3>>,
    /// Box crossings per axis, for unwrapping.
    pub images: Vec<[i32; 3]>,
    pub sim_box: SimBox,
    pub time: f64,
}

impl ParticleSystem {
    pub fn new(sim_box: SimBox, r: Vec<Vec3>, v: Vec<Vec3>, s: Vec<f64>) -> Self {
        let n = r.len();
        assert_eq!(v.len(), n);
        assert_eq!(s.len(), n);
        Self {
            dim: sim_box.dim,
            r,
            v,
            s,
            r0: None,
            images: vec![[0; 3]; n],
            sim_box,
            time: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn momentum(&self, m: f64) -> Vec3 {
        let mut p = [0.0; 3];
        for v in &self.v {
            for k in 0..self.dim {
                p[k] += m * v[k];
            }
        }
        p
    }

    pub fn kinetic_energy(&self, m: f64) -> f64 {
        self.v.iter().map(|v| 0.5 * m * norm2(v, self.dim)).sum()
    }

    /// Positions with box crossings undone.
    pub fn unwrapped(&self) -> Vec<Vec3> {
        unwrap_positions(&self.r, &self.images, &self.sim_box)
    }
}

pub fn unwrap_positions(r: &[Vec3], images: &[[i32; 3]], b: &SimBox) -> Vec<Vec3> {
    r.iter()
        .zip(images)
        .map(|(x, im)| {
            let mut u = *x;
            for k in 0..b.dim {
                u[k] += im[k] as f64 * b.lengths[k];
            }
            u
        })
        .collect()
}

/// Half neighbour list with `i < j`, sorted by `(i, j)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PairSet {
    pub n_particles: usize,
    pub dim: usize,
    pub h: f64,
    pub ij: Vec<(usize, usize)>,
    /// r_i − r_j under the minimum image.
    pub disp: Vec<Vec3>,
    pub dist: Vec<f64>,
    pub e: Vec<Vec3>,
    /// Lees-Edwards image count of the partner; zero otherwise.
    pub image_y: Vec<i32>,
}

impl PairSet {
    pub fn len(&self) -> usize {
        self.ij.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ij.is_empty()
    }

    /// v_i − v_j including the sliding-image velocity under Lees-Edwards.
    #[inline]
    pub fn relative_velocity(&self, k: usize, v: &[Vec3], b: &SimBox) -> Vec3 {
        let (i, j) = self.ij[k];
        let mut w = sub(&v[i], &v[j]);
        let n = self.image_y[k];
        if n != 0 {
            w[0] -= n as f64 * b.image_velocity();
        }
        w
    }

    /// Neighbour count per particle.
    pub fn degree(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n_particles];
        for &(i, j) in &self.ij {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg
    }
}

struct CellGrid {
    n: [usize; 3],
    size: [f64; 3],
    origin: [f64; 3],
    heads: Vec<Vec<usize>>,
}

impl CellGrid {
    fn cell_coords(&self, x: &Vec3, dim: usize, periodic: bool, lengths: &Vec3) -> [usize; 3] {
        let mut c = [0usize; 3];
        for k in 0..dim {
            let mut y = x[k] - self.origin[k];
            if periodic {
                y = y.rem_euclid(lengths[k]);
            }
            let idx = (y / self.size[k]).floor();
            c[k] = if idx < 0.0 {
                0
            } else {
                (idx as usize).min(self.n[k] - 1)
            };
        }
        c
    }

    fn flat(&self, c: &[usize; 3]) -> usize {
        (c[2] * self.n[1] + c[1]) * self.n[0] + c[0]
    }
}

fn build_grid(sys: &ParticleSystem, h: f64) -> CellGrid {
    let dim = sys.dim;
    let b = &sys.sim_box;
    let mut n = [1usize; 3];
    let mut size = [1.0; 3];
    let mut origin = [0.0; 3];
    for k in 0..dim {
        let (lo, extent) = if b.is_periodic() {
            (0.0, b.lengths[k])
        } else {
            let lo = sys.r.iter().map(|x| x[k]).fold(f64::INFINITY, f64::min);
            let hi = sys.r.iter().map(|x| x[k]).fold(f64::NEG_INFINITY, f64::max);
            (lo, (hi - lo).max(h))
        };
        n[k] = ((extent / h).floor() as usize).max(1);
        size[k] = extent / n[k] as f64;
        origin[k] = lo;
    }
    let mut grid = CellGrid {
        n,
        size,
        origin,
        heads: vec![Vec::new(); n[0] * n[1] * n[2]],
    };
    for (idx, x) in sys.r.iter().enumerate() {
        let c = grid.cell_coords(x, dim, b.is_periodic(), &b.lengths);
        let f = grid.flat(&c);
        grid.heads[f].push(idx);
    }
    grid
}

fn neighbour_cells(grid: &CellGrid, c: &[usize; 3], b: &SimBox) -> Vec<usize> {
    let dim = b.dim;
    let mut out = Vec::with_capacity(27);
    let zr: &[i64] = if dim == 3 { &[-1, 0, 1] } else { &[0] };
    let n = grid.n;
    for &dz in zr {
        for dy in -1i64..=1 {
            let cy = c[1] as i64 + dy;
            let wraps_y = cy < 0 || cy >= n[1] as i64;
            if wraps_y && !b.is_periodic() {
                continue;
            }
            let cy_w = cy.rem_euclid(n[1] as i64) as usize;
            // Under Lees-Edwards a y-wrap lands in a row displaced along x.
            let (x_center, x_range): (i64, &[i64]) =
                if wraps_y && b.mode == BoundaryMode::LeesEdwards {
                    let shift = (b.shear_offset / grid.size[0]).floor() as i64;
                    let sign = if cy < 0 { 1 } else { -1 };
                    (c[0] as i64 + sign * shift, &[-2, -1, 0, 1, 2])
                } else {
                    (c[0] as i64, &[-1, 0, 1])
                };
            for &dx in x_range {
                let cx = x_center + dx;
                if (cx < 0 || cx >= n[0] as i64) && !b.is_periodic() {
                    continue;
                }
                let cx_w = cx.rem_euclid(n[0] as i64) as usize;
                let cz_w = if dim == 3 {
                    let cz = c[2] as i64 + dz;
                    if (cz < 0 || cz >= n[2] as i64) && !b.is_periodic() {
                        continue;
                    }
                    cz.rem_euclid(n[2] as i64) as usize
                } else {
                    0
                };
                out.push(grid.flat(&[cx_w, cy_w, cz_w]));
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// All pairs with minimum-image distance below `h`, found with a cell list.
pub fn build_pairs(sys: &ParticleSystem, h: f64) -> Result<PairSet> {
    let b = &sys.sim_box;
    let dim = sys.dim;
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("cutoff must be positive, got {h}")));
    }
    if b.is_periodic() && h > 0.5 * b.min_length() {
        return Err(Error::CutoffTooLarge {
            h,
            limit: 0.5 * b.min_length(),
        });
    }
    let n = sys.len();
    let grid = build_grid(sys, h);
    let r_min = R_MIN_FRACTION * h;
    let h2 = h * h;

    let cell_of: Vec<[usize; 3]> = sys
        .r
        .iter()
        .map(|x| grid.cell_coords(x, dim, b.is_periodic(), &b.lengths))
        .collect();

    type Row = Vec<(usize, Vec3, f64, i32)>;
    let rows: Vec<Result<Row>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row: Row = Vec::new();
            for cell in neighbour_cells(&grid, &cell_of[i], b) {
                for &j in &grid.heads[cell] {
                    if j <= i {
                        continue;
                    }
                    let raw = sub(&sys.r[i], &sys.r[j]);
                    let (d, ny) = minimum_image_shift(&raw, b);
                    let d2 = norm2(&d, dim);
                    if d2 < h2 {
                        let dist = d2.sqrt();
                        if dist <= r_min {
                            return Err(Error::CoincidentParticles { i, j, dist });
                        }
                        row.push((j, d, dist, ny));
                    }
                }
            }
            row.sort_unstable_by_key(|t| t.0);
            Ok(row)
        })
        .collect();

    let mut ps = PairSet {
        n_particles: n,
        dim,
        h,
        ..Default::default()
    };
    for (i, row) in rows.into_iter().enumerate() {
        for (j, d, dist, ny) in row? {
            ps.ij.push((i, j));
            let inv = 1.0 / dist;
            ps.e.push([d[0] * inv, d[1] * inv, d[2] * inv]);
            ps.disp.push(d);
            ps.dist.push(dist);
            ps.image_y.push(ny);
        }
    }
    Ok(ps)
}

/// Wrap `x` into `[0, l)` and return the number of periods removed.
#[inline]
pub fn wrap_coordinate(x: f64, l: f64) -> (f64, i32) {
    let n = (x / l).floor();
    let mut y = x - n * l;
    let mut n = n as i32;
    if y >= l {
        y -= l;
        n += 1;
    }
    if y < 0.0 {
        y = 0.0;
    }
    (y, n)
}

/// Advance the Lees-Edwards offset by `dt` and wrap every particle into the
/// primary box, remapping x and v_x of particles that cross a y face.
pub fn wrap_and_advect_boundary(sys: &mut ParticleSystem, dt: f64) {
    let b = &mut sys.sim_box;
    if b.mode == BoundaryMode::Open {
        return;
    }
    let lx = b.lengths[0];
    if b.mode == BoundaryMode::LeesEdwards && b.shear_rate != 0.0 {
        let mut off = (b.shear_offset + b.shear_rate * dt * b.lengths[1]).rem_euclid(lx);
        if off >= lx {
            off -= lx;
        }
        b.shear_offset = off;
    }
    let b = sys.sim_box.clone();
    let u = b.image_velocity();
    for (idx, x) in sys.r.iter_mut().enumerate() {
        if b.mode == BoundaryMode::LeesEdwards {
            let (y, ny) = wrap_coordinate(x[1], b.lengths[1]);
            if ny != 0 {
                x[1] = y;
                x[0] -= ny as f64 * b.shear_offset;
                sys.v[idx][0] -= ny as f64 * u;
                sys.images[idx][1] += ny;
            }
        }
        for k in 0..b.dim {
            let (y, n) = wrap_coordinate(x[k], b.lengths[k]);
            if n != 0 {
                x[k] = y;
                sys.images[idx][k] += n;
            }
        }
    }
}
