//! Fixed-size vector helpers. Positions and velocities are stored as `[f64; 3]`
//! regardless of dimension; components beyond `dim` stay zero.

pub type Vec3 = [f64; 3];

#[inline]
pub fn dot(a: &Vec3, b: &Vec3, dim: usize) -> f64 {
    let mut s = 0.0;
    for k in 0..dim {
        s += a[k] * b[k];
    }
    s
}

#[inline]
pub fn norm2(a: &Vec3, dim: usize) -> f64 {
    dot(a, a, dim)
}

#[inline]
pub fn sub(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn scale(a: &Vec3, c: f64) -> Vec3 {
    [a[0] * c, a[1] * c, a[2] * c]
}

#[inline]
pub fn axpy(y: &mut Vec3, c: f64, x: &Vec3) {
    y[0] += c * x[0];
    y[1] += c * x[1];
    y[2] += c * x[2];
}

/// Determinant of the leading `dim`×`dim` block of a row-major 3×3 matrix.
pub fn det(m: &[f64; 9], dim: usize) -> f64 {
    match dim {
        2 => m[0] * m[4] - m[1] * m[3],
        _ => {
            m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6])
                + m[2] * (m[3] * m[7] - m[4] * m[6])
        }
    }
}

/// Cofactor matrix (d det / d m) of the leading `dim`×`dim` block.
pub fn cofactor(m: &[f64; 9], dim: usize) -> [f64; 9] {
    let mut c = [0.0; 9];
    match dim {
        2 => {
            c[0] = m[4];
            c[1] = -m[3];
            c[3] = -m[1];
            c[4] = m[0];
        }
        _ => {
            c[0] = m[4] * m[8] - m[5] * m[7];
            c[1] = m[5] * m[6] - m[3] * m[8];
            c[2] = m[3] * m[7] - m[4] * m[6];
            c[3] = m[2] * m[7] - m[1] * m[8];
            c[4] = m[0] * m[8] - m[2] * m[6];
            c[5] = m[1] * m[6] - m[0] * m[7];
            c[6] = m[1] * m[5] - m[2] * m[4];
            c[7] = m[2] * m[3] - m[0] * m[5];
            c[8] = m[0] * m[4] - m[1] * m[3];
        }
    }
    c
}

/// Index pairs (row, col) of the lower triangle, row-major, for a `dim`×`dim` matrix.
pub fn lower_triangle(dim: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(dim * (dim + 1) / 2);
    for a in 0..dim {
        for b in 0..=a {
            out.push((a, b));
        }
    }
    out
}
