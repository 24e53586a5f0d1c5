//! LAMMPS-style text dumps.
//!
//! Each frame is
//!
//! ```text
//! ITEM: TIMESTEP
//! 100
//! ITEM: TIME
//! 5.0000000000000003e-2
//! ITEM: SNAPSHOT INTERVAL
//! 5.0000000000000001e-4
//! ITEM: NUMBER OF ATOMS
//! 500
//! ITEM: BOX BOUNDS pp pp pp
//! 0.0000000000000000e0 1.0000000000000000e0
//! ...
//! ITEM: SHEAR RATE                (Lees-Edwards only: rate, offset)
//! ITEM: ATOMS id x y z vx vy vz ix iy iz
//! ```
//!
//! Two-dimensional dumps omit the z columns but keep three bounds lines.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{BoundaryMode, SimBox};
use crate::trajectory::{Frame, Trajectory};

fn f(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn dump_to_string(traj: &Trajectory) -> String {
    let dim = traj.dim;
    let mut s = String::new();
    for fr in &traj.frames {
        let b = &fr.sim_box;
        let _ = writeln!(s, "ITEM: TIMESTEP\n{}", fr.step);
        let _ = writeln!(s, "ITEM: TIME\n{}", f(fr.time));
        let _ = writeln!(s, "ITEM: SNAPSHOT INTERVAL\n{}", f(traj.dt));
        let _ = writeln!(s, "ITEM: NUMBER OF ATOMS\n{}", fr.len());
        let flag = if b.mode == BoundaryMode::Open { "ff" } else { "pp" };
        let _ = writeln!(s, "ITEM: BOX BOUNDS {flag} {flag} {flag}");
        for k in 0..3 {
            let (lo, hi) = if k < dim { (0.0, b.lengths[k]) } else { (-0.5, 0.5) };
            let _ = writeln!(s, "{} {}", f(lo), f(hi));
        }
        if b.mode == BoundaryMode::LeesEdwards {
            let _ = writeln!(s, "ITEM: SHEAR RATE\n{} {}", f(b.shear_rate), f(b.shear_offset));
        }
        let axes = &["x", "y", "z"][..dim];
        let mut cols: Vec<String> = axes.iter().map(|a| a.to_string()).collect();
        cols.extend(axes.iter().map(|a| format!("v{a}")));
        if fr.images.is_some() {
            cols.extend(axes.iter().map(|a| format!("i{a}")));
        }
        let _ = writeln!(s, "ITEM: ATOMS id {}", cols.join(" "));
        for i in 0..fr.len() {
            let mut line = format!("{}", i + 1);
            for k in 0..dim {
                line.push(' ');
                line.push_str(&f(fr.r[i][k]));
            }
            for k in 0..dim {
                line.push(' ');
                line.push_str(&f(fr.v[i][k]));
            }
            if let Some(im) = &fr.images {
                for k in 0..dim {
                    let _ = write!(line, " {}", im[i][k]);
                }
            }
            s.push_str(&line);
            s.push('\n');
        }
    }
    s
}

pub fn write_dump(traj: &Trajectory, path: &Path) -> Result<()> {
    std::fs::write(path, dump_to_string(traj))?;
    Ok(())
}

pub fn read_dump(path: &Path) -> Result<Trajectory> {
    parse_dump(&std::fs::read_to_string(path)?)
}

struct Lines<'a> {
    it: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Option<&'a str> {
        loop {
            let (k, l) = self.it.next()?;
            self.line = k + 1;
            if !l.trim().is_empty() {
                return Some(l.trim());
            }
        }
    }

    fn expect(&mut self, what: &str) -> Result<&'a str> {
        let at = self.line + 1;
        self.next().ok_or_else(|| Error::Parse {
            line: at,
            msg: format!("unexpected end of file, expected {what}"),
        })
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            msg: msg.into(),
        }
    }

    fn item(&mut self, name: &str) -> Result<&'a str> {
        let l = self.expect(&format!("ITEM: {name}"))?;
        match l.strip_prefix("ITEM: ").filter(|r| r.starts_with(name)) {
            Some(rest) => Ok(rest[name.len()..].trim()),
            None => Err(self.err(format!("expected `ITEM: {name}`, found `{l}`"))),
        }
    }

    fn value<T: std::str::FromStr>(&mut self, what: &str) -> Result<T> {
        let l = self.expect(what)?;
        l.parse().map_err(|_| self.err(format!("cannot parse {what} from `{l}`")))
    }

    fn numbers(&mut self, what: &str, n: usize) -> Result<Vec<f64>> {
        let l = self.expect(what)?;
        let v: Vec<f64> = l
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| self.err(format!("cannot parse {what} from `{l}`")))?;
        if v.len() != n {
            return Err(self.err(format!("expected {n} values for {what}, got {}", v.len())));
        }
        Ok(v)
    }
}

/// Parse a dump. The snapshot interval is taken from the first frame.
pub fn parse_dump(text: &str) -> Result<Trajectory> {
    let mut ls = Lines {
        it: text.lines().enumerate(),
        line: 0,
    };
    let mut frames = Vec::new();
    let mut dim = 0;
    let mut dt = None;
    while let Some(head) = ls.next() {
        if head != "ITEM: TIMESTEP" {
            return Err(ls.err(format!("expected `ITEM: TIMESTEP`, found `{head}`")));
        }
        let k = frames.len();
        let step: u64 = ls.value("timestep")?;
        let mut time = step as f64;
        let mut next = ls.expect("ITEM")?;
        if next == "ITEM: TIME" {
            time = ls.value("time")?;
            next = ls.expect("ITEM")?;
        }
        if next == "ITEM: SNAPSHOT INTERVAL" {
            let h: f64 = ls.value("snapshot interval")?;
            if let Some(d) = dt {
                if d != h {
                    return Err(Error::InconsistentFrame {
                        frame: k,
                        msg: format!("snapshot interval {h} differs from {d}"),
                    });
                }
            }
            dt = Some(h);
            next = ls.expect("ITEM")?;
        }
        if next != "ITEM: NUMBER OF ATOMS" {
            return Err(ls.err(format!("expected `ITEM: NUMBER OF ATOMS`, found `{next}`")));
        }
        let n: usize = ls.value("atom count")?;
        let flags = ls.item("BOX BOUNDS")?;
        let open = flags.split_whitespace().all(|t| t == "ff");
        let mut lo = [0.0; 3];
        let mut len = [0.0; 3];
        for a in 0..3 {
            let b = ls.numbers("box bounds", 2)?;
            lo[a] = b[0];
            len[a] = b[1] - b[0];
        }
        let mut shear = None;
        let mut cols = ls.expect("ITEM: ATOMS")?;
        if cols == "ITEM: SHEAR RATE" {
            let v = ls.numbers("shear rate and offset", 2)?;
            shear = Some((v[0], v[1]));
            cols = ls.expect("ITEM: ATOMS")?;
        }
        let Some(cols) = cols.strip_prefix("ITEM: ATOMS") else {
            return Err(ls.err(format!("expected `ITEM: ATOMS`, found `{cols}`")));
        };
        let names: Vec<&str> = cols.split_whitespace().collect();
        let col = |name: &str| names.iter().position(|c| *c == name);
        let fdim = if col("z").is_some() { 3 } else { 2 };
        if k == 0 {
            dim = fdim;
        } else if fdim != dim {
            return Err(Error::InconsistentFrame {
                frame: k,
                msg: format!("dimension {fdim} differs from {dim}"),
            });
        }
        let axes = &["x", "y", "z"][..dim];
        let need = |name: String| col(&name).ok_or_else(|| ls.err(format!("missing column `{name}`")));
        let id_col = need("id".into())?;
        let pos: Vec<usize> = axes.iter().map(|a| need(a.to_string())).collect::<Result<_>>()?;
        let vel: Vec<usize> = axes.iter().map(|a| need(format!("v{a}"))).collect::<Result<_>>()?;
        let img: Option<Vec<usize>> = if col("ix").is_some() {
            Some(axes.iter().map(|a| need(format!("i{a}"))).collect::<Result<_>>()?)
        } else {
            None
        };
        let mut r = vec![[0.0; 3]; n];
        let mut v = vec![[0.0; 3]; n];
        let mut images = img.as_ref().map(|_| vec![[0i32; 3]; n]);
        let mut seen = vec![false; n];
        for _ in 0..n {
            let l = ls.expect("atom line")?;
            let t: Vec<&str> = l.split_whitespace().collect();
            if t.len() != names.len() {
                return Err(ls.err(format!("expected {} columns, got {}", names.len(), t.len())));
            }
            let num = |c: usize| t[c].parse::<f64>().map_err(|_| ls.err(format!("bad number `{}`", t[c])));
            let id: usize = t[id_col].parse().map_err(|_| ls.err(format!("bad id `{}`", t[id_col])))?;
            if id == 0 || id > n || seen[id - 1] {
                return Err(Error::InconsistentFrame {
                    frame: k,
                    msg: format!("atom id {id} is out of range or repeated"),
                });
            }
            seen[id - 1] = true;
            let i = id - 1;
            for a in 0..dim {
                r[i][a] = num(pos[a])? - lo[a];
                v[i][a] = num(vel[a])?;
            }
            if let (Some(ic), Some(im)) = (&img, images.as_mut()) {
                for a in 0..dim {
                    im[i][a] = t[ic[a]].parse().map_err(|_| ls.err(format!("bad image flag `{}`", t[ic[a]])))?;
                }
            }
        }
        let mode = match (shear, open) {
            (Some(_), _) => BoundaryMode::LeesEdwards,
            (None, true) => BoundaryMode::Open,
            (None, false) => BoundaryMode::Periodic,
        };
        let mut sim_box = SimBox::cube(dim, 1.0, mode, 0.0);
        sim_box.lengths[..dim].copy_from_slice(&len[..dim]);
        if let Some((rate, offset)) = shear {
            sim_box.shear_rate = rate;
            sim_box.shear_offset = offset;
        }
        sim_box.validate().map_err(|e| Error::InconsistentFrame {
            frame: k,
            msg: e.to_string(),
        })?;
        frames.push(Frame {
            step,
            time,
            sim_box,
            r,
            v,
            images,
        });
    }
    if frames.is_empty() {
        return Err(Error::Parse {
            line: 1,
            msg: "no frames".into(),
        });
    }
    if frames.iter().any(|f| f.images.is_some() != frames[0].images.is_some()) {
        return Err(Error::InconsistentFrame {
            frame: frames.iter().position(|f| f.images.is_some() != frames[0].images.is_some()).unwrap_or(0),
            msg: "image flags present in some frames only".into(),
        });
    }
    let dt = dt.unwrap_or_else(|| if frames.len() > 1 { frames[1].time - frames[0].time } else { 0.0 });
    let traj = Trajectory {
        dim,
        dt,
        frames,
        r0: None,
        entropy: None,
    };
    traj.validate()?;
    Ok(traj)
}
