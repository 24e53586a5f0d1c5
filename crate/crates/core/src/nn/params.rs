//! Model parameter set, flat parameter vector and JSON checkpoints.

use std::ops::Range;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::Network;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "metriplex-checkpoint/1";

/// Network shapes shared by every closure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub dim: usize,
    pub solid: bool,
    pub cutoff: f64,
    pub width: usize,
    pub hidden_layers: usize,
}

impl Architecture {
    pub fn fluid(dim: usize, cutoff: f64, width: usize) -> Self {
        Self {
            dim,
            solid: false,
            cutoff,
            width,
            hidden_layers: 2,
        }
    }

    fn widths(&self, n_in: usize, n_out: usize) -> Vec<usize> {
        let mut w = vec![n_in];
        w.extend(std::iter::repeat_n(self.width, self.hidden_layers));
        w.push(n_out);
        w
    }

    /// Number of nonzero strain invariants fed to the deviatoric energy.
    pub fn n_invariants(&self) -> usize {
        self.dim - 1
    }
}

/// Every trainable quantity of the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub arch: Architecture,
    /// Kernel shape network, input |r|/h.
    pub volume: Network,
    /// Energy CMNN over (S, V) (the volumetric part for solids).
    pub energy: Network,
    /// Deviatoric energy CMNN over (S, invariants), solids only.
    pub energy_dev: Option<Network>,
    /// Fluctuation amplitude networks, inputs (|r|/h, T).
    pub coeff_a: Network,
    pub coeff_b: Network,
    pub coeff_c: Network,
    /// Entropy teacher, inputs (|r|/h, v_ij).
    pub teacher: Network,
    /// Strain network, inputs (u/h, r0/h), outputs the lower triangle.
    pub strain: Option<Network>,
    pub log_kb: f64,
    pub log_m: f64,
}

impl ModelParams {
    /// Fresh parameters: uniform(±1/√fan_in) weights, zero biases, zero
    /// output layer for the kernel network, k_B = m = 1.
    pub fn random(arch: &Architecture, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = arch.dim;
        let mut volume = Network::mlp(&arch.widths(1, 1), &mut rng);
        volume.zero_output_layer();
        let energy = Network::cmnn(&arch.widths(2, 1), &[1, -1], &mut rng);
        let energy_dev = arch.solid.then(|| {
            let mut t = vec![1i8, 1];
            if d == 3 {
                t.push(0);
            }
            Network::cmnn(&arch.widths(1 + arch.n_invariants(), 1), &t, &mut rng)
        });
        let coeff_a = Network::mlp(&arch.widths(2, 1), &mut rng);
        let coeff_b = Network::mlp(&arch.widths(2, 1), &mut rng);
        let coeff_c = Network::mlp(&arch.widths(2, 1), &mut rng);
        let teacher = Network::mlp(&arch.widths(1 + d, 1), &mut rng);
        let strain = arch
            .solid
            .then(|| Network::mlp(&arch.widths(2 * d, d * (d + 1) / 2), &mut rng));
        Self {
            arch: arch.clone(),
            volume,
            energy,
            energy_dev,
            coeff_a,
            coeff_b,
            coeff_c,
            teacher,
            strain,
            log_kb: 0.0,
            log_m: 0.0,
        }
    }

    /// Random energy independent of volume and zero kernel/amplitude networks:
    /// no pressure, no dissipation, no noise.
    pub fn free_flight(arch: &Architecture, seed: u64) -> Self {
        let mut p = Self::random(arch, seed);
        p.volume.zero_all();
        p.coeff_a.zero_all();
        p.coeff_b.zero_all();
        p.coeff_c.zero_all();
        let l0 = &mut p.energy.layers[0];
        for o in 0..l0.n_out {
            l0.w[o * l0.n_in + 1] = 0.0;
        }
        if let Some(dev) = &mut p.energy_dev {
            dev.zero_all();
        }
        if let Some(s) = &mut p.strain {
            s.zero_all();
        }
        p
    }

    pub fn kb(&self) -> f64 {
        self.log_kb.exp()
    }

    pub fn mass(&self) -> f64 {
        self.log_m.exp()
    }

    pub fn dim(&self) -> usize {
        self.arch.dim
    }

    pub fn cutoff(&self) -> f64 {
        self.arch.cutoff
    }

    /// Networks in parameter-vector order, with their names.
    pub fn networks(&self) -> Vec<(&'static str, &Network)> {
        let mut v = vec![("volume", &self.volume), ("energy", &self.energy)];
        if let Some(n) = &self.energy_dev {
            v.push(("energy_dev", n));
        }
        v.push(("coeff_a", &self.coeff_a));
        v.push(("coeff_b", &self.coeff_b));
        v.push(("coeff_c", &self.coeff_c));
        v.push(("teacher", &self.teacher));
        if let Some(n) = &self.strain {
            v.push(("strain", n));
        }
        v
    }

    fn networks_mut(&mut self) -> Vec<&mut Network> {
        let mut v = vec![&mut self.volume, &mut self.energy];
        if let Some(n) = &mut self.energy_dev {
            v.push(n);
        }
        v.push(&mut self.coeff_a);
        v.push(&mut self.coeff_b);
        v.push(&mut self.coeff_c);
        v.push(&mut self.teacher);
        if let Some(n) = &mut self.strain {
            v.push(n);
        }
        v
    }

    /// Stable index map of the flat parameter vector.
    pub fn index_map(&self) -> Vec<(String, Range<usize>)> {
        let mut out = Vec::new();
        let mut k = 0;
        for (name, n) in self.networks() {
            out.push((name.to_string(), k..k + n.n_params()));
            k += n.n_params();
        }
        out.push(("log_kb".into(), k..k + 1));
        out.push(("log_m".into(), k + 1..k + 2));
        out
    }

    pub fn n_params(&self) -> usize {
        self.networks().iter().map(|(_, n)| n.n_params()).sum::<usize>() + 2
    }

    pub fn flatten(&self) -> ParamVector {
        let mut v = Vec::with_capacity(self.n_params());
        for (_, n) in self.networks() {
            n.flatten_into(&mut v);
        }
        v.push(self.log_kb);
        v.push(self.log_m);
        ParamVector(v)
    }

    pub fn unflatten(&mut self, p: &ParamVector) -> Result<()> {
        if p.0.len() != self.n_params() {
            return Err(Error::ShapeMismatch {
                expected: self.n_params(),
                got: p.0.len(),
            });
        }
        let mut k = 0;
        for n in self.networks_mut() {
            k += n.unflatten_from(&p.0[k..]);
        }
        self.log_kb = p.0[k];
        self.log_m = p.0[k + 1];
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.networks().iter().all(|(_, n)| n.is_finite())
            && self.log_kb.is_finite()
            && self.log_m.is_finite()
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = Checkpoint {
            format_version: CHECKPOINT_FORMAT.to_string(),
            params: self.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: Checkpoint = serde_json::from_str(s)?;
        if doc.format_version != CHECKPOINT_FORMAT {
            return Err(Error::InvalidArgument(format!(
                "unsupported checkpoint format `{}`",
                doc.format_version
            )));
        }
        doc.params.validate()?;
        Ok(doc.params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<()> {
        let d = self.arch.dim;
        let shape_ok = |n: &Network, n_in: usize, n_out: usize| {
            n.n_inputs() == n_in
                && n.n_outputs() == n_out
                && n.layers.windows(2).all(|w| w[0].n_out == w[1].n_in)
                && n.layers
                    .iter()
                    .all(|l| l.w.len() == l.n_in * l.n_out && l.b.len() == l.n_out)
        };
        let mut ok = (d == 2 || d == 3)
            && shape_ok(&self.volume, 1, 1)
            && shape_ok(&self.energy, 2, 1)
            && shape_ok(&self.coeff_a, 2, 1)
            && shape_ok(&self.coeff_b, 2, 1)
            && shape_ok(&self.coeff_c, 2, 1)
            && shape_ok(&self.teacher, 1 + d, 1)
            && self.energy.is_cmnn();
        if self.arch.solid {
            ok &= match (&self.energy_dev, &self.strain) {
                (Some(e), Some(s)) => {
                    shape_ok(e, d, 1) && e.is_cmnn() && shape_ok(s, 2 * d, d * (d + 1) / 2)
                }
                _ => false,
            };
        }
        if !ok {
            return Err(Error::InvalidArgument("checkpoint network shapes are inconsistent".into()));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format_version: String,
    params: ModelParams,
}

/// Flat view of every trainable scalar in `index_map` order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flatten_round_trip_is_identity() {
        let arch = Architecture {
            dim: 3,
            solid: true,
            cutoff: 0.2,
            width: 8,
            hidden_layers: 2,
        };
        let p = ModelParams::random(&arch, 7);
        let v = p.flatten();
        let mut q = ModelParams::random(&arch, 8);
        q.unflatten(&v).unwrap();
        assert_eq!(p, q);
        assert_eq!(v.len(), p.n_params());
        let last = p.index_map().last().unwrap().1.end;
        assert_eq!(last, v.len());
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let p = ModelParams::random(&Architecture::fluid(2, 0.1, 6), 3);
        let q = ModelParams::from_json(&p.to_json().unwrap()).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn kernel_output_layer_starts_at_zero() {
        let p = ModelParams::random(&Architecture::fluid(3, 0.2, 8), 1);
        assert_eq!(p.volume.eval(&[0.3]).unwrap(), vec![0.0]);
    }
}
