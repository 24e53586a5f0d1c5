//! Dense feed-forward networks: plain MLPs (SiLU) and constrained monotonic
//! networks (softplus, sign-constrained weights).

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::activation::Activation;
use crate::error::{Error, Result};

/// One affine layer, weights stored row-major as `n_out × n_in`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Layer {
    fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            n_in,
            n_out,
            w: vec![0.0; n_in * n_out],
            b: vec![0.0; n_out],
        }
    }

    fn uniform<R: Rng>(n_in: usize, n_out: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (n_in as f64).sqrt();
        let mut l = Self::zeros(n_in, n_out);
        for w in &mut l.w {
            *w = rng.random_range(-bound..bound);
        }
        l
    }
}

/// Feed-forward network with a hidden activation and a linear output.
///
/// With `indicator = Some(t)` the network is a CMNN: first-layer weights are
/// mapped through `|W|_t` (|w| where t=+1, −|w| where t=−1, w where t=0) and
/// every later layer uses |w|.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub activation: Activation,
    #[serde(default)]
    pub indicator: Option<Vec<i8>>,
    pub layers: Vec<Layer>,
}

pub type Mlp = Network;
pub type Cmnn = Network;

#[inline]
fn constrain(w: f64, t: i8) -> f64 {
    match t {
        1 => w.abs(),
        -1 => -w.abs(),
        _ => w,
    }
}

#[inline]
fn constrain_grad(w: f64, t: i8) -> f64 {
    let s = if w >= 0.0 { 1.0 } else { -1.0 };
    match t {
        1 => s,
        -1 => -s,
        _ => 1.0,
    }
}

impl Network {
    /// SiLU MLP with widths `[n_in, hidden.., n_out]`, uniform(±1/√fan_in) weights, zero biases.
    pub fn mlp<R: Rng>(widths: &[usize], rng: &mut R) -> Self {
        Self::build(widths, Activation::Silu, None, rng)
    }

    /// Softplus CMNN with monotonicity indicator `t` (one entry per input).
    pub fn cmnn<R: Rng>(widths: &[usize], t: &[i8], rng: &mut R) -> Self {
        assert_eq!(t.len(), widths[0]);
        Self::build(widths, Activation::Softplus, Some(t.to_vec()), rng)
    }

    fn build<R: Rng>(widths: &[usize], act: Activation, ind: Option<Vec<i8>>, rng: &mut R) -> Self {
        assert!(widths.len() >= 2);
        let layers = widths
            .windows(2)
            .map(|w| Layer::uniform(w[0], w[1], rng))
            .collect();
        Self {
            activation: act,
            indicator: ind,
            layers,
        }
    }

    pub fn zero_output_layer(&mut self) {
        let last = self.layers.last_mut().unwrap();
        last.w.iter_mut().for_each(|w| *w = 0.0);
        last.b.iter_mut().for_each(|b| *b = 0.0);
    }

    pub fn zero_all(&mut self) {
        for l in &mut self.layers {
            l.w.iter_mut().for_each(|w| *w = 0.0);
            l.b.iter_mut().for_each(|b| *b = 0.0);
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn n_outputs(&self) -> usize {
        self.layers.last().unwrap().n_out
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.n_inputs()];
        w.extend(self.layers.iter().map(|l| l.n_out));
        w
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn is_cmnn(&self) -> bool {
        self.indicator.is_some()
    }

    /// Indicator applied to weight `(layer, col)`; `None` for unconstrained.
    #[inline]
    pub fn weight_indicator(&self, layer: usize, col: usize) -> Option<i8> {
        self.indicator.as_ref().map(|t| if layer == 0 { t[col] } else { 1 })
    }

    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend_from_slice(&l.w);
            out.extend_from_slice(&l.b);
        }
    }

    /// Overwrite parameters from `src`; returns the number consumed.
    pub fn unflatten_from(&mut self, src: &[f64]) -> usize {
        let mut k = 0;
        for l in &mut self.layers {
            let nw = l.w.len();
            l.w.copy_from_slice(&src[k..k + nw]);
            k += nw;
            let nb = l.b.len();
            l.b.copy_from_slice(&src[k..k + nb]);
            k += nb;
        }
        k
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(&l.b).all(|x| x.is_finite()))
    }

    /// Materialize the effective (constrained) weights for fast evaluation.
    pub fn effective(&self) -> EffectiveNet {
        let layers = self
            .layers
            .iter()
            .enumerate()
            .map(|(li, l)| {
                let w = match &self.indicator {
                    None => l.w.clone(),
                    Some(_) => l
                        .w
                        .iter()
                        .enumerate()
                        .map(|(k, &w)| constrain(w, self.weight_indicator(li, k % l.n_in).unwrap()))
                        .collect(),
                };
                Layer {
                    n_in: l.n_in,
                    n_out: l.n_out,
                    w,
                    b: l.b.clone(),
                }
            })
            .collect::<Vec<_>>();
        let max_width = layers.iter().map(|l| l.n_out.max(l.n_in)).max().unwrap();
        EffectiveNet {
            activation: self.activation,
            layers,
            max_width,
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_inputs() {
            return Err(Error::ShapeMismatch {
                expected: self.n_inputs(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Forward evaluation.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.effective().eval(x))
    }

    /// Gradient of a scalar-output network with respect to its input.
    pub fn grad_input(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let jet = self.effective().jet(x, false);
        Ok(jet.grad[..self.n_inputs()].to_vec())
    }

    /// Hessian of a scalar-output network with respect to its input (row-major).
    pub fn hess_input(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let jet = self.effective().jet(x, true);
        let n = self.n_inputs();
        Ok(jet.hess[..n * n].to_vec())
    }

    /// Gradient of `cot · f(x)` with respect to the raw parameters, in
    /// `flatten_into` order.
    pub fn grad_params(&self, x: &[f64], cot: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let eff = self.effective();
        let (_, _, g) = eff.backward(x, cot);
        let mut out = Vec::with_capacity(self.n_params());
        for (li, (l, gl)) in self.layers.iter().zip(g).enumerate() {
            let (gw, gb) = gl;
            for (k, (&w, &gw)) in l.w.iter().zip(&gw).enumerate() {
                let c = match self.weight_indicator(li, k % l.n_in) {
                    Some(t) => constrain_grad(w, t),
                    None => 1.0,
                };
                out.push(gw * c);
            }
            out.extend_from_slice(&gb);
        }
        Ok(out)
    }
}

/// Forward-mode derivatives of every output with respect to every input.
#[derive(Clone, Debug)]
pub struct Jet {
    pub value: Vec<f64>,
    /// `n_out × n_in`, row-major.
    pub grad: Vec<f64>,
    /// `n_out × n_in × n_in`, present when requested.
    pub hess: Vec<f64>,
}

/// Reusable buffers for the hot single-direction evaluation.
#[derive(Clone, Debug, Default)]
pub struct Scratch {
    a: Vec<f64>,
    da: Vec<f64>,
    z: Vec<f64>,
    dz: Vec<f64>,
}

impl Scratch {
    pub fn new(width: usize) -> Self {
        Self {
            a: vec![0.0; width],
            da: vec![0.0; width],
            z: vec![0.0; width],
            dz: vec![0.0; width],
        }
    }

    fn ensure(&mut self, width: usize) {
        if self.a.len() < width {
            *self = Self::new(width);
        }
    }
}

/// Network with constraint transforms already applied.
#[derive(Clone, Debug)]
pub struct EffectiveNet {
    pub activation: Activation,
    pub layers: Vec<Layer>,
    pub max_width: usize,
}

impl EffectiveNet {
    pub fn n_inputs(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn n_outputs(&self) -> usize {
        self.layers.last().unwrap().n_out
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        let last = self.layers.len() - 1;
        for (li, l) in self.layers.iter().enumerate() {
            let mut z = l.b.clone();
            for o in 0..l.n_out {
                let row = &l.w[o * l.n_in..(o + 1) * l.n_in];
                z[o] += row.iter().zip(&a).map(|(w, x)| w * x).sum::<f64>();
            }
            if li < last {
                for v in &mut z {
                    *v = self.activation.eval(*v, 0);
                }
            }
            a = z;
        }
        a
    }

    /// Scalar output and its derivative along input `dir`.
    pub fn eval_dir(&self, x: &[f64], dir: usize, s: &mut Scratch) -> (f64, f64) {
        s.ensure(self.max_width);
        let n0 = x.len();
        s.a[..n0].copy_from_slice(x);
        s.da[..n0].iter_mut().for_each(|v| *v = 0.0);
        s.da[dir] = 1.0;
        let last = self.layers.len() - 1;
        for (li, l) in self.layers.iter().enumerate() {
            for o in 0..l.n_out {
                let row = &l.w[o * l.n_in..(o + 1) * l.n_in];
                let mut z = l.b[o];
                let mut dz = 0.0;
                if li == 0 {
                    for k in 0..l.n_in {
                        z += row[k] * s.a[k];
                    }
                    dz = row[dir];
                } else {
                    for k in 0..l.n_in {
                        z += row[k] * s.a[k];
                        dz += row[k] * s.da[k];
                    }
                }
                s.z[o] = z;
                s.dz[o] = dz;
            }
            if li < last {
                for o in 0..l.n_out {
                    let (f, df) = self.activation.jet1(s.z[o]);
                    s.a[o] = f;
                    s.da[o] = df * s.dz[o];
                }
            } else {
                return (s.z[0], s.dz[0]);
            }
        }
        unreachable!()
    }

    /// Scalar output with first and second derivative along input `dir`.
    pub fn eval_dir2(&self, x: &[f64], dir: usize) -> (f64, f64, f64) {
        let jet = self.jet(x, true);
        let n = self.n_inputs();
        (jet.value[0], jet.grad[dir], jet.hess[dir * n + dir])
    }

    /// Full forward-mode jet: values, Jacobian and (optionally) Hessians.
    pub fn jet(&self, x: &[f64], second: bool) -> Jet {
        let n = x.len();
        let nn = n * n;
        let mut a = x.to_vec();
        let mut da = vec![0.0; a.len() * n];
        for k in 0..n {
            da[k * n + k] = 1.0;
        }
        let mut dda = if second { vec![0.0; a.len() * nn] } else { Vec::new() };
        let last = self.layers.len() - 1;
        for (li, l) in self.layers.iter().enumerate() {
            let mut z = l.b.clone();
            let mut dz = vec![0.0; l.n_out * n];
            let mut ddz = if second { vec![0.0; l.n_out * nn] } else { Vec::new() };
            for o in 0..l.n_out {
                for k in 0..l.n_in {
                    let w = l.w[o * l.n_in + k];
                    z[o] += w * a[k];
                    for p in 0..n {
                        dz[o * n + p] += w * da[k * n + p];
                    }
                    if second {
                        for p in 0..nn {
                            ddz[o * nn + p] += w * dda[k * nn + p];
                        }
                    }
                }
            }
            if li == last {
                return Jet {
                    value: z,
                    grad: dz,
                    hess: ddz,
                };
            }
            for o in 0..l.n_out {
                let (f, f1, f2) = self.activation.jet2(z[o]);
                z[o] = f;
                if second {
                    for p in 0..n {
                        for q in 0..n {
                            ddz[o * nn + p * n + q] =
                                f2 * dz[o * n + p] * dz[o * n + q] + f1 * ddz[o * nn + p * n + q];
                        }
                    }
                }
                for p in 0..n {
                    dz[o * n + p] *= f1;
                }
            }
            a = z;
            da = dz;
            dda = ddz;
        }
        unreachable!()
    }

    /// Reverse pass: output, input cotangent, and per-layer (dW, db) on the
    /// effective weights for output cotangent `cot`.
    #[allow(clippy::type_complexity)]
    pub fn backward(&self, x: &[f64], cot: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<(Vec<f64>, Vec<f64>)>) {
        let last = self.layers.len() - 1;
        let mut acts = vec![x.to_vec()];
        let mut pre = Vec::new();
        for (li, l) in self.layers.iter().enumerate() {
            let a = acts.last().unwrap();
            let mut z = l.b.clone();
            for o in 0..l.n_out {
                let row = &l.w[o * l.n_in..(o + 1) * l.n_in];
                z[o] += row.iter().zip(a).map(|(w, x)| w * x).sum::<f64>();
            }
            if li < last {
                let h = z.iter().map(|&v| self.activation.eval(v, 0)).collect();
                pre.push(z);
                acts.push(h);
            } else {
                pre.push(z.clone());
                acts.push(z);
            }
        }
        let y = acts.last().unwrap().clone();
        let mut delta = cot.to_vec();
        let mut grads = vec![(Vec::new(), Vec::new()); self.layers.len()];
        for li in (0..self.layers.len()).rev() {
            let l = &self.layers[li];
            let a = &acts[li];
            let mut gw = vec![0.0; l.w.len()];
            for o in 0..l.n_out {
                for k in 0..l.n_in {
                    gw[o * l.n_in + k] = delta[o] * a[k];
                }
            }
            let mut da = vec![0.0; l.n_in];
            for o in 0..l.n_out {
                for k in 0..l.n_in {
                    da[k] += l.w[o * l.n_in + k] * delta[o];
                }
            }
            grads[li] = (gw, delta.clone());
            if li > 0 {
                for k in 0..l.n_in {
                    da[k] *= self.activation.eval(pre[li - 1][k], 1);
                }
            }
            delta = da;
        }
        (y, delta, grads)
    }

    /// Input cotangent of `cot · f(x)`.
    pub fn vjp(&self, x: &[f64], cot: &[f64]) -> Vec<f64> {
        self.backward(x, cot).1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_outputs_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut n = Network::mlp(&[3, 8, 8, 2], &mut rng);
        n.zero_all();
        assert_eq!(n.eval(&[0.3, -1.0, 2.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn linear_net_gradient_is_weight() {
        let net = Network {
            activation: Activation::Silu,
            indicator: None,
            layers: vec![Layer {
                n_in: 3,
                n_out: 1,
                w: vec![0.5, -2.0, 1.5],
                b: vec![0.1],
            }],
        };
        assert_eq!(net.grad_input(&[1.0, 2.0, 3.0]).unwrap(), vec![0.5, -2.0, 1.5]);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = Network::mlp(&[2, 4, 1], &mut rng);
        assert!(matches!(n.eval(&[1.0]), Err(Error::ShapeMismatch { expected: 2, got: 1 })));
    }

    #[test]
    fn dir_eval_matches_jet() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = Network::mlp(&[2, 16, 16, 1], &mut rng).effective();
        let mut s = Scratch::new(16);
        let x = [0.4, 1.3];
        let (y, dy) = n.eval_dir(&x, 1, &mut s);
        let jet = n.jet(&x, false);
        assert!((y - jet.value[0]).abs() < 1e-15);
        assert!((dy - jet.grad[1]).abs() < 1e-14);
    }
}
