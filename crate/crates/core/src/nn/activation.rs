use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Silu,
    Softplus,
}

/// Logistic function, evaluated without overflow.
#[inline]
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Logistic derivatives s, s', s'', s''', s'''' at z.
#[inline]
fn logistic_jet(z: f64) -> [f64; 5] {
    let s = logistic(z);
    let sc = logistic(-z);
    let d1 = s * sc;
    let one_m_2s = sc - s;
    let d2 = d1 * one_m_2s;
    let d3 = d2 * one_m_2s - 2.0 * d1 * d1;
    let d4 = d3 * one_m_2s - 6.0 * d1 * d2;
    [s, d1, d2, d3, d4]
}

impl Activation {
    /// Derivative of the given order (0..=4).
    pub fn eval(self, z: f64, order: usize) -> f64 {
        match self {
            Activation::Silu => {
                if order == 0 {
                    return z * logistic(z);
                }
                let l = logistic_jet(z);
                // (z s)^(n) = n s^(n-1) + z s^(n)
                order as f64 * l[order - 1] + z * l[order]
            }
            Activation::Softplus => {
                if order == 0 {
                    softplus(z)
                } else {
                    logistic_jet(z)[order - 1]
                }
            }
        }
    }

    /// Value and first two derivatives.
    #[inline]
    pub fn jet2(self, z: f64) -> (f64, f64, f64) {
        match self {
            Activation::Silu => {
                let l = logistic_jet(z);
                (z * l[0], l[0] + z * l[1], 2.0 * l[1] + z * l[2])
            }
            Activation::Softplus => {
                let l = logistic_jet(z);
                (softplus(z), l[0], l[1])
            }
        }
    }

    /// Value and first derivative.
    #[inline]
    pub fn jet1(self, z: f64) -> (f64, f64) {
        match self {
            Activation::Silu => {
                let s = logistic(z);
                let sc = logistic(-z);
                (z * s, s + z * s * sc)
            }
            Activation::Softplus => (softplus(z), logistic(z)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_curvature_at_zero() {
        assert_eq!(Activation::Softplus.eval(0.0, 2), 0.25);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for act in [Activation::Silu, Activation::Softplus] {
            for &z in &[-7.0, -1.3, 0.0, 0.4, 2.5, 11.0] {
                for order in 0..4 {
                    let h = 1e-5;
                    let fd = (act.eval(z + h, order) - act.eval(z - h, order)) / (2.0 * h);
                    let an = act.eval(z, order + 1);
                    assert!((fd - an).abs() <= 1e-7 * (1.0 + an.abs()), "{act:?} {z} {order}");
                }
            }
        }
    }

    #[test]
    fn jets_agree_with_eval() {
        for act in [Activation::Silu, Activation::Softplus] {
            let (a, b, c) = act.jet2(0.7);
            assert_eq!(a, act.eval(0.7, 0));
            assert!((b - act.eval(0.7, 1)).abs() < 1e-15);
            assert!((c - act.eval(0.7, 2)).abs() < 1e-15);
        }
    }
}
