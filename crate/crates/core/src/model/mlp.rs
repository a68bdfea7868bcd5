//! Tower MLP: `3d → 3d/2 → 3d/4 → 1`, ReLU hidden layers, sigmoid output.

use crate::linalg::{axpy, Matrix};
use crate::rng::Rng;

use super::attention::xavier;

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    /// `out × in`
    pub w: Matrix,
    pub b: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Dense>,
}

pub fn layer_sizes(d: usize) -> [usize; 4] {
    [3 * d, 3 * d / 2, 3 * d / 4, 1]
}

impl MlpParams {
    pub fn zeros(d: usize) -> Self {
        let s = layer_sizes(d);
        Self {
            layers: s
                .windows(2)
                .map(|w| Dense {
                    w: Matrix::zeros(w[1], w[0]),
                    b: vec![0.0; w[1]],
                })
                .collect(),
        }
    }

    pub fn init(d: usize, r: &mut Rng) -> Self {
        let s = layer_sizes(d);
        Self {
            layers: s
                .windows(2)
                .map(|w| Dense {
                    w: xavier(w[1], w[0], w[0], w[1], r),
                    b: vec![0.0; w[1]],
                })
                .collect(),
        }
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].w.cols
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Debug)]
pub struct MlpCache {
    /// Input to each layer.
    acts: Vec<Vec<f64>>,
    /// Pre-activations of the hidden layers.
    pre: Vec<Vec<f64>>,
}

/// Raw output before the sigmoid.
pub fn logit_cached(input: &[f64], p: &MlpParams) -> (f64, MlpCache) {
    let mut acts = vec![input.to_vec()];
    let mut pre = Vec::new();
    let last = p.layers.len() - 1;
    for (l, layer) in p.layers.iter().enumerate() {
        let mut z = layer.w.mul_vec(acts.last().unwrap());
        axpy(&mut z, 1.0, &layer.b);
        if l == last {
            return (z[0], MlpCache { acts, pre });
        }
        acts.push(z.iter().map(|v| v.max(0.0)).collect());
        pre.push(z);
    }
    unreachable!("mlp has at least one layer")
}

pub fn logit(input: &[f64], p: &MlpParams) -> f64 {
    logit_cached(input, p).0
}

/// Accumulates gradients for upstream `d_logit`; returns the input gradient.
pub fn mlp_backward(c: &MlpCache, p: &MlpParams, d_logit: f64, g: &mut MlpParams) -> Vec<f64> {
    let mut dz = vec![d_logit];
    for l in (0..p.layers.len()).rev() {
        g.layers[l].w.add_outer(1.0, &dz, &c.acts[l]);
        axpy(&mut g.layers[l].b, 1.0, &dz);
        let mut da = p.layers[l].w.t_mul_vec(&dz);
        if l > 0 {
            for (v, &z) in da.iter_mut().zip(&c.pre[l - 1]) {
                if z <= 0.0 {
                    *v = 0.0;
                }
            }
        }
        dz = da;
    }
    dz
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng as _;

    #[test]
    fn tower_halves() {
        assert_eq!(layer_sizes(100), [300, 150, 75, 1]);
        assert_eq!(layer_sizes(8), [24, 12, 6, 1]);
        let p = MlpParams::zeros(8);
        assert_eq!(p.input_width(), 24);
        assert_eq!(sigmoid(logit(&[1.0; 24], &p)), 0.5);
    }

    #[test]
    fn output_bias_is_monotone() {
        let mut r = rng::rng(2);
        let mut p = MlpParams::init(4, &mut r);
        let x: Vec<f64> = (0..12).map(|_| r.gen_range(-1.0..1.0)).collect();
        let mut prev = sigmoid(logit(&x, &p));
        for _ in 0..5 {
            p.layers[2].b[0] += 0.5;
            let s = sigmoid(logit(&x, &p));
            assert!(s > prev);
            prev = s;
        }
    }

    #[test]
    fn matches_oracle() {
        let mut r = rng::rng(6);
        let mut p = MlpParams::init(4, &mut r);
        for l in &mut p.layers {
            l.b.iter_mut().for_each(|b| *b = r.gen_range(-0.5..0.5));
        }
        let x: Vec<f64> = (0..12).map(|_| r.gen_range(-1.0..1.0)).collect();
        let mut a = x.clone();
        for (k, l) in p.layers.iter().enumerate() {
            let mut next = Vec::new();
            for o in 0..l.w.rows {
                let mut z = l.b[o];
                for i in 0..l.w.cols {
                    z += l.w.data[o * l.w.cols + i] * a[i];
                }
                next.push(if k < 2 { z.max(0.0) } else { z });
            }
            a = next;
        }
        assert!((logit(&x, &p) - a[0]).abs() < 1e-12);
        let s = sigmoid(a[0]);
        assert!(s > 0.0 && s < 1.0);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!((sigmoid(2.0) + sigmoid(-2.0) - 1.0).abs() < 1e-15);
    }
}
