//! Gated item updates driven by the previous item and the path context.

use crate::linalg::{axpy, Matrix};
use crate::rng::Rng;

use super::attention::xavier;

#[derive(Clone, Debug, PartialEq)]
pub struct GateParams {
    /// Applied to the previous item state.
    pub w_prev: Matrix,
    pub w_path1: Matrix,
    /// Applied to the current item; shared by the first-item gate.
    pub w_cur: Matrix,
    pub w_path2: Matrix,
    /// Applied to the user–item path context of the first item.
    pub w_user_path: Matrix,
    pub b1: Vec<f64>,
    pub b2: Vec<f64>,
    pub b_user: Vec<f64>,
}

impl GateParams {
    pub fn zeros(d: usize) -> Self {
        Self {
            w_prev: Matrix::zeros(d, d),
            w_path1: Matrix::zeros(d, d),
            w_cur: Matrix::zeros(d, d),
            w_path2: Matrix::zeros(d, d),
            w_user_path: Matrix::zeros(d, d),
            b1: vec![0.0; d],
            b2: vec![0.0; d],
            b_user: vec![0.0; d],
        }
    }

    pub fn init(d: usize, r: &mut Rng) -> Self {
        Self {
            w_prev: xavier(d, d, d, d, r),
            w_path1: xavier(d, d, d, d, r),
            w_cur: xavier(d, d, d, d, r),
            w_path2: xavier(d, d, d, d, r),
            w_user_path: xavier(d, d, d, d, r),
            ..Self::zeros(d)
        }
    }

    pub fn dim(&self) -> usize {
        self.b1.len()
    }

    pub fn tensors(&self) -> [&[f64]; 8] {
        [
            &self.w_prev.data,
            &self.w_path1.data,
            &self.w_cur.data,
            &self.w_path2.data,
            &self.w_user_path.data,
            &self.b1,
            &self.b2,
            &self.b_user,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 8] {
        [
            &mut self.w_prev.data,
            &mut self.w_path1.data,
            &mut self.w_cur.data,
            &mut self.w_path2.data,
            &mut self.w_user_path.data,
            &mut self.b1,
            &mut self.b2,
            &mut self.b_user,
        ]
    }
}

/// `relu(Wa·a + Wb·b + bias) ⊙ a`, returning the output and pre-activation.
fn gate(wa: &Matrix, a: &[f64], wb: &Matrix, b: &[f64], bias: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut z = wa.mul_vec(a);
    axpy(&mut z, 1.0, &wb.mul_vec(b));
    axpy(&mut z, 1.0, bias);
    let out = z.iter().zip(a).map(|(&zi, &ai)| zi.max(0.0) * ai).collect();
    (out, z)
}

/// Gradients of [`gate`] given upstream `d_out`; returns `(d_a, d_b)`.
#[allow(clippy::too_many_arguments)]
fn gate_backward(
    wa: &Matrix,
    a: &[f64],
    wb: &Matrix,
    b: &[f64],
    z: &[f64],
    d_out: &[f64],
    g_wa: &mut Matrix,
    g_wb: &mut Matrix,
    g_bias: &mut [f64],
) -> (Vec<f64>, Vec<f64>) {
    let dz: Vec<f64> = z
        .iter()
        .zip(a)
        .zip(d_out)
        .map(|((&zi, &ai), &di)| if zi > 0.0 { di * ai } else { 0.0 })
        .collect();
    g_wa.add_outer(1.0, &dz, a);
    g_wb.add_outer(1.0, &dz, b);
    axpy(g_bias, 1.0, &dz);
    let mut d_a = wa.t_mul_vec(&dz);
    for ((da, &zi), &di) in d_a.iter_mut().zip(z).zip(d_out) {
        *da += zi.max(0.0) * di;
    }
    (d_a, wb.t_mul_vec(&dz))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ItemUpdate {
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct UpdateCache {
    h_prev: Vec<f64>,
    h_cur: Vec<f64>,
    path: Vec<f64>,
    z1: Vec<f64>,
    z2: Vec<f64>,
}

pub fn update_item_cached(h_prev: &[f64], h_cur: &[f64], path: &[f64], g: &GateParams) -> (ItemUpdate, UpdateCache) {
    let (h1, z1) = gate(&g.w_prev, h_prev, &g.w_path1, path, &g.b1);
    let (h2, z2) = gate(&g.w_cur, h_cur, &g.w_path2, path, &g.b2);
    let cache = UpdateCache {
        h_prev: h_prev.to_vec(),
        h_cur: h_cur.to_vec(),
        path: path.to_vec(),
        z1,
        z2,
    };
    (ItemUpdate { h1, h2 }, cache)
}

/// `h1 = relu(W_prev·h_prev + W_path1·φ + b1) ⊙ h_prev`,
/// `h2 = relu(W_cur·h_cur + W_path2·φ + b2) ⊙ h_cur`.
pub fn update_item(h_prev: &[f64], h_cur: &[f64], path: &[f64], g: &GateParams) -> ItemUpdate {
    update_item_cached(h_prev, h_cur, path, g).0
}

/// Returns `(d_h_prev, d_path)`; the current item vector is not trained.
pub fn update_item_backward(
    c: &UpdateCache,
    p: &GateParams,
    d_h1: &[f64],
    d_h2: &[f64],
    g: &mut GateParams,
) -> (Vec<f64>, Vec<f64>) {
    let (d_prev, mut d_path) = gate_backward(
        &p.w_prev, &c.h_prev, &p.w_path1, &c.path, &c.z1, d_h1, &mut g.w_prev, &mut g.w_path1, &mut g.b1,
    );
    let (_, d_path2) = gate_backward(
        &p.w_cur, &c.h_cur, &p.w_path2, &c.path, &c.z2, d_h2, &mut g.w_cur, &mut g.w_path2, &mut g.b2,
    );
    axpy(&mut d_path, 1.0, &d_path2);
    (d_prev, d_path)
}

#[derive(Clone, Debug)]
pub struct FirstCache {
    h: Vec<f64>,
    path: Vec<f64>,
    z: Vec<f64>,
}

pub fn init_first_item_cached(h_item: &[f64], user_path: &[f64], g: &GateParams) -> (Vec<f64>, FirstCache) {
    let (out, z) = gate(&g.w_cur, h_item, &g.w_user_path, user_path, &g.b_user);
    let cache = FirstCache {
        h: h_item.to_vec(),
        path: user_path.to_vec(),
        z,
    };
    (out, cache)
}

/// `relu(W_cur·h + W_user_path·φu + b_user) ⊙ h`
pub fn init_first_item(h_item: &[f64], user_path: &[f64], g: &GateParams) -> Vec<f64> {
    init_first_item_cached(h_item, user_path, g).0
}

/// Returns `d_user_path`.
pub fn init_first_item_backward(c: &FirstCache, p: &GateParams, d_out: &[f64], g: &mut GateParams) -> Vec<f64> {
    gate_backward(
        &p.w_cur, &c.h, &p.w_user_path, &c.path, &c.z, d_out, &mut g.w_cur, &mut g.w_user_path, &mut g.b_user,
    )
    .1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng as _;

    fn vecr(d: usize, r: &mut Rng) -> Vec<f64> {
        (0..d).map(|_| r.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn zero_gate_kills_everything() {
        let g = GateParams::zeros(3);
        let u = update_item(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], &[1.0, 1.0, 1.0], &g);
        assert_eq!(u.h1, vec![0.0; 3]);
        assert_eq!(u.h2, vec![0.0; 3]);
        assert_eq!(init_first_item(&[1.0, 2.0, 3.0], &[1.0; 3], &g), vec![0.0; 3]);
    }

    #[test]
    fn unit_bias_gate_is_identity() {
        let mut g = GateParams::zeros(3);
        g.b1 = vec![1.0; 3];
        g.b2 = vec![1.0; 3];
        g.b_user = vec![1.0; 3];
        let v = [0.5, -2.0, 3.0];
        let w = [7.0, 0.0, -1.0];
        let u = update_item(&v, &w, &[9.0, 9.0, 9.0], &g);
        assert_eq!(u.h1, v.to_vec());
        assert_eq!(u.h2, w.to_vec());
        assert_eq!(init_first_item(&w, &[3.0; 3], &g), w.to_vec());
    }

    #[test]
    fn matches_straight_line_oracle() {
        let mut r = rng::rng(8);
        let d = 5;
        let g = GateParams::init(d, &mut r);
        let mut g = g;
        g.b1 = vecr(d, &mut r);
        g.b2 = vecr(d, &mut r);
        g.b_user = vecr(d, &mut r);
        let (hp, hc, ph) = (vecr(d, &mut r), vecr(d, &mut r), vecr(d, &mut r));
        let u = update_item(&hp, &hc, &ph, &g);
        let f = u.clone();
        for i in 0..d {
            let mut z1 = g.b1[i];
            let mut z2 = g.b2[i];
            let mut zu = g.b_user[i];
            for j in 0..d {
                z1 += g.w_prev.data[i * d + j] * hp[j] + g.w_path1.data[i * d + j] * ph[j];
                z2 += g.w_cur.data[i * d + j] * hc[j] + g.w_path2.data[i * d + j] * ph[j];
                zu += g.w_cur.data[i * d + j] * hc[j] + g.w_user_path.data[i * d + j] * ph[j];
            }
            let relu = |z: f64| if z > 0.0 { z } else { 0.0 };
            assert!((f.h1[i] - relu(z1) * hp[i]).abs() < 1e-12);
            assert!((f.h2[i] - relu(z2) * hc[i]).abs() < 1e-12);
            assert!((init_first_item(&hc, &ph, &g)[i] - relu(zu) * hc[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_path_reduces_to_plain_gate() {
        let mut r = rng::rng(9);
        let d = 4;
        let g = GateParams::init(d, &mut r);
        let (hp, hc) = (vecr(d, &mut r), vecr(d, &mut r));
        let u = update_item(&hp, &hc, &[0.0; 4], &g);
        let z1 = g.w_prev.mul_vec(&hp);
        let z2 = g.w_cur.mul_vec(&hc);
        for i in 0..d {
            assert_eq!(u.h1[i], z1[i].max(0.0) * hp[i]);
            assert_eq!(u.h2[i], z2[i].max(0.0) * hc[i]);
        }
    }
}
