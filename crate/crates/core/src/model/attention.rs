//! Multi-head scaled dot-product self-attention over a set of path rows.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::linalg::{axpy, Matrix};
use crate::rng::Rng;

/// Query/key/value projections are stored as `d×d` matrices whose column
/// block `h·dk..(h+1)·dk` is head `h`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams {
    pub heads: usize,
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
    pub wo: Matrix,
}

pub(crate) fn xavier(rows: usize, cols: usize, fan_in: usize, fan_out: usize, r: &mut Rng) -> Matrix {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let mut m = Matrix::zeros(rows, cols);
    m.data.iter_mut().for_each(|v| *v = r.gen_range(-bound..bound));
    m
}

impl AttentionParams {
    pub fn zeros(d: usize, heads: usize) -> Self {
        Self {
            heads,
            wq: Matrix::zeros(d, d),
            wk: Matrix::zeros(d, d),
            wv: Matrix::zeros(d, d),
            wo: Matrix::zeros(d, d),
        }
    }

    pub fn init(d: usize, heads: usize, r: &mut Rng) -> Self {
        let dk = d / heads;
        Self {
            heads,
            wq: xavier(d, d, d, dk, r),
            wk: xavier(d, d, d, dk, r),
            wv: xavier(d, d, d, dk, r),
            wo: xavier(d, d, d, d, r),
        }
    }

    pub fn dim(&self) -> usize {
        self.wq.rows
    }

    pub fn head_dim(&self) -> usize {
        self.dim() / self.heads
    }

    pub fn matrices(&self) -> [&Matrix; 4] {
        [&self.wq, &self.wk, &self.wv, &self.wo]
    }

    pub fn matrices_mut(&mut self) -> [&mut Matrix; 4] {
        [&mut self.wq, &mut self.wk, &mut self.wv, &mut self.wo]
    }
}

/// Forward intermediates kept for the backward pass.
#[derive(Clone, Debug)]
pub struct AttentionCache {
    x: Matrix,
    q: Matrix,
    k: Matrix,
    v: Matrix,
    /// One `n×n` row-stochastic matrix per head.
    attn: Vec<Matrix>,
    /// Mean over rows of the concatenated head outputs.
    o_mean: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionOutput {
    pub context: Vec<f64>,
    pub weights: Vec<f64>,
}

fn softmax_rows(s: &mut Matrix) {
    for r in 0..s.rows {
        let row = s.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
}

/// Path weights: attention mass each row receives, averaged over heads and
/// query rows.
fn collapse_weights(attn: &[Matrix], n: usize) -> Vec<f64> {
    let mut w = vec![0.0; n];
    for a in attn {
        for i in 0..n {
            axpy(&mut w, 1.0, a.row(i));
        }
    }
    let scale = 1.0 / (attn.len() * n) as f64;
    w.iter_mut().for_each(|v| *v *= scale);
    w
}

pub fn self_attend_cached(paths: &Matrix, p: &AttentionParams) -> Result<(AttentionOutput, AttentionCache)> {
    let d = p.dim();
    if paths.cols != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: paths.cols,
        });
    }
    if !paths.is_finite() {
        return Err(Error::NonFinite("attention input"));
    }
    let n = paths.rows;
    let (m, dk) = (p.heads, p.head_dim());
    let q = paths.matmul(&p.wq);
    let k = paths.matmul(&p.wk);
    let v = paths.matmul(&p.wv);
    let mut attn = Vec::with_capacity(m);
    let mut o = Matrix::zeros(n, d);
    let scale = 1.0 / (dk as f64).sqrt();
    for h in 0..m {
        let (qh, kh, vh) = (q.col_block(h * dk, dk), k.col_block(h * dk, dk), v.col_block(h * dk, dk));
        let mut s = qh.matmul_t(&kh);
        s.data.iter_mut().for_each(|x| *x *= scale);
        softmax_rows(&mut s);
        let oh = s.matmul(&vh);
        for i in 0..n {
            o.row_mut(i)[h * dk..(h + 1) * dk].copy_from_slice(oh.row(i));
        }
        attn.push(s);
    }
    let o_mean = o.mean_rows();
    let context = if n == 0 { vec![0.0; d] } else { p.wo.t_mul_vec(&o_mean) };
    let weights = if n == 0 { Vec::new() } else { collapse_weights(&attn, n) };
    let out = AttentionOutput { context, weights };
    let cache = AttentionCache {
        x: paths.clone(),
        q,
        k,
        v,
        attn,
        o_mean,
    };
    Ok((out, cache))
}

/// Context vector (mean of the attended rows after the output projection)
/// and one weight per path row.
pub fn self_attend(paths: &Matrix, p: &AttentionParams) -> Result<AttentionOutput> {
    Ok(self_attend_cached(paths, p)?.0)
}

/// Accumulate parameter gradients for upstream gradient `d_context`.
pub fn attention_backward(cache: &AttentionCache, p: &AttentionParams, d_context: &[f64], g: &mut AttentionParams) {
    let n = cache.x.rows;
    if n == 0 {
        return;
    }
    let (m, dk) = (p.heads, p.head_dim());
    // context = Woᵀ · mean_rows(O)
    g.wo.add_outer(1.0, &cache.o_mean, d_context);
    let d_o_row: Vec<f64> = p.wo.mul_vec(d_context).iter().map(|v| v / n as f64).collect();
    let scale = 1.0 / (dk as f64).sqrt();
    let mut dq = Matrix::zeros(n, p.dim());
    let mut dk_m = Matrix::zeros(n, p.dim());
    let mut dv = Matrix::zeros(n, p.dim());
    for h in 0..m {
        let cols = h * dk..(h + 1) * dk;
        let a = &cache.attn[h];
        let d_oh = &d_o_row[cols.clone()];
        // every row of dO_h equals d_oh
        let (qh, kh, vh) = (
            cache.q.col_block(h * dk, dk),
            cache.k.col_block(h * dk, dk),
            cache.v.col_block(h * dk, dk),
        );
        // dA[i][j] = d_oh · v_j, identical for all i
        let da_row: Vec<f64> = (0..n).map(|j| crate::linalg::dot(d_oh, vh.row(j))).collect();
        // dV_h[j] = Σ_i A[i][j] · d_oh
        for j in 0..n {
            let col_sum: f64 = (0..n).map(|i| a.get(i, j)).sum();
            axpy(&mut dv.row_mut(j)[cols.clone()], col_sum, d_oh);
        }
        let mut ds = Matrix::zeros(n, n);
        for i in 0..n {
            let ar = a.row(i);
            let inner = crate::linalg::dot(ar, &da_row);
            for j in 0..n {
                ds.set(i, j, ar[j] * (da_row[j] - inner) * scale);
            }
        }
        let dqh = ds.matmul(&kh);
        let dkh = ds.t_matmul(&qh);
        for i in 0..n {
            dq.row_mut(i)[cols.clone()].copy_from_slice(dqh.row(i));
            dk_m.row_mut(i)[cols.clone()].copy_from_slice(dkh.row(i));
        }
    }
    g.wq.add_assign(&cache.x.t_matmul(&dq));
    g.wk.add_assign(&cache.x.t_matmul(&dk_m));
    g.wv.add_assign(&cache.x.t_matmul(&dv));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn random_paths(n: usize, d: usize, r: &mut Rng) -> Matrix {
        let mut m = Matrix::zeros(n, d);
        m.data.iter_mut().for_each(|v| *v = r.gen_range(-1.0..1.0));
        m
    }

    /// Straight-line reimplementation with explicit loops and no shared
    /// helpers.
    fn oracle(x: &Matrix, p: &AttentionParams) -> (Vec<f64>, Vec<f64>) {
        let (n, d, m) = (x.rows, x.cols, p.heads);
        let dk = d / m;
        let proj = |w: &Matrix, i: usize, c: usize| -> f64 { (0..d).map(|a| x.data[i * d + a] * w.data[a * d + c]).sum() };
        let mut concat = vec![vec![0.0; d]; n];
        let mut weights = vec![0.0; n];
        for h in 0..m {
            for i in 0..n {
                let mut s = vec![0.0; n];
                for (j, sj) in s.iter_mut().enumerate() {
                    for c in h * dk..(h + 1) * dk {
                        *sj += proj(&p.wq, i, c) * proj(&p.wk, j, c);
                    }
                    *sj /= (dk as f64).sqrt();
                }
                let mx = s.iter().cloned().fold(f64::MIN, f64::max);
                let z: f64 = s.iter().map(|v| (v - mx).exp()).sum();
                let a: Vec<f64> = s.iter().map(|v| (v - mx).exp() / z).collect();
                for j in 0..n {
                    weights[j] += a[j] / (m * n) as f64;
                    for c in h * dk..(h + 1) * dk {
                        concat[i][c] += a[j] * proj(&p.wv, j, c);
                    }
                }
            }
        }
        let mut ctx = vec![0.0; d];
        for row in &concat {
            for b in 0..d {
                for a in 0..d {
                    ctx[b] += row[a] * p.wo.data[a * d + b] / n as f64;
                }
            }
        }
        (ctx, weights)
    }

    #[test]
    fn matches_dense_oracle() {
        let mut r = rng::rng(3);
        let p = AttentionParams::init(8, 2, &mut r);
        let x = random_paths(3, 8, &mut r);
        let out = self_attend(&x, &p).unwrap();
        let (ctx, w) = oracle(&x, &p);
        for (a, b) in out.context.iter().zip(&ctx).chain(out.weights.iter().zip(&w)) {
            assert!((a - b).abs() <= 1e-10 * b.abs().max(1e-300) || (a - b).abs() < 1e-14, "{a} vs {b}");
        }
    }

    #[test]
    fn single_row_gets_all_weight() {
        let mut r = rng::rng(4);
        let p = AttentionParams::init(8, 4, &mut r);
        let x = random_paths(1, 8, &mut r);
        let out = self_attend(&x, &p).unwrap();
        assert_eq!(out.weights, vec![1.0]);
        let expect = p.wo.t_mul_vec(&p.wv.t_mul_vec(x.row(0)));
        for (a, b) in out.context.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_rows_split_evenly() {
        let mut r = rng::rng(5);
        let p = AttentionParams::init(6, 3, &mut r);
        let row = random_paths(1, 6, &mut r);
        let x = Matrix::from_rows(&[row.row(0).to_vec(), row.row(0).to_vec()], 6);
        let w = self_attend(&x, &p).unwrap().weights;
        assert_eq!(w.len(), 2);
        assert!((w[0] - 0.5).abs() < 1e-15 && (w[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn empty_set_gives_zero_context() {
        let p = AttentionParams::init(4, 2, &mut rng::rng(0));
        let out = self_attend(&Matrix::zeros(0, 4), &p).unwrap();
        assert_eq!(out.context, vec![0.0; 4]);
        assert!(out.weights.is_empty());
    }

    #[test]
    fn rejects_bad_input() {
        let p = AttentionParams::init(4, 2, &mut rng::rng(0));
        assert!(matches!(self_attend(&Matrix::zeros(2, 3), &p), Err(Error::DimensionMismatch { .. })));
        let mut x = Matrix::zeros(2, 4);
        x.data[3] = f64::NAN;
        assert!(matches!(self_attend(&x, &p), Err(Error::NonFinite(_))));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut r = rng::rng(11);
        let p = AttentionParams::init(6, 2, &mut r);
        let x = random_paths(4, 6, &mut r);
        let up: Vec<f64> = (0..6).map(|_| r.gen_range(-1.0..1.0)).collect();
        let f = |p: &AttentionParams| crate::linalg::dot(&self_attend(&x, p).unwrap().context, &up);
        let (_, cache) = self_attend_cached(&x, &p).unwrap();
        let mut g = AttentionParams::zeros(6, 2);
        attention_backward(&cache, &p, &up, &mut g);
        let eps = 1e-5;
        for t in 0..4 {
            for e in 0..36 {
                let mut plus = p.clone();
                plus.matrices_mut()[t].data[e] += eps;
                let mut minus = p.clone();
                minus.matrices_mut()[t].data[e] -= eps;
                let num = (f(&plus) - f(&minus)) / (2.0 * eps);
                let ana = g.matrices()[t].data[e];
                assert!((num - ana).abs() < 1e-7, "tensor {t} entry {e}: {num} vs {ana}");
            }
        }
    }
}
