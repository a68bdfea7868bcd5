use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::rng;

use super::attention::AttentionParams;
use super::gate::GateParams;
use super::mlp::{layer_sizes, MlpParams};

const CKPT_MAGIC: &[u8; 8] = b"TMERCKP1";

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub user_item: AttentionParams,
    pub item_item: AttentionParams,
    pub gates: GateParams,
    pub mlp: MlpParams,
}

impl ModelParams {
    pub fn zeros(d: usize, heads: usize) -> Self {
        Self {
            user_item: AttentionParams::zeros(d, heads),
            item_item: AttentionParams::zeros(d, heads),
            gates: GateParams::zeros(d),
            mlp: MlpParams::zeros(d),
        }
    }

    /// Xavier-uniform weights, zero biases.
    pub fn init(d: usize, heads: usize, seed: u64) -> Result<Self> {
        if d == 0 || heads == 0 || !d.is_multiple_of(heads) {
            return Err(Error::Config(format!("dimension {d} must be a positive multiple of heads {heads}")));
        }
        if d < 4 {
            return Err(Error::Config("dimension must be at least 4".into()));
        }
        let mut r = rng::rng(seed);
        Ok(Self {
            user_item: AttentionParams::init(d, heads, &mut r),
            item_item: AttentionParams::init(d, heads, &mut r),
            gates: GateParams::init(d, &mut r),
            mlp: MlpParams::init(d, &mut r),
        })
    }

    pub fn dim(&self) -> usize {
        self.gates.dim()
    }

    pub fn heads(&self) -> usize {
        self.user_item.heads
    }

    /// Every tensor in checkpoint order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for a in [&self.user_item, &self.item_item] {
            out.extend(a.matrices().map(|m| m.data.as_slice()));
        }
        out.extend(self.gates.tensors());
        for l in &self.mlp.layers {
            out.push(&l.w.data);
            out.push(&l.b);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for a in [&mut self.user_item, &mut self.item_item] {
            out.extend(a.matrices_mut().map(|m| m.data.as_mut_slice()));
        }
        out.extend(self.gates.tensors_mut());
        for l in &mut self.mlp.layers {
            out.push(&mut l.w.data);
            out.push(&mut l.b);
        }
        out
    }

    pub fn tensor_names() -> Vec<String> {
        let mut out = Vec::new();
        for a in ["user_item", "item_item"] {
            for m in ["wq", "wk", "wv", "wo"] {
                out.push(format!("{a}.{m}"));
            }
        }
        for g in ["w_prev", "w_path1", "w_cur", "w_path2", "w_user_path", "b1", "b2", "b_user"] {
            out.push(format!("gates.{g}"));
        }
        for l in 0..3 {
            out.push(format!("mlp.{l}.w"));
            out.push(format!("mlp.{l}.b"));
        }
        out
    }

    pub fn num_values(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn add_assign(&mut self, other: &ModelParams) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= s);
        }
    }

    /// Header (magic, d, heads, layer sizes) then every tensor as
    /// little-endian f64.
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(CKPT_MAGIC)?;
        w.write_all(&(self.dim() as u32).to_le_bytes())?;
        w.write_all(&(self.heads() as u32).to_le_bytes())?;
        let sizes = layer_sizes(self.dim());
        w.write_all(&(sizes.len() as u32).to_le_bytes())?;
        for s in sizes {
            w.write_all(&(s as u32).to_le_bytes())?;
        }
        for t in self.tensors() {
            for v in t {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Self> {
        let corrupt = |msg: &str| Error::Corrupt {
            what: "checkpoint",
            msg: msg.to_string(),
        };
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CKPT_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let mut u = [0u8; 4];
        let mut read_u32 = |r: &mut R| -> Result<usize> {
            r.read_exact(&mut u)?;
            Ok(u32::from_le_bytes(u) as usize)
        };
        let d = read_u32(&mut r)?;
        let heads = read_u32(&mut r)?;
        if d == 0 || heads == 0 || d % heads != 0 {
            return Err(corrupt("invalid dimension or head count"));
        }
        let n_sizes = read_u32(&mut r)?;
        let sizes = (0..n_sizes).map(|_| read_u32(&mut r)).collect::<Result<Vec<_>>>()?;
        if sizes != layer_sizes(d) {
            return Err(corrupt("layer sizes do not match dimension"));
        }
        let mut p = Self::zeros(d, heads);
        let mut b = [0u8; 8];
        for t in p.tensors_mut() {
            for v in t.iter_mut() {
                r.read_exact(&mut b)?;
                *v = f64::from_le_bytes(b);
            }
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(corrupt("trailing bytes"));
        }
        Ok(p)
    }
}

/// Adaptive moment estimation.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: ModelParams,
    v: ModelParams,
}

impl Adam {
    pub fn new(lr: f64, shape: &ModelParams) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: ModelParams::zeros(shape.dim(), shape.heads()),
            v: ModelParams::zeros(shape.dim(), shape.heads()),
        }
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (((p, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
        {
            for k in 0..p.len() {
                m[k] = b1 * m[k] + (1.0 - b1) * g[k];
                v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
                p[k] -= lr * (m[k] / bc1) / ((v[k] / bc2).sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_roundtrip_is_bit_exact() {
        let p = ModelParams::init(8, 2, 7).unwrap();
        let mut buf = Vec::new();
        p.write_checkpoint(&mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 4 * 3 + 4 * 4 + 8 * p.num_values());
        let q = ModelParams::read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(p, q);
        for (a, b) in p.tensors().iter().zip(q.tensors()) {
            assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn checkpoint_rejects_damage() {
        let p = ModelParams::init(4, 2, 1).unwrap();
        let mut buf = Vec::new();
        p.write_checkpoint(&mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(ModelParams::read_checkpoint(bad.as_slice()).is_err());
        assert!(ModelParams::read_checkpoint(&buf[..buf.len() - 1]).is_err());
        let mut long = buf.clone();
        long.push(0);
        assert!(ModelParams::read_checkpoint(long.as_slice()).is_err());
    }

    #[test]
    fn init_checks_heads_and_zeroes_biases() {
        assert!(ModelParams::init(10, 4, 0).is_err());
        let p = ModelParams::init(8, 4, 0).unwrap();
        assert!(p.gates.b1.iter().all(|&b| b == 0.0));
        assert!(p.mlp.layers.iter().all(|l| l.b.iter().all(|&b| b == 0.0)));
        let bound = (6.0f64 / 16.0).sqrt();
        assert!(p.gates.w_prev.data.iter().all(|v| v.abs() <= bound));
        assert_eq!(ModelParams::tensor_names().len(), p.tensors().len());
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = ModelParams::zeros(4, 2);
        let mut g = ModelParams::zeros(4, 2);
        g.gates.b1 = vec![3.0, -0.5, 0.0, 1e-3];
        let mut opt = Adam::new(0.1, &p);
        opt.step(&mut p, &g);
        assert!((p.gates.b1[0] + 0.1).abs() < 1e-6);
        assert!((p.gates.b1[1] - 0.1).abs() < 1e-6);
        assert_eq!(p.gates.b1[2], 0.0);
    }
}
