//! Dense → GRU → dense → linear networks with full-sequence backprop.

use std::ops::AddAssign;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use intercept_core::RngStream;

use crate::error::{PolicyError, Result};

/// Layer widths of one recurrent network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetSizes {
    pub input: usize,
    pub h1: usize,
    pub h2: usize,
    pub h3: usize,
    pub output: usize,
}

fn geometric_mean(a: usize, b: usize) -> usize {
    ((a * b) as f64).sqrt().round() as usize
}

impl NetSizes {
    /// Ten units per observation in, ten per action bit out, two logits per bit.
    pub fn policy(obs_dim: usize, act_dim: usize) -> Self {
        let h1 = 10 * obs_dim;
        let h3 = 10 * act_dim;
        Self { input: obs_dim, h1, h2: geometric_mean(h1, h3), h3, output: 2 * act_dim }
    }

    pub fn value(obs_dim: usize) -> Self {
        let h1 = 10 * obs_dim;
        let h3 = 5;
        Self { input: obs_dim, h1, h2: geometric_mean(h1, h3), h3, output: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.input, self.h1, self.h2, self.h3, self.output].contains(&0) {
            return Err(PolicyError::ConfigFault(format!("zero-width layer in {self:?}")));
        }
        Ok(())
    }
}

/// Tensor names in storage order, relative to the network prefix.
pub const TENSOR_NAMES: [&str; 15] = [
    "l1.w", "l1.b", "gru.wz", "gru.wr", "gru.wn", "gru.uz", "gru.ur", "gru.un", "gru.bz", "gru.br", "gru.bn", "l3.w",
    "l3.b", "out.w", "out.b",
];

/// Parameters (or gradients) of one network. Biases are column matrices
/// so every tensor can be handled uniformly.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentNet {
    pub sizes: NetSizes,
    pub l1_w: DMatrix<f64>,
    pub l1_b: DMatrix<f64>,
    pub wz: DMatrix<f64>,
    pub wr: DMatrix<f64>,
    pub wn: DMatrix<f64>,
    pub uz: DMatrix<f64>,
    pub ur: DMatrix<f64>,
    pub un: DMatrix<f64>,
    pub bz: DMatrix<f64>,
    pub br: DMatrix<f64>,
    pub bn: DMatrix<f64>,
    pub l3_w: DMatrix<f64>,
    pub l3_b: DMatrix<f64>,
    pub out_w: DMatrix<f64>,
    pub out_b: DMatrix<f64>,
}

impl RecurrentNet {
    pub fn zeros(s: NetSizes) -> Self {
        let z = DMatrix::zeros;
        Self {
            sizes: s,
            l1_w: z(s.h1, s.input),
            l1_b: z(s.h1, 1),
            wz: z(s.h2, s.h1),
            wr: z(s.h2, s.h1),
            wn: z(s.h2, s.h1),
            uz: z(s.h2, s.h2),
            ur: z(s.h2, s.h2),
            un: z(s.h2, s.h2),
            bz: z(s.h2, 1),
            br: z(s.h2, 1),
            bn: z(s.h2, 1),
            l3_w: z(s.h3, s.h2),
            l3_b: z(s.h3, 1),
            out_w: z(s.output, s.h3),
            out_b: z(s.output, 1),
        }
    }

    /// Uniform in ±√(1/fan_in) for every weight and bias.
    pub fn init(s: NetSizes, rng: &mut RngStream) -> Result<Self> {
        s.validate()?;
        let mut net = Self::zeros(s);
        let fans = [s.input, s.input, s.h1, s.h1, s.h1, s.h2, s.h2, s.h2, s.h1, s.h1, s.h1, s.h2, s.h2, s.h3, s.h3];
        for (t, fan) in net.tensors_mut().into_iter().zip(fans) {
            let bound = (1.0 / fan as f64).sqrt();
            for x in t.iter_mut() {
                *x = rng.uniform(-bound, bound);
            }
        }
        Ok(net)
    }

    pub fn tensors(&self) -> [&DMatrix<f64>; 15] {
        [
            &self.l1_w, &self.l1_b, &self.wz, &self.wr, &self.wn, &self.uz, &self.ur, &self.un, &self.bz, &self.br,
            &self.bn, &self.l3_w, &self.l3_b, &self.out_w, &self.out_b,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut DMatrix<f64>; 15] {
        [
            &mut self.l1_w,
            &mut self.l1_b,
            &mut self.wz,
            &mut self.wr,
            &mut self.wn,
            &mut self.uz,
            &mut self.ur,
            &mut self.un,
            &mut self.bz,
            &mut self.br,
            &mut self.bn,
            &mut self.l3_w,
            &mut self.l3_b,
            &mut self.out_w,
            &mut self.out_b,
        ]
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    pub fn zero_hidden(&self) -> DVector<f64> {
        DVector::zeros(self.sizes.h2)
    }

    /// One time step. Returns the output and the next hidden state.
    pub fn step(&self, x: &[f64], h: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        if x.len() != self.sizes.input || h.len() != self.sizes.h2 {
            return Err(PolicyError::ConfigFault(format!(
                "input {} / hidden {} do not match network {:?}",
                x.len(),
                h.len(),
                self.sizes
            )));
        }
        let x = DVector::from_column_slice(x);
        let a1 = (&self.l1_w * &x + self.l1_b.column(0)).map(f64::tanh);
        let z = (&self.wz * &a1 + &self.uz * h + self.bz.column(0)).map(sigmoid);
        let r = (&self.wr * &a1 + &self.ur * h + self.br.column(0)).map(sigmoid);
        let rh = r.component_mul(h);
        let n = (&self.wn * &a1 + &self.un * &rh + self.bn.column(0)).map(f64::tanh);
        let h_next = h + z.component_mul(&(n - h));
        let a3 = (&self.l3_w * &h_next + self.l3_b.column(0)).map(f64::tanh);
        let out = &self.out_w * &a3 + self.out_b.column(0);
        Ok((out, h_next))
    }

    /// Runs a whole sequence (columns of `x` are time steps) from a zero
    /// hidden state, keeping what the backward pass needs.
    pub fn forward_seq(&self, x: &DMatrix<f64>) -> Result<SeqCache> {
        self.forward_packed(x, Packing::new(&[x.ncols()]))
    }

    /// Runs several sequences at once. `x` is laid out by `packing`; every
    /// sequence starts from a zero hidden state.
    pub fn forward_packed(&self, x: &DMatrix<f64>, packing: Packing) -> Result<SeqCache> {
        let s = self.sizes;
        if x.nrows() != s.input || x.ncols() != packing.total {
            return Err(PolicyError::ConfigFault(format!(
                "input is {}x{}, network expects {} rows and packing {} columns",
                x.nrows(),
                x.ncols(),
                s.input,
                packing.total
            )));
        }
        let cols = x.ncols();
        let a1 = add_bias(&self.l1_w * x, &self.l1_b).map(f64::tanh);
        let xz = add_bias(&self.wz * &a1, &self.bz);
        let xr = add_bias(&self.wr * &a1, &self.br);
        let xn = add_bias(&self.wn * &a1, &self.bn);
        let mut hprev = DMatrix::zeros(s.h2, cols);
        let mut hs = DMatrix::zeros(s.h2, cols);
        let mut z = DMatrix::zeros(s.h2, cols);
        let mut r = DMatrix::zeros(s.h2, cols);
        let mut n = DMatrix::zeros(s.h2, cols);
        for t in 0..packing.steps() {
            let (c0, b) = (packing.start[t], packing.batch[t]);
            let hp = if t == 0 { DMatrix::zeros(s.h2, b) } else { hs.columns(packing.start[t - 1], b).into_owned() };
            let mut zt = xz.columns(c0, b).into_owned();
            zt.gemm(1.0, &self.uz, &hp, 1.0);
            zt.apply(|v| *v = sigmoid(*v));
            let mut rt = xr.columns(c0, b).into_owned();
            rt.gemm(1.0, &self.ur, &hp, 1.0);
            rt.apply(|v| *v = sigmoid(*v));
            let mut nt = xn.columns(c0, b).into_owned();
            nt.gemm(1.0, &self.un, &rt.component_mul(&hp), 1.0);
            nt.apply(|v| *v = v.tanh());
            let ht = &hp + zt.component_mul(&(&nt - &hp));
            hprev.columns_mut(c0, b).copy_from(&hp);
            z.columns_mut(c0, b).copy_from(&zt);
            r.columns_mut(c0, b).copy_from(&rt);
            n.columns_mut(c0, b).copy_from(&nt);
            hs.columns_mut(c0, b).copy_from(&ht);
        }
        let a3 = add_bias(&self.l3_w * &hs, &self.l3_b).map(f64::tanh);
        let out = add_bias(&self.out_w * &a3, &self.out_b);
        Ok(SeqCache { x: x.clone(), a1, hprev, z, r, n, h: hs, a3, out, packing })
    }

    /// Gradient of a loss with respect to every parameter, given
    /// `d_out = ∂loss/∂output` for each column of the cached pass.
    pub fn backward_seq(&self, c: &SeqCache, d_out: &DMatrix<f64>) -> RecurrentNet {
        let s = self.sizes;
        let p = &c.packing;
        let cols = c.x.ncols();
        let mut g = RecurrentNet::zeros(s);
        g.out_w = d_out * c.a3.transpose();
        g.out_b = row_sums(d_out);
        let d_a3 = self.out_w.transpose() * d_out;
        let d_z3 = d_a3.zip_map(&c.a3, |d, a| d * (1.0 - a * a));
        g.l3_w = &d_z3 * c.h.transpose();
        g.l3_b = row_sums(&d_z3);
        let d_h_out = self.l3_w.transpose() * &d_z3;

        let mut daz = DMatrix::zeros(s.h2, cols);
        let mut dar = DMatrix::zeros(s.h2, cols);
        let mut dan = DMatrix::zeros(s.h2, cols);
        let mut dh_next = DMatrix::zeros(s.h2, 0);
        let uz_t = self.uz.transpose();
        let ur_t = self.ur.transpose();
        let un_t = self.un.transpose();
        for t in (0..p.steps()).rev() {
            let (c0, b) = (p.start[t], p.batch[t]);
            let mut dh = d_h_out.columns(c0, b).into_owned();
            let carried = dh_next.ncols();
            dh.columns_mut(0, carried).add_assign(&dh_next);
            let span = c0 * s.h2..(c0 + b) * s.h2;
            let z = &c.z.as_slice()[span.clone()];
            let r = &c.r.as_slice()[span.clone()];
            let n = &c.n.as_slice()[span.clone()];
            let hp = &c.hprev.as_slice()[span];
            let mut dzt = DMatrix::zeros(s.h2, b);
            let mut dnt = DMatrix::zeros(s.h2, b);
            let mut dh_prev = DMatrix::zeros(s.h2, b);
            for (i, d) in dh.iter().enumerate() {
                dnt[i] = d * z[i] * (1.0 - n[i] * n[i]);
                dzt[i] = d * (n[i] - hp[i]) * z[i] * (1.0 - z[i]);
                dh_prev[i] = d * (1.0 - z[i]);
            }
            let d_rh = &un_t * &dnt;
            let mut drt = DMatrix::zeros(s.h2, b);
            for (i, d) in d_rh.iter().enumerate() {
                drt[i] = d * hp[i] * r[i] * (1.0 - r[i]);
                dh_prev[i] += d * r[i];
            }
            dh_prev.gemm(1.0, &uz_t, &dzt, 1.0);
            dh_prev.gemm(1.0, &ur_t, &drt, 1.0);
            daz.columns_mut(c0, b).copy_from(&dzt);
            dar.columns_mut(c0, b).copy_from(&drt);
            dan.columns_mut(c0, b).copy_from(&dnt);
            dh_next = dh_prev;
        }
        let rh = c.r.component_mul(&c.hprev);
        g.uz = &daz * c.hprev.transpose();
        g.ur = &dar * c.hprev.transpose();
        g.un = &dan * rh.transpose();
        let a1_t = c.a1.transpose();
        g.wz = &daz * &a1_t;
        g.wr = &dar * &a1_t;
        g.wn = &dan * &a1_t;
        g.bz = row_sums(&daz);
        g.br = row_sums(&dar);
        g.bn = row_sums(&dan);
        let d_a1 = self.wz.transpose() * &daz + self.wr.transpose() * &dar + self.wn.transpose() * &dan;
        let d_z1 = d_a1.zip_map(&c.a1, |d, a| d * (1.0 - a * a));
        g.l1_w = &d_z1 * c.x.transpose();
        g.l1_b = row_sums(&d_z1);
        g
    }

    /// `self += k · other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &RecurrentNet, k: f64) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            *a += b * k;
        }
    }
}

/// Column layout for running several sequences together. Columns are
/// time-major and sequences are ordered longest first, so the sequences
/// still running at step `t` occupy a prefix of that step's block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packing {
    pub lens: Vec<usize>,
    /// `order[k]` is the sequence in slot `k`.
    pub order: Vec<usize>,
    /// Slot of each sequence.
    pub slot: Vec<usize>,
    /// First column of each time step.
    pub start: Vec<usize>,
    /// Sequences still running at each time step.
    pub batch: Vec<usize>,
    pub total: usize,
}

impl Packing {
    pub fn new(lens: &[usize]) -> Self {
        let mut order: Vec<usize> = (0..lens.len()).collect();
        order.sort_by(|a, b| lens[*b].cmp(&lens[*a]));
        let mut slot = vec![0; lens.len()];
        for (k, &i) in order.iter().enumerate() {
            slot[i] = k;
        }
        let t_max = lens.iter().copied().max().unwrap_or(0);
        let mut start = Vec::with_capacity(t_max);
        let mut batch = Vec::with_capacity(t_max);
        let mut total = 0;
        for t in 0..t_max {
            let b = order.iter().take_while(|&&i| lens[i] > t).count();
            start.push(total);
            batch.push(b);
            total += b;
        }
        Self { lens: lens.to_vec(), order, slot, start, batch, total }
    }

    pub fn steps(&self) -> usize {
        self.start.len()
    }

    /// Column of step `t` of sequence `seq`.
    pub fn column(&self, seq: usize, t: usize) -> usize {
        self.start[t] + self.slot[seq]
    }

    /// Interleaves per-sequence matrices (columns are time) into the packed layout.
    pub fn pack(&self, seqs: &[DMatrix<f64>]) -> DMatrix<f64> {
        let rows = seqs.first().map_or(0, |m| m.nrows());
        let mut out = DMatrix::zeros(rows, self.total);
        for (i, m) in seqs.iter().enumerate() {
            for t in 0..m.ncols() {
                out.set_column(self.column(i, t), &m.column(t));
            }
        }
        out
    }
}

/// Intermediate activations of a forward pass, in packed column layout.
#[derive(Debug, Clone)]
pub struct SeqCache {
    pub x: DMatrix<f64>,
    pub a1: DMatrix<f64>,
    pub hprev: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub n: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub a3: DMatrix<f64>,
    pub out: DMatrix<f64>,
    pub packing: Packing,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn add_bias(mut m: DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    for mut col in m.column_iter_mut() {
        col += b.column(0);
    }
    m
}

fn row_sums(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.nrows(), 1);
    for col in m.column_iter() {
        out.column_mut(0).add_assign(&col);
    }
    out
}
