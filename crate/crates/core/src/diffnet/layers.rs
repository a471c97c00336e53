use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DiffError, GradStore, Mat, ParamStore, Real};

/// Affine map `y = x·W (+ b)` applied to every row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dense {
    pub weight: usize,
    pub bias: Option<usize>,
    pub inputs: usize,
    pub outputs: usize,
}

impl Dense {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let weight = store.add_weight(format!("{name}.weight"), inputs, outputs, rng);
        let bias = Some(store.add_filled(format!("{name}.bias"), outputs, 0.0));
        Self {
            weight,
            bias,
            inputs,
            outputs,
        }
    }

    pub fn without_bias<T: Real>(store: &mut ParamStore<T>, name: &str, inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let weight = store.add_weight(format!("{name}.weight"), inputs, outputs, rng);
        Self {
            weight,
            bias: None,
            inputs,
            outputs,
        }
    }

    pub fn forward<T: Real>(&self, store: &ParamStore<T>, x: &Mat<T>) -> Result<Mat<T>, DiffError> {
        if x.cols() != self.inputs {
            return Err(DiffError::WidthMismatch {
                expected: self.inputs,
                got: x.cols(),
            });
        }
        let mut y = x.matmul(store.get(self.weight), self.outputs);
        if let Some(b) = self.bias {
            let b = store.get(b);
            for r in 0..y.rows() {
                for (v, bb) in y.row_mut(r).iter_mut().zip(b) {
                    *v += *bb;
                }
            }
        }
        Ok(y)
    }

    /// Accumulates parameter gradients (if `grads` is given) and returns the
    /// input gradient when `need_input` is set.
    pub fn backward<T: Real>(
        &self,
        store: &ParamStore<T>,
        x: &Mat<T>,
        dy: &Mat<T>,
        grads: Option<&mut GradStore<T>>,
        need_input: bool,
    ) -> Option<Mat<T>> {
        if let Some(g) = grads {
            x.accumulate_outer(dy, g.slot_mut(self.weight));
            if let Some(b) = self.bias {
                let gb = g.slot_mut(b);
                for r in 0..dy.rows() {
                    for (acc, v) in gb.iter_mut().zip(dy.row(r)) {
                        *acc += *v;
                    }
                }
            }
        }
        need_input.then(|| dy.matmul_transposed(store.get(self.weight), self.inputs))
    }
}

/// Per-channel normalization over the rows of one forward call, with a
/// learned scale and shift.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelNorm {
    pub gamma: usize,
    pub beta: usize,
    pub width: usize,
}

pub const NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct NormCache<T> {
    xhat: Mat<T>,
    inv_std: Vec<T>,
}

impl ChannelNorm {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, width: usize) -> Self {
        Self {
            gamma: store.add_filled(format!("{name}.gamma"), width, 1.0),
            beta: store.add_filled(format!("{name}.beta"), width, 0.0),
            width,
        }
    }

    pub fn forward<T: Real>(&self, store: &ParamStore<T>, x: &Mat<T>) -> (Mat<T>, NormCache<T>) {
        let n = T::lit(x.rows().max(1) as f64);
        let (gamma, beta) = (store.get(self.gamma), store.get(self.beta));
        let mut mean = vec![T::zero(); self.width];
        for r in 0..x.rows() {
            for (m, v) in mean.iter_mut().zip(x.row(r)) {
                *m += *v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![T::zero(); self.width];
        for r in 0..x.rows() {
            for c in 0..self.width {
                let d = x.row(r)[c] - mean[c];
                var[c] += d * d;
            }
        }
        let inv_std: Vec<T> = var.iter().map(|v| T::one() / (*v / n + T::lit(NORM_EPS)).sqrt()).collect();
        let mut xhat = Mat::zeros(x.rows(), self.width);
        let mut y = Mat::zeros(x.rows(), self.width);
        for r in 0..x.rows() {
            for c in 0..self.width {
                let h = (x.row(r)[c] - mean[c]) * inv_std[c];
                xhat.row_mut(r)[c] = h;
                y.row_mut(r)[c] = gamma[c] * h + beta[c];
            }
        }
        (y, NormCache { xhat, inv_std })
    }

    pub fn backward<T: Real>(&self, store: &ParamStore<T>, cache: &NormCache<T>, dy: &Mat<T>, grads: Option<&mut GradStore<T>>) -> Mat<T> {
        let rows = dy.rows();
        let n = T::lit(rows.max(1) as f64);
        let gamma = store.get(self.gamma);
        let mut sum_dxhat = vec![T::zero(); self.width];
        let mut sum_dxhat_xhat = vec![T::zero(); self.width];
        let mut dgamma = vec![T::zero(); self.width];
        let mut dbeta = vec![T::zero(); self.width];
        for r in 0..rows {
            for c in 0..self.width {
                let g = dy.row(r)[c];
                let h = cache.xhat.row(r)[c];
                dgamma[c] += g * h;
                dbeta[c] += g;
                let dh = g * gamma[c];
                sum_dxhat[c] += dh;
                sum_dxhat_xhat[c] += dh * h;
            }
        }
        if let Some(gr) = grads {
            for (a, b) in gr.slot_mut(self.gamma).iter_mut().zip(&dgamma) {
                *a += *b;
            }
            for (a, b) in gr.slot_mut(self.beta).iter_mut().zip(&dbeta) {
                *a += *b;
            }
        }
        let mut dx = Mat::zeros(rows, self.width);
        for r in 0..rows {
            for c in 0..self.width {
                let dh = dy.row(r)[c] * gamma[c];
                let h = cache.xhat.row(r)[c];
                dx.row_mut(r)[c] = cache.inv_std[c] / n * (n * dh - sum_dxhat[c] - h * sum_dxhat_xhat[c]);
            }
        }
        dx
    }
}

/// How a pointwise MLP treats its last layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LastLayer {
    Relu,
    Linear,
}

/// Shared per-row MLP: the same stack of dense layers applied to every point.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
    norms: Vec<Option<ChannelNorm>>,
    last: LastLayer,
}

#[derive(Debug, Clone)]
pub struct MlpCache<T> {
    /// Input of every layer followed by the final output.
    acts: Vec<Mat<T>>,
    norms: Vec<Option<NormCache<T>>>,
}

impl<T: Real> MlpCache<T> {
    pub fn output(&self) -> &Mat<T> {
        self.acts.last().expect("non-empty cache")
    }

    pub fn into_output(mut self) -> Mat<T> {
        self.acts.pop().expect("non-empty cache")
    }
}

impl Mlp {
    /// `widths` lists every layer width including the input width.
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        widths: &[usize],
        last: LastLayer,
        normalize: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        assert!(widths.len() >= 2, "an MLP needs at least one layer");
        let mut layers = Vec::new();
        let mut norms = Vec::new();
        for (i, w) in widths.windows(2).enumerate() {
            layers.push(Dense::new(store, &format!("{name}.{i}"), w[0], w[1], rng));
            let is_last = i + 2 == widths.len();
            let wants_norm = normalize && !(is_last && last == LastLayer::Linear);
            norms.push(wants_norm.then(|| ChannelNorm::new(store, &format!("{name}.{i}.norm"), w[1])));
        }
        Self { layers, norms, last }
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn outputs(&self) -> usize {
        self.layers.last().expect("non-empty").outputs
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    fn relu_after(&self, i: usize) -> bool {
        i + 1 < self.layers.len() || self.last == LastLayer::Relu
    }

    pub fn forward<T: Real>(&self, store: &ParamStore<T>, x: &Mat<T>) -> Result<Mat<T>, DiffError> {
        Ok(self.forward_cached(store, x.clone())?.into_output())
    }

    pub fn forward_cached<T: Real>(&self, store: &ParamStore<T>, x: Mat<T>) -> Result<MlpCache<T>, DiffError> {
        let mut acts = vec![x];
        let mut norm_caches = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut y = layer.forward(store, acts.last().expect("input"))?;
            let mut nc = None;
            if let Some(norm) = &self.norms[i] {
                let (z, c) = norm.forward(store, &y);
                y = z;
                nc = Some(c);
            }
            if self.relu_after(i) {
                relu_inplace(&mut y);
            }
            norm_caches.push(nc);
            acts.push(y);
        }
        Ok(MlpCache { acts, norms: norm_caches })
    }

    pub fn backward<T: Real>(
        &self,
        store: &ParamStore<T>,
        cache: &MlpCache<T>,
        dy: Mat<T>,
        mut grads: Option<&mut GradStore<T>>,
        need_input: bool,
    ) -> Option<Mat<T>> {
        let mut d = dy;
        for i in (0..self.layers.len()).rev() {
            if self.relu_after(i) {
                relu_backward_inplace(&mut d, &cache.acts[i + 1]);
            }
            if let (Some(norm), Some(nc)) = (&self.norms[i], &cache.norms[i]) {
                d = norm.backward(store, nc, &d, grads.as_deref_mut());
            }
            let want = need_input || i > 0;
            match self.layers[i].backward(store, &cache.acts[i], &d, grads.as_deref_mut(), want) {
                Some(dx) => d = dx,
                None => return None,
            }
        }
        Some(d)
    }
}

pub fn relu_inplace<T: Real>(x: &mut Mat<T>) {
    for v in x.data_mut() {
        if !(*v > T::zero()) {
            *v = T::zero();
        }
    }
}

/// Zeroes `d` wherever the post-activation `y` is not positive.
pub fn relu_backward_inplace<T: Real>(d: &mut Mat<T>, y: &Mat<T>) {
    for (g, v) in d.data_mut().iter_mut().zip(y.data()) {
        if !(*v > T::zero()) {
            *g = T::zero();
        }
    }
}

/// Ragged row groups: group `g` spans rows `offsets[g]..offsets[g + 1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Groups {
    pub offsets: Vec<usize>,
}

impl Groups {
    pub fn from_sizes(sizes: impl IntoIterator<Item = usize>) -> Self {
        let mut offsets = vec![0];
        for s in sizes {
            offsets.push(offsets.last().copied().unwrap_or(0) + s);
        }
        Self { offsets }
    }

    pub fn uniform(groups: usize, size: usize) -> Self {
        Self::from_sizes(std::iter::repeat_n(size, groups))
    }

    pub fn count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn rows(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }
}

/// Result of a grouped max pool: pooled rows plus, per output element, the
/// input row that won.
#[derive(Debug, Clone)]
pub struct PoolResult<T> {
    pub output: Mat<T>,
    pub argmax: Vec<usize>,
}

/// Channel-wise max over each group of rows.
pub fn max_pool_groups<T: Real>(x: &Mat<T>, groups: &Groups) -> Result<PoolResult<T>, DiffError> {
    if groups.rows() != x.rows() {
        return Err(DiffError::WidthMismatch {
            expected: groups.rows(),
            got: x.rows(),
        });
    }
    let c = x.cols();
    let mut out = Mat::zeros(groups.count(), c);
    let mut argmax = vec![0; groups.count() * c];
    for g in 0..groups.count() {
        let (lo, hi) = (groups.offsets[g], groups.offsets[g + 1]);
        if lo == hi {
            return Err(DiffError::EmptyGroup(g));
        }
        let best = &mut argmax[g * c..(g + 1) * c];
        best.iter_mut().for_each(|b| *b = lo);
        let mut vals = x.row(lo).to_vec();
        for r in lo + 1..hi {
            for (ch, v) in x.row(r).iter().enumerate() {
                if *v > vals[ch] {
                    vals[ch] = *v;
                    best[ch] = r;
                }
            }
        }
        out.row_mut(g).copy_from_slice(&vals);
    }
    Ok(PoolResult { output: out, argmax })
}

/// Routes each pooled gradient to the row that won the max.
pub fn max_pool_backward<T: Real>(dy: &Mat<T>, argmax: &[usize], input_rows: usize) -> Mat<T> {
    let c = dy.cols();
    let mut dx = Mat::zeros(input_rows, c);
    for g in 0..dy.rows() {
        for ch in 0..c {
            let r = argmax[g * c + ch];
            dx.row_mut(r)[ch] += dy.row(g)[ch];
        }
    }
    dx
}
