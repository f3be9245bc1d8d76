//! Multilayer perceptrons over a flat parameter buffer, with hand-written
//! reverse mode.
//!
//! The first layer accepts its input as a list of column blocks. A block can be
//! a dense matrix, rows of a matrix picked through an index (edge endpoints),
//! or a single row broadcast to every output row (the global latent). Each
//! block is multiplied by its slice of the first weight matrix separately, so
//! per-edge concatenations are never materialized.

use std::cell::RefCell;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::params::ParamBuilder;
use super::ModelError;
use crate::tensor::{matmul_a_bt_into, matmul_acc, matmul_at_b_acc, matmul_into, Tensor2};

const LAYER_NORM_EPS: f64 = 1e-5;
const PAR_ROWS: usize = 2048;
/// Rows per block in untraced inference.
const INFER_ROWS: usize = 2048;

thread_local! {
    /// Per-thread block buffers for untraced inference, kept between calls.
    static SCRATCH: RefCell<(Vec<f64>, Vec<f64>)> = const { RefCell::new((Vec::new(), Vec::new())) };
}

/// Hidden-layer nonlinearity. The last layer is always linear.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
}

/// Offsets of one affine layer inside the parameter buffer. The weight is
/// stored `fan_in x fan_out`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: usize,
    pub bias: usize,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    fn w<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.weight..self.weight + self.fan_in * self.fan_out]
    }

    fn b<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.bias..self.bias + self.fan_out]
    }

    /// Rows `[from, from + width)` of the weight matrix.
    fn w_rows<'a>(&self, p: &'a [f64], from: usize, width: usize) -> &'a [f64] {
        let start = self.weight + from * self.fan_out;
        &p[start..start + width * self.fan_out]
    }
}

/// Layout of an MLP: affine layers with ReLU between them and an optional
/// layer normalization on the output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub activation: Activation,
    /// `(gain, offset)` offsets of the output layer normalization.
    pub layer_norm: Option<(usize, usize)>,
}

/// First-layer input block.
#[derive(Debug, Clone, Copy)]
pub enum Input<'a> {
    /// One row per output row.
    Rows(&'a Tensor2),
    /// Output row `r` reads row `index[r]` of the source.
    Gather(&'a Tensor2, &'a [usize]),
    /// The same row for every output row.
    Broadcast(&'a [f64]),
}

impl Input<'_> {
    fn width(&self) -> usize {
        match self {
            Input::Rows(t) | Input::Gather(t, _) => t.cols,
            Input::Broadcast(v) => v.len(),
        }
    }

    fn rows(&self) -> Option<usize> {
        match self {
            Input::Rows(t) => Some(t.rows),
            Input::Gather(_, idx) => Some(idx.len()),
            Input::Broadcast(_) => None,
        }
    }
}

/// Intermediates kept by a recorded forward pass.
#[derive(Debug, Clone, Default)]
pub struct MlpTrace {
    /// Post-ReLU outputs of every hidden layer.
    hidden: Vec<Tensor2>,
    /// Normalized output and per-row reciprocal std, when layer norm is on.
    normalized: Option<(Tensor2, Vec<f64>)>,
}

impl Mlp {
    /// Allocates `dims.len() - 1` layers in `builder` under `name`.
    pub fn allocate(builder: &mut ParamBuilder, name: &str, dims: &[usize], layer_norm: bool) -> Mlp {
        assert!(dims.len() >= 2, "an MLP needs at least one layer");
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear {
                weight: builder.weight(&format!("{name}.layer{i}.weight"), w[0], w[1]),
                bias: builder.bias(&format!("{name}.layer{i}.bias"), w[1]),
                fan_in: w[0],
                fan_out: w[1],
            })
            .collect();
        let out = *dims.last().unwrap();
        let layer_norm = layer_norm.then(|| {
            (
                builder.constant(&format!("{name}.norm.gain"), out, 1.0),
                builder.constant(&format!("{name}.norm.offset"), out, 0.0),
            )
        });
        Mlp {
            layers,
            activation: Activation::Relu,
            layer_norm,
        }
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().unwrap().fan_out
    }

    /// Forward pass over a single dense input.
    pub fn forward(&self, p: &[f64], x: &Tensor2) -> Result<Tensor2, ModelError> {
        self.forward_blocks(p, &[Input::Rows(x)], None)
    }

    /// Forward pass over column blocks; records intermediates into `trace`
    /// when given.
    pub fn forward_blocks(
        &self,
        p: &[f64],
        inputs: &[Input],
        trace: Option<&mut MlpTrace>,
    ) -> Result<Tensor2, ModelError> {
        let rows = self.check_inputs(inputs)?;
        let Some(trace) = trace else {
            return Ok(self.forward_chunked(p, inputs, rows));
        };
        let first = &self.layers[0];
        let mut act = Tensor2::zeros(rows, first.fan_out);
        let prepared = self.first_layer_prepare(p, inputs);
        self.first_layer_rows(p, inputs, &prepared, 0, &mut act.data);

        let mut hidden = Vec::new();
        for layer in &self.layers[1..] {
            relu_in_place(&mut act);
            let mut next = Tensor2::zeros(rows, layer.fan_out);
            matmul_into(&act.data, layer.w(p), &mut next.data, rows, layer.fan_in, layer.fan_out);
            add_row(&mut next, layer.b(p));
            hidden.push(act);
            act = next;
        }

        let normalized = match self.layer_norm {
            Some((gain, offset)) => {
                let width = act.cols;
                let (xhat, rstd) = layer_norm_forward(&mut act, &p[gain..gain + width], &p[offset..offset + width]);
                Some((xhat, rstd))
            }
            None => None,
        };
        *trace = MlpTrace { hidden, normalized };
        Ok(act)
    }

    fn check_inputs(&self, inputs: &[Input]) -> Result<usize, ModelError> {
        let width: usize = inputs.iter().map(Input::width).sum();
        if width != self.input_width() {
            return Err(ModelError::DimMismatch {
                expected: self.input_width(),
                actual: width,
            });
        }
        let mut rows = None;
        for r in inputs.iter().filter_map(Input::rows) {
            match rows {
                None => rows = Some(r),
                Some(prev) if prev != r => {
                    return Err(ModelError::DimMismatch {
                        expected: prev,
                        actual: r,
                    })
                }
                _ => {}
            }
        }
        Ok(rows.unwrap_or(1))
    }

    /// Per-call parts of the first layer: the projection of every gathered
    /// source, and the bias plus broadcast contributions.
    fn first_layer_prepare(&self, p: &[f64], inputs: &[Input]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let layer = &self.layers[0];
        let h = layer.fan_out;
        let mut shared = layer.b(p).to_vec();
        let mut projections = Vec::new();
        let mut col = 0;
        for input in inputs {
            let width = input.width();
            let w = layer.w_rows(p, col, width);
            match input {
                Input::Rows(_) => {}
                Input::Gather(src, _) => {
                    let mut projected = vec![0.0; src.rows * h];
                    matmul_into(&src.data, w, &mut projected, src.rows, width, h);
                    projections.push(projected);
                }
                Input::Broadcast(v) => {
                    for (i, &x) in v.iter().enumerate() {
                        for (s, &wij) in shared.iter_mut().zip(&w[i * h..(i + 1) * h]) {
                            *s += x * wij;
                        }
                    }
                }
            }
            col += width;
        }
        (projections, shared)
    }

    /// First-layer output for rows `[r0, r0 + out.len() / h)`; `out` must be zero.
    fn first_layer_rows(
        &self,
        p: &[f64],
        inputs: &[Input],
        prepared: &(Vec<Vec<f64>>, Vec<f64>),
        r0: usize,
        out: &mut [f64],
    ) {
        let layer = &self.layers[0];
        let h = layer.fan_out;
        let m = out.len() / h.max(1);
        let mut col = 0;
        let mut projections = prepared.0.iter();
        for input in inputs {
            let width = input.width();
            match input {
                Input::Rows(x) => {
                    let w = layer.w_rows(p, col, width);
                    matmul_acc(&x.data[r0 * width..(r0 + m) * width], w, out, m, width, h);
                }
                Input::Gather(_, index) => {
                    let projected = projections.next().expect("one projection per gather");
                    for_rows(out, h, |r, row| {
                        let i = index[r0 + r];
                        row.iter_mut()
                            .zip(&projected[i * h..(i + 1) * h])
                            .for_each(|(o, x)| *o += x);
                    });
                }
                Input::Broadcast(_) => {}
            }
            col += width;
        }
        let shared = &prepared.1;
        for_rows(out, h, |_, row| row.iter_mut().zip(shared).for_each(|(x, b)| *x += b));
    }

    /// Untraced forward in blocks of [`INFER_ROWS`] rows, reusing small
    /// buffers. Produces the same values as the traced path.
    fn forward_chunked(&self, p: &[f64], inputs: &[Input], rows: usize) -> Tensor2 {
        let out_width = self.output_width();
        let mut out = Tensor2::zeros(rows, out_width);
        if rows == 0 || out_width == 0 {
            return out;
        }
        let prepared = self.first_layer_prepare(p, inputs);
        let widest = self.layers.iter().map(|l| l.fan_out).max().unwrap_or(0);
        let len = INFER_ROWS.min(rows) * widest;
        // Blocks own disjoint output rows, so the result does not depend on
        // how they are scheduled.
        out.data
            .par_chunks_mut(INFER_ROWS * out_width)
            .enumerate()
            .for_each(|(b, dst)| {
                // Taken out of the slot so nested work on this thread finds it empty.
                let (mut cur, mut next) = SCRATCH.with(|s| std::mem::take(&mut *s.borrow_mut()));
                for buf in [&mut cur, &mut next] {
                    if buf.len() < len {
                        buf.resize(len, 0.0);
                    }
                }
                let (cur, next) = (&mut cur, &mut next);
                let r0 = b * INFER_ROWS;
                let m = dst.len() / out_width;
                let h = self.layers[0].fan_out;
                let a = &mut cur[..m * h];
                a.fill(0.0);
                self.first_layer_rows(p, inputs, &prepared, r0, a);
                let mut width = h;
                for layer in &self.layers[1..] {
                    let a = &mut cur[..m * width];
                    for x in a.iter_mut() {
                        if *x < 0.0 {
                            *x = 0.0;
                        }
                    }
                    let b = &mut next[..m * layer.fan_out];
                    matmul_into(a, layer.w(p), b, m, layer.fan_in, layer.fan_out);
                    let bias = layer.b(p);
                    for_rows(b, layer.fan_out, |_, row| {
                        row.iter_mut().zip(bias).for_each(|(x, c)| *x += c)
                    });
                    std::mem::swap(cur, next);
                    width = layer.fan_out;
                }
                let block = &mut cur[..m * width];
                if let Some((gain, offset)) = self.layer_norm {
                    let (g, o) = (&p[gain..gain + width], &p[offset..offset + width]);
                    for row in block.chunks_exact_mut(width.max(1)) {
                        normalize_row(row, g, o, None);
                    }
                }
                dst.copy_from_slice(block);
                SCRATCH.with(|s| *s.borrow_mut() = (std::mem::take(cur), std::mem::take(next)));
            });
        out
    }

    /// Reverse pass. Accumulates parameter gradients into `grads` and returns
    /// the gradient of each input block (`Rows`: rows x w, `Gather`: source
    /// rows x w, `Broadcast`: 1 x w). With `want_inputs == false` the returned
    /// list is empty.
    pub fn backward(
        &self,
        p: &[f64],
        inputs: &[Input],
        trace: &MlpTrace,
        upstream: &Tensor2,
        grads: &mut [f64],
        want_inputs: bool,
    ) -> Vec<Tensor2> {
        let rows = upstream.rows;
        let mut delta = upstream.clone();

        if let Some((gain, offset)) = self.layer_norm {
            let (xhat, rstd) = trace.normalized.as_ref().expect("trace lacks layer norm");
            let width = delta.cols;
            layer_norm_backward(&mut delta, xhat, rstd, &p[gain..gain + width], grads, gain, offset);
        }

        for (l, layer) in self.layers.iter().enumerate().skip(1).rev() {
            let input = &trace.hidden[l - 1];
            accumulate_linear_grads(layer, &input.data, &delta, rows, grads);
            let mut prev = Tensor2::zeros(rows, layer.fan_in);
            matmul_a_bt_into(
                &delta.data,
                layer.w(p),
                &mut prev.data,
                rows,
                layer.fan_out,
                layer.fan_in,
            );
            for (d, a) in prev.data.iter_mut().zip(&input.data) {
                if *a <= 0.0 {
                    *d = 0.0;
                }
            }
            delta = prev;
        }

        let layer = &self.layers[0];
        let h = layer.fan_out;
        let bias_grad = column_sums(&delta);
        grads[layer.bias..layer.bias + h]
            .iter_mut()
            .zip(&bias_grad)
            .for_each(|(g, d)| *g += d);

        let mut input_grads = Vec::new();
        let mut col = 0;
        for input in inputs {
            let width = input.width();
            let w = layer.w_rows(p, col, width);
            let gw_start = layer.weight + col * h;
            let gw = &mut grads[gw_start..gw_start + width * h];
            match input {
                Input::Rows(x) => {
                    matmul_at_b_acc(&x.data, &delta.data, gw, rows, width, h);
                    if want_inputs {
                        let mut dx = Tensor2::zeros(rows, width);
                        matmul_a_bt_into(&delta.data, w, &mut dx.data, rows, h, width);
                        input_grads.push(dx);
                    }
                }
                Input::Gather(src, index) => {
                    let mut scattered = Tensor2::zeros(src.rows, h);
                    for (r, &i) in index.iter().enumerate() {
                        let from = delta.row(r);
                        scattered.row_mut(i).iter_mut().zip(from).for_each(|(s, d)| *s += d);
                    }
                    matmul_at_b_acc(&src.data, &scattered.data, gw, src.rows, width, h);
                    if want_inputs {
                        let mut dsrc = Tensor2::zeros(src.rows, width);
                        matmul_a_bt_into(&scattered.data, w, &mut dsrc.data, src.rows, h, width);
                        input_grads.push(dsrc);
                    }
                }
                Input::Broadcast(v) => {
                    for (i, &x) in v.iter().enumerate() {
                        for (g, d) in gw[i * h..(i + 1) * h].iter_mut().zip(&bias_grad) {
                            *g += x * d;
                        }
                    }
                    if want_inputs {
                        let mut dv = Tensor2::zeros(1, width);
                        matmul_a_bt_into(&bias_grad, w, &mut dv.data, 1, h, width);
                        input_grads.push(dv);
                    }
                }
            }
            col += width;
        }
        input_grads
    }
}

fn accumulate_linear_grads(layer: &Linear, input: &[f64], delta: &Tensor2, rows: usize, grads: &mut [f64]) {
    let gw = &mut grads[layer.weight..layer.weight + layer.fan_in * layer.fan_out];
    matmul_at_b_acc(input, &delta.data, gw, rows, layer.fan_in, layer.fan_out);
    let gb = &mut grads[layer.bias..layer.bias + layer.fan_out];
    for r in 0..rows {
        gb.iter_mut().zip(delta.row(r)).for_each(|(g, d)| *g += d);
    }
}

fn column_sums(t: &Tensor2) -> Vec<f64> {
    let mut out = vec![0.0; t.cols];
    for r in 0..t.rows {
        out.iter_mut().zip(t.row(r)).for_each(|(o, x)| *o += x);
    }
    out
}

/// Applies `f(row_index, row)` to every row, in parallel over fixed-size
/// chunks for large matrices.
fn for_rows(data: &mut [f64], cols: usize, f: impl Fn(usize, &mut [f64]) + Sync) {
    if cols == 0 {
        return;
    }
    let rows = data.len() / cols;
    if rows <= PAR_ROWS {
        for (r, row) in data.chunks_exact_mut(cols).enumerate() {
            f(r, row);
        }
    } else {
        data.par_chunks_mut(PAR_ROWS * cols).enumerate().for_each(|(c, chunk)| {
            for (i, row) in chunk.chunks_exact_mut(cols).enumerate() {
                f(c * PAR_ROWS + i, row);
            }
        });
    }
}

fn add_row(t: &mut Tensor2, row: &[f64]) {
    for_rows(&mut t.data, t.cols, |_, r| {
        r.iter_mut().zip(row).for_each(|(x, b)| *x += b);
    });
}

fn relu_in_place(t: &mut Tensor2) {
    for x in t.data.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Normalizes every row of `t` in place and applies gain/offset. Returns the
/// normalized rows before the affine part and the per-row reciprocal std.
/// Layer-normalizes one row in place; returns the reciprocal std and, when
/// asked, stores the normalized values before gain and offset.
#[inline]
fn normalize_row(row: &mut [f64], gain: &[f64], offset: &[f64], mut xhat: Option<&mut [f64]>) -> f64 {
    let cols = row.len() as f64;
    let mean = row.iter().sum::<f64>() / cols;
    let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / cols;
    let r = 1.0 / (var + LAYER_NORM_EPS).sqrt();
    for j in 0..row.len() {
        let x = (row[j] - mean) * r;
        if let Some(xh) = xhat.as_deref_mut() {
            xh[j] = x;
        }
        row[j] = gain[j] * x + offset[j];
    }
    r
}

fn layer_norm_forward(t: &mut Tensor2, gain: &[f64], offset: &[f64]) -> (Tensor2, Vec<f64>) {
    let cols = t.cols;
    let mut xhat = Tensor2::zeros(t.rows, cols);
    let mut rstd = vec![0.0; t.rows];
    if cols == 0 {
        return (xhat, rstd);
    }
    let chunk = PAR_ROWS;
    t.data
        .par_chunks_mut(chunk * cols)
        .zip(xhat.data.par_chunks_mut(chunk * cols))
        .zip(rstd.par_chunks_mut(chunk))
        .for_each(|((rows, xh), rs)| {
            for ((row, xrow), r) in rows.chunks_exact_mut(cols).zip(xh.chunks_exact_mut(cols)).zip(rs) {
                *r = normalize_row(row, gain, offset, Some(xrow));
            }
        });
    (xhat, rstd)
}

fn layer_norm_backward(
    delta: &mut Tensor2,
    xhat: &Tensor2,
    rstd: &[f64],
    gain: &[f64],
    grads: &mut [f64],
    gain_at: usize,
    offset_at: usize,
) {
    let cols = delta.cols;
    for r in 0..delta.rows {
        let dy = delta.row(r);
        let xh = xhat.row(r);
        for j in 0..cols {
            grads[gain_at + j] += dy[j] * xh[j];
            grads[offset_at + j] += dy[j];
        }
    }
    for r in 0..delta.rows {
        let xh = xhat.row(r);
        let dy = delta.row_mut(r);
        let mut mean_g = 0.0;
        let mut mean_gx = 0.0;
        for j in 0..cols {
            let g = dy[j] * gain[j];
            mean_g += g;
            mean_gx += g * xh[j];
        }
        mean_g /= cols as f64;
        mean_gx /= cols as f64;
        for j in 0..cols {
            let g = dy[j] * gain[j];
            dy[j] = rstd[r] * (g - mean_g - xh[j] * mean_gx);
        }
    }
}

/// Owned MLP with its own parameter buffer, for standalone use.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub mlp: Mlp,
    pub values: Vec<f64>,
}

impl MlpParams {
    /// Zero-initialized MLP with the given layer widths.
    pub fn zeros(dims: &[usize], layer_norm: bool) -> Self {
        let mut builder = ParamBuilder::default();
        let mlp = Mlp::allocate(&mut builder, "mlp", dims, layer_norm);
        let mut values = builder.initial_values();
        for layer in &mlp.layers {
            values[layer.weight..layer.weight + layer.fan_in * layer.fan_out].fill(0.0);
        }
        MlpParams { mlp, values }
    }

    /// Uniform ±√(1/fan_in) weights from a seeded generator.
    pub fn random(dims: &[usize], layer_norm: bool, seed: u64) -> Self {
        let mut builder = ParamBuilder::default();
        let mlp = Mlp::allocate(&mut builder, "mlp", dims, layer_norm);
        let values = builder.random_values(seed);
        MlpParams { mlp, values }
    }

    pub fn weight_mut(&mut self, layer: usize) -> &mut [f64] {
        let l = &self.mlp.layers[layer];
        &mut self.values[l.weight..l.weight + l.fan_in * l.fan_out]
    }

    pub fn bias_mut(&mut self, layer: usize) -> &mut [f64] {
        let l = &self.mlp.layers[layer];
        &mut self.values[l.bias..l.bias + l.fan_out]
    }
}

/// Standard affine + ReLU stack, identity on the last layer, optional layer norm.
pub fn mlp_forward(p: &MlpParams, x: &Tensor2) -> Result<Tensor2, ModelError> {
    p.mlp.forward(&p.values, x)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Scalar re-implementation of an MLP forward pass.
    fn scalar_forward(p: &MlpParams, x: &Tensor2) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        for r in 0..x.rows {
            let mut a: Vec<f64> = x.row(r).to_vec();
            for (li, l) in p.mlp.layers.iter().enumerate() {
                let mut z = vec![0.0; l.fan_out];
                for j in 0..l.fan_out {
                    let mut s = p.values[l.bias + j];
                    for i in 0..l.fan_in {
                        s += a[i] * p.values[l.weight + i * l.fan_out + j];
                    }
                    z[j] = s;
                }
                if li + 1 < p.mlp.layers.len() {
                    z.iter_mut().for_each(|v| *v = v.max(0.0));
                }
                a = z;
            }
            if let Some((g, o)) = p.mlp.layer_norm {
                let m = a.iter().sum::<f64>() / a.len() as f64;
                let v = a.iter().map(|x| (x - m).powi(2)).sum::<f64>() / a.len() as f64;
                let s = (v + 1e-5).sqrt();
                a = a
                    .iter()
                    .enumerate()
                    .map(|(j, x)| p.values[g + j] * (x - m) / s + p.values[o + j])
                    .collect();
            }
            out.push(a);
        }
        out
    }

    fn random_input(rows: usize, cols: usize, seed: u64) -> Tensor2 {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Tensor2::from_vec(
            rows,
            cols,
            (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
    }

    #[test]
    fn zero_mlp_outputs_zero() {
        let p = MlpParams::zeros(&[5, 8, 3], false);
        let y = mlp_forward(&p, &random_input(4, 5, 1)).unwrap();
        assert_eq!(y.shape(), (4, 3));
        assert!(y.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_layer_passes_input() {
        let mut p = MlpParams::zeros(&[3, 3], false);
        for i in 0..3 {
            p.weight_mut(0)[i * 3 + i] = 1.0;
        }
        let x = random_input(6, 3, 2);
        assert_eq!(mlp_forward(&p, &x).unwrap(), x);
    }

    #[test]
    fn matches_scalar_oracle() {
        for ln in [false, true] {
            let mut p = MlpParams::random(&[6, 16, 16, 4], ln, 7);
            p.bias_mut(1)
                .iter_mut()
                .enumerate()
                .for_each(|(i, b)| *b = 0.01 * i as f64);
            let x = random_input(9, 6, 3);
            let y = mlp_forward(&p, &x).unwrap();
            let want = scalar_forward(&p, &x);
            for r in 0..9 {
                for (a, b) in y.row(r).iter().zip(&want[r]) {
                    assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn dim_mismatch() {
        let p = MlpParams::zeros(&[5, 3], false);
        assert!(matches!(
            mlp_forward(&p, &Tensor2::zeros(2, 4)),
            Err(ModelError::DimMismatch { .. })
        ));
    }

    #[test]
    fn blocks_equal_concatenation() {
        let p = MlpParams::random(&[7, 8, 5], true, 11);
        let a = random_input(4, 3, 1);
        let src = random_input(3, 2, 2);
        let idx = [2usize, 0, 1, 2];
        let g = [0.3, -0.7];
        let mut cat = Tensor2::zeros(4, 7);
        for r in 0..4 {
            let row = cat.row_mut(r);
            row[..3].copy_from_slice(a.row(r));
            row[3..5].copy_from_slice(src.row(idx[r]));
            row[5..].copy_from_slice(&g);
        }
        let blocks = p
            .mlp
            .forward_blocks(
                &p.values,
                &[Input::Rows(&a), Input::Gather(&src, &idx), Input::Broadcast(&g)],
                None,
            )
            .unwrap();
        let dense = mlp_forward(&p, &cat).unwrap();
        for (x, y) in blocks.data.iter().zip(&dense.data) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn blocked_inference_matches_traced_forward_bitwise() {
        let p = MlpParams::random(&[9, 16, 16, 6], true, 5);
        let rows = 2 * INFER_ROWS + 37;
        let a = random_input(rows, 4, 3);
        let src = random_input(50, 3, 4);
        let idx: Vec<usize> = (0..rows).map(|r| (r * 7) % 50).collect();
        let g = [0.1, -0.4];
        let inputs = [Input::Rows(&a), Input::Gather(&src, &idx), Input::Broadcast(&g)];
        let plain = p.mlp.forward_blocks(&p.values, &inputs, None).unwrap();
        let mut trace = MlpTrace::default();
        let traced = p.mlp.forward_blocks(&p.values, &inputs, Some(&mut trace)).unwrap();
        assert_eq!(plain.shape(), (rows, 6));
        let bits = |t: &Tensor2| t.data.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&plain), bits(&traced));
    }

    #[test]
    fn single_linear_quadratic_gradient() {
        // loss = (w x - y)^2, dloss/dw = 2 x (w x - y)
        let mut p = MlpParams::zeros(&[1, 1], false);
        p.weight_mut(0)[0] = 1.5;
        let (x, y) = (2.0, 1.0);
        let input = Tensor2::from_vec(1, 1, vec![x]);
        let mut trace = MlpTrace::default();
        let out = p
            .mlp
            .forward_blocks(&p.values, &[Input::Rows(&input)], Some(&mut trace))
            .unwrap();
        let upstream = Tensor2::from_vec(1, 1, vec![2.0 * (out.data[0] - y)]);
        let mut grads = vec![0.0; p.values.len()];
        p.mlp
            .backward(&p.values, &[Input::Rows(&input)], &trace, &upstream, &mut grads, false);
        let w = p.mlp.layers[0].weight;
        assert_eq!(grads[w], 2.0 * x * (1.5 * x - y));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let p = MlpParams::random(&[4, 8, 3], true, 5);
        let x = random_input(5, 4, 9);
        let mut trace = MlpTrace::default();
        p.mlp
            .forward_blocks(&p.values, &[Input::Rows(&x)], Some(&mut trace))
            .unwrap();
        let mut grads = vec![0.0; p.values.len()];
        let dx = p.mlp.backward(
            &p.values,
            &[Input::Rows(&x)],
            &trace,
            &Tensor2::zeros(5, 3),
            &mut grads,
            true,
        );
        assert!(grads.iter().all(|&g| g == 0.0));
        assert!(dx[0].data.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn block_gradients_match_finite_differences() {
        let p = MlpParams::random(&[5, 6, 3], true, 21);
        let a = random_input(4, 2, 1);
        let src = random_input(3, 2, 2);
        let idx = [1usize, 1, 0, 2];
        let g = vec![0.4];
        let weights = random_input(4, 3, 3);
        let eval = |values: &[f64], a: &Tensor2, src: &Tensor2, g: &[f64]| -> f64 {
            let y = p
                .mlp
                .forward_blocks(
                    values,
                    &[Input::Rows(a), Input::Gather(src, &idx), Input::Broadcast(g)],
                    None,
                )
                .unwrap();
            y.data.iter().zip(&weights.data).map(|(y, w)| y * w).sum()
        };
        let mut trace = MlpTrace::default();
        let inputs = [Input::Rows(&a), Input::Gather(&src, &idx), Input::Broadcast(&g)];
        p.mlp.forward_blocks(&p.values, &inputs, Some(&mut trace)).unwrap();
        let mut grads = vec![0.0; p.values.len()];
        let dins = p.mlp.backward(&p.values, &inputs, &trace, &weights, &mut grads, true);

        let h = 1e-6;
        for i in 0..p.values.len() {
            let mut plus = p.values.clone();
            plus[i] += h;
            let mut minus = p.values.clone();
            minus[i] -= h;
            let fd = (eval(&plus, &a, &src, &g) - eval(&minus, &a, &src, &g)) / (2.0 * h);
            assert!(
                (fd - grads[i]).abs() < 1e-6 * (1.0 + fd.abs()),
                "param {i}: {fd} vs {}",
                grads[i]
            );
        }
        for k in 0..src.data.len() {
            let mut s2 = src.clone();
            s2.data[k] += h;
            let mut s3 = src.clone();
            s3.data[k] -= h;
            let fd = (eval(&p.values, &a, &s2, &g) - eval(&p.values, &a, &s3, &g)) / (2.0 * h);
            assert!((fd - dins[1].data[k]).abs() < 1e-6 * (1.0 + fd.abs()));
        }
        let mut g2 = g.clone();
        g2[0] += h;
        let mut g3 = g.clone();
        g3[0] -= h;
        let fd = (eval(&p.values, &a, &src, &g2) - eval(&p.values, &a, &src, &g3)) / (2.0 * h);
        assert!((fd - dins[2].data[0]).abs() < 1e-6 * (1.0 + fd.abs()));
    }
}
