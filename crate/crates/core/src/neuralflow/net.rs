use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, Array3, Array4, ArrayView2, ArrayView3, ArrayView4, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::patchdata::{Patch, PATCH_SIZE};
use crate::scalar::Real;

/// Samples per forward pass when predicting; bounds activation memory.
const INFERENCE_CHUNK: usize = 64;

/// Topology of the regressor: `3x3` conv (pad 1) + ReLU + `2x2` max-pool per
/// block, then one ReLU hidden layer and a linear 2-vector output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetShape {
    pub in_channels: usize,
    pub input_size: usize,
    pub conv_channels: Vec<usize>,
    pub hidden: usize,
    pub outputs: usize,
}

impl NetShape {
    /// 64 -> 32 -> 16 -> 8 -> 4 spatially, `d -> 32 -> 64 -> 128 -> 256`
    /// channels, 4096 -> 2048 -> 2.
    pub fn standard(in_channels: usize) -> Self {
        Self {
            in_channels,
            input_size: PATCH_SIZE,
            conv_channels: vec![32, 64, 128, 256],
            hidden: 2048,
            outputs: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let blocks = self.conv_channels.len();
        if self.in_channels == 0
            || blocks == 0
            || self.hidden == 0
            || self.outputs != 2
            || self.conv_channels.contains(&0)
        {
            return Err(Error::InvalidConfig(format!("bad network shape {self:?}")));
        }
        if blocks >= usize::BITS as usize || self.input_size % (1 << blocks) != 0 || self.input_size >> blocks == 0 {
            return Err(Error::InvalidConfig(format!(
                "input size {} does not halve cleanly {blocks} times",
                self.input_size
            )));
        }
        Ok(())
    }

    /// Side length after every pooling step.
    pub fn spatial_plan(&self) -> Vec<usize> {
        (1..=self.conv_channels.len()).map(|i| self.input_size >> i).collect()
    }

    pub fn flat_features(&self) -> usize {
        let side = self.input_size >> self.conv_channels.len();
        side * side * self.conv_channels.last().copied().unwrap_or(0)
    }

    pub fn input_len(&self) -> usize {
        self.in_channels * self.input_size * self.input_size
    }

    pub fn param_count(&self) -> usize {
        let mut cin = self.in_channels;
        let mut n = 0;
        for &cout in &self.conv_channels {
            n += cout * cin * 9 + cout;
            cin = cout;
        }
        n + self.flat_features() * self.hidden + self.hidden + self.hidden * self.outputs + self.outputs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Conv,
    Hidden,
    Output,
}

/// Weights `[out, in]` (conv: `[cout, cin*9]`) and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Real> Layer<T> {
    fn zeros(out: usize, inp: usize) -> Self {
        Self {
            weight: Array2::zeros((out, inp)),
            bias: Array1::zeros(out),
        }
    }

    fn he(out: usize, inp: usize, gain: f64, rng: &mut impl Rng) -> Self {
        let std = (gain / inp as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("positive std");
        Self {
            weight: Array2::from_shape_simple_fn((out, inp), || T::of(normal.sample(rng))),
            bias: Array1::zeros(out),
        }
    }
}

/// The flow regressor `f(P) = ν`. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvNet<T> {
    shape: NetShape,
    pub(crate) conv: Vec<Layer<T>>,
    pub(crate) hidden: Layer<T>,
    pub(crate) output: Layer<T>,
}

/// Activations kept from the forward pass for backpropagation.
pub(crate) struct ForwardCache<T> {
    /// Input to every conv block, `[B, C, S, S]`.
    block_inputs: Vec<Array4<T>>,
    /// Post-ReLU, pre-pool activations.
    relu: Vec<Array4<T>>,
    /// Flat index into the matching `relu` plane chosen by each pool window.
    argmax: Vec<Array4<u32>>,
    flat: Array2<T>,
    hidden: Array2<T>,
}

impl<T: Real> ConvNet<T> {
    pub fn zeros(shape: NetShape) -> Result<Self> {
        shape.validate()?;
        let mut cin = shape.in_channels;
        let mut conv = Vec::new();
        for &cout in &shape.conv_channels {
            conv.push(Layer::zeros(cout, cin * 9));
            cin = cout;
        }
        Ok(Self {
            hidden: Layer::zeros(shape.hidden, shape.flat_features()),
            output: Layer::zeros(shape.outputs, shape.hidden),
            conv,
            shape,
        })
    }

    /// He-normal weights (gain 2 before ReLU, 1 for the linear output), zero biases.
    pub fn init(shape: NetShape, rng: &mut impl Rng) -> Result<Self> {
        shape.validate()?;
        let mut cin = shape.in_channels;
        let mut conv = Vec::new();
        for &cout in &shape.conv_channels {
            conv.push(Layer::he(cout, cin * 9, 2.0, rng));
            cin = cout;
        }
        Ok(Self {
            hidden: Layer::he(shape.hidden, shape.flat_features(), 2.0, rng),
            output: Layer::he(shape.outputs, shape.hidden, 1.0, rng),
            conv,
            shape,
        })
    }

    /// Overwrites the output-layer bias; with zero weights this gives a
    /// constant predictor, handy for debugging pipelines.
    pub fn set_output_bias(&mut self, bias: &[T]) {
        assert_eq!(bias.len(), self.output.bias.len(), "output bias length");
        self.output.bias.iter_mut().zip(bias).for_each(|(b, &v)| *b = v);
    }

    pub fn shape(&self) -> &NetShape {
        &self.shape
    }

    pub fn in_channels(&self) -> usize {
        self.shape.in_channels
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.shape.clone()).expect("shape already validated")
    }

    fn layers(&self) -> impl Iterator<Item = (LayerKind, &Layer<T>)> {
        self.conv
            .iter()
            .map(|l| (LayerKind::Conv, l))
            .chain([(LayerKind::Hidden, &self.hidden), (LayerKind::Output, &self.output)])
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = (LayerKind, &mut Layer<T>)> {
        self.conv
            .iter_mut()
            .map(|l| (LayerKind::Conv, l))
            .chain([(LayerKind::Hidden, &mut self.hidden), (LayerKind::Output, &mut self.output)])
    }

    /// Every parameter tensor in file order (weight then bias, layer by layer).
    pub fn param_slices(&self) -> Vec<(LayerKind, &[T])> {
        self.layers()
            .flat_map(|(k, l)| {
                [
                    (k, l.weight.as_slice().expect("standard layout")),
                    (k, l.bias.as_slice().expect("standard layout")),
                ]
            })
            .collect()
    }

    pub fn param_slices_mut(&mut self) -> Vec<(LayerKind, &mut [T])> {
        self.layers_mut()
            .flat_map(|(k, l)| {
                [
                    (k, l.weight.as_slice_mut().expect("standard layout")),
                    (k, l.bias.as_slice_mut().expect("standard layout")),
                ]
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.param_slices().iter().map(|(_, s)| s.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.param_slices().iter().all(|(_, s)| s.iter().all(|v| v.is_finite()))
    }

    pub fn cast<S: Real>(&self) -> ConvNet<S> {
        let cast = |l: &Layer<T>| Layer {
            weight: l.weight.mapv(|v| S::of(v.f64())),
            bias: l.bias.mapv(|v| S::of(v.f64())),
        };
        ConvNet {
            shape: self.shape.clone(),
            conv: self.conv.iter().map(cast).collect(),
            hidden: cast(&self.hidden),
            output: cast(&self.output),
        }
    }

    /// Predict the local flow vector for one patch.
    pub fn forward(&self, patch: &Patch<T>) -> Result<[T; 2]> {
        Ok(self.forward_patches(std::slice::from_ref(patch))?[0])
    }

    pub fn forward_patches(&self, patches: &[Patch<T>]) -> Result<Vec<[T; 2]>> {
        let n = self.shape.input_len();
        let mut flat = Vec::with_capacity(n * patches.len());
        for p in patches {
            if p.channels() != self.shape.in_channels {
                return Err(Error::ChannelMismatch {
                    expected: self.shape.in_channels,
                    actual: p.channels(),
                });
            }
            if p.size() != self.shape.input_size {
                return Err(Error::LengthMismatch(p.size(), self.shape.input_size));
            }
            flat.extend_from_slice(p.samples());
        }
        self.forward_flat(&flat)
    }

    /// Forward on concatenated channel-planar inputs.
    pub fn forward_flat(&self, inputs: &[T]) -> Result<Vec<[T; 2]>> {
        let batch = self.batch_view(inputs)?;
        let mut out = Vec::with_capacity(batch.len_of(Axis(0)));
        for chunk in batch.axis_chunks_iter(Axis(0), INFERENCE_CHUNK) {
            let y = self.infer(chunk);
            out.extend(y.rows().into_iter().map(|r| [r[0], r[1]]));
        }
        Ok(out)
    }

    fn infer(&self, input: ArrayView4<T>) -> Array2<T> {
        let batch = input.len_of(Axis(0));
        let mut x = input.to_owned();
        for layer in &self.conv {
            x = max_pool(conv_relu_batch(layer, x.view()).view()).0;
        }
        let flat = x
            .into_shape_with_order((batch, self.shape.flat_features()))
            .expect("contiguous pooled features");
        let mut hidden = dense(&self.hidden, flat.view());
        hidden.mapv_inplace(|v| v.max(T::zero()));
        dense(&self.output, hidden.view())
    }

    pub(crate) fn batch_view<'a>(&self, inputs: &'a [T]) -> Result<ArrayView4<'a, T>> {
        let n = self.shape.input_len();
        if inputs.is_empty() || inputs.len() % n != 0 {
            return Err(Error::LengthMismatch(inputs.len(), n));
        }
        let s = self.shape.input_size;
        Ok(ArrayView4::from_shape((inputs.len() / n, self.shape.in_channels, s, s), inputs)
            .expect("length checked"))
    }

    pub(crate) fn forward_cached(&self, input: ArrayView4<T>) -> (Array2<T>, ForwardCache<T>) {
        let batch = input.len_of(Axis(0));
        let mut x = input.to_owned();
        let mut block_inputs = Vec::with_capacity(self.conv.len());
        let mut relu = Vec::with_capacity(self.conv.len());
        let mut argmax = Vec::with_capacity(self.conv.len());
        for layer in &self.conv {
            let a = conv_relu_batch(layer, x.view());
            let (pooled, idx) = max_pool(a.view());
            block_inputs.push(std::mem::replace(&mut x, pooled));
            relu.push(a);
            argmax.push(idx);
        }
        let flat = x
            .into_shape_with_order((batch, self.shape.flat_features()))
            .expect("contiguous pooled features");
        let mut hidden = dense(&self.hidden, flat.view());
        hidden.mapv_inplace(|v| v.max(T::zero()));
        let out = dense(&self.output, hidden.view());
        (
            out,
            ForwardCache {
                block_inputs,
                relu,
                argmax,
                flat,
                hidden,
            },
        )
    }

    /// Conv + ReLU of block `index` on a single `[C, S, S]` input (no pooling).
    pub fn conv_relu(&self, index: usize, input: ArrayView3<T>) -> Array3<T> {
        let (c, h, w) = input.dim();
        let batch = input.into_shape_with_order((1, c, h, w)).expect("contiguous");
        conv_relu_batch(&self.conv[index], batch)
            .index_axis_move(Axis(0), 0)
    }

    /// Mean squared-error loss and its exact gradient over a batch.
    pub fn loss_and_gradient(&self, inputs: &[T], targets: &[[T; 2]]) -> Result<(f64, ConvNet<T>)> {
        let batch = self.batch_view(inputs)?;
        let b = batch.len_of(Axis(0));
        if b != targets.len() {
            return Err(Error::LengthMismatch(b, targets.len()));
        }
        let (out, cache) = self.forward_cached(batch);
        let scale = T::of(2.0 / b as f64);
        let mut loss = 0.0;
        let mut d_out = Array2::<T>::zeros((b, self.shape.outputs));
        for i in 0..b {
            for k in 0..2 {
                let e = out[[i, k]] - targets[i][k];
                loss += e.f64() * e.f64();
                d_out[[i, k]] = e * scale;
            }
        }
        Ok((loss / b as f64, self.backward(&cache, d_out)))
    }

    fn backward(&self, cache: &ForwardCache<T>, d_out: Array2<T>) -> ConvNet<T> {
        let mut grad = self.zeros_like();
        dense_backward_params(&mut grad.output, d_out.view(), cache.hidden.view());
        let mut d_hidden = d_out.dot(&self.output.weight);
        d_hidden.zip_mut_with(&cache.hidden, |d, &h| {
            if h <= T::zero() {
                *d = T::zero();
            }
        });
        dense_backward_params(&mut grad.hidden, d_hidden.view(), cache.flat.view());
        let d_flat = d_hidden.dot(&self.hidden.weight);

        let b = d_flat.nrows();
        let last = cache.relu.len() - 1;
        let side = self.shape.input_size >> self.conv.len();
        let mut d_pooled = d_flat
            .into_shape_with_order((b, self.shape.conv_channels[last], side, side))
            .expect("flat features");
        for i in (0..self.conv.len()).rev() {
            let d_relu = unpool_relu(d_pooled.view(), &cache.argmax[i], cache.relu[i].view());
            d_pooled = conv_backward(
                &self.conv[i],
                &mut grad.conv[i],
                cache.block_inputs[i].view(),
                d_relu,
                i > 0,
            );
        }
        grad
    }

    /// `self += alpha * other` over all parameters.
    pub fn axpy(&mut self, alpha: T, other: &ConvNet<T>) {
        for ((_, a), (_, b)) in self.param_slices_mut().into_iter().zip(other.param_slices()) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x = *x + alpha * y;
            }
        }
    }

    /// Squared L2 norm over all parameters, accumulated in f64.
    pub fn norm_sq(&self) -> f64 {
        self.param_slices()
            .iter()
            .flat_map(|(_, a)| a.iter())
            .map(|x| {
                let v = x.to_f64().unwrap_or(f64::NAN);
                v * v
            })
            .sum()
    }

    pub fn scale(&mut self, alpha: T) {
        for (_, a) in self.param_slices_mut() {
            for x in a {
                *x = *x * alpha;
            }
        }
    }
}

fn dense<T: Real>(layer: &Layer<T>, x: ArrayView2<T>) -> Array2<T> {
    let mut y = Array2::<T>::zeros((x.nrows(), layer.weight.nrows()));
    for mut row in y.rows_mut() {
        row.assign(&layer.bias);
    }
    general_mat_mul(T::one(), &x, &layer.weight.t(), T::one(), &mut y);
    y
}

fn dense_backward_params<T: Real>(grad: &mut Layer<T>, d_y: ArrayView2<T>, x: ArrayView2<T>) {
    general_mat_mul(T::one(), &d_y.t(), &x, T::zero(), &mut grad.weight);
    grad.bias = d_y.sum_axis(Axis(0));
}

/// `[cin*9, h*w]` patch matrix of a `[cin, h, w]` input, zero padded by 1.
fn im2col<T: Real>(x: ArrayView3<T>, col: &mut Array2<T>) {
    let (c, h, w) = x.dim();
    col.fill(T::zero());
    for ci in 0..c {
        let plane = x.index_axis(Axis(0), ci);
        for ky in 0..3 {
            for kx in 0..3 {
                let mut row = col.row_mut(ci * 9 + ky * 3 + kx);
                let row = row.as_slice_mut().expect("standard layout");
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = plane.row(sy as usize);
                    let dst = &mut row[y * w..(y + 1) * w];
                    let (x0, x1) = (if kx == 0 { 1 } else { 0 }, if kx == 2 { w - 1 } else { w });
                    for xx in x0..x1 {
                        dst[xx] = src[xx + kx - 1];
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`].
fn col2im<T: Real>(col: &Array2<T>, out: &mut ndarray::ArrayViewMut3<T>) {
    let (c, h, w) = out.dim();
    out.fill(T::zero());
    for ci in 0..c {
        for ky in 0..3 {
            for kx in 0..3 {
                let row = col.row(ci * 9 + ky * 3 + kx);
                let row = row.as_slice().expect("standard layout");
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &row[y * w..(y + 1) * w];
                    let (x0, x1) = (if kx == 0 { 1 } else { 0 }, if kx == 2 { w - 1 } else { w });
                    for xx in x0..x1 {
                        out[[ci, sy as usize, xx + kx - 1]] = out[[ci, sy as usize, xx + kx - 1]] + src[xx];
                    }
                }
            }
        }
    }
}

fn conv_relu_batch<T: Real>(layer: &Layer<T>, x: ArrayView4<T>) -> Array4<T> {
    let (b, c, h, w) = x.dim();
    let cout = layer.weight.nrows();
    let mut out = Array4::<T>::zeros((b, cout, h, w));
    let mut col = Array2::<T>::zeros((c * 9, h * w));
    for i in 0..b {
        im2col(x.index_axis(Axis(0), i), &mut col);
        let mut y = out
            .index_axis_mut(Axis(0), i)
            .into_shape_with_order((cout, h * w))
            .expect("contiguous");
        for (mut row, &bias) in y.rows_mut().into_iter().zip(layer.bias.iter()) {
            row.fill(bias);
        }
        general_mat_mul(T::one(), &layer.weight, &col, T::one(), &mut y);
        y.mapv_inplace(|v| v.max(T::zero()));
    }
    out
}

/// 2x2 stride-2 max-pool; ties go to the first element in row-major window order.
fn max_pool<T: Real>(a: ArrayView4<T>) -> (Array4<T>, Array4<u32>) {
    let (b, c, h, w) = a.dim();
    let (ho, wo) = (h / 2, w / 2);
    let mut out = Array4::<T>::zeros((b, c, ho, wo));
    let mut idx = Array4::<u32>::zeros((b, c, ho, wo));
    for i in 0..b {
        for ch in 0..c {
            let plane = a.slice(s![i, ch, .., ..]);
            for y in 0..ho {
                for x in 0..wo {
                    let mut best = plane[[2 * y, 2 * x]];
                    let mut at = (2 * y) * w + 2 * x;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let v = plane[[2 * y + dy, 2 * x + dx]];
                        if v > best {
                            best = v;
                            at = (2 * y + dy) * w + 2 * x + dx;
                        }
                    }
                    out[[i, ch, y, x]] = best;
                    idx[[i, ch, y, x]] = at as u32;
                }
            }
        }
    }
    (out, idx)
}

/// Route pooled gradients to their argmax and apply the ReLU mask
/// (zero gradient where the activation is not strictly positive).
fn unpool_relu<T: Real>(d_pooled: ArrayView4<T>, argmax: &Array4<u32>, relu: ArrayView4<T>) -> Array4<T> {
    let (b, c, h, w) = relu.dim();
    let mut d = Array4::<T>::zeros((b, c, h, w));
    for ((i, ch, y, x), &g) in d_pooled.indexed_iter() {
        let at = argmax[[i, ch, y, x]] as usize;
        let (yy, xx) = (at / w, at % w);
        if relu[[i, ch, yy, xx]] > T::zero() {
            d[[i, ch, yy, xx]] = g;
        }
    }
    d
}

/// Accumulate weight/bias gradients; return the input gradient when asked.
fn conv_backward<T: Real>(
    layer: &Layer<T>,
    grad: &mut Layer<T>,
    x: ArrayView4<T>,
    d_y: Array4<T>,
    want_input_grad: bool,
) -> Array4<T> {
    let (b, c, h, w) = x.dim();
    let cout = layer.weight.nrows();
    let mut col = Array2::<T>::zeros((c * 9, h * w));
    let mut d_col = Array2::<T>::zeros((c * 9, h * w));
    let mut d_x = if want_input_grad {
        Array4::<T>::zeros((b, c, h, w))
    } else {
        Array4::<T>::zeros((0, c, h, w))
    };
    for i in 0..b {
        let dy = d_y
            .index_axis(Axis(0), i)
            .into_shape_with_order((cout, h * w))
            .expect("contiguous");
        im2col(x.index_axis(Axis(0), i), &mut col);
        general_mat_mul(T::one(), &dy, &col.t(), T::one(), &mut grad.weight);
        grad.bias.zip_mut_with(&dy.sum_axis(Axis(1)), |g, &d| *g = *g + d);
        if want_input_grad {
            general_mat_mul(T::one(), &layer.weight.t(), &dy, T::zero(), &mut d_col);
            col2im(&d_col, &mut d_x.index_axis_mut(Axis(0), i));
        }
    }
    d_x
}
