use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Relu => z.max(T::zero()),
            Activation::Sigmoid => T::one() / (T::one() + (-z).exp()),
            Activation::Identity => z,
        }
    }

    fn apply_all<T: Scalar>(self, ys: &mut [T]) {
        match self {
            Activation::Relu => ys.iter_mut().for_each(|y| {
                if !(*y > T::zero()) {
                    *y = T::zero()
                }
            }),
            Activation::Sigmoid => ys.iter_mut().for_each(|y| *y = self.apply(*y)),
            Activation::Identity => {}
        }
    }

    /// Multiplies each upstream gradient by the derivative at the output.
    fn chain_all<T: Scalar>(self, deltas: &mut [T], ys: &[T]) {
        match self {
            Activation::Relu => {
                for (d, &y) in deltas.iter_mut().zip(ys) {
                    if !(y > T::zero()) {
                        *d = T::zero();
                    }
                }
            }
            Activation::Sigmoid => {
                for (d, &y) in deltas.iter_mut().zip(ys) {
                    *d *= y * (T::one() - y);
                }
            }
            Activation::Identity => {}
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Sigmoid => 1,
            Activation::Identity => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Sigmoid),
            2 => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// Fully connected layer. `weights` is row-major `inputs x outputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    inputs: usize,
    outputs: usize,
    weights: Vec<T>,
    bias: Vec<T>,
    activation: Activation,
}

impl<T: Scalar> Dense<T> {
    pub fn new(
        inputs: usize,
        outputs: usize,
        weights: Vec<T>,
        bias: Vec<T>,
        activation: Activation,
    ) -> Result<Self> {
        if inputs == 0 || outputs == 0 {
            return Err(Error::invalid("layer dimensions must be positive"));
        }
        if weights.len() != inputs * outputs || bias.len() != outputs {
            return Err(Error::invalid(format!(
                "layer {inputs}x{outputs} got {} weights and {} biases",
                weights.len(),
                bias.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::invalid("layer parameters must be finite"));
        }
        Ok(Self {
            inputs,
            outputs,
            weights,
            bias,
            activation,
        })
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// Batched forward pass of this layer.
    fn forward(&self, x: &[T]) -> Vec<T> {
        #[cfg(target_arch = "x86_64")]
        if fma_available() {
            // SAFETY: the features were detected at runtime.
            return unsafe { self.forward_fma(x) };
        }
        self.forward_impl::<false>(x)
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2,fma")]
    fn forward_fma(&self, x: &[T]) -> Vec<T> {
        self.forward_impl::<true>(x)
    }

    /// Backpropagates `upstream` (gradient w.r.t. this layer's output `y`),
    /// accumulating parameter gradients into `grads` when given. Returns the
    /// input gradient for columns `from..`, or nothing if `from` is `None`.
    fn backward(
        &self,
        x: &[T],
        y: &[T],
        upstream: Vec<T>,
        from: Option<usize>,
        grads: Option<(&mut [T], &mut [T])>,
    ) -> Vec<T> {
        #[cfg(target_arch = "x86_64")]
        if fma_available() {
            // SAFETY: the features were detected at runtime.
            return unsafe { self.backward_fma(x, y, upstream, from, grads) };
        }
        self.backward_impl::<false>(x, y, upstream, from, grads)
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2,fma")]
    fn backward_fma(
        &self,
        x: &[T],
        y: &[T],
        upstream: Vec<T>,
        from: Option<usize>,
        grads: Option<(&mut [T], &mut [T])>,
    ) -> Vec<T> {
        self.backward_impl::<true>(x, y, upstream, from, grads)
    }

    #[inline(always)]
    fn backward_impl<const FUSED: bool>(
        &self,
        x: &[T],
        y: &[T],
        upstream: Vec<T>,
        from: Option<usize>,
        grads: Option<(&mut [T], &mut [T])>,
    ) -> Vec<T> {
        let (n_in, n_out) = (self.inputs, self.outputs);
        let batch = x.len() / n_in;
        let mut delta = upstream;
        self.activation.chain_all(&mut delta, y);
        let mut dx = Vec::new();
        if let Some(from) = from {
            let width = n_in - from;
            dx = vec![T::zero(); batch * width];
            if n_out < NARROW {
                let wt = transpose(&self.weights, n_in, n_out);
                for (dr, dxr) in delta.chunks_exact(n_out).zip(dx.chunks_exact_mut(width)) {
                    for (&d, col) in dr.iter().zip(wt.chunks_exact(n_in)) {
                        if d != T::zero() {
                            axpy::<T, FUSED>(dxr, d, &col[from..]);
                        }
                    }
                }
            } else {
                let rows = &self.weights[from * n_out..];
                for (dr, dxr) in delta.chunks_exact(n_out).zip(dx.chunks_exact_mut(width)) {
                    for (g, wr) in dxr.iter_mut().zip(rows.chunks_exact(n_out)) {
                        *g = dot::<T, FUSED>(wr, dr);
                    }
                }
            }
        }
        if let Some((dw, db)) = grads {
            for dr in delta.chunks_exact(n_out) {
                for (g, &d) in db.iter_mut().zip(dr) {
                    *g += d;
                }
            }
            if n_out < NARROW {
                // accumulate the transposed gradient with long rows
                let mut dwt = vec![T::zero(); n_in * n_out];
                for (xr, dr) in x.chunks_exact(n_in).zip(delta.chunks_exact(n_out)) {
                    for (row, &d) in dwt.chunks_exact_mut(n_in).zip(dr) {
                        if d != T::zero() {
                            axpy::<T, FUSED>(row, d, xr);
                        }
                    }
                }
                for (j, row) in dwt.chunks_exact(n_in).enumerate() {
                    for (i, &g) in row.iter().enumerate() {
                        dw[i * n_out + j] += g;
                    }
                }
            } else {
                for (xr, dr) in x.chunks_exact(n_in).zip(delta.chunks_exact(n_out)) {
                    for (&xi, gr) in xr.iter().zip(dw.chunks_exact_mut(n_out)) {
                        if xi != T::zero() {
                            axpy::<T, FUSED>(gr, xi, dr);
                        }
                    }
                }
            }
        }
        dx
    }

    #[inline(always)]
    fn forward_impl<const FUSED: bool>(&self, x: &[T]) -> Vec<T> {
        let (n_in, n_out) = (self.inputs, self.outputs);
        let batch = x.len() / n_in;
        let mut y = Vec::with_capacity(batch * n_out);
        for _ in 0..batch {
            y.extend_from_slice(&self.bias);
        }
        if n_out < NARROW {
            // narrow outputs: dot products against the transposed weights
            let wt = transpose(&self.weights, n_in, n_out);
            for (xr, yr) in x.chunks_exact(n_in).zip(y.chunks_exact_mut(n_out)) {
                for (yj, col) in yr.iter_mut().zip(wt.chunks_exact(n_in)) {
                    *yj += dot::<T, FUSED>(xr, col);
                }
            }
        } else {
            for (xr, yr) in x.chunks_exact(n_in).zip(y.chunks_exact_mut(n_out)) {
                for (&xi, wr) in xr.iter().zip(self.weights.chunks_exact(n_out)) {
                    // one-hot and ReLU inputs are mostly zero
                    if xi != T::zero() {
                        axpy::<T, FUSED>(yr, xi, wr);
                    }
                }
            }
        }
        self.activation.apply_all(&mut y);
        y
    }
}

/// Parameters of a feed-forward network of dense layers.
#[derive(Debug, Clone, Default)]
pub struct MlpParams<T> {
    layers: Vec<Dense<T>>,
    // Bumped on every in-place update so stale caches are caught.
    version: u64,
}

impl<T: Scalar> PartialEq for MlpParams<T> {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

/// Layer inputs and outputs of one batched forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    batch: usize,
    version: u64,
    // activations[0] is the input, activations[l + 1] the output of layer l.
    activations: Vec<Vec<T>>,
}

impl<T: Scalar> ForwardCache<T> {
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn output(&self) -> &[T] {
        self.activations.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn input(&self) -> &[T] {
        &self.activations[0]
    }
}

/// Gradients with the same layout as [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub weights: Vec<Vec<T>>,
    pub biases: Vec<Vec<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(params: &MlpParams<T>) -> Self {
        Self {
            weights: params
                .layers
                .iter()
                .map(|l| vec![T::zero(); l.weights.len()])
                .collect(),
            biases: params
                .layers
                .iter()
                .map(|l| vec![T::zero(); l.bias.len()])
                .collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| w.iter_mut().chain(b.iter_mut()))
    }

    /// Same order as [`MlpParams::tensors_mut`].
    pub(crate) fn tensors(&self) -> impl Iterator<Item = &[T]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
    }

    pub(crate) fn tensors_mut(&mut self) -> impl Iterator<Item = &mut [T]> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w.as_mut_slice(), b.as_mut_slice()])
    }

    pub fn scale(&mut self, k: T) {
        self.iter_mut().for_each(|g| *g *= k);
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|g| g.is_finite())
    }

    fn matches(&self, params: &MlpParams<T>) -> bool {
        self.weights.len() == params.layers.len()
            && self.biases.len() == params.layers.len()
            && params.layers.iter().enumerate().all(|(l, layer)| {
                self.weights[l].len() == layer.weights.len()
                    && self.biases[l].len() == layer.bias.len()
            })
    }
}

impl<T: Scalar> MlpParams<T> {
    /// Uniform fan-in initialisation: weights in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`,
    /// biases zero.
    pub fn init(sizes: &[usize], activations: &[Activation], seed: u64) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::invalid(
                "a network needs at least an input and an output size",
            ));
        }
        if activations.len() != sizes.len() - 1 {
            return Err(Error::invalid(format!(
                "{} layers need {} activations, got {}",
                sizes.len() - 1,
                sizes.len() - 1,
                activations.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = sizes
            .windows(2)
            .zip(activations)
            .map(|(dims, &activation)| {
                let (inputs, outputs) = (dims[0], dims[1]);
                let bound = 1.0 / (inputs as f64).sqrt();
                let weights = (0..inputs * outputs)
                    .map(|_| T::lit(rng.random_range(-bound..=bound)))
                    .collect();
                Dense::new(
                    inputs,
                    outputs,
                    weights,
                    vec![T::zero(); outputs],
                    activation,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { layers, version: 0 })
    }

    pub fn from_layers(layers: Vec<Dense<T>>) -> Result<Self> {
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::invalid(format!(
                    "layer {l} outputs {} but layer {} takes {}",
                    pair[0].outputs,
                    l + 1,
                    pair[1].inputs
                )));
            }
        }
        Ok(Self { layers, version: 0 })
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    /// Input width; 0 for the empty network.
    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.inputs)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias))
    }

    /// Mutable access to every parameter, weights before biases, layer by layer.
    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.version += 1;
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.inputs == b.inputs && a.outputs == b.outputs && a.activation == b.activation
            })
    }

    /// Forward pass over `batch` row-major inputs.
    pub fn forward_batch(&self, x: &[T], batch: usize) -> Result<ForwardCache<T>> {
        if let Some(first) = self.layers.first() {
            if x.len() != batch * first.inputs {
                return Err(Error::invalid(format!(
                    "input has {} values, expected {batch} x {}",
                    x.len(),
                    first.inputs
                )));
            }
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.to_vec());
        for layer in &self.layers {
            let y = layer.forward(activations.last().expect("input pushed"));
            activations.push(y);
        }
        Ok(ForwardCache {
            batch,
            version: self.version,
            activations,
        })
    }

    /// Single-sample forward pass returning the output and the cache.
    pub fn forward(&self, x: &[T]) -> Result<(Vec<T>, ForwardCache<T>)> {
        let cache = self.forward_batch(x, 1)?;
        Ok((cache.output().to_vec(), cache))
    }

    pub fn predict(&self, x: &[T]) -> Result<Vec<T>> {
        Ok(self.forward(x)?.0)
    }

    /// Backpropagates `d_out` (same layout as the cached output).
    ///
    /// Parameter gradients are summed over the batch; the input gradient is
    /// returned per sample.
    pub fn backward(&self, cache: &ForwardCache<T>, d_out: &[T]) -> Result<(Gradients<T>, Vec<T>)> {
        self.backprop(cache, d_out, true, Some(0))
    }

    /// Parameter gradients only; skips the input gradient of the first layer.
    pub fn param_gradients(&self, cache: &ForwardCache<T>, d_out: &[T]) -> Result<Gradients<T>> {
        Ok(self.backprop(cache, d_out, true, None)?.0)
    }

    /// Input gradient only.
    pub fn input_gradient(&self, cache: &ForwardCache<T>, d_out: &[T]) -> Result<Vec<T>> {
        self.input_gradient_from(cache, d_out, 0)
    }

    /// Input gradient restricted to input columns `from..`, per sample.
    pub fn input_gradient_from(
        &self,
        cache: &ForwardCache<T>,
        d_out: &[T],
        from: usize,
    ) -> Result<Vec<T>> {
        if from > self.input_dim() {
            return Err(Error::invalid(format!(
                "input column {from} beyond {}",
                self.input_dim()
            )));
        }
        Ok(self.backprop(cache, d_out, false, Some(from))?.1)
    }

    fn backprop(
        &self,
        cache: &ForwardCache<T>,
        d_out: &[T],
        want_params: bool,
        input_from: Option<usize>,
    ) -> Result<(Gradients<T>, Vec<T>)> {
        if cache.version != self.version || cache.activations.len() != self.layers.len() + 1 {
            return Err(Error::invalid(
                "forward cache is stale or from another network",
            ));
        }
        let batch = cache.batch;
        for (l, layer) in self.layers.iter().enumerate() {
            if cache.activations[l].len() != batch * layer.inputs
                || cache.activations[l + 1].len() != batch * layer.outputs
            {
                return Err(Error::invalid(format!(
                    "forward cache does not match layer {l}"
                )));
            }
        }
        if d_out.len() != cache.output().len() {
            return Err(Error::invalid(format!(
                "output gradient has {} values, expected {}",
                d_out.len(),
                cache.output().len()
            )));
        }

        let mut grads = Gradients::zeros_like(self);
        let mut upstream = d_out.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let from = if l > 0 { Some(0) } else { input_from };
            upstream = layer.backward(
                &cache.activations[l],
                &cache.activations[l + 1],
                upstream,
                from,
                want_params.then(|| {
                    (
                        grads.weights[l].as_mut_slice(),
                        grads.biases[l].as_mut_slice(),
                    )
                }),
            );
        }
        Ok((grads, upstream))
    }

    /// Weight and bias slices of every layer in order, for in-place updates.
    pub(crate) fn tensors_mut(&mut self) -> impl Iterator<Item = &mut [T]> {
        self.version += 1;
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
    }
}

// Layers with fewer outputs than this use dot-product kernels.
const NARROW: usize = 16;

/// Whether the fused-multiply-add kernels can run on this CPU.
#[cfg(target_arch = "x86_64")]
fn fma_available() -> bool {
    std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma")
}

/// `a * b + c`, rounded once when `FUSED`.
#[inline(always)]
fn madd<T: Scalar, const FUSED: bool>(a: T, b: T, c: T) -> T {
    if FUSED {
        a.mul_add(b, c)
    } else {
        a * b + c
    }
}

#[inline(always)]
fn dot<T: Scalar, const FUSED: bool>(a: &[T], b: &[T]) -> T {
    #[cfg(target_arch = "x86_64")]
    if FUSED {
        if let (Some(a), Some(b)) = (f64_slice(a), f64_slice(b)) {
            // SAFETY: the fused path only runs once avx2 and fma are detected
            return T::lit(unsafe { avx::dot(a, b) });
        }
    }
    const LANES: usize = 8;
    let mut acc = [T::zero(); LANES];
    let (ca, cb) = (a.chunks_exact(LANES), b.chunks_exact(LANES));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        let x: &[T; LANES] = x.try_into().expect("full chunk");
        let y: &[T; LANES] = y.try_into().expect("full chunk");
        for k in 0..LANES {
            acc[k] = madd::<T, FUSED>(x[k], y[k], acc[k]);
        }
    }
    let mut tail = T::zero();
    for (&x, &y) in ra.iter().zip(rb) {
        tail = madd::<T, FUSED>(x, y, tail);
    }
    let half = [
        acc[0] + acc[4],
        acc[1] + acc[5],
        acc[2] + acc[6],
        acc[3] + acc[7],
    ];
    (half[0] + half[1]) + (half[2] + half[3]) + tail
}

#[inline(always)]
fn axpy<T: Scalar, const FUSED: bool>(y: &mut [T], a: T, x: &[T]) {
    #[cfg(target_arch = "x86_64")]
    if FUSED {
        if let (Some(y), Some(x)) = (f64_slice_mut(y), f64_slice(x)) {
            // SAFETY: as in `dot`
            unsafe { avx::axpy(y, a.as_f64(), x) };
            return;
        }
    }
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = madd::<T, FUSED>(a, xi, *yi);
    }
}

#[cfg(target_arch = "x86_64")]
#[inline(always)]
fn f64_slice<T: Scalar>(s: &[T]) -> Option<&[f64]> {
    (std::any::TypeId::of::<T>() == std::any::TypeId::of::<f64>())
        // SAFETY: T is f64
        .then(|| unsafe { std::slice::from_raw_parts(s.as_ptr().cast::<f64>(), s.len()) })
}

#[cfg(target_arch = "x86_64")]
#[inline(always)]
fn f64_slice_mut<T: Scalar>(s: &mut [T]) -> Option<&mut [f64]> {
    (std::any::TypeId::of::<T>() == std::any::TypeId::of::<f64>())
        // SAFETY: T is f64
        .then(|| unsafe { std::slice::from_raw_parts_mut(s.as_mut_ptr().cast::<f64>(), s.len()) })
}

/// 256-bit kernels for `f64`.
#[cfg(target_arch = "x86_64")]
mod avx {
    use std::arch::x86_64::*;

    #[inline]
    #[target_feature(enable = "avx2,fma")]
    pub(super) fn dot(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len().min(b.len());
        let (pa, pb) = (a.as_ptr(), b.as_ptr());
        let (mut lo, mut hi) = (_mm256_setzero_pd(), _mm256_setzero_pd());
        let mut i = 0;
        // SAFETY: every load stays below n
        unsafe {
            while i + 8 <= n {
                lo = _mm256_fmadd_pd(_mm256_loadu_pd(pa.add(i)), _mm256_loadu_pd(pb.add(i)), lo);
                hi = _mm256_fmadd_pd(
                    _mm256_loadu_pd(pa.add(i + 4)),
                    _mm256_loadu_pd(pb.add(i + 4)),
                    hi,
                );
                i += 8;
            }
            if i + 4 <= n {
                lo = _mm256_fmadd_pd(_mm256_loadu_pd(pa.add(i)), _mm256_loadu_pd(pb.add(i)), lo);
                i += 4;
            }
        }
        let s = _mm256_add_pd(lo, hi);
        let p = _mm_add_pd(_mm256_castpd256_pd128(s), _mm256_extractf128_pd::<1>(s));
        let mut total = _mm_cvtsd_f64(p) + _mm_cvtsd_f64(_mm_unpackhi_pd(p, p));
        for j in i..n {
            total = a[j].mul_add(b[j], total);
        }
        total
    }

    #[inline]
    #[target_feature(enable = "avx2,fma")]
    pub(super) fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
        let n = y.len().min(x.len());
        let (py, px) = (y.as_mut_ptr(), x.as_ptr());
        let va = _mm256_set1_pd(a);
        let mut i = 0;
        // SAFETY: every load and store stays below n
        unsafe {
            while i + 4 <= n {
                let v = _mm256_fmadd_pd(va, _mm256_loadu_pd(px.add(i)), _mm256_loadu_pd(py.add(i)));
                _mm256_storeu_pd(py.add(i), v);
                i += 4;
            }
        }
        for j in i..n {
            y[j] = a.mul_add(x[j], y[j]);
        }
    }
}

fn transpose<T: Scalar>(w: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut t = vec![T::zero(); rows * cols];
    for (i, row) in w.chunks_exact(cols).enumerate() {
        for (j, &v) in row.iter().enumerate() {
            t[j * rows + i] = v;
        }
    }
    t
}

/// Blends `main` into `target`: `target = tau * main + (1 - tau) * target`.
pub fn soft_update<T: Scalar>(
    target: &mut MlpParams<T>,
    main: &MlpParams<T>,
    tau: T,
) -> Result<()> {
    if !target.same_shape(main) {
        return Err(Error::invalid(
            "soft update between networks of different shapes",
        ));
    }
    if !(tau > T::zero() && tau <= T::one()) {
        return Err(Error::invalid(format!("tau must lie in (0, 1], got {tau}")));
    }
    let keep = T::one() - tau;
    target.version += 1;
    for (t, m) in target.layers.iter_mut().zip(&main.layers) {
        for (tw, &mw) in t.weights.iter_mut().zip(&m.weights) {
            *tw = tau * mw + keep * *tw;
        }
        for (tb, &mb) in t.bias.iter_mut().zip(&m.bias) {
            *tb = tau * mb + keep * *tb;
        }
    }
    Ok(())
}

pub(crate) fn check_grads_shape<T: Scalar>(
    params: &MlpParams<T>,
    grads: &Gradients<T>,
) -> Result<()> {
    if grads.matches(params) {
        Ok(())
    } else {
        Err(Error::invalid("gradient shapes do not match the network"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(w: Vec<f64>, b: Vec<f64>, inputs: usize, act: Activation) -> MlpParams<f64> {
        let outputs = b.len();
        MlpParams::from_layers(vec![Dense::new(inputs, outputs, w, b, act).unwrap()]).unwrap()
    }

    #[cfg(target_arch = "x86_64")]
    #[test]
    fn fused_kernels_match_plain_loops() {
        for n in [0, 1, 3, 4, 7, 8, 13, 64, 67] {
            let a: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
            let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.91).cos()).collect();
            let plain: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
            let mut y = b.clone();
            axpy::<f64, false>(&mut y, 0.3, &a);
            for fused in [false, true] {
                if fused && !fma_available() {
                    continue;
                }
                let (d, mut z) = if fused {
                    (dot::<f64, true>(&a, &b), b.clone())
                } else {
                    (dot::<f64, false>(&a, &b), b.clone())
                };
                if fused {
                    axpy::<f64, true>(&mut z, 0.3, &a);
                } else {
                    axpy::<f64, false>(&mut z, 0.3, &a);
                }
                assert!((d - plain).abs() < 1e-12, "n {n}: {d} vs {plain}");
                for (p, q) in z.iter().zip(&y) {
                    assert!((p - q).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn init_shapes_and_range() {
        let p = MlpParams::<f64>::init(&[5, 64, 3], &[Activation::Relu, Activation::Sigmoid], 1)
            .unwrap();
        assert_eq!(p.layers().len(), 2);
        assert_eq!((p.layers()[0].inputs(), p.layers()[0].outputs()), (5, 64));
        assert_eq!((p.layers()[1].inputs(), p.layers()[1].outputs()), (64, 3));
        for layer in p.layers() {
            let bound = 1.0 / (layer.inputs() as f64).sqrt();
            assert!(layer.weights().iter().all(|w| w.abs() <= bound));
            assert!(layer.bias().iter().all(|b| *b == 0.0));
        }
        let q = MlpParams::<f64>::init(&[5, 64, 3], &[Activation::Relu, Activation::Sigmoid], 1)
            .unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn init_rejects_bad_sizes() {
        assert!(MlpParams::<f64>::init(&[], &[], 0).is_err());
        assert!(MlpParams::<f64>::init(&[3], &[], 0).is_err());
        assert!(MlpParams::<f64>::init(&[3, 2], &[], 0).is_err());
    }

    #[test]
    fn forward_examples() {
        let p = single(vec![0.0; 6], vec![0.0; 2], 3, Activation::Sigmoid);
        assert_eq!(p.predict(&[1.0, -2.0, 3.0]).unwrap(), vec![0.5, 0.5]);

        let p = single(
            vec![1.0, 0.0, 0.0, 1.0],
            vec![0.0; 2],
            2,
            Activation::Identity,
        );
        assert_eq!(p.predict(&[0.3, -7.0]).unwrap(), vec![0.3, -7.0]);

        let p = single(vec![2.0], vec![1.0], 1, Activation::Relu);
        assert_eq!(p.predict(&[-3.0]).unwrap(), vec![0.0]);

        assert!(p.predict(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn backward_examples() {
        let p = MlpParams::<f64>::init(&[4, 8, 2], &[Activation::Relu, Activation::Sigmoid], 3)
            .unwrap();
        let (_, cache) = p.forward(&[0.1, -0.4, 0.8, 0.3]).unwrap();
        let (g, dx) = p.backward(&cache, &[0.0, 0.0]).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
        assert!(dx.iter().all(|v| *v == 0.0));

        // L = y for a linear layer: dL/dW = outer(x, 1), dL/db = 1, dL/dx = W.
        let p = single(vec![0.5, -1.5, 2.0], vec![0.25], 3, Activation::Identity);
        let x = [2.0, -1.0, 0.5];
        let (_, cache) = p.forward(&x).unwrap();
        let (g, dx) = p.backward(&cache, &[1.0]).unwrap();
        assert_eq!(g.weights[0], x.to_vec());
        assert_eq!(g.biases[0], vec![1.0]);
        assert_eq!(dx, vec![0.5, -1.5, 2.0]);
    }

    #[test]
    fn stale_cache_rejected() {
        let mut p =
            MlpParams::<f64>::init(&[2, 3, 1], &[Activation::Relu, Activation::Identity], 0)
                .unwrap();
        let (_, cache) = p.forward(&[1.0, 1.0]).unwrap();
        let other = MlpParams::<f64>::init(&[3, 1], &[Activation::Identity], 0).unwrap();
        assert!(other.backward(&cache, &[1.0]).is_err());
        p.iter_mut().for_each(|w| *w += 0.0);
        assert!(p.backward(&cache, &[1.0]).is_err());
    }

    #[test]
    fn batch_matches_single() {
        let p = MlpParams::<f64>::init(&[3, 5, 2], &[Activation::Relu, Activation::Sigmoid], 9)
            .unwrap();
        let xs = [0.2, 0.0, -1.0, 1.0, 0.5, 0.25];
        let batch = p.forward_batch(&xs, 2).unwrap();
        let a = p.predict(&xs[..3]).unwrap();
        let b = p.predict(&xs[3..]).unwrap();
        assert_eq!(batch.output(), [a, b].concat().as_slice());
    }

    #[test]
    fn soft_update_examples() {
        let main = single(vec![1.0], vec![1.0], 1, Activation::Identity);
        let mut target = single(vec![0.0], vec![0.0], 1, Activation::Identity);
        soft_update(&mut target, &main, 0.005).unwrap();
        assert_eq!(target.layers()[0].weights(), &[0.005]);

        let mut same = main.clone();
        soft_update(&mut same, &main, 0.3).unwrap();
        assert_eq!(same, main);

        let mut t = single(vec![-4.0], vec![9.0], 1, Activation::Identity);
        soft_update(&mut t, &main, 1.0).unwrap();
        assert_eq!(t, main);

        let wide = single(vec![1.0, 1.0], vec![0.0, 0.0], 1, Activation::Identity);
        assert!(soft_update(&mut t, &wide, 0.5).is_err());
        assert!(soft_update(&mut t, &main, 0.0).is_err());
    }

    #[test]
    fn runs_in_single_precision() {
        let p = MlpParams::<f32>::init(&[3, 4, 2], &[Activation::Relu, Activation::Sigmoid], 2)
            .unwrap();
        let (y, cache) = p.forward(&[0.5, -0.5, 1.0]).unwrap();
        assert!(y.iter().all(|v| *v > 0.0 && *v < 1.0));
        let (g, _) = p.backward(&cache, &[1.0, -1.0]).unwrap();
        assert!(g.is_finite());
    }
}
