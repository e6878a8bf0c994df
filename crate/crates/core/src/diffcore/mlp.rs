use rand::Rng;
use serde::{Deserialize, Serialize};

use super::array::gemm;
use super::{Gradients, NumArray, ParamSet};
use crate::error::{ensure_finite, ReqError, Result};
use crate::par;

/// Rows per work item when a batch is split for parallel evaluation.
const CHUNK_ROWS: usize = 64;

/// Variance floor of the per-row normalization.
pub const LAYER_NORM_VAR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// Exponential linear unit with alpha = 1.
    Elu,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Elu => elu(x),
        }
    }

    #[inline]
    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Elu => {
                if x > 0.0 {
                    1.0
                } else {
                    x.exp()
                }
            }
        }
    }
}

#[inline]
pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

/// Feedforward network layout: `input -> hidden... -> output`, activation
/// after every hidden layer, linear output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
    pub activation: Activation,
    /// Normalize the first hidden layer's pre-activations (with learned
    /// scale and shift).
    pub normalize_first: bool,
}

impl MlpSpec {
    pub fn new(input: usize, hidden: &[usize], output: usize) -> Self {
        MlpSpec {
            input,
            hidden: hidden.to_vec(),
            output,
            activation: Activation::Elu,
            normalize_first: true,
        }
    }

    pub fn without_layer_norm(mut self) -> Self {
        self.normalize_first = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() {
            return Err(ReqError::Config(
                "an MLP needs at least one hidden layer".into(),
            ));
        }
        if self.input == 0 || self.output == 0 || self.hidden.contains(&0) {
            return Err(ReqError::Config("MLP widths must be positive".into()));
        }
        if self.normalize_first && self.hidden[0] < 2 {
            return Err(ReqError::Config(
                "a normalized layer needs width >= 2".into(),
            ));
        }
        Ok(())
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.input);
        w.extend_from_slice(&self.hidden);
        w.push(self.output);
        w
    }

    fn n_layers(&self) -> usize {
        self.hidden.len() + 1
    }
}

/// Normalizes each row to zero mean and unit variance. Rows with variance
/// below [`LAYER_NORM_VAR_FLOOR`] are divided by the floor's square root.
pub fn layer_norm(input: &NumArray) -> Result<NumArray> {
    let d = input.last_dim();
    if d < 2 {
        return Err(ReqError::shape(
            "layer_norm",
            "last dimension (minimum)",
            2,
            d,
        ));
    }
    let mut out = input.clone();
    for r in 0..out.rows() {
        normalize_row(out.row_mut(r));
    }
    Ok(out)
}

/// Normalizes in place. Returns `1 / std` and whether the variance floor
/// was hit.
fn normalize_row(row: &mut [f64]) -> (f64, bool) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let floored = var < LAYER_NORM_VAR_FLOOR;
    let inv_std = 1.0 / var.max(LAYER_NORM_VAR_FLOOR).sqrt();
    for x in row.iter_mut() {
        *x = (*x - mean) * inv_std;
    }
    (inv_std, floored)
}

/// A single affine layer `y = x W + b` with `W` stored `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: NumArray,
    pub bias: NumArray,
}

impl Dense {
    pub fn new(weight: NumArray, bias: NumArray) -> Result<Self> {
        if weight.shape().len() != 2 || bias.len() != weight.shape()[1] {
            return Err(ReqError::shape(
                "Dense::new",
                "bias length",
                weight.last_dim(),
                bias.len(),
            ));
        }
        Ok(Dense { weight, bias })
    }

    pub fn forward(&self, input: &NumArray) -> Result<NumArray> {
        let (fan_in, fan_out) = (self.weight.shape()[0], self.weight.shape()[1]);
        if input.last_dim() != fan_in {
            return Err(ReqError::shape(
                "Dense::forward",
                "input width",
                fan_in,
                input.last_dim(),
            ));
        }
        let rows = input.rows();
        let mut out = vec![0.0; rows * fan_out];
        affine(
            input.values(),
            rows,
            fan_in,
            self.weight.values(),
            self.bias.values(),
            &mut out,
        );
        NumArray::matrix(rows, fan_out, out)
    }

    /// Returns `(dW, db)` for the given upstream gradient.
    pub fn backward(&self, input: &NumArray, upstream: &NumArray) -> Result<(NumArray, NumArray)> {
        let (fan_in, fan_out) = (self.weight.shape()[0], self.weight.shape()[1]);
        let rows = input.rows();
        if upstream.rows() != rows || upstream.last_dim() != fan_out {
            return Err(ReqError::shape(
                "Dense::backward",
                "upstream width",
                fan_out,
                upstream.last_dim(),
            ));
        }
        ensure_finite("Dense::backward upstream", upstream.values())?;
        let mut dw = vec![0.0; fan_in * fan_out];
        gemm(
            fan_in,
            rows,
            fan_out,
            input.values(),
            true,
            upstream.values(),
            false,
            &mut dw,
            false,
        );
        let mut db = vec![0.0; fan_out];
        column_sums(upstream.values(), fan_out, &mut db);
        Ok((NumArray::matrix(fan_in, fan_out, dw)?, NumArray::vector(db)))
    }
}

fn affine(x: &[f64], rows: usize, fan_in: usize, w: &[f64], b: &[f64], out: &mut [f64]) {
    let fan_out = b.len();
    for r in 0..rows {
        out[r * fan_out..(r + 1) * fan_out].copy_from_slice(b);
    }
    gemm(rows, fan_in, fan_out, x, false, w, false, out, true);
}

fn column_sums(x: &[f64], cols: usize, acc: &mut [f64]) {
    for row in x.chunks_exact(cols) {
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerIndex {
    weight: usize,
    bias: usize,
    norm: Option<(usize, usize)>,
}

/// A multilayer perceptron: layout plus parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    spec: MlpSpec,
    params: ParamSet,
}

#[derive(Debug, Default)]
struct ChunkCache {
    rows: usize,
    /// Input to each layer.
    inputs: Vec<Vec<f64>>,
    /// Post-normalization pre-activations of each hidden layer.
    pre: Vec<Vec<f64>>,
    /// Normalized values and per-row `(1 / std, floored)` of the first layer.
    norm: Option<(Vec<f64>, Vec<(f64, bool)>)>,
}

/// Intermediate values from [`Mlp::forward_cached`], consumed by
/// [`Mlp::backward`].
#[derive(Debug)]
pub struct ForwardCache {
    rows: usize,
    chunks: Vec<ChunkCache>,
}

impl ForwardCache {
    pub fn rows(&self) -> usize {
        self.rows
    }
}

impl Mlp {
    /// All parameters zero, except normalization scales which start at one.
    pub fn zeroed(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let widths = spec.widths();
        let mut named = Vec::new();
        for l in 0..spec.n_layers() {
            named.push((
                format!("layer{l}.weight"),
                NumArray::zeros(&[widths[l], widths[l + 1]]),
            ));
            named.push((format!("layer{l}.bias"), NumArray::zeros(&[widths[l + 1]])));
            if l == 0 && spec.normalize_first {
                named.push((
                    "layer0.norm_scale".into(),
                    NumArray::filled(&[widths[1]], 1.0),
                ));
                named.push(("layer0.norm_shift".into(), NumArray::zeros(&[widths[1]])));
            }
        }
        Ok(Mlp {
            spec,
            params: ParamSet::new(named),
        })
    }

    /// Glorot-uniform weights, zero biases; the output layer is scaled by
    /// `output_scale`.
    pub fn init<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R, output_scale: f64) -> Result<Self> {
        let mut mlp = Self::zeroed(spec)?;
        let widths = mlp.spec.widths();
        let n_layers = mlp.spec.n_layers();
        for l in 0..n_layers {
            let idx = mlp.layer_index(l);
            let limit = (6.0 / (widths[l] + widths[l + 1]) as f64).sqrt();
            let scale = if l + 1 == n_layers { output_scale } else { 1.0 };
            for w in mlp.params.get_mut(idx.weight).values_mut() {
                *w = rng.random_range(-limit..limit) * scale;
            }
        }
        Ok(mlp)
    }

    pub fn from_parts(spec: MlpSpec, params: ParamSet) -> Result<Self> {
        let template = Self::zeroed(spec)?;
        if template.params.names() != params.names() {
            return Err(ReqError::Config(
                "parameter names do not match the MLP layout".into(),
            ));
        }
        for (a, b) in template
            .params
            .values_slice()
            .iter()
            .zip(params.values_slice())
        {
            if a.shape() != b.shape() {
                return Err(ReqError::shape(
                    "Mlp::from_parts",
                    "parameter size",
                    a.len(),
                    b.len(),
                ));
            }
        }
        Ok(Mlp {
            spec: template.spec,
            params,
        })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn layer_index(&self, layer: usize) -> LayerIndex {
        let norm_extra = usize::from(self.spec.normalize_first);
        let base = if layer == 0 {
            0
        } else {
            2 * layer + 2 * norm_extra
        };
        LayerIndex {
            weight: base,
            bias: base + 1,
            norm: (layer == 0 && self.spec.normalize_first).then_some((2, 3)),
        }
    }

    fn check_input(&self, input: &NumArray) -> Result<()> {
        if input.last_dim() != self.spec.input {
            return Err(ReqError::shape(
                "Mlp::forward",
                "input width",
                self.spec.input,
                input.last_dim(),
            ));
        }
        Ok(())
    }

    pub fn forward(&self, input: &NumArray) -> Result<NumArray> {
        self.check_input(input)?;
        let rows = input.rows();
        let parts = par::map_row_chunks(rows, CHUNK_ROWS, |range| {
            self.forward_chunk(
                &input.values()[range.start * self.spec.input..range.end * self.spec.input],
                range.len(),
                None,
            )
        });
        NumArray::matrix(rows, self.spec.output, parts.concat())
    }

    pub fn forward_cached(&self, input: &NumArray) -> Result<(NumArray, ForwardCache)> {
        self.check_input(input)?;
        let rows = input.rows();
        let parts = par::map_row_chunks(rows, CHUNK_ROWS, |range| {
            let mut cache = ChunkCache::default();
            let out = self.forward_chunk(
                &input.values()[range.start * self.spec.input..range.end * self.spec.input],
                range.len(),
                Some(&mut cache),
            );
            (out, cache)
        });
        let mut values = Vec::with_capacity(rows * self.spec.output);
        let mut chunks = Vec::with_capacity(parts.len());
        for (out, cache) in parts {
            values.extend_from_slice(&out);
            chunks.push(cache);
        }
        Ok((
            NumArray::matrix(rows, self.spec.output, values)?,
            ForwardCache { rows, chunks },
        ))
    }

    fn forward_chunk(
        &self,
        input: &[f64],
        rows: usize,
        mut cache: Option<&mut ChunkCache>,
    ) -> Vec<f64> {
        let widths = self.spec.widths();
        let n_layers = self.spec.n_layers();
        let mut x = input.to_vec();
        if let Some(c) = cache.as_deref_mut() {
            c.rows = rows;
        }
        for l in 0..n_layers {
            let idx = self.layer_index(l);
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            let mut z = vec![0.0; rows * fan_out];
            affine(
                &x,
                rows,
                fan_in,
                self.params.get(idx.weight).values(),
                self.params.get(idx.bias).values(),
                &mut z,
            );
            let last = l + 1 == n_layers;
            if let Some(c) = cache.as_deref_mut() {
                c.inputs.push(std::mem::take(&mut x));
            }
            if last {
                return z;
            }
            if let Some((scale_i, shift_i)) = idx.norm {
                let scale = self.params.get(scale_i).values();
                let shift = self.params.get(shift_i).values();
                let mut inv_stds = Vec::with_capacity(rows);
                for row in z.chunks_exact_mut(fan_out) {
                    inv_stds.push(normalize_row(row));
                }
                if let Some(c) = cache.as_deref_mut() {
                    c.norm = Some((z.clone(), inv_stds));
                }
                for row in z.chunks_exact_mut(fan_out) {
                    for ((v, s), b) in row.iter_mut().zip(scale).zip(shift) {
                        *v = *v * s + b;
                    }
                }
            }
            let act = self.spec.activation;
            x = z.iter().map(|&v| act.apply(v)).collect();
            if let Some(c) = cache.as_deref_mut() {
                c.pre.push(z);
            }
        }
        unreachable!("loop returns at the output layer")
    }

    /// Parameter gradients of `sum(upstream * output)`.
    pub fn backward(&self, cache: &ForwardCache, upstream: &NumArray) -> Result<Gradients> {
        if upstream.rows() != cache.rows || upstream.last_dim() != self.spec.output {
            return Err(ReqError::shape(
                "Mlp::backward",
                "upstream rows",
                cache.rows,
                upstream.rows(),
            ));
        }
        ensure_finite("Mlp::backward upstream", upstream.values())?;
        let out = self.spec.output;
        let mut offsets = Vec::with_capacity(cache.chunks.len());
        let mut start = 0;
        for c in &cache.chunks {
            offsets.push(start);
            start += c.rows;
        }
        let partials = par::map_range(cache.chunks.len(), |i| {
            let c = &cache.chunks[i];
            let up = &upstream.values()[offsets[i] * out..(offsets[i] + c.rows) * out];
            self.backward_chunk(c, up)
        });
        let mut grads = self.params.zero_grads();
        for g in &partials {
            grads.add_assign(g);
        }
        Ok(grads)
    }

    fn backward_chunk(&self, cache: &ChunkCache, upstream: &[f64]) -> Gradients {
        let widths = self.spec.widths();
        let rows = cache.rows;
        let mut grads = self.params.zero_grads();
        let mut dz = upstream.to_vec();
        for l in (0..self.spec.n_layers()).rev() {
            let idx = self.layer_index(l);
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            let x = &cache.inputs[l];
            gemm(
                fan_in,
                rows,
                fan_out,
                x,
                true,
                &dz,
                false,
                grads.get_mut(idx.weight).values_mut(),
                true,
            );
            column_sums(&dz, fan_out, grads.get_mut(idx.bias).values_mut());
            if l == 0 {
                break;
            }
            // Gradient w.r.t. this layer's input, i.e. the previous activation.
            let mut dx = vec![0.0; rows * fan_in];
            gemm(
                rows,
                fan_out,
                fan_in,
                &dz,
                false,
                self.params.get(idx.weight).values(),
                true,
                &mut dx,
                false,
            );
            let pre = &cache.pre[l - 1];
            let act = self.spec.activation;
            for (d, &p) in dx.iter_mut().zip(pre) {
                *d *= act.derivative(p);
            }
            let prev = self.layer_index(l - 1);
            if let Some((scale_i, shift_i)) = prev.norm {
                dx = self.norm_backward(cache, &dx, fan_in, scale_i, shift_i, &mut grads);
            }
            dz = dx;
        }
        grads
    }

    fn norm_backward(
        &self,
        cache: &ChunkCache,
        d_out: &[f64],
        width: usize,
        scale_i: usize,
        shift_i: usize,
        grads: &mut Gradients,
    ) -> Vec<f64> {
        let (xhat, inv_stds) = cache
            .norm
            .as_ref()
            .expect("normalized layer caches its statistics");
        let scale = self.params.get(scale_i).values();
        let n = width as f64;
        let mut d_in = vec![0.0; d_out.len()];
        for r in 0..cache.rows {
            let xr = &xhat[r * width..(r + 1) * width];
            let dr = &d_out[r * width..(r + 1) * width];
            {
                let ds = grads.get_mut(scale_i).values_mut();
                for j in 0..width {
                    ds[j] += dr[j] * xr[j];
                }
            }
            {
                let db = grads.get_mut(shift_i).values_mut();
                for j in 0..width {
                    db[j] += dr[j];
                }
            }
            let dxhat: Vec<f64> = dr.iter().zip(scale).map(|(d, s)| d * s).collect();
            let mean_d = dxhat.iter().sum::<f64>() / n;
            // Below the variance floor the divisor is constant.
            let (inv_std, floored) = inv_stds[r];
            let mean_dx = if floored {
                0.0
            } else {
                dxhat.iter().zip(xr).map(|(d, x)| d * x).sum::<f64>() / n
            };
            let out = &mut d_in[r * width..(r + 1) * width];
            for j in 0..width {
                out[j] = inv_std * (dxhat[j] - mean_d - xr[j] * mean_dx);
            }
        }
        d_in
    }

    /// Parameter gradients for `input` and `upstream` in one call.
    pub fn gradient(&self, input: &NumArray, upstream: &NumArray) -> Result<Gradients> {
        let (_, cache) = self.forward_cached(input)?;
        self.backward(&cache, upstream)
    }
}

/// Evaluates the network described by `spec` and `params`.
pub fn forward(spec: &MlpSpec, params: &ParamSet, input: &NumArray) -> Result<NumArray> {
    Mlp::from_parts(spec.clone(), params.clone())?.forward(input)
}

/// Parameter gradients of `sum(upstream * forward(input))`.
pub fn backward(
    spec: &MlpSpec,
    params: &ParamSet,
    input: &NumArray,
    upstream: &NumArray,
) -> Result<Gradients> {
    Mlp::from_parts(spec.clone(), params.clone())?.gradient(input, upstream)
}
