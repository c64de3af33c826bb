//! Shared-trunk policy/value network with optional convolutional encoder.
//!
//! Convolutions run on channels-last activations (`[batch, h, w, c]`) via
//! im2col, so each layer is a single matrix product over the whole batch.

use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::scalar::{matmul, matmul_at, matmul_bt, Scalar};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Fc,
    Conv1d,
    Conv2d,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Fc => "fc",
            Variant::Conv1d => "conv1d",
            Variant::Conv2d => "conv2d",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSpec {
    pub variant: Variant,
    /// Widths of the fully connected trunk.
    pub hidden: Vec<usize>,
    pub channels: Vec<usize>,
    pub kernels: Vec<usize>,
    pub strides: Vec<usize>,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            variant: Variant::Fc,
            hidden: vec![512, 256],
            channels: vec![32, 32, 32],
            kernels: vec![5, 3, 3],
            strides: vec![2, 2, 1],
        }
    }
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::config("network.hidden", "widths must be positive"));
        }
        if self.variant != Variant::Fc {
            let n = self.channels.len();
            if n == 0 {
                return Err(Error::config("network.channels", "conv variants need at least one layer"));
            }
            if self.kernels.len() != n || self.strides.len() != n {
                return Err(Error::config(
                    "network.kernels",
                    "channels, kernels and strides must have the same length",
                ));
            }
            if self.channels.iter().chain(&self.kernels).chain(&self.strides).any(|&x| x == 0) {
                return Err(Error::config("network.channels", "channels, kernels and strides must be positive"));
            }
        }
        Ok(())
    }
}

/// Network input: a `channels x height x width` block (channel-major) followed
/// by `extra` scalars.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub extra: usize,
}

impl InputShape {
    pub fn block_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn len(&self) -> usize {
        self.block_len() + self.extra
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl ParamInfo {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy)]
struct Conv {
    w: usize,
    b: usize,
    c_in: usize,
    c_out: usize,
    kh: usize,
    kw: usize,
    sh: usize,
    sw: usize,
    h_in: usize,
    w_in: usize,
    h_out: usize,
    w_out: usize,
}

impl Conv {
    fn positions(&self) -> usize {
        self.h_out * self.w_out
    }

    fn patch(&self) -> usize {
        self.kh * self.kw * self.c_in
    }
}

#[derive(Debug, Clone, Copy)]
struct Dense {
    w: usize,
    b: usize,
    n_in: usize,
    n_out: usize,
}

fn conv_len(len: usize, k: usize, s: usize, what: &str) -> Result<usize> {
    if len < k {
        return Err(Error::Shape(format!("{what} extent {len} is smaller than kernel {k}")));
    }
    Ok((len - k) / s + 1)
}

/// Per-layer conv output `(channels, height, width)` for `spec` on `input`.
pub fn conv_shapes(spec: &NetworkSpec, input: &InputShape) -> Result<Vec<(usize, usize, usize)>> {
    let mut out = Vec::new();
    if spec.variant == Variant::Fc {
        return Ok(out);
    }
    if spec.variant == Variant::Conv1d && input.width != 1 {
        return Err(Error::Shape(format!("conv1d needs a width-1 block, got width {}", input.width)));
    }
    let (mut h, mut w) = (input.height, input.width);
    for l in 0..spec.channels.len() {
        let kw = 3.min(w);
        h = conv_len(h, spec.kernels[l], spec.strides[l], "height")?;
        w = conv_len(w, kw, 1, "width")?;
        out.push((spec.channels[l], h, w));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct PolicyValueNet<S: Scalar> {
    spec: NetworkSpec,
    input: InputShape,
    n_actions: usize,
    params: Vec<S>,
    table: Vec<ParamInfo>,
    convs: Vec<Conv>,
    trunk: Vec<Dense>,
    pi: Dense,
    vf: Dense,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct Tape<S: Scalar> {
    batch: usize,
    conv_in: Vec<S>,
    cols: Vec<Vec<S>>,
    conv_act: Vec<Vec<S>>,
    dense_in: Vec<S>,
    trunk_act: Vec<Vec<S>>,
    pub logits: Vec<S>,
    pub values: Vec<S>,
}

impl<S: Scalar> Tape<S> {
    pub fn batch(&self) -> usize {
        self.batch
    }
}

impl<S: Scalar> PolicyValueNet<S> {
    /// Zero-initialized network.
    pub fn zeros(spec: &NetworkSpec, input: InputShape, n_actions: usize) -> Result<Self> {
        spec.validate()?;
        if n_actions == 0 {
            return Err(Error::Shape("network needs at least one action".into()));
        }
        let mut table = Vec::new();
        let mut offset = 0;
        let mut add = |name: String, shape: Vec<usize>| {
            let o = offset;
            offset += shape.iter().product::<usize>();
            table.push(ParamInfo { name, shape, offset: o });
            o
        };

        let mut convs = Vec::new();
        let (mut c, mut h, mut w) = (input.channels, input.height, input.width);
        for (l, &(c_out, h_out, w_out)) in conv_shapes(spec, &input)?.iter().enumerate() {
            let kw = 3.min(w);
            let kh = spec.kernels[l];
            let wo = add(format!("conv{l}.weight"), vec![kh * kw * c, c_out]);
            let bo = add(format!("conv{l}.bias"), vec![c_out]);
            convs.push(Conv {
                w: wo,
                b: bo,
                c_in: c,
                c_out,
                kh,
                kw,
                sh: spec.strides[l],
                sw: 1,
                h_in: h,
                w_in: w,
                h_out,
                w_out,
            });
            (c, h, w) = (c_out, h_out, w_out);
        }
        let mut n_in = if convs.is_empty() {
            input.len()
        } else {
            c * h * w + input.extra
        };
        let mut trunk = Vec::new();
        for (l, &n_out) in spec.hidden.iter().enumerate() {
            let wo = add(format!("fc{l}.weight"), vec![n_in, n_out]);
            let bo = add(format!("fc{l}.bias"), vec![n_out]);
            trunk.push(Dense { w: wo, b: bo, n_in, n_out });
            n_in = n_out;
        }
        let pi = Dense {
            w: add("policy.weight".into(), vec![n_in, n_actions]),
            b: add("policy.bias".into(), vec![n_actions]),
            n_in,
            n_out: n_actions,
        };
        let vf = Dense {
            w: add("value.weight".into(), vec![n_in, 1]),
            b: add("value.bias".into(), vec![1]),
            n_in,
            n_out: 1,
        };
        Ok(Self {
            spec: spec.clone(),
            input,
            n_actions,
            params: vec![S::zero(); offset],
            table,
            convs,
            trunk,
            pi,
            vf,
        })
    }

    /// Uniform fan-in initialization; biases start at zero and the policy
    /// head is scaled down so the initial policy is near uniform.
    pub fn new<R: Rng>(spec: &NetworkSpec, input: InputShape, n_actions: usize, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(spec, input, n_actions)?;
        let mut fill = |params: &mut [S], off: usize, fan_in: usize, len: usize, gain: f64| {
            let bound = gain * (1.0 / fan_in as f64).sqrt();
            let d = Uniform::new_inclusive(-bound, bound);
            for p in &mut params[off..off + len] {
                *p = S::from_f64(d.sample(rng));
            }
        };
        for c in &net.convs {
            fill(&mut net.params, c.w, c.patch(), c.patch() * c.c_out, 6f64.sqrt());
        }
        for d in &net.trunk {
            fill(&mut net.params, d.w, d.n_in, d.n_in * d.n_out, 6f64.sqrt());
        }
        let (pi, vf) = (net.pi, net.vf);
        fill(&mut net.params, pi.w, pi.n_in, pi.n_in * pi.n_out, 0.01 * 3f64.sqrt());
        fill(&mut net.params, vf.w, vf.n_in, vf.n_in, 3f64.sqrt());
        Ok(net)
    }

    pub fn from_params(spec: &NetworkSpec, input: InputShape, n_actions: usize, params: Vec<S>) -> Result<Self> {
        let mut net = Self::zeros(spec, input, n_actions)?;
        if params.len() != net.params.len() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                net.params.len(),
                params.len()
            )));
        }
        net.params = params;
        Ok(net)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn input_shape(&self) -> InputShape {
        self.input
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[S] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [S] {
        &mut self.params
    }

    pub fn shape_table(&self) -> &[ParamInfo] {
        &self.table
    }

    /// Length of the flattened conv output, 0 for the FC variant.
    pub fn conv_output_len(&self) -> usize {
        self.convs.last().map_or(0, |c| c.positions() * c.c_out)
    }

    /// Converts the parameters to another precision.
    pub fn cast<T: Scalar>(&self) -> PolicyValueNet<T> {
        let params = self.params.iter().map(|p| T::from_f64(p.as_f64())).collect();
        PolicyValueNet::from_params(&self.spec, self.input, self.n_actions, params).expect("same layout")
    }

    pub fn forward(&self, input: &[S], batch: usize, tape: &mut Tape<S>) -> Result<()> {
        let in_len = self.input.len();
        if input.len() != batch * in_len {
            return Err(Error::Shape(format!(
                "network expects {batch} x {in_len} inputs, got {}",
                input.len()
            )));
        }
        tape.batch = batch;
        let p = &self.params;

        if self.convs.is_empty() {
            tape.dense_in.clear();
            tape.dense_in.extend_from_slice(input);
        } else {
            self.to_channels_last(input, batch, &mut tape.conv_in);
            tape.cols.resize(self.convs.len(), Vec::new());
            tape.conv_act.resize(self.convs.len(), Vec::new());
            for (l, c) in self.convs.iter().enumerate() {
                let src = if l == 0 { &tape.conv_in } else { &tape.conv_act[l - 1] };
                let mut cols = std::mem::take(&mut tape.cols[l]);
                im2col(c, src, batch, &mut cols);
                let rows = batch * c.positions();
                let act = &mut tape.conv_act[l];
                act.resize(rows * c.c_out, S::zero());
                fill_bias(act, &p[c.b..c.b + c.c_out]);
                matmul(rows, c.patch(), c.c_out, &cols, &p[c.w..c.w + c.patch() * c.c_out], S::one(), act);
                relu(act);
                tape.cols[l] = cols;
            }
            let flat = self.conv_output_len();
            let extra = self.input.extra;
            let last = tape.conv_act.last().expect("conv layers");
            tape.dense_in.clear();
            for b in 0..batch {
                tape.dense_in.extend_from_slice(&last[b * flat..(b + 1) * flat]);
                let row = &input[b * in_len..(b + 1) * in_len];
                tape.dense_in.extend_from_slice(&row[in_len - extra..]);
            }
        }

        tape.trunk_act.resize(self.trunk.len(), Vec::new());
        for (l, d) in self.trunk.iter().enumerate() {
            let (before, rest) = tape.trunk_act.split_at_mut(l);
            let x = if l == 0 { &tape.dense_in } else { &before[l - 1] };
            let out = &mut rest[0];
            dense_forward(d, p, x, batch, out);
            relu(out);
        }
        let h = tape.trunk_act.last().unwrap_or(&tape.dense_in);
        dense_forward(&self.pi, p, h, batch, &mut tape.logits);
        dense_forward(&self.vf, p, h, batch, &mut tape.values);
        Ok(())
    }

    fn to_channels_last(&self, input: &[S], batch: usize, out: &mut Vec<S>) {
        let InputShape {
            channels: c,
            height: h,
            width: w,
            ..
        } = self.input;
        let in_len = self.input.len();
        out.resize(batch * c * h * w, S::zero());
        for b in 0..batch {
            let src = &input[b * in_len..];
            let dst = &mut out[b * c * h * w..(b + 1) * c * h * w];
            for ch in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        dst[(y * w + x) * c + ch] = src[(ch * h + y) * w + x];
                    }
                }
            }
        }
    }

    /// Writes the parameter gradient for upstream gradients on logits and
    /// values into `grad` (overwritten).
    pub fn backward(&self, tape: &Tape<S>, dlogits: &[S], dvalues: &[S], grad: &mut [S]) {
        let batch = tape.batch;
        let p = &self.params;
        assert_eq!(grad.len(), p.len(), "gradient buffer length");
        assert_eq!(dlogits.len(), batch * self.n_actions);
        assert_eq!(dvalues.len(), batch);
        grad.iter_mut().for_each(|g| *g = S::zero());

        let h = tape.trunk_act.last().unwrap_or(&tape.dense_in);
        let n_h = self.pi.n_in;
        let mut dh = vec![S::zero(); batch * n_h];
        dense_backward(&self.pi, p, h, dlogits, batch, grad, Some(&mut dh), S::zero());
        dense_backward(&self.vf, p, h, dvalues, batch, grad, Some(&mut dh), S::one());

        let mut dcur = dh;
        let need_input_grad = !self.convs.is_empty();
        for l in (0..self.trunk.len()).rev() {
            let d = &self.trunk[l];
            relu_backward(&mut dcur, &tape.trunk_act[l]);
            let x = if l == 0 { &tape.dense_in } else { &tape.trunk_act[l - 1] };
            if l > 0 || need_input_grad {
                let mut dx = vec![S::zero(); batch * d.n_in];
                dense_backward(d, p, x, &dcur, batch, grad, Some(&mut dx), S::zero());
                dcur = dx;
            } else {
                dense_backward(d, p, x, &dcur, batch, grad, None, S::zero());
            }
        }
        if self.convs.is_empty() {
            return;
        }

        let flat = self.conv_output_len();
        let row = flat + self.input.extra;
        let mut da: Vec<S> = (0..batch).flat_map(|b| dcur[b * row..b * row + flat].iter().copied()).collect();
        for l in (0..self.convs.len()).rev() {
            let c = &self.convs[l];
            relu_backward(&mut da, &tape.conv_act[l]);
            let rows = batch * c.positions();
            matmul_at(c.patch(), rows, c.c_out, &tape.cols[l], &da, S::zero(), &mut grad[c.w..c.w + c.patch() * c.c_out]);
            column_sums(&da, c.c_out, &mut grad[c.b..c.b + c.c_out]);
            if l > 0 {
                let mut dcols = vec![S::zero(); rows * c.patch()];
                matmul_bt(rows, c.c_out, c.patch(), &da, &p[c.w..c.w + c.patch() * c.c_out], S::zero(), &mut dcols);
                let mut dprev = vec![S::zero(); batch * c.h_in * c.w_in * c.c_in];
                col2im(c, &dcols, batch, &mut dprev);
                da = dprev;
            }
        }
    }
}

fn fill_bias<S: Scalar>(out: &mut [S], bias: &[S]) {
    for row in out.chunks_exact_mut(bias.len()) {
        row.copy_from_slice(bias);
    }
}

fn relu<S: Scalar>(x: &mut [S]) {
    for v in x {
        if *v < S::zero() {
            *v = S::zero();
        }
    }
}

fn relu_backward<S: Scalar>(d: &mut [S], act: &[S]) {
    for (g, &a) in d.iter_mut().zip(act) {
        if a <= S::zero() {
            *g = S::zero();
        }
    }
}

fn column_sums<S: Scalar>(x: &[S], cols: usize, out: &mut [S]) {
    for row in x.chunks_exact(cols) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o = *o + v;
        }
    }
}

fn dense_forward<S: Scalar>(d: &Dense, p: &[S], x: &[S], batch: usize, out: &mut Vec<S>) {
    out.resize(batch * d.n_out, S::zero());
    fill_bias(out, &p[d.b..d.b + d.n_out]);
    matmul(batch, d.n_in, d.n_out, x, &p[d.w..d.w + d.n_in * d.n_out], S::one(), out);
}

/// Accumulates weight/bias gradients and writes (`beta = 0`) or adds
/// (`beta = 1`) the input gradient.
#[allow(clippy::too_many_arguments)]
fn dense_backward<S: Scalar>(
    d: &Dense,
    p: &[S],
    x: &[S],
    dy: &[S],
    batch: usize,
    grad: &mut [S],
    dx: Option<&mut Vec<S>>,
    beta: S,
) {
    let wlen = d.n_in * d.n_out;
    matmul_at(d.n_in, batch, d.n_out, x, dy, S::one(), &mut grad[d.w..d.w + wlen]);
    column_sums(dy, d.n_out, &mut grad[d.b..d.b + d.n_out]);
    if let Some(dx) = dx {
        matmul_bt(batch, d.n_out, d.n_in, dy, &p[d.w..d.w + wlen], beta, dx);
    }
}

fn im2col<S: Scalar>(c: &Conv, x: &[S], batch: usize, cols: &mut Vec<S>) {
    let k = c.patch();
    cols.resize(batch * c.positions() * k, S::zero());
    let mut r = 0;
    for b in 0..batch {
        let xb = &x[b * c.h_in * c.w_in * c.c_in..];
        for oh in 0..c.h_out {
            for ow in 0..c.w_out {
                let dst = &mut cols[r * k..(r + 1) * k];
                let mut o = 0;
                for i in 0..c.kh {
                    let y = oh * c.sh + i;
                    let start = (y * c.w_in + ow * c.sw) * c.c_in;
                    let n = c.kw * c.c_in;
                    dst[o..o + n].copy_from_slice(&xb[start..start + n]);
                    o += n;
                }
                r += 1;
            }
        }
    }
}

fn col2im<S: Scalar>(c: &Conv, dcols: &[S], batch: usize, dx: &mut [S]) {
    let k = c.patch();
    let mut r = 0;
    for b in 0..batch {
        let xb = &mut dx[b * c.h_in * c.w_in * c.c_in..];
        for oh in 0..c.h_out {
            for ow in 0..c.w_out {
                let src = &dcols[r * k..(r + 1) * k];
                let mut o = 0;
                for i in 0..c.kh {
                    let y = oh * c.sh + i;
                    let start = (y * c.w_in + ow * c.sw) * c.c_in;
                    let n = c.kw * c.c_in;
                    for (d, &s) in xb[start..start + n].iter_mut().zip(&src[o..o + n]) {
                        *d = *d + s;
                    }
                    o += n;
                }
                r += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn occ_input(c: usize, h: usize, w: usize) -> InputShape {
        InputShape {
            channels: c,
            height: h,
            width: w,
            extra: 4,
        }
    }

    #[test]
    fn default_shapes() {
        let spec = NetworkSpec::default();
        let net = PolicyValueNet::<f32>::zeros(&spec, occ_input(1, 525, 1), 105).unwrap();
        assert_eq!(net.shape_table()[0].shape, vec![529, 512]);
        assert_eq!(net.param_count(), 529 * 512 + 512 + 512 * 256 + 256 + 256 * 105 + 105 + 256 + 1);

        let conv = NetworkSpec {
            variant: Variant::Conv1d,
            ..spec.clone()
        };
        // (105 - 5) / 2 + 1 = 51, (51 - 3) / 2 + 1 = 25, 25 - 3 + 1 = 23
        assert_eq!(conv_shapes(&conv, &occ_input(5, 105, 1)).unwrap(), vec![(32, 51, 1), (32, 25, 1), (32, 23, 1)]);
        let net = PolicyValueNet::<f32>::zeros(&conv, occ_input(5, 105, 1), 105).unwrap();
        assert_eq!(net.conv_output_len(), 736);
        // 525 -> 261 -> 130 -> 128
        assert_eq!(conv_shapes(&conv, &occ_input(1, 525, 1)).unwrap()[2], (32, 128, 1));

        let conv2 = NetworkSpec {
            variant: Variant::Conv2d,
            ..spec
        };
        assert_eq!(
            conv_shapes(&conv2, &occ_input(1, 105, 5)).unwrap(),
            vec![(32, 51, 3), (32, 25, 1), (32, 23, 1)]
        );
        assert!(matches!(conv_shapes(&conv, &occ_input(1, 105, 5)), Err(Error::Shape(_))));
    }

    #[test]
    fn zero_params_give_uniform_logits() {
        let spec = NetworkSpec::default();
        let net = PolicyValueNet::<f32>::zeros(&spec, occ_input(1, 525, 1), 105).unwrap();
        let mut tape = Tape::default();
        net.forward(&vec![0.5; 529], 1, &mut tape).unwrap();
        assert!(tape.logits.iter().all(|&l| l == tape.logits[0]));
        assert!(matches!(net.forward(&[0.0; 10], 1, &mut tape), Err(Error::Shape(_))));
    }

    #[test]
    fn batch_rows_are_independent() {
        let spec = NetworkSpec {
            variant: Variant::Conv1d,
            hidden: vec![8],
            channels: vec![3, 2],
            kernels: vec![3, 2],
            strides: vec![2, 1],
        };
        let input = occ_input(2, 11, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = PolicyValueNet::<f64>::new(&spec, input, 4, &mut rng).unwrap();
        let x: Vec<f64> = (0..3 * input.len()).map(|i| ((i * 7) % 13) as f64 / 13.0).collect();
        let mut tape = Tape::default();
        net.forward(&x, 3, &mut tape).unwrap();
        let batched = tape.logits.clone();
        for b in 0..3 {
            net.forward(&x[b * input.len()..(b + 1) * input.len()], 1, &mut tape).unwrap();
            assert_eq!(tape.logits[..], batched[b * 4..(b + 1) * 4]);
        }
    }
}
