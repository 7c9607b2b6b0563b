//! Actor-critic network with a shared input encoder.
//!
//! ```text
//! grid ─ conv ─ relu ─ conv ─ relu ─┐
//! existence‖availability‖condition ─ fc ─ relu ─┼─ concat ─┬─ fc ─ relu ─ fc → logits
//! step one-hot ─ fc ─ relu ─────────┘           └─ fc ─ relu ─ fc → value
//! ```
//!
//! All parameters live in one flat `Vec<f64>`; gradients use the same layout,
//! which keeps the optimizer, gradient clipping and finite-difference checks
//! trivial.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::env::{StateDims, StateEncoding};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    pub grid: usize,
    pub n_categories: usize,
    pub t_max: usize,
    #[serde(default = "default_channels")]
    pub conv_channels: Vec<usize>,
    #[serde(default = "default_kernel")]
    pub kernel: usize,
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default = "default_aux_hidden")]
    pub aux_hidden: usize,
    #[serde(default = "default_step_hidden")]
    pub step_hidden: usize,
    #[serde(default = "default_head_hidden")]
    pub head_hidden: usize,
}

fn default_channels() -> Vec<usize> {
    vec![8, 16]
}
fn default_kernel() -> usize {
    3
}
fn default_stride() -> usize {
    2
}
fn default_aux_hidden() -> usize {
    32
}
fn default_step_hidden() -> usize {
    16
}
fn default_head_hidden() -> usize {
    64
}

impl NetConfig {
    pub fn for_dims(dims: StateDims) -> Self {
        NetConfig {
            grid: dims.grid,
            n_categories: dims.n_categories,
            t_max: dims.t_max,
            conv_channels: default_channels(),
            kernel: default_kernel(),
            stride: default_stride(),
            aux_hidden: default_aux_hidden(),
            step_hidden: default_step_hidden(),
            head_hidden: default_head_hidden(),
        }
    }

    pub fn aux_len(&self) -> usize {
        2 * self.n_categories + 1
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Conv {
    in_c: usize,
    out_c: usize,
    in_size: usize,
    out_size: usize,
    k: usize,
    stride: usize,
    pad: usize,
    w: usize,
    b: usize,
}

impl Conv {
    fn weight_len(&self) -> usize {
        self.out_c * self.in_c * self.k * self.k
    }

    fn out_len(&self) -> usize {
        self.out_c * self.out_size * self.out_size
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Dense {
    n_in: usize,
    n_out: usize,
    w: usize,
    b: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Arch {
    convs: Vec<Conv>,
    aux: Dense,
    step: Dense,
    pol_hidden: Dense,
    pol_out: Dense,
    val_hidden: Dense,
    val_out: Dense,
    n_params: usize,
}

impl Arch {
    fn new(cfg: &NetConfig) -> Arch {
        let mut offset = 0;
        let mut take = |n: usize| {
            let at = offset;
            offset += n;
            at
        };
        let pad = cfg.kernel / 2;
        let mut convs = Vec::new();
        let (mut in_c, mut size) = (1, cfg.grid);
        for &out_c in &cfg.conv_channels {
            let out_size = (size + 2 * pad - cfg.kernel) / cfg.stride + 1;
            let w = take(out_c * in_c * cfg.kernel * cfg.kernel);
            let b = take(out_c);
            convs.push(Conv {
                in_c,
                out_c,
                in_size: size,
                out_size,
                k: cfg.kernel,
                stride: cfg.stride,
                pad,
                w,
                b,
            });
            in_c = out_c;
            size = out_size;
        }
        let mut dense = |n_in: usize, n_out: usize| {
            let w = take(n_in * n_out);
            let b = take(n_out);
            Dense { n_in, n_out, w, b }
        };
        let conv_out = in_c * size * size;
        let aux = dense(cfg.aux_len(), cfg.aux_hidden);
        let step = dense(cfg.t_max, cfg.step_hidden);
        let feat = conv_out + cfg.aux_hidden + cfg.step_hidden;
        let pol_hidden = dense(feat, cfg.head_hidden);
        let pol_out = dense(cfg.head_hidden, cfg.n_categories);
        let val_hidden = dense(feat, cfg.head_hidden);
        let val_out = dense(cfg.head_hidden, 1);
        Arch {
            convs,
            aux,
            step,
            pol_hidden,
            pol_out,
            val_hidden,
            val_out,
            n_params: offset,
        }
    }

    fn conv_out_len(&self) -> usize {
        self.convs.last().map_or(0, Conv::out_len)
    }
}

/// Intermediate values of one forward pass, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct Activations {
    /// `conv[0]` is the input grid; `conv[i + 1]` the rectified output of layer `i`.
    conv: Vec<Vec<f64>>,
    aux_in: Vec<f64>,
    aux_h: Vec<f64>,
    step_in: Vec<f64>,
    step_h: Vec<f64>,
    feat: Vec<f64>,
    pol_h: Vec<f64>,
    val_h: Vec<f64>,
    pub logits: Vec<f64>,
    pub value: f64,
}

impl Activations {
    /// Sign pattern of every rectifier, for detecting kinks in numerical checks.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.conv[1..]
            .iter()
            .chain([&self.aux_h, &self.step_h, &self.pol_h, &self.val_h])
            .flat_map(|v| v.iter().map(|x| *x > 0.0))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyNet {
    config: NetConfig,
    arch: Arch,
    pub params: Vec<f64>,
}

fn dense_forward(layer: &Dense, params: &[f64], x: &[f64], relu: bool) -> Vec<f64> {
    let w = &params[layer.w..layer.w + layer.n_in * layer.n_out];
    let b = &params[layer.b..layer.b + layer.n_out];
    w.chunks_exact(layer.n_in)
        .zip(b)
        .map(|(row, bias)| {
            let z = bias + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
            if relu {
                z.max(0.0)
            } else {
                z
            }
        })
        .collect()
}

/// Accumulates parameter gradients of a dense layer and returns the gradient
/// with respect to its input. `dy` is the gradient of the pre-activation.
fn dense_backward(layer: &Dense, params: &[f64], x: &[f64], dy: &[f64], grad: &mut [f64], want_dx: bool) -> Vec<f64> {
    let mut dx = if want_dx { vec![0.0; layer.n_in] } else { Vec::new() };
    for (o, &d) in dy.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        grad[layer.b + o] += d;
        let row = layer.w + o * layer.n_in;
        for (g, xi) in grad[row..row + layer.n_in].iter_mut().zip(x) {
            *g += d * xi;
        }
        if want_dx {
            for (dxi, wi) in dx.iter_mut().zip(&params[row..row + layer.n_in]) {
                *dxi += d * wi;
            }
        }
    }
    dx
}

fn relu_mask(dy: &mut [f64], y: &[f64]) {
    for (d, v) in dy.iter_mut().zip(y) {
        if *v <= 0.0 {
            *d = 0.0;
        }
    }
}

fn conv_forward(layer: &Conv, params: &[f64], input: &[f64]) -> Vec<f64> {
    let (n, s, k) = (layer.in_size as isize, layer.out_size, layer.k);
    let mut out = vec![0.0; layer.out_len()];
    for oc in 0..layer.out_c {
        let bias = params[layer.b + oc];
        for oy in 0..s {
            for ox in 0..s {
                let mut z = bias;
                for ic in 0..layer.in_c {
                    let wbase = layer.w + (oc * layer.in_c + ic) * k * k;
                    let ibase = ic * layer.in_size * layer.in_size;
                    for ky in 0..k {
                        let iy = (oy * layer.stride + ky) as isize - layer.pad as isize;
                        if iy < 0 || iy >= n {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * layer.stride + kx) as isize - layer.pad as isize;
                            if ix < 0 || ix >= n {
                                continue;
                            }
                            z += params[wbase + ky * k + kx] * input[ibase + (iy * n + ix) as usize];
                        }
                    }
                }
                out[(oc * s + oy) * s + ox] = z.max(0.0);
            }
        }
    }
    out
}

fn conv_backward(layer: &Conv, params: &[f64], input: &[f64], dz: &[f64], grad: &mut [f64], want_dx: bool) -> Vec<f64> {
    let (n, s, k) = (layer.in_size as isize, layer.out_size, layer.k);
    let mut dx = if want_dx { vec![0.0; input.len()] } else { Vec::new() };
    for oc in 0..layer.out_c {
        for oy in 0..s {
            for ox in 0..s {
                let d = dz[(oc * s + oy) * s + ox];
                if d == 0.0 {
                    continue;
                }
                grad[layer.b + oc] += d;
                for ic in 0..layer.in_c {
                    let wbase = layer.w + (oc * layer.in_c + ic) * k * k;
                    let ibase = ic * layer.in_size * layer.in_size;
                    for ky in 0..k {
                        let iy = (oy * layer.stride + ky) as isize - layer.pad as isize;
                        if iy < 0 || iy >= n {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * layer.stride + kx) as isize - layer.pad as isize;
                            if ix < 0 || ix >= n {
                                continue;
                            }
                            let ii = ibase + (iy * n + ix) as usize;
                            grad[wbase + ky * k + kx] += d * input[ii];
                            if want_dx {
                                dx[ii] += d * params[wbase + ky * k + kx];
                            }
                        }
                    }
                }
            }
        }
    }
    dx
}

/// Fills `w` (`rows x cols`, row-major) with a scaled orthogonal matrix.
fn orthogonal<R: Rng + ?Sized>(w: &mut [f64], rows: usize, cols: usize, gain: f64, rng: &mut R) {
    // Orthonormalise along the longer dimension's partner: rows when rows <= cols.
    let (m, n, transpose) = if rows <= cols { (rows, cols, false) } else { (cols, rows, true) };
    let mut a: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    for i in 0..m {
        for j in 0..i {
            let dot: f64 = a[i].iter().zip(&a[j]).map(|(x, y)| x * y).sum();
            let (head, tail) = a.split_at_mut(i);
            for (x, y) in tail[0].iter_mut().zip(&head[j]) {
                *x -= dot * y;
            }
        }
        let norm = a[i].iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        a[i].iter_mut().for_each(|x| *x /= norm);
    }
    for r in 0..rows {
        for c in 0..cols {
            let v = if transpose { a[c][r] } else { a[r][c] };
            w[r * cols + c] = gain * v;
        }
    }
}

impl PolicyNet {
    /// Network with all parameters zero.
    pub fn zeros(config: NetConfig) -> Self {
        let arch = Arch::new(&config);
        let params = vec![0.0; arch.n_params];
        PolicyNet { config, arch, params }
    }

    /// Orthogonal initialisation: gain √2 for hidden layers, 0.01 for the
    /// policy output and 1 for the value output; biases zero.
    pub fn new<R: Rng + ?Sized>(config: NetConfig, rng: &mut R) -> Self {
        let mut net = PolicyNet::zeros(config);
        let relu_gain = std::f64::consts::SQRT_2;
        let arch = net.arch.clone();
        for c in &arch.convs {
            let fan_in = c.in_c * c.k * c.k;
            orthogonal(&mut net.params[c.w..c.w + c.weight_len()], c.out_c, fan_in, relu_gain, rng);
        }
        for (layer, gain) in [
            (&arch.aux, relu_gain),
            (&arch.step, relu_gain),
            (&arch.pol_hidden, relu_gain),
            (&arch.pol_out, 0.01),
            (&arch.val_hidden, relu_gain),
            (&arch.val_out, 1.0),
        ] {
            let w = &mut net.params[layer.w..layer.w + layer.n_in * layer.n_out];
            orthogonal(w, layer.n_out, layer.n_in, gain, rng);
        }
        net
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn n_params(&self) -> usize {
        self.arch.n_params
    }

    fn check_dims(&self, state: &StateEncoding) -> Result<()> {
        let cfg = &self.config;
        if state.grid.len() != cfg.grid * cfg.grid
            || state.existence.len() != cfg.n_categories
            || state.availability.len() != cfg.n_categories
            || state.step_onehot.len() != cfg.t_max
        {
            return Err(Error::Dimension(format!(
                "state (grid {}, categories {}/{}, steps {}) does not match network (grid {}x{}, categories {}, steps {})",
                state.grid.len(),
                state.existence.len(),
                state.availability.len(),
                state.step_onehot.len(),
                cfg.grid,
                cfg.grid,
                cfg.n_categories,
                cfg.t_max
            )));
        }
        Ok(())
    }

    pub fn forward(&self, state: &StateEncoding) -> Result<Activations> {
        self.check_dims(state)?;
        Ok(self.forward_unchecked(state))
    }

    fn forward_unchecked(&self, state: &StateEncoding) -> Activations {
        let p = &self.params;
        let a = &self.arch;
        let mut conv = Vec::with_capacity(a.convs.len() + 1);
        conv.push(state.grid.clone());
        for layer in &a.convs {
            let next = conv_forward(layer, p, conv.last().unwrap());
            conv.push(next);
        }
        let aux_in = state.aux();
        let aux_h = dense_forward(&a.aux, p, &aux_in, true);
        let step_in = state.step_onehot.clone();
        let step_h = dense_forward(&a.step, p, &step_in, true);
        let mut feat = Vec::with_capacity(a.pol_hidden.n_in);
        feat.extend_from_slice(conv.last().unwrap());
        feat.extend_from_slice(&aux_h);
        feat.extend_from_slice(&step_h);
        let pol_h = dense_forward(&a.pol_hidden, p, &feat, true);
        let logits = dense_forward(&a.pol_out, p, &pol_h, false);
        let val_h = dense_forward(&a.val_hidden, p, &feat, true);
        let value = dense_forward(&a.val_out, p, &val_h, false)[0];
        Activations {
            conv,
            aux_in,
            aux_h,
            step_in,
            step_h,
            feat,
            pol_h,
            val_h,
            logits,
            value,
        }
    }

    /// Logits and value for one state.
    pub fn evaluate(&self, state: &StateEncoding) -> Result<(Vec<f64>, f64)> {
        let acts = self.forward(state)?;
        Ok((acts.logits, acts.value))
    }

    /// Accumulates into `grad` the gradient of a scalar loss whose partial
    /// derivatives with respect to the logits and the value are given.
    pub fn backward(&self, acts: &Activations, dlogits: &[f64], dvalue: f64, grad: &mut [f64]) {
        assert_eq!(grad.len(), self.n_params(), "gradient buffer has the wrong length");
        assert_eq!(dlogits.len(), self.config.n_categories);
        let p = &self.params;
        let a = &self.arch;

        let mut dpol_h = dense_backward(&a.pol_out, p, &acts.pol_h, dlogits, grad, true);
        relu_mask(&mut dpol_h, &acts.pol_h);
        let mut dfeat = dense_backward(&a.pol_hidden, p, &acts.feat, &dpol_h, grad, true);

        let mut dval_h = dense_backward(&a.val_out, p, &acts.val_h, &[dvalue], grad, true);
        relu_mask(&mut dval_h, &acts.val_h);
        let dfeat_v = dense_backward(&a.val_hidden, p, &acts.feat, &dval_h, grad, true);
        for (d, v) in dfeat.iter_mut().zip(&dfeat_v) {
            *d += v;
        }

        let conv_len = a.conv_out_len();
        let (dconv, rest) = dfeat.split_at(conv_len);
        let (daux, dstep) = rest.split_at(self.config.aux_hidden);

        let mut daux = daux.to_vec();
        relu_mask(&mut daux, &acts.aux_h);
        dense_backward(&a.aux, p, &acts.aux_in, &daux, grad, false);
        let mut dstep = dstep.to_vec();
        relu_mask(&mut dstep, &acts.step_h);
        dense_backward(&a.step, p, &acts.step_in, &dstep, grad, false);

        let mut dz = dconv.to_vec();
        for (i, layer) in a.convs.iter().enumerate().rev() {
            relu_mask(&mut dz, &acts.conv[i + 1]);
            dz = conv_backward(layer, p, &acts.conv[i], &dz, grad, i > 0);
        }
    }

    /// Named parameter tensors as `(name, shape, offset, len)`.
    pub fn tensor_layout(&self) -> Vec<(String, Vec<usize>, usize, usize)> {
        let a = &self.arch;
        let mut out = Vec::new();
        for (i, c) in a.convs.iter().enumerate() {
            out.push((format!("conv{i}.weight"), vec![c.out_c, c.in_c, c.k, c.k], c.w, c.weight_len()));
            out.push((format!("conv{i}.bias"), vec![c.out_c], c.b, c.out_c));
        }
        for (name, d) in [
            ("aux", &a.aux),
            ("step", &a.step),
            ("policy_hidden", &a.pol_hidden),
            ("policy_out", &a.pol_out),
            ("value_hidden", &a.val_hidden),
            ("value_out", &a.val_out),
        ] {
            out.push((format!("{name}.weight"), vec![d.n_out, d.n_in], d.w, d.n_in * d.n_out));
            out.push((format!("{name}.bias"), vec![d.n_out], d.b, d.n_out));
        }
        out
    }

    /// Offsets range of the parameters that only the policy head uses.
    pub fn policy_head_range(&self) -> std::ops::Range<usize> {
        let a = &self.arch;
        a.pol_hidden.w..a.pol_out.b + a.pol_out.n_out
    }

    /// Offsets range of the parameters that only the value head uses.
    pub fn value_head_range(&self) -> std::ops::Range<usize> {
        let a = &self.arch;
        a.val_hidden.w..a.val_out.b + a.val_out.n_out
    }
}
