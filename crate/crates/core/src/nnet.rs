//! Small fixed-topology feedforward network with hand-written reverse-mode
//! gradients, an Adam optimizer and Polyak (soft) parameter averaging.
//!
//! Hidden layers use `tanh`, the output layer is linear. Weights are stored
//! `fan_in x fan_out` so a batch forward pass is `X W + b` with one sample
//! per row.
//!
//! The first layer skips zero inputs. Policy inputs are mostly one-hot, which
//! makes this the dominant saving of a training step.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Serialization version of the parameter section.
pub const PARAMS_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    /// `fan_in x fan_out`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Multilayer perceptron with `tanh` hidden units and a linear head.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    layers: Vec<Dense>,
}

/// Activations recorded by a forward pass; `activations[0]` is the input and
/// `activations[l]` the output of layer `l`.
#[derive(Clone, Debug)]
pub struct Cache {
    activations: Vec<Array2<f64>>,
}

impl Cache {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().expect("cache holds at least the input")
    }
}

/// Parameter-shaped gradient (or moment) tree.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Gradients {
            weights: net.layers.iter().map(|l| Array2::zeros(l.weight.raw_dim())).collect(),
            biases: net.layers.iter().map(|l| Array1::zeros(l.bias.raw_dim())).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|x| x.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|x| x.is_finite()))
    }

    fn congruent(&self, net: &Mlp) -> bool {
        self.weights.len() == net.layers.len()
            && self.biases.len() == net.layers.len()
            && net.layers.iter().enumerate().all(|(i, l)| {
                self.weights[i].dim() == l.weight.dim() && self.biases[i].dim() == l.bias.dim()
            })
    }
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn new(sizes: &[usize], seed: u64) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::config(
                "layer_sizes",
                format!("need at least 2 layer sizes, got {}", sizes.len()),
            ));
        }
        if let Some(pos) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::config(
                "layer_sizes",
                format!("layer {pos} has size 0"),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weight = Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-s..=s));
                Dense {
                    weight,
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Mlp {
            sizes: sizes.to_vec(),
            layers,
        })
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("layer_sizes", "network has no layers"));
        }
        let mut sizes = vec![layers[0].weight.nrows()];
        for (i, l) in layers.iter().enumerate() {
            if l.weight.nrows() != *sizes.last().unwrap() || l.bias.len() != l.weight.ncols() {
                return Err(Error::Dimension {
                    context: "layer shapes",
                    expected: *sizes.last().unwrap(),
                    got: i,
                });
            }
            sizes.push(l.weight.ncols());
        }
        Ok(Mlp { sizes, layers })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().all(|x| x.is_finite()) && l.bias.iter().all(|x| x.is_finite()))
    }

    /// Single-sample forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, Cache)> {
        let x = Array2::from_shape_vec((1, input.len()), input.to_vec())
            .expect("row vector shape");
        let cache = self.forward_batch(x)?;
        let out = cache.output().row(0).to_vec();
        Ok((out, cache))
    }

    /// Batched forward pass, one sample per row of `input`.
    pub fn forward_batch(&self, input: Array2<f64>) -> Result<Cache> {
        if input.ncols() != self.input_dim() {
            return Err(Error::Dimension {
                context: "network input",
                expected: self.input_dim(),
                got: input.ncols(),
            });
        }
        let last = self.layers.len() - 1;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input);
        for (l, layer) in self.layers.iter().enumerate() {
            let prev = &activations[l];
            let mut z = Array2::zeros((prev.nrows(), layer.weight.ncols()));
            z += &layer.bias;
            if l == 0 {
                sparse_input_matmul(prev, &layer.weight, &mut z);
            } else {
                general_mat_mul(1.0, prev, &layer.weight, 1.0, &mut z);
            }
            if l != last {
                z.mapv_inplace(tanh);
            }
            activations.push(z);
        }
        Ok(Cache { activations })
    }

    /// Gradient of `<output_grad, output>` for a single-sample cache.
    pub fn backward(&self, cache: &Cache, output_grad: &[f64]) -> Result<Gradients> {
        let g = Array2::from_shape_vec((1, output_grad.len()), output_grad.to_vec())
            .expect("row vector shape");
        self.backward_batch(cache, &g)
    }

    /// Gradient of `sum_rows <output_grad_row, output_row>` with respect to
    /// every parameter.
    pub fn backward_batch(&self, cache: &Cache, output_grad: &Array2<f64>) -> Result<Gradients> {
        let acts = &cache.activations;
        let stale = acts.len() != self.layers.len() + 1
            || acts
                .iter()
                .zip(&self.sizes)
                .any(|(a, &s)| a.ncols() != s);
        if stale {
            return Err(Error::Contract(
                "activation cache does not match network shape".into(),
            ));
        }
        let rows = acts[0].nrows();
        if output_grad.dim() != (rows, self.output_dim()) {
            return Err(Error::Dimension {
                context: "output gradient",
                expected: rows * self.output_dim(),
                got: output_grad.len(),
            });
        }

        let mut grads = Gradients::zeros_like(self);
        let mut delta = output_grad.clone();
        for l in (0..self.layers.len()).rev() {
            let a_prev = &acts[l];
            grads.biases[l] = delta.sum_axis(Axis(0));
            if l == 0 {
                sparse_input_grad(a_prev, &delta, &mut grads.weights[0]);
            } else {
                general_mat_mul(1.0, &a_prev.t(), &delta, 0.0, &mut grads.weights[l]);
                let mut next = Array2::zeros(a_prev.raw_dim());
                general_mat_mul(1.0, &delta, &self.layers[l].weight.t(), 0.0, &mut next);
                Zip::from(&mut next)
                    .and(a_prev)
                    .for_each(|d, &a| *d *= 1.0 - a * a);
                delta = next;
            }
        }
        Ok(grads)
    }

    /// Writes the shape header followed by every weight (row-major) and bias,
    /// layer by layer, as little-endian `f64`.
    pub fn write_params<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_u32::<LittleEndian>(PARAMS_VERSION)?;
        w.write_u32::<LittleEndian>(self.sizes.len() as u32)?;
        for &s in &self.sizes {
            w.write_u64::<LittleEndian>(s as u64)?;
        }
        for layer in &self.layers {
            for &x in layer.weight.iter() {
                w.write_f64::<LittleEndian>(x)?;
            }
            for &x in layer.bias.iter() {
                w.write_f64::<LittleEndian>(x)?;
            }
        }
        Ok(())
    }

    pub fn read_params<R: Read>(r: &mut R) -> Result<Self> {
        let bad = |e: std::io::Error| Error::Checkpoint(format!("network section: {e}"));
        let version = r.read_u32::<LittleEndian>().map_err(bad)?;
        if version != PARAMS_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported parameter version {version}"
            )));
        }
        let n = r.read_u32::<LittleEndian>().map_err(bad)? as usize;
        if !(2..=64).contains(&n) {
            return Err(Error::Checkpoint(format!("implausible layer count {n}")));
        }
        let mut sizes = Vec::with_capacity(n);
        for _ in 0..n {
            let s = r.read_u64::<LittleEndian>().map_err(bad)? as usize;
            if s == 0 || s > 1 << 20 {
                return Err(Error::Checkpoint(format!("implausible layer size {s}")));
            }
            sizes.push(s);
        }
        let mut layers = Vec::with_capacity(n - 1);
        for w in sizes.windows(2) {
            let mut weight = Array2::zeros((w[0], w[1]));
            for x in weight.iter_mut() {
                *x = r.read_f64::<LittleEndian>().map_err(bad)?;
            }
            let mut bias = Array1::zeros(w[1]);
            for x in bias.iter_mut() {
                *x = r.read_f64::<LittleEndian>().map_err(bad)?;
            }
            layers.push(Dense { weight, bias });
        }
        Ok(Mlp { sizes, layers })
    }
}

/// `tanh` through a single `exp`, about three times faster than the libm
/// routine; absolute error stays at the level of a few ulps of 1.
#[inline]
fn tanh(x: f64) -> f64 {
    let e = (-2.0 * x.abs()).exp();
    ((1.0 - e) / (1.0 + e)).copysign(x)
}

/// `z += x W`, skipping zero entries of `x`.
fn sparse_input_matmul(x: &Array2<f64>, w: &Array2<f64>, z: &mut Array2<f64>) {
    for (xr, mut zr) in x.outer_iter().zip(z.outer_iter_mut()) {
        let zs = zr.as_slice_mut().expect("standard layout");
        for (i, &xi) in xr.iter().enumerate() {
            if xi != 0.0 {
                let wr = w.row(i);
                let ws = wr.as_slice().expect("standard layout");
                for (zo, &wo) in zs.iter_mut().zip(ws) {
                    *zo += xi * wo;
                }
            }
        }
    }
}

/// `grad = x^T delta`, skipping zero entries of `x`.
fn sparse_input_grad(x: &Array2<f64>, delta: &Array2<f64>, grad: &mut Array2<f64>) {
    grad.fill(0.0);
    for (xr, dr) in x.outer_iter().zip(delta.outer_iter()) {
        let ds = dr.as_slice().expect("standard layout");
        for (i, &xi) in xr.iter().enumerate() {
            if xi != 0.0 {
                let mut gr = grad.row_mut(i);
                let gs = gr.as_slice_mut().expect("standard layout");
                for (go, &d) in gs.iter_mut().zip(ds) {
                    *go += xi * d;
                }
            }
        }
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Gradients,
    v: Gradients,
}

impl Adam {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) -> Result<()> {
        if !grads.congruent(net) || !self.m.congruent(net) {
            return Err(Error::Contract(
                "gradient or optimizer state not congruent with network".into(),
            ));
        }
        if !grads.is_finite() {
            return Err(Error::Training {
                step: self.step + 1,
                msg: "non-finite gradient".into(),
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let (lr, eps) = (self.lr, self.eps);
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        };
        for (l, layer) in net.layers.iter_mut().enumerate() {
            Zip::from(&mut layer.weight)
                .and(&mut self.m.weights[l])
                .and(&mut self.v.weights[l])
                .and(&grads.weights[l])
                .for_each(|p, m, v, &g| update(p, m, v, g));
            Zip::from(&mut layer.bias)
                .and(&mut self.m.biases[l])
                .and(&mut self.v.biases[l])
                .and(&grads.biases[l])
                .for_each(|p, m, v, &g| update(p, m, v, g));
        }
        Ok(())
    }

    pub fn write_state<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        for x in [self.lr, self.beta1, self.beta2, self.eps] {
            w.write_f64::<LittleEndian>(x)?;
        }
        w.write_u64::<LittleEndian>(self.step)?;
        for g in [&self.m, &self.v] {
            for (wt, b) in g.weights.iter().zip(&g.biases) {
                for &x in wt.iter().chain(b.iter()) {
                    w.write_f64::<LittleEndian>(x)?;
                }
            }
        }
        Ok(())
    }

    /// Reads optimizer state shaped after `net`.
    pub fn read_state<R: Read>(r: &mut R, net: &Mlp) -> Result<Self> {
        let bad = |e: std::io::Error| Error::Checkpoint(format!("optimizer section: {e}"));
        let mut hp = [0.0; 4];
        for x in hp.iter_mut() {
            *x = r.read_f64::<LittleEndian>().map_err(bad)?;
        }
        let step = r.read_u64::<LittleEndian>().map_err(bad)?;
        let mut m = Gradients::zeros_like(net);
        let mut v = Gradients::zeros_like(net);
        for g in [&mut m, &mut v] {
            for (wt, b) in g.weights.iter_mut().zip(g.biases.iter_mut()) {
                for x in wt.iter_mut().chain(b.iter_mut()) {
                    *x = r.read_f64::<LittleEndian>().map_err(bad)?;
                }
            }
        }
        Ok(Adam {
            lr: hp[0],
            beta1: hp[1],
            beta2: hp[2],
            eps: hp[3],
            step,
            m,
            v,
        })
    }
}

/// `target <- tau * target + (1 - tau) * source`, parameter-wise.
pub fn soft_update(target: &mut Mlp, source: &Mlp, tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::config("tau", format!("{tau} is outside [0, 1]")));
    }
    if target.sizes != source.sizes {
        return Err(Error::Contract(format!(
            "soft update between shapes {:?} and {:?}",
            target.sizes, source.sizes
        )));
    }
    for (t, s) in target.layers.iter_mut().zip(&source.layers) {
        Zip::from(&mut t.weight)
            .and(&s.weight)
            .for_each(|a, &b| *a = tau * *a + (1.0 - tau) * b);
        Zip::from(&mut t.bias)
            .and(&s.bias)
            .for_each(|a, &b| *a = tau * *a + (1.0 - tau) * b);
    }
    Ok(())
}
