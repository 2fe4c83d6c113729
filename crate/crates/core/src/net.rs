//! Fully connected networks `R^d -> R^D` with analytic activations.
//!
//! Parameter layout, layer by layer: the weight matrix (`out x in`, row-major)
//! followed by the bias vector. Hidden layers apply the activation, the output
//! layer is affine.
//!
//! [`forward_jet`] pushes a [`Jet2`] through every layer, so the network's value,
//! input gradient and input Laplacian come out exactly. [`param_gradient`]
//! differentiates any linear functional of those jets (a [`JetAdjoint`]) with
//! respect to the parameters by running the jet recursion backwards.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::jet::Jet2;
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Tanh,
    Sin,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Sin => "sin",
        }
    }

    /// `σ, σ′, σ″, σ‴` at `z`.
    #[inline]
    fn derivatives(self, z: f64) -> [f64; 4] {
        match self {
            Activation::Tanh => {
                let t = math::tanh(z);
                let s = 1.0 - t * t;
                [t, s, -2.0 * t * s, s * (6.0 * t * t - 2.0)]
            }
            Activation::Sin => {
                let (s, c) = (math::sin(z), math::cos(z));
                [s, c, -s, -c]
            }
        }
    }
}

impl core::str::FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "sin" => Ok(Activation::Sin),
            other => Err(Error::Config(format!(
                "unknown activation `{other}` (expected tanh or sin)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetworkConfig {
    pub input_dim: usize,
    pub output_dim: usize,
    /// Neurons per hidden layer.
    pub width: usize,
    /// Number of hidden layers.
    pub depth: usize,
    pub activation: Activation,
    pub seed: u64,
}

impl NetworkConfig {
    pub fn new(input_dim: usize, output_dim: usize, width: usize, depth: usize) -> Self {
        Self {
            input_dim,
            output_dim,
            width,
            depth,
            activation: Activation::Tanh,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.width == 0 || self.depth == 0 {
            return Err(Error::Config(format!(
                "network dimensions must be positive: {self:?}"
            )));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every affine layer, input to output.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.depth + 1);
        shapes.push((self.input_dim, self.width));
        for _ in 1..self.depth {
            shapes.push((self.width, self.width));
        }
        shapes.push((self.width, self.output_dim));
        shapes
    }

    /// Total number of weights and biases, `M`.
    pub fn param_count(&self) -> usize {
        let (d, w, out) = (self.input_dim, self.width, self.output_dim);
        (d * w + w) + (self.depth - 1) * (w * w + w) + (w * out + out)
    }

    /// Glorot-uniform weights, zero biases; deterministic in `seed`.
    pub fn init(&self, seed: u64) -> ParameterVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(self.param_count());
        for (fan_in, fan_out) in self.layer_shapes() {
            let bound = math::sqrt(6.0 / (fan_in + fan_out) as f64);
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            params.extend((0..fan_in * fan_out).map(|_| dist.sample(&mut rng)));
            params.extend(core::iter::repeat_n(0.0, fan_out));
        }
        ParameterVector(params)
    }
}

/// Flat weights and biases in layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector(pub Vec<f64>);

impl ParameterVector {
    pub fn zeros(cfg: &NetworkConfig) -> Self {
        Self(vec![0.0; cfg.param_count()])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Value, gradient and Laplacian of each output component.
#[derive(Debug, Clone, PartialEq)]
pub struct NetJet(pub Vec<Jet2>);

impl NetJet {
    pub fn zero(output_dim: usize, input_dim: usize) -> Self {
        Self(vec![Jet2::zero(input_dim); output_dim])
    }

    pub fn components(&self) -> &[Jet2] {
        &self.0
    }

    pub fn values(&self) -> Vec<f64> {
        self.0.iter().map(|j| j.value).collect()
    }

    /// Componentwise `self += k * other`.
    pub fn add_scaled(&mut self, k: f64, other: &NetJet) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            a.add_scaled(k, b);
        }
    }
}

/// Sensitivities of a scalar loss to each output's value, gradient and
/// Laplacian. Stored with the same shape as a [`NetJet`].
#[derive(Debug, Clone, PartialEq)]
pub struct JetAdjoint(pub Vec<Jet2>);

impl JetAdjoint {
    pub fn zero(output_dim: usize, input_dim: usize) -> Self {
        Self(vec![Jet2::zero(input_dim); output_dim])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(Jet2::is_finite)
    }
}

/// Per-layer jets of one point, kept for the backward sweep.
///
/// For layer `l` (input to output): `z` holds the pre-activation jets, `h`
/// the post-activation jets (absent for the output layer).
#[derive(Debug, Clone)]
pub struct Tape {
    d: usize,
    input: Vec<f64>,
    layers: Vec<LayerTape>,
}

#[derive(Debug, Clone, Default)]
struct LayerTape {
    n: usize,
    z_val: Vec<f64>,
    z_grad: Vec<f64>,
    z_lap: Vec<f64>,
    // σ..σ‴ at z, hidden layers only
    sigma: Vec<[f64; 4]>,
    h_val: Vec<f64>,
    h_grad: Vec<f64>,
    h_lap: Vec<f64>,
}

fn check_shapes(cfg: &NetworkConfig, params: &[f64], x: &[f64]) -> Result<()> {
    if params.len() != cfg.param_count() {
        return Err(Error::Shape(format!(
            "expected {} parameters, got {}",
            cfg.param_count(),
            params.len()
        )));
    }
    if x.len() != cfg.input_dim {
        return Err(Error::Shape(format!(
            "expected a point of dimension {}, got {}",
            cfg.input_dim,
            x.len()
        )));
    }
    Ok(())
}

/// Value, input gradient and input Laplacian of the network at `x`.
pub fn forward_jet(params: &ParameterVector, cfg: &NetworkConfig, x: &[f64]) -> Result<NetJet> {
    forward_tape(params, cfg, x).map(|(jet, _)| jet)
}

/// Like [`forward_jet`], also returning the tape needed by [`Tape::backprop`].
pub fn forward_tape(
    params: &ParameterVector,
    cfg: &NetworkConfig,
    x: &[f64],
) -> Result<(NetJet, Tape)> {
    let p = params.as_slice();
    check_shapes(cfg, p, x)?;
    let d = cfg.input_dim;
    let shapes = cfg.layer_shapes();
    let n_layers = shapes.len();
    let mut layers: Vec<LayerTape> = Vec::with_capacity(n_layers);
    let mut offset = 0;

    for (l, &(n_in, n_out)) in shapes.iter().enumerate() {
        let w = &p[offset..offset + n_in * n_out];
        let b = &p[offset + n_in * n_out..offset + n_in * n_out + n_out];
        offset += n_in * n_out + n_out;

        let mut lt = LayerTape {
            n: n_out,
            z_val: vec![0.0; n_out],
            z_grad: vec![0.0; n_out * d],
            z_lap: vec![0.0; n_out],
            ..Default::default()
        };
        if l == 0 {
            // input jets: value x_j, gradient e_j, Laplacian 0
            for i in 0..n_out {
                let row = &w[i * n_in..(i + 1) * n_in];
                lt.z_val[i] = b[i] + row.iter().zip(x).map(|(wij, xj)| wij * xj).sum::<f64>();
                lt.z_grad[i * d..(i + 1) * d].copy_from_slice(row);
            }
        } else {
            let prev = &layers[l - 1];
            for i in 0..n_out {
                let row = &w[i * n_in..(i + 1) * n_in];
                let mut v = b[i];
                let mut lap = 0.0;
                let zg = &mut lt.z_grad[i * d..(i + 1) * d];
                for (j, &wij) in row.iter().enumerate() {
                    v += wij * prev.h_val[j];
                    lap += wij * prev.h_lap[j];
                    for (g, hg) in zg.iter_mut().zip(&prev.h_grad[j * d..(j + 1) * d]) {
                        *g += wij * hg;
                    }
                }
                lt.z_val[i] = v;
                lt.z_lap[i] = lap;
            }
        }

        if l + 1 < n_layers {
            lt.sigma = lt.z_val.iter().map(|&z| cfg.activation.derivatives(z)).collect();
            lt.h_val = lt.sigma.iter().map(|s| s[0]).collect();
            lt.h_grad = vec![0.0; n_out * d];
            lt.h_lap = vec![0.0; n_out];
            for i in 0..n_out {
                let [_, s1, s2, _] = lt.sigma[i];
                let zg = &lt.z_grad[i * d..(i + 1) * d];
                let norm_sq: f64 = zg.iter().map(|g| g * g).sum();
                for (hg, g) in lt.h_grad[i * d..(i + 1) * d].iter_mut().zip(zg) {
                    *hg = s1 * g;
                }
                lt.h_lap[i] = s2 * norm_sq + s1 * lt.z_lap[i];
            }
        }

        let finite = lt.z_val.iter().chain(&lt.z_grad).chain(&lt.z_lap).all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite { layer: l });
        }
        layers.push(lt);
    }

    let out = layers.last().expect("at least one layer");
    let jet = NetJet(
        (0..out.n)
            .map(|k| Jet2 {
                value: out.z_val[k],
                gradient: out.z_grad[k * d..(k + 1) * d].to_vec(),
                laplacian: out.z_lap[k],
            })
            .collect(),
    );
    Ok((
        jet,
        Tape {
            d,
            input: x.to_vec(),
            layers,
        },
    ))
}

impl Tape {
    /// Accumulates `∂⟨adjoint, jet⟩/∂params` into `grad`.
    pub fn backprop(
        &self,
        params: &ParameterVector,
        cfg: &NetworkConfig,
        adjoint: &JetAdjoint,
        grad: &mut [f64],
    ) -> Result<()> {
        let p = params.as_slice();
        let d = self.d;
        if grad.len() != p.len() || adjoint.0.len() != cfg.output_dim {
            return Err(Error::Shape(format!(
                "gradient buffer {} / adjoint components {} do not match the network",
                grad.len(),
                adjoint.0.len()
            )));
        }
        if adjoint.0.iter().any(|a| a.dim() != d) {
            return Err(Error::Shape("adjoint gradient length differs from input dimension".into()));
        }
        let shapes = cfg.layer_shapes();
        let mut offsets = Vec::with_capacity(shapes.len());
        let mut off = 0;
        for &(n_in, n_out) in &shapes {
            offsets.push(off);
            off += n_in * n_out + n_out;
        }

        // adjoints of the current layer's pre-activation jets
        let mut zv: Vec<f64> = adjoint.0.iter().map(|a| a.value).collect();
        let mut zg: Vec<f64> = adjoint.0.iter().flat_map(|a| a.gradient.iter().copied()).collect();
        let mut zl: Vec<f64> = adjoint.0.iter().map(|a| a.laplacian).collect();

        for l in (0..shapes.len()).rev() {
            let (n_in, n_out) = shapes[l];
            let base = offsets[l];
            let w = &p[base..base + n_in * n_out];
            {
                let (gw, gb) = grad[base..base + n_in * n_out + n_out].split_at_mut(n_in * n_out);
                for i in 0..n_out {
                    gb[i] += zv[i];
                }
                if l == 0 {
                    for i in 0..n_out {
                        let zgi = &zg[i * d..(i + 1) * d];
                        for j in 0..n_in {
                            // input jet: value x_j, gradient e_j, Laplacian 0
                            gw[i * n_in + j] += zv[i] * self.input[j] + zgi[j];
                        }
                    }
                } else {
                    let prev = &self.layers[l - 1];
                    for i in 0..n_out {
                        let zgi = &zg[i * d..(i + 1) * d];
                        for j in 0..n_in {
                            let dot: f64 = zgi
                                .iter()
                                .zip(&prev.h_grad[j * d..(j + 1) * d])
                                .map(|(a, b)| a * b)
                                .sum();
                            gw[i * n_in + j] += zv[i] * prev.h_val[j] + dot + zl[i] * prev.h_lap[j];
                        }
                    }
                }
            }
            if l == 0 {
                break;
            }

            // adjoints of the previous layer's activations
            let mut hv = vec![0.0; n_in];
            let mut hg = vec![0.0; n_in * d];
            let mut hl = vec![0.0; n_in];
            for i in 0..n_out {
                let row = &w[i * n_in..(i + 1) * n_in];
                let zgi = &zg[i * d..(i + 1) * d];
                for (j, &wij) in row.iter().enumerate() {
                    hv[j] += wij * zv[i];
                    hl[j] += wij * zl[i];
                    for (a, g) in hg[j * d..(j + 1) * d].iter_mut().zip(zgi) {
                        *a += wij * g;
                    }
                }
            }

            // through h = σ(z)
            let prev = &self.layers[l - 1];
            let mut nzv = vec![0.0; n_in];
            let mut nzg = vec![0.0; n_in * d];
            let mut nzl = vec![0.0; n_in];
            for j in 0..n_in {
                let [_, s1, s2, s3] = prev.sigma[j];
                let zgj = &prev.z_grad[j * d..(j + 1) * d];
                let hgj = &hg[j * d..(j + 1) * d];
                let dot: f64 = hgj.iter().zip(zgj).map(|(a, b)| a * b).sum();
                let norm_sq: f64 = zgj.iter().map(|g| g * g).sum();
                nzv[j] = hv[j] * s1 + s2 * dot + hl[j] * (s3 * norm_sq + s2 * prev.z_lap[j]);
                for ((out, a), g) in nzg[j * d..(j + 1) * d].iter_mut().zip(hgj).zip(zgj) {
                    *out = a * s1 + 2.0 * hl[j] * s2 * g;
                }
                nzl[j] = hl[j] * s1;
            }
            zv = nzv;
            zg = nzg;
            zl = nzl;
        }
        Ok(())
    }
}

/// `Σ_batch ∂⟨adjoint, forward_jet(x)⟩/∂params`, summed in batch order.
pub fn param_gradient(
    params: &ParameterVector,
    cfg: &NetworkConfig,
    batch: &[(Vec<f64>, JetAdjoint)],
) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; cfg.param_count()];
    for (x, adjoint) in batch {
        if !adjoint.is_finite() {
            return Err(Error::Shape("adjoint contains non-finite entries".into()));
        }
        let (_, tape) = forward_tape(params, cfg, x)?;
        tape.backprop(params, cfg, adjoint, &mut grad)?;
    }
    Ok(grad)
}
