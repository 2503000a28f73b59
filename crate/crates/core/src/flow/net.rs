//! Scale/translation networks for coupling layers: small MLPs with a
//! leaky-rectifier hidden nonlinearity and an optional compression stage.
//!
//! With compression: `in -> hidden -> compressed -> out` (three affine
//! stages); without it the middle stage is removed. The scale head is a
//! hyperbolic tangent (clamped to ±8 as an overflow guard), the
//! translation head is the identity.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

const LEAKY_SLOPE: f64 = 0.01;
const SCALE_CLAMP: f64 = 8.0;

/// Output nonlinearity of the last affine stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    /// tanh, clamped to [-8, 8]; used for the scale output.
    BoundedScale,
    /// identity; used for the translation output.
    Translation,
}

/// Layer sizing for a scale/translation network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetShape {
    pub input: usize,
    pub hidden: usize,
    /// `Some(width)` inserts the compression stage.
    pub compressed: Option<usize>,
    pub output: usize,
}

impl NetShape {
    fn stage_dims(&self) -> Vec<(usize, usize)> {
        match self.compressed {
            Some(c) => vec![(self.input, self.hidden), (self.hidden, c), (c, self.output)],
            None => vec![(self.input, self.hidden), (self.hidden, self.output)],
        }
    }
}

/// Feed-forward network with per-stage weights `(in, out)` and biases.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleTranslateNet {
    pub(crate) weights: Vec<Array2<f64>>,
    pub(crate) biases: Vec<Array1<f64>>,
    pub(crate) head: Head,
}

/// Stage inputs captured during a forward pass, consumed by `backward`.
#[derive(Debug)]
pub struct NetCache {
    /// inputs[k] is what stage k consumed; inputs.len() == n_stages + 1 and
    /// the final entry is the head output.
    inputs: Vec<Array2<f64>>,
}

/// Parameter gradients with the same shapes as the network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetGrads {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl ScaleTranslateNet {
    /// Training initialization: fan-in scaled uniform hidden stages, zeroed
    /// final stage so a fresh flow is the identity map.
    pub fn init<R: Rng>(shape: NetShape, head: Head, rng: &mut R) -> Self {
        let dims = shape.stage_dims();
        let last = dims.len() - 1;
        let mut weights = Vec::with_capacity(dims.len());
        let mut biases = Vec::with_capacity(dims.len());
        for (k, &(n_in, n_out)) in dims.iter().enumerate() {
            let w = if k == last {
                Array2::zeros((n_in, n_out))
            } else {
                let bound = 1.0 / (n_in as f64).sqrt();
                Array2::from_shape_fn((n_in, n_out), |_| rng.gen_range(-bound..bound))
            };
            weights.push(w);
            biases.push(Array1::zeros(n_out));
        }
        ScaleTranslateNet { weights, biases, head }
    }

    /// Fills every stage (including the output stage) with fan-in scaled
    /// uniform weights; produces a non-identity network.
    pub fn random<R: Rng>(shape: NetShape, head: Head, scale: f64, rng: &mut R) -> Self {
        let mut net = Self::init(shape, head, rng);
        for (w, b) in net.weights.iter_mut().zip(net.biases.iter_mut()) {
            let bound = scale / (w.nrows() as f64).sqrt();
            w.mapv_inplace(|_| rng.gen_range(-bound..bound));
            b.mapv_inplace(|_| rng.gen_range(-bound..bound));
        }
        net
    }

    pub fn shape(&self) -> NetShape {
        NetShape {
            input: self.weights[0].nrows(),
            hidden: self.weights[0].ncols(),
            compressed: if self.weights.len() == 3 { Some(self.weights[1].ncols()) } else { None },
            output: self.weights.last().unwrap().ncols(),
        }
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn n_stages(&self) -> usize {
        self.weights.len()
    }

    fn apply_head(&self, p: &mut Array2<f64>) {
        match self.head {
            Head::BoundedScale => {
                p.mapv_inplace(|v| v.tanh().clamp(-SCALE_CLAMP, SCALE_CLAMP));
            }
            Head::Translation => {}
        }
    }

    /// Batched forward pass over rows of `x` (B x in) -> (B x out).
    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut h = x.clone();
        let last = self.weights.len() - 1;
        for (k, (w, b)) in self.weights.iter().zip(self.biases.iter()).enumerate() {
            let mut p = h.dot(w) + b;
            if k < last {
                p.mapv_inplace(|v| if v > 0.0 { v } else { LEAKY_SLOPE * v });
            } else {
                self.apply_head(&mut p);
            }
            h = p;
        }
        h
    }

    /// Forward pass that records stage inputs for a later [`Self::backward`].
    pub fn forward_cached(&self, x: &Array2<f64>) -> (Array2<f64>, NetCache) {
        let mut inputs = Vec::with_capacity(self.weights.len() + 1);
        let mut h = x.clone();
        let last = self.weights.len() - 1;
        for (k, (w, b)) in self.weights.iter().zip(self.biases.iter()).enumerate() {
            inputs.push(h.clone());
            let mut p = h.dot(w) + b;
            if k < last {
                p.mapv_inplace(|v| if v > 0.0 { v } else { LEAKY_SLOPE * v });
            } else {
                self.apply_head(&mut p);
            }
            h = p;
        }
        inputs.push(h.clone());
        (h, NetCache { inputs })
    }

    /// Reverse-mode pass: given dL/d(output), returns dL/d(input) and the
    /// parameter gradients (summed over the batch).
    pub fn backward(&self, cache: &NetCache, d_out: &Array2<f64>) -> (Array2<f64>, NetGrads) {
        let n = self.weights.len();
        let mut d_weights = vec![Array2::zeros((0, 0)); n];
        let mut d_biases = vec![Array1::zeros(0); n];

        // head derivative from the recorded output activation
        let out_act = &cache.inputs[n];
        let mut d_pre = match self.head {
            Head::BoundedScale => {
                // clamp is inert for |tanh| <= 1, derivative is 1 - a^2
                let mut d = d_out.clone();
                d.zip_mut_with(out_act, |g, a| *g *= 1.0 - a * a);
                d
            }
            Head::Translation => d_out.clone(),
        };

        let mut d_input = Array2::zeros((0, 0));
        for k in (0..n).rev() {
            let stage_in = &cache.inputs[k];
            d_weights[k] = stage_in.t().dot(&d_pre);
            d_biases[k] = d_pre.sum_axis(Axis(0));
            let d_h = d_pre.dot(&self.weights[k].t());
            if k > 0 {
                // stage_in is a leaky-rectifier output; its sign matches the
                // pre-activation sign (slope stays positive)
                let mut d = d_h;
                d.zip_mut_with(stage_in, |g, a| {
                    if *a <= 0.0 {
                        *g *= LEAKY_SLOPE;
                    }
                });
                d_pre = d;
            } else {
                d_input = d_h;
            }
        }
        (d_input, NetGrads { weights: d_weights, biases: d_biases })
    }

    pub fn zero_grads(&self) -> NetGrads {
        NetGrads {
            weights: self.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: self.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }
}
