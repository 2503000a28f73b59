//! Affine coupling layers: pass-through of masked dimensions, affine
//! transform of the complement driven by scale/translation networks that
//! see only the masked part.

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::flow::mask::{build_mask, MaskSpec};
use crate::flow::net::ScaleTranslateNet;

/// One coupling layer. The networks take the masked input (zeros at
/// transformed positions) and emit full-width outputs of which only the
/// complement positions are consumed.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingLayer {
    pub mask_spec: MaskSpec,
    pub s_net: ScaleTranslateNet,
    pub t_net: ScaleTranslateNet,
}

impl CouplingLayer {
    pub fn new(mask_spec: MaskSpec, s_net: ScaleTranslateNet, t_net: ScaleTranslateNet) -> Result<Self> {
        let d = mask_spec.dim;
        for (name, net) in [("scale", &s_net), ("translation", &t_net)] {
            let shape = net.shape();
            if shape.input != d || shape.output != d {
                return Err(Error::validation(format!(
                    "{name} net arity ({} -> {}) does not match mask dim {d}",
                    shape.input, shape.output
                )));
            }
        }
        Ok(CouplingLayer { mask_spec, s_net, t_net })
    }

    pub fn dim(&self) -> usize {
        self.mask_spec.dim
    }

    /// Binary mask of this layer (learned logits thresholded and repaired).
    pub fn mask(&self) -> Result<Array1<f64>> {
        build_mask(&self.mask_spec)
    }

    fn check_finite(values: &Array2<f64>, what: &str, layer: usize) -> Result<()> {
        for ((b, j), v) in values.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::numeric(format!(
                    "non-finite {what} at layer {layer}, batch row {b}, position {j}"
                )));
            }
        }
        Ok(())
    }

    /// Batched forward transform with a caller-supplied mask; returns the
    /// output rows and per-row log-det contributions.
    pub(crate) fn forward_batch_with_mask(
        &self,
        x: &Array2<f64>,
        mask: &Array1<f64>,
        layer_index: usize,
    ) -> Result<(Array2<f64>, Array1<f64>)> {
        let masked = x * mask;
        let s = self.s_net.forward(&masked);
        let t = self.t_net.forward(&masked);
        let inv_mask = mask.mapv(|b| 1.0 - b);
        let y = &masked + &(&inv_mask * &(x * &s.mapv(f64::exp) + &t));
        Self::check_finite(&y, "output", layer_index)?;
        let logdet = (&s * &inv_mask).sum_axis(Axis(1));
        Ok((y, logdet))
    }

    /// Batched inverse transform with a caller-supplied mask.
    pub(crate) fn inverse_batch_with_mask(
        &self,
        y: &Array2<f64>,
        mask: &Array1<f64>,
        layer_index: usize,
    ) -> Result<Array2<f64>> {
        let masked = y * mask;
        let s = self.s_net.forward(&masked);
        let t = self.t_net.forward(&masked);
        let inv_mask = mask.mapv(|b| 1.0 - b);
        let x = &masked + &(&inv_mask * &((y - &t) * &s.mapv(|v| (-v).exp())));
        Self::check_finite(&x, "output", layer_index)?;
        Ok(x)
    }

    /// y = b.x + (1-b).(x.exp(s(b.x)) + t(b.x)); log-det is the sum of
    /// scale outputs over the transformed positions.
    pub fn forward(&self, x: &Array1<f64>) -> Result<(Array1<f64>, f64)> {
        self.check_input(x)?;
        let mask = self.mask()?;
        let batch = x.view().insert_axis(Axis(0)).to_owned();
        let (y, ld) = self.forward_batch_with_mask(&batch, &mask, self.mask_spec.layer_index)?;
        Ok((y.index_axis(Axis(0), 0).to_owned(), ld[0]))
    }

    /// Exact inverse of [`Self::forward`].
    pub fn inverse(&self, y: &Array1<f64>) -> Result<Array1<f64>> {
        self.check_input(y)?;
        let mask = self.mask()?;
        let batch = y.view().insert_axis(Axis(0)).to_owned();
        let x = self.inverse_batch_with_mask(&batch, &mask, self.mask_spec.layer_index)?;
        Ok(x.index_axis(Axis(0), 0).to_owned())
    }

    fn check_input(&self, v: &Array1<f64>) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::validation(format!(
                "input has dim {}, layer expects {}",
                v.len(),
                self.dim()
            )));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::numeric("non-finite input to coupling layer".to_string()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::mask::MaskStrategy;
    use crate::flow::net::{Head, NetShape, ScaleTranslateNet};
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn shape(d: usize) -> NetShape {
        NetShape { input: d, hidden: 16, compressed: Some(8), output: d }
    }

    fn zero_layer(d: usize) -> CouplingLayer {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        CouplingLayer::new(
            MaskSpec::fixed(MaskStrategy::Checkerboard, 0, d),
            ScaleTranslateNet::init(shape(d), Head::BoundedScale, &mut rng),
            ScaleTranslateNet::init(shape(d), Head::Translation, &mut rng),
        )
        .unwrap()
    }

    fn random_layer(d: usize, seed: u64) -> CouplingLayer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CouplingLayer::new(
            MaskSpec::fixed(MaskStrategy::Checkerboard, 0, d),
            ScaleTranslateNet::random(shape(d), Head::BoundedScale, 1.0, &mut rng),
            ScaleTranslateNet::random(shape(d), Head::Translation, 1.0, &mut rng),
        )
        .unwrap()
    }

    #[test]
    fn identity_at_zero_initialization() {
        let layer = zero_layer(6);
        let x = array![0.5, -1.0, 2.0, 0.25, -0.75, 3.0];
        let (y, logdet) = layer.forward(&x).unwrap();
        assert_eq!(y, x);
        assert_eq!(logdet, 0.0);
    }

    /// D=2, b=[1,0], constant nets: y = [x1, x2*e^a + c], logdet = a.
    /// Constructed by zeroing all weights and setting output biases, so the
    /// scale is a = tanh(0.5) and the translation c = 0.3.
    #[test]
    fn closed_form_d2() {
        let mut layer = zero_layer(2);
        let n_stages = layer.s_net.n_stages();
        layer.s_net.biases[n_stages - 1][1] = 0.5;
        layer.t_net.biases[n_stages - 1][1] = 0.3;
        let a = 0.5f64.tanh();
        let c = 0.3;

        let x = array![1.25, -0.5];
        let (y, logdet) = layer.forward(&x).unwrap();
        assert_abs_diff_eq!(y[0], x[0], epsilon = 1e-15);
        assert_abs_diff_eq!(y[1], x[1] * a.exp() + c, epsilon = 1e-12);
        assert_abs_diff_eq!(logdet, a, epsilon = 1e-15);

        // hand inversion: x2 = (y2 - c) * e^{-a}
        let back = layer.inverse(&y).unwrap();
        assert_abs_diff_eq!(back[0], x[0], epsilon = 1e-15);
        assert_abs_diff_eq!(back[1], (y[1] - c) * (-a).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(back[1], x[1], epsilon = 1e-12);
    }

    #[test]
    fn inverse_round_trip_d16() {
        let layer = random_layer(16, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        use rand::Rng;
        for _ in 0..20 {
            let x = Array1::from_shape_fn(16, |_| rng.gen_range(-2.0..2.0));
            let (y, _) = layer.forward(&x).unwrap();
            let back = layer.inverse(&y).unwrap();
            for (a, b) in back.iter().zip(x.iter()) {
                assert!((a - b).abs() < 1e-10, "round trip residual {}", (a - b).abs());
            }
        }
    }

    /// Oracle: finite-difference Jacobian, dense determinant via LU.
    fn numeric_logdet(layer: &CouplingLayer, x: &Array1<f64>) -> f64 {
        let d = x.len();
        let h = 1e-6;
        let mut jac = nalgebra::DMatrix::<f64>::zeros(d, d);
        for j in 0..d {
            let mut xp = x.clone();
            xp[j] += h;
            let mut xm = x.clone();
            xm[j] -= h;
            let (yp, _) = layer.forward(&xp).unwrap();
            let (ym, _) = layer.forward(&xm).unwrap();
            for i in 0..d {
                jac[(i, j)] = (yp[i] - ym[i]) / (2.0 * h);
            }
        }
        jac.determinant().abs().ln()
    }

    #[test]
    fn logdet_matches_numeric_jacobian() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        use rand::Rng;
        for seed in 0..5 {
            let layer = random_layer(8, 100 + seed);
            let x = Array1::from_shape_fn(8, |_| rng.gen_range(-1.5..1.5));
            let (_, analytic) = layer.forward(&x).unwrap();
            let numeric = numeric_logdet(&layer, &x);
            assert!(
                (analytic - numeric).abs() < 1e-3,
                "logdet mismatch: analytic {analytic} vs numeric {numeric}"
            );
        }
    }

    #[test]
    fn arity_mismatch_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let bad = CouplingLayer::new(
            MaskSpec::fixed(MaskStrategy::Checkerboard, 0, 6),
            ScaleTranslateNet::init(shape(4), Head::BoundedScale, &mut rng),
            ScaleTranslateNet::init(shape(6), Head::Translation, &mut rng),
        );
        assert!(bad.is_err());
    }

    #[test]
    fn overflow_reported_as_numeric_error() {
        let mut layer = zero_layer(2);
        let n = layer.s_net.n_stages();
        layer.s_net.biases[n - 1][1] = 5.0; // s = tanh(5) ~ 1
        let x = array![1.0, 1e308];
        match layer.forward(&x) {
            Err(Error::Numeric(msg)) => assert!(msg.contains("layer")),
            other => panic!("expected numeric error, got {other:?}"),
        }
    }
}
