//! Three-layer perceptron `W3·σ(W2·σ(W1·[x; t_embed] + b1) + b2) + b3` with a
//! hand-written backward pass.

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    /// Linear network; only useful for checking the backward pass against closed forms.
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::Identity => v,
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    fn derivative_from_output(self, out: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - out * out,
            Activation::Identity => 1.0,
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::Identity => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Tanh),
            1 => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// Sample dimension; the network always maps R² (+ time features) to R².
pub const SAMPLE_DIM: usize = 2;

/// Weights and biases of the denoising network. Also used as the container
/// for gradients and optimizer moments, which share the exact same shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
    pub w3: Matrix,
    pub b3: Vec<f64>,
    pub activation: Activation,
}

/// Activations kept from a forward pass for the matching backward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    input: Vec<f64>,
    pre1: Vec<f64>,
    h1: Vec<f64>,
    pre2: Vec<f64>,
    h2: Vec<f64>,
    activation: Activation,
}

impl MlpCache {
    pub fn pre_activations(&self) -> (&[f64], &[f64]) {
        (&self.pre1, &self.pre2)
    }
}

pub const TENSOR_NAMES: [&str; 6] = ["w1", "b1", "w2", "b2", "w3", "b3"];

impl MlpParams {
    /// All-zero network.
    pub fn zeros(hidden: usize, embed_dim: usize, activation: Activation) -> Self {
        let input = SAMPLE_DIM + embed_dim;
        Self {
            w1: Matrix::zeros(hidden, input),
            b1: vec![0.0; hidden],
            w2: Matrix::zeros(hidden, hidden),
            b2: vec![0.0; hidden],
            w3: Matrix::zeros(SAMPLE_DIM, hidden),
            b3: vec![0.0; SAMPLE_DIM],
            activation,
        }
    }

    /// LeCun-normal weights, zero biases.
    pub fn init(hidden: usize, embed_dim: usize, rng: &mut Rng) -> Self {
        let mut p = Self::zeros(hidden, embed_dim, Activation::Tanh);
        for w in [&mut p.w1, &mut p.w2, &mut p.w3] {
            let scale = (1.0 / w.cols() as f64).sqrt();
            for v in w.as_mut_slice() {
                *v = rng.normal() * scale;
            }
        }
        p
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.hidden(), self.embed_dim(), self.activation)
    }

    pub fn hidden(&self) -> usize {
        self.w1.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn embed_dim(&self) -> usize {
        self.w1.cols() - SAMPLE_DIM
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Shape table in the fixed serialization order `w1 b1 w2 b2 w3 b3`.
    pub fn shape_table(&self) -> [(usize, usize); 6] {
        [
            self.w1.shape(),
            (self.b1.len(), 1),
            self.w2.shape(),
            (self.b2.len(), 1),
            self.w3.shape(),
            (self.b3.len(), 1),
        ]
    }

    pub fn tensors(&self) -> [&[f64]; 6] {
        [
            self.w1.as_slice(),
            &self.b1,
            self.w2.as_slice(),
            &self.b2,
            self.w3.as_slice(),
            &self.b3,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 6] {
        [
            self.w1.as_mut_slice(),
            &mut self.b1,
            self.w2.as_mut_slice(),
            &mut self.b2,
            self.w3.as_mut_slice(),
            &mut self.b3,
        ]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.shape_table() == other.shape_table()
    }

    /// Iterate over every parameter in serialization order.
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.tensors().into_iter().flat_map(|t| t.iter())
    }

    pub fn get_flat(&self, mut index: usize) -> f64 {
        for t in self.tensors() {
            if index < t.len() {
                return t[index];
            }
            index -= t.len();
        }
        panic!("flat parameter index out of range");
    }

    pub fn set_flat(&mut self, mut index: usize, value: f64) {
        for t in self.tensors_mut() {
            if index < t.len() {
                t[index] = value;
                return;
            }
            index -= t.len();
        }
        panic!("flat parameter index out of range");
    }

    /// `self += alpha · other`.
    pub fn axpy(&mut self, alpha: f64, other: &Self) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += alpha * y;
            }
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= alpha);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn forward(&self, x: [f64; 2], t_embed: &[f64]) -> Result<([f64; 2], MlpCache)> {
        if t_embed.len() != self.embed_dim() {
            return Err(Error::Config(format!(
                "time embedding has {} entries, network expects {}",
                t_embed.len(),
                self.embed_dim()
            )));
        }
        let h = self.hidden();
        let mut input = Vec::with_capacity(self.input_dim());
        input.extend_from_slice(&x);
        input.extend_from_slice(t_embed);

        let mut pre1 = vec![0.0; h];
        self.w1.affine_into(&input, &self.b1, &mut pre1);
        let h1: Vec<f64> = pre1.iter().map(|&v| self.activation.apply(v)).collect();
        let mut pre2 = vec![0.0; h];
        self.w2.affine_into(&h1, &self.b2, &mut pre2);
        let h2: Vec<f64> = pre2.iter().map(|&v| self.activation.apply(v)).collect();
        let mut out = [0.0; 2];
        self.w3.affine_into(&h2, &self.b3, &mut out);
        if !(out[0].is_finite() && out[1].is_finite()) {
            return Err(Error::Numeric("non-finite network output".into()));
        }
        Ok((
            out,
            MlpCache {
                input,
                pre1,
                h1,
                pre2,
                h2,
                activation: self.activation,
            },
        ))
    }

    fn check_cache(&self, cache: &MlpCache) -> Result<()> {
        if cache.input.len() != self.input_dim()
            || cache.h1.len() != self.hidden()
            || cache.h2.len() != self.hidden()
            || cache.activation != self.activation
        {
            return Err(Error::Internal(
                "activation cache does not match network shape".into(),
            ));
        }
        Ok(())
    }

    /// Gradient of `grad_out · output` with respect to every parameter.
    pub fn backward(&self, cache: &MlpCache, grad_out: [f64; 2]) -> Result<MlpParams> {
        let mut grad = self.zeros_like();
        self.backward_accumulate(cache, grad_out, 1.0, &mut grad)?;
        Ok(grad)
    }

    /// `grad += scale · ∂(grad_out · output)/∂params`.
    pub fn backward_accumulate(
        &self,
        cache: &MlpCache,
        grad_out: [f64; 2],
        scale: f64,
        grad: &mut MlpParams,
    ) -> Result<()> {
        self.check_cache(cache)?;
        if !grad.same_shape(self) {
            return Err(Error::Internal("gradient buffer has the wrong shape".into()));
        }
        let h = self.hidden();
        let act = self.activation;
        let g = [grad_out[0] * scale, grad_out[1] * scale];

        grad.w3.add_outer(&g, &cache.h2, 1.0);
        grad.b3[0] += g[0];
        grad.b3[1] += g[1];

        let mut d2 = vec![0.0; h];
        self.w3.transpose_matvec_into(&g, &mut d2);
        for (d, &o) in d2.iter_mut().zip(&cache.h2) {
            *d *= act.derivative_from_output(o);
        }
        grad.w2.add_outer(&d2, &cache.h1, 1.0);
        for (b, d) in grad.b2.iter_mut().zip(&d2) {
            *b += d;
        }

        let mut d1 = vec![0.0; h];
        self.w2.transpose_matvec_into(&d2, &mut d1);
        for (d, &o) in d1.iter_mut().zip(&cache.h1) {
            *d *= act.derivative_from_output(o);
        }
        grad.w1.add_outer(&d1, &cache.input, 1.0);
        for (b, d) in grad.b1.iter_mut().zip(&d1) {
            *b += d;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Scalar re-evaluation with explicit loops, independent of `Matrix`.
    fn reference_forward(p: &MlpParams, x: [f64; 2], e: &[f64]) -> [f64; 2] {
        let input: Vec<f64> = x.iter().chain(e.iter()).copied().collect();
        let act = |v: f64| match p.activation {
            Activation::Tanh => v.tanh(),
            Activation::Identity => v,
        };
        let layer = |w: &Matrix, b: &[f64], v: &[f64]| -> Vec<f64> {
            (0..w.rows())
                .map(|r| b[r] + (0..w.cols()).map(|c| w.get(r, c) * v[c]).sum::<f64>())
                .collect()
        };
        let h1: Vec<f64> = layer(&p.w1, &p.b1, &input).into_iter().map(act).collect();
        let h2: Vec<f64> = layer(&p.w2, &p.b2, &h1).into_iter().map(act).collect();
        let o = layer(&p.w3, &p.b3, &h2);
        [o[0], o[1]]
    }

    fn embed(n: usize, rng: &mut Rng) -> Vec<f64> {
        (0..n).map(|_| rng.normal()).collect()
    }

    #[test]
    fn zero_params_output_bias() {
        let mut p = MlpParams::zeros(8, 4, Activation::Tanh);
        p.b3 = vec![0.3, -0.7];
        let (out, _) = p.forward([5.0, -2.0], &[1.0; 4]).unwrap();
        assert_eq!(out, [0.3, -0.7]);
    }

    #[test]
    fn zero_first_layer_is_input_independent() {
        let mut rng = Rng::new(3);
        let mut p = MlpParams::init(1, 2, &mut rng);
        p.w1 = Matrix::zeros(1, 4);
        p.b1 = vec![0.4];
        p.b2 = vec![-0.2];
        p.b3 = vec![0.1, 0.2];
        let expected = [
            p.b3[0] + p.w3.get(0, 0) * (p.b2[0] + p.w2.get(0, 0) * 0.4f64.tanh()).tanh(),
            p.b3[1] + p.w3.get(1, 0) * (p.b2[0] + p.w2.get(0, 0) * 0.4f64.tanh()).tanh(),
        ];
        for x in [[0.0, 0.0], [3.0, -9.0]] {
            let (out, _) = p.forward(x, &[0.5, 0.5]).unwrap();
            assert!((out[0] - expected[0]).abs() < 1e-15);
            assert!((out[1] - expected[1]).abs() < 1e-15);
        }
    }

    #[test]
    fn forward_matches_scalar_reference() {
        let mut rng = Rng::new(42);
        let p = MlpParams::init(64, 16, &mut rng);
        let e = embed(16, &mut rng);
        let (out, _) = p.forward([0.5, -0.5], &e).unwrap();
        let want = reference_forward(&p, [0.5, -0.5], &e);
        assert!((out[0] - want[0]).abs() < 1e-13 && (out[1] - want[1]).abs() < 1e-13);
    }

    #[test]
    fn shape_mismatch_is_config_error() {
        let p = MlpParams::zeros(4, 3, Activation::Tanh);
        assert!(matches!(p.forward([0.0, 0.0], &[0.0; 2]), Err(Error::Config(_))));
    }

    #[test]
    fn mismatched_cache_is_internal_error() {
        let small = MlpParams::zeros(4, 2, Activation::Tanh);
        let big = MlpParams::zeros(8, 2, Activation::Tanh);
        let (_, cache) = small.forward([0.0, 0.0], &[0.0; 2]).unwrap();
        assert!(matches!(big.backward(&cache, [1.0, 0.0]), Err(Error::Internal(_))));
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let mut rng = Rng::new(5);
        let p = MlpParams::init(16, 4, &mut rng);
        let (_, cache) = p.forward([0.2, 0.1], &embed(4, &mut rng)).unwrap();
        let g = p.backward(&cache, [0.0, 0.0]).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = Rng::new(11);
        for _ in 0..5 {
            let p = MlpParams::init(6, 3, &mut rng);
            let x = rng.normal2();
            let e = embed(3, &mut rng);
            let go = rng.normal2();
            let (_, cache) = p.forward(x, &e).unwrap();
            let g = p.backward(&cache, go).unwrap();
            let f = |q: &MlpParams| {
                let o = reference_forward(q, x, &e);
                o[0] * go[0] + o[1] * go[1]
            };
            let h = 1e-5;
            for i in 0..p.num_params() {
                let mut plus = p.clone();
                plus.set_flat(i, p.get_flat(i) + h);
                let mut minus = p.clone();
                minus.set_flat(i, p.get_flat(i) - h);
                let fd = (f(&plus) - f(&minus)) / (2.0 * h);
                let an = g.get_flat(i);
                let err = (fd - an).abs() / an.abs().max(fd.abs()).max(1e-8);
                assert!(err < 1e-4 || (fd - an).abs() < 1e-8, "param {i}: {an} vs {fd}");
            }
        }
    }

    #[test]
    fn linear_network_gradient_is_closed_form() {
        // out = W3 (W2 (W1 u + b1) + b2) + b3, so ∂(g·out)/∂W1 = (W2ᵀ W3ᵀ g) uᵀ.
        let mut rng = Rng::new(9);
        let mut p = MlpParams::init(3, 1, &mut rng);
        p.activation = Activation::Identity;
        let u = [0.3, -1.1, 0.7];
        let go = [0.5, -2.0];
        let (_, cache) = p.forward([u[0], u[1]], &[u[2]]).unwrap();
        let g = p.backward(&cache, go).unwrap();

        let mut w3t_g = [0.0; 3];
        p.w3.transpose_matvec_into(&go, &mut w3t_g);
        let mut back = [0.0; 3];
        p.w2.transpose_matvec_into(&w3t_g, &mut back);
        for r in 0..3 {
            for (c, uc) in u.iter().enumerate() {
                assert!((g.w1.get(r, c) - back[r] * uc).abs() < 1e-14);
            }
            assert!((g.b1[r] - back[r]).abs() < 1e-14);
            assert!((g.b2[r] - w3t_g[r]).abs() < 1e-14);
        }
        assert_eq!(g.b3, vec![0.5, -2.0]);
    }
}
