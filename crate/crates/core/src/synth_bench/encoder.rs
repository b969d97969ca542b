use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// `input -> tanh(W1 x + b1) -> W2 h + b2`, optionally L2-normalized per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    w1: Array2<f64>,
    b1: Array1<f64>,
    w2: Array2<f64>,
    b2: Array1<f64>,
    normalize: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGradients {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl EncoderGradients {
    pub fn flatten(&self) -> Vec<f64> {
        self.w1
            .iter()
            .chain(self.b1.iter())
            .chain(self.w2.iter())
            .chain(self.b2.iter())
            .copied()
            .collect()
    }

    pub fn add_assign(&mut self, other: &EncoderGradients) {
        self.w1 += &other.w1;
        self.b1 += &other.b1;
        self.w2 += &other.w2;
        self.b2 += &other.b2;
    }

    pub fn is_finite(&self) -> bool {
        self.flatten().iter().all(|v| v.is_finite())
    }
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Array2<f64>,
    hidden: Array2<f64>,
    raw: Array2<f64>,
    output: Array2<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }
}

impl Encoder {
    /// Uniform Glorot initialization, zero biases.
    pub fn new<R: Rng>(input_dim: usize, hidden: usize, embed_dim: usize, normalize: bool, rng: &mut R) -> Self {
        let mut glorot = |rows: usize, cols: usize| {
            let limit = (6.0 / (rows + cols) as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| rng.random_range(-limit..limit))
        };
        Self {
            w1: glorot(hidden, input_dim),
            b1: Array1::zeros(hidden),
            w2: glorot(embed_dim, hidden),
            b2: Array1::zeros(embed_dim),
            normalize,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn embed_dim(&self) -> usize {
        self.w2.nrows()
    }

    pub fn normalizes(&self) -> bool {
        self.normalize
    }

    pub fn parameter_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// Parameters in the order `w1, b1, w2, b2` (row-major).
    pub fn parameters(&self) -> Vec<f64> {
        self.w1
            .iter()
            .chain(self.b1.iter())
            .chain(self.w2.iter())
            .chain(self.b2.iter())
            .copied()
            .collect()
    }

    pub fn set_parameters(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.parameter_count(), "parameter vector length");
        let mut it = values.iter().copied();
        for p in self
            .w1
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(self.b2.iter_mut())
        {
            *p = it.next().expect("length checked");
        }
    }

    pub fn zero_gradients(&self) -> EncoderGradients {
        EncoderGradients {
            w1: Array2::zeros(self.w1.dim()),
            b1: Array1::zeros(self.b1.dim()),
            w2: Array2::zeros(self.w2.dim()),
            b2: Array1::zeros(self.b2.dim()),
        }
    }

    pub fn forward(&self, input: &Array2<f64>) -> Array2<f64> {
        self.forward_cached(input).output
    }

    pub fn forward_cached(&self, input: &Array2<f64>) -> ForwardCache {
        let hidden = (input.dot(&self.w1.t()) + &self.b1).mapv(f64::tanh);
        let raw = hidden.dot(&self.w2.t()) + &self.b2;
        let output = if self.normalize {
            let mut out = raw.clone();
            for mut row in out.rows_mut() {
                let norm = row.dot(&row).sqrt();
                row /= norm.max(f64::MIN_POSITIVE);
            }
            out
        } else {
            raw.clone()
        };
        ForwardCache {
            input: input.clone(),
            hidden,
            raw,
            output,
        }
    }

    /// Parameter gradients given `dL/d output` for the cached batch.
    pub fn backward(&self, cache: &ForwardCache, d_output: &Array2<f64>) -> EncoderGradients {
        let d_raw = if self.normalize {
            // y = z / |z|  =>  dz = (dy - y (y . dy)) / |z|
            let mut d = d_output.clone();
            for ((mut d_row, y), z) in d.rows_mut().into_iter().zip(cache.output.rows()).zip(cache.raw.rows()) {
                let norm = z.dot(&z).sqrt().max(f64::MIN_POSITIVE);
                let proj = y.dot(&d_row);
                d_row.zip_mut_with(&y, |g, &yk| *g = (*g - yk * proj) / norm);
            }
            d
        } else {
            d_output.clone()
        };
        let w2 = d_raw.t().dot(&cache.hidden);
        let b2 = d_raw.sum_axis(Axis(0));
        let d_hidden = d_raw.dot(&self.w2) * cache.hidden.mapv(|h| 1.0 - h * h);
        let w1 = d_hidden.t().dot(&cache.input);
        let b1 = d_hidden.sum_axis(Axis(0));
        EncoderGradients { w1, b1, w2, b2 }
    }

    /// Gradient step with momentum: `v <- momentum v + g`, `theta <- theta - lr v`.
    pub fn apply_update(&mut self, grads: &EncoderGradients, velocity: &mut EncoderGradients, lr: f64, momentum: f64) {
        velocity.w1 = &velocity.w1 * momentum + &grads.w1;
        velocity.b1 = &velocity.b1 * momentum + &grads.b1;
        velocity.w2 = &velocity.w2 * momentum + &grads.w2;
        velocity.b2 = &velocity.b2 * momentum + &grads.b2;
        self.w1.scaled_add(-lr, &velocity.w1);
        self.b1.scaled_add(-lr, &velocity.b1);
        self.w2.scaled_add(-lr, &velocity.w2);
        self.b2.scaled_add(-lr, &velocity.b2);
    }

    pub fn is_finite(&self) -> bool {
        self.parameters().iter().all(|v| v.is_finite())
    }
}
