use crate::activation::Activation;
use crate::error::{NumError, Result};
use crate::matrix::Matrix;
use crate::params::Parameterized;
use crate::rng::Rng;

/// One affine layer followed by an activation: `a = act(X · Wᵀ + b)`.
///
/// `weight` is stored `out × in`, matching the `y = W x` convention.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }
}

/// Feed-forward network of [`Layer`]s with a hand-derived backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
}

/// Per-layer values saved by [`Mlp::forward`] for [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct MlpCache {
    inputs: Vec<Matrix>,
    pre: Vec<Matrix>,
    post: Vec<Matrix>,
}

/// Gradients of a scalar loss: parameter-shaped plus the input gradient.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub params: Mlp,
    pub input: Matrix,
}

impl Mlp {
    /// Assemble from layers, checking the dimension chain and that softmax
    /// appears only as the final activation.
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(NumError::Invalid("an MLP needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.out_dim() {
                return Err(NumError::dim(
                    "Mlp::new",
                    format!("layer {i}: bias {} for width {}", l.bias.len(), l.out_dim()),
                ));
            }
            if i + 1 < layers.len() {
                if l.activation == Activation::Softmax {
                    return Err(NumError::Invalid(format!(
                        "softmax is only allowed on the final layer (found on layer {i})"
                    )));
                }
                if layers[i + 1].in_dim() != l.out_dim() {
                    return Err(NumError::dim(
                        "Mlp::new",
                        format!(
                            "layer {i} emits {} but layer {} expects {}",
                            l.out_dim(),
                            i + 1,
                            layers[i + 1].in_dim()
                        ),
                    ));
                }
            }
        }
        Ok(Mlp { layers })
    }

    /// Uniform `±1/√fan_in` initialization for weights and biases.
    ///
    /// `dims` lists widths from input to output; `acts` has one entry per layer.
    pub fn init(dims: &[usize], acts: &[Activation], rng: &mut Rng) -> Result<Self> {
        if dims.len() != acts.len() + 1 {
            return Err(NumError::dim(
                "Mlp::init",
                format!("{} widths for {} activations", dims.len(), acts.len()),
            ));
        }
        let mut layers = Vec::with_capacity(acts.len());
        for (w, &act) in dims.windows(2).zip(acts) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            let weight = Matrix::from_fn(w[1], w[0], |_, _| rng.uniform_range(-bound, bound));
            let bias = (0..w[1]).map(|_| rng.uniform_range(-bound, bound)).collect();
            layers.push(Layer { weight, bias, activation: act });
        }
        Mlp::new(layers)
    }

    /// Same architecture with every parameter zero.
    pub fn zeros_like(&self) -> Mlp {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weight: Matrix::zeros(l.out_dim(), l.in_dim()),
                    bias: vec![0.0; l.out_dim()],
                    activation: l.activation,
                })
                .collect(),
        }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// Forward pass returning the output and the cache needed by `backward`.
    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, MlpCache)> {
        if x.cols() != self.input_dim() {
            return Err(NumError::dim(
                "Mlp::forward",
                format!("input has {} columns, network expects {}", x.cols(), self.input_dim()),
            ));
        }
        let mut cache = MlpCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(self.layers.len()),
            post: Vec::with_capacity(self.layers.len()),
        };
        let mut a = x.clone();
        for l in &self.layers {
            let mut z = a.matmul_nt(&l.weight)?;
            z.add_row_vector(&l.bias)?;
            let out = l.activation.apply(&z);
            cache.inputs.push(a);
            cache.pre.push(z);
            cache.post.push(out.clone());
            a = out;
        }
        Ok((a, cache))
    }

    /// Forward pass without keeping a cache.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        self.forward(x).map(|(out, _)| out)
    }

    /// Exact gradients of a scalar loss given `upstream = ∂loss/∂output`.
    pub fn backward(&self, cache: &MlpCache, upstream: &Matrix) -> Result<MlpGrads> {
        if cache.pre.len() != self.layers.len() {
            return Err(NumError::dim(
                "Mlp::backward",
                format!("cache for {} layers, network has {}", cache.pre.len(), self.layers.len()),
            ));
        }
        let out_shape = cache.post.last().map(Matrix::shape).unwrap_or((0, 0));
        if upstream.shape() != out_shape {
            return Err(NumError::dim(
                "Mlp::backward",
                format!("upstream {:?} for output {:?}", upstream.shape(), out_shape),
            ));
        }
        let mut grads = self.zeros_like();
        let mut g = upstream.clone();
        for i in (0..self.layers.len()).rev() {
            let l = &self.layers[i];
            let dz = l.activation.backward(&cache.pre[i], &cache.post[i], &g);
            grads.layers[i].weight = dz.matmul_tn(&cache.inputs[i])?;
            grads.layers[i].bias = dz.col_sums();
            g = dz.matmul(&l.weight)?;
        }
        Ok(MlpGrads { params: grads, input: g })
    }

    /// Accumulate `other` into `self` (same architecture).
    pub fn add_assign(&mut self, other: &Mlp) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(NumError::dim("Mlp::add_assign", "layer counts differ"));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight.axpy(1.0, &b.weight)?;
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
        Ok(())
    }
}

impl Parameterized for Mlp {
    fn visit(&self, f: &mut dyn FnMut(&str, &[f64])) {
        for (i, l) in self.layers.iter().enumerate() {
            f(&format!("layer{i}.weight"), l.weight.data());
            f(&format!("layer{i}.bias"), &l.bias);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            f(&format!("layer{i}.weight"), l.weight.data_mut());
            f(&format!("layer{i}.bias"), &mut l.bias);
        }
    }
}
