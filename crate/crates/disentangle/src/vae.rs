use numkit::{Activation, Matrix, Mlp, MlpCache, Parameterized, Rng};

use crate::error::{dim, DisentangleError, Result};

/// Lower clamp applied to encoder log-variances.
pub const LOGVAR_MIN: f64 = -20.0;
/// Upper clamp applied to encoder log-variances.
pub const LOGVAR_MAX: f64 = 20.0;

/// Posterior parameters of one sample, split into content and bias blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode {
    pub c_mean: Vec<f64>,
    pub c_logvar: Vec<f64>,
    pub b_mean: Vec<f64>,
    pub b_logvar: Vec<f64>,
}

impl LatentCode {
    /// Dimension of `z = [c; b]`.
    pub fn n_z(&self) -> usize {
        self.c_mean.len() + self.b_mean.len()
    }

    /// Concatenated posterior mean `[c; b]`.
    pub fn z_mean(&self) -> Vec<f64> {
        self.c_mean.iter().chain(&self.b_mean).copied().collect()
    }

    /// Concatenated posterior log-variance.
    pub fn z_logvar(&self) -> Vec<f64> {
        self.c_logvar.iter().chain(&self.b_logvar).copied().collect()
    }
}

/// Encoder output for a batch: `n × n_z` means and (clamped) log-variances.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentBatch {
    mean: Matrix,
    logvar: Matrix,
    n_c: usize,
}

impl LatentBatch {
    /// Wrap precomputed means and log-variances; the first `n_c` columns
    /// form the content block.
    pub fn from_parts(mean: Matrix, logvar: Matrix, n_c: usize) -> Result<Self> {
        if mean.shape() != logvar.shape() {
            return Err(dim(
                "LatentBatch::from_parts",
                format!("mean {:?} vs logvar {:?}", mean.shape(), logvar.shape()),
            ));
        }
        if n_c > mean.cols() {
            return Err(dim("LatentBatch::from_parts", format!("n_c = {n_c} > n_z = {}", mean.cols())));
        }
        if !logvar.is_finite() {
            return Err(DisentangleError::NonFinite("latent log-variances"));
        }
        Ok(LatentBatch { mean, logvar, n_c })
    }

    pub fn len(&self) -> usize {
        self.mean.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_c(&self) -> usize {
        self.n_c
    }

    pub fn n_b(&self) -> usize {
        self.mean.cols() - self.n_c
    }

    pub fn n_z(&self) -> usize {
        self.mean.cols()
    }

    /// All posterior means, `n × n_z`.
    pub fn mean(&self) -> &Matrix {
        &self.mean
    }

    /// All clamped posterior log-variances, `n × n_z`.
    pub fn logvar(&self) -> &Matrix {
        &self.logvar
    }

    /// Content-block means `ĉ`, `n × n_c`.
    pub fn content_means(&self) -> Matrix {
        self.mean.col_range(0, self.n_c)
    }

    /// Bias-block means `b̂`, `n × n_b`.
    pub fn bias_means(&self) -> Matrix {
        self.mean.col_range(self.n_c, self.n_z())
    }

    /// The code of row `i`.
    pub fn code(&self, i: usize) -> LatentCode {
        let (m, lv) = (self.mean.row(i), self.logvar.row(i));
        LatentCode {
            c_mean: m[..self.n_c].to_vec(),
            c_logvar: lv[..self.n_c].to_vec(),
            b_mean: m[self.n_c..].to_vec(),
            b_logvar: lv[self.n_c..].to_vec(),
        }
    }

    /// Every row as a [`LatentCode`].
    pub fn codes(&self) -> Vec<LatentCode> {
        (0..self.len()).map(|i| self.code(i)).collect()
    }

    /// Draw `z = mean + exp(logvar / 2) ⊙ u` with fresh `u ~ N(0, I)`;
    /// returns the sample and the noise used.
    pub fn reparameterize(&self, rng: &mut Rng) -> (Matrix, Matrix) {
        let (n, k) = self.mean.shape();
        let u = Matrix::from_fn(n, k, |_, _| rng.normal());
        let z = self.sample_with(&u).expect("noise shaped like the batch");
        (z, u)
    }

    /// The reparameterized sample for a given noise matrix.
    pub fn sample_with(&self, u: &Matrix) -> Result<Matrix> {
        if u.shape() != self.mean.shape() {
            return Err(dim(
                "LatentBatch::sample_with",
                format!("noise {:?} for latents {:?}", u.shape(), self.mean.shape()),
            ));
        }
        let data = self
            .mean
            .data()
            .iter()
            .zip(self.logvar.data())
            .zip(u.data())
            .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
            .collect();
        Ok(Matrix::from_vec(self.mean.rows(), self.mean.cols(), data)?)
    }
}

/// Everything a training step needs from one stochastic VAE pass.
#[derive(Debug, Clone)]
pub struct VaeForward {
    pub latents: LatentBatch,
    pub z: Matrix,
    pub noise: Matrix,
    pub x_hat: Matrix,
    raw_logvar: Matrix,
    enc_cache: MlpCache,
    dec_cache: MlpCache,
}

/// Encoder, decoder and KL weight of the disentangling VAE.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeParams {
    pub encoder: Mlp,
    pub decoder: Mlp,
    n_c: usize,
    n_b: usize,
    pub beta: f64,
}

impl VaeParams {
    /// Assemble from networks, checking `n_x → 2·n_z` and `n_z → n_x`.
    pub fn new(encoder: Mlp, decoder: Mlp, n_c: usize, n_b: usize, beta: f64) -> Result<Self> {
        let n_z = n_c + n_b;
        if encoder.output_dim() != 2 * n_z {
            return Err(dim(
                "VaeParams::new",
                format!("encoder emits {} values, need 2·n_z = {}", encoder.output_dim(), 2 * n_z),
            ));
        }
        if decoder.input_dim() != n_z || decoder.output_dim() != encoder.input_dim() {
            return Err(dim(
                "VaeParams::new",
                format!(
                    "decoder maps {} → {}, need {n_z} → {}",
                    decoder.input_dim(),
                    decoder.output_dim(),
                    encoder.input_dim()
                ),
            ));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(DisentangleError::NonFinite("beta (must be finite and ≥ 0)"));
        }
        Ok(VaeParams { encoder, decoder, n_c, n_b, beta })
    }

    /// Randomly initialised VAE. `hidden` lists tanh hidden widths of the
    /// encoder; the decoder mirrors them. Empty `hidden` gives linear maps.
    pub fn init(n_x: usize, n_c: usize, n_b: usize, hidden: &[usize], beta: f64, rng: &mut Rng) -> Result<Self> {
        let n_z = n_c + n_b;
        let mut enc_dims = vec![n_x];
        enc_dims.extend_from_slice(hidden);
        enc_dims.push(2 * n_z);
        let mut dec_dims = vec![n_z];
        dec_dims.extend(hidden.iter().rev());
        dec_dims.push(n_x);
        let acts = |n: usize| {
            let mut a = vec![Activation::Tanh; n - 1];
            a.push(Activation::Identity);
            a
        };
        let encoder = Mlp::init(&enc_dims, &acts(enc_dims.len() - 1), rng)?;
        let decoder = Mlp::init(&dec_dims, &acts(dec_dims.len() - 1), rng)?;
        Self::new(encoder, decoder, n_c, n_b, beta)
    }

    pub fn n_x(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn n_c(&self) -> usize {
        self.n_c
    }

    pub fn n_b(&self) -> usize {
        self.n_b
    }

    pub fn n_z(&self) -> usize {
        self.n_c + self.n_b
    }

    /// Same architecture, all parameters zero (gradient accumulator).
    pub fn zeros_like(&self) -> Self {
        VaeParams {
            encoder: self.encoder.zeros_like(),
            decoder: self.decoder.zeros_like(),
            n_c: self.n_c,
            n_b: self.n_b,
            beta: self.beta,
        }
    }

    fn split_raw(&self, raw: &Matrix) -> Result<(LatentBatch, Matrix)> {
        let n_z = self.n_z();
        let mean = raw.col_range(0, n_z);
        let raw_lv = raw.col_range(n_z, 2 * n_z);
        let lv = raw_lv.map(|v| v.clamp(LOGVAR_MIN, LOGVAR_MAX));
        Ok((LatentBatch::from_parts(mean, lv, self.n_c)?, raw_lv))
    }

    /// Deterministic encoding of a batch `X` (`n × n_x`).
    pub fn encode(&self, x: &Matrix) -> Result<LatentBatch> {
        if x.cols() != self.n_x() {
            return Err(dim("encode", format!("X has {} columns, expected n_x = {}", x.cols(), self.n_x())));
        }
        let raw = self.encoder.predict(x)?;
        Ok(self.split_raw(&raw)?.0)
    }

    /// Deterministic reconstruction `x̂` of latent samples `z` (`n × n_z`).
    pub fn decode(&self, z: &Matrix) -> Result<Matrix> {
        if z.cols() != self.n_z() {
            return Err(dim("decode", format!("z has {} columns, expected n_z = {}", z.cols(), self.n_z())));
        }
        Ok(self.decoder.predict(z)?)
    }

    /// Encode, reparameterize with the given noise `u` and decode, keeping
    /// the caches needed by [`VaeParams::backward`].
    pub fn forward_train(&self, x: &Matrix, noise: &Matrix) -> Result<VaeForward> {
        if x.cols() != self.n_x() {
            return Err(dim("forward_train", format!("X has {} columns, expected {}", x.cols(), self.n_x())));
        }
        let (raw, enc_cache) = self.encoder.forward(x)?;
        let (latents, raw_logvar) = self.split_raw(&raw)?;
        let z = latents.sample_with(noise)?;
        let (x_hat, dec_cache) = self.decoder.forward(&z)?;
        Ok(VaeForward { latents, z, noise: noise.clone(), x_hat, raw_logvar, enc_cache, dec_cache })
    }

    /// Parameter gradients given the loss derivatives with respect to the
    /// reconstruction and to the (clamped) posterior means and log-variances.
    ///
    /// `d_mean` / `d_logvar` carry only direct dependencies (KL term, heads
    /// reading the means); the path through the reparameterized sample is
    /// added here. Log-variance entries held at a clamp bound get no gradient.
    pub fn backward(&self, fwd: &VaeForward, d_xhat: &Matrix, d_mean: &Matrix, d_logvar: &Matrix) -> Result<VaeParams> {
        let shape = fwd.latents.mean().shape();
        if d_mean.shape() != shape || d_logvar.shape() != shape {
            return Err(dim(
                "VaeParams::backward",
                format!("latent grads {:?}/{:?} for latents {shape:?}", d_mean.shape(), d_logvar.shape()),
            ));
        }
        let dec = self.decoder.backward(&fwd.dec_cache, d_xhat)?;
        let dz = dec.input;
        let (n, n_z) = shape;
        let mut d_raw = Matrix::zeros(n, 2 * n_z);
        let lv = fwd.latents.logvar();
        for i in 0..n {
            for j in 0..n_z {
                let g_mean = d_mean.get(i, j) + dz.get(i, j);
                let raw = fwd.raw_logvar.get(i, j);
                let g_lv = if (LOGVAR_MIN..=LOGVAR_MAX).contains(&raw) {
                    d_logvar.get(i, j) + dz.get(i, j) * fwd.noise.get(i, j) * 0.5 * (0.5 * lv.get(i, j)).exp()
                } else {
                    0.0
                };
                d_raw.set(i, j, g_mean);
                d_raw.set(i, n_z + j, g_lv);
            }
        }
        let enc = self.encoder.backward(&fwd.enc_cache, &d_raw)?;
        Ok(VaeParams {
            encoder: enc.params,
            decoder: dec.params,
            n_c: self.n_c,
            n_b: self.n_b,
            beta: self.beta,
        })
    }
}

impl Parameterized for VaeParams {
    fn visit(&self, f: &mut dyn FnMut(&str, &[f64])) {
        self.encoder.visit(&mut |n, s| f(&format!("encoder.{n}"), s));
        self.decoder.visit(&mut |n, s| f(&format!("decoder.{n}"), s));
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.encoder.visit_mut(&mut |n, s| f(&format!("encoder.{n}"), s));
        self.decoder.visit_mut(&mut |n, s| f(&format!("decoder.{n}"), s));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use numkit::{flatten, num_params};

    fn model(seed: u64) -> VaeParams {
        VaeParams::init(6, 2, 3, &[], 1.0, &mut Rng::new(seed)).unwrap()
    }

    #[test]
    fn zero_encoder_gives_zero_codes() {
        let vae = model(0).zeros_like();
        let x = Matrix::from_fn(3, 6, |i, j| (i * 6 + j) as f64);
        let lat = vae.encode(&x).unwrap();
        assert!(lat.mean().data().iter().all(|&v| v == 0.0));
        assert!(lat.logvar().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identical_rows_identical_codes() {
        let vae = model(1);
        let x = Matrix::from_fn(4, 6, |_, j| j as f64 * 0.3 - 1.0);
        let lat = vae.encode(&x).unwrap();
        for i in 1..4 {
            assert_eq!(lat.code(i), lat.code(0));
        }
    }

    #[test]
    fn split_then_concat_is_raw_output() {
        let vae = model(2);
        let x = Matrix::from_fn(5, 6, |i, j| ((i + 2 * j) as f64).sin());
        let raw = vae.encoder.predict(&x).unwrap();
        let lat = vae.encode(&x).unwrap();
        for i in 0..5 {
            let code = lat.code(i);
            let mut back = code.z_mean();
            back.extend(code.z_logvar());
            assert_eq!(back, raw.row(i));
        }
        assert_eq!(lat.content_means().hcat(&lat.bias_means()).unwrap(), *lat.mean());
    }

    #[test]
    fn collapsed_logvar_returns_mean() {
        let mean = Matrix::from_fn(2, 3, |i, j| (i + j) as f64);
        let lv = Matrix::from_fn(2, 3, |_, _| (-1e9f64).clamp(LOGVAR_MIN, LOGVAR_MAX));
        let lat = LatentBatch::from_parts(mean.clone(), lv, 1).unwrap();
        let (z, _) = lat.reparameterize(&mut Rng::new(3));
        for (a, b) in z.data().iter().zip(mean.data()) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn reparameterized_variance_matches() {
        let n = 100_000;
        let mean = Matrix::zeros(n, 1);
        let lv = Matrix::from_fn(n, 1, |_, _| 0.7);
        let lat = LatentBatch::from_parts(mean, lv, 1).unwrap();
        let (z, _) = lat.reparameterize(&mut Rng::new(4));
        let m = z.data().iter().sum::<f64>() / n as f64;
        let var = z.data().iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        let expect = 0.7f64.exp();
        // SD of the sample variance is σ²·√(2/(n−1)).
        assert!((var - expect).abs() < 4.0 * expect * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn reparameterize_is_seeded() {
        let lat = model(5).encode(&Matrix::from_fn(3, 6, |i, j| (i * j) as f64)).unwrap();
        assert_eq!(lat.reparameterize(&mut Rng::new(6)), lat.reparameterize(&mut Rng::new(6)));
    }

    #[test]
    fn decode_checks_width_and_is_deterministic() {
        let vae = model(7);
        assert!(vae.decode(&Matrix::zeros(2, 4)).is_err());
        let z = Matrix::from_fn(2, 5, |i, j| (i as f64) - (j as f64) * 0.1);
        assert_eq!(vae.decode(&z).unwrap(), vae.decode(&z).unwrap());
        assert!(vae.zeros_like().decode(&z).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constructor_rejects_broken_chain() {
        let v = model(8);
        assert!(VaeParams::new(v.encoder.clone(), v.decoder.clone(), 2, 2, 1.0).is_err());
        assert!(VaeParams::new(v.encoder.clone(), v.decoder.clone(), 2, 3, -1.0).is_err());
        assert!(model(0).encode(&Matrix::zeros(1, 5)).is_err());
    }

    #[test]
    fn parameter_names_are_prefixed() {
        let vae = VaeParams::init(6, 2, 3, &[4], 1.0, &mut Rng::new(9)).unwrap();
        let mut names = Vec::new();
        vae.visit(&mut |n, _| names.push(n.to_string()));
        assert_eq!(names[0], "encoder.layer0.weight");
        assert_eq!(names.last().unwrap(), "decoder.layer1.bias");
        assert_eq!(flatten(&vae).len(), num_params(&vae));
        assert_eq!(num_params(&vae), (6 * 4 + 4) + (4 * 10 + 10) + (5 * 4 + 4) + (4 * 6 + 6));
    }
}
