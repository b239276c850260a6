//! The comparison model: a single-layer convolutional denoising autoencoder
//! of matched geometry, trained by backpropagation.
//!
//! The encoder is a linear strided filter bank (activations are `Wx + b`
//! with no nonlinearity), the decoder an untied bank of the same shape, and
//! the loss is the squared error against the clean image given a
//! noise-corrupted input. Codes come out dense: every filter responds to
//! essentially every patch, which is exactly the contrast the sparse solver
//! is measured against.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::scalar::Scalar;
use crate::tensor::{conv_transpose, correlate, ActivationTensor, Dictionary, ImageTensor, TensorError};
use crate::train::{accumulate_activity_patches, derive_seed, EpochStats, TrainStats};

#[derive(Debug, Clone)]
pub struct AutoencoderModel<T: Scalar = f64> {
    pub encoder: Dictionary<T>,
    pub encoder_bias: Vec<T>,
    pub decoder: Dictionary<T>,
}

impl<T: Scalar> AutoencoderModel<T> {
    pub fn new(encoder: Dictionary<T>, encoder_bias: Vec<T>, decoder: Dictionary<T>) -> Result<Self, TensorError> {
        if encoder.shape() != decoder.shape() {
            return Err(TensorError::DimMismatch {
                axis: "decoder",
                detail: "encoder and decoder banks must share shape".into(),
            });
        }
        if encoder_bias.len() != encoder.num_elements() {
            return Err(TensorError::LengthMismatch {
                left: encoder_bias.len(),
                right: encoder.num_elements(),
            });
        }
        if let Some(index) = encoder_bias.iter().position(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite { index });
        }
        Ok(Self { encoder, encoder_bias, decoder })
    }

    /// Seeded model: independent unit-norm encoder and decoder banks, zero
    /// biases.
    pub fn init(seed: u64, num_elements: usize, patch: usize, channels: usize, stride: usize) -> Self {
        let encoder = crate::train::init_dictionary(derive_seed(seed, 0xE7C, 0), num_elements, patch, channels, stride);
        let decoder = crate::train::init_dictionary(derive_seed(seed, 0xDEC, 0), num_elements, patch, channels, stride);
        Self { encoder, encoder_bias: vec![T::zero(); num_elements], decoder }
    }

    pub fn num_elements(&self) -> usize {
        self.encoder.num_elements()
    }
}

#[derive(Debug, Clone)]
pub struct AeTrainConfig<T: Scalar = f64> {
    /// Standard deviation of the additive Gaussian corruption.
    pub noise_sigma: T,
    pub learning_rate: T,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl<T: Scalar> Default for AeTrainConfig<T> {
    fn default() -> Self {
        Self {
            noise_sigma: T::from_f64(0.5),
            learning_rate: T::from_f64(2e-4),
            epochs: 50,
            batch_size: 8,
            seed: 0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AeError {
    #[error("training went unstable at epoch {epoch}: mse = {mse:.3e}")]
    Unstable { epoch: usize, mse: f64 },
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Epoch mean squared error above this aborts training as unstable.
pub const INSTABILITY_LIMIT: f64 = 1e4;

/// Additive seeded Gaussian white noise.
pub fn add_gaussian_noise<T: Scalar>(image: &ImageTensor<T>, sigma: T, seed: u64) -> ImageTensor<T> {
    if sigma == T::zero() {
        return image.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = image.clone();
    for v in out.as_mut_slice() {
        let n: f64 = StandardNormal.sample(&mut rng);
        *v += sigma * T::from_f64(n);
    }
    out
}

/// Linear forward pass: activations `correlate(noisy, encoder) + bias`, then
/// the decoder's synthesis as the reconstruction.
pub fn ae_forward<T: Scalar>(
    noisy: &ImageTensor<T>,
    model: &AutoencoderModel<T>,
) -> Result<(ActivationTensor<T>, ImageTensor<T>), TensorError> {
    let mut acts = correlate(noisy, &model.encoder)?;
    let k = model.num_elements();
    for site in acts.as_mut_slice().chunks_mut(k) {
        for (a, b) in site.iter_mut().zip(&model.encoder_bias) {
            *a += *b;
        }
    }
    let recon = conv_transpose(&acts, &model.decoder, noisy.height(), noisy.width())?;
    Ok((acts, recon))
}

/// Gradients of the denoising loss `1/2 ||clean - recon(noisy)||^2` for the
/// three parameter blocks.
#[derive(Debug, Clone)]
pub struct AeGradients<T: Scalar = f64> {
    pub encoder: Vec<Vec<T>>,
    pub decoder: Vec<Vec<T>>,
    pub bias: Vec<T>,
}

/// Exact chain-rule gradients through the two linear maps.
///
/// With residual `rho = clean - recon`: the decoder gradient correlates
/// activations with the (negated) residual patches, the back-projected
/// residual `correlate(rho, decoder)` carries the loss into code space, and
/// the encoder/bias gradients correlate that signal with the noisy input and
/// the constant one respectively.
pub fn ae_backward<T: Scalar>(
    clean: &ImageTensor<T>,
    noisy: &ImageTensor<T>,
    model: &AutoencoderModel<T>,
) -> Result<AeGradients<T>, TensorError> {
    let (acts, recon) = ae_forward(noisy, model)?;
    gradients_from_forward(clean, noisy, model, &acts, &recon)
}

fn gradients_from_forward<T: Scalar>(
    clean: &ImageTensor<T>,
    noisy: &ImageTensor<T>,
    model: &AutoencoderModel<T>,
    acts: &ActivationTensor<T>,
    recon: &ImageTensor<T>,
) -> Result<AeGradients<T>, TensorError> {
    let residual = ImageTensor::new(
        clean.height(),
        clean.width(),
        clean.channels(),
        clean.as_slice().iter().zip(recon.as_slice()).map(|(x, r)| *x - *r).collect(),
    )?;
    let shape = model.encoder.shape();

    let mut decoder = accumulate_activity_patches(acts, &residual, &shape)?;
    for block in decoder.iter_mut() {
        for v in block.iter_mut() {
            *v = -*v;
        }
    }

    let backprojected = correlate(&residual, &model.decoder)?;
    let mut encoder = accumulate_activity_patches(&backprojected, noisy, &shape)?;
    for block in encoder.iter_mut() {
        for v in block.iter_mut() {
            *v = -*v;
        }
    }

    let k = model.num_elements();
    let mut bias = vec![T::zero(); k];
    for site in backprojected.as_slice().chunks(k) {
        for (b, s) in bias.iter_mut().zip(site) {
            *b -= *s;
        }
    }

    Ok(AeGradients { encoder, decoder, bias })
}

struct AeSample<T: Scalar> {
    mse: T,
    loss: T,
    percent_active: T,
    grads: AeGradients<T>,
}

fn present<T: Scalar>(
    clean: &ImageTensor<T>,
    model: &AutoencoderModel<T>,
    cfg: &AeTrainConfig<T>,
    epoch: usize,
    index: usize,
) -> Result<AeSample<T>, TensorError> {
    let noise_seed = derive_seed(cfg.seed, epoch as u64 + 1, index as u64);
    let noisy = add_gaussian_noise(clean, cfg.noise_sigma, noise_seed);
    let (acts, recon) = ae_forward(&noisy, model)?;
    let grads = gradients_from_forward(clean, &noisy, model, &acts, &recon)?;
    let mut sq = T::zero();
    for (x, r) in clean.as_slice().iter().zip(recon.as_slice()) {
        let d = *x - *r;
        sq += d * d;
    }
    Ok(AeSample {
        mse: sq / T::from_usize(clean.as_slice().len()),
        loss: T::from_f64(0.5) * sq,
        percent_active: T::from_usize(acts.nonzero_count()) / T::from_usize(acts.as_slice().len()),
        grads,
    })
}

/// One pass of minibatch SGD with fresh noise per presentation.
pub fn ae_train_epoch<T: Scalar>(
    corpus: &[ImageTensor<T>],
    model: AutoencoderModel<T>,
    cfg: &AeTrainConfig<T>,
    epoch: usize,
) -> Result<(AutoencoderModel<T>, EpochStats<T>), AeError> {
    if corpus.is_empty() {
        return Err(AeError::EmptyCorpus);
    }
    let mut model = model;
    let start = model.clone();
    let k_total = model.num_elements();
    let elem_len = model.encoder.element_len();
    let batch_size = cfg.batch_size.max(1);

    let mut mse_sum = T::zero();
    let mut loss_sum = T::zero();
    let mut active_sum = T::zero();

    for (batch_idx, batch) in corpus.chunks(batch_size).enumerate() {
        let base = batch_idx * batch_size;
        let samples: Vec<Result<AeSample<T>, TensorError>> = batch
            .par_iter()
            .enumerate()
            .map(|(i, clean)| present(clean, &model, cfg, epoch, base + i))
            .collect();

        let mut enc_avg = vec![vec![T::zero(); elem_len]; k_total];
        let mut dec_avg = vec![vec![T::zero(); elem_len]; k_total];
        let mut bias_avg = vec![T::zero(); k_total];
        let mut batch_mse = T::zero();
        for sample in samples {
            let sample = sample?;
            batch_mse += sample.mse;
            mse_sum += sample.mse;
            loss_sum += sample.loss;
            active_sum += sample.percent_active;
            for k in 0..k_total {
                for (a, g) in enc_avg[k].iter_mut().zip(&sample.grads.encoder[k]) {
                    *a += *g;
                }
                for (a, g) in dec_avg[k].iter_mut().zip(&sample.grads.decoder[k]) {
                    *a += *g;
                }
            }
            for (a, g) in bias_avg.iter_mut().zip(&sample.grads.bias) {
                *a += *g;
            }
        }

        // Catch a runaway before its update lands, so the failure surfaces
        // as instability rather than as non-finite weights mid-epoch.
        let batch_mse = batch_mse / T::from_usize(batch.len());
        if !batch_mse.is_finite() || batch_mse.as_f64() > INSTABILITY_LIMIT {
            return Err(AeError::Unstable { epoch, mse: batch_mse.as_f64() });
        }

        let scale = cfg.learning_rate / T::from_usize(batch.len());
        for k in 0..k_total {
            for (w, g) in model.encoder.element_mut(k).iter_mut().zip(&enc_avg[k]) {
                let step = scale * *g;
                if step != T::zero() {
                    *w -= step;
                }
            }
            for (w, g) in model.decoder.element_mut(k).iter_mut().zip(&dec_avg[k]) {
                let step = scale * *g;
                if step != T::zero() {
                    *w -= step;
                }
            }
        }
        for (b, g) in model.encoder_bias.iter_mut().zip(&bias_avg) {
            let step = scale * *g;
            if step != T::zero() {
                *b -= step;
            }
        }
    }

    let n_images = T::from_usize(corpus.len());
    let mse = mse_sum / n_images;
    if mse.as_f64() > INSTABILITY_LIMIT {
        return Err(AeError::Unstable { epoch, mse: mse.as_f64() });
    }

    let mut delta_sq = T::zero();
    for (n, o) in model.encoder.elements_flat().iter().zip(start.encoder.elements_flat()) {
        let d = *n - *o;
        delta_sq += d * d;
    }
    for (n, o) in model.decoder.elements_flat().iter().zip(start.decoder.elements_flat()) {
        let d = *n - *o;
        delta_sq += d * d;
    }
    for (n, o) in model.encoder_bias.iter().zip(&start.encoder_bias) {
        let d = *n - *o;
        delta_sq += d * d;
    }

    let stats = EpochStats {
        mse,
        energy: loss_sum / n_images,
        percent_active: active_sum / n_images,
        dict_delta: delta_sq.sqrt(),
    };
    Ok((model, stats))
}

/// Full SGD run from a caller-initialized model.
pub fn ae_train<T: Scalar>(
    corpus: &[ImageTensor<T>],
    model: AutoencoderModel<T>,
    cfg: &AeTrainConfig<T>,
) -> Result<(AutoencoderModel<T>, TrainStats<T>), AeError> {
    if corpus.is_empty() {
        return Err(AeError::EmptyCorpus);
    }
    let mut model = model;
    let mut stats = TrainStats::default();
    for epoch in 0..cfg.epochs {
        let (next, row) = ae_train_epoch(corpus, model, cfg, epoch)?;
        model = next;
        stats.epochs.push(row);
    }
    Ok((model, stats))
}
