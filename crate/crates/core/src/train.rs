//! Dictionary learning: alternate sparse inference with a local Hebbian
//! update of the elements.
//!
//! Holding the codes fixed, the update for element `k` accumulates
//! `a[r,c,k] * residual_patch(r,c)` over active sites, which is the negative
//! gradient of the reconstruction term. Elements are projected back to unit
//! L2 norm after every update so the sparsity threshold keeps its meaning.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::lca::{encode, LcaConfig, SolverError};
use crate::scalar::Scalar;
use crate::tensor::{conv_transpose, ActivationTensor, Dictionary, ImageTensor, TensorError};

/// Dimensions of a dictionary without its values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DictShape {
    pub num_elements: usize,
    pub patch: usize,
    pub channels: usize,
    pub stride: usize,
}

impl<T: Scalar> Dictionary<T> {
    pub fn shape(&self) -> DictShape {
        DictShape {
            num_elements: self.num_elements(),
            patch: self.patch(),
            channels: self.channels(),
            stride: self.stride(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig<T: Scalar = f64> {
    pub lca: LcaConfig<T>,
    pub dict_learning_rate: T,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Project every updated element back to unit L2 norm.
    pub normalize_every_update: bool,
}

impl<T: Scalar> Default for TrainConfig<T> {
    fn default() -> Self {
        Self {
            lca: LcaConfig::default(),
            dict_learning_rate: T::from_f64(0.1),
            epochs: 20,
            batch_size: 8,
            seed: 0,
            normalize_every_update: true,
        }
    }
}

/// One epoch of training statistics.
#[derive(Debug, Clone, Copy)]
pub struct EpochStats<T: Scalar = f64> {
    /// Mean per-pixel squared reconstruction error.
    pub mse: T,
    /// Mean objective value (reconstruction plus weighted L1).
    pub energy: T,
    /// Mean fraction of nonzero coefficients.
    pub percent_active: T,
    /// Frobenius norm of the dictionary change over the epoch.
    pub dict_delta: T,
}

#[derive(Debug, Clone)]
pub struct TrainStats<T: Scalar = f64> {
    pub epochs: Vec<EpochStats<T>>,
}

impl<T: Scalar> Default for TrainStats<T> {
    fn default() -> Self {
        Self { epochs: Vec::new() }
    }
}

impl<T: Scalar> TrainStats<T> {
    /// CSV with header `epoch,mse,energy,percent_active,dict_delta`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epoch,mse,energy,percent_active,dict_delta")?;
        for (i, row) in self.epochs.iter().enumerate() {
            writeln!(w, "{},{},{},{},{}", i + 1, row.mse, row.energy, row.percent_active, row.dict_delta)?;
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("solver failed on batch {batch}, image {image}: {source}")]
    Solver {
        batch: usize,
        image: usize,
        source: SolverError,
    },
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Deterministic sub-seed derivation (splitmix64 over the mixed inputs).
pub(crate) fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn random_unit_elements<T: Scalar>(rng: &mut ChaCha8Rng, count: usize, len: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(count * len);
    for _ in 0..count {
        let start = out.len();
        for _ in 0..len {
            out.push(T::from_f64(rng.gen_range(-1.0..1.0)));
        }
        let norm = out[start..].iter().map(|v| *v * *v).sum::<T>().sqrt();
        if norm > T::zero() {
            for v in &mut out[start..] {
                *v /= norm;
            }
        }
    }
    out
}

/// Seeded dictionary: elements drawn uniformly centered at zero, each
/// normalized to unit L2 norm.
pub fn init_dictionary<T: Scalar>(
    seed: u64,
    num_elements: usize,
    patch: usize,
    channels: usize,
    stride: usize,
) -> Dictionary<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let elements = random_unit_elements(&mut rng, num_elements, patch * patch * channels);
    Dictionary::new(num_elements, patch, channels, stride, elements)
        .expect("init dimensions are positive and values finite")
}

/// Per-element Hebbian accumulation: `out[k] = sum over sites of
/// acts[r,c,k] * source_patch(r, c)`. Shared by the trainer and the
/// autoencoder backward pass.
pub(crate) fn accumulate_activity_patches<T: Scalar>(
    acts: &ActivationTensor<T>,
    source: &ImageTensor<T>,
    shape: &DictShape,
) -> Result<Vec<Vec<T>>, TensorError> {
    if acts.num_elements() != shape.num_elements {
        return Err(TensorError::DimMismatch {
            axis: "elements",
            detail: format!("activations carry {}, shape expects {}", acts.num_elements(), shape.num_elements),
        });
    }
    if source.channels() != shape.channels {
        return Err(TensorError::DimMismatch {
            axis: "channels",
            detail: format!("image has {}, shape expects {}", source.channels(), shape.channels),
        });
    }
    let probe = Dictionary::<T>::zeros(1, shape.patch, shape.channels, shape.stride);
    let (map_h, map_w) = probe.map_shape(source.height(), source.width())?;
    if (map_h, map_w) != (acts.map_height(), acts.map_width()) {
        return Err(TensorError::DimMismatch {
            axis: "map",
            detail: format!(
                "activations are {}x{}, image implies {}x{}",
                acts.map_height(), acts.map_width(), map_h, map_w
            ),
        });
    }

    let elem_len = shape.patch * shape.patch * shape.channels;
    let mut out = vec![vec![T::zero(); elem_len]; shape.num_elements];
    let row_run = shape.patch * shape.channels;
    let img_row_len = source.width() * source.channels();
    let img = source.as_slice();
    for r in 0..map_h {
        for c in 0..map_w {
            let coeffs = acts.site(r, c);
            let img_base = (r * shape.stride) * img_row_len + (c * shape.stride) * shape.channels;
            for (k, &coeff) in coeffs.iter().enumerate() {
                if coeff == T::zero() {
                    continue;
                }
                let block = &mut out[k];
                for pr in 0..shape.patch {
                    let src = &img[img_base + pr * img_row_len..img_base + pr * img_row_len + row_run];
                    let dst = &mut block[pr * row_run..(pr + 1) * row_run];
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d += coeff * s;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Negative gradient of the reconstruction term with respect to each
/// dictionary element, holding the activations fixed.
pub fn dict_gradient<T: Scalar>(
    image: &ImageTensor<T>,
    recon: &ImageTensor<T>,
    acts: &ActivationTensor<T>,
    shape: &DictShape,
) -> Result<Vec<Vec<T>>, TensorError> {
    if image.height() != recon.height() || image.width() != recon.width() || image.channels() != recon.channels() {
        return Err(TensorError::DimMismatch {
            axis: "reconstruction",
            detail: "image and reconstruction differ in shape".into(),
        });
    }
    let residual = ImageTensor::new(
        image.height(),
        image.width(),
        image.channels(),
        image.as_slice().iter().zip(recon.as_slice()).map(|(x, r)| *x - *r).collect(),
    )?;
    accumulate_activity_patches(acts, &residual, shape)
}

struct SampleOutcome<T: Scalar> {
    mse: T,
    energy: T,
    percent_active: T,
    gradient: Vec<Vec<T>>,
    used: Vec<bool>,
}

fn encode_and_grade<T: Scalar>(
    image: &ImageTensor<T>,
    dict: &Dictionary<T>,
    cfg: &LcaConfig<T>,
) -> Result<SampleOutcome<T>, SolverError> {
    let state = encode(image, dict, cfg)?;
    let recon = conv_transpose(&state.activations, dict, image.height(), image.width())?;
    let mut sq = T::zero();
    for (x, r) in image.as_slice().iter().zip(recon.as_slice()) {
        let d = *x - *r;
        sq += d * d;
    }
    let numel = T::from_usize(image.as_slice().len());
    let acts = &state.activations;
    let mut used = vec![false; dict.num_elements()];
    for site in acts.as_slice().chunks(dict.num_elements()) {
        for (k, v) in site.iter().enumerate() {
            if *v != T::zero() {
                used[k] = true;
            }
        }
    }
    let gradient = dict_gradient(image, &recon, acts, &dict.shape())?;
    Ok(SampleOutcome {
        mse: sq / numel,
        energy: *state.energy_trace.last().unwrap_or(&T::zero()),
        percent_active: T::from_usize(acts.nonzero_count()) / T::from_usize(acts.as_slice().len()),
        gradient,
        used,
    })
}

/// One pass over the corpus: encode each batch against the current
/// dictionary, apply the averaged Hebbian update, renormalize.
///
/// `epoch` indexes this pass within a run; it seeds the reinitialization of
/// elements that never activated during the epoch.
pub fn train_epoch<T: Scalar>(
    corpus: &[ImageTensor<T>],
    dict: Dictionary<T>,
    cfg: &TrainConfig<T>,
    epoch: usize,
) -> Result<(Dictionary<T>, EpochStats<T>), TrainError> {
    if corpus.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let mut dict = dict;
    let start = dict.clone();
    let elem_len = dict.element_len();
    let k_total = dict.num_elements();
    let batch_size = cfg.batch_size.max(1);

    let mut used = vec![false; k_total];
    let mut mse_sum = T::zero();
    let mut energy_sum = T::zero();
    let mut active_sum = T::zero();

    for (batch_idx, batch) in corpus.chunks(batch_size).enumerate() {
        let outcomes: Vec<Result<SampleOutcome<T>, SolverError>> = batch
            .par_iter()
            .map(|image| encode_and_grade(image, &dict, &cfg.lca))
            .collect();

        let mut avg = vec![vec![T::zero(); elem_len]; k_total];
        for (i, outcome) in outcomes.into_iter().enumerate() {
            let outcome = outcome.map_err(|source| TrainError::Solver {
                batch: batch_idx,
                image: batch_idx * batch_size + i,
                source,
            })?;
            mse_sum += outcome.mse;
            energy_sum += outcome.energy;
            active_sum += outcome.percent_active;
            for (k, block) in outcome.gradient.iter().enumerate() {
                for (a, g) in avg[k].iter_mut().zip(block) {
                    *a += *g;
                }
            }
            for (u, b) in used.iter_mut().zip(&outcome.used) {
                *u |= *b;
            }
        }

        let scale = cfg.dict_learning_rate / T::from_usize(batch.len());
        for k in 0..k_total {
            let step: Vec<T> = avg[k].iter().map(|g| scale * *g).collect();
            // A zero step is a no-op; skipping it keeps untouched elements
            // bit-identical (and learning rate 0 leaves the dictionary as-is).
            if step.iter().all(|v| *v == T::zero()) {
                continue;
            }
            for (e, s) in dict.element_mut(k).iter_mut().zip(&step) {
                *e += *s;
            }
            if cfg.normalize_every_update {
                let norm = dict.element_norm(k);
                if norm > T::zero() {
                    for e in dict.element_mut(k) {
                        *e /= norm;
                    }
                }
            }
        }
    }

    // Elements that never fired this epoch restart from seeded noise.
    let dead: Vec<usize> = (0..k_total).filter(|k| !used[*k]).collect();
    if !dead.is_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0xDEAD, epoch as u64));
        for k in dead {
            let fresh = random_unit_elements::<T>(&mut rng, 1, elem_len);
            dict.element_mut(k).copy_from_slice(&fresh);
        }
    }

    let mut delta_sq = T::zero();
    for (n, o) in dict.elements_flat().iter().zip(start.elements_flat()) {
        let d = *n - *o;
        delta_sq += d * d;
    }
    let n_images = T::from_usize(corpus.len());
    let stats = EpochStats {
        mse: mse_sum / n_images,
        energy: energy_sum / n_images,
        percent_active: active_sum / n_images,
        dict_delta: delta_sq.sqrt(),
    };
    Ok((dict, stats))
}

/// Full training run from a caller-initialized dictionary.
pub fn train<T: Scalar>(
    corpus: &[ImageTensor<T>],
    dict: Dictionary<T>,
    cfg: &TrainConfig<T>,
) -> Result<(Dictionary<T>, TrainStats<T>), TrainError> {
    if corpus.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let mut dict = dict;
    let mut stats = TrainStats::default();
    for epoch in 0..cfg.epochs {
        let (next, row) = train_epoch(corpus, dict, cfg, epoch)?;
        dict = next;
        stats.epochs.push(row);
    }
    Ok((dict, stats))
}

/// Compare [`dict_gradient`] with centered finite differences of the
/// reconstruction term, activations held fixed. Returns the largest relative
/// error over all dictionary parameters.
pub fn finite_difference_check<T: Scalar>(
    image: &ImageTensor<T>,
    dict: &Dictionary<T>,
    acts: &ActivationTensor<T>,
    epsilon: T,
) -> Result<T, TensorError> {
    let recon = conv_transpose(acts, dict, image.height(), image.width())?;
    let analytic = dict_gradient(image, &recon, acts, &dict.shape())?;

    let objective = |d: &Dictionary<T>| -> Result<T, TensorError> {
        let r = conv_transpose(acts, d, image.height(), image.width())?;
        let mut sq = T::zero();
        for (x, v) in image.as_slice().iter().zip(r.as_slice()) {
            let diff = *x - *v;
            sq += diff * diff;
        }
        Ok(T::from_f64(0.5) * sq)
    };

    let elem_len = dict.element_len();
    let mut max_rel = T::zero();
    let two_eps = T::from_f64(2.0) * epsilon;
    for k in 0..dict.num_elements() {
        for p in 0..elem_len {
            let mut plus = dict.clone();
            plus.element_mut(k)[p] += epsilon;
            let mut minus = dict.clone();
            minus.element_mut(k)[p] -= epsilon;
            let fd = (objective(&plus)? - objective(&minus)?) / two_eps;
            // dict_gradient is the negative gradient of the objective.
            let an = -analytic[k][p];
            let denom = (fd.abs() + an.abs()).max(T::from_f64(1e-8));
            let rel = (fd - an).abs() / denom;
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    Ok(max_rel)
}
