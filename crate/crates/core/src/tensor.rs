//! Dense rank-3 tensors and the two strided linear maps everything else is
//! built from: dictionary analysis (`correlate`, the transpose map) and
//! dictionary synthesis (`conv_transpose`).
//!
//! Boundary handling is valid-only: patches are placed at stride multiples
//! with no padding, so a `h × w` image with patch `p` and stride `s` produces
//! a `(h-p)/s + 1` by `(w-p)/s + 1` activation map and `s` must divide both
//! `h - p` and `w - p`.

use crate::scalar::Scalar;

/// Errors from tensor construction and the linear maps.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TensorError {
    /// A shape precondition failed on the named axis.
    #[error("dimension mismatch on {axis}: {detail}")]
    DimMismatch { axis: &'static str, detail: String },
    /// Two flat sequences that must be equally long are not.
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    /// A NaN or infinity where the invariants require finite values.
    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },
}

fn check_finite<T: Scalar>(data: &[T]) -> Result<(), TensorError> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(TensorError::NonFinite { index }),
        None => Ok(()),
    }
}

/// A dense image: `height × width × channels`, row-major by (row, col, channel).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor<T: Scalar = f64> {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T: Scalar> ImageTensor<T> {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<T>) -> Result<Self, TensorError> {
        let expect = height * width * channels;
        if data.len() != expect {
            return Err(TensorError::LengthMismatch { left: data.len(), right: expect });
        }
        check_finite(&data)?;
        Ok(Self { height, width, channels, data })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self { height, width, channels, data: vec![T::zero(); height * width * channels] }
    }

    pub fn from_fn(height: usize, width: usize, channels: usize, mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for r in 0..height {
            for c in 0..width {
                for ch in 0..channels {
                    data.push(f(r, c, ch));
                }
            }
        }
        Self { height, width, channels, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> T {
        self.data[(row * self.width + col) * self.channels + channel]
    }

    pub fn set(&mut self, row: usize, col: usize, channel: usize, value: T) {
        self.data[(row * self.width + col) * self.channels + channel] = value;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Mean over all entries.
    pub fn mean(&self) -> T {
        if self.data.is_empty() {
            return T::zero();
        }
        let sum: T = self.data.iter().copied().sum();
        sum / T::from_usize(self.data.len())
    }
}

/// The convolutional dictionary: `K` square patch elements sharing one stride.
///
/// Elements are stored element-major; within an element the layout matches
/// [`ImageTensor`]: (row, col, channel).
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary<T: Scalar = f64> {
    num_elements: usize,
    patch: usize,
    channels: usize,
    stride: usize,
    elements: Vec<T>,
}

impl<T: Scalar> Dictionary<T> {
    pub fn new(
        num_elements: usize,
        patch: usize,
        channels: usize,
        stride: usize,
        elements: Vec<T>,
    ) -> Result<Self, TensorError> {
        if num_elements == 0 || patch == 0 || channels == 0 || stride == 0 {
            return Err(TensorError::DimMismatch {
                axis: "dictionary",
                detail: "all dimensions must be positive".into(),
            });
        }
        let expect = num_elements * patch * patch * channels;
        if elements.len() != expect {
            return Err(TensorError::LengthMismatch { left: elements.len(), right: expect });
        }
        check_finite(&elements)?;
        Ok(Self { num_elements, patch, channels, stride, elements })
    }

    pub fn zeros(num_elements: usize, patch: usize, channels: usize, stride: usize) -> Self {
        Self {
            num_elements,
            patch,
            channels,
            stride,
            elements: vec![T::zero(); num_elements * patch * patch * channels],
        }
    }

    pub fn num_elements(&self) -> usize {
        self.num_elements
    }

    pub fn patch(&self) -> usize {
        self.patch
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    /// Flat length of one element block.
    pub fn element_len(&self) -> usize {
        self.patch * self.patch * self.channels
    }

    pub fn element(&self, k: usize) -> &[T] {
        let len = self.element_len();
        &self.elements[k * len..(k + 1) * len]
    }

    pub fn element_mut(&mut self, k: usize) -> &mut [T] {
        let len = self.element_len();
        &mut self.elements[k * len..(k + 1) * len]
    }

    pub fn elements_flat(&self) -> &[T] {
        &self.elements
    }

    /// L2 norm of one element.
    pub fn element_norm(&self, k: usize) -> T {
        self.element(k).iter().map(|v| *v * *v).sum::<T>().sqrt()
    }

    /// Rescale every element to unit L2 norm. Elements with zero norm are
    /// left untouched.
    pub fn normalize_elements(&mut self) {
        for k in 0..self.num_elements {
            let norm = self.element_norm(k);
            if norm > T::zero() {
                for v in self.element_mut(k) {
                    *v /= norm;
                }
            }
        }
    }

    /// Activation-map shape produced by an image of the given size, checking
    /// the stride relation on each axis.
    pub fn map_shape(&self, image_height: usize, image_width: usize) -> Result<(usize, usize), TensorError> {
        let axis_len = |len: usize, axis: &'static str| -> Result<usize, TensorError> {
            if len < self.patch {
                return Err(TensorError::DimMismatch {
                    axis,
                    detail: format!("image side {} smaller than patch {}", len, self.patch),
                });
            }
            if (len - self.patch) % self.stride != 0 {
                return Err(TensorError::DimMismatch {
                    axis,
                    detail: format!(
                        "stride {} does not divide image side {} minus patch {}",
                        self.stride, len, self.patch
                    ),
                });
            }
            Ok((len - self.patch) / self.stride + 1)
        };
        Ok((axis_len(image_height, "height")?, axis_len(image_width, "width")?))
    }
}

/// Coefficient tensor: `map_height × map_width × K`, row-major by
/// (row, col, element).
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTensor<T: Scalar = f64> {
    map_height: usize,
    map_width: usize,
    num_elements: usize,
    data: Vec<T>,
}

impl<T: Scalar> ActivationTensor<T> {
    pub fn new(
        map_height: usize,
        map_width: usize,
        num_elements: usize,
        data: Vec<T>,
    ) -> Result<Self, TensorError> {
        let expect = map_height * map_width * num_elements;
        if data.len() != expect {
            return Err(TensorError::LengthMismatch { left: data.len(), right: expect });
        }
        check_finite(&data)?;
        Ok(Self { map_height, map_width, num_elements, data })
    }

    pub fn zeros(map_height: usize, map_width: usize, num_elements: usize) -> Self {
        Self {
            map_height,
            map_width,
            num_elements,
            data: vec![T::zero(); map_height * map_width * num_elements],
        }
    }

    pub fn map_height(&self) -> usize {
        self.map_height
    }

    pub fn map_width(&self) -> usize {
        self.map_width
    }

    pub fn num_elements(&self) -> usize {
        self.num_elements
    }

    pub fn get(&self, row: usize, col: usize, element: usize) -> T {
        self.data[(row * self.map_width + col) * self.num_elements + element]
    }

    pub fn set(&mut self, row: usize, col: usize, element: usize, value: T) {
        self.data[(row * self.map_width + col) * self.num_elements + element] = value;
    }

    /// The K coefficients at one map site, element-contiguous.
    pub fn site(&self, row: usize, col: usize) -> &[T] {
        let base = (row * self.map_width + col) * self.num_elements;
        &self.data[base..base + self.num_elements]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Number of entries with a value other than exactly zero.
    pub fn nonzero_count(&self) -> usize {
        self.data.iter().filter(|v| **v != T::zero()).count()
    }
}

fn check_compat<T: Scalar>(image: &ImageTensor<T>, dict: &Dictionary<T>) -> Result<(usize, usize), TensorError> {
    if image.channels != dict.channels {
        return Err(TensorError::DimMismatch {
            axis: "channels",
            detail: format!("image has {}, dictionary has {}", image.channels, dict.channels),
        });
    }
    dict.map_shape(image.height, image.width)
}

/// Analysis map: slide every dictionary element over the image.
///
/// `out[r, c, k]` is the inner product of element `k` with the image patch
/// whose top-left corner sits at `(r·stride, c·stride)`. This is the
/// feed-forward activation of a strided convolutional layer and the transpose
/// of [`conv_transpose`].
pub fn correlate<T: Scalar>(image: &ImageTensor<T>, dict: &Dictionary<T>) -> Result<ActivationTensor<T>, TensorError> {
    let (map_h, map_w) = check_compat(image, dict)?;
    let mut out = ActivationTensor::zeros(map_h, map_w, dict.num_elements);
    correlate_into(image, dict, &element_major_to_position_major(dict), &mut out);
    Ok(out)
}

/// Dictionary elements re-laid-out position-major (`p * K + k`), so the inner
/// accumulation loop of [`correlate_into`] runs over contiguous memory with
/// independent per-element accumulators.
pub(crate) fn element_major_to_position_major<T: Scalar>(dict: &Dictionary<T>) -> Vec<T> {
    let len = dict.element_len();
    let k_total = dict.num_elements;
    let mut pm = vec![T::zero(); len * k_total];
    for k in 0..k_total {
        let elem = dict.element(k);
        for (p, v) in elem.iter().enumerate() {
            pm[p * k_total + k] = *v;
        }
    }
    pm
}

/// [`correlate`] with caller-owned output and a prebuilt position-major
/// layout; the solver loop calls this every step.
///
/// Sites are processed in blocks of four so each streamed weight row is
/// reused across the block; per-coefficient accumulation order is unchanged
/// (ascending patch position), so results are bit-identical to the naive
/// loop.
pub(crate) fn correlate_into<T: Scalar>(
    image: &ImageTensor<T>,
    dict: &Dictionary<T>,
    position_major: &[T],
    out: &mut ActivationTensor<T>,
) {
    let k_total = dict.num_elements;
    let patch = dict.patch;
    let stride = dict.stride;
    let row_run = patch * dict.channels;
    let img_row_len = image.width * image.channels;
    let img = &image.data;

    const K_TILE: usize = 32;
    let site_step = stride * image.channels;

    for r in 0..out.map_height {
        let row_base = (r * stride) * img_row_len;
        let mut c0 = 0;
        // Four sites and eight elements per pass: the eight per-site
        // accumulators live in registers across the whole patch scan.
        while c0 + 4 <= out.map_width {
            let mut k0 = 0;
            while k0 + K_TILE <= k_total {
                let mut acc0 = [T::zero(); K_TILE];
                let mut acc1 = [T::zero(); K_TILE];
                let mut acc2 = [T::zero(); K_TILE];
                let mut acc3 = [T::zero(); K_TILE];
                for pr in 0..patch {
                    let img_row = &img[row_base + pr * img_row_len..row_base + (pr + 1) * img_row_len];
                    let pm_row = &position_major[pr * row_run * k_total..(pr + 1) * row_run * k_total];
                    for i in 0..row_run {
                        let w: &[T; K_TILE] =
                            pm_row[i * k_total + k0..i * k_total + k0 + K_TILE].try_into().unwrap();
                        let base = c0 * site_step + i;
                        let x0 = img_row[base];
                        let x1 = img_row[base + site_step];
                        let x2 = img_row[base + 2 * site_step];
                        let x3 = img_row[base + 3 * site_step];
                        for j in 0..K_TILE {
                            acc0[j] += x0 * w[j];
                            acc1[j] += x1 * w[j];
                            acc2[j] += x2 * w[j];
                            acc3[j] += x3 * w[j];
                        }
                    }
                }
                for (s, acc) in [acc0, acc1, acc2, acc3].iter().enumerate() {
                    let out_base = (r * out.map_width + c0 + s) * k_total + k0;
                    out.data[out_base..out_base + K_TILE].copy_from_slice(acc);
                }
                k0 += K_TILE;
            }
            // Element tail for k_total not divisible by the tile.
            for s in 0..4 {
                correlate_site_tail(img, position_major, out, r, c0 + s, k0, k_total, patch, row_run, img_row_len, stride, image.channels, row_base);
            }
            c0 += 4;
        }
        // Site tail, one site at a time over all elements.
        for c in c0..out.map_width {
            correlate_site_tail(img, position_major, out, r, c, 0, k_total, patch, row_run, img_row_len, stride, image.channels, row_base);
        }
    }
}

/// Scalar fallback covering element range `[k0, k_total)` of one site.
#[allow(clippy::too_many_arguments)]
fn correlate_site_tail<T: Scalar>(
    img: &[T],
    position_major: &[T],
    out: &mut ActivationTensor<T>,
    r: usize,
    c: usize,
    k0: usize,
    k_total: usize,
    patch: usize,
    row_run: usize,
    img_row_len: usize,
    stride: usize,
    channels: usize,
    row_base: usize,
) {
    if k0 >= k_total {
        return;
    }
    let span = k_total - k0;
    let mut acc = vec![T::zero(); span];
    let img_base = row_base + (c * stride) * channels;
    for pr in 0..patch {
        let img_row = &img[img_base + pr * img_row_len..img_base + pr * img_row_len + row_run];
        let pm_base = pr * row_run * k_total;
        for (i, &x) in img_row.iter().enumerate() {
            let w = &position_major[pm_base + i * k_total + k0..pm_base + i * k_total + k_total];
            for (a, &wj) in acc.iter_mut().zip(w) {
                *a += x * wj;
            }
        }
    }
    let out_base = (r * out.map_width() + c) * k_total + k0;
    out.data[out_base..out_base + span].copy_from_slice(&acc);
}

/// Synthesis map: paste element `k` scaled by `acts[r, c, k]` at offset
/// `(r·stride, c·stride)` and sum overlapping contributions.
///
/// Adjoint to [`correlate`]: `⟨correlate(x, Φ), a⟩ = ⟨x, conv_transpose(a, Φ)⟩`.
pub fn conv_transpose<T: Scalar>(
    acts: &ActivationTensor<T>,
    dict: &Dictionary<T>,
    out_h: usize,
    out_w: usize,
) -> Result<ImageTensor<T>, TensorError> {
    let mut out = ImageTensor::zeros(out_h, out_w, dict.channels);
    conv_transpose_into(acts, dict, &mut out)?;
    Ok(out)
}

/// [`conv_transpose`] accumulating into a caller-owned (zeroed here) image.
pub(crate) fn conv_transpose_into<T: Scalar>(
    acts: &ActivationTensor<T>,
    dict: &Dictionary<T>,
    out: &mut ImageTensor<T>,
) -> Result<(), TensorError> {
    if acts.num_elements != dict.num_elements {
        return Err(TensorError::DimMismatch {
            axis: "elements",
            detail: format!("activations carry {}, dictionary {}", acts.num_elements, dict.num_elements),
        });
    }
    if out.channels != dict.channels {
        return Err(TensorError::DimMismatch {
            axis: "channels",
            detail: format!("output has {}, dictionary has {}", out.channels, dict.channels),
        });
    }
    let (map_h, map_w) = dict.map_shape(out.height, out.width)?;
    if (map_h, map_w) != (acts.map_height, acts.map_width) {
        return Err(TensorError::DimMismatch {
            axis: "map",
            detail: format!(
                "activations are {}x{}, output size implies {}x{}",
                acts.map_height, acts.map_width, map_h, map_w
            ),
        });
    }

    for v in out.data.iter_mut() {
        *v = T::zero();
    }
    let patch = dict.patch;
    let stride = dict.stride;
    let row_run = patch * dict.channels;
    let img_row_len = out.width * out.channels;
    let k_total = dict.num_elements;

    for r in 0..map_h {
        for c in 0..map_w {
            let coeffs = &acts.data[(r * map_w + c) * k_total..(r * map_w + c + 1) * k_total];
            let img_base = (r * stride) * img_row_len + (c * stride) * out.channels;
            for (k, &coeff) in coeffs.iter().enumerate() {
                if coeff == T::zero() {
                    continue;
                }
                let elem = dict.element(k);
                for pr in 0..patch {
                    let dst = &mut out.data[img_base + pr * img_row_len..img_base + pr * img_row_len + row_run];
                    let src = &elem[pr * row_run..(pr + 1) * row_run];
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d += coeff * s;
                    }
                }
            }
        }
    }
    Ok(())
}

/// Inner product with fixed left-to-right summation order.
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> Result<T, TensorError> {
    if a.len() != b.len() {
        return Err(TensorError::LengthMismatch { left: a.len(), right: b.len() });
    }
    let mut acc = T::zero();
    for (x, y) in a.iter().zip(b) {
        acc += *x * *y;
    }
    Ok(acc)
}

/// Elementwise `alpha * x`.
pub fn scale<T: Scalar>(alpha: T, x: &[T]) -> Vec<T> {
    x.iter().map(|v| alpha * *v).collect()
}

/// Elementwise `x + y`.
pub fn add<T: Scalar>(x: &[T], y: &[T]) -> Result<Vec<T>, TensorError> {
    if x.len() != y.len() {
        return Err(TensorError::LengthMismatch { left: x.len(), right: y.len() });
    }
    Ok(x.iter().zip(y).map(|(a, b)| *a + *b).collect())
}

/// Elementwise `alpha * x + y`.
pub fn axpy<T: Scalar>(alpha: T, x: &[T], y: &[T]) -> Result<Vec<T>, TensorError> {
    if x.len() != y.len() {
        return Err(TensorError::LengthMismatch { left: x.len(), right: y.len() });
    }
    Ok(x.iter().zip(y).map(|(a, b)| alpha * *a + *b).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> ImageTensor<f64> {
        ImageTensor::from_fn(h, w, c, |_, _, _| rng.gen_range(-1.0..1.0))
    }

    fn random_dict(rng: &mut ChaCha8Rng, k: usize, patch: usize, channels: usize, stride: usize) -> Dictionary<f64> {
        let mut d = Dictionary::zeros(k, patch, channels, stride);
        for v in d.elements.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        d
    }

    fn random_acts(rng: &mut ChaCha8Rng, h: usize, w: usize, k: usize) -> ActivationTensor<f64> {
        let mut a = ActivationTensor::zeros(h, w, k);
        for v in a.data.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        a
    }

    #[test]
    fn paper_scale_map_shape_uses_valid_convolution() {
        // 128x128 input, patch 16, stride 4: valid placement gives 29x29.
        let dict = Dictionary::<f64>::zeros(128, 16, 3, 4);
        assert_eq!(dict.map_shape(128, 128).unwrap(), (29, 29));

        let dict8 = Dictionary::<f64>::zeros(64, 8, 3, 4);
        assert_eq!(dict8.map_shape(64, 64).unwrap(), (15, 15));
    }

    #[test]
    fn correlate_all_zero_image_gives_zero_acts() {
        let image = ImageTensor::<f64>::zeros(8, 8, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dict = random_dict(&mut rng, 4, 3, 1, 1);
        let acts = correlate(&image, &dict).unwrap();
        assert!(acts.as_slice().iter().all(|v| *v == 0.0));
        assert_eq!((acts.map_height(), acts.map_width()), (6, 6));
    }

    #[test]
    fn correlate_ones_patch_hand_computed() {
        // 3x3 image of ones, single 2x2 element of ones, stride 1: every
        // inner product is 4.
        let image = ImageTensor::new(3, 3, 1, vec![1.0; 9]).unwrap();
        let dict = Dictionary::new(1, 2, 1, 1, vec![1.0; 4]).unwrap();
        let acts = correlate(&image, &dict).unwrap();
        assert_eq!((acts.map_height(), acts.map_width(), acts.num_elements()), (2, 2, 1));
        assert!(acts.as_slice().iter().all(|v| *v == 4.0));
    }

    #[test]
    fn correlate_rejects_channel_mismatch() {
        let image = ImageTensor::<f64>::zeros(8, 8, 3);
        let dict = Dictionary::<f64>::zeros(4, 3, 1, 1);
        let err = correlate(&image, &dict).unwrap_err();
        assert!(matches!(err, TensorError::DimMismatch { axis: "channels", .. }));
    }

    #[test]
    fn correlate_rejects_bad_stride_fit() {
        let image = ImageTensor::<f64>::zeros(9, 8, 1);
        let dict = Dictionary::<f64>::zeros(4, 4, 1, 2); // (9-4) % 2 != 0
        let err = correlate(&image, &dict).unwrap_err();
        assert!(matches!(err, TensorError::DimMismatch { axis: "height", .. }));
    }

    #[test]
    fn conv_transpose_zero_acts_gives_zero_image() {
        let acts = ActivationTensor::<f64>::zeros(2, 2, 1);
        let dict = Dictionary::new(1, 2, 1, 1, vec![1.0; 4]).unwrap();
        let img = conv_transpose(&acts, &dict, 3, 3).unwrap();
        assert!(img.as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn conv_transpose_single_coefficient_pastes_element() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let dict = random_dict(&mut rng, 3, 2, 1, 2);
        let mut acts = ActivationTensor::zeros(2, 2, 3);
        acts.set(1, 0, 2, 1.0);
        let img = conv_transpose(&acts, &dict, 4, 4).unwrap();
        let elem = dict.element(2);
        for r in 0..4 {
            for c in 0..4 {
                let expect = if (2..4).contains(&r) && (0..2).contains(&c) {
                    elem[(r - 2) * 2 + c]
                } else {
                    0.0
                };
                assert_eq!(img.get(r, c, 0), expect);
            }
        }
    }

    #[test]
    fn conv_transpose_overlap_add_hand_computed() {
        // 2x2 activations of ones, 2x2 ones element, stride 1, 3x3 output:
        // center 4, edge centers 2, corners 1.
        let acts = ActivationTensor::new(2, 2, 1, vec![1.0; 4]).unwrap();
        let dict = Dictionary::new(1, 2, 1, 1, vec![1.0; 4]).unwrap();
        let img = conv_transpose(&acts, &dict, 3, 3).unwrap();
        let expect = [1.0, 2.0, 1.0, 2.0, 4.0, 2.0, 1.0, 2.0, 1.0];
        assert_eq!(img.as_slice(), &expect);
    }

    #[test]
    fn conv_transpose_rejects_map_mismatch() {
        let acts = ActivationTensor::<f64>::zeros(2, 2, 1);
        let dict = Dictionary::new(1, 2, 1, 1, vec![1.0; 4]).unwrap();
        assert!(conv_transpose(&acts, &dict, 5, 5).is_err());
    }

    #[test]
    fn dot_hand_cases() {
        assert_eq!(dot(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), 11.0);
        assert_eq!(dot(&[5.0, -2.0, 7.0], &[0.0, 0.0, 0.0]).unwrap(), 0.0);
        assert!(dot(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn axpy_scale_add_hand_cases() {
        assert_eq!(axpy(2.0, &[1.0, 1.0], &[0.0, 1.0]).unwrap(), vec![2.0, 3.0]);
        assert_eq!(scale(3.0, &[1.0, -2.0]), vec![3.0, -6.0]);
        assert_eq!(add(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), vec![4.0, 6.0]);
        assert!(add::<f64>(&[1.0], &[]).is_err());
    }

    #[test]
    fn constructors_reject_non_finite() {
        assert!(matches!(
            ImageTensor::new(1, 1, 2, vec![1.0, f64::NAN]),
            Err(TensorError::NonFinite { index: 1 })
        ));
        assert!(Dictionary::new(1, 1, 1, 1, vec![f64::INFINITY]).is_err());
        assert!(ActivationTensor::new(1, 1, 1, vec![f64::NEG_INFINITY]).is_err());
    }

    #[test]
    fn kernels_run_at_f32_too() {
        let image = ImageTensor::<f32>::new(3, 3, 1, vec![1.0; 9]).unwrap();
        let dict = Dictionary::<f32>::new(1, 2, 1, 1, vec![1.0; 4]).unwrap();
        let acts = correlate(&image, &dict).unwrap();
        assert!(acts.as_slice().iter().all(|v| *v == 4.0f32));
    }

    #[test]
    fn adjointness_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let dict = random_dict(&mut rng, 4, 3, 1, 1);
            let image = random_image(&mut rng, 8, 8, 1);
            let acts = random_acts(&mut rng, 6, 6, 4);
            let lhs = dot(correlate(&image, &dict).unwrap().as_slice(), acts.as_slice()).unwrap();
            let rhs = dot(image.as_slice(), conv_transpose(&acts, &dict, 8, 8).unwrap().as_slice()).unwrap();
            let tol = 1e-10 * (1.0 + lhs.abs().max(rhs.abs()));
            assert!((lhs - rhs).abs() <= tol, "adjointness broke: {lhs} vs {rhs}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn correlate_is_linear(seed in 0u64..1_000_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dict = random_dict(&mut rng, 3, 2, 1, 2);
            let x = random_image(&mut rng, 6, 6, 1);
            let y = random_image(&mut rng, 6, 6, 1);
            let alpha: f64 = rng.gen_range(-2.0..2.0);
            let beta: f64 = rng.gen_range(-2.0..2.0);
            let mixed = ImageTensor::new(6, 6, 1, axpy(alpha, x.as_slice(), &scale(beta, y.as_slice())).unwrap()).unwrap();
            let lhs = correlate(&mixed, &dict).unwrap();
            let rhs = axpy(
                alpha,
                correlate(&x, &dict).unwrap().as_slice(),
                &scale(beta, correlate(&y, &dict).unwrap().as_slice()),
            ).unwrap();
            for (l, r) in lhs.as_slice().iter().zip(&rhs) {
                prop_assert!((l - r).abs() <= 1e-10 * (1.0 + l.abs().max(r.abs())));
            }
        }

        #[test]
        fn conv_transpose_is_linear(seed in 0u64..1_000_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dict = random_dict(&mut rng, 3, 2, 1, 2);
            let a = random_acts(&mut rng, 3, 3, 3);
            let b = random_acts(&mut rng, 3, 3, 3);
            let alpha: f64 = rng.gen_range(-2.0..2.0);
            let beta: f64 = rng.gen_range(-2.0..2.0);
            let mixed = ActivationTensor::new(3, 3, 3, axpy(alpha, a.as_slice(), &scale(beta, b.as_slice())).unwrap()).unwrap();
            let lhs = conv_transpose(&mixed, &dict, 6, 6).unwrap();
            let rhs = axpy(
                alpha,
                conv_transpose(&a, &dict, 6, 6).unwrap().as_slice(),
                &scale(beta, conv_transpose(&b, &dict, 6, 6).unwrap().as_slice()),
            ).unwrap();
            for (l, r) in lhs.as_slice().iter().zip(&rhs) {
                prop_assert!((l - r).abs() <= 1e-10 * (1.0 + l.abs().max(r.abs())));
            }
        }

        #[test]
        fn shape_round_trip(seed in 0u64..1_000_000, k in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dict = random_dict(&mut rng, k, 3, 2, 1);
            let image = random_image(&mut rng, 7, 9, 2);
            let acts = correlate(&image, &dict).unwrap();
            let back = conv_transpose(&acts, &dict, image.height(), image.width()).unwrap();
            prop_assert_eq!(back.height(), image.height());
            prop_assert_eq!(back.width(), image.width());
            prop_assert_eq!(back.channels(), image.channels());
        }
    }
}
