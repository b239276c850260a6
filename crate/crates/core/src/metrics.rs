//! Interpretability statistics: how sparse the codes are, how often each
//! element is used, and how correlated the activation maps of different
//! elements are within and across images.
//!
//! "Cross correlation" here is the absolute zero-lag inner product of two
//! flattened activation maps. The values are intentionally unnormalized, so
//! they scale with code magnitude; comparisons across models are only fair
//! when the encoding weights were unit-normalized first, which is the
//! caller's obligation (the analyze pipeline does it before encoding).

use crate::scalar::Scalar;
use crate::tensor::ActivationTensor;
use crate::ModelKind;

/// Magnitude below which an entry counts as zero in the epsilon-tolerant
/// variant of percent-active, reported alongside the exact count so dense
/// float codes can be compared with codes that contain exact zeros.
pub const ACTIVE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("no codes supplied")]
    EmptyCorpus,
    #[error("codes disagree on element count: expected {expected}, code {index} has {got}")]
    ElementCountMismatch { expected: usize, got: usize, index: usize },
    #[error("cross-correlation needs at least two elements, got {0}")]
    NotEnoughElements(usize),
}

/// Fraction of entries that are not exactly zero.
pub fn percent_active<T: Scalar>(acts: &ActivationTensor<T>) -> f64 {
    let total = acts.as_slice().len();
    if total == 0 {
        return 0.0;
    }
    acts.nonzero_count() as f64 / total as f64
}

/// Fraction of entries with magnitude above `eps`.
pub fn percent_active_eps<T: Scalar>(acts: &ActivationTensor<T>, eps: f64) -> f64 {
    let total = acts.as_slice().len();
    if total == 0 {
        return 0.0;
    }
    let active = acts.as_slice().iter().filter(|v| v.as_f64().abs() > eps).count();
    active as f64 / total as f64
}

/// Number of (image, site) occasions on which each element is nonzero.
pub fn usage_counts<T: Scalar>(codes: &[ActivationTensor<T>]) -> Result<Vec<usize>, MetricsError> {
    let first = codes.first().ok_or(MetricsError::EmptyCorpus)?;
    let k = first.num_elements();
    let mut counts = vec![0usize; k];
    for (index, code) in codes.iter().enumerate() {
        if code.num_elements() != k {
            return Err(MetricsError::ElementCountMismatch { expected: k, got: code.num_elements(), index });
        }
        for site in code.as_slice().chunks(k) {
            for (count, v) in counts.iter_mut().zip(site) {
                if *v != T::zero() {
                    *count += 1;
                }
            }
        }
    }
    Ok(counts)
}

/// Per-element usage as a fraction of all (image, site) occasions.
pub fn usage_frequency<T: Scalar>(codes: &[ActivationTensor<T>]) -> Result<Vec<f64>, MetricsError> {
    let counts = usage_counts(codes)?;
    let occasions: usize = codes.iter().map(|c| c.map_height() * c.map_width()).sum();
    Ok(counts.iter().map(|c| *c as f64 / occasions.max(1) as f64).collect())
}

/// Per-element maps of one code, flattened site-major, in f64.
fn element_maps<T: Scalar>(acts: &ActivationTensor<T>) -> Vec<Vec<f64>> {
    let k = acts.num_elements();
    let sites = acts.map_height() * acts.map_width();
    let mut maps = vec![vec![0.0f64; sites]; k];
    for (s, site) in acts.as_slice().chunks(k).enumerate() {
        for (map, v) in maps.iter_mut().zip(site) {
            map[s] = v.as_f64();
        }
    }
    maps
}

/// Absolute zero-lag inner products for every unordered element pair.
fn pair_values<T: Scalar>(acts: &ActivationTensor<T>) -> Result<Vec<f64>, MetricsError> {
    let k = acts.num_elements();
    if k < 2 {
        return Err(MetricsError::NotEnoughElements(k));
    }
    let maps = element_maps(acts);
    let mut values = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in i + 1..k {
            let mut acc = 0.0f64;
            for (a, b) in maps[i].iter().zip(&maps[j]) {
                acc += a * b;
            }
            values.push(acc.abs());
        }
    }
    Ok(values)
}

fn mean_and_pop_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Mean and population standard deviation of the pair values within one
/// image's code.
pub fn intra_image_crosscorr<T: Scalar>(acts: &ActivationTensor<T>) -> Result<(f64, f64), MetricsError> {
    let values = pair_values(acts)?;
    Ok(mean_and_pop_std(&values))
}

/// How the across-image spread is summarized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InterStdMode {
    /// Standard deviation of the per-image mean pair values.
    #[default]
    PerImageMeans,
    /// Standard deviation over all pair values pooled across images.
    Pooled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossCorrStats {
    /// Grand mean of all per-image pair values.
    pub mean: f64,
    /// Mean over images of the within-image standard deviation.
    pub intra_std: f64,
    /// Across-image spread, per [`InterStdMode`].
    pub inter_std: f64,
}

/// Corpus-level cross-correlation summary.
pub fn corpus_crosscorr<T: Scalar>(
    codes: &[ActivationTensor<T>],
    mode: InterStdMode,
) -> Result<CrossCorrStats, MetricsError> {
    if codes.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    let mut grand_sum = 0.0f64;
    let mut grand_count = 0usize;
    let mut intra_stds = Vec::with_capacity(codes.len());
    let mut image_means = Vec::with_capacity(codes.len());
    let mut pooled = Vec::new();
    for code in codes {
        let values = pair_values(code)?;
        let (mean, std) = mean_and_pop_std(&values);
        grand_sum += values.iter().sum::<f64>();
        grand_count += values.len();
        intra_stds.push(std);
        image_means.push(mean);
        if mode == InterStdMode::Pooled {
            pooled.extend_from_slice(&values);
        }
    }
    let inter_std = match mode {
        InterStdMode::PerImageMeans => mean_and_pop_std(&image_means).1,
        InterStdMode::Pooled => mean_and_pop_std(&pooled).1,
    };
    Ok(CrossCorrStats {
        mean: grand_sum / grand_count.max(1) as f64,
        intra_std: intra_stds.iter().sum::<f64>() / intra_stds.len() as f64,
        inter_std,
    })
}

fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("metrics values are finite"));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Everything the analysis pipeline reports for one model on one corpus.
#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub model_kind: ModelKind,
    pub percent_active_per_image: Vec<f64>,
    /// Epsilon-tolerant variant ([`ACTIVE_EPS`]), for models without exact zeros.
    pub percent_active_eps_per_image: Vec<f64>,
    pub usage_frequency_per_element: Vec<f64>,
    pub intra_mean_per_image: Vec<f64>,
    pub crosscorr_mean: f64,
    pub crosscorr_intra_std: f64,
    pub crosscorr_inter_std: f64,
}

impl MetricsReport {
    pub fn compute<T: Scalar>(
        codes: &[ActivationTensor<T>],
        model_kind: ModelKind,
        inter_mode: InterStdMode,
    ) -> Result<Self, MetricsError> {
        if codes.is_empty() {
            return Err(MetricsError::EmptyCorpus);
        }
        let usage = usage_frequency(codes)?;
        let cross = corpus_crosscorr(codes, inter_mode)?;
        let mut pa = Vec::with_capacity(codes.len());
        let mut pa_eps = Vec::with_capacity(codes.len());
        let mut intra = Vec::with_capacity(codes.len());
        for code in codes {
            pa.push(percent_active(code));
            pa_eps.push(percent_active_eps(code, ACTIVE_EPS));
            intra.push(intra_image_crosscorr(code)?.0);
        }
        Ok(Self {
            model_kind,
            percent_active_per_image: pa,
            percent_active_eps_per_image: pa_eps,
            usage_frequency_per_element: usage,
            intra_mean_per_image: intra,
            crosscorr_mean: cross.mean,
            crosscorr_intra_std: cross.intra_std,
            crosscorr_inter_std: cross.inter_std,
        })
    }

    pub fn percent_active_median(&self) -> f64 {
        median(&self.percent_active_per_image)
    }

    /// Three-block CSV: `metric,value` summary rows, then `k,usage_frequency`
    /// per element, then `index,percent_active,intra_mean` per image.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.percent_active_per_image.len().max(1) as f64;
        writeln!(w, "metric,value")?;
        writeln!(w, "model_kind,{}", self.model_kind.label())?;
        writeln!(w, "images,{}", self.percent_active_per_image.len())?;
        writeln!(w, "percent_active_mean,{}", self.percent_active_per_image.iter().sum::<f64>() / n)?;
        writeln!(w, "percent_active_median,{}", self.percent_active_median())?;
        writeln!(w, "percent_active_eps_mean,{}", self.percent_active_eps_per_image.iter().sum::<f64>() / n)?;
        writeln!(w, "crosscorr_mean,{}", self.crosscorr_mean)?;
        writeln!(w, "crosscorr_intra_std,{}", self.crosscorr_intra_std)?;
        writeln!(w, "crosscorr_inter_std,{}", self.crosscorr_inter_std)?;
        writeln!(w)?;
        writeln!(w, "k,usage_frequency")?;
        for (k, f) in self.usage_frequency_per_element.iter().enumerate() {
            writeln!(w, "{k},{f}")?;
        }
        writeln!(w)?;
        writeln!(w, "index,percent_active,intra_mean")?;
        for (i, (pa, intra)) in self
            .percent_active_per_image
            .iter()
            .zip(&self.intra_mean_per_image)
            .enumerate()
        {
            writeln!(w, "{i},{pa},{intra}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sparse_code(rng: &mut ChaCha8Rng, h: usize, w: usize, k: usize, density: f64) -> ActivationTensor<f64> {
        let mut a = ActivationTensor::zeros(h, w, k);
        for v in a.as_mut_slice() {
            if rng.gen_bool(density) {
                *v = rng.gen_range(-1.0..1.0);
            }
        }
        a
    }

    #[test]
    fn percent_active_extremes() {
        let zeros = ActivationTensor::<f64>::zeros(2, 2, 3);
        assert_eq!(percent_active(&zeros), 0.0);
        let ones = ActivationTensor::new(2, 2, 3, vec![1.0; 12]).unwrap();
        assert_eq!(percent_active(&ones), 1.0);
        let mut half = ActivationTensor::zeros(1, 1, 2);
        half.set(0, 0, 1, 3.0);
        assert_eq!(percent_active(&half), 0.5);
    }

    #[test]
    fn percent_active_eps_ignores_dust() {
        let acts = ActivationTensor::new(1, 1, 4, vec![0.0, 1e-15, 1e-9, 2.0]).unwrap();
        assert_eq!(percent_active(&acts), 0.75);
        assert_eq!(percent_active_eps(&acts, ACTIVE_EPS), 0.5);
    }

    #[test]
    fn usage_frequency_extremes() {
        let mut a = ActivationTensor::<f64>::zeros(2, 2, 2);
        for s in 0..4 {
            a.set(s / 2, s % 2, 0, 1.0);
        }
        let freq = usage_frequency(&[a.clone(), a]).unwrap();
        assert_eq!(freq, vec![1.0, 0.0]);
    }

    #[test]
    fn usage_counts_match_per_image_nonzeros_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let codes: Vec<ActivationTensor<f64>> =
            (0..5).map(|_| sparse_code(&mut rng, 3, 4, 6, 0.3)).collect();
        let by_element: usize = usage_counts(&codes).unwrap().iter().sum();
        let by_image: usize = codes.iter().map(|c| c.nonzero_count()).sum();
        assert_eq!(by_element, by_image);
        // The fraction forms agree too, up to rounding.
        let occasions = 5 * 3 * 4;
        let freq_total: f64 = usage_frequency(&codes).unwrap().iter().sum::<f64>() * occasions as f64;
        let pa_total: f64 = codes.iter().map(|c| percent_active(c) * (3 * 4 * 6) as f64).sum();
        assert!((freq_total - pa_total).abs() < 1e-9);
    }

    #[test]
    fn usage_rejects_mismatched_element_count() {
        let a = ActivationTensor::<f64>::zeros(1, 1, 2);
        let b = ActivationTensor::<f64>::zeros(1, 1, 3);
        assert!(matches!(
            usage_frequency(&[a, b]),
            Err(MetricsError::ElementCountMismatch { index: 1, .. })
        ));
    }

    #[test]
    fn intra_crosscorr_disjoint_supports_is_zero() {
        // Elements active at different sites have orthogonal maps.
        let mut a = ActivationTensor::<f64>::zeros(1, 2, 2);
        a.set(0, 0, 0, 1.5);
        a.set(0, 1, 1, -2.0);
        let (mean, std) = intra_image_crosscorr(&a).unwrap();
        assert_eq!(mean, 0.0);
        assert_eq!(std, 0.0);
    }

    #[test]
    fn intra_crosscorr_identical_maps_is_squared_norm() {
        let mut a = ActivationTensor::<f64>::zeros(1, 2, 2);
        for s in 0..2 {
            a.set(0, s, 0, 2.0);
            a.set(0, s, 1, 2.0);
        }
        let (mean, _) = intra_image_crosscorr(&a).unwrap();
        assert_eq!(mean, 8.0); // ||m||^2 with m = [2, 2]
    }

    #[test]
    fn intra_crosscorr_three_map_hand_case() {
        // Maps [1,0], [0,1], [1,1]: pair values {0, 1, 1}, mean 2/3.
        let mut a = ActivationTensor::<f64>::zeros(1, 2, 3);
        a.set(0, 0, 0, 1.0);
        a.set(0, 1, 1, 1.0);
        a.set(0, 0, 2, 1.0);
        a.set(0, 1, 2, 1.0);
        let (mean, std) = intra_image_crosscorr(&a).unwrap();
        assert!((mean - 2.0 / 3.0).abs() < 1e-15);
        assert!((std - (2.0f64 / 9.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn crosscorr_requires_two_elements() {
        let a = ActivationTensor::<f64>::zeros(2, 2, 1);
        assert!(matches!(intra_image_crosscorr(&a), Err(MetricsError::NotEnoughElements(1))));
    }

    #[test]
    fn corpus_of_identical_images_has_zero_inter_std() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let code = sparse_code(&mut rng, 3, 3, 4, 0.5);
        let stats = corpus_crosscorr(&[code.clone(), code.clone(), code], InterStdMode::PerImageMeans).unwrap();
        assert_eq!(stats.inter_std, 0.0);
    }

    #[test]
    fn corpus_of_zero_codes_has_zero_stats() {
        let codes = vec![ActivationTensor::<f64>::zeros(2, 2, 3); 4];
        let stats = corpus_crosscorr(&codes, InterStdMode::PerImageMeans).unwrap();
        assert_eq!(stats.mean, 0.0);
        assert_eq!(stats.intra_std, 0.0);
        assert_eq!(stats.inter_std, 0.0);
    }

    #[test]
    fn stats_are_nonnegative_and_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let codes: Vec<ActivationTensor<f64>> =
            (0..4).map(|_| sparse_code(&mut rng, 3, 3, 5, 0.4)).collect();
        let stats = corpus_crosscorr(&codes, InterStdMode::PerImageMeans).unwrap();
        assert!(stats.mean >= 0.0 && stats.intra_std >= 0.0 && stats.inter_std >= 0.0);

        // Reverse the element order in every code.
        let permuted: Vec<ActivationTensor<f64>> = codes
            .iter()
            .map(|c| {
                let k = c.num_elements();
                let mut p = ActivationTensor::zeros(c.map_height(), c.map_width(), k);
                for r in 0..c.map_height() {
                    for col in 0..c.map_width() {
                        for e in 0..k {
                            p.set(r, col, k - 1 - e, c.get(r, col, e));
                        }
                    }
                }
                p
            })
            .collect();
        let pstats = corpus_crosscorr(&permuted, InterStdMode::PerImageMeans).unwrap();
        assert!((stats.mean - pstats.mean).abs() <= 1e-12 * stats.mean.max(1.0));
        assert!((stats.intra_std - pstats.intra_std).abs() <= 1e-12 * stats.intra_std.max(1.0));
        assert!((stats.inter_std - pstats.inter_std).abs() <= 1e-12 * stats.inter_std.max(1.0));
    }

    #[test]
    fn scaling_codes_by_two_scales_mean_by_four() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let codes: Vec<ActivationTensor<f64>> =
            (0..3).map(|_| sparse_code(&mut rng, 3, 3, 4, 0.5)).collect();
        let scaled: Vec<ActivationTensor<f64>> = codes
            .iter()
            .map(|c| {
                ActivationTensor::new(
                    c.map_height(),
                    c.map_width(),
                    c.num_elements(),
                    c.as_slice().iter().map(|v| v * 2.0).collect(),
                )
                .unwrap()
            })
            .collect();
        let base = corpus_crosscorr(&codes, InterStdMode::PerImageMeans).unwrap();
        let big = corpus_crosscorr(&scaled, InterStdMode::PerImageMeans).unwrap();
        assert!((big.mean - 4.0 * base.mean).abs() <= 1e-9 * big.mean.max(1.0));
    }

    #[test]
    fn pooled_mode_differs_when_images_differ() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let codes: Vec<ActivationTensor<f64>> =
            (0..3).map(|_| sparse_code(&mut rng, 3, 3, 4, 0.6)).collect();
        let a = corpus_crosscorr(&codes, InterStdMode::PerImageMeans).unwrap();
        let b = corpus_crosscorr(&codes, InterStdMode::Pooled).unwrap();
        assert_eq!(a.mean, b.mean);
        assert_ne!(a.inter_std, b.inter_std);
    }

    #[test]
    fn report_csv_round_trips_the_blocks() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let codes: Vec<ActivationTensor<f64>> =
            (0..3).map(|_| sparse_code(&mut rng, 2, 2, 3, 0.5)).collect();
        let report = MetricsReport::compute(&codes, ModelKind::SparseCoding, InterStdMode::PerImageMeans).unwrap();
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("metric,value\nmodel_kind,sparse-coding\nimages,3\n"));
        assert!(text.contains("\nk,usage_frequency\n"));
        assert!(text.contains("\nindex,percent_active,intra_mean\n"));
        assert_eq!(text.lines().filter(|l| !l.is_empty()).count(), 9 + 1 + 3 + 1 + 3);
    }
}
