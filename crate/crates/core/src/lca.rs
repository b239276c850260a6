//! Locally competitive solver for the sparse coding inverse problem.
//!
//! For a fixed dictionary the solver integrates leaky-integrator dynamics:
//! each unit charges toward its match with the input (the analysis drive) and
//! is inhibited by active units in proportion to the overlap of their
//! elements, with self-interaction excluded. Fixed points of the dynamics
//! under soft thresholding are minimizers of
//!
//! ```text
//! E(a) = 1/2 ||x - synth(a)||^2 + lambda * ||a||_1
//! ```
//!
//! The inhibition is evaluated as `correlate(conv_transpose(a)) - a` rather
//! than materializing the Gram matrix, which is intractable for convolutional
//! dictionaries.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scalar::Scalar;
use crate::tensor::{
    conv_transpose_into, correlate, correlate_into, element_major_to_position_major,
    ActivationTensor, Dictionary, ImageTensor, TensorError,
};

/// Potentials beyond this magnitude abort the solve as divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// Amplitude of the deterministic jitter applied to the initial potentials so
/// that exact ties between duplicate elements resolve reproducibly.
const INIT_JITTER: f64 = 1e-9;
const INIT_JITTER_SEED: u64 = 0x4C43_4144;

/// Shrinkage applied when reading activations off the potentials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThresholdMode {
    /// `sign(u) * max(|u| - lambda, 0)`; fixed points match the L1 objective.
    #[default]
    SignedSoft,
    /// `max(u - lambda, 0)`; nonnegative codes.
    NonnegSoft,
}

/// Solver parameters.
#[derive(Debug, Clone, Copy)]
pub struct LcaConfig<T: Scalar = f64> {
    /// Sparsity threshold of the objective and the shrinkage.
    pub lambda: T,
    /// Euler step as a fraction of the leak time constant, in (0, 1].
    pub step_size: T,
    pub max_steps: usize,
    /// Stop when the mean absolute potential update falls below this.
    pub tolerance: T,
    pub threshold_mode: ThresholdMode,
}

impl<T: Scalar> Default for LcaConfig<T> {
    /// Calibrated for mean-subtracted [0, 1] graphics with 8x8x3 patches;
    /// lambda is data-scale dependent.
    fn default() -> Self {
        Self {
            lambda: T::from_f64(0.5),
            step_size: T::from_f64(0.05),
            max_steps: 600,
            tolerance: T::from_f64(1e-6),
            threshold_mode: ThresholdMode::SignedSoft,
        }
    }
}

/// Solver state: potentials, their thresholded activations, and the energy
/// recorded after every step.
#[derive(Debug, Clone)]
pub struct LcaState<T: Scalar = f64> {
    pub potentials: ActivationTensor<T>,
    pub activations: ActivationTensor<T>,
    pub energy_trace: Vec<T>,
    pub steps_taken: usize,
    /// False when the solve stopped at `max_steps` without meeting tolerance.
    pub converged: bool,
}

impl<T: Scalar> LcaState<T> {
    /// All-zero state with activations consistent with the potentials.
    pub fn zeros(map_height: usize, map_width: usize, num_elements: usize) -> Self {
        Self {
            potentials: ActivationTensor::zeros(map_height, map_width, num_elements),
            activations: ActivationTensor::zeros(map_height, map_width, num_elements),
            steps_taken: 0,
            energy_trace: Vec::new(),
            converged: false,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    #[error("potentials diverged at step {step} (max |u| = {max_abs:.3e}); the step size is too large")]
    Diverged { step: usize, max_abs: f64 },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Elementwise shrinkage of a single value.
pub fn threshold_value<T: Scalar>(u: T, lambda: T, mode: ThresholdMode) -> T {
    match mode {
        ThresholdMode::SignedSoft => {
            let mag = u.abs() - lambda;
            if mag > T::zero() {
                u.signum() * mag
            } else {
                T::zero()
            }
        }
        ThresholdMode::NonnegSoft => {
            let v = u - lambda;
            if v > T::zero() {
                v
            } else {
                T::zero()
            }
        }
    }
}

/// Shape-preserving elementwise shrinkage.
pub fn threshold<T: Scalar>(u: &ActivationTensor<T>, lambda: T, mode: ThresholdMode) -> ActivationTensor<T> {
    let mut out = ActivationTensor::zeros(u.map_height(), u.map_width(), u.num_elements());
    for (o, v) in out.as_mut_slice().iter_mut().zip(u.as_slice()) {
        *o = threshold_value(*v, lambda, mode);
    }
    out
}

/// The objective value for one sample: half squared reconstruction error plus
/// the weighted L1 norm of the code. Summation order is fixed.
pub fn energy<T: Scalar>(
    image: &ImageTensor<T>,
    dict: &Dictionary<T>,
    acts: &ActivationTensor<T>,
    lambda: T,
) -> Result<T, TensorError> {
    let mut recon = ImageTensor::zeros(image.height(), image.width(), image.channels());
    conv_transpose_into(acts, dict, &mut recon)?;
    Ok(energy_with_recon(image, &recon, acts, lambda))
}

fn energy_with_recon<T: Scalar>(
    image: &ImageTensor<T>,
    recon: &ImageTensor<T>,
    acts: &ActivationTensor<T>,
    lambda: T,
) -> T {
    let mut residual_sq = T::zero();
    for (x, r) in image.as_slice().iter().zip(recon.as_slice()) {
        let d = *x - *r;
        residual_sq += d * d;
    }
    let mut l1 = T::zero();
    for a in acts.as_slice() {
        l1 += a.abs();
    }
    T::from_f64(0.5) * residual_sq + lambda * l1
}

/// Scratch space reused across solver steps.
struct StepBuffers<T: Scalar> {
    position_major: Vec<T>,
    recon: ImageTensor<T>,
    inhibition: ActivationTensor<T>,
}

impl<T: Scalar> StepBuffers<T> {
    fn new(image: &ImageTensor<T>, dict: &Dictionary<T>, map_h: usize, map_w: usize) -> Self {
        Self {
            position_major: element_major_to_position_major(dict),
            recon: ImageTensor::zeros(image.height(), image.width(), image.channels()),
            inhibition: ActivationTensor::zeros(map_h, map_w, dict.num_elements()),
        }
    }
}

/// One Euler step. Returns the mean absolute potential update.
fn step_in_place<T: Scalar>(
    state: &mut LcaState<T>,
    drive: &ActivationTensor<T>,
    dict: &Dictionary<T>,
    image: &ImageTensor<T>,
    cfg: &LcaConfig<T>,
    buffers: &mut StepBuffers<T>,
) -> Result<T, SolverError> {
    // Inhibition from the current activations: correlate(synth(a)) - a, i.e.
    // the Gram product with self-interactions removed.
    conv_transpose_into(&state.activations, dict, &mut buffers.recon)?;
    correlate_into(&buffers.recon, dict, &buffers.position_major, &mut buffers.inhibition);

    let eta = cfg.step_size;
    let mut du_abs_sum = T::zero();
    let mut max_abs = T::zero();
    let total = state.potentials.as_slice().len();
    {
        let u = state.potentials.as_mut_slice();
        let a = state.activations.as_slice();
        let g = buffers.inhibition.as_slice();
        let d = drive.as_slice();
        for i in 0..u.len() {
            let inhibition = g[i] - a[i];
            let du = eta * (d[i] - u[i] - inhibition);
            u[i] += du;
            du_abs_sum += du.abs();
            let abs = u[i].abs();
            if abs > max_abs {
                max_abs = abs;
            }
        }
    }
    state.steps_taken += 1;
    if max_abs.as_f64() > DIVERGENCE_LIMIT {
        return Err(SolverError::Diverged { step: state.steps_taken, max_abs: max_abs.as_f64() });
    }

    state.activations = threshold(&state.potentials, cfg.lambda, cfg.threshold_mode);
    conv_transpose_into(&state.activations, dict, &mut buffers.recon)?;
    let e = energy_with_recon(image, &buffers.recon, &state.activations, cfg.lambda);
    state.energy_trace.push(e);

    Ok(du_abs_sum / T::from_usize(total.max(1)))
}

/// Advance the dynamics by one step.
///
/// `drive` must be `correlate(image, dict)`, computed once per solve.
pub fn lca_step<T: Scalar>(
    mut state: LcaState<T>,
    drive: &ActivationTensor<T>,
    dict: &Dictionary<T>,
    image: &ImageTensor<T>,
    cfg: &LcaConfig<T>,
) -> Result<LcaState<T>, SolverError> {
    let mut buffers = StepBuffers::new(image, dict, state.potentials.map_height(), state.potentials.map_width());
    step_in_place(&mut state, drive, dict, image, cfg, &mut buffers)?;
    Ok(state)
}

/// Initial potentials: zero plus a seeded +/-1e-9 jitter per unit, so that
/// ties between duplicate elements break the same way on every run.
pub(crate) fn initial_potentials<T: Scalar>(
    map_height: usize,
    map_width: usize,
    num_elements: usize,
) -> ActivationTensor<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(INIT_JITTER_SEED);
    let mut u = ActivationTensor::zeros(map_height, map_width, num_elements);
    for v in u.as_mut_slice() {
        *v = T::from_f64(rng.gen_range(-1.0..1.0) * INIT_JITTER);
    }
    u
}

/// Solve for the sparse code of `image` under `dict`.
///
/// Integrates from (jittered) zero potentials until the mean absolute update
/// drops below tolerance or `max_steps` is reached; hitting the step limit is
/// reported through [`LcaState::converged`], not as an error.
pub fn encode<T: Scalar>(
    image: &ImageTensor<T>,
    dict: &Dictionary<T>,
    cfg: &LcaConfig<T>,
) -> Result<LcaState<T>, SolverError> {
    let drive = correlate(image, dict)?;
    let (map_h, map_w) = (drive.map_height(), drive.map_width());

    let mut state = LcaState::zeros(map_h, map_w, dict.num_elements());
    state.potentials = initial_potentials(map_h, map_w, dict.num_elements());
    state.activations = threshold(&state.potentials, cfg.lambda, cfg.threshold_mode);

    let mut buffers = StepBuffers::new(image, dict, map_h, map_w);
    for _ in 0..cfg.max_steps {
        let mean_du = step_in_place(&mut state, &drive, dict, image, cfg, &mut buffers)?;
        if mean_du < cfg.tolerance {
            state.converged = true;
            break;
        }
    }
    Ok(state)
}
