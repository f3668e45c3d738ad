//! Pathloss-based mode selection as a ternary Gaussian hypothesis test.

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::{count, lit, Scalar};

/// Gaussian tail probability `Q(x) = erfc(x / sqrt 2) / 2`.
pub fn q_function<T: Scalar>(x: T) -> T {
    (x / T::SQRT_2()).erfc() * lit(0.5)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ThresholdRule<T> {
    /// Equal-variance LLRT: midpoints of adjacent sorted means.
    Midpoint,
    /// Fixed `(C_AB, C_BC)` in dB.
    Explicit(T, T),
}

/// Weights over which mode is truly best when forming `P(H_i)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Prior {
    /// The mode with the smallest pathloss is the true best.
    TrueBest,
    /// Each mode equally likely to be the true best.
    Uniform,
    /// Unweighted sum of the conditionals; may not sum to one.
    PaperLiteral,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectionProfile<T> {
    /// `(C_AB, C_BC)` in dB.
    pub thresholds: (T, T),
    /// Correct-detection probability per hypothesis (direct, micro, macro).
    pub pd: [T; 3],
    pub pe: [T; 3],
    /// `sort_permutation[s]` is the hypothesis holding sorted slot `s` (A, B, C).
    pub sort_permutation: [usize; 3],
    /// `confusion[y][x]`: probability of selecting `x` when `y` is the true best.
    pub confusion: [[T; 3]; 3],
    pub sigma: T,
}

impl<T: Scalar> DetectionProfile<T> {
    /// Hypothesis with the smallest true pathloss.
    pub fn best(&self) -> usize {
        self.sort_permutation[0]
    }
}

fn sort_losses<T: Scalar>(losses: [T; 3]) -> Result<([T; 3], [usize; 3])> {
    if losses.iter().any(|l| !l.is_finite()) {
        return Err(Error::Domain("pathloss must be finite".into()));
    }
    let mut perm = [0usize, 1, 2];
    perm.sort_by(|&a, &b| losses[a].partial_cmp(&losses[b]).unwrap());
    let sorted = perm.map(|i| losses[i]);
    if sorted[0] == sorted[1] || sorted[1] == sorted[2] {
        return Err(Error::Degenerate("tied pathlosses cannot be separated".into()));
    }
    Ok((sorted, perm))
}

pub fn compute_thresholds<T: Scalar>(sorted: [T; 3]) -> Result<(T, T)> {
    if !(sorted[0] < sorted[1] && sorted[1] < sorted[2]) {
        return Err(Error::Degenerate("pathlosses must be strictly increasing".into()));
    }
    let half = lit::<T>(0.5);
    Ok(((sorted[0] + sorted[1]) * half, (sorted[1] + sorted[2]) * half))
}

/// Probability that `N(mean, sigma^2)` falls in each sorted decision region.
fn region_probs<T: Scalar>(mean: T, sigma: T, (cab, cbc): (T, T)) -> [T; 3] {
    if sigma == T::zero() {
        let mut out = [T::zero(); 3];
        let idx = if mean < cab {
            0
        } else if mean < cbc {
            1
        } else {
            2
        };
        out[idx] = T::one();
        return out;
    }
    let above_ab = q_function((cab - mean) / sigma);
    let above_bc = q_function((cbc - mean) / sigma);
    [T::one() - above_ab, above_ab - above_bc, above_bc]
}

/// Sorted-domain correct-detection probabilities `(P_dA, P_dB, P_dC)`.
pub fn detection_probabilities<T: Scalar>(sorted: [T; 3], sigma: T, thresholds: (T, T)) -> Result<[T; 3]> {
    if !(sigma >= T::zero()) {
        return Err(Error::InvalidParam(format!("sigma must be >= 0, got {sigma}")));
    }
    if sigma == T::zero() {
        return Ok([T::one(); 3]);
    }
    Ok([0, 1, 2].map(|s| region_probs(sorted[s], sigma, thresholds)[s]))
}

/// Full detection profile in the hypothesis domain for unsorted `(L_d, L_mC, L_MC)` in dB.
pub fn map_to_hypotheses<T: Scalar>(
    losses_db: [T; 3],
    sigma: T,
    rule: ThresholdRule<T>,
) -> Result<DetectionProfile<T>> {
    let (sorted, perm) = sort_losses(losses_db)?;
    let thresholds = match rule {
        ThresholdRule::Midpoint => compute_thresholds(sorted)?,
        ThresholdRule::Explicit(a, b) => {
            if !(a < b) {
                return Err(Error::InvalidParam("explicit thresholds must satisfy C_AB < C_BC".into()));
            }
            (a, b)
        }
    };
    let pd_sorted = detection_probabilities(sorted, sigma, thresholds)?;
    let mut pd = [T::zero(); 3];
    let mut pe = [T::zero(); 3];
    let mut confusion = [[T::zero(); 3]; 3];
    for s in 0..3 {
        let h = perm[s];
        pd[h] = pd_sorted[s];
        pe[h] = T::one() - pd_sorted[s];
        let regions = region_probs(sorted[s], sigma, thresholds);
        for (slot, &pr) in regions.iter().enumerate() {
            confusion[h][perm[slot]] = pr;
        }
    }
    Ok(DetectionProfile { thresholds, pd, pe, sort_permutation: perm, confusion, sigma })
}

pub fn hypothesis_probability<T: Scalar>(profile: &DetectionProfile<T>, i: usize, prior: Prior) -> T {
    let c = &profile.confusion;
    match prior {
        Prior::TrueBest => c[profile.best()][i],
        Prior::Uniform => (c[0][i] + c[1][i] + c[2][i]) / count(3),
        Prior::PaperLiteral => c[0][i] + c[1][i] + c[2][i],
    }
}

pub fn hypothesis_probabilities<T: Scalar>(profile: &DetectionProfile<T>, prior: Prior) -> [T; 3] {
    [0, 1, 2].map(|i| hypothesis_probability(profile, i, prior))
}

/// Pilot-based pathloss estimator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PilotConfig<T> {
    pub p_t: T,
    pub noise_var: T,
    pub m_pilots: usize,
    /// Hold the channel gain at 1 instead of drawing `CN(0, 1)` per pilot.
    pub unit_gain: bool,
}

/// `L_hat = sum |sqrt(P_T) L Z x + n|^2 / (m P_T)` over `m` pilots with `|x| = 1`.
///
/// The estimator targets `L^2 + noise_var / P_T`, not `L`.
pub fn estimate_pathloss<T: Scalar, R: Rng + ?Sized>(
    true_loss_linear: T,
    cfg: &PilotConfig<T>,
    rng: &mut R,
) -> Result<T> {
    if cfg.m_pilots == 0 {
        return Err(Error::InvalidParam("m_pilots must be >= 1".into()));
    }
    if !(cfg.p_t > T::zero()) {
        return Err(Error::InvalidParam("pilot power must be positive".into()));
    }
    let half = lit::<T>(0.5);
    let amp = cfg.p_t.sqrt() * true_loss_linear;
    let nstd = (cfg.noise_var * half).sqrt();
    let zstd = half.sqrt();
    let mut acc = T::zero();
    for _ in 0..cfg.m_pilots {
        let (zr, zi) = if cfg.unit_gain {
            (T::one(), T::zero())
        } else {
            (zstd * T::sample_std_normal(rng), zstd * T::sample_std_normal(rng))
        };
        let yr = amp * zr + nstd * T::sample_std_normal(rng);
        let yi = amp * zi + nstd * T::sample_std_normal(rng);
        acc = acc + yr * yr + yi * yi;
    }
    Ok(acc / (count::<T>(cfg.m_pilots) * cfg.p_t))
}
