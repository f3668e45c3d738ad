//! Six-state rank-1 Markov channel: mode times ON/OFF, in overlay and underlay flavours.

pub use crate::channel::Scenario;
use crate::channel::{mean_snr, sir_outage, Duplex, LinkBudget, Mode, OutageMode, SystemParams};
use crate::scalar::{lit, Scalar};

/// SNR threshold `2^(r/B) - 1` for decoding at rate `r`.
pub fn gamma_req<T: Scalar>(p: &SystemParams<T>) -> T {
    (p.rate / p.bandwidth).exp2() - T::one()
}

/// Threshold of a given mode; half-duplex relaying needs twice the rate per slot.
pub fn mode_threshold<T: Scalar>(p: &SystemParams<T>, mode: Mode) -> T {
    if mode != Mode::Direct && p.duplex == Duplex::Half {
        (lit::<T>(2.0) * p.rate / p.bandwidth).exp2() - T::one()
    } else {
        gamma_req(p)
    }
}

/// State probabilities ordered direct-ON, direct-OFF, micro-ON, micro-OFF, macro-ON, macro-OFF.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransitionRow<T> {
    pub p: [T; 6],
    pub scenario: Scenario,
    /// A printed outage law left `[0, 1]` and was clamped.
    pub clamped: bool,
}

impl<T: Scalar> TransitionRow<T> {
    pub fn on(&self, mode: usize) -> T {
        self.p[2 * mode]
    }

    pub fn off(&self, mode: usize) -> T {
        self.p[2 * mode + 1]
    }

    pub fn mass(&self, mode: usize) -> T {
        self.on(mode) + self.off(mode)
    }

    pub fn off_total(&self) -> T {
        self.off(0) + self.off(1) + self.off(2)
    }

    pub fn sum(&self) -> T {
        self.p.iter().copied().sum()
    }

    fn from_on_prob(hyp: &[T; 3], on: [T; 3], scenario: Scenario, clamped: bool) -> Self {
        let mut p = [T::zero(); 6];
        for i in 0..3 {
            p[2 * i] = hyp[i] * on[i];
            p[2 * i + 1] = hyp[i] * (T::one() - on[i]);
        }
        TransitionRow { p, scenario, clamped }
    }
}

/// Noise-limited row: ON probability `exp(-gamma_req / E[gamma])` per mode.
pub fn overlay_row<T: Scalar>(p: &SystemParams<T>, b: &LinkBudget<T>, hyp: &[T; 3]) -> TransitionRow<T> {
    let on = Mode::ALL.map(|m| (-mode_threshold(p, m) / mean_snr(p, b, m)).exp());
    TransitionRow::from_on_prob(hyp, on, Scenario::Overlay, false)
}

/// Interference-limited row from the SIR outage laws.
pub fn underlay_row<T: Scalar>(
    p: &SystemParams<T>,
    b: &LinkBudget<T>,
    hyp: &[T; 3],
    mode: OutageMode,
) -> TransitionRow<T> {
    let mut clamped = false;
    let on = Mode::ALL.map(|m| {
        let o = sir_outage(p, b, m, mode_threshold(p, m), mode);
        clamped |= o.clamped;
        T::one() - o.value
    });
    TransitionRow::from_on_prob(hyp, on, Scenario::Underlay, clamped)
}

pub fn row_for<T: Scalar>(
    p: &SystemParams<T>,
    b: &LinkBudget<T>,
    hyp: &[T; 3],
    scenario: Scenario,
    mode: OutageMode,
) -> TransitionRow<T> {
    match scenario {
        Scenario::Overlay => overlay_row(p, b, hyp),
        Scenario::Underlay => underlay_row(p, b, hyp, mode),
    }
}

/// Every row of the chain equals `row`.
pub fn transition_matrix<T: Scalar>(row: &TransitionRow<T>) -> [[T; 6]; 6] {
    [row.p; 6]
}
