//! Finite-blocklength decoding errors, period-removal probabilities and companion entries.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::{BlockFading, Duplex, LinkBudget, LinkGains, Mode, Scenario, SirModel, SystemParams};
use crate::error::{Error, Result};
use crate::markov::TransitionRow;
use crate::mode_selection::q_function;
use crate::scalar::{count, lit, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum QueueModel {
    /// Demote the packet after `M` failures.
    N1,
    /// Drop the packet after `M` failures.
    N2,
}

impl QueueModel {
    pub fn name(self) -> &'static str {
        match self {
            QueueModel::N1 => "n1",
            QueueModel::N2 => "n2",
        }
    }
}

/// Which setting each attempt of a period uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Schedule {
    pub first: Scenario,
    pub rest: Scenario,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule { first: Scenario::Underlay, rest: Scenario::Overlay }
    }
}

impl Schedule {
    /// Scenario of attempt `k` (1-based).
    pub fn at(&self, k: usize) -> Scenario {
        if k <= 1 {
            self.first
        } else {
            self.rest
        }
    }
}

pub const MIN_ZETA_SAMPLES: usize = 10_000;

/// Decoding error from accumulated information and dispersion.
///
/// `info` is the weighted sum of `log2(1 + gamma)`, `disp` the weighted sum of
/// `(2 + gamma) gamma / (1 + gamma)^2`, and `weighted_len` the weighted number of channel
/// uses. With unit weights this is the printed formula with `weighted_len = m l`.
/// The log in the correction term is natural.
pub fn decoding_error_weighted<T: Scalar>(info: T, disp: T, weighted_len: T, l: T, r: T) -> T {
    let num = info + weighted_len.ln() / l - r;
    let den = T::LOG2_E() * (disp / l).sqrt();
    if den <= T::zero() {
        return if num < T::zero() { T::one() } else { T::zero() };
    }
    q_function(num / den)
}

#[inline]
fn dispersion<T: Scalar>(g: T) -> T {
    (lit::<T>(2.0) + g) * g / ((T::one() + g) * (T::one() + g))
}

/// Decoding error after `m = gammas.len()` attempts at block length `l` and rate `r`.
pub fn decoding_error_conditional<T: Scalar>(gammas: &[T], l: T, r: T) -> Result<T> {
    if gammas.is_empty() {
        return Err(Error::InvalidParam("at least one attempt is required".into()));
    }
    if !(l >= T::one()) {
        return Err(Error::InvalidParam(format!("block length must be >= 1, got {l}")));
    }
    let mut info = T::zero();
    let mut disp = T::zero();
    for &g in gammas {
        if !(g >= T::zero()) {
            return Err(Error::Domain(format!("snr must be >= 0, got {g}")));
        }
        info = info + g.ln_1p() / T::LN_2();
        disp = disp + dispersion(g);
    }
    Ok(decoding_error_weighted(info, disp, count::<T>(gammas.len()) * l, l, r))
}

/// Weight of one attempt: half-duplex relaying spends half the block per hop.
pub fn attempt_weight<T: Scalar>(p: &SystemParams<T>, mode: Mode) -> T {
    if mode != Mode::Direct && p.duplex == Duplex::Half {
        lit(0.5)
    } else {
        T::one()
    }
}

/// Running state of one packet across attempts.
#[derive(Clone, Copy, Debug, Default)]
pub struct Accumulator<T> {
    pub info: T,
    pub disp: T,
    pub len: T,
}

impl<T: Scalar> Accumulator<T> {
    #[inline]
    pub fn push(&mut self, g: T, weight: T, l: T) {
        self.info = self.info + weight * g.ln_1p() / T::LN_2();
        self.disp = self.disp + weight * dispersion(g);
        self.len = self.len + weight * l;
    }

    #[inline]
    pub fn zeta(&self, l: T, r: T) -> T {
        decoding_error_weighted(self.info, self.disp, self.len, l, r)
    }
}

/// Expected decoding errors `E[zeta_m]` per mode, for `m = 0..=M`, in both scenarios.
#[derive(Clone, Debug, PartialEq)]
pub struct DecodingProfile<T> {
    /// `under[mode][m]`, with `under[mode][0] = 1`.
    pub under: [Vec<T>; 3],
    pub over: [Vec<T>; 3],
    /// Outage per mode, `E[zeta_M]` in the scenario of attempt `M`.
    pub eps: [T; 3],
    pub eps_ac: T,
    pub samples: usize,
    pub seed: u64,
}

impl<T: Scalar> DecodingProfile<T> {
    pub fn table(&self, s: Scenario) -> &[Vec<T>; 3] {
        match s {
            Scenario::Underlay => &self.under,
            Scenario::Overlay => &self.over,
        }
    }

    pub fn max_tx(&self) -> usize {
        self.under[0].len() - 1
    }

    /// Build from explicit tables; `eps` is read from attempt `M` of `schedule`.
    pub fn from_tables(under: [Vec<T>; 3], over: [Vec<T>; 3], schedule: Schedule) -> Result<Self> {
        let m = under[0].len().saturating_sub(1);
        if m == 0 || under.iter().chain(over.iter()).any(|v| v.len() != m + 1) {
            return Err(Error::InvalidParam("decoding tables must share length M + 1 >= 2".into()));
        }
        let last = match schedule.at(m) {
            Scenario::Underlay => &under,
            Scenario::Overlay => &over,
        };
        let eps = [last[0][m], last[1][m], last[2][m]];
        Ok(DecodingProfile { eps_ac: eps[0] + eps[1] + eps[2], eps, under, over, samples: 0, seed: 0 })
    }
}

const ZETA_CHUNKS: usize = 64;

/// Monte Carlo estimate of every `E[zeta_m]` from i.i.d. fading traces.
///
/// Each sample draws `M` block fadings shared by all modes and both scenarios, so the
/// same seed gives common random numbers across rates. Chunks use independent ChaCha
/// streams and are reduced in a fixed order, so the result does not depend on the
/// thread count.
pub fn expected_decoding_errors<T: Scalar>(
    p: &SystemParams<T>,
    b: &LinkBudget<T>,
    schedule: Schedule,
    sir: SirModel,
    samples: usize,
    seed: u64,
) -> Result<DecodingProfile<T>> {
    if samples < MIN_ZETA_SAMPLES {
        return Err(Error::InvalidParam(format!(
            "at least {MIN_ZETA_SAMPLES} decoding samples required, got {samples}"
        )));
    }
    p.validate()?;
    let m = p.max_tx;
    let gains = LinkGains::new(p, b, sir);
    let l = p.l();
    let r = p.rate;
    let weights = Mode::ALL.map(|md| attempt_weight(p, md));
    let per_chunk = samples.div_ceil(ZETA_CHUNKS);

    // sums[scenario][mode][attempt - 1]
    let partial: Vec<Vec<T>> = (0..ZETA_CHUNKS)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let n = per_chunk.min(samples.saturating_sub(c * per_chunk));
            let mut sums = vec![T::zero(); 2 * 3 * m];
            let mut trace = Vec::with_capacity(m);
            for _ in 0..n {
                trace.clear();
                for _ in 0..m {
                    trace.push(BlockFading::draw(&mut rng));
                }
                for (si, sc) in [Scenario::Underlay, Scenario::Overlay].into_iter().enumerate() {
                    for md in Mode::ALL {
                        let mut acc = Accumulator::default();
                        for (k, f) in trace.iter().enumerate() {
                            acc.push(gains.snr(md, sc, f), weights[md.index()], l);
                            let idx = (si * 3 + md.index()) * m + k;
                            sums[idx] = sums[idx] + acc.zeta(l, r);
                        }
                    }
                }
            }
            sums
        })
        .collect();

    let mut total = vec![T::zero(); 2 * 3 * m];
    for part in &partial {
        for (t, v) in total.iter_mut().zip(part) {
            *t = *t + *v;
        }
    }
    let n = count::<T>(samples);
    let table = |si: usize| {
        [0, 1, 2].map(|md| {
            let mut v = Vec::with_capacity(m + 1);
            v.push(T::one());
            for k in 0..m {
                v.push(total[(si * 3 + md) * m + k] / n);
            }
            v
        })
    };
    let mut prof = DecodingProfile::from_tables(table(0), table(1), schedule)?;
    prof.samples = samples;
    prof.seed = seed;
    Ok(prof)
}

/// Per-mode removal probabilities `(P_{t,0}, P_{t,1})` for attempt `t`.
pub fn removal_probabilities<T: Scalar>(
    profile: &DecodingProfile<T>,
    model: QueueModel,
    t: usize,
    schedule: Schedule,
) -> Result<[(T, T); 3]> {
    let m = profile.max_tx();
    if t == 0 || t > m {
        return Err(Error::InvalidParam(format!("attempt index {t} outside 1..={m}")));
    }
    let z = profile.table(schedule.at(t));
    Ok([0, 1, 2].map(|i| {
        let step = z[i][t - 1] - z[i][t];
        match (model, t == m) {
            (_, false) => (T::zero(), step),
            (QueueModel::N1, true) => (profile.eps[i], step),
            (QueueModel::N2, true) => (T::zero(), z[i][t - 1]),
        }
    }))
}

/// Coefficients `b_1..b_M` of the block-companion matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CompanionSpec<T> {
    pub b: Vec<T>,
    pub queue_model: QueueModel,
}

impl<T: Scalar> CompanionSpec<T> {
    pub fn max_tx(&self) -> usize {
        self.b.len()
    }

    /// Whether `b_M` alone exceeds one, which forces a negative EC.
    pub fn overflow(&self) -> bool {
        self.b.last().is_some_and(|&x| x > T::one())
    }
}

/// `Phi(-theta)` diagonal entry of an ON state.
pub fn on_mgf<T: Scalar>(p: &SystemParams<T>) -> T {
    (-p.block_bits() * p.theta).exp()
}

/// `b_k = q_k Phi(-theta) p^T` with `p` the row of attempt `k`'s scenario; `b_M` adds `eps_ac` for n1.
///
/// For `M = 1` both models use `q_1`.
pub fn companion_entries<T: Scalar>(
    p: &SystemParams<T>,
    profile: &DecodingProfile<T>,
    under: &TransitionRow<T>,
    over: &TransitionRow<T>,
    model: QueueModel,
    schedule: Schedule,
) -> Result<CompanionSpec<T>> {
    let m = profile.max_tx();
    if m != p.max_tx {
        return Err(Error::InvalidParam(format!("decoding profile has M = {m}, params have M = {}", p.max_tx)));
    }
    let e = on_mgf(p);
    let mut b = Vec::with_capacity(m);
    for k in 1..=m {
        let sc = schedule.at(k);
        let row = match sc {
            Scenario::Underlay => under,
            Scenario::Overlay => over,
        };
        let z = profile.table(sc);
        let mut bk = T::zero();
        for i in 0..3 {
            let q = if k == 1 {
                T::one() - z[i][1]
            } else if k < m {
                z[i][k - 1] - z[i][k]
            } else {
                match model {
                    QueueModel::N1 => z[i][m - 1] - profile.eps[i],
                    QueueModel::N2 => z[i][m - 1],
                }
            };
            bk = bk + e * q * row.on(i) + row.off(i);
        }
        if k == m && model == QueueModel::N1 {
            bk = bk + profile.eps_ac;
        }
        b.push(bk);
    }
    Ok(CompanionSpec { b, queue_model: model })
}

/// ON-mass-weighted first-attempt success `phi`, second-attempt terms `vartheta`, `varrho`,
/// and the OFF masses entering the truncated (`M = 2`) closed forms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncatedTerms<T> {
    pub e: T,
    pub phi: T,
    pub vartheta: T,
    pub varrho: T,
    pub p_u_off: T,
    pub p_o_off: T,
    pub eps_ac: T,
}

pub fn truncated_terms<T: Scalar>(
    p: &SystemParams<T>,
    profile: &DecodingProfile<T>,
    under: &TransitionRow<T>,
    over: &TransitionRow<T>,
) -> Result<TruncatedTerms<T>> {
    if profile.max_tx() != 2 {
        return Err(Error::InvalidParam("truncated HARQ needs M = 2".into()));
    }
    let (zu, zo) = (&profile.under, &profile.over);
    let mut t = TruncatedTerms {
        e: on_mgf(p),
        phi: T::zero(),
        vartheta: T::zero(),
        varrho: T::zero(),
        p_u_off: under.off_total(),
        p_o_off: over.off_total(),
        eps_ac: profile.eps_ac,
    };
    for i in 0..3 {
        t.phi = t.phi + under.on(i) * (T::one() - zu[i][1]);
        t.vartheta = t.vartheta + over.on(i) * (zo[i][1] - profile.eps[i]);
        t.varrho = t.varrho + over.on(i) * zo[i][1];
    }
    Ok(t)
}
