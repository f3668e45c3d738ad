//! Pathloss, SNR/SIR laws and capacities for the three D2D communication modes.
//!
//! Pathlosses are stored in linear scale; dB only appears in the conversion helpers.

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Duplex {
    Full,
    Half,
}

/// How the residual self-interference scales with the relay's transmit power.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SiLaw {
    /// `alpha * P^(1 - beta)`: beta is the cancellation quality, beta = 1 leaves the floor `alpha`.
    Quality,
    /// `alpha * P^beta` exactly as printed.
    Literal,
}

/// Evaluation mode of the underlay outage laws.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OutageMode {
    /// Ratio-of-exponentials CDF.
    Exact,
    /// The printed closed forms, clamped to `[0, 1]`.
    Paper,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scenario {
    Overlay,
    Underlay,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Tier {
    Micro,
    Macro,
}

/// Communication mode, indexed like the hypotheses H0, H1, H2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Direct,
    Micro,
    Macro,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Direct, Mode::Micro, Mode::Macro];

    pub fn index(self) -> usize {
        match self {
            Mode::Direct => 0,
            Mode::Micro => 1,
            Mode::Macro => 2,
        }
    }

    pub fn from_index(i: usize) -> Mode {
        Mode::ALL[i]
    }

    pub fn tier(self) -> Option<Tier> {
        match self {
            Mode::Direct => None,
            Mode::Micro => Some(Tier::Micro),
            Mode::Macro => Some(Tier::Macro),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Direct => "direct",
            Mode::Micro => "micro",
            Mode::Macro => "macro",
        }
    }
}

/// Radio constants of the link.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemParams<T> {
    pub bandwidth: T,
    /// Noise power, same unit as the transmit powers.
    pub noise: T,
    pub p_dt: T,
    pub p_micro: T,
    pub p_macro: T,
    pub p_ut: T,
    pub si_alpha: T,
    pub si_beta: T,
    pub si_law: SiLaw,
    /// Channel uses per block.
    pub block_len: u32,
    /// Bits per channel use (when `bandwidth = 1`).
    pub rate: T,
    pub theta: T,
    /// Transmission attempts per period.
    pub max_tx: usize,
    pub duplex: Duplex,
}

impl<T: Scalar> SystemParams<T> {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("bandwidth", self.bandwidth),
            ("noise", self.noise),
            ("p_dt", self.p_dt),
            ("p_micro", self.p_micro),
            ("p_macro", self.p_macro),
            ("p_ut", self.p_ut),
            ("rate", self.rate),
            ("theta", self.theta),
        ];
        for (name, v) in pos {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::InvalidParam(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(self.si_alpha >= T::zero()) {
            return Err(Error::InvalidParam(format!("si_alpha must be >= 0, got {}", self.si_alpha)));
        }
        if !(self.si_beta >= T::zero() && self.si_beta <= T::one()) {
            return Err(Error::InvalidParam(format!("si_beta must lie in [0, 1], got {}", self.si_beta)));
        }
        if self.block_len == 0 {
            return Err(Error::InvalidParam("block_len must be >= 1".into()));
        }
        if self.max_tx == 0 {
            return Err(Error::InvalidParam("max_tx must be >= 1".into()));
        }
        Ok(())
    }

    pub fn bs_power(&self, tier: Tier) -> T {
        match tier {
            Tier::Micro => self.p_micro,
            Tier::Macro => self.p_macro,
        }
    }

    pub fn l(&self) -> T {
        T::from_u32(self.block_len).unwrap()
    }

    /// Service of one successful block, `l * r` bits.
    pub fn block_bits(&self) -> T {
        self.l() * self.rate
    }
}

/// True pathlosses (linear) of every link.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkBudget<T> {
    pub l_d: T,
    pub l_micro_ul: T,
    pub l_micro_dl: T,
    pub l_macro_ul: T,
    pub l_macro_dl: T,
    pub l_ut_dr: T,
    pub l_ut_micro: T,
    pub l_ut_macro: T,
}

impl<T: Scalar> LinkBudget<T> {
    /// Build from pathlosses given in dB, in field order.
    pub fn from_db(db: [T; 8]) -> Self {
        let [a, b, c, d, e, f, g, h] = db.map(db_to_linear);
        LinkBudget {
            l_d: a,
            l_micro_ul: b,
            l_micro_dl: c,
            l_macro_ul: d,
            l_macro_dl: e,
            l_ut_dr: f,
            l_ut_micro: g,
            l_ut_macro: h,
        }
    }

    pub fn to_db(&self) -> [T; 8] {
        self.as_array().map(linear_to_db)
    }

    pub fn as_array(&self) -> [T; 8] {
        [
            self.l_d,
            self.l_micro_ul,
            self.l_micro_dl,
            self.l_macro_ul,
            self.l_macro_dl,
            self.l_ut_dr,
            self.l_ut_micro,
            self.l_ut_macro,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for v in self.as_array() {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::InvalidParam(format!("pathloss must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }

    pub fn ul(&self, tier: Tier) -> T {
        match tier {
            Tier::Micro => self.l_micro_ul,
            Tier::Macro => self.l_macro_ul,
        }
    }

    pub fn dl(&self, tier: Tier) -> T {
        match tier {
            Tier::Micro => self.l_micro_dl,
            Tier::Macro => self.l_macro_dl,
        }
    }

    pub fn ut(&self, tier: Tier) -> T {
        match tier {
            Tier::Micro => self.l_ut_micro,
            Tier::Macro => self.l_ut_macro,
        }
    }

    /// Pathlosses the mode selector compares, `(L_d, L_mC, L_MC)` in dB.
    pub fn selection_losses_db(&self) -> [T; 3] {
        [linear_to_db(self.l_d), linear_to_db(self.l_micro_ul), linear_to_db(self.l_macro_ul)]
    }
}

pub fn db_to_linear<T: Scalar>(db: T) -> T {
    lit::<T>(10.0).powf(db / lit(10.0))
}

pub fn linear_to_db<T: Scalar>(x: T) -> T {
    lit::<T>(10.0) * x.log10()
}

pub fn dbm_to_watts<T: Scalar>(dbm: T) -> T {
    db_to_linear(dbm - lit(30.0))
}

pub fn watts_to_dbm<T: Scalar>(w: T) -> T {
    linear_to_db(w) + lit(30.0)
}

/// Distance-dependent pathloss `128.1 + 37.6 log10(d)` with `d` in km.
pub fn pathloss_db<T: Scalar>(distance_km: T) -> Result<T> {
    if !(distance_km > T::zero()) || !distance_km.is_finite() {
        return Err(Error::Domain(format!("distance must be positive, got {distance_km}")));
    }
    Ok(lit::<T>(128.1) + lit::<T>(37.6) * distance_km.log10())
}

/// Residual self-interference power at a full-duplex relay; zero in half duplex.
pub fn residual_si<T: Scalar>(p: &SystemParams<T>, tier: Tier) -> T {
    if p.duplex == Duplex::Half {
        return T::zero();
    }
    let exponent = match p.si_law {
        SiLaw::Quality => T::one() - p.si_beta,
        SiLaw::Literal => p.si_beta,
    };
    p.si_alpha * p.bs_power(tier).powf(exponent)
}

pub fn mean_snr_direct<T: Scalar>(p: &SystemParams<T>, b: &LinkBudget<T>) -> T {
    p.p_dt / (b.l_d * p.noise)
}

pub fn mean_snr_uplink<T: Scalar>(p: &SystemParams<T>, b: &LinkBudget<T>, tier: Tier) -> T {
    p.p_dt / (b.ul(tier) * p.noise + residual_si(p, tier))
}

pub fn mean_snr_downlink<T: Scalar>(p: &SystemParams<T>, b: &LinkBudget<T>, tier: Tier) -> T {
    p.bs_power(tier) / (b.dl(tier) * p.noise)
}

/// Mean of `min(ul, dl)` for independent exponential hops.
pub fn mean_snr_two_hop<T: Scalar>(p: &SystemParams<T>, b: &LinkBudget<T>, tier: Tier) -> T {
    harmonic(mean_snr_uplink(p, b, tier), mean_snr_downlink(p, b, tier))
}

fn harmonic<T: Scalar>(a: T, b: T) -> T {
    a * b / (a + b)
}

pub fn mean_snr<T: Scalar>(p: &SystemParams<T>, b: &LinkBudget<T>, mode: Mode) -> T {
    match mode.tier() {
        None => mean_snr_direct(p, b),
        Some(t) => mean_snr_two_hop(p, b, t),
    }
}

pub fn capacity_direct<T: Scalar>(p: &SystemParams<T>, snr: T) -> Result<T> {
    if !(snr >= T::zero()) {
        return Err(Error::Domain(format!("snr must be >= 0, got {snr}")));
    }
    Ok(p.bandwidth * snr.ln_1p() / T::LN_2())
}

pub fn capacity_two_hop<T: Scalar>(p: &SystemParams<T>, snr_ul: T, snr_dl: T) -> Result<T> {
    if snr_ul.is_nan() || snr_dl.is_nan() {
        return Err(Error::Domain("snr is NaN".into()));
    }
    let c = capacity_direct(p, snr_ul.min(snr_dl))?;
    Ok(match p.duplex {
        Duplex::Full => c,
        Duplex::Half => c / lit(2.0),
    })
}

/// An outage probability plus whether the printed law had to be clamped.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Outage<T> {
    pub value: T,
    pub clamped: bool,
}

impl<T: Scalar> Outage<T> {
    fn exact(value: T) -> Self {
        Outage { value, clamped: false }
    }

    fn clamp(raw: T) -> Self {
        if raw < T::zero() || raw > T::one() || raw.is_nan() {
            let value = if raw > T::one() { T::one() } else { T::zero() };
            Outage { value, clamped: true }
        } else {
            Outage { value: raw, clamped: false }
        }
    }
}

/// `P(X / Y < g)` for independent exponentials with rates `rate_sig` and `rate_int`.
pub fn ratio_outage<T: Scalar>(rate_sig: T, rate_int: T, g: T) -> T {
    if g <= T::zero() {
        return T::zero();
    }
    rate_sig * g / (rate_sig * g + rate_int)
}

pub fn sir_outage_direct<T: Scalar>(
    p: &SystemParams<T>,
    b: &LinkBudget<T>,
    gamma_req: T,
    mode: OutageMode,
) -> Outage<T> {
    match mode {
        OutageMode::Exact => Outage::exact(ratio_outage(b.l_d / p.p_dt, b.l_ut_dr / p.p_ut, gamma_req)),
        OutageMode::Paper => Outage::clamp(b.l_d * gamma_req * p.p_ut / (b.l_d * p.p_ut + b.l_ut_dr * p.p_dt)),
    }
}

pub fn sir_outage_two_hop<T: Scalar>(
    p: &SystemParams<T>,
    b: &LinkBudget<T>,
    tier: Tier,
    gamma_req: T,
    mode: OutageMode,
) -> Outage<T> {
    let pbs = p.bs_power(tier);
    match mode {
        OutageMode::Exact => {
            let ul = ratio_outage(b.ul(tier) / p.p_dt, b.ut(tier) / p.p_ut, gamma_req);
            let dl = ratio_outage(b.dl(tier) / pbs, b.l_ut_dr / p.p_ut, gamma_req);
            Outage::exact(T::one() - (T::one() - ul) * (T::one() - dl))
        }
        OutageMode::Paper => {
            let g = gamma_req;
            let (lul, ldl, put, pdt) = (b.ul(tier), b.dl(tier), p.p_ut, p.p_dt);
            let num = g * (lul * pbs * (-g * put + pbs + lit::<T>(2.0) * pbs) + ldl * pdt * put);
            let den = (put + pbs) * (ldl * pdt + lul * pbs);
            Outage::clamp(num / den)
        }
    }
}

pub fn sir_outage<T: Scalar>(
    p: &SystemParams<T>,
    b: &LinkBudget<T>,
    m: Mode,
    gamma_req: T,
    mode: OutageMode,
) -> Outage<T> {
    match m.tier() {
        None => sir_outage_direct(p, b, gamma_req, mode),
        Some(t) => sir_outage_two_hop(p, b, t, gamma_req, mode),
    }
}

/// Whether underlay draws neglect noise (as the analytical laws do) or keep it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SirModel {
    InterferenceLimited,
    WithNoise,
}

/// Unit-mean exponential power gains of one block: signal first hop, signal second hop,
/// interferer at the relay, interferer at the D2D receiver.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockFading<T> {
    pub z: [T; 4],
}

impl<T: Scalar> BlockFading<T> {
    pub fn draw<R: Rng + ?Sized>(rng: &mut R) -> Self {
        BlockFading { z: [T::sample_exp1(rng), T::sample_exp1(rng), T::sample_exp1(rng), T::sample_exp1(rng)] }
    }
}

/// Precomputed per-mode scale factors so per-block SNRs cost a few multiplications.
#[derive(Clone, Debug)]
pub struct LinkGains<T> {
    overlay_first: [T; 3],
    overlay_second: [T; 3],
    sig_first: [T; 3],
    sig_second: [T; 3],
    int_relay: [T; 3],
    int_dr: T,
    floor_first: [T; 3],
    floor_second: T,
}

impl<T: Scalar> LinkGains<T> {
    pub fn new(p: &SystemParams<T>, b: &LinkBudget<T>, sir: SirModel) -> Self {
        let mut g = LinkGains {
            overlay_first: [T::zero(); 3],
            overlay_second: [T::infinity(); 3],
            sig_first: [T::zero(); 3],
            sig_second: [T::infinity(); 3],
            int_relay: [T::zero(); 3],
            int_dr: p.p_ut / b.l_ut_dr,
            floor_first: [T::zero(); 3],
            floor_second: T::zero(),
        };
        g.overlay_first[0] = mean_snr_direct(p, b);
        g.sig_first[0] = p.p_dt / b.l_d;
        g.int_relay[0] = p.p_ut / b.l_ut_dr;
        if sir == SirModel::WithNoise {
            g.floor_first[0] = p.noise;
            g.floor_second = p.noise;
        }
        for tier in [Tier::Micro, Tier::Macro] {
            let i = if tier == Tier::Micro { 1 } else { 2 };
            g.overlay_first[i] = mean_snr_uplink(p, b, tier);
            g.overlay_second[i] = mean_snr_downlink(p, b, tier);
            g.sig_first[i] = p.p_dt / b.ul(tier);
            g.sig_second[i] = p.bs_power(tier) / b.dl(tier);
            g.int_relay[i] = p.p_ut / b.ut(tier);
            if sir == SirModel::WithNoise {
                g.floor_first[i] = p.noise + residual_si(p, tier);
            }
        }
        g
    }

    /// Instantaneous SNR (overlay) or SIR/SINR (underlay) of `mode` in one block.
    #[inline]
    pub fn snr(&self, mode: Mode, scenario: Scenario, f: &BlockFading<T>) -> T {
        let i = mode.index();
        let [z0, z1, z2, z3] = f.z;
        match (scenario, mode) {
            (Scenario::Overlay, Mode::Direct) => self.overlay_first[0] * z0,
            (Scenario::Overlay, _) => (self.overlay_first[i] * z0).min(self.overlay_second[i] * z1),
            (Scenario::Underlay, Mode::Direct) => self.sig_first[0] * z0 / (self.int_dr * z3 + self.floor_first[0]),
            (Scenario::Underlay, _) => {
                let ul = self.sig_first[i] * z0 / (self.int_relay[i] * z2 + self.floor_first[i]);
                let dl = self.sig_second[i] * z1 / (self.int_dr * z3 + self.floor_second);
                ul.min(dl)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn unit_params() -> SystemParams<f64> {
        SystemParams {
            bandwidth: 1.0,
            noise: 1.0,
            p_dt: 1.0,
            p_micro: 1.0,
            p_macro: 1.0,
            p_ut: 1.0,
            si_alpha: 0.0,
            si_beta: 1.0,
            si_law: SiLaw::Quality,
            block_len: 10,
            rate: 1.0,
            theta: 0.1,
            max_tx: 2,
            duplex: Duplex::Full,
        }
    }

    fn unit_budget() -> LinkBudget<f64> {
        LinkBudget::from_db([0.0; 8])
    }

    #[test]
    fn pathloss_values() {
        assert!((pathloss_db(1.0f64).unwrap() - 128.1).abs() < 1e-12);
        assert!((pathloss_db(0.1f64).unwrap() - 90.5).abs() < 1e-12);
        // 37.6 * log10(0.5) = -11.3186...
        assert!((pathloss_db(0.5f64).unwrap() - 116.78).abs() < 0.01);
        assert!(pathloss_db(0.0f64).is_err());
        assert!(pathloss_db(-1.0f64).is_err());
    }

    #[test]
    fn db_round_trip() {
        for db in [-30.0, 0.0, 80.9, 128.1] {
            let x: f64 = db_to_linear(db);
            assert!((linear_to_db(x) - db).abs() <= 1e-12 * db.abs().max(1.0));
        }
        assert!((dbm_to_watts(30.0f64) - 1.0).abs() < 1e-12);
        assert!((watts_to_dbm(0.5f64) - 26.9897).abs() < 1e-4);
    }

    #[test]
    fn mean_snr_arithmetic() {
        let mut p = unit_params();
        let mut b = unit_budget();
        assert!((mean_snr_direct(&p, &b) - 1.0).abs() < 1e-15);
        p.p_dt = 2.0;
        b.l_d = 4.0;
        p.noise = 0.5;
        assert!((mean_snr_direct(&p, &b) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_hop_harmonic() {
        let mut p = unit_params();
        p.p_dt = 2.0;
        p.p_micro = 2.0;
        let b = unit_budget();
        assert!((mean_snr_two_hop(&p, &b, Tier::Micro) - 1.0).abs() < 1e-15);
        let ul = mean_snr_uplink(&p, &b, Tier::Micro);
        let dl = mean_snr_downlink(&p, &b, Tier::Micro);
        assert!(mean_snr_two_hop(&p, &b, Tier::Micro) <= ul.min(dl));
    }

    #[test]
    fn si_laws() {
        let mut p = unit_params();
        p.si_alpha = 0.1;
        p.p_macro = 100.0;
        p.si_beta = 1.0;
        assert!((residual_si(&p, Tier::Macro) - 0.1).abs() < 1e-12);
        p.si_beta = 0.5;
        assert!((residual_si(&p, Tier::Macro) - 1.0).abs() < 1e-12);
        p.si_law = SiLaw::Literal;
        assert!((residual_si(&p, Tier::Macro) - 1.0).abs() < 1e-12);
        p.si_beta = 1.0;
        assert!((residual_si(&p, Tier::Macro) - 10.0).abs() < 1e-12);
        p.duplex = Duplex::Half;
        assert_eq!(residual_si(&p, Tier::Macro), 0.0);
        p.si_alpha = 0.0;
        p.duplex = Duplex::Full;
        let b = unit_budget();
        assert!((mean_snr_uplink(&p, &b, Tier::Macro) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn capacities() {
        let mut p = unit_params();
        assert_eq!(capacity_direct(&p, 0.0).unwrap(), 0.0);
        assert!((capacity_direct(&p, 1.0).unwrap() - 1.0).abs() < 1e-15);
        p.bandwidth = 10.0;
        assert!((capacity_direct(&p, 3.0).unwrap() - 20.0).abs() < 1e-12);
        assert!(capacity_direct(&p, -0.1).is_err());
        p.bandwidth = 1.0;
        assert!((capacity_two_hop(&p, 1.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        p.duplex = Duplex::Half;
        assert!((capacity_two_hop(&p, 3.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn exact_outage_closed_values() {
        assert_eq!(ratio_outage(1.0f64, 1.0, 0.0), 0.0);
        assert!((ratio_outage(1.0f64, 1.0, 1.0) - 0.5).abs() < 1e-15);
        let p = unit_params();
        let b = unit_budget();
        let o = sir_outage_two_hop(&p, &b, Tier::Micro, 1.0, OutageMode::Exact);
        assert!((o.value - 0.75).abs() < 1e-15);
    }

    #[test]
    fn paper_outage_clamps() {
        let p = unit_params();
        let b = unit_budget();
        let o = sir_outage_direct(&p, &b, 5.0, OutageMode::Paper);
        assert!(o.clamped);
        assert_eq!(o.value, 1.0);
        let o = sir_outage_direct(&p, &b, 0.5, OutageMode::Paper);
        assert!(!o.clamped);
        assert!((o.value - 0.25).abs() < 1e-15);
    }

    #[test]
    fn fading_snr_means() {
        let mut p = unit_params();
        p.p_dt = 3.0;
        p.p_micro = 5.0;
        let b = unit_budget();
        let g = LinkGains::new(&p, &b, SirModel::InterferenceLimited);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 200_000;
        let (mut sd, mut sm) = (0.0, 0.0);
        for _ in 0..n {
            let f = BlockFading::<f64>::draw(&mut rng);
            sd += g.snr(Mode::Direct, Scenario::Overlay, &f);
            sm += g.snr(Mode::Micro, Scenario::Overlay, &f);
        }
        let (sd, sm) = (sd / n as f64, sm / n as f64);
        assert!((sd / mean_snr_direct(&p, &b) - 1.0).abs() < 0.01);
        assert!((sm / mean_snr_two_hop(&p, &b, Tier::Micro) - 1.0).abs() < 0.01);
    }

    #[test]
    fn full_duplex_capacity_dominates_half() {
        let mut p = unit_params();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let ul: f64 = 10.0 * f64::sample_exp1(&mut rng);
            let dl: f64 = 10.0 * f64::sample_exp1(&mut rng);
            p.duplex = Duplex::Full;
            let full = capacity_two_hop(&p, ul, dl).unwrap();
            p.duplex = Duplex::Half;
            assert!(full >= capacity_two_hop(&p, ul, dl).unwrap());
        }
    }

    #[test]
    fn validate_rejects_bad_params() {
        let mut p = unit_params();
        assert!(p.validate().is_ok());
        p.si_beta = 1.5;
        assert!(p.validate().is_err());
        let mut p = unit_params();
        p.theta = 0.0;
        assert!(p.validate().is_err());
        let mut p = unit_params();
        p.max_tx = 0;
        assert!(p.validate().is_err());
    }
}
