//! Effective capacity of mode-selected D2D links with truncated HARQ.
//!
//! The analytical pipeline runs pathloss estimation, ternary mode selection, a six-state
//! ON/OFF channel, finite-blocklength decoding errors and the Perron root of the HARQ
//! companion matrix. [`montecarlo`] holds block-level simulators used as oracles.

// `!(x > 0)` rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod effcap;
pub mod error;
pub mod harq;
pub mod markov;
pub mod mode_selection;
pub mod montecarlo;
pub mod optimizer;
pub mod scalar;

pub use channel::{Duplex, LinkBudget, Mode, OutageMode, Scenario, SiLaw, SirModel, SystemParams, Tier};
pub use effcap::{analyze, Analysis, EcResult, Model, Selection};
pub use error::{Error, Result};
pub use harq::{QueueModel, Schedule};
pub use mode_selection::{Prior, ThresholdRule};
pub use scalar::Scalar;

pub type SystemParamsF64 = SystemParams<f64>;
pub type SystemParamsF32 = SystemParams<f32>;
pub type LinkBudgetF64 = LinkBudget<f64>;
pub type LinkBudgetF32 = LinkBudget<f32>;
pub type ModelF64 = Model<f64>;
pub type ModelF32 = Model<f32>;
pub type AnalysisF64 = Analysis<f64>;

/// Shipped reference profile.
pub mod defaults {
    use crate::channel::{dbm_to_watts, Duplex, LinkBudget, OutageMode, SiLaw, SirModel, SystemParams};
    use crate::effcap::{Model, Selection};
    use crate::harq::Schedule;
    use crate::mode_selection::{Prior, ThresholdRule};
    use crate::scalar::{lit, Scalar};

    pub const P_DT_DBM: f64 = 27.0;
    pub const P_MICRO_DBM: f64 = 37.0;
    pub const P_MACRO_DBM: f64 = 47.0;
    pub const P_UT_DBM: f64 = 27.0;
    pub const NOISE_DBM: f64 = -90.0;
    /// Pathlosses in dB, in [`LinkBudget`] field order.
    pub const LOSSES_DB: [f64; 8] = [90.7, 80.9, 83.0, 85.4, 107.0, 110.0, 108.0, 105.0];
    pub const ZETA_SAMPLES: usize = 100_000;
    pub const SEED: u64 = 2024;

    pub fn params<T: Scalar>() -> SystemParams<T> {
        SystemParams {
            bandwidth: T::one(),
            noise: dbm_to_watts(lit(NOISE_DBM)),
            p_dt: dbm_to_watts(lit(P_DT_DBM)),
            p_micro: dbm_to_watts(lit(P_MICRO_DBM)),
            p_macro: dbm_to_watts(lit(P_MACRO_DBM)),
            p_ut: dbm_to_watts(lit(P_UT_DBM)),
            si_alpha: lit(1e-5),
            si_beta: T::one(),
            si_law: SiLaw::Quality,
            block_len: 50,
            rate: lit(0.5),
            theta: lit(0.01),
            max_tx: 2,
            duplex: Duplex::Full,
        }
    }

    pub fn budget<T: Scalar>() -> LinkBudget<T> {
        LinkBudget::from_db(LOSSES_DB.map(lit))
    }

    pub fn selection<T: Scalar>() -> Selection<T> {
        Selection { sigma: T::one(), rule: ThresholdRule::Midpoint, prior: Prior::TrueBest }
    }

    pub fn model<T: Scalar>() -> Model<T> {
        Model {
            params: params(),
            budget: budget(),
            selection: selection(),
            outage_mode: OutageMode::Exact,
            sir_model: SirModel::InterferenceLimited,
            schedule: Schedule::default(),
            zeta_samples: ZETA_SAMPLES,
            seed: SEED,
        }
    }
}
