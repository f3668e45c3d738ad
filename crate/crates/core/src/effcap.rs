//! Perron root of the block-companion matrix and the resulting effective capacity.

use crate::channel::{LinkBudget, OutageMode, SirModel, SystemParams};
use crate::error::{Error, Result};
use crate::harq::{
    companion_entries, expected_decoding_errors, truncated_terms, CompanionSpec, DecodingProfile, QueueModel, Schedule,
    TruncatedTerms,
};
use crate::markov::{overlay_row, underlay_row, TransitionRow};
use crate::mode_selection::{hypothesis_probabilities, map_to_hypotheses, DetectionProfile, Prior, ThresholdRule};
use crate::scalar::{lit, Scalar};

const MAX_BISECTIONS: usize = 400;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RootDiagnostics<T> {
    pub iterations: usize,
    pub bracket: (T, T),
    pub residual: T,
}

/// Unique positive root of `x^M - b_1 x^(M-1) - ... - b_M`.
///
/// Bisects `g(x) = 1 - sum b_k x^-k`, which is increasing on `(0, inf)` and positive at
/// `1 + max b`.
pub fn perron_root<T: Scalar>(b: &[T]) -> Result<(T, RootDiagnostics<T>)> {
    if b.is_empty() || b.iter().all(|&x| x == T::zero()) {
        return Err(Error::Degenerate("companion coefficients are all zero".into()));
    }
    if b.iter().any(|&x| !(x >= T::zero()) || !x.is_finite()) {
        return Err(Error::Domain("companion coefficients must be finite and nonnegative".into()));
    }
    let g = |x: T| {
        let inv = x.recip();
        let mut pow = T::one();
        let mut s = T::zero();
        for &bk in b {
            pow = pow * inv;
            s = s + bk * pow;
        }
        T::one() - s
    };
    let bmax = b.iter().copied().fold(T::zero(), T::max);
    let (mut lo, mut hi) = (T::zero(), T::one() + bmax);
    let mut it = 0;
    while it < MAX_BISECTIONS {
        let mid = (lo + hi) * lit(0.5);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
        it += 1;
    }
    let root = (lo + hi) * lit(0.5);
    let residual = characteristic(b, root).abs();
    Ok((root, RootDiagnostics { iterations: it, bracket: (lo, hi), residual }))
}

/// Value of the characteristic polynomial at `x`.
pub fn characteristic<T: Scalar>(b: &[T], x: T) -> T {
    let mut acc = T::one();
    for &bk in b {
        acc = acc * x - bk;
    }
    acc
}

/// Largest root of `x^2 - b1 x - b2`.
pub fn quadratic_root<T: Scalar>(b1: T, b2: T) -> T {
    (b1 + (b1 * b1 + lit::<T>(4.0) * b2).sqrt()) * lit(0.5)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EcResult<T> {
    pub lambda_plus: T,
    /// Bits per block.
    pub ec: T,
    pub theta: T,
    pub queue_model: QueueModel,
    pub max_tx: usize,
    pub diagnostics: Option<RootDiagnostics<T>>,
}

impl<T: Scalar> EcResult<T> {
    fn new(
        lambda_plus: T,
        theta: T,
        queue_model: QueueModel,
        max_tx: usize,
        diagnostics: Option<RootDiagnostics<T>>,
    ) -> Self {
        EcResult { lambda_plus, ec: ec_from_root(lambda_plus, theta), theta, queue_model, max_tx, diagnostics }
    }

    pub fn per_channel_use(&self, block_len: u32) -> T {
        self.ec / T::from_u32(block_len).unwrap()
    }
}

pub fn ec_from_root<T: Scalar>(lambda_plus: T, theta: T) -> T {
    -lambda_plus.ln() / theta
}

pub fn ec_harq<T: Scalar>(spec: &CompanionSpec<T>, theta: T) -> Result<EcResult<T>> {
    if !(theta > T::zero()) {
        return Err(Error::InvalidParam(format!("theta must be positive, got {theta}")));
    }
    let (root, diag) = perron_root(&spec.b)?;
    Ok(EcResult::new(root, theta, spec.queue_model, spec.max_tx(), Some(diag)))
}

/// Closed-form n1 root for `M = 2`.
pub fn lambda_truncated_n1<T: Scalar>(t: &TruncatedTerms<T>) -> T {
    quadratic_root(t.e * t.phi + t.p_u_off, t.e * t.vartheta + t.p_o_off + t.eps_ac)
}

/// Closed-form n2 root for `M = 2`, from `b_2 = e varrho + p_o_off`.
pub fn lambda_truncated_n2<T: Scalar>(t: &TruncatedTerms<T>) -> T {
    quadratic_root(t.e * t.phi + t.p_u_off, t.e * t.varrho + t.p_o_off)
}

/// The n2 root as typeset, with `p_o_off` outside the factor 4.
pub fn lambda_truncated_n2_printed<T: Scalar>(t: &TruncatedTerms<T>) -> T {
    let b1 = t.e * t.phi + t.p_u_off;
    (b1 + (b1 * b1 + lit::<T>(4.0) * t.e * t.varrho + t.p_o_off).sqrt()) * lit(0.5)
}

pub fn ec_truncated_n1<T: Scalar>(t: &TruncatedTerms<T>, theta: T) -> EcResult<T> {
    EcResult::new(lambda_truncated_n1(t), theta, QueueModel::N1, 2, None)
}

pub fn ec_truncated_n2<T: Scalar>(t: &TruncatedTerms<T>, theta: T) -> EcResult<T> {
    EcResult::new(lambda_truncated_n2(t), theta, QueueModel::N2, 2, None)
}

/// Mode-selection settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Selection<T> {
    pub sigma: T,
    pub rule: ThresholdRule<T>,
    pub prior: Prior,
}

/// Everything the analytical pipeline needs.
#[derive(Clone, Debug, PartialEq)]
pub struct Model<T> {
    pub params: SystemParams<T>,
    pub budget: LinkBudget<T>,
    pub selection: Selection<T>,
    pub outage_mode: OutageMode,
    pub sir_model: SirModel,
    pub schedule: Schedule,
    pub zeta_samples: usize,
    pub seed: u64,
}

/// Intermediate products and EC of both queue models.
#[derive(Clone, Debug, PartialEq)]
pub struct Analysis<T> {
    pub detection: DetectionProfile<T>,
    pub hypotheses: [T; 3],
    pub under: TransitionRow<T>,
    pub over: TransitionRow<T>,
    pub decoding: DecodingProfile<T>,
    pub spec_n1: CompanionSpec<T>,
    pub spec_n2: CompanionSpec<T>,
    pub n1: EcResult<T>,
    pub n2: EcResult<T>,
    /// Present when `M = 2`.
    pub truncated: Option<TruncatedTerms<T>>,
    /// `1 - sum b_k` at `theta = 0` for (n1, n2). EC is decreasing in `theta` only when positive.
    pub leak: [T; 2],
}

impl<T: Scalar> Analysis<T> {
    pub fn ec(&self, model: QueueModel) -> T {
        match model {
            QueueModel::N1 => self.n1.ec,
            QueueModel::N2 => self.n2.ec,
        }
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.under.clamped {
            w.push("printed underlay outage law left [0, 1] and was clamped".to_string());
        }
        for spec in [&self.spec_n1, &self.spec_n2] {
            if spec.overflow() {
                w.push(format!("b_M > 1 for {}: EC is negative", spec.queue_model.name()));
            }
        }
        for (leak, name) in self.leak.iter().zip(["n1", "n2"]) {
            if *leak <= T::zero() {
                w.push(format!("service leak {leak} <= 0 for {name}: EC is not monotone in theta"));
            }
        }
        w
    }
}

pub fn analyze<T: Scalar>(m: &Model<T>) -> Result<Analysis<T>> {
    m.params.validate()?;
    m.budget.validate()?;
    let detection = map_to_hypotheses(m.budget.selection_losses_db(), m.selection.sigma, m.selection.rule)?;
    let hypotheses = hypothesis_probabilities(&detection, m.selection.prior);
    let under = underlay_row(&m.params, &m.budget, &hypotheses, m.outage_mode);
    let over = overlay_row(&m.params, &m.budget, &hypotheses);
    let decoding = expected_decoding_errors(&m.params, &m.budget, m.schedule, m.sir_model, m.zeta_samples, m.seed)?;
    let spec_n1 = companion_entries(&m.params, &decoding, &under, &over, QueueModel::N1, m.schedule)?;
    let spec_n2 = companion_entries(&m.params, &decoding, &under, &over, QueueModel::N2, m.schedule)?;
    let n1 = ec_harq(&spec_n1, m.params.theta)?;
    let n2 = ec_harq(&spec_n2, m.params.theta)?;
    let truncated =
        if m.params.max_tx == 2 { Some(truncated_terms(&m.params, &decoding, &under, &over)?) } else { None };
    let mut flat = m.params.clone();
    flat.theta = T::zero();
    let leak = [QueueModel::N1, QueueModel::N2].map(|qm| {
        companion_entries(&flat, &decoding, &under, &over, qm, m.schedule)
            .map(|s| T::one() - s.b.iter().copied().sum::<T>())
            .unwrap_or(T::nan())
    });
    Ok(Analysis { detection, hypotheses, under, over, decoding, spec_n1, spec_n2, n1, n2, truncated, leak })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn root_simple_cases() {
        let (r, _) = perron_root(&[1.0f64, 0.0]).unwrap();
        assert!((r - 1.0).abs() < 1e-14);
        let (r, d) = perron_root(&[0.5f64, 0.25]).unwrap();
        assert!((r - 0.809016994374947).abs() < 1e-9);
        assert!(d.residual < 1e-12);
        assert!(perron_root(&[0.0f64, 0.0]).is_err());
        assert!(perron_root(&[-0.1f64, 0.5]).is_err());
    }

    #[test]
    fn root_matches_quadratic() {
        for &(b1, b2) in &[(0.3f64, 0.6), (0.9, 1e-6), (0.0, 0.49), (1.4, 0.3)] {
            let (r, _) = perron_root(&[b1, b2]).unwrap();
            assert!((r - quadratic_root(b1, b2)).abs() <= 1e-10 * r);
        }
    }

    #[test]
    fn root_f32() {
        let (r, _) = perron_root(&[0.5f32, 0.25]).unwrap();
        assert!((r - 0.809017).abs() < 1e-6);
    }

    #[test]
    fn ec_identities() {
        let one = CompanionSpec { b: vec![1.0f64], queue_model: QueueModel::N2 };
        assert!(ec_harq(&one, 0.3).unwrap().ec.abs() < 1e-12);
        let theta = 0.2f64;
        let unit = CompanionSpec { b: vec![(-theta).exp()], queue_model: QueueModel::N2 };
        assert!((ec_harq(&unit, theta).unwrap().ec - 1.0).abs() < 1e-12);
        assert!(ec_harq(&unit, 0.0).is_err());
    }

    #[test]
    fn perfect_channel_closed_forms() {
        let (l, r, theta) = (50.0f64, 0.5, 0.01);
        let t = TruncatedTerms {
            e: (-l * r * theta).exp(),
            phi: 1.0,
            vartheta: 0.0,
            varrho: 0.0,
            p_u_off: 0.0,
            p_o_off: 0.0,
            eps_ac: 0.0,
        };
        assert!((ec_truncated_n1(&t, theta).ec - l * r).abs() < 1e-9);
        assert!((ec_truncated_n2(&t, theta).ec - l * r).abs() < 1e-9);
    }
}
