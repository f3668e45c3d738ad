//! Rate optimization: gradient ascent on EC(r) with a grid-search oracle.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::{count, lit, Scalar};

/// Coefficients held fixed in r, as in the cost `F`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrozenCoeffs<T> {
    pub phi: T,
    pub vartheta: T,
    pub eps_ac: T,
    /// Block length `l`.
    pub l: T,
    pub theta: T,
}

fn frozen_parts<T: Scalar>(r: T, c: &FrozenCoeffs<T>) -> (T, T) {
    let e = (-c.l * r * c.theta).exp();
    let root = (e * e * c.phi * c.phi + lit::<T>(4.0) * (e * c.vartheta + c.eps_ac)).sqrt();
    (e, root)
}

/// `F(r) = e phi + sqrt((e phi)^2 + 4 (e vartheta + eps_ac))` with `e = exp(-l r theta)`.
pub fn cost_n1<T: Scalar>(r: T, c: &FrozenCoeffs<T>) -> T {
    let (e, root) = frozen_parts(r, c);
    e * c.phi + root
}

/// Exact derivative of [`cost_n1`] in `r`.
pub fn analytic_gradient_n1<T: Scalar>(r: T, c: &FrozenCoeffs<T>) -> T {
    let (e, root) = frozen_parts(r, c);
    let lt = c.l * c.theta;
    let inner = e * e * c.phi * c.phi + lit::<T>(2.0) * e * c.vartheta;
    if root == T::zero() {
        return -lt * e * c.phi;
    }
    -lt * e * c.phi - lt * inner / root
}

/// The derivative as typeset, whose first numerator term carries `phi` instead of `phi^2`.
pub fn printed_gradient_n1<T: Scalar>(r: T, c: &FrozenCoeffs<T>) -> T {
    let (e, root) = frozen_parts(r, c);
    let lt = c.l * c.theta;
    let num = lt * e * e * (c.phi + lit::<T>(2.0) * c.vartheta * (c.l * r * c.theta).exp());
    -lt * e * c.phi - num / root
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GradientMode {
    /// Supplied gradient of the frozen cost; descends on it.
    AnalyticFrozen,
    /// Central difference of the objective; ascends on it.
    Numeric,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GdConfig<T> {
    pub step: T,
    pub max_iters: usize,
    pub grad_tol: T,
    pub r_init: T,
    pub mode: GradientMode,
    pub fd_step: T,
    /// Iterates are projected onto `[r_min, inf)`.
    pub r_min: T,
}

impl<T: Scalar> GdConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > T::zero())
            || self.max_iters == 0
            || !(self.grad_tol > T::zero())
            || !(self.fd_step > T::zero())
        {
            return Err(Error::InvalidParam("step, max_iters, grad_tol and fd_step must be positive".into()));
        }
        if !(self.r_min > T::zero()) || !(self.r_init >= self.r_min) {
            return Err(Error::InvalidParam("need 0 < r_min <= r_init".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GdStep<T> {
    pub r: T,
    pub value: T,
    pub grad: T,
    pub step: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GdResult<T> {
    pub r_star: T,
    pub value_star: T,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<GdStep<T>>,
}

const MAX_HALVINGS: usize = 40;

/// Maximize `objective` over `r > r_min`.
///
/// In `Numeric` mode the ascent direction is the central difference of `objective`.
/// In `AnalyticFrozen` mode `gradient` is the derivative of a cost to minimize and
/// `objective` must return the negated cost. A rejected step is halved until the
/// objective improves.
pub fn gd_optimize<T, F, G>(mut objective: F, mut gradient: Option<G>, cfg: &GdConfig<T>) -> Result<GdResult<T>>
where
    T: Scalar,
    F: FnMut(T) -> Result<T>,
    G: FnMut(T) -> T,
{
    cfg.validate()?;
    if cfg.mode == GradientMode::AnalyticFrozen && gradient.is_none() {
        return Err(Error::InvalidParam("analytic mode needs a gradient".into()));
    }
    let mut eval = |r: T| -> Result<T> {
        let v = objective(r)?;
        if !v.is_finite() {
            return Err(Error::NonFinite(r.to_f64().unwrap_or(f64::NAN)));
        }
        Ok(v)
    };
    let two = lit::<T>(2.0);
    let mut r = cfg.r_init;
    let mut value = eval(r)?;
    let mut step = cfg.step;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..cfg.max_iters {
        iterations += 1;
        let grad = match (cfg.mode, gradient.as_mut()) {
            (GradientMode::AnalyticFrozen, Some(g)) => -g(r),
            _ => {
                let h = cfg.fd_step;
                let lo = (r - h).max(cfg.r_min);
                let hi = r + h;
                (eval(hi)? - eval(lo)?) / (hi - lo)
            }
        };
        trace.push(GdStep { r, value, grad, step });
        if grad.abs() < cfg.grad_tol {
            converged = true;
            break;
        }
        let mut accepted = false;
        let mut s = step;
        for _ in 0..MAX_HALVINGS {
            let cand = (r + s * grad).max(cfg.r_min);
            if cand == r {
                break;
            }
            let v = eval(cand)?;
            if v > value {
                r = cand;
                value = v;
                accepted = true;
                break;
            }
            s = s / two;
        }
        if !accepted {
            converged = true;
            break;
        }
        // let the step recover after a run of halvings
        step = (s * two).min(cfg.step);
    }
    Ok(GdResult { r_star: r, value_star: value, iterations, converged, trace })
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridResult<T> {
    pub r_star: T,
    pub value_star: T,
    pub curve: Vec<(T, T)>,
}

impl<T: Scalar> GridResult<T> {
    pub fn spacing(&self) -> T {
        if self.curve.len() < 2 {
            return T::zero();
        }
        self.curve[1].0 - self.curve[0].0
    }
}

/// Uniform grid `lo..=hi` with `steps` points.
pub fn grid<T: Scalar>(lo: T, hi: T, steps: usize) -> Vec<T> {
    let d = if steps > 1 { (hi - lo) / count::<T>(steps - 1) } else { T::zero() };
    (0..steps).map(|k| lo + d * count::<T>(k)).collect()
}

/// Exhaustive argmax over the grid, evaluated in parallel.
pub fn grid_search<T, F>(objective: F, lo: T, hi: T, steps: usize) -> Result<GridResult<T>>
where
    T: Scalar,
    F: Fn(T) -> Result<T> + Sync,
{
    if !(lo < hi) || steps < 2 {
        return Err(Error::InvalidParam("grid needs lo < hi and at least 2 steps".into()));
    }
    let rs = grid(lo, hi, steps);
    let values: Vec<T> = rs.par_iter().map(|&r| objective(r)).collect::<Result<_>>()?;
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    Ok(GridResult { r_star: rs[best], value_star: values[best], curve: rs.into_iter().zip(values).collect() })
}

/// Number of sign changes of the discrete forward difference.
pub fn sign_changes<T: Scalar>(values: &[T]) -> usize {
    let signs: Vec<bool> = values.windows(2).filter(|w| w[1] != w[0]).map(|w| w[1] > w[0]).collect();
    signs.windows(2).filter(|s| s[0] != s[1]).count()
}
