//! Independent simulation oracles: block-level HARQ service paths and the empirical EC.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::{BlockFading, LinkBudget, LinkGains, Mode, Scenario, SirModel, SystemParams};
use crate::error::{Error, Result};
use crate::harq::{attempt_weight, Accumulator, QueueModel, Schedule};
use crate::markov::mode_threshold;
use crate::mode_selection::{map_to_hypotheses, Prior, ThresholdRule};
use crate::scalar::{count, lit, Scalar};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimConfig<T> {
    pub num_blocks: usize,
    pub num_paths: usize,
    /// Constant arrivals per block for the queue report; zero disables it.
    pub arrival_rate: T,
    pub seed: u64,
    pub queue_model: QueueModel,
    pub schedule: Schedule,
    pub sir_model: SirModel,
}

impl<T: Scalar> SimConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.num_blocks == 0 || self.num_paths == 0 {
            return Err(Error::InvalidParam("num_blocks and num_paths must be >= 1".into()));
        }
        if !(self.arrival_rate >= T::zero()) {
            return Err(Error::InvalidParam("arrival rate must be >= 0".into()));
        }
        Ok(())
    }
}

/// How transmission periods ended, summed over all paths.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PeriodStats {
    /// `success[k]`: periods delivered at attempt `k + 1`.
    pub success: Vec<u64>,
    /// `off[k]`: periods ended by an OFF block at attempt `k + 1`.
    pub off: Vec<u64>,
    /// Periods ending with `M` failed attempts.
    pub outage: u64,
}

impl PeriodStats {
    fn new(m: usize) -> Self {
        PeriodStats { success: vec![0; m], off: vec![0; m], outage: 0 }
    }

    fn merge(&mut self, o: &PeriodStats) {
        for (a, b) in self.success.iter_mut().zip(&o.success) {
            *a += b;
        }
        for (a, b) in self.off.iter_mut().zip(&o.off) {
            *a += b;
        }
        self.outage += o.outage;
    }

    pub fn total(&self) -> u64 {
        self.success.iter().sum::<u64>() + self.off.iter().sum::<u64>() + self.outage
    }
}

/// Backlog of a queue fed at the constant arrival rate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QueueReport<T> {
    pub mean_backlog: T,
    pub final_backlog: T,
    /// Bits discarded at the retransmission deadline (n2 only).
    pub dropped: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ServicePaths<T> {
    /// Cumulative service `S_i(t)` of each path at the horizon.
    pub totals: Vec<T>,
    pub blocks: usize,
    pub periods: PeriodStats,
    pub queue: Option<QueueReport<T>>,
}

const PATHS_PER_CHUNK: usize = 128;

/// Cumulative mode probabilities, normalized in case the prior does not sum to one.
fn cumulative<T: Scalar>(w: &[T; 3]) -> Result<[T; 3]> {
    let s = w[0] + w[1] + w[2];
    if !(s > T::zero()) || w.iter().any(|&x| x < T::zero()) {
        return Err(Error::InvalidParam("mode probabilities must be nonnegative with positive sum".into()));
    }
    Ok([w[0] / s, (w[0] + w[1]) / s, T::one()])
}

#[inline]
fn pick<T: Scalar>(cum: &[T; 3], u: T) -> usize {
    if u < cum[0] {
        0
    } else if u < cum[1] {
        1
    } else {
        2
    }
}

/// Simulate the HARQ service process block by block.
///
/// Each block draws a mode from `hypotheses`, the fading, and the scenario of the
/// current attempt. A block below the mode threshold is OFF and closes the period with
/// no service. An ON block adds its information to the packet; the packet is decoded
/// unless a per-packet uniform falls below the decoding error of the accumulated trace.
/// The period closes on success (`l r` bits) or after `M` attempts.
///
/// The service process is the same for both queue models; they differ only in whether
/// the queue report drops the failed packet.
pub fn simulate_service_paths<T: Scalar>(
    p: &SystemParams<T>,
    b: &LinkBudget<T>,
    hypotheses: &[T; 3],
    cfg: &SimConfig<T>,
) -> Result<ServicePaths<T>> {
    p.validate()?;
    cfg.validate()?;
    let cum = cumulative(hypotheses)?;
    let gains = LinkGains::new(p, b, cfg.sir_model);
    let thresholds = Mode::ALL.map(|m| mode_threshold(p, m));
    let weights = Mode::ALL.map(|m| attempt_weight(p, m));
    let l = p.l();
    let r = p.rate;
    let bits = p.block_bits();
    let m = p.max_tx;
    let chunks = cfg.num_paths.div_ceil(PATHS_PER_CHUNK);
    let with_queue = cfg.arrival_rate > T::zero();

    let parts: Vec<(Vec<T>, PeriodStats, [T; 3])> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(c as u64);
            let n = PATHS_PER_CHUNK.min(cfg.num_paths - c * PATHS_PER_CHUNK);
            let mut totals = Vec::with_capacity(n);
            let mut stats = PeriodStats::new(m);
            let mut q_acc = [T::zero(); 3];
            for _ in 0..n {
                let mut s = T::zero();
                let mut k = 1usize;
                let mut acc = Accumulator::default();
                let mut u_dec = T::zero();
                let mut backlog = T::zero();
                let mut backlog_sum = T::zero();
                let mut dropped = T::zero();
                for _ in 0..cfg.num_blocks {
                    // fixed number of draws per block keeps streams aligned across rates
                    let u_mode = T::sample_unit(&mut rng);
                    let f = BlockFading::draw(&mut rng);
                    let u_new = T::sample_unit(&mut rng);
                    if k == 1 {
                        u_dec = u_new;
                        acc = Accumulator::default();
                    }
                    let mode = pick(&cum, u_mode);
                    let g = gains.snr(Mode::from_index(mode), cfg.schedule.at(k), &f);
                    let mut served = T::zero();
                    let mut failed = false;
                    if g > thresholds[mode] {
                        acc.push(g, weights[mode], l);
                        if u_dec >= acc.zeta(l, r) {
                            served = bits;
                            stats.success[k - 1] += 1;
                            k = 1;
                        } else if k == m {
                            stats.outage += 1;
                            failed = true;
                            k = 1;
                        } else {
                            k += 1;
                        }
                    } else {
                        stats.off[k - 1] += 1;
                        k = 1;
                    }
                    s = s + served;
                    if with_queue {
                        backlog = (backlog + cfg.arrival_rate - served).max(T::zero());
                        if failed && cfg.queue_model == QueueModel::N2 {
                            let d = backlog.min(bits);
                            backlog = backlog - d;
                            dropped = dropped + d;
                        }
                        backlog_sum = backlog_sum + backlog;
                    }
                }
                totals.push(s);
                if with_queue {
                    q_acc[0] = q_acc[0] + backlog_sum / count(cfg.num_blocks);
                    q_acc[1] = q_acc[1] + backlog;
                    q_acc[2] = q_acc[2] + dropped;
                }
            }
            (totals, stats, q_acc)
        })
        .collect();

    let mut totals = Vec::with_capacity(cfg.num_paths);
    let mut periods = PeriodStats::new(m);
    let mut q = [T::zero(); 3];
    for (t, st, qa) in parts {
        totals.extend(t);
        periods.merge(&st);
        for i in 0..3 {
            q[i] = q[i] + qa[i];
        }
    }
    let n = count::<T>(cfg.num_paths);
    let queue = with_queue.then(|| QueueReport { mean_backlog: q[0] / n, final_backlog: q[1] / n, dropped: q[2] / n });
    Ok(ServicePaths { totals, blocks: cfg.num_blocks, periods, queue })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmpiricalEc<T> {
    pub ec: T,
    /// 95% percentile-bootstrap interval.
    pub ci: Option<(T, T)>,
}

impl<T: Scalar> EmpiricalEc<T> {
    /// Half-width of the interval, zero without one.
    pub fn half_width(&self) -> T {
        self.ci.map_or(T::zero(), |(lo, hi)| (hi - lo) * lit(0.5))
    }
}

/// `-(1 / (theta t)) ln mean(exp(-theta S_i))` evaluated with log-sum-exp.
pub fn empirical_ec_point<T: Scalar>(totals: &[T], theta: T, blocks: usize) -> T {
    let mx = totals.iter().map(|&s| -theta * s).fold(T::neg_infinity(), T::max);
    let sum: T = totals.iter().map(|&s| (-theta * s - mx).exp()).sum();
    let log_mean = mx + (sum / count(totals.len())).ln();
    -log_mean / (theta * count(blocks))
}

pub const BOOTSTRAP_RESAMPLES: usize = 200;

pub fn empirical_ec<T: Scalar>(paths: &ServicePaths<T>, theta: T, seed: u64) -> Result<EmpiricalEc<T>> {
    if !(theta > T::zero()) {
        return Err(Error::InvalidParam(format!("theta must be positive, got {theta}")));
    }
    let s = &paths.totals;
    if s.is_empty() {
        return Err(Error::Degenerate("no paths".into()));
    }
    let ec = empirical_ec_point(s, theta, paths.blocks);
    if s.len() == 1 {
        return Ok(EmpiricalEc { ec, ci: None });
    }
    let n = s.len();
    let mut est: Vec<T> = (0..BOOTSTRAP_RESAMPLES)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let sample: Vec<T> = (0..n).map(|_| s[rng.random_range(0..n)]).collect();
            empirical_ec_point(&sample, theta, paths.blocks)
        })
        .collect();
    est.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lo = est[(BOOTSTRAP_RESAMPLES as f64 * 0.025) as usize];
    let hi = est[((BOOTSTRAP_RESAMPLES as f64 * 0.975) as usize).min(BOOTSTRAP_RESAMPLES - 1)];
    Ok(EmpiricalEc { ec, ci: Some((lo, hi)) })
}

pub const MIN_DETECTION_TRIALS: usize = 10_000;

fn classify<T: Scalar>(x: T, (cab, cbc): (T, T), perm: &[usize; 3]) -> usize {
    let slot = if x < cab {
        0
    } else if x < cbc {
        1
    } else {
        2
    };
    perm[slot]
}

/// Selection frequencies `freq[y][x]` when hypothesis `y` is the true best and its
/// pathloss is measured with `N(0, sigma^2)` error.
pub fn empirical_detection<T: Scalar>(
    losses_db: [T; 3],
    sigma: T,
    rule: ThresholdRule<T>,
    trials: usize,
    seed: u64,
) -> Result<[[T; 3]; 3]> {
    if trials < MIN_DETECTION_TRIALS {
        return Err(Error::InvalidParam(format!("at least {MIN_DETECTION_TRIALS} trials required")));
    }
    let prof = map_to_hypotheses(losses_db, sigma, rule)?;
    let mut out = [[T::zero(); 3]; 3];
    for (y, row) in out.iter_mut().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(y as u64);
        let mut hits = [0usize; 3];
        for _ in 0..trials {
            let x = losses_db[y] + sigma * T::sample_std_normal(&mut rng);
            hits[classify(x, prof.thresholds, &prof.sort_permutation)] += 1;
        }
        *row = hits.map(|h| count::<T>(h) / count(trials));
    }
    Ok(out)
}

/// Frequencies of each selected hypothesis when the true best is drawn from `prior`.
pub fn empirical_selection<T: Scalar>(
    losses_db: [T; 3],
    sigma: T,
    rule: ThresholdRule<T>,
    prior: Prior,
    trials: usize,
    seed: u64,
) -> Result<[T; 3]> {
    if trials < MIN_DETECTION_TRIALS {
        return Err(Error::InvalidParam(format!("at least {MIN_DETECTION_TRIALS} trials required")));
    }
    let prof = map_to_hypotheses(losses_db, sigma, rule)?;
    let third = T::one() / count(3);
    let weights = match prior {
        Prior::TrueBest => {
            let mut w = [T::zero(); 3];
            w[prof.best()] = T::one();
            w
        }
        Prior::Uniform | Prior::PaperLiteral => [third; 3],
    };
    let cum = cumulative(&weights)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = [0usize; 3];
    for _ in 0..trials {
        let y = pick(&cum, T::sample_unit(&mut rng));
        let x = losses_db[y] + sigma * T::sample_std_normal(&mut rng);
        hits[classify(x, prof.thresholds, &prof.sort_permutation)] += 1;
    }
    let scale = if prior == Prior::PaperLiteral { count::<T>(3) } else { T::one() };
    Ok(hits.map(|h| scale * count::<T>(h) / count(trials)))
}

/// Occupancy frequencies of the six states with a mode draw and a fading draw per block.
pub fn empirical_row<T: Scalar>(
    p: &SystemParams<T>,
    b: &LinkBudget<T>,
    hypotheses: &[T; 3],
    scenario: Scenario,
    trials: usize,
    seed: u64,
) -> Result<[T; 6]> {
    let cum = cumulative(hypotheses)?;
    let gains = LinkGains::new(p, b, SirModel::InterferenceLimited);
    let thresholds = Mode::ALL.map(|m| mode_threshold(p, m));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = [0usize; 6];
    for _ in 0..trials {
        let mode = pick(&cum, T::sample_unit(&mut rng));
        let f = BlockFading::draw(&mut rng);
        let g = gains.snr(Mode::from_index(mode), scenario, &f);
        hits[2 * mode + usize::from(g <= thresholds[mode])] += 1;
    }
    let total = hypotheses[0] + hypotheses[1] + hypotheses[2];
    Ok(hits.map(|h| total * count::<T>(h) / count(trials)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{Duplex, SiLaw};

    fn params() -> SystemParams<f64> {
        SystemParams {
            bandwidth: 1.0,
            noise: 1e-12,
            p_dt: 0.5,
            p_micro: 5.0,
            p_macro: 50.0,
            p_ut: 0.5,
            si_alpha: 1e-5,
            si_beta: 1.0,
            si_law: SiLaw::Quality,
            block_len: 50,
            rate: 0.5,
            theta: 0.01,
            max_tx: 2,
            duplex: Duplex::Full,
        }
    }

    fn budget(db: f64, ut: f64) -> LinkBudget<f64> {
        LinkBudget::from_db([db, db, db, db, db, ut, ut, ut])
    }

    fn cfg(paths: usize, blocks: usize) -> SimConfig<f64> {
        SimConfig {
            num_blocks: blocks,
            num_paths: paths,
            arrival_rate: 0.0,
            seed: 11,
            queue_model: QueueModel::N1,
            schedule: Schedule::default(),
            sir_model: SirModel::InterferenceLimited,
        }
    }

    #[test]
    fn perfect_channel_serves_every_block() {
        // huge SNR, negligible interference
        let p = params();
        let paths = simulate_service_paths(&p, &budget(-60.0, 300.0), &[0.2, 0.5, 0.3], &cfg(300, 50)).unwrap();
        assert!(paths.totals.iter().all(|&s| s == 25.0 * 50.0));
        let ec = empirical_ec(&paths, 0.3, 1).unwrap();
        assert!((ec.ec - 25.0).abs() < 1e-9);
    }

    #[test]
    fn dead_channel_serves_nothing() {
        let p = params();
        let paths = simulate_service_paths(&p, &budget(250.0, 20.0), &[0.2, 0.5, 0.3], &cfg(300, 50)).unwrap();
        assert!(paths.totals.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn deterministic_under_seed() {
        let p = params();
        let b = LinkBudget::from_db([90.7, 80.9, 83.0, 85.4, 107.0, 110.0, 108.0, 105.0]);
        let a = simulate_service_paths(&p, &b, &[0.1, 0.8, 0.1], &cfg(1000, 100)).unwrap();
        let c = simulate_service_paths(&p, &b, &[0.1, 0.8, 0.1], &cfg(1000, 100)).unwrap();
        assert_eq!(a, c);
        assert_eq!(a.periods.total() as usize, a.periods.total() as usize);
    }

    #[test]
    fn deterministic_ec_is_rate() {
        let paths = ServicePaths { totals: vec![30.0; 10], blocks: 10, periods: PeriodStats::default(), queue: None };
        for th in [0.01, 0.5, 3.0] {
            let e = empirical_ec(&paths, th, 0).unwrap();
            assert!((e.ec - 3.0f64).abs() < 1e-12);
        }
        let one = ServicePaths { totals: vec![5.0], blocks: 1, periods: PeriodStats::default(), queue: None };
        assert!(empirical_ec(&one, 0.1f64, 0).unwrap().ci.is_none());
    }

    #[test]
    fn empirical_ec_decreasing_in_theta() {
        let p = params();
        let b = LinkBudget::from_db([90.7, 80.9, 83.0, 85.4, 107.0, 110.0, 108.0, 105.0]);
        let mut p2 = p.clone();
        p2.rate = 4.0;
        let paths = simulate_service_paths(&p2, &b, &[0.1, 0.8, 0.1], &cfg(2000, 200)).unwrap();
        let mut prev = f64::INFINITY;
        for k in 1..30 {
            let e = empirical_ec_point(&paths.totals, 0.002 * k as f64, paths.blocks);
            assert!(e <= prev);
            prev = e;
        }
    }

    #[test]
    fn detection_frequencies_sum_to_one() {
        let f = empirical_detection([90.7f64, 80.9, 85.4], 1.0, ThresholdRule::Midpoint, 20_000, 3).unwrap();
        for row in f {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let z = empirical_detection([90.7f64, 80.9, 85.4], 0.0, ThresholdRule::Midpoint, 20_000, 3).unwrap();
        assert_eq!(z[1], [0.0, 1.0, 0.0]);
        assert!(empirical_detection([90.7f64, 80.9, 85.4], 1.0, ThresholdRule::Midpoint, 10, 3).is_err());
    }

    #[test]
    fn queue_report_drops_only_for_n2() {
        let p = params();
        let b = LinkBudget::from_db([90.7, 80.9, 83.0, 85.4, 107.0, 110.0, 108.0, 105.0]);
        let mut p2 = p.clone();
        p2.rate = 3.0;
        p2.block_len = 1;
        let mut c = cfg(256, 200);
        c.arrival_rate = 2.0;
        let n1 = simulate_service_paths(&p2, &b, &[0.1, 0.8, 0.1], &c).unwrap();
        c.queue_model = QueueModel::N2;
        let n2 = simulate_service_paths(&p2, &b, &[0.1, 0.8, 0.1], &c).unwrap();
        assert_eq!(n1.totals, n2.totals);
        let (q1, q2) = (n1.queue.unwrap(), n2.queue.unwrap());
        assert!(n1.periods.outage > 0);
        assert_eq!(q1.dropped, 0.0);
        assert!(q2.dropped > 0.0);
        assert!(q2.mean_backlog <= q1.mean_backlog);
    }
}
