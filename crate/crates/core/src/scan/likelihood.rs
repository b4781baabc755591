//! Bernoulli log-likelihoods at their closed-form maxima.
//!
//! Binomial coefficients are omitted throughout since they cancel in the
//! likelihood ratio. `0 * ln 0` is taken as `0`.

use serde::{Deserialize, Serialize};

/// `x * ln(x)` with the `0 * ln 0 = 0` convention.
pub fn xlogx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

/// `k * ln(k / n)` with the `0 * ln 0 = 0` convention.
fn term(k: f64, n: f64) -> f64 {
    if k > 0.0 {
        k * (k / n).ln()
    } else {
        0.0
    }
}

/// Maximized log-likelihood of a single rate over `n` labels with `p` positives.
pub fn loglik_h0(p: u64, n: u64) -> f64 {
    debug_assert!(p <= n && n >= 1);
    let (p, n) = (p as f64, n as f64);
    term(p, n) + term(n - p, n)
}

/// Maximized log-likelihood of separate inside/outside rates.
///
/// Returns `None` when the inside set is empty or covers every object, since
/// one of the two rates is then undefined.
pub fn loglik_h1(p_in: u64, n_in: u64, p: u64, n: u64) -> Option<f64> {
    debug_assert!(p_in <= n_in && p_in <= p && p <= n);
    if n_in == 0 || n_in >= n {
        return None;
    }
    let n_out = n - n_in;
    let p_out = p - p_in;
    debug_assert!(p_out <= n_out);
    let (p_in, n_in, p_out, n_out) = (p_in as f64, n_in as f64, p_out as f64, n_out as f64);
    Some(term(p_in, n_in) + term(n_in - p_in, n_in) + term(p_out, n_out) + term(n_out - p_out, n_out))
}

/// Which rate differences count as evidence.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Any difference between inside and outside rates.
    #[default]
    TwoSided,
    /// Only inside rates above the outside rate.
    High,
    /// Only inside rates below the outside rate.
    Low,
}

/// A scan statistic evaluated from the number of objects inside a candidate
/// and how many of them are positive, for fixed dataset totals.
pub trait ScanStatistic: Sync {
    /// Log likelihood ratio of a candidate; `0` means no evidence.
    fn log_ratio(&self, positives_inside: u32, inside: u32) -> f64;
}

/// Bernoulli statistic for fixed totals, backed by an `x ln x` table so that
/// each evaluation is a handful of lookups.
#[derive(Debug, Clone)]
pub struct BernoulliStatistic {
    positives: u32,
    total: u32,
    direction: Direction,
    xlogx: Vec<f64>,
    loglik_h0: f64,
}

impl BernoulliStatistic {
    pub fn new(positives: u32, total: u32, direction: Direction) -> Self {
        assert!(positives <= total, "more positives than labels");
        let xlogx: Vec<f64> = (0..=total).map(|k| xlogx(k as f64)).collect();
        let t = total as usize;
        let p = positives as usize;
        let loglik_h0 = xlogx[p] + xlogx[t - p] - xlogx[t];
        Self {
            positives,
            total,
            direction,
            xlogx,
            loglik_h0,
        }
    }

    pub fn positives(&self) -> u32 {
        self.positives
    }

    pub fn total(&self) -> u32 {
        self.total
    }

    pub fn loglik_h0(&self) -> f64 {
        self.loglik_h0
    }

    /// Table-based counterpart of [`loglik_h1`].
    pub fn loglik_h1(&self, positives_inside: u32, inside: u32) -> Option<f64> {
        if inside == 0 || inside >= self.total {
            return None;
        }
        let t = &self.xlogx;
        let (pi, ni) = (positives_inside as usize, inside as usize);
        let (p, n) = (self.positives as usize, self.total as usize);
        let no = n - ni;
        let po = p - pi;
        Some(t[pi] + t[ni - pi] - t[ni] + t[po] + t[no - po] - t[no])
    }
}

impl ScanStatistic for BernoulliStatistic {
    #[inline]
    fn log_ratio(&self, positives_inside: u32, inside: u32) -> f64 {
        let Some(h1) = self.loglik_h1(positives_inside, inside) else {
            return 0.0;
        };
        let outside = (self.total - inside) as u64;
        let pos_out = (self.positives - positives_inside) as u64;
        // Compare the rates without dividing: p_in / n_in vs p_out / n_out.
        let lhs = positives_inside as u64 * outside;
        let rhs = pos_out * inside as u64;
        let keep = match self.direction {
            Direction::TwoSided => true,
            Direction::High => lhs > rhs,
            Direction::Low => lhs < rhs,
        };
        if keep && lhs != rhs {
            (h1 - self.loglik_h0).max(0.0)
        } else {
            0.0
        }
    }
}
