use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Search interval and tolerance for noise calibration.
pub const SIGMA_RANGE: (f64, f64) = (0.3, 100.0);
pub const SIGMA_TOLERANCE: f64 = 1e-3;

/// Rényi orders tracked by the accountant.
pub fn default_orders() -> Vec<f64> {
    let mut orders = vec![1.25, 1.5, 1.75, 2.0];
    let mut a = 2.5;
    while a <= 64.0 {
        orders.push(a);
        a += 0.5;
    }
    orders.extend([128.0, 256.0]);
    orders
}

fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

fn log_sub(a: f64, b: f64) -> Result<f64> {
    if a < b {
        return Err(Error::Numeric("log-space subtraction went negative".into()));
    }
    if b == f64::NEG_INFINITY {
        return Ok(a);
    }
    if a == b {
        return Ok(f64::NEG_INFINITY);
    }
    let d = (a - b).exp_m1();
    if d.is_infinite() {
        return Ok(a);
    }
    Ok(d.ln() + b)
}

fn log_erfc(x: f64) -> f64 {
    let r = erfc(x);
    if r > 0.0 {
        return r.ln();
    }
    // asymptotic expansion for large positive x
    -x * x - x.ln() - 0.5 * std::f64::consts::PI.ln() + (-0.5 / (x * x) + 0.625 / x.powi(4) - 37.0 / 24.0 / x.powi(6)
        + 353.0 / 64.0 / x.powi(8))
}

fn ln_binom(n: u64, k: u64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

fn log_a_int(q: f64, sigma: f64, alpha: u64) -> f64 {
    let mut acc = f64::NEG_INFINITY;
    let (lq, l1q) = (q.ln(), (-q).ln_1p());
    for i in 0..=alpha {
        let fi = i as f64;
        let term = ln_binom(alpha, i) + fi * lq + (alpha - i) as f64 * l1q + (fi * fi - fi) / (2.0 * sigma * sigma);
        acc = log_add(acc, term);
    }
    acc
}

fn log_a_frac(q: f64, sigma: f64, alpha: f64) -> Result<f64> {
    let (mut log_a0, mut log_a1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let z0 = sigma * sigma * (1.0 / q - 1.0).ln() + 0.5;
    let (lq, l1q) = (q.ln(), (-q).ln_1p());
    let sqrt2s = std::f64::consts::SQRT_2 * sigma;
    let mut coef = 1.0f64;
    let mut i = 0u64;
    loop {
        let fi = i as f64;
        let j = alpha - fi;
        let log_coef = coef.abs().ln();
        let log_t0 = log_coef + fi * lq + j * l1q;
        let log_t1 = log_coef + j * lq + fi * l1q;
        let log_e0 = 0.5f64.ln() + log_erfc((fi - z0) / sqrt2s);
        let log_e1 = 0.5f64.ln() + log_erfc((z0 - j) / sqrt2s);
        let log_s0 = log_t0 + (fi * fi - fi) / (2.0 * sigma * sigma) + log_e0;
        let log_s1 = log_t1 + (j * j - j) / (2.0 * sigma * sigma) + log_e1;
        if coef > 0.0 {
            log_a0 = log_add(log_a0, log_s0);
            log_a1 = log_add(log_a1, log_s1);
        } else {
            log_a0 = log_sub(log_a0, log_s0)?;
            log_a1 = log_sub(log_a1, log_s1)?;
        }
        i += 1;
        if log_s0.max(log_s1) < -30.0 {
            break;
        }
        if i > 100_000 {
            return Err(Error::Numeric("fractional-order series did not converge".into()));
        }
        coef *= (alpha - fi) / (fi + 1.0);
    }
    Ok(log_add(log_a0, log_a1))
}

/// Rényi divergence of order `alpha` for one step of the Poisson-subsampled
/// Gaussian mechanism with sampling rate `q` and noise multiplier `sigma`.
pub fn rdp_subsampled_gaussian(q: f64, sigma: f64, alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::invalid(format!("sampling rate {q} outside [0, 1]")));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("noise multiplier {sigma} must be positive")));
    }
    if !(alpha > 1.0) || !alpha.is_finite() {
        return Err(Error::invalid(format!("order {alpha} must exceed 1")));
    }
    if q == 0.0 {
        return Ok(0.0);
    }
    if q == 1.0 {
        return Ok(alpha / (2.0 * sigma * sigma));
    }
    let log_a = if alpha.fract() == 0.0 {
        log_a_int(q, sigma, alpha as u64)
    } else {
        log_a_frac(q, sigma, alpha)?
    };
    let rdp = log_a / (alpha - 1.0);
    if rdp.is_nan() {
        return Err(Error::Numeric(format!("RDP undefined at q={q}, sigma={sigma}, alpha={alpha}")));
    }
    Ok(rdp.max(0.0))
}

/// Accumulated RDP at each tracked order.
#[derive(Debug, Clone, PartialEq)]
pub struct AccountantState {
    orders: Vec<f64>,
    rdp: Vec<f64>,
    steps: u64,
}

impl Default for AccountantState {
    fn default() -> Self {
        AccountantState::new(default_orders())
    }
}

impl AccountantState {
    pub fn new(orders: Vec<f64>) -> AccountantState {
        let rdp = vec![0.0; orders.len()];
        AccountantState { orders, rdp, steps: 0 }
    }

    pub fn orders(&self) -> &[f64] {
        &self.orders
    }

    pub fn rdp(&self) -> &[f64] {
        &self.rdp
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Adds `steps` compositions of the subsampled Gaussian mechanism.
    pub fn compose(&mut self, q: f64, sigma: f64, steps: u64) -> Result<()> {
        for (order, total) in self.orders.iter().zip(self.rdp.iter_mut()) {
            *total += steps as f64 * rdp_subsampled_gaussian(q, sigma, *order)?;
        }
        self.steps += steps;
        Ok(())
    }

    /// Tightest (ε, α) over the tracked orders.
    pub fn epsilon(&self, delta: f64) -> Result<(f64, f64)> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::invalid(format!("delta {delta} outside (0, 1)")));
        }
        if self.orders.is_empty() {
            return Err(Error::Empty("accountant orders"));
        }
        let log_inv = (1.0 / delta).ln();
        let mut best = (f64::INFINITY, self.orders[0]);
        for (&a, &r) in self.orders.iter().zip(&self.rdp) {
            let eps = r + log_inv / (a - 1.0);
            if eps < best.0 {
                best = (eps, a);
            }
        }
        Ok(best)
    }
}

/// ε after `steps` subsampled Gaussian steps, with the minimizing order.
pub fn epsilon_for(q: f64, sigma: f64, steps: u64, delta: f64) -> Result<(f64, f64)> {
    let mut acc = AccountantState::default();
    acc.compose(q, sigma, steps)?;
    acc.epsilon(delta)
}

/// Smallest noise multiplier in [`SIGMA_RANGE`] (to within [`SIGMA_TOLERANCE`])
/// whose spent ε after `steps` steps does not exceed `target`.
pub fn calibrate_sigma(target: f64, delta: f64, q: f64, steps: u64) -> Result<f64> {
    if !(target > 0.0) {
        return Err(Error::invalid(format!("target epsilon {target} must be positive")));
    }
    let (mut lo, mut hi) = SIGMA_RANGE;
    if epsilon_for(q, hi, steps, delta)?.0 > target {
        return Err(Error::Unreachable { target, lo, hi });
    }
    if epsilon_for(q, lo, steps, delta)?.0 <= target {
        return Ok(lo);
    }
    while hi - lo > SIGMA_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if epsilon_for(q, mid, steps, delta)?.0 <= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
