//! Indifference prices of a nontraded claim under exponential utility.
//!
//! Two prices are produced. The static price discards the traded asset:
//!
//! ```text
//! s = -(1/eta) ln E[exp(-eta F(X_T))],
//! ```
//!
//! the entropic certainty value of the claim under the physical measure.
//! The dynamic price accounts for partial hedging through the correlated
//! asset and runs at the reduced aversion `k = eta beta2^2 / beta_sq`:
//!
//! ```text
//! p(t, x) = -(1/k) ln ( E[w exp(-k F(Y_T))] / E[w] ),
//! w = exp( -(beta2^2 / (2 beta_sq^2)) int_t^T g(r, Y_r)^2 dr ),
//! ```
//!
//! with `Y` the drift-modified process of [`crate::sde`]. The weights are
//! kept in log space and self-normalized, so only the ratio is ever
//! formed. For constant `g` the weight is deterministic and drops out.
//!
//! An equivalent representation reweights paths of the physical process
//! `X` by the Girsanov kernel of the drift change; it is exposed for
//! cross-checks rather than as a second production pricer.
//!
//! When the risk process is geometric with constant `g`, `ln(Y_T / x)` is
//! Gaussian and the price reduces to a one-dimensional integral
//! `I(t, x) = E[exp(-k F(x e^Z))]`, evaluated by Gauss-Hermite
//! quadrature, or in closed form for quadratic-in-log payoffs.

use crate::error::{Error, Result};
use crate::model::{
    derive_constants, payoff_eval, MarketSpec, PayoffKind, PayoffSpec, RiskProcessSpec,
};
use crate::numeric::{log_mean_exp, log_ratio_self_normalized, pairwise_sum};
use crate::quad::GaussHermite;
use crate::sde::{antithetic_map, PathStepper, SimOptions, TimeGrid};
use rayon::prelude::*;

/// Monte Carlo sampling plan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub antithetic: bool,
}

impl McConfig {
    fn check(&self) -> Result<()> {
        if self.n_paths < 2 {
            return Err(Error::Parameter(
                "Monte Carlo pricing needs n_paths >= 2 for a standard error".into(),
            ));
        }
        if self.n_steps == 0 {
            return Err(Error::Parameter("n_steps must be >= 1".into()));
        }
        if self.antithetic && self.n_paths % 2 != 0 {
            return Err(Error::Parameter(
                "antithetic pairing requires an even number of paths".into(),
            ));
        }
        Ok(())
    }

    fn sim_options(&self) -> SimOptions {
        SimOptions {
            antithetic: self.antithetic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriceMethod {
    Mc,
    ClosedForm,
    Pde,
}

/// A price with its sampling uncertainty. Deterministic methods carry
/// `std_error = 0` and `n_paths = 0`.
#[derive(Debug, Clone)]
pub struct PriceEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub method: PriceMethod,
    /// Effective sample size of the self-normalized weights, when they
    /// are nontrivial.
    pub ess: Option<f64>,
    /// Largest exponent seen inside the log-sum-exp, for conditioning
    /// diagnostics.
    pub max_exponent: f64,
    pub warnings: Vec<String>,
}

impl PriceEstimate {
    fn exact(value: f64, method: PriceMethod) -> Self {
        PriceEstimate {
            value,
            std_error: 0.0,
            n_paths: 0,
            method,
            ess: None,
            max_exponent: 0.0,
            warnings: Vec::new(),
        }
    }
}

/// Terminal law of the geometric risk process under the modified drift:
/// `ln(Y_T / x) ~ N(a, b_sq)` over the remaining horizon `tau`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeomLaw {
    pub a: f64,
    pub b_sq: f64,
    pub tau: f64,
}

/// Builds the Gaussian terminal law. Requires a geometric risk process
/// and a constant drift rate; anything else has no such reduction.
pub fn geom_law(m: &MarketSpec, r: &RiskProcessSpec, t: f64) -> Result<GeomLaw> {
    let d = derive_constants(m)?;
    let (mu, nu) = match r {
        RiskProcessSpec::Geometric { mu, nu, .. } => (*mu, *nu),
        _ => {
            return Err(Error::Parameter(
                "the Gaussian price reduction needs a geometric risk process".into(),
            ))
        }
    };
    let alpha = m.drift.constant_rate().ok_or_else(|| {
        Error::Parameter("the Gaussian price reduction needs a constant drift rate".into())
    })?;
    let tau = m.horizon - t;
    if tau < 0.0 {
        return Err(Error::Parameter(format!(
            "evaluation time {t} lies beyond the horizon {}",
            m.horizon
        )));
    }
    Ok(GeomLaw {
        a: (mu - nu * alpha * m.beta1 / d.beta_sq - 0.5 * nu * nu) * tau,
        b_sq: nu * nu * tau,
        tau,
    })
}

// ==================== path functionals ====================

/// Per-path terminal record: payoff exponent pieces accumulated while
/// streaming one path, never materializing the path itself.
struct TermSample {
    /// Terminal state of the simulated process.
    terminal: f64,
    /// ln of the path weight (0 when weights are constant and skipped).
    log_weight: f64,
}

/// Streams the modified process Y from (t, x) and accumulates the killing
/// integral at left endpoints. Constant `g` short-circuits the weight.
fn sample_terminal_y(
    m: &MarketSpec,
    r: &RiskProcessSpec,
    grid: TimeGrid,
    x: f64,
    cfg: &McConfig,
) -> Result<Vec<TermSample>> {
    let d = derive_constants(m)?;
    let kill_coef = d.beta_sq.powi(-2) * m.beta2 * m.beta2 / 2.0;
    let g_const = m.drift.constant_rate().is_some();
    let r_at = r.with_x0(x);
    let dt = grid.dt();
    (0..cfg.n_paths)
        .into_par_iter()
        .map(|pi| -> Result<TermSample> {
            let (stream, neg) = antithetic_map(pi, cfg.n_paths, cfg.sim_options());
            let mut st = PathStepper::new(Some(m), &r_at, grid, cfg.seed, stream, neg, false, true)?;
            let mut int_g2 = 0.0;
            for _ in 0..grid.n_steps {
                if !g_const {
                    let g = m.drift.eval(st.t_current(), st.y_current());
                    int_g2 += g * g * dt;
                }
                st.advance()?;
            }
            Ok(TermSample {
                terminal: st.y_current(),
                log_weight: if g_const { 0.0 } else { -kill_coef * int_g2 },
            })
        })
        .collect()
}

/// Streams the physical process X and accumulates the Girsanov kernel of
/// the drift change plus the killing integral, all at left endpoints.
fn sample_terminal_x_girsanov(
    m: &MarketSpec,
    r: &RiskProcessSpec,
    grid: TimeGrid,
    x: f64,
    cfg: &McConfig,
) -> Result<Vec<TermSample>> {
    let d = derive_constants(m)?;
    let kill_coef = d.beta_sq.powi(-2) * m.beta2 * m.beta2 / 2.0;
    let shift_coef = m.beta1 / d.beta_sq;
    let r_at = r.with_x0(x);
    let dt = grid.dt();
    (0..cfg.n_paths)
        .into_par_iter()
        .map(|pi| -> Result<TermSample> {
            let (stream, neg) = antithetic_map(pi, cfg.n_paths, cfg.sim_options());
            let mut st = PathStepper::new(Some(m), &r_at, grid, cfg.seed, stream, neg, true, false)?;
            let mut lw = 0.0;
            for _ in 0..grid.n_steps {
                let g = m.drift.eval(st.t_current(), st.x_current());
                let u = shift_coef * g;
                let out = st.advance()?;
                lw += -u * out.dw - 0.5 * u * u * dt - kill_coef * g * g * dt;
            }
            Ok(TermSample {
                terminal: st.x_current(),
                log_weight: lw,
            })
        })
        .collect()
}

/// Streams the physical process X with no reweighting.
fn sample_terminal_x(
    r: &RiskProcessSpec,
    grid: TimeGrid,
    x: f64,
    cfg: &McConfig,
) -> Result<Vec<TermSample>> {
    let r_at = r.with_x0(x);
    (0..cfg.n_paths)
        .into_par_iter()
        .map(|pi| -> Result<TermSample> {
            let (stream, neg) = antithetic_map(pi, cfg.n_paths, cfg.sim_options());
            let mut st = PathStepper::new(None, &r_at, grid, cfg.seed, stream, neg, true, false)?;
            for _ in 0..grid.n_steps {
                st.advance()?;
            }
            Ok(TermSample {
                terminal: st.x_current(),
                log_weight: 0.0,
            })
        })
        .collect()
}

fn payoff_exponents(f: &PayoffSpec, samples: &[TermSample], rate: f64) -> Result<Vec<f64>> {
    samples
        .iter()
        .map(|s| Ok(s.log_weight - rate * payoff_eval(f, s.terminal)?))
        .collect()
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        hi
    } else {
        hi + (lo - hi).exp().ln_1p()
    }
}

/// Merges each antithetic pair into the log of the pair average, halving
/// the array. Without this the error statistics would treat the two
/// members as independent and miss the pairing's variance reduction.
fn fold_pairs(v: &[f64]) -> Vec<f64> {
    let half = v.len() / 2;
    (0..half)
        .map(|i| log_add_exp(v[i], v[i + half]) - std::f64::consts::LN_2)
        .collect()
}

fn maybe_fold(cfg: &McConfig, v: Vec<f64>) -> Vec<f64> {
    if cfg.antithetic {
        fold_pairs(&v)
    } else {
        v
    }
}

// ==================== prices ====================

/// Static indifference price `s` at aversion `eta`, by simulation of the
/// physical process from (t, x).
pub fn static_price(
    f: &PayoffSpec,
    r: &RiskProcessSpec,
    t: f64,
    x: f64,
    eta: f64,
    horizon: f64,
    cfg: &McConfig,
) -> Result<PriceEstimate> {
    cfg.check()?;
    if !(eta > 0.0) {
        return Err(Error::Parameter(format!(
            "risk aversion must be positive, got {eta}"
        )));
    }
    if t == horizon {
        return Ok(PriceEstimate::exact(payoff_eval(f, x)?, PriceMethod::Mc));
    }
    let grid = TimeGrid::new(t, horizon, cfg.n_steps)?;
    let samples = sample_terminal_x(r, grid, x, cfg)?;
    let la = maybe_fold(cfg, payoff_exponents(f, &samples, eta)?);
    let lme = log_mean_exp(&la);
    if !lme.value.is_finite() {
        return Err(Error::numerical(
            "static_price",
            format!(
                "log-mean-exp degenerated (max exponent {:.3e}); the payoff tail \
                 overwhelms the aversion level",
                lme.max_exponent
            ),
        ));
    }
    Ok(PriceEstimate {
        value: -lme.value / eta,
        std_error: lme.std_error / eta,
        n_paths: cfg.n_paths,
        method: PriceMethod::Mc,
        ess: None,
        max_exponent: lme.max_exponent,
        warnings: Vec::new(),
    })
}

fn ratio_price(la: &[f64], lb: &[f64], k: f64, n_paths: usize) -> Result<PriceEstimate> {
    let lr = log_ratio_self_normalized(la, lb);
    if !lr.value.is_finite() {
        return Err(Error::numerical(
            "dynamic_price",
            format!(
                "self-normalized log-ratio degenerated (max exponent {:.3e})",
                lr.max_exponent
            ),
        ));
    }
    let mut warnings = Vec::new();
    if lr.ess < 0.1 * la.len() as f64 {
        warnings.push(format!(
            "weight degeneracy: effective sample size {:.1} out of {} samples; \
             the drift-rate spread concentrates nearly all weight on few paths",
            lr.ess,
            la.len()
        ));
    }
    Ok(PriceEstimate {
        value: -lr.value / k,
        std_error: lr.std_error / k,
        n_paths,
        method: PriceMethod::Mc,
        ess: Some(lr.ess),
        max_exponent: lr.max_exponent,
        warnings,
    })
}

/// Dynamic indifference price `p(t, x)` by Monte Carlo over the modified
/// process Y with self-normalized log-weights.
pub fn dynamic_price_mc(
    f: &PayoffSpec,
    m: &MarketSpec,
    r: &RiskProcessSpec,
    t: f64,
    x: f64,
    cfg: &McConfig,
) -> Result<PriceEstimate> {
    cfg.check()?;
    let d = derive_constants(m)?;
    if t == m.horizon {
        return Ok(PriceEstimate::exact(payoff_eval(f, x)?, PriceMethod::Mc));
    }
    let grid = TimeGrid::new(t, m.horizon, cfg.n_steps)?;
    let samples = sample_terminal_y(m, r, grid, x, cfg)?;
    let la = maybe_fold(cfg, payoff_exponents(f, &samples, d.k)?);
    let lb = maybe_fold(cfg, samples.iter().map(|s| s.log_weight).collect());
    ratio_price(&la, &lb, d.k, cfg.n_paths)
}

/// Same price through the equivalent change of measure on the physical
/// process X. Kept for cross-route agreement checks; the weight carries
/// the Girsanov kernel on top of the killing integral, so its variance
/// is higher than the modified-drift route's.
pub fn dynamic_price_mc_girsanov(
    f: &PayoffSpec,
    m: &MarketSpec,
    r: &RiskProcessSpec,
    t: f64,
    x: f64,
    cfg: &McConfig,
) -> Result<PriceEstimate> {
    cfg.check()?;
    let d = derive_constants(m)?;
    if t == m.horizon {
        return Ok(PriceEstimate::exact(payoff_eval(f, x)?, PriceMethod::Mc));
    }
    let grid = TimeGrid::new(t, m.horizon, cfg.n_steps)?;
    let samples = sample_terminal_x_girsanov(m, r, grid, x, cfg)?;
    let la = maybe_fold(cfg, payoff_exponents(f, &samples, d.k)?);
    let lb = maybe_fold(cfg, samples.iter().map(|s| s.log_weight).collect());
    ratio_price(&la, &lb, d.k, cfg.n_paths)
}

// ==================== geometric quadrature ====================

/// ln I and d(ln I)/dx for `I(x) = E[exp(-k F(x e^Z))]`, `Z ~ N(a, b^2)`.
///
/// The derivative uses the Gaussian integration-by-parts identity
/// `d/d(ln x) E[h(ln x + Z)] = E[h(ln x + Z)(Z - a)] / b^2`, which needs
/// no derivative of the payoff. Exponents are normalized by their max, so
/// the ratio survives strongly negative payoff exponents.
pub fn log_i_with_dlog(
    f: &PayoffSpec,
    geom: &GeomLaw,
    k: f64,
    x: f64,
    nodes: usize,
) -> Result<(f64, f64)> {
    if !(x > 0.0) {
        return Err(Error::Parameter(format!(
            "geometric quadrature needs x > 0, got {x}"
        )));
    }
    if geom.b_sq <= 0.0 {
        return Err(Error::Parameter(
            "the quadrature derivative needs b_sq > 0 (strictly before the horizon)".into(),
        ));
    }
    let gh = GaussHermite::new(nodes)?;
    let b = geom.b_sq.sqrt();
    let scale = std::f64::consts::SQRT_2 * b;
    let n = gh.nodes.len();
    let mut le = Vec::with_capacity(n);
    for &zi in &gh.nodes {
        let z = geom.a + scale * zi;
        le.push(-k * payoff_eval(f, x * z.exp())?);
    }
    let le_max = le.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut den = 0.0;
    let mut num = 0.0;
    let mut wsum = 0.0;
    for i in 0..n {
        let wexp = gh.weights[i] * (le[i] - le_max).exp();
        den += wexp;
        num += wexp * (scale * gh.nodes[i]);
        wsum += gh.weights[i];
    }
    // den/wsum is the mean of exp(le - le_max) under the Gaussian.
    let log_i = le_max + (den / wsum).ln();
    let dlog_dx = num / (geom.b_sq * den * x);
    Ok((log_i, dlog_dx))
}

/// Closed form of ln I for the quadratic-in-log payoff
/// `F(x) = c (1 + (ln x)^2)`:
///
/// ```text
/// e^{kc} I(t, x) = (1 + 2kc b^2)^{-1/2} exp( -kc (ln x + a)^2 / (1 + 2kc b^2) ),
/// ```
///
/// the Gaussian square-completion with cross term `+2 a ln x`; it is
/// pinned against quadrature in the tests. Requires `1 + 2kc b^2 > 0`,
/// otherwise the expectation diverges.
pub fn log_i_logquad(c: f64, geom: &GeomLaw, k: f64, x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::PayoffDomain {
            payoff: "quadratic-in-log".into(),
            x,
        });
    }
    let denom = 1.0 + 2.0 * k * c * geom.b_sq;
    if denom <= 0.0 {
        return Err(Error::numerical(
            "log_i_logquad",
            format!(
                "Gaussian expectation diverges: 1 + 2kc b^2 = {denom:.3e} <= 0 \
                 (concave-in-log payoff too steep for this horizon)"
            ),
        ));
    }
    let w = x.ln() + geom.a;
    Ok(-k * c - 0.5 * denom.ln() - k * c * w * w / denom)
}

/// d(ln I)/dx of the closed form above.
pub fn dlog_i_logquad(c: f64, geom: &GeomLaw, k: f64, x: f64) -> Result<f64> {
    let denom = 1.0 + 2.0 * k * c * geom.b_sq;
    if denom <= 0.0 || !(x > 0.0) {
        log_i_logquad(c, geom, k, x)?;
    }
    Ok(-2.0 * k * c * (x.ln() + geom.a) / (denom * x))
}

/// Dynamic price in the geometric reduction: `p = -(1/k) ln I(t, x)`.
///
/// Quadratic-in-log payoffs use the closed form; everything else goes
/// through Gauss-Hermite quadrature with a node-doubling convergence
/// check (`nodes` vs `2 nodes + 1`), whose failure is an error rather
/// than a silently unconverged price.
pub fn dynamic_price_geometric(
    f: &PayoffSpec,
    geom: &GeomLaw,
    k: f64,
    x: f64,
    nodes: usize,
) -> Result<PriceEstimate> {
    if !(k > 0.0) {
        return Err(Error::Parameter(format!(
            "reduced aversion must be positive, got {k}"
        )));
    }
    if geom.tau == 0.0 || geom.b_sq == 0.0 {
        // Degenerate law: Z collapses on a (zero for tau = 0), so the
        // price is the payoff at the drifted point.
        let value = payoff_eval(f, x * geom.a.exp())?;
        return Ok(PriceEstimate::exact(value, PriceMethod::ClosedForm));
    }
    if let PayoffKind::LogQuad { c } = f.kind {
        let value = -log_i_logquad(c, geom, k, x)? / k;
        return Ok(PriceEstimate::exact(value, PriceMethod::ClosedForm));
    }
    let b = geom.b_sq.sqrt();
    let price_at = |n: usize| -> Result<f64> {
        let gh = GaussHermite::new(n)?;
        let mut log_i = f64::NAN;
        let scale = std::f64::consts::SQRT_2 * b;
        let mut le = Vec::with_capacity(n);
        for &zi in &gh.nodes {
            let z = geom.a + scale * zi;
            le.push(-k * payoff_eval(f, x * z.exp())?);
        }
        let le_max = le.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut den = 0.0;
        let mut wsum = 0.0;
        for i in 0..gh.nodes.len() {
            den += gh.weights[i] * (le[i] - le_max).exp();
            wsum += gh.weights[i];
        }
        if den > 0.0 {
            log_i = le_max + (den / wsum).ln();
        }
        Ok(-log_i / k)
    };
    let p_lo = price_at(nodes)?;
    let p_hi = price_at(2 * nodes + 1)?;
    let tol = 1e-10 + 1e-8 * p_hi.abs();
    if !(p_lo - p_hi).abs().is_finite() || (p_lo - p_hi).abs() > tol {
        return Err(Error::numerical(
            "dynamic_price_geometric",
            format!(
                "quadrature did not converge: {nodes} nodes give {p_lo:.12e}, \
                 {} nodes give {p_hi:.12e}; the payoff is too rough for this rule",
                2 * nodes + 1
            ),
        ));
    }
    Ok(PriceEstimate::exact(p_hi, PriceMethod::ClosedForm))
}

// ==================== sensitivities ====================

/// A price slope with an uncertainty attached. `std_error` is a jackknife
/// estimate for the common-random-number Monte Carlo form and a
/// combined-error upper bound for the generic form.
#[derive(Debug, Clone)]
pub struct SensitivityEstimate {
    pub value: f64,
    pub std_error: f64,
    pub warnings: Vec<String>,
}

/// Central finite difference `(p(x+h) - p(x-h)) / 2h` of an arbitrary
/// pricer. A Monte Carlo pricer should fix its seed inside the closure so
/// both evaluations share random numbers. When the combined sampling
/// error at step `h` rivals the slope itself, a warning suggests a wider
/// step.
pub fn price_sensitivity<P>(pricer: P, x: f64, h: f64) -> Result<SensitivityEstimate>
where
    P: Fn(f64) -> Result<PriceEstimate>,
{
    if !(h > 0.0) {
        return Err(Error::Parameter(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let hi = pricer(x + h)?;
    let lo = pricer(x - h)?;
    let value = (hi.value - lo.value) / (2.0 * h);
    let noise = (hi.std_error * hi.std_error + lo.std_error * lo.std_error).sqrt() / (2.0 * h);
    let mut warnings = Vec::new();
    if noise > 0.25 * value.abs().max(1e-12) {
        let h_suggest = h * noise / (0.25 * value.abs().max(1e-12));
        warnings.push(format!(
            "finite-difference step {h:.3e} sits at or below the sampling noise floor \
             (slope {value:.3e}, noise bound {noise:.3e}); try h around {h_suggest:.3e} \
             or more paths"
        ));
    }
    Ok(SensitivityEstimate {
        value,
        std_error: noise,
        warnings,
    })
}

/// log-ratio ln(mean e^la / mean e^lb) over the sample with [lo, hi)
/// removed, for jackknife blocks.
fn log_ratio_excluding(la: &[f64], lb: &[f64], lo: usize, hi: usize) -> f64 {
    let lse = |v: &[f64]| -> f64 {
        let m = v
            .iter()
            .enumerate()
            .filter(|(i, _)| *i < lo || *i >= hi)
            .map(|(_, &x)| x)
            .fold(f64::NEG_INFINITY, f64::max);
        let terms: Vec<f64> = v
            .iter()
            .enumerate()
            .filter(|(i, _)| *i < lo || *i >= hi)
            .map(|(_, &x)| (x - m).exp())
            .collect();
        m + pairwise_sum(&terms).ln()
    };
    lse(la) - lse(lb)
}

/// dp/dx of the dynamic Monte Carlo price by common-random-number central
/// differences: both shifted starts replay identical Brownian streams, and
/// the jackknife over path blocks gives the standard error of the slope
/// itself rather than of the two prices separately.
pub fn dynamic_price_sensitivity_mc(
    f: &PayoffSpec,
    m: &MarketSpec,
    r: &RiskProcessSpec,
    t: f64,
    x: f64,
    h: f64,
    cfg: &McConfig,
) -> Result<SensitivityEstimate> {
    cfg.check()?;
    if !(h > 0.0) {
        return Err(Error::Parameter(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let d = derive_constants(m)?;
    let grid = TimeGrid::new(t, m.horizon, cfg.n_steps)?;
    let mut sides = Vec::with_capacity(2);
    for xs in [x + h, x - h] {
        let samples = sample_terminal_y(m, r, grid, xs, cfg)?;
        let la = maybe_fold(cfg, payoff_exponents(f, &samples, d.k)?);
        let lb = maybe_fold(cfg, samples.iter().map(|s| s.log_weight).collect());
        sides.push((la, lb));
    }
    let (la_p, lb_p) = &sides[0];
    let (la_m, lb_m) = &sides[1];
    let slope_excluding = |lo: usize, hi: usize| -> f64 {
        let lr_p = log_ratio_excluding(la_p, lb_p, lo, hi);
        let lr_m = log_ratio_excluding(la_m, lb_m, lo, hi);
        -(lr_p - lr_m) / (2.0 * h * d.k)
    };
    let value = slope_excluding(0, 0);
    let se = crate::numeric::jackknife_se(la_p.len(), 50, slope_excluding);
    let mut warnings = Vec::new();
    if se > 0.25 * value.abs().max(1e-12) {
        warnings.push(format!(
            "slope {value:.3e} is within jackknife noise {se:.3e}; widen h or add paths"
        ));
    }
    Ok(SensitivityEstimate {
        value,
        std_error: se,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DriftSpec, GrowthClass, PayoffSpec};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn market(beta1: f64, beta2: f64, eta: f64, drift: DriftSpec) -> MarketSpec {
        MarketSpec {
            beta1,
            beta2,
            eta,
            v0: 0.0,
            horizon: 1.0,
            drift,
        }
    }

    fn canonical_market() -> MarketSpec {
        market(0.2, 0.3, 1.0, DriftSpec::Constant { alpha: 0.1 })
    }

    fn geo() -> RiskProcessSpec {
        RiskProcessSpec::Geometric {
            mu: 0.05,
            nu: 0.3,
            x0: 1.0,
        }
    }

    fn cfg(n_paths: usize, seed: u64) -> McConfig {
        McConfig {
            n_paths,
            n_steps: 64,
            seed,
            antithetic: false,
        }
    }

    #[test]
    fn constant_payoff_prices_at_its_level() {
        let f = PayoffSpec::constant(5.0);
        let s = static_price(&f, &geo(), 0.0, 1.0, 1.0, 1.0, &cfg(500, 1)).unwrap();
        assert_abs_diff_eq!(s.value, 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.std_error, 0.0, epsilon = 1e-12);
        let p = dynamic_price_mc(&f, &canonical_market(), &geo(), 0.0, 1.0, &cfg(500, 1)).unwrap();
        assert_abs_diff_eq!(p.value, 5.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_payoff_passes_through_nonconstant_weights() {
        let m = market(
            0.2,
            0.3,
            1.0,
            DriftSpec::Affine {
                c0: 0.1,
                c1: 0.05,
                clip: 0.5,
            },
        );
        let p = dynamic_price_mc(&PayoffSpec::constant(-2.5), &m, &geo(), 0.0, 1.0, &cfg(2000, 3))
            .unwrap();
        assert_abs_diff_eq!(p.value, -2.5, epsilon = 1e-10);
        assert!(p.ess.unwrap() > 0.0);
    }

    #[test]
    fn bounded_payoff_price_stays_inside_its_range() {
        let f = PayoffSpec::bounded_table(vec![0.5, 1.0, 2.0], vec![1.0, 4.0, 2.0]);
        let s = static_price(&f, &geo(), 0.0, 1.0, 1.0, 1.0, &cfg(4000, 5)).unwrap();
        assert!(s.value >= 1.0 - 1e-9 && s.value <= 4.0 + 1e-9, "s = {}", s.value);
        let p =
            dynamic_price_mc(&f, &canonical_market(), &geo(), 0.0, 1.0, &cfg(4000, 5)).unwrap();
        assert!(p.value >= 1.0 - 1e-9 && p.value <= 4.0 + 1e-9, "p = {}", p.value);
    }

    #[test]
    fn static_price_matches_deterministic_integral_oracle() {
        // For geometric X and F = ln(x + 1), E[e^{-F}] = E[1/(X_T + 1)]
        // is a plain lognormal integral, evaluated independently of the
        // path machinery.
        let f = PayoffSpec::log_shift(1.0);
        let est = static_price(&f, &geo(), 0.0, 1.0, 1.0, 1.0, &cfg(200_000, 7)).unwrap();
        let gh = GaussHermite::new(127).unwrap();
        let mean_log = 0.05 - 0.5 * 0.09;
        let integral = gh.expect_normal(mean_log, 0.3, |z| 1.0 / (z.exp() + 1.0));
        let oracle = -integral.ln();
        assert!(
            (est.value - oracle).abs() < 3.0 * est.std_error,
            "mc {} vs oracle {oracle} (se {})",
            est.value,
            est.std_error
        );
    }

    #[test]
    fn zero_correlation_collapses_dynamic_onto_static() {
        // beta1 = 0 makes k = eta and Y bit-identical to X; constant g
        // cancels entirely, so both prices run the same statistic on the
        // same samples.
        let m = market(0.0, 0.3, 1.0, DriftSpec::Constant { alpha: 0.1 });
        let f = PayoffSpec::log_shift(1.0);
        let c = cfg(20_000, 11);
        let p = dynamic_price_mc(&f, &m, &geo(), 0.0, 1.0, &c).unwrap();
        let s = static_price(&f, &geo(), 0.0, 1.0, 1.0, 1.0, &c).unwrap();
        assert_abs_diff_eq!(p.value, s.value, epsilon = 1e-12);
    }

    #[test]
    fn mc_agrees_with_quadrature_on_the_geometric_reduction() {
        let m = canonical_market();
        let f = PayoffSpec::log_quad(0.5);
        let d = derive_constants(&m).unwrap();
        let law = geom_law(&m, &geo(), 0.0).unwrap();
        let exact = dynamic_price_geometric(&f, &law, d.k, 1.0, 127).unwrap();
        let mc = dynamic_price_mc(&f, &m, &geo(), 0.0, 1.0, &cfg(200_000, 13)).unwrap();
        assert!(
            (mc.value - exact.value).abs() < 3.0 * mc.std_error,
            "mc {} vs exact {} (se {})",
            mc.value,
            exact.value,
            mc.std_error
        );
    }

    #[test]
    fn girsanov_route_agrees_with_modified_drift_route() {
        let m = market(
            0.2,
            0.3,
            1.0,
            DriftSpec::Affine {
                c0: 0.1,
                c1: 0.05,
                clip: 0.5,
            },
        );
        let f = PayoffSpec::log_shift(1.0);
        let a = dynamic_price_mc(&f, &m, &geo(), 0.0, 1.0, &cfg(100_000, 17)).unwrap();
        let b = dynamic_price_mc_girsanov(&f, &m, &geo(), 0.0, 1.0, &cfg(100_000, 19)).unwrap();
        let se = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
        assert!(
            (a.value - b.value).abs() < 3.0 * se,
            "modified {} vs girsanov {} (combined se {se})",
            a.value,
            b.value
        );
    }

    #[test]
    fn zero_payoff_prices_at_zero_in_the_geometric_reduction() {
        let law = geom_law(&canonical_market(), &geo(), 0.0).unwrap();
        let p = dynamic_price_geometric(&PayoffSpec::constant(0.0), &law, 9.0 / 13.0, 1.0, 127)
            .unwrap();
        assert_abs_diff_eq!(p.value, 0.0, epsilon = 1e-13);
    }

    #[test]
    fn vanishing_horizon_returns_the_payoff_itself() {
        let m = canonical_market();
        let law = geom_law(&m, &geo(), 1.0).unwrap();
        assert_eq!(law.tau, 0.0);
        let f = PayoffSpec::log_shift(1.0);
        let p = dynamic_price_geometric(&f, &law, 9.0 / 13.0, 2.0, 127).unwrap();
        assert_abs_diff_eq!(p.value, (3.0f64).ln(), epsilon = 1e-13);
        let s = static_price(&f, &geo(), 1.0, 2.0, 1.0, 1.0, &cfg(10, 1)).unwrap();
        assert_abs_diff_eq!(s.value, (3.0f64).ln(), epsilon = 1e-13);
    }

    #[test]
    fn logquad_closed_form_matches_quadrature_to_ten_digits() {
        let m = canonical_market();
        let d = derive_constants(&m).unwrap();
        let law = geom_law(&m, &geo(), 0.0).unwrap();
        for &c in &[0.25, 1.0, 3.0] {
            for &x in &[0.5, 1.0, 1.7] {
                let closed = -log_i_logquad(c, &law, d.k, x).unwrap() / d.k;
                let gh = GaussHermite::new(127).unwrap();
                let b = law.b_sq.sqrt();
                let quad = -gh.log_expect_normal(law.a, b, |z| {
                    -d.k * c * (1.0 + (x.ln() + z).powi(2))
                }) / d.k;
                assert_relative_eq!(closed, quad, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn logquad_diverging_regime_is_rejected() {
        let law = GeomLaw {
            a: 0.0,
            b_sq: 4.0,
            tau: 1.0,
        };
        // c < 0 steep enough that 1 + 2kcb^2 <= 0.
        let err = log_i_logquad(-0.5, &law, 1.0, 1.0).unwrap_err();
        assert!(matches!(err, Error::Numerical { .. }));
    }

    #[test]
    fn node_doubling_flags_a_discontinuous_payoff() {
        let f = PayoffSpec::custom("threshold", GrowthClass::Bounded, |x| {
            if x > 1.0 {
                10.0
            } else {
                0.0
            }
        });
        let law = geom_law(&canonical_market(), &geo(), 0.0).unwrap();
        let res = dynamic_price_geometric(&f, &law, 9.0 / 13.0, 1.0, 127);
        assert!(matches!(res, Err(Error::Numerical { .. })));
    }

    #[test]
    fn stein_derivative_matches_logquad_analytic_form() {
        let m = canonical_market();
        let d = derive_constants(&m).unwrap();
        let law = geom_law(&m, &geo(), 0.0).unwrap();
        let c = 0.8;
        let f = PayoffSpec::log_quad(c);
        for &x in &[0.6, 1.0, 1.9] {
            let (li, dli) = log_i_with_dlog(&f, &law, d.k, x, 127).unwrap();
            assert_relative_eq!(li, log_i_logquad(c, &law, d.k, x).unwrap(), max_relative = 1e-10);
            assert_relative_eq!(
                dli,
                dlog_i_logquad(c, &law, d.k, x).unwrap(),
                max_relative = 1e-9
            );
        }
    }

    #[test]
    fn sensitivity_of_a_constant_payoff_is_zero() {
        let m = canonical_market();
        let d = derive_constants(&m).unwrap();
        let law = geom_law(&m, &geo(), 0.0).unwrap();
        let est = price_sensitivity(
            |x| dynamic_price_geometric(&PayoffSpec::constant(3.0), &law, d.k, x, 63),
            1.0,
            1e-3,
        )
        .unwrap();
        assert_abs_diff_eq!(est.value, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn finite_difference_converges_to_the_closed_form_slope_at_second_order() {
        let m = canonical_market();
        let d = derive_constants(&m).unwrap();
        let law = geom_law(&m, &geo(), 0.0).unwrap();
        let c = 0.7;
        let x = 1.3;
        // dp/dx = -(1/k) dlnI/dx.
        let exact = -dlog_i_logquad(c, &law, d.k, x).unwrap() / d.k;
        let fd_at = |h: f64| -> f64 {
            price_sensitivity(
                |xx| {
                    Ok(PriceEstimate::exact(
                        -log_i_logquad(c, &law, d.k, xx).unwrap() / d.k,
                        PriceMethod::ClosedForm,
                    ))
                },
                x,
                h,
            )
            .unwrap()
            .value
        };
        let e1 = (fd_at(1e-2) - exact).abs();
        let e2 = (fd_at(5e-3) - exact).abs();
        assert!(e1 < 1e-4);
        let order = (e1 / e2).log2();
        assert!((order - 2.0).abs() < 0.2, "observed order {order}");
    }

    #[test]
    fn sensitivity_approaches_the_payoff_slope_near_the_horizon() {
        let m = MarketSpec {
            horizon: 1.0,
            ..canonical_market()
        };
        let d = derive_constants(&m).unwrap();
        let law = geom_law(&m, &geo(), 1.0 - 1e-7).unwrap();
        let f = PayoffSpec::log_shift(1.0);
        let x = 1.4;
        let est = price_sensitivity(
            |xx| dynamic_price_geometric(&f, &law, d.k, xx, 127),
            x,
            1e-4,
        )
        .unwrap();
        assert_relative_eq!(est.value, 1.0 / (x + 1.0), max_relative = 1e-3);
    }

    #[test]
    fn crn_monotonicity_in_the_payoff_is_exact() {
        // max(18 - x, 0) <= max(20 - x, 0) pointwise; identical seeds make
        // the price comparison deterministic, not merely statistical.
        let m = canonical_market();
        let r = RiskProcessSpec::OuPeriodic {
            c1: 1.0,
            c2: 2.0,
            mean_level: 18.0,
            period: 1.0,
            sigma0: 2.0,
            x0: 18.0,
        };
        let c = cfg(5000, 21);
        let p_lo = dynamic_price_mc(&PayoffSpec::hdd_style(18.0), &m, &r, 0.0, 18.0, &c).unwrap();
        let p_hi = dynamic_price_mc(&PayoffSpec::hdd_style(20.0), &m, &r, 0.0, 18.0, &c).unwrap();
        assert!(
            p_lo.value <= p_hi.value + 1e-12,
            "{} > {}",
            p_lo.value,
            p_hi.value
        );
    }

    #[test]
    fn crn_cash_translation_is_exact() {
        let m = canonical_market();
        let c = cfg(5000, 23);
        let f = PayoffSpec::log_shift(1.0);
        let shifted = PayoffSpec::custom("shifted-log", GrowthClass::XFPrimeBounded(1.0), |x| {
            (x + 1.0).ln() + 2.5
        });
        let p = dynamic_price_mc(&f, &m, &geo(), 0.0, 1.0, &c).unwrap();
        let q = dynamic_price_mc(&shifted, &m, &geo(), 0.0, 1.0, &c).unwrap();
        assert_abs_diff_eq!(q.value - p.value, 2.5, epsilon = 1e-10);
    }

    #[test]
    fn hedging_opportunity_never_cheapens_the_claim_below_static() {
        // g = 0: the drift carries no premium, Y = X pathwise, and the
        // ordering p >= s reduces to the power-mean inequality on shared
        // samples, so it holds to rounding.
        let m = market(0.2, 0.3, 1.0, DriftSpec::Constant { alpha: 0.0 });
        let f = PayoffSpec::hdd_style(20.0);
        let r = RiskProcessSpec::OuPeriodic {
            c1: 1.0,
            c2: 2.0,
            mean_level: 18.0,
            period: 1.0,
            sigma0: 2.0,
            x0: 18.0,
        };
        let c = cfg(10_000, 25);
        let p = dynamic_price_mc(&f, &m, &r, 0.0, 18.0, &c).unwrap();
        let s = static_price(&f, &r, 0.0, 18.0, 1.0, 1.0, &c).unwrap();
        assert!(p.value >= s.value - 1e-12, "p {} < s {}", p.value, s.value);
    }

    #[test]
    fn weight_degeneracy_raises_a_warning() {
        let m = market(
            0.2,
            0.3,
            1.0,
            DriftSpec::Affine {
                c0: 0.0,
                c1: 20.0,
                clip: 100.0,
            },
        );
        let r = RiskProcessSpec::OuPeriodic {
            c1: 0.5,
            c2: 0.0,
            mean_level: 0.0,
            period: 1.0,
            sigma0: 3.0,
            x0: 0.0,
        };
        let p = dynamic_price_mc(
            &PayoffSpec::bounded_table(vec![-1.0, 1.0], vec![0.0, 1.0]),
            &m,
            &r,
            0.0,
            0.0,
            &cfg(200, 27),
        )
        .unwrap();
        assert!(
            p.warnings.iter().any(|w| w.contains("effective sample size")),
            "warnings: {:?}",
            p.warnings
        );
        assert!(p.ess.unwrap() < 20.0);
    }

    #[test]
    fn estimates_are_bit_reproducible_and_seed_sensitive() {
        let m = canonical_market();
        let f = PayoffSpec::log_shift(1.0);
        let a = dynamic_price_mc(&f, &m, &geo(), 0.0, 1.0, &cfg(2000, 31)).unwrap();
        let b = dynamic_price_mc(&f, &m, &geo(), 0.0, 1.0, &cfg(2000, 31)).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
        let c = dynamic_price_mc(&f, &m, &geo(), 0.0, 1.0, &cfg(2000, 32)).unwrap();
        assert_ne!(a.value.to_bits(), c.value.to_bits());
    }

    #[test]
    fn antithetic_pairing_reduces_variance_on_a_monotone_payoff() {
        let m = canonical_market();
        let f = PayoffSpec::log_shift(1.0);
        let plain = dynamic_price_mc(&f, &m, &geo(), 0.0, 1.0, &cfg(20_000, 33)).unwrap();
        let anti = dynamic_price_mc(
            &f,
            &m,
            &geo(),
            0.0,
            1.0,
            &McConfig {
                antithetic: true,
                ..cfg(20_000, 33)
            },
        )
        .unwrap();
        assert!(
            anti.std_error < plain.std_error,
            "antithetic se {} vs plain {}",
            anti.std_error,
            plain.std_error
        );
    }

    #[test]
    fn crn_mc_sensitivity_matches_the_closed_form_slope() {
        let m = canonical_market();
        let d = derive_constants(&m).unwrap();
        let f = PayoffSpec::log_quad(0.5);
        let law = geom_law(&m, &geo(), 0.0).unwrap();
        let exact = -dlog_i_logquad(0.5, &law, d.k, 1.0).unwrap() / d.k;
        let est = dynamic_price_sensitivity_mc(
            &f,
            &m,
            &geo(),
            0.0,
            1.0,
            1e-2,
            &cfg(50_000, 35),
        )
        .unwrap();
        assert!(
            (est.value - exact).abs() < 3.0 * est.std_error + 1e-3,
            "mc slope {} vs exact {exact} (se {})",
            est.value,
            est.std_error
        );
    }

    #[test]
    fn tiny_steps_trigger_the_noise_floor_warning() {
        let m = canonical_market();
        let f = PayoffSpec::log_shift(1.0);
        let c = cfg(500, 37);
        let est = price_sensitivity(
            |x| dynamic_price_mc(&f, &m, &geo(), 0.0, x, &c),
            1.0,
            1e-7,
        )
        .unwrap();
        assert!(
            est.warnings.iter().any(|w| w.contains("noise floor")),
            "warnings: {:?}",
            est.warnings
        );
    }

    #[test]
    fn geom_law_rejects_nonconstant_drift_and_wrong_process() {
        let m = market(
            0.2,
            0.3,
            1.0,
            DriftSpec::Affine {
                c0: 0.1,
                c1: 0.1,
                clip: 1.0,
            },
        );
        assert!(geom_law(&m, &geo(), 0.0).is_err());
        let ou = RiskProcessSpec::OuPeriodic {
            c1: 1.0,
            c2: 0.0,
            mean_level: 0.0,
            period: 1.0,
            sigma0: 1.0,
            x0: 0.0,
        };
        assert!(geom_law(&canonical_market(), &ou, 0.0).is_err());
    }

    #[test]
    fn canonical_law_constants_come_out_right() {
        let law = geom_law(&canonical_market(), &geo(), 0.0).unwrap();
        // a = (mu - nu alpha beta1 / beta_sq - nu^2/2) tau with
        // beta_sq = 0.13.
        let expect_a = 0.05 - 0.3 * 0.1 * 0.2 / 0.13 - 0.045;
        assert_relative_eq!(law.a, expect_a, max_relative = 1e-14);
        assert_relative_eq!(law.b_sq, 0.09, max_relative = 1e-14);
    }
}
