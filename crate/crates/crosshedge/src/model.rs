//! Model specifications: market, non-traded risk process, payoff, and the
//! derived aversion constants, together with validation.
//!
//! The market has one tradable asset with excess-return rate `g(t, x)`
//! (the [`DriftSpec`]) and noise loadings `beta1` on the Brownian motion
//! `W` that also drives the risk process, `beta2` on an independent `B`.
//! Two constants govern everything downstream:
//!
//! ```text
//! beta_sq = beta1^2 + beta2^2,
//! k       = eta * beta2^2 / beta_sq,
//! ```
//!
//! `k` is the reduced risk aversion at which the claim is priced: partial
//! hedging through the correlated asset lowers the effective aversion from
//! `eta` by the factor `beta2^2 / beta_sq <= 1`.

use crate::error::{Error, Result};
use std::fmt;
use std::sync::Arc;

// ==================== market ====================

/// Tradable-asset market and preference parameters.
#[derive(Debug, Clone)]
pub struct MarketSpec {
    /// Loading on the Brownian motion shared with the risk process.
    pub beta1: f64,
    /// Loading on the independent Brownian motion; must be nonzero.
    pub beta2: f64,
    /// Absolute risk aversion of the exponential utility; must be positive.
    pub eta: f64,
    /// Initial wealth.
    pub v0: f64,
    /// Terminal time `T` of the hedging problem.
    pub horizon: f64,
    /// Excess-return rate `g(t, x)` of the tradable asset.
    pub drift: DriftSpec,
}

/// The asset's excess-return rate `g(t, x)`. All variants are bounded by
/// construction, which keeps the measure changes well defined.
#[derive(Debug, Clone)]
pub enum DriftSpec {
    /// g = alpha.
    Constant { alpha: f64 },
    /// g = clamp(c0 + c1 * x, -clip, clip).
    Affine { c0: f64, c1: f64, clip: f64 },
    /// Piecewise-linear in x on a fixed grid, constant extrapolation,
    /// independent of t.
    Table { xs: Vec<f64>, values: Vec<f64> },
}

impl DriftSpec {
    #[inline]
    pub fn eval(&self, _t: f64, x: f64) -> f64 {
        match self {
            DriftSpec::Constant { alpha } => *alpha,
            DriftSpec::Affine { c0, c1, clip } => (c0 + c1 * x).clamp(-clip.abs(), clip.abs()),
            DriftSpec::Table { xs, values } => interp_linear(xs, values, x),
        }
    }

    /// Declared sup-norm bound on |g|.
    pub fn sup_norm(&self) -> f64 {
        match self {
            DriftSpec::Constant { alpha } => alpha.abs(),
            DriftSpec::Affine { clip, .. } => clip.abs(),
            DriftSpec::Table { values, .. } => {
                values.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
            }
        }
    }

    /// The constant rate, when the drift is constant.
    pub fn constant_rate(&self) -> Option<f64> {
        match self {
            DriftSpec::Constant { alpha } => Some(*alpha),
            _ => None,
        }
    }
}

/// Constants derived from the market: `beta_sq = beta1^2 + beta2^2`,
/// reduced aversion `k = eta beta2^2 / beta_sq`, and their ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedConstants {
    pub beta_sq: f64,
    pub k: f64,
    /// k / eta = beta2^2 / beta_sq, in (0, 1].
    pub aversion_ratio: f64,
}

/// Derive `beta_sq`, `k`, and `k/eta` from the market. Requires
/// `beta2 != 0` and `eta > 0`.
pub fn derive_constants(m: &MarketSpec) -> Result<DerivedConstants> {
    if m.beta2 == 0.0 {
        return Err(Error::Parameter("beta2 must be nonzero".into()));
    }
    if !(m.eta > 0.0) {
        return Err(Error::Parameter("eta must be positive".into()));
    }
    let beta_sq = m.beta1 * m.beta1 + m.beta2 * m.beta2;
    let aversion_ratio = m.beta2 * m.beta2 / beta_sq;
    Ok(DerivedConstants {
        beta_sq,
        k: m.eta * aversion_ratio,
        aversion_ratio,
    })
}

// ==================== risk process ====================

/// The non-traded risk process `dX = b(t, X) dt + sigma(t, X) dW`.
#[derive(Debug, Clone)]
pub enum RiskProcessSpec {
    /// dX = mu X dt + nu X dW, X_0 = x0 > 0.
    Geometric { mu: f64, nu: f64, x0: f64 },
    /// Mean-reverting with sinusoidal forcing:
    /// dX = [c1 (mean_level - X) + c2 sin(2 pi t / period)] dt + sigma0 dW.
    OuPeriodic {
        c1: f64,
        c2: f64,
        mean_level: f64,
        period: f64,
        sigma0: f64,
        x0: f64,
    },
    /// Double-well drift with periodic forcing:
    /// dX = [X - X^3 + c1 sin(2 pi t / period)] dt + sigma0 dW.
    DoubleWell {
        c1: f64,
        period: f64,
        sigma0: f64,
        x0: f64,
    },
}

impl RiskProcessSpec {
    pub fn x0(&self) -> f64 {
        match self {
            RiskProcessSpec::Geometric { x0, .. } => *x0,
            RiskProcessSpec::OuPeriodic { x0, .. } => *x0,
            RiskProcessSpec::DoubleWell { x0, .. } => *x0,
        }
    }

    /// Same dynamics restarted from a different initial state.
    pub fn with_x0(&self, x0_new: f64) -> RiskProcessSpec {
        let mut r = self.clone();
        match &mut r {
            RiskProcessSpec::Geometric { x0, .. } => *x0 = x0_new,
            RiskProcessSpec::OuPeriodic { x0, .. } => *x0 = x0_new,
            RiskProcessSpec::DoubleWell { x0, .. } => *x0 = x0_new,
        }
        r
    }

    /// Drift b(t, x).
    #[inline]
    pub fn drift(&self, t: f64, x: f64) -> f64 {
        match self {
            RiskProcessSpec::Geometric { mu, .. } => mu * x,
            RiskProcessSpec::OuPeriodic {
                c1,
                c2,
                mean_level,
                period,
                ..
            } => c1 * (mean_level - x) + c2 * (2.0 * std::f64::consts::PI * t / period).sin(),
            RiskProcessSpec::DoubleWell { c1, period, .. } => {
                x - x * x * x + c1 * (2.0 * std::f64::consts::PI * t / period).sin()
            }
        }
    }

    /// Diffusion coefficient sigma(t, x).
    #[inline]
    pub fn sigma(&self, _t: f64, x: f64) -> f64 {
        match self {
            RiskProcessSpec::Geometric { nu, .. } => nu * x,
            RiskProcessSpec::OuPeriodic { sigma0, .. } => *sigma0,
            RiskProcessSpec::DoubleWell { sigma0, .. } => *sigma0,
        }
    }
}

// ==================== payoff ====================

/// Growth class declared for a payoff; validation spot-checks it and the
/// strategy bounds consume the explicit constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GrowthClass {
    /// |F| bounded.
    Bounded,
    /// |F(x)| <= K (1 + |x|) for some K.
    Linear,
    /// F(x) >= -K (1 + ln x) for x >= 1, for some K.
    LogLowerBounded,
    /// sup_x |x F'(x)| <= M with the explicit constant M.
    XFPrimeBounded(f64),
}

/// Claim on the terminal value of the risk process, `F(X_T)`, with a
/// declared growth class.
#[derive(Clone)]
pub struct PayoffSpec {
    pub kind: PayoffKind,
    pub growth_class: GrowthClass,
}

#[derive(Clone)]
pub enum PayoffKind {
    /// F = c.
    Constant(f64),
    /// Heating-degree-day shape F(x) = max(0, base - x).
    HddStyle { base: f64 },
    /// F(x) = c ln(1 + x); domain x > 0.
    LogShift { c: f64 },
    /// F(x) = c (1 + (ln x)^2); domain x > 0.
    LogQuad { c: f64 },
    /// Piecewise-linear table in x, constant extrapolation; bounded.
    Bounded { xs: Vec<f64>, values: Vec<f64> },
    /// Arbitrary evaluator for tests and library callers.
    Custom {
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        name: String,
    },
}

impl fmt::Debug for PayoffKind {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PayoffKind::Constant(c) => write!(fm, "Constant({c})"),
            PayoffKind::HddStyle { base } => write!(fm, "HddStyle {{ base: {base} }}"),
            PayoffKind::LogShift { c } => write!(fm, "LogShift {{ c: {c} }}"),
            PayoffKind::LogQuad { c } => write!(fm, "LogQuad {{ c: {c} }}"),
            PayoffKind::Bounded { xs, .. } => write!(fm, "Bounded {{ {} knots }}", xs.len()),
            PayoffKind::Custom { name, .. } => write!(fm, "Custom({name})"),
        }
    }
}

impl fmt::Debug for PayoffSpec {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(fm, "{:?} [{:?}]", self.kind, self.growth_class)
    }
}

impl PayoffSpec {
    pub fn constant(c: f64) -> Self {
        PayoffSpec {
            kind: PayoffKind::Constant(c),
            growth_class: GrowthClass::Bounded,
        }
    }

    pub fn hdd_style(base: f64) -> Self {
        PayoffSpec {
            kind: PayoffKind::HddStyle { base },
            growth_class: GrowthClass::Linear,
        }
    }

    /// c ln(1 + x). For c > 0 this is Lipschitz on x > 0 with
    /// sup |x F'(x)| = |c|.
    pub fn log_shift(c: f64) -> Self {
        PayoffSpec {
            kind: PayoffKind::LogShift { c },
            growth_class: GrowthClass::XFPrimeBounded(c.abs()),
        }
    }

    pub fn log_quad(c: f64) -> Self {
        PayoffSpec {
            kind: PayoffKind::LogQuad { c },
            growth_class: GrowthClass::LogLowerBounded,
        }
    }

    pub fn bounded_table(xs: Vec<f64>, values: Vec<f64>) -> Self {
        PayoffSpec {
            kind: PayoffKind::Bounded { xs, values },
            growth_class: GrowthClass::Bounded,
        }
    }

    pub fn custom(
        name: impl Into<String>,
        growth_class: GrowthClass,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        PayoffSpec {
            kind: PayoffKind::Custom {
                f: Arc::new(f),
                name: name.into(),
            },
            growth_class,
        }
    }

    fn name(&self) -> String {
        format!("{:?}", self.kind)
    }
}

/// Evaluate the payoff at a terminal value. The log variants require
/// x > 0; evaluation outside the domain is a reported error, never a NaN.
pub fn payoff_eval(f: &PayoffSpec, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::PayoffDomain {
            payoff: f.name(),
            x,
        });
    }
    match &f.kind {
        PayoffKind::Constant(c) => Ok(*c),
        PayoffKind::HddStyle { base } => Ok((base - x).max(0.0)),
        PayoffKind::LogShift { c } => {
            if x <= 0.0 {
                Err(Error::PayoffDomain {
                    payoff: f.name(),
                    x,
                })
            } else {
                Ok(c * (1.0 + x).ln())
            }
        }
        PayoffKind::LogQuad { c } => {
            if x <= 0.0 {
                Err(Error::PayoffDomain {
                    payoff: f.name(),
                    x,
                })
            } else {
                let l = x.ln();
                Ok(c * (1.0 + l * l))
            }
        }
        PayoffKind::Bounded { xs, values } => Ok(interp_linear(xs, values, x)),
        PayoffKind::Custom { f: func, .. } => {
            let v = func(x);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::PayoffDomain {
                    payoff: f.name(),
                    x,
                })
            }
        }
    }
}

fn interp_linear(xs: &[f64], values: &[f64], x: f64) -> f64 {
    debug_assert_eq!(xs.len(), values.len());
    debug_assert!(!xs.is_empty());
    if x <= xs[0] {
        return values[0];
    }
    if x >= xs[xs.len() - 1] {
        return values[values.len() - 1];
    }
    let i = match xs.binary_search_by(|a| a.partial_cmp(&x).unwrap()) {
        Ok(i) => return values[i],
        Err(i) => i,
    };
    let w = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
    values[i - 1] + w * (values[i] - values[i - 1])
}

// ==================== validation ====================

/// Outcome of validating a (market, risk process, payoff) triple.
/// `violations` are hard failures of the standing assumptions;
/// `warnings` flag degenerate but representable cases.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<String>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<ValidationReport> {
        if self.is_valid() {
            Ok(self)
        } else {
            Err(Error::Validation(self.violations))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(fm, "violation: {v}")?;
        }
        for w in &self.warnings {
            writeln!(fm, "warning: {w}")?;
        }
        Ok(())
    }
}

/// Validate a model triple against the standing assumptions. Violations
/// carry the broken assumption in the message; degenerate-but-useful
/// limits (zero volatility) are warnings, because path simulation remains
/// well defined there while the PDE and closed-form routes refuse them.
pub fn validate(m: &MarketSpec, r: &RiskProcessSpec, f: &PayoffSpec) -> ValidationReport {
    let mut rep = ValidationReport::default();

    if m.beta2 == 0.0 {
        rep.violations.push("beta2 must be nonzero".into());
    }
    if !(m.eta > 0.0) {
        rep.violations
            .push(format!("eta must be positive, got {}", m.eta));
    }
    if !(m.horizon > 0.0) {
        rep.violations
            .push(format!("horizon must be positive, got {}", m.horizon));
    }
    for (name, v) in [
        ("beta1", m.beta1),
        ("beta2", m.beta2),
        ("eta", m.eta),
        ("v0", m.v0),
        ("horizon", m.horizon),
    ] {
        if !v.is_finite() {
            rep.violations.push(format!("{name} must be finite"));
        }
    }
    if !m.drift.sup_norm().is_finite() {
        rep.violations
            .push("drift rate g must have a finite sup-norm bound".into());
    }
    if let DriftSpec::Table { xs, values } = &m.drift {
        if xs.len() != values.len() || xs.is_empty() {
            rep.violations
                .push("drift table needs matching, nonempty xs and values".into());
        } else if xs.windows(2).any(|w| w[1] <= w[0]) {
            rep.violations
                .push("drift table xs must be strictly increasing".into());
        }
    }

    match r {
        RiskProcessSpec::Geometric { mu, nu, x0 } => {
            if !(*x0 > 0.0) {
                rep.violations
                    .push(format!("geometric risk process needs x0 > 0, got {x0}"));
            }
            if !mu.is_finite() || !nu.is_finite() {
                rep.violations
                    .push("geometric risk process parameters must be finite".into());
            }
            if *nu == 0.0 {
                rep.warnings.push(
                    "nu = 0: risk process is deterministic; PDE and closed-form routes unavailable"
                        .into(),
                );
            }
        }
        RiskProcessSpec::OuPeriodic {
            c1,
            c2,
            period,
            sigma0,
            ..
        } => {
            if !(*c1 > 0.0) {
                rep.violations
                    .push(format!("mean-reversion rate c1 must be positive, got {c1}"));
            }
            if *c2 < 0.0 {
                rep.violations
                    .push(format!("forcing amplitude c2 must be nonnegative, got {c2}"));
            }
            if !(*period > 0.0) {
                rep.violations
                    .push(format!("forcing period must be positive, got {period}"));
            }
            if *sigma0 < 0.0 {
                rep.violations
                    .push(format!("sigma0 must be nonnegative, got {sigma0}"));
            } else if *sigma0 == 0.0 {
                rep.warnings.push(
                    "sigma0 = 0: diffusion is degenerate (not uniformly elliptic); \
                     PDE route unavailable"
                        .into(),
                );
            }
        }
        RiskProcessSpec::DoubleWell { period, sigma0, .. } => {
            if !(*period > 0.0) {
                rep.violations
                    .push(format!("forcing period must be positive, got {period}"));
            }
            if *sigma0 < 0.0 {
                rep.violations
                    .push(format!("sigma0 must be nonnegative, got {sigma0}"));
            } else if *sigma0 == 0.0 {
                rep.warnings
                    .push("sigma0 = 0: diffusion is degenerate; PDE route unavailable".into());
            }
        }
    }

    spot_check_growth(r, f, &mut rep);
    rep
}

/// Evaluate the payoff on a log-spaced grid of 1e3 points and check the
/// declared growth class: fit the class constant on the lower half of the
/// grid and require the upper half to stay within twice the fitted
/// constant; for `XFPrimeBounded(M)` check the explicit constant against a
/// finite-difference estimate of x F'(x).
fn spot_check_growth(r: &RiskProcessSpec, f: &PayoffSpec, rep: &mut ValidationReport) {
    let positive_domain = matches!(
        f.kind,
        PayoffKind::LogShift { .. } | PayoffKind::LogQuad { .. }
    ) || matches!(r, RiskProcessSpec::Geometric { .. });
    let n = 1000;
    let (lo, hi) = (1e-3f64, 1e3f64);
    let xs: Vec<f64> = (0..n)
        .map(|i| {
            let u = i as f64 / (n - 1) as f64;
            let x = lo * (hi / lo).powf(u);
            if positive_domain {
                x
            } else {
                // Signed sweep for processes living on all of R.
                if i % 2 == 0 {
                    x
                } else {
                    -x
                }
            }
        })
        .collect();
    let vals: Vec<Option<f64>> = xs.iter().map(|&x| payoff_eval(f, x).ok()).collect();
    if vals.iter().all(|v| v.is_none()) {
        rep.violations
            .push("payoff could not be evaluated anywhere on the check grid".into());
        return;
    }

    let gauge = |x: f64, v: f64| -> f64 {
        match f.growth_class {
            GrowthClass::Bounded => v.abs(),
            GrowthClass::Linear => v.abs() / (1.0 + x.abs()),
            GrowthClass::LogLowerBounded => {
                if x >= 1.0 {
                    (-v).max(0.0) / (1.0 + x.ln())
                } else {
                    0.0
                }
            }
            GrowthClass::XFPrimeBounded(_) => 0.0,
        }
    };

    if let GrowthClass::XFPrimeBounded(m_decl) = f.growth_class {
        let mut worst = 0.0f64;
        for &x in &xs {
            if x <= 0.0 {
                continue;
            }
            let h = 1e-6 * x.max(1e-6);
            if let (Ok(fp), Ok(fmv)) = (payoff_eval(f, x + h), payoff_eval(f, x - h)) {
                worst = worst.max((x * (fp - fmv) / (2.0 * h)).abs());
            }
        }
        if worst > m_decl * (1.0 + 1e-3) + 1e-9 {
            rep.violations.push(format!(
                "declared bound sup|x F'(x)| <= {m_decl} violated: observed {worst:.6e}"
            ));
        }
        return;
    }

    // Inner window: within 1.5 decades of the grid center (x = 1 on the
    // positive axis, the origin for signed sweeps). A declared class whose
    // gauge keeps climbing out to the grid edges is misstated; saturating
    // gauges have outer max close to inner max.
    let mut inner = 0.0f64;
    let mut outer = 0.0f64;
    for (&x, v) in xs.iter().zip(&vals) {
        if let Some(v) = v {
            let g = gauge(x, *v);
            let is_inner = if positive_domain {
                x.abs().log10().abs() <= 1.5
            } else {
                x.abs() <= 10f64.powf(1.5)
            };
            if is_inner {
                inner = inner.max(g);
            } else {
                outer = outer.max(g);
            }
        }
    }
    if outer > 1.5 * inner.max(1e-12) + 1e-9 {
        rep.violations.push(format!(
            "payoff growth exceeds declared class {:?}: gauge rises from {inner:.3e} \
             near the grid center to {outer:.3e} at the edges",
            f.growth_class
        ));
    }
}
