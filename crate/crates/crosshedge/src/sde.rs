//! Path simulation of the risk process under the physical measure and under
//! the drift-modified pricing measure.
//!
//! The modified process `Y` follows the same diffusion as `X` but with
//! drift
//!
//! ```text
//! b_hat(t, x) = b(t, x) - beta1 g(t, x) sigma(t, x) / beta_sq,
//! ```
//!
//! which is what the pricing expectation integrates over. Schemes:
//!
//! * Geometric: stepping in log space, exact in law for constant `g`
//!   (state-dependent log-drift frozen at the left endpoint otherwise).
//! * Mean-reverting periodic: exact Gaussian transition with the closed-form
//!   integral of the sinusoidal forcing; a constant `g` only shifts the
//!   relaxation level, so the transition stays exact. Non-constant `g` has
//!   no exact scheme and falls back to Euler-Maruyama.
//! * Double well: Euler-Maruyama.
//!
//! Every scheme consumes a fixed number of standard normals per step in a
//! fixed order (`z_w`, `z_b`, then scheme extras), drawn from the per-path
//! stream of [`crate::rng::PathRng`]. The mean-reverting transition needs
//! the exponentially filtered noise integral rather than the plain
//! increment `dW`; both are produced jointly (exact 2x2 Gaussian
//! conditioning, one extra draw) so the plain increments that drive wealth
//! and Girsanov weights are always available and exact.

use crate::error::{Error, Result};
use crate::model::{derive_constants, DriftSpec, MarketSpec, RiskProcessSpec};
use crate::numeric::Mat;
use crate::rng::PathRng;
use rayon::prelude::*;

/// Uniform time grid on [t0, t1] with n_steps intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t0: f64,
    pub t1: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t1: f64, n_steps: usize) -> Result<Self> {
        if !(t1 > t0) || n_steps == 0 {
            return Err(Error::Parameter(format!(
                "time grid needs t1 > t0 and n_steps >= 1, got [{t0}, {t1}] with {n_steps} steps"
            )));
        }
        Ok(TimeGrid { t0, t1, n_steps })
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        (self.t1 - self.t0) / self.n_steps as f64
    }

    #[inline]
    pub fn time(&self, j: usize) -> f64 {
        self.t0 + j as f64 * self.dt()
    }
}

/// Simulation options shared by all samplers.
#[derive(Debug, Clone, Copy, Default)]
pub struct SimOptions {
    /// Pair path i with path i + n/2 re-using the same stream with the
    /// `dW` draws negated (`dB` untouched). Requires an even path count.
    pub antithetic: bool,
}

/// Identity of one path under the antithetic convention: which stream to
/// read and whether to negate the `z_w` draws.
#[inline]
pub fn antithetic_map(path_index: usize, n_paths: usize, opts: SimOptions) -> (u64, bool) {
    if opts.antithetic && path_index >= n_paths / 2 {
        ((path_index - n_paths / 2) as u64, true)
    } else {
        (path_index as u64, false)
    }
}

fn check_antithetic(n_paths: usize, opts: SimOptions) -> Result<()> {
    if opts.antithetic && n_paths % 2 != 0 {
        return Err(Error::Parameter(
            "antithetic pairing requires an even number of paths".into(),
        ));
    }
    Ok(())
}

// ==================== stepping kernel ====================

#[derive(Debug, Clone, Copy, PartialEq)]
enum Scheme {
    /// Log-space stepping; exact when the log-drift is t,x-independent.
    GeometricLog,
    /// Exact Gaussian transition (linear SDE with closed-form forcing).
    OuExact,
    /// Euler-Maruyama on the full drift.
    Euler,
}

/// Drift-correction coefficient applied when evolving Y:
/// `b_hat = b - corr * g(t, x) * sigma(t, x)` with `corr = beta1/beta_sq`.
#[derive(Debug, Clone, Copy)]
struct YCorrection {
    corr: f64,
}

/// Per-path stepping kernel. Evolves the risk process under the physical
/// drift (`x`), under the modified drift (`y`), or both on the same noise,
/// and exposes the plain Brownian increments of every step.
pub struct PathStepper<'a> {
    r: &'a RiskProcessSpec,
    drift_g: Option<&'a DriftSpec>,
    ycorr: f64,
    grid: TimeGrid,
    scheme_x: Scheme,
    scheme_y: Scheme,
    evolve_x: bool,
    evolve_y: bool,
    rng: PathRng,
    negate_w: bool,
    step: usize,
    x: f64,
    y: f64,
    // Precomputed per-step constants.
    dt: f64,
    sqrt_dt: f64,
    ou: Option<OuConstants>,
}

#[derive(Debug, Clone, Copy)]
struct OuConstants {
    c1: f64,
    c2: f64,
    mean_level: f64,
    omega: f64,
    sigma0: f64,
    decay: f64,    // e^{-c1 dt}
    cov_w: f64,    // Cov(dW, filtered) = (1 - e^{-c1 dt}) / c1
    resid_sd: f64, // sd of filtered | dW
}

impl OuConstants {
    fn new(c1: f64, c2: f64, mean_level: f64, period: f64, sigma0: f64, dt: f64) -> Self {
        let omega = 2.0 * std::f64::consts::PI / period;
        let decay = (-c1 * dt).exp();
        // Stable for small c1 dt via expm1.
        let var = -(-2.0 * c1 * dt).exp_m1() / (2.0 * c1);
        let cov_w = -(-c1 * dt).exp_m1() / c1;
        let resid_var = (var - cov_w * cov_w / dt).max(0.0);
        OuConstants {
            c1,
            c2,
            mean_level,
            omega,
            sigma0,
            decay,
            cov_w,
            resid_sd: resid_var.sqrt(),
        }
    }

    /// Antiderivative kernel: d/ds [e^{c1 s} phi(s)] = e^{c1 s} sin(omega s).
    #[inline]
    fn phi(&self, s: f64) -> f64 {
        let (c1, om) = (self.c1, self.omega);
        (c1 * (om * s).sin() - om * (om * s).cos()) / (c1 * c1 + om * om)
    }

    /// int_t^{t+dt} e^{-c1(t+dt-s)} sin(omega s) ds, closed form.
    #[inline]
    fn forcing_integral(&self, t: f64, t_next: f64) -> f64 {
        self.phi(t_next) - self.decay * self.phi(t)
    }
}

/// One completed step: time reached, plain increments consumed, and the
/// states after the step.
#[derive(Debug, Clone, Copy)]
pub struct StepOut {
    pub t_next: f64,
    pub dw: f64,
    pub db: f64,
    pub x: f64,
    pub y: f64,
}

impl<'a> PathStepper<'a> {
    /// Kernel for one path. `market` is needed only when evolving `y`
    /// (it supplies `g` and the correction coefficient beta1/beta_sq).
    pub fn new(
        market: Option<&'a MarketSpec>,
        r: &'a RiskProcessSpec,
        grid: TimeGrid,
        seed: u64,
        stream: u64,
        negate_w: bool,
        evolve_x: bool,
        evolve_y: bool,
    ) -> Result<Self> {
        let ycorr = if evolve_y {
            let m = market.ok_or_else(|| {
                Error::Parameter("evolving the modified process requires a market spec".into())
            })?;
            let d = derive_constants(m)?;
            YCorrection {
                corr: m.beta1 / d.beta_sq,
            }
        } else {
            YCorrection { corr: 0.0 }
        };
        let drift_g = market.map(|m| &m.drift);
        let g_constant = drift_g.map(|g| g.constant_rate().is_some()).unwrap_or(true);
        let dt = grid.dt();

        let scheme_x;
        let scheme_y;
        let mut ou = None;
        match r {
            RiskProcessSpec::Geometric { .. } => {
                scheme_x = Scheme::GeometricLog;
                scheme_y = Scheme::GeometricLog;
            }
            RiskProcessSpec::OuPeriodic {
                c1,
                c2,
                mean_level,
                period,
                sigma0,
                ..
            } => {
                if !(*c1 > 0.0) || !(*period > 0.0) {
                    return Err(Error::Parameter(
                        "mean-reverting scheme needs c1 > 0 and period > 0".into(),
                    ));
                }
                ou = Some(OuConstants::new(*c1, *c2, *mean_level, *period, *sigma0, dt));
                scheme_x = Scheme::OuExact;
                // The exact transition only absorbs a drift correction that
                // is constant; otherwise Euler.
                scheme_y = if ycorr.corr == 0.0 || g_constant {
                    Scheme::OuExact
                } else {
                    Scheme::Euler
                };
            }
            RiskProcessSpec::DoubleWell { .. } => {
                scheme_x = Scheme::Euler;
                scheme_y = Scheme::Euler;
            }
        }

        Ok(PathStepper {
            r,
            drift_g,
            ycorr: ycorr.corr,
            grid,
            scheme_x,
            scheme_y,
            evolve_x,
            evolve_y,
            rng: PathRng::new(seed, stream),
            negate_w,
            step: 0,
            x: r.x0(),
            y: r.x0(),
            dt,
            sqrt_dt: dt.sqrt(),
            ou,
        })
    }

    #[inline]
    pub fn t_current(&self) -> f64 {
        self.grid.time(self.step)
    }

    #[inline]
    pub fn x_current(&self) -> f64 {
        self.x
    }

    #[inline]
    pub fn y_current(&self) -> f64 {
        self.y
    }

    #[inline]
    pub fn steps_done(&self) -> usize {
        self.step
    }

    #[inline]
    fn g(&self, t: f64, x: f64) -> f64 {
        self.drift_g.map(|g| g.eval(t, x)).unwrap_or(0.0)
    }

    /// Advance one grid step. Draw order per step is fixed: z_w, z_b, then
    /// one extra draw for the exact mean-reverting transition.
    pub fn advance(&mut self) -> Result<StepOut> {
        debug_assert!(self.step < self.grid.n_steps);
        let t = self.grid.time(self.step);
        let t_next = self.grid.time(self.step + 1);
        let mut z_w = self.rng.next_standard_normal();
        if self.negate_w {
            z_w = -z_w;
        }
        let z_b = self.rng.next_standard_normal();
        let needs_aux = self.scheme_x == Scheme::OuExact || self.scheme_y == Scheme::OuExact;
        let z_aux = if needs_aux {
            self.rng.next_standard_normal()
        } else {
            0.0
        };
        let dw = self.sqrt_dt * z_w;
        let db = self.sqrt_dt * z_b;

        if self.evolve_x {
            self.x = self.advance_state(self.scheme_x, t, t_next, self.x, 0.0, dw, z_aux)?;
        }
        if self.evolve_y {
            self.y = self.advance_state(self.scheme_y, t, t_next, self.y, self.ycorr, dw, z_aux)?;
        }
        self.step += 1;
        Ok(StepOut {
            t_next,
            dw,
            db,
            x: self.x,
            y: self.y,
        })
    }

    fn advance_state(
        &mut self,
        scheme: Scheme,
        t: f64,
        t_next: f64,
        s: f64,
        corr: f64,
        dw: f64,
        z_aux: f64,
    ) -> Result<f64> {
        let next = match scheme {
            Scheme::GeometricLog => {
                let (mu, nu) = match self.r {
                    RiskProcessSpec::Geometric { mu, nu, .. } => (*mu, *nu),
                    _ => unreachable!(),
                };
                let g = if corr != 0.0 { self.g(t, s) } else { 0.0 };
                let log_drift = mu - corr * g * nu - 0.5 * nu * nu;
                s * (log_drift * self.dt + nu * dw).exp()
            }
            Scheme::OuExact => {
                let ou = self.ou.expect("OU constants present for OU scheme");
                // Filtered noise drawn conditionally on the plain increment.
                let filtered = ou.cov_w / self.dt * dw + ou.resid_sd * z_aux;
                // A constant drift correction -corr*g*sigma0 shifts the
                // relaxation level by that amount over c1.
                let shift = if corr != 0.0 {
                    -corr * self.g(t, s) * ou.sigma0 / ou.c1
                } else {
                    0.0
                };
                let level = ou.mean_level + shift;
                level
                    + (s - level) * ou.decay
                    + ou.c2 * ou.forcing_integral(t, t_next)
                    + ou.sigma0 * filtered
            }
            Scheme::Euler => {
                let g = if corr != 0.0 { self.g(t, s) } else { 0.0 };
                let sig = self.r.sigma(t, s);
                let b = self.r.drift(t, s) - corr * g * sig;
                s + b * self.dt + sig * dw
            }
        };
        if !next.is_finite() {
            return Err(Error::numerical(
                "path simulation",
                format!(
                    "state became non-finite at t = {t_next:.6} (dt = {:.3e}); \
                     reduce the step size",
                    self.dt
                ),
            ));
        }
        Ok(next)
    }
}

// ==================== bundled simulation ====================

/// Paths of a single process together with the driving increments.
#[derive(Debug, Clone)]
pub struct PathSet {
    pub grid: TimeGrid,
    pub n_paths: usize,
    /// States, n_paths x (n_steps + 1); column 0 is the initial value.
    pub states: Mat,
    /// Plain Brownian increments, n_paths x n_steps.
    pub dw: Mat,
    pub db: Mat,
}

/// Coupled paths of X (physical drift) and Y (modified drift) driven by
/// the same `dW`, plus the independent `dB` of the traded asset.
#[derive(Debug, Clone)]
pub struct PathBundle {
    pub grid: TimeGrid,
    pub n_paths: usize,
    pub x: Mat,
    pub y: Mat,
    pub dw: Mat,
    pub db: Mat,
}

fn run_bundle(
    market: Option<&MarketSpec>,
    r: &RiskProcessSpec,
    grid: TimeGrid,
    n_paths: usize,
    seed: u64,
    opts: SimOptions,
    evolve_x: bool,
    evolve_y: bool,
) -> Result<PathBundle> {
    check_antithetic(n_paths, opts)?;
    let n_steps = grid.n_steps;
    let rows: Vec<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> = (0..n_paths)
        .into_par_iter()
        .map(|pi| -> Result<_> {
            let (stream, neg) = antithetic_map(pi, n_paths, opts);
            let mut st =
                PathStepper::new(market, r, grid, seed, stream, neg, evolve_x, evolve_y)?;
            let mut xs = Vec::with_capacity(n_steps + 1);
            let mut ys = Vec::with_capacity(n_steps + 1);
            let mut dws = Vec::with_capacity(n_steps);
            let mut dbs = Vec::with_capacity(n_steps);
            xs.push(st.x_current());
            ys.push(st.y_current());
            for _ in 0..n_steps {
                let out = st.advance()?;
                xs.push(out.x);
                ys.push(out.y);
                dws.push(out.dw);
                dbs.push(out.db);
            }
            Ok((xs, ys, dws, dbs))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut x = Mat::zeros(n_paths, n_steps + 1);
    let mut y = Mat::zeros(n_paths, n_steps + 1);
    let mut dw = Mat::zeros(n_paths, n_steps);
    let mut db = Mat::zeros(n_paths, n_steps);
    for (pi, (xs, ys, dws, dbs)) in rows.into_iter().enumerate() {
        x.row_mut(pi).copy_from_slice(&xs);
        y.row_mut(pi).copy_from_slice(&ys);
        dw.row_mut(pi).copy_from_slice(&dws);
        db.row_mut(pi).copy_from_slice(&dbs);
    }
    Ok(PathBundle {
        grid,
        n_paths,
        x,
        y,
        dw,
        db,
    })
}

/// Simulate the risk process under its physical drift.
pub fn simulate_x(
    r: &RiskProcessSpec,
    grid: TimeGrid,
    n_paths: usize,
    seed: u64,
    opts: SimOptions,
) -> Result<PathSet> {
    let b = run_bundle(None, r, grid, n_paths, seed, opts, true, false)?;
    Ok(PathSet {
        grid: b.grid,
        n_paths: b.n_paths,
        states: b.x,
        dw: b.dw,
        db: b.db,
    })
}

/// Simulate the drift-modified process Y used by the pricing expectation.
pub fn simulate_y(
    m: &MarketSpec,
    r: &RiskProcessSpec,
    grid: TimeGrid,
    n_paths: usize,
    seed: u64,
    opts: SimOptions,
) -> Result<PathSet> {
    let b = run_bundle(Some(m), r, grid, n_paths, seed, opts, false, true)?;
    Ok(PathSet {
        grid: b.grid,
        n_paths: b.n_paths,
        states: b.y,
        dw: b.dw,
        db: b.db,
    })
}

/// Simulate X and Y on the same Brownian increments.
pub fn simulate_coupled(
    m: &MarketSpec,
    r: &RiskProcessSpec,
    grid: TimeGrid,
    n_paths: usize,
    seed: u64,
    opts: SimOptions,
) -> Result<PathBundle> {
    run_bundle(Some(m), r, grid, n_paths, seed, opts, true, true)
}

/// Write a coupled bundle as CSV with one row per (path, step), columns
/// `path_id,step,t,X,Y,dW,dB`. Step 0 carries the initial states with
/// empty increment fields. Floats use 17 significant digits so a rerun
/// is byte-identical and parsing is lossless.
pub fn write_paths_csv<W: std::io::Write>(b: &PathBundle, out: &mut W) -> Result<()> {
    writeln!(out, "path_id,step,t,X,Y,dW,dB")?;
    for pi in 0..b.n_paths {
        write!(
            out,
            "{pi},0,{},{},{},,\n",
            fmt17(b.grid.time(0)),
            fmt17(b.x.get(pi, 0)),
            fmt17(b.y.get(pi, 0))
        )?;
        for j in 0..b.grid.n_steps {
            writeln!(
                out,
                "{pi},{},{},{},{},{},{}",
                j + 1,
                fmt17(b.grid.time(j + 1)),
                fmt17(b.x.get(pi, j + 1)),
                fmt17(b.y.get(pi, j + 1)),
                fmt17(b.dw.get(pi, j)),
                fmt17(b.db.get(pi, j))
            )?;
        }
    }
    Ok(())
}

/// 17-significant-digit decimal form; round-trips f64 exactly.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}
