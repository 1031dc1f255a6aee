//! Pricing and hedging of a non-traded risk exposure with a correlated
//! tradable asset, under exponential utility.
//!
//! The market model is a tradable asset whose excess return is driven by
//! a state-dependent rate `g(t, X_t)` and two independent Brownian motions,
//!
//! ```text
//! dS_t / S_t = g(t, X_t) dt + beta1 dW_t + beta2 dB_t,
//! ```
//!
//! while the non-traded risk process `X` (an index, a temperature, a loss
//! ratio) is driven by `W` alone. A claim `F(X_T)` cannot be replicated:
//! `beta2 > 0` leaves unhedgeable noise. The exponential-utility
//! indifference price of the claim is computed here three ways, which
//! cross-check each other:
//!
//! * Monte Carlo under a drift-modified simulation measure with explicit
//!   path weights ([`pricing::dynamic_price_mc`]),
//! * a linear parabolic PDE with a killing term ([`pde::solve_psi`]),
//! * closed forms and Gauss-Hermite quadrature for geometric `X` with
//!   constant `g` ([`pricing::dynamic_price_geometric`]).
//!
//! The optimal hedge decomposes as `pi_star = pi_sharp + delta / beta_sq`
//! where `pi_sharp` is the pure investment strategy and `delta` the
//! diversification pressure exerted by the claim ([`strategy`]). Wealth
//! simulation, indifference verification, and admissibility diagnostics
//! live in [`hedging`]; entropic risk measures and the static-versus-
//! dynamic comparison in [`risk`].
//!
//! Everything is deterministic given a seed: random numbers come from a
//! counter-based generator with one stream per path, so results are
//! bit-identical across runs and thread counts.

pub mod error;
pub mod hedging;
pub mod model;
pub mod numeric;
pub mod pde;
pub mod pricing;
pub mod quad;
pub mod risk;
pub mod rng;
pub mod scenario;
pub mod sde;
pub mod selftest;
pub mod strategy;

pub use error::{Error, Result};
