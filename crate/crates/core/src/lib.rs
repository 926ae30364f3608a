//! Numerics toolkit for partially hyperbolic skew products.
//!
//! The crate provides desk-scale, reproducible verification of the checkable
//! machinery behind stable accessibility and ergodicity arguments for skew
//! products `F(y,z) = (f(y), g(y,z))` over linear Anosov bases:
//!
//! * [`spectral`] — exact-and-float spectral analysis of integer matrices and
//!   certification of pinching / center-bunching / dominated-splitting
//!   inequality systems, each with explicit margins.
//! * [`grassmann`] — subspace geometry (principal angles, complement
//!   projections) and the single-step contraction integrands `C` and `D`
//!   computed exactly through singular value decompositions.
//! * [`skew`] — construction and iteration of skew products from invertible
//!   fiber primitives, closed-form stable/unstable leaf geometry of the
//!   linear base, brackets, recurrence times, and su-loop families.
//! * [`holonomy`] — numerical stable/unstable holonomy maps with adaptive
//!   truncation and a-posteriori error control, 4-legged loop holonomies,
//!   the accessibility map `φ_F`, coverings, and the stable-value criterion.
//! * [`deform`] — parameterized divergence-free fiber deformations and
//!   finite-difference verification of the perturbed-holonomy derivative
//!   estimates.
//! * [`ifs`] — Bernoulli iterated function systems: uniformity certification
//!   with Monte-Carlo/enumeration expectations, Lyapunov spectra by QR
//!   accumulation, conjugated families, nontransversality measurements and
//!   orbit-density diagnostics.
//! * [`report`] / [`cli`] — deterministic delimited-text reports and the
//!   configuration-driven command line entry point.
//!
//! All randomness is funneled through explicit 64-bit seeds and stream ids;
//! reports are byte-identical for a fixed seed regardless of worker count.

pub mod cli;
pub mod covering;
pub mod deform;
pub mod grassmann;
pub mod holonomy;
pub mod ifs;
pub mod report;
pub mod skew;
pub mod spectral;
pub mod torus;
