//! Numerical stable/unstable holonomy maps between fibers of a skew
//! product, 4-legged loop holonomies, and the accessibility map `φ_F`.
//!
//! The unstable holonomy between fibers over `y₁` and `y₂ ∈ W^u_loc(y₁)` is
//!
//! ```text
//! H^u_{y₁,y₂} = lim_n  g^{(n)}_{f^{−n}y₂} ∘ (g^{(n)}_{f^{−n}y₁})⁻¹
//! ```
//!
//! truncated adaptively: the depth `n*` is the first depth at which the base
//! separation `d(f^{−n}y₁, f^{−n}y₂)` times a conservative fiber Lipschitz
//! bound falls below the requested tolerance, and every result carries an
//! a-posteriori error estimate (the distance between the values at depths
//! `n*` and `n*+5`), which must itself be below the tolerance.
//!
//! Backward orbits of leaf-mates are computed relative to each other
//! (`f^{−n}y₂ = f^{−n}y₁ + A^{−n}δ` with `δ = y₂ − y₁`), so the separation
//! driving the cancellation is accurate even when the individual orbits have
//! lost absolute accuracy to the base expansion.

use crate::skew::{FiberPoint, LoopFamily, SkewError, SkewProduct, SuLoop};
use crate::skew::{base_splitting, leaf_decompose, validate_su_loop};
use crate::torus;
use nalgebra::DMatrix;
use thiserror::Error;

/// Hard cap on truncation depth.
pub const DEPTH_CAP: usize = 400;

/// Leaf-membership residual tolerance.
pub const LEAF_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum HolonomyError {
    #[error("y2 is not on the local unstable leaf of y1 (residual {residual:.3e})")]
    NotOnUnstableLeaf { residual: f64 },
    #[error("y2 is not on the local stable leaf of y1 (residual {residual:.3e})")]
    NotOnStableLeaf { residual: f64 },
    #[error("holonomy did not converge: a-posteriori estimate {estimate:.3e} > tol {tol:.3e} at depth {depth}")]
    NoConvergence { estimate: f64, depth: usize, tol: f64 },
    #[error("skew product error: {0}")]
    Skew(#[from] SkewError),
}

/// A fiber point together with the achieved truncation depth and the
/// a-posteriori error estimate.
#[derive(Debug, Clone)]
pub struct HolonomyResult {
    pub point: FiberPoint,
    pub depth: usize,
    pub error_estimate: f64,
}

enum LeafKind {
    Unstable,
    Stable,
}

/// Shared implementation of both holonomy directions.
fn holonomy_leg(
    f: &SkewProduct,
    y1: &[f64],
    y2: &[f64],
    z: &FiberPoint,
    tol: f64,
    kind: LeafKind,
) -> Result<HolonomyResult, HolonomyError> {
    assert!(tol > 0.0, "tolerance must be positive");
    let delta = torus::diff(y2, y1);
    let (e_s, e_u) = base_splitting(f.base())?;
    let (vs, vu) = leaf_decompose(&e_s, &e_u, &delta);
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    match kind {
        LeafKind::Unstable => {
            let residual = norm(&vs);
            if residual > LEAF_TOL {
                return Err(HolonomyError::NotOnUnstableLeaf { residual });
            }
        }
        LeafKind::Stable => {
            let residual = norm(&vu);
            if residual > LEAF_TOL {
                return Err(HolonomyError::NotOnStableLeaf { residual });
            }
        }
    }

    let lip = f.fiber_y_lipschitz_bound();
    // Walk the orbit of y1 in the contracting direction of the chosen leaf
    // and transport the separation by the exact linear lift.  The leaf
    // subspace is invariant, so after each transport step the displacement is
    // projected back onto it; without this, roundoff seeds the complementary
    // (expanding) direction and the separation stops contracting around 1e−9.
    let step_matrix = match kind {
        LeafKind::Unstable => f.base_inverse().clone(),
        LeafKind::Stable => f.base().clone(),
    };
    let leaf_frame = match kind {
        LeafKind::Unstable => e_u.frame().clone(),
        LeafKind::Stable => e_s.frame().clone(),
    };
    let project = |v: &[f64]| -> Vec<f64> {
        let x = nalgebra::DVector::from_column_slice(v);
        let p = &leaf_frame * (leaf_frame.transpose() * x);
        p.iter().cloned().collect()
    };
    // Orbit points of y1 and the transported separation, depth 1..=cap.
    let mut b1 = Vec::with_capacity(DEPTH_CAP + 6);
    let mut b2 = Vec::with_capacity(DEPTH_CAP + 6);
    let mut cur = y1.to_vec();
    let mut d = project(&delta);
    let mut n_star = None;
    for n in 1..=DEPTH_CAP + 5 {
        match kind {
            // Backward orbit: depth-k entry is f^{−k}y1.
            LeafKind::Unstable => {
                cur = step_matrix.apply_mod1(&cur);
                d = project(&step_matrix.apply_linear(&d));
                b1.push(cur.clone());
                b2.push(torus::add(&cur, &d));
            }
            // Forward orbit: depth-k entry is f^{k−1}y1 (the first fiber map
            // acts at y1 itself).
            LeafKind::Stable => {
                b1.push(cur.clone());
                b2.push(torus::add(&cur, &d));
                cur = step_matrix.apply_mod1(&cur);
                d = project(&step_matrix.apply_linear(&d));
            }
        }
        let sep = norm(&d);
        if n_star.is_none() && (sep * lip < tol || n == DEPTH_CAP) {
            n_star = Some(n);
        }
        if let Some(ns) = n_star {
            if n >= ns + 5 {
                break;
            }
        }
    }
    let n_star = n_star.expect("loop always selects a depth");

    let compute = |depth: usize| -> FiberPoint {
        let mut w = z.clone();
        match kind {
            LeafKind::Unstable => {
                // Down the backward orbit of y1, then up along y2.
                for k in 0..depth {
                    w = f.fiber_map_inverse(&b1[k], &w);
                }
                for k in (0..depth).rev() {
                    w = f.fiber_map(&b2[k], &w);
                }
            }
            LeafKind::Stable => {
                for k in 0..depth {
                    w = f.fiber_map(&b1[k], &w);
                }
                for k in (0..depth).rev() {
                    w = f.fiber_map_inverse(&b2[k], &w);
                }
            }
        }
        w
    };

    let value = compute(n_star);
    let deeper = compute(n_star + 5);
    let estimate = value.dist(&deeper);
    if estimate > tol {
        return Err(HolonomyError::NoConvergence { estimate, depth: n_star, tol });
    }
    Ok(HolonomyResult { point: value, depth: n_star, error_estimate: estimate })
}

/// Unstable holonomy `H^u_{y₁,y₂}(z)` for `y₂ ∈ W^u_loc(y₁)`.
pub fn unstable_holonomy(
    f: &SkewProduct,
    y1: &[f64],
    y2: &[f64],
    z: &FiberPoint,
    tol: f64,
) -> Result<HolonomyResult, HolonomyError> {
    holonomy_leg(f, y1, y2, z, tol, LeafKind::Unstable)
}

/// Stable holonomy `H^s_{y₁,y₂}(z)` for `y₂ ∈ W^s_loc(y₁)`, the mirror
/// image along forward iterates.
pub fn stable_holonomy(
    f: &SkewProduct,
    y1: &[f64],
    y2: &[f64],
    z: &FiberPoint,
    tol: f64,
) -> Result<HolonomyResult, HolonomyError> {
    holonomy_leg(f, y1, y2, z, tol, LeafKind::Stable)
}

/// Holonomy of a 4-legged su-loop:
/// `H_γ = H^s_{y₃,y} ∘ H^u_{y₂,y₃} ∘ H^s_{y₁,y₂} ∘ H^u_{y,y₁}`,
/// each leg with tolerance `tol/4`; the total a-posteriori error is the sum
/// of the per-leg estimates.
pub fn loop_holonomy(
    f: &SkewProduct,
    gamma: &SuLoop,
    z: &FiberPoint,
    tol: f64,
) -> Result<HolonomyResult, HolonomyError> {
    validate_su_loop(f.base(), gamma, LEAF_TOL)?;
    let leg_tol = tol / 4.0;
    let mut total_err = 0.0;
    let mut depth = 0;
    let l1 = unstable_holonomy(f, &gamma.y, &gamma.legs[0], z, leg_tol)?;
    total_err += l1.error_estimate;
    depth = depth.max(l1.depth);
    let l2 = stable_holonomy(f, &gamma.legs[0], &gamma.legs[1], &l1.point, leg_tol)?;
    total_err += l2.error_estimate;
    depth = depth.max(l2.depth);
    let l3 = unstable_holonomy(f, &gamma.legs[1], &gamma.legs[2], &l2.point, leg_tol)?;
    total_err += l3.error_estimate;
    depth = depth.max(l3.depth);
    let l4 = stable_holonomy(f, &gamma.legs[2], &gamma.y, &l3.point, leg_tol)?;
    total_err += l4.error_estimate;
    depth = depth.max(l4.depth);
    Ok(HolonomyResult { point: l4.point, depth, error_estimate: total_err })
}

/// Loop parameter of the `i`-th factor (1-based) of `φ_F`:
/// `φ(i,s) = (C₀⁻¹σ/6c)(6i − 2 + s)` maps `s ∈ [−1,2]` into a sub-interval
/// of `[0, C₀⁻¹σ]`, with disjoint sub-intervals for distinct `i`.
pub fn varphi(fam: &LoopFamily, c: usize, i: usize, s: f64) -> f64 {
    debug_assert!((1..=c).contains(&i));
    fam.c0_inv * fam.sigma / (6.0 * c as f64) * (6.0 * i as f64 - 2.0 + s)
}

/// The accessibility map
/// `φ_F(s₁,…,s_c) = ∏_{i=1}^{c} H_{F,γ(φ(i,sᵢ))}(x₀)` with the product
/// applied right-to-left (`∏ f_i = f_c ⋯ f_1`).
pub fn phi_map(
    f: &SkewProduct,
    fam: &LoopFamily,
    x0: &FiberPoint,
    s: &[f64],
    tol: f64,
) -> Result<FiberPoint, HolonomyError> {
    let c = s.len();
    assert!(c >= 1, "φ_F needs at least one slice coordinate");
    assert!(
        s.iter().all(|&v| (-1.0..=2.0).contains(&v)),
        "slice coordinates must lie in [−1,2]"
    );
    let per_loop = tol / c as f64;
    let mut x = x0.clone();
    for (idx, &si) in s.iter().enumerate() {
        let gamma = fam.loop_at(varphi(fam, c, idx + 1, si));
        x = loop_holonomy(f, &gamma, &x, per_loop)?.point;
    }
    Ok(x)
}

/// Which holonomy map a finite-difference Jacobian refers to.
pub enum HolonomyKind<'a> {
    Unstable { y1: &'a [f64], y2: &'a [f64] },
    Stable { y1: &'a [f64], y2: &'a [f64] },
    Loop(&'a SuLoop),
}

/// Central finite-difference Jacobian of a holonomy map in the fiber chart,
/// with step `h` (default `1e−5` in the CLI).
pub fn holonomy_jacobian(
    f: &SkewProduct,
    kind: &HolonomyKind,
    z: &FiberPoint,
    h: f64,
    tol: f64,
) -> Result<DMatrix<f64>, HolonomyError> {
    let eval = |w: &FiberPoint| -> Result<FiberPoint, HolonomyError> {
        match kind {
            HolonomyKind::Unstable { y1, y2 } => {
                Ok(unstable_holonomy(f, y1, y2, w, tol)?.point)
            }
            HolonomyKind::Stable { y1, y2 } => Ok(stable_holonomy(f, y1, y2, w, tol)?.point),
            HolonomyKind::Loop(gamma) => Ok(loop_holonomy(f, gamma, w, tol)?.point),
        }
    };
    let d = z.coords().len();
    let mut jac = DMatrix::zeros(d, d);
    let center = eval(z)?;
    for k in 0..d {
        let displace = |sign: f64| -> FiberPoint {
            let mut coords = z.coords().to_vec();
            coords[k] += sign * h;
            match z {
                FiberPoint::Torus(_) => FiberPoint::torus(&coords),
                FiberPoint::Sphere(_) => {
                    let n: f64 = coords.iter().map(|x| x * x).sum::<f64>().sqrt();
                    FiberPoint::Sphere(coords.iter().map(|x| x / n).collect())
                }
            }
        };
        let plus = eval(&displace(1.0))?;
        let minus = eval(&displace(-1.0))?;
        // Differences taken as nearest representatives around the center
        // image so the seam of the torus chart cannot corrupt the stencil.
        let dp = chart_diff(&plus, &center);
        let dm = chart_diff(&minus, &center);
        for i in 0..d {
            jac[(i, k)] = (dp[i] - dm[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

fn chart_diff(a: &FiberPoint, b: &FiberPoint) -> Vec<f64> {
    match (a, b) {
        (FiberPoint::Torus(x), FiberPoint::Torus(y)) => torus::diff(x, y),
        (FiberPoint::Sphere(x), FiberPoint::Sphere(y)) => {
            x.iter().zip(y).map(|(p, q)| p - q).collect()
        }
        _ => panic!("fiber manifold mismatch"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skew::{
        build_loop_family, FiberManifold, FiberPrimitive, ModPoint, ModulatedPrimitive,
        Modulation,
    };
    use crate::spectral::ToralAutomorphism;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cat() -> ToralAutomorphism {
        ToralAutomorphism::cat_map()
    }

    /// Decoupled skew product: fiber independent of the base point.
    fn decoupled() -> SkewProduct {
        SkewProduct::decoupled_linear(cat(), cat()).unwrap()
    }

    /// Translation fiber `z ↦ z + τ(y)·v` with `τ(y) = cos(2π(y₁ − 2y₂))`.
    fn translation_skew() -> SkewProduct {
        SkewProduct::new(
            cat(),
            FiberManifold::Torus(2),
            vec![ModulatedPrimitive {
                primitive: FiberPrimitive::Translation { amount: vec![0.13, 0.21] },
                modulation: Modulation::Cosine { freq: vec![1, -2], phase: 0.0 },
                mod_point: ModPoint::Source,
            }],
        )
        .unwrap()
    }

    fn unstable_pair(sigma: f64) -> (Vec<f64>, Vec<f64>) {
        let (_, e_u) = base_splitting(&cat()).unwrap();
        let eu: Vec<f64> = e_u.frame().column(0).iter().cloned().collect();
        let y1 = vec![0.37, 0.58];
        let y2 = torus::add(&y1, &eu.iter().map(|c| sigma * c).collect::<Vec<_>>());
        (y1, y2)
    }

    fn stable_pair(sigma: f64) -> (Vec<f64>, Vec<f64>) {
        let (e_s, _) = base_splitting(&cat()).unwrap();
        let es: Vec<f64> = e_s.frame().column(0).iter().cloned().collect();
        let y1 = vec![0.37, 0.58];
        let y2 = torus::add(&y1, &es.iter().map(|c| sigma * c).collect::<Vec<_>>());
        (y1, y2)
    }

    #[test]
    fn decoupled_holonomies_are_identity() {
        let f = decoupled();
        let (y1, y2) = unstable_pair(0.01);
        let z = FiberPoint::torus(&[0.3, 0.7]);
        let r = unstable_holonomy(&f, &y1, &y2, &z, 1e-10).unwrap();
        assert!(r.point.dist(&z) < 1e-12);
        let (y1, y2) = stable_pair(0.01);
        let r = stable_holonomy(&f, &y1, &y2, &z, 1e-10).unwrap();
        assert!(r.point.dist(&z) < 1e-12);
    }

    #[test]
    fn same_point_holonomy_is_identity() {
        let f = translation_skew();
        let y = vec![0.21, 0.84];
        let z = FiberPoint::torus(&[0.5, 0.25]);
        let r = unstable_holonomy(&f, &y, &y, &z, 1e-10).unwrap();
        assert!(r.point.dist(&z) < 1e-12);
        let r = stable_holonomy(&f, &y, &y, &z, 1e-10).unwrap();
        assert!(r.point.dist(&z) < 1e-12);
    }

    #[test]
    fn rejects_points_off_leaf() {
        let f = translation_skew();
        let (y1, mut y2) = unstable_pair(0.01);
        y2[0] = torus::wrap(y2[0] + 0.01);
        let z = FiberPoint::torus(&[0.0, 0.0]);
        assert!(matches!(
            unstable_holonomy(&f, &y1, &y2, &z, 1e-8),
            Err(HolonomyError::NotOnUnstableLeaf { .. })
        ));
    }

    /// Independent series oracle for translation fibers:
    /// `H^u_{y₁,y₂}(z) = z + Σ_{n≥1} [τ(f^{−n}y₂) − τ(f^{−n}y₁)]·v`.
    #[test]
    fn translation_fiber_matches_series_oracle() {
        let f = translation_skew();
        let tau = |y: &[f64]| (2.0 * std::f64::consts::PI * (y[0] - 2.0 * y[1])).cos();
        let v = [0.13, 0.21];
        let (y1, y2) = unstable_pair(0.013);
        let z = FiberPoint::torus(&[0.41, 0.9]);

        // Direct series summation.  For the cat map the leaf displacement
        // transports analytically: A⁻ⁿδ = λ⁻ⁿδ on E^u with λ = (3+√5)/2.
        let lambda = (3.0 + 5.0f64.sqrt()) / 2.0;
        let inv = cat().inverse().unwrap();
        let mut sum = [0.0, 0.0];
        let mut p1 = y1.clone();
        let delta = torus::diff(&y2, &y1);
        for n in 1..=120 {
            p1 = inv.apply_mod1(&p1);
            let scale = lambda.powi(-n);
            let d: Vec<f64> = delta.iter().map(|c| c * scale).collect();
            let p2 = torus::add(&p1, &d);
            let w = tau(&p2) - tau(&p1);
            sum[0] += w * v[0];
            sum[1] += w * v[1];
        }
        let expect = FiberPoint::torus(&[0.41 + sum[0], 0.9 + sum[1]]);

        let r = unstable_holonomy(&f, &y1, &y2, &z, 1e-9).unwrap();
        assert!(
            r.point.dist(&expect) < 1e-8,
            "series mismatch: {:.3e}",
            r.point.dist(&expect)
        );

        // Stable leg against the forward series.
        let (y1, y2) = stable_pair(0.013);
        let mu = (3.0 - 5.0f64.sqrt()) / 2.0;
        let mut sum = [0.0, 0.0];
        let mut p1 = y1.clone();
        let delta = torus::diff(&y2, &y1);
        for n in 0..120 {
            let scale = mu.powi(n);
            let d: Vec<f64> = delta.iter().map(|c| c * scale).collect();
            let p2 = torus::add(&p1, &d);
            let w = tau(&p1) - tau(&p2);
            sum[0] += w * v[0];
            sum[1] += w * v[1];
            p1 = cat().apply_mod1(&p1);
        }
        let expect = FiberPoint::torus(&[0.41 + sum[0], 0.9 + sum[1]]);
        let r = stable_holonomy(&f, &y1, &y2, &z, 1e-9).unwrap();
        assert!(
            r.point.dist(&expect) < 1e-8,
            "stable series mismatch: {:.3e}",
            r.point.dist(&expect)
        );
    }

    #[test]
    fn holonomy_composition_along_leaf() {
        let f = translation_skew();
        let (_, e_u) = base_splitting(&cat()).unwrap();
        let eu: Vec<f64> = e_u.frame().column(0).iter().cloned().collect();
        let y1 = vec![0.11, 0.71];
        let y2 = torus::add(&y1, &eu.iter().map(|c| 0.006 * c).collect::<Vec<_>>());
        let y3 = torus::add(&y1, &eu.iter().map(|c| 0.014 * c).collect::<Vec<_>>());
        let z = FiberPoint::torus(&[0.27, 0.66]);
        let tol = 1e-9;
        let direct = unstable_holonomy(&f, &y1, &y3, &z, tol).unwrap();
        let first = unstable_holonomy(&f, &y1, &y2, &z, tol).unwrap();
        let second = unstable_holonomy(&f, &y2, &y3, &first.point, tol).unwrap();
        assert!(direct.point.dist(&second.point) < 3.0 * tol);
    }

    #[test]
    fn holonomy_equivariance_along_orbit() {
        // H^u_{y1,y2} = g(y2,·)⁻¹ ∘ H^u_{f(y1),f(y2)} ∘ g(y1,·): sliding one
        // step along the orbit conjugates the holonomy by the fiber maps.
        let f = translation_skew();
        let (y1, y2) = unstable_pair(0.008);
        let z = FiberPoint::torus(&[0.52, 0.13]);
        let tol = 1e-9;
        let lhs = unstable_holonomy(&f, &y1, &y2, &z, tol).unwrap().point;
        let fy1 = cat().apply_mod1(&y1);
        let fy2 = cat().apply_mod1(&y2);
        let up = f.fiber_map(&y1, &z);
        let mid = unstable_holonomy(&f, &fy1, &fy2, &up, tol).unwrap().point;
        let rhs = f.fiber_map_inverse(&y2, &mid);
        assert!(lhs.dist(&rhs) < 2.0 * tol, "equivariance gap {:.3e}", lhs.dist(&rhs));
    }

    #[test]
    fn loop_holonomy_identity_cases() {
        let f = decoupled();
        let fam = build_loop_family(f.base(), &[0.32, 0.47], 0.01).unwrap();
        let z = FiberPoint::torus(&[0.62, 0.05]);
        for t in [0.0, 0.004, 0.01] {
            let gamma = fam.loop_at(t);
            let r = loop_holonomy(&f, &gamma, &z, 1e-9).unwrap();
            assert!(r.point.dist(&z) < 1e-10);
        }
        // Degenerate loop: all legs at y.
        let y = vec![0.32, 0.47];
        let gamma = SuLoop { y: y.clone(), legs: [y.clone(), y.clone(), y.clone()] };
        let f2 = translation_skew();
        let r = loop_holonomy(&f2, &gamma, &z, 1e-9).unwrap();
        assert!(r.point.dist(&z) < 1e-10);
    }

    #[test]
    fn loop_holonomy_matches_series_oracle() {
        let f = translation_skew();
        let fam = build_loop_family(f.base(), &[0.29, 0.52], 0.012).unwrap();
        let gamma = fam.loop_at(0.007);
        let z = FiberPoint::torus(&[0.44, 0.86]);
        let r = loop_holonomy(&f, &gamma, &z, 1e-9).unwrap();

        // Closed-loop series: sum the four legs' series directly.
        let tau = |y: &[f64]| (2.0 * std::f64::consts::PI * (y[0] - 2.0 * y[1])).cos();
        let v = [0.13, 0.21];
        let a = cat();
        let inv = a.inverse().unwrap();
        let mut total = [0.0, 0.0];
        let legs: [(&[f64], &[f64], bool); 4] = [
            (&gamma.y, &gamma.legs[0], true),
            (&gamma.legs[0], &gamma.legs[1], false),
            (&gamma.legs[1], &gamma.legs[2], true),
            (&gamma.legs[2], &gamma.y, false),
        ];
        let lambda = (3.0 + 5.0f64.sqrt()) / 2.0;
        let mu = (3.0 - 5.0f64.sqrt()) / 2.0;
        for (from, to, unstable) in legs {
            let mut p1 = from.to_vec();
            let delta = torus::diff(to, from);
            if unstable {
                for n in 1..=120 {
                    p1 = inv.apply_mod1(&p1);
                    let scale = lambda.powi(-n);
                    let d: Vec<f64> = delta.iter().map(|c| c * scale).collect();
                    let p2 = torus::add(&p1, &d);
                    let w = tau(&p2) - tau(&p1);
                    total[0] += w * v[0];
                    total[1] += w * v[1];
                }
            } else {
                for n in 0..120 {
                    let scale = mu.powi(n);
                    let d: Vec<f64> = delta.iter().map(|c| c * scale).collect();
                    let p2 = torus::add(&p1, &d);
                    let w = tau(&p1) - tau(&p2);
                    total[0] += w * v[0];
                    total[1] += w * v[1];
                    p1 = a.apply_mod1(&p1);
                }
            }
        }
        let expect = FiberPoint::torus(&[0.44 + total[0], 0.86 + total[1]]);
        assert!(
            r.point.dist(&expect) < 1e-8,
            "loop series mismatch {:.3e}",
            r.point.dist(&expect)
        );
    }

    #[test]
    fn phi_map_decoupled_is_constant() {
        let f = decoupled();
        let fam = build_loop_family(f.base(), &[0.36, 0.61], 0.01).unwrap();
        let x0 = FiberPoint::torus(&[0.15, 0.92]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let s = [rng.gen_range(-1.0..2.0), rng.gen_range(-1.0..2.0)];
            let out = phi_map(&f, &fam, &x0, &s, 1e-9).unwrap();
            assert!(out.dist(&x0) < 1e-10);
        }
    }

    #[test]
    fn phi_map_single_coordinate_reduces_to_loop_holonomy() {
        let f = translation_skew();
        let fam = build_loop_family(f.base(), &[0.36, 0.61], 0.01).unwrap();
        let x0 = FiberPoint::torus(&[0.3, 0.3]);
        let s = 0.37;
        // c = 1 slice of a 2-torus fiber map: use the first factor only.
        let direct = loop_holonomy(&f, &fam.loop_at(varphi(&fam, 1, 1, s)), &x0, 1e-9)
            .unwrap()
            .point;
        let via_phi = phi_map(&f, &fam, &x0, &[s], 1e-9).unwrap();
        assert!(direct.dist(&via_phi) < 1e-10);
    }

    #[test]
    fn jacobian_identity_for_decoupled_and_translation() {
        let f = decoupled();
        let (y1, y2) = unstable_pair(0.01);
        let z = FiberPoint::torus(&[0.4, 0.6]);
        let j = holonomy_jacobian(
            &f,
            &HolonomyKind::Unstable { y1: &y1, y2: &y2 },
            &z,
            1e-5,
            1e-10,
        )
        .unwrap();
        assert!((j - DMatrix::<f64>::identity(2, 2)).norm() < 1e-8);

        let f = translation_skew();
        let j = holonomy_jacobian(
            &f,
            &HolonomyKind::Unstable { y1: &y1, y2: &y2 },
            &z,
            1e-5,
            1e-10,
        )
        .unwrap();
        assert!((j - DMatrix::<f64>::identity(2, 2)).norm() < 1e-7);
    }

    #[test]
    fn shear_jacobian_close_to_identity_with_linear_slope() {
        // Shear-bump fiber: ‖J − I‖ ≲ Λ·d(y1,y2), verified by halving the
        // leaf distance.
        let f = SkewProduct::new(
            cat(),
            FiberManifold::Torus(2),
            vec![ModulatedPrimitive {
                primitive: FiberPrimitive::Shear { from: 0, to: 1, strength: 0.5 },
                modulation: Modulation::Cosine { freq: vec![1, 1], phase: 0.1 },
                mod_point: ModPoint::Source,
            }],
        )
        .unwrap();
        let z = FiberPoint::torus(&[0.37, 0.71]);
        let mut norms = Vec::new();
        for sigma in [0.02, 0.01, 0.005, 0.0025] {
            let (y1, y2) = unstable_pair(sigma);
            let j = holonomy_jacobian(
                &f,
                &HolonomyKind::Unstable { y1: &y1, y2: &y2 },
                &z,
                1e-5,
                1e-10,
            )
            .unwrap();
            norms.push((j - DMatrix::<f64>::identity(2, 2)).norm());
        }
        for w in norms.windows(2) {
            let ratio = w[1] / w[0];
            assert!(
                ratio > 0.25 && ratio < 0.9,
                "halving distance should roughly halve ‖J−I‖: {norms:?}"
            );
        }
    }

    #[test]
    fn volume_of_loop_jacobian() {
        let f = SkewProduct::new(
            cat(),
            FiberManifold::Torus(2),
            vec![ModulatedPrimitive {
                primitive: FiberPrimitive::Shear { from: 1, to: 0, strength: 0.6 },
                modulation: Modulation::Cosine { freq: vec![2, -1], phase: 0.05 },
                mod_point: ModPoint::Source,
            }],
        )
        .unwrap();
        let fam = build_loop_family(f.base(), &[0.23, 0.81], 0.012).unwrap();
        let gamma = fam.loop_at(0.008);
        let z = FiberPoint::torus(&[0.55, 0.35]);
        let j = holonomy_jacobian(&f, &HolonomyKind::Loop(&gamma), &z, 1e-5, 1e-10).unwrap();
        let det = j.determinant().abs();
        assert!((det - 1.0).abs() < 1e-4, "det = {det}");
    }
}
