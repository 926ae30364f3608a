//! Parameterized fiber deformations of a skew product and numerical
//! verification of the derivative estimates for perturbed loop holonomies.
//!
//! An infinitesimal deformation is a finite sum
//!
//! ```text
//! V(B, x) = Σ_t  B_{param(t)} · ρ_t(π_Y x) · V_t(π_N x)
//! ```
//!
//! of bump-localized divergence-free fiber fields; the perturbed skew
//! product is `F̂(b,x) = Φ_{V(b,·)}(F(x), 1)` — the original map followed by
//! the time-1 fiber flow of `V(b,·)`.  Since the flow acts only on the fiber
//! and after the base map, the center foliation is preserved exactly and the
//! perturbation is supported where the *image* base point lies in a bump.

use crate::holonomy::{
    loop_holonomy, stable_holonomy, unstable_holonomy, HolonomyError, HolonomyKind,
    holonomy_jacobian,
};
use crate::skew::{
    recurrence_time, FiberField, FiberPoint, FiberPrimitive, ModPoint, ModulatedPrimitive,
    Modulation, Point, SkewError, SkewProduct, SuLoop, build_loop_family,
};
use crate::torus;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DeformError {
    #[error("bump supports overlap or touch a loop leg (distance {dist:.3e} ≤ {required:.3e})")]
    OverlappingSupports { dist: f64, required: f64 },
    #[error("RK4 flow error estimate {error:.3e} exceeds 1e-8 per unit time")]
    FlowStepRejected { error: f64 },
    #[error("skew product error: {0}")]
    Skew(#[from] SkewError),
    #[error("holonomy error: {0}")]
    Holonomy(#[from] HolonomyError),
}

/// One term of the deformation sum: a base modulation, a fiber field, and
/// the index of the parameter that scales it.
#[derive(Debug, Clone)]
pub struct DeformTerm {
    pub modulation: Modulation,
    pub field: FiberField,
    pub param: usize,
}

/// An `I`-parameter infinitesimal deformation.
#[derive(Debug, Clone)]
pub struct InfinitesimalDeformation {
    pub params: usize,
    pub terms: Vec<DeformTerm>,
    /// Common bump radius of the localized terms (0 when none).
    pub radius: f64,
    /// Measured adaptedness constant: Lipschitz bound of `V(B,·)` per unit
    /// `‖B‖_∞`, over base and fiber variables.
    pub lipschitz_bound: f64,
}

impl InfinitesimalDeformation {
    /// `V(B, (y,z))`; linear in `B` by construction.
    pub fn eval(&self, b: &[f64], y: &[f64], z: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.params);
        let mut out = vec![0.0; z.len()];
        for t in &self.terms {
            let w = b[t.param] * t.modulation.eval(y);
            if w != 0.0 {
                for (o, v) in out.iter_mut().zip(t.field.eval(z)) {
                    *o += w * v;
                }
            }
        }
        out
    }

    /// True when some term's bump is nonzero at `y` (globally-modulated
    /// terms count everywhere).
    pub fn supports(&self, y: &[f64]) -> bool {
        self.terms.iter().any(|t| t.modulation.eval(y) != 0.0)
    }

    /// Globally supported single-field deformation (testing hook; skips all
    /// disjointness checks by construction).
    pub fn global(field: FiberField) -> Self {
        let lipschitz_bound = field.lipschitz();
        InfinitesimalDeformation {
            params: 1,
            terms: vec![DeformTerm {
                modulation: Modulation::None,
                field,
                param: 0,
            }],
            radius: 0.0,
            lipschitz_bound,
        }
    }
}

/// Build a deformation with one parameter per (loop, dictionary field)
/// pair: bumps of the given radius centered at each loop's first leg
/// endpoint.  Bump supports must be pairwise disjoint and disjoint from all
/// non-first-leg loop points — checked, not assumed.
pub fn build_deformation(
    loops: &[SuLoop],
    radius: f64,
    dictionary: &[FiberField],
) -> Result<InfinitesimalDeformation, DeformError> {
    assert!(radius > 0.0);
    let centers: Vec<&Vec<f64>> = loops.iter().map(|lp| &lp.legs[0]).collect();
    // Pairwise disjoint supports.
    for i in 0..centers.len() {
        for j in i + 1..centers.len() {
            let d = torus::dist(centers[i], centers[j]);
            if d <= 2.0 * radius {
                return Err(DeformError::OverlappingSupports {
                    dist: d,
                    required: 2.0 * radius,
                });
            }
        }
    }
    // Disjoint from every loop's non-first-leg points.
    for center in &centers {
        for lp in loops {
            for pt in [&lp.y, &lp.legs[1], &lp.legs[2]] {
                let d = torus::dist(center, pt);
                if d <= radius {
                    return Err(DeformError::OverlappingSupports { dist: d, required: radius });
                }
            }
        }
    }
    let mut terms = Vec::new();
    let mut lip: f64 = 0.0;
    for (li, center) in centers.iter().enumerate() {
        for (fi, field) in dictionary.iter().enumerate() {
            let modulation = Modulation::Bump { center: (*center).clone(), radius };
            lip = lip
                .max(modulation.lipschitz() * field.sup_norm() + field.lipschitz());
            terms.push(DeformTerm {
                modulation,
                field: field.clone(),
                param: li * dictionary.len() + fi,
            });
        }
    }
    Ok(InfinitesimalDeformation {
        params: loops.len() * dictionary.len(),
        terms,
        radius,
        lipschitz_bound: lip,
    })
}

/// `F̂(b,·)`: the skew product whose fiber maps are `g` followed by the
/// time-1 flow of `V(b,·)`, modulated at the image base point.  Terms with
/// zero coefficient are dropped, so `b = 0` returns `F` exactly.
pub fn perturbed_skew(
    f: &SkewProduct,
    v: &InfinitesimalDeformation,
    b: &[f64],
) -> Result<SkewProduct, DeformError> {
    assert_eq!(b.len(), v.params);
    let extra: Vec<ModulatedPrimitive> = v
        .terms
        .iter()
        .filter(|t| b[t.param] != 0.0)
        .map(|t| ModulatedPrimitive {
            primitive: FiberPrimitive::Flow { field: t.field.scaled(b[t.param]), time: 1.0 },
            modulation: t.modulation.clone(),
            mod_point: ModPoint::Image,
        })
        .collect();
    let fhat = f.with_appended(extra)?;
    // Reject unresolved flows: probe the RK4 error estimate at deterministic
    // sample points.
    let mut rng = ChaCha8Rng::seed_from_u64(0xf10a7);
    let dim = f.base().dim();
    let cdim = f.manifold().chart_dim();
    let probes: Vec<Point> = (0..16)
        .map(|_| {
            let base: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.0..1.0)).collect();
            let fiber: Vec<f64> = (0..cdim).map(|_| rng.gen_range(0.0..1.0)).collect();
            Point::new(&base, FiberPoint::torus(&fiber))
        })
        .collect();
    let err = fhat.max_flow_error(&probes);
    if err > 1e-8 {
        return Err(DeformError::FlowStepRejected { error: err });
    }
    Ok(fhat)
}

/// Report of the linear-approximation check: per parameter, the residual
/// between the finite-difference derivative of `b ↦ H_{F̂(b,·),γ}(x)` and
/// the prediction obtained by pushing `V(e_j, ·)` evaluated at the first
/// leg's endpoint through the Jacobians of the remaining three legs.
#[derive(Debug, Clone)]
pub struct LinearApproxReport {
    pub residuals: Vec<f64>,
    pub fd_norms: Vec<f64>,
    pub predicted_norms: Vec<f64>,
    pub max_residual: f64,
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

/// Verify the linear approximation of the perturbed loop holonomy at `b=0`.
/// Finite differences use Richardson pairing of steps `h` and `h/2`.
pub fn verify_linear_approx(
    f: &SkewProduct,
    v: &InfinitesimalDeformation,
    gamma: &SuLoop,
    x: &FiberPoint,
    h: f64,
    tol: f64,
) -> Result<LinearApproxReport, DeformError> {
    // Supports must avoid the loop's non-first-leg points.
    for t in &v.terms {
        if let Modulation::Bump { center, radius } = &t.modulation {
            for pt in [&gamma.y, &gamma.legs[1], &gamma.legs[2]] {
                let d = torus::dist(center, pt);
                if d <= *radius {
                    return Err(DeformError::OverlappingSupports {
                        dist: d,
                        required: *radius,
                    });
                }
            }
        }
    }

    // Landing point of the first (unstable) leg.
    let x1 = unstable_holonomy(f, &gamma.y, &gamma.legs[0], x, tol)?.point;
    // Jacobians of the remaining three legs.
    let j2 = holonomy_jacobian(
        f,
        &HolonomyKind::Stable { y1: &gamma.legs[0], y2: &gamma.legs[1] },
        &x1,
        1e-5,
        tol,
    )?;
    let x2 = stable_holonomy(f, &gamma.legs[0], &gamma.legs[1], &x1, tol)?.point;
    let j3 = holonomy_jacobian(
        f,
        &HolonomyKind::Unstable { y1: &gamma.legs[1], y2: &gamma.legs[2] },
        &x2,
        1e-5,
        tol,
    )?;
    let x3 = unstable_holonomy(f, &gamma.legs[1], &gamma.legs[2], &x2, tol)?.point;
    let j4 = holonomy_jacobian(
        f,
        &HolonomyKind::Stable { y1: &gamma.legs[2], y2: &gamma.y },
        &x3,
        1e-5,
        tol,
    )?;
    let push = j4 * j3 * j2;

    let mut residuals = Vec::with_capacity(v.params);
    let mut fd_norms = Vec::with_capacity(v.params);
    let mut predicted_norms = Vec::with_capacity(v.params);
    for j in 0..v.params {
        let holonomy_at = |t: f64| -> Result<FiberPoint, DeformError> {
            let mut b = vec![0.0; v.params];
            b[j] = t;
            let fhat = perturbed_skew(f, v, &b)?;
            Ok(loop_holonomy(&fhat, gamma, x, tol)?.point)
        };
        let central = |step: f64| -> Result<Vec<f64>, DeformError> {
            let plus = holonomy_at(step)?;
            let minus = holonomy_at(-step)?;
            Ok(chart_diff(&plus, &minus)
                .iter()
                .map(|d| d / (2.0 * step))
                .collect())
        };
        let d_h = central(h)?;
        let d_h2 = central(h / 2.0)?;
        let fd: Vec<f64> = d_h
            .iter()
            .zip(&d_h2)
            .map(|(a, b)| (4.0 * b - a) / 3.0)
            .collect();

        let mut e = vec![0.0; v.params];
        e[j] = 1.0;
        let vec_at_leg1 = v.eval(&e, &gamma.legs[0], x1.coords());
        let predicted = &push * DVector::from_column_slice(&vec_at_leg1);

        let residual = fd
            .iter()
            .zip(predicted.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        residuals.push(residual);
        fd_norms.push(fd.iter().map(|x| x * x).sum::<f64>().sqrt());
        predicted_norms.push(predicted.norm());
    }
    let max_residual = residuals.iter().cloned().fold(0.0, f64::max);
    Ok(LinearApproxReport { residuals, fd_norms, predicted_norms, max_residual })
}

/// One point of the σ-sweep: shrinking σ localizes the support `Q` and
/// grows its certified recurrence-time lower bound `R(Q)`.
#[derive(Debug, Clone, Copy)]
pub struct SweepPoint {
    pub sigma: f64,
    pub rq: u64,
    pub residual: f64,
}

/// Run `verify_linear_approx` on self-similar instances at each σ: loop
/// family at `y`, loop at mid-parameter, single-field deformation of radius
/// `σ/8` at the first leg endpoint.
pub fn linear_approx_sweep(
    f: &SkewProduct,
    y: &[f64],
    sigmas: &[f64],
    field: &FiberField,
    x: &FiberPoint,
    h: f64,
    tol: f64,
    n_max: u64,
) -> Result<Vec<SweepPoint>, DeformError> {
    let mut out = Vec::with_capacity(sigmas.len());
    for &sigma in sigmas {
        let fam = build_loop_family(f.base(), y, sigma)?;
        let gamma = fam.loop_at(0.5 * fam.c0_inv * sigma);
        let radius = sigma / 8.0;
        let v = build_deformation(std::slice::from_ref(&gamma), radius, std::slice::from_ref(field))?;
        let rq = recurrence_time(f.base(), &gamma.legs[0], radius, n_max)?;
        let report = verify_linear_approx(f, &v, &gamma, x, h, tol)?;
        out.push(SweepPoint { sigma, rq: rq.n, residual: report.max_residual });
    }
    Ok(out)
}

/// Report of the a-priori derivative estimate: the parameter-direction
/// derivative of the perturbed unstable holonomy scales linearly with the
/// leaf distance.
#[derive(Debug, Clone)]
pub struct AprioriReport {
    /// Sup over samples and parameters of `‖∂_b H^u_{F̂,y1,y2}‖` at `b=0`.
    pub sup_derivative: f64,
    /// Same bound with the leaf distance halved.
    pub sup_derivative_half: f64,
    /// `sup_half / sup`; linear scaling puts this near 1/2.
    pub ratio: f64,
    pub linear_scaling_ok: bool,
}

/// Measure the parameter derivative of the perturbed unstable holonomy over
/// fiber samples and check its linear scaling in the leaf distance.
pub fn verify_apriori(
    f: &SkewProduct,
    v: &InfinitesimalDeformation,
    y1: &[f64],
    y2: &[f64],
    samples: &[FiberPoint],
    h: f64,
    tol: f64,
) -> Result<AprioriReport, DeformError> {
    let sup_at = |target: &[f64]| -> Result<f64, DeformError> {
        let mut sup: f64 = 0.0;
        for z in samples {
            for j in 0..v.params {
                let mut b = vec![0.0; v.params];
                b[j] = h;
                let plus = unstable_holonomy(&perturbed_skew(f, v, &b)?, y1, target, z, tol)?;
                b[j] = -h;
                let minus = unstable_holonomy(&perturbed_skew(f, v, &b)?, y1, target, z, tol)?;
                let d = chart_diff(&plus.point, &minus.point);
                let norm =
                    d.iter().map(|c| c * c).sum::<f64>().sqrt() / (2.0 * h);
                sup = sup.max(norm);
            }
        }
        Ok(sup)
    };
    let sup_full = sup_at(y2)?;
    // Halve the leaf distance along the displacement.
    let delta = torus::diff(y2, y1);
    let mid = torus::add(y1, &delta.iter().map(|c| c / 2.0).collect::<Vec<_>>());
    let sup_half = sup_at(&mid)?;
    let ratio = if sup_full > 0.0 { sup_half / sup_full } else { 0.0 };
    let linear_scaling_ok = sup_full == 0.0 || (0.25..=4.0).contains(&(2.0 * ratio));
    Ok(AprioriReport { sup_derivative: sup_full, sup_derivative_half: sup_half, ratio, linear_scaling_ok })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skew::{base_splitting, FiberManifold};
    use crate::spectral::ToralAutomorphism;

    fn cat() -> ToralAutomorphism {
        ToralAutomorphism::cat_map()
    }

    /// Translation fiber: decoupled in the y-sense relevant here (rigid
    /// translation, identity derivative, no base modulation).
    fn rigid_skew() -> SkewProduct {
        SkewProduct::new(
            cat(),
            FiberManifold::Torus(2),
            vec![ModulatedPrimitive::plain(FiberPrimitive::Translation {
                amount: vec![0.171, 0.093],
            })],
        )
        .unwrap()
    }

    fn family_and_loop(sigma: f64) -> (SkewProduct, SuLoop) {
        let f = rigid_skew();
        let fam = build_loop_family(f.base(), &[0.33, 0.71], sigma).unwrap();
        let gamma = fam.loop_at(0.5 * fam.c0_inv * sigma);
        (f, gamma)
    }

    #[test]
    fn single_term_eval_and_linearity() {
        let (_, gamma) = family_and_loop(0.02);
        let dict = [FiberField::Constant(vec![0.3, -0.1])];
        let v = build_deformation(std::slice::from_ref(&gamma), 0.02 / 8.0, &dict).unwrap();
        assert_eq!(v.params, 1);
        // At the bump center: V(B,x) = B·1·v.
        let at = v.eval(&[2.0], &gamma.legs[0], &[0.5, 0.5]);
        assert!((at[0] - 0.6).abs() < 1e-15 && (at[1] + 0.2).abs() < 1e-15);
        // Linearity in B, exactly.
        let a = v.eval(&[1.3], &gamma.legs[0], &[0.2, 0.8]);
        let b1 = v.eval(&[1.0], &gamma.legs[0], &[0.2, 0.8]);
        for (x, y) in a.iter().zip(&b1) {
            assert_eq!(*x, 1.3 * y);
        }
        // Support containment, exactly.
        let far = v.eval(&[1.0], &[0.9, 0.1], &[0.5, 0.5]);
        assert!(far.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn zero_parameters_give_zero_field() {
        let (_, gamma) = family_and_loop(0.02);
        let v = build_deformation(std::slice::from_ref(&gamma), 0.02 / 8.0, &[]).unwrap();
        assert_eq!(v.params, 0);
        let out = v.eval(&[], &gamma.legs[0], &[0.1, 0.2]);
        assert!(out.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn separated_loops_succeed_close_loops_fail() {
        let f = rigid_skew();
        let sigma = 0.015;
        let fam1 = build_loop_family(f.base(), &[0.2, 0.2], sigma).unwrap();
        let fam2 = build_loop_family(f.base(), &[0.7, 0.7], sigma).unwrap();
        let g1 = fam1.loop_at(0.5 * sigma);
        let g2 = fam2.loop_at(0.5 * sigma);
        let dict = [FiberField::Constant(vec![0.1, 0.0])];
        let radius = sigma / 12.0;
        assert!(build_deformation(&[g1.clone(), g2], radius, &dict).is_ok());
        // Two copies of the same loop: supports coincide.
        let err = build_deformation(&[g1.clone(), g1], radius, &dict);
        assert!(matches!(err, Err(DeformError::OverlappingSupports { .. })));
    }

    #[test]
    fn zero_parameter_vector_returns_f_exactly() {
        let (f, gamma) = family_and_loop(0.02);
        let dict = [FiberField::Constant(vec![0.3, -0.1])];
        let v = build_deformation(std::slice::from_ref(&gamma), 0.02 / 8.0, &dict).unwrap();
        let fhat = perturbed_skew(&f, &v, &[0.0]).unwrap();
        assert_eq!(fhat.primitives().len(), f.primitives().len());
        let p = Point::new(&[0.4, 0.9], FiberPoint::torus(&[0.6, 0.1]));
        assert_eq!(fhat.evaluate(&p), f.evaluate(&p));
    }

    #[test]
    fn global_constant_field_gives_rigid_translation() {
        let f = rigid_skew();
        let v = InfinitesimalDeformation::global(FiberField::Constant(vec![0.25, -0.125]));
        let b = 0.4;
        let fhat = perturbed_skew(&f, &v, &[b]).unwrap();
        let p = Point::new(&[0.3, 0.5], FiberPoint::torus(&[0.2, 0.7]));
        let unperturbed = f.evaluate(&p);
        let perturbed = fhat.evaluate(&p);
        let d = chart_diff(&perturbed.fiber, &unperturbed.fiber);
        assert!((d[0] - b * 0.25).abs() < 1e-12);
        assert!((d[1] + b * 0.125).abs() < 1e-12);
        assert_eq!(perturbed.base, unperturbed.base);
    }

    #[test]
    fn divergence_free_flow_preserves_volume() {
        let f = rigid_skew();
        let v = InfinitesimalDeformation::global(FiberField::TrigCell {
            comp: 0,
            dep: 1,
            freq: 2,
            phase: 0.3,
            amp: 0.4,
        });
        let fhat = perturbed_skew(&f, &v, &[0.7]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let y: Vec<f64> = (0..2).map(|_| rng.gen_range(0.0..1.0)).collect();
            let z = FiberPoint::torus(&[rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]);
            let det = fhat.fiber_jacobian(&y, &z).determinant().abs();
            assert!((det - 1.0).abs() < 1e-8, "det = {det}");
        }
    }

    #[test]
    fn center_foliation_preserved_exactly() {
        let (f, gamma) = family_and_loop(0.02);
        let dict = [FiberField::Constant(vec![0.3, -0.1])];
        let v = build_deformation(std::slice::from_ref(&gamma), 0.02 / 8.0, &dict).unwrap();
        let fhat = perturbed_skew(&f, &v, &[0.5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let p = Point::new(
                &[rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)],
                FiberPoint::torus(&[rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]),
            );
            assert_eq!(fhat.evaluate(&p).base, f.evaluate(&p).base);
        }
    }

    #[test]
    fn linear_approx_zero_deformation() {
        let (f, gamma) = family_and_loop(0.02);
        let v = build_deformation(std::slice::from_ref(&gamma), 0.02 / 8.0, &[]).unwrap();
        let report =
            verify_linear_approx(&f, &v, &gamma, &FiberPoint::torus(&[0.4, 0.6]), 1e-4, 1e-11)
                .unwrap();
        assert!(report.residuals.is_empty());
        assert_eq!(report.max_residual, 0.0);
    }

    #[test]
    fn linear_approx_translation_field() {
        let (f, gamma) = family_and_loop(0.02);
        let dict = [FiberField::Constant(vec![0.3, -0.1])];
        let v = build_deformation(std::slice::from_ref(&gamma), 0.02 / 8.0, &dict).unwrap();
        let report =
            verify_linear_approx(&f, &v, &gamma, &FiberPoint::torus(&[0.4, 0.6]), 1e-4, 1e-11)
                .unwrap();
        // Both sides equal the constant translation vector up to orbit
        // re-entry corrections and the finite-difference floor.
        assert!(
            report.max_residual < 1e-7,
            "residual {:.3e}",
            report.max_residual
        );
        assert!((report.predicted_norms[0] - (0.3f64 * 0.3 + 0.1 * 0.1).sqrt()).abs() < 1e-8);
    }

    #[test]
    fn apriori_zero_deformation_and_ratio() {
        let f = rigid_skew();
        let (_, e_u) = base_splitting(f.base()).unwrap();
        let eu: Vec<f64> = e_u.frame().column(0).iter().cloned().collect();
        let y1 = vec![0.37, 0.58];
        let y2 = torus::add(&y1, &eu.iter().map(|c| 0.02 * c).collect::<Vec<_>>());
        let samples = [FiberPoint::torus(&[0.3, 0.3]), FiberPoint::torus(&[0.8, 0.1])];
        let v0 = build_deformation(
            std::slice::from_ref(&build_loop_family(f.base(), &[0.1, 0.9], 0.02).unwrap().loop_at(0.01)),
            0.002,
            &[],
        )
        .unwrap();
        let r = verify_apriori(&f, &v0, &y1, &y2, &samples, 1e-4, 1e-11).unwrap();
        assert_eq!(r.sup_derivative, 0.0);
        assert!(r.linear_scaling_ok);
    }

    #[test]
    fn apriori_linear_scaling_with_modulated_field() {
        // A globally-modulated cosine bump deformation: the parameter
        // derivative shrinks linearly with the leaf distance.
        let f = rigid_skew();
        let (_, e_u) = base_splitting(f.base()).unwrap();
        let eu: Vec<f64> = e_u.frame().column(0).iter().cloned().collect();
        let y1 = vec![0.37, 0.58];
        let y2 = torus::add(&y1, &eu.iter().map(|c| 0.02 * c).collect::<Vec<_>>());
        let v = InfinitesimalDeformation {
            params: 1,
            terms: vec![DeformTerm {
                modulation: Modulation::Cosine { freq: vec![1, -1], phase: 0.2 },
                field: FiberField::Constant(vec![0.2, 0.1]),
                param: 0,
            }],
            radius: 0.0,
            lipschitz_bound: 0.0,
        };
        let samples = [FiberPoint::torus(&[0.3, 0.3])];
        let r = verify_apriori(&f, &v, &y1, &y2, &samples, 1e-4, 1e-11).unwrap();
        assert!(r.sup_derivative > 0.0);
        assert!(r.linear_scaling_ok, "ratio = {}", r.ratio);
    }

    #[test]
    fn sweep_residuals_decay_with_recurrence_time() {
        let f = rigid_skew();
        let field = FiberField::Constant(vec![0.3, -0.1]);
        let points = linear_approx_sweep(
            &f,
            &[0.33, 0.71],
            &[0.04, 0.02, 0.01, 0.005],
            &field,
            &FiberPoint::torus(&[0.4, 0.6]),
            1e-4,
            1e-11,
            200,
        )
        .unwrap();
        assert_eq!(points.len(), 4);
        // R(Q) grows as σ shrinks.
        for w in points.windows(2) {
            assert!(w[1].rq >= w[0].rq, "{points:?}");
        }
    }
}
