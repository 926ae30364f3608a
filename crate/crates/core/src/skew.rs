//! Skew products `F(y,z) = (f(y), g(y,z))` over linear Anosov bases.
//!
//! Fiber diffeomorphisms are composition lists of invertible primitives
//! (linear toral automorphisms, rigid translations, sine shears, time-1
//! flows of divergence-free fields, sphere rotations), each optionally
//! modulated by a smooth bump or cosine function of the base point.  This
//! guarantees exact inverses and volume flags without arbitrary user code.
//!
//! The base is a toral automorphism, so its stable/unstable leaves are
//! affine subspaces: brackets, loop families and recurrence times have
//! closed-form geometry.

use crate::grassmann::{self, GrassmannPoint};
use crate::spectral::{self, SpectralError, ToralAutomorphism, UNIT_MODULUS_TOL};
use crate::torus;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Chart radius cap keeping brackets and leaf decompositions single-valued.
pub const CHART_RADIUS: f64 = 0.25;

/// RK4 steps per unit time for flow primitives.
pub const RK4_STEPS_PER_UNIT: usize = 64;

#[derive(Debug, Error)]
pub enum SkewError {
    #[error("base map is not Anosov")]
    NotAnosov,
    #[error("bracket arguments leave the local chart (displacement {disp:.3} > {CHART_RADIUS})")]
    OutOfLocalChart { disp: f64 },
    #[error("ball radius {radius} too large (must be < {CHART_RADIUS})")]
    RadiusTooLarge { radius: f64 },
    #[error("sigma {sigma} too large for the local chart")]
    SigmaTooLarge { sigma: f64 },
    #[error("point does not lie on the claimed leaf (residual {residual:.3e})")]
    NotOnLeaf { residual: f64 },
    #[error("spectral error: {0}")]
    Spectral(#[from] SpectralError),
    #[error("invalid skew product: {0}")]
    Invalid(String),
}

/// The fiber manifold: the torus `T^c` or the round sphere `S^c ⊂ ℝ^{c+1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FiberManifold {
    Torus(usize),
    Sphere(usize),
}

impl FiberManifold {
    /// Dimension of the chart in which fiber points and Jacobians are
    /// expressed: `c` for the torus, the ambient `c+1` for the sphere.
    pub fn chart_dim(&self) -> usize {
        match self {
            FiberManifold::Torus(c) => *c,
            FiberManifold::Sphere(c) => *c + 1,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            FiberManifold::Torus(c) | FiberManifold::Sphere(c) => *c,
        }
    }
}

/// A fiber point: torus coordinates in `[0,1)^c` or a unit vector.
#[derive(Debug, Clone, PartialEq)]
pub enum FiberPoint {
    Torus(Vec<f64>),
    Sphere(Vec<f64>),
}

impl FiberPoint {
    pub fn torus(coords: &[f64]) -> Self {
        FiberPoint::Torus(torus::wrap_point(coords))
    }

    /// Normalizes to unit length; the input must be within `1e−6` of the
    /// sphere already (guards against accidentally passing chart data).
    pub fn sphere(coords: &[f64]) -> Self {
        let norm: f64 = coords.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6, "sphere point must be near unit norm");
        FiberPoint::Sphere(coords.iter().map(|x| x / norm).collect())
    }

    pub fn coords(&self) -> &[f64] {
        match self {
            FiberPoint::Torus(v) | FiberPoint::Sphere(v) => v,
        }
    }

    /// Distance in the fiber: toral metric or ambient chordal metric.
    pub fn dist(&self, other: &FiberPoint) -> f64 {
        match (self, other) {
            (FiberPoint::Torus(a), FiberPoint::Torus(b)) => torus::dist(a, b),
            (FiberPoint::Sphere(a), FiberPoint::Sphere(b)) => {
                a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
            }
            _ => panic!("fiber manifold mismatch"),
        }
    }

    fn rebuild(&self, coords: Vec<f64>) -> FiberPoint {
        match self {
            FiberPoint::Torus(_) => FiberPoint::Torus(torus::wrap_point(&coords)),
            FiberPoint::Sphere(_) => {
                let norm: f64 = coords.iter().map(|x| x * x).sum::<f64>().sqrt();
                FiberPoint::Sphere(coords.iter().map(|x| x / norm).collect())
            }
        }
    }
}

/// A point of the total space `Y × N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub base: Vec<f64>,
    pub fiber: FiberPoint,
}

impl Point {
    pub fn new(base: &[f64], fiber: FiberPoint) -> Self {
        Self { base: torus::wrap_point(base), fiber }
    }
}

/// Smooth scalar modulation of a primitive by the base point.
#[derive(Debug, Clone, PartialEq)]
pub enum Modulation {
    /// Constant 1.
    None,
    /// Quintic-smoothstep radial bump: 1 at `center`, 0 outside the ball of
    /// `radius`; C² with compact support and exact support arithmetic.
    Bump { center: Vec<f64>, radius: f64 },
    /// `cos(2π(⟨freq, y⟩ + phase))` — smooth, full support.
    Cosine { freq: Vec<i64>, phase: f64 },
}

/// Quintic smoothstep `s(t) = 6t⁵ − 15t⁴ + 10t³` clamped to `[0,1]`.
fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (t * (6.0 * t - 15.0) + 10.0)
}

impl Modulation {
    pub fn eval(&self, y: &[f64]) -> f64 {
        match self {
            Modulation::None => 1.0,
            Modulation::Bump { center, radius } => {
                let d = torus::dist(y, center);
                if d >= *radius {
                    0.0
                } else {
                    1.0 - smoothstep(d / radius)
                }
            }
            Modulation::Cosine { freq, phase } => {
                let dot: f64 = freq.iter().zip(y).map(|(&k, &c)| k as f64 * c).sum();
                (2.0 * std::f64::consts::PI * (dot + phase)).cos()
            }
        }
    }

    /// Conservative Lipschitz bound with respect to the base point.
    pub fn lipschitz(&self) -> f64 {
        match self {
            Modulation::None => 0.0,
            // max |d/dt smoothstep| = 15/8 at t = 1/2.
            Modulation::Bump { radius, .. } => 1.875 / radius,
            Modulation::Cosine { freq, .. } => {
                let norm: f64 = freq.iter().map(|&k| (k * k) as f64).sum::<f64>().sqrt();
                2.0 * std::f64::consts::PI * norm
            }
        }
    }

    /// Supremum of `|ρ|`.
    pub fn sup(&self) -> f64 {
        1.0
    }
}

/// Where the modulation is evaluated: at the source base point `y` or at the
/// image `f(y)`.  Deformation flows act after the base map, hence `Image`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModPoint {
    Source,
    Image,
}

/// Divergence-free fiber vector fields (the flow and deformation dictionary).
#[derive(Debug, Clone, PartialEq)]
pub enum FiberField {
    /// Constant field on `T^c`.
    Constant(Vec<f64>),
    /// `v_comp = amp · sin(2π(freq·z_dep + phase))` with `comp ≠ dep`;
    /// divergence-free because the component does not depend on its own
    /// coordinate.
    TrigCell { comp: usize, dep: usize, freq: i64, phase: f64, amp: f64 },
    /// Infinitesimal rotation `x ↦ rate·(x_b e_a − x_a e_b)` on `S^c`.
    SphereRotation { axis_a: usize, axis_b: usize, rate: f64 },
    /// Linear combination (used by deformations).
    Sum(Vec<FiberField>),
}

impl FiberField {
    pub fn eval(&self, z: &[f64]) -> Vec<f64> {
        match self {
            FiberField::Constant(v) => v.clone(),
            FiberField::TrigCell { comp, dep, freq, phase, amp } => {
                let mut out = vec![0.0; z.len()];
                out[*comp] = amp
                    * (2.0 * std::f64::consts::PI * (*freq as f64 * z[*dep] + phase)).sin();
                out
            }
            FiberField::SphereRotation { axis_a, axis_b, rate } => {
                let mut out = vec![0.0; z.len()];
                out[*axis_a] = -rate * z[*axis_b];
                out[*axis_b] = rate * z[*axis_a];
                out
            }
            FiberField::Sum(fields) => {
                let mut out = vec![0.0; z.len()];
                for f in fields {
                    for (o, v) in out.iter_mut().zip(f.eval(z)) {
                        *o += v;
                    }
                }
                out
            }
        }
    }

    /// Supremum of `‖V‖` over the fiber.
    pub fn sup_norm(&self) -> f64 {
        match self {
            FiberField::Constant(v) => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            FiberField::TrigCell { amp, .. } => amp.abs(),
            FiberField::SphereRotation { rate, .. } => rate.abs(),
            FiberField::Sum(fields) => fields.iter().map(|f| f.sup_norm()).sum(),
        }
    }

    /// Conservative Lipschitz bound over the fiber.
    pub fn lipschitz(&self) -> f64 {
        match self {
            FiberField::Constant(_) => 0.0,
            FiberField::TrigCell { freq, amp, .. } => {
                2.0 * std::f64::consts::PI * (*freq as f64).abs() * amp.abs()
            }
            FiberField::SphereRotation { rate, .. } => rate.abs(),
            FiberField::Sum(fields) => fields.iter().map(|f| f.lipschitz()).sum(),
        }
    }

    /// Scale the field by a constant.
    pub fn scaled(&self, s: f64) -> FiberField {
        match self {
            FiberField::Constant(v) => {
                FiberField::Constant(v.iter().map(|x| x * s).collect())
            }
            FiberField::TrigCell { comp, dep, freq, phase, amp } => FiberField::TrigCell {
                comp: *comp,
                dep: *dep,
                freq: *freq,
                phase: *phase,
                amp: amp * s,
            },
            FiberField::SphereRotation { axis_a, axis_b, rate } => FiberField::SphereRotation {
                axis_a: *axis_a,
                axis_b: *axis_b,
                rate: rate * s,
            },
            FiberField::Sum(fields) => {
                FiberField::Sum(fields.iter().map(|f| f.scaled(s)).collect())
            }
        }
    }
}

/// Invertible building blocks of the fiber diffeomorphism.
#[derive(Debug, Clone, PartialEq)]
pub enum FiberPrimitive {
    /// Linear toral automorphism of `T^c` (unmodulated: cannot deform an
    /// integer matrix continuously).
    Linear(ToralAutomorphism),
    /// Rigid translation `z ↦ z + ρ(y)·amount` on `T^c`.
    Translation { amount: Vec<f64> },
    /// Sine shear `z_to ↦ z_to + ρ(y)·strength·sin(2π z_from)/(2π)`,
    /// smooth on the torus and volume-preserving.
    Shear { from: usize, to: usize, strength: f64 },
    /// Time-`ρ(y)·time` flow of a divergence-free field, integrated by
    /// fixed-step RK4.
    Flow { field: FiberField, time: f64 },
    /// Rotation by `ρ(y)·angle` in the coordinate plane `(axis_a, axis_b)`
    /// of the ambient space of `S^c`.
    SphereRotation { axis_a: usize, axis_b: usize, angle: f64 },
}

/// A primitive with its base-point modulation.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulatedPrimitive {
    pub primitive: FiberPrimitive,
    pub modulation: Modulation,
    pub mod_point: ModPoint,
}

impl ModulatedPrimitive {
    pub fn plain(primitive: FiberPrimitive) -> Self {
        Self { primitive, modulation: Modulation::None, mod_point: ModPoint::Source }
    }
}

/// RK4 integration of `z' = field(z)` for time `t`; returns the endpoint and
/// a Richardson error estimate per unit time.  Sphere trajectories are
/// renormalized after every step.
fn flow(field: &FiberField, t: f64, z: &[f64], on_sphere: bool) -> (Vec<f64>, f64) {
    let coarse = flow_fixed(field, t, z, on_sphere, RK4_STEPS_PER_UNIT);
    let fine = flow_fixed(field, t, z, on_sphere, 2 * RK4_STEPS_PER_UNIT);
    let diff: f64 = coarse
        .iter()
        .zip(&fine)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    // RK4 is order 4: the fine result's error is ≈ diff/15.
    (fine, diff / 15.0 / t.abs().max(1e-30))
}

fn flow_fixed(
    field: &FiberField,
    t: f64,
    z: &[f64],
    on_sphere: bool,
    steps_per_unit: usize,
) -> Vec<f64> {
    if t == 0.0 {
        return z.to_vec();
    }
    let steps = ((t.abs() * steps_per_unit as f64).ceil() as usize).max(1);
    let h = t / steps as f64;
    let mut cur = z.to_vec();
    let d = cur.len();
    for _ in 0..steps {
        let k1 = field.eval(&cur);
        let mid1: Vec<f64> = (0..d).map(|i| cur[i] + 0.5 * h * k1[i]).collect();
        let k2 = field.eval(&mid1);
        let mid2: Vec<f64> = (0..d).map(|i| cur[i] + 0.5 * h * k2[i]).collect();
        let k3 = field.eval(&mid2);
        let end: Vec<f64> = (0..d).map(|i| cur[i] + h * k3[i]).collect();
        let k4 = field.eval(&end);
        for i in 0..d {
            cur[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if on_sphere {
            let n: f64 = cur.iter().map(|x| x * x).sum::<f64>().sqrt();
            for x in cur.iter_mut() {
                *x /= n;
            }
        }
    }
    cur
}

impl FiberPrimitive {
    /// Apply forward with modulation value `rho`; returns chart coordinates.
    pub(crate) fn apply(&self, rho: f64, z: &[f64], on_sphere: bool) -> Vec<f64> {
        match self {
            FiberPrimitive::Linear(a) => a.apply_mod1(z),
            FiberPrimitive::Translation { amount } => {
                z.iter().zip(amount).map(|(&c, &a)| torus::wrap(c + rho * a)).collect()
            }
            FiberPrimitive::Shear { from, to, strength } => {
                let mut out = z.to_vec();
                out[*to] = torus::wrap(
                    out[*to]
                        + rho * strength * (2.0 * std::f64::consts::PI * z[*from]).sin()
                            / (2.0 * std::f64::consts::PI),
                );
                out
            }
            FiberPrimitive::Flow { field, time } => flow(field, rho * time, z, on_sphere).0,
            FiberPrimitive::SphereRotation { axis_a, axis_b, angle } => {
                let th = rho * angle;
                let (s, c) = th.sin_cos();
                let mut out = z.to_vec();
                out[*axis_a] = c * z[*axis_a] - s * z[*axis_b];
                out[*axis_b] = s * z[*axis_a] + c * z[*axis_b];
                out
            }
        }
    }

    /// Apply the inverse with the same modulation value.
    pub(crate) fn apply_inverse(&self, rho: f64, z: &[f64], on_sphere: bool) -> Vec<f64> {
        match self {
            FiberPrimitive::Linear(a) => {
                a.inverse().expect("unimodular matrices invert exactly").apply_mod1(z)
            }
            FiberPrimitive::Translation { amount } => {
                z.iter().zip(amount).map(|(&c, &a)| torus::wrap(c - rho * a)).collect()
            }
            FiberPrimitive::Shear { from, to, strength } => {
                // Exact: the shear leaves z_from unchanged.
                let mut out = z.to_vec();
                out[*to] = torus::wrap(
                    out[*to]
                        - rho * strength * (2.0 * std::f64::consts::PI * z[*from]).sin()
                            / (2.0 * std::f64::consts::PI),
                );
                out
            }
            FiberPrimitive::Flow { field, time } => flow(field, -rho * time, z, on_sphere).0,
            FiberPrimitive::SphereRotation { axis_a, axis_b, angle } => {
                FiberPrimitive::SphereRotation {
                    axis_a: *axis_a,
                    axis_b: *axis_b,
                    angle: -angle,
                }
                .apply(rho, z, on_sphere)
            }
        }
    }

    /// Jacobian in chart coordinates at `z` (before applying the primitive).
    /// Exact for all primitives except flows, which use central finite
    /// differences with step `h = 1e−6` and one Richardson extrapolation.
    pub(crate) fn jacobian(&self, rho: f64, z: &[f64], on_sphere: bool) -> DMatrix<f64> {
        let d = z.len();
        match self {
            FiberPrimitive::Linear(a) => a.as_dmatrix(),
            FiberPrimitive::Translation { .. } => DMatrix::identity(d, d),
            FiberPrimitive::Shear { from, to, strength } => {
                let mut m = DMatrix::identity(d, d);
                m[(*to, *from)] =
                    rho * strength * (2.0 * std::f64::consts::PI * z[*from]).cos();
                m
            }
            FiberPrimitive::Flow { field, time } => {
                let t = rho * time;
                let h = 1e-6;
                let mut m = DMatrix::zeros(d, d);
                for k in 0..d {
                    let col = |step: f64| -> Vec<f64> {
                        let mut zp = z.to_vec();
                        zp[k] += step;
                        let mut zm = z.to_vec();
                        zm[k] -= step;
                        let fp = flow_fixed(field, t, &zp, on_sphere, RK4_STEPS_PER_UNIT);
                        let fm = flow_fixed(field, t, &zm, on_sphere, RK4_STEPS_PER_UNIT);
                        (0..d).map(|i| (fp[i] - fm[i]) / (2.0 * step)).collect()
                    };
                    let d1 = col(h);
                    let d2 = col(h / 2.0);
                    for i in 0..d {
                        m[(i, k)] = (4.0 * d2[i] - d1[i]) / 3.0;
                    }
                }
                m
            }
            FiberPrimitive::SphereRotation { axis_a, axis_b, angle } => {
                let th = rho * angle;
                let (s, c) = th.sin_cos();
                let mut m = DMatrix::identity(d, d);
                m[(*axis_a, *axis_a)] = c;
                m[(*axis_a, *axis_b)] = -s;
                m[(*axis_b, *axis_a)] = s;
                m[(*axis_b, *axis_b)] = c;
                m
            }
        }
    }

    /// Conservative bound on the fiber displacement caused by a unit change
    /// of the modulation value.
    fn displacement_bound(&self) -> f64 {
        match self {
            FiberPrimitive::Linear(_) => 0.0, // unmodulated
            FiberPrimitive::Translation { amount } => {
                amount.iter().map(|x| x * x).sum::<f64>().sqrt()
            }
            FiberPrimitive::Shear { strength, .. } => {
                strength.abs() / (2.0 * std::f64::consts::PI)
            }
            FiberPrimitive::Flow { field, time } => {
                time.abs() * field.sup_norm() * (field.lipschitz() * time.abs()).exp()
            }
            FiberPrimitive::SphereRotation { angle, .. } => angle.abs(),
        }
    }

    /// Conservative fiber Lipschitz bound of the primitive.
    fn z_lipschitz_bound(&self) -> f64 {
        match self {
            FiberPrimitive::Linear(a) => {
                let svd = a.as_dmatrix().svd(false, false);
                svd.singular_values.iter().cloned().fold(0.0, f64::max)
            }
            FiberPrimitive::Translation { .. } => 1.0,
            FiberPrimitive::Shear { strength, .. } => 1.0 + strength.abs(),
            FiberPrimitive::Flow { field, time } => (field.lipschitz() * time.abs()).exp(),
            FiberPrimitive::SphereRotation { .. } => 1.0,
        }
    }
}

/// A skew product over a toral-automorphism base.
#[derive(Debug, Clone)]
pub struct SkewProduct {
    base: ToralAutomorphism,
    base_inv: ToralAutomorphism,
    manifold: FiberManifold,
    primitives: Vec<ModulatedPrimitive>,
    volume_preserving: bool,
}

impl SkewProduct {
    pub fn new(
        base: ToralAutomorphism,
        manifold: FiberManifold,
        primitives: Vec<ModulatedPrimitive>,
    ) -> Result<Self, SkewError> {
        let base_inv = base.inverse()?;
        // Sanity: primitive indices must fit the chart dimension.
        let d = manifold.chart_dim();
        for p in &primitives {
            let ok = match &p.primitive {
                FiberPrimitive::Linear(a) => {
                    matches!(manifold, FiberManifold::Torus(_)) && a.dim() == d
                }
                FiberPrimitive::Translation { amount } => {
                    matches!(manifold, FiberManifold::Torus(_)) && amount.len() == d
                }
                FiberPrimitive::Shear { from, to, .. } => {
                    matches!(manifold, FiberManifold::Torus(_)) && *from != *to && *from < d && *to < d
                }
                FiberPrimitive::Flow { .. } => true,
                FiberPrimitive::SphereRotation { axis_a, axis_b, .. } => {
                    matches!(manifold, FiberManifold::Sphere(_))
                        && *axis_a != *axis_b
                        && *axis_a < d
                        && *axis_b < d
                }
            };
            if !ok {
                return Err(SkewError::Invalid(format!(
                    "primitive {:?} incompatible with manifold {:?}",
                    p.primitive, manifold
                )));
            }
        }
        Ok(Self { base, base_inv, manifold, primitives, volume_preserving: true })
    }

    /// A decoupled product `base × (fiber primitives independent of y)` is
    /// just a skew product whose modulations are all `None`; this is a
    /// convenience constructor for a linear fiber.
    pub fn decoupled_linear(
        base: ToralAutomorphism,
        fiber: ToralAutomorphism,
    ) -> Result<Self, SkewError> {
        let c = fiber.dim();
        Self::new(
            base,
            FiberManifold::Torus(c),
            vec![ModulatedPrimitive::plain(FiberPrimitive::Linear(fiber))],
        )
    }

    pub fn base(&self) -> &ToralAutomorphism {
        &self.base
    }

    pub fn base_inverse(&self) -> &ToralAutomorphism {
        &self.base_inv
    }

    pub fn manifold(&self) -> FiberManifold {
        self.manifold
    }

    pub fn primitives(&self) -> &[ModulatedPrimitive] {
        &self.primitives
    }

    pub fn volume_preserving(&self) -> bool {
        self.volume_preserving
    }

    /// Append primitives (used by deformations); returns a new skew product.
    pub fn with_appended(&self, extra: Vec<ModulatedPrimitive>) -> Result<Self, SkewError> {
        let mut prims = self.primitives.clone();
        prims.extend(extra);
        Self::new(self.base.clone(), self.manifold, prims)
    }

    fn on_sphere(&self) -> bool {
        matches!(self.manifold, FiberManifold::Sphere(_))
    }

    fn rho(&self, p: &ModulatedPrimitive, y_src: &[f64], y_img: &[f64]) -> f64 {
        match p.mod_point {
            ModPoint::Source => p.modulation.eval(y_src),
            ModPoint::Image => p.modulation.eval(y_img),
        }
    }

    /// Fiber map `g(y, ·)` at source base point `y`.
    pub fn fiber_map(&self, y: &[f64], z: &FiberPoint) -> FiberPoint {
        let y_img = self.base.apply_mod1(y);
        let mut cur = z.coords().to_vec();
        for p in &self.primitives {
            let rho = self.rho(p, y, &y_img);
            cur = p.primitive.apply(rho, &cur, self.on_sphere());
        }
        z.rebuild(cur)
    }

    /// Inverse fiber map `g(y, ·)⁻¹` at source base point `y`.
    pub fn fiber_map_inverse(&self, y: &[f64], z_img: &FiberPoint) -> FiberPoint {
        let y_img = self.base.apply_mod1(y);
        let mut cur = z_img.coords().to_vec();
        for p in self.primitives.iter().rev() {
            let rho = self.rho(p, y, &y_img);
            cur = p.primitive.apply_inverse(rho, &cur, self.on_sphere());
        }
        z_img.rebuild(cur)
    }

    /// `F(y,z) = (f(y), g(y,z))`.
    pub fn evaluate(&self, p: &Point) -> Point {
        let y_img = self.base.apply_mod1(&p.base);
        let fiber = self.fiber_map(&p.base, &p.fiber);
        Point { base: y_img, fiber }
    }

    /// `F⁻¹(y',z') = (f⁻¹(y'), g(f⁻¹(y'), ·)⁻¹(z'))`.
    pub fn evaluate_inverse(&self, p: &Point) -> Point {
        let y_src = self.base_inv.apply_mod1(&p.base);
        let fiber = self.fiber_map_inverse(&y_src, &p.fiber);
        Point { base: y_src, fiber }
    }

    /// Iterate `n` times (negative `n` uses the inverse branch).
    pub fn iterate(&self, p: &Point, n: i64) -> Point {
        let mut cur = p.clone();
        if n >= 0 {
            for _ in 0..n {
                cur = self.evaluate(&cur);
            }
        } else {
            for _ in 0..(-n) {
                cur = self.evaluate_inverse(&cur);
            }
        }
        cur
    }

    /// Jacobian of `g(y,·)` at `z`, in chart coordinates.
    pub fn fiber_jacobian(&self, y: &[f64], z: &FiberPoint) -> DMatrix<f64> {
        let y_img = self.base.apply_mod1(y);
        let mut cur = z.coords().to_vec();
        let d = self.manifold.chart_dim();
        let mut jac = DMatrix::<f64>::identity(d, d);
        for p in &self.primitives {
            let rho = self.rho(p, y, &y_img);
            let step = p.primitive.jacobian(rho, &cur, self.on_sphere());
            jac = step * jac;
            cur = p.primitive.apply(rho, &cur, self.on_sphere());
        }
        jac
    }

    /// Fiber derivative cocycle `Dg^{(n)}` along the orbit of `p`: the
    /// ordered product of fiber Jacobians.  Negative `n` gives the inverse
    /// cocycle along the backward orbit.
    pub fn derivative_cocycle(&self, p: &Point, n: i64) -> DMatrix<f64> {
        let d = self.manifold.chart_dim();
        let mut jac = DMatrix::<f64>::identity(d, d);
        let mut cur = p.clone();
        if n >= 0 {
            for _ in 0..n {
                jac = self.fiber_jacobian(&cur.base, &cur.fiber) * jac;
                cur = self.evaluate(&cur);
            }
        } else {
            for _ in 0..(-n) {
                cur = self.evaluate_inverse(&cur);
                let step = self.fiber_jacobian(&cur.base, &cur.fiber);
                // Deeper backward steps compose on the left.
                jac = step
                    .try_inverse()
                    .expect("fiber Jacobians of invertible primitives are invertible")
                    * jac;
            }
        }
        jac
    }

    /// Conservative bound on the Lipschitz constant of `y ↦ g(y, z)`:
    /// each primitive's base-sensitivity amplified by the fiber Lipschitz
    /// bounds of the later primitives, and the base map's own expansion.
    pub fn fiber_y_lipschitz_bound(&self) -> f64 {
        // ‖f‖ affects primitives modulated at the image point.
        let base_norm = {
            let svd = self.base.as_dmatrix().svd(false, false);
            svd.singular_values.iter().cloned().fold(0.0, f64::max)
        };
        let mut total = 0.0;
        for (i, p) in self.primitives.iter().enumerate() {
            let amplify: f64 = self.primitives[i + 1..]
                .iter()
                .map(|q| q.primitive.z_lipschitz_bound())
                .product();
            let chain = match p.mod_point {
                ModPoint::Source => 1.0,
                ModPoint::Image => base_norm,
            };
            total += amplify * chain * p.modulation.lipschitz() * p.primitive.displacement_bound();
        }
        total
    }

    /// Maximum RK4 flow error estimate per unit time over the given probe
    /// points (0 when no flow primitive is present).
    pub fn max_flow_error(&self, probes: &[Point]) -> f64 {
        let mut worst: f64 = 0.0;
        for p in probes {
            let y_img = self.base.apply_mod1(&p.base);
            let mut cur = p.fiber.coords().to_vec();
            for prim in &self.primitives {
                let rho = self.rho(prim, &p.base, &y_img);
                if let FiberPrimitive::Flow { field, time } = &prim.primitive {
                    let (next, err) = flow(field, rho * time, &cur, self.on_sphere());
                    worst = worst.max(err);
                    cur = next;
                } else {
                    cur = prim.primitive.apply(rho, &cur, self.on_sphere());
                }
            }
        }
        worst
    }
}

/// Stable/unstable splitting of an Anosov toral automorphism, computed by
/// orthogonal subspace iteration (robust to repeated eigenvalues and complex
/// pairs).  Results are memoized per matrix: the splitting is consulted by
/// every bracket and loop validation.
pub fn base_splitting(f: &ToralAutomorphism) -> Result<(GrassmannPoint, GrassmannPoint), SkewError> {
    use std::collections::HashMap;
    use std::sync::Mutex;
    type Key = (usize, Vec<i64>);
    type Frames = ((usize, Vec<f64>), (usize, Vec<f64>));
    static CACHE: Mutex<Option<HashMap<Key, Frames>>> = Mutex::new(None);

    let key: Key = (f.dim(), f.entries().to_vec());
    {
        let guard = CACHE.lock().unwrap();
        if let Some(map) = guard.as_ref() {
            if let Some(((ks, fs), (ku, fu))) = map.get(&key) {
                let d = f.dim();
                let e_s =
                    GrassmannPoint::from_frame(DMatrix::from_column_slice(d, *ks, fs));
                let e_u =
                    GrassmannPoint::from_frame(DMatrix::from_column_slice(d, *ku, fu));
                return Ok((e_s, e_u));
            }
        }
    }
    let result = base_splitting_uncached(f)?;
    let mut guard = CACHE.lock().unwrap();
    let map = guard.get_or_insert_with(HashMap::new);
    map.insert(
        key,
        (
            (result.0.dim(), result.0.frame().as_slice().to_vec()),
            (result.1.dim(), result.1.frame().as_slice().to_vec()),
        ),
    );
    Ok(result)
}

fn base_splitting_uncached(
    f: &ToralAutomorphism,
) -> Result<(GrassmannPoint, GrassmannPoint), SkewError> {
    let summary = spectral::spectral_summary(f);
    if summary.log_moduli.iter().any(|l| l.abs() <= UNIT_MODULUS_TOL) {
        return Err(SkewError::NotAnosov);
    }
    let d = f.dim();
    let k_u = summary.log_moduli.iter().filter(|&&l| l > 0.0).count();
    let k_s = d - k_u;
    let a = f.as_dmatrix();
    let a_inv = f.inverse()?.as_dmatrix();
    let e_u = dominant_subspace(&a, k_u)?;
    let e_s = dominant_subspace(&a_inv, k_s)?;
    for (m, e) in [(&a, &e_u), (&a_inv, &e_s)] {
        let img = grassmann::pushforward(m, e).map_err(|_| SkewError::NotAnosov)?;
        let angle = grassmann::max_principal_angle(e, &img).expect("same dims");
        if angle > 1e-9 {
            return Err(SkewError::NotAnosov);
        }
    }
    Ok((e_s, e_u))
}

/// Dominant invariant `k`-dimensional subspace of `m` by orthogonal
/// iteration from a fixed-seed random start.
fn dominant_subspace(m: &DMatrix<f64>, k: usize) -> Result<GrassmannPoint, SkewError> {
    let d = m.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_ba5e);
    let start = DMatrix::from_fn(d, k, |_, _| rng.gen_range(-1.0..1.0));
    let mut q = grassmann::orthonormalize(&start)
        .map_err(|_| SkewError::Invalid("degenerate iteration start".into()))?;
    for _ in 0..500 {
        q = grassmann::pushforward(m, &q).map_err(|_| SkewError::NotAnosov)?;
    }
    Ok(q)
}

/// Decompose a base displacement into stable and unstable components.
/// Returns `(v_s, v_u)` with `v = v_s + v_u`, `v_s ∈ E^s`, `v_u ∈ E^u`.
pub fn leaf_decompose(
    e_s: &GrassmannPoint,
    e_u: &GrassmannPoint,
    v: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let d = v.len();
    let ks = e_s.dim();
    let ku = e_u.dim();
    assert_eq!(ks + ku, d, "splitting must span the base");
    let mut basis = DMatrix::zeros(d, d);
    basis.view_mut((0, 0), (d, ks)).copy_from(e_s.frame());
    basis.view_mut((0, ks), (d, ku)).copy_from(e_u.frame());
    let rhs = nalgebra::DVector::from_column_slice(v);
    let coeffs = basis
        .lu()
        .solve(&rhs)
        .expect("transverse stable/unstable bases are invertible");
    let vs = e_s.frame() * coeffs.rows(0, ks);
    let vu = e_u.frame() * coeffs.rows(ks, ku);
    (vs.iter().cloned().collect(), vu.iter().cloned().collect())
}

/// The bracket `[y,z]`: the unique intersection of `W^s_loc(y)` and
/// `W^u_loc(z)`, computed from the affine leaf geometry as
/// `z + (unstable component of y − z)` mod 1.
pub fn bracket(
    f: &ToralAutomorphism,
    x: &[f64],
    y: &[f64],
    z: &[f64],
) -> Result<Vec<f64>, SkewError> {
    for pair in [(y, x), (z, x), (y, z)] {
        let disp = torus::diff(pair.0, pair.1);
        let max = disp.iter().fold(0.0f64, |m, &c| m.max(c.abs()));
        if max > CHART_RADIUS {
            return Err(SkewError::OutOfLocalChart { disp: max });
        }
    }
    let (e_s, e_u) = base_splitting(f)?;
    let v = torus::diff(y, z);
    let (_, vu) = leaf_decompose(&e_s, &e_u, &v);
    Ok(torus::add(z, &vu))
}

/// Result of a recurrence-time computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecurrenceTime {
    pub n: u64,
    /// True when the search hit `n_max` without certifying recurrence.
    pub exceeded: bool,
}

/// First time `R(Q)` at which the iterated base ball `Q = B(center, radius)`
/// meets itself, forward or backward:
/// `R(Q) = inf{ n > 0 : F^{−n}(Q) ∩ Q ≠ ∅ or F^{n}(Q) ∩ Q ≠ ∅ }`.
///
/// For a linear base the image of the ball is an ellipsoid contained in
/// `B(f^{±n}(center), ‖A^{±n}‖·radius)`; the intersection test uses this
/// conservative outer bound, so the returned value is a certified lower
/// bound of the true recurrence time.
pub fn recurrence_time(
    f: &ToralAutomorphism,
    center: &[f64],
    radius: f64,
    n_max: u64,
) -> Result<RecurrenceTime, SkewError> {
    if radius >= CHART_RADIUS {
        return Err(SkewError::RadiusTooLarge { radius });
    }
    let f_inv = f.inverse()?;
    let a = f.as_dmatrix();
    let a_inv = f_inv.as_dmatrix();
    let mut fwd = center.to_vec();
    let mut bwd = center.to_vec();
    let mut m_fwd = DMatrix::<f64>::identity(f.dim(), f.dim());
    let mut m_bwd = m_fwd.clone();
    for n in 1..=n_max {
        fwd = f.apply_mod1(&fwd);
        bwd = f_inv.apply_mod1(&bwd);
        m_fwd = &a * &m_fwd;
        m_bwd = &a_inv * &m_bwd;
        let norm_fwd = m_fwd.clone().svd(false, false).singular_values.max();
        let norm_bwd = m_bwd.clone().svd(false, false).singular_values.max();
        let hit_fwd = torus::dist(&fwd, center) <= radius * (norm_fwd + 1.0);
        let hit_bwd = torus::dist(&bwd, center) <= radius * (norm_bwd + 1.0);
        if hit_fwd || hit_bwd {
            return Ok(RecurrenceTime { n, exceeded: false });
        }
        // Once the outer bound covers the whole torus the test must trigger;
        // this is unreachable in practice but keeps the loop finite.
        if radius * (norm_fwd.min(norm_bwd) + 1.0) > (f.dim() as f64).sqrt() {
            return Ok(RecurrenceTime { n, exceeded: false });
        }
    }
    Ok(RecurrenceTime { n: n_max, exceeded: true })
}

/// A 4-legged su-loop: base points `(y₁, y₂, y₃)` with
/// `y₁ ∈ W^u(y)`, `y₂ ∈ W^s(y₁)`, `y₃ ∈ W^u(y₂)`, `y ∈ W^s(y₃)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SuLoop {
    pub y: Vec<f64>,
    pub legs: [Vec<f64>; 3],
}

/// Verify the leaf memberships of an su-loop via the splitting
/// decomposition; the residual of the complementary component must stay
/// below `tol`.
pub fn validate_su_loop(f: &ToralAutomorphism, lp: &SuLoop, tol: f64) -> Result<(), SkewError> {
    let (e_s, e_u) = base_splitting(f)?;
    let pairs: [(&[f64], &[f64], bool); 4] = [
        (&lp.legs[0], &lp.y, true),      // unstable leg
        (&lp.legs[1], &lp.legs[0], false), // stable leg
        (&lp.legs[2], &lp.legs[1], true),
        (&lp.y, &lp.legs[2], false),
    ];
    for (to, from, unstable) in pairs {
        let v = torus::diff(to, from);
        let (vs, vu) = leaf_decompose(&e_s, &e_u, &v);
        let residual = if unstable {
            vs.iter().map(|x| x * x).sum::<f64>().sqrt()
        } else {
            vu.iter().map(|x| x * x).sum::<f64>().sqrt()
        };
        if residual > tol {
            return Err(SkewError::NotOnLeaf { residual });
        }
    }
    Ok(())
}

/// One-parameter family of 4-legged loops
/// `γ(t) = (ψ(t), [ψ(t), z], z)` over the basepoint `y`, with
/// `ψ(t) = y + t·e^u` a unit-speed unstable geodesic and `z = y + (3σ/4)·e^s`.
#[derive(Debug, Clone)]
pub struct LoopFamily {
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub e_u: Vec<f64>,
    pub e_s: Vec<f64>,
    pub sigma: f64,
    /// Parameter range is `[0, c0_inv·σ]`; geodesic parametrization gives
    /// `C₀ = 1` on the lift.
    pub c0_inv: f64,
    /// Measured chart constant: all legs lie in `B(y, C₁σ)`.
    pub c1: f64,
    /// Measured separation of the middle leg from the unstable geodesic,
    /// in units of σ.
    pub separation: f64,
}

impl LoopFamily {
    /// The loop at parameter `t ∈ [0, c0_inv·σ]`.
    pub fn loop_at(&self, t: f64) -> SuLoop {
        assert!(
            (-1e-12..=self.c0_inv * self.sigma + 1e-12).contains(&t),
            "loop parameter out of range"
        );
        let y1 = torus::add(&self.y, &self.e_u.iter().map(|&c| t * c).collect::<Vec<_>>());
        let y2 = torus::add(&self.z, &self.e_u.iter().map(|&c| t * c).collect::<Vec<_>>());
        SuLoop { y: self.y.clone(), legs: [y1, y2, self.z.clone()] }
    }
}

/// Build the loop family at `y` with scale `σ`.  For a linear base the
/// construction is closed-form; properties of the family (geodesic
/// parametrization, chart containment, separation of the middle leg) are
/// verified numerically on 100 sample parameters.
pub fn build_loop_family(
    f: &ToralAutomorphism,
    y: &[f64],
    sigma: f64,
) -> Result<LoopFamily, SkewError> {
    if !(sigma > 0.0) || 3.0 * sigma > CHART_RADIUS {
        return Err(SkewError::SigmaTooLarge { sigma });
    }
    let (e_s, e_u) = base_splitting(f)?;
    // Use the leading column of each frame as the geodesic direction.
    let e_u_vec: Vec<f64> = e_u.frame().column(0).iter().cloned().collect();
    let e_s_vec: Vec<f64> = e_s.frame().column(0).iter().cloned().collect();
    let z = torus::add(y, &e_s_vec.iter().map(|&c| 0.75 * sigma * c).collect::<Vec<_>>());
    let mut fam = LoopFamily {
        y: torus::wrap_point(y),
        z,
        e_u: e_u_vec,
        e_s: e_s_vec,
        sigma,
        c0_inv: 1.0,
        c1: 0.0,
        separation: f64::INFINITY,
    };
    // Measure C₁ and the separation over 100 samples, and validate loops.
    let mut c1: f64 = 0.0;
    let mut sep = f64::INFINITY;
    for i in 0..100 {
        let t = fam.c0_inv * sigma * i as f64 / 99.0;
        let lp = fam.loop_at(t);
        validate_su_loop(f, &lp, 1e-9)?;
        for leg in &lp.legs {
            c1 = c1.max(torus::dist(leg, y) / sigma);
        }
        // Distance of the middle leg from the unstable geodesic through y.
        let v = torus::diff(&lp.legs[1], y);
        let dot: f64 = v.iter().zip(&fam.e_u).map(|(a, b)| a * b).sum();
        let perp: f64 = v
            .iter()
            .zip(&fam.e_u)
            .map(|(a, b)| a - dot * b)
            .map(|c| c * c)
            .sum::<f64>()
            .sqrt();
        sep = sep.min(perp / sigma);
    }
    fam.c1 = c1;
    fam.separation = sep;
    Ok(fam)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cat() -> ToralAutomorphism {
        ToralAutomorphism::cat_map()
    }

    fn cat_skew() -> SkewProduct {
        SkewProduct::decoupled_linear(cat(), cat()).unwrap()
    }

    #[test]
    fn evaluate_examples() {
        let f = cat_skew();
        let p = Point::new(&[0.0, 0.0], FiberPoint::torus(&[0.0, 0.0]));
        let q = f.evaluate(&p);
        assert_eq!(q, p, "origin is a fixed point");

        let p = Point::new(&[0.5, 0.5], FiberPoint::torus(&[0.0, 0.0]));
        let q = f.evaluate(&p);
        assert!(torus::dist(&q.base, &[0.5, 0.0]) < 1e-12);
    }

    #[test]
    fn round_trip_inverse() {
        let f = SkewProduct::new(
            cat(),
            FiberManifold::Torus(2),
            vec![
                ModulatedPrimitive::plain(FiberPrimitive::Linear(cat())),
                ModulatedPrimitive {
                    primitive: FiberPrimitive::Shear { from: 0, to: 1, strength: 0.3 },
                    modulation: Modulation::Bump { center: vec![0.3, 0.4], radius: 0.2 },
                    mod_point: ModPoint::Source,
                },
                ModulatedPrimitive {
                    primitive: FiberPrimitive::Translation { amount: vec![0.11, 0.07] },
                    modulation: Modulation::Cosine { freq: vec![1, -2], phase: 0.3 },
                    mod_point: ModPoint::Image,
                },
            ],
        )
        .unwrap();
        let p = Point::new(&[0.21, 0.68], FiberPoint::torus(&[0.35, 0.81]));
        let q = f.evaluate_inverse(&f.evaluate(&p));
        assert!(torus::dist(&q.base, &p.base) < 1e-10);
        assert!(q.fiber.dist(&p.fiber) < 1e-10);
        let q = f.evaluate(&f.evaluate_inverse(&p));
        assert!(torus::dist(&q.base, &p.base) < 1e-10);
        assert!(q.fiber.dist(&p.fiber) < 1e-10);
    }

    #[test]
    fn round_trip_inverse_with_flow() {
        let field = FiberField::TrigCell { comp: 0, dep: 1, freq: 1, phase: 0.2, amp: 0.4 };
        let f = SkewProduct::new(
            cat(),
            FiberManifold::Torus(2),
            vec![ModulatedPrimitive {
                primitive: FiberPrimitive::Flow { field, time: 1.0 },
                modulation: Modulation::Bump { center: vec![0.5, 0.5], radius: 0.3 },
                mod_point: ModPoint::Source,
            }],
        )
        .unwrap();
        let p = Point::new(&[0.45, 0.55], FiberPoint::torus(&[0.25, 0.66]));
        let q = f.evaluate_inverse(&f.evaluate(&p));
        assert!(q.fiber.dist(&p.fiber) < 1e-10, "err {}", q.fiber.dist(&p.fiber));
    }

    #[test]
    fn derivative_cocycle_examples() {
        // Decoupled linear fiber: cocycle = Aⁿ exactly.
        let f = cat_skew();
        let p = Point::new(&[0.13, 0.29], FiberPoint::torus(&[0.1, 0.2]));
        let c3 = f.derivative_cocycle(&p, 3);
        let a3 = cat().pow(3).unwrap().as_dmatrix();
        assert!((c3 - a3).norm() < 1e-12);

        // Translation-only fiber: identity for all n.
        let f = SkewProduct::new(
            cat(),
            FiberManifold::Torus(2),
            vec![ModulatedPrimitive::plain(FiberPrimitive::Translation {
                amount: vec![0.1, 0.2],
            })],
        )
        .unwrap();
        let c5 = f.derivative_cocycle(&p, 5);
        assert!((c5 - DMatrix::<f64>::identity(2, 2)).norm() < 1e-12);
        let cm5 = f.derivative_cocycle(&p, -5);
        assert!((cm5 - DMatrix::<f64>::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn cocycle_inverse_consistency() {
        let f = SkewProduct::new(
            cat(),
            FiberManifold::Torus(2),
            vec![
                ModulatedPrimitive::plain(FiberPrimitive::Linear(cat())),
                ModulatedPrimitive {
                    primitive: FiberPrimitive::Shear { from: 1, to: 0, strength: 0.2 },
                    modulation: Modulation::Cosine { freq: vec![1, 1], phase: 0.0 },
                    mod_point: ModPoint::Source,
                },
            ],
        )
        .unwrap();
        let p = Point::new(&[0.31, 0.77], FiberPoint::torus(&[0.12, 0.92]));
        // D(g^{-n}) at p equals the inverse of D(g^n) at F^{-n}p.
        let n = 4;
        let back = f.iterate(&p, -n);
        let fwd_from_back = f.derivative_cocycle(&back, n);
        let inv = f.derivative_cocycle(&p, -n);
        let prod = fwd_from_back * inv;
        assert!((prod - DMatrix::<f64>::identity(2, 2)).norm() < 1e-7);
    }

    #[test]
    fn volume_preservation_sampled() {
        let field = FiberField::TrigCell { comp: 1, dep: 0, freq: 2, phase: 0.1, amp: 0.3 };
        let f = SkewProduct::new(
            cat(),
            FiberManifold::Torus(2),
            vec![
                ModulatedPrimitive::plain(FiberPrimitive::Linear(cat())),
                ModulatedPrimitive {
                    primitive: FiberPrimitive::Shear { from: 0, to: 1, strength: 0.4 },
                    modulation: Modulation::Bump { center: vec![0.2, 0.2], radius: 0.15 },
                    mod_point: ModPoint::Source,
                },
                ModulatedPrimitive {
                    primitive: FiberPrimitive::Flow { field, time: 1.0 },
                    modulation: Modulation::None,
                    mod_point: ModPoint::Source,
                },
            ],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let p = Point::new(
                &[rng.gen::<f64>(), rng.gen::<f64>()],
                FiberPoint::torus(&[rng.gen::<f64>(), rng.gen::<f64>()]),
            );
            let det = f.fiber_jacobian(&p.base, &p.fiber).determinant().abs();
            assert!((det - 1.0).abs() < 1e-8, "det = {det}");
        }
    }

    #[test]
    fn base_splitting_cat_map() {
        let (e_s, e_u) = base_splitting(&cat()).unwrap();
        let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
        let expect_u = GrassmannPoint::from_vector(&[phi, 1.0]).unwrap();
        assert!(grassmann::max_principal_angle(&e_u, &expect_u).unwrap() < 1e-9);
        // Stable direction of the symmetric cat map is orthogonal.
        assert!((grassmann::principal_angle(&e_s, &expect_u).unwrap()
            - std::f64::consts::FRAC_PI_2)
            .abs()
            < 1e-9);
    }

    #[test]
    fn base_splitting_block_diagonal() {
        let f = ToralAutomorphism::from_rows(&[
            &[2, 1, 0, 0],
            &[1, 1, 0, 0],
            &[0, 0, 2, 1],
            &[0, 0, 1, 1],
        ])
        .unwrap();
        let (e_s, e_u) = base_splitting(&f).unwrap();
        assert_eq!(e_u.dim(), 2);
        assert_eq!(e_s.dim(), 2);
        let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
        let raw = DMatrix::from_column_slice(4, 2, &[phi, 1.0, 0.0, 0.0, 0.0, 0.0, phi, 1.0]);
        let expect = grassmann::orthonormalize(&raw).unwrap();
        assert!(grassmann::max_principal_angle(&e_u, &expect).unwrap() < 1e-9);
    }

    #[test]
    fn base_splitting_rejects_identity() {
        let id = ToralAutomorphism::from_rows(&[&[1, 0], &[0, 1]]).unwrap();
        assert!(matches!(base_splitting(&id), Err(SkewError::NotAnosov)));
    }

    #[test]
    fn bracket_examples() {
        let f = cat();
        let x = vec![0.5, 0.5];
        assert!(torus::dist(&bracket(&f, &x, &x, &x).unwrap(), &x) < 1e-12);

        let (e_s, e_u) = base_splitting(&f).unwrap();
        let eu: Vec<f64> = e_u.frame().column(0).iter().cloned().collect();
        let es: Vec<f64> = e_s.frame().column(0).iter().cloned().collect();
        let y = torus::add(&x, &eu.iter().map(|c| 0.01 * c).collect::<Vec<_>>());
        let z = torus::add(&x, &es.iter().map(|c| 0.01 * c).collect::<Vec<_>>());
        // z = x on the stable leaf through x: bracket with y gives y's
        // unstable offset applied at z.
        let b = bracket(&f, &x, &y, &z).unwrap();
        let expect: Vec<f64> = (0..2).map(|i| x[i] + 0.01 * eu[i] + 0.01 * es[i]).collect();
        assert!(torus::dist(&b, &torus::wrap_point(&expect)) < 1e-10);

        // z = x: bracket trivializes to y.
        let b = bracket(&f, &x, &y, &x).unwrap();
        assert!(torus::dist(&b, &y) < 1e-10);
    }

    #[test]
    fn bracket_rejects_far_points() {
        let f = cat();
        let r = bracket(&f, &[0.0, 0.0], &[0.4, 0.4], &[0.0, 0.0]);
        assert!(matches!(r, Err(SkewError::OutOfLocalChart { .. })));
    }

    #[test]
    fn recurrence_examples() {
        let f = cat();
        // Fixed point: immediate recurrence.
        let r = recurrence_time(&f, &[0.0, 0.0], 1e-3, 100).unwrap();
        assert_eq!(r.n, 1);
        assert!(!r.exceeded);
        // Non-periodic point, small ball: several steps needed.
        let r = recurrence_time(&f, &[0.3183, 0.5772], 1e-4, 1000).unwrap();
        assert!(r.n >= 5, "R = {}", r.n);
        assert!(!r.exceeded);
        // Radius cap.
        assert!(matches!(
            recurrence_time(&f, &[0.1, 0.1], 0.3, 10),
            Err(SkewError::RadiusTooLarge { .. })
        ));
    }

    #[test]
    fn loop_family_geometry() {
        let f = cat();
        let fam = build_loop_family(&f, &[0.31, 0.41], 1e-3).unwrap();
        // Geodesic parametrization: d(ψ(s), ψ(t)) = |s−t| exactly.
        let l1 = fam.loop_at(0.0);
        let l2 = fam.loop_at(fam.c0_inv * fam.sigma);
        assert!(
            (torus::dist(&l1.legs[0], &l2.legs[0]) - fam.c0_inv * fam.sigma).abs() < 1e-12
        );
        // Endpoint case: ψ(0) = y and the middle leg equals z.
        assert!(torus::dist(&l1.legs[0], &fam.y) < 1e-12);
        assert!(torus::dist(&l1.legs[1], &fam.z) < 1e-12);
        assert!(torus::dist(&l1.legs[2], &fam.z) < 1e-12);
        // All legs within B(y, C₁σ) with C₁ ≤ 3.
        assert!(fam.c1 <= 3.0, "C₁ = {}", fam.c1);
        // The middle leg stays separated from the unstable geodesic.
        assert!(fam.separation > 0.1, "separation = {}", fam.separation);
        // Every sampled loop validates as an su-loop.
        for i in 0..10 {
            let t = fam.c0_inv * fam.sigma * i as f64 / 9.0;
            validate_su_loop(&f, &fam.loop_at(t), 1e-9).unwrap();
        }
    }

    #[test]
    fn loop_family_rejects_large_sigma() {
        assert!(matches!(
            build_loop_family(&cat(), &[0.5, 0.5], 0.2),
            Err(SkewError::SigmaTooLarge { .. })
        ));
    }

    #[test]
    fn iterate_associativity() {
        let f = cat_skew();
        let p = Point::new(&[0.19, 0.83], FiberPoint::torus(&[0.41, 0.07]));
        let a = f.iterate(&f.iterate(&p, 3), 2);
        let b = f.iterate(&p, 5);
        assert!(torus::dist(&a.base, &b.base) < 1e-9);
        assert!(a.fiber.dist(&b.fiber) < 1e-9);
    }
}
