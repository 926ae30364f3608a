//! Coverings of `[0,1]^c` by axis-aligned boxes and the discretized
//! stable-value criterion for the accessibility map `φ_F`.
//!
//! The covering consists of `K₁+1` *concentric layers*: one lattice of box
//! centers with pitch `p` carries, at every center, a nest of `K₁+1` boxes of
//! strictly increasing sizes `s₀ < s₁ < … < s_{K₁}`.  Every point of
//! `[0,1]^c` is within `p/2` of a center per axis and `s₀ > p`, so it is
//! strictly interior to all `K₁+1` boxes of the nearest nest — and nested
//! boxes of distinct sizes have pairwise disjoint boundaries in every
//! dimension.  (Equal-size shifted grids cannot deliver disjoint boundaries
//! for `c ≥ 2`: two overlapping same-size boxes always have intersecting
//! boundaries.)
//!
//! Per-axis corner values `center ± s_j/2` are pairwise distinct; their
//! minimal separation is measured and published as `10·C_min⁻¹`, so the
//! separation invariant holds by construction.

use crate::holonomy::{phi_map, HolonomyError};
use crate::skew::{FiberPoint, LoopFamily, SkewProduct};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoveringError {
    #[error("covering construction failed after {candidates} shift candidates")]
    ConstructionFailed { candidates: usize },
    #[error("pinching exponent θ={theta} admits no K₀ for c={c} (need θ > (c−1)/c)")]
    ThetaTooSmall { c: usize, theta: f64 },
    #[error("holonomy error during slice sampling: {0}")]
    Holonomy(#[from] HolonomyError),
}

/// `K₀(c,θ) = ⌈c/(c − (c−1)θ⁻¹)⌉ + 1`, defined for `θ > (c−1)/c`.
pub fn k0_from_theta(c: usize, theta: f64) -> Result<usize, CoveringError> {
    let cf = c as f64;
    let denom = cf - (cf - 1.0) / theta;
    if !(denom > 0.0) {
        return Err(CoveringError::ThetaTooSmall { c, theta });
    }
    Ok((cf / denom).ceil() as usize + 1)
}

/// An axis-aligned box given by per-axis lower and upper corners.
#[derive(Debug, Clone)]
pub struct CoverBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl CoverBox {
    pub fn diameter(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| (h - l) * (h - l))
            .sum::<f64>()
            .sqrt()
    }

    pub fn contains_strict(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(&c, (&l, &h))| l < c && c < h)
    }
}

/// A concentric-layer covering of `[0,1]^c`.
#[derive(Debug, Clone)]
pub struct Covering {
    pub c: usize,
    pub k0: usize,
    pub k1: usize,
    /// Per-axis center coordinates of the box lattice.
    pub centers: Vec<Vec<f64>>,
    /// Box side length per layer, strictly increasing.
    pub sides: Vec<f64>,
    /// Per-axis sorted corner values (the boundary sets `ℬᵢ`).
    pub boundary_sets: Vec<Vec<f64>>,
    /// `10 / (minimal per-axis corner separation)`.
    pub c_min: f64,
    pub min_side: f64,
    pub max_diameter: f64,
    pub eps_light: f64,
}

impl Covering {
    /// Materialize the full box list (product of center choices × layers).
    pub fn boxes(&self) -> Vec<CoverBox> {
        let mut out = Vec::new();
        let mut idx = vec![0usize; self.c];
        loop {
            let center: Vec<f64> = (0..self.c).map(|i| self.centers[i][idx[i]]).collect();
            for &s in &self.sides {
                out.push(CoverBox {
                    lo: center.iter().map(|&g| g - s / 2.0).collect(),
                    hi: center.iter().map(|&g| g + s / 2.0).collect(),
                });
            }
            // Odometer over the per-axis center indices.
            let mut axis = 0;
            loop {
                if axis == self.c {
                    return out;
                }
                idx[axis] += 1;
                if idx[axis] < self.centers[axis].len() {
                    break;
                }
                idx[axis] = 0;
                axis += 1;
            }
        }
    }

    /// The nested stack of boxes at the center lattice point nearest to `x`.
    pub fn nest_at(&self, x: &[f64]) -> Vec<CoverBox> {
        let center: Vec<f64> = (0..self.c)
            .map(|i| {
                *self.centers[i]
                    .iter()
                    .min_by(|a, b| {
                        (*a - x[i]).abs().partial_cmp(&(*b - x[i]).abs()).unwrap()
                    })
                    .unwrap()
            })
            .collect();
        self.sides
            .iter()
            .map(|&s| CoverBox {
                lo: center.iter().map(|&g| g - s / 2.0).collect(),
                hi: center.iter().map(|&g| g + s / 2.0).collect(),
            })
            .collect()
    }
}

/// Number of shift candidates tried before giving up.
const SHIFT_CANDIDATES: usize = 10_000;

/// Build a covering of `[0,1]^c` with box diameters `< eps_light` and
/// `K₁ = c·K₀ + 1`.  The lattice shift is drawn from a deterministic
/// low-discrepancy sequence; each candidate is validated (distinct separated
/// corner values per axis, probe-grid interiority) before being accepted.
pub fn build_covering(
    c: usize,
    eps_light: f64,
    k0: usize,
) -> Result<Covering, CoveringError> {
    assert!(c >= 1 && k0 >= 1 && eps_light > 0.0);
    let k1 = c * k0 + 1;
    let layers = k1 + 1;
    // Largest admissible side: diameter s·√c strictly below eps_light, and
    // boxes must keep their corners well inside [−1,2] even for degenerate
    // (huge) lightness budgets.
    let s_max = (eps_light / (c as f64).sqrt() * 0.999).min(0.9);
    // Geometric layout: sides s_j = p(1 + (j+1)β) with a pitch p chosen so
    // the largest layer saturates the side budget.
    let beta = 1.0 / (2.0 * (layers + 1) as f64);
    let p = s_max / (1.0 + layers as f64 * beta);
    let sides: Vec<f64> = (0..layers).map(|j| p * (1.0 + (j + 1) as f64 * beta)).collect();

    // Low-discrepancy per-axis shifts: fractional parts of multiples of
    // irrationals √2, √3, √5, …
    let irr = [2.0f64, 3.0, 5.0, 7.0, 11.0, 13.0, 17.0, 19.0];
    for m in 1..=SHIFT_CANDIDATES {
        let shift: Vec<f64> = (0..c)
            .map(|i| {
                let a = irr[i % irr.len()].sqrt();
                let v = (m as f64) * a;
                (v - v.floor()) * p
            })
            .collect();
        if let Some(cov) = try_shift(c, k0, k1, p, &sides, &shift, eps_light) {
            return Ok(cov);
        }
    }
    Err(CoveringError::ConstructionFailed { candidates: SHIFT_CANDIDATES })
}

fn try_shift(
    c: usize,
    k0: usize,
    k1: usize,
    p: f64,
    sides: &[f64],
    shift: &[f64],
    eps_light: f64,
) -> Option<Covering> {
    // Center lattice per axis: shift + k·p restricted so that every point of
    // [0,1] has a center within p/2.
    let mut centers = Vec::with_capacity(c);
    for &d in shift.iter().take(c) {
        let k_min = ((-p / 2.0 - d) / p).ceil() as i64;
        let k_max = ((1.0 + p / 2.0 - d) / p).floor() as i64;
        let axis: Vec<f64> = (k_min..=k_max).map(|k| d + k as f64 * p).collect();
        if axis.is_empty() || axis[0] > p / 2.0 || *axis.last().unwrap() < 1.0 - p / 2.0 {
            return None;
        }
        centers.push(axis);
    }

    // Boundary sets and their minimal separation.
    let mut boundary_sets = Vec::with_capacity(c);
    let mut min_sep = f64::INFINITY;
    for axis in &centers {
        let mut vals: Vec<f64> = axis
            .iter()
            .flat_map(|&g| sides.iter().flat_map(move |&s| [g - s / 2.0, g + s / 2.0]))
            .collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for w in vals.windows(2) {
            min_sep = min_sep.min(w[1] - w[0]);
        }
        if vals.iter().any(|&v| !(-1.0..=2.0).contains(&v)) {
            return None;
        }
        boundary_sets.push(vals);
    }
    // Corner values must be pairwise distinct with usable separation.
    if !(min_sep > 1e-6 * p) {
        return None;
    }

    let cov = Covering {
        c,
        k0,
        k1,
        centers,
        sides: sides.to_vec(),
        boundary_sets,
        c_min: 10.0 / min_sep,
        min_side: sides[0],
        max_diameter: sides[k1] * (c as f64).sqrt(),
        eps_light,
    };
    if cov.max_diameter >= eps_light {
        return None;
    }

    // Probe-grid validation: every probe must be strictly interior to all
    // K₁+1 boxes of its nearest nest (their boundaries are disjoint because
    // the sides are strictly increasing around a common center).
    let per_axis = 23usize;
    let mut idx = vec![0usize; c];
    loop {
        let x: Vec<f64> = idx.iter().map(|&i| i as f64 / (per_axis - 1) as f64).collect();
        let nest = cov.nest_at(&x);
        if nest.len() != k1 + 1 || !nest.iter().all(|b| b.contains_strict(&x)) {
            return None;
        }
        let mut axis = 0;
        loop {
            if axis == c {
                return Some(cov);
            }
            idx[axis] += 1;
            if idx[axis] < per_axis {
                break;
            }
            idx[axis] = 0;
            axis += 1;
        }
    }
}

/// A map from slice coordinates `[−1,2]^c` into a fiber manifold — either
/// the genuine `φ_F` or a synthetic hook for validating the checker itself.
pub trait SliceMap {
    fn dim(&self) -> usize;
    fn eval(&self, s: &[f64]) -> Result<FiberPoint, HolonomyError>;
    /// True when image coordinates live on a torus (distances wrap mod 1).
    fn wraps(&self) -> bool;
}

/// The accessibility map of a skew product.
pub struct PhiSliceMap<'a> {
    pub f: &'a SkewProduct,
    pub fam: &'a LoopFamily,
    pub x0: FiberPoint,
    pub tol: f64,
}

impl SliceMap for PhiSliceMap<'_> {
    fn dim(&self) -> usize {
        self.f.manifold().dim()
    }

    fn eval(&self, s: &[f64]) -> Result<FiberPoint, HolonomyError> {
        phi_map(self.f, self.fam, &self.x0, s, self.tol)
    }

    fn wraps(&self) -> bool {
        matches!(self.x0, FiberPoint::Torus(_))
    }
}

/// Synthetic injective hook: the affine embedding `s ↦ (s+1)/4` per
/// coordinate into the torus, injective on `[−1,2]^c`.
pub struct SyntheticIdentity {
    pub c: usize,
}

impl SliceMap for SyntheticIdentity {
    fn dim(&self) -> usize {
        self.c
    }

    fn eval(&self, s: &[f64]) -> Result<FiberPoint, HolonomyError> {
        Ok(FiberPoint::torus(
            &s.iter().map(|&v| (v + 1.0) / 4.0).collect::<Vec<_>>(),
        ))
    }

    fn wraps(&self) -> bool {
        true
    }
}

/// Synthetic constant hook.
pub struct SyntheticConstant {
    pub c: usize,
    pub value: FiberPoint,
}

impl SliceMap for SyntheticConstant {
    fn dim(&self) -> usize {
        self.c
    }

    fn eval(&self, _s: &[f64]) -> Result<FiberPoint, HolonomyError> {
        Ok(self.value.clone())
    }

    fn wraps(&self) -> bool {
        matches!(self.value, FiberPoint::Torus(_))
    }
}

/// Outcome of a stable-value check, overall or per subset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

/// A colliding subset, reported on failure.
#[derive(Debug, Clone)]
pub struct Witness {
    pub axis: usize,
    pub values: Vec<f64>,
    /// Slice point whose image lies within δ of every other slice's image.
    pub slice_point: Vec<f64>,
    pub separation: f64,
}

/// Margin record for one `K₀`-subset of one axis' boundary set.
#[derive(Debug, Clone)]
pub struct SubsetMargin {
    pub axis: usize,
    pub values: Vec<f64>,
    /// `min_q max_r mindist(q, S_r)`, capped at `2δ` (larger separations are
    /// reported as the cap — only the relation to δ matters).
    pub separation: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone)]
pub struct StableValueReport {
    pub verdict: Verdict,
    pub delta: f64,
    pub holder_constant: f64,
    pub theta: f64,
    pub grid_step: f64,
    pub witness: Option<Witness>,
    pub margins: Vec<SubsetMargin>,
    /// False when the per-axis subset enumeration hit the configured cap.
    pub exhaustive: bool,
}

/// Tuning knobs of the stable-value check.
#[derive(Debug, Clone)]
pub struct CheckConfig {
    /// Hölder exponent granted by the pinching certificate.
    pub theta: f64,
    /// Cap on enumerated `K₀`-subsets per axis.
    pub max_subsets_per_axis: usize,
    /// Number of sample pairs for the Hölder-constant measurement.
    pub holder_pairs: usize,
}

impl CheckConfig {
    pub fn new(theta: f64) -> Self {
        CheckConfig { theta, max_subsets_per_axis: 200, holder_pairs: 40 }
    }
}

/// Spatial hash over fiber points for capped nearest-distance queries.
struct PointHash<'a> {
    cell: f64,
    wraps: bool,
    dim: usize,
    buckets: HashMap<Vec<i64>, Vec<usize>>,
    points: &'a [FiberPoint],
}

impl<'a> PointHash<'a> {
    fn build(points: &'a [FiberPoint], cell: f64, wraps: bool) -> Self {
        let cell = cell.max(1e-9);
        let dim = points.first().map(|p| p.coords().len()).unwrap_or(0);
        let mut buckets: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            buckets
                .entry(Self::key(p.coords(), cell, wraps))
                .or_default()
                .push(i);
        }
        PointHash { cell, wraps, dim, buckets, points }
    }

    fn cells_per_axis(cell: f64) -> i64 {
        ((1.0 / cell).ceil() as i64).max(1)
    }

    fn key(coords: &[f64], cell: f64, wraps: bool) -> Vec<i64> {
        let n = Self::cells_per_axis(cell);
        coords
            .iter()
            .map(|&x| {
                let k = (x / cell).floor() as i64;
                if wraps {
                    k.rem_euclid(n)
                } else {
                    k
                }
            })
            .collect()
    }

    /// Minimal distance from `q` to the stored set, exact below `cap = cell`
    /// and reported as `f64::INFINITY` when no point lies within the cap.
    fn min_dist_capped(&self, q: &FiberPoint) -> f64 {
        let base = Self::key(q.coords(), self.cell, self.wraps);
        let n = Self::cells_per_axis(self.cell);
        let mut best = f64::INFINITY;
        // Scan the 3^dim neighborhood, which covers all points within one
        // cell size of q.
        let mut offs = vec![-1i64; self.dim];
        loop {
            let key: Vec<i64> = base
                .iter()
                .zip(&offs)
                .map(|(&b, &o)| {
                    let k = b + o;
                    if self.wraps {
                        k.rem_euclid(n)
                    } else {
                        k
                    }
                })
                .collect();
            if let Some(ids) = self.buckets.get(&key) {
                for &i in ids {
                    best = best.min(q.dist(&self.points[i]));
                }
            }
            let mut axis = 0;
            loop {
                if axis == self.dim {
                    return if best <= self.cell { best } else { f64::INFINITY };
                }
                offs[axis] += 1;
                if offs[axis] <= 1 {
                    break;
                }
                offs[axis] = -1;
                axis += 1;
            }
        }
    }
}

/// Lexicographic `k`-subsets of `0..n`, truncated at `cap`.
fn k_subsets(n: usize, k: usize, cap: usize) -> (Vec<Vec<usize>>, bool) {
    let mut out = Vec::new();
    if k > n {
        return (out, true);
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        if out.len() >= cap {
            // More subsets may remain.
            let exhausted = idx == (n - k..n).collect::<Vec<_>>();
            return (out, exhausted);
        }
        // Advance to the next combination.
        let mut i = k;
        loop {
            if i == 0 {
                return (out, true);
            }
            i -= 1;
            if idx[i] < n - (k - i) {
                idx[i] += 1;
                for j in i + 1..k {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Measure the Hölder constant `Λ = max d(φ(s),φ(s'))/d(s,s')^θ` over a
/// deterministic sample of pairs at mixed scales.
fn measure_holder(
    map: &dyn SliceMap,
    c: usize,
    theta: f64,
    pairs: usize,
) -> Result<f64, CoveringError> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x57ab1e);
    let mut lambda: f64 = 0.0;
    for k in 0..pairs {
        let s: Vec<f64> = (0..c).map(|_| rng.gen_range(-1.0..2.0)).collect();
        // Mixed scales: from full-cube separation down to 1e−3.
        let eta = 3.0 * (1e-3f64).powf((k % 8) as f64 / 7.0);
        let mut s2: Vec<f64> = s
            .iter()
            .map(|&v| (v + rng.gen_range(-eta..eta)).clamp(-1.0, 2.0))
            .collect();
        if s2 == s {
            s2[0] = (s2[0] + eta.max(1e-6)).clamp(-1.0, 2.0);
        }
        let ds: f64 = s
            .iter()
            .zip(&s2)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if ds == 0.0 {
            continue;
        }
        let img = map.eval(&s)?;
        let img2 = map.eval(&s2)?;
        lambda = lambda.max(img.dist(&img2) / ds.powf(theta));
    }
    Ok(lambda)
}

/// Discretized stable-value criterion.  For every axis `i` and every
/// `K₀`-subset `ℬ` of the boundary set `ℬᵢ`, the slices
/// `[−1,2]^{i−1} × {r} × [−1,2]^{c−i}`, `r ∈ ℬ`, are sampled on a grid of
/// step `grid_step` and their `φ`-images compared at collision radius
/// `δ = max(Λ·grid_stepᶿ, 2·tol)`:
///
/// * separation `< δ` — the continuous slices genuinely intersect (collide);
/// * separation `> 2δ` — certified empty intersection;
/// * in between — inconclusive, never silently passed.
///
/// The overall verdict is fail if any subset collides, else inconclusive if
/// any subset is inconclusive, else pass.
pub fn stable_value_check(
    map: &dyn SliceMap,
    cov: &Covering,
    grid_step: f64,
    tol: f64,
    config: &CheckConfig,
) -> Result<StableValueReport, CoveringError> {
    let c = map.dim();
    assert_eq!(c, cov.c, "covering dimension must match the slice map");
    assert!(grid_step > 0.0 && tol >= 0.0);

    let lambda = measure_holder(map, c, config.theta, config.holder_pairs)?;
    let delta = (lambda * grid_step.powf(config.theta)).max(2.0 * tol);

    // Grid coordinates for the free axes.
    let steps = (3.0 / grid_step).floor() as usize + 1;
    let free_coords: Vec<f64> = (0..steps)
        .map(|k| (-1.0 + k as f64 * grid_step).min(2.0))
        .collect();

    // Sample one slice: axis `i` frozen at `r`.
    let sample_slice = |i: usize, r: f64| -> Result<Vec<FiberPoint>, CoveringError> {
        let mut out = Vec::new();
        let mut idx = vec![0usize; c - 1];
        loop {
            let mut s = Vec::with_capacity(c);
            let mut free = 0;
            for axis in 0..c {
                if axis == i {
                    s.push(r);
                } else {
                    s.push(free_coords[idx[free]]);
                    free += 1;
                }
            }
            out.push(map.eval(&s)?);
            if c == 1 {
                return Ok(out);
            }
            let mut axis = 0;
            loop {
                if axis == c - 1 {
                    return Ok(out);
                }
                idx[axis] += 1;
                if idx[axis] < free_coords.len() {
                    break;
                }
                idx[axis] = 0;
                axis += 1;
            }
        }
    };

    let mut verdict = Verdict::Pass;
    let mut witness = None;
    let mut margins = Vec::new();
    let mut exhaustive = true;
    let cap = 2.0 * delta;

    for i in 0..c {
        let values = &cov.boundary_sets[i];
        let (subsets, complete) = k_subsets(values.len(), cov.k0, config.max_subsets_per_axis);
        exhaustive &= complete;
        // Cache sampled slices per boundary value.
        let mut cache: HashMap<usize, Vec<FiberPoint>> = HashMap::new();
        for subset in &subsets {
            for &v in subset {
                if !cache.contains_key(&v) {
                    cache.insert(v, sample_slice(i, values[v])?);
                }
            }
            let first = &cache[&subset[0]];
            let hashes: Vec<PointHash> = subset[1..]
                .iter()
                .map(|v| PointHash::build(&cache[v], cap, map.wraps()))
                .collect();
            // sep = min over q in the first slice of the largest capped
            // distance from q to the other slices.
            let mut sep = f64::INFINITY;
            let mut sep_q = 0usize;
            for (qi, q) in first.iter().enumerate() {
                let worst = hashes
                    .iter()
                    .map(|h| h.min_dist_capped(q))
                    .fold(0.0f64, f64::max);
                if worst < sep {
                    sep = worst;
                    sep_q = qi;
                }
                if sep == 0.0 {
                    break;
                }
            }
            let sub_verdict = if sep < delta {
                Verdict::Fail
            } else if sep > cap * (1.0 - 1e-12) {
                Verdict::Pass
            } else {
                Verdict::Inconclusive
            };
            let vals: Vec<f64> = subset.iter().map(|&v| values[v]).collect();
            if sub_verdict == Verdict::Fail && witness.is_none() {
                // Reconstruct the colliding slice point.
                let mut s = Vec::with_capacity(c);
                let mut rem = sep_q;
                let mut free_idx = Vec::new();
                if c > 1 {
                    for _ in 0..c - 1 {
                        free_idx.push(rem % free_coords.len());
                        rem /= free_coords.len();
                    }
                }
                let mut free = 0;
                for axis in 0..c {
                    if axis == i {
                        s.push(vals[0]);
                    } else {
                        s.push(free_coords[free_idx[free]]);
                        free += 1;
                    }
                }
                witness = Some(Witness {
                    axis: i,
                    values: vals.clone(),
                    slice_point: s,
                    separation: sep,
                });
            }
            match sub_verdict {
                Verdict::Fail => verdict = Verdict::Fail,
                Verdict::Inconclusive if verdict == Verdict::Pass => {
                    verdict = Verdict::Inconclusive
                }
                _ => {}
            }
            margins.push(SubsetMargin {
                axis: i,
                values: vals,
                separation: sep.min(cap),
                verdict: sub_verdict,
            });
        }
    }

    Ok(StableValueReport {
        verdict,
        delta,
        holder_constant: lambda,
        theta: config.theta,
        grid_step,
        witness,
        margins,
        exhaustive,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skew::build_loop_family;
    use crate::spectral::ToralAutomorphism;

    #[test]
    fn k0_formula_matches_hand_arithmetic() {
        // c=2, θ=0.75: ⌈2/(2 − 4/3)⌉ + 1 = 3 + 1 = 4, K₁ = 2·4+1 = 9.
        assert_eq!(k0_from_theta(2, 0.75).unwrap(), 4);
        assert_eq!(k0_from_theta(1, 0.75).unwrap(), 2);
        assert!(matches!(
            k0_from_theta(2, 0.5),
            Err(CoveringError::ThetaTooSmall { .. })
        ));
    }

    #[test]
    fn one_dimensional_covering_verified_directly() {
        let k0 = 2; // c=1: K₁ = 3, four layers.
        let cov = build_covering(1, 0.4, k0).unwrap();
        assert_eq!(cov.k1, 3);
        assert!(cov.max_diameter < 0.4);
        // Direct 1-D verification on a fine independent grid: every point in
        // ≥ K₁ intervals with pairwise distinct endpoints.
        let boxes = cov.boxes();
        for k in 0..=1000 {
            let x = k as f64 / 1000.0;
            let containing: Vec<&CoverBox> =
                boxes.iter().filter(|b| b.contains_strict(&[x])).collect();
            assert!(containing.len() >= cov.k1, "x={x} in {} boxes", containing.len());
            // The nest at x has distinct endpoints.
            let nest = cov.nest_at(&[x]);
            for a in 0..nest.len() {
                for b in a + 1..nest.len() {
                    assert!(nest[a].lo[0] != nest[b].lo[0]);
                    assert!(nest[a].hi[0] != nest[b].hi[0]);
                }
            }
        }
    }

    #[test]
    fn two_dimensional_covering_properties() {
        let k0 = k0_from_theta(2, 0.75).unwrap();
        let cov = build_covering(2, 0.45 / 2.0f64.sqrt() * 2.0, k0).unwrap();
        assert_eq!(cov.k1, 9);
        for b in cov.boxes() {
            assert!(b.diameter() < cov.eps_light);
            for (l, h) in b.lo.iter().zip(&b.hi) {
                assert!(*l >= -1.0 && *h <= 2.0);
            }
        }
        // Corner separation invariant: values are 10·C_min⁻¹-separated.
        let floor = 10.0 / cov.c_min;
        for vals in &cov.boundary_sets {
            for w in vals.windows(2) {
                assert!(w[1] - w[0] >= floor * (1.0 - 1e-12));
            }
        }
        // Nested boxes at random probes: strict interiority, disjoint
        // boundaries (strictly increasing sides around a common center).
        for probe in [[0.0, 0.0], [1.0, 1.0], [0.5, 0.37], [0.99, 0.01]] {
            let nest = cov.nest_at(&probe);
            assert_eq!(nest.len(), cov.k1 + 1);
            for b in &nest {
                assert!(b.contains_strict(&probe));
            }
            for a in 0..nest.len() {
                for b in a + 1..nest.len() {
                    // Inner box strictly inside the outer one per axis.
                    for ax in 0..2 {
                        assert!(nest[a].lo[ax] > nest[b].lo[ax]);
                        assert!(nest[a].hi[ax] < nest[b].hi[ax]);
                    }
                }
            }
        }
    }

    #[test]
    fn degenerate_lightness_budget_saturates() {
        let cov = build_covering(2, 5.0, 3).unwrap();
        assert!(cov.max_diameter < 5.0);
        // The side cap keeps corners inside [−1,2].
        for vals in &cov.boundary_sets {
            assert!(vals.iter().all(|v| (-1.0..=2.0).contains(v)));
        }
    }

    #[test]
    fn identity_embedding_passes() {
        let cov = build_covering(1, 0.4, 2).unwrap();
        let map = SyntheticIdentity { c: 1 };
        let report =
            stable_value_check(&map, &cov, 1e-6, 1e-12, &CheckConfig::new(0.75)).unwrap();
        assert_eq!(report.verdict, Verdict::Pass, "δ={} margins={:?}", report.delta, report.margins.iter().map(|m| m.separation).collect::<Vec<_>>());
        assert!(report.witness.is_none());
    }

    #[test]
    fn constant_map_fails_with_witness() {
        let cov = build_covering(1, 0.4, 2).unwrap();
        let map = SyntheticConstant { c: 1, value: FiberPoint::torus(&[0.5]) };
        let report =
            stable_value_check(&map, &cov, 0.5, 1e-9, &CheckConfig::new(0.75)).unwrap();
        assert_eq!(report.verdict, Verdict::Fail);
        let w = report.witness.expect("failure must carry a witness");
        assert_eq!(w.values.len(), cov.k0);
    }

    #[test]
    fn decoupled_phi_fails() {
        let f = crate::skew::SkewProduct::decoupled_linear(
            ToralAutomorphism::cat_map(),
            ToralAutomorphism::cat_map(),
        )
        .unwrap();
        let fam = build_loop_family(f.base(), &[0.31, 0.64], 0.01).unwrap();
        let cov = build_covering(2, 0.45, 2).unwrap();
        let map = PhiSliceMap { f: &f, fam: &fam, x0: FiberPoint::torus(&[0.2, 0.9]), tol: 1e-8 };
        let mut config = CheckConfig::new(0.75);
        config.max_subsets_per_axis = 2;
        config.holder_pairs = 6;
        let report = stable_value_check(&map, &cov, 1.0, 1e-8, &config).unwrap();
        assert_eq!(report.verdict, Verdict::Fail);
        assert!(report.witness.is_some());
    }

    #[test]
    fn subset_enumeration_is_lexicographic_and_capped() {
        let (subs, complete) = k_subsets(4, 2, 100);
        assert!(complete);
        assert_eq!(
            subs,
            vec![
                vec![0, 1],
                vec![0, 2],
                vec![0, 3],
                vec![1, 2],
                vec![1, 3],
                vec![2, 3]
            ]
        );
        let (subs, complete) = k_subsets(10, 3, 5);
        assert_eq!(subs.len(), 5);
        assert!(!complete);
    }
}
