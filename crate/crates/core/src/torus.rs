//! Torus arithmetic in the fundamental domain `[0,1)^m`.
//!
//! All charts use nearest-representative differences: the displacement
//! between two torus points is the lift of smallest absolute value per
//! coordinate, which is unique as long as no coordinate difference is
//! exactly 1/2.  Local-chart constructions elsewhere in the crate cap their
//! radius at 0.25 so that brackets and leaf decompositions stay
//! single-valued.

/// Reduce a single coordinate into `[0, 1)`.
pub fn wrap(x: f64) -> f64 {
    let r = x - x.floor();
    // `x.floor()` can round such that r == 1.0 for tiny negative x.
    if r >= 1.0 {
        r - 1.0
    } else {
        r
    }
}

/// Reduce every coordinate of a point into `[0, 1)`.
pub fn wrap_point(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&c| wrap(c)).collect()
}

/// Nearest-representative difference `a - b` per coordinate, in `(-1/2, 1/2]`.
pub fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let mut d = wrap(x - y);
            if d > 0.5 {
                d -= 1.0;
            }
            d
        })
        .collect()
}

/// Euclidean distance on the torus via nearest representatives.
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    diff(a, b).iter().map(|d| d * d).sum::<f64>().sqrt()
}

/// Translate `x` by the (not necessarily small) displacement `v`, mod 1.
pub fn add(x: &[f64], v: &[f64]) -> Vec<f64> {
    debug_assert_eq!(x.len(), v.len());
    x.iter().zip(v).map(|(&a, &b)| wrap(a + b)).collect()
}
