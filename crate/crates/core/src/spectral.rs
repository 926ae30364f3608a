//! Spectral analysis of integer unimodular matrices and certification of the
//! inequality systems governing partially hyperbolic skew products.
//!
//! A toral automorphism is the map induced on `T^d` by an integer matrix `A`
//! with `det A = ±1`.  Its dynamics is controlled by the log-moduli of the
//! eigenvalues: with moduli sorted ascending `|λ_1| ≤ … ≤ |λ_d|` and `b` the
//! largest index with `|λ_b| < 1`, the contraction/expansion rates are
//!
//! ```text
//! χ̄(A) = log|λ_{d−b+1}|      χ̂(A) = log|λ_d|
//! ```
//!
//! Every strict inequality in this module is certified with an explicit
//! margin; a check reports `true` only when the margin exceeds `1e−12`.

use nalgebra::DMatrix;
use thiserror::Error;

/// Tolerance on `|log modulus|` below which an eigenvalue counts as lying on
/// the unit circle.
pub const UNIT_MODULUS_TOL: f64 = 1e-10;

/// Minimal slack for a strict inequality to be certified as holding.
pub const STRICT_MARGIN: f64 = 1e-12;

/// Largest supported matrix dimension for eigenvalue computations.
pub const MAX_DIM: usize = 64;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("matrix determinant {det} is not ±1")]
    NonUnimodular { det: i64 },
    #[error("matrix dimension {dim} exceeds the supported maximum {MAX_DIM}")]
    DimTooLarge { dim: usize },
    #[error("integer overflow in exact determinant computation")]
    DeterminantOverflow,
    #[error("matrix is not invertible over the integers")]
    NotInvertible,
    #[error("base matrix is not Anosov (some eigenvalue modulus equals 1)")]
    NotAnosovBase,
    #[error("central matrix has all eigenvalue moduli equal to 1 (b undefined)")]
    CentralAllUnit,
    #[error("Anosov base must have stable index dim/2, found b = {b:?} for dim {dim}")]
    WrongStableIndex { b: Option<usize>, dim: usize },
    #[error("dominated splitting rates missing")]
    MissingSplitting,
    #[error("fiber splitting rates are not consistently ordered: {detail}")]
    InconsistentRates { detail: String },
    #[error("invalid hyperbolic rates: {detail}")]
    InvalidRates { detail: String },
    #[error("parse error at line {line}: {detail}")]
    Parse { line: usize, detail: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// An integer unimodular matrix acting on the torus `T^d`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToralAutomorphism {
    dim: usize,
    /// Row-major entries.
    entries: Vec<i64>,
    det: i64,
}

impl ToralAutomorphism {
    /// Build from row-major integer entries; verifies `det = ±1` exactly.
    pub fn new(dim: usize, entries: Vec<i64>) -> Result<Self, SpectralError> {
        if dim == 0 || dim > MAX_DIM {
            return Err(SpectralError::DimTooLarge { dim });
        }
        assert_eq!(entries.len(), dim * dim, "entry count must be dim²");
        let det = integer_determinant(dim, &entries)?;
        if det != 1 && det != -1 {
            return Err(SpectralError::NonUnimodular { det });
        }
        Ok(Self { dim, entries, det })
    }

    /// Convenience constructor from rows.
    pub fn from_rows(rows: &[&[i64]]) -> Result<Self, SpectralError> {
        let dim = rows.len();
        let mut entries = Vec::with_capacity(dim * dim);
        for r in rows {
            assert_eq!(r.len(), dim, "rows must form a square matrix");
            entries.extend_from_slice(r);
        }
        Self::new(dim, entries)
    }

    /// The Arnold cat map `[[2,1],[1,1]]`.
    pub fn cat_map() -> Self {
        Self::from_rows(&[&[2, 1], &[1, 1]]).expect("cat map is unimodular")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn det(&self) -> i64 {
        self.det
    }

    pub fn entry(&self, i: usize, j: usize) -> i64 {
        self.entries[i * self.dim + j]
    }

    pub fn entries(&self) -> &[i64] {
        &self.entries
    }

    /// Matrix power with non-negative exponent, exact integer arithmetic.
    pub fn pow(&self, k: u32) -> Result<Self, SpectralError> {
        let d = self.dim;
        let mut acc: Vec<i64> = (0..d * d)
            .map(|i| if i / d == i % d { 1 } else { 0 })
            .collect();
        for _ in 0..k {
            acc = integer_matmul(d, &acc, &self.entries)?;
        }
        Self::new(d, acc)
    }

    /// Exact integer inverse (exists since `det = ±1`).
    ///
    /// Computed in floating point and rounded, then verified exactly by
    /// integer multiplication.
    pub fn inverse(&self) -> Result<Self, SpectralError> {
        let d = self.dim;
        let m = self.as_dmatrix();
        let inv = m.try_inverse().ok_or(SpectralError::NotInvertible)?;
        let entries: Vec<i64> = inv.transpose().iter().map(|&x| x.round() as i64).collect();
        let prod = integer_matmul(d, &self.entries, &entries)?;
        for i in 0..d {
            for j in 0..d {
                let want = if i == j { 1 } else { 0 };
                if prod[i * d + j] != want {
                    return Err(SpectralError::NotInvertible);
                }
            }
        }
        Self::new(d, entries)
    }

    /// Dense floating-point copy.
    pub fn as_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.entry(i, j) as f64)
    }

    /// Apply to a point of `[0,1)^d`, reducing mod 1.
    pub fn apply_mod1(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim);
        (0..self.dim)
            .map(|i| {
                let s: f64 = (0..self.dim).map(|j| self.entry(i, j) as f64 * x[j]).sum();
                crate::torus::wrap(s)
            })
            .collect()
    }

    /// Apply the linear lift to a displacement vector (no reduction).
    pub fn apply_linear(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.dim);
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.entry(i, j) as f64 * v[j]).sum())
            .collect()
    }

    /// Parse the text format: first line `d`, then `d` lines of `d` signed
    /// integers separated by single spaces.
    pub fn parse(text: &str) -> Result<Self, SpectralError> {
        let mut lines = text.lines().enumerate();
        let (_, first) = lines
            .next()
            .ok_or_else(|| SpectralError::Parse { line: 1, detail: "empty input".into() })?;
        let dim: usize = first.trim().parse().map_err(|_| SpectralError::Parse {
            line: 1,
            detail: format!("expected dimension, found {first:?}"),
        })?;
        if dim == 0 || dim > MAX_DIM {
            return Err(SpectralError::DimTooLarge { dim });
        }
        let mut entries = Vec::with_capacity(dim * dim);
        for row in 0..dim {
            let (idx, line) = lines.next().ok_or_else(|| SpectralError::Parse {
                line: row + 2,
                detail: "missing matrix row".into(),
            })?;
            let vals: Result<Vec<i64>, _> =
                line.split_whitespace().map(|t| t.parse::<i64>()).collect();
            let vals = vals.map_err(|e| SpectralError::Parse {
                line: idx + 1,
                detail: format!("bad integer: {e}"),
            })?;
            if vals.len() != dim {
                return Err(SpectralError::Parse {
                    line: idx + 1,
                    detail: format!("expected {dim} entries, found {}", vals.len()),
                });
            }
            entries.extend(vals);
        }
        Self::new(dim, entries)
    }

    /// Serialize to the text format; `parse(to_text(a)) == a` bit-exactly.
    pub fn to_text(&self) -> String {
        let mut s = format!("{}\n", self.dim);
        for i in 0..self.dim {
            let row: Vec<String> =
                (0..self.dim).map(|j| self.entry(i, j).to_string()).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    }
}

/// Exact determinant by fraction-free (Bareiss) elimination in `i128`.
fn integer_determinant(dim: usize, entries: &[i64]) -> Result<i64, SpectralError> {
    let mut m: Vec<i128> = entries.iter().map(|&e| e as i128).collect();
    let mut sign = 1i128;
    let mut prev = 1i128;
    for k in 0..dim.saturating_sub(1) {
        if m[k * dim + k] == 0 {
            let pivot = (k + 1..dim).find(|&r| m[r * dim + k] != 0);
            match pivot {
                Some(r) => {
                    for j in 0..dim {
                        m.swap(k * dim + j, r * dim + j);
                    }
                    sign = -sign;
                }
                None => return Ok(0),
            }
        }
        for i in k + 1..dim {
            for j in k + 1..dim {
                let num = m[i * dim + j]
                    .checked_mul(m[k * dim + k])
                    .and_then(|a| {
                        m[i * dim + k]
                            .checked_mul(m[k * dim + j])
                            .and_then(|b| a.checked_sub(b))
                    })
                    .ok_or(SpectralError::DeterminantOverflow)?;
                m[i * dim + j] = num / prev;
            }
        }
        prev = m[k * dim + k];
    }
    let det = sign * m[(dim - 1) * dim + (dim - 1)];
    i64::try_from(det).map_err(|_| SpectralError::DeterminantOverflow)
}

/// Exact integer matrix product with overflow checking.
fn integer_matmul(dim: usize, a: &[i64], b: &[i64]) -> Result<Vec<i64>, SpectralError> {
    let mut out = vec![0i64; dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            let mut acc: i128 = 0;
            for k in 0..dim {
                acc += a[i * dim + k] as i128 * b[k * dim + j] as i128;
            }
            out[i * dim + j] =
                i64::try_from(acc).map_err(|_| SpectralError::DeterminantOverflow)?;
        }
    }
    Ok(out)
}

/// Sorted log-moduli of the eigenvalues, with the stable index `b` and the
/// rates `χ̄`, `χ̂`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSummary {
    /// `log|λ_i|`, non-decreasing.
    pub log_moduli: Vec<f64>,
    /// Largest index (1-based) with `|λ_b| < 1`, or `None` when every
    /// modulus equals 1 within tolerance.
    pub b: Option<usize>,
    /// `χ̄ = log|λ_{d−b+1}|` (weakest expansion); equals `χ̂` when `b` is
    /// `None`.
    pub chi_bar: f64,
    /// `χ̂ = log|λ_d|` (strongest expansion).
    pub chi_hat: f64,
}

impl SpectralSummary {
    /// Build a summary directly from known log-moduli (already computed or
    /// synthetic rates for classification).
    pub fn from_log_moduli(mut log_moduli: Vec<f64>) -> Self {
        log_moduli.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let b = log_moduli
            .iter()
            .filter(|&&l| l < -UNIT_MODULUS_TOL)
            .count();
        let n = log_moduli.len();
        let b = if b == 0 { None } else { Some(b) };
        let chi_bar = match b {
            Some(b) => log_moduli[n - b],
            None => log_moduli[n - 1],
        };
        let chi_hat = log_moduli[n - 1];
        Self { log_moduli, b, chi_bar, chi_hat }
    }

    pub fn dim(&self) -> usize {
        self.log_moduli.len()
    }
}

/// Compute the spectral summary of a toral automorphism.
///
/// Eigenvalue moduli are obtained from a dense eigensolver in double
/// precision; an eigenvalue counts as unit-modulus when `|log modulus|`
/// is below [`UNIT_MODULUS_TOL`].
pub fn spectral_summary(a: &ToralAutomorphism) -> SpectralSummary {
    let eig = a.as_dmatrix().complex_eigenvalues();
    let log_moduli: Vec<f64> = eig.iter().map(|z| z.norm().ln()).collect();
    SpectralSummary::from_log_moduli(log_moduli)
}

/// True iff no eigenvalue modulus equals 1 within tolerance.
pub fn check_anosov(a: &ToralAutomorphism) -> bool {
    spectral_summary(a)
        .log_moduli
        .iter()
        .all(|&l| l.abs() > UNIT_MODULUS_TOL)
}

/// The exponent tuple of a partially hyperbolic splitting, with optional
/// dominated-splitting block rates for the center.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperbolicRates {
    pub chi_bar_s: f64,
    pub chi_hat_s: f64,
    pub chi_bar_u: f64,
    pub chi_hat_u: f64,
    pub chi_bar_c: f64,
    pub chi_hat_c: f64,
    /// Block rates `(χ̄_i, χ̂_i)` of a dominated splitting of the center.
    pub ds_rates: Option<Vec<(f64, f64)>>,
}

impl HyperbolicRates {
    /// Validate the defining inequalities: positive stable/unstable rates
    /// ordered `χ̄ ≤ χ̂`, the domination `−χ̄ˢ < χ̄ᶜ ≤ χ̂ᶜ < χ̄ᵘ`, and
    /// `χ̄_i < χ̂_i` for every splitting block.
    pub fn new(
        chi_bar_s: f64,
        chi_hat_s: f64,
        chi_bar_u: f64,
        chi_hat_u: f64,
        chi_bar_c: f64,
        chi_hat_c: f64,
        ds_rates: Option<Vec<(f64, f64)>>,
    ) -> Result<Self, SpectralError> {
        let fail = |detail: String| Err(SpectralError::InvalidRates { detail });
        if !(chi_bar_s > 0.0 && chi_bar_u > 0.0) {
            return fail("stable/unstable rates must be positive".into());
        }
        if chi_hat_s < chi_bar_s || chi_hat_u < chi_bar_u {
            return fail("χ̂ must dominate χ̄ on each of E^s, E^u".into());
        }
        if chi_bar_c > chi_hat_c {
            return fail("center rates must satisfy χ̄ᶜ ≤ χ̂ᶜ".into());
        }
        if !(-chi_bar_s < chi_bar_c && chi_hat_c < chi_bar_u) {
            return fail(format!(
                "domination −χ̄ˢ < χ̄ᶜ ≤ χ̂ᶜ < χ̄ᵘ violated: −{chi_bar_s} vs {chi_bar_c}, {chi_hat_c} vs {chi_bar_u}"
            ));
        }
        if let Some(ds) = &ds_rates {
            for (i, (lo, hi)) in ds.iter().enumerate() {
                if lo >= hi {
                    return fail(format!("splitting block {i}: χ̄={lo} must be < χ̂={hi}"));
                }
            }
        }
        Ok(Self { chi_bar_s, chi_hat_s, chi_bar_u, chi_hat_u, chi_bar_c, chi_hat_c, ds_rates })
    }

    /// Symmetric rates of a product `base × fiber` of toral automorphisms.
    pub fn from_summaries(base: &SpectralSummary, fiber: &SpectralSummary) -> Result<Self, SpectralError> {
        let n = fiber.log_moduli.len();
        Self::new(
            base.chi_bar,
            base.chi_hat,
            base.chi_bar,
            base.chi_hat,
            fiber.log_moduli[0],
            fiber.log_moduli[n - 1],
            None,
        )
    }
}

/// One certified inequality `lhs < rhs` with its margin.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs − lhs`; the check holds iff `margin > 1e−12`.
    pub margin: f64,
    pub holds: bool,
}

impl Check {
    /// Certify `lhs < rhs` with the global strictness margin.
    pub fn strict_less(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        let margin = rhs - lhs;
        Self { name: name.into(), lhs, rhs, margin, holds: margin > STRICT_MARGIN }
    }
}

/// θ-pinching: `−χ̄ˢ + θχ̂ᵘ < χ̄ᶜ` and `χ̄ᵘ − θχ̂ˢ > χ̂ᶜ`.
pub fn check_pinching_report(r: &HyperbolicRates, theta: f64) -> Vec<Check> {
    vec![
        Check::strict_less("pinching_lower", -r.chi_bar_s + theta * r.chi_hat_u, r.chi_bar_c),
        Check::strict_less("pinching_upper", r.chi_hat_c, r.chi_bar_u - theta * r.chi_hat_s),
    ]
}

pub fn check_pinching(r: &HyperbolicRates, theta: f64) -> bool {
    check_pinching_report(r, theta).iter().all(|c| c.holds)
}

/// l-center bunching: for all `1 ≤ k ≤ l`,
/// `−χ̄ˢ − χ̄ᶜ + kχ̂ᶜ < 0` and `−χ̄ᵘ + χ̂ᶜ − kχ̄ᶜ < 0`.
pub fn check_center_bunching_report(r: &HyperbolicRates, l: u32) -> Vec<Check> {
    let mut out = Vec::new();
    for k in 1..=l {
        let kf = k as f64;
        out.push(Check::strict_less(
            format!("bunching_s_k{k}"),
            -r.chi_bar_s - r.chi_bar_c + kf * r.chi_hat_c,
            0.0,
        ));
        out.push(Check::strict_less(
            format!("bunching_u_k{k}"),
            -r.chi_bar_u + r.chi_hat_c - kf * r.chi_bar_c,
            0.0,
        ));
    }
    out
}

pub fn check_center_bunching(r: &HyperbolicRates, l: u32) -> bool {
    check_center_bunching_report(r, l).iter().all(|c| c.holds)
}

/// Dominated-splitting pinching:
/// `max(χ̂ᵘ, χ̂ˢ)·θ < min(χ̂_{k−1} − χ̄_{k−1}, χ̂₁ − χ̄₁)`.
pub fn check_ds_pinching_report(r: &HyperbolicRates, theta: f64) -> Result<Vec<Check>, SpectralError> {
    let ds = r.ds_rates.as_ref().ok_or(SpectralError::MissingSplitting)?;
    if ds.len() < 2 {
        return Err(SpectralError::MissingSplitting);
    }
    let first_gap = ds[0].1 - ds[0].0;
    let last_gap = ds[ds.len() - 2].1 - ds[ds.len() - 2].0;
    let lhs = r.chi_hat_u.max(r.chi_hat_s) * theta;
    Ok(vec![Check::strict_less("ds_pinching", lhs, first_gap.min(last_gap))])
}

pub fn check_ds_pinching(r: &HyperbolicRates, theta: f64) -> Result<bool, SpectralError> {
    Ok(check_ds_pinching_report(r, theta)?.iter().all(|c| c.holds))
}

/// Classification report for a skew product given base and fiber spectra and
/// the dominated-splitting rates of the center.
#[derive(Debug, Clone)]
pub struct ClassReport {
    pub checks: Vec<Check>,
    pub in_u1: bool,
    pub in_u2: bool,
    pub fiber_in_ds2: bool,
    pub center_bunched: bool,
}

/// Certify membership of the skew product in the classes `𝒰₁` / `𝒰₂` and
/// the fiber dominated-splitting condition `𝒟𝒮₂`, with per-inequality
/// margins.
///
/// With `c` the fiber dimension, `χ̄ˢᵘ = χ̄(base)`, center rates
/// `χ̄ᶜ = log|λ_1(fiber)|`, `χ̂ᶜ = log|λ_c(fiber)|` and block rates
/// `(χ̄_i, χ̂_i)` from `ds`:
///
/// ```text
/// (spt1 1)  max(−χ̄ᶜ, χ̂ᶜ)·c/(c+1) < min_i (χ̂_i − χ̄_i)
/// (spt2 1)  max(−χ̄ᶜ, χ̂ᶜ)·c/(c+1) < χ̂₁ − χ̄₁
/// (spt2 2)  χ̂ᶜ + χ̄₁ − 2χ̂₁ < 0
/// (spt 3)   −χ̄ˢᵘ + χ̂ᶜ − χ̄ᶜ + max(χ̂ᶜ,0) + max(−χ̄ᶜ,0) < 0
/// (ds2)     χ̄₁ − 2χ̂₁ + χᵘ < 0           with χᵘ = χ̂ᶜ
/// ```
pub fn classify_skew_product(
    base: &SpectralSummary,
    fiber: &SpectralSummary,
    ds: &[(f64, f64)],
    l: u32,
) -> Result<ClassReport, SpectralError> {
    let c = fiber.log_moduli.len();
    let chi_bar_c = fiber.log_moduli[0];
    let chi_hat_c = fiber.log_moduli[c - 1];
    if ds.is_empty() {
        return Err(SpectralError::MissingSplitting);
    }
    // Consistency: χ̄ᶜ < χ̄₁ < χ̂₁ < χ̄₂ < … < χ̂ᶜ.
    let mut prev = chi_bar_c;
    for (i, &(lo, hi)) in ds.iter().enumerate() {
        if !(prev < lo && lo < hi) {
            return Err(SpectralError::InconsistentRates {
                detail: format!("block {i}: expected {prev} < {lo} < {hi}"),
            });
        }
        prev = hi;
    }
    if prev > chi_hat_c {
        return Err(SpectralError::InconsistentRates {
            detail: format!("last block rate {prev} exceeds χ̂ᶜ = {chi_hat_c}"),
        });
    }

    let chi_bar_su = base.chi_bar;
    let center_mag = (-chi_bar_c).max(chi_hat_c);
    let cf = c as f64;
    let min_gap = ds
        .iter()
        .map(|&(lo, hi)| hi - lo)
        .fold(f64::INFINITY, f64::min);
    let first_gap = ds[0].1 - ds[0].0;

    let mut checks = vec![
        Check::strict_less("spt1_1", center_mag * cf / (cf + 1.0), min_gap),
        Check::strict_less("spt2_1", center_mag * cf / (cf + 1.0), first_gap),
        Check::strict_less("spt2_2", chi_hat_c + ds[0].0 - 2.0 * ds[0].1, 0.0),
        Check::strict_less(
            "spt_3",
            -chi_bar_su + chi_hat_c - chi_bar_c + chi_hat_c.max(0.0) + (-chi_bar_c).max(0.0),
            0.0,
        ),
        Check::strict_less("ds2_fiber", ds[0].0 - 2.0 * ds[0].1 + chi_hat_c, 0.0),
    ];

    let in_u1 = checks[0].holds && checks[3].holds;
    let in_u2 = checks[1].holds && checks[2].holds && checks[3].holds;
    let fiber_in_ds2 = checks[4].holds;

    let rates = HyperbolicRates::from_summaries(base, fiber)?;
    let bunching = check_center_bunching_report(&rates, l);
    let center_bunched = bunching.iter().all(|c| c.holds);
    checks.extend(bunching);

    Ok(ClassReport { checks, in_u1, in_u2, fiber_in_ds2, center_bunched })
}

/// Report for the toral-automorphism example conditions.
#[derive(Debug, Clone)]
pub struct ExampleReport {
    pub checks: Vec<Check>,
    /// All three conditions hold.
    pub holds: bool,
    /// Reduced sufficient check `χ̂(Bᵏ) > max(n,4)·χ̂(A)` for conformal `B`.
    pub reduced: Check,
}

/// Certify the affine example conditions for the skew product with Anosov
/// base `Bᵏ` and central toral automorphism `A` (`n = dim A`):
///
/// ```text
/// (1)  χ̄(Bᵏ) > 4χ̂(A)
/// (2)  χ̂(A)·n/(n+1) < χ̄(A)
/// (3)  χ̄(Bᵏ) − ((n−1)/n)·χ̂(Bᵏ) > χ̂(A)
/// ```
pub fn check_example_conditions(
    a: &ToralAutomorphism,
    b_mat: &ToralAutomorphism,
    k: u32,
) -> Result<ExampleReport, SpectralError> {
    let sb = spectral_summary(b_mat);
    if !check_anosov(b_mat) {
        return Err(SpectralError::NotAnosovBase);
    }
    if sb.b != Some(b_mat.dim() / 2) || b_mat.dim() % 2 != 0 {
        return Err(SpectralError::WrongStableIndex { b: sb.b, dim: b_mat.dim() });
    }
    let sa = spectral_summary(a);
    if sa.b.is_none() && sa.chi_hat.abs() <= UNIT_MODULUS_TOL {
        return Err(SpectralError::CentralAllUnit);
    }
    let kf = k as f64;
    let n = a.dim() as f64;
    // χ̄(Bᵏ) = k·χ̄(B), χ̂(Bᵏ) = k·χ̂(B).
    let chi_bar_bk = kf * sb.chi_bar;
    let chi_hat_bk = kf * sb.chi_hat;
    let checks = vec![
        Check::strict_less("affine_1", 4.0 * sa.chi_hat, chi_bar_bk),
        Check::strict_less("affine_2", sa.chi_hat * n / (n + 1.0), sa.chi_bar),
        Check::strict_less("affine_3", sa.chi_hat, chi_bar_bk - (n - 1.0) / n * chi_hat_bk),
    ];
    let holds = checks.iter().all(|c| c.holds);
    let reduced = Check::strict_less("reduced_conformal", n.max(4.0) * sa.chi_hat, chi_hat_bk);
    Ok(ExampleReport { checks, holds, reduced })
}

/// The exponent `ξ = min(χ̄ᶜ + χ̄ˢ, χ̄ᵘ − χ̂ᶜ)` controlling every perturbative
/// holonomy error term; positive by the domination inequalities.
pub fn xi(r: &HyperbolicRates) -> f64 {
    (r.chi_bar_c + r.chi_bar_s).min(r.chi_bar_u - r.chi_hat_c)
}
