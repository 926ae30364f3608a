//! Subspace geometry in `ℝ^d`: orthonormal frames, principal angles, the
//! single-step contraction integrands `C` and `D` of the uniformity
//! criterion, and the tangent action of the Grassmannian lift.
//!
//! A point of the Grassmannian `Gr(l, d)` is stored as a `d×l` matrix with
//! orthonormal columns.  All sup/inf computations over unit spheres are done
//! exactly through singular value decompositions of compressed maps — never
//! by sampling directions.  Outputs are frame-class invariant; tests compare
//! subspaces, not frames.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Orthonormality tolerance for stored frames.
pub const FRAME_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum GrassmannError {
    #[error("input matrix is rank deficient (σ_min = {sigma_min:.3e})")]
    RankDeficient { sigma_min: f64 },
    #[error("ambient dimensions differ: {a} vs {b}")]
    DimMismatch { a: usize, b: usize },
    #[error("linear map is singular (σ_min = {sigma_min:.3e})")]
    Singular { sigma_min: f64 },
}

/// An `l`-dimensional subspace of `ℝ^d` represented by an orthonormal frame.
#[derive(Debug, Clone, PartialEq)]
pub struct GrassmannPoint {
    frame: DMatrix<f64>,
}

impl GrassmannPoint {
    /// Wrap a frame that is already orthonormal within [`FRAME_TOL`].
    pub fn from_frame(frame: DMatrix<f64>) -> Self {
        let gram = frame.transpose() * &frame;
        let l = frame.ncols();
        let err = (&gram - DMatrix::<f64>::identity(l, l)).norm();
        assert!(err < FRAME_TOL, "frame not orthonormal: ‖EᵀE − I‖ = {err:.3e}");
        Self { frame }
    }

    /// The span of a single vector.
    pub fn from_vector(v: &[f64]) -> Result<Self, GrassmannError> {
        orthonormalize(&DMatrix::from_column_slice(v.len(), 1, v))
    }

    /// Span of the `i`-th coordinate axis in `ℝ^d`.
    pub fn axis(d: usize, i: usize) -> Self {
        let mut frame = DMatrix::zeros(d, 1);
        frame[(i, 0)] = 1.0;
        Self { frame }
    }

    pub fn ambient_dim(&self) -> usize {
        self.frame.nrows()
    }

    pub fn dim(&self) -> usize {
        self.frame.ncols()
    }

    pub fn frame(&self) -> &DMatrix<f64> {
        &self.frame
    }

    /// Orthonormal frame of the orthogonal complement `E^⊥` (`d×(d−l)`),
    /// obtained from column-pivoted QR of the projector `I − EEᵀ`.
    pub fn complement(&self) -> GrassmannPoint {
        let d = self.ambient_dim();
        let l = self.dim();
        assert!(l < d, "complement of a full space is empty");
        let proj = DMatrix::<f64>::identity(d, d) - &self.frame * self.frame.transpose();
        let qr = proj.col_piv_qr();
        let q = qr.q();
        let frame = q.columns(0, d - l).into_owned();
        GrassmannPoint::from_frame(frame)
    }
}

/// Orthonormalize the columns of `raw` into a Grassmann point spanning the
/// same subspace.  Fails when `raw` is numerically rank deficient.
pub fn orthonormalize(raw: &DMatrix<f64>) -> Result<GrassmannPoint, GrassmannError> {
    let l = raw.ncols();
    let svd = raw.clone().svd(true, false);
    let sigma_min = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if sigma_min <= 1e-12 * sigma_max.max(1.0) {
        return Err(GrassmannError::RankDeficient { sigma_min });
    }
    let u = svd.u.expect("requested U");
    Ok(GrassmannPoint { frame: u.columns(0, l).into_owned() })
}

/// Smallest principal angle between two subspaces, in `[0, π/2]`, from the
/// largest singular value of `EᵀF`.
pub fn principal_angle(e: &GrassmannPoint, f: &GrassmannPoint) -> Result<f64, GrassmannError> {
    if e.ambient_dim() != f.ambient_dim() {
        return Err(GrassmannError::DimMismatch { a: e.ambient_dim(), b: f.ambient_dim() });
    }
    let m = e.frame.transpose() * &f.frame;
    let svd = m.svd(false, false);
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    Ok(sigma_max.clamp(-1.0, 1.0).acos())
}

/// Largest principal angle between two equal-dimension subspaces; zero iff
/// the subspaces coincide.  Used by tests for subspace equality.
pub fn max_principal_angle(e: &GrassmannPoint, f: &GrassmannPoint) -> Result<f64, GrassmannError> {
    if e.ambient_dim() != f.ambient_dim() {
        return Err(GrassmannError::DimMismatch { a: e.ambient_dim(), b: f.ambient_dim() });
    }
    assert_eq!(e.dim(), f.dim(), "max principal angle needs equal dimensions");
    let m = e.frame.transpose() * &f.frame;
    let svd = m.svd(false, false);
    let sigma_min = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(sigma_min.clamp(-1.0, 1.0).acos())
}

/// Orthogonal projection of `v` onto `E^⊥`: `(I − EEᵀ)v`.
pub fn project_complement(e: &GrassmannPoint, v: &[f64]) -> Result<Vec<f64>, GrassmannError> {
    if v.len() != e.ambient_dim() {
        return Err(GrassmannError::DimMismatch { a: e.ambient_dim(), b: v.len() });
    }
    let v = DVector::from_column_slice(v);
    let coeffs = e.frame.transpose() * &v;
    let out = v - &e.frame * coeffs;
    Ok(out.iter().cloned().collect())
}

/// Image subspace `Df·E`, orthonormalized.
pub fn pushforward(df: &DMatrix<f64>, e: &GrassmannPoint) -> Result<GrassmannPoint, GrassmannError> {
    check_invertible(df)?;
    orthonormalize(&(df * &e.frame))
        .map_err(|_| GrassmannError::Singular { sigma_min: 0.0 })
}

fn check_invertible(df: &DMatrix<f64>) -> Result<(), GrassmannError> {
    let svd = df.clone().svd(false, false);
    let sigma_min = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if sigma_min <= 1e-13 * sigma_max.max(1.0) {
        return Err(GrassmannError::Singular { sigma_min });
    }
    Ok(())
}

/// Weakest-contraction integrand: `log sup_{v ∈ U(E^⊥)} ‖P_{(DfE)^⊥}(Df v)‖`,
/// the largest singular value of the compressed map `W'ᵀ·Df·W` with `W` a
/// frame of `E^⊥` and `W'` a frame of `(DfE)^⊥`.
pub fn step_c(df: &DMatrix<f64>, e: &GrassmannPoint) -> Result<f64, GrassmannError> {
    check_invertible(df)?;
    let w = e.complement();
    let image = pushforward(df, e)?;
    let w_img = image.complement();
    let compressed = w_img.frame.transpose() * df * &w.frame;
    let svd = compressed.svd(false, false);
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    Ok(sigma_max.ln())
}

/// Strongest-contraction integrand: `log inf_{u ∈ U(E)} ‖Df u‖`, the smallest
/// singular value of `Df` restricted to `E`.
pub fn step_d(df: &DMatrix<f64>, e: &GrassmannPoint) -> Result<f64, GrassmannError> {
    check_invertible(df)?;
    let restricted = df * &e.frame;
    let svd = restricted.svd(false, false);
    let sigma_min = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(sigma_min.ln())
}

/// A tangent vector to the Grassmannian at `E`: a linear map `φ: E → E^⊥`
/// stored as a `(d−l)×l` matrix in chosen orthonormal frames of `E` and
/// `E^⊥`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentMap {
    pub mat: DMatrix<f64>,
}

impl TangentMap {
    pub fn new(mat: DMatrix<f64>) -> Self {
        Self { mat }
    }

    /// Operator norm (largest singular value).
    pub fn norm(&self) -> f64 {
        let svd = self.mat.clone().svd(false, false);
        svd.singular_values.iter().cloned().fold(0.0, f64::max)
    }
}

/// Tangent action of the Grassmannian lift: for `u ∈ DfE`,
///
/// ```text
/// ψ(u) = P_{(DfE)^⊥}( Df · φ( Df⁻¹ u ) )
/// ```
///
/// Returned in the frames of `pushforward(Df, E)` and its complement.  The
/// input `φ` must be expressed in the frames of `E` and `E.complement()`.
pub fn lift_tangent_action(
    df: &DMatrix<f64>,
    e: &GrassmannPoint,
    phi: &TangentMap,
) -> Result<(GrassmannPoint, TangentMap), GrassmannError> {
    check_invertible(df)?;
    let w = e.complement();
    let image = pushforward(df, e)?;
    let w_img = image.complement();
    let df_inv = df.clone().try_inverse().ok_or(GrassmannError::Singular { sigma_min: 0.0 })?;
    // Columns of Df⁻¹·F' lie in E; express them in the E-frame.
    let back = e.frame().transpose() * &df_inv * image.frame();
    // φ sends E-coordinates to E^⊥-coordinates; push back to ambient, apply
    // Df, project to (DfE)^⊥ and express in its frame.
    let psi = w_img.frame().transpose() * df * w.frame() * &phi.mat * back;
    Ok((image, TangentMap::new(psi)))
}

/// The Finsler norm `‖(v, φ)‖_* = ‖v‖ + ‖φ‖` on the tangent bundle of the
/// Grassmannian lift (a convenience norm; no operation depends on the choice
/// versus the Riemannian metric).
pub fn finsler_norm(v: &[f64], phi: &TangentMap) -> f64 {
    let vn: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    vn + phi.norm()
}
