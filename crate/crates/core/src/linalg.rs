//! Symmetric positive (semi)definite linear algebra.
//!
//! The generalized eigenproblem `H v = λ Γ v` is solved by whitening: with
//! `Γ = L Lᵀ` the ordinary symmetric problem for `L⁻¹ H L⁻ᵀ` is solved and the
//! eigenvectors mapped back through `L⁻ᵀ`. The resulting basis is
//! Γ-orthonormal by construction.

use std::fmt::Write as _;
use std::sync::{Arc, OnceLock};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Largest accepted condition number for a precision or covariance matrix.
pub const MAX_CONDITION: f64 = 1e12;
/// Eigenvalues below this fraction of the largest one are set to zero.
pub const CLAMP_RELATIVE: f64 = 1e-12;
/// Negative eigenvalues beyond this fraction of the scale reject a PSD input.
pub const PSD_TOLERANCE: f64 = 1e-10;

struct SpdInner {
    entries: DMatrix<f64>,
    cholesky: OnceLock<Option<Cholesky<f64, Dyn>>>,
    condition: OnceLock<f64>,
}

/// Dense symmetric matrix used for precisions, covariances and diagnostic
/// matrices. Cheap to clone; the Cholesky factor is computed on first use.
#[derive(Clone)]
pub struct SpdMatrix(Arc<SpdInner>);

impl std::fmt::Debug for SpdMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_tuple("SpdMatrix").field(&self.0.entries).finish()
    }
}

impl SpdMatrix {
    /// Symmetrizes `m` as `(m + mᵀ)/2`.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                context: "square matrix",
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix entry".into()));
        }
        let sym = (&m + m.transpose()) * 0.5;
        Ok(Self::from_symmetric(sym))
    }

    fn from_symmetric(entries: DMatrix<f64>) -> Self {
        SpdMatrix(Arc::new(SpdInner {
            entries,
            cholesky: OnceLock::new(),
            condition: OnceLock::new(),
        }))
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_symmetric(DMatrix::identity(dim, dim))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn zeros(dim: usize) -> Self {
        Self::from_symmetric(DMatrix::zeros(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.0.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0.entries
    }

    /// Cholesky factor; fails if the matrix is not strictly positive definite.
    pub fn cholesky(&self) -> Result<&Cholesky<f64, Dyn>> {
        self.0
            .cholesky
            .get_or_init(|| Cholesky::new(self.0.entries.clone()))
            .as_ref()
            .ok_or(Error::NotPositiveDefinite)
    }

    /// Lower-triangular factor `L` with `self = L Lᵀ`.
    pub fn cholesky_l(&self) -> Result<DMatrix<f64>> {
        Ok(self.cholesky()?.l())
    }

    /// 2-norm condition number from the symmetric eigenvalues.
    pub fn condition_number(&self) -> f64 {
        *self.0.condition.get_or_init(|| {
            let eig = SymmetricEigen::new(self.0.entries.clone()).eigenvalues;
            let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
            if min <= 0.0 {
                f64::INFINITY
            } else {
                max / min
            }
        })
    }

    /// Checks the requirements on a precision or covariance matrix.
    pub fn require_positive_definite(&self) -> Result<()> {
        self.cholesky()?;
        let condition = self.condition_number();
        if condition > MAX_CONDITION {
            return Err(Error::IllConditioned { condition });
        }
        Ok(())
    }

    /// Checks that all eigenvalues are `≥ -1e-10·‖self‖₂`.
    pub fn require_positive_semidefinite(&self) -> Result<()> {
        if self.dim() == 0 {
            return Ok(());
        }
        let eig = SymmetricEigen::new(self.0.entries.clone()).eigenvalues;
        let scale = eig.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
        let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < -PSD_TOLERANCE * scale {
            return Err(Error::NotPositiveSemidefinite { eigenvalue: min });
        }
        Ok(())
    }

    pub fn solve_vector(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("solve", self.dim(), b.len())?;
        Ok(self.cholesky()?.solve(b))
    }

    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dim("solve", self.dim(), b.nrows())?;
        Ok(self.cholesky()?.solve(b))
    }

    pub fn inverse(&self) -> Result<SpdMatrix> {
        SpdMatrix::new(self.cholesky()?.inverse())
    }

    pub fn log_determinant(&self) -> Result<f64> {
        let l = self.cholesky()?.l_dirty().clone();
        Ok(2.0 * (0..self.dim()).map(|i| l[(i, i)].ln()).sum::<f64>())
    }

    pub fn trace(&self) -> f64 {
        self.0.entries.trace()
    }

    /// Largest absolute eigenvalue.
    pub fn spectral_norm(&self) -> f64 {
        SymmetricEigen::new(self.0.entries.clone())
            .eigenvalues
            .iter()
            .fold(0.0_f64, |a, &b| a.max(b.abs()))
    }

    /// `xᵀ M x`.
    pub fn quadratic_form(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.0.entries * x))
    }

    pub fn mul_vector(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.0.entries * x
    }
}

impl Serialize for SpdMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        matrix_rows(&self.0.entries).serialize(s)
    }
}

/// Row-major nested vector view of a matrix.
pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Matrix from row-major nested vectors.
pub fn matrix_from_rows(rows: &[Vec<f64>], ncols: usize) -> Result<DMatrix<f64>> {
    for row in rows {
        check_dim("matrix row", ncols, row.len())?;
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// Descending eigenpairs of the pencil `(H, Γ)` with a Γ-orthonormal basis.
#[derive(Clone, Debug)]
pub struct GeneralizedSpectrum {
    eigenvalues: Vec<f64>,
    basis: DMatrix<f64>,
    gamma: SpdMatrix,
}

impl GeneralizedSpectrum {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Columns are `v₁ … v_d`.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn gamma(&self) -> &SpdMatrix {
        &self.gamma
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Number of strictly positive (unclamped) eigenvalues.
    pub fn numerical_rank(&self) -> usize {
        self.eigenvalues.iter().filter(|&&l| l > 0.0).count()
    }

    /// `Σ_{i>r} λᵢ`, accumulated from the smallest eigenvalue upward.
    pub fn tail_sum(&self, r: usize) -> f64 {
        self.eigenvalues.iter().skip(r).rev().sum()
    }

    /// Tail sums for every rank `0..=d`.
    pub fn tail_sums(&self) -> Vec<f64> {
        let d = self.dim();
        let mut tails = vec![0.0; d + 1];
        for i in (0..d).rev() {
            tails[i] = tails[i + 1] + self.eigenvalues[i];
        }
        tails
    }

    pub fn to_document(&self) -> SubspaceDocument {
        SubspaceDocument {
            dim: self.dim(),
            rank: self.numerical_rank(),
            eigenvalues: self.eigenvalues.clone(),
            basis: matrix_rows(&self.basis),
        }
    }

    /// CSV with header `index,lambda`; indices start at 1.
    pub fn eigenvalues_csv(&self) -> String {
        eigenvalues_csv(&self.eigenvalues)
    }
}

pub fn eigenvalues_csv(eigenvalues: &[f64]) -> String {
    let mut out = String::from("index,lambda\n");
    for (i, l) in eigenvalues.iter().enumerate() {
        let _ = writeln!(out, "{},{}", i + 1, l);
    }
    out
}

/// JSON form shared by spectra and projectors; `basis` is row-major `d × k`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SubspaceDocument {
    pub dim: usize,
    pub rank: usize,
    pub eigenvalues: Vec<f64>,
    pub basis: Vec<Vec<f64>>,
}

/// Solves `H v = λ Γ v` for all `d` eigenpairs, descending.
pub fn generalized_eigendecomposition(h: &SpdMatrix, gamma: &SpdMatrix) -> Result<GeneralizedSpectrum> {
    check_dim("generalized eigenproblem", gamma.dim(), h.dim())?;
    gamma.require_positive_definite()?;
    let d = h.dim();
    let chol = gamma.cholesky()?;
    let l = chol.l();

    // C = L⁻¹ H L⁻ᵀ
    let left = l.solve_lower_triangular(h.matrix()).ok_or(Error::NotPositiveDefinite)?;
    let c = l
        .solve_lower_triangular(&left.transpose())
        .ok_or(Error::NotPositiveDefinite)?;
    let c = (&c + c.transpose()) * 0.5;

    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..d).collect();
    // Stable sort keeps the solver's order among ties.
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let scale = eig.eigenvalues.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
    let mut eigenvalues = Vec::with_capacity(d);
    let mut whitened = DMatrix::zeros(d, d);
    for (col, &idx) in order.iter().enumerate() {
        let mut lambda = eig.eigenvalues[idx];
        if lambda < -PSD_TOLERANCE * scale {
            return Err(Error::NotPositiveSemidefinite { eigenvalue: lambda });
        }
        if lambda < CLAMP_RELATIVE * scale {
            lambda = 0.0;
        }
        eigenvalues.push(lambda);
        let mut u = eig.eigenvectors.column(idx).into_owned();
        canonical_sign(&mut u);
        whitened.set_column(col, &u);
    }

    // v = L⁻ᵀ u
    let basis = l
        .transpose()
        .solve_upper_triangular(&whitened)
        .ok_or(Error::NotPositiveDefinite)?;

    Ok(GeneralizedSpectrum {
        eigenvalues,
        basis,
        gamma: gamma.clone(),
    })
}

/// Flips `u` so that its largest-magnitude entry is positive.
fn canonical_sign(u: &mut DVector<f64>) {
    let mut best = 0;
    for i in 0..u.len() {
        if u[i].abs() > u[best].abs() * (1.0 + 1e-12) {
            best = i;
        }
    }
    if !u.is_empty() && u[best] < 0.0 {
        u.neg_mut();
    }
}

/// A Γ-orthogonal rank-`r` projector `P = V Vᵀ Γ`, stored by its basis `V`.
#[derive(Clone, Debug)]
pub struct RankRProjector {
    basis: DMatrix<f64>,
    gamma: SpdMatrix,
    complement: Option<DMatrix<f64>>,
    eigenvalues: Vec<f64>,
}

impl RankRProjector {
    /// Builds a projector from any full-column-rank `d × r` basis by
    /// Γ-orthonormalizing it.
    pub fn from_basis(basis: &DMatrix<f64>, gamma: &SpdMatrix) -> Result<Self> {
        check_dim("projector basis", gamma.dim(), basis.nrows())?;
        let d = gamma.dim();
        let r = basis.ncols();
        if r > d {
            return Err(Error::RankOutOfRange { rank: r, dim: d });
        }
        if r == 0 {
            return Ok(Self::zero(gamma));
        }
        let l = gamma.cholesky_l()?;
        let whitened = l.transpose() * basis;
        let q = whitened.qr().q();
        let v = l
            .transpose()
            .solve_upper_triangular(&q)
            .ok_or(Error::NotPositiveDefinite)?;
        Ok(RankRProjector {
            basis: v,
            gamma: gamma.clone(),
            complement: None,
            eigenvalues: Vec::new(),
        })
    }

    /// The zero map.
    pub fn zero(gamma: &SpdMatrix) -> Self {
        RankRProjector {
            basis: DMatrix::zeros(gamma.dim(), 0),
            gamma: gamma.clone(),
            complement: None,
            eigenvalues: Vec::new(),
        }
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    /// `V`, with `Vᵀ Γ V = I_r`.
    pub fn informed_basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn gamma(&self) -> &SpdMatrix {
        &self.gamma
    }

    /// Coordinates `Vᵀ Γ x` of `P x` in the informed basis.
    pub fn informed_coordinates(&self, x: &DVector<f64>) -> DVector<f64> {
        self.basis.tr_mul(&self.gamma.mul_vector(x))
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.basis * self.informed_coordinates(x)
    }

    /// `(I − P) x`.
    pub fn apply_complement(&self, x: &DVector<f64>) -> DVector<f64> {
        x - self.apply(x)
    }

    /// Dense `P`.
    pub fn matrix(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose() * self.gamma.matrix()
    }

    /// Γ-orthonormal basis `W` of `Ker(P)`, so that `[V W]ᵀ Γ [V W] = I_d`.
    pub fn complement_basis(&self) -> Result<DMatrix<f64>> {
        if let Some(w) = &self.complement {
            return Ok(w.clone());
        }
        let d = self.dim();
        let r = self.rank();
        let l = self.gamma.cholesky_l()?;
        let mut augmented = DMatrix::zeros(d, r + d);
        augmented.columns_mut(0, r).copy_from(&(l.transpose() * &self.basis));
        augmented.columns_mut(r, d).copy_from(&DMatrix::identity(d, d));
        let q = augmented.qr().q();
        let trailing = q.columns(r, d - r).into_owned();
        l.transpose()
            .solve_upper_triangular(&trailing)
            .ok_or(Error::NotPositiveDefinite)
    }

    /// Eigenvalues of the spectrum the projector was built from (empty otherwise).
    pub fn spectrum_eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn to_document(&self) -> SubspaceDocument {
        SubspaceDocument {
            dim: self.dim(),
            rank: self.rank(),
            eigenvalues: self.eigenvalues.clone(),
            basis: matrix_rows(&self.basis),
        }
    }

    /// Rebuilds a projector from its document and the metric it was built with.
    pub fn from_document(doc: &SubspaceDocument, gamma: &SpdMatrix) -> Result<Self> {
        check_dim("projector document", gamma.dim(), doc.dim)?;
        check_dim("projector document rows", doc.dim, doc.basis.len())?;
        let basis = matrix_from_rows(&doc.basis, doc.rank)?;
        Ok(RankRProjector {
            basis,
            gamma: gamma.clone(),
            complement: None,
            eigenvalues: doc.eigenvalues.clone(),
        })
    }

    /// Subspace distance `‖P₁ − P₂‖_F / √2` computed in whitened coordinates.
    pub fn distance(&self, other: &RankRProjector) -> Result<f64> {
        check_dim("projector distance", self.dim(), other.dim())?;
        let l = self.gamma.cholesky_l()?;
        let a = l.transpose() * &self.basis;
        let b = l.transpose() * &other.basis;
        let overlap = a.tr_mul(&b).norm_squared();
        let sq = (self.rank() + other.rank()) as f64 - 2.0 * overlap;
        Ok((sq.max(0.0) / 2.0).sqrt())
    }
}

/// Leading-`r` projector of a spectrum.
pub fn build_projector(spectrum: &GeneralizedSpectrum, r: usize) -> Result<RankRProjector> {
    let d = spectrum.dim();
    if r > d {
        return Err(Error::RankOutOfRange { rank: r, dim: d });
    }
    Ok(RankRProjector {
        basis: spectrum.basis.columns(0, r).into_owned(),
        gamma: spectrum.gamma.clone(),
        complement: Some(spectrum.basis.columns(r, d - r).into_owned()),
        eigenvalues: spectrum.eigenvalues.clone(),
    })
}

/// `trace(Γ⁻¹ (I − Pᵀ) H (I − P))`.
pub fn reconstruction_error(p: &RankRProjector, h: &SpdMatrix, gamma: &SpdMatrix) -> Result<f64> {
    reconstruction_error_matrix(&p.matrix(), h, gamma)
}

/// [`reconstruction_error`] for an arbitrary (possibly oblique) projector matrix.
pub fn reconstruction_error_matrix(p: &DMatrix<f64>, h: &SpdMatrix, gamma: &SpdMatrix) -> Result<f64> {
    let d = gamma.dim();
    check_dim("reconstruction error", d, h.dim())?;
    check_dim("reconstruction error", d, p.nrows())?;
    check_dim("reconstruction error", d, p.ncols())?;
    let q = DMatrix::identity(d, d) - p;
    let m = q.transpose() * h.matrix() * &q;
    Ok(gamma.solve_matrix(&m)?.trace())
}

/// Smallest `r` with `(κ/2)·Σ_{i>r} λᵢ ≤ ε`.
pub fn minimal_rank(spectrum: &GeneralizedSpectrum, kappa: f64, epsilon: f64) -> Result<usize> {
    if !(kappa >= 1.0) {
        return Err(Error::InvalidArgument(format!("kappa must be >= 1, got {kappa}")));
    }
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be >= 0, got {epsilon}")));
    }
    let tails = spectrum.tail_sums();
    Ok(tails
        .iter()
        .position(|&t| 0.5 * kappa * t <= epsilon)
        .unwrap_or(spectrum.dim()))
}

/// Euclidean-orthogonal projector onto the leading `r` eigenvectors of `Γ⁻¹`.
///
/// Because that eigenspace is invariant under `Γ`, the map is also
/// Γ-orthogonal and is stored with metric `Γ`.
pub fn prior_based_projector(gamma: &SpdMatrix, r: usize) -> Result<RankRProjector> {
    gamma.require_positive_definite()?;
    let d = gamma.dim();
    if r > d {
        return Err(Error::RankOutOfRange { rank: r, dim: d });
    }
    let eig = SymmetricEigen::new(gamma.matrix().clone());
    // Leading eigenvectors of Γ⁻¹ are the trailing ones of Γ.
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut basis = DMatrix::zeros(d, d);
    let mut covariance_eigs = Vec::with_capacity(d);
    for (col, &idx) in order.iter().enumerate() {
        let g = eig.eigenvalues[idx];
        let mut u = eig.eigenvectors.column(idx).into_owned();
        canonical_sign(&mut u);
        basis.set_column(col, &(u / g.sqrt()));
        covariance_eigs.push(1.0 / g);
    }
    Ok(RankRProjector {
        basis: basis.columns(0, r).into_owned(),
        gamma: gamma.clone(),
        complement: Some(basis.columns(r, d - r).into_owned()),
        eigenvalues: covariance_eigs,
    })
}

/// Descending eigenvalues of `Γ⁻¹`.
pub fn covariance_eigenvalues(gamma: &SpdMatrix) -> Result<Vec<f64>> {
    gamma.require_positive_definite()?;
    let mut v: Vec<f64> = SymmetricEigen::new(gamma.matrix().clone())
        .eigenvalues
        .iter()
        .map(|g| 1.0 / g)
        .collect();
    v.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    Ok(v)
}
