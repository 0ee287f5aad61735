//! Eigendecomposition of Hermitian operators and the overlap matrices
//! between consecutive eigenbases.
//!
//! For Hamiltonians `H_l = W_l Λ_l W_l†` the overlap between two of them is
//! `U = W_a† W_b`, i.e. `U_{mn} = <E_m|ε_n>`. Everything downstream of this
//! module consumes either the sorted spectra or these overlaps.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::hamiltonians::HermitianOperator;
use crate::scalar::{modulus, norm_sqr, Real};

/// Relative gap (in units of the spectral width) below which two levels are
/// considered degenerate.
pub const DEGENERACY_THRESHOLD: f64 = 1e-12;

/// Sorted spectrum and unitary eigenvector matrix of one Hamiltonian.
///
/// Column `m` of `eigenvectors` is the eigenvector of `eigenvalues[m]`, with
/// its largest-magnitude component made real and positive.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem<T: Real> {
    eigenvalues: Vec<T>,
    eigenvectors: DMatrix<Complex<T>>,
}

impl<T: Real> EigenSystem<T> {
    /// Assembles an eigensystem from raw parts, checking that the spectrum is
    /// sorted and the eigenvector matrix is unitary.
    pub fn from_parts(eigenvalues: Vec<T>, eigenvectors: DMatrix<Complex<T>>) -> Result<Self> {
        let dim = eigenvalues.len();
        if dim == 0 {
            return Err(Error::InvalidDimension(0));
        }
        if eigenvectors.nrows() != dim || eigenvectors.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: eigenvectors.nrows().max(eigenvectors.ncols()),
            });
        }
        if eigenvalues.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidParameter("eigenvalues must be sorted ascending".into()));
        }
        check_unitary(&eigenvectors)?;
        Ok(Self { eigenvalues, eigenvectors })
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<Complex<T>> {
        &self.eigenvectors
    }

    pub fn spectral_width(&self) -> T {
        spectral_width(&self.eigenvalues)
    }

    /// Multiplies column `m` of the eigenvector matrix by `exp(i phases[m])`.
    /// The result is an equally valid eigensystem; used to check that
    /// physical outputs are phase invariant.
    pub fn with_column_phases(&self, phases: &[T]) -> Result<Self> {
        if phases.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: phases.len() });
        }
        let mut vectors = self.eigenvectors.clone();
        for (m, &theta) in phases.iter().enumerate() {
            let z = crate::scalar::cis(theta);
            vectors.column_mut(m).iter_mut().for_each(|w| *w *= z);
        }
        Ok(Self { eigenvalues: self.eigenvalues.clone(), eigenvectors: vectors })
    }
}

/// `max - min` of a sorted or unsorted spectrum.
pub fn spectral_width<T: Real>(spectrum: &[T]) -> T {
    let (lo, hi) = spectrum
        .iter()
        .fold((T::max_value().unwrap(), T::min_value().unwrap()), |(lo, hi), &e| (lo.min(e), hi.max(e)));
    if spectrum.is_empty() {
        T::zero()
    } else {
        hi - lo
    }
}

/// Location of the smallest gap of a sorted spectrum when it falls below
/// `DEGENERACY_THRESHOLD * width`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Degeneracy {
    pub index: usize,
    pub gap: f64,
    pub threshold: f64,
}

impl From<Degeneracy> for Error {
    fn from(d: Degeneracy) -> Self {
        Error::DegenerateSpectrum { index: d.index, gap: d.gap, threshold: d.threshold }
    }
}

/// Detects (near-)degenerate adjacent levels in a sorted spectrum.
pub fn find_degeneracy<T: Real>(sorted: &[T]) -> Option<Degeneracy> {
    if sorted.len() < 2 {
        return None;
    }
    let width = spectral_width(sorted).as_f64();
    let threshold = DEGENERACY_THRESHOLD * width;
    let (index, gap) = sorted
        .windows(2)
        .map(|w| (w[1] - w[0]).as_f64())
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))?;
    // a fully degenerate spectrum has zero width and zero gaps
    (gap <= threshold).then_some(Degeneracy { index, gap, threshold })
}

/// Dense Hermitian eigendecomposition with sorted eigenvalues and the
/// deterministic phase convention described on [`EigenSystem`].
pub fn eigendecompose<T: Real>(h: &HermitianOperator<T>) -> Result<EigenSystem<T>> {
    h.check_hermitian()?;
    let dim = h.dim();
    let matrix = h.matrix();
    let eig = SymmetricEigen::try_new(matrix.clone(), T::default_epsilon(), 0)
        .ok_or_else(|| Error::InvalidParameter("eigensolver did not converge".into()))?;

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());

    let eigenvalues: Vec<T> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::<Complex<T>>::zeros(dim, dim);
    for (dst, &src) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(src);
        let (pivot, _) = col
            .iter()
            .enumerate()
            .fold((0, T::zero()), |(bi, bv), (i, z)| {
                let v = norm_sqr(*z);
                if v > bv { (i, v) } else { (bi, bv) }
            });
        let p = col[pivot];
        let phase = p.conj().unscale(modulus(p));
        for (i, z) in col.iter().enumerate() {
            vectors[(i, dst)] = *z * phase;
        }
        // exact zero imaginary part on the pivot
        vectors[(pivot, dst)] = Complex::new(modulus(vectors[(pivot, dst)]), T::zero());
    }

    let scale = eigenvalues.iter().fold(T::zero(), |acc, e| acc.max(e.abs()));
    let allowed = T::tolerance(1e-9) * scale.max(T::lit(f64::MIN_POSITIVE));
    let residual = (matrix * &vectors - {
        let mut scaled = vectors.clone();
        for (m, &e) in eigenvalues.iter().enumerate() {
            scaled.column_mut(m).iter_mut().for_each(|z| *z = z.scale(e));
        }
        scaled
    })
    .column_iter()
    .map(|c| c.iter().map(|z| norm_sqr(*z)).fold(T::zero(), |a, b| a + b).sqrt())
    .fold(T::zero(), |a, b| a.max(b));
    if residual > allowed {
        return Err(Error::Residual { residual: residual.as_f64(), allowed: allowed.as_f64() });
    }

    if let Some(d) = find_degeneracy(&eigenvalues) {
        log::warn!(
            "near-degenerate levels {} and {} (gap {:.3e}); perfect-filter oracles assume a non-degenerate spectrum",
            d.index,
            d.index + 1,
            d.gap
        );
    }
    EigenSystem::from_parts(eigenvalues, vectors)
}

/// Max entry of `|M† M - 1|`.
pub fn unitarity_deviation<T: Real>(m: &DMatrix<Complex<T>>) -> T {
    let mut gram = m.adjoint() * m;
    for i in 0..gram.nrows() {
        gram[(i, i)].re -= T::one();
    }
    gram.iter().fold(T::zero(), |worst, z| worst.max(modulus(*z)))
}

fn check_unitary<T: Real>(m: &DMatrix<Complex<T>>) -> Result<()> {
    let deviation = unitarity_deviation(m);
    let allowed = T::tolerance(1e-10);
    if deviation > allowed {
        return Err(Error::NotUnitary { deviation: deviation.as_f64(), allowed: allowed.as_f64() });
    }
    Ok(())
}

/// Unitary change of basis between two eigenbases.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapMatrix<T: Real> {
    matrix: DMatrix<Complex<T>>,
}

impl<T: Real> OverlapMatrix<T> {
    /// Wraps a square matrix after checking `U†U = 1`.
    pub fn new(matrix: DMatrix<Complex<T>>) -> Result<Self> {
        if matrix.nrows() == 0 {
            return Err(Error::InvalidDimension(0));
        }
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch { expected: matrix.nrows(), found: matrix.ncols() });
        }
        check_unitary(&matrix)?;
        Ok(Self { matrix })
    }

    pub fn identity(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(0));
        }
        Ok(Self { matrix: DMatrix::identity(dim, dim) })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex<T>> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<Complex<T>> {
        self.matrix
    }

    /// Elementwise `|U_{mn}|²`.
    pub fn weights(&self) -> DMatrix<T> {
        self.matrix.map(norm_sqr)
    }

    pub fn adjoint(&self) -> Self {
        Self { matrix: self.matrix.adjoint() }
    }
}

/// `W_a† W_b`, the overlap `<a_m|b_n>` between two eigenbases.
pub fn overlap<T: Real>(a: &EigenSystem<T>, b: &EigenSystem<T>) -> Result<OverlapMatrix<T>> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), found: b.dim() });
    }
    OverlapMatrix::new(a.eigenvectors.adjoint() * &b.eigenvectors)
}

/// Inverse participation ratio `Σ_{mn} |U_{mn}|⁴`, which lies in `[1, D]`.
pub fn ipr<T: Real>(u: &OverlapMatrix<T>) -> T {
    u.matrix.iter().map(|z| {
        let w = norm_sqr(*z);
        w * w
    })
    .fold(T::zero(), |a, b| a + b)
}
