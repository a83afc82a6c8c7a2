//! Dense multi-spin linear algebra on the 2^N tensor-product space.
//!
//! Basis states are labelled by bit strings with site 0 as the most
//! significant bit; bit value 0 is spin up (m = +1/2).

use nalgebra::{Complex, ComplexField, DMatrix, DVector};
use thiserror::Error;

use crate::Real;

pub type CMatrix<T> = DMatrix<Complex<T>>;

/// Default cap on the number of spins a dense operator may span.
pub const DEFAULT_MAX_SPINS: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpinError {
    #[error("site {site} out of range for a {size}-spin system")]
    SiteOutOfRange { site: usize, size: usize },
    #[error("{size} spins exceeds the capacity of {max}")]
    Capacity { size: usize, max: usize },
    #[error("operator is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("dimension {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("negative evolution time {0}")]
    NegativeDuration(f64),
    #[error("pulse needs at least one site")]
    EmptySites,
    #[error("expectation value has imaginary residue {0:e}")]
    ImaginaryResidue(f64),
    #[error("trace {0} differs from one")]
    BadTrace(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

fn tol_hermitian<T: Real>() -> T {
    T::default_epsilon() * nalgebra::convert(1e4)
}

fn tol_residue<T: Real>() -> T {
    T::default_epsilon().sqrt() * nalgebra::convert(1e-2)
}

fn c<T: Real>(re: f64, im: f64) -> Complex<T> {
    Complex::new(nalgebra::convert(re), nalgebra::convert(im))
}

fn spins_for_dim(dim: usize) -> Result<usize, SpinError> {
    if dim == 0 || !dim.is_power_of_two() {
        return Err(SpinError::NotPowerOfTwo(dim));
    }
    Ok(dim.trailing_zeros() as usize)
}

fn check_capacity(size: usize, max: usize) -> Result<(), SpinError> {
    if size > max {
        Err(SpinError::Capacity { size, max })
    } else {
        Ok(())
    }
}

/// Largest entry of |A - A^dagger|.
pub fn hermitian_deviation<T: Real>(m: &CMatrix<T>) -> T {
    let n = m.nrows();
    let mut worst = T::zero();
    for i in 0..n {
        for j in i..n {
            let d = (m[(i, j)] - m[(j, i)].conj()).modulus();
            if d > worst {
                worst = d;
            }
        }
    }
    worst
}

fn max_modulus<T: Real>(m: &CMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, z| acc.max(z.modulus()))
}

fn is_hermitian<T: Real>(m: &CMatrix<T>) -> bool {
    hermitian_deviation(m) <= tol_hermitian::<T>() * max_modulus(m).max(T::one())
}

/// Dense operator on `n_spins` spin-1/2 particles.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinOperator<T: Real> {
    matrix: CMatrix<T>,
    n_spins: usize,
    hermitian: bool,
}

impl<T: Real> SpinOperator<T> {
    /// Wraps a matrix; the Hermitian flag is set only if the check passes.
    pub fn from_matrix(matrix: CMatrix<T>) -> Result<Self, SpinError> {
        if matrix.nrows() != matrix.ncols() {
            return Err(SpinError::DimensionMismatch(matrix.nrows(), matrix.ncols()));
        }
        let n_spins = spins_for_dim(matrix.nrows())?;
        let hermitian = is_hermitian(&matrix);
        Ok(Self { matrix, n_spins, hermitian })
    }

    pub fn zeros(n_spins: usize) -> Self {
        let d = 1 << n_spins;
        Self { matrix: CMatrix::zeros(d, d), n_spins, hermitian: true }
    }

    pub fn identity(n_spins: usize) -> Self {
        let d = 1 << n_spins;
        Self { matrix: CMatrix::identity(d, d), n_spins, hermitian: true }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn matrix(&self) -> &CMatrix<T> {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix<T> {
        self.matrix
    }

    pub fn trace(&self) -> Complex<T> {
        self.matrix.trace()
    }

    /// True when every off-diagonal entry is exactly zero.
    pub fn is_diagonal(&self) -> bool {
        let n = self.dim();
        for j in 0..n {
            for i in 0..n {
                if i != j && self.matrix[(i, j)] != Complex::new(T::zero(), T::zero()) {
                    return false;
                }
            }
        }
        true
    }

    pub fn scaled(&self, s: T) -> Self {
        Self { matrix: self.matrix.map(|z| z * s), n_spins: self.n_spins, hermitian: self.hermitian }
    }

    pub fn add(&self, other: &Self) -> Result<Self, SpinError> {
        if self.dim() != other.dim() {
            return Err(SpinError::DimensionMismatch(self.dim(), other.dim()));
        }
        Ok(Self {
            matrix: &self.matrix + &other.matrix,
            n_spins: self.n_spins,
            hermitian: self.hermitian && other.hermitian,
        })
    }

    /// In-place `self += s * other`.
    pub fn add_scaled(&mut self, other: &Self, s: T) -> Result<(), SpinError> {
        if self.dim() != other.dim() {
            return Err(SpinError::DimensionMismatch(self.dim(), other.dim()));
        }
        self.matrix.zip_apply(&other.matrix, |a, b| *a += b * s);
        self.hermitian = self.hermitian && other.hermitian;
        Ok(())
    }

    pub fn mul(&self, other: &Self) -> Result<Self, SpinError> {
        if self.dim() != other.dim() {
            return Err(SpinError::DimensionMismatch(self.dim(), other.dim()));
        }
        Self::from_matrix(&self.matrix * &other.matrix)
    }

    pub fn commutator(&self, other: &Self) -> Result<Self, SpinError> {
        if self.dim() != other.dim() {
            return Err(SpinError::DimensionMismatch(self.dim(), other.dim()));
        }
        Self::from_matrix(&self.matrix * &other.matrix - &other.matrix * &self.matrix)
    }

    /// Largest entry modulus.
    pub fn max_norm(&self) -> T {
        max_modulus(&self.matrix)
    }
}

/// Embedded spin operator sigma_axis/2 on `site` of a `system_size`-spin register.
pub fn embed_pauli<T: Real>(system_size: usize, site: usize, axis: Axis) -> Result<SpinOperator<T>, SpinError> {
    embed_pauli_capped(system_size, site, axis, DEFAULT_MAX_SPINS)
}

pub fn embed_pauli_capped<T: Real>(
    system_size: usize,
    site: usize,
    axis: Axis,
    max_spins: usize,
) -> Result<SpinOperator<T>, SpinError> {
    check_capacity(system_size, max_spins)?;
    if site >= system_size {
        return Err(SpinError::SiteOutOfRange { site, size: system_size });
    }
    let d = 1usize << system_size;
    let shift = system_size - 1 - site;
    let mask = 1usize << shift;
    let mut m = CMatrix::<T>::zeros(d, d);
    for col in 0..d {
        let down = (col & mask) != 0;
        match axis {
            Axis::Z => m[(col, col)] = c(if down { -0.5 } else { 0.5 }, 0.0),
            Axis::X => m[(col ^ mask, col)] = c(0.5, 0.0),
            // sigma_y |up> = i|down>, sigma_y |down> = -i|up>
            Axis::Y => m[(col ^ mask, col)] = c(0.0, if down { -0.5 } else { 0.5 }),
        }
    }
    Ok(SpinOperator { matrix: m, n_spins: system_size, hermitian: true })
}

/// Diagonal of S^z_site as +-1/2 values; cheap for large registers.
pub fn sz_diagonal(system_size: usize, site: usize) -> Vec<f64> {
    let shift = system_size - 1 - site;
    (0..1usize << system_size)
        .map(|b| if (b >> shift) & 1 == 0 { 0.5 } else { -0.5 })
        .collect()
}

/// Density matrix: Hermitian, unit trace, positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix<T: Real> {
    matrix: CMatrix<T>,
    n_spins: usize,
}

impl<T: Real> DensityMatrix<T> {
    /// Checks Hermiticity and unit trace. Positivity is checked by [`Self::min_eigenvalue`].
    pub fn new(matrix: CMatrix<T>) -> Result<Self, SpinError> {
        if matrix.nrows() != matrix.ncols() {
            return Err(SpinError::DimensionMismatch(matrix.nrows(), matrix.ncols()));
        }
        let n_spins = spins_for_dim(matrix.nrows())?;
        let dev = hermitian_deviation(&matrix);
        if dev > tol_hermitian::<T>() {
            return Err(SpinError::NotHermitian(dev.to_f64().unwrap_or(f64::NAN)));
        }
        let tr = matrix.trace();
        let err = (tr - Complex::new(T::one(), T::zero())).modulus();
        if err > tol_residue::<T>() {
            return Err(SpinError::BadTrace(tr.re.to_f64().unwrap_or(f64::NAN)));
        }
        Ok(Self { matrix, n_spins })
    }

    pub fn maximally_mixed(n_spins: usize) -> Self {
        let d = 1usize << n_spins;
        let w: T = T::one() / nalgebra::convert::<f64, T>(d as f64);
        Self { matrix: CMatrix::from_diagonal_element(d, d, Complex::new(w, T::zero())), n_spins }
    }

    /// (1/d)(1 + deviation); the deviation must be Hermitian and traceless.
    pub fn from_deviation(deviation: &SpinOperator<T>) -> Result<Self, SpinError> {
        let d = deviation.dim();
        let inv: T = T::one() / nalgebra::convert::<f64, T>(d as f64);
        let mut m = deviation.matrix().map(|z| z * inv);
        for i in 0..d {
            m[(i, i)] += Complex::new(inv, T::zero());
        }
        Self::new(m)
    }

    pub(crate) fn from_matrix_unchecked(matrix: CMatrix<T>) -> Self {
        let n_spins = matrix.nrows().trailing_zeros() as usize;
        Self { matrix, n_spins }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    pub fn matrix(&self) -> &CMatrix<T> {
        &self.matrix
    }

    pub fn trace(&self) -> Complex<T> {
        self.matrix.trace()
    }

    pub fn hermitian_deviation(&self) -> T {
        hermitian_deviation(&self.matrix)
    }

    /// Sorted eigenvalues (ascending).
    pub fn eigenvalues(&self) -> Vec<T> {
        let mut ev: Vec<T> = self.matrix.clone().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        ev
    }

    pub fn min_eigenvalue(&self) -> T {
        self.eigenvalues().first().copied().unwrap_or_else(T::zero)
    }

    /// Largest entrywise distance to another state.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        max_modulus(&(&self.matrix - &other.matrix))
    }
}

/// Eigenbasis of a Hermitian operator.
#[derive(Debug, Clone)]
pub enum Basis<T: Real> {
    /// H is diagonal in the computational basis.
    Computational,
    /// Real orthogonal eigenvectors (real symmetric H).
    Real(DMatrix<T>),
    Complex(CMatrix<T>),
}

/// Precomputed spectral decomposition used for e^{-iHt}.
#[derive(Debug, Clone)]
pub struct Eigensystem<T: Real> {
    pub energies: Vec<T>,
    pub basis: Basis<T>,
}

fn split<T: Real>(a: &CMatrix<T>) -> (DMatrix<T>, DMatrix<T>) {
    (a.map(|z| z.re), a.map(|z| z.im))
}

fn join<T: Real>(re: DMatrix<T>, im: &DMatrix<T>) -> CMatrix<T> {
    re.zip_map(im, |r, i| Complex::new(r, i))
}

impl<T: Real> Eigensystem<T> {
    pub fn of(h: &SpinOperator<T>) -> Result<Self, SpinError> {
        if !h.is_hermitian() {
            let dev = hermitian_deviation(h.matrix());
            return Err(SpinError::NotHermitian(dev.to_f64().unwrap_or(f64::NAN)));
        }
        if h.is_diagonal() {
            let energies = (0..h.dim()).map(|i| h.matrix()[(i, i)].re).collect();
            return Ok(Self { energies, basis: Basis::Computational });
        }
        if h.matrix().iter().all(|z| z.im == T::zero()) {
            let eig = h.matrix().map(|z| z.re).symmetric_eigen();
            Ok(Self { energies: eig.eigenvalues.iter().copied().collect(), basis: Basis::Real(eig.eigenvectors) })
        } else {
            let eig = h.matrix().clone().symmetric_eigen();
            Ok(Self { energies: eig.eigenvalues.iter().copied().collect(), basis: Basis::Complex(eig.eigenvectors) })
        }
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    /// e^{-i E_a t} for every eigenvalue.
    pub fn phases(&self, duration: T) -> DVector<Complex<T>> {
        DVector::from_iterator(
            self.dim(),
            self.energies.iter().map(|&e| {
                let a = -e * duration;
                Complex::new(a.cos(), a.sin())
            }),
        )
    }

    /// V^dagger A V.
    pub fn to_eigenbasis(&self, a: &CMatrix<T>) -> CMatrix<T> {
        match &self.basis {
            Basis::Computational => a.clone(),
            Basis::Real(v) => {
                let (re, im) = split(a);
                let vt = v.transpose();
                join(&vt * re * v, &(&vt * im * v))
            }
            Basis::Complex(v) => v.adjoint() * a * v,
        }
    }

    /// V A V^dagger.
    pub fn from_eigenbasis(&self, a: &CMatrix<T>) -> CMatrix<T> {
        match &self.basis {
            Basis::Computational => a.clone(),
            Basis::Real(v) => {
                let (re, im) = split(a);
                let vt = v.transpose();
                join(v * re * &vt, &(v * im * &vt))
            }
            Basis::Complex(v) => v * a * v.adjoint(),
        }
    }

    /// e^{-iHt} A e^{iHt} for A already in the eigenbasis.
    pub fn conjugate_in_eigenbasis(&self, a: &mut CMatrix<T>, duration: T) {
        let p = self.phases(duration);
        let n = self.dim();
        for j in 0..n {
            let pj = p[j].conj();
            for i in 0..n {
                a[(i, j)] *= p[i] * pj;
            }
        }
    }

    /// e^{-iHt} A e^{iHt}; negative durations run the propagator backwards.
    pub fn conjugate(&self, a: &CMatrix<T>, duration: T) -> CMatrix<T> {
        let mut m = self.to_eigenbasis(a);
        self.conjugate_in_eigenbasis(&mut m, duration);
        self.from_eigenbasis(&m)
    }
}

/// rho(t) = e^{-iHt} rho e^{iHt}.
pub fn evolve<T: Real>(rho: &DensityMatrix<T>, h: &SpinOperator<T>, duration: T) -> Result<DensityMatrix<T>, SpinError> {
    if rho.dim() != h.dim() {
        return Err(SpinError::DimensionMismatch(rho.dim(), h.dim()));
    }
    if duration < T::zero() {
        return Err(SpinError::NegativeDuration(duration.to_f64().unwrap_or(f64::NAN)));
    }
    let eig = Eigensystem::of(h)?;
    Ok(DensityMatrix::from_matrix_unchecked(eig.conjugate(rho.matrix(), duration)))
}

/// 2x2 rotation e^{-i angle sigma_axis / 2} as [[a, b], [c, d]].
pub fn rotation_2x2<T: Real>(axis: Axis, angle: T) -> [[Complex<T>; 2]; 2] {
    let half: T = angle * nalgebra::convert(0.5);
    let (s, co) = (half.sin(), half.cos());
    let z = T::zero();
    match axis {
        Axis::X => [
            [Complex::new(co, z), Complex::new(z, -s)],
            [Complex::new(z, -s), Complex::new(co, z)],
        ],
        Axis::Y => [
            [Complex::new(co, z), Complex::new(-s, z)],
            [Complex::new(s, z), Complex::new(co, z)],
        ],
        Axis::Z => [
            [Complex::new(co, -s), Complex::new(z, z)],
            [Complex::new(z, z), Complex::new(co, s)],
        ],
    }
}

/// A <- U_site A U_site^dagger for a single-site 2x2 unitary.
pub fn conjugate_local<T: Real>(a: &mut CMatrix<T>, n_spins: usize, site: usize, u: &[[Complex<T>; 2]; 2]) {
    let d = a.nrows();
    let mask = 1usize << (n_spins - 1 - site);
    // rows: A <- U A
    for col in 0..d {
        for r0 in (0..d).filter(|r| r & mask == 0) {
            let r1 = r0 | mask;
            let (x0, x1) = (a[(r0, col)], a[(r1, col)]);
            a[(r0, col)] = u[0][0] * x0 + u[0][1] * x1;
            a[(r1, col)] = u[1][0] * x0 + u[1][1] * x1;
        }
    }
    // columns: A <- A U^dagger
    for c0 in (0..d).filter(|c| c & mask == 0) {
        let c1 = c0 | mask;
        for row in 0..d {
            let (x0, x1) = (a[(row, c0)], a[(row, c1)]);
            a[(row, c0)] = x0 * u[0][0].conj() + x1 * u[0][1].conj();
            a[(row, c1)] = x0 * u[1][0].conj() + x1 * u[1][1].conj();
        }
    }
}

/// Ideal instantaneous rotation e^{-i angle sum_s sigma_axis^s / 2}.
pub fn apply_pulse<T: Real>(
    rho: &DensityMatrix<T>,
    sites: &[usize],
    axis: Axis,
    angle: T,
) -> Result<DensityMatrix<T>, SpinError> {
    let mut m = rho.matrix().clone();
    rotate_sites(&mut m, rho.n_spins(), sites, axis, angle)?;
    Ok(DensityMatrix::from_matrix_unchecked(m))
}

/// In-place version of [`apply_pulse`] on a raw operator.
pub fn rotate_sites<T: Real>(
    m: &mut CMatrix<T>,
    n_spins: usize,
    sites: &[usize],
    axis: Axis,
    angle: T,
) -> Result<(), SpinError> {
    if sites.is_empty() {
        return Err(SpinError::EmptySites);
    }
    if let Some(&bad) = sites.iter().find(|&&s| s >= n_spins) {
        return Err(SpinError::SiteOutOfRange { site: bad, size: n_spins });
    }
    let u = rotation_2x2(axis, angle);
    for &s in sites {
        conjugate_local(m, n_spins, s, &u);
    }
    Ok(())
}

/// Tr(A B) without forming the product.
pub fn trace_product<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> Complex<T> {
    let n = a.nrows();
    let mut acc = Complex::new(T::zero(), T::zero());
    for i in 0..n {
        for j in 0..n {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

/// Tr(rho O); fails if the imaginary part is not negligible.
pub fn expectation<T: Real>(rho: &DensityMatrix<T>, o: &SpinOperator<T>) -> Result<T, SpinError> {
    if rho.dim() != o.dim() {
        return Err(SpinError::DimensionMismatch(rho.dim(), o.dim()));
    }
    let v = trace_product(rho.matrix(), o.matrix());
    let scale = v.re.abs().max(T::one());
    if v.im.abs() > tol_residue::<T>() * scale {
        return Err(SpinError::ImaginaryResidue(v.im.to_f64().unwrap_or(f64::NAN)));
    }
    Ok(v.re)
}
