//! Haar-random unitaries and the unitary Weingarten function.
//!
//! For `p` factors of `U` and `p` of `U*`,
//!
//! ```text
//! E[U_{i_1 j_1} .. U_{i_p j_p} conj(U_{i'_1 j'_1} .. U_{i'_p j'_p})]
//!     = Σ_{σ,τ ∈ S_p} δ(i_r = i'_{σ(r)}) δ(j_r = j'_{τ(r)}) Wg_D(στ⁻¹)
//! ```
//!
//! where `Wg_D` is the inverse of the Gram matrix `G_{σ,τ} = D^{#cycles(στ⁻¹)}`.
//! `Wg_D` depends only on the cycle type, so the `p! × p!` inversion collapses
//! to a linear system indexed by the partitions of `p`. Both routes are
//! implemented; the class-collapsed one is solved in exact rationals.

use std::collections::BTreeMap;
use std::fmt;

use log::warn;
use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_complex::{Complex, Complex64};
use num_rational::BigRational;
use num_traits::{Num, Signed, ToPrimitive};
use rand::Rng;
use serde::Serialize;

use crate::combinatorics::{all_perms, Perm};
use crate::error::{Error, Result};
use crate::montecarlo::run_chunked;
use crate::scalar::{modulus, Real};

/// Largest moment order for Gram matrices and tables.
pub const MAX_P: usize = 4;

/// Condition numbers above this trigger a warning.
const CONDITION_WARNING: f64 = 1e8;

/// Scalar field the Gram systems are solved over.
pub trait WgField: Clone + Num + Signed + PartialOrd + fmt::Debug {
    fn from_u64(x: u64) -> Self;
    fn to_f64(&self) -> f64;
}

impl WgField for f64 {
    fn from_u64(x: u64) -> Self {
        x as f64
    }

    fn to_f64(&self) -> f64 {
        *self
    }
}

impl WgField for BigRational {
    fn from_u64(x: u64) -> Self {
        BigRational::from_integer(BigInt::from(x))
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

/// Partitions of `p` in non-increasing parts, in reverse lexicographic
/// order (so `[p]` first and `[1, .., 1]` last).
pub fn partitions(p: usize) -> Vec<Vec<usize>> {
    fn extend(rest: usize, max: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if rest == 0 {
            out.push(prefix.clone());
            return;
        }
        for part in (1..=rest.min(max)).rev() {
            prefix.push(part);
            extend(rest - part, part, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    extend(p, p, &mut Vec::new(), &mut out);
    out
}

fn check_order(p: usize, dim: usize) -> Result<()> {
    if p == 0 || p > MAX_P {
        return Err(Error::InvalidParameter(format!("moment order p must be in 1..={MAX_P}, got {p}")));
    }
    if dim < p {
        return Err(Error::InvalidParameter(format!("Gram matrix is singular for D = {dim} < p = {p}")));
    }
    Ok(())
}

fn power<F: WgField>(dim: usize, exp: usize) -> F {
    F::from_u64((dim as u64).pow(exp as u32))
}

/// Gram matrix `D^{#cycles(στ⁻¹)}` over `S_p` in the order of [`all_perms`].
pub fn gram_matrix<F: WgField>(p: usize, dim: usize) -> Result<Vec<Vec<F>>> {
    check_order(p, dim)?;
    let perms = all_perms(p);
    Ok(perms
        .iter()
        .map(|s| perms.iter().map(|t| power(dim, s.compose(&t.inverse()).unwrap().cycle_count())).collect())
        .collect())
}

/// Inverse by Gauss-Jordan elimination with largest-magnitude pivoting.
pub fn invert<F: WgField>(matrix: &[Vec<F>]) -> Result<Vec<Vec<F>>> {
    let n = matrix.len();
    let mut a: Vec<Vec<F>> = matrix.to_vec();
    let mut inv: Vec<Vec<F>> = (0..n).map(|i| (0..n).map(|j| if i == j { F::one() } else { F::zero() }).collect()).collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| a[x][col].abs().partial_cmp(&a[y][col].abs()).unwrap_or(std::cmp::Ordering::Equal))
            .unwrap();
        if a[pivot][col].is_zero() {
            return Err(Error::InvalidParameter("matrix is singular".into()));
        }
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let p = a[col][col].clone();
        for j in 0..n {
            a[col][j] = a[col][j].clone() / p.clone();
            inv[col][j] = inv[col][j].clone() / p.clone();
        }
        for row in 0..n {
            if row == col || a[row][col].is_zero() {
                continue;
            }
            let factor = a[row][col].clone();
            for j in 0..n {
                a[row][j] = a[row][j].clone() - factor.clone() * a[col][j].clone();
                inv[row][j] = inv[row][j].clone() - factor.clone() * inv[col][j].clone();
            }
        }
    }
    Ok(inv)
}

/// 2-norm condition number of the (symmetric) Gram matrix.
pub fn gram_condition_number(p: usize, dim: usize) -> Result<f64> {
    let g = gram_matrix::<f64>(p, dim)?;
    let n = g.len();
    let m = DMatrix::from_fn(n, n, |i, j| g[i][j]);
    let eig = m.symmetric_eigenvalues();
    let max = eig.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
    let min = eig.iter().fold(f64::INFINITY, |a, &x| a.min(x.abs()));
    Ok(if min > 0.0 { max / min } else { f64::INFINITY })
}

/// Weingarten values per cycle type from the full `p! × p!` inversion.
pub fn weingarten_full<F: WgField>(p: usize, dim: usize) -> Result<BTreeMap<Vec<usize>, F>> {
    let inv = invert(&gram_matrix::<F>(p, dim)?)?;
    let perms = all_perms(p);
    let mut out = BTreeMap::new();
    for (j, tau) in perms.iter().enumerate() {
        // row of the identity: Wg(id · τ⁻¹)
        out.entry(tau.inverse().cycle_type()).or_insert_with(|| inv[0][j].clone());
    }
    Ok(out)
}

/// Weingarten values per cycle type from the class-collapsed system
/// `Σ_μ (Σ_{τ ∈ C_μ} D^{#cycles(σ_λ τ⁻¹)}) Wg(μ) = δ_{λ, id}`.
pub fn weingarten_collapsed<F: WgField>(p: usize, dim: usize) -> Result<BTreeMap<Vec<usize>, F>> {
    check_order(p, dim)?;
    let classes = partitions(p);
    let perms = all_perms(p);
    let representative = |lambda: &Vec<usize>| perms.iter().find(|s| &s.cycle_type() == lambda).unwrap().clone();
    let mut system = vec![vec![F::zero(); classes.len()]; classes.len()];
    for (l, lambda) in classes.iter().enumerate() {
        let sigma = representative(lambda);
        for tau in &perms {
            let mu = classes.iter().position(|c| *c == tau.cycle_type()).unwrap();
            let cycles = sigma.compose(&tau.inverse()).unwrap().cycle_count();
            system[l][mu] = system[l][mu].clone() + power::<F>(dim, cycles);
        }
    }
    let inv = invert(&system)?;
    let id = classes.len() - 1;
    Ok(classes.into_iter().enumerate().map(|(mu, c)| (c, inv[mu][id].clone())).collect())
}

/// Exact Weingarten values for one `(p, D)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeingartenTable {
    p: usize,
    dim: usize,
    values: BTreeMap<Vec<usize>, BigRational>,
}

/// Printable form of a table entry.
#[derive(Debug, Clone, Serialize)]
pub struct WeingartenEntry {
    pub cycle_type: Vec<usize>,
    pub exact: String,
    pub value: f64,
}

impl WeingartenTable {
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &BTreeMap<Vec<usize>, BigRational> {
        &self.values
    }

    /// `Wg_D` of a cycle type.
    pub fn get(&self, cycle_type: &[usize]) -> Option<&BigRational> {
        self.values.get(cycle_type)
    }

    /// `Wg_D(perm)` as a double.
    pub fn of_perm(&self, perm: &Perm) -> f64 {
        WgField::to_f64(&self.values[&perm.cycle_type()])
    }

    pub fn entries(&self) -> Vec<WeingartenEntry> {
        self.values
            .iter()
            .map(|(c, v)| WeingartenEntry { cycle_type: c.clone(), exact: v.to_string(), value: WgField::to_f64(v) })
            .collect()
    }
}

/// Exact Weingarten table, warning when the Gram matrix is ill conditioned.
pub fn weingarten_table(p: usize, dim: usize) -> Result<WeingartenTable> {
    let values = weingarten_collapsed::<BigRational>(p, dim)?;
    let cond = gram_condition_number(p, dim)?;
    if cond > CONDITION_WARNING {
        warn!("Gram matrix for p = {p}, D = {dim} is ill conditioned (condition number {cond:.3e})");
    }
    Ok(WeingartenTable { p, dim, values })
}

/// One Haar-random unitary: QR of a complex Ginibre matrix with the phases
/// of `diag(R)` moved into `Q`.
pub fn haar_sample<T: Real, R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<DMatrix<Complex<T>>> {
    if dim == 0 {
        return Err(Error::InvalidDimension(0));
    }
    let scale = T::lit(std::f64::consts::FRAC_1_SQRT_2);
    // column-major draw order, real part first
    let ginibre = DMatrix::from_fn(dim, dim, |_, _| {
        let re = T::standard_normal(rng) * scale;
        let im = T::standard_normal(rng) * scale;
        Complex::new(re, im)
    });
    let qr = ginibre.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..dim {
        let d = r[(j, j)];
        let m = modulus(d);
        if m > T::zero() {
            let phase = d.unscale(m);
            q.column_mut(j).iter_mut().for_each(|z| *z *= phase);
        }
    }
    Ok(q)
}

/// Matrix-entry monomial `Π U_{i_r j_r} Π conj(U_{i'_r j'_r})`, 0-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Monomial {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub conj_rows: Vec<usize>,
    pub conj_cols: Vec<usize>,
}

impl Monomial {
    pub fn new(rows: Vec<usize>, cols: Vec<usize>, conj_rows: Vec<usize>, conj_cols: Vec<usize>) -> Result<Self> {
        if rows.len() != cols.len() || conj_rows.len() != conj_cols.len() {
            return Err(Error::InvalidParameter("row and column index tuples differ in length".into()));
        }
        Ok(Self { rows, cols, conj_rows, conj_cols })
    }

    /// Same indices on every factor, `p` times each.
    pub fn diagonal(p: usize, i: usize, j: usize) -> Self {
        Self { rows: vec![i; p], cols: vec![j; p], conj_rows: vec![i; p], conj_cols: vec![j; p] }
    }

    fn max_index(&self) -> usize {
        self.rows.iter().chain(&self.cols).chain(&self.conj_rows).chain(&self.conj_cols).copied().max().unwrap_or(0)
    }

    fn evaluate(&self, u: &DMatrix<Complex64>) -> Complex64 {
        let mut z = Complex64::new(1.0, 0.0);
        for (&i, &j) in self.rows.iter().zip(&self.cols) {
            z *= u[(i, j)];
        }
        for (&i, &j) in self.conj_rows.iter().zip(&self.conj_cols) {
            z *= u[(i, j)].conj();
        }
        z
    }
}

/// Haar average of a monomial predicted by the Weingarten formula.
pub fn predicted_monomial(monomial: &Monomial, dim: usize) -> Result<f64> {
    let p = monomial.rows.len();
    if p != monomial.conj_rows.len() {
        return Ok(0.0);
    }
    if p == 0 {
        return Ok(1.0);
    }
    let table = weingarten_table(p, dim)?;
    let perms = all_perms(p);
    let mut total = 0.0;
    for sigma in &perms {
        if !(0..p).all(|r| monomial.rows[r] == monomial.conj_rows[sigma.apply(r)]) {
            continue;
        }
        for tau in &perms {
            if (0..p).all(|r| monomial.cols[r] == monomial.conj_cols[tau.apply(r)]) {
                total += table.of_perm(&sigma.compose(&tau.inverse())?);
            }
        }
    }
    Ok(total)
}

/// Outcome of a Monte Carlo check of one monomial.
#[derive(Debug, Clone, Serialize)]
pub struct MonomialCheck {
    pub dim: usize,
    pub samples: usize,
    pub seed: u64,
    pub mc_mean: [f64; 2],
    pub mc_stderr: f64,
    pub predicted: f64,
    pub z_score: f64,
}

/// Compares the Haar Monte Carlo average of a monomial with its prediction.
/// The z-score uses the combined standard error of the real and imaginary
/// parts.
pub fn verify_haar_monomial(monomial: &Monomial, dim: usize, samples: usize, seed: u64) -> Result<MonomialCheck> {
    let p = monomial.rows.len().max(monomial.conj_rows.len());
    if p > 3 || dim > 16 {
        return Err(Error::TooLarge(format!("monomial verification limited to p <= 3 and D <= 16, got p = {p}, D = {dim}")));
    }
    if samples == 0 {
        return Err(Error::InvalidParameter("samples must be positive".into()));
    }
    if monomial.max_index() >= dim {
        return Err(Error::InvalidParameter(format!("monomial index out of range for D = {dim}")));
    }
    let predicted = predicted_monomial(monomial, dim)?;
    let moments = run_chunked(samples, seed, 2, |rng, n| {
        let mut re = Vec::with_capacity(n);
        let mut im = Vec::with_capacity(n);
        for _ in 0..n {
            let z = monomial.evaluate(&haar_sample::<f64, _>(dim, rng)?);
            re.push(z.re);
            im.push(z.im);
        }
        Ok(vec![re, im])
    })?;
    let mean = [moments[0].mean, moments[1].mean];
    let stderr = (moments[0].stderr().powi(2) + moments[1].stderr().powi(2)).sqrt();
    let deviation = ((mean[0] - predicted).powi(2) + mean[1].powi(2)).sqrt();
    let z_score = if stderr > 0.0 {
        deviation / stderr
    } else if deviation < 1e-12 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(MonomialCheck { dim, samples, seed, mc_mean: mean, mc_stderr: stderr, predicted, z_score })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::{One, Zero};
    use crate::rng::{stream, Purpose};
    use crate::spectral::unitarity_deviation;

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn partition_lists() {
        assert_eq!(partitions(1), vec![vec![1]]);
        assert_eq!(partitions(3), vec![vec![3], vec![2, 1], vec![1, 1, 1]]);
        assert_eq!(partitions(4).len(), 5);
    }

    #[test]
    fn gram_examples() {
        assert_eq!(gram_matrix::<f64>(1, 7).unwrap(), vec![vec![7.0]]);
        let g = gram_matrix::<f64>(2, 4).unwrap();
        assert_eq!(g, vec![vec![16.0, 4.0], vec![4.0, 16.0]]);
        assert!(gram_matrix::<f64>(3, 2).is_err());
        assert!(gram_matrix::<f64>(5, 9).is_err());
    }

    #[test]
    fn gram_is_positive_definite() {
        let g = gram_matrix::<f64>(3, 5).unwrap();
        let m = DMatrix::from_fn(6, 6, |i, j| g[i][j]);
        assert_eq!(m, m.transpose());
        assert!(m.cholesky().is_some());
    }

    #[test]
    fn exact_low_order_values() {
        let t1 = weingarten_table(1, 9).unwrap();
        assert_eq!(t1.get(&[1]).unwrap(), &rat(1, 9));
        for d in [2i64, 3, 8, 20] {
            let t = weingarten_table(2, d as usize).unwrap();
            assert_eq!(t.get(&[1, 1]).unwrap(), &rat(1, d * d - 1));
            assert_eq!(t.get(&[2]).unwrap(), &rat(-1, d * (d * d - 1)));
        }
    }

    #[test]
    fn collapsed_and_full_routes_agree_exactly() {
        for p in 1..=3 {
            for d in p..=p + 4 {
                let a = weingarten_full::<BigRational>(p, d).unwrap();
                let b = weingarten_collapsed::<BigRational>(p, d).unwrap();
                assert_eq!(a, b, "p = {p}, D = {d}");
            }
        }
    }

    #[test]
    fn inverse_is_class_function_and_residual_small() {
        for p in 1..=3 {
            let d = 6;
            let g = gram_matrix::<BigRational>(p, d).unwrap();
            let inv = invert(&g).unwrap();
            let perms = all_perms(p);
            let table = weingarten_table(p, d).unwrap();
            for (i, s) in perms.iter().enumerate() {
                for (j, t) in perms.iter().enumerate() {
                    let ct = s.compose(&t.inverse()).unwrap().cycle_type();
                    assert_eq!(&inv[i][j], table.get(&ct).unwrap());
                }
            }
            // floating route: G · G⁻¹ = 1
            let gf = gram_matrix::<f64>(p, d).unwrap();
            let invf = invert(&gf).unwrap();
            let n = gf.len();
            let mut residual = 0.0f64;
            for i in 0..n {
                for j in 0..n {
                    let v: f64 = (0..n).map(|l| gf[i][l] * invf[l][j]).sum();
                    residual = residual.max((v - if i == j { 1.0 } else { 0.0 }).abs());
                }
            }
            assert!(residual < 1e-10 * n as f64, "residual {residual}");
        }
    }

    #[test]
    fn p4_table_exists_and_sums_correctly() {
        // Σ_τ D^{#cycles(τ)} Wg(τ) = 1 (identity row of G·Wg)
        let d = 5;
        let t = weingarten_table(4, d).unwrap();
        let mut sum = BigRational::zero();
        for tau in all_perms(4) {
            sum += BigRational::from_integer(BigInt::from(d).pow(tau.cycle_count() as u32)) * t.get(&tau.cycle_type()).unwrap();
        }
        assert!(sum.is_one());
    }

    #[test]
    fn condition_number_grows_near_singularity() {
        assert!(gram_condition_number(3, 3).unwrap() > gram_condition_number(3, 30).unwrap());
    }

    #[test]
    fn haar_samples_are_unitary() {
        let mut rng = stream(1, Purpose::Verification, 0);
        for d in [1, 2, 7, 30] {
            let u = haar_sample::<f64, _>(d, &mut rng).unwrap();
            assert!(unitarity_deviation(&u) < 1e-10);
        }
        let one = haar_sample::<f64, _>(1, &mut rng).unwrap();
        assert!((one[(0, 0)].norm() - 1.0).abs() < 1e-14);
        assert!(haar_sample::<f64, _>(0, &mut rng).is_err());
        let u32 = haar_sample::<f32, _>(10, &mut rng).unwrap();
        assert!(unitarity_deviation(&u32) < 1e-4);
    }

    #[test]
    fn monomial_predictions() {
        assert_eq!(predicted_monomial(&Monomial::diagonal(1, 0, 0), 7).unwrap(), 1.0 / 7.0);
        let p2 = predicted_monomial(&Monomial::diagonal(2, 0, 0), 8).unwrap();
        assert!((p2 - 2.0 / (8.0 * 9.0)).abs() < 1e-15);
        let unbalanced = Monomial::new(vec![0, 0], vec![0, 1], vec![0], vec![0]).unwrap();
        assert_eq!(predicted_monomial(&unbalanced, 8).unwrap(), 0.0);
        // E|U_11|²|U_22|² = 1/(D²-1)
        let m = Monomial::new(vec![0, 1], vec![0, 1], vec![0, 1], vec![0, 1]).unwrap();
        assert!((predicted_monomial(&m, 8).unwrap() - 1.0 / 63.0).abs() < 1e-15);
    }

    #[test]
    fn monomial_verification_small() {
        let check = verify_haar_monomial(&Monomial::diagonal(1, 0, 0), 4, 4000, 3).unwrap();
        assert!(check.z_score < 4.0, "{check:?}");
        let unbalanced = Monomial::new(vec![0, 1], vec![1, 0], vec![], vec![]).unwrap();
        let check = verify_haar_monomial(&unbalanced, 4, 4000, 3).unwrap();
        assert_eq!(check.predicted, 0.0);
        assert!(check.z_score < 4.0, "{check:?}");
        assert!(verify_haar_monomial(&Monomial::diagonal(1, 0, 0), 17, 10, 0).is_err());
    }
}
