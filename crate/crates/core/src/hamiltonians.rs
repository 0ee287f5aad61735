//! Model Hamiltonians: GUE, complex SYK and the random spin model at half
//! filling, plus the flat (Fourier) overlap matrix.
//!
//! The many-body models are built directly in the half-filling sector. Basis
//! states are the bitmasks with `N/2` bits set, sorted ascending; bit `i`
//! set means site `i` is occupied (fermions) or spin up (spins). Fermionic
//! signs follow Jordan-Wigner ordering: `c_i` picks up `(-1)^n` with `n` the
//! number of occupied sites below `i`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};
use crate::scalar::{modulus, Real};
use crate::spectral::OverlapMatrix;

/// Largest site count accepted by the dense sector builders.
pub const MAX_SITES: usize = 16;

/// Dense Hermitian matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator<T: Real> {
    matrix: DMatrix<Complex<T>>,
}

impl<T: Real> HermitianOperator<T> {
    /// Wraps `matrix` after checking it is square and Hermitian to
    /// `1e-12 * max|H|`.
    pub fn new(matrix: DMatrix<Complex<T>>) -> Result<Self> {
        if matrix.nrows() == 0 {
            return Err(Error::InvalidDimension(0));
        }
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch { expected: matrix.nrows(), found: matrix.ncols() });
        }
        let op = Self { matrix };
        op.check_hermitian()?;
        Ok(op)
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

    /// Largest entry modulus.
    pub fn max_abs(&self) -> T {
        self.matrix.iter().fold(T::zero(), |m, z| m.max(modulus(*z)))
    }

    /// `max |H_ij - conj(H_ji)|`.
    pub fn hermiticity_deviation(&self) -> T {
        let d = self.dim();
        let mut worst = T::zero();
        for j in 0..d {
            for i in 0..=j {
                worst = worst.max(modulus(self.matrix[(i, j)] - self.matrix[(j, i)].conj()));
            }
        }
        worst
    }

    pub fn check_hermitian(&self) -> Result<()> {
        let deviation = self.hermiticity_deviation();
        let allowed = T::tolerance(1e-12) * self.max_abs();
        if deviation > allowed {
            return Err(Error::NotHermitian { deviation: deviation.as_f64(), allowed: allowed.as_f64() });
        }
        Ok(())
    }
}

/// Model family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gue,
    Csyk,
    Rspin,
    Flat,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Gue => "gue",
            ModelKind::Csyk => "csyk",
            ModelKind::Rspin => "rspin",
            ModelKind::Flat => "flat",
        }
    }

    /// Whether the size parameter is a site count rather than a dimension.
    pub fn uses_sites(self) -> bool {
        matches!(self, ModelKind::Csyk | ModelKind::Rspin)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gue" => Ok(ModelKind::Gue),
            "csyk" => Ok(ModelKind::Csyk),
            "rspin" => Ok(ModelKind::Rspin),
            "flat" => Ok(ModelKind::Flat),
            other => Err(Error::Config(format!("unknown model kind '{other}' (expected gue, csyk, rspin or flat)"))),
        }
    }
}

fn default_coupling() -> f64 {
    1.0
}

/// Model family together with its size, couplings and seed.
///
/// `dim` is the Hilbert-space dimension for GUE/FLAT, `n` the site count for
/// cSYK/rSpin. Serializes to a JSON object with keys `kind, n, dim, J, h,
/// seed`, or to `key = value` lines with the same keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(rename = "J", default = "default_coupling")]
    pub j: f64,
    #[serde(default)]
    pub h: f64,
    #[serde(default)]
    pub seed: u64,
}

impl ModelSpec {
    pub fn gue(dim: usize, seed: u64) -> Self {
        Self { kind: ModelKind::Gue, n: None, dim: Some(dim), j: 1.0, h: 0.0, seed }
    }

    pub fn flat(dim: usize, seed: u64) -> Self {
        Self { kind: ModelKind::Flat, n: None, dim: Some(dim), j: 1.0, h: 0.0, seed }
    }

    pub fn csyk(sites: usize, j: f64, seed: u64) -> Self {
        Self { kind: ModelKind::Csyk, n: Some(sites), dim: None, j, h: 0.0, seed }
    }

    pub fn rspin(sites: usize, j: f64, h: f64, seed: u64) -> Self {
        Self { kind: ModelKind::Rspin, n: Some(sites), dim: None, j, h, seed }
    }

    /// Checks the invariants: size present and valid, even site count, `J > 0`, `h >= 0`.
    pub fn validate(&self) -> Result<()> {
        if self.kind.uses_sites() {
            let n = self.n.ok_or_else(|| Error::Config(format!("model {} needs the site count 'n'", self.kind)))?;
            check_sites(n)?;
        } else {
            let d = self.dim.ok_or_else(|| Error::Config(format!("model {} needs the dimension 'dim'", self.kind)))?;
            if d == 0 {
                return Err(Error::InvalidDimension(0));
            }
        }
        if !(self.j > 0.0) || !self.j.is_finite() {
            return Err(Error::InvalidParameter(format!("J must be positive, got {}", self.j)));
        }
        if !(self.h >= 0.0) || !self.h.is_finite() {
            return Err(Error::InvalidParameter(format!("h must be non-negative, got {}", self.h)));
        }
        Ok(())
    }

    /// Hilbert-space dimension of the (sector-restricted) model.
    pub fn hilbert_dim(&self) -> Result<usize> {
        self.validate()?;
        Ok(match self.kind {
            ModelKind::Gue | ModelKind::Flat => self.dim.unwrap(),
            ModelKind::Csyk | ModelKind::Rspin => sector_basis(self.n.unwrap())?.len(),
        })
    }

    /// Seed of the `index`-th independent Hamiltonian drawn from this spec.
    pub fn member_seed(&self, index: u64) -> u64 {
        rng::derive_seed(self.seed, Purpose::Hamiltonian, index)
    }

    /// Builds the `index`-th independent Hamiltonian of the family. For FLAT
    /// this is the GUE matrix whose eigenvalues supply the synthetic spectrum.
    pub fn hamiltonian<T: Real>(&self, index: u64) -> Result<HermitianOperator<T>> {
        self.validate()?;
        let seed = self.member_seed(index);
        match self.kind {
            ModelKind::Gue | ModelKind::Flat => sample_gue(self.dim.unwrap(), seed),
            ModelKind::Csyk => build_csyk(self.n.unwrap(), self.j, seed),
            ModelKind::Rspin => build_rspin(self.n.unwrap(), self.j, self.h, seed),
        }
    }

    /// Parses either a JSON object or `key = value` lines. Blank lines and
    /// lines starting with `#` are ignored in the latter.
    pub fn parse(text: &str) -> Result<Self> {
        let trimmed = text.trim_start();
        let spec: ModelSpec = if trimmed.starts_with('{') {
            serde_json::from_str(trimmed)?
        } else {
            let mut map = serde_json::Map::new();
            for (lineno, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (key, value) = line
                    .split_once('=')
                    .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", lineno + 1)))?;
                let key = key.trim();
                let value = value.trim();
                let json = match key {
                    "kind" => serde_json::Value::String(value.to_string()),
                    "n" | "dim" | "seed" => serde_json::Value::from(value.parse::<u64>().map_err(|e| {
                        Error::Config(format!("line {}: '{key}' must be a non-negative integer: {e}", lineno + 1))
                    })?),
                    "J" | "h" => serde_json::Value::from(value.parse::<f64>().map_err(|e| {
                        Error::Config(format!("line {}: '{key}' must be a number: {e}", lineno + 1))
                    })?),
                    other => return Err(Error::Config(format!("line {}: unknown key '{other}'", lineno + 1))),
                };
                map.insert(key.to_string(), json);
            }
            serde_json::from_value(serde_json::Value::Object(map))?
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `key = value` rendering, the inverse of [`ModelSpec::parse`].
    pub fn to_key_value(&self) -> String {
        let mut out = format!("kind = {}\n", self.kind);
        if let Some(n) = self.n {
            out.push_str(&format!("n = {n}\n"));
        }
        if let Some(d) = self.dim {
            out.push_str(&format!("dim = {d}\n"));
        }
        out.push_str(&format!("J = {:?}\nh = {:?}\nseed = {}\n", self.j, self.h, self.seed));
        out
    }

    /// Short label, e.g. `gue` or `csyk`.
    pub fn label(&self) -> &'static str {
        self.kind.as_str()
    }

    /// Compact one-field description that regenerates the model, e.g.
    /// `csyk:n=8:J=1:seed=3`. Used as the CSV `model` column.
    pub fn descriptor(&self) -> String {
        let mut out = self.kind.as_str().to_string();
        if let Some(n) = self.n {
            out.push_str(&format!(":n={n}"));
        }
        if let Some(d) = self.dim {
            out.push_str(&format!(":dim={d}"));
        }
        match self.kind {
            ModelKind::Csyk => out.push_str(&format!(":J={}", self.j)),
            ModelKind::Rspin => out.push_str(&format!(":J={}:h={}", self.j, self.h)),
            ModelKind::Gue | ModelKind::Flat => {}
        }
        out.push_str(&format!(":seed={}", self.seed));
        out
    }
}

fn check_sites(n: usize) -> Result<()> {
    if n < 4 || n % 2 != 0 {
        return Err(Error::InvalidSector(n));
    }
    if n > MAX_SITES {
        return Err(Error::TooLarge(format!("{n} sites exceeds the dense limit of {MAX_SITES}")));
    }
    Ok(())
}

/// Bitmasks over `n` sites with exactly `n/2` bits set, ascending.
pub fn sector_basis(n: usize) -> Result<Vec<u64>> {
    check_sites(n)?;
    let half = (n / 2) as u32;
    Ok((0u64..(1u64 << n)).filter(|s| s.count_ones() == half).collect())
}

/// GUE matrix with off-diagonal entries of variance `1/D` (real and
/// imaginary parts `1/(2D)` each) and real diagonal of variance `1/D`.
///
/// Draw order: row-major upper triangle, diagonal first in each row, then
/// `(re, im)` for each `j > i`.
pub fn sample_gue<T: Real>(dim: usize, seed: u64) -> Result<HermitianOperator<T>> {
    if dim == 0 {
        return Err(Error::InvalidDimension(0));
    }
    let mut rng = rng::stream(seed, Purpose::Hamiltonian, 0);
    let diag_scale = T::lit((1.0 / dim as f64).sqrt());
    let off_scale = T::lit((0.5 / dim as f64).sqrt());
    let mut m = DMatrix::<Complex<T>>::zeros(dim, dim);
    for i in 0..dim {
        m[(i, i)] = Complex::new(T::standard_normal(&mut rng) * diag_scale, T::zero());
        for j in (i + 1)..dim {
            let re = T::standard_normal(&mut rng) * off_scale;
            let im = T::standard_normal(&mut rng) * off_scale;
            m[(i, j)] = Complex::new(re, im);
            m[(j, i)] = Complex::new(re, -im);
        }
    }
    HermitianOperator::new(m)
}

/// `c_site |state>` as `(sign, new_state)`, or `None` if the site is empty.
#[inline]
fn annihilate(state: u64, site: usize) -> Option<(i32, u64)> {
    let bit = 1u64 << site;
    if state & bit == 0 {
        return None;
    }
    let below = (state & (bit - 1)).count_ones();
    Some((if below % 2 == 0 { 1 } else { -1 }, state ^ bit))
}

/// `c†_site |state>` as `(sign, new_state)`, or `None` if the site is full.
#[inline]
fn create(state: u64, site: usize) -> Option<(i32, u64)> {
    let bit = 1u64 << site;
    if state & bit != 0 {
        return None;
    }
    let below = (state & (bit - 1)).count_ones();
    Some((if below % 2 == 0 { 1 } else { -1 }, state | bit))
}

/// Applies `c†_i c†_j c_k c_l` (rightmost first) to a basis state.
fn four_fermion(state: u64, i: usize, j: usize, k: usize, l: usize) -> Option<(i32, u64)> {
    let (s1, st) = annihilate(state, l)?;
    let (s2, st) = annihilate(st, k)?;
    let (s3, st) = create(st, j)?;
    let (s4, st) = create(st, i)?;
    Some((s1 * s2 * s3 * s4, st))
}

/// Complex SYK Hamiltonian `Σ_{i<j} Σ_{k<l} J_{ij;kl} c†_i c†_j c_k c_l + H.c.`
/// in the half-filling sector.
///
/// Couplings are complex Gaussian with total variance `6J²/N³`, split evenly
/// between real and imaginary parts, drawn as `(re, im)` with `(i, j)` in
/// lexicographic order on the outside and `(k, l)` lexicographic inside.
pub fn build_csyk<T: Real>(sites: usize, j: f64, seed: u64) -> Result<HermitianOperator<T>> {
    let basis = sector_basis(sites)?;
    if !(j > 0.0) {
        return Err(Error::InvalidParameter(format!("J must be positive, got {j}")));
    }
    let dim = basis.len();
    let n = sites as f64;
    let part_scale = T::lit((3.0 * j * j / (n * n * n)).sqrt());
    let pairs: Vec<(usize, usize)> =
        (0..sites).flat_map(|a| ((a + 1)..sites).map(move |b| (a, b))).collect();

    let mut rng = rng::stream(seed, Purpose::Hamiltonian, 0);
    let mut m = DMatrix::<Complex<T>>::zeros(dim, dim);
    for &(ci, cj) in &pairs {
        for &(ak, al) in &pairs {
            let coupling = Complex::new(
                T::standard_normal(&mut rng) * part_scale,
                T::standard_normal(&mut rng) * part_scale,
            );
            for (col, &state) in basis.iter().enumerate() {
                if let Some((sign, out)) = four_fermion(state, ci, cj, ak, al) {
                    let row = basis.binary_search(&out).expect("operator conserves particle number");
                    let term = if sign > 0 { coupling } else { -coupling };
                    m[(row, col)] += term;
                }
            }
        }
    }
    let hermitian = &m + m.adjoint();
    HermitianOperator::new(hermitian)
}

/// Random spin model
/// `Σ_{i<j} J_ij (S^x_i S^x_j + S^y_i S^y_j - 2 S^z_i S^z_j) + Σ_i h_i S^z_i`
/// in the `S^z_total = 0` sector, with `S = σ/2`.
///
/// `J_ij ~ N(0, 4J²/N)` drawn for `i < j` lexicographically, then
/// `h_i ~ N(0, h²)` for `i = 0..N`.
pub fn build_rspin<T: Real>(sites: usize, j: f64, h: f64, seed: u64) -> Result<HermitianOperator<T>> {
    let basis = sector_basis(sites)?;
    if !(j >= 0.0) || !(h >= 0.0) {
        return Err(Error::InvalidParameter(format!("couplings must be non-negative, got J={j}, h={h}")));
    }
    let dim = basis.len();
    let mut rng = rng::stream(seed, Purpose::Hamiltonian, 0);
    let j_scale = (4.0 * j * j / sites as f64).sqrt();
    let mut bonds = Vec::with_capacity(sites * (sites - 1) / 2);
    for a in 0..sites {
        for b in (a + 1)..sites {
            bonds.push((a, b, T::standard_normal(&mut rng) * T::lit(j_scale)));
        }
    }
    let fields: Vec<T> = (0..sites).map(|_| T::standard_normal(&mut rng) * T::lit(h)).collect();

    let sz = |state: u64, site: usize| -> T {
        if state >> site & 1 == 1 { T::lit(0.5) } else { T::lit(-0.5) }
    };
    let mut m = DMatrix::<Complex<T>>::zeros(dim, dim);
    for (col, &state) in basis.iter().enumerate() {
        let mut diag = T::zero();
        for &(a, b, jab) in &bonds {
            diag += T::lit(-2.0) * jab * sz(state, a) * sz(state, b);
            // S^x S^x + S^y S^y = (S^+ S^- + S^- S^+)/2 flips antiparallel pairs
            if (state >> a & 1) != (state >> b & 1) {
                let flipped = state ^ (1 << a) ^ (1 << b);
                let row = basis.binary_search(&flipped).expect("flip-flop conserves S^z");
                m[(row, col)] += Complex::new(jab * T::lit(0.5), T::zero());
            }
        }
        for (site, &hi) in fields.iter().enumerate() {
            diag += hi * sz(state, site);
        }
        m[(col, col)] += Complex::new(diag, T::zero());
    }
    HermitianOperator::new(m)
}

/// Fourier matrix `U_{mn} = exp(2πi m n / D) / √D`, whose entries all have
/// `|U_{mn}|² = 1/D`.
pub fn build_flat_overlap<T: Real>(dim: usize) -> Result<OverlapMatrix<T>> {
    if dim == 0 {
        return Err(Error::InvalidDimension(0));
    }
    let norm = 1.0 / (dim as f64).sqrt();
    let m = DMatrix::from_fn(dim, dim, |a, b| {
        // reduce m*n mod D first so the angle stays small
        let k = ((a as u64 * b as u64) % dim as u64) as f64;
        let angle = 2.0 * std::f64::consts::PI * k / dim as f64;
        Complex::new(T::lit(norm * angle.cos()), T::lit(norm * angle.sin()))
    });
    OverlapMatrix::new(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{eigendecompose, unitarity_deviation};

    #[test]
    fn gue_scalar_case() {
        let h = sample_gue::<f64>(1, 9).unwrap();
        assert_eq!(h.dim(), 1);
        assert_eq!(h.matrix()[(0, 0)].im, 0.0);
        assert!(sample_gue::<f64>(0, 9).is_err());
    }

    #[test]
    fn gue_is_reproducible_and_hermitian() {
        let a = sample_gue::<f64>(40, 123).unwrap();
        let b = sample_gue::<f64>(40, 123).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_gue::<f64>(40, 124).unwrap());
        assert_eq!(a.hermiticity_deviation(), 0.0);
    }

    #[test]
    fn gue_entry_variances() {
        // pooled over many entries: E|H_ij|^2 = 1/D off diagonal, 1/D on it
        let d = 60;
        let mut off = 0.0;
        let mut diag = 0.0;
        let mut count_off = 0.0;
        for seed in 0..10 {
            let h = sample_gue::<f64>(d, seed).unwrap();
            for i in 0..d {
                diag += h.matrix()[(i, i)].norm_sqr();
                for j in (i + 1)..d {
                    off += h.matrix()[(i, j)].norm_sqr();
                    count_off += 1.0;
                }
            }
        }
        let off = off / count_off * d as f64;
        let diag = diag / (10.0 * d as f64) * d as f64;
        assert!((off - 1.0).abs() < 0.03, "off-diagonal variance*D = {off}");
        assert!((diag - 1.0).abs() < 0.15, "diagonal variance*D = {diag}");
    }

    #[test]
    fn sector_dimensions() {
        assert_eq!(sector_basis(4).unwrap().len(), 6);
        assert_eq!(sector_basis(8).unwrap().len(), 70);
        assert_eq!(sector_basis(10).unwrap().len(), 252);
        assert!(matches!(sector_basis(7), Err(Error::InvalidSector(7))));
        assert!(matches!(sector_basis(2), Err(Error::InvalidSector(2))));
        let b = sector_basis(6).unwrap();
        assert!(b.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn four_fermion_sign_by_hand() {
        // c†_0 c†_1 c_2 c_3 |sites 2,3> : c_3 passes one fermion (site 2) -> -1,
        // the remaining operators pass none
        assert_eq!(four_fermion(0b1100, 0, 1, 2, 3), Some((-1, 0b0011)));
        // c†_1 c†_0 ... differs by the swap of the creators
        assert_eq!(four_fermion(0b1100, 1, 0, 2, 3), Some((1, 0b0011)));
        assert_eq!(four_fermion(0b0011, 0, 1, 2, 3), None);
        // number-conserving diagonal term c†_0 c†_1 c_0 c_1 on |0,1> = -n_0 n_1
        assert_eq!(four_fermion(0b0011, 0, 1, 0, 1), Some((-1, 0b0011)));
    }

    #[test]
    fn csyk_sizes_and_hermiticity() {
        let h4 = build_csyk::<f64>(4, 1.0, 1).unwrap();
        assert_eq!(h4.dim(), 6);
        assert!(h4.hermiticity_deviation() <= 1e-12 * h4.max_abs());
        let h8 = build_csyk::<f64>(8, 1.0, 1).unwrap();
        assert_eq!(h8.dim(), 70);
        assert!(matches!(build_csyk::<f64>(7, 1.0, 1), Err(Error::InvalidSector(7))));
    }

    #[test]
    fn csyk_spectrum_scale_is_order_j() {
        let es = eigendecompose(&build_csyk::<f64>(8, 1.0, 4).unwrap()).unwrap();
        let w = es.spectral_width();
        assert!(w > 0.1 && w < 10.0, "width {w}");
        let es2 = eigendecompose(&build_csyk::<f64>(8, 2.0, 4).unwrap()).unwrap();
        assert!((es2.spectral_width() / w - 2.0).abs() < 1e-9);
    }

    #[test]
    fn rspin_basic_properties() {
        let zero = build_rspin::<f64>(8, 0.0, 0.0, 3).unwrap();
        assert_eq!(zero.dim(), 70);
        assert_eq!(zero.max_abs(), 0.0);
        let h = build_rspin::<f64>(8, 1.0, 0.2, 3).unwrap();
        assert_eq!(h.dim(), 70);
        assert_eq!(h.hermiticity_deviation(), 0.0);
        assert!(h.matrix().iter().all(|z| z.im == 0.0));
        assert!(matches!(build_rspin::<f64>(5, 1.0, 0.2, 3), Err(Error::InvalidSector(5))));
    }

    #[test]
    fn flat_overlap_properties() {
        let one = build_flat_overlap::<f64>(1).unwrap();
        assert!((one.matrix()[(0, 0)] - Complex::new(1.0, 0.0)).norm() < 1e-15);
        let f4 = build_flat_overlap::<f64>(4).unwrap();
        assert!(f4.weights().iter().all(|w| (w - 0.25).abs() < 1e-15));
        let f16 = build_flat_overlap::<f64>(16).unwrap();
        assert!(unitarity_deviation(f16.matrix()) < 1e-12);
        assert!(build_flat_overlap::<f64>(0).is_err());
    }

    #[test]
    fn model_spec_round_trips_both_formats() {
        let spec = ModelSpec::rspin(8, 1.0, 0.2, 42);
        let json = serde_json::to_string(&spec).unwrap();
        assert!(json.contains("\"J\":1.0"));
        assert_eq!(ModelSpec::parse(&json).unwrap(), spec);
        assert_eq!(ModelSpec::parse(&spec.to_key_value()).unwrap(), spec);
        let kv = "# comment\nkind = gue\ndim = 100\nseed = 5\n";
        assert_eq!(ModelSpec::parse(kv).unwrap(), ModelSpec::gue(100, 5));
    }

    #[test]
    fn model_spec_validation() {
        assert!(ModelSpec::parse("kind = csyk\nn = 7\n").is_err());
        assert!(ModelSpec::parse("kind = gue\n").is_err());
        assert!(ModelSpec::parse("kind = rspin\nn = 8\nh = -1\n").is_err());
        assert!(ModelSpec::parse("kind = rspin\nn = 8\nJ = 0\n").is_err());
        assert!(ModelSpec::parse("kind = spin\nn = 8\n").is_err());
        assert!(ModelSpec::parse("kind = gue\ndim = 4\nfoo = 1\n").is_err());
        assert_eq!(ModelSpec::csyk(8, 1.0, 0).hilbert_dim().unwrap(), 70);
    }

    #[test]
    fn members_are_independent_and_stable() {
        let spec = ModelSpec::gue(12, 77);
        let h0 = spec.hamiltonian::<f64>(0).unwrap();
        assert_eq!(h0, spec.hamiltonian::<f64>(0).unwrap());
        assert_ne!(h0, spec.hamiltonian::<f64>(1).unwrap());
    }
}
