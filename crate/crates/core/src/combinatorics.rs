//! Permutations of `{0, .., k-1}` and the exact counting identities behind the
//! perfect-filter frame potentials.
//!
//! Indices are 0-based internally. `Display` prints the 1-based one-line
//! notation, e.g. the transposition of the first two elements of three
//! prints as `[2 1 3]`.

use std::fmt;

use crate::error::{Error, Result};

/// Factorial-growth guard for the exact combinatorial values.
pub const MAX_ORDER: usize = 10;

/// Size guard for the explicit pairing-group enumeration.
pub const MAX_PAIRING_ORDER: usize = 6;

/// A bijection on `{0, .., k-1}` stored in one-line notation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Perm {
    images: Vec<usize>,
}

impl Perm {
    /// Validates that `images` contains each of `0..images.len()` once.
    pub fn new(images: Vec<usize>) -> Result<Self> {
        let k = images.len();
        let mut seen = vec![false; k];
        for &x in &images {
            if x >= k || std::mem::replace(&mut seen[x], true) {
                return Err(Error::InvalidParameter(format!("{images:?} is not a permutation")));
            }
        }
        Ok(Self { images })
    }

    pub fn identity(k: usize) -> Self {
        Self { images: (0..k).collect() }
    }

    /// Builds a permutation from 1-based cycles, e.g. `&[&[1, 3, 2]]` for
    /// the cycle `(132)`.
    pub fn from_cycles(k: usize, cycles: &[&[usize]]) -> Result<Self> {
        let mut images: Vec<usize> = (0..k).collect();
        let mut touched = vec![false; k];
        for cycle in cycles {
            for (pos, &x) in cycle.iter().enumerate() {
                let next = cycle[(pos + 1) % cycle.len()];
                if x == 0 || x > k || next == 0 || next > k || std::mem::replace(&mut touched[x - 1], true) {
                    return Err(Error::InvalidParameter(format!("invalid cycle {cycle:?} for k = {k}")));
                }
                images[x - 1] = next - 1;
            }
        }
        Self::new(images)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn images(&self) -> &[usize] {
        &self.images
    }

    #[inline]
    pub fn apply(&self, x: usize) -> usize {
        self.images[x]
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Perm) -> Result<Perm> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), found: other.len() });
        }
        Ok(Perm { images: other.images.iter().map(|&x| self.images[x]).collect() })
    }

    pub fn inverse(&self) -> Perm {
        let mut inv = vec![0; self.len()];
        for (x, &y) in self.images.iter().enumerate() {
            inv[y] = x;
        }
        Perm { images: inv }
    }

    pub fn fix_count(&self) -> usize {
        self.images.iter().enumerate().filter(|(x, &y)| *x == y).count()
    }

    /// Number of cycles, fixed points included.
    pub fn cycle_count(&self) -> usize {
        self.cycle_type().len()
    }

    /// Cycle lengths in non-increasing order (a partition of `k`).
    pub fn cycle_type(&self) -> Vec<usize> {
        let mut seen = vec![false; self.len()];
        let mut lengths = Vec::new();
        for start in 0..self.len() {
            if seen[start] {
                continue;
            }
            let mut len = 0;
            let mut x = start;
            while !seen[x] {
                seen[x] = true;
                x = self.images[x];
                len += 1;
            }
            lengths.push(len);
        }
        lengths.sort_unstable_by(|a, b| b.cmp(a));
        lengths
    }
}

impl fmt::Display for Perm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, x) in self.images.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{}", x + 1)?;
        }
        f.write_str("]")
    }
}

/// All `k!` permutations of `{0, .., k-1}` in lexicographic order.
pub fn all_perms(k: usize) -> Vec<Perm> {
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..k).collect();
    loop {
        out.push(Perm { images: current.clone() });
        // next lexicographic permutation
        let Some(i) = (1..k).rev().find(|&i| current[i - 1] < current[i]) else {
            break;
        };
        let j = (i..k).rev().find(|&j| current[j] > current[i - 1]).unwrap();
        current.swap(i - 1, j);
        current[i..].reverse();
    }
    out
}

/// `n!` with overflow detection.
pub fn factorial(n: u32) -> Result<u128> {
    (1..=n as u128).try_fold(1u128, |acc, x| acc.checked_mul(x)).ok_or(Error::Overflow("factorial"))
}

/// Binomial coefficient, exact.
pub fn binomial(n: u32, k: u32) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k) as u128;
    (0..k).fold(1u128, |acc, i| acc * (n as u128 - i) / (i + 1))
}

/// Derangement number `!n`: `!0 = 1`, `!1 = 0`, `!n = (n-1)(!(n-1) + !(n-2))`.
pub fn derangement(n: i64) -> Result<u128> {
    if n < 0 {
        return Err(Error::InvalidParameter(format!("derangement of negative n = {n}")));
    }
    let (mut prev, mut cur) = (1u128, 0u128);
    if n == 0 {
        return Ok(prev);
    }
    for m in 2..=n as u128 {
        let next = (m - 1)
            .checked_mul(cur.checked_add(prev).ok_or(Error::Overflow("derangement"))?)
            .ok_or(Error::Overflow("derangement"))?;
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// Leading-order perfect-filter frame potential of the two-step protocol with
/// a Haar overlap: `k! Σ_{j=0}^{k} C(k,j) !(k-j) 2^j`.
pub fn theorem1_value(k: u32) -> Result<u128> {
    if k == 0 {
        return Err(Error::InvalidParameter("order k must be at least 1".into()));
    }
    if k as usize > MAX_ORDER {
        return Err(Error::TooLarge(format!("k = {k} exceeds the cap of {MAX_ORDER}")));
    }
    let mut sum = 0u128;
    for j in 0..=k {
        sum += binomial(k, j) * derangement((k - j) as i64)? * (1u128 << j);
    }
    let value = factorial(k)? * sum;
    if k <= 6 {
        debug_assert_eq!(value, theorem1_by_enumeration(k as usize));
    }
    Ok(value)
}

/// `k! Σ_{ρ ∈ S_k} 2^{fix(ρ)}` by enumerating `S_k`.
pub fn theorem1_by_enumeration(k: usize) -> u128 {
    let sum: u128 = all_perms(k).iter().map(|rho| 1u128 << rho.fix_count()).sum();
    (1..=k as u128).product::<u128>() * sum
}

/// Haar frame potential `k!`.
pub fn haar_value(k: u32) -> Result<u128> {
    factorial(k)
}

/// Position pairs `{r, k + perm⁻¹(r)}` for `r = 0..k`, as stored in the
/// doubled index sequence `(x_1..x_k, x_{perm(1)}..x_{perm(k)})`.
fn pairs(perm: &Perm) -> Vec<(usize, usize)> {
    let k = perm.len();
    let inv = perm.inverse();
    (0..k).map(|r| (r, k + inv.apply(r))).collect()
}

/// `|G_m(π) ∩ G_n(σ)|` by brute force: walks the `2^k` swap/non-swap
/// elements of `G_m(π)` and keeps those that also preserve every pair of
/// `G_n(σ)`.
///
/// The result always equals `2^{fix(π⁻¹σ)}`; this is asserted.
pub fn pairing_intersection_size(pi: &Perm, sigma: &Perm) -> Result<usize> {
    let k = pi.len();
    if sigma.len() != k {
        return Err(Error::DimensionMismatch { expected: k, found: sigma.len() });
    }
    if k > MAX_PAIRING_ORDER {
        return Err(Error::TooLarge(format!("pairing enumeration limited to k <= {MAX_PAIRING_ORDER}, got {k}")));
    }
    let m_pairs = pairs(pi);
    let n_pairs = pairs(sigma);
    let mut count = 0;
    for mask in 0u32..(1u32 << k) {
        let mut alpha: Vec<usize> = (0..2 * k).collect();
        for (r, &(a, b)) in m_pairs.iter().enumerate() {
            if mask >> r & 1 == 1 {
                alpha.swap(a, b);
            }
        }
        let preserves = n_pairs.iter().all(|&(a, b)| {
            let (x, y) = (alpha[a], alpha[b]);
            (x == a && y == b) || (x == b && y == a)
        });
        if preserves {
            count += 1;
        }
    }
    let rho = pi.inverse().compose(sigma)?;
    assert_eq!(count, 1usize << rho.fix_count(), "pairing count disagrees with 2^fix");
    Ok(count)
}
