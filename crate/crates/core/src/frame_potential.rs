//! Frame potentials `F^(k) = E|Tr(V₁†V₂)|^{2k}` of the two- and three-step
//! quench protocols.
//!
//! In the eigenbases of the quenched Hamiltonians the traces are
//!
//! ```text
//! 2SP: Σ_{m,n} e^{i(E_m dt₁ + ε_n dt₂)} |U_{mn}|²
//! 3SP: Tr[Φ₁(dt₁) U⁽¹⁾ Φ₂(t₂) U⁽²⁾ Φ₃(dt₃) U⁽²⁾† Φ₂(-t₂') U⁽¹⁾†]
//! ```
//!
//! with `Φ_l(t) = diag(e^{iλ_l t})` and `dt = t - t'`. The 3SP trace is
//! evaluated as `Σ_{m,g} a_m g_g Z_{mg} conj(Z'_{mg})` with
//! `Z = U⁽¹⁾ Φ₂(t₂) U⁽²⁾` and `Z' = U⁽¹⁾ Φ₂(t₂') U⁽²⁾`.
//!
//! # Perfect filter
//!
//! As `T → ∞`, averaging `e^{i Σ_a (E_{m_a} - E_{m'_a}) t}` over `t` keeps
//! only index tuples whose energy sums agree. For a spectrum without
//! resonances (no rational relations among the levels) that happens exactly
//! when `{m_a}` and `{m'_a}` are equal as multisets. Replacing every
//! `e^{iE_m t}` by `e^{iθ_m}` with i.i.d. uniform `θ_m` enforces the same
//! constraint, because `E[e^{i Σ_m c_m θ_m}] = [c = 0]`. The phase ensemble
//! is therefore the `T → ∞` limit evaluated without any resonance risk. Both
//! copies of each time get their own phases; in 3SP the middle Hamiltonian
//! carries independent `θ` and `θ'` for `t₂` and `t₂'`.
//!
//! The leading-order permutation counting of the same limit is
//! [`fp_perfect_permsum_2sp`]; it treats coincident indices as distinct and
//! therefore differs from the exact limit [`fp_perfect_exact_2sp`] at
//! `O(1/D)`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::combinatorics::{all_perms, factorial};
use crate::error::{Error, Result};
use crate::hamiltonians::{build_flat_overlap, sample_gue};
use crate::montecarlo::run_chunked;
use crate::rng::{self, Purpose};
use crate::scalar::{cis, Real};
use crate::spectral::{eigendecompose, find_degeneracy, overlap, EigenSystem, OverlapMatrix};
use crate::temporal::TimeWindow;
use crate::weingarten::haar_sample;

/// Rows of the stacked 3SP product per batch, divided by the dimension.
const THREE_STEP_ROWS: usize = 1024;

/// Samples per batch of the 2SP kernel.
const TWO_STEP_BATCH: usize = 256;

/// Relative slack on the exact bound `|Tr| ≤ D`.
const SAMPLE_BOUND_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Protocol {
    #[serde(rename = "2sp")]
    TwoStep,
    #[serde(rename = "3sp")]
    ThreeStep,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::TwoStep => "2sp",
            Protocol::ThreeStep => "3sp",
        }
    }

    /// Number of quenched Hamiltonians.
    pub fn hamiltonians(self) -> usize {
        match self {
            Protocol::TwoStep => 2,
            Protocol::ThreeStep => 3,
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "2sp" | "two_step" | "two-step" => Ok(Protocol::TwoStep),
            "3sp" | "three_step" | "three-step" => Ok(Protocol::ThreeStep),
            other => Err(Error::InvalidParameter(format!("unknown protocol '{other}', expected 2sp or 3sp"))),
        }
    }
}

/// Spectra of the quenched Hamiltonians and the overlaps between consecutive
/// eigenbases. Two spectra make a 2SP sequence, three a 3SP sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct QuenchSequence<T: Real> {
    spectra: Vec<Vec<T>>,
    overlaps: Vec<OverlapMatrix<T>>,
}

impl<T: Real> QuenchSequence<T> {
    pub fn new(spectra: Vec<Vec<T>>, overlaps: Vec<OverlapMatrix<T>>) -> Result<Self> {
        if !(2..=3).contains(&spectra.len()) {
            return Err(Error::InvalidParameter(format!("need 2 or 3 spectra, got {}", spectra.len())));
        }
        if overlaps.len() + 1 != spectra.len() {
            return Err(Error::InvalidParameter(format!(
                "{} spectra need {} overlaps, got {}",
                spectra.len(),
                spectra.len() - 1,
                overlaps.len()
            )));
        }
        let dim = spectra[0].len();
        if dim == 0 {
            return Err(Error::InvalidDimension(0));
        }
        for found in spectra.iter().map(Vec::len).chain(overlaps.iter().map(OverlapMatrix::dim)) {
            if found != dim {
                return Err(Error::DimensionMismatch { expected: dim, found });
            }
        }
        Ok(Self { spectra, overlaps })
    }

    /// Sequence from full eigensystems; overlaps are `W_l† W_{l+1}`.
    pub fn from_eigensystems(systems: &[EigenSystem<T>]) -> Result<Self> {
        let overlaps = systems.windows(2).map(|w| overlap(&w[0], &w[1])).collect::<Result<Vec<_>>>()?;
        Self::new(systems.iter().map(|s| s.eigenvalues().to_vec()).collect(), overlaps)
    }

    pub fn protocol(&self) -> Protocol {
        if self.spectra.len() == 2 {
            Protocol::TwoStep
        } else {
            Protocol::ThreeStep
        }
    }

    pub fn dim(&self) -> usize {
        self.spectra[0].len()
    }

    pub fn spectra(&self) -> &[Vec<T>] {
        &self.spectra
    }

    pub fn overlaps(&self) -> &[OverlapMatrix<T>] {
        &self.overlaps
    }

    /// Fails if any spectrum has (near-)degenerate levels.
    pub fn check_nondegenerate(&self) -> Result<()> {
        for spectrum in &self.spectra {
            let mut sorted = spectrum.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            if let Some(d) = find_degeneracy(&sorted) {
                return Err(d.into());
            }
        }
        Ok(())
    }

    /// 2SP trace for one pair of time differences.
    pub fn trace_2sp(&self, dt1: T, dt2: T) -> Result<Complex<T>> {
        self.expect(Protocol::TwoStep)?;
        let mut kernel = TwoStepKernel::new(&self.overlaps[0], 1);
        let angles = [angles_scaled(&self.spectra[0], dt1), angles_scaled(&self.spectra[1], dt2)];
        kernel.load(0, &angles[0], &angles[1]);
        Ok(kernel.evaluate(1)[0])
    }

    /// 3SP trace with `dt1 = t1 - t1'`, `dt3 = t3 - t3'` and the middle
    /// times `t2`, `t2p` entering separately.
    pub fn trace_3sp(&self, dt1: T, t2: T, dt3: T, t2p: T) -> Result<Complex<T>> {
        self.expect(Protocol::ThreeStep)?;
        let mut kernel = ThreeStepKernel::new(&self.overlaps[0], &self.overlaps[1], 1);
        let angles = [
            angles_scaled(&self.spectra[0], dt1),
            angles_scaled(&self.spectra[1], t2),
            angles_scaled(&self.spectra[1], t2p),
            angles_scaled(&self.spectra[2], dt3),
        ];
        kernel.load(0, &angles);
        Ok(kernel.evaluate(1)[0])
    }

    fn expect(&self, protocol: Protocol) -> Result<()> {
        if self.protocol() != protocol {
            return Err(Error::InvalidParameter(format!("sequence is {}, expected {protocol}", self.protocol())));
        }
        Ok(())
    }
}

/// `Tr(e^{iH_A dt1} e^{iH_B dt2})` from two eigensystems.
pub fn trace_2sp<T: Real>(a: &EigenSystem<T>, b: &EigenSystem<T>, dt1: T, dt2: T) -> Result<Complex<T>> {
    QuenchSequence::from_eigensystems(&[a.clone(), b.clone()])?.trace_2sp(dt1, dt2)
}

/// 3SP trace from three eigensystems.
#[allow(clippy::too_many_arguments)]
pub fn trace_3sp<T: Real>(
    e1: &EigenSystem<T>,
    e2: &EigenSystem<T>,
    e3: &EigenSystem<T>,
    dt1: T,
    t2: T,
    dt3: T,
    t2p: T,
) -> Result<Complex<T>> {
    QuenchSequence::from_eigensystems(&[e1.clone(), e2.clone(), e3.clone()])?.trace_3sp(dt1, t2, dt3, t2p)
}

fn angles_scaled<T: Real>(spectrum: &[T], t: T) -> Vec<T> {
    spectrum.iter().map(|&e| e * t).collect()
}

/// Batched `aᵀ P b` with `P = |U|²`: the phases of `a` are stacked as a
/// `2B × D` real matrix (real parts over imaginary parts) so that one real
/// product with `P` serves the whole batch.
struct TwoStepKernel<T: Real> {
    weights: DMatrix<T>,
    batch: usize,
    left: DMatrix<T>,
    product: DMatrix<T>,
    right: Vec<Complex<T>>,
}

impl<T: Real> TwoStepKernel<T> {
    fn new(u: &OverlapMatrix<T>, batch: usize) -> Self {
        Self::from_weights(u.weights(), batch)
    }

    fn from_weights(weights: DMatrix<T>, batch: usize) -> Self {
        let d = weights.nrows();
        Self {
            weights,
            batch,
            left: DMatrix::zeros(2 * batch, d),
            product: DMatrix::zeros(2 * batch, d),
            right: vec![Complex::new(T::zero(), T::zero()); batch * d],
        }
    }

    fn load(&mut self, slot: usize, angles_a: &[T], angles_b: &[T]) {
        let d = self.weights.nrows();
        for (m, &theta) in angles_a.iter().enumerate() {
            let z = cis(theta);
            self.left[(slot, m)] = z.re;
            self.left[(self.batch + slot, m)] = z.im;
        }
        for (n, &theta) in angles_b.iter().enumerate() {
            self.right[slot * d + n] = cis(theta);
        }
    }

    fn evaluate(&mut self, filled: usize) -> Vec<Complex<T>> {
        let d = self.weights.nrows();
        self.product.gemm(T::one(), &self.left, &self.weights, T::zero());
        (0..filled)
            .map(|b| {
                let mut acc = Complex::new(T::zero(), T::zero());
                for n in 0..d {
                    let c = Complex::new(self.product[(b, n)], self.product[(self.batch + b, n)]);
                    acc += c * self.right[b * d + n];
                }
                acc
            })
            .collect()
    }
}

/// Batched 3SP traces. For every sample the rows `U⁽¹⁾ diag(c)` and
/// `U⁽¹⁾ diag(c')` are stacked (real parts over imaginary parts) and
/// multiplied by `[Re U⁽²⁾ | Im U⁽²⁾]` in a single real product.
struct ThreeStepKernel<T: Real> {
    dim: usize,
    batch: usize,
    u1_re: DMatrix<T>,
    u1_im: DMatrix<T>,
    u2_stacked: DMatrix<T>,
    left: DMatrix<T>,
    product: DMatrix<T>,
    outer: Vec<Complex<T>>,
    last: Vec<Complex<T>>,
}

impl<T: Real> ThreeStepKernel<T> {
    fn new(u1: &OverlapMatrix<T>, u2: &OverlapMatrix<T>, batch: usize) -> Self {
        let d = u1.dim();
        let m2 = u2.matrix();
        let u2_stacked = DMatrix::from_fn(d, 2 * d, |p, g| if g < d { m2[(p, g)].re } else { m2[(p, g - d)].im });
        let rows = 4 * batch * d;
        Self {
            dim: d,
            batch,
            u1_re: u1.matrix().map(|z| z.re),
            u1_im: u1.matrix().map(|z| z.im),
            u2_stacked,
            left: DMatrix::zeros(rows, d),
            product: DMatrix::zeros(rows, 2 * d),
            outer: vec![Complex::new(T::zero(), T::zero()); batch * d],
            last: vec![Complex::new(T::zero(), T::zero()); batch * d],
        }
    }

    /// `angles = [H1 (dt1), H2 (t2), H2 (t2'), H3 (dt3)]`.
    fn load(&mut self, slot: usize, angles: &[Vec<T>; 4]) {
        let d = self.dim;
        let half = 2 * self.batch * d;
        for (copy, middle) in [&angles[1], &angles[2]].into_iter().enumerate() {
            let row0 = (copy * self.batch + slot) * d;
            for (p, &theta) in middle.iter().enumerate() {
                let c = cis(theta);
                for m in 0..d {
                    let (ur, ui) = (self.u1_re[(m, p)], self.u1_im[(m, p)]);
                    self.left[(row0 + m, p)] = ur * c.re - ui * c.im;
                    self.left[(half + row0 + m, p)] = ur * c.im + ui * c.re;
                }
            }
        }
        for m in 0..d {
            self.outer[slot * d + m] = cis(angles[0][m]);
            self.last[slot * d + m] = cis(angles[3][m]);
        }
    }

    fn evaluate(&mut self, filled: usize) -> Vec<Complex<T>> {
        let d = self.dim;
        let half = 2 * self.batch * d;
        self.product.gemm(T::one(), &self.left, &self.u2_stacked, T::zero());
        let r = &self.product;
        let mut s = vec![Complex::new(T::zero(), T::zero()); d];
        (0..filled)
            .map(|b| {
                let z0 = b * d;
                let w0 = (self.batch + b) * d;
                s.iter_mut().for_each(|x| *x = Complex::new(T::zero(), T::zero()));
                for g in 0..d {
                    let gg = self.last[b * d + g];
                    for (m, sm) in s.iter_mut().enumerate() {
                        let z = Complex::new(
                            r[(z0 + m, g)] - r[(half + z0 + m, d + g)],
                            r[(z0 + m, d + g)] + r[(half + z0 + m, g)],
                        );
                        let w = Complex::new(
                            r[(w0 + m, g)] - r[(half + w0 + m, d + g)],
                            r[(w0 + m, d + g)] + r[(half + w0 + m, g)],
                        );
                        *sm += gg * z * w.conj();
                    }
                }
                s.iter().zip(&self.outer[b * d..(b + 1) * d]).fold(Complex::new(T::zero(), T::zero()), |acc, (x, a)| acc + *a * *x)
            })
            .collect()
    }
}

/// Where the per-level phases come from.
#[derive(Debug, Clone, Copy)]
enum PhaseSource<'a, T: Real> {
    /// `e^{iE t}` with times drawn from the window.
    Window(&'a TimeWindow<T>),
    /// i.i.d. uniform phases per level (the perfect-filter limit).
    Perfect,
}

fn uniform_angles<T: Real, R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<T> {
    let two_pi = T::two_pi();
    (0..dim).map(|_| T::unit_uniform(rng) * two_pi).collect()
}

fn difference<T: Real>(a: Vec<T>, b: Vec<T>) -> Vec<T> {
    a.into_iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Angles of one draw. 2SP returns `[H1, H2]`; 3SP returns
/// `[H1, H2 (t2), H2 (t2'), H3]`. Times are drawn in the order
/// `t1, t1', t2, t2'(, t3, t3')`; perfect phases in the same order, one
/// vector of `D` angles per time.
fn draw_angles<T: Real, R: Rng + ?Sized>(seq: &QuenchSequence<T>, source: PhaseSource<'_, T>, rng: &mut R) -> Vec<Vec<T>> {
    let d = seq.dim();
    let s = &seq.spectra;
    match (seq.protocol(), source) {
        (Protocol::TwoStep, PhaseSource::Window(w)) => {
            let t: Vec<T> = (0..4).map(|_| w.sample(rng)).collect();
            vec![angles_scaled(&s[0], t[0] - t[1]), angles_scaled(&s[1], t[2] - t[3])]
        }
        (Protocol::ThreeStep, PhaseSource::Window(w)) => {
            let t: Vec<T> = (0..6).map(|_| w.sample(rng)).collect();
            vec![
                angles_scaled(&s[0], t[0] - t[1]),
                angles_scaled(&s[1], t[2]),
                angles_scaled(&s[1], t[3]),
                angles_scaled(&s[2], t[4] - t[5]),
            ]
        }
        (Protocol::TwoStep, PhaseSource::Perfect) => {
            let raw: Vec<Vec<T>> = (0..4).map(|_| uniform_angles(d, rng)).collect();
            let mut it = raw.into_iter();
            let mut next = || it.next().unwrap();
            vec![difference(next(), next()), difference(next(), next())]
        }
        (Protocol::ThreeStep, PhaseSource::Perfect) => {
            let raw: Vec<Vec<T>> = (0..6).map(|_| uniform_angles(d, rng)).collect();
            let mut it = raw.into_iter();
            let mut next = || it.next().unwrap();
            let a = difference(next(), next());
            let (c, cp) = (next(), next());
            let g = difference(next(), next());
            vec![a, c, cp, g]
        }
    }
}

/// Monte Carlo configuration of one protocol run.
#[derive(Debug, Clone)]
pub struct ProtocolConfig<T: Real> {
    pub sequence: QuenchSequence<T>,
    pub window: TimeWindow<T>,
    pub k: u32,
    pub samples: usize,
    pub seed: u64,
}

impl<T: Real> ProtocolConfig<T> {
    pub fn protocol(&self) -> Protocol {
        self.sequence.protocol()
    }

    pub fn validate(&self) -> Result<()> {
        validate_run(&[self.k], self.samples)
    }
}

fn validate_run(ks: &[u32], samples: usize) -> Result<()> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::InvalidParameter("every order k must be at least 1".into()));
    }
    if samples == 0 {
        return Err(Error::InvalidParameter("samples must be at least 1".into()));
    }
    Ok(())
}

/// Sample mean of `|Tr|^{2k}` with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FpEstimate {
    pub k: u32,
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
    pub seed: u64,
    /// Window length; infinite for the perfect-filter oracle.
    #[serde(rename = "T")]
    pub duration: f64,
}

impl FpEstimate {
    /// `|mean - target| / stderr`, or 0/∞ when the error is zero.
    pub fn z_score(&self, target: f64) -> f64 {
        let dev = (self.mean - target).abs();
        if self.stderr > 0.0 {
            dev / self.stderr
        } else if dev == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

fn estimate<T: Real>(seq: &QuenchSequence<T>, source: PhaseSource<'_, T>, ks: &[u32], samples: usize, seed: u64) -> Result<Vec<FpEstimate>> {
    validate_run(ks, samples)?;
    let d = seq.dim();
    let bound = d as f64 * (1.0 + SAMPLE_BOUND_SLACK.max(T::tolerance(SAMPLE_BOUND_SLACK).as_f64()));
    let protocol = seq.protocol();
    let moments = run_chunked(samples, seed, ks.len(), |rng, n| {
        let mut values: Vec<Vec<f64>> = ks.iter().map(|_| Vec::with_capacity(n)).collect();
        let mut push = |tr: Complex<T>| -> Result<()> {
            let (re, im) = (tr.re.as_f64(), tr.im.as_f64());
            let abs2 = re * re + im * im;
            if abs2.sqrt() > bound {
                return Err(Error::SampleBound { value: abs2.sqrt(), bound: d as f64 });
            }
            for (out, &k) in values.iter_mut().zip(ks) {
                out.push(abs2.powi(k as i32));
            }
            Ok(())
        };
        match protocol {
            Protocol::TwoStep => {
                let batch = TWO_STEP_BATCH.min(n);
                let mut kernel = TwoStepKernel::new(&seq.overlaps[0], batch);
                let mut done = 0;
                while done < n {
                    let filled = batch.min(n - done);
                    for slot in 0..filled {
                        let a = draw_angles(seq, source, rng);
                        kernel.load(slot, &a[0], &a[1]);
                    }
                    for tr in kernel.evaluate(filled) {
                        push(tr)?;
                    }
                    done += filled;
                }
            }
            Protocol::ThreeStep => {
                let batch = (THREE_STEP_ROWS / d).clamp(1, n);
                let mut kernel = ThreeStepKernel::new(&seq.overlaps[0], &seq.overlaps[1], batch);
                let mut done = 0;
                while done < n {
                    let filled = batch.min(n - done);
                    for slot in 0..filled {
                        let a = draw_angles(seq, source, rng);
                        let a: [Vec<T>; 4] = a.try_into().expect("3SP draws four angle vectors");
                        kernel.load(slot, &a);
                    }
                    for tr in kernel.evaluate(filled) {
                        push(tr)?;
                    }
                    done += filled;
                }
            }
        }
        Ok(values)
    })?;
    let duration = match source {
        PhaseSource::Window(w) => w.duration().as_f64(),
        PhaseSource::Perfect => f64::INFINITY,
    };
    Ok(ks
        .iter()
        .zip(moments)
        .map(|(&k, m)| FpEstimate { k, mean: m.mean, stderr: m.stderr(), samples, seed, duration })
        .collect())
}

/// Finite-window Monte Carlo estimate at `config.k`.
pub fn fp_monte_carlo<T: Real>(config: &ProtocolConfig<T>) -> Result<FpEstimate> {
    Ok(fp_monte_carlo_multi(config, &[config.k])?.remove(0))
}

/// Finite-window estimates for several `k` from the same draws.
pub fn fp_monte_carlo_multi<T: Real>(config: &ProtocolConfig<T>, ks: &[u32]) -> Result<Vec<FpEstimate>> {
    estimate(&config.sequence, PhaseSource::Window(&config.window), ks, config.samples, config.seed)
}

/// Perfect-filter estimate from the random-phase ensemble.
pub fn fp_perfect_phase<T: Real>(seq: &QuenchSequence<T>, k: u32, samples: usize, seed: u64) -> Result<FpEstimate> {
    Ok(fp_perfect_phase_multi(seq, &[k], samples, seed)?.remove(0))
}

/// Perfect-filter estimates for several `k` from the same phase draws.
pub fn fp_perfect_phase_multi<T: Real>(seq: &QuenchSequence<T>, ks: &[u32], samples: usize, seed: u64) -> Result<Vec<FpEstimate>> {
    seq.check_nondegenerate()?;
    estimate(seq, PhaseSource::Perfect, ks, samples, seed)
}

/// Odometer over `{0..dim}^len`.
fn next_tuple(tuple: &mut [usize], dim: usize) -> bool {
    for x in tuple.iter_mut().rev() {
        *x += 1;
        if *x < dim {
            return true;
        }
        *x = 0;
    }
    false
}

/// Leading-order perfect-filter 2SP value
/// `Σ_{π,σ ∈ S_k} Σ_{m,n} Π_a |U_{m_a n_a}|² |U_{m_π(a) n_σ(a)}|²`,
/// by direct summation over index tuples.
pub fn fp_perfect_permsum_2sp<T: Real>(u: &OverlapMatrix<T>, k: u32) -> Result<f64> {
    let d = u.dim();
    if k == 0 {
        return Err(Error::InvalidParameter("order k must be at least 1".into()));
    }
    if k > 3 || d > 16 {
        return Err(Error::TooLarge(format!("permutation sum limited to k <= 3 and D <= 16, got k = {k}, D = {d}")));
    }
    let k = k as usize;
    let p: Vec<f64> = u.weights().transpose().iter().map(|w| w.as_f64()).collect();
    let w = |m: usize, n: usize| p[m * d + n];
    let perms = all_perms(k);
    let mut total = 0.0;
    let mut m = vec![0usize; k];
    loop {
        let mut n = vec![0usize; k];
        loop {
            let base: f64 = (0..k).map(|a| w(m[a], n[a])).product();
            if base != 0.0 {
                let mut inner = 0.0;
                for pi in &perms {
                    for sigma in &perms {
                        inner += (0..k).map(|a| w(m[pi.apply(a)], n[sigma.apply(a)])).product::<f64>();
                    }
                }
                total += base * inner;
            }
            if !next_tuple(&mut n, d) {
                break;
            }
        }
        if !next_tuple(&mut m, d) {
            break;
        }
    }
    Ok(total)
}

/// Sorted tuples of length `k` over `{0..dim}` (multisets).
fn multisets(dim: usize, k: usize) -> Vec<Vec<usize>> {
    fn extend(dim: usize, k: usize, start: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == k {
            out.push(prefix.clone());
            return;
        }
        for x in start..dim {
            prefix.push(x);
            extend(dim, k, x, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    extend(dim, k, 0, &mut Vec::new(), &mut out);
    out
}

/// Distinct orderings of a sorted tuple.
fn arrangements(sorted: &[usize]) -> Vec<Vec<usize>> {
    let mut current = sorted.to_vec();
    let mut out = vec![current.clone()];
    let k = current.len();
    loop {
        let Some(i) = (1..k).rev().find(|&i| current[i - 1] < current[i]) else {
            break;
        };
        let j = (i..k).rev().find(|&j| current[j] > current[i - 1]).unwrap();
        current.swap(i - 1, j);
        current[i..].reverse();
        out.push(current.clone());
    }
    out
}

/// Exact perfect-filter 2SP value for a resonance-free spectrum,
/// `Σ_{M,N} (Σ_{m ∈ M, n ∈ N} Π_a |U_{m_a n_a}|²)²` over index multisets
/// `M`, `N` (the sums run over the distinct orderings of each multiset).
pub fn fp_perfect_exact_2sp<T: Real>(u: &OverlapMatrix<T>, k: u32) -> Result<f64> {
    let d = u.dim();
    if k == 0 {
        return Err(Error::InvalidParameter("order k must be at least 1".into()));
    }
    let k = k as usize;
    let sets = multisets(d, k);
    let work = (sets.len() as f64).powi(2) * factorial(k as u32)? as f64 * k as f64;
    if work > 2e9 {
        return Err(Error::TooLarge(format!("exact multiset sum too large for D = {d}, k = {k}")));
    }
    let p: Vec<f64> = u.weights().transpose().iter().map(|w| w.as_f64()).collect();
    let orderings: Vec<Vec<Vec<usize>>> = sets.iter().map(|s| arrangements(s)).collect();
    let mut total = 0.0;
    for (mset, m_orders) in sets.iter().zip(&orderings) {
        // simultaneous relabelling of positions: Σ_{m,n} = |orb M| Σ_n Π P_{M_a n_a}
        let multiplicity = m_orders.len() as f64;
        for n_orders in &orderings {
            let s: f64 = n_orders.iter().map(|n| (0..k).map(|a| p[mset[a] * d + n[a]]).product::<f64>()).sum();
            let s = multiplicity * s;
            total += s * s;
        }
    }
    Ok(total)
}

/// Exact perfect-filter 3SP value at `k = 1`:
/// `Σ_{p,f} (PᵀP)_{pf} (QQᵀ)_{pf}` with `P = |U⁽¹⁾|²`, `Q = |U⁽²⁾|²`.
pub fn fp_perfect_exact_3sp_k1<T: Real>(u1: &OverlapMatrix<T>, u2: &OverlapMatrix<T>) -> Result<f64> {
    if u1.dim() != u2.dim() {
        return Err(Error::DimensionMismatch { expected: u1.dim(), found: u2.dim() });
    }
    let p = u1.weights().map(|w| w.as_f64());
    let q = u2.weights().map(|w| w.as_f64());
    let ptp = p.transpose() * &p;
    let qqt = &q * q.transpose();
    Ok(ptp.component_mul(&qqt).sum())
}

/// Haar frame potential `k!`.
pub fn haar_fp(k: u32) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidParameter("order k must be at least 1".into()));
    }
    Ok(factorial(k)? as f64)
}

/// Sorted GUE eigenvalues used as a synthetic, non-degenerate spectrum.
pub fn synthetic_spectrum<T: Real>(dim: usize, seed: u64, index: u64) -> Result<Vec<T>> {
    let h = sample_gue::<T>(dim, rng::derive_seed(seed, Purpose::Spectrum, index))?;
    Ok(eigendecompose(&h)?.eigenvalues().to_vec())
}

/// How the overlaps of a synthetic sequence are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticOverlap {
    /// Independent Haar-random unitaries.
    Haar,
    /// The flat Fourier matrix.
    Flat,
}

/// Synthetic GUE spectra with Haar or flat overlaps.
pub fn synthetic_sequence<T: Real>(protocol: Protocol, dim: usize, overlap_kind: SyntheticOverlap, seed: u64) -> Result<QuenchSequence<T>> {
    let count = protocol.hamiltonians();
    let spectra = (0..count as u64).map(|i| synthetic_spectrum(dim, seed, i)).collect::<Result<Vec<_>>>()?;
    let overlaps = (0..count as u64 - 1)
        .map(|i| match overlap_kind {
            SyntheticOverlap::Haar => OverlapMatrix::new(haar_sample(dim, &mut rng::stream(seed, Purpose::HaarOverlap, i))?),
            SyntheticOverlap::Flat => build_flat_overlap(dim),
        })
        .collect::<Result<Vec<_>>>()?;
    QuenchSequence::new(spectra, overlaps)
}

/// Per-`k` summary of several estimates: mean of means and the standard
/// error of that mean from the per-run errors.
pub fn combine_estimates(estimates: &[FpEstimate]) -> BTreeMap<u32, (f64, f64)> {
    let mut grouped: BTreeMap<u32, Vec<&FpEstimate>> = BTreeMap::new();
    for e in estimates {
        grouped.entry(e.k).or_default().push(e);
    }
    grouped
        .into_iter()
        .map(|(k, es)| {
            let n = es.len() as f64;
            let mean = es.iter().map(|e| e.mean).sum::<f64>() / n;
            let stderr = es.iter().map(|e| e.stderr * e.stderr).sum::<f64>().sqrt() / n;
            (k, (mean, stderr))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonians::sample_gue;
    use crate::spectral::ipr;

    fn gue_system(dim: usize, seed: u64) -> EigenSystem<f64> {
        eigendecompose(&sample_gue::<f64>(dim, seed).unwrap()).unwrap()
    }

    fn expm_i(h: &DMatrix<Complex<f64>>, t: f64) -> DMatrix<Complex<f64>> {
        (h * Complex::new(0.0, t)).exp()
    }

    #[test]
    fn protocol_parsing() {
        assert_eq!("2sp".parse::<Protocol>().unwrap(), Protocol::TwoStep);
        assert_eq!("3SP".parse::<Protocol>().unwrap(), Protocol::ThreeStep);
        assert!("4sp".parse::<Protocol>().is_err());
        assert_eq!(serde_json::to_string(&Protocol::ThreeStep).unwrap(), "\"3sp\"");
    }

    #[test]
    fn trace_2sp_trivial_cases() {
        let a = gue_system(9, 1);
        let b = gue_system(9, 2);
        let tr = trace_2sp(&a, &b, 0.0, 0.0).unwrap();
        assert!((tr - Complex::new(9.0, 0.0)).norm() < 1e-12);
        let tr = trace_2sp(&a, &a, 1.7, -1.7).unwrap();
        assert!((tr - Complex::new(9.0, 0.0)).norm() < 1e-12);
        assert!(trace_2sp(&a, &gue_system(8, 3), 1.0, 1.0).is_err());
    }

    #[test]
    fn trace_2sp_matches_matrix_exponentials() {
        let h1 = sample_gue::<f64>(12, 4).unwrap();
        let h2 = sample_gue::<f64>(12, 5).unwrap();
        let (a, b) = (eigendecompose(&h1).unwrap(), eigendecompose(&h2).unwrap());
        for (dt1, dt2) in [(0.3, -1.1), (5.0, 2.5), (-7.3, 0.01)] {
            let direct = (expm_i(h1.matrix(), dt1) * expm_i(h2.matrix(), dt2)).trace();
            let tr = trace_2sp(&a, &b, dt1, dt2).unwrap();
            assert!((tr - direct).norm() < 1e-8 * 12.0, "{tr} vs {direct}");
        }
    }

    #[test]
    fn trace_3sp_matches_matrix_exponentials() {
        let hs: Vec<_> = (0..3).map(|i| sample_gue::<f64>(10, 10 + i).unwrap()).collect();
        let es: Vec<_> = hs.iter().map(|h| eigendecompose(h).unwrap()).collect();
        for (dt1, t2, dt3, t2p) in [(0.4, 1.3, -0.7, 2.2), (3.0, -2.0, 1.0, 0.5)] {
            let direct = (expm_i(hs[0].matrix(), dt1)
                * expm_i(hs[1].matrix(), t2)
                * expm_i(hs[2].matrix(), dt3)
                * expm_i(hs[1].matrix(), -t2p))
            .trace();
            let tr = trace_3sp(&es[0], &es[1], &es[2], dt1, t2, dt3, t2p).unwrap();
            assert!((tr - direct).norm() < 1e-8 * 10.0, "{tr} vs {direct}");
        }
        let zero = trace_3sp(&es[0], &es[1], &es[2], 0.0, 0.0, 0.0, 0.0).unwrap();
        assert!((zero - Complex::new(10.0, 0.0)).norm() < 1e-10);
        // middle evolutions cancel
        let tr = trace_3sp(&es[0], &es[1], &es[2], 0.9, 1.4, 0.0, 1.4).unwrap();
        let expected: Complex<f64> = es[0].eigenvalues().iter().map(|&e| cis(e * 0.9)).sum();
        assert!((tr - expected).norm() < 1e-10);
    }

    #[test]
    fn batched_kernels_match_single_evaluation() {
        let seq = synthetic_sequence::<f64>(Protocol::ThreeStep, 7, SyntheticOverlap::Haar, 3).unwrap();
        let mut kernel = ThreeStepKernel::new(&seq.overlaps[0], &seq.overlaps[1], 5);
        let mut rng = rng::stream(1, Purpose::Verification, 0);
        let mut expected = Vec::new();
        for slot in 0..5 {
            let times: Vec<f64> = (0..4).map(|_| rng.random::<f64>() * 10.0).collect();
            expected.push(seq.trace_3sp(times[0], times[1], times[2], times[3]).unwrap());
            let angles = [
                angles_scaled(&seq.spectra[0], times[0]),
                angles_scaled(&seq.spectra[1], times[1]),
                angles_scaled(&seq.spectra[1], times[3]),
                angles_scaled(&seq.spectra[2], times[2]),
            ];
            kernel.load(slot, &angles);
        }
        for (got, want) in kernel.evaluate(5).iter().zip(&expected) {
            assert!((got - want).norm() < 1e-12);
        }
    }

    #[test]
    fn sequence_validation() {
        let s = synthetic_spectrum::<f64>(4, 1, 0).unwrap();
        let u = OverlapMatrix::<f64>::identity(4).unwrap();
        assert!(QuenchSequence::new(vec![s.clone()], vec![]).is_err());
        assert!(QuenchSequence::new(vec![s.clone(), s.clone()], vec![]).is_err());
        assert!(QuenchSequence::new(vec![s.clone(), s[..3].to_vec()], vec![u.clone()]).is_err());
        let seq = QuenchSequence::new(vec![s.clone(), s.clone()], vec![u.clone()]).unwrap();
        assert_eq!(seq.protocol(), Protocol::TwoStep);
        assert!(seq.trace_3sp(0.0, 0.0, 0.0, 0.0).is_err());
        let degenerate = QuenchSequence::new(vec![vec![0.0, 0.0, 1.0, 2.0], s.clone()], vec![u]).unwrap();
        assert!(matches!(fp_perfect_phase(&degenerate, 1, 10, 0), Err(Error::DegenerateSpectrum { .. })));
    }

    #[test]
    fn permsum_examples() {
        let flat = build_flat_overlap::<f64>(8).unwrap();
        assert!((fp_perfect_permsum_2sp(&flat, 2).unwrap() - 4.0).abs() < 1e-10);
        let haar = OverlapMatrix::new(haar_sample::<f64, _>(6, &mut rng::stream(2, Purpose::HaarOverlap, 0)).unwrap()).unwrap();
        assert!((fp_perfect_permsum_2sp(&haar, 1).unwrap() - ipr(&haar)).abs() < 1e-12);
        assert!(matches!(fp_perfect_permsum_2sp(&flat, 4), Err(Error::TooLarge(_))));
        assert!(matches!(fp_perfect_permsum_2sp(&build_flat_overlap::<f64>(17).unwrap(), 1), Err(Error::TooLarge(_))));
    }

    #[test]
    fn exact_multiset_sum() {
        let haar = OverlapMatrix::new(haar_sample::<f64, _>(6, &mut rng::stream(2, Purpose::HaarOverlap, 0)).unwrap()).unwrap();
        assert!((fp_perfect_exact_2sp(&haar, 1).unwrap() - ipr(&haar)).abs() < 1e-12);
        // flat: ((2D² - D)/D²)² at k = 2
        let d = 8.0f64;
        let flat = build_flat_overlap::<f64>(8).unwrap();
        let expected = ((2.0 * d * d - d) / (d * d)).powi(2);
        assert!((fp_perfect_exact_2sp(&flat, 2).unwrap() - expected).abs() < 1e-12);
        assert_eq!(arrangements(&[0, 0, 1]).len(), 3);
        assert_eq!(multisets(4, 2).len(), 10);
    }

    #[test]
    fn exact_3sp_examples() {
        let id = OverlapMatrix::<f64>::identity(5).unwrap();
        assert!((fp_perfect_exact_3sp_k1(&id, &id).unwrap() - 5.0).abs() < 1e-12);
        let flat = build_flat_overlap::<f64>(9).unwrap();
        assert!((fp_perfect_exact_3sp_k1(&flat, &flat).unwrap() - 1.0).abs() < 1e-12);
        assert!(fp_perfect_exact_3sp_k1(&id, &flat).is_err());
    }

    #[test]
    fn haar_values() {
        assert_eq!(haar_fp(1).unwrap(), 1.0);
        assert_eq!(haar_fp(3).unwrap(), 6.0);
        assert_eq!(haar_fp(5).unwrap(), 120.0);
        assert!(haar_fp(0).is_err());
    }

    #[test]
    fn phase_ensemble_matches_exact_sum_small() {
        let seq = synthetic_sequence::<f64>(Protocol::TwoStep, 5, SyntheticOverlap::Haar, 8).unwrap();
        let est = fp_perfect_phase_multi(&seq, &[1, 2], 40_000, 1).unwrap();
        for e in &est {
            let exact = fp_perfect_exact_2sp(&seq.overlaps[0], e.k).unwrap();
            assert!(e.z_score(exact) < 4.0, "k = {}: {} ± {} vs {exact}", e.k, e.mean, e.stderr);
        }
    }

    #[test]
    fn estimator_is_deterministic_and_bounded() {
        let seq = synthetic_sequence::<f64>(Protocol::ThreeStep, 6, SyntheticOverlap::Haar, 2).unwrap();
        let config = ProtocolConfig { sequence: seq, window: TimeWindow::uniform(50.0).unwrap(), k: 2, samples: 3000, seed: 4 };
        let a = fp_monte_carlo(&config).unwrap();
        let b = fp_monte_carlo(&config).unwrap();
        assert_eq!(a, b);
        assert!(a.mean >= 2.0 - 5.0 * a.stderr);
        assert!(a.stderr > 0.0);
        let bad = ProtocolConfig { k: 0, ..config.clone() };
        assert!(fp_monte_carlo(&bad).is_err());
        let bad = ProtocolConfig { samples: 0, ..config };
        assert!(fp_monte_carlo(&bad).is_err());
    }

    #[test]
    fn f32_estimator_runs() {
        let seq = synthetic_sequence::<f32>(Protocol::TwoStep, 8, SyntheticOverlap::Haar, 2).unwrap();
        let e = fp_perfect_phase(&seq, 1, 5000, 1).unwrap();
        let exact = ipr(&seq.overlaps[0]) as f64;
        assert!(e.z_score(exact) < 4.0);
    }
}
