//! Permanents and exact Boson sampling over small linear interferometers.
//!
//! Transition amplitudes between occupation patterns of `n` identical bosons
//! are permanents of `n×n` submatrices of the mode unitary. Output
//! distributions are enumerated exactly, which is only feasible at desk scale.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::fock::factorial;

/// Largest matrix order accepted by [`permanent`].
pub const MAX_PERMANENT_ORDER: usize = 20;
/// Largest number of output patterns enumerated by [`output_distribution`].
pub const MAX_OUTPUTS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PermanentError {
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix order {0} exceeds the limit of {MAX_PERMANENT_ORDER}")]
    TooLarge(usize),
    #[error("matrix is not unitary (deviation {0:e})")]
    NotUnitary(f64),
    #[error("occupation has {got} modes, interferometer has {expected}")]
    ModeCountMismatch { expected: usize, got: usize },
    #[error("input carries {input} bosons but output carries {output}")]
    TotalMismatch { input: u32, output: u32 },
    #[error("{0} output patterns exceed the enumeration limit")]
    TooManyOutputs(usize),
}

/// Permanent by Ryser's formula, visiting column subsets in Gray-code order.
///
/// Each step toggles one column and updates the running row sums in `O(n)`,
/// for `O(2ⁿ·n)` work overall. The empty matrix has permanent 1.
pub fn permanent(a: &DMatrix<Complex64>) -> Result<Complex64, PermanentError> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(PermanentError::NotSquare {
            rows: n,
            cols: a.ncols(),
        });
    }
    if n > MAX_PERMANENT_ORDER {
        return Err(PermanentError::TooLarge(n));
    }
    if n == 0 {
        return Ok(Complex64::new(1.0, 0.0));
    }

    let mut row_sums = vec![Complex64::new(0.0, 0.0); n];
    let mut included = vec![false; n];
    let mut acc = Complex64::new(0.0, 0.0);
    let mut size = 0usize;
    for step in 1u64..(1u64 << n) {
        let col = step.trailing_zeros() as usize;
        if included[col] {
            for (r, s) in row_sums.iter_mut().enumerate() {
                *s -= a[(r, col)];
            }
            size -= 1;
        } else {
            for (r, s) in row_sums.iter_mut().enumerate() {
                *s += a[(r, col)];
            }
            size += 1;
        }
        included[col] = !included[col];
        let prod = row_sums
            .iter()
            .fold(Complex64::new(1.0, 0.0), |p, &s| p * s);
        if size % 2 == 0 {
            acc += prod;
        } else {
            acc -= prod;
        }
    }
    if n % 2 == 1 {
        acc = -acc;
    }
    Ok(acc)
}

/// An `M`-mode passive linear network; column `j` is the image of `a_j†`.
#[derive(Debug, Clone, PartialEq)]
pub struct Interferometer {
    u: DMatrix<Complex64>,
}

impl Interferometer {
    pub fn new(u: DMatrix<Complex64>) -> Result<Self, PermanentError> {
        if u.nrows() != u.ncols() {
            return Err(PermanentError::NotSquare {
                rows: u.nrows(),
                cols: u.ncols(),
            });
        }
        let dev = unitarity_deviation(&u);
        if dev > 1e-10 {
            return Err(PermanentError::NotUnitary(dev));
        }
        Ok(Interferometer { u })
    }

    pub fn identity(modes: usize) -> Self {
        Interferometer {
            u: DMatrix::identity(modes, modes),
        }
    }

    /// Raman beam splitter of angle θ as a two-mode network.
    pub fn beamsplitter(theta: f64) -> Self {
        let c = Complex64::new((theta / 2.0).cos(), 0.0);
        let s = Complex64::new(0.0, (theta / 2.0).sin());
        Interferometer {
            u: DMatrix::from_row_slice(2, 2, &[c, s, s, c]),
        }
    }

    /// Haar-random unitary: QR of a complex Ginibre matrix with the phases of
    /// R's diagonal divided out.
    pub fn haar_random<R: Rng + ?Sized>(modes: usize, rng: &mut R) -> Self {
        let z = DMatrix::from_fn(modes, modes, |_, _| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re, im) / std::f64::consts::SQRT_2
        });
        let qr = z.qr();
        let mut q = qr.q();
        let r = qr.r();
        for j in 0..modes {
            let d = r[(j, j)];
            let phase = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
            for i in 0..modes {
                q[(i, j)] *= phase;
            }
        }
        Interferometer { u: q }
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.u
    }

    pub fn modes(&self) -> usize {
        self.u.nrows()
    }
}

pub fn unitarity_deviation(u: &DMatrix<Complex64>) -> f64 {
    let prod = u * u.adjoint();
    let id = DMatrix::<Complex64>::identity(u.nrows(), u.ncols());
    (prod - id).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Occupation pattern over interferometer modes.
pub type Occupation = Vec<u8>;

fn check_occupation(u: &Interferometer, occ: &[u8]) -> Result<u32, PermanentError> {
    if occ.len() != u.modes() {
        return Err(PermanentError::ModeCountMismatch {
            expected: u.modes(),
            got: occ.len(),
        });
    }
    Ok(occ.iter().map(|&k| k as u32).sum())
}

/// `⟨output| U |input⟩ = Per(U_{out,in}) / sqrt(∏ in_j! ∏ out_i!)`.
pub fn transition_amplitude(
    u: &Interferometer,
    input: &[u8],
    output: &[u8],
) -> Result<Complex64, PermanentError> {
    let n_in = check_occupation(u, input)?;
    let n_out = check_occupation(u, output)?;
    if n_in != n_out {
        return Err(PermanentError::TotalMismatch {
            input: n_in,
            output: n_out,
        });
    }
    let cols = expand(input);
    let rows = expand(output);
    let n = cols.len();
    let sub = DMatrix::from_fn(n, n, |r, c| u.u[(rows[r], cols[c])]);
    let per = permanent(&sub)?;
    let norm: f64 = input
        .iter()
        .chain(output)
        .map(|&k| factorial(k as usize))
        .product();
    Ok(per / norm.sqrt())
}

fn expand(occ: &[u8]) -> Vec<usize> {
    occ.iter()
        .enumerate()
        .flat_map(|(i, &k)| std::iter::repeat_n(i, k as usize))
        .collect()
}

/// All occupations of `modes` modes with exactly `n` bosons, in the same
/// descending-lexicographic order used by the Fock basis.
pub fn occupations(modes: usize, n: u32) -> Vec<Occupation> {
    fn rec(remaining: u32, pos: usize, cur: &mut Vec<u8>, out: &mut Vec<Occupation>) {
        if pos + 1 == cur.len() {
            cur[pos] = remaining as u8;
            out.push(cur.clone());
            return;
        }
        for k in (0..=remaining).rev() {
            cur[pos] = k as u8;
            rec(remaining - k, pos + 1, cur, out);
        }
    }
    let mut out = Vec::new();
    if modes == 0 {
        return out;
    }
    rec(n, 0, &mut vec![0; modes], &mut out);
    out
}

fn count_outputs(modes: usize, n: u32) -> usize {
    // C(n + M - 1, M - 1) without overflow for desk-scale arguments
    let k = modes.saturating_sub(1);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n as u128 + 1 + i as u128) / (i as u128 + 1);
    }
    c.min(usize::MAX as u128) as usize
}

/// Exact output distribution in canonical order.
pub fn output_distribution(
    u: &Interferometer,
    input: &[u8],
) -> Result<BTreeMap<Occupation, f64>, PermanentError> {
    Ok(ordered_distribution(u, input)?.into_iter().collect())
}

fn ordered_distribution(
    u: &Interferometer,
    input: &[u8],
) -> Result<Vec<(Occupation, f64)>, PermanentError> {
    let n = check_occupation(u, input)?;
    let count = count_outputs(u.modes(), n);
    if count > MAX_OUTPUTS {
        return Err(PermanentError::TooManyOutputs(count));
    }
    occupations(u.modes(), n)
        .into_iter()
        .map(|out| {
            let amp = transition_amplitude(u, input, &out)?;
            Ok((out, amp.norm_sqr()))
        })
        .collect()
}

/// I.i.d. samples by inverse CDF over the canonical output ordering.
pub fn boson_sample<R: Rng + ?Sized>(
    u: &Interferometer,
    input: &[u8],
    n_samples: usize,
    rng: &mut R,
) -> Result<Vec<Occupation>, PermanentError> {
    let dist = ordered_distribution(u, input)?;
    let mut cdf = Vec::with_capacity(dist.len());
    let mut acc = 0.0;
    for (_, p) in &dist {
        acc += p;
        cdf.push(acc);
    }
    let total = acc;
    let samples = (0..n_samples)
        .map(|_| {
            let x = rng.random::<f64>() * total;
            let idx = cdf.partition_point(|&c| c <= x).min(dist.len() - 1);
            dist[idx].0.clone()
        })
        .collect();
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    // Sum over all permutations, the defining O(n·n!) expansion.
    fn naive_permanent(a: &DMatrix<Complex64>) -> Complex64 {
        fn rec(a: &DMatrix<Complex64>, row: usize, used: &mut Vec<bool>) -> Complex64 {
            if row == a.nrows() {
                return c(1.0, 0.0);
            }
            let mut s = c(0.0, 0.0);
            for col in 0..a.ncols() {
                if !used[col] {
                    used[col] = true;
                    s += a[(row, col)] * rec(a, row + 1, used);
                    used[col] = false;
                }
            }
            s
        }
        rec(a, 0, &mut vec![false; a.ncols()])
    }

    fn random_matrix(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<Complex64> {
        DMatrix::from_fn(n, n, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    }

    #[test]
    fn small_permanents() {
        assert_eq!(permanent(&DMatrix::identity(3, 3)).unwrap(), c(1.0, 0.0));
        let ones = DMatrix::from_element(3, 3, c(1.0, 0.0));
        assert!((permanent(&ones).unwrap() - c(6.0, 0.0)).norm() < 1e-12);
        assert_eq!(permanent(&DMatrix::zeros(0, 0)).unwrap(), c(1.0, 0.0));
        assert_eq!(
            permanent(&DMatrix::zeros(2, 3)),
            Err(PermanentError::NotSquare { rows: 2, cols: 3 })
        );
        assert_eq!(
            permanent(&DMatrix::zeros(21, 21)),
            Err(PermanentError::TooLarge(21))
        );
    }

    #[test]
    fn ryser_matches_naive_expansion() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in 1..=6 {
            let a = random_matrix(n, &mut rng);
            let d = (permanent(&a).unwrap() - naive_permanent(&a)).norm();
            assert!(d < 1e-12, "n={n} diff={d}");
        }
    }

    #[test]
    fn permutation_matrix_has_unit_permanent() {
        let perm = [2usize, 0, 3, 1];
        let p = DMatrix::from_fn(4, 4, |r, col| if perm[r] == col { c(1.0, 0.0) } else { c(0.0, 0.0) });
        assert_eq!(permanent(&p).unwrap(), c(1.0, 0.0));
    }

    #[test]
    fn hom_amplitudes() {
        let bs = Interferometer::beamsplitter(std::f64::consts::FRAC_PI_2);
        assert!(transition_amplitude(&bs, &[1, 1], &[1, 1]).unwrap().norm() < 1e-15);
        let a20 = transition_amplitude(&bs, &[1, 1], &[2, 0]).unwrap();
        assert!((a20 - c(0.0, FRAC_1_SQRT_2)).norm() < 1e-15);
        assert_eq!(
            transition_amplitude(&bs, &[1, 1], &[1, 0]),
            Err(PermanentError::TotalMismatch { input: 2, output: 1 })
        );
    }

    #[test]
    fn identity_network() {
        let id = Interferometer::identity(3);
        for out in occupations(3, 2) {
            let a = transition_amplitude(&id, &[1, 0, 1], &out).unwrap();
            let expect = if out == vec![1, 0, 1] { 1.0 } else { 0.0 };
            assert!((a - c(expect, 0.0)).norm() < 1e-15);
        }
        let d = output_distribution(&id, &[0, 2, 0]).unwrap();
        assert_eq!(d[&vec![0, 2, 0]], 1.0);
    }

    #[test]
    fn hom_distribution() {
        let bs = Interferometer::beamsplitter(std::f64::consts::FRAC_PI_2);
        let d = output_distribution(&bs, &[1, 1]).unwrap();
        assert!((d[&vec![2, 0]] - 0.5).abs() < 1e-15);
        assert!((d[&vec![0, 2]] - 0.5).abs() < 1e-15);
        assert!(d[&vec![1, 1]] < 1e-30);
    }

    #[test]
    fn haar_unitaries_are_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for m in 1..=7 {
            let u = Interferometer::haar_random(m, &mut rng);
            assert!(unitarity_deviation(u.matrix()) < 1e-12);
            Interferometer::new(u.matrix().clone()).unwrap();
        }
        let bad = DMatrix::from_element(2, 2, c(1.0, 0.0));
        assert!(matches!(Interferometer::new(bad), Err(PermanentError::NotUnitary(_))));
    }

    #[test]
    fn output_count_guard() {
        let id = Interferometer::identity(20);
        let mut input = vec![0u8; 20];
        input[0] = 12;
        assert!(matches!(
            output_distribution(&id, &input),
            Err(PermanentError::TooManyOutputs(_))
        ));
    }

    #[test]
    fn sampling_point_mass_and_hom() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let id = Interferometer::identity(3);
        let s = boson_sample(&id, &[1, 0, 1], 500, &mut rng).unwrap();
        assert!(s.iter().all(|o| o == &vec![1, 0, 1]));

        let bs = Interferometer::beamsplitter(std::f64::consts::FRAC_PI_2);
        let n = 100_000;
        let s = boson_sample(&bs, &[1, 1], n, &mut rng).unwrap();
        let n20 = s.iter().filter(|o| o == &&vec![2, 0]).count();
        let n11 = s.iter().filter(|o| o == &&vec![1, 1]).count();
        assert_eq!(n11, 0);
        let sigma = (0.25 / n as f64).sqrt();
        assert!((n20 as f64 / n as f64 - 0.5).abs() < 3.0 * sigma);
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let mut r1 = ChaCha8Rng::seed_from_u64(77);
        let mut r2 = ChaCha8Rng::seed_from_u64(77);
        let u = Interferometer::haar_random(4, &mut ChaCha8Rng::seed_from_u64(3));
        let a = boson_sample(&u, &[1, 1, 0, 0], 1000, &mut r1).unwrap();
        let b = boson_sample(&u, &[1, 1, 0, 0], 1000, &mut r2).unwrap();
        assert_eq!(a, b);
    }
}
