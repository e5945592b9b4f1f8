#![allow(dead_code)]

use std::sync::Arc;

use homsim::permanent::{occupations, transition_amplitude, Interferometer};
use homsim::rng::substream;
use homsim::{FockBasis, FockState, ModeLabel};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

/// Sum over all permutations, O(n·n!).
pub fn naive_permanent(a: &DMatrix<Complex64>) -> Complex64 {
    let n = a.nrows();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut total = Complex64::new(0.0, 0.0);
    permute(&mut perm, 0, a, &mut total);
    total
}

fn permute(perm: &mut Vec<usize>, k: usize, a: &DMatrix<Complex64>, total: &mut Complex64) {
    if k == perm.len() {
        *total += perm
            .iter()
            .enumerate()
            .map(|(i, &j)| a[(i, j)])
            .product::<Complex64>();
        return;
    }
    for i in k..perm.len() {
        perm.swap(k, i);
        permute(perm, k + 1, a, total);
        perm.swap(k, i);
    }
}

pub fn random_matrix<R: Rng>(n: usize, rng: &mut R) -> DMatrix<Complex64> {
    DMatrix::from_fn(n, n, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

/// Largest |amplitude| difference between the permanent formula and direct
/// Fock-space evolution over `count` Haar-random networks with M ≤ 5 modes
/// and n ≤ 4 bosons in a random input pattern.
pub fn oracle_discrepancy(count: usize, seed: u64) -> f64 {
    let mut rng = substream(seed, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let m = rng.random_range(1..=5usize);
        let n = rng.random_range(1..=4u32);
        let u = Interferometer::haar_random(m, &mut rng);
        let mut input = vec![0u8; m];
        for _ in 0..n {
            input[rng.random_range(0..m)] += 1;
        }
        let modes: Vec<ModeLabel> = (0..m as i32).map(ModeLabel::s1).collect();
        let basis = Arc::new(FockBasis::new(&modes, n).unwrap());
        let state = FockState::basis_state(basis, &input)
            .unwrap()
            .apply_mode_unitary(&modes, u.matrix())
            .unwrap();
        for out in occupations(m, n) {
            let a = transition_amplitude(&u, &input, &out).unwrap();
            let b = state.amplitude(&out).unwrap();
            worst = worst.max((a - b).norm());
        }
    }
    worst
}

/// Valid programs exercising every statement form.
pub const CORPUS: [&str; 20] = [
    "",
    "prepare s1",
    "prepare s1\nread s1",
    "prepare s1\nprepare s2\nraman duration=155ns\nread s1\nread s2",
    "prepare s2\nraman duration=154ns\nread s1\nread s2",
    "prepare s1\nraman duration=77ns\nwait 300ns\nraman duration=77ns\nread s2",
    "PREPARE S1\nRAMAN DURATION=10NS\nREAD S1",
    "# comment only\n\n",
    "prepare s1 # trailing comment\nwait 5 ns\nread s1",
    "prepare s1\nraman duration=154ns angle=1\nread s1\nread s2",
    "prepare s1\nprepare s2\nraman duration=154ns angle=-2\nread s2\nread s1",
    "prepare s1\nraman duration=100ns rabi=1.626mhz\nread s2",
    "prepare s1\nraman duration=100ns angle=3 rabi=0.5mhz",
    "raman duration=0ns",
    "wait 0ns",
    "wait 10700ns",
    "prepare s1; prepare s2; raman duration=155ns; read s1; read s2",
    "prepare s2\r\nwait 1000ns\r\nread s2\r\n",
    "prepare s1\nprepare s2\nraman duration=154ns\nwait 357ns\nraman duration=154ns\nread s1\nread s2",
    "prepare s1\nraman rabi=2mhz angle=1 duration=20ns\nwait 1ns\nraman duration=20ns\nread s1",
];
