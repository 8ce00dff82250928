//! Multi-dimensional discrete Fourier transforms on a [`Grid`].
//!
//! Forward transforms are normalized so that the coefficients are the Fourier
//! series coefficients of the trigonometric interpolant:
//! `f(x) = Σ_k c_k exp(i k·x)`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::Grid;

type Plan = Arc<dyn Fft<f64>>;

fn plan(n: usize, inverse: bool) -> Plan {
    static PLANS: OnceLock<Mutex<HashMap<(usize, bool), Plan>>> = OnceLock::new();
    let cache = PLANS.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    guard
        .entry((n, inverse))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            if inverse {
                planner.plan_fft_inverse(n)
            } else {
                planner.plan_fft_forward(n)
            }
        })
        .clone()
}

/// In-place unnormalized transform along every axis.
fn transform_axes(grid: &Grid, data: &mut [Complex64], inverse: bool) {
    let n = grid.n();
    let fft = plan(n, inverse);
    for axis in 0..grid.dim() {
        let stride = grid.stride(axis);
        if stride == 1 {
            data.par_chunks_mut(n).for_each(|line| fft.process(line));
            continue;
        }
        // Lines along a strided axis: gather, transform, scatter. Each block of
        // `n * stride` entries holds `stride` independent lines.
        data.par_chunks_mut(n * stride).for_each(|block| {
            let mut line = vec![Complex64::new(0.0, 0.0); n];
            for offset in 0..stride {
                for (j, v) in line.iter_mut().enumerate() {
                    *v = block[offset + j * stride];
                }
                fft.process(&mut line);
                for (j, v) in line.iter().enumerate() {
                    block[offset + j * stride] = *v;
                }
            }
        });
    }
}

fn check_len(grid: &Grid, len: usize) -> Result<()> {
    if grid.len() != len {
        return Err(Error::SizeMismatch { expected: grid.len(), actual: len });
    }
    Ok(())
}

/// Fourier coefficients of real samples.
pub fn forward(grid: &Grid, samples: &[f64]) -> Result<Vec<Complex64>> {
    check_len(grid, samples.len())?;
    let mut data: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    transform_axes(grid, &mut data, false);
    let scale = 1.0 / grid.len() as f64;
    data.iter_mut().for_each(|c| *c *= scale);
    Ok(data)
}

/// Real samples of a coefficient array; the imaginary part is discarded.
pub fn inverse(grid: &Grid, coeffs: &[Complex64]) -> Result<Vec<f64>> {
    check_len(grid, coeffs.len())?;
    let mut data = coeffs.to_vec();
    transform_axes(grid, &mut data, true);
    Ok(data.into_iter().map(|c| c.re).collect())
}

/// Projects coefficients onto the Hermitian-symmetric subspace `c_{-k} = conj(c_k)`.
pub fn hermitian_symmetrize(grid: &Grid, coeffs: &mut [Complex64]) {
    for flat in 0..coeffs.len() {
        let conj = grid.conjugate_index(flat);
        if conj < flat {
            continue;
        }
        let avg = 0.5 * (coeffs[flat] + coeffs[conj].conj());
        coeffs[flat] = avg;
        coeffs[conj] = avg.conj();
    }
}

/// Maximum Hermitian-symmetry defect `max |c_{-k} - conj(c_k)|`.
pub fn hermitian_defect(grid: &Grid, coeffs: &[Complex64]) -> f64 {
    (0..coeffs.len())
        .map(|flat| (coeffs[grid.conjugate_index(flat)] - coeffs[flat].conj()).norm())
        .fold(0.0, f64::max)
}

/// Zero-pads coefficients onto a grid refined by `factor`, splitting every
/// Nyquist coefficient evenly between `±n/2` so the padded field stays real and
/// agrees with the trigonometric interpolant.
pub fn zero_pad(grid: &Grid, coeffs: &[Complex64], factor: usize) -> Result<(Grid, Vec<Complex64>)> {
    check_len(grid, coeffs.len())?;
    let fine = grid.refined(factor);
    let n = grid.n();
    let nf = fine.n();
    let mut out = vec![Complex64::new(0.0, 0.0); fine.len()];
    for (flat, &c) in coeffs.iter().enumerate() {
        if c == Complex64::new(0.0, 0.0) {
            continue;
        }
        let m = grid.multi_index(flat);
        // Up to two target indices per axis.
        let mut targets: [[usize; 2]; 3] = [[0; 2]; 3];
        let mut counts = [1usize; 3];
        let mut weight = 1.0;
        for axis in 0..grid.dim() {
            let j = m[axis];
            if grid.is_nyquist(j) {
                targets[axis] = [n / 2, nf - n / 2];
                counts[axis] = 2;
                weight *= 0.5;
            } else {
                let s = grid.signed_frequency(j);
                targets[axis][0] = if s >= 0 { s as usize } else { (nf as i64 + s) as usize };
            }
        }
        let mut idx = [0usize; 3];
        let total: usize = counts[..grid.dim()].iter().product();
        for combo in 0..total {
            let mut rest = combo;
            for axis in 0..grid.dim() {
                idx[axis] = targets[axis][rest % counts[axis]];
                rest /= counts[axis];
            }
            out[fine.flat_index(&idx)] += c * weight;
        }
    }
    Ok((fine, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_has_only_mean_mode() {
        let g = Grid::periodic(2, 16).unwrap();
        let c = forward(&g, &vec![2.5; g.len()]).unwrap();
        assert!((c[0].re - 2.5).abs() < 1e-15);
        assert!(c[1..].iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn single_harmonic_has_two_conjugate_modes() {
        let g = Grid::periodic(2, 16).unwrap();
        let s: Vec<f64> = (0..g.len()).map(|i| g.node(i)[0].sin()).collect();
        let c = forward(&g, &s).unwrap();
        let plus = g.flat_index(&[1, 0]);
        let minus = g.flat_index(&[15, 0]);
        // sin x = (e^{ix} - e^{-ix}) / 2i
        assert!((c[plus] - Complex64::new(0.0, -0.5)).norm() < 1e-15);
        assert!((c[minus] - Complex64::new(0.0, 0.5)).norm() < 1e-15);
        let others = c
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != plus && *i != minus)
            .map(|(_, z)| z.norm())
            .fold(0.0, f64::max);
        assert!(others < 1e-15);
    }

    #[test]
    fn round_trip_3d() {
        let g = Grid::periodic(3, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let back = inverse(&g, &forward(&g, &s).unwrap()).unwrap();
        let err = s.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-14);
    }

    #[test]
    fn real_samples_give_hermitian_coefficients() {
        let g = Grid::periodic(2, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c = forward(&g, &s).unwrap();
        assert!(hermitian_defect(&g, &c) < 1e-15);
    }

    #[test]
    fn zero_padding_preserves_node_values() {
        let g = Grid::periodic(2, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c = forward(&g, &s).unwrap();
        let (fine, padded) = zero_pad(&g, &c, 2).unwrap();
        let fs = inverse(&fine, &padded).unwrap();
        for flat in 0..g.len() {
            let m = g.multi_index(flat);
            let fm = [2 * m[0], 2 * m[1], 0];
            assert!((fs[fine.flat_index(&fm)] - s[flat]).abs() < 1e-13);
        }
    }

    #[test]
    fn size_mismatch_is_reported() {
        let g = Grid::periodic(2, 8).unwrap();
        assert!(matches!(forward(&g, &[0.0; 10]), Err(Error::SizeMismatch { .. })));
    }
}
