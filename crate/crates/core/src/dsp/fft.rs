//! In-place radix-2 decimation-in-time FFT.

use num_complex::Complex;

/// Transforms `buf` in place. Length must be a power of two.
pub fn fft_in_place(buf: &mut [Complex<f64>]) {
    let n = buf.len();
    assert!(n.is_power_of_two(), "fft length {n} is not a power of two");
    if n <= 1 {
        return;
    }

    // bit-reversal permutation
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }

    let mut len = 2;
    while len <= n {
        let angle = -2.0 * std::f64::consts::PI / len as f64;
        let w_len = Complex::new(angle.cos(), angle.sin());
        let mut start = 0;
        while start < n {
            let mut w = Complex::new(1.0, 0.0);
            for k in 0..len / 2 {
                let even = buf[start + k];
                let odd = buf[start + k + len / 2] * w;
                buf[start + k] = even + odd;
                buf[start + k + len / 2] = even - odd;
                w *= w_len;
            }
            start += len;
        }
        len <<= 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct O(n^2) DFT, the correctness oracle.
    fn naive_dft(input: &[Complex<f64>]) -> Vec<Complex<f64>> {
        let n = input.len();
        (0..n)
            .map(|k| {
                let mut acc = Complex::new(0.0, 0.0);
                for (t, x) in input.iter().enumerate() {
                    let angle = -2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64;
                    acc += x * Complex::new(angle.cos(), angle.sin());
                }
                acc
            })
            .collect()
    }

    #[test]
    fn matches_naive_dft_within_1e_9() {
        let mut state = 0x9e3779b9u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 33) as f64 / (1u64 << 31) as f64 - 1.0
        };
        for &n in &[2usize, 8, 64, 512] {
            let input: Vec<Complex<f64>> = (0..n).map(|_| Complex::new(next(), next())).collect();
            let expected = naive_dft(&input);
            let mut got = input.clone();
            fft_in_place(&mut got);
            for (g, e) in got.iter().zip(&expected) {
                assert!((g - e).norm() < 1e-9, "n = {n}: {g} vs {e}");
            }
        }
    }

    #[test]
    fn impulse_transforms_to_all_ones() {
        let mut buf = vec![Complex::new(0.0, 0.0); 16];
        buf[0] = Complex::new(1.0, 0.0);
        fft_in_place(&mut buf);
        for c in &buf {
            assert!((c - Complex::new(1.0, 0.0)).norm() < 1e-12);
        }
    }
}
