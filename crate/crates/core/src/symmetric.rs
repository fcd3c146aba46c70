//! Elementary symmetric polynomials.
//!
//! For the positive vectors this crate works with, the one-pass recurrence
//! `e_k <- e_k + z_i e_{k-1}` only ever adds positive terms, so it is free of cancellation.

use crate::real::Real;

/// All elementary symmetric polynomials `[e_0, e_1, ..., e_n]` of `z`.
pub fn elementary_symmetric<T: Real>(z: &[T]) -> Vec<T> {
    let mut e = vec![T::zero(); z.len() + 1];
    e[0] = T::one();
    for (i, &zi) in z.iter().enumerate() {
        for k in (1..=i + 1).rev() {
            e[k] = e[k] + zi * e[k - 1];
        }
    }
    e
}

/// `e_k(x, y, ..., y)` with `m` copies of `y`, in closed form:
/// `C(m, k) y^k + x C(m, k-1) y^(k-1)`.
pub fn elementary_symmetric_split<T: Real>(k: usize, x: T, y: T, m: usize) -> T {
    if k == 0 {
        return T::one();
    }
    let rot = if k <= m {
        binomial::<T>(m, k) * y.powi(k as i32)
    } else {
        T::zero()
    };
    let mixed = if k - 1 <= m {
        x * binomial::<T>(m, k - 1) * y.powi(k as i32 - 1)
    } else {
        T::zero()
    };
    rot + mixed
}

/// Binomial coefficient as a float.
pub fn binomial<T: Real>(n: usize, k: usize) -> T {
    if k > n {
        return T::zero();
    }
    let k = k.min(n - k);
    let mut acc = T::one();
    for i in 0..k {
        acc = acc * T::from_usize(n - i).unwrap() / T::from_usize(i + 1).unwrap();
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force(z: &[f64], k: usize) -> f64 {
        // sum over all k-subsets via bitmasks
        let n = z.len();
        (0u32..(1 << n))
            .filter(|m| m.count_ones() as usize == k)
            .map(|m| {
                (0..n)
                    .filter(|i| m & (1 << i) != 0)
                    .map(|i| z[i])
                    .product::<f64>()
            })
            .sum()
    }

    #[test]
    fn recurrence_matches_subset_enumeration() {
        let z = [0.3, 1.7, 2.0, 5.5, 0.9, 3.1];
        let e = elementary_symmetric(&z);
        for (k, ek) in e.iter().enumerate() {
            let want = brute_force(&z, k);
            assert!((ek - want).abs() <= 1e-13 * want.abs(), "k={k}");
        }
    }

    #[test]
    fn split_form_matches_general_form() {
        for n in 2..=7 {
            let (x, y) = (0.37f64, 2.9);
            let mut z = vec![y; n];
            z[0] = x;
            let e = elementary_symmetric(&z);
            for (k, ek) in e.iter().enumerate() {
                let s = elementary_symmetric_split(k, x, y, n - 1);
                assert!((s - ek).abs() <= 1e-13 * ek.abs(), "n={n} k={k}");
            }
        }
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial::<f64>(5, 2), 10.0);
        assert_eq!(binomial::<f64>(4, 0), 1.0);
        assert_eq!(binomial::<f64>(3, 5), 0.0);
    }
}
