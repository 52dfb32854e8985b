//! Slice-level kernels shared by tensors, layers and checks. Every reduction
//! runs in a fixed order so results are bit-reproducible.

use crate::scalar::Scalar;

/// `c += a · b` with `a: m×k`, `b: k×n`, `c: m×n`, all row-major.
pub fn gemm_nn<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let c_row = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            let b_row = &b[p * n..(p + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv += av * bv;
            }
        }
    }
}

/// `c += aᵀ · b` with `a: k×m`, `b: k×n`, `c: m×n`.
pub fn gemm_tn<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for p in 0..k {
        let a_row = &a[p * m..(p + 1) * m];
        let b_row = &b[p * n..(p + 1) * n];
        for (i, &av) in a_row.iter().enumerate() {
            let c_row = &mut c[i * n..(i + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv += av * bv;
            }
        }
    }
}

/// `c += a · bᵀ` with `a: m×k`, `b: n×k`, `c: m×n`.
pub fn gemm_nt<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            c[i * n + j] += dot(a_row, &b[j * k..(j + 1) * k]);
        }
    }
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut s = T::ZERO;
    for (&x, &y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

pub fn sum<T: Scalar>(a: &[T]) -> T {
    let mut s = T::ZERO;
    for &x in a {
        s += x;
    }
    s
}

pub fn norm2<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

pub fn max_abs<T: Scalar>(a: &[T]) -> T {
    a.iter().fold(T::ZERO, |m, &v| m.max(v.abs()))
}

/// Largest singular value of the row-major `rows×cols` matrix `a`, by power
/// iteration on `aᵀa`.
///
/// `start` seeds the iteration (length `cols`, need not be normalized). The
/// iteration stops after `max_iters` rounds or once the estimate changes by
/// less than `tol` relative. Returns the estimate and the final unit vector.
/// The estimate never decreases from one round to the next, so it is a lower
/// bound on the true value that is at least `‖a·start‖/‖start‖`.
pub fn spectral_norm(
    a: &[f64],
    rows: usize,
    cols: usize,
    start: &[f64],
    max_iters: usize,
    tol: f64,
) -> (f64, alloc::vec::Vec<f64>) {
    use alloc::vec;
    debug_assert_eq!(a.len(), rows * cols);
    let mut v = start.to_vec();
    let n0 = norm2(&v);
    if n0 == 0.0 {
        v.iter_mut().for_each(|x| *x = 1.0);
    }
    let n0 = norm2(&v);
    v.iter_mut().for_each(|x| *x /= n0);

    let mut av = vec![0.0; rows];
    let mut atav = vec![0.0; cols];
    let apply = |v: &[f64], av: &mut [f64]| {
        av.iter_mut().for_each(|x| *x = 0.0);
        gemm_nn(rows, cols, 1, a, v, av);
    };
    apply(&v, &mut av);
    let mut sigma = norm2(&av);
    for _ in 0..max_iters {
        atav.iter_mut().for_each(|x| *x = 0.0);
        gemm_tn(cols, rows, 1, a, &av, &mut atav);
        let n = norm2(&atav);
        if n == 0.0 {
            break;
        }
        let candidate: alloc::vec::Vec<f64> = atav.iter().map(|x| x / n).collect();
        let mut cand_av = vec![0.0; rows];
        apply(&candidate, &mut cand_av);
        let next = norm2(&cand_av);
        if next < sigma {
            // rounding noise after convergence
            break;
        }
        let converged = (next - sigma) <= tol * next;
        v = candidate;
        av = cand_av;
        sigma = next;
        if converged {
            break;
        }
    }
    (sigma, v)
}
