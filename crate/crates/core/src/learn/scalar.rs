use num_traits::Float;

/// Floating-point element type of a network: `f32` for training, `f64`
/// for gradient checks.
pub trait Scalar: Float + Default + Send + Sync + std::fmt::Debug + std::iter::Sum + 'static {
    fn from_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;

    /// `c = alpha * a * b + beta * c` for strided `m x k` by `k x n` operands.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        a_strides: (isize, isize),
        b: &[Self],
        b_strides: (isize, isize),
        beta: Self,
        c: &mut [Self],
        c_strides: (isize, isize),
    );
}

fn check_extent(len: usize, rows: usize, cols: usize, (rs, cs): (isize, isize)) {
    if rows == 0 || cols == 0 {
        return;
    }
    let last = (rows as isize - 1) * rs + (cols as isize - 1) * cs;
    assert!(rs >= 0 && cs >= 0 && (last as usize) < len, "gemm operand out of bounds");
}

macro_rules! impl_scalar {
    ($t:ty, $f:path) => {
        impl Scalar for $t {
            fn from_f64(x: f64) -> Self {
                x as $t
            }

            fn as_f64(self) -> f64 {
                self as f64
            }

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                a_strides: (isize, isize),
                b: &[Self],
                b_strides: (isize, isize),
                beta: Self,
                c: &mut [Self],
                c_strides: (isize, isize),
            ) {
                check_extent(a.len(), m, k, a_strides);
                check_extent(b.len(), k, n, b_strides);
                check_extent(c.len(), m, n, c_strides);
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: every operand extent was bounds-checked above.
                unsafe {
                    $f(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        a_strides.0,
                        a_strides.1,
                        b.as_ptr(),
                        b_strides.0,
                        b_strides.1,
                        beta,
                        c.as_mut_ptr(),
                        c_strides.0,
                        c_strides.1,
                    )
                }
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);

/// Row-major `a (m x k) * b (k x n)`, accumulated into `c` with `beta`.
pub fn matmul<S: Scalar>(m: usize, k: usize, n: usize, a: &[S], b: &[S], beta: S, c: &mut [S]) {
    S::gemm(m, k, n, S::one(), a, (k as isize, 1), b, (n as isize, 1), beta, c, (n as isize, 1));
}

/// `a^T (k x m)^T * b (k x n)` where `a` is stored row-major as `k x m`.
pub fn matmul_at<S: Scalar>(m: usize, k: usize, n: usize, a: &[S], b: &[S], beta: S, c: &mut [S]) {
    S::gemm(m, k, n, S::one(), a, (1, m as isize), b, (n as isize, 1), beta, c, (n as isize, 1));
}

/// `a (m x k) * b^T` where `b` is stored row-major as `n x k`.
pub fn matmul_bt<S: Scalar>(m: usize, k: usize, n: usize, a: &[S], b: &[S], beta: S, c: &mut [S]) {
    S::gemm(m, k, n, S::one(), a, (k as isize, 1), b, (1, k as isize), beta, c, (n as isize, 1));
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    #[test]
    fn products_match_naive() {
        let (m, k, n) = (3, 4, 5);
        let a: Vec<f64> = (0..m * k).map(|i| i as f64 * 0.5 - 2.0).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i % 7) as f64 - 3.0).collect();
        let mut c = vec![0.0; m * n];
        matmul(m, k, n, &a, &b, 0.0, &mut c);
        assert_eq!(c, naive(m, k, n, &a, &b));

        // a^T stored as k x m
        let at: Vec<f64> = (0..k * m).map(|i| a[(i % m) * k + i / m]).collect();
        let mut c2 = vec![0.0; m * n];
        matmul_at(m, k, n, &at, &b, 0.0, &mut c2);
        assert_eq!(c2, c);

        let bt: Vec<f64> = (0..n * k).map(|i| b[(i % k) * n + i / k]).collect();
        let mut c3 = vec![1.0; m * n];
        matmul_bt(m, k, n, &a, &bt, 1.0, &mut c3);
        let expect: Vec<f64> = c.iter().map(|x| x + 1.0).collect();
        assert_eq!(c3, expect);
    }

    #[test]
    #[should_panic(expected = "out of bounds")]
    fn short_operand_panics() {
        let mut c = vec![0.0f32; 4];
        matmul(2, 2, 2, &[1.0f32; 3], &[1.0; 4], 0.0, &mut c);
    }
}
