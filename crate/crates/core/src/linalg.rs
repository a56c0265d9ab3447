//! Small dense linear algebra helpers.

use crate::Scalar;

/// Row-major LU factorisation with partial pivoting.
pub(crate) struct DenseLu<S> {
    n: usize,
    lu: Vec<S>,
    perm: Vec<usize>,
}

impl<S: Scalar> DenseLu<S> {
    /// Factorises the `n x n` row-major matrix. Returns `None` when a pivot
    /// falls below `pivot_tol` times the largest entry.
    pub(crate) fn new(n: usize, mut a: Vec<S>, pivot_tol: S) -> Option<Self> {
        assert_eq!(a.len(), n * n);
        let scale = a.iter().fold(S::zero(), |m, v| m.max(v.abs()));
        let tiny = pivot_tol * scale.max(S::one());
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (piv, best) = (k..n)
                .map(|r| (r, a[r * n + k].abs()))
                .fold((k, S::zero()), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
            if best <= tiny {
                return None;
            }
            if piv != k {
                for c in 0..n {
                    a.swap(k * n + c, piv * n + c);
                }
                perm.swap(k, piv);
            }
            let pivot = a[k * n + k];
            for r in k + 1..n {
                let f = a[r * n + k] / pivot;
                if f == S::zero() {
                    continue;
                }
                a[r * n + k] = f;
                for c in k + 1..n {
                    let v = a[k * n + c];
                    a[r * n + c] -= f * v;
                }
            }
        }
        Some(Self { n, lu: a, perm })
    }

    pub(crate) fn solve(&self, b: &[S]) -> Vec<S> {
        let n = self.n;
        let mut x: Vec<S> = self.perm.iter().map(|&p| b[p]).collect();
        for r in 0..n {
            let mut acc = x[r];
            for c in 0..r {
                acc -= self.lu[r * n + c] * x[c];
            }
            x[r] = acc;
        }
        for r in (0..n).rev() {
            let mut acc = x[r];
            for c in r + 1..n {
                acc -= self.lu[r * n + c] * x[c];
            }
            x[r] = acc / self.lu[r * n + r];
        }
        x
    }
}
