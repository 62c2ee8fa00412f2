use super::Real;

/// Dot product with eight independent accumulators so the loop vectorizes.
#[inline]
pub(crate) fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [F::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut s = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for (x, y) in ra.iter().zip(rb) {
        s += *x * *y;
    }
    s
}

/// `y += alpha * x`
#[inline]
pub(crate) fn axpy<F: Real>(alpha: F, x: &[F], y: &mut [F]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * *xi;
    }
}

/// `out = W x + b` for row-major `W` of `out.len()` rows.
pub(crate) fn affine<F: Real>(w: &[F], b: &[F], x: &[F], out: &mut [F]) {
    let cols = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        *o = b[r] + dot(&w[r * cols..(r + 1) * cols], x);
    }
}

/// Accumulates the gradients of `out = W x + b` given `d_out`:
/// `dW += d_out xᵀ`, `db += d_out`, and `dx += Wᵀ d_out` when requested.
pub(crate) fn affine_backward<F: Real>(
    w: &[F],
    x: &[F],
    d_out: &[F],
    dw: &mut [F],
    db: &mut [F],
    dx: Option<&mut [F]>,
) {
    let cols = x.len();
    for (r, &g) in d_out.iter().enumerate() {
        if g == F::zero() {
            continue;
        }
        axpy(g, x, &mut dw[r * cols..(r + 1) * cols]);
        db[r] += g;
    }
    if let Some(dx) = dx {
        for (r, &g) in d_out.iter().enumerate() {
            if g != F::zero() {
                axpy(g, &w[r * cols..(r + 1) * cols], dx);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f64> = (0..37).map(|i| i as f64 * 0.5 - 3.0).collect();
        let b: Vec<f64> = (0..37).map(|i| (i as f64).sin()).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }
}
