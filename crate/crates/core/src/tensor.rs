//! Dense row-major tensor helpers on flat buffers.

pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

fn split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// Contracts `axis` of `data` with a `rows x shape[axis]` row-major matrix.
pub(crate) fn mode_product(
    data: &[f64],
    shape: &[usize],
    axis: usize,
    mat: &[f64],
    rows: usize,
) -> (Vec<f64>, Vec<usize>) {
    let (outer, n, inner) = split(shape, axis);
    debug_assert_eq!(mat.len(), rows * n);
    debug_assert_eq!(data.len(), outer * n * inner);
    let mut out = vec![0.0; outer * rows * inner];
    if inner == 1 {
        for o in 0..outer {
            let src = &data[o * n..(o + 1) * n];
            let dst = &mut out[o * rows..(o + 1) * rows];
            for (r, d) in dst.iter_mut().enumerate() {
                let row = &mat[r * n..(r + 1) * n];
                *d = row.iter().zip(src).map(|(a, b)| a * b).sum();
            }
        }
    } else {
        for o in 0..outer {
            for r in 0..rows {
                let dst = &mut out[(o * rows + r) * inner..(o * rows + r + 1) * inner];
                for j in 0..n {
                    let m = mat[r * n + j];
                    if m == 0.0 {
                        continue;
                    }
                    let src = &data[(o * n + j) * inner..(o * n + j + 1) * inner];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += m * s;
                    }
                }
            }
        }
    }
    let mut new_shape = shape.to_vec();
    new_shape[axis] = rows;
    (out, new_shape)
}

/// In-place cumulative sum along `axis`.
pub(crate) fn prefix_sum(data: &mut [f64], shape: &[usize], axis: usize) {
    let (outer, n, inner) = split(shape, axis);
    for o in 0..outer {
        for j in 1..n {
            let (head, tail) = data.split_at_mut((o * n + j) * inner);
            let prev = &head[(o * n + j - 1) * inner..];
            for (d, p) in tail[..inner].iter_mut().zip(prev) {
                *d += p;
            }
        }
    }
}

/// Forward differences along `axis`; the axis shrinks by one.
pub(crate) fn difference(data: &[f64], shape: &[usize], axis: usize) -> (Vec<f64>, Vec<usize>) {
    let (outer, n, inner) = split(shape, axis);
    let mut out = Vec::with_capacity(outer * (n - 1) * inner);
    for o in 0..outer {
        for j in 0..n - 1 {
            let a = &data[(o * n + j) * inner..(o * n + j + 1) * inner];
            let b = &data[(o * n + j + 1) * inner..(o * n + j + 2) * inner];
            out.extend(b.iter().zip(a).map(|(b, a)| b - a));
        }
    }
    let mut new_shape = shape.to_vec();
    new_shape[axis] = n - 1;
    (out, new_shape)
}

/// Iterates all multi-indices of `shape` in row-major order.
pub(crate) fn unravel(mut flat: usize, shape: &[usize], out: &mut [usize]) {
    for i in (0..shape.len()).rev() {
        out[i] = flat % shape[i];
        flat /= shape[i];
    }
}
