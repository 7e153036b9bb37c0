// Dense kernels over row-major f32 slices. Reductions use eight fixed lanes so
// results are reproducible and the loops vectorize.

#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f32; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f32, x: &[f32], y: &mut [f32]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `out += W x` for `W` of shape `rows x cols`.
pub fn matvec(w: &[f32], cols: usize, x: &[f32], out: &mut [f32]) {
    debug_assert_eq!(x.len(), cols);
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o += dot(row, x);
    }
}

/// `out += W^T g`
pub fn matvec_t(w: &[f32], cols: usize, g: &[f32], out: &mut [f32]) {
    debug_assert_eq!(out.len(), cols);
    for (gi, row) in g.iter().zip(w.chunks_exact(cols)) {
        if *gi != 0.0 {
            axpy(*gi, row, out);
        }
    }
}

/// `gw += g x^T`
pub fn outer_add(gw: &mut [f32], cols: usize, g: &[f32], x: &[f32]) {
    for (gi, row) in g.iter().zip(gw.chunks_exact_mut(cols)) {
        if *gi != 0.0 {
            axpy(*gi, x, row);
        }
    }
}

#[inline]
pub fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

pub fn softmax_in_place(v: &mut [f32]) {
    let max = v.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernels_match_naive() {
        let w: Vec<f32> = (0..30).map(|i| (i as f32 * 0.37).sin()).collect();
        let x: Vec<f32> = (0..10).map(|i| i as f32 * 0.1 - 0.3).collect();
        let mut out = vec![0.0; 3];
        matvec(&w, 10, &x, &mut out);
        for r in 0..3 {
            let naive: f32 = (0..10).map(|c| w[r * 10 + c] * x[c]).sum();
            assert!((out[r] - naive).abs() < 1e-5);
        }
        let g = [0.5, -1.0, 2.0];
        let mut back = vec![0.0; 10];
        matvec_t(&w, 10, &g, &mut back);
        for c in 0..10 {
            let naive: f32 = (0..3).map(|r| w[r * 10 + c] * g[r]).sum();
            assert!((back[c] - naive).abs() < 1e-5);
        }
    }
}
