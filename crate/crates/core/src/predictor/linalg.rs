//! Safe wrappers over `matrixmultiply::dgemm` for the three products a dense layer needs.

/// `c[n×out] = a[n×in] · wᵀ + bias`, with `w` stored `out×in` row-major.
pub fn affine(a: &[f64], w: &[f64], bias: &[f64], n: usize, in_dim: usize, out_dim: usize, c: &mut [f64]) {
    assert_eq!(a.len(), n * in_dim);
    assert_eq!(w.len(), out_dim * in_dim);
    assert_eq!(c.len(), n * out_dim);
    assert_eq!(bias.len(), out_dim);
    for row in c.chunks_exact_mut(out_dim) {
        row.copy_from_slice(bias);
    }
    if n == 0 || in_dim == 0 || out_dim == 0 {
        return;
    }
    // SAFETY: dimensions and strides are checked against the slice lengths above.
    unsafe {
        matrixmultiply::dgemm(
            n,
            in_dim,
            out_dim,
            1.0,
            a.as_ptr(),
            in_dim as isize,
            1,
            w.as_ptr(),
            1,
            in_dim as isize,
            1.0,
            c.as_mut_ptr(),
            out_dim as isize,
            1,
        );
    }
}

/// `gw[out×in] += dzᵀ · a` for `dz[n×out]`, `a[n×in]`.
pub fn accumulate_weight_grad(dz: &[f64], a: &[f64], n: usize, in_dim: usize, out_dim: usize, gw: &mut [f64]) {
    assert_eq!(dz.len(), n * out_dim);
    assert_eq!(a.len(), n * in_dim);
    assert_eq!(gw.len(), out_dim * in_dim);
    if n == 0 || in_dim == 0 || out_dim == 0 {
        return;
    }
    // SAFETY: as above.
    unsafe {
        matrixmultiply::dgemm(
            out_dim,
            n,
            in_dim,
            1.0,
            dz.as_ptr(),
            1,
            out_dim as isize,
            a.as_ptr(),
            in_dim as isize,
            1,
            1.0,
            gw.as_mut_ptr(),
            in_dim as isize,
            1,
        );
    }
}

/// `da[n×in] = dz[n×out] · w[out×in]`.
pub fn input_grad(dz: &[f64], w: &[f64], n: usize, in_dim: usize, out_dim: usize, da: &mut [f64]) {
    assert_eq!(dz.len(), n * out_dim);
    assert_eq!(w.len(), out_dim * in_dim);
    assert_eq!(da.len(), n * in_dim);
    da.fill(0.0);
    if n == 0 || in_dim == 0 || out_dim == 0 {
        return;
    }
    // SAFETY: as above.
    unsafe {
        matrixmultiply::dgemm(
            n,
            out_dim,
            in_dim,
            1.0,
            dz.as_ptr(),
            out_dim as isize,
            1,
            w.as_ptr(),
            in_dim as isize,
            1,
            0.0,
            da.as_mut_ptr(),
            in_dim as isize,
            1,
        );
    }
}
