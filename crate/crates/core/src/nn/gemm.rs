/// `C = A·B + beta·C` for an `m×k` by `k×n` product with explicit row/column
/// strides (in elements). Bounds of every operand are checked before the
/// unsafe call.
#[allow(clippy::too_many_arguments)]
pub(crate) fn sgemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    rsa: usize,
    csa: usize,
    b: &[f32],
    rsb: usize,
    csb: usize,
    beta: f32,
    c: &mut [f32],
    rsc: usize,
    csc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    let extent = |rows: usize, cols: usize, rs: usize, cs: usize| {
        if rows == 0 || cols == 0 {
            0
        } else {
            (rows - 1) * rs + (cols - 1) * cs + 1
        }
    };
    assert!(extent(m, k, rsa, csa) <= a.len(), "sgemm: A out of bounds");
    assert!(extent(k, n, rsb, csb) <= b.len(), "sgemm: B out of bounds");
    assert!(extent(m, n, rsc, csc) <= c.len(), "sgemm: C out of bounds");
    if k == 0 {
        c.iter_mut().take(extent(m, n, rsc, csc)).for_each(|x| *x *= beta);
        return;
    }
    // SAFETY: extents checked above; C does not alias A or B (distinct borrows).
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}
