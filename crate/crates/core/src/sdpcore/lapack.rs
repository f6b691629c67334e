//! Minimal LAPACK/BLAS bindings for the dense kernels of the solver.
//!
//! The interior-point method spends its time in Cholesky factorizations,
//! triangular solves, symmetric eigendecompositions, and matrix products on
//! column-major buffers. `nalgebra`'s `DMatrix` is column-major, so matrices
//! pass through without copies. All wrappers are single-threaded safe and
//! deterministic for fixed inputs.

use nalgebra::DMatrix;

#[allow(clippy::too_many_arguments)]
unsafe extern "C" {
    fn dpotrf_(uplo: *const u8, n: *const i32, a: *mut f64, lda: *const i32, info: *mut i32);
    fn dpotrs_(
        uplo: *const u8,
        n: *const i32,
        nrhs: *const i32,
        a: *const f64,
        lda: *const i32,
        b: *mut f64,
        ldb: *const i32,
        info: *mut i32,
    );
    fn dtrsm_(
        side: *const u8,
        uplo: *const u8,
        transa: *const u8,
        diag: *const u8,
        m: *const i32,
        n: *const i32,
        alpha: *const f64,
        a: *const f64,
        lda: *const i32,
        b: *mut f64,
        ldb: *const i32,
    );
    fn dgemm_(
        transa: *const u8,
        transb: *const u8,
        m: *const i32,
        n: *const i32,
        k: *const i32,
        alpha: *const f64,
        a: *const f64,
        lda: *const i32,
        b: *const f64,
        ldb: *const i32,
        beta: *const f64,
        c: *mut f64,
        ldc: *const i32,
    );
    fn dsyevd_(
        jobz: *const u8,
        uplo: *const u8,
        n: *const i32,
        a: *mut f64,
        lda: *const i32,
        w: *mut f64,
        work: *mut f64,
        lwork: *const i32,
        iwork: *mut i32,
        liwork: *const i32,
        info: *mut i32,
    );
    fn dgesdd_(
        jobz: *const u8,
        m: *const i32,
        n: *const i32,
        a: *mut f64,
        lda: *const i32,
        s: *mut f64,
        u: *mut f64,
        ldu: *const i32,
        vt: *mut f64,
        ldvt: *const i32,
        work: *mut f64,
        lwork: *const i32,
        iwork: *mut i32,
        info: *mut i32,
    );
}

/// A LAPACK routine returned a nonzero `info` code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LapackError {
    /// Routine name.
    pub routine: &'static str,
    /// The `info` value; positive codes signal numerical failure.
    pub info: i32,
}

impl std::fmt::Display for LapackError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} failed with info={}", self.routine, self.info)
    }
}

impl std::error::Error for LapackError {}

fn dim(n: usize) -> i32 {
    i32::try_from(n).expect("matrix dimension fits in i32")
}

/// In-place lower Cholesky factorization; the strict upper triangle is
/// zeroed so the result is a proper lower-triangular factor.
pub fn cholesky_lower(a: &mut DMatrix<f64>) -> Result<(), LapackError> {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let ni = dim(n);
    let mut info = 0i32;
    unsafe {
        dpotrf_(b"L".as_ptr(), &ni, a.as_mut_slice().as_mut_ptr(), &ni, &mut info);
    }
    if info != 0 {
        return Err(LapackError { routine: "dpotrf", info });
    }
    for j in 1..n {
        for i in 0..j {
            a[(i, j)] = 0.0;
        }
    }
    Ok(())
}

/// Solves `A x = b` in place for all columns of `b`, given the lower
/// Cholesky factor of `A` as produced by [`cholesky_lower`].
pub fn cholesky_solve(l: &DMatrix<f64>, b: &mut DMatrix<f64>) -> Result<(), LapackError> {
    let n = l.nrows();
    let ni = dim(n);
    let nrhs = dim(b.ncols());
    debug_assert_eq!(b.nrows(), n);
    let mut info = 0i32;
    unsafe {
        dpotrs_(
            b"L".as_ptr(),
            &ni,
            &nrhs,
            l.as_slice().as_ptr(),
            &ni,
            b.as_mut_slice().as_mut_ptr(),
            &ni,
            &mut info,
        );
    }
    if info != 0 {
        return Err(LapackError { routine: "dpotrs", info });
    }
    Ok(())
}

/// Which side a triangular factor multiplies on in [`trsm`].
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Solve `op(L) X = B`.
    Left,
    /// Solve `X op(L) = B`.
    Right,
}

/// Triangular solve with a lower-triangular factor: overwrites `b` with the
/// solution of `op(l) X = b` or `X op(l) = b`, `op` transposing on request.
pub fn trsm(side: Side, transpose: bool, l: &DMatrix<f64>, b: &mut DMatrix<f64>) {
    let m = dim(b.nrows());
    let n = dim(b.ncols());
    let lda = dim(l.nrows());
    let one = 1.0f64;
    let side_c: &[u8; 1] = match side {
        Side::Left => b"L",
        Side::Right => b"R",
    };
    let trans: &[u8; 1] = if transpose { b"T" } else { b"N" };
    unsafe {
        dtrsm_(
            side_c.as_ptr(),
            b"L".as_ptr(),
            trans.as_ptr(),
            b"N".as_ptr(),
            &m,
            &n,
            &one,
            l.as_slice().as_ptr(),
            &lda,
            b.as_mut_slice().as_mut_ptr(),
            &m,
        );
    }
}

/// Dense product `c = alpha * op(a) op(b) + beta * c`.
pub fn gemm(
    alpha: f64,
    a: &DMatrix<f64>,
    ta: bool,
    b: &DMatrix<f64>,
    tb: bool,
    beta: f64,
    c: &mut DMatrix<f64>,
) {
    let m = dim(c.nrows());
    let n = dim(c.ncols());
    let k = dim(if ta { a.nrows() } else { a.ncols() });
    let lda = dim(a.nrows());
    let ldb = dim(b.nrows());
    let ta_c: &[u8; 1] = if ta { b"T" } else { b"N" };
    let tb_c: &[u8; 1] = if tb { b"T" } else { b"N" };
    unsafe {
        dgemm_(
            ta_c.as_ptr(),
            tb_c.as_ptr(),
            &m,
            &n,
            &k,
            &alpha,
            a.as_slice().as_ptr(),
            &lda,
            b.as_slice().as_ptr(),
            &ldb,
            &beta,
            c.as_mut_slice().as_mut_ptr(),
            &m,
        );
    }
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn sym_eigenvalues(a: &DMatrix<f64>) -> Result<Vec<f64>, LapackError> {
    let mut work = a.clone();
    sym_eig_inplace(&mut work, false).map(|(w, _)| w)
}

/// Full symmetric eigendecomposition: ascending eigenvalues and the matrix
/// of eigenvectors in its columns.
pub fn sym_eigen(a: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>), LapackError> {
    let mut work = a.clone();
    let (w, _) = sym_eig_inplace(&mut work, true)?;
    Ok((w, work))
}

fn sym_eig_inplace(a: &mut DMatrix<f64>, vectors: bool) -> Result<(Vec<f64>, ()), LapackError> {
    let n = a.nrows();
    if n == 0 {
        return Ok((Vec::new(), ()));
    }
    let ni = dim(n);
    let jobz: &[u8; 1] = if vectors { b"V" } else { b"N" };
    let mut w = vec![0.0f64; n];
    let mut info = 0i32;
    // Workspace query.
    let mut wkopt = 0.0f64;
    let mut iwkopt = 0i32;
    let m1 = -1i32;
    unsafe {
        dsyevd_(
            jobz.as_ptr(),
            b"L".as_ptr(),
            &ni,
            a.as_mut_slice().as_mut_ptr(),
            &ni,
            w.as_mut_ptr(),
            &mut wkopt,
            &m1,
            &mut iwkopt,
            &m1,
            &mut info,
        );
    }
    if info != 0 {
        return Err(LapackError { routine: "dsyevd", info });
    }
    let lwork = wkopt as i32;
    let liwork = iwkopt;
    let mut work = vec![0.0f64; lwork as usize];
    let mut iwork = vec![0i32; liwork as usize];
    unsafe {
        dsyevd_(
            jobz.as_ptr(),
            b"L".as_ptr(),
            &ni,
            a.as_mut_slice().as_mut_ptr(),
            &ni,
            w.as_mut_ptr(),
            work.as_mut_ptr(),
            &lwork,
            iwork.as_mut_ptr(),
            &liwork,
            &mut info,
        );
    }
    if info != 0 {
        return Err(LapackError { routine: "dsyevd", info });
    }
    Ok((w, ()))
}

/// Full singular value decomposition `a = U diag(s) V^T`.
///
/// Returns `(u, s, vt)` with `s` in descending order.
pub fn svd(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>), LapackError> {
    let m = a.nrows();
    let n = a.ncols();
    let mi = dim(m);
    let ni = dim(n);
    let mut work_a = a.clone();
    let k = m.min(n);
    let mut s = vec![0.0f64; k];
    let mut u = DMatrix::<f64>::zeros(m, m);
    let mut vt = DMatrix::<f64>::zeros(n, n);
    let mut iwork = vec![0i32; 8 * k];
    let mut info = 0i32;
    let mut wkopt = 0.0f64;
    let m1 = -1i32;
    unsafe {
        dgesdd_(
            b"A".as_ptr(),
            &mi,
            &ni,
            work_a.as_mut_slice().as_mut_ptr(),
            &mi,
            s.as_mut_ptr(),
            u.as_mut_slice().as_mut_ptr(),
            &mi,
            vt.as_mut_slice().as_mut_ptr(),
            &ni,
            &mut wkopt,
            &m1,
            iwork.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(LapackError { routine: "dgesdd", info });
    }
    let lwork = wkopt as i32;
    let mut work = vec![0.0f64; lwork as usize];
    unsafe {
        dgesdd_(
            b"A".as_ptr(),
            &mi,
            &ni,
            work_a.as_mut_slice().as_mut_ptr(),
            &mi,
            s.as_mut_ptr(),
            u.as_mut_slice().as_mut_ptr(),
            &mi,
            vt.as_mut_slice().as_mut_ptr(),
            &ni,
            work.as_mut_ptr(),
            &lwork,
            iwork.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(LapackError { routine: "dgesdd", info });
    }
    Ok((u, s, vt))
}
