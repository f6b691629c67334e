fn main() {
    // Dense Cholesky / eigenvalue kernels in the SDP solver call into the
    // system OpenBLAS (which bundles LAPACK on this platform).
    println!("cargo:rustc-link-lib=dylib=openblas");
    println!("cargo:rerun-if-changed=build.rs");
}
