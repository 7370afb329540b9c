fn main() {
    // System OpenBLAS bundles the LAPACK symbols ndarray-linalg binds against.
    println!("cargo:rustc-link-lib=dylib=openblas");
}
