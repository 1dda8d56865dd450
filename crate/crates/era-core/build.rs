fn main() {
    println!("cargo:rerun-if-changed=build.rs");
    if std::env::var_os("CARGO_FEATURE_SYSTEM_LAPACK").is_some() {
        // OpenBLAS ships the LAPACK symbols (dgesdd_) in the same library.
        println!("cargo:rustc-link-lib=dylib=openblas");
    }
}
