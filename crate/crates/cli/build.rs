fn main() {
    println!(
        "cargo:rustc-env=HRRIS_BUILD_PROFILE={}",
        std::env::var("PROFILE").unwrap_or_default()
    );
    println!(
        "cargo:rustc-env=HRRIS_BUILD_TARGET={}",
        std::env::var("TARGET").unwrap_or_default()
    );
}
