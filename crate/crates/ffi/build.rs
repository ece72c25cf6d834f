use std::path::PathBuf;

fn main() {
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
    let dir = PathBuf::from(std::env::var("CARGO_MANIFEST_DIR").expect("set by cargo"));
    match cbindgen::generate(&dir) {
        // only rewrites the header when it changed
        Ok(bindings) => {
            bindings.write_to_file(dir.join("include").join("lgvi.h"));
        }
        Err(e) => println!("cargo:warning=include/lgvi.h not regenerated: {e}"),
    }
}
