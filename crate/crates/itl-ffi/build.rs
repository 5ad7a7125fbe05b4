use std::env;
use std::path::PathBuf;

fn main() {
    let crate_dir = PathBuf::from(env::var("CARGO_MANIFEST_DIR").unwrap());
    let header = crate_dir.join("include").join("itl.h");

    let config = cbindgen::Config {
        language: cbindgen::Language::C,
        cpp_compat: true,
        include_guard: Some("ITL_FFI_H".into()),
        header: Some(
            "/* C interface for the itl tabular-MDP toolkit. Generated by cbindgen; do not edit. */"
                .into(),
        ),
        // C enum constants live in one flat namespace; prefix them with the
        // type name so `ItlStatus_Ok` cannot collide with caller identifiers.
        enumeration: cbindgen::EnumConfig { prefix_with_name: true, ..Default::default() },
        ..Default::default()
    };

    cbindgen::Builder::new()
        .with_crate(&crate_dir)
        .with_config(config)
        .generate()
        .expect("cbindgen failed to generate the C header")
        .write_to_file(&header);

    println!("cargo:rerun-if-changed=src/lib.rs");
}
