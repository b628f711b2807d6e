//! Compiles and runs a small C program against the generated header and the
//! static library, proving the ABI from the consumer side.

use std::path::PathBuf;
use std::process::Command;

const C_PROGRAM: &str = r#"
#include <assert.h>
#include <stdio.h>
#include <string.h>
#include "mixpl.h"

int main(void) {
    assert(mixpl_iou(0, 0, 10, 10, 0, 0, 10, 10) == 1.0);
    assert(mixpl_area_class(0, 0, 10, 10) == 0);

    MixplDataset *ds = NULL;
    assert(mixpl_dataset_synthetic(30, 5, 1, &ds) == MixplOk);
    assert(mixpl_dataset_len(ds) == 30);

    MixplDataset *lab = NULL, *unl = NULL;
    assert(mixpl_dataset_split(ds, 0.2, 3, &lab, &unl) == MixplOk);
    assert(mixpl_dataset_len(lab) == 6);
    assert(mixpl_dataset_len(unl) == 24);

    assert(mixpl_dataset_split(ds, 2.0, 3, &lab, &unl) == MixplValidationError);
    assert(strlen(mixpl_last_error()) > 0);

    double teacher[4] = {0, 0, 0, 0};
    double student[4] = {1, 1, 1, 1};
    assert(mixpl_ema_update(teacher, student, 4, 0.5) == MixplOk);
    assert(teacher[0] == 0.5);

    MixplDetection dets[3] = {
        {0, 0, 5, 5, 1, 0.2},
        {0, 0, 5, 5, 1, 0.8},
        {0, 0, 5, 5, 1, 0.9},
    };
    size_t kept = 0;
    assert(mixpl_filter_by_threshold(dets, 3, 0.7, &kept) == MixplOk);
    assert(kept == 2);

    mixpl_dataset_free(ds);
    mixpl_dataset_free(lab);
    mixpl_dataset_free(unl);
    printf("c abi ok\n");
    return 0;
}
"#;

#[test]
fn c_program_links_and_runs() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let include = manifest.join("include");
    assert!(include.join("mixpl.h").exists(), "header not generated");

    // locate the staticlib built for this test run
    let lib_dir = {
        let out = PathBuf::from(std::env::var("CARGO_MANIFEST_DIR").unwrap())
            .parent()
            .unwrap()
            .parent()
            .unwrap()
            .join("target")
            .join(if cfg!(debug_assertions) { "debug" } else { "release" });
        assert!(
            out.join("libmixpl_ffi.a").exists(),
            "staticlib missing at {}",
            out.display()
        );
        out
    };

    let dir = tempfile::tempdir().unwrap();
    let c_path = dir.path().join("check.c");
    let bin_path = dir.path().join("check");
    std::fs::write(&c_path, C_PROGRAM).unwrap();

    let compile = Command::new("cc")
        .arg(&c_path)
        .arg("-I")
        .arg(&include)
        .arg("-L")
        .arg(&lib_dir)
        .arg("-lmixpl_ffi")
        .arg("-lm")
        .arg("-lpthread")
        .arg("-ldl")
        .arg("-o")
        .arg(&bin_path)
        .output()
        .expect("cc available");
    assert!(
        compile.status.success(),
        "compile failed: {}",
        String::from_utf8_lossy(&compile.stderr)
    );

    let run = Command::new(&bin_path).output().expect("binary runs");
    assert!(
        run.status.success(),
        "c program failed: {}",
        String::from_utf8_lossy(&run.stderr)
    );
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "c abi ok");
}
