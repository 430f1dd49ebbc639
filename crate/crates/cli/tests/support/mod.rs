//! Shared helpers for the CLI and acceptance suites.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use quatkgc_core::test_utils::group_graph;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_quatkgc"))
}

pub fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("spawn quatkgc")
}

pub fn assert_exit(output: &Output, code: i32, context: &str) {
    assert_eq!(
        output.status.code(),
        Some(code),
        "{context}: expected exit {code}, got {:?}\nstdout: {}\nstderr: {}",
        output.status.code(),
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr),
    );
}

pub fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

pub fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

/// Write the fixture graph as benchmark-layout TSV files.
pub fn write_toy_dataset(dir: &Path, groups: usize, per_group: usize, seed: u64) {
    fs::create_dir_all(dir).unwrap();
    let (train, valid, test) = group_graph(groups, per_group, seed);
    for (name, rows) in [("train.txt", &train), ("valid.txt", &valid), ("test.txt", &test)] {
        let mut body = String::new();
        for (h, r, t) in rows {
            body.push_str(&format!("{h}\t{r}\t{t}\n"));
        }
        fs::write(dir.join(name), body).unwrap();
    }
}

/// Locate a benchmark dataset directory: `$QUATKGC_DATA` itself when it holds
/// the split files, else `$QUATKGC_DATA/<name>`.
pub fn find_dataset(name: &str) -> Option<PathBuf> {
    let root = PathBuf::from(std::env::var_os("QUATKGC_DATA")?);
    [root.join(name), root]
        .into_iter()
        .find(|candidate| candidate.join("train.txt").is_file())
}

pub fn dataset_or_skip_message(name: &str) -> PathBuf {
    find_dataset(name).unwrap_or_else(|| {
        panic!(
            "dataset '{name}' not found: set QUATKGC_DATA to a directory containing {name}/train.txt \
             (standard benchmark TSV distribution)"
        )
    })
}
