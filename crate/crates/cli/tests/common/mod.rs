//! Fixture files and a runner for the `coco-forge` binary.
#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Output;

use coco_core::fixtures::{planted_bias_set, planted_capability_set, planted_model, transfer_set, PlantedFixture};
use coco_core::model::save_model;

pub const SEED: u64 = 42;

pub struct Files {
    pub dir: tempfile::TempDir,
    pub fixture: PlantedFixture,
}

impl Files {
    /// Planted model, bias set, capability set and two-category transfer set.
    pub fn planted() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let fixture = planted_model(SEED).unwrap();
        save_model(&fixture.weights, dir.path().join("model")).unwrap();
        planted_bias_set(SEED).save(dir.path().join("bias.jsonl")).unwrap();
        planted_capability_set(SEED).save(dir.path().join("mc.jsonl")).unwrap();
        transfer_set(SEED).save(dir.path().join("transfer.jsonl")).unwrap();
        Self { dir, fixture }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    pub fn model(&self) -> String {
        self.path("model").display().to_string()
    }

    pub fn bias(&self) -> String {
        self.path("bias.jsonl").display().to_string()
    }

    pub fn capability(&self) -> String {
        self.path("mc.jsonl").display().to_string()
    }
}

pub fn run(args: &[&str]) -> Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_coco-forge"))
        .args(args)
        .env_remove("COCO_FORGE_OUT")
        .output()
        .expect("binary runs")
}

pub fn ok(args: &[&str]) -> Output {
    let o = run(args);
    assert!(
        o.status.success(),
        "coco-forge {args:?} failed ({:?}): {}",
        o.status.code(),
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

pub fn json(path: impl AsRef<Path>) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Every file under `dir` with its contents, sorted by relative path.
pub fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, acc: &mut Vec<(String, Vec<u8>)>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, acc);
            } else {
                let rel = p.strip_prefix(root).unwrap().display().to_string();
                acc.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    let mut acc = Vec::new();
    walk(dir, dir, &mut acc);
    acc.sort();
    acc
}
