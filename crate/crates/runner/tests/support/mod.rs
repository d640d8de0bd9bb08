//! Shared helpers for driving the `udp` binary.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const BIN: &str = env!("CARGO_BIN_EXE_udp");

/// Three well-separated Gaussian-ish blobs in 5-D, labels in the last column.
pub fn write_blobs(path: &Path, per_class: usize, salt: u64) {
    let mut state = 0x9e37_79b9_7f4a_7c15u64 ^ salt;
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let mut text = String::new();
    for i in 0..3 * per_class {
        let c = i % 3;
        let row: Vec<String> = (0..5)
            .map(|j| {
                let centre = if j == c { 4.0 } else { 0.0 };
                (centre + next()).to_string()
            })
            .collect();
        text.push_str(&format!("{},{c}\n", row.join(",")));
    }
    std::fs::write(path, text).unwrap();
}

pub struct Fixture {
    pub dir: tempfile::TempDir,
}

impl Fixture {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        write_blobs(&dir.path().join("train.csv"), 40, 1);
        write_blobs(&dir.path().join("test.csv"), 15, 2);
        Fixture { dir }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn data_args(&self) -> Vec<String> {
        let mut v = vec!["--csv".to_string(), self.path("train.csv").display().to_string()];
        v.extend(["--test-csv".to_string(), self.path("test.csv").display().to_string()]);
        v
    }

    pub fn train_args(&self, out: &str) -> Vec<String> {
        let mut v = self.data_args();
        for (k, val) in [
            ("--n-labeled", "12"),
            ("--n-unlabeled", "90"),
            ("--k", "5"),
            ("--n-far", "20"),
            ("--hidden", "8"),
            ("--iterations", "40"),
            ("--lr", "0.01"),
        ] {
            v.extend([k.to_string(), val.to_string()]);
        }
        v.extend(["--out".to_string(), self.path(out).display().to_string()]);
        v
    }
}

pub fn udp(sub: &str, args: &[String]) -> Output {
    Command::new(BIN)
        .arg(sub)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

pub fn ok(sub: &str, args: &[String]) -> String {
    let o = udp(sub, args);
    assert!(
        o.status.success(),
        "udp {sub} failed:\n{}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

/// Every file under `dir`, keyed by relative path.
pub fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    files
}

pub fn rerun_matches(sub: &str, out: &Path) {
    let before = snapshot(out);
    assert!(before.contains_key(Path::new("config.txt")));
    let config = std::env::temp_dir().join(format!("udp-echo-{}-{sub}.txt", std::process::id()));
    std::fs::copy(out.join("config.txt"), &config).unwrap();
    ok(sub, &["--config".to_string(), config.display().to_string()]);
    std::fs::remove_file(&config).unwrap();
    let after = snapshot(out);
    assert_eq!(before.keys().collect::<Vec<_>>(), after.keys().collect::<Vec<_>>());
    for (name, bytes) in &before {
        assert!(after[name] == *bytes, "{} differs after rerun", name.display());
    }
}

pub fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}
