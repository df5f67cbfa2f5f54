#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn mock_bridge() -> String {
    fixtures().join("mock_bridge.py").display().to_string()
}

fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for e in fs::read_dir(from).unwrap() {
        let p = e.unwrap().path();
        let dest = to.join(p.file_name().unwrap());
        if p.is_dir() {
            copy_dir(&p, &dest);
        } else {
            fs::copy(&p, &dest).unwrap();
        }
    }
}

/// Copies the fixture corpus into `dir` and returns the config path there.
pub fn fixture_copy(dir: &Path) -> PathBuf {
    copy_dir(&fixtures(), dir);
    dir.join("config.toml")
}

/// Replaces the `[embed]` table of a copied config.
pub fn set_embed(config: &Path, table: &str) {
    let text = fs::read_to_string(config).unwrap();
    let start = text.find("[embed]").unwrap();
    let end = start + text[start..].find("\n\n").unwrap();
    let new = format!("{}[embed]\n{table}{}", &text[..start], &text[end..]);
    fs::write(config, new).unwrap();
}
