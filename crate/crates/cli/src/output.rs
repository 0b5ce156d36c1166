use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

/// Files are staged in a private directory and moved into place only once
/// every output has been written, so a failed command leaves nothing behind.
pub struct Staging {
    out: PathBuf,
    tmp: PathBuf,
    files: Vec<String>,
}

impl Staging {
    pub fn new(out: &Path) -> Result<Self> {
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        let tmp = out.join(format!(".memkit-staging-{}", std::process::id()));
        if tmp.exists() {
            fs::remove_dir_all(&tmp)?;
        }
        fs::create_dir(&tmp)?;
        Ok(Staging { out: out.to_path_buf(), tmp, files: Vec::new() })
    }

    pub fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.tmp.join(name)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let p = self.path(name);
        let text = serde_json::to_string_pretty(value)?;
        fs::write(&p, text + "\n").with_context(|| format!("writing {name}"))
    }

    pub fn csv(&mut self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<()> {
        let p = self.path(name);
        let mut body = header.join(",");
        body.push('\n');
        for r in rows {
            body.push_str(&r.join(","));
            body.push('\n');
        }
        fs::write(&p, body).with_context(|| format!("writing {name}"))
    }

    /// Move every staged file into the output directory.
    pub fn commit(self) -> Result<Vec<PathBuf>> {
        let mut done = Vec::with_capacity(self.files.len());
        for f in &self.files {
            let dest = self.out.join(f);
            fs::rename(self.tmp.join(f), &dest).with_context(|| format!("moving {f} into place"))?;
            done.push(dest);
        }
        fs::remove_dir_all(&self.tmp).ok();
        Ok(done)
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if self.tmp.exists() {
            fs::remove_dir_all(&self.tmp).ok();
        }
    }
}

pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}
