use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;
use std::time::Instant;

use anyhow::Context;
use sha2::{Digest, Sha256};

pub fn sha256_file(path: &Path) -> io::Result<String> {
    let mut f = fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Run record: command, settings, config echo, file digests, version and
/// wall time, one tab-separated `key value...` entry per line.
pub struct Manifest {
    lines: Vec<String>,
    start: Instant,
}

impl Manifest {
    pub fn new(command: &str) -> Manifest {
        Manifest {
            lines: vec![
                format!("command\t{command}"),
                format!("version\t{}", env!("CARGO_PKG_VERSION")),
            ],
            start: Instant::now(),
        }
    }

    pub fn entry(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        self.lines.push(format!("{key}\t{value}"));
        self
    }

    /// Echoes every `key = value` pair of a config file.
    pub fn config(&mut self, pairs: &[(String, String)]) -> &mut Self {
        for (k, v) in pairs {
            self.lines.push(format!("config\t{k} = {v}"));
        }
        self
    }

    pub fn input(&mut self, path: &Path) -> anyhow::Result<&mut Self> {
        let digest = sha256_file(path).with_context(|| format!("reading {}", path.display()))?;
        self.lines.push(format!("input\t{}\t{digest}", path.display()));
        Ok(self)
    }

    pub fn output(&mut self, path: &Path) -> anyhow::Result<&mut Self> {
        let digest = sha256_file(path).with_context(|| format!("reading {}", path.display()))?;
        self.lines.push(format!("output\t{}\t{digest}", path.display()));
        Ok(self)
    }

    /// Writes `manifest.txt` into `dir`, closing with the wall time.
    pub fn write(&mut self, dir: &Path) -> anyhow::Result<()> {
        let path = dir.join("manifest.txt");
        let mut f = io::BufWriter::new(
            fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?,
        );
        for l in &self.lines {
            writeln!(f, "{l}")?;
        }
        writeln!(f, "wall_seconds\t{:.3}", self.start.elapsed().as_secs_f64())?;
        f.flush()?;
        Ok(())
    }
}
