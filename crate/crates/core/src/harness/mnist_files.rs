//! Verification of the MNIST files an experiment reads.
//!
//! A directory is accepted when both IDX files parse and their SHA-256
//! digests match either a known release (see [`KNOWN_DIGESTS`]) or the
//! directory's own `SHA256SUMS`. A directory without `SHA256SUMS` gets one
//! written on first verification, pinning the files from then on.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{MNIST_IMAGES, MNIST_LABELS};
use crate::domains::parse_idx;
use crate::{Error, Result};

pub const SUMS_FILE: &str = "SHA256SUMS";
pub const FILES: [&str; 2] = [MNIST_IMAGES, MNIST_LABELS];

/// Digests of published file sets: `(release, file, sha256)`.
///
/// `mnist-npm-10k` is the 10,000-digit subset produced by
/// `scripts/mnist_from_npm.py` from the `mnist` npm package.
pub const KNOWN_DIGESTS: [(&str, &str, &str); 2] = [
    (
        "mnist-npm-10k",
        MNIST_IMAGES,
        "68edd122f9dba5ef1238a0ef595ecb5792a26401bbe7f32c6df7471a8cdde908",
    ),
    (
        "mnist-npm-10k",
        MNIST_LABELS,
        "0c85ed9560e584ed1040888c010ff8daee9e3356d80be4ee42883d5e84dd5b14",
    ),
];

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FileStatus {
    /// Digest matches a known release.
    Known,
    /// Digest matches the directory's `SHA256SUMS`.
    Verified,
    /// No `SHA256SUMS` existed; the digest was recorded now.
    Pinned,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileReport {
    pub name: String,
    pub sha256: String,
    pub status: FileStatus,
    /// Release name when the digest is known.
    pub release: Option<String>,
}

fn parse_sums(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| {
            let mut parts = l.split_whitespace();
            Some((parts.next()?.to_string(), parts.next()?.trim_start_matches('*').to_string()))
        })
        .map(|(digest, name)| (name, digest))
        .collect()
}

/// Names of the expected files missing from `dir`.
pub fn missing_files(dir: &Path) -> Vec<&'static str> {
    FILES.iter().copied().filter(|f| !dir.join(f).is_file()).collect()
}

/// Verifies (or pins) the IDX files in `dir`.
pub fn verify_dir(dir: &Path) -> Result<Vec<FileReport>> {
    let missing = missing_files(dir);
    if !missing.is_empty() {
        return Err(Error::io(
            dir.join(missing[0]),
            std::io::Error::new(std::io::ErrorKind::NotFound, "MNIST file not found"),
        ));
    }
    let read = |name: &str| {
        let p = dir.join(name);
        std::fs::read(&p).map_err(|e| Error::io(&p, e))
    };
    let images = read(MNIST_IMAGES)?;
    let labels = read(MNIST_LABELS)?;
    parse_idx(&images, &labels, &dir.join(MNIST_IMAGES), &dir.join(MNIST_LABELS))?;

    let sums_path = dir.join(SUMS_FILE);
    let pinned = match std::fs::read_to_string(&sums_path) {
        Ok(text) => Some(parse_sums(&text)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(Error::io(&sums_path, e)),
    };

    let mut reports = Vec::new();
    for (name, bytes) in [(MNIST_IMAGES, &images), (MNIST_LABELS, &labels)] {
        let digest = sha256_hex(bytes);
        let known = KNOWN_DIGESTS.iter().find(|(_, f, d)| *f == name && *d == digest);
        let status = match (&pinned, known) {
            (Some(sums), _) => match sums.iter().find(|(f, _)| f == name) {
                Some((_, d)) if *d == digest => FileStatus::Verified,
                Some((_, d)) => {
                    return Err(Error::Consistency(format!(
                        "{} has sha256 {digest}, {} records {d}",
                        dir.join(name).display(),
                        sums_path.display()
                    )))
                }
                None if known.is_some() => FileStatus::Known,
                None => {
                    return Err(Error::Consistency(format!(
                        "{} lists no digest for {name}",
                        sums_path.display()
                    )))
                }
            },
            (None, Some(_)) => FileStatus::Known,
            (None, None) => FileStatus::Pinned,
        };
        reports.push(FileReport {
            name: name.to_string(),
            sha256: digest,
            status,
            release: known.map(|(r, _, _)| r.to_string()),
        });
    }
    if pinned.is_none() {
        let text: String = reports.iter().map(|r| format!("{}  {}\n", r.sha256, r.name)).collect();
        std::fs::write(&sums_path, text).map_err(|e| Error::io(&sums_path, e))?;
    }
    Ok(reports)
}

/// Writes a downloaded file into `dir`, gunzipping is the caller's job.
pub fn install(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    if !FILES.contains(&name) {
        return Err(Error::arg(format!("unexpected MNIST file name {name}")));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
}
