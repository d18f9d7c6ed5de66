//! MNIST download and verification.

use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use lrlgf_core::tasks::MNIST_FILES;
use lrlgf_core::trace::atomic_write;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const DEFAULT_MIRROR: &str = "https://ossci-datasets.s3.amazonaws.com/mnist";

/// SHA-256 of the uncompressed files, in [`MNIST_FILES`] order.
pub const MNIST_SHA256: [&str; 4] = [
    "ba891046e6505d7aadcbbe25680a0738ad16aec93bde7f9b65e87a2fc25776db",
    "65a50cbbf4e906d70832878ad85ccda5333a97f0f4c3dd2ef09a8a9eef7101c5",
    "0fa7898d509279e482958e8ce81c8e77db3f2f8254e26661ceb7762c4d494ce7",
    "ff7bcfd416de33731a308c3f266cc351222c34898ecbeaf847f06e48f7ec33f2",
];

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn inflate_if_gz(raw: Vec<u8>, name: &str) -> Result<Vec<u8>, CliError> {
    if !raw.starts_with(&[0x1f, 0x8b]) {
        return Ok(raw);
    }
    let mut out = Vec::new();
    GzDecoder::new(&raw[..]).read_to_end(&mut out).map_err(|e| CliError::Runtime(format!("{name}: bad gzip stream: {e}")))?;
    Ok(out)
}

fn fetch_one(source: &str, name: &str) -> Result<Vec<u8>, CliError> {
    let local = Path::new(source);
    if local.is_dir() {
        for candidate in [local.join(name), local.join(format!("{name}.gz"))] {
            if candidate.exists() {
                let raw = fs::read(&candidate).map_err(|e| CliError::Runtime(format!("{}: {e}", candidate.display())))?;
                return inflate_if_gz(raw, name);
            }
        }
        return Err(CliError::Runtime(format!("{name} not found under {source}")));
    }
    let url = format!("{}/{name}.gz", source.trim_end_matches('/'));
    let resp = ureq::get(&url).call().map_err(|e| CliError::Runtime(format!("{url}: {e}")))?;
    let mut raw = Vec::new();
    resp.into_reader().read_to_end(&mut raw).map_err(|e| CliError::Runtime(format!("{url}: {e}")))?;
    inflate_if_gz(raw, name)
}

/// Fetches the four IDX files from `source` (an HTTP mirror or a local
/// directory of plain or gzipped files), checks their digests and writes
/// them uncompressed into `dir`. Files already present and valid are kept.
pub fn fetch_mnist(dir: &Path, source: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    for (name, want) in MNIST_FILES.iter().zip(MNIST_SHA256) {
        let target = dir.join(name);
        if let Ok(existing) = fs::read(&target) {
            if sha256_hex(&existing) == want {
                continue;
            }
        }
        let bytes = fetch_one(source, name)?;
        let got = sha256_hex(&bytes);
        if got != want {
            return Err(CliError::Runtime(format!("{name}: sha256 {got} does not match {want}")));
        }
        atomic_write(&target, &bytes)?;
    }
    Ok(())
}
