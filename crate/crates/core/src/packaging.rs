//! Encrypted dataset bundles.
//!
//! Layout (integers little-endian):
//!
//! | bytes | field                                |
//! |-------|--------------------------------------|
//! | 8     | magic `SQLCBNDL`                     |
//! | 2     | format version (1)                   |
//! | 4     | Argon2id memory cost (KiB)           |
//! | 4     | Argon2id iterations                  |
//! | 4     | Argon2id lanes                       |
//! | 16    | salt                                 |
//! | 12    | nonce                                |
//! | rest  | ChaCha20-Poly1305 ciphertext and tag |
//!
//! The header is the associated data, so tampering with the KDF parameters
//! fails authentication. The plaintext is a tar archive with sorted entries
//! and zeroed metadata.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Component, Path, PathBuf};

use argon2::{Algorithm, Argon2, Params, Version};
use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, ManifestError};

pub const MAGIC: &[u8; 8] = b"SQLCBNDL";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 8 + 2 + 12 + SALT_LEN + NONCE_LEN;
const SALT_LEN: usize = 16;
const NONCE_LEN: usize = 12;
const TAG_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum PackError {
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("dataset does not validate: {0}")]
    Validation(#[from] ManifestError),
    #[error("{0} contains no files")]
    EmptyDirectory(String),
    #[error("not a dataset bundle")]
    NotABundle,
    #[error("bundle is truncated")]
    Truncated,
    #[error("bundle format version {found} is not supported (this build reads version {FORMAT_VERSION})")]
    UnsupportedVersion { found: u16 },
    #[error("wrong passphrase or corrupted bundle")]
    Authentication,
    #[error("invalid key derivation parameters: {0}")]
    Kdf(String),
    #[error("archive error: {0}")]
    Archive(String),
    #[error("archive entry `{0}` escapes the output directory")]
    UnsafePath(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PackError + '_ {
    move |source| PackError::Io { path: path.display().to_string(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KdfParams {
    pub memory_kib: u32,
    pub iterations: u32,
    pub lanes: u32,
}

impl Default for KdfParams {
    fn default() -> Self {
        KdfParams { memory_kib: 19 * 1024, iterations: 2, lanes: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BundleHeader {
    pub version: u16,
    pub kdf: KdfParams,
    pub salt: [u8; SALT_LEN],
    pub nonce: [u8; NONCE_LEN],
}

impl BundleHeader {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.extend_from_slice(&self.kdf.memory_kib.to_le_bytes());
        out.extend_from_slice(&self.kdf.iterations.to_le_bytes());
        out.extend_from_slice(&self.kdf.lanes.to_le_bytes());
        out.extend_from_slice(&self.salt);
        out.extend_from_slice(&self.nonce);
        out
    }

    /// Parses the plaintext header without touching the payload.
    pub fn parse(bundle: &[u8]) -> Result<BundleHeader, PackError> {
        if bundle.len() < MAGIC.len() {
            return Err(if MAGIC.starts_with(bundle) { PackError::Truncated } else { PackError::NotABundle });
        }
        if &bundle[..8] != MAGIC {
            return Err(PackError::NotABundle);
        }
        if bundle.len() < 10 {
            return Err(PackError::Truncated);
        }
        let version = u16::from_le_bytes([bundle[8], bundle[9]]);
        if version != FORMAT_VERSION {
            return Err(PackError::UnsupportedVersion { found: version });
        }
        if bundle.len() < HEADER_LEN + TAG_LEN {
            return Err(PackError::Truncated);
        }
        let u32_at = |i: usize| u32::from_le_bytes(bundle[i..i + 4].try_into().expect("4 bytes"));
        Ok(BundleHeader {
            version,
            kdf: KdfParams { memory_kib: u32_at(10), iterations: u32_at(14), lanes: u32_at(18) },
            salt: bundle[22..22 + SALT_LEN].try_into().expect("salt"),
            nonce: bundle[22 + SALT_LEN..HEADER_LEN].try_into().expect("nonce"),
        })
    }
}

fn derive_key(passphrase: &str, header: &BundleHeader) -> Result<[u8; 32], PackError> {
    let params = Params::new(header.kdf.memory_kib, header.kdf.iterations, header.kdf.lanes, Some(32))
        .map_err(|e| PackError::Kdf(e.to_string()))?;
    let mut key = [0u8; 32];
    Argon2::new(Algorithm::Argon2id, Version::V0x13, params)
        .hash_password_into(passphrase.as_bytes(), &header.salt, &mut key)
        .map_err(|e| PackError::Kdf(e.to_string()))?;
    Ok(key)
}

/// Regular files under `dir`, keyed by relative path.
pub fn file_tree(dir: &Path) -> Result<BTreeMap<PathBuf, Vec<u8>>, PackError> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) -> Result<(), PackError> {
        for entry in std::fs::read_dir(dir).map_err(io_err(dir))? {
            let path = entry.map_err(io_err(dir))?.path();
            let meta = std::fs::metadata(&path).map_err(io_err(&path))?;
            if meta.is_dir() {
                walk(root, &path, out)?;
            } else if meta.is_file() {
                let bytes = std::fs::read(&path).map_err(io_err(&path))?;
                out.insert(path.strip_prefix(root).expect("under root").to_path_buf(), bytes);
            }
        }
        Ok(())
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out)?;
    Ok(out)
}

fn archive(files: &BTreeMap<PathBuf, Vec<u8>>) -> Result<Vec<u8>, PackError> {
    let archive_err = |e: std::io::Error| PackError::Archive(e.to_string());
    let mut builder = tar::Builder::new(Vec::new());
    for (path, bytes) in files {
        let mut header = tar::Header::new_ustar();
        header.set_size(bytes.len() as u64);
        header.set_mode(0o644);
        header.set_mtime(0);
        header.set_uid(0);
        header.set_gid(0);
        header.set_entry_type(tar::EntryType::Regular);
        let name = path.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
        builder.append_data(&mut header, name, bytes.as_slice()).map_err(archive_err)?;
    }
    builder.into_inner().map_err(archive_err)
}

fn unarchive(bytes: &[u8]) -> Result<BTreeMap<PathBuf, Vec<u8>>, PackError> {
    let archive_err = |e: std::io::Error| PackError::Archive(e.to_string());
    let mut files = BTreeMap::new();
    let mut archive = tar::Archive::new(bytes);
    for entry in archive.entries().map_err(archive_err)? {
        let mut entry = entry.map_err(archive_err)?;
        if entry.header().entry_type() != tar::EntryType::Regular {
            continue;
        }
        let path = entry.path().map_err(archive_err)?.into_owned();
        if !path.components().all(|c| matches!(c, Component::Normal(_))) {
            return Err(PackError::UnsafePath(path.display().to_string()));
        }
        let mut data = Vec::new();
        entry.read_to_end(&mut data).map_err(archive_err)?;
        files.insert(path, data);
    }
    Ok(files)
}

/// Validates the dataset in `dir` and returns the encrypted bundle bytes.
pub fn pack(dir: &Path, passphrase: &str, kdf: KdfParams) -> Result<Vec<u8>, PackError> {
    let files = file_tree(dir)?;
    if files.is_empty() {
        return Err(PackError::EmptyDirectory(dir.display().to_string()));
    }
    Dataset::load(dir)?;
    let mut rng = rand::rng();
    let header = BundleHeader { version: FORMAT_VERSION, kdf, salt: rng.random(), nonce: rng.random() };
    let key = derive_key(passphrase, &header)?;
    let aad = header.to_bytes();
    let plaintext = archive(&files)?;
    let cipher = ChaCha20Poly1305::new(Key::from_slice(&key));
    let ciphertext = cipher
        .encrypt(Nonce::from_slice(&header.nonce), Payload { msg: &plaintext, aad: &aad })
        .map_err(|_| PackError::Archive("encryption failed".into()))?;
    let mut out = aad;
    out.extend_from_slice(&ciphertext);
    Ok(out)
}

/// Decrypts a bundle in memory and returns its file tree. Nothing is
/// returned unless the whole payload authenticates.
pub fn decrypt_bundle(bundle: &[u8], passphrase: &str) -> Result<BTreeMap<PathBuf, Vec<u8>>, PackError> {
    let header = BundleHeader::parse(bundle)?;
    let key = derive_key(passphrase, &header)?;
    let cipher = ChaCha20Poly1305::new(Key::from_slice(&key));
    let plaintext = cipher
        .decrypt(Nonce::from_slice(&header.nonce), Payload { msg: &bundle[HEADER_LEN..], aad: &bundle[..HEADER_LEN] })
        .map_err(|_| PackError::Authentication)?;
    unarchive(&plaintext)
}

/// Restores a bundle into `out_dir` and validates the restored dataset.
/// Existing files with the same paths are overwritten.
pub fn unpack(bundle: &[u8], passphrase: &str, out_dir: &Path) -> Result<Dataset, PackError> {
    let files = decrypt_bundle(bundle, passphrase)?;
    for (rel, bytes) in &files {
        let path = out_dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        std::fs::write(&path, bytes).map_err(io_err(&path))?;
    }
    Ok(Dataset::load(out_dir)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    const FAST: KdfParams = KdfParams { memory_kib: 64, iterations: 1, lanes: 1 };

    fn dataset(dir: &Path) {
        fs::create_dir_all(dir.join("dumps")).unwrap();
        fs::write(dir.join("dumps/kennel.sql"), "CREATE TABLE breeds (breed_code TEXT PRIMARY KEY, breed_name TEXT);\n").unwrap();
        fs::write(
            dir.join(crate::dataset::MANIFEST_FILE),
            r#"{"name": "t", "dumps": ["dumps/kennel.sql"], "queries": [
                {"question": "q", "gold_sql": "SELECT breed_name FROM breeds", "database": "kennel"}]}"#,
        )
        .unwrap();
    }

    #[test]
    fn roundtrip_restores_identical_tree() {
        let src = tempfile::tempdir().unwrap();
        dataset(src.path());
        let bundle = pack(src.path(), "open sesame", FAST).unwrap();
        let out = tempfile::tempdir().unwrap();
        let ds = unpack(&bundle, "open sesame", out.path()).unwrap();
        assert_eq!(ds.records.len(), 1);
        assert_eq!(file_tree(src.path()).unwrap(), file_tree(out.path()).unwrap());
        unpack(&bundle, "open sesame", out.path()).unwrap();
        assert_eq!(file_tree(src.path()).unwrap(), file_tree(out.path()).unwrap());
        for needle in ["breeds", "breed_name", "kennel", "CREATE"] {
            assert!(!bundle.windows(needle.len()).any(|w| w == needle.as_bytes()), "{needle}");
        }
    }

    #[test]
    fn archive_is_deterministic() {
        let src = tempfile::tempdir().unwrap();
        dataset(src.path());
        let files = file_tree(src.path()).unwrap();
        assert_eq!(archive(&files).unwrap(), archive(&files).unwrap());
        assert_eq!(unarchive(&archive(&files).unwrap()).unwrap(), files);
    }

    #[test]
    fn failures_write_nothing() {
        let src = tempfile::tempdir().unwrap();
        dataset(src.path());
        let bundle = pack(src.path(), "right", FAST).unwrap();
        let out = tempfile::tempdir().unwrap();
        assert!(matches!(unpack(&bundle, "wrong", out.path()), Err(PackError::Authentication)));
        assert!(matches!(unpack(&bundle[..bundle.len() - 1], "right", out.path()), Err(PackError::Authentication)));
        assert!(matches!(unpack(&bundle[..HEADER_LEN], "right", out.path()), Err(PackError::Truncated)));
        assert!(matches!(unpack(&bundle[..5], "right", out.path()), Err(PackError::Truncated)));
        let mut tampered = bundle.clone();
        tampered[14] ^= 1;
        assert!(matches!(unpack(&tampered, "right", out.path()), Err(PackError::Authentication | PackError::Kdf(_))));
        let mut future = bundle.clone();
        future[8] = 9;
        assert!(matches!(unpack(&future, "right", out.path()), Err(PackError::UnsupportedVersion { found: 9 })));
        assert!(matches!(unpack(b"PK\x03\x04 not ours", "right", out.path()), Err(PackError::NotABundle)));
        assert!(file_tree(out.path()).unwrap().is_empty());
    }

    #[test]
    fn pack_rejects_empty_and_invalid_directories() {
        let empty = tempfile::tempdir().unwrap();
        assert!(matches!(pack(empty.path(), "p", FAST), Err(PackError::EmptyDirectory(_))));
        fs::write(empty.path().join("notes.txt"), "hi").unwrap();
        assert!(matches!(pack(empty.path(), "p", FAST), Err(PackError::Validation(_))));
    }

    #[test]
    fn header_roundtrip() {
        let h = BundleHeader { version: FORMAT_VERSION, kdf: FAST, salt: [7; SALT_LEN], nonce: [9; NONCE_LEN] };
        let mut bytes = h.to_bytes();
        assert_eq!(bytes.len(), HEADER_LEN);
        bytes.extend_from_slice(&[0; TAG_LEN]);
        assert_eq!(BundleHeader::parse(&bytes).unwrap(), h);
    }
}
