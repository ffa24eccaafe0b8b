//! Fetching and unpacking raw dataset archives.

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{self, BufReader, Read};
use std::path::{Path, PathBuf};
use std::thread;
use std::time::Duration;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::storage::{create_dir_all, write_atomic};

/// Retry schedule for HTTP downloads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    /// Delay before the second attempt; doubled after each further failure.
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            initial_backoff: Duration::from_secs(1),
        }
    }
}

pub(crate) const CHECKSUM_FILE: &str = ".download.sha256";

pub fn is_remote(url: &str) -> bool {
    url.starts_with("http://") || url.starts_with("https://")
}

fn local_path(url: &str) -> PathBuf {
    PathBuf::from(url.strip_prefix("file://").unwrap_or(url))
}

/// File name for a downloaded URL: its last path segment, sanitized.
pub fn file_name_for_url(url: &str) -> String {
    let path = url.split(['?', '#']).next().unwrap_or(url);
    let last = path.rsplit('/').next().unwrap_or_default();
    let cleaned: String = last
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "._+-".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect();
    if cleaned.is_empty() || cleaned.chars().all(|c| c == '.') {
        "download.bin".to_string()
    } else {
        cleaned
    }
}

/// Fetches `url` into `dest_dir`. Local paths (plain or `file://`) are copied.
pub fn fetch(url: &str, dest_dir: &Path, retry: RetryPolicy) -> Result<()> {
    create_dir_all(dest_dir)?;
    if !is_remote(url) {
        let src = local_path(url);
        let meta = fs::metadata(&src)
            .map_err(|e| Error::Network(format!("local source {}: {e}", src.display())))?;
        if meta.is_dir() {
            return copy_tree(&src, dest_dir);
        }
        let name = src
            .file_name()
            .ok_or_else(|| Error::Network(format!("bad local source {}", src.display())))?;
        let dest = dest_dir.join(name);
        fs::copy(&src, &dest).map_err(|e| Error::io(&dest, e))?;
        return Ok(());
    }

    let dest = dest_dir.join(file_name_for_url(url));
    let agent = ureq::AgentBuilder::new()
        .timeout_connect(Duration::from_secs(30))
        .timeout_read(Duration::from_secs(120))
        .build();
    let mut backoff = retry.initial_backoff;
    let mut last_err = String::new();
    for attempt in 1..=retry.attempts.max(1) {
        match download_once(&agent, url, &dest) {
            Ok(()) => return Ok(()),
            Err(e) => {
                last_err = e;
                log::warn!(
                    "download attempt {attempt}/{} failed: {last_err}",
                    retry.attempts
                );
                if attempt < retry.attempts {
                    thread::sleep(backoff);
                    backoff *= 2;
                }
            }
        }
    }
    Err(Error::Network(format!(
        "{url}: giving up after {} attempts: {last_err}",
        retry.attempts.max(1)
    )))
}

fn download_once(agent: &ureq::Agent, url: &str, dest: &Path) -> std::result::Result<(), String> {
    let response = agent.get(url).call().map_err(|e| e.to_string())?;
    let mut reader = response.into_reader();
    write_atomic(dest, |mut file| {
        io::copy(&mut reader, &mut file)
            .map(|_| ())
            .map_err(|e| Error::io(dest, e))
    })
    .map_err(|e| e.to_string())
}

fn copy_tree(src: &Path, dest: &Path) -> Result<()> {
    create_dir_all(dest)?;
    let mut entries: Vec<_> = fs::read_dir(src)
        .map_err(|e| Error::io(src, e))?
        .collect::<io::Result<_>>()
        .map_err(|e| Error::io(src, e))?;
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let from = entry.path();
        let to = dest.join(entry.file_name());
        if from.is_dir() {
            copy_tree(&from, &to)?;
        } else {
            fs::copy(&from, &to).map_err(|e| Error::io(&to, e))?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ArchiveKind {
    Zip,
    TarGz,
    Tar,
}

fn archive_kind(path: &Path) -> Option<ArchiveKind> {
    let name = path.file_name()?.to_string_lossy().to_ascii_lowercase();
    if name.ends_with(".zip") {
        Some(ArchiveKind::Zip)
    } else if name.ends_with(".tar.gz") || name.ends_with(".tgz") {
        Some(ArchiveKind::TarGz)
    } else if name.ends_with(".tar") {
        Some(ArchiveKind::Tar)
    } else {
        None
    }
}

fn list_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            list_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

/// Extracts every archive under `dir` next to itself, including archives
/// found inside other archives. Returns the archives extracted.
pub fn extract_archives(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut done: HashSet<PathBuf> = HashSet::new();
    let mut order = Vec::new();
    loop {
        let mut files = Vec::new();
        list_files(dir, &mut files)?;
        files.sort();
        let pending: Vec<(PathBuf, ArchiveKind)> = files
            .into_iter()
            .filter(|p| !done.contains(p))
            .filter_map(|p| archive_kind(&p).map(|k| (p, k)))
            .collect();
        if pending.is_empty() {
            return Ok(order);
        }
        for (path, kind) in pending {
            let target = path.parent().unwrap_or(dir).to_path_buf();
            match kind {
                ArchiveKind::Zip => extract_zip(&path, &target)?,
                ArchiveKind::TarGz => {
                    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
                    extract_tar(
                        &path,
                        flate2::read::GzDecoder::new(BufReader::new(file)),
                        &target,
                    )?
                }
                ArchiveKind::Tar => {
                    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
                    extract_tar(&path, BufReader::new(file), &target)?
                }
            }
            done.insert(path.clone());
            order.push(path);
        }
    }
}

fn extract_zip(path: &Path, target: &Path) -> Result<()> {
    let arch_err = |m: String| Error::Archive {
        path: path.to_path_buf(),
        message: m,
    };
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut archive =
        zip::ZipArchive::new(BufReader::new(file)).map_err(|e| arch_err(e.to_string()))?;
    for i in 0..archive.len() {
        let mut entry = archive.by_index(i).map_err(|e| arch_err(e.to_string()))?;
        let Some(rel) = entry.enclosed_name() else {
            return Err(arch_err(format!("unsafe entry path `{}`", entry.name())));
        };
        let out = target.join(rel);
        if entry.is_dir() {
            create_dir_all(&out)?;
            continue;
        }
        if let Some(parent) = out.parent() {
            create_dir_all(parent)?;
        }
        let mut f = File::create(&out).map_err(|e| Error::io(&out, e))?;
        io::copy(&mut entry, &mut f).map_err(|e| arch_err(format!("{}: {e}", out.display())))?;
    }
    Ok(())
}

fn extract_tar<R: Read>(path: &Path, reader: R, target: &Path) -> Result<()> {
    tar::Archive::new(reader)
        .unpack(target)
        .map_err(|e| Error::Archive {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}

/// SHA-256 over all regular files directly in `dir` that are archives, in name order.
pub(crate) fn archive_checksum(dir: &Path) -> Result<Option<String>> {
    let mut archives: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && archive_kind(p).is_some())
        .collect();
    if archives.is_empty() {
        return Ok(None);
    }
    archives.sort();
    let mut hasher = Sha256::new();
    for p in archives {
        let mut f = File::open(&p).map_err(|e| Error::io(&p, e))?;
        io::copy(&mut f, &mut hasher).map_err(|e| Error::io(&p, e))?;
    }
    Ok(Some(format!("{:x}", hasher.finalize())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn make_zip(path: &Path, entries: &[(&str, &[u8])]) {
        let f = File::create(path).unwrap();
        let mut w = zip::ZipWriter::new(f);
        let opts = zip::write::SimpleFileOptions::default()
            .compression_method(zip::CompressionMethod::Deflated);
        for (name, data) in entries {
            w.start_file(*name, opts).unwrap();
            w.write_all(data).unwrap();
        }
        w.finish().unwrap();
    }

    #[test]
    fn url_file_names() {
        assert_eq!(
            file_name_for_url("https://x.org/static/public/240/human+activity.zip"),
            "human+activity.zip"
        );
        assert_eq!(
            file_name_for_url("https://x.org/a/b.tar.gz?dl=1"),
            "b.tar.gz"
        );
        assert_eq!(file_name_for_url("https://x.org/"), "download.bin");
        assert_eq!(
            file_name_for_url("https://x.org/UCI HAR.zip"),
            "UCI_HAR.zip"
        );
    }

    #[test]
    fn local_zip_is_copied_and_extracted_recursively() {
        let src = tempfile::tempdir().unwrap();
        let inner = src.path().join("inner.zip");
        make_zip(&inner, &[("data/deep.txt", b"deep")]);
        let outer = src.path().join("outer.zip");
        let inner_bytes = fs::read(&inner).unwrap();
        make_zip(
            &outer,
            &[("top.txt", b"top"), ("nested/inner.zip", &inner_bytes)],
        );

        let dest = tempfile::tempdir().unwrap();
        fetch(outer.to_str().unwrap(), dest.path(), RetryPolicy::default()).unwrap();
        let extracted = extract_archives(dest.path()).unwrap();
        assert_eq!(extracted.len(), 2);
        assert_eq!(fs::read(dest.path().join("top.txt")).unwrap(), b"top");
        assert_eq!(
            fs::read(dest.path().join("nested/data/deep.txt")).unwrap(),
            b"deep"
        );
        assert!(archive_checksum(dest.path()).unwrap().is_some());
    }

    #[test]
    fn tar_gz_extraction() {
        let src = tempfile::tempdir().unwrap();
        let path = src.path().join("d.tar.gz");
        {
            let gz = flate2::write::GzEncoder::new(
                File::create(&path).unwrap(),
                flate2::Compression::fast(),
            );
            let mut tar = tar::Builder::new(gz);
            let data = b"1,Walking,0,1,2,3;\n";
            let mut header = tar::Header::new_gnu();
            header.set_size(data.len() as u64);
            header.set_mode(0o644);
            header.set_cksum();
            tar.append_data(&mut header, "WISDM_ar_v1.1/raw.txt", &data[..])
                .unwrap();
            tar.into_inner().unwrap().finish().unwrap();
        }
        let dest = tempfile::tempdir().unwrap();
        fetch(
            &format!("file://{}", path.display()),
            dest.path(),
            RetryPolicy::default(),
        )
        .unwrap();
        extract_archives(dest.path()).unwrap();
        assert!(dest.path().join("WISDM_ar_v1.1/raw.txt").is_file());
    }

    #[test]
    fn local_directory_is_copied() {
        let src = tempfile::tempdir().unwrap();
        fs::create_dir_all(src.path().join("a/b")).unwrap();
        fs::write(src.path().join("a/b/c.txt"), "x").unwrap();
        let dest = tempfile::tempdir().unwrap();
        fetch(
            src.path().to_str().unwrap(),
            dest.path(),
            RetryPolicy::default(),
        )
        .unwrap();
        assert_eq!(
            fs::read_to_string(dest.path().join("a/b/c.txt")).unwrap(),
            "x"
        );
    }

    #[test]
    fn missing_local_source_is_a_network_error() {
        let dest = tempfile::tempdir().unwrap();
        let err = fetch(
            "/definitely/not/here.zip",
            dest.path(),
            RetryPolicy::default(),
        )
        .unwrap_err();
        assert!(err.is_network());
    }

    #[test]
    fn unreachable_url_fails_after_retries() {
        let dest = tempfile::tempdir().unwrap();
        let retry = RetryPolicy {
            attempts: 3,
            initial_backoff: Duration::from_millis(10),
        };
        let err = fetch("http://127.0.0.1:9/nothing.zip", dest.path(), retry).unwrap_err();
        assert!(err.is_network());
        assert!(err.to_string().contains("after 3 attempts"), "{err}");
    }
}
