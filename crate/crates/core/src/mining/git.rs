//! Thin wrapper over the git command line.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use super::MiningError;

#[derive(Debug, Clone)]
pub struct Repo {
    path: PathBuf,
}

pub(crate) struct RawCommit {
    pub id: String,
    pub parents: Vec<String>,
    pub author: String,
    pub timestamp: i64,
    pub message: String,
}

const FIELD: char = '\u{1f}';
const RECORD: char = '\u{1e}';

impl Repo {
    pub fn open(path: &Path) -> Result<Self, MiningError> {
        if !path.is_dir() {
            return Err(MiningError::RepoNotFound(path.to_path_buf()));
        }
        let repo = Self { path: path.to_path_buf() };
        match repo.git(&["rev-parse", "--git-dir"]) {
            Ok(_) => Ok(repo),
            Err(_) => Err(MiningError::RepoNotFound(path.to_path_buf())),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn git(&self, args: &[&str]) -> Result<Vec<u8>, MiningError> {
        let out = Command::new("git")
            .arg("-C")
            .arg(&self.path)
            .args(args)
            .stdin(Stdio::null())
            .output()
            .map_err(|e| MiningError::Git(format!("failed to run git: {e}")))?;
        if !out.status.success() {
            return Err(MiningError::Git(format!(
                "git {} failed: {}",
                args.join(" "),
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        Ok(out.stdout)
    }

    pub fn has_head(&self) -> bool {
        self.git(&["rev-parse", "--verify", "-q", "HEAD"]).is_ok()
    }

    pub(crate) fn log(&self) -> Result<Vec<RawCommit>, MiningError> {
        if !self.has_head() {
            return Ok(Vec::new());
        }
        let format = "--format=%H%x1f%P%x1f%an%x1f%at%x1f%B%x1e";
        let out = self.git(&["log", "--topo-order", "--reverse", "--no-color", format, "HEAD"])?;
        let text = String::from_utf8_lossy(&out);
        let mut commits = Vec::new();
        for record in text.split(RECORD) {
            let record = record.trim_start_matches('\n');
            if record.is_empty() {
                continue;
            }
            let fields: Vec<&str> = record.splitn(5, FIELD).collect();
            if fields.len() != 5 {
                tracing::warn!(record = %record.chars().take(60).collect::<String>(), "malformed log record");
                continue;
            }
            commits.push(RawCommit {
                id: fields[0].to_string(),
                parents: fields[1].split_whitespace().map(str::to_string).collect(),
                author: fields[2].to_string(),
                timestamp: fields[3].trim().parse().unwrap_or(0),
                message: fields[4].trim_end().to_string(),
            });
        }
        Ok(commits)
    }

    pub fn empty_tree(&self) -> Result<String, MiningError> {
        let out = Command::new("git")
            .arg("-C")
            .arg(&self.path)
            .args(["hash-object", "-t", "tree", "--stdin"])
            .stdin(Stdio::null())
            .output()
            .map_err(|e| MiningError::Git(e.to_string()))?;
        Ok(String::from_utf8_lossy(&out.stdout).trim().to_string())
    }

    /// Paths changed between `base` and `commit`, renames split into
    /// delete + add.
    pub fn changed_paths(&self, base: &str, commit: &str) -> Result<Vec<String>, MiningError> {
        let out = self.git(&["diff", "--name-only", "--no-renames", "-z", base, commit])?;
        let mut paths: Vec<String> =
            out.split(|b| *b == 0).filter(|p| !p.is_empty()).map(|p| String::from_utf8_lossy(p).into_owned()).collect();
        paths.sort();
        Ok(paths)
    }

    /// File contents at `rev`, `None` when the path does not exist there.
    pub fn read_blob(&self, rev: &str, path: &str) -> Result<Option<String>, MiningError> {
        let mut child = Command::new("git")
            .arg("-C")
            .arg(&self.path)
            .args(["cat-file", "--batch"])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| MiningError::Git(e.to_string()))?;
        child
            .stdin
            .take()
            .expect("piped stdin")
            .write_all(format!("{rev}:{path}\n").as_bytes())
            .map_err(|e| MiningError::Git(e.to_string()))?;
        let out = child.wait_with_output().map_err(|e| MiningError::Git(e.to_string()))?;
        let Some(nl) = out.stdout.iter().position(|b| *b == b'\n') else {
            return Err(MiningError::Git(format!("no cat-file output for {rev}:{path}")));
        };
        let header = String::from_utf8_lossy(&out.stdout[..nl]);
        if header.ends_with(" missing") {
            return Ok(None);
        }
        let mut parts = header.split_whitespace();
        let (_, kind, size) = (parts.next(), parts.next(), parts.next());
        if kind != Some("blob") {
            return Ok(None);
        }
        let size: usize = size
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| MiningError::Git(format!("bad cat-file header {header:?}")))?;
        let body = out
            .stdout
            .get(nl + 1..nl + 1 + size)
            .ok_or_else(|| MiningError::Git(format!("truncated blob {rev}:{path}")))?;
        Ok(Some(String::from_utf8_lossy(body).into_owned()))
    }
}
