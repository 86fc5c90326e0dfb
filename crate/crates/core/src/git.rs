//! Thin adapter over the system `git` executable.
//!
//! Every read goes through an explicit commit so results never depend on the
//! state of the working tree or the index.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GitError {
    #[error("failed to spawn git: {0}")]
    Spawn(#[from] std::io::Error),
    #[error("git {args} failed ({status}): {stderr}")]
    Failed {
        args: String,
        status: String,
        stderr: String,
    },
    #[error("unexpected git output: {0}")]
    Output(String),
}

#[derive(Clone, Debug)]
pub struct Git {
    root: PathBuf,
}

impl Git {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn command(&self) -> Command {
        let mut cmd = Command::new("git");
        cmd.arg("-C")
            .arg(&self.root)
            .args(["-c", "core.quotepath=off"])
            .env("GIT_TERMINAL_PROMPT", "0")
            .stdin(Stdio::null());
        cmd
    }

    pub fn run<S: AsRef<str>>(&self, args: &[S]) -> Result<Vec<u8>, GitError> {
        let mut cmd = self.command();
        for a in args {
            cmd.arg(a.as_ref());
        }
        let out = cmd.output()?;
        if !out.status.success() {
            return Err(GitError::Failed {
                args: args.iter().map(|a| a.as_ref()).collect::<Vec<_>>().join(" "),
                status: out.status.to_string(),
                stderr: String::from_utf8_lossy(&out.stderr).trim().to_string(),
            });
        }
        Ok(out.stdout)
    }

    pub fn run_text<S: AsRef<str>>(&self, args: &[S]) -> Result<String, GitError> {
        let bytes = self.run(args)?;
        String::from_utf8(bytes).map_err(|e| GitError::Output(e.to_string()))
    }

    pub fn is_repository(&self) -> bool {
        self.run(&["rev-parse", "--git-dir"]).is_ok()
    }

    /// Resolves `rev` to a full commit id.
    pub fn resolve_commit(&self, rev: &str) -> Result<String, GitError> {
        let spec = format!("{rev}^{{commit}}");
        let out = self.run_text(&["rev-parse", "--verify", "--quiet", spec.as_str()])?;
        let id = out.trim().to_string();
        if id.len() != 40 || !id.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(GitError::Output(format!("not a commit id: {id}")));
        }
        Ok(id)
    }

    /// Committer timestamp (UTC seconds).
    pub fn commit_time(&self, commit: &str) -> Result<i64, GitError> {
        let out = self.run_text(&["show", "-s", "--format=%ct", commit])?;
        out.trim()
            .parse()
            .map_err(|_| GitError::Output(format!("bad timestamp: {out}")))
    }

    /// Repository-relative paths of every blob in `commit`, sorted.
    pub fn list_files(&self, commit: &str) -> Result<Vec<String>, GitError> {
        let out = self.run(&["ls-tree", "-r", "-z", "--full-tree", commit])?;
        let mut files = Vec::new();
        for entry in out.split(|b| *b == 0).filter(|e| !e.is_empty()) {
            let entry = String::from_utf8_lossy(entry);
            let Some((meta, path)) = entry.split_once('\t') else {
                return Err(GitError::Output(entry.into_owned()));
            };
            // skip submodules and symlinks
            if meta.starts_with("100") {
                files.push(path.to_string());
            }
        }
        files.sort();
        Ok(files)
    }

    /// Reads blobs `commit:path` in one `cat-file --batch` session. Missing
    /// paths are absent from the result.
    pub fn read_blobs(
        &self,
        commit: &str,
        paths: &[String],
    ) -> Result<BTreeMap<String, Vec<u8>>, GitError> {
        let mut result = BTreeMap::new();
        if paths.is_empty() {
            return Ok(result);
        }
        let mut child = self
            .command()
            .args(["cat-file", "--batch"])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()?;
        let mut stdin = child.stdin.take().expect("piped stdin");
        let request: String = paths.iter().map(|p| format!("{commit}:{p}\n")).collect();
        let writer = std::thread::spawn(move || {
            let _ = stdin.write_all(request.as_bytes());
        });
        let mut reader = BufReader::new(child.stdout.take().expect("piped stdout"));
        for path in paths {
            let mut header = String::new();
            reader.read_line(&mut header)?;
            let header = header.trim_end();
            if header.ends_with(" missing") || header.ends_with(" ambiguous") {
                continue;
            }
            let mut parts = header.split(' ');
            let kind = parts.nth(1).unwrap_or_default();
            let size: usize = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| GitError::Output(format!("bad cat-file header: {header}")))?;
            let mut buf = vec![0u8; size + 1];
            reader.read_exact(&mut buf)?;
            buf.pop();
            if kind == "blob" {
                result.insert(path.clone(), buf);
            }
        }
        let _ = writer.join();
        child.wait()?;
        Ok(result)
    }

    /// Unified diff between two commits, no rename detection.
    pub fn diff(&self, from: &str, to: &str, context: usize) -> Result<String, GitError> {
        let unified = format!("-U{context}");
        let out = self.run(&[
            "diff",
            "--no-color",
            "--no-ext-diff",
            "--no-renames",
            "--src-prefix=a/",
            "--dst-prefix=b/",
            unified.as_str(),
            from,
            to,
        ])?;
        Ok(String::from_utf8_lossy(&out).into_owned())
    }

    /// Commits (first-parent, newest first) that touched lines `start..=end`
    /// of `path` as it exists at `head`.
    pub fn line_history(
        &self,
        head: &str,
        path: &str,
        start: usize,
        end: usize,
    ) -> Result<Vec<String>, GitError> {
        let range = format!("-L{start},{end}:{path}");
        let out = self.run_text(&[
            "log",
            "--first-parent",
            "--no-patch",
            "--format=%H",
            range.as_str(),
            head,
        ])?;
        Ok(out
            .lines()
            .map(str::trim)
            .filter(|l| l.len() == 40)
            .map(str::to_string)
            .collect())
    }

    /// Writes the tree of `commit` into `dest` (created if needed).
    pub fn export_tree(&self, commit: &str, dest: &Path) -> Result<(), GitError> {
        std::fs::create_dir_all(dest)?;
        let archive = self.run(&["archive", "--format=tar", commit])?;
        let mut tar = Command::new("tar")
            .arg("-x")
            .arg("-C")
            .arg(dest)
            .stdin(Stdio::piped())
            .stdout(Stdio::null())
            .stderr(Stdio::piped())
            .spawn()?;
        let mut stdin = tar.stdin.take().expect("piped stdin");
        let feeder = std::thread::spawn(move || stdin.write_all(&archive));
        let out = tar.wait_with_output()?;
        feeder
            .join()
            .map_err(|_| GitError::Output("tar feeder panicked".into()))??;
        if !out.status.success() {
            return Err(GitError::Failed {
                args: "archive | tar -x".into(),
                status: out.status.to_string(),
                stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
            });
        }
        Ok(())
    }
}
