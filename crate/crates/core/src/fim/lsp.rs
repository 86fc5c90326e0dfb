//! Language Server Protocol client used as a resolver backend: one server
//! process per session, definition requests per reference over stdio.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde_json::{json, Value};
use url::Url;

use super::resolve::{ResolveError, Resolver};
use crate::index::DefSite;
use crate::syntax::NameRef;

/// Writes one framed message.
pub fn write_message(w: &mut dyn Write, msg: &Value) -> std::io::Result<()> {
    let body = serde_json::to_vec(msg)?;
    write!(w, "Content-Length: {}\r\n\r\n", body.len())?;
    w.write_all(&body)?;
    w.flush()
}

/// Reads one framed message; `Ok(None)` on clean end of stream.
pub fn read_message(r: &mut dyn BufRead) -> std::io::Result<Option<Value>> {
    let mut length: Option<usize> = None;
    loop {
        let mut line = String::new();
        if r.read_line(&mut line)? == 0 {
            return Ok(None);
        }
        let line = line.trim_end();
        if line.is_empty() {
            if length.is_some() {
                break;
            }
            continue;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.trim().eq_ignore_ascii_case("content-length") {
                length = v.trim().parse().ok();
            }
        }
    }
    let mut body = vec![0; length.unwrap_or(0)];
    r.read_exact(&mut body)?;
    serde_json::from_slice(&body)
        .map(Some)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

pub struct LspResolver {
    writer: Box<dyn Write + Send>,
    incoming: Receiver<Value>,
    next_id: i64,
    root: PathBuf,
    timeout: Duration,
    sources: Arc<BTreeMap<String, String>>,
    opened: BTreeSet<String>,
    child: Option<Child>,
}

impl LspResolver {
    /// Starts `command` (program plus arguments) with `root` as its working
    /// directory and performs the initialize handshake.
    pub fn spawn(
        command: &[String],
        root: &Path,
        timeout: Duration,
        sources: Arc<BTreeMap<String, String>>,
    ) -> Result<Self, ResolveError> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| ResolveError::Backend("empty language server command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .current_dir(root)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| ResolveError::Backend(format!("cannot start {program}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut session = Self::from_streams(stdout, stdin, root, timeout, sources)?;
        session.child = Some(child);
        Ok(session)
    }

    /// Session over an already connected server.
    pub fn from_streams(
        reader: impl Read + Send + 'static,
        writer: impl Write + Send + 'static,
        root: &Path,
        timeout: Duration,
        sources: Arc<BTreeMap<String, String>>,
    ) -> Result<Self, ResolveError> {
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            let mut r = BufReader::new(reader);
            while let Ok(Some(msg)) = read_message(&mut r) {
                if tx.send(msg).is_err() {
                    break;
                }
            }
        });
        let root = root.canonicalize().unwrap_or_else(|_| root.to_path_buf());
        let mut s = Self {
            writer: Box::new(writer),
            incoming: rx,
            next_id: 0,
            root,
            timeout,
            sources,
            opened: BTreeSet::new(),
            child: None,
        };
        let root_uri = s.uri(Path::new(""))?;
        s.request(
            "initialize",
            json!({
                "processId": std::process::id(),
                "rootUri": root_uri,
                "capabilities": {},
                "workspaceFolders": [{"uri": root_uri, "name": "root"}],
            }),
            "initialize",
        )?;
        s.notify("initialized", json!({}))?;
        Ok(s)
    }

    fn uri(&self, rel: &Path) -> Result<String, ResolveError> {
        Url::from_file_path(self.root.join(rel))
            .map(String::from)
            .map_err(|_| ResolveError::Backend(format!("cannot form uri for {}", rel.display())))
    }

    fn send(&mut self, msg: &Value) -> Result<(), ResolveError> {
        write_message(&mut *self.writer, msg).map_err(|e| ResolveError::Backend(format!("write: {e}")))
    }

    fn notify(&mut self, method: &str, params: Value) -> Result<(), ResolveError> {
        self.send(&json!({"jsonrpc": "2.0", "method": method, "params": params}))
    }

    /// Answers a server-to-client request with an empty result.
    fn answer(&mut self, msg: &Value) -> Result<(), ResolveError> {
        let result = match msg["method"].as_str() {
            Some("workspace/configuration") => {
                let n = msg["params"]["items"].as_array().map_or(0, Vec::len);
                Value::Array(vec![Value::Null; n])
            }
            _ => Value::Null,
        };
        self.send(&json!({"jsonrpc": "2.0", "id": msg["id"], "result": result}))
    }

    fn request(&mut self, method: &str, params: Value, symbol: &str) -> Result<Value, ResolveError> {
        self.next_id += 1;
        let id = self.next_id;
        self.send(&json!({"jsonrpc": "2.0", "id": id, "method": method, "params": params}))?;
        let deadline = Instant::now() + self.timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            let msg = match self.incoming.recv_timeout(left) {
                Ok(m) => m,
                Err(RecvTimeoutError::Timeout) => {
                    return Err(ResolveError::Timeout {
                        symbol: symbol.to_string(),
                    })
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(ResolveError::Backend("language server closed the connection".into()))
                }
            };
            if msg.get("method").is_some() {
                if msg.get("id").is_some() {
                    self.answer(&msg)?;
                }
                continue;
            }
            if msg["id"].as_i64() != Some(id) {
                continue;
            }
            if let Some(err) = msg.get("error") {
                return Err(ResolveError::Backend(format!("{method}: {err}")));
            }
            return Ok(msg.get("result").cloned().unwrap_or(Value::Null));
        }
    }

    fn open(&mut self, path: &str) -> Result<(), ResolveError> {
        if self.opened.contains(path) {
            return Ok(());
        }
        let text = match self.sources.get(path) {
            Some(t) => t.clone(),
            None => std::fs::read_to_string(self.root.join(path)).unwrap_or_default(),
        };
        let uri = self.uri(Path::new(path))?;
        let language = crate::syntax::language_of(path).unwrap_or("plaintext");
        self.notify(
            "textDocument/didOpen",
            json!({"textDocument": {"uri": uri, "languageId": language, "version": 1, "text": text}}),
        )?;
        self.opened.insert(path.to_string());
        Ok(())
    }

    fn to_site(&self, location: &Value) -> Option<DefSite> {
        let (uri, range) = match location.get("targetUri") {
            Some(u) => (u, location.get("targetSelectionRange").or(location.get("targetRange"))),
            None => (location.get("uri")?, location.get("range")),
        };
        let line = range
            .and_then(|r| r["start"]["line"].as_u64())
            .unwrap_or(0) as usize;
        let file = Url::parse(uri.as_str()?).ok()?.to_file_path().ok()?;
        let file = file.canonicalize().unwrap_or(file);
        Some(match file.strip_prefix(&self.root) {
            Ok(rel) => DefSite {
                path: rel.to_string_lossy().replace('\\', "/"),
                line,
                in_repo: true,
            },
            Err(_) => DefSite {
                path: file.to_string_lossy().into_owned(),
                line,
                in_repo: false,
            },
        })
    }
}

impl Resolver for LspResolver {
    fn resolve(&mut self, path: &str, reference: &NameRef) -> Result<Option<DefSite>, ResolveError> {
        self.open(path)?;
        let uri = self.uri(Path::new(path))?;
        let result = self.request(
            "textDocument/definition",
            json!({
                "textDocument": {"uri": uri},
                "position": {"line": reference.line, "character": reference.col},
            }),
            &reference.symbol(),
        )?;
        let first = match &result {
            Value::Array(items) => items.first(),
            Value::Null => None,
            other => Some(other),
        };
        Ok(first.and_then(|l| self.to_site(l)))
    }
}

impl Drop for LspResolver {
    fn drop(&mut self) {
        let timeout = self.timeout;
        self.timeout = timeout.min(Duration::from_secs(2));
        let _ = self.request("shutdown", Value::Null, "shutdown");
        let _ = self.notify("exit", Value::Null);
        if let Some(mut child) = self.child.take() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Minimal scripted server: answers initialize and shutdown, resolves
    /// definition requests by line number from `table`, and never answers
    /// requests on line 99.
    fn mock_server(
        reader: impl Read + Send + 'static,
        mut writer: impl Write + Send + 'static,
        table: BTreeMap<u64, Value>,
    ) -> std::thread::JoinHandle<Vec<String>> {
        std::thread::spawn(move || {
            let mut r = BufReader::new(reader);
            let mut methods = Vec::new();
            let mut asked_config = false;
            while let Ok(Some(msg)) = read_message(&mut r) {
                let Some(method) = msg["method"].as_str().map(str::to_string) else {
                    continue;
                };
                methods.push(method.clone());
                let reply = |w: &mut dyn Write, result: Value| {
                    write_message(w, &json!({"jsonrpc": "2.0", "id": msg["id"], "result": result})).unwrap()
                };
                match method.as_str() {
                    "initialize" => reply(&mut writer, json!({"capabilities": {"definitionProvider": true}})),
                    "textDocument/definition" => {
                        if !asked_config {
                            asked_config = true;
                            write_message(
                                &mut writer,
                                &json!({"jsonrpc": "2.0", "id": "cfg", "method": "workspace/configuration", "params": {"items": [{}]}}),
                            )
                            .unwrap();
                            let answer = read_message(&mut r).unwrap().unwrap();
                            assert_eq!(answer["id"], "cfg");
                            assert_eq!(answer["result"], json!([null]));
                        }
                        let line = msg["params"]["position"]["line"].as_u64().unwrap();
                        if line != 99 {
                            reply(&mut writer, table.get(&line).cloned().unwrap_or(Value::Null));
                        }
                    }
                    "shutdown" => reply(&mut writer, Value::Null),
                    "exit" => break,
                    _ => {}
                }
            }
            methods
        })
    }

    fn name_at(line: usize) -> NameRef {
        NameRef {
            name: "f".into(),
            qualifier: None,
            byte: 0,
            line,
            col: 4,
            scope: None,
        }
    }

    #[test]
    fn definitions_over_pipes() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().canonicalize().unwrap();
        let uri = |rel: &str| String::from(Url::from_file_path(root.join(rel)).unwrap());
        let table = BTreeMap::from([
            (1, json!({"uri": uri("pkg/helpers.py"), "range": {"start": {"line": 7, "character": 4}, "end": {"line": 7, "character": 9}}})),
            (2, json!([{"targetUri": uri("app.py"), "targetRange": {"start": {"line": 3, "character": 0}, "end": {"line": 5, "character": 0}}, "targetSelectionRange": {"start": {"line": 3, "character": 4}, "end": {"line": 3, "character": 5}}}])),
            (3, json!([{"uri": "file:///usr/lib/python3/json/__init__.py", "range": {"start": {"line": 0, "character": 0}, "end": {"line": 0, "character": 0}}}])),
            (4, json!([])),
        ]);
        let (server_in, client_out) = std::io::pipe().unwrap();
        let (client_in, server_out) = std::io::pipe().unwrap();
        let server = mock_server(server_in, server_out, table);
        let sources = Arc::new(BTreeMap::from([("app.py".to_string(), "x = 1\n".to_string())]));
        let mut lsp = LspResolver::from_streams(client_in, client_out, &root, Duration::from_secs(5), sources).unwrap();

        let site = lsp.resolve("app.py", &name_at(1)).unwrap().unwrap();
        assert_eq!(site, DefSite { path: "pkg/helpers.py".into(), line: 7, in_repo: true });
        let site = lsp.resolve("app.py", &name_at(2)).unwrap().unwrap();
        assert_eq!(site, DefSite { path: "app.py".into(), line: 3, in_repo: true });
        let site = lsp.resolve("app.py", &name_at(3)).unwrap().unwrap();
        assert!(!site.in_repo);
        assert_eq!(lsp.resolve("app.py", &name_at(4)).unwrap(), None);
        assert_eq!(lsp.resolve("app.py", &name_at(5)).unwrap(), None);
        drop(lsp);
        let methods = server.join().unwrap();
        assert_eq!(methods[..3], ["initialize", "initialized", "textDocument/didOpen"]);
        assert_eq!(methods.iter().filter(|m| *m == "textDocument/didOpen").count(), 1);
        assert_eq!(methods.last().unwrap(), "exit");
    }

    #[test]
    fn unanswered_request_times_out() {
        let dir = tempfile::tempdir().unwrap();
        let (server_in, client_out) = std::io::pipe().unwrap();
        let (client_in, server_out) = std::io::pipe().unwrap();
        let _server = mock_server(server_in, server_out, BTreeMap::new());
        let mut lsp = LspResolver::from_streams(
            client_in,
            client_out,
            dir.path(),
            Duration::from_millis(200),
            Arc::new(BTreeMap::new()),
        )
        .unwrap();
        let err = lsp.resolve("a.py", &name_at(99)).unwrap_err();
        assert_eq!(err, ResolveError::Timeout { symbol: "f".into() });
        // the session stays usable after a timeout
        assert_eq!(lsp.resolve("a.py", &name_at(1)).unwrap(), None);
    }

    #[test]
    fn missing_server_is_a_backend_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = LspResolver::spawn(
            &["/nonexistent/language-server".to_string()],
            dir.path(),
            Duration::from_secs(1),
            Arc::new(BTreeMap::new()),
        )
        .err()
        .unwrap();
        assert!(matches!(err, ResolveError::Backend(_)));
    }
}
