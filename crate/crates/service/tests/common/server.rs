//! A real `arena serve` process and a small blocking client.

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};

use arena_core::ingest::write_manifest;
use arena_core::Track;
use reqwest::blocking::Client;
use reqwest::header::HeaderMap;
use serde_json::Value;
use tempfile::TempDir;

pub const BIN: &str = env!("CARGO_BIN_EXE_arena");

pub struct Server {
    child: Child,
    pub base: String,
    pub log: PathBuf,
    client: Client,
}

#[derive(Debug)]
pub struct Reply {
    pub status: u16,
    pub headers: HeaderMap,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.body)
            .unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.body)))
    }

    pub fn text(&self) -> String {
        String::from_utf8_lossy(&self.body).into_owned()
    }

    /// Headers and body as one string, for leak scans.
    pub fn everything(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.headers {
            s.push_str(k.as_str());
            s.push(':');
            s.push_str(&String::from_utf8_lossy(v.as_bytes()));
            s.push('\n');
        }
        s + &self.text()
    }
}

impl Server {
    /// Starts on an ephemeral port with the given log and environment, and
    /// waits for the `listening on` line.
    pub fn start(log: &Path, env: &[(&str, &Path)]) -> Server {
        let mut cmd = Command::new(BIN);
        cmd.arg("serve")
            .env_clear()
            .env("ARENA_LOG", log)
            .env("ARENA_BIND", "127.0.0.1:0")
            .env("ARENA_SYNC", "always")
            .stdout(Stdio::piped())
            .stderr(Stdio::null());
        for (k, v) in env {
            cmd.env(k, v);
        }
        let mut child = cmd.spawn().expect("spawn arena serve");
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
        let addr = line
            .trim()
            .strip_prefix("listening on ")
            .unwrap_or_else(|| panic!("unexpected first line {line:?}"))
            .to_string();
        Server { child, base: format!("http://{addr}"), log: log.to_path_buf(), client: Client::new() }
    }

    pub fn client(&self) -> Client {
        self.client.clone()
    }

    pub fn get(&self, path: &str, who: Option<&str>) -> Reply {
        get(&self.client, &self.base, path, who).expect("server reachable")
    }

    pub fn post(&self, path: &str, who: Option<&str>, body: &Value) -> Reply {
        post(&self.client, &self.base, path, who, body).expect("server reachable")
    }

    /// SIGKILL, no shutdown path.
    pub fn kill(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        self.kill();
    }
}

fn reply(r: reqwest::blocking::Response) -> reqwest::Result<Reply> {
    let status = r.status().as_u16();
    let headers = r.headers().clone();
    Ok(Reply { status, headers, body: r.bytes()?.to_vec() })
}

pub fn get(client: &Client, base: &str, path: &str, who: Option<&str>) -> reqwest::Result<Reply> {
    let mut req = client.get(format!("{base}{path}"));
    if let Some(w) = who {
        req = req.header("x-annotator-id", w);
    }
    reply(req.send()?)
}

pub fn post(client: &Client, base: &str, path: &str, who: Option<&str>, body: &Value) -> reqwest::Result<Reply> {
    let mut req = client.post(format!("{base}{path}")).json(body);
    if let Some(w) = who {
        req = req.header("x-annotator-id", w);
    }
    reply(req.send()?)
}

/// Five identical choices keyed by dimension name.
pub fn choices(c: &str) -> Value {
    serde_json::json!({
        "geo_plausibility": c,
        "geo_details": c,
        "tex_quality": c,
        "geo_tex_coherence": c,
        "prompt_alignment": c,
    })
}

/// Writes a catalog and a render tree, and starts a server on them.
pub fn boot(blocks: &[(Track, usize, usize)]) -> (TempDir, Server) {
    let dir = tempfile::tempdir().unwrap();
    let manifest = super::manifest(blocks);
    write_manifest(dir.path().join("catalog.json"), &manifest).unwrap();
    let renders = dir.path().join("renders-root");
    for a in &manifest.assets {
        for r in a.render_refs.values() {
            let p = renders.join(r);
            std::fs::create_dir_all(p.parent().unwrap()).unwrap();
            std::fs::write(p, b"\0\0\0\x18ftypmp42 frame data").unwrap();
        }
    }
    for p in manifest.prompts.iter().filter(|p| p.content_ref.ends_with(".png")) {
        let path = renders.join(&p.content_ref);
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(path, b"\x89PNG image").unwrap();
    }
    let server = Server::start(
        &dir.path().join("events.log"),
        &[("ARENA_CATALOG", &dir.path().join("catalog.json")), ("ARENA_RENDER_ROOT", &renders)],
    );
    (dir, server)
}
