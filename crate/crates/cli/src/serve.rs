//! Read-only static HTTP service for the bundle and the explorer assets.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Component, Path, PathBuf};

use trajfair::{Error, Result};

pub const DEFAULT_PORT: u16 = 8080;

const INDEX: &str = "<!doctype html><meta charset=\"utf-8\"><title>trajfair</title>\
<p>Assessment bundle: <a href=\"/bundle.json\">bundle.json</a></p>\n";

pub struct Server {
    listener: TcpListener,
    bundle: PathBuf,
    assets: Option<PathBuf>,
}

impl Server {
    /// Binds `127.0.0.1:port`; port `0` picks a free port.
    pub fn bind(bundle: &Path, assets: Option<&Path>, host: &str, port: u16) -> Result<Self> {
        if !bundle.is_file() {
            return Err(Error::InvalidInput(format!("bundle {} does not exist", bundle.display())));
        }
        if let Some(dir) = assets {
            if !dir.is_dir() {
                return Err(Error::InvalidInput(format!("asset directory {} does not exist", dir.display())));
            }
        }
        let listener = TcpListener::bind((host, port))
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("cannot listen on {host}:{port}: {e}"))))?;
        Ok(Self {
            listener,
            bundle: bundle.to_owned(),
            assets: assets.map(Path::to_owned),
        })
    }

    pub fn port(&self) -> u16 {
        self.listener.local_addr().map(|a| a.port()).unwrap_or_default()
    }

    /// Serves connections until the process ends.
    pub fn run(self) -> Result<()> {
        for stream in self.listener.incoming() {
            match stream {
                Ok(stream) => {
                    if let Err(e) = self.handle(stream) {
                        log::warn!("request failed: {e}");
                    }
                }
                Err(e) => log::warn!("connection failed: {e}"),
            }
        }
        Ok(())
    }

    fn resolve(&self, target: &str) -> Option<PathBuf> {
        let path = target.split(['?', '#']).next().unwrap_or("/");
        if path == "/bundle.json" {
            return Some(self.bundle.clone());
        }
        let root = self.assets.as_ref()?;
        let relative = Path::new(path.trim_start_matches('/'));
        if relative.components().any(|c| !matches!(c, Component::Normal(_))) {
            return None;
        }
        let file = if path.ends_with('/') || relative.as_os_str().is_empty() {
            root.join(relative).join("index.html")
        } else {
            root.join(relative)
        };
        file.is_file().then_some(file)
    }

    fn handle(&self, mut stream: TcpStream) -> std::io::Result<()> {
        let mut line = String::new();
        let mut reader = BufReader::new(stream.try_clone()?);
        reader.read_line(&mut line)?;
        // Drain headers.
        let mut header = String::new();
        while reader.read_line(&mut header)? > 2 {
            header.clear();
        }
        let mut parts = line.split_whitespace();
        let (method, target) = (parts.next().unwrap_or(""), parts.next().unwrap_or("/"));
        if method != "GET" && method != "HEAD" {
            return respond(&mut stream, "405 Method Not Allowed", "text/plain", b"read-only\n", method == "HEAD");
        }
        let head = method == "HEAD";
        match self.resolve(target) {
            Some(file) => {
                let body = std::fs::read(&file)?;
                respond(&mut stream, "200 OK", content_type(&file), &body, head)
            }
            None if target == "/" || target == "/index.html" => {
                respond(&mut stream, "200 OK", "text/html; charset=utf-8", INDEX.as_bytes(), head)
            }
            None => respond(&mut stream, "404 Not Found", "text/plain", b"not found\n", head),
        }
    }
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => "application/json",
        Some("html") => "text/html; charset=utf-8",
        Some("js") | Some("mjs") => "text/javascript",
        Some("css") => "text/css",
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        _ => "application/octet-stream",
    }
}

fn respond(stream: &mut TcpStream, status: &str, kind: &str, body: &[u8], head: bool) -> std::io::Result<()> {
    write!(
        stream,
        "HTTP/1.1 {status}\r\nContent-Type: {kind}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        body.len()
    )?;
    if !head {
        stream.write_all(body)?;
    }
    stream.flush()
}
