//! Output files and the run manifest carried by each of them.
//!
//! Numbers are written in Rust's shortest round-trip decimal form, so every
//! CSV/JSON value parses back to the identical `f64`. Absent values are
//! empty CSV cells and JSON `null`.

use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::Serialize;

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Svg,
}

/// Provenance of one run. Output paths are relative to the output
/// directory and wall-clock time is reported on stderr only, so identical
/// inputs give identical bytes.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_path: String,
    pub config_sha256: String,
    pub master_seed: u64,
    pub outputs: Vec<String>,
}

impl RunManifest {
    fn header_lines(&self) -> Vec<String> {
        vec![
            format!("{} run manifest", self.tool),
            format!("version: {}", self.version),
            format!("command: {}", self.command),
            format!("config: {}", self.config_path),
            format!("config_sha256: {}", self.config_sha256),
            format!("master_seed: {}", self.master_seed),
            format!("outputs: {}", self.outputs.join(" ")),
        ]
    }

    /// `# `-prefixed header for CSV and text files.
    pub fn comment_block(&self) -> String {
        self.header_lines().iter().map(|l| format!("# {l}\n")).collect()
    }

    /// XML comment for SVG files.
    pub fn xml_comment(&self) -> String {
        let body: String = self.header_lines().iter().map(|l| format!("  {l}\n")).collect();
        format!("<!--\n{}-->\n", body.replace("--", "- -"))
    }
}

/// Shortest round-trip decimal (`NaN`/`inf` spelled out).
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn cell(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Collects files for one command and writes them with manifest headers.
pub struct Outputs {
    dir: PathBuf,
    formats: Vec<Format>,
    files: Vec<(String, Body)>,
}

enum Body {
    Commented(String),
    Json(serde_json::Value),
    Svg(String),
}

impl Outputs {
    pub fn new(dir: PathBuf, formats: &[Format]) -> Self {
        let mut formats = formats.to_vec();
        formats.sort();
        formats.dedup();
        Outputs {
            dir,
            formats,
            files: Vec::new(),
        }
    }

    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) {
        if !self.wants(Format::Csv) {
            return;
        }
        let mut s = header.join(",");
        s.push('\n');
        for r in rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        self.files.push((name.to_string(), Body::Commented(s)));
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        if self.wants(Format::Json) {
            let v = serde_json::to_value(value)
                .map_err(|e| CliError::Config(format!("cannot serialize {name}: {e}")))?;
            self.files.push((name.to_string(), Body::Json(v)));
        }
        Ok(())
    }

    pub fn svg(&mut self, name: &str, svg: String) {
        if self.wants(Format::Svg) {
            self.files.push((name.to_string(), Body::Svg(svg)));
        }
    }

    /// Written regardless of `--format`.
    pub fn text(&mut self, name: &str, text: String) {
        self.files.push((name.to_string(), Body::Commented(text)));
    }

    /// Writes every file; returns their paths.
    pub fn finish(self, mut manifest: RunManifest) -> Result<Vec<PathBuf>, CliError> {
        fs::create_dir_all(&self.dir)?;
        manifest.outputs = self.files.iter().map(|(n, _)| n.clone()).collect();
        let mut written = Vec::new();
        for (name, body) in self.files {
            let bytes = match body {
                Body::Commented(s) => format!("{}{s}", manifest.comment_block()),
                Body::Svg(s) => match s.split_once('\n') {
                    Some((decl, rest)) => format!("{decl}\n{}{rest}", manifest.xml_comment()),
                    None => format!("{}{s}", manifest.xml_comment()),
                },
                Body::Json(v) => {
                    let doc = serde_json::json!({ "manifest": &manifest, "result": v });
                    let mut s = serde_json::to_string_pretty(&doc).expect("json serializes");
                    s.push('\n');
                    s
                }
            };
            let path = self.dir.join(&name);
            fs::write(&path, bytes)?;
            written.push(path);
        }
        Ok(written)
    }
}

/// Output directory: `SHIFTFUNC_OUT` if set, else `--out`, else `./shiftfunc-out`.
pub fn resolve_out_dir(flag: Option<&Path>) -> PathBuf {
    match std::env::var_os("SHIFTFUNC_OUT") {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => flag
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("shiftfunc-out")),
    }
}
