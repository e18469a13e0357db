//! Serialization: JSON with 17 significant digits, CSV with `#` header
//! comments, and the manifest sidecar written next to every data file.

use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::ser::Formatter;
use serde_json::Value;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "MULTIPHASE_OUT_DIR";
pub const MANIFEST_SCHEMA: &str = "multiphase.manifest/v1";
pub const CSV_DIGITS: usize = 12;

/// Writes every float as `{:.16e}`, i.e. 17 significant digits.
struct SeventeenDigits;

impl Formatter for SeventeenDigits {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

/// Pretty-printed JSON with 17-digit floats and a trailing newline.
pub fn to_json(value: &Value) -> String {
    // Indentation by hand: PrettyFormatter cannot be combined with a custom
    // float format, so serialize compactly and re-indent structure only.
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SeventeenDigits);
    value.serialize(&mut ser).expect("serializing a Value cannot fail");
    let compact = String::from_utf8(buf).expect("serde_json emits UTF-8");
    let mut out = indent_json(&compact);
    out.push('\n');
    out
}

fn indent_json(compact: &str) -> String {
    let mut out = String::with_capacity(compact.len() * 2);
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    let newline = |out: &mut String, depth: usize| {
        out.push('\n');
        for _ in 0..depth {
            out.push_str("  ");
        }
    };
    let chars: Vec<char> = compact.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        if in_string {
            out.push(c);
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
            continue;
        }
        match c {
            '"' => {
                in_string = true;
                out.push(c);
            }
            '{' | '[' => {
                out.push(c);
                let close = if c == '{' { '}' } else { ']' };
                if chars.get(i + 1) != Some(&close) {
                    depth += 1;
                    newline(&mut out, depth);
                }
            }
            '}' | ']' => {
                let open = if c == '}' { '{' } else { '[' };
                if i > 0 && chars[i - 1] != open {
                    depth -= 1;
                    newline(&mut out, depth);
                }
                out.push(c);
            }
            ',' => {
                out.push(c);
                newline(&mut out, depth);
            }
            ':' => out.push_str(": "),
            _ => out.push(c),
        }
    }
    out
}

/// Number formatting for CSV cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CsvPrecision {
    pub full: bool,
}

impl CsvPrecision {
    pub fn fmt(self, x: f64) -> String {
        if !x.is_finite() {
            return x.to_string();
        }
        if self.full {
            // Shortest representation that round-trips.
            return format!("{x:?}");
        }
        if x == 0.0 {
            return "0".into();
        }
        let rounded: f64 = format!("{:.*e}", CSV_DIGITS - 1, x).parse().expect("formatted float parses");
        let a = rounded.abs();
        if !(1e-4..1e15).contains(&a) {
            format!("{rounded:e}")
        } else {
            format!("{rounded}")
        }
    }
}

/// CSV text: `# schema: …`, further `# ` comments, then header and rows.
pub fn csv_document(schema: &str, comments: &[String], header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = format!("# schema: {schema}\n");
    for c in comments {
        out.push_str("# ");
        out.push_str(c);
        out.push('\n');
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    out.push_str(&String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv emits UTF-8"));
    out
}

/// One data file produced by a command.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputFile {
    pub name: String,
    pub contents: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub command: String,
    /// Arguments that regenerate the data file, without output-location
    /// flags.
    pub argv: Vec<String>,
    pub parameters: serde_json::Map<String, Value>,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub timestamp: String,
    pub output: String,
}

impl RunManifest {
    pub fn new(command: &str, argv: &[String], seed: Option<u64>, output: &str) -> Self {
        RunManifest {
            schema: MANIFEST_SCHEMA.into(),
            command: command.into(),
            argv: argv.to_vec(),
            parameters: parameters_from_argv(argv),
            seed,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            timestamp: chrono::Utc::now().to_rfc3339(),
            output: output.into(),
        }
    }

    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// `--key value` pairs as a JSON object; bare flags map to `true`.
pub fn parameters_from_argv(argv: &[String]) -> serde_json::Map<String, Value> {
    let mut map = serde_json::Map::new();
    let mut i = 0;
    while i < argv.len() {
        let a = &argv[i];
        if let Some(key) = a.strip_prefix("--") {
            if let Some((k, v)) = key.split_once('=') {
                map.insert(k.into(), Value::String(v.into()));
                i += 1;
            } else if i + 1 < argv.len() && !argv[i + 1].starts_with("--") {
                map.insert(key.into(), Value::String(argv[i + 1].clone()));
                i += 2;
            } else {
                map.insert(key.into(), Value::Bool(true));
                i += 1;
            }
        } else {
            i += 1;
        }
    }
    map
}

/// Sidecar path for a data file: `name.ext` → `name.ext.manifest.json`.
pub fn manifest_path(data: &Path) -> PathBuf {
    let mut s = data.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Writes each file and its manifest into `dir`; returns the data paths.
pub fn write_outputs(
    dir: &Path,
    files: &[OutputFile],
    command: &str,
    argv: &[String],
    seed: Option<u64>,
) -> anyhow::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::with_capacity(files.len());
    for f in files {
        let path = dir.join(&f.name);
        std::fs::write(&path, &f.contents)?;
        let manifest = RunManifest::new(command, argv, seed, &f.name);
        std::fs::write(manifest_path(&path), serde_json::to_string_pretty(&manifest)? + "\n")?;
        written.push(path);
    }
    Ok(written)
}
