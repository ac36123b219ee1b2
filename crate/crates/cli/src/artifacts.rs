//! Output directory handling: matrices, tables, reports and the manifest.
//!
//! Every CSV artifact starts with one `# key=value, ...` line carrying the
//! seed and the merged settings. Timings and thread counts go only to
//! `manifest.json`, under its `run` key, so all other files are
//! reproducible byte for byte.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use scatterbrain::io::write_matrix_csv;
use scatterbrain::Matrix;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::config::{Emit, Globals};
use crate::error::{CliError, CliResult};

/// Largest `n` for which an `n × n` matrix may be built without
/// `--allow-materialize`.
pub const MATERIALIZE_N: usize = 2048;

pub struct Run {
    dir: PathBuf,
    pub globals: Globals,
    meta: String,
    meta_json: Value,
    settings: Option<Value>,
    outputs: Vec<String>,
    phases: Vec<(String, f64)>,
}

impl Run {
    pub fn new(dir: &Path, globals: Globals) -> Self {
        let meta_json = json!({ "seed": globals.seed });
        Self {
            dir: dir.to_path_buf(),
            meta: format!("# seed={}", globals.seed),
            meta_json,
            settings: None,
            globals,
            outputs: Vec::new(),
            phases: Vec::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.globals.seed
    }

    /// Records the merged settings in every artifact's metadata and the
    /// manifest. A later call replaces the earlier one.
    pub fn set_settings(&mut self, command: &str, settings: &Value) {
        self.settings = Some(settings.clone());
        let mut pairs = vec![
            format!("seed={}", self.globals.seed),
            format!("command={command}"),
        ];
        let mut flat = Vec::new();
        flatten("", settings, &mut flat);
        pairs.extend(flat.into_iter().map(|(k, v)| format!("{k}={v}")));
        if let Some(eps) = self.globals.clamp_normalizer {
            pairs.push(format!("clamp_normalizer={eps}"));
        }
        self.meta = format!("# {}", pairs.join(", "));
        self.meta_json = json!({
            "seed": self.globals.seed,
            "command": command,
            "settings": settings,
            "clamp_normalizer": self.globals.clamp_normalizer,
        });
    }

    /// Fails unless `n ≤ 2048` or `--allow-materialize` was given.
    pub fn check_materialize(&self, n: usize, what: &str) -> CliResult<()> {
        if n > MATERIALIZE_N && !self.globals.allow_materialize {
            return Err(CliError::Usage(format!(
                "{what} would materialize a {n}x{n} matrix; n > {MATERIALIZE_N} needs --allow-materialize"
            )));
        }
        Ok(())
    }

    pub fn timed<R>(&mut self, phase: &str, f: impl FnOnce() -> R) -> R {
        let start = Instant::now();
        let r = f();
        self.phases
            .push((phase.to_string(), start.elapsed().as_secs_f64() * 1e3));
        r
    }

    fn create(&mut self, name: String) -> CliResult<BufWriter<File>> {
        let file = File::create(self.dir.join(&name))?;
        self.outputs.push(name);
        Ok(BufWriter::new(file))
    }

    pub fn write_matrix(&mut self, stem: &str, m: &Matrix) -> CliResult<()> {
        let mut w = self.create(format!("{stem}.csv"))?;
        writeln!(w, "{}", self.meta)?;
        write_matrix_csv(m, &mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Writes a file without a metadata line (binary matrices).
    pub fn write_plain(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut dyn Write) -> CliResult<()>,
    ) -> CliResult<()> {
        let mut w = self.create(name.to_string())?;
        f(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// One record per row, as CSV or as JSON depending on `--emit`.
    pub fn write_table<R: Serialize>(&mut self, stem: &str, rows: &[R]) -> CliResult<()> {
        match self.globals.emit {
            Emit::Csv => {
                let mut w = self.create(format!("{stem}.csv"))?;
                writeln!(w, "{}", self.meta)?;
                let mut csv = csv::WriterBuilder::new()
                    .terminator(csv::Terminator::Any(b'\n'))
                    .from_writer(w);
                for r in rows {
                    csv.serialize(r)?;
                }
                csv.flush()?;
            }
            Emit::Json => {
                let value = json!({ "meta": self.meta_json, "rows": rows });
                self.write_json(&format!("{stem}.json"), &value)?;
            }
        }
        Ok(())
    }

    /// A nested summary: JSON as is, or flattened `key,value` CSV rows.
    pub fn write_report<V: Serialize>(&mut self, stem: &str, report: &V) -> CliResult<()> {
        let value = serde_json::to_value(report)?;
        match self.globals.emit {
            Emit::Json => self.write_json(
                &format!("{stem}.json"),
                &json!({ "meta": self.meta_json, "report": value }),
            ),
            Emit::Csv => {
                let mut rows = Vec::new();
                flatten("", &value, &mut rows);
                #[derive(Serialize)]
                struct Entry {
                    key: String,
                    value: String,
                }
                let rows: Vec<Entry> = rows
                    .into_iter()
                    .map(|(key, value)| Entry { key, value })
                    .collect();
                self.write_table(stem, &rows)
            }
        }
    }

    pub fn write_json<V: Serialize>(&mut self, name: &str, value: &V) -> CliResult<()> {
        let mut w = self.create(name.to_string())?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    /// Writes `manifest.json`. Called for every run that got as far as
    /// creating its output directory, whether it succeeded or not.
    pub fn finish(
        self,
        command: &str,
        config_file: Option<&Path>,
        result: &CliResult<()>,
        started: (SystemTime, Instant),
    ) -> std::io::Result<()> {
        let (status, exit_code, error) = match result {
            Ok(()) => ("ok", 0, None),
            Err(e) => (e.status(), e.exit_code(), Some(e.to_string())),
        };
        let phases: Map<String, Value> = self
            .phases
            .iter()
            .map(|(k, v)| (k.clone(), json!(v)))
            .collect();
        let manifest = json!({
            "tool": env!("CARGO_PKG_NAME"),
            "library": "scatterbrain",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "status": status,
            "exit_code": exit_code,
            "error": error,
            "config_file": config_file.map(|p| p.display().to_string()),
            "seed": self.globals.seed,
            "emit": self.globals.emit,
            "allow_materialize": self.globals.allow_materialize,
            "clamp_normalizer": self.globals.clamp_normalizer,
            "threads_requested": self.globals.threads,
            "settings": self.settings,
            "outputs": self.outputs,
            "run": {
                "threads": rayon::current_num_threads(),
                "started_unix_ms": started.0.duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64),
                "wall_ms": started.1.elapsed().as_secs_f64() * 1e3,
                "phases_ms": phases,
            },
        });
        let mut w = BufWriter::new(File::create(self.dir.join("manifest.json"))?);
        serde_json::to_writer_pretty(&mut w, &manifest)?;
        writeln!(w)?;
        w.flush()
    }
}

/// Dotted keys for nested objects, `;`-joined scalars for arrays, nulls
/// dropped.
fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    let key = |k: &str| {
        if prefix.is_empty() {
            k.to_string()
        } else {
            format!("{prefix}.{k}")
        }
    };
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                flatten(&key(k), x, out);
            }
        }
        Value::Null => {}
        Value::Array(xs) if xs.iter().all(|x| !x.is_object() && !x.is_array()) => {
            let joined: Vec<String> = xs.iter().map(scalar).collect();
            out.push((prefix.to_string(), joined.join(";")));
        }
        Value::Array(xs) => {
            for (i, x) in xs.iter().enumerate() {
                flatten(&key(&i.to_string()), x, out);
            }
        }
        other => out.push((prefix.to_string(), scalar(other))),
    }
}

fn scalar(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}
