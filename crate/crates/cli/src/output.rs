//! Report emission: every output carries a manifest (as a leading block of
//! `#` comment lines in CSV, as a `manifest` object in JSON) so a run can
//! be reproduced from its own output. Outputs are byte-identical across
//! reruns of the same config and seed; wall time therefore goes to stderr,
//! never into the files.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::{CliError, OutputFormat, Settings};

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub experiment: &'static str,
    pub seed: u64,
    pub replicas: u64,
    /// How per-replica streams derive from the seed.
    pub stream_id_rule: &'static str,
    pub params: BTreeMap<&'static str, serde_json::Value>,
}

pub fn manifest(settings: &Settings) -> Manifest {
    let mut params: BTreeMap<&'static str, serde_json::Value> = BTreeMap::new();
    fn put_f64(
        params: &mut BTreeMap<&'static str, serde_json::Value>,
        key: &'static str,
        value: f64,
    ) {
        params.insert(key, serde_json::json!(value));
    }
    put_f64(&mut params, "dt", settings.dt);
    put_f64(&mut params, "eps_abs", settings.eps_abs);
    put_f64(&mut params, "horizon", settings.horizon);
    put_f64(&mut params, "kappa", 0.01);
    match settings.experiment {
        "sign-test" | "density-check" | "perpetuity" => {
            put_f64(&mut params, "nu", settings.nu);
        }
        "coupling" => {
            put_f64(&mut params, "nu", settings.nu);
            params.insert("n_particles", serde_json::json!(settings.n_particles));
        }
        "extinct" => {
            params.insert("law", serde_json::json!(settings.law.name()));
            params.insert("scaling", serde_json::json!(settings.scaling));
            params.insert("n_particles", serde_json::json!(settings.n_particles));
            match settings.law {
                crate::Law::Bessel => put_f64(&mut params, "nu", settings.nu),
                crate::Law::Reflected => put_f64(&mut params, "beta", settings.beta),
            }
        }
        "fw-check" => {
            put_f64(&mut params, "a", settings.a);
            put_f64(&mut params, "beta", settings.beta);
            put_f64(&mut params, "gamma", settings.gamma);
            put_f64(&mut params, "delta", settings.delta);
        }
        "constants" => {
            put_f64(&mut params, "a", settings.a);
            put_f64(&mut params, "beta", settings.beta);
            put_f64(&mut params, "gamma", settings.gamma);
            put_f64(&mut params, "epsilon", settings.epsilon);
            params.insert("n_particles", serde_json::json!(settings.n_particles));
        }
        "hitting-law" => {
            put_f64(&mut params, "nu", settings.nu);
            put_f64(&mut params, "start", settings.start);
            params.insert("path_replicas", serde_json::json!(settings.path_replicas));
        }
        _ => {}
    }
    Manifest {
        tool: "fvlab",
        version: env!("CARGO_PKG_VERSION"),
        experiment: settings.experiment,
        seed: settings.seed,
        replicas: settings.replicas,
        stream_id_rule: "replica k uses RngStream::new(seed, k)",
        params,
    }
}

/// CSV body: one header row plus data rows, RFC-4180 style with LF line
/// endings and '.' decimal separators.
#[derive(Debug, Default)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: Vec<&'static str>) -> Self {
        Table {
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

fn manifest_comment_block(manifest: &Manifest) -> String {
    let mut block = String::new();
    block.push_str(&format!("# tool = {}\n", manifest.tool));
    block.push_str(&format!("# version = {}\n", manifest.version));
    block.push_str(&format!("# experiment = {}\n", manifest.experiment));
    block.push_str(&format!("# seed = {}\n", manifest.seed));
    block.push_str(&format!("# replicas = {}\n", manifest.replicas));
    block.push_str(&format!("# stream_id_rule = {}\n", manifest.stream_id_rule));
    for (key, value) in &manifest.params {
        match value.as_str() {
            Some(text) => block.push_str(&format!("# {key} = {text}\n")),
            None => block.push_str(&format!("# {key} = {value}\n")),
        }
    }
    block
}

fn render_csv(manifest: &Manifest, table: &Table) -> String {
    let mut text = manifest_comment_block(manifest);
    text.push_str(&table.header.join(","));
    text.push('\n');
    for row in &table.rows {
        text.push_str(&row.join(","));
        text.push('\n');
    }
    text
}

fn render_json(manifest: &Manifest, results: &serde_json::Value) -> String {
    let report = serde_json::json!({
        "manifest": manifest,
        "results": results,
    });
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    text
}

/// Writes the report to `settings.out` (stdout when unset or "-").
pub fn emit(
    settings: &Settings,
    manifest: &Manifest,
    results: &serde_json::Value,
    table: &Table,
) -> Result<(), CliError> {
    let text = match settings.format {
        OutputFormat::Csv => render_csv(manifest, table),
        OutputFormat::Json => render_json(manifest, results),
    };
    match settings.out.as_deref() {
        None | Some("-") => {
            std::io::stdout().write_all(text.as_bytes())?;
        }
        Some(path) => {
            std::fs::write(path, text)?;
        }
    }
    Ok(())
}

/// Writes one simulated path as CSV (columns time,value) with the manifest
/// header, used by `--dump-paths`.
pub fn dump_path_csv(
    directory: &Path,
    file_name: &str,
    manifest: &Manifest,
    path: &fvlab::paths::Path,
) -> Result<(), CliError> {
    let mut text = manifest_comment_block(manifest);
    text.push_str("time,value\n");
    for (t, v) in path.times.iter().zip(&path.values) {
        text.push_str(&format!("{t},{v}\n"));
    }
    std::fs::write(directory.join(file_name), text)?;
    Ok(())
}

/// Renders an f64 for CSV; empty field for non-finite values (survived
/// replicas have no extinction time).
pub fn csv_f64(value: f64) -> String {
    if value.is_finite() {
        format!("{value}")
    } else {
        String::new()
    }
}

/// JSON value for a possibly missing f64.
pub fn json_f64(value: f64) -> serde_json::Value {
    if value.is_finite() {
        serde_json::json!(value)
    } else {
        serde_json::Value::Null
    }
}
