use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::error::CliError;
use crate::experiments::NO_CONTRACTION;
use crate::report::{Manifest, Outputs, REPORT};

/// Rates below this are reported as no mixing.
const RATE_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrichotomyRow {
    pub system: String,
    pub cohomologous: Option<bool>,
    pub a_trend: Option<String>,
    pub xi_hat: Option<f64>,
    pub contraction: Option<String>,
    pub c_hat: Option<f64>,
    pub mixing: Option<String>,
    pub runs: Vec<String>,
}

fn find_runs(dir: &Path, depth: usize, out: &mut Vec<PathBuf>) {
    if Manifest::read(dir).is_some() {
        out.push(dir.to_path_buf());
        return;
    }
    if depth == 0 {
        return;
    }
    let Ok(entries) = fs::read_dir(dir) else { return };
    let mut children: Vec<PathBuf> = entries.filter_map(|e| e.ok()).map(|e| e.path()).filter(|p| p.is_dir()).collect();
    children.sort();
    for c in children {
        find_runs(&c, depth - 1, out);
    }
}

fn read_report(dir: &Path) -> Value {
    fs::read_to_string(dir.join(REPORT)).ok().and_then(|t| serde_json::from_str(&t).ok()).unwrap_or(Value::Null)
}

/// Whitespace-separated copy of a CSV file with a `#` header.
fn to_dat(csv_path: &Path) -> Option<String> {
    let mut reader = csv::Reader::from_path(csv_path).ok()?;
    let mut text = String::new();
    let headers = reader.headers().ok()?.clone();
    let _ = writeln!(text, "# {}", headers.iter().collect::<Vec<_>>().join(" "));
    for rec in reader.records() {
        let rec = rec.ok()?;
        let _ = writeln!(text, "{}", rec.iter().collect::<Vec<_>>().join(" "));
    }
    Some(text)
}

/// Merge finished runs under `dirs` into one trichotomy table.
pub fn bundle(dirs: &[PathBuf], out: &Path) -> Result<Vec<TrichotomyRow>, CliError> {
    let mut runs = Vec::new();
    for d in dirs {
        find_runs(d, 3, &mut runs);
    }
    if runs.is_empty() {
        return Err(CliError::MissingManifest(dirs.to_vec()));
    }
    let mut rows: BTreeMap<String, TrichotomyRow> = BTreeMap::new();
    let mut outputs = Outputs::new(out)?;
    for dir in &runs {
        let manifest = Manifest::read(dir).expect("found above");
        let report = read_report(dir);
        let row =
            rows.entry(manifest.system.clone()).or_insert_with(|| TrichotomyRow { system: manifest.system.clone(), ..Default::default() });
        row.runs.push(dir.display().to_string());
        match manifest.experiment.as_str() {
            "cohomology" => row.cohomologous = report["cohomologous"].as_bool(),
            "transversality" => {
                row.a_trend = report["a_trend"].as_str().map(str::to_string);
                if let Some(dat) = to_dat(&dir.join("ab.csv")) {
                    outputs.write(&format!("ab-{}.dat", manifest.system), dat.as_bytes())?;
                }
            }
            "contraction" => {
                row.cohomologous = report["cohomologous"].as_bool().or(row.cohomologous);
                if manifest.flags.iter().any(|f| f == NO_CONTRACTION) {
                    row.contraction = Some("none".to_string());
                } else {
                    row.xi_hat = report["xi_hat"].as_f64();
                    row.contraction = Some(if row.xi_hat.is_some_and(|x| x > 0.0) { "exponential" } else { "none" }.to_string());
                }
            }
            "correlate" => {
                row.c_hat = report["rate"].as_f64();
                row.mixing = Some(if row.c_hat.is_some_and(|c| c > RATE_FLOOR) { "exponential" } else { "none" }.to_string());
                if let Some(dat) = to_dat(&dir.join("correlation.csv")) {
                    outputs.write(&format!("correlation-{}.dat", manifest.system), dat.as_bytes())?;
                }
            }
            _ => {}
        }
    }
    let rows: Vec<TrichotomyRow> = rows.into_values().collect();
    let mut table = String::from("# system cohomologous a_trend xi_hat contraction c_hat mixing\n");
    let opt = |v: Option<String>| v.unwrap_or_else(|| "-".to_string());
    for r in &rows {
        let _ = writeln!(
            table,
            "{} {} {} {} {} {} {}",
            r.system,
            opt(r.cohomologous.map(|c| if c { "yes" } else { "no" }.to_string())),
            opt(r.a_trend.clone()),
            opt(r.xi_hat.map(|x| x.to_string())),
            opt(r.contraction.clone()),
            opt(r.c_hat.map(|x| x.to_string())),
            opt(r.mixing.clone()),
        );
    }
    outputs.write("trichotomy.dat", table.as_bytes())?;
    outputs.json("summary.json", &serde_json::json!({ "runs": runs.len(), "rows": rows }))?;
    Ok(rows)
}
