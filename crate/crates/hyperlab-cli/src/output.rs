//! CSV tables, metadata sidecars, golden comparison and SVG line plots.

use serde::Serialize;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

/// Shortest decimal that parses back to the same `f64`. Plain notation in a
/// moderate range, exponent notation outside it.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let a = v.abs();
    if a == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub const OK: &str = "ok";

/// A table whose last column is `status`.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    /// File stem, e.g. `masses` for `masses.csv`.
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        let mut header: Vec<String> = columns.iter().map(|c| c.to_string()).collect();
        header.push("status".into());
        Self { name: name.into(), header, rows: Vec::new() }
    }

    pub fn push(&mut self, values: &[f64], status: &str) {
        let mut row: Vec<String> = values.iter().map(|v| fmt_f64(*v)).collect();
        row.push(status.into());
        self.push_raw(row);
    }

    /// Row with some text cells; `cells` excludes the status.
    pub fn push_cells(&mut self, cells: Vec<String>, status: &str) {
        let mut row = cells;
        row.push(status.into());
        self.push_raw(row);
    }

    /// A failed row: every numeric cell `NaN`, the error as status.
    pub fn push_failure(&mut self, known: &[f64], status: &str) {
        let mut v = known.to_vec();
        v.resize(self.header.len() - 1, f64::NAN);
        self.push(&v, status);
    }

    fn push_raw(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width for {}", self.name);
        self.rows.push(row);
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.last().map(String::as_str) != Some(OK)).count()
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }

    pub fn to_csv(&self) -> io::Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| e.into_error())
    }
}

/// Contents of the `.meta.json` sidecar. No timestamps, so reruns are
/// byte-identical.
#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub config_sha256: String,
    pub tolerances: Tolerances,
    pub columns: Vec<String>,
    pub rows: usize,
    pub failed_rows: usize,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Tolerances {
    pub ode_rel_tol: f64,
    pub ode_abs_tol: f64,
    pub ode_max_step: f64,
    pub level_root_tol: f64,
    pub kg_cfl: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Write `<name>.csv` and `<name>.meta.json` into `dir`.
pub fn write_table(dir: &Path, t: &Table, subcommand: &str, config_sha256: &str, tol: Tolerances) -> io::Result<PathBuf> {
    let path = dir.join(t.file_name());
    fs::write(&path, t.to_csv()?)?;
    let meta = Meta {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        subcommand: subcommand.into(),
        config_sha256: config_sha256.into(),
        tolerances: tol,
        columns: t.header.clone(),
        rows: t.rows.len(),
        failed_rows: t.failures(),
    };
    let mut json = serde_json::to_string_pretty(&meta).map_err(io::Error::other)?;
    json.push('\n');
    fs::write(dir.join(format!("{}.meta.json", t.name)), json)?;
    Ok(path)
}

/// One disagreement between an output and its golden file.
#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    pub file: String,
    pub detail: String,
}

fn read_csv(path: &Path) -> Result<Vec<Vec<String>>, String> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path).map_err(|e| e.to_string())?;
    r.records()
        .map(|rec| rec.map(|x| x.iter().map(str::to_string).collect()).map_err(|e| e.to_string()))
        .collect()
}

fn cells_agree(a: &str, b: &str, rtol: f64) -> bool {
    if a == b {
        return true;
    }
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => (x - y).abs() <= rtol * x.abs().max(y.abs()),
        _ => false,
    }
}

/// Compare `output` with `golden` cell by cell: text must match exactly,
/// numbers to relative tolerance `rtol`. Reports at most the first mismatch.
pub fn compare_csv(output: &Path, golden: &Path, rtol: f64) -> Option<Mismatch> {
    let file = output.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    let fail = |detail: String| Some(Mismatch { file: file.clone(), detail });
    let (a, b) = match (read_csv(output), read_csv(golden)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) => return fail(format!("cannot read output: {e}")),
        (_, Err(e)) => return fail(format!("cannot read golden {}: {e}", golden.display())),
    };
    if a.len() != b.len() {
        return fail(format!("{} rows, golden has {}", a.len(), b.len()));
    }
    let header = a.first().cloned().unwrap_or_default();
    for (i, (ra, rb)) in a.iter().zip(&b).enumerate() {
        if ra.len() != rb.len() {
            return fail(format!("line {}: {} cells, golden has {}", i + 1, ra.len(), rb.len()));
        }
        for (j, (ca, cb)) in ra.iter().zip(rb).enumerate() {
            if !cells_agree(ca, cb, rtol) {
                let col = header.get(j).map(String::as_str).unwrap_or("?");
                return fail(format!("line {}, column {col}: {ca} vs golden {cb}", i + 1));
            }
        }
    }
    None
}

/// Golden comparison for a set of written files. `golden` is either a
/// directory holding files of the same names or a single CSV, which is then
/// compared with the output of the same name.
pub fn golden_check(written: &[PathBuf], golden: &Path, rtol: f64) -> Vec<Mismatch> {
    let mut out = Vec::new();
    if golden.is_dir() {
        for w in written {
            if let Some(name) = w.file_name() {
                let g = golden.join(name);
                if g.exists() {
                    out.extend(compare_csv(w, &g, rtol));
                }
            }
        }
        return out;
    }
    let name = golden.file_name();
    match written.iter().find(|w| w.file_name() == name) {
        Some(w) => out.extend(compare_csv(w, golden, rtol)),
        None => out.push(Mismatch {
            file: golden.display().to_string(),
            detail: "no output of this name was produced".into(),
        }),
    }
    out
}

/// A line plot of `y` columns against `x`, one polyline per series.
#[derive(Debug, Clone)]
pub struct PlotSpec<'a> {
    pub x: &'a str,
    pub y: &'a str,
    /// Column whose value splits the rows into series.
    pub series: Option<&'a str>,
    pub log_y: bool,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Minimal SVG: frame, extreme-value tick labels, axis names, polylines.
/// Rows with non-`ok` status or non-finite values are skipped.
pub fn svg_plot(t: &Table, spec: &PlotSpec) -> Option<String> {
    let (xi, yi) = (t.column(spec.x)?, t.column(spec.y)?);
    let si = spec.series.and_then(|s| t.column(s));
    let st = t.header.len() - 1;
    let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for r in t.rows.iter().filter(|r| r[st] == OK) {
        let (Ok(x), Ok(mut y)) = (r[xi].parse::<f64>(), r[yi].parse::<f64>()) else { continue };
        if spec.log_y {
            y = y.abs().log10();
        }
        if !(x.is_finite() && y.is_finite()) {
            continue;
        }
        let key = si.map(|i| r[i].clone()).unwrap_or_default();
        match series.iter_mut().find(|(k, _)| *k == key) {
            Some((_, pts)) => pts.push((x, y)),
            None => series.push((key, vec![(x, y)])),
        }
    }
    let all = series.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        return None;
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        let d = y0.abs().max(1.0) * 1e-3;
        y0 -= d;
        y1 += d;
    }
    let (w, h, m) = (640.0, 400.0, 60.0);
    let px = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let py = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);
    let ylab = if spec.log_y { format!("log10|{}|", spec.y) } else { spec.y.to_string() };
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, r#"<rect x="{m}" y="{m}" width="{}" height="{}" fill="none" stroke="black"/>"#, w - 2.0 * m, h - 2.0 * m);
    let _ = writeln!(s, r#"<text x="{m}" y="{}">{}</text>"#, h - m + 15.0, fmt_f64(x0));
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, w - m, h - m + 15.0, fmt_f64(x1));
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, m - 4.0, h - m, fmt_f64(y0));
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, m - 4.0, m + 4.0, fmt_f64(y1));
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, w / 2.0, h - 20.0, spec.x);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{ylab}</text>"#, w / 2.0, m - 20.0);
    for (k, (key, pts)) in series.iter().enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#, path.join(" "));
        if let Some(name) = spec.series.filter(|_| !key.is_empty()) {
            let _ = writeln!(s, r#"<text x="{}" y="{}" fill="{colour}">{name} = {key}</text>"#, w - m + 4.0, m + 14.0 * (k as f64 + 1.0));
        }
    }
    s.push_str("</svg>\n");
    Some(s)
}
