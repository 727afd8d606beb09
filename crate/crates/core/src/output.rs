//! File emission: CSV tables, versioned summary JSON, dependency-light SVG
//! plots, and the run manifest written alongside every output set.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::experiment_stats::{EnsembleResult, ExperimentConfig, Histogram, ShiftDistribution};
use crate::trajectory_engine::TracePoint;

pub const SCHEMA_VERSION: u32 = 1;

/// Writes via a temporary sibling then renames, so readers never observe a
/// half-written file.
pub fn write_atomic(path: &Path, content: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, content)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Run provenance, written alongside every output set.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub command: String,
    pub master_seed: u64,
    pub wall_time_s: f64,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, master_seed: u64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            master_seed,
            wall_time_s: 0.0,
            outputs: Vec::new(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        let body = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Serde(e.to_string()))?;
        write_atomic(&path, &body)?;
        Ok(path)
    }
}

pub fn devices_csv(result: &EnsembleResult) -> String {
    let mut s = String::from("device_index,trap_count,total_shift_ueV,mean_fidelity,std_error\n");
    for d in &result.devices {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            d.device_index,
            d.trap_count,
            d.total_static_shift_uev,
            d.mean_fidelity,
            d.fidelity_std_error
        ));
    }
    s
}

pub fn histogram_csv(h: &Histogram) -> String {
    let mut s = String::from("bin_lo,bin_hi,count\n");
    for (k, &c) in h.counts.iter().enumerate() {
        s.push_str(&format!("{},{},{}\n", h.edges[k], h.edges[k + 1], c));
    }
    s
}

pub fn cdf_csv(cumulative: &[[f64; 2]]) -> String {
    let mut s = String::from("value,cumulative_fraction\n");
    for row in cumulative {
        s.push_str(&format!("{},{}\n", row[0], row[1]));
    }
    s
}

pub fn shifts_csv(d: &ShiftDistribution) -> String {
    let mut s = String::from("device_index,trap_count,total_shift_ueV\n");
    for (i, (&c, &sh)) in d.trap_counts.iter().zip(&d.total_shifts_uev).enumerate() {
        s.push_str(&format!("{i},{c},{sh}\n"));
    }
    s
}

pub fn trap_count_histogram_csv(trap_counts: &[usize]) -> String {
    let max = trap_counts.iter().copied().max().unwrap_or(0);
    let mut bins = vec![0usize; max + 1];
    for &c in trap_counts {
        bins[c] += 1;
    }
    let mut s = String::from("trap_count,devices\n");
    for (k, &n) in bins.iter().enumerate() {
        s.push_str(&format!("{k},{n}\n"));
    }
    s
}

/// Overlaid traces, one column per device: t_ns, dev0, dev1, ...
/// All traces must share the same sample grid.
pub fn traces_csv(traces: &[Vec<TracePoint>]) -> Result<String> {
    let first = traces
        .first()
        .ok_or_else(|| Error::InvalidConfig("no traces to write".into()))?;
    if traces.iter().any(|t| t.len() != first.len()) {
        return Err(Error::InvalidConfig("traces have mismatched grids".into()));
    }
    let mut s = String::from("t_ns");
    for k in 0..traces.len() {
        s.push_str(&format!(",dev{k}"));
    }
    s.push('\n');
    for (row, pt) in first.iter().enumerate() {
        s.push_str(&format!("{}", pt.t_ns));
        for t in traces {
            s.push_str(&format!(",{}", t[row].p_plus));
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn levels_csv(rows: &[(f64, [f64; 6])]) -> String {
    let mut s = String::from("epsilon_ueV,e1,e2,e3,e4,e5,e6\n");
    for (eps, w) in rows {
        s.push_str(&format!(
            "{eps},{},{},{},{},{},{}\n",
            w[0], w[1], w[2], w[3], w[4], w[5]
        ));
    }
    s
}

#[derive(Serialize)]
struct SummaryDoc<'a, T: Serialize> {
    schema_version: u32,
    master_seed: u64,
    config: &'a ExperimentConfig,
    result: &'a T,
}

/// Versioned JSON with the full config echoed for reproducibility.
pub fn summary_json<T: Serialize>(config: &ExperimentConfig, result: &T) -> Result<String> {
    serde_json::to_string_pretty(&SummaryDoc {
        schema_version: SCHEMA_VERSION,
        master_seed: config.master_seed,
        config,
        result,
    })
    .map_err(|e| Error::Serde(e.to_string()))
}

// --- minimal SVG plotting -------------------------------------------------

const W: f64 = 640.0;
const H: f64 = 400.0;
const ML: f64 = 60.0; // margins
const MR: f64 = 20.0;
const MT: f64 = 30.0;
const MB: f64 = 50.0;

fn svg_open(title: &str) -> String {
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" ",
            "viewBox=\"0 0 {w} {h}\">\n",
            "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n",
            "<text x=\"{tx}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{title}</text>\n",
            "<rect x=\"{ml}\" y=\"{mt}\" width=\"{pw}\" height=\"{ph}\" ",
            "fill=\"none\" stroke=\"black\"/>\n"
        ),
        w = W,
        h = H,
        tx = W / 2.0,
        title = title,
        ml = ML,
        mt = MT,
        pw = W - ML - MR,
        ph = H - MT - MB,
    )
}

fn x_px(frac: f64) -> f64 {
    ML + frac * (W - ML - MR)
}

fn y_px(frac: f64) -> f64 {
    H - MB - frac * (H - MT - MB)
}

fn axis_labels(x_lo: f64, x_hi: f64, y_hi: f64) -> String {
    format!(
        concat!(
            "<text x=\"{xl}\" y=\"{yb}\" font-size=\"11\" text-anchor=\"middle\">{lo:.4}</text>\n",
            "<text x=\"{xr}\" y=\"{yb}\" font-size=\"11\" text-anchor=\"middle\">{hi:.4}</text>\n",
            "<text x=\"{yx}\" y=\"{yt}\" font-size=\"11\" text-anchor=\"end\">{ymax:.3}</text>\n",
            "<text x=\"{yx}\" y=\"{ybot}\" font-size=\"11\" text-anchor=\"end\">0</text>\n"
        ),
        xl = x_px(0.0),
        xr = x_px(1.0),
        yb = H - MB + 18.0,
        lo = x_lo,
        hi = x_hi,
        yx = ML - 6.0,
        yt = MT + 10.0,
        ybot = H - MB,
        ymax = y_hi,
    )
}

/// Histogram bars with the cumulative curve stepped on a second (0..1) axis.
pub fn svg_histogram_with_cdf(
    h: &Histogram,
    cumulative: &[[f64; 2]],
    title: &str,
) -> String {
    let x_lo = h.edges[0];
    let x_hi = *h.edges.last().unwrap();
    let span = x_hi - x_lo;
    let y_max = h.counts.iter().copied().max().unwrap_or(1).max(1) as f64;
    let mut s = svg_open(title);
    for (k, &c) in h.counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let fx0 = (h.edges[k] - x_lo) / span;
        let fx1 = (h.edges[k + 1] - x_lo) / span;
        let fy = c as f64 / y_max;
        s.push_str(&format!(
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" \
             fill=\"steelblue\" stroke=\"none\"/>\n",
            x_px(fx0),
            y_px(fy),
            (x_px(fx1) - x_px(fx0)).max(0.5),
            y_px(0.0) - y_px(fy),
        ));
    }
    if !cumulative.is_empty() {
        let mut pts = vec![format!("{:.2},{:.2}", x_px(0.0), y_px(0.0))];
        let mut prev = 0.0;
        for row in cumulative {
            let fx = ((row[0] - x_lo) / span).clamp(0.0, 1.0);
            pts.push(format!("{:.2},{:.2}", x_px(fx), y_px(prev)));
            pts.push(format!("{:.2},{:.2}", x_px(fx), y_px(row[1])));
            prev = row[1];
        }
        pts.push(format!("{:.2},{:.2}", x_px(1.0), y_px(prev)));
        s.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"crimson\" stroke-width=\"1.5\"/>\n",
            pts.join(" ")
        ));
    }
    s.push_str(&axis_labels(x_lo, x_hi, y_max));
    s.push_str("</svg>\n");
    s
}

/// Overlaid (x, y) polylines sharing one axis box, y clamped to the data
/// range of all series.
pub fn svg_polylines(series: &[Vec<[f64; 2]>], title: &str) -> String {
    let mut x_lo = f64::INFINITY;
    let mut x_hi = f64::NEG_INFINITY;
    let mut y_lo = f64::INFINITY;
    let mut y_hi = f64::NEG_INFINITY;
    for line in series {
        for p in line {
            x_lo = x_lo.min(p[0]);
            x_hi = x_hi.max(p[0]);
            y_lo = y_lo.min(p[1]);
            y_hi = y_hi.max(p[1]);
        }
    }
    if !x_lo.is_finite() || x_hi == x_lo {
        x_hi = x_lo + 1.0;
    }
    if !y_lo.is_finite() || y_hi == y_lo {
        y_hi = y_lo + 1.0;
    }
    let palette = [
        "steelblue", "crimson", "seagreen", "darkorange", "purple", "teal", "brown", "magenta",
        "olive", "navy",
    ];
    let mut s = svg_open(title);
    for (k, line) in series.iter().enumerate() {
        let pts: Vec<String> = line
            .iter()
            .map(|p| {
                format!(
                    "{:.2},{:.2}",
                    x_px((p[0] - x_lo) / (x_hi - x_lo)),
                    y_px((p[1] - y_lo) / (y_hi - y_lo))
                )
            })
            .collect();
        s.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.2\"/>\n",
            pts.join(" "),
            palette[k % palette.len()]
        ));
    }
    s.push_str(&axis_labels(x_lo, x_hi, y_hi));
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment_stats::{run_experiment, summarize_shifts};

    fn small_result() -> (ExperimentConfig, EnsembleResult) {
        let cfg = ExperimentConfig {
            n_devices: 5,
            n_trajectories: 2,
            ..Default::default()
        };
        let r = run_experiment(&cfg).unwrap();
        (cfg, r)
    }

    #[test]
    fn devices_csv_shape() {
        let (_, r) = small_result();
        let csv = devices_csv(&r);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 6);
        assert!(lines[0].starts_with("device_index,"));
        assert!(lines[1].starts_with("0,"));
    }

    #[test]
    fn histogram_and_cdf_csv_roundtrip() {
        let (_, r) = small_result();
        let h = histogram_csv(&r.histogram);
        assert_eq!(h.lines().count(), r.histogram.counts.len() + 1);
        let c = cdf_csv(&r.cumulative);
        assert_eq!(c.lines().count(), r.cumulative.len() + 1);
    }

    #[test]
    fn summary_json_is_versioned_and_parses() {
        let (cfg, r) = small_result();
        let json = summary_json(&cfg, &r).unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["schema_version"], SCHEMA_VERSION);
        assert_eq!(v["config"]["n_devices"], 5);
        assert!(v["result"]["summary"]["mean"].is_number());
    }

    #[test]
    fn shift_outputs() {
        let cfg = ExperimentConfig {
            n_devices: 30,
            ..Default::default()
        };
        let d = summarize_shifts(&cfg).unwrap();
        let csv = shifts_csv(&d);
        assert_eq!(csv.lines().count(), 31);
        let th = trap_count_histogram_csv(&d.trap_counts);
        let total: usize = th
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(1).unwrap().parse::<usize>().unwrap())
            .sum();
        assert_eq!(total, 30);
    }

    #[test]
    fn traces_csv_grid_checks() {
        let a = vec![
            TracePoint { t_ns: 0.0, p_plus: 1.0 },
            TracePoint { t_ns: 1.0, p_plus: 0.9 },
        ];
        let b = vec![
            TracePoint { t_ns: 0.0, p_plus: 1.0 },
            TracePoint { t_ns: 1.0, p_plus: 0.8 },
        ];
        let csv = traces_csv(&[a.clone(), b]).unwrap();
        assert!(csv.starts_with("t_ns,dev0,dev1\n"));
        assert_eq!(csv.lines().count(), 3);
        assert!(traces_csv(&[]).is_err());
        let short = vec![TracePoint { t_ns: 0.0, p_plus: 1.0 }];
        assert!(traces_csv(&[a, short]).is_err());
    }

    #[test]
    fn svg_outputs_are_wellformed_enough() {
        let (_, r) = small_result();
        let svg = svg_histogram_with_cdf(&r.histogram, &r.cumulative, "fidelity");
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert!(svg.contains("polyline"));
        let lines = svg_polylines(
            &[vec![[0.0, 1.0], [1.0, 0.5]], vec![[0.0, 0.9], [1.0, 0.4]]],
            "traces",
        );
        assert_eq!(lines.matches("<polyline").count(), 2);
    }

    #[test]
    fn atomic_write_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        write_atomic(&p, "a,b\n1,2\n").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "a,b\n1,2\n");
        let mut m = RunManifest::new("run", 7);
        m.outputs.push("x.csv".into());
        let mp = m.write(dir.path()).unwrap();
        let v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(mp).unwrap()).unwrap();
        assert_eq!(v["master_seed"], 7);
        assert_eq!(v["outputs"][0], "x.csv");
    }
}
