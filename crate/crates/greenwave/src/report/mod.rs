//! Post-hoc evaluation artifacts: running-vehicle curves, per-interval
//! emission maps normalized to g/h/km, and the overall baseline-versus-
//! trained comparison table.

use crate::microsim::{EmissionLedger, EpisodeTrace, Pollutant};
use crate::network::NetworkSpec;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("trace is truncated: covers {got} s of a {expected} s episode")]
    TruncatedTrace { expected: f64, got: f64 },
    #[error("intervals overlap: [{0}, {1}) and [{2}, {3})")]
    OverlappingIntervals(f64, f64, f64, f64),
    #[error("interval [{0}, {1}) is not tracked by the ledger")]
    UnknownInterval(f64, f64),
    #[error("ledgers disagree on shape: {0}")]
    LedgerMismatch(String),
    #[error("I/O failure: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Trace(#[from] crate::microsim::TraceError),
    #[error(transparent)]
    Emission(#[from] crate::microsim::EmissionError),
}

/// Per-interval emission breakdown. Normalization is mass divided by
/// interval duration in hours and lane length in kilometers.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalReport {
    pub interval: (f64, f64),
    /// `[lane][pollutant]` in g/h/km (fuel: mL/h/km).
    pub per_lane: Vec<[f64; 6]>,
    /// Raw per-pollutant network mass in this interval, grams.
    pub network_grams: [f64; 6],
    /// Network mass normalized by duration and total lane length.
    pub network_normalized: [f64; 6],
}

/// Overall totals in display units: CO2 kg, CO kg, NOx g, PMx g, HC g,
/// fuel L; plus per-pollutant reduction percentages.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub baseline: [f64; 6],
    pub trained: [f64; 6],
    pub reduction_pct: [f64; 6],
}

/// What one evaluated run leaves behind for reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub trace: EpisodeTrace,
    pub ledger: EmissionLedger,
}

impl RunArtifacts {
    pub const TRACE_FILE: &'static str = "trace.csv";
    pub const LEDGER_FILE: &'static str = "ledger.json";

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), ReportError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        self.trace.write_csv(dir.join(Self::TRACE_FILE))?;
        self.ledger.save(dir.join(Self::LEDGER_FILE))?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self, ReportError> {
        let dir = dir.as_ref();
        Ok(RunArtifacts {
            trace: EpisodeTrace::read_csv(dir.join(Self::TRACE_FILE))?,
            ledger: EmissionLedger::load(dir.join(Self::LEDGER_FILE))?,
        })
    }
}

/// Extracts the running-vehicle series (one point per second) from a
/// trace that must cover the whole episode.
pub fn running_curve(
    trace: &EpisodeTrace,
    episode_seconds: f64,
) -> Result<Vec<(f64, u64)>, ReportError> {
    let got = trace.rows.last().map_or(0.0, |r| r.t);
    if got + 1e-9 < episode_seconds {
        return Err(ReportError::TruncatedTrace {
            expected: episode_seconds,
            got,
        });
    }
    Ok(trace.rows.iter().map(|r| (r.t, r.running)).collect())
}

/// Normalized per-interval, per-lane emissions. The requested intervals
/// must be non-overlapping and tracked by the ledger.
pub fn interval_report(
    ledger: &EmissionLedger,
    spec: &NetworkSpec,
    intervals: &[(f64, f64)],
) -> Result<Vec<IntervalReport>, ReportError> {
    for (i, &(a0, a1)) in intervals.iter().enumerate() {
        for &(b0, b1) in &intervals[i + 1..] {
            if a0 < b1 && b0 < a1 {
                return Err(ReportError::OverlappingIntervals(a0, a1, b0, b1));
            }
        }
    }
    let total_lane_km: f64 = spec.lanes().iter().map(|l| l.length / 1000.0).sum();
    intervals
        .iter()
        .map(|&(t0, t1)| {
            let slot = ledger
                .intervals()
                .iter()
                .position(|&iv| iv == (t0, t1))
                .ok_or(ReportError::UnknownInterval(t0, t1))?;
            let duration_h = (t1 - t0) / 3600.0;
            let mut per_lane = vec![[0.0; 6]; spec.lanes().len()];
            let mut network_grams = [0.0; 6];
            for (lane_idx, lane) in spec.lanes().iter().enumerate() {
                let lane_km = lane.length / 1000.0;
                for p in Pollutant::ALL {
                    let grams = ledger.interval_lane(slot, lane_idx, p);
                    per_lane[lane_idx][p.index()] = grams / (duration_h * lane_km);
                    network_grams[p.index()] += grams;
                }
            }
            let mut network_normalized = [0.0; 6];
            for p in Pollutant::ALL {
                network_normalized[p.index()] =
                    network_grams[p.index()] / (duration_h * total_lane_km);
            }
            Ok(IntervalReport {
                interval: (t0, t1),
                per_lane,
                network_grams,
                network_normalized,
            })
        })
        .collect()
}

/// Display-unit conversion from ledger grams (fuel mL).
fn display_units(totals: [f64; 6]) -> [f64; 6] {
    let mut out = totals;
    out[Pollutant::Co2.index()] /= 1000.0; // kg
    out[Pollutant::Co.index()] /= 1000.0; // kg
    out[Pollutant::Fuel.index()] /= 1000.0; // L
    out
}

/// Column headers matching the display units.
pub const COMPARISON_COLUMNS: [&str; 6] =
    ["CO2_kg", "CO_kg", "NOx_g", "PMx_g", "HC_g", "fuel_L"];

/// Builds the overall emission/fuel comparison. Both ledgers must come
/// from runs over the same network.
pub fn comparison_table(
    baseline: &EmissionLedger,
    trained: &EmissionLedger,
) -> Result<ComparisonTable, ReportError> {
    if baseline.n_lanes() != trained.n_lanes() {
        return Err(ReportError::LedgerMismatch(format!(
            "{} lanes vs {} lanes",
            baseline.n_lanes(),
            trained.n_lanes()
        )));
    }
    let base = display_units(baseline.totals());
    let sync = display_units(trained.totals());
    let mut reduction_pct = [0.0; 6];
    for k in 0..6 {
        if base[k] > 0.0 {
            reduction_pct[k] = (base[k] - sync[k]) / base[k] * 100.0;
        }
    }
    Ok(ComparisonTable {
        baseline: base,
        trained: sync,
        reduction_pct,
    })
}

impl ComparisonTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("case");
        for c in COMPARISON_COLUMNS {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (name, row) in [("baseline", &self.baseline), ("trained", &self.trained)] {
            out.push_str(name);
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out.push_str("reduction_pct");
        for v in self.reduction_pct {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
        out
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<14}{:>10}{:>10}{:>10}{:>10}{:>10}{:>10}",
            "",
            COMPARISON_COLUMNS[0],
            COMPARISON_COLUMNS[1],
            COMPARISON_COLUMNS[2],
            COMPARISON_COLUMNS[3],
            COMPARISON_COLUMNS[4],
            COMPARISON_COLUMNS[5]
        );
        for (name, row) in [("baseline", &self.baseline), ("trained", &self.trained)] {
            let _ = write!(out, "{name:<14}");
            for v in row {
                let _ = write!(out, "{v:>10.1}");
            }
            out.push('\n');
        }
        let _ = write!(out, "{:<14}", "reduction %");
        for v in self.reduction_pct {
            let _ = write!(out, "{v:>10.1}");
        }
        out.push('\n');
        out
    }
}

#[derive(Debug, Clone)]
pub struct ReportPaths {
    pub running_curve_csv: PathBuf,
    pub interval_csvs: Vec<PathBuf>,
    pub comparison_csv: PathBuf,
    pub comparison_txt: PathBuf,
    pub running_curve_svg: Option<PathBuf>,
}

/// Writes the full report bundle under `out_dir`, comparing a trained
/// run against a baseline run of the same network and schedule seed.
pub fn write_report(
    out_dir: impl AsRef<Path>,
    trained: &RunArtifacts,
    baseline: &RunArtifacts,
    spec: &NetworkSpec,
    episode_seconds: f64,
    with_svg: bool,
) -> Result<ReportPaths, ReportError> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir)?;

    let trained_curve = running_curve(&trained.trace, episode_seconds)?;
    let baseline_curve = running_curve(&baseline.trace, episode_seconds)?;
    if trained_curve.len() != baseline_curve.len() {
        return Err(ReportError::LedgerMismatch(format!(
            "trace lengths differ: {} vs {}",
            trained_curve.len(),
            baseline_curve.len()
        )));
    }
    let running_curve_csv = out_dir.join("running_curve.csv");
    {
        let mut text = String::from("t,trained_running,baseline_running\n");
        for ((t, trained_n), (_, baseline_n)) in trained_curve.iter().zip(&baseline_curve) {
            let _ = writeln!(text, "{t},{trained_n},{baseline_n}");
        }
        std::fs::write(&running_curve_csv, text)?;
    }

    if trained.ledger.intervals() != baseline.ledger.intervals() {
        return Err(ReportError::LedgerMismatch(
            "ledgers track different intervals".into(),
        ));
    }
    let intervals = trained.ledger.intervals().to_vec();
    let trained_intervals = interval_report(&trained.ledger, spec, &intervals)?;
    let baseline_intervals = interval_report(&baseline.ledger, spec, &intervals)?;
    let mut interval_csvs = Vec::new();
    for (ti, bi) in trained_intervals.iter().zip(&baseline_intervals) {
        let (t0, t1) = ti.interval;
        let path = out_dir.join(format!("intervals_{}_{}.csv", t0 as u64, t1 as u64));
        let mut text = String::from("lane,pollutant,baseline_g_h_km,trained_g_h_km\n");
        for (lane_idx, lane) in spec.lanes().iter().enumerate() {
            for p in Pollutant::ALL {
                let _ = writeln!(
                    text,
                    "{},{},{},{}",
                    lane.id,
                    p.label(),
                    bi.per_lane[lane_idx][p.index()],
                    ti.per_lane[lane_idx][p.index()]
                );
            }
        }
        std::fs::write(&path, text)?;
        interval_csvs.push(path);
    }

    let table = comparison_table(&baseline.ledger, &trained.ledger)?;
    let comparison_csv = out_dir.join("comparison.csv");
    std::fs::write(&comparison_csv, table.to_csv())?;
    let comparison_txt = out_dir.join("comparison.txt");
    std::fs::write(&comparison_txt, table.render_text())?;

    let running_curve_svg = if with_svg {
        let path = out_dir.join("running_curve.svg");
        std::fs::write(
            &path,
            line_chart_svg(
                &[("trained", &trained_curve), ("baseline", &baseline_curve)],
                "running vehicles",
            ),
        )?;
        Some(path)
    } else {
        None
    };

    Ok(ReportPaths {
        running_curve_csv,
        interval_csvs,
        comparison_csv,
        comparison_txt,
        running_curve_svg,
    })
}

/// Minimal polyline chart; the CSV is the contract, this is a courtesy.
fn line_chart_svg(series: &[(&str, &Vec<(f64, u64)>)], title: &str) -> String {
    const W: f64 = 900.0;
    const H: f64 = 420.0;
    const MARGIN: f64 = 50.0;
    let t_max = series
        .iter()
        .flat_map(|(_, s)| s.iter().map(|&(t, _)| t))
        .fold(1.0, f64::max);
    let y_max = series
        .iter()
        .flat_map(|(_, s)| s.iter().map(|&(_, y)| y as f64))
        .fold(1.0, f64::max);
    let colors = ["#2a7e3f", "#b03a2e", "#1f618d", "#7d3c98"];
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\">{title}</text>\n\
         <line x1=\"{MARGIN}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{MARGIN}\" y1=\"{MARGIN}\" x2=\"{MARGIN}\" y2=\"{}\" stroke=\"black\"/>\n",
        W / 2.0 - 60.0,
        H - MARGIN,
        W - MARGIN,
        H - MARGIN,
        H - MARGIN,
    );
    for (k, (name, points)) in series.iter().enumerate() {
        let color = colors[k % colors.len()];
        let mut path = String::new();
        for (i, &(t, y)) in points.iter().enumerate() {
            let x = MARGIN + (t / t_max) * (W - 2.0 * MARGIN);
            let yy = (H - MARGIN) - (y as f64 / y_max) * (H - 2.0 * MARGIN);
            let _ = write!(path, "{}{x:.1},{yy:.1} ", if i == 0 { "M" } else { "L" });
        }
        let _ = write!(
            svg,
            "<path d=\"{path}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n\
             <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" fill=\"{color}\">{name}</text>\n",
            W - MARGIN - 110.0,
            MARGIN + 18.0 * (k as f64 + 1.0),
        );
    }
    svg.push_str("</svg>\n");
    svg
}
