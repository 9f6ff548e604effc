use std::fmt::Write;

use super::crossval::Aggregate;
use super::flowstats::{AngleErrorStats, ANGLE_THRESHOLDS};
use super::metrics::Metric;

fn pct(v: f64) -> String {
    format!("{:.0}%", 100.0 * v)
}

fn num(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.3}"))
}

/// Angle table: one row per category, one column per threshold.
pub fn angle_table(rows: &[(String, AngleErrorStats)]) -> String {
    let name_w = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max("category".len());
    let mut out = String::new();
    write!(out, "{:<name_w$}", "category").unwrap();
    for t in ANGLE_THRESHOLDS {
        write!(out, "  {:>6}", format!("<{t}°")).unwrap();
    }
    writeln!(out, "  {:>8}", "vectors").unwrap();
    for (name, s) in rows {
        write!(out, "{name:<name_w$}").unwrap();
        for f in s.fractions() {
            write!(out, "  {:>6}", pct(f)).unwrap();
        }
        writeln!(out, "  {:>8}", s.count).unwrap();
    }
    out
}

/// Region-metric table: one row per metric, a mean and a median column per method.
pub fn metrics_table(columns: &[(String, &Aggregate)]) -> String {
    let col_w = columns.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(15);
    let mut out = String::new();
    write!(out, "{:<6}", "").unwrap();
    for (name, _) in columns {
        write!(out, "  {name:^col_w$}").unwrap();
    }
    writeln!(out).unwrap();
    write!(out, "{:<6}", "").unwrap();
    for _ in columns {
        write!(out, "  {:^col_w$}", "mean   median").unwrap();
    }
    writeln!(out).unwrap();
    for m in Metric::ALL {
        write!(out, "{:<6}", m.label()).unwrap();
        for (_, agg) in columns {
            let s = agg.summary(m);
            write!(out, "  {:^col_w$}", format!("{:>6} {:>6}", num(s.mean), num(s.median))).unwrap();
        }
        writeln!(out).unwrap();
    }
    write!(out, "{:<6}", "runs").unwrap();
    for (_, agg) in columns {
        write!(out, "  {:^col_w$}", format!("{} ({} failed)", agg.runs, agg.failures)).unwrap();
    }
    writeln!(out).unwrap();
    out
}
