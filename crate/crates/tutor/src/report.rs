//! Text rendering of rating summaries.

use std::fmt::Write;

use tutor_core::MetricSummary;

/// Round half away from zero to one decimal.
pub fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

/// Aligned table with one row per rated metric, means and population
/// standard deviations shown to one decimal.
pub fn render_table(summaries: &[MetricSummary]) -> String {
    let n = summaries.iter().map(|s| s.n).max().unwrap_or(0);
    let rows: Vec<(String, String, String)> = summaries
        .iter()
        .map(|s| {
            (
                s.metric.label().to_string(),
                format!("{:.1}", round1(s.mean)),
                format!("{:.1}", round1(s.std_dev)),
            )
        })
        .collect();
    let w0 = rows.iter().map(|r| r.0.len()).chain([6]).max().unwrap_or(6);
    let w1 = 4;
    let w2 = 9;

    let mut out = String::new();
    let _ = writeln!(out, "Ratings (scale 1-5, N={n})");
    let _ = writeln!(out, "{:<w0$}  {:>w1$}  {:>w2$}", "Metric", "Mean", "Std. Dev");
    let _ = writeln!(out, "{}  {}  {}", "-".repeat(w0), "-".repeat(w1), "-".repeat(w2));
    for (label, mean, sd) in rows {
        let _ = writeln!(out, "{label:<w0$}  {mean:>w1$}  {sd:>w2$}");
    }
    out
}
