//! Rendering of evaluation reports.

use std::fs;
use std::io;
use std::path::Path;

use tone_core::eval::EvalReport;
use tone_core::features::TONE_COUNT;

/// Renders a report as CSV: the confusion matrix (rows = reference tone,
/// columns = hypothesis tone) followed by summary lines. Accuracy keeps full
/// precision so reruns can be compared bit for bit.
pub fn eval_report_csv(report: &EvalReport) -> String {
    let mut out = String::from("reference");
    for h in 0..TONE_COUNT {
        out.push_str(&format!(",hyp{h}"));
    }
    out.push('\n');
    for (r, row) in report.confusion.iter().enumerate() {
        out.push_str(&r.to_string());
        for count in row {
            out.push_str(&format!(",{count}"));
        }
        out.push('\n');
    }
    out.push_str(&format!("accuracy,{}\n", report.accuracy));
    out.push_str(&format!("n_examples,{}\n", report.n_examples));
    out.push_str(&format!("config,{}\n", report.config_id));
    out
}

/// Writes the report CSV to `path`.
pub fn write_eval_report(path: &Path, report: &EvalReport) -> io::Result<()> {
    fs::write(path, eval_report_csv(report))
}

/// One-line human summary: percentage, correct count, and total.
pub fn eval_summary(report: &EvalReport) -> String {
    let correct: u64 = (0..TONE_COUNT).map(|t| report.confusion[t][t]).sum();
    format!(
        "accuracy {:.1}% ({correct}/{} syllables)",
        100.0 * report.accuracy,
        report.n_examples
    )
}
