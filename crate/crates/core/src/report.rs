//! Side-by-side target/achieved report over a synthesis run, rendered as
//! a Markdown table or CSV. Rendering is deterministic and numeric rows
//! survive a parse/render round trip unchanged.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterSet, GroupTargets};
use crate::cost::CostVector;
use crate::error::{Error, Result};
use crate::synth::SynthesisResult;

/// One comparison row; `fitness_error_percent` is the combined weighted
/// relative error scaled to percent.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupReportRow {
    /// 1-based group number.
    pub group: usize,
    pub target: GroupTargets,
    pub achieved: CostVector,
    pub fitness_error_percent: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    MarkdownTable,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "markdown" | "md" => Ok(ReportFormat::MarkdownTable),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::UnknownFormat(other.to_string())),
        }
    }
}

/// Pairs each group's profiled targets with what the search achieved.
pub fn build_report(cs: &ClusterSet, result: &SynthesisResult) -> Result<Vec<GroupReportRow>> {
    if cs.groups.len() != result.groups.len() {
        return Err(Error::invalid(format!(
            "cluster set has {} groups but the synthesis result has {}",
            cs.groups.len(),
            result.groups.len()
        )));
    }
    Ok(cs
        .targets
        .iter()
        .zip(&result.groups)
        .enumerate()
        .map(|(i, (target, synth))| GroupReportRow {
            group: i + 1,
            target: *target,
            achieved: synth.achieved,
            fitness_error_percent: synth.fitness.value * 100.0,
        })
        .collect())
}

const CSV_COLUMNS: [&str; 6] =
    ["group", "mac_target", "wp_target", "mac_achieved", "wp_achieved", "fitness_error_percent"];

#[derive(Serialize, Deserialize)]
struct CsvRow {
    group: usize,
    mac_target: u64,
    wp_target: u64,
    mac_achieved: u64,
    wp_achieved: u64,
    fitness_error_percent: String,
}

impl From<&GroupReportRow> for CsvRow {
    fn from(row: &GroupReportRow) -> Self {
        CsvRow {
            group: row.group,
            mac_target: row.target.mac_real,
            wp_target: row.target.wp_real,
            mac_achieved: row.achieved.mac,
            wp_achieved: row.achieved.wp,
            fitness_error_percent: format!("{:.2}", row.fitness_error_percent),
        }
    }
}

pub fn render(rows: &[GroupReportRow], format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => render_csv(rows),
        ReportFormat::MarkdownTable => render_markdown(rows),
    }
}

fn render_csv(rows: &[GroupReportRow]) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer.serialize(CsvRow::from(row)).expect("in-memory CSV write");
    }
    // An empty report still gets its header.
    if rows.is_empty() {
        writer.write_record(CSV_COLUMNS).expect("in-memory CSV write");
    }
    String::from_utf8(writer.into_inner().expect("flushed")).expect("CSV is UTF-8")
}

fn render_markdown(rows: &[GroupReportRow]) -> String {
    let cells: Vec<[String; 6]> = rows
        .iter()
        .map(|r| {
            [
                r.group.to_string(),
                r.target.mac_real.to_string(),
                r.target.wp_real.to_string(),
                r.achieved.mac.to_string(),
                r.achieved.wp.to_string(),
                format!("{:.2}", r.fitness_error_percent),
            ]
        })
        .collect();
    let widths: Vec<usize> = CSV_COLUMNS
        .iter()
        .enumerate()
        .map(|(i, name)| {
            cells.iter().map(|row| row[i].len()).chain([name.len()]).max().unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    let header: Vec<String> = CSV_COLUMNS
        .iter()
        .zip(&widths)
        .map(|(name, &w)| format!("{name:>w$}"))
        .collect();
    out.push_str(&format!("| {} |\n", header.join(" | ")));
    let rule: Vec<String> =
        widths.iter().map(|&w| format!("{}:", "-".repeat(w.max(1) - 1))).collect();
    out.push_str(&format!("| {} |\n", rule.join(" | ")));
    for row in &cells {
        let line: Vec<String> =
            row.iter().zip(&widths).map(|(cell, &w)| format!("{cell:>w$}")).collect();
        out.push_str(&format!("| {} |\n", line.join(" | ")));
    }
    out
}

/// Parses a CSV report back into rows; the inverse of `render(.., Csv)`.
pub fn parse_csv_report(text: &str) -> Result<Vec<GroupReportRow>> {
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::invalid(format!("invalid report CSV: {e}")))?
        .clone();
    let expected: Vec<&str> = CSV_COLUMNS.to_vec();
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::invalid(format!(
            "report header must be `{}`, got `{}`",
            expected.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for record in reader.deserialize::<CsvRow>() {
        let record = record.map_err(|e| Error::invalid(format!("invalid report CSV: {e}")))?;
        let pct: f64 = record
            .fitness_error_percent
            .parse()
            .map_err(|e| Error::invalid(format!("invalid fitness_error_percent: {e}")))?;
        rows.push(GroupReportRow {
            group: record.group,
            target: GroupTargets { mac_real: record.mac_target, wp_real: record.wp_target },
            achieved: CostVector { mac: record.mac_achieved, wp: record.wp_achieved },
            fitness_error_percent: pct,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_rows() -> Vec<GroupReportRow> {
        vec![
            GroupReportRow {
                group: 1,
                target: GroupTargets { mac_real: 2_156_022_912, wp_real: 2_802_996 },
                achieved: CostVector { mac: 2_156_050_176, wp: 2_803_928 },
                fitness_error_percent: 0.0172,
            },
            GroupReportRow {
                group: 2,
                target: GroupTargets { mac_real: 109_734_912, wp_real: 885_229 },
                achieved: CostVector { mac: 109_735_598, wp: 885_337 },
                fitness_error_percent: 0.00641,
            },
        ]
    }

    #[test]
    fn csv_has_exact_header_and_two_decimal_errors() {
        let text = render(&sample_rows(), ReportFormat::Csv);
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "group,mac_target,wp_target,mac_achieved,wp_achieved,fitness_error_percent"
        );
        assert_eq!(lines.next().unwrap(), "1,2156022912,2802996,2156050176,2803928,0.02");
        assert_eq!(lines.next().unwrap(), "2,109734912,885229,109735598,885337,0.01");
        assert_eq!(lines.next(), None);
    }

    #[test]
    fn empty_report_is_header_only() {
        let text = render(&[], ReportFormat::Csv);
        assert_eq!(
            text,
            "group,mac_target,wp_target,mac_achieved,wp_achieved,fitness_error_percent\n"
        );
        assert_eq!(parse_csv_report(&text).unwrap(), vec![]);
    }

    #[test]
    fn csv_round_trip_is_a_fixed_point() {
        let once = render(&sample_rows(), ReportFormat::Csv);
        let parsed = parse_csv_report(&once).unwrap();
        let twice = render(&parsed, ReportFormat::Csv);
        assert_eq!(once, twice);
    }

    #[test]
    fn markdown_is_aligned_and_right_justified() {
        let text = render(&sample_rows(), ReportFormat::MarkdownTable);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        let width = lines[0].len();
        assert!(lines.iter().all(|l| l.len() == width), "{text}");
        assert!(lines[0].contains("| fitness_error_percent |"));
        assert!(lines[1].ends_with("-: |"));
        assert!(lines[2].ends_with("|  0.02 |") || lines[2].contains(" 0.02 |"), "{text}");
    }

    #[test]
    fn unknown_format_is_rejected() {
        let err = "yaml".parse::<ReportFormat>().unwrap_err();
        assert_eq!(err.to_string(), "unknown report format `yaml`");
        assert_eq!("csv".parse::<ReportFormat>().unwrap(), ReportFormat::Csv);
        assert_eq!("markdown".parse::<ReportFormat>().unwrap(), ReportFormat::MarkdownTable);
    }

    #[test]
    fn bad_header_is_rejected() {
        let err = parse_csv_report("a,b,c\n1,2,3\n").unwrap_err();
        assert!(err.to_string().contains("report header"), "{err}");
    }
}
