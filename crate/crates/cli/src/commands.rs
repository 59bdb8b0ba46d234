//! Subcommand bodies.
//!
//! Every failure is mapped onto the binary's exit-code contract:
//! `Input` problems (unreadable files, parse errors, validation failures)
//! exit 1, a fitness gate breach exits 2. Artifacts that already passed
//! validation are written before the gate runs, so a breached run still
//! leaves the model and report on disk for inspection.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use synbench_core::{
    assemble_network, build_cluster_set, build_report, parse_trace, render, scale_clusters,
    synthesize, validate_graph, ClusterSet, GroupReportRow, ModelGraph, ReportFormat, Trace,
};

use crate::config::PipelineConfig;

#[derive(Debug)]
pub enum CmdError {
    /// Bad input or failed validation; exit code 1.
    Input(String),
    /// All artifacts written, but a group missed the fail threshold;
    /// exit code 2.
    Threshold(String),
}

impl fmt::Display for CmdError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CmdError::Input(msg) | CmdError::Threshold(msg) => write!(f, "{msg}"),
        }
    }
}

impl CmdError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CmdError::Input(_) => 1,
            CmdError::Threshold(_) => 2,
        }
    }

    fn input(err: impl fmt::Display) -> CmdError {
        CmdError::Input(err.to_string())
    }
}

pub type CmdResult = Result<(), CmdError>;

/// Output formats accepted by `export`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExportFormat {
    Dot,
    Json,
}

impl FromStr for ExportFormat {
    type Err = CmdError;

    fn from_str(s: &str) -> Result<Self, CmdError> {
        match s {
            "dot" => Ok(ExportFormat::Dot),
            "json" => Ok(ExportFormat::Json),
            other => {
                Err(CmdError::Input(format!("unknown format `{other}`, expected `dot` or `json`")))
            }
        }
    }
}

fn read_file(kind: &str, path: &Path) -> Result<Vec<u8>, CmdError> {
    if !path.exists() {
        return Err(CmdError::Input(format!("{kind} not found: {}", path.display())));
    }
    fs::read(path).map_err(|e| CmdError::Input(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> CmdResult {
    fs::write(path, contents).map_err(|e| CmdError::Input(format!("{}: {e}", path.display())))
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig, CmdError> {
    PipelineConfig::load(path).map_err(CmdError::input)
}

fn load_trace(path: &Path) -> Result<Trace, CmdError> {
    let bytes = read_file("trace", path)?;
    parse_trace(&bytes).map_err(|e| CmdError::Input(format!("{}: {e}", path.display())))
}

fn load_clusters(path: &Path) -> Result<ClusterSet, CmdError> {
    let bytes = read_file("cluster set", path)?;
    let text = String::from_utf8(bytes)
        .map_err(|e| CmdError::Input(format!("{}: {e}", path.display())))?;
    ClusterSet::from_json(&text).map_err(|e| CmdError::Input(format!("{}: {e}", path.display())))
}

fn load_model(path: &Path) -> Result<ModelGraph, CmdError> {
    let bytes = read_file("model", path)?;
    let text = String::from_utf8(bytes)
        .map_err(|e| CmdError::Input(format!("{}: {e}", path.display())))?;
    ModelGraph::from_json(&text).map_err(|e| CmdError::Input(format!("{}: {e}", path.display())))
}

/// Clusters a trace and applies the configured scale factor.
fn cluster_stage(cfg: &PipelineConfig, trace: &Trace) -> Result<ClusterSet, CmdError> {
    let model = cfg.warp_model().map_err(CmdError::input)?;
    let cs = build_cluster_set(trace, cfg.clustering.merge_tolerance, model)
        .map_err(CmdError::input)?;
    if cfg.clustering.scale_factor == 1.0 {
        Ok(cs)
    } else {
        scale_clusters(&cs, cfg.clustering.scale_factor).map_err(CmdError::input)
    }
}

/// Evolves, assembles, and validates; refuses to hand back a graph that
/// fails validation.
fn synth_stage(
    cfg: &PipelineConfig,
    cs: &ClusterSet,
) -> Result<(ModelGraph, Vec<GroupReportRow>), CmdError> {
    let opts = cfg.synthesis_options().map_err(CmdError::input)?;
    let result = synthesize(cs, &opts).map_err(CmdError::input)?;
    let graph = assemble_network(cs, &result.assignments(), &cfg.assemble_options().map_err(CmdError::input)?)
        .map_err(CmdError::input)?;
    let violations = validate_graph(&graph, Some(cs));
    if !violations.is_empty() {
        return Err(CmdError::Input(format!(
            "assembled model failed validation; refusing to write it:\n  {}",
            violations.join("\n  ")
        )));
    }
    let rows = build_report(cs, &result).map_err(CmdError::input)?;
    Ok((graph, rows))
}

/// Exit-2 gate over the report rows.
fn fitness_gate(cfg: &PipelineConfig, rows: &[GroupReportRow]) -> CmdResult {
    let threshold_percent = cfg.fail_threshold * 100.0;
    let failing: Vec<String> = rows
        .iter()
        .filter(|r| r.fitness_error_percent > threshold_percent)
        .map(|r| format!("group {} ({:.2}% > {:.2}%)", r.group, r.fitness_error_percent, threshold_percent))
        .collect();
    if failing.is_empty() {
        Ok(())
    } else {
        Err(CmdError::Threshold(format!(
            "fitness error above fail threshold: {}",
            failing.join(", ")
        )))
    }
}

/// Statistics table printed by `cluster`: one row per filter bin with the
/// group number, its center, the bin count, and the filter shape.
pub fn cluster_summary(cs: &ClusterSet) -> String {
    let header = ["group", "center", "count", "filter", "stride"];
    let mut cells: Vec<[String; 5]> = Vec::new();
    for (gi, group) in cs.groups.iter().enumerate() {
        for bin in &group.bins {
            cells.push([
                (gi + 1).to_string(),
                format!("{}x{}", group.center_h, group.center_w),
                bin.count.to_string(),
                bin.kernel.to_string(),
                bin.stride.to_string(),
            ]);
        }
    }
    let widths: Vec<usize> = header
        .iter()
        .enumerate()
        .map(|(i, name)| cells.iter().map(|row| row[i].len()).chain([name.len()]).max().unwrap_or(0))
        .collect();
    let line = |row: &[String]| -> String {
        let fields: Vec<String> =
            row.iter().zip(&widths).map(|(cell, &w)| format!("{cell:>w$}")).collect();
        format!("| {} |\n", fields.join(" | "))
    };
    let mut out = line(&header.map(String::from));
    let rule: Vec<String> = widths.iter().map(|&w| format!("{}:", "-".repeat(w.max(1) - 1))).collect();
    out.push_str(&format!("| {} |\n", rule.join(" | ")));
    for row in &cells {
        out.push_str(&line(row));
    }
    out
}

pub fn cmd_cluster(
    trace_path: &Path,
    config_path: Option<&Path>,
    out_path: &Path,
    scale: Option<f64>,
) -> CmdResult {
    let mut cfg = load_config(config_path)?;
    if let Some(s) = scale {
        cfg.clustering.scale_factor = s;
        cfg.validate().map_err(CmdError::input)?;
    }
    let trace = load_trace(trace_path)?;
    let cs = cluster_stage(&cfg, &trace)?;
    write_file(out_path, &cs.to_json())?;
    print!("{}", cluster_summary(&cs));
    Ok(())
}

pub fn cmd_synth(
    clusters_path: &Path,
    config_path: Option<&Path>,
    model_out: &Path,
    report_out: &Path,
    seed: Option<u64>,
) -> CmdResult {
    let mut cfg = load_config(config_path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let cs = load_clusters(clusters_path)?;
    let (graph, rows) = synth_stage(&cfg, &cs)?;
    write_file(model_out, &graph.to_json())?;
    write_file(report_out, &render(&rows, ReportFormat::Csv))?;
    print!("{}", render(&rows, ReportFormat::MarkdownTable));
    fitness_gate(&cfg, &rows)
}

pub fn cmd_export(model_path: &Path, format: &str, out_path: &Path) -> CmdResult {
    let format: ExportFormat = format.parse()?;
    let graph = load_model(model_path)?;
    let violations = validate_graph(&graph, None);
    if !violations.is_empty() {
        return Err(CmdError::Input(format!(
            "model failed validation:\n  {}",
            violations.join("\n  ")
        )));
    }
    let rendered = match format {
        ExportFormat::Dot => graph.to_dot(),
        ExportFormat::Json => graph.to_json(),
    };
    write_file(out_path, &rendered)
}

pub fn cmd_pipeline(
    trace_path: &Path,
    config_path: Option<&Path>,
    out_dir: &Path,
    seed: Option<u64>,
    scale: Option<f64>,
) -> CmdResult {
    let mut cfg = load_config(config_path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(s) = scale {
        cfg.clustering.scale_factor = s;
    }
    cfg.validate().map_err(CmdError::input)?;

    fs::create_dir_all(out_dir)
        .map_err(|e| CmdError::Input(format!("{}: {e}", out_dir.display())))?;

    let trace = load_trace(trace_path)?;
    let cs = cluster_stage(&cfg, &trace)?;
    write_file(&out_dir.join("clusters.json"), &cs.to_json())?;
    print!("{}", cluster_summary(&cs));

    let (graph, rows) = synth_stage(&cfg, &cs)?;
    write_file(&out_dir.join("model.json"), &graph.to_json())?;
    write_file(&out_dir.join("report.csv"), &render(&rows, ReportFormat::Csv))?;
    write_file(&out_dir.join("model.dot"), &graph.to_dot())?;
    println!();
    print!("{}", render(&rows, ReportFormat::MarkdownTable));

    fitness_gate(&cfg, &rows)
}
