//! Synthetic CNN benchmark construction.
//!
//! Given a profiled convolution trace, this crate clusters layers by input
//! size, bins each cluster by (filter, stride), and searches per-group
//! output-channel counts with a seeded genetic algorithm so that the
//! assembled synthetic network reproduces the trace's per-group MAC and
//! launched-warp totals under an exact integer cost model. The result is a
//! validated operator graph exportable as JSON or DOT plus a
//! target-versus-achieved report.
//!
//! Pipeline stages map to modules:
//!
//! * [`trace`] — profiled trace records, CSV parsing and serialization
//! * [`cost`] — exact MAC/warp cost model over conv geometry
//! * [`cluster`] — input-size clustering, filter bins, per-group targets
//! * [`genome`] — fixed-length bit-string encoding of channel choices
//! * [`synth`] — the per-group genetic search, run in network order
//! * [`graph`] — network assembly, validation, JSON and DOT export
//! * [`report`] — side-by-side comparison tables
//!
//! Every stage is deterministic: a fixed trace, configuration, and seed
//! yield byte-identical artifacts.

pub mod cluster;
pub mod cost;
pub mod error;
pub mod genome;
pub mod graph;
pub mod report;
pub mod synth;
pub mod trace;

pub use cluster::{
    bin_group, build_cluster_set, cluster_by_input_size, compute_group_targets, scale_clusters,
    ClusterSet, FilterBin, GroupSpec, GroupTargets, SizeCluster,
};
pub use cost::{
    conv_cost, conv_macs, conv_warps, group_cost, output_size, ConvShape, CostVector, WarpModel,
    WARP_SIZE,
};
pub use error::{Error, Result};
pub use genome::{Genome, GenomeConfig, GenomeLayout};
pub use graph::{
    assemble_group, assemble_network, route_tensor, validate_graph, AssembleOptions,
    GraphMetadata, GraphNode, GroupAssembly, GroupPlan, ModelGraph, NodeOp, PoolMode, TensorRef,
};
pub use report::{build_report, parse_csv_report, render, GroupReportRow, ReportFormat};
pub use synth::{
    evaluate_genome, evolve_group, fitness, synthesize, EvolveOutcome, FitnessValue,
    FitnessWeights, GaParams, GroupSynthesis, SynthesisOptions, SynthesisResult,
};
pub use trace::{parse_trace, serialize_trace, trace_totals, ConvRecord, Trace, TRACE_HEADER};
