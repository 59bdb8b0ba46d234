//! Profiled-workload records: the on-disk trace format, loading,
//! validation, and whole-trace cost totals.
//!
//! A trace file is UTF-8 comma-delimited text with the exact header
//! `input_h,input_w,in_channels,kernel,stride,out_channels,count`, one
//! record per line, LF or CRLF, no quoting. Lines starting with `#` are
//! comments; a leading `# source: <label>` comment carries the trace label
//! through a serialize/parse round trip.

use crate::cost::{conv_cost, ConvShape, CostVector, WarpModel};
use crate::error::{Error, Result};

pub const TRACE_HEADER: [&str; 7] = [
    "input_h",
    "input_w",
    "in_channels",
    "kernel",
    "stride",
    "out_channels",
    "count",
];

const SOURCE_COMMENT_PREFIX: &str = "# source: ";

/// One profiled convolution occurrence class. `count` is an occurrence
/// multiplier, not a distinct-layer id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ConvRecord {
    pub input_h: u64,
    pub input_w: u64,
    pub in_channels: u64,
    pub kernel: u64,
    pub stride: u64,
    pub out_channels: u64,
    pub count: u64,
}

impl ConvRecord {
    pub fn new(
        input_h: u64,
        input_w: u64,
        in_channels: u64,
        kernel: u64,
        stride: u64,
        out_channels: u64,
        count: u64,
    ) -> Result<Self> {
        let rec = ConvRecord { input_h, input_w, in_channels, kernel, stride, out_channels, count };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("input_h", self.input_h),
            ("input_w", self.input_w),
            ("in_channels", self.in_channels),
            ("kernel", self.kernel),
            ("stride", self.stride),
            ("out_channels", self.out_channels),
            ("count", self.count),
        ] {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        let min_input = self.input_h.min(self.input_w);
        if self.kernel > min_input {
            return Err(Error::invalid(format!(
                "kernel {} exceeds input size {}x{}",
                self.kernel, self.input_h, self.input_w
            )));
        }
        if self.stride > self.kernel && self.stride > min_input {
            return Err(Error::invalid(format!(
                "stride {} exceeds both kernel {} and input size {}x{}",
                self.stride, self.kernel, self.input_h, self.input_w
            )));
        }
        Ok(())
    }

    pub fn shape(&self) -> ConvShape {
        ConvShape {
            in_h: self.input_h,
            in_w: self.input_w,
            in_channels: self.in_channels,
            kernel: self.kernel,
            stride: self.stride,
            out_channels: self.out_channels,
        }
    }

    /// Cost of this record including its occurrence multiplier.
    pub fn cost(&self, model: WarpModel) -> Result<CostVector> {
        conv_cost(&self.shape(), model)?.checked_scale(self.count)
    }
}

/// An ordered list of profiled records plus a free-text source label.
/// Immutable after construction; safe to share across readers.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Trace {
    pub records: Vec<ConvRecord>,
    pub source_label: String,
}

impl Trace {
    pub fn new(records: Vec<ConvRecord>, source_label: impl Into<String>) -> Self {
        Trace { records, source_label: source_label.into() }
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Sum of occurrence multipliers over all records.
    pub fn total_count(&self) -> u64 {
        self.records.iter().map(|r| r.count).sum()
    }
}

/// Parses raw trace file content. Row numbers in errors are 1-based and
/// count data rows only.
pub fn parse_trace(bytes: &[u8]) -> Result<Trace> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::Header(format!("trace is not valid UTF-8: {e}")))?;

    let source_label = text
        .lines()
        .next()
        .and_then(|line| line.strip_prefix(SOURCE_COMMENT_PREFIX))
        .map(|s| s.trim_end_matches('\r').to_string())
        .unwrap_or_default();

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .quoting(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let headers = reader
        .headers()
        .map_err(|e| Error::Header(format!("unreadable header: {e}")))?
        .clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::EmptyTrace);
    }
    for expected in TRACE_HEADER {
        if !headers.iter().any(|h| h == expected) {
            return Err(Error::Header(format!("missing header column `{expected}`")));
        }
    }
    for got in headers.iter() {
        if !TRACE_HEADER.contains(&got) {
            return Err(Error::Header(format!("unknown header column `{got}`")));
        }
    }
    if headers.iter().collect::<Vec<_>>() != TRACE_HEADER {
        return Err(Error::Header(format!(
            "header columns out of order: expected `{}`",
            TRACE_HEADER.join(",")
        )));
    }

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| Error::Row {
            row: row_no,
            msg: format!("malformed row: {e}"),
        })?;
        if row.len() != TRACE_HEADER.len() {
            return Err(Error::Row {
                row: row_no,
                msg: format!("expected {} fields, found {}", TRACE_HEADER.len(), row.len()),
            });
        }
        let mut fields = [0u64; 7];
        for (field, (name, raw)) in fields.iter_mut().zip(TRACE_HEADER.iter().zip(row.iter())) {
            *field = raw.parse::<u64>().map_err(|_| Error::Row {
                row: row_no,
                msg: format!("{name} must be a positive integer, got `{raw}`"),
            })?;
        }
        let [h, w, cin, k, s, cout, count] = fields;
        let record = ConvRecord::new(h, w, cin, k, s, cout, count).map_err(|e| match e {
            Error::InvalidInput(msg) => Error::Row { row: row_no, msg },
            other => other,
        })?;
        records.push(record);
    }

    if records.is_empty() {
        return Err(Error::EmptyTrace);
    }
    Ok(Trace { records, source_label })
}

/// Renders a trace back to the file format. `parse_trace` inverts this
/// exactly for any valid trace with a single-line label.
pub fn serialize_trace(trace: &Trace) -> String {
    let mut out = String::new();
    if !trace.source_label.is_empty() {
        out.push_str(SOURCE_COMMENT_PREFIX);
        out.push_str(&trace.source_label);
        out.push('\n');
    }
    out.push_str(&TRACE_HEADER.join(","));
    out.push('\n');
    for r in &trace.records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.input_h, r.input_w, r.in_channels, r.kernel, r.stride, r.out_channels, r.count
        ));
    }
    out
}

/// Element-wise sum over records of `count * per-record cost`.
pub fn trace_totals(trace: &Trace, model: WarpModel) -> Result<CostVector> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let mut total = CostVector::ZERO;
    for record in &trace.records {
        total = total.checked_add(record.cost(model)?)?;
    }
    Ok(total)
}
