//! Analytic cost model: convolution output geometry, exact MAC counts,
//! and a pluggable launched-warp estimator.
//!
//! All arithmetic is exact unsigned 64-bit; overflow is rejected, never
//! wrapped or saturated.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Threads per warp for every built-in warp model.
pub const WARP_SIZE: u64 = 32;

/// Identifier-addressed estimator for launched warps of one convolution.
///
/// Profiled warp counts are tool- and kernel-implementation-specific, so the
/// estimator is a documented deterministic stand-in applied identically to
/// the real and synthetic sides of a comparison.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum WarpModel {
    /// One thread per output element, 32 threads per warp.
    #[default]
    OutputThreadV1,
}

impl WarpModel {
    pub const fn id(self) -> &'static str {
        match self {
            WarpModel::OutputThreadV1 => "output-thread-v1",
        }
    }
}

impl fmt::Display for WarpModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for WarpModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "output-thread-v1" => Ok(WarpModel::OutputThreadV1),
            other => Err(Error::UnknownWarpModel(other.to_string())),
        }
    }
}

/// Geometry of a single convolution under the same-padding rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ConvShape {
    pub in_h: u64,
    pub in_w: u64,
    pub in_channels: u64,
    pub kernel: u64,
    pub stride: u64,
    pub out_channels: u64,
}

impl ConvShape {
    pub fn new(
        in_h: u64,
        in_w: u64,
        in_channels: u64,
        kernel: u64,
        stride: u64,
        out_channels: u64,
    ) -> Result<Self> {
        let shape = ConvShape { in_h, in_w, in_channels, kernel, stride, out_channels };
        shape.validate()?;
        Ok(shape)
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("in_h", self.in_h),
            ("in_w", self.in_w),
            ("in_channels", self.in_channels),
            ("kernel", self.kernel),
            ("stride", self.stride),
            ("out_channels", self.out_channels),
        ] {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if self.stride > self.in_h.min(self.in_w) {
            return Err(Error::invalid(format!(
                "stride {} exceeds input size {}x{}",
                self.stride, self.in_h, self.in_w
            )));
        }
        Ok(())
    }

    pub fn out_h(&self) -> u64 {
        output_size(self.in_h, self.kernel, self.stride)
    }

    pub fn out_w(&self) -> u64 {
        output_size(self.in_w, self.kernel, self.stride)
    }
}

/// Output extent of a same-padded convolution along one axis: `ceil(in/stride)`.
/// Independent of kernel size; the kernel argument only mirrors the shape triple.
pub fn output_size(in_size: u64, _kernel: u64, stride: u64) -> u64 {
    assert!(in_size > 0 && stride > 0, "output_size requires positive inputs");
    assert!(stride <= in_size, "stride must not exceed input size");
    in_size.div_ceil(stride)
}

/// Exact multiply-accumulate count of one convolution:
/// `out_h * out_w * out_channels * kernel^2 * in_channels`.
pub fn conv_macs(shape: &ConvShape) -> Result<u64> {
    shape
        .out_h()
        .checked_mul(shape.out_w())
        .and_then(|v| v.checked_mul(shape.out_channels))
        .and_then(|v| v.checked_mul(shape.kernel))
        .and_then(|v| v.checked_mul(shape.kernel))
        .and_then(|v| v.checked_mul(shape.in_channels))
        .ok_or(Error::Overflow)
}

/// Estimated launched warps of one convolution under the given model.
pub fn conv_warps(shape: &ConvShape, model: WarpModel) -> Result<u64> {
    match model {
        WarpModel::OutputThreadV1 => {
            let threads = shape
                .out_h()
                .checked_mul(shape.out_w())
                .and_then(|v| v.checked_mul(shape.out_channels))
                .ok_or(Error::Overflow)?;
            Ok(threads.div_ceil(WARP_SIZE))
        }
    }
}

/// One (MAC, warp) pair. Additive under composition.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CostVector {
    pub mac: u64,
    pub wp: u64,
}

impl CostVector {
    pub const ZERO: CostVector = CostVector { mac: 0, wp: 0 };

    pub fn new(mac: u64, wp: u64) -> Self {
        CostVector { mac, wp }
    }

    pub fn checked_add(self, other: CostVector) -> Result<CostVector> {
        Ok(CostVector {
            mac: self.mac.checked_add(other.mac).ok_or(Error::Overflow)?,
            wp: self.wp.checked_add(other.wp).ok_or(Error::Overflow)?,
        })
    }

    pub fn checked_scale(self, count: u64) -> Result<CostVector> {
        Ok(CostVector {
            mac: self.mac.checked_mul(count).ok_or(Error::Overflow)?,
            wp: self.wp.checked_mul(count).ok_or(Error::Overflow)?,
        })
    }
}

/// Cost of a single shape occurring once.
pub fn conv_cost(shape: &ConvShape, model: WarpModel) -> Result<CostVector> {
    Ok(CostVector::new(conv_macs(shape)?, conv_warps(shape, model)?))
}

/// Element-wise exact sum of `count * cost(shape)` over a node list.
pub fn group_cost(nodes: &[(ConvShape, u64)], model: WarpModel) -> Result<CostVector> {
    if nodes.is_empty() {
        return Err(Error::invalid("group_cost requires a non-empty node list"));
    }
    let mut total = CostVector::ZERO;
    for (shape, count) in nodes {
        total = total.checked_add(conv_cost(shape, model)?.checked_scale(*count)?)?;
    }
    Ok(total)
}
