//! Fixed-length binary genomes encoding per-node output-channel counts.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::GroupSpec;
use crate::error::{Error, Result};

/// Encoding knobs shared by every group of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenomeConfig {
    /// Bits per node slot; decoded values span `2^bits` channel steps.
    pub bits_per_node: u32,
    /// Channel step size; decoded channels are multiples of this.
    pub channel_granularity: u64,
}

impl Default for GenomeConfig {
    fn default() -> Self {
        GenomeConfig { bits_per_node: 8, channel_granularity: 8 }
    }
}

impl GenomeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=16).contains(&self.bits_per_node) {
            return Err(Error::invalid(format!(
                "bits_per_node must be in 1..=16, got {}",
                self.bits_per_node
            )));
        }
        if self.channel_granularity == 0 {
            return Err(Error::invalid("channel_granularity must be positive"));
        }
        Ok(())
    }
}

/// Maps a group's expanded node slots onto genome bit positions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GenomeLayout {
    pub config: GenomeConfig,
    /// One (kernel, stride) per conv node, in bin order.
    pub node_slots: Vec<(u64, u64)>,
}

impl GenomeLayout {
    pub fn for_group(group: &GroupSpec, config: GenomeConfig) -> Result<Self> {
        config.validate()?;
        let node_slots = group.slots();
        if node_slots.is_empty() {
            return Err(Error::invalid("group has no node slots"));
        }
        Ok(GenomeLayout { config, node_slots })
    }

    /// Total genome length in bits.
    pub fn genome_len(&self) -> usize {
        self.config.bits_per_node as usize * self.node_slots.len()
    }

    /// Reads each slot's bits as an unsigned integer v (MSB first) and
    /// emits `(v + 1) * channel_granularity`.
    pub fn decode(&self, genome: &Genome) -> Result<Vec<u64>> {
        if genome.len() != self.genome_len() {
            return Err(Error::invalid(format!(
                "genome length {} does not match layout length {}",
                genome.len(),
                self.genome_len()
            )));
        }
        let bits = self.config.bits_per_node as usize;
        Ok(genome
            .bits
            .chunks(bits)
            .map(|chunk| {
                let v = chunk.iter().fold(0u64, |acc, &b| (acc << 1) | b as u64);
                (v + 1) * self.config.channel_granularity
            })
            .collect())
    }

    /// Inverse of `decode`; rejects channel counts outside the layout's
    /// representable set.
    pub fn encode(&self, channels: &[u64]) -> Result<Genome> {
        if channels.len() != self.node_slots.len() {
            return Err(Error::invalid(format!(
                "expected {} channel counts, got {}",
                self.node_slots.len(),
                channels.len()
            )));
        }
        let g = self.config.channel_granularity;
        let max_v = (1u64 << self.config.bits_per_node) - 1;
        let mut bits = Vec::with_capacity(self.genome_len());
        for &c in channels {
            if c == 0 || c % g != 0 {
                return Err(Error::invalid(format!(
                    "channel count {c} is not a positive multiple of granularity {g}"
                )));
            }
            let v = c / g - 1;
            if v > max_v {
                return Err(Error::invalid(format!(
                    "channel count {c} exceeds encodable maximum {}",
                    (max_v + 1) * g
                )));
            }
            for i in (0..self.config.bits_per_node).rev() {
                bits.push((v >> i) & 1 == 1);
            }
        }
        Ok(Genome { bits })
    }
}

/// A fixed-length bit string; the GA's search point.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Genome {
    pub bits: Vec<bool>,
}

impl Genome {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn random<R: Rng>(len: usize, rng: &mut R) -> Self {
        Genome { bits: (0..len).map(|_| rng.random::<bool>()).collect() }
    }
}

impl fmt::Display for Genome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for Genome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::invalid(format!("invalid genome bit `{other}`"))),
            })
            .collect::<Result<Vec<bool>>>()?;
        Ok(Genome { bits })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::FilterBin;

    fn one_slot_layout() -> GenomeLayout {
        let group = GroupSpec {
            center_h: 1,
            center_w: 1,
            bins: vec![FilterBin { kernel: 1, stride: 1, count: 1 }],
            member_indices: vec![],
        };
        GenomeLayout::for_group(&group, GenomeConfig::default()).unwrap()
    }

    #[test]
    fn decode_spans_the_channel_range() {
        let layout = one_slot_layout();
        let decode = |s: &str| layout.decode(&s.parse().unwrap()).unwrap();
        assert_eq!(decode("00000000"), vec![8]);
        assert_eq!(decode("00000111"), vec![64]);
        assert_eq!(decode("11111111"), vec![2048]);
    }

    #[test]
    fn slots_expand_bin_counts_in_order() {
        let group = GroupSpec {
            center_h: 224,
            center_w: 224,
            bins: vec![
                FilterBin { kernel: 11, stride: 4, count: 1 },
                FilterBin { kernel: 3, stride: 1, count: 2 },
            ],
            member_indices: vec![],
        };
        let layout = GenomeLayout::for_group(&group, GenomeConfig::default()).unwrap();
        assert_eq!(layout.node_slots, vec![(11, 4), (3, 1), (3, 1)]);
        assert_eq!(layout.genome_len(), 24);
    }

    #[test]
    fn encode_rejects_unrepresentable_channels() {
        let layout = one_slot_layout();
        assert!(layout.encode(&[12]).is_err());
        assert!(layout.encode(&[0]).is_err());
        assert!(layout.encode(&[2056]).is_err());
        assert!(layout.encode(&[8, 8]).is_err());
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let layout = one_slot_layout();
        assert!(layout.decode(&"0000".parse().unwrap()).is_err());
    }
}
