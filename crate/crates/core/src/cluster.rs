//! Workload analysis: groups conv records by input spatial size via
//! agglomerative nearest-neighbor merging in log-area space, bins each
//! group exactly by (filter size, stride), computes per-group cost
//! targets, and applies proportional scaling.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cost::{CostVector, WarpModel};
use crate::error::{Error, Result};
use crate::trace::{ConvRecord, Trace};

/// A (filter size, stride) class within a group, with its occurrence count.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FilterBin {
    pub kernel: u64,
    pub stride: u64,
    pub count: u64,
}

/// Per-group cost targets entering the fitness function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupTargets {
    pub mac_real: u64,
    pub wp_real: u64,
}

/// One cluster of conv records sharing a nearby input size.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupSpec {
    pub center_h: u64,
    pub center_w: u64,
    /// Sorted by kernel descending, then stride descending; (kernel, stride) unique.
    pub bins: Vec<FilterBin>,
    /// Indices of contributing trace records, ascending. Empty after a
    /// ClusterSet file round trip; only the bins travel.
    pub member_indices: Vec<usize>,
}

impl GroupSpec {
    pub fn center_area(&self) -> u64 {
        self.center_h * self.center_w
    }

    /// Sum of bin counts: the number of conv node slots this group contributes.
    pub fn total_count(&self) -> u64 {
        self.bins.iter().map(|b| b.count).sum()
    }

    /// Bins expanded to one (kernel, stride) slot per occurrence, in bin order.
    pub fn slots(&self) -> Vec<(u64, u64)> {
        let mut slots = Vec::with_capacity(self.total_count() as usize);
        for bin in &self.bins {
            for _ in 0..bin.count {
                slots.push((bin.kernel, bin.stride));
            }
        }
        slots
    }
}

/// The full analysis output: groups ordered by center area descending plus
/// one target pair per group, tagged with the cost model that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterSet {
    pub groups: Vec<GroupSpec>,
    pub targets: Vec<GroupTargets>,
    pub cost_model_id: String,
}

impl ClusterSet {
    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn centers(&self) -> Vec<(u64, u64)> {
        self.groups.iter().map(|g| (g.center_h, g.center_w)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups.is_empty() {
            return Err(Error::invalid("cluster set has no groups"));
        }
        if self.groups.len() != self.targets.len() {
            return Err(Error::invalid("one targets entry required per group"));
        }
        self.cost_model_id.parse::<WarpModel>()?;
        for (i, g) in self.groups.iter().enumerate() {
            if g.center_h == 0 || g.center_w == 0 {
                return Err(Error::invalid(format!("group {}: zero center", i + 1)));
            }
            if g.bins.is_empty() {
                return Err(Error::invalid(format!("group {}: no bins", i + 1)));
            }
            for b in &g.bins {
                if b.kernel == 0 || b.stride == 0 || b.count == 0 {
                    return Err(Error::invalid(format!(
                        "group {}: bin fields must be positive",
                        i + 1
                    )));
                }
            }
            for pair in g.bins.windows(2) {
                let a = (pair[0].kernel, pair[0].stride);
                let b = (pair[1].kernel, pair[1].stride);
                if a <= b {
                    return Err(Error::invalid(format!(
                        "group {}: bins not sorted kernel-descending, stride-descending, unique",
                        i + 1
                    )));
                }
            }
            if self.targets[i].mac_real == 0 || self.targets[i].wp_real == 0 {
                return Err(Error::invalid(format!("group {}: targets must be positive", i + 1)));
            }
        }
        for pair in self.groups.windows(2) {
            if pair[0].center_area() <= pair[1].center_area() {
                return Err(Error::invalid(
                    "groups not strictly ordered by decreasing center area",
                ));
            }
        }
        Ok(())
    }
}

fn log_area(size: (u64, u64)) -> f64 {
    ((size.0 as f64) * (size.1 as f64)).ln()
}

fn log_area_distance(a: (u64, u64), b: (u64, u64)) -> f64 {
    (log_area(a) - log_area(b)).abs()
}

struct Cluster {
    center: (u64, u64),
    /// Distinct member sizes with their total occurrence weight.
    members: Vec<((u64, u64), u64)>,
}

impl Cluster {
    /// Occurrence-weighted medoid: the member size minimizing summed
    /// weighted log-area distance to all members. Ties go to the
    /// lexicographically smaller (h, w).
    fn recenter(&mut self) {
        let mut best: Option<((u64, u64), f64)> = None;
        for &(candidate, _) in &self.members {
            let cost: f64 = self
                .members
                .iter()
                .map(|&(other, weight)| weight as f64 * log_area_distance(candidate, other))
                .sum();
            let better = match best {
                None => true,
                Some((c, b)) => cost < b || (cost == b && candidate < c),
            };
            if better {
                best = Some((candidate, cost));
            }
        }
        self.center = best.expect("cluster has members").0;
    }
}

/// A size cluster: the medoid center and the trace-record indices it owns.
pub type SizeCluster = ((u64, u64), Vec<usize>);

/// Agglomerative nearest-neighbor clustering on input size.
///
/// Starts from one cluster per distinct (input_h, input_w) and repeatedly
/// merges the two clusters whose centers are nearest in log-area distance
/// while that distance is within `merge_tolerance * ln 2`. Merge ties
/// prefer the pair with lexicographically smaller centers. Returns
/// (center, member record indices) ordered by center area descending.
pub fn cluster_by_input_size(trace: &Trace, merge_tolerance: f64) -> Result<Vec<SizeCluster>> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    if !(0.0..1.0).contains(&merge_tolerance) {
        return Err(Error::invalid(format!(
            "merge_tolerance must be in [0, 1), got {merge_tolerance}"
        )));
    }

    let mut weights: BTreeMap<(u64, u64), u64> = BTreeMap::new();
    for r in &trace.records {
        *weights.entry((r.input_h, r.input_w)).or_insert(0) += r.count;
    }
    let mut clusters: Vec<Cluster> = weights
        .into_iter()
        .map(|(size, weight)| Cluster { center: size, members: vec![(size, weight)] })
        .collect();

    struct MergeCandidate {
        distance: f64,
        key: ((u64, u64), (u64, u64)),
        pair: (usize, usize),
    }

    let threshold = merge_tolerance * std::f64::consts::LN_2;
    while clusters.len() > 1 {
        let mut nearest: Option<MergeCandidate> = None;
        for i in 0..clusters.len() {
            for j in (i + 1)..clusters.len() {
                let distance = log_area_distance(clusters[i].center, clusters[j].center);
                let lo = clusters[i].center.min(clusters[j].center);
                let hi = clusters[i].center.max(clusters[j].center);
                let key = (lo, hi);
                let closer = match &nearest {
                    None => true,
                    Some(best) => {
                        distance < best.distance || (distance == best.distance && key < best.key)
                    }
                };
                if closer {
                    nearest = Some(MergeCandidate { distance, key, pair: (i, j) });
                }
            }
        }
        let best = nearest.expect("at least two clusters");
        let (i, j) = best.pair;
        if best.distance > threshold {
            break;
        }
        let absorbed = clusters.swap_remove(j);
        clusters[i].members.extend(absorbed.members);
        clusters[i].members.sort_unstable();
        clusters[i].recenter();
    }

    // Assign each record to the cluster owning its exact input size.
    let mut owner: BTreeMap<(u64, u64), usize> = BTreeMap::new();
    for (ci, cluster) in clusters.iter().enumerate() {
        for &(size, _) in &cluster.members {
            owner.insert(size, ci);
        }
    }
    let mut assignments: Vec<Vec<usize>> = vec![Vec::new(); clusters.len()];
    for (ri, r) in trace.records.iter().enumerate() {
        assignments[owner[&(r.input_h, r.input_w)]].push(ri);
    }

    let mut out: Vec<SizeCluster> = clusters
        .iter()
        .zip(assignments)
        .map(|(c, members)| (c.center, members))
        .collect();
    // Equal-area clusters always merge (distance 0 never exceeds the
    // threshold), so area ordering is strict.
    out.sort_by(|a, b| {
        let area = |c: &(u64, u64)| c.0 * c.1;
        area(&b.0).cmp(&area(&a.0)).then(b.0.cmp(&a.0))
    });
    Ok(out)
}

/// Exact second clustering pass: groups members by (kernel, stride), sums
/// occurrence counts, and sorts kernel-descending then stride-descending.
pub fn bin_group(records: &[ConvRecord]) -> Vec<FilterBin> {
    let mut bins: BTreeMap<(u64, u64), u64> = BTreeMap::new();
    for r in records {
        *bins.entry((r.kernel, r.stride)).or_insert(0) += r.count;
    }
    let mut out: Vec<FilterBin> = bins
        .into_iter()
        .map(|((kernel, stride), count)| FilterBin { kernel, stride, count })
        .collect();
    out.sort_by(|a, b| b.kernel.cmp(&a.kernel).then(b.stride.cmp(&a.stride)));
    out
}

/// Exact integer sums of member costs; the (MAC_real, WP_real) pair.
pub fn compute_group_targets(records: &[ConvRecord], model: WarpModel) -> Result<GroupTargets> {
    if records.is_empty() {
        return Err(Error::invalid("compute_group_targets requires members"));
    }
    let mut total = CostVector::ZERO;
    for r in records {
        total = total.checked_add(r.cost(model)?)?;
    }
    Ok(GroupTargets { mac_real: total.mac, wp_real: total.wp })
}

/// Runs both clustering passes and target computation over a trace.
pub fn build_cluster_set(
    trace: &Trace,
    merge_tolerance: f64,
    model: WarpModel,
) -> Result<ClusterSet> {
    let clusters = cluster_by_input_size(trace, merge_tolerance)?;
    let mut groups = Vec::with_capacity(clusters.len());
    let mut targets = Vec::with_capacity(clusters.len());
    for (center, member_indices) in clusters {
        let members: Vec<ConvRecord> =
            member_indices.iter().map(|&i| trace.records[i]).collect();
        groups.push(GroupSpec {
            center_h: center.0,
            center_w: center.1,
            bins: bin_group(&members),
            member_indices,
        });
        targets.push(compute_group_targets(&members, model)?);
    }
    let cs = ClusterSet { groups, targets, cost_model_id: model.id().to_string() };
    cs.validate()?;
    Ok(cs)
}

/// Proportional shrink: bin counts become `max(1, round(count * factor))`
/// and target components `max(1, round(target * factor))`; centers are
/// unchanged. Factor 1 is the identity.
pub fn scale_clusters(cs: &ClusterSet, factor: f64) -> Result<ClusterSet> {
    if !(factor > 0.0 && factor <= 1.0) {
        return Err(Error::invalid(format!("scale factor must be in (0, 1], got {factor}")));
    }
    let scale = |v: u64| -> u64 { ((v as f64 * factor).round() as u64).max(1) };
    let mut out = cs.clone();
    for g in &mut out.groups {
        for b in &mut g.bins {
            b.count = scale(b.count);
        }
    }
    for t in &mut out.targets {
        t.mac_real = scale(t.mac_real);
        t.wp_real = scale(t.wp_real);
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct GroupDto {
    center_h: u64,
    center_w: u64,
    bins: Vec<FilterBin>,
    targets: GroupTargets,
}

#[derive(Serialize, Deserialize)]
struct ClusterSetDto {
    cost_model_id: String,
    groups: Vec<GroupDto>,
}

impl ClusterSet {
    pub fn to_json(&self) -> String {
        let dto = ClusterSetDto {
            cost_model_id: self.cost_model_id.clone(),
            groups: self
                .groups
                .iter()
                .zip(&self.targets)
                .map(|(g, t)| GroupDto {
                    center_h: g.center_h,
                    center_w: g.center_w,
                    bins: g.bins.clone(),
                    targets: *t,
                })
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&dto).expect("cluster set serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<ClusterSet> {
        let dto: ClusterSetDto = serde_json::from_str(text)
            .map_err(|e| Error::invalid(format!("invalid cluster set JSON: {e}")))?;
        let cs = ClusterSet {
            targets: dto.groups.iter().map(|g| g.targets).collect(),
            groups: dto
                .groups
                .into_iter()
                .map(|g| GroupSpec {
                    center_h: g.center_h,
                    center_w: g.center_w,
                    bins: g.bins,
                    member_indices: Vec::new(),
                })
                .collect(),
            cost_model_id: dto.cost_model_id,
        };
        cs.validate()?;
        Ok(cs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::trace_totals;

    fn record(size: u64, k: u64, s: u64, count: u64) -> ConvRecord {
        ConvRecord::new(size, size, 16, k, s, 32, count).unwrap()
    }

    /// The six-group layout observed when clustering a mix of three classic
    /// ILSVRC-era models: centers 224..7, bins per group as profiled.
    pub(crate) fn classic_mix_trace() -> Trace {
        let rows: &[(u64, u64, u64, u64)] = &[
            (224, 11, 4, 1),
            (224, 7, 2, 1),
            (224, 3, 1, 2),
            (112, 3, 1, 2),
            (56, 3, 1, 4),
            (56, 1, 1, 1),
            (28, 5, 1, 4),
            (28, 3, 1, 5),
            (28, 1, 1, 8),
            (14, 5, 1, 3),
            (14, 3, 1, 13),
            (14, 1, 1, 22),
            (7, 3, 1, 2),
            (7, 1, 1, 10),
        ];
        Trace::new(
            rows.iter().map(|&(size, k, s, c)| record(size, k, s, c)).collect(),
            "classic mix",
        )
    }

    #[test]
    fn distinct_sizes_stay_separate_at_zero_tolerance() {
        let clusters = cluster_by_input_size(&classic_mix_trace(), 0.0).unwrap();
        let centers: Vec<u64> = clusters.iter().map(|(c, _)| c.0).collect();
        assert_eq!(centers, vec![224, 112, 56, 28, 14, 7]);
    }

    #[test]
    fn single_size_forms_single_group() {
        let trace = Trace::new(vec![record(64, 3, 1, 5)], "t");
        let clusters = cluster_by_input_size(&trace, 0.0).unwrap();
        assert_eq!(clusters, vec![((64, 64), vec![0])]);
    }

    #[test]
    fn near_sizes_merge_to_higher_occurrence_medoid() {
        let trace = Trace::new(vec![record(224, 3, 1, 5), record(223, 3, 1, 2)], "t");
        // log-area distance is 2*ln(224/223) ~ 0.009; tolerance 0.05 covers it.
        let clusters = cluster_by_input_size(&trace, 0.05).unwrap();
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].0, (224, 224));
        assert_eq!(clusters[0].1, vec![0, 1]);
        // Flip the weights and the medoid follows.
        let trace = Trace::new(vec![record(224, 3, 1, 2), record(223, 3, 1, 5)], "t");
        let clusters = cluster_by_input_size(&trace, 0.05).unwrap();
        assert_eq!(clusters[0].0, (223, 223));
    }

    #[test]
    fn clustering_ignores_record_order() {
        let mut reversed = classic_mix_trace();
        reversed.records.reverse();
        let a = build_cluster_set(&classic_mix_trace(), 0.0, WarpModel::OutputThreadV1).unwrap();
        let b = build_cluster_set(&reversed, 0.0, WarpModel::OutputThreadV1).unwrap();
        assert_eq!(a.centers(), b.centers());
        assert_eq!(a.targets, b.targets);
        for (ga, gb) in a.groups.iter().zip(&b.groups) {
            assert_eq!(ga.bins, gb.bins);
        }
    }

    #[test]
    fn bins_group_exactly_and_sort_descending() {
        let members = vec![
            record(224, 3, 1, 1),
            record(224, 11, 4, 1),
            record(224, 7, 2, 1),
            record(224, 3, 1, 1),
        ];
        assert_eq!(
            bin_group(&members),
            vec![
                FilterBin { kernel: 11, stride: 4, count: 1 },
                FilterBin { kernel: 7, stride: 2, count: 1 },
                FilterBin { kernel: 3, stride: 1, count: 2 },
            ]
        );
        let members = vec![record(14, 5, 1, 3), record(14, 3, 1, 13), record(14, 1, 1, 22)];
        assert_eq!(
            bin_group(&members),
            vec![
                FilterBin { kernel: 5, stride: 1, count: 3 },
                FilterBin { kernel: 3, stride: 1, count: 13 },
                FilterBin { kernel: 1, stride: 1, count: 22 },
            ]
        );
        assert_eq!(
            bin_group(&[record(7, 1, 1, 1)]),
            vec![FilterBin { kernel: 1, stride: 1, count: 1 }]
        );
    }

    #[test]
    fn group_targets_match_direct_arithmetic() {
        let model = WarpModel::OutputThreadV1;
        let unit = ConvRecord::new(1, 1, 1, 1, 1, 1, 1).unwrap();
        assert_eq!(
            compute_group_targets(&[unit], model).unwrap(),
            GroupTargets { mac_real: 1, wp_real: 1 }
        );
        let vgg = ConvRecord::new(224, 224, 3, 3, 1, 64, 1).unwrap();
        assert_eq!(compute_group_targets(&[vgg], model).unwrap().mac_real, 86_704_128);
        // Two identical records equal one record at double count.
        let doubled = ConvRecord::new(224, 224, 3, 3, 1, 64, 2).unwrap();
        assert_eq!(
            compute_group_targets(&[vgg, vgg], model).unwrap(),
            compute_group_targets(&[doubled], model).unwrap()
        );
    }

    #[test]
    fn group_targets_sum_to_trace_totals() {
        let model = WarpModel::OutputThreadV1;
        let trace = classic_mix_trace();
        let cs = build_cluster_set(&trace, 0.0, model).unwrap();
        let mut sum = CostVector::ZERO;
        for t in &cs.targets {
            sum = sum.checked_add(CostVector::new(t.mac_real, t.wp_real)).unwrap();
        }
        assert_eq!(sum, trace_totals(&trace, model).unwrap());
        let total: u64 = cs.groups.iter().map(|g| g.total_count()).sum();
        assert_eq!(total, trace.total_count());
    }

    #[test]
    fn scaling_rounds_and_floors_at_one() {
        let cs = build_cluster_set(&classic_mix_trace(), 0.0, WarpModel::OutputThreadV1).unwrap();
        assert_eq!(scale_clusters(&cs, 1.0).unwrap(), cs);
        let half = scale_clusters(&cs, 0.5).unwrap();
        // Group 5 of the classic mix: counts 3/13/22 -> 2/7/11 (round half up), group 1: 1/1/2 -> 1/1/1.
        let g5 = &half.groups[4];
        assert_eq!(g5.bins.iter().map(|b| b.count).collect::<Vec<_>>(), vec![2, 7, 11]);
        let tiny = scale_clusters(&cs, 0.001).unwrap();
        assert!(tiny.groups.iter().all(|g| g.bins.iter().all(|b| b.count >= 1)));
        assert_eq!(
            half.centers(),
            cs.centers(),
            "scaling must not move group centers"
        );
    }

    #[test]
    fn json_round_trip_preserves_structure() {
        let cs = build_cluster_set(&classic_mix_trace(), 0.0, WarpModel::OutputThreadV1).unwrap();
        let json = cs.to_json();
        assert!(!json.contains('e') || json.contains("center"), "no exponent notation");
        let back = ClusterSet::from_json(&json).unwrap();
        assert_eq!(back.cost_model_id, cs.cost_model_id);
        assert_eq!(back.targets, cs.targets);
        assert_eq!(back.centers(), cs.centers());
        for (a, b) in back.groups.iter().zip(&cs.groups) {
            assert_eq!(a.bins, b.bins);
        }
    }

    #[test]
    fn out_of_range_tolerance_is_rejected() {
        let trace = classic_mix_trace();
        assert!(cluster_by_input_size(&trace, 1.0).is_err());
        assert!(cluster_by_input_size(&trace, -0.1).is_err());
    }
}
