//! Synthetic network assembly: intra-group chains ordered by filter size,
//! parallel branches for stride-reducing nodes, concat merges, inter-group
//! pooling, and a terminal FC+softmax head. Also graph validation, JSON
//! serialization, and DOT export.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterSet, GroupSpec};
use crate::cost::{group_cost, ConvShape, CostVector, WarpModel};
use crate::error::{Error, Result};

/// Spatial resize realization for PL nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PoolMode {
    /// Max pooling with kernel = stride = input/target (integral ratio).
    #[serde(rename = "max")]
    Max,
    /// Adaptive max pooling to the exact target extent.
    #[serde(rename = "adaptive_max")]
    AdaptiveMax,
}

/// Node operation vocabulary with op-specific parameters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", content = "params")]
pub enum NodeOp {
    #[serde(rename = "INPUT")]
    Input,
    #[serde(rename = "CONV")]
    Conv { kernel: u64, stride: u64, in_channels: u64, out_channels: u64 },
    #[serde(rename = "BN")]
    BatchNorm,
    #[serde(rename = "RELU")]
    Relu,
    #[serde(rename = "CA")]
    Concat,
    #[serde(rename = "PL")]
    Pool { target_h: u64, target_w: u64, mode: PoolMode },
    #[serde(rename = "FC")]
    FullyConnected { in_features: u64, out_features: u64 },
    #[serde(rename = "SOFTMAX")]
    Softmax,
}

impl NodeOp {
    pub fn name(&self) -> &'static str {
        match self {
            NodeOp::Input => "INPUT",
            NodeOp::Conv { .. } => "CONV",
            NodeOp::BatchNorm => "BN",
            NodeOp::Relu => "RELU",
            NodeOp::Concat => "CA",
            NodeOp::Pool { .. } => "PL",
            NodeOp::FullyConnected { .. } => "FC",
            NodeOp::Softmax => "SOFTMAX",
        }
    }
}

/// One graph node with its derived output tensor geometry.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: String,
    #[serde(flatten)]
    pub op: NodeOp,
    pub out_h: u64,
    pub out_w: u64,
    pub out_channels: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphMetadata {
    pub cost_model_id: String,
    pub seed: u64,
    /// Achieved conv cost per group, in group order.
    pub group_costs: Vec<CostVector>,
}

/// The assembled synthetic network. Nodes are topologically sorted with
/// ties broken by id; serialization is deterministic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelGraph {
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<(String, String)>,
    pub metadata: GraphMetadata,
}

/// A produced tensor: the node that emits it plus its geometry.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TensorRef {
    pub node_id: String,
    pub h: u64,
    pub w: u64,
    pub channels: u64,
}

/// A group's slots split into the stride-1 main chain and stride>1
/// branch heads, both in kernel-descending slot order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupPlan {
    pub slots: Vec<(u64, u64)>,
    pub chain: Vec<usize>,
    pub branches: Vec<usize>,
}

impl GroupPlan {
    pub fn new(group: &GroupSpec) -> Self {
        let slots = group.slots();
        let chain = slots
            .iter()
            .enumerate()
            .filter(|(_, &(_, s))| s == 1)
            .map(|(i, _)| i)
            .collect();
        let branches = slots
            .iter()
            .enumerate()
            .filter(|(_, &(_, s))| s > 1)
            .map(|(i, _)| i)
            .collect();
        GroupPlan { slots, chain, branches }
    }

    /// Conv shapes indexed by slot, exactly as the assembled graph realizes
    /// them: the first chain node and every branch head read the group
    /// input; later chain nodes read their predecessor's output.
    pub fn conv_shapes(
        &self,
        input: (u64, u64),
        input_channels: u64,
        channels: &[u64],
    ) -> Result<Vec<ConvShape>> {
        if channels.len() != self.slots.len() {
            return Err(Error::invalid(format!(
                "expected {} channel counts, got {}",
                self.slots.len(),
                channels.len()
            )));
        }
        let mut shapes = vec![None; self.slots.len()];
        let mut upstream = input_channels;
        for &i in &self.chain {
            let (kernel, stride) = self.slots[i];
            shapes[i] =
                Some(ConvShape::new(input.0, input.1, upstream, kernel, stride, channels[i])?);
            upstream = channels[i];
        }
        for &i in &self.branches {
            let (kernel, stride) = self.slots[i];
            shapes[i] = Some(ConvShape::new(
                input.0,
                input.1,
                input_channels,
                kernel,
                stride,
                channels[i],
            )?);
        }
        Ok(shapes.into_iter().map(|s| s.expect("every slot planned")).collect())
    }

    /// Slot indices whose outputs leave the group: the main-chain tail
    /// (when a chain exists) followed by every branch head.
    pub fn outgoing_slots(&self) -> Vec<usize> {
        let mut out = Vec::new();
        if let Some(&tail) = self.chain.last() {
            out.push(tail);
        }
        out.extend(&self.branches);
        out
    }
}

/// Destination group for a tensor leaving `source`: the first later group
/// whose center area does not exceed the tensor area (pooling never
/// upsamples, so larger centers are skipped; an exact-size center is
/// preferred by construction since centers strictly shrink).
pub fn route_tensor(centers: &[(u64, u64)], source: usize, h: u64, w: u64) -> Option<usize> {
    let area = h * w;
    ((source + 1)..centers.len()).find(|&t| centers[t].0 * centers[t].1 <= area)
}

/// Everything `assemble_group` produced for one group.
#[derive(Clone, Debug)]
pub struct GroupAssembly {
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<(String, String)>,
    pub outgoing: Vec<TensorRef>,
    /// Conv shapes by slot, for cost accounting.
    pub conv_shapes: Vec<ConvShape>,
}

/// Assembles one group's subgraph from its incoming tensors.
///
/// Incoming tensors must share a spatial size; two or more are merged by a
/// CA node. Stride-1 slots form a CONV+BN+RELU chain in kernel-descending
/// order; stride>1 slots branch from the group input in parallel, each with
/// its own BN+RELU.
pub fn assemble_group(
    group_number: usize,
    group: &GroupSpec,
    channels: &[u64],
    incoming: &[TensorRef],
) -> Result<GroupAssembly> {
    if incoming.is_empty() {
        return Err(Error::construction(format!("group {group_number} receives no input tensor")));
    }
    let (h, w) = (incoming[0].h, incoming[0].w);
    for t in incoming {
        if (t.h, t.w) != (h, w) {
            return Err(Error::construction(format!(
                "concat over mismatched spatial sizes at group {group_number}: {} is {}x{}, {} is {}x{}",
                incoming[0].node_id, h, w, t.node_id, t.h, t.w
            )));
        }
    }

    let mut nodes = Vec::new();
    let mut edges = Vec::new();

    let group_input = if incoming.len() >= 2 {
        let id = format!("g{group_number}_ca0");
        let channels: u64 = incoming.iter().map(|t| t.channels).sum();
        nodes.push(GraphNode {
            id: id.clone(),
            op: NodeOp::Concat,
            out_h: h,
            out_w: w,
            out_channels: channels,
        });
        for t in incoming {
            edges.push((t.node_id.clone(), id.clone()));
        }
        TensorRef { node_id: id, h, w, channels }
    } else {
        incoming[0].clone()
    };

    let plan = GroupPlan::new(group);
    let shapes = plan.conv_shapes((h, w), group_input.channels, channels)?;

    // Chain nodes feed forward; branches all read the group input.
    let mut relu_refs: Vec<Option<TensorRef>> = vec![None; plan.slots.len()];
    let mut upstream = group_input.clone();
    for &slot in &plan.chain {
        let relu = attach_slot(group_number, slot, &shapes[slot], &upstream, &mut nodes, &mut edges);
        upstream = relu.clone();
        relu_refs[slot] = Some(relu);
    }
    for &slot in &plan.branches {
        let relu =
            attach_slot(group_number, slot, &shapes[slot], &group_input, &mut nodes, &mut edges);
        relu_refs[slot] = Some(relu);
    }

    let outgoing = plan
        .outgoing_slots()
        .into_iter()
        .map(|slot| relu_refs[slot].clone().expect("outgoing slot attached"))
        .collect();

    Ok(GroupAssembly { nodes, edges, outgoing, conv_shapes: shapes })
}

/// Emits one CONV+BN+RELU triple for a slot and returns the RELU's tensor.
fn attach_slot(
    group_number: usize,
    slot: usize,
    shape: &ConvShape,
    upstream: &TensorRef,
    nodes: &mut Vec<GraphNode>,
    edges: &mut Vec<(String, String)>,
) -> TensorRef {
    let (oh, ow, oc) = (shape.out_h(), shape.out_w(), shape.out_channels);
    let conv_id = format!("g{group_number}_conv{slot}");
    let bn_id = format!("g{group_number}_bn{slot}");
    let relu_id = format!("g{group_number}_relu{slot}");
    nodes.push(GraphNode {
        id: conv_id.clone(),
        op: NodeOp::Conv {
            kernel: shape.kernel,
            stride: shape.stride,
            in_channels: shape.in_channels,
            out_channels: shape.out_channels,
        },
        out_h: oh,
        out_w: ow,
        out_channels: oc,
    });
    nodes.push(GraphNode {
        id: bn_id.clone(),
        op: NodeOp::BatchNorm,
        out_h: oh,
        out_w: ow,
        out_channels: oc,
    });
    nodes.push(GraphNode {
        id: relu_id.clone(),
        op: NodeOp::Relu,
        out_h: oh,
        out_w: ow,
        out_channels: oc,
    });
    edges.push((upstream.node_id.clone(), conv_id.clone()));
    edges.push((conv_id, bn_id.clone()));
    edges.push((bn_id, relu_id.clone()));
    TensorRef { node_id: relu_id, h: oh, w: ow, channels: oc }
}

#[derive(Clone, Copy, Debug)]
pub struct AssembleOptions {
    pub num_classes: u64,
    pub image_channels: u64,
    pub warp_model: WarpModel,
    pub seed: u64,
}

impl Default for AssembleOptions {
    fn default() -> Self {
        AssembleOptions {
            num_classes: 1000,
            image_channels: 3,
            warp_model: WarpModel::OutputThreadV1,
            seed: 0,
        }
    }
}

fn pool_mode(in_h: u64, in_w: u64, target_h: u64, target_w: u64) -> PoolMode {
    if in_h.is_multiple_of(target_h) && in_w.is_multiple_of(target_w) {
        PoolMode::Max
    } else {
        PoolMode::AdaptiveMax
    }
}

/// Builds the full synthetic network from a cluster set and per-group
/// channel assignments.
///
/// Groups are assembled in order. Each outgoing tensor routes forward per
/// `route_tensor`, pooled to the destination center when sizes differ.
/// Outputs of the final group are pooled to 1x1, concatenated when several,
/// and fed through FC and SOFTMAX.
pub fn assemble_network(
    cs: &ClusterSet,
    assignments: &[Vec<u64>],
    opts: &AssembleOptions,
) -> Result<ModelGraph> {
    cs.validate()?;
    if assignments.len() != cs.groups.len() {
        return Err(Error::invalid(format!(
            "expected {} channel assignments, got {}",
            cs.groups.len(),
            assignments.len()
        )));
    }

    let centers = cs.centers();
    let mut nodes = Vec::new();
    let mut edges: Vec<(String, String)> = Vec::new();

    let input = TensorRef {
        node_id: "input".to_string(),
        h: centers[0].0,
        w: centers[0].1,
        channels: opts.image_channels,
    };
    nodes.push(GraphNode {
        id: input.node_id.clone(),
        op: NodeOp::Input,
        out_h: input.h,
        out_w: input.w,
        out_channels: input.channels,
    });

    let mut arrivals: Vec<Vec<TensorRef>> = vec![Vec::new(); cs.groups.len()];
    arrivals[0].push(input);
    let mut head_arrivals: Vec<TensorRef> = Vec::new();
    let mut group_costs = Vec::with_capacity(cs.groups.len());

    for (gi, group) in cs.groups.iter().enumerate() {
        let number = gi + 1;
        let mut incoming = Vec::new();
        for (pi, tensor) in arrivals[gi].iter().enumerate() {
            let (ch, cw) = (group.center_h, group.center_w);
            if (tensor.h, tensor.w) == (ch, cw) {
                incoming.push(tensor.clone());
                continue;
            }
            if ch > tensor.h || cw > tensor.w {
                return Err(Error::construction(format!(
                    "tensor {} ({}x{}) cannot pool up to group {number} center {ch}x{cw}",
                    tensor.node_id, tensor.h, tensor.w
                )));
            }
            let id = format!("g{number}_pl{pi}");
            nodes.push(GraphNode {
                id: id.clone(),
                op: NodeOp::Pool {
                    target_h: ch,
                    target_w: cw,
                    mode: pool_mode(tensor.h, tensor.w, ch, cw),
                },
                out_h: ch,
                out_w: cw,
                out_channels: tensor.channels,
            });
            edges.push((tensor.node_id.clone(), id.clone()));
            incoming.push(TensorRef { node_id: id, h: ch, w: cw, channels: tensor.channels });
        }

        let assembly = assemble_group(number, group, &assignments[gi], &incoming)?;
        nodes.extend(assembly.nodes);
        edges.extend(assembly.edges);
        let with_count: Vec<(ConvShape, u64)> =
            assembly.conv_shapes.iter().map(|&s| (s, 1)).collect();
        group_costs.push(group_cost(&with_count, opts.warp_model)?);

        for tensor in assembly.outgoing {
            match route_tensor(&centers, gi, tensor.h, tensor.w) {
                Some(t) => arrivals[t].push(tensor),
                None if gi + 1 == cs.groups.len() => head_arrivals.push(tensor),
                None => {
                    return Err(Error::construction(format!(
                        "tensor {} ({}x{}) from group {number} is smaller than every remaining group center",
                        tensor.node_id, tensor.h, tensor.w
                    )))
                }
            }
        }
    }

    // Classifier head: global pool to 1x1, concat when several tails, FC, softmax.
    let mut pooled = Vec::new();
    for (pi, tensor) in head_arrivals.iter().enumerate() {
        if (tensor.h, tensor.w) == (1, 1) {
            pooled.push(tensor.clone());
            continue;
        }
        let id = format!("head_pl{pi}");
        nodes.push(GraphNode {
            id: id.clone(),
            op: NodeOp::Pool { target_h: 1, target_w: 1, mode: PoolMode::Max },
            out_h: 1,
            out_w: 1,
            out_channels: tensor.channels,
        });
        edges.push((tensor.node_id.clone(), id.clone()));
        pooled.push(TensorRef { node_id: id, h: 1, w: 1, channels: tensor.channels });
    }
    let head_input = if pooled.len() >= 2 {
        let id = "head_ca0".to_string();
        let channels: u64 = pooled.iter().map(|t| t.channels).sum();
        nodes.push(GraphNode {
            id: id.clone(),
            op: NodeOp::Concat,
            out_h: 1,
            out_w: 1,
            out_channels: channels,
        });
        for t in &pooled {
            edges.push((t.node_id.clone(), id.clone()));
        }
        TensorRef { node_id: id, h: 1, w: 1, channels }
    } else {
        pooled.into_iter().next().expect("final group emits at least one tensor")
    };

    let fc_id = "head_fc0".to_string();
    nodes.push(GraphNode {
        id: fc_id.clone(),
        op: NodeOp::FullyConnected {
            in_features: head_input.channels,
            out_features: opts.num_classes,
        },
        out_h: 1,
        out_w: 1,
        out_channels: opts.num_classes,
    });
    edges.push((head_input.node_id.clone(), fc_id.clone()));
    let softmax_id = "head_softmax0".to_string();
    nodes.push(GraphNode {
        id: softmax_id.clone(),
        op: NodeOp::Softmax,
        out_h: 1,
        out_w: 1,
        out_channels: opts.num_classes,
    });
    edges.push((fc_id, softmax_id));

    let mut graph = ModelGraph {
        nodes,
        edges,
        metadata: GraphMetadata {
            cost_model_id: opts.warp_model.id().to_string(),
            seed: opts.seed,
            group_costs,
        },
    };
    normalize_order(&mut graph);
    Ok(graph)
}

/// Topologically sorts nodes (ties by id) and orders edges by endpoint
/// positions, making serialization order independent of construction order.
fn normalize_order(graph: &mut ModelGraph) {
    let index: HashMap<&str, usize> =
        graph.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
    let mut indegree = vec![0usize; graph.nodes.len()];
    let mut successors: Vec<Vec<usize>> = vec![Vec::new(); graph.nodes.len()];
    for (src, dst) in &graph.edges {
        let (s, d) = (index[src.as_str()], index[dst.as_str()]);
        successors[s].push(d);
        indegree[d] += 1;
    }
    let mut ready: BTreeSet<(&str, usize)> = indegree
        .iter()
        .enumerate()
        .filter(|&(_, &d)| d == 0)
        .map(|(i, _)| (graph.nodes[i].id.as_str(), i))
        .collect();
    let mut order = Vec::with_capacity(graph.nodes.len());
    while let Some(&(id, i)) = ready.iter().next() {
        ready.remove(&(id, i));
        order.push(i);
        for &next in &successors[i] {
            indegree[next] -= 1;
            if indegree[next] == 0 {
                ready.insert((graph.nodes[next].id.as_str(), next));
            }
        }
    }
    if order.len() != graph.nodes.len() {
        // Cyclic input; leave construction order (validation reports the cycle).
        return;
    }
    let position: HashMap<usize, usize> =
        order.iter().enumerate().map(|(pos, &i)| (i, pos)).collect();
    let mut nodes: Vec<(usize, GraphNode)> = graph.nodes.drain(..).enumerate().collect();
    nodes.sort_by_key(|(i, _)| position[i]);
    graph.nodes = nodes.into_iter().map(|(_, n)| n).collect();
    let index: HashMap<&str, usize> =
        graph.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
    graph.edges.sort_by_key(|(src, dst)| (index[src.as_str()], index[dst.as_str()]));
}

impl ModelGraph {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("graph serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<ModelGraph> {
        serde_json::from_str(text).map_err(|e| Error::invalid(format!("invalid model JSON: {e}")))
    }

    /// DOT rendering; CONV nodes carry their kernel/stride/channel label.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph model {\n  rankdir=TB;\n");
        for n in &self.nodes {
            let label = match &n.op {
                NodeOp::Conv { kernel, stride, .. } => {
                    format!("CONV\\nk{kernel}s{stride} c{}", n.out_channels)
                }
                op => op.name().to_string(),
            };
            out.push_str(&format!("  \"{}\" [label=\"{label}\"];\n", n.id));
        }
        for (src, dst) in &self.edges {
            out.push_str(&format!("  \"{src}\" -> \"{dst}\";\n"));
        }
        out.push_str("}\n");
        out
    }
}

fn group_of(id: &str) -> Option<usize> {
    let rest = id.strip_prefix('g')?;
    let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
    if digits.is_empty() || !rest[digits.len()..].starts_with('_') {
        return None;
    }
    digits.parse().ok()
}

/// Checks every structural invariant of a graph; violations are returned
/// as data, not errors. Passing the cluster set additionally checks that
/// per-group (kernel, stride) multisets match the bins exactly and that
/// recorded group costs match the conv nodes.
pub fn validate_graph(graph: &ModelGraph, cs: Option<&ClusterSet>) -> Vec<String> {
    let mut violations = Vec::new();

    let mut index: HashMap<&str, usize> = HashMap::new();
    for (i, n) in graph.nodes.iter().enumerate() {
        if index.insert(n.id.as_str(), i).is_some() {
            violations.push(format!("duplicate node id {}", n.id));
        }
    }

    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); graph.nodes.len()];
    let mut succs: Vec<Vec<usize>> = vec![Vec::new(); graph.nodes.len()];
    let mut edges_ok = true;
    for (src, dst) in &graph.edges {
        match (index.get(src.as_str()), index.get(dst.as_str())) {
            (Some(&s), Some(&d)) => {
                succs[s].push(d);
                preds[d].push(s);
            }
            _ => {
                violations.push(format!("edge ({src} -> {dst}) references unknown node"));
                edges_ok = false;
            }
        }
    }

    let inputs: Vec<usize> = graph
        .nodes
        .iter()
        .enumerate()
        .filter(|(_, n)| matches!(n.op, NodeOp::Input))
        .map(|(i, _)| i)
        .collect();
    let softmaxes: Vec<usize> = graph
        .nodes
        .iter()
        .enumerate()
        .filter(|(_, n)| matches!(n.op, NodeOp::Softmax))
        .map(|(i, _)| i)
        .collect();
    if inputs.len() != 1 {
        violations.push(format!("expected exactly one INPUT node, found {}", inputs.len()));
    }
    if softmaxes.len() != 1 {
        violations.push(format!("expected exactly one SOFTMAX node, found {}", softmaxes.len()));
    }

    if !edges_ok {
        return violations;
    }

    // Cycle check via Kahn's algorithm.
    let mut indegree: Vec<usize> = preds.iter().map(Vec::len).collect();
    let mut queue: Vec<usize> =
        indegree.iter().enumerate().filter(|&(_, &d)| d == 0).map(|(i, _)| i).collect();
    let mut visited = 0;
    while let Some(i) = queue.pop() {
        visited += 1;
        for &next in &succs[i] {
            indegree[next] -= 1;
            if indegree[next] == 0 {
                queue.push(next);
            }
        }
    }
    if visited != graph.nodes.len() {
        violations.push("graph contains a cycle".to_string());
        return violations;
    }

    if let (&[input], &[softmax]) = (inputs.as_slice(), softmaxes.as_slice()) {
        let reach = |starts: &[usize], links: &Vec<Vec<usize>>| -> HashSet<usize> {
            let mut seen: HashSet<usize> = starts.iter().copied().collect();
            let mut stack: Vec<usize> = starts.to_vec();
            while let Some(i) = stack.pop() {
                for &next in &links[i] {
                    if seen.insert(next) {
                        stack.push(next);
                    }
                }
            }
            seen
        };
        let from_input = reach(&[input], &succs);
        let to_softmax = reach(&[softmax], &preds);
        for (i, n) in graph.nodes.iter().enumerate() {
            if !from_input.contains(&i) {
                violations.push(format!("node {} unreachable from INPUT", n.id));
            }
            if !to_softmax.contains(&i) {
                violations.push(format!("node {} does not reach SOFTMAX", n.id));
            }
        }
    }

    for (i, n) in graph.nodes.iter().enumerate() {
        let p = &preds[i];
        let geometry_of = |j: usize| {
            let m = &graph.nodes[j];
            (m.out_h, m.out_w, m.out_channels)
        };
        match &n.op {
            NodeOp::Input => {
                if !p.is_empty() {
                    violations.push(format!("INPUT node {} has predecessors", n.id));
                }
            }
            NodeOp::Conv { kernel, stride, in_channels, out_channels } => {
                if *kernel == 0 || *stride == 0 {
                    violations.push(format!("conv {} has zero kernel or stride", n.id));
                    continue;
                }
                let [up] = p.as_slice() else {
                    violations.push(format!("conv {} must have exactly one input", n.id));
                    continue;
                };
                let (uh, uw, uc) = geometry_of(*up);
                if *in_channels != uc {
                    violations.push(format!(
                        "conv {} declares in_channels {} but upstream {} provides {}",
                        n.id, in_channels, graph.nodes[*up].id, uc
                    ));
                }
                let expect = (uh.div_ceil(*stride), uw.div_ceil(*stride), *out_channels);
                if (n.out_h, n.out_w, n.out_channels) != expect {
                    violations.push(format!(
                        "conv {} geometry {}x{}x{} does not match expected {}x{}x{}",
                        n.id, n.out_h, n.out_w, n.out_channels, expect.0, expect.1, expect.2
                    ));
                }
            }
            NodeOp::BatchNorm | NodeOp::Relu | NodeOp::Softmax => {
                let [up] = p.as_slice() else {
                    violations.push(format!("{} {} must have exactly one input", n.op.name(), n.id));
                    continue;
                };
                if geometry_of(*up) != (n.out_h, n.out_w, n.out_channels) {
                    violations.push(format!("{} {} does not preserve geometry", n.op.name(), n.id));
                }
                match &n.op {
                    NodeOp::BatchNorm if !matches!(graph.nodes[*up].op, NodeOp::Conv { .. }) => {
                        violations.push(format!("BN {} does not follow a CONV", n.id));
                    }
                    NodeOp::Relu if !matches!(graph.nodes[*up].op, NodeOp::BatchNorm) => {
                        violations.push(format!("RELU {} does not follow a BN", n.id));
                    }
                    _ => {}
                }
            }
            NodeOp::Concat => {
                if p.len() < 2 {
                    violations.push(format!("CA {} has fewer than two inputs", n.id));
                    continue;
                }
                let (h0, w0, _) = geometry_of(p[0]);
                let mut channel_sum = 0u64;
                for &up in p {
                    let (h, w, c) = geometry_of(up);
                    if (h, w) != (h0, w0) {
                        violations.push(format!(
                            "CA {} inputs {} and {} have mismatched spatial sizes",
                            n.id, graph.nodes[p[0]].id, graph.nodes[up].id
                        ));
                    }
                    channel_sum += c;
                }
                if (n.out_h, n.out_w, n.out_channels) != (h0, w0, channel_sum) {
                    violations.push(format!("CA {} geometry is not the channel sum", n.id));
                }
            }
            NodeOp::Pool { target_h, target_w, mode } => {
                let [up] = p.as_slice() else {
                    violations.push(format!("PL {} must have exactly one input", n.id));
                    continue;
                };
                let (uh, uw, uc) = geometry_of(*up);
                if *target_h > uh || *target_w > uw {
                    violations.push(format!("PL {} upsamples {uh}x{uw} to {target_h}x{target_w}", n.id));
                }
                if *mode == PoolMode::Max && (*target_h == 0 || *target_w == 0 || uh % target_h != 0 || uw % target_w != 0)
                {
                    violations.push(format!("PL {} max mode requires an integral ratio", n.id));
                }
                if (n.out_h, n.out_w, n.out_channels) != (*target_h, *target_w, uc) {
                    violations.push(format!("PL {} geometry does not match its target", n.id));
                }
            }
            NodeOp::FullyConnected { in_features, out_features } => {
                let [up] = p.as_slice() else {
                    violations.push(format!("FC {} must have exactly one input", n.id));
                    continue;
                };
                let (uh, uw, uc) = geometry_of(*up);
                if (uh, uw) != (1, 1) {
                    violations.push(format!("FC {} input is not pooled to 1x1", n.id));
                }
                if *in_features != uc {
                    violations.push(format!(
                        "FC {} declares in_features {} but upstream provides {}",
                        n.id, in_features, uc
                    ));
                }
                if (n.out_h, n.out_w, n.out_channels) != (1, 1, *out_features) {
                    violations.push(format!("FC {} output geometry mismatch", n.id));
                }
            }
        }
        // The conv -> bn -> relu spine.
        if matches!(n.op, NodeOp::Conv { .. }) {
            let bn_only = matches!(
                succs[i].as_slice(),
                [j] if matches!(graph.nodes[*j].op, NodeOp::BatchNorm)
            );
            if !bn_only {
                violations.push(format!("conv {} must feed exactly one BN", n.id));
            }
        }
        if matches!(n.op, NodeOp::BatchNorm) {
            let relu_only = matches!(
                succs[i].as_slice(),
                [j] if matches!(graph.nodes[*j].op, NodeOp::Relu)
            );
            if !relu_only {
                violations.push(format!("BN {} must feed exactly one RELU", n.id));
            }
        }
    }

    if let Some(cs) = cs {
        violations.extend(validate_against_clusters(graph, cs));
    }
    violations
}

fn validate_against_clusters(graph: &ModelGraph, cs: &ClusterSet) -> Vec<String> {
    let mut violations = Vec::new();
    let mut per_group: BTreeMap<usize, BTreeMap<(u64, u64), u64>> = BTreeMap::new();
    let mut conv_shapes: BTreeMap<usize, Vec<(ConvShape, u64)>> = BTreeMap::new();
    let index: HashMap<&str, usize> =
        graph.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
    let mut preds: HashMap<usize, Vec<usize>> = HashMap::new();
    for (src, dst) in &graph.edges {
        if let (Some(&s), Some(&d)) = (index.get(src.as_str()), index.get(dst.as_str())) {
            preds.entry(d).or_default().push(s);
        }
    }
    for (i, n) in graph.nodes.iter().enumerate() {
        if let NodeOp::Conv { kernel, stride, in_channels, out_channels } = n.op {
            let Some(g) = group_of(&n.id) else {
                violations.push(format!("conv {} does not belong to any group", n.id));
                continue;
            };
            *per_group.entry(g).or_default().entry((kernel, stride)).or_insert(0) += 1;
            if let Some(ps) = preds.get(&i) {
                if let [up] = ps.as_slice() {
                    let u = &graph.nodes[*up];
                    if let Ok(shape) =
                        ConvShape::new(u.out_h, u.out_w, in_channels, kernel, stride, out_channels)
                    {
                        conv_shapes.entry(g).or_default().push((shape, 1));
                    }
                }
            }
        }
    }
    if per_group.len() != cs.groups.len() {
        violations.push(format!(
            "graph has conv nodes in {} groups, cluster set has {}",
            per_group.len(),
            cs.groups.len()
        ));
    }
    for (gi, group) in cs.groups.iter().enumerate() {
        let number = gi + 1;
        let expected: BTreeMap<(u64, u64), u64> =
            group.bins.iter().map(|b| ((b.kernel, b.stride), b.count)).collect();
        if per_group.get(&number).unwrap_or(&BTreeMap::new()) != &expected {
            violations.push(format!("bin multiset mismatch, group {number}"));
        }
    }
    if let Ok(model) = graph.metadata.cost_model_id.parse::<WarpModel>() {
        if graph.metadata.group_costs.len() == cs.groups.len() {
            for (gi, recorded) in graph.metadata.group_costs.iter().enumerate() {
                let Some(shapes) = conv_shapes.get(&(gi + 1)) else { continue };
                if shapes.len() as u64 != cs.groups[gi].total_count() {
                    continue; // bin mismatch already reported
                }
                match group_cost(shapes, model) {
                    Ok(actual) if actual == *recorded => {}
                    Ok(actual) => violations.push(format!(
                        "group {} recorded cost ({}, {}) differs from conv nodes ({}, {})",
                        gi + 1,
                        recorded.mac,
                        recorded.wp,
                        actual.mac,
                        actual.wp
                    )),
                    Err(e) => violations.push(format!("group {} cost: {e}", gi + 1)),
                }
            }
        } else {
            violations.push(format!(
                "metadata records {} group costs for {} groups",
                graph.metadata.group_costs.len(),
                cs.groups.len()
            ));
        }
    } else {
        violations.push(format!(
            "metadata cost model `{}` is unknown",
            graph.metadata.cost_model_id
        ));
    }
    violations
}
