//! Immutable DAG cell topologies and the graph-to-network mapping rule.
//!
//! A cell is a set of operation-labeled nodes `0..n` plus a set of directed
//! edges `(from, to)` with `from < to`. Node ids double as the topological
//! order, so acyclicity holds by construction and ids stay stable while edges
//! are removed. All operations are value-semantic: `remove_edge` returns a new
//! topology and never mutates the receiver.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigUint;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Which network family a cell expands into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Cnn,
    Rnn,
}

impl CellKind {
    /// Number of operation choices per node for this kind.
    pub fn alphabet_size(self) -> usize {
        match self {
            CellKind::Cnn => CNN_OPS.len(),
            CellKind::Rnn => RNN_OPS.len(),
        }
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CellKind::Cnn => "cnn",
            CellKind::Rnn => "rnn",
        })
    }
}

/// Convolutional node operations; each expands to a conv / norm / ReLU triplet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CnnOp {
    Conv1x1,
    SepConv3x3,
}

/// Activation applied inside a recurrent highway node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RnnActivation {
    Relu,
    Sigmoid,
    Tanh,
    Identity,
}

pub const CNN_OPS: [CnnOp; 2] = [CnnOp::Conv1x1, CnnOp::SepConv3x3];
pub const RNN_OPS: [RnnActivation; 4] = [
    RnnActivation::Relu,
    RnnActivation::Sigmoid,
    RnnActivation::Tanh,
    RnnActivation::Identity,
];

/// Operation attached to one node. The variant fixes the cell kind the node
/// belongs to, so a topology can never mix families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeOp {
    Cnn(CnnOp),
    Rnn(RnnActivation),
}

impl NodeOp {
    pub fn kind(self) -> CellKind {
        match self {
            NodeOp::Cnn(_) => CellKind::Cnn,
            NodeOp::Rnn(_) => CellKind::Rnn,
        }
    }

    /// Canonical lower-case name used in documents and DOT labels.
    pub fn name(self) -> &'static str {
        match self {
            NodeOp::Cnn(CnnOp::Conv1x1) => "conv1x1",
            NodeOp::Cnn(CnnOp::SepConv3x3) => "sepconv3x3",
            NodeOp::Rnn(RnnActivation::Relu) => "relu",
            NodeOp::Rnn(RnnActivation::Sigmoid) => "sigmoid",
            NodeOp::Rnn(RnnActivation::Tanh) => "tanh",
            NodeOp::Rnn(RnnActivation::Identity) => "identity",
        }
    }

    /// Parses an op name, constrained to the given kind.
    pub fn parse(name: &str, kind: CellKind) -> Option<NodeOp> {
        let op = match name {
            "conv1x1" => NodeOp::Cnn(CnnOp::Conv1x1),
            "sepconv3x3" => NodeOp::Cnn(CnnOp::SepConv3x3),
            "relu" => NodeOp::Rnn(RnnActivation::Relu),
            "sigmoid" => NodeOp::Rnn(RnnActivation::Sigmoid),
            "tanh" => NodeOp::Rnn(RnnActivation::Tanh),
            "identity" => NodeOp::Rnn(RnnActivation::Identity),
            _ => return None,
        };
        (op.kind() == kind).then_some(op)
    }

    /// The op at `index` of the alphabet for `kind`.
    pub fn from_alphabet(kind: CellKind, index: usize) -> NodeOp {
        match kind {
            CellKind::Cnn => NodeOp::Cnn(CNN_OPS[index]),
            CellKind::Rnn => NodeOp::Rnn(RNN_OPS[index]),
        }
    }
}

/// A directed edge `(from, to)` with `from < to`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
}

impl Edge {
    pub fn new(from: usize, to: usize) -> Edge {
        Edge { from, to }
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.from, self.to)
    }
}

/// An immutable DAG cell: `ops[i]` labels node `i`, `edges` is kept sorted
/// ascending. Node ids are never renumbered by edge removal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellTopology {
    kind: CellKind,
    ops: Vec<NodeOp>,
    edges: Vec<Edge>,
}

impl CellTopology {
    /// Builds a topology from explicit parts, validating every invariant:
    /// at least one node, ops matching `kind`, edges in range with
    /// `from < to`, and no duplicate edges. Edge order in the input is free;
    /// the stored set is canonicalized ascending.
    pub fn new(kind: CellKind, ops: Vec<NodeOp>, mut edges: Vec<Edge>) -> Result<CellTopology> {
        if ops.is_empty() {
            return Err(Error::invalid("a topology needs at least one node"));
        }
        for (i, op) in ops.iter().enumerate() {
            if op.kind() != kind {
                return Err(Error::invalid(format!(
                    "node {i} op {} does not belong to a {kind} cell",
                    op.name()
                )));
            }
        }
        edges.sort();
        for pair in edges.windows(2) {
            if pair[0] == pair[1] {
                return Err(Error::invalid(format!("duplicate edge {}", pair[0])));
            }
        }
        for e in &edges {
            if e.from >= e.to {
                return Err(Error::invalid(format!(
                    "edge {e} violates from < to (node ids are the topological order)"
                )));
            }
            if e.to >= ops.len() {
                return Err(Error::invalid(format!(
                    "edge {e} references node {} but the cell has {} nodes",
                    e.to,
                    ops.len()
                )));
            }
        }
        Ok(CellTopology { kind, ops, edges })
    }

    /// The complete DAG on `n >= 2` nodes: every pair `(i, j)` with `i < j` is
    /// an edge, so the edge count is `n*(n-1)/2`. Node operations are drawn
    /// uniformly from the alphabet for `kind` with a generator seeded by
    /// `seed`; identical seeds give identical topologies.
    pub fn complete(n: usize, kind: CellKind, seed: u64) -> Result<CellTopology> {
        if n < 2 {
            return Err(Error::invalid(format!("complete cell needs n >= 2 nodes, got {n}")));
        }
        let mut gen = rng::rng(seed, rng::Stream::Ops, &[]);
        let ops = (0..n)
            .map(|_| NodeOp::from_alphabet(kind, gen.gen_range(0..kind.alphabet_size())))
            .collect();
        let mut edges = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                edges.push(Edge::new(i, j));
            }
        }
        CellTopology::new(kind, ops, edges)
    }

    pub fn kind(&self) -> CellKind {
        self.kind
    }

    pub fn node_count(&self) -> usize {
        self.ops.len()
    }

    /// Per-node operations, indexed by node id.
    pub fn ops(&self) -> &[NodeOp] {
        &self.ops
    }

    /// Edges in ascending `(from, to)` order.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn contains_edge(&self, edge: Edge) -> bool {
        self.edges.binary_search(&edge).is_ok()
    }

    /// Returns a copy with `edge` removed. Node ids and ops are untouched.
    pub fn remove_edge(&self, edge: Edge) -> Result<CellTopology> {
        match self.edges.binary_search(&edge) {
            Ok(pos) => {
                let mut edges = self.edges.clone();
                edges.remove(pos);
                Ok(CellTopology { kind: self.kind, ops: self.ops.clone(), edges })
            }
            Err(_) => Err(Error::MissingEdge { from: edge.from, to: edge.to }),
        }
    }

    /// Applies the mapping rule that turns the raw graph into a network block:
    /// nodes with neither in- nor out-edges are dropped; surviving nodes with
    /// no in-edges are fed the cell input; surviving nodes with no out-edges
    /// are the leaves that form the block output.
    pub fn map_to_block(&self) -> MappedBlock {
        let n = self.node_count();
        let mut in_deg = vec![0usize; n];
        let mut out_deg = vec![0usize; n];
        let mut preds: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for e in &self.edges {
            in_deg[e.to] += 1;
            out_deg[e.from] += 1;
            preds.entry(e.to).or_default().push(e.from);
        }
        let mut live = Vec::new();
        let mut input_fed = Vec::new();
        let mut leaves = Vec::new();
        for v in 0..n {
            if in_deg[v] == 0 && out_deg[v] == 0 {
                continue;
            }
            live.push(v);
            preds.entry(v).or_default();
            if in_deg[v] == 0 {
                input_fed.push(v);
            }
            if out_deg[v] == 0 {
                leaves.push(v);
            }
        }
        preds.retain(|v, _| in_deg[*v] > 0 || out_deg[*v] > 0);
        // Edges are scanned in ascending order, so each predecessor list is
        // already ascending.
        MappedBlock { live, input_fed, leaves, preds }
    }

    /// Content hash over kind, operations, and edges. Two topologies get the
    /// same fingerprint iff they are equal, so per-candidate seed derivation
    /// can key on the graph instead of on evaluation order.
    pub fn fingerprint(&self) -> u64 {
        let mut bytes = Vec::with_capacity(16 + 8 * self.ops.len() + 16 * self.edges.len());
        bytes.push(match self.kind {
            CellKind::Cnn => 0xC0,
            CellKind::Rnn => 0xD0,
        });
        bytes.extend_from_slice(&(self.ops.len() as u64).to_le_bytes());
        for op in &self.ops {
            bytes.push(b'|');
            bytes.extend_from_slice(op.name().as_bytes());
        }
        for e in &self.edges {
            bytes.extend_from_slice(&(e.from as u64).to_le_bytes());
            bytes.extend_from_slice(&(e.to as u64).to_le_bytes());
        }
        crate::rng::fnv1a64(&bytes)
    }

    // ---- serialization ----

    /// Serializes to the topology document schema.
    pub fn to_json(&self) -> String {
        let doc = TopologyDoc {
            kind: self.kind,
            nodes: self
                .ops
                .iter()
                .enumerate()
                .map(|(id, op)| NodeDoc { id, op: op.name().to_string() })
                .collect(),
            edges: self.edges.iter().map(|e| (e.from, e.to)).collect(),
        };
        serde_json::to_string_pretty(&doc).expect("topology document serialization cannot fail")
    }

    /// Parses a topology document, enforcing every invariant. Errors name the
    /// offending line (syntax) or field (semantics).
    pub fn from_json(text: &str) -> Result<CellTopology> {
        let doc: TopologyDoc = serde_json::from_str(text).map_err(|e| {
            Error::parse(format!("line {} column {}", e.line(), e.column()), e.to_string())
        })?;
        let mut ops = Vec::with_capacity(doc.nodes.len());
        for (i, node) in doc.nodes.iter().enumerate() {
            if node.id != i {
                return Err(Error::parse(
                    format!("nodes[{i}].id"),
                    format!("expected id {i} (nodes must be listed in id order), got {}", node.id),
                ));
            }
            let op = NodeOp::parse(&node.op, doc.kind).ok_or_else(|| {
                Error::parse(
                    format!("nodes[{i}].op"),
                    format!("unknown {} op {:?}", doc.kind, node.op),
                )
            })?;
            ops.push(op);
        }
        if ops.is_empty() {
            return Err(Error::parse("nodes", "a topology needs at least one node"));
        }
        let mut edges = Vec::with_capacity(doc.edges.len());
        for (i, &(from, to)) in doc.edges.iter().enumerate() {
            if from >= to {
                return Err(Error::parse(
                    format!("edges[{i}]"),
                    format!("edge ({from}, {to}) violates from < to"),
                ));
            }
            if to >= ops.len() {
                return Err(Error::parse(
                    format!("edges[{i}]"),
                    format!("edge ({from}, {to}) references node {to} out of range"),
                ));
            }
            edges.push(Edge::new(from, to));
        }
        let mut sorted = edges.clone();
        sorted.sort();
        if let Some(pair) = sorted.windows(2).find(|p| p[0] == p[1]) {
            return Err(Error::parse("edges", format!("duplicate edge {}", pair[0])));
        }
        CellTopology::new(doc.kind, ops, edges)
    }

    /// Renders the mapped block as a DOT digraph: live nodes labeled `id:op`,
    /// special `IN`/`OUT` vertices, and the derived input/leaf edges dashed.
    /// Isolated (dropped) nodes are omitted.
    pub fn to_dot(&self) -> String {
        let block = self.map_to_block();
        let mut out = String::from("digraph cell {\n  rankdir=LR;\n");
        out.push_str("  IN [shape=diamond];\n  OUT [shape=diamond];\n");
        for &v in block.live_nodes() {
            out.push_str(&format!("  n{v} [label=\"{v}:{}\"];\n", self.ops[v].name()));
        }
        for e in &self.edges {
            out.push_str(&format!("  n{} -> n{};\n", e.from, e.to));
        }
        for &v in block.input_fed() {
            out.push_str(&format!("  IN -> n{v} [style=dashed];\n"));
        }
        for &v in block.leaves() {
            out.push_str(&format!("  n{v} -> OUT [style=dashed];\n"));
        }
        out.push_str("}\n");
        out
    }
}

#[derive(Serialize, Deserialize)]
struct TopologyDoc {
    kind: CellKind,
    nodes: Vec<NodeDoc>,
    edges: Vec<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct NodeDoc {
    id: usize,
    op: String,
}

impl Serialize for CellTopology {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let doc = TopologyDoc {
            kind: self.kind,
            nodes: self
                .ops
                .iter()
                .enumerate()
                .map(|(id, op)| NodeDoc { id, op: op.name().to_string() })
                .collect(),
            edges: self.edges.iter().map(|e| (e.from, e.to)).collect(),
        };
        doc.serialize(s)
    }
}

impl<'de> Deserialize<'de> for CellTopology {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = TopologyDoc::deserialize(d)?;
        let text = serde_json::to_string(&doc).map_err(serde::de::Error::custom);
        CellTopology::from_json(&text?).map_err(serde::de::Error::custom)
    }
}

/// What an input to a node is: the cell input or another node's output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregand {
    CellInput,
    Node(usize),
}

/// The network view of a topology after the mapping rule. All id lists are
/// ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MappedBlock {
    live: Vec<usize>,
    input_fed: Vec<usize>,
    leaves: Vec<usize>,
    preds: BTreeMap<usize, Vec<usize>>,
}

impl MappedBlock {
    /// Nodes that survive the mapping (have at least one edge).
    pub fn live_nodes(&self) -> &[usize] {
        &self.live
    }

    /// Live nodes with no in-edges; they receive the cell input.
    pub fn input_fed(&self) -> &[usize] {
        &self.input_fed
    }

    /// Live nodes with no out-edges; their outputs form the block output.
    pub fn leaves(&self) -> &[usize] {
        &self.leaves
    }

    /// Predecessor node ids of a live node, ascending.
    pub fn predecessors(&self, v: usize) -> &[usize] {
        self.preds.get(&v).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_input_fed(&self, v: usize) -> bool {
        self.input_fed.binary_search(&v).is_ok()
    }

    pub fn is_live(&self, v: usize) -> bool {
        self.live.binary_search(&v).is_ok()
    }

    /// True when no node survives; callers treat the block as identity.
    pub fn is_empty(&self) -> bool {
        self.live.is_empty()
    }

    /// The ordered inputs of a live node: the cell input first when fed,
    /// otherwise the predecessors in ascending id order. (A node is fed
    /// exactly when it has no predecessors, so the two cases never mix.)
    pub fn aggregands(&self, v: usize) -> Vec<Aggregand> {
        if self.is_input_fed(v) {
            vec![Aggregand::CellInput]
        } else {
            self.predecessors(v).iter().map(|&u| Aggregand::Node(u)).collect()
        }
    }

    /// Number of distinct input-to-leaf paths, by dynamic programming in node
    /// id order: `count(v) = 1` if fed, else the sum over predecessors.
    pub fn path_count(&self) -> u128 {
        let mut count: BTreeMap<usize, u128> = BTreeMap::new();
        for &v in &self.live {
            let c = if self.is_input_fed(v) {
                1
            } else {
                self.predecessors(v).iter().map(|u| count[u]).sum()
            };
            count.insert(v, c);
        }
        self.leaves.iter().map(|v| count[v]).sum()
    }
}

/// Exact cardinality of the search space: `op_choices^node_count *
/// 2^edge_count`, as a big integer (the interesting sizes overflow u64 fast).
pub fn search_space_size(edge_count: usize, node_count: usize, op_choices: usize) -> BigUint {
    BigUint::from(op_choices).pow(node_count as u32) * BigUint::from(2u32).pow(edge_count as u32)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cnn_ops(n: usize) -> Vec<NodeOp> {
        (0..n).map(|_| NodeOp::Cnn(CnnOp::Conv1x1)).collect()
    }

    #[test]
    fn complete_dag_edge_counts() {
        // n*(n-1)/2: the two sizes used by the search defaults.
        let g8 = CellTopology::complete(8, CellKind::Cnn, 7).unwrap();
        assert_eq!(g8.edge_count(), 28);
        let g6 = CellTopology::complete(6, CellKind::Rnn, 3).unwrap();
        assert_eq!(g6.edge_count(), 15);
        let g2 = CellTopology::complete(2, CellKind::Cnn, 0).unwrap();
        assert_eq!(g2.edges(), &[Edge::new(0, 1)]);
        assert!(CellTopology::complete(1, CellKind::Cnn, 0).is_err());
    }

    #[test]
    fn complete_dag_is_seed_deterministic() {
        let a = CellTopology::complete(8, CellKind::Rnn, 42).unwrap();
        let b = CellTopology::complete(8, CellKind::Rnn, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn remove_edge_is_value_semantic() {
        let g = CellTopology::complete(4, CellKind::Cnn, 1).unwrap();
        let h = g.remove_edge(Edge::new(1, 3)).unwrap();
        assert_eq!(g.edge_count(), 6);
        assert_eq!(h.edge_count(), 5);
        assert!(!h.contains_edge(Edge::new(1, 3)));
        assert!(h.remove_edge(Edge::new(1, 3)).is_err());
        assert_eq!(h.node_count(), 4); // ids survive removal
    }

    #[test]
    fn remove_edge_to_empty() {
        let mut g = CellTopology::complete(3, CellKind::Cnn, 5).unwrap();
        for _ in 0..3 {
            let e = g.edges()[0];
            g = g.remove_edge(e).unwrap();
        }
        assert_eq!(g.edge_count(), 0);
        assert!(g.map_to_block().is_empty());
    }

    #[test]
    fn mapping_complete_four() {
        let g = CellTopology::complete(4, CellKind::Cnn, 9).unwrap();
        let b = g.map_to_block();
        assert_eq!(b.live_nodes(), &[0, 1, 2, 3]);
        assert_eq!(b.input_fed(), &[0]);
        assert_eq!(b.leaves(), &[3]);
        assert_eq!(b.predecessors(3), &[0, 1, 2]);
        assert_eq!(b.aggregands(0), vec![Aggregand::CellInput]);
        assert_eq!(b.path_count(), 4); // 2^(n-2)
    }

    #[test]
    fn mapping_drops_only_isolated_nodes() {
        let edges = vec![Edge::new(0, 2), Edge::new(1, 2)];
        let g3 = CellTopology::new(CellKind::Cnn, cnn_ops(3), edges.clone()).unwrap();
        let b3 = g3.map_to_block();
        assert_eq!(b3.input_fed(), &[0, 1]);
        assert_eq!(b3.leaves(), &[2]);

        // Same edges on 4 nodes: node 3 has no edges at all and is dropped.
        let g4 = CellTopology::new(CellKind::Cnn, cnn_ops(4), edges).unwrap();
        let b4 = g4.map_to_block();
        assert_eq!(b4.live_nodes(), &[0, 1, 2]);
        assert!(!b4.is_live(3));
    }

    #[test]
    fn every_live_node_is_fed_or_has_live_predecessors() {
        let g = CellTopology::complete(6, CellKind::Cnn, 11)
            .unwrap()
            .remove_edge(Edge::new(0, 1))
            .unwrap()
            .remove_edge(Edge::new(0, 5))
            .unwrap();
        let b = g.map_to_block();
        for &v in b.live_nodes() {
            assert!(
                b.is_input_fed(v) || b.predecessors(v).iter().all(|&u| b.is_live(u)),
                "node {v} dangles"
            );
            assert!(b.is_input_fed(v) ^ !b.predecessors(v).is_empty());
        }
    }

    #[test]
    fn path_count_complete_eight() {
        let g = CellTopology::complete(8, CellKind::Cnn, 7).unwrap();
        assert_eq!(g.map_to_block().path_count(), 64); // 2^(8-2)
    }

    #[test]
    fn search_space_cardinality_pins() {
        // 2^28 * 2^8 = 2^36.
        assert_eq!(search_space_size(28, 8, 2), BigUint::from(68_719_476_736u64));
        assert_eq!(search_space_size(0, 8, 2), BigUint::from(256u32));
        // 2^15 * 4^6.
        assert_eq!(search_space_size(15, 6, 4), BigUint::from(134_217_728u64));
        assert_eq!(search_space_size(4, 3, 2), BigUint::from(128u32));
        assert_eq!(search_space_size(0, 0, 0), BigUint::from(1u32)); // empty product
    }

    #[test]
    fn json_round_trip() {
        let g = CellTopology::complete(5, CellKind::Rnn, 13)
            .unwrap()
            .remove_edge(Edge::new(2, 4))
            .unwrap();
        let text = g.to_json();
        let back = CellTopology::from_json(&text).unwrap();
        assert_eq!(g, back);
        assert!(text.contains("\"kind\": \"rnn\""));
    }

    #[test]
    fn json_rejects_reversed_edge() {
        let text = r#"{"kind":"cnn","nodes":[{"id":0,"op":"conv1x1"},{"id":1,"op":"conv1x1"},
            {"id":2,"op":"conv1x1"},{"id":3,"op":"sepconv3x3"}],"edges":[[0,1],[3,1]]}"#;
        let err = CellTopology::from_json(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("edges[1]"), "error should name the field: {msg}");
        assert!(msg.contains("(3, 1)"));
    }

    #[test]
    fn json_rejects_bad_documents() {
        // Duplicate edge.
        let dup = r#"{"kind":"cnn","nodes":[{"id":0,"op":"conv1x1"},{"id":1,"op":"conv1x1"}],
            "edges":[[0,1],[0,1]]}"#;
        assert!(CellTopology::from_json(dup).is_err());
        // Op from the wrong family.
        let wrong = r#"{"kind":"cnn","nodes":[{"id":0,"op":"tanh"},{"id":1,"op":"conv1x1"}],
            "edges":[[0,1]]}"#;
        let msg = CellTopology::from_json(wrong).unwrap_err().to_string();
        assert!(msg.contains("nodes[0].op"), "{msg}");
        // Out-of-range edge endpoint.
        let range = r#"{"kind":"cnn","nodes":[{"id":0,"op":"conv1x1"},{"id":1,"op":"conv1x1"}],
            "edges":[[0,5]]}"#;
        assert!(CellTopology::from_json(range).is_err());
        // Ids out of order.
        let ids = r#"{"kind":"cnn","nodes":[{"id":1,"op":"conv1x1"},{"id":0,"op":"conv1x1"}],
            "edges":[]}"#;
        let msg = CellTopology::from_json(ids).unwrap_err().to_string();
        assert!(msg.contains("nodes[0].id"), "{msg}");
        // Syntax errors carry a line/column position.
        let syntax = "{\"kind\": \"cnn\",\n  \"nodes\": oops}";
        let msg = CellTopology::from_json(syntax).unwrap_err().to_string();
        assert!(msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn dot_shows_mapped_structure() {
        let g = CellTopology::new(
            CellKind::Cnn,
            cnn_ops(4),
            vec![Edge::new(0, 2), Edge::new(1, 2)],
        )
        .unwrap();
        let dot = g.to_dot();
        assert!(dot.starts_with("digraph cell {"));
        assert!(dot.contains("n0 [label=\"0:conv1x1\"];"));
        assert!(dot.contains("n0 -> n2;"));
        assert!(dot.contains("IN -> n0 [style=dashed];"));
        assert!(dot.contains("IN -> n1 [style=dashed];"));
        assert!(dot.contains("n2 -> OUT [style=dashed];"));
        assert!(!dot.contains("n3"), "isolated node must be omitted");
    }
}
