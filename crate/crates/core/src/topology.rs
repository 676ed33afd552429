//! Hierarchical network topology shared by the simulator and the monitor.
//!
//! The tree is stored as an arena of vertices. Leaves are compute nodes,
//! internal vertices are switches. Every vertex except the root owns exactly
//! one uplink, so an edge is identified by its child vertex.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// Index of a vertex in a [`TopologyTree`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// The link between a vertex and its parent, named by the child.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeId(pub NodeId);

impl EdgeId {
    pub fn child(self) -> NodeId {
        self.0
    }
}

/// One traversal step along a path: the edge and whether it is crossed
/// towards the root.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hop {
    pub edge: EdgeId,
    pub upward: bool,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TopologyError {
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("duplicate vertex name {0:?}")]
    DuplicateName(String),
}

#[derive(Debug, Clone)]
struct Vertex {
    name: String,
    parent: Option<NodeId>,
    children: Vec<NodeId>,
    depth: u32,
}

#[derive(Debug, Clone)]
pub struct TopologyTree {
    vertices: Vec<Vertex>,
    by_name: BTreeMap<String, NodeId>,
}

impl TopologyTree {
    /// Creates a tree containing only its root switch.
    pub fn new(root_name: impl Into<String>) -> Self {
        let name = root_name.into();
        let mut by_name = BTreeMap::new();
        by_name.insert(name.clone(), NodeId(0));
        Self {
            vertices: vec![Vertex {
                name,
                parent: None,
                children: Vec::new(),
                depth: 0,
            }],
            by_name,
        }
    }

    pub fn add_child(
        &mut self,
        parent: NodeId,
        name: impl Into<String>,
    ) -> Result<NodeId, TopologyError> {
        let name = name.into();
        if parent.index() >= self.vertices.len() {
            return Err(TopologyError::UnknownNode(parent.to_string()));
        }
        if self.by_name.contains_key(&name) {
            return Err(TopologyError::DuplicateName(name));
        }
        let id = NodeId(self.vertices.len() as u32);
        let depth = self.vertices[parent.index()].depth + 1;
        self.vertices.push(Vertex {
            name: name.clone(),
            parent: Some(parent),
            children: Vec::new(),
            depth,
        });
        self.vertices[parent.index()].children.push(id);
        self.by_name.insert(name, id);
        Ok(id)
    }

    pub fn root(&self) -> NodeId {
        NodeId(0)
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        id.index() < self.vertices.len()
    }

    pub fn name(&self, id: NodeId) -> &str {
        &self.vertices[id.index()].name
    }

    pub fn find(&self, name: &str) -> Option<NodeId> {
        self.by_name.get(name).copied()
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.vertices[id.index()].parent
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.vertices[id.index()].children
    }

    pub fn depth(&self, id: NodeId) -> u32 {
        self.vertices[id.index()].depth
    }

    /// A leaf is a compute node: it has no children and is not the root.
    pub fn is_leaf(&self, id: NodeId) -> bool {
        self.contains(id) && id != self.root() && self.vertices[id.index()].children.is_empty()
    }

    /// Compute nodes in creation order.
    pub fn leaves(&self) -> Vec<NodeId> {
        (0..self.vertices.len() as u32)
            .map(NodeId)
            .filter(|&id| self.is_leaf(id))
            .collect()
    }

    /// All edges, ordered by child id.
    pub fn edges(&self) -> impl Iterator<Item = EdgeId> + '_ {
        (1..self.vertices.len() as u32).map(|i| EdgeId(NodeId(i)))
    }

    pub fn edge_count(&self) -> usize {
        self.vertices.len().saturating_sub(1)
    }

    /// Human-readable `child-parent` label.
    pub fn edge_label(&self, edge: EdgeId) -> String {
        let child = edge.child();
        match self.parent(child) {
            Some(p) => format!("{}-{}", self.name(child), self.name(p)),
            None => self.name(child).to_string(),
        }
    }

    /// Resolves a `child-parent` label (or a bare child name) back to an edge.
    pub fn find_edge(&self, label: &str) -> Option<EdgeId> {
        if let Some(id) = self.find(label) {
            return (id != self.root()).then_some(EdgeId(id));
        }
        self.edges().find(|&e| self.edge_label(e) == label)
    }

    /// The unique path between two vertices: upward hops from `from` to the
    /// lowest common ancestor followed by downward hops to `to`.
    pub fn path(&self, from: NodeId, to: NodeId) -> Vec<Hop> {
        let mut up = Vec::new();
        let mut down = Vec::new();
        let (mut a, mut b) = (from, to);
        while self.depth(a) > self.depth(b) {
            up.push(Hop {
                edge: EdgeId(a),
                upward: true,
            });
            a = self.parent(a).expect("non-root has parent");
        }
        while self.depth(b) > self.depth(a) {
            down.push(Hop {
                edge: EdgeId(b),
                upward: false,
            });
            b = self.parent(b).expect("non-root has parent");
        }
        while a != b {
            up.push(Hop {
                edge: EdgeId(a),
                upward: true,
            });
            down.push(Hop {
                edge: EdgeId(b),
                upward: false,
            });
            a = self.parent(a).expect("non-root has parent");
            b = self.parent(b).expect("non-root has parent");
        }
        down.reverse();
        up.extend(down);
        up
    }

    pub fn path_edges(&self, from: NodeId, to: NodeId) -> Vec<EdgeId> {
        self.path(from, to).into_iter().map(|h| h.edge).collect()
    }

    /// Checks that `id` names a compute node.
    pub fn require_leaf(&self, id: NodeId) -> Result<(), TopologyError> {
        if self.is_leaf(id) {
            Ok(())
        } else {
            Err(TopologyError::UnknownNode(id.to_string()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> (TopologyTree, [NodeId; 6]) {
        let mut t = TopologyTree::new("R");
        let dc1 = t.add_child(t.root(), "DC1").unwrap();
        let dc2 = t.add_child(t.root(), "DC2").unwrap();
        let a = t.add_child(dc1, "a").unwrap();
        let b = t.add_child(dc1, "b").unwrap();
        let c = t.add_child(dc2, "c").unwrap();
        (t, [t_root(), dc1, dc2, a, b, c])
    }

    fn t_root() -> NodeId {
        NodeId(0)
    }

    #[test]
    fn path_within_and_across_subtrees() {
        let (t, [_, dc1, dc2, a, b, c]) = sample();
        assert_eq!(t.path_edges(a, b), vec![EdgeId(a), EdgeId(b)]);
        assert_eq!(
            t.path_edges(a, c),
            vec![EdgeId(a), EdgeId(dc1), EdgeId(dc2), EdgeId(c)]
        );
        let hops = t.path(c, a);
        assert!(hops[0].upward && hops[1].upward);
        assert!(!hops[2].upward && !hops[3].upward);
        assert!(t.path(a, a).is_empty());
    }

    #[test]
    fn leaves_and_labels() {
        let (t, [_, dc1, _, a, b, c]) = sample();
        assert_eq!(t.leaves(), vec![a, b, c]);
        assert_eq!(t.edge_label(EdgeId(a)), "a-DC1");
        assert_eq!(t.find_edge("a-DC1"), Some(EdgeId(a)));
        assert_eq!(t.find_edge("DC1"), Some(EdgeId(dc1)));
        assert!(!t.is_leaf(t.root()));
        assert_eq!(t.edge_count(), 5);
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut t = TopologyTree::new("R");
        t.add_child(t.root(), "x").unwrap();
        assert_eq!(
            t.add_child(t.root(), "x"),
            Err(TopologyError::DuplicateName("x".into()))
        );
    }
}
