use serde::{Deserialize, Serialize};

use crate::env::Point2;

/// Search tree stored as parallel arrays indexed by insertion order.
/// Vertex 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    vertices: Vec<Point2>,
    parent: Vec<Option<usize>>,
    cost: Vec<f64>,
    children: Vec<Vec<usize>>,
}

impl Tree {
    pub fn new(root: Point2) -> Self {
        Tree {
            vertices: vec![root],
            parent: vec![None],
            cost: vec![0.0],
            children: vec![Vec::new()],
        }
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    /// Never true: a tree always holds its root.
    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn root(&self) -> Point2 {
        self.vertices[0]
    }

    pub fn point(&self, i: usize) -> Point2 {
        self.vertices[i]
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn parent(&self, i: usize) -> Option<usize> {
        self.parent[i]
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    pub fn cost_from_root(&self, i: usize) -> f64 {
        self.cost[i]
    }

    /// Appends `p` as a child of `parent` and returns its index.
    pub fn add(&mut self, p: Point2, parent: usize) -> usize {
        let idx = self.vertices.len();
        self.vertices.push(p);
        self.parent.push(Some(parent));
        self.cost.push(self.cost[parent] + p.dist(self.vertices[parent]));
        self.children.push(Vec::new());
        self.children[parent].push(idx);
        idx
    }

    /// `(parent, child)` pairs.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.parent.iter().enumerate().filter_map(|(c, p)| p.map(|p| (p, c)))
    }

    /// Nearest vertex by Euclidean distance; ties go to the lowest index.
    pub fn nearest(&self, q: Point2) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, v) in self.vertices.iter().enumerate() {
            let d = v.dist_sq(q);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    /// Indices of all vertices within `radius` of `q`, ascending.
    pub fn near(&self, q: Point2, radius: f64) -> Vec<usize> {
        let r2 = radius * radius;
        self.vertices
            .iter()
            .enumerate()
            .filter(|(_, v)| v.dist_sq(q) <= r2)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn is_leaf(&self, i: usize) -> bool {
        self.children[i].is_empty()
    }

    /// Vertices without children, ascending. A lone root counts as a leaf.
    pub fn leaves(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_leaf(i)).collect()
    }

    /// Root-to-`terminal` vertex sequence following parent links.
    pub fn path_to(&self, terminal: usize) -> Vec<Point2> {
        let mut out = Vec::new();
        let mut cur = Some(terminal);
        while let Some(i) = cur {
            out.push(self.vertices[i]);
            cur = self.parent[i];
        }
        out.reverse();
        out
    }

    /// Re-parents `child` under `new_parent` and refreshes the cost of the
    /// whole re-attached subtree. The caller guarantees `new_parent` is not a
    /// descendant of `child`.
    pub fn rewire(&mut self, child: usize, new_parent: usize) {
        debug_assert!(child != 0, "root cannot be re-parented");
        if let Some(old) = self.parent[child] {
            self.children[old].retain(|&c| c != child);
        }
        self.parent[child] = Some(new_parent);
        self.children[new_parent].push(child);
        let mut stack = vec![child];
        while let Some(v) = stack.pop() {
            let p = self.parent[v].expect("non-root");
            self.cost[v] = self.cost[p] + self.vertices[v].dist(self.vertices[p]);
            stack.extend_from_slice(&self.children[v]);
        }
    }

    /// True if following parent links from `v` reaches `ancestor`.
    pub fn is_ancestor(&self, ancestor: usize, mut v: usize) -> bool {
        loop {
            if v == ancestor {
                return true;
            }
            match self.parent[v] {
                Some(p) => v = p,
                None => return false,
            }
        }
    }
}

/// Root-first path for `terminal`.
pub fn retrieve_plan(tree: &Tree, terminal: usize) -> Vec<Point2> {
    tree.path_to(terminal)
}
