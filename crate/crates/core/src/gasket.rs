//! Level-L approximating graph of the Sierpinski gasket.
//!
//! Vertices live on the triangular lattice scaled by 2^L: the position of
//! `(a, b)` is `a*(1,0) + b*(1/2, sqrt(3)/2)` times the edge length 2^{-L}.
//! Graph distance between adjacent vertices is one hop, i.e. 2^{-L} in
//! metric units.

use std::collections::HashMap;

#[derive(Debug)]
pub struct GasketGraph {
    pub level: u32,
    coords: Vec<(i64, i64)>,
    adjacency: Vec<Vec<u32>>,
    index: HashMap<(i64, i64), u32>,
    /// All-pairs hop counts, row-major.
    hops: Vec<u16>,
}

impl GasketGraph {
    pub fn new(level: u32) -> Self {
        assert!(level <= 8, "gasket level too deep for all-pairs distances");
        let side = 1i64 << level;
        let mut index = HashMap::new();
        let mut coords = Vec::new();
        let mut edges: Vec<(u32, u32)> = Vec::new();

        fn vertex(
            p: (i64, i64),
            index: &mut HashMap<(i64, i64), u32>,
            coords: &mut Vec<(i64, i64)>,
        ) -> u32 {
            *index.entry(p).or_insert_with(|| {
                coords.push(p);
                (coords.len() - 1) as u32
            })
        }

        // Recursive subdivision into three corner triangles.
        fn subdivide(
            p0: (i64, i64),
            p1: (i64, i64),
            p2: (i64, i64),
            depth: u32,
            index: &mut HashMap<(i64, i64), u32>,
            coords: &mut Vec<(i64, i64)>,
            edges: &mut Vec<(u32, u32)>,
        ) {
            if depth == 0 {
                let a = vertex(p0, index, coords);
                let b = vertex(p1, index, coords);
                let c = vertex(p2, index, coords);
                edges.push((a, b));
                edges.push((b, c));
                edges.push((a, c));
                return;
            }
            let m01 = ((p0.0 + p1.0) / 2, (p0.1 + p1.1) / 2);
            let m12 = ((p1.0 + p2.0) / 2, (p1.1 + p2.1) / 2);
            let m02 = ((p0.0 + p2.0) / 2, (p0.1 + p2.1) / 2);
            subdivide(p0, m01, m02, depth - 1, index, coords, edges);
            subdivide(m01, p1, m12, depth - 1, index, coords, edges);
            subdivide(m02, m12, p2, depth - 1, index, coords, edges);
        }

        subdivide(
            (0, 0),
            (side, 0),
            (0, side),
            level,
            &mut index,
            &mut coords,
            &mut edges,
        );

        let n = coords.len();
        let mut adjacency = vec![Vec::new(); n];
        for (a, b) in edges {
            if !adjacency[a as usize].contains(&b) {
                adjacency[a as usize].push(b);
                adjacency[b as usize].push(a);
            }
        }
        for nbrs in &mut adjacency {
            nbrs.sort_unstable();
        }

        // All-pairs BFS; n = 3(3^L + 1)/2 stays small for the levels we use.
        let mut hops = vec![u16::MAX; n * n];
        let mut queue = std::collections::VecDeque::new();
        for start in 0..n {
            let row = start * n;
            hops[row + start] = 0;
            queue.clear();
            queue.push_back(start as u32);
            while let Some(v) = queue.pop_front() {
                let dv = hops[row + v as usize];
                for &w in &adjacency[v as usize] {
                    if hops[row + w as usize] == u16::MAX {
                        hops[row + w as usize] = dv + 1;
                        queue.push_back(w);
                    }
                }
            }
        }

        GasketGraph {
            level,
            coords,
            adjacency,
            index,
            hops,
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.coords.len()
    }

    pub fn edge_length(&self) -> f64 {
        0.5f64.powi(self.level as i32)
    }

    /// Per-step time of the standard gasket walk at this level.
    pub fn step_time(&self) -> f64 {
        0.2f64.powi(self.level as i32)
    }

    pub fn neighbors(&self, v: u32) -> &[u32] {
        &self.adjacency[v as usize]
    }

    /// Graph metric: shortest-path hop count times the edge length.
    pub fn distance(&self, u: u32, v: u32) -> f64 {
        let h = self.hops[u as usize * self.coords.len() + v as usize];
        h as f64 * self.edge_length()
    }

    /// The three corners of the outer triangle.
    pub fn corners(&self) -> [u32; 3] {
        let side = 1i64 << self.level;
        [
            self.index[&(0, 0)],
            self.index[&(side, 0)],
            self.index[&(0, side)],
        ]
    }

    /// Euclidean position of a vertex (outer triangle has unit side).
    pub fn position(&self, v: u32) -> (f64, f64) {
        let (a, b) = self.coords[v as usize];
        let s = self.edge_length();
        (
            a as f64 * s + b as f64 * s * 0.5,
            b as f64 * s * (3.0f64).sqrt() * 0.5,
        )
    }
}
