//! Base square lattice, topology masks and presets.
//!
//! Nodes are numbered row-major, `id = row * cols + col`. The edge list is
//! canonical: all horizontal edges in row-major order first, then all
//! vertical edges in row-major order, each stored `(low_id, high_id)`. Edge
//! indices are therefore a pure function of `(rows, cols)` and stable across
//! runs and platforms; they double as the action space of the policy.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// A `rows x cols` square lattice with the canonical edge ordering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lattice {
    rows: usize,
    cols: usize,
    edges: Vec<(usize, usize)>,
    /// adjacency[v] = (neighbor, edge index), in edge-index order.
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl Lattice {
    /// Build the lattice. Fails for zero dimensions or a single node.
    pub fn new(rows: usize, cols: usize) -> Result<Arc<Lattice>> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument(format!(
                "lattice dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if rows * cols < 2 {
            return Err(Error::InvalidArgument(
                "lattice must have at least 2 nodes".into(),
            ));
        }
        let mut edges = Vec::with_capacity(rows * (cols - 1) + (rows - 1) * cols);
        for r in 0..rows {
            for c in 0..cols.saturating_sub(1) {
                edges.push((r * cols + c, r * cols + c + 1));
            }
        }
        for r in 0..rows.saturating_sub(1) {
            for c in 0..cols {
                edges.push((r * cols + c, (r + 1) * cols + c));
            }
        }
        let mut adjacency = vec![Vec::new(); rows * cols];
        for (idx, &(a, b)) in edges.iter().enumerate() {
            adjacency[a].push((b, idx));
            adjacency[b].push((a, idx));
        }
        Ok(Arc::new(Lattice {
            rows,
            cols,
            edges,
            adjacency,
        }))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn num_nodes(&self) -> usize {
        self.rows * self.cols
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Canonical edge list, `(low_id, high_id)` pairs.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn node_at(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.rows && col < self.cols);
        row * self.cols + col
    }

    pub fn coords(&self, node: usize) -> (usize, usize) {
        (node / self.cols, node % self.cols)
    }

    /// Neighbors of `node` with the connecting edge index.
    pub fn neighbors(&self, node: usize) -> &[(usize, usize)] {
        &self.adjacency[node]
    }

    /// Edge index for an unordered node pair, if the pair is a lattice edge.
    pub fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        if a >= self.num_nodes() || b >= self.num_nodes() {
            return None;
        }
        self.adjacency[a]
            .iter()
            .find(|&&(n, _)| n == b)
            .map(|&(_, idx)| idx)
    }
}

/// Build a lattice; thin named wrapper over [`Lattice::new`].
pub fn build_lattice(rows: usize, cols: usize) -> Result<Arc<Lattice>> {
    Lattice::new(rows, cols)
}

/// An active subset of the lattice: the coupling map for one synthesis
/// problem and the action mask for the policy.
///
/// Invariants (checked at construction): every active edge has two active
/// endpoints, the active subgraph is connected, and a mask with two or more
/// active nodes has at least one active edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopologyMask {
    lattice: Arc<Lattice>,
    active_nodes: Vec<bool>,
    active_edges: Vec<bool>,
    num_active_nodes: usize,
    num_active_edges: usize,
}

impl TopologyMask {
    /// Mask activating every node and edge.
    pub fn full(lattice: &Arc<Lattice>) -> TopologyMask {
        TopologyMask {
            lattice: Arc::clone(lattice),
            active_nodes: vec![true; lattice.num_nodes()],
            active_edges: vec![true; lattice.num_edges()],
            num_active_nodes: lattice.num_nodes(),
            num_active_edges: lattice.num_edges(),
        }
    }

    /// Mask over a node set with all induced lattice edges active.
    pub fn from_nodes_induced(lattice: &Arc<Lattice>, nodes: &[usize]) -> Result<TopologyMask> {
        let mut active_nodes = vec![false; lattice.num_nodes()];
        for &n in nodes {
            if n >= lattice.num_nodes() {
                return Err(Error::InvalidArgument(format!(
                    "node {n} out of bounds for {}x{} lattice",
                    lattice.rows(),
                    lattice.cols()
                )));
            }
            active_nodes[n] = true;
        }
        let active_edges = induced_edges(lattice, &active_nodes);
        Self::from_parts(lattice, active_nodes, active_edges)
    }

    /// Mask over a node set with an explicit active-edge set.
    pub fn from_nodes_and_edges(
        lattice: &Arc<Lattice>,
        nodes: &[usize],
        edge_indices: &[usize],
    ) -> Result<TopologyMask> {
        let mut active_nodes = vec![false; lattice.num_nodes()];
        for &n in nodes {
            if n >= lattice.num_nodes() {
                return Err(Error::InvalidArgument(format!("node {n} out of bounds")));
            }
            active_nodes[n] = true;
        }
        let mut active_edges = vec![false; lattice.num_edges()];
        for &e in edge_indices {
            if e >= lattice.num_edges() {
                return Err(Error::InvalidArgument(format!("edge {e} out of bounds")));
            }
            active_edges[e] = true;
        }
        Self::from_parts(lattice, active_nodes, active_edges)
    }

    fn from_parts(
        lattice: &Arc<Lattice>,
        active_nodes: Vec<bool>,
        active_edges: Vec<bool>,
    ) -> Result<TopologyMask> {
        let num_active_nodes = active_nodes.iter().filter(|&&b| b).count();
        let num_active_edges = active_edges.iter().filter(|&&b| b).count();
        if num_active_nodes == 0 {
            return Err(Error::InvalidTopology("no active nodes".into()));
        }
        for (idx, &(a, b)) in lattice.edges().iter().enumerate() {
            if active_edges[idx] && !(active_nodes[a] && active_nodes[b]) {
                return Err(Error::InvalidTopology(format!(
                    "active edge ({a},{b}) has an inactive endpoint"
                )));
            }
        }
        if num_active_nodes >= 2 && num_active_edges == 0 {
            return Err(Error::InvalidTopology(
                "multiple active nodes but no active edge".into(),
            ));
        }
        let mask = TopologyMask {
            lattice: Arc::clone(lattice),
            active_nodes,
            active_edges,
            num_active_nodes,
            num_active_edges,
        };
        if !mask.is_connected() {
            return Err(Error::InvalidTopology(
                "active subgraph is not connected".into(),
            ));
        }
        Ok(mask)
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn is_node_active(&self, node: usize) -> bool {
        self.active_nodes[node]
    }

    pub fn is_edge_active(&self, edge: usize) -> bool {
        self.active_edges[edge]
    }

    pub fn node_flags(&self) -> &[bool] {
        &self.active_nodes
    }

    pub fn edge_flags(&self) -> &[bool] {
        &self.active_edges
    }

    pub fn num_active_nodes(&self) -> usize {
        self.num_active_nodes
    }

    pub fn num_active_edges(&self) -> usize {
        self.num_active_edges
    }

    pub fn active_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.active_nodes
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
    }

    pub fn active_edges(&self) -> impl Iterator<Item = usize> + '_ {
        self.active_edges
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
    }

    /// BFS over active edges from the first active node.
    fn is_connected(&self) -> bool {
        let Some(start) = self.active_nodes().next() else {
            return false;
        };
        let mut seen = vec![false; self.lattice.num_nodes()];
        let mut queue = std::collections::VecDeque::new();
        seen[start] = true;
        queue.push_back(start);
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for &(w, e) in self.lattice.neighbors(v) {
                if self.active_edges[e] && !seen[w] {
                    seen[w] = true;
                    count += 1;
                    queue.push_back(w);
                }
            }
        }
        count == self.num_active_nodes
    }

    /// Serialize to the versioned topology text format.
    pub fn to_file_string(&self) -> String {
        let lat = &self.lattice;
        let mut out = String::new();
        let _ = writeln!(out, "topology v1 {} {}", lat.rows(), lat.cols());
        for n in self.active_nodes() {
            let (r, c) = lat.coords(n);
            let _ = writeln!(out, "n {r} {c}");
        }
        // Emit explicit edges only when the mask is not the induced one, so
        // hand-written induced files stay minimal after a round trip.
        let induced = induced_edges(lat, &self.active_nodes);
        if induced != self.active_edges {
            for e in self.active_edges() {
                let (a, b) = lat.edges()[e];
                let (ra, ca) = lat.coords(a);
                let (rb, cb) = lat.coords(b);
                let _ = writeln!(out, "e {ra} {ca} {rb} {cb}");
            }
        }
        out
    }

    /// Parse the topology text format. Absence of `e` lines means all
    /// induced lattice edges are active.
    pub fn from_file_str(text: &str) -> Result<TopologyMask> {
        let mut lines = meaningful_lines(text);
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty topology file".into()))?;
        let mut it = header.split_whitespace();
        if it.next() != Some("topology") || it.next() != Some("v1") {
            return Err(Error::Parse(
                "topology file must start with `topology v1 <rows> <cols>`".into(),
            ));
        }
        let rows = parse_num(it.next(), "rows")?;
        let cols = parse_num(it.next(), "cols")?;
        let lattice = Lattice::new(rows, cols)?;

        let mut nodes = Vec::new();
        let mut edge_indices = Vec::new();
        let mut saw_edges = false;
        for line in lines {
            let mut it = line.split_whitespace();
            match it.next() {
                Some("n") => {
                    let r: usize = parse_num(it.next(), "node row")?;
                    let c: usize = parse_num(it.next(), "node col")?;
                    if r >= rows || c >= cols {
                        return Err(Error::InvalidArgument(format!(
                            "node ({r},{c}) outside {rows}x{cols} lattice"
                        )));
                    }
                    nodes.push(lattice.node_at(r, c));
                }
                Some("e") => {
                    saw_edges = true;
                    let ra: usize = parse_num(it.next(), "edge row")?;
                    let ca: usize = parse_num(it.next(), "edge col")?;
                    let rb: usize = parse_num(it.next(), "edge row")?;
                    let cb: usize = parse_num(it.next(), "edge col")?;
                    if ra >= rows || ca >= cols || rb >= rows || cb >= cols {
                        return Err(Error::InvalidArgument(format!(
                            "edge endpoint outside {rows}x{cols} lattice"
                        )));
                    }
                    let a = lattice.node_at(ra, ca);
                    let b = lattice.node_at(rb, cb);
                    let idx = lattice.edge_index(a, b).ok_or_else(|| {
                        Error::InvalidArgument(format!(
                            "({ra},{ca})-({rb},{cb}) is not a lattice edge"
                        ))
                    })?;
                    edge_indices.push(idx);
                }
                Some(other) => {
                    return Err(Error::Parse(format!("unknown topology line `{other}`")));
                }
                None => {}
            }
        }
        if saw_edges {
            TopologyMask::from_nodes_and_edges(&lattice, &nodes, &edge_indices)
        } else {
            TopologyMask::from_nodes_induced(&lattice, &nodes)
        }
    }
}

fn induced_edges(lattice: &Lattice, active_nodes: &[bool]) -> Vec<bool> {
    lattice
        .edges()
        .iter()
        .map(|&(a, b)| active_nodes[a] && active_nodes[b])
        .collect()
}

fn meaningful_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
}

fn parse_num<T: std::str::FromStr>(tok: Option<&str>, what: &str) -> Result<T> {
    tok.ok_or_else(|| Error::Parse(format!("missing {what}")))?
        .parse()
        .map_err(|_| Error::Parse(format!("bad {what}: `{}`", tok.unwrap_or(""))))
}

/// Sample a connected mask by frontier growth.
///
/// The node count is drawn uniformly from `size_range`; growth starts at a
/// uniform random node and repeatedly picks a uniform random frontier *edge*
/// (one endpoint inside, one outside) and adds its outside endpoint. Picking
/// edges rather than nodes biases growth toward high-degree boundaries.
/// Active edges are all lattice edges induced among the chosen nodes.
pub fn sample_connected_mask(
    lattice: &Arc<Lattice>,
    size_range: (usize, usize),
    rng: &mut ChaCha8Rng,
) -> Result<TopologyMask> {
    let (min, max) = size_range;
    if min < 1 || min > max || max > lattice.num_nodes() {
        return Err(Error::InvalidArgument(format!(
            "size range ({min},{max}) invalid for {} nodes",
            lattice.num_nodes()
        )));
    }
    let target = rng.gen_range(min..=max);
    let start = rng.gen_range(0..lattice.num_nodes());

    let mut inside = vec![false; lattice.num_nodes()];
    inside[start] = true;
    let mut chosen = vec![start];
    // Frontier edges as (edge index, outside endpoint).
    let mut frontier: Vec<(usize, usize)> = lattice
        .neighbors(start)
        .iter()
        .map(|&(w, e)| (e, w))
        .collect();

    while chosen.len() < target {
        debug_assert!(!frontier.is_empty(), "frontier cannot empty before target");
        let pick = rng.gen_range(0..frontier.len());
        let (_, new_node) = frontier[pick];
        if !inside[new_node] {
            inside[new_node] = true;
            chosen.push(new_node);
            for &(w, e) in lattice.neighbors(new_node) {
                if !inside[w] {
                    frontier.push((e, w));
                }
            }
        }
        // Drop edges that stopped being frontier (their outside endpoint may
        // have just been absorbed).
        frontier.retain(|&(_, w)| !inside[w]);
    }
    TopologyMask::from_nodes_induced(lattice, &chosen)
}

/// A named topology shape given in lattice coordinates.
///
/// The node coordinates are the shape at its canonical placement; resolve it
/// against a lattice to obtain a mask. `edges: None` means all induced
/// lattice edges are active.
#[derive(Debug, Clone)]
pub struct TopologyPreset {
    pub name: String,
    pub node_coords: Vec<(usize, usize)>,
    /// Explicit edge list as coordinate pairs; `None` = induced.
    pub edges: Option<Vec<((usize, usize), (usize, usize))>>,
}

impl TopologyPreset {
    pub fn induced(name: &str, node_coords: Vec<(usize, usize)>) -> TopologyPreset {
        TopologyPreset {
            name: name.to_string(),
            node_coords,
            edges: None,
        }
    }

    /// Resolve the preset on a lattice.
    pub fn resolve(&self, lattice: &Arc<Lattice>) -> Result<TopologyMask> {
        let mut nodes = Vec::with_capacity(self.node_coords.len());
        for &(r, c) in &self.node_coords {
            if r >= lattice.rows() || c >= lattice.cols() {
                return Err(Error::InvalidArgument(format!(
                    "preset {}: coord ({r},{c}) outside {}x{} lattice",
                    self.name,
                    lattice.rows(),
                    lattice.cols()
                )));
            }
            nodes.push(lattice.node_at(r, c));
        }
        match &self.edges {
            None => TopologyMask::from_nodes_induced(lattice, &nodes),
            Some(pairs) => {
                let mut edge_indices = Vec::with_capacity(pairs.len());
                for &((ra, ca), (rb, cb)) in pairs {
                    if ra >= lattice.rows()
                        || ca >= lattice.cols()
                        || rb >= lattice.rows()
                        || cb >= lattice.cols()
                    {
                        return Err(Error::InvalidArgument(format!(
                            "preset {}: edge coord outside lattice",
                            self.name
                        )));
                    }
                    let a = lattice.node_at(ra, ca);
                    let b = lattice.node_at(rb, cb);
                    let idx = lattice.edge_index(a, b).ok_or_else(|| {
                        Error::InvalidArgument(format!(
                            "preset {}: ({ra},{ca})-({rb},{cb}) is not a lattice edge",
                            self.name
                        ))
                    })?;
                    edge_indices.push(idx);
                }
                TopologyMask::from_nodes_and_edges(lattice, &nodes, &edge_indices)
            }
        }
    }
}

/// Built-in presets, reconstructed from the letter shapes and node counts.
/// All are induced subgraphs and fit a 5x5 lattice; they are best-effort
/// reconstructions, and users can override any of them with a topology file.
pub fn builtin_presets() -> Vec<TopologyPreset> {
    vec![
        // Column of five plus a row of three sharing the bottom-left corner.
        TopologyPreset::induced(
            "7qL",
            vec![(0, 0), (1, 0), (2, 0), (3, 0), (4, 0), (4, 1), (4, 2)],
        ),
        // Vertical stroke with two left-anchored arms.
        TopologyPreset::induced(
            "7qF",
            vec![(0, 0), (1, 0), (2, 0), (3, 0), (4, 0), (0, 1), (2, 1)],
        ),
        // Two short verticals joined by a crossbar.
        TopologyPreset::induced(
            "7qH",
            vec![(0, 0), (1, 0), (2, 0), (1, 1), (0, 2), (1, 2), (2, 2)],
        ),
        // Top bar of three with a stem of four.
        TopologyPreset::induced(
            "7qT",
            vec![(0, 0), (0, 1), (0, 2), (1, 1), (2, 1), (3, 1), (4, 1)],
        ),
        // F with a two-node top arm and a one-node middle arm.
        TopologyPreset::induced(
            "8qF",
            vec![
                (0, 0),
                (1, 0),
                (2, 0),
                (3, 0),
                (4, 0),
                (0, 1),
                (0, 2),
                (2, 1),
            ],
        ),
        // Top bar, right stem, bottom hook.
        TopologyPreset::induced(
            "8qJ",
            vec![
                (0, 0),
                (0, 1),
                (0, 2),
                (1, 2),
                (2, 2),
                (3, 2),
                (3, 1),
                (3, 0),
            ],
        ),
        // T with a five-node bar and a three-node stem.
        TopologyPreset::induced(
            "8qT2",
            vec![
                (0, 0),
                (0, 1),
                (0, 2),
                (0, 3),
                (0, 4),
                (1, 2),
                (2, 2),
                (3, 2),
            ],
        ),
        // T with a five-node bar and a four-node stem.
        TopologyPreset::induced(
            "9qT2",
            vec![
                (0, 0),
                (0, 1),
                (0, 2),
                (0, 3),
                (0, 4),
                (1, 2),
                (2, 2),
                (3, 2),
                (4, 2),
            ],
        ),
        // H with four-node legs and a single crossbar node.
        TopologyPreset::induced(
            "9qH3",
            vec![
                (0, 0),
                (1, 0),
                (2, 0),
                (3, 0),
                (1, 1),
                (0, 2),
                (1, 2),
                (2, 2),
                (3, 2),
            ],
        ),
        // Ring: perimeter of a 4x4 block.
        TopologyPreset::induced(
            "12qO",
            vec![
                (0, 0),
                (0, 1),
                (0, 2),
                (0, 3),
                (1, 3),
                (2, 3),
                (3, 3),
                (3, 2),
                (3, 1),
                (3, 0),
                (2, 0),
                (1, 0),
            ],
        ),
    ]
}

/// Look up a built-in preset by name.
pub fn preset_by_name(name: &str) -> Option<TopologyPreset> {
    builtin_presets().into_iter().find(|p| p.name == name)
}

/// All-pairs shortest-path hop counts restricted to active edges.
#[derive(Debug, Clone)]
pub struct DistanceMatrix {
    n: usize,
    dist: Vec<u32>,
}

/// Marker for unreachable / inactive pairs.
pub const DIST_UNREACHED: u32 = u32::MAX / 4;

impl DistanceMatrix {
    pub fn get(&self, a: usize, b: usize) -> u32 {
        self.dist[a * self.n + b]
    }
}

/// BFS from every active node over active edges.
pub fn all_pairs_distances(mask: &TopologyMask) -> DistanceMatrix {
    let lat = mask.lattice();
    let n = lat.num_nodes();
    let mut dist = vec![DIST_UNREACHED; n * n];
    let mut queue = std::collections::VecDeque::new();
    for src in mask.active_nodes() {
        let row = &mut dist[src * n..(src + 1) * n];
        row[src] = 0;
        queue.clear();
        queue.push_back(src);
        while let Some(v) = queue.pop_front() {
            let dv = row[v];
            for &(w, e) in lat.neighbors(v) {
                if mask.is_edge_active(e) && row[w] == DIST_UNREACHED {
                    row[w] = dv + 1;
                    queue.push_back(w);
                }
            }
        }
    }
    DistanceMatrix { n, dist }
}

/// All placements of a node shape in a lattice: the dihedral images of the
/// coordinate set (those that fit) combined with every translation. Each
/// embedding maps original node ids to embedded node ids.
pub fn enumerate_embeddings(mask: &TopologyMask, lattice: &Arc<Lattice>) -> Vec<Vec<usize>> {
    let src = mask.lattice();
    let coords: Vec<(isize, isize)> = mask
        .active_nodes()
        .map(|n| {
            let (r, c) = src.coords(n);
            (r as isize, c as isize)
        })
        .collect();

    let mut embeddings: Vec<Vec<usize>> = Vec::new();
    let mut seen_placements = std::collections::HashSet::new();
    for variant in 0..8 {
        let transformed: Vec<(isize, isize)> = coords
            .iter()
            .map(|&(r, c)| {
                let (r, c) = match variant & 3 {
                    0 => (r, c),
                    1 => (c, -r),
                    2 => (-r, -c),
                    _ => (-c, r),
                };
                if variant & 4 != 0 {
                    (r, -c)
                } else {
                    (r, c)
                }
            })
            .collect();
        let min_r = transformed.iter().map(|&(r, _)| r).min().unwrap();
        let min_c = transformed.iter().map(|&(_, c)| c).min().unwrap();
        let norm: Vec<(usize, usize)> = transformed
            .iter()
            .map(|&(r, c)| ((r - min_r) as usize, (c - min_c) as usize))
            .collect();
        let height = norm.iter().map(|&(r, _)| r).max().unwrap() + 1;
        let width = norm.iter().map(|&(_, c)| c).max().unwrap() + 1;
        if height > lattice.rows() || width > lattice.cols() {
            continue;
        }
        for dr in 0..=(lattice.rows() - height) {
            for dc in 0..=(lattice.cols() - width) {
                let placement: Vec<usize> = norm
                    .iter()
                    .map(|&(r, c)| lattice.node_at(r + dr, c + dc))
                    .collect();
                let mut key = placement.clone();
                key.sort_unstable();
                // Symmetric shapes reproduce the same node set; dedupe, but
                // keep distinct node-to-node maps only if the set differs.
                if seen_placements.insert(key) {
                    embeddings.push(placement);
                }
            }
        }
    }
    embeddings
}

/// Apply an embedding (as produced by [`enumerate_embeddings`]) to a mask,
/// yielding the mask placed at the embedded location on `lattice`.
pub fn embed_mask(
    mask: &TopologyMask,
    lattice: &Arc<Lattice>,
    embedding: &[usize],
) -> Result<TopologyMask> {
    let active: Vec<usize> = mask.active_nodes().collect();
    if active.len() != embedding.len() {
        return Err(Error::InvalidArgument(
            "embedding length does not match active node count".into(),
        ));
    }
    let map: std::collections::HashMap<usize, usize> =
        active.iter().copied().zip(embedding.iter().copied()).collect();
    let src = mask.lattice();
    let nodes: Vec<usize> = embedding.to_vec();
    let mut edge_indices = Vec::new();
    for e in mask.active_edges() {
        let (a, b) = src.edges()[e];
        let (ea, eb) = (map[&a], map[&b]);
        let idx = lattice.edge_index(ea, eb).ok_or_else(|| {
            Error::InvalidArgument("embedding does not preserve adjacency".into())
        })?;
        edge_indices.push(idx);
    }
    TopologyMask::from_nodes_and_edges(lattice, &nodes, &edge_indices)
}
