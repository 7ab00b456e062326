//! Communication topology and the consensus terms on virtual coordinates.
//!
//! Robots are indexed from 0 in this API; scenario files and logs use
//! 1-based ids.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("edge ({0}, {1}) is a self-loop")]
    SelfLoop(usize, usize),
    #[error("edge ({0}, {1}) appears more than once")]
    DuplicateEdge(usize, usize),
    #[error("edge ({i}, {j}) references a robot outside 0..{n}")]
    OutOfRange { i: usize, j: usize, n: usize },
    #[error("offset table has {got} entries for {expected} robots")]
    OffsetLength { expected: usize, got: usize },
}

/// Undirected graph on `n` robots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    n: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl Topology {
    /// Edges are unordered pairs of 0-based robot indices; each is stored
    /// as `(min, max)` in the order given.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self, GraphError> {
        let mut seen = BTreeSet::new();
        let mut stored = Vec::new();
        let mut neighbors = vec![Vec::new(); n];
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(GraphError::OutOfRange { i, j, n });
            }
            if i == j {
                return Err(GraphError::SelfLoop(i, j));
            }
            let key = (i.min(j), i.max(j));
            if !seen.insert(key) {
                return Err(GraphError::DuplicateEdge(i, j));
            }
            stored.push(key);
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Ok(Self { n, edges: stored, neighbors })
    }

    /// Each robot linked to its index neighbours, wrapping around.
    pub fn ring(n: usize) -> Self {
        let edges: Vec<_> = match n {
            0 | 1 => Vec::new(),
            2 => vec![(0, 1)],
            _ => (0..n).map(|i| (i, (i + 1) % n)).collect(),
        };
        Self::new(n, edges).expect("ring edges are valid")
    }

    /// Each robot linked to the `k` nearest indices on either side, wrapping
    /// around. `circulant(n, 1)` is the ring.
    pub fn circulant(n: usize, k: usize) -> Self {
        let reach = k.min(n / 2);
        let mut edges = Vec::new();
        for i in 0..n {
            for d in 1..=reach {
                let j = (i + d) % n;
                let e = (i.min(j), i.max(j));
                if i != j && !edges.contains(&e) {
                    edges.push(e);
                }
            }
        }
        Self::new(n, edges).expect("circulant edges are valid")
    }

    pub fn complete(n: usize) -> Self {
        let edges = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j)));
        Self::new(n, edges).expect("complete-graph edges are valid")
    }

    pub fn path(n: usize) -> Self {
        Self::new(n, (1..n).map(|i| (i - 1, i))).expect("path edges are valid")
    }

    pub fn robot_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    /// `L = D - A`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(self.n, self.n);
        for &(i, j) in &self.edges {
            l[(i, j)] -= 1.0;
            l[(j, i)] -= 1.0;
            l[(i, i)] += 1.0;
            l[(j, j)] += 1.0;
        }
        l
    }

    /// Component label for every robot; labels are the smallest index in the
    /// component.
    pub fn components(&self) -> Vec<usize> {
        let mut label = vec![usize::MAX; self.n];
        for root in 0..self.n {
            if label[root] != usize::MAX {
                continue;
            }
            label[root] = root;
            let mut stack = vec![root];
            while let Some(v) = stack.pop() {
                for &u in &self.neighbors[v] {
                    if label[u] == usize::MAX {
                        label[u] = root;
                        stack.push(u);
                    }
                }
            }
        }
        label
    }

    pub fn is_connected(&self) -> bool {
        self.components().iter().all(|&c| c == 0)
    }
}

/// Reference virtual coordinates `w1*`, `w2*`. Per-edge offsets are derived
/// from them, so they are antisymmetric and sum to zero around any cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetTable {
    w1_star: Vec<f64>,
    w2_star: Vec<f64>,
}

impl OffsetTable {
    pub fn new(w1_star: Vec<f64>, w2_star: Vec<f64>) -> Result<Self, GraphError> {
        if w1_star.len() != w2_star.len() {
            return Err(GraphError::OffsetLength { expected: w1_star.len(), got: w2_star.len() });
        }
        Ok(Self { w1_star, w2_star })
    }

    pub fn zeros(n: usize) -> Self {
        Self { w1_star: vec![0.0; n], w2_star: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.w1_star.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w1_star.is_empty()
    }

    pub fn w1_star(&self) -> &[f64] {
        &self.w1_star
    }

    pub fn w2_star(&self) -> &[f64] {
        &self.w2_star
    }

    /// `Δ1[i,j] = w1*_i - w1*_j`.
    pub fn delta1(&self, i: usize, j: usize) -> f64 {
        self.w1_star[i] - self.w1_star[j]
    }

    pub fn delta2(&self, i: usize, j: usize) -> f64 {
        self.w2_star[i] - self.w2_star[j]
    }
}

/// Read access to the exchanged virtual coordinates.
pub trait VirtualCoordinates {
    fn w1(&self, robot: usize) -> f64;
    fn w2(&self, robot: usize) -> f64;
}

/// Plain slices of every robot's `(w1, w2)`.
#[derive(Debug, Clone, Copy)]
pub struct Snapshot<'a> {
    pub w1: &'a [f64],
    pub w2: &'a [f64],
}

impl VirtualCoordinates for Snapshot<'_> {
    fn w1(&self, robot: usize) -> f64 {
        self.w1[robot]
    }

    fn w2(&self, robot: usize) -> f64 {
        self.w2[robot]
    }
}

/// Consensus residuals of robot `i`:
/// `c_k = -Σ_{j ∈ N(i)} (w_k[i] - w_k[j] - Δ_k[i,j])`.
///
/// Only robot `i` and its neighbours are read from `w`.
pub fn coordination_residuals(
    topology: &Topology,
    offsets: &OffsetTable,
    w: &impl VirtualCoordinates,
    i: usize,
) -> (f64, f64) {
    let (w1_i, w2_i) = (w.w1(i), w.w2(i));
    let mut c1 = 0.0;
    let mut c2 = 0.0;
    for &j in topology.neighbors(i) {
        c1 -= w1_i - w.w1(j) - offsets.delta1(i, j);
        c2 -= w2_i - w.w2(j) - offsets.delta2(i, j);
    }
    (c1, c2)
}

/// Per-edge coordination errors `w_k[i] - w_k[j] - Δ_k[i,j]`, in edge order.
pub fn edge_errors(
    topology: &Topology,
    offsets: &OffsetTable,
    w1: &[f64],
    w2: &[f64],
) -> Vec<(f64, f64)> {
    topology
        .edges()
        .iter()
        .map(|&(i, j)| {
            (
                w1[i] - w1[j] - offsets.delta1(i, j),
                w2[i] - w2[j] - offsets.delta2(i, j),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use std::cell::RefCell;

    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn textbook_laplacians() {
        let l = Topology::path(3).laplacian();
        assert_eq!(
            l,
            DMatrix::from_row_slice(3, 3, &[1.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 1.0])
        );
        let l = Topology::complete(3).laplacian();
        assert_eq!(
            l,
            DMatrix::from_row_slice(3, 3, &[2.0, -1.0, -1.0, -1.0, 2.0, -1.0, -1.0, -1.0, 2.0])
        );
    }

    #[test]
    fn circulant_spectrum() {
        assert_eq!(Topology::circulant(7, 1).laplacian(), Topology::ring(7).laplacian());
        assert_eq!(Topology::circulant(6, 3).laplacian(), Topology::complete(6).laplacian());
        let (n, k) = (82, 4);
        let topo = Topology::circulant(n, k);
        assert!((0..n).all(|i| topo.degree(i) == 2 * k));
        let mut got: Vec<f64> = topo.laplacian().symmetric_eigen().eigenvalues.iter().copied().collect();
        got.sort_by(f64::total_cmp);
        // λ_m = 2k - 2 Σ_d cos(2π m d / n)
        let mut want: Vec<f64> = (0..n)
            .map(|m| {
                let s: f64 = (1..=k)
                    .map(|d| (2.0 * std::f64::consts::PI * (m * d) as f64 / n as f64).cos())
                    .sum();
                2.0 * k as f64 - 2.0 * s
            })
            .collect();
        want.sort_by(f64::total_cmp);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn ring_has_simple_zero_eigenvalue() {
        let l = Topology::ring(5).laplacian();
        let eig = l.symmetric_eigen();
        let zeros = eig.eigenvalues.iter().filter(|v| v.abs() < 1e-10).count();
        assert_eq!(zeros, 1);
        assert!(eig.eigenvalues.iter().all(|&v| v > -1e-12));
        // closed form 2 - 2 cos(2πk/5)
        let mut got: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        got.sort_by(f64::total_cmp);
        let mut want: Vec<f64> = (0..5)
            .map(|k| 2.0 - 2.0 * (2.0 * std::f64::consts::PI * k as f64 / 5.0).cos())
            .collect();
        want.sort_by(f64::total_cmp);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_bad_edges() {
        assert_eq!(Topology::new(3, [(1, 1)]), Err(GraphError::SelfLoop(1, 1)));
        assert_eq!(Topology::new(3, [(0, 1), (1, 0)]), Err(GraphError::DuplicateEdge(1, 0)));
        assert!(matches!(Topology::new(3, [(0, 3)]), Err(GraphError::OutOfRange { .. })));
    }

    #[test]
    fn connectivity() {
        assert!(Topology::ring(5).is_connected());
        assert!(!Topology::new(4, [(0, 1), (2, 3)]).unwrap().is_connected());
        assert!(Topology::new(1, []).unwrap().is_connected());
    }

    fn find(parent: &mut Vec<usize>, x: usize) -> usize {
        if parent[x] != x {
            let root = find(parent, parent[x]);
            parent[x] = root;
        }
        parent[x]
    }

    #[test]
    fn connectivity_matches_union_find() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = 20;
            let p = rng.gen_range(0.02..0.3);
            let mut edges = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    if rng.gen_bool(p) {
                        edges.push((i, j));
                    }
                }
            }
            let mut parent: Vec<usize> = (0..n).collect();
            for &(i, j) in &edges {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a] = b;
            }
            let roots: BTreeSet<usize> = (0..n).map(|v| find(&mut parent, v)).collect();
            let topo = Topology::new(n, edges).unwrap();
            assert_eq!(topo.is_connected(), roots.len() == 1);
        }
    }

    #[test]
    fn two_robot_residuals() {
        let topo = Topology::new(2, [(0, 1)]).unwrap();
        let offsets = OffsetTable::zeros(2);
        let w1 = [0.0, 1.0];
        let w2 = [0.0, 0.0];
        let snap = Snapshot { w1: &w1, w2: &w2 };
        assert_eq!(coordination_residuals(&topo, &offsets, &snap, 0), (1.0, 0.0));
        assert_eq!(coordination_residuals(&topo, &offsets, &snap, 1), (-1.0, 0.0));
    }

    #[test]
    fn residuals_vanish_at_reference() {
        let topo = Topology::ring(6);
        let w1s: Vec<f64> = (0..6).map(|i| i as f64 * 0.7).collect();
        let w2s: Vec<f64> = (0..6).map(|i| (i as f64).sin()).collect();
        let offsets = OffsetTable::new(w1s.clone(), w2s.clone()).unwrap();
        let w1: Vec<f64> = w1s.iter().map(|v| v + 3.5).collect();
        let w2: Vec<f64> = w2s.iter().map(|v| v - 1.25).collect();
        let snap = Snapshot { w1: &w1, w2: &w2 };
        for i in 0..6 {
            let (c1, c2) = coordination_residuals(&topo, &offsets, &snap, i);
            assert!(c1.abs() < 1e-14 && c2.abs() < 1e-14);
        }
    }

    fn random_connected(rng: &mut ChaCha8Rng, n: usize) -> Topology {
        loop {
            let mut edges = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    if rng.gen_bool(0.3) {
                        edges.push((i, j));
                    }
                }
            }
            let topo = Topology::new(n, edges).unwrap();
            if topo.is_connected() {
                return topo;
            }
        }
    }

    #[test]
    fn stacked_residuals_equal_laplacian_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n = rng.gen_range(2..15);
            let topo = random_connected(&mut rng, n);
            let w1s: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let w2s: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let offsets = OffsetTable::new(w1s.clone(), w2s.clone()).unwrap();
            let w1: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let w2: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let snap = Snapshot { w1: &w1, w2: &w2 };
            let l = topo.laplacian();
            let e1 = nalgebra::DVector::from_iterator(n, w1.iter().zip(&w1s).map(|(a, b)| a - b));
            let e2 = nalgebra::DVector::from_iterator(n, w2.iter().zip(&w2s).map(|(a, b)| a - b));
            let m1 = -&l * e1;
            let m2 = -&l * e2;
            let (mut s1, mut s2) = (0.0, 0.0);
            for i in 0..n {
                let (c1, c2) = coordination_residuals(&topo, &offsets, &snap, i);
                assert!((c1 - m1[i]).abs() < 1e-12);
                assert!((c2 - m2[i]).abs() < 1e-12);
                s1 += c1;
                s2 += c2;
            }
            assert!(s1.abs() < 1e-10 && s2.abs() < 1e-10);
        }
    }

    struct Recording<'a> {
        inner: Snapshot<'a>,
        seen: RefCell<BTreeSet<usize>>,
    }

    impl VirtualCoordinates for Recording<'_> {
        fn w1(&self, robot: usize) -> f64 {
            self.seen.borrow_mut().insert(robot);
            self.inner.w1(robot)
        }
        fn w2(&self, robot: usize) -> f64 {
            self.seen.borrow_mut().insert(robot);
            self.inner.w2(robot)
        }
    }

    #[test]
    fn residuals_read_only_neighbours() {
        let topo = Topology::ring(8);
        let offsets = OffsetTable::zeros(8);
        let w: Vec<f64> = (0..8).map(f64::from).collect();
        for i in 0..8 {
            let rec = Recording { inner: Snapshot { w1: &w, w2: &w }, seen: RefCell::default() };
            coordination_residuals(&topo, &offsets, &rec, i);
            let mut allowed: BTreeSet<usize> = topo.neighbors(i).iter().copied().collect();
            allowed.insert(i);
            assert!(rec.seen.borrow().is_subset(&allowed));
        }
    }

    #[test]
    fn offsets_are_cycle_consistent() {
        let offsets = OffsetTable::new(vec![0.3, -1.0, 2.5, 7.0], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let cycle = [0, 1, 2, 3, 0];
        let sum: f64 = cycle.windows(2).map(|p| offsets.delta1(p[0], p[1])).sum();
        assert!(sum.abs() < 1e-14);
        assert_eq!(offsets.delta2(1, 3), -offsets.delta2(3, 1));
    }

    #[test]
    fn edge_error_order_follows_edges() {
        let topo = Topology::path(3);
        let offsets = OffsetTable::new(vec![0.0, 1.0, 2.0], vec![0.0; 3]).unwrap();
        let errs = edge_errors(&topo, &offsets, &[0.0, 1.0, 3.0], &[0.0; 3]);
        assert_eq!(errs, vec![(0.0, 0.0), (-1.0, 0.0)]);
    }
}
