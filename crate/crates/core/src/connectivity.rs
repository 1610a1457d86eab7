//! Communication graph of the team, its Laplacian, the algebraic
//! connectivity λ₂ and the binary disconnection cost.

use crate::linalg::symmetric_eigenvalues;
use crate::world::Vec2;
use std::collections::VecDeque;

/// λ₂ at or below this value counts as disconnected.
pub const EPS_CONN: f64 = 1e-6;

/// Unweighted, undirected communication graph (dense adjacency).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommGraph {
    n: usize,
    adj: Vec<bool>,
}

impl CommGraph {
    pub fn empty(n: usize) -> Self {
        Self { n, adj: vec![false; n * n] }
    }

    /// Builds a graph from an undirected edge list. Self loops are ignored.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut g = Self::empty(n);
        for &(i, j) in edges {
            g.set_edge(i, j, true);
        }
        g
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i * self.n + j]
    }

    pub fn set_edge(&mut self, i: usize, j: usize, on: bool) {
        if i != j {
            self.adj[i * self.n + j] = on;
            self.adj[j * self.n + i] = on;
        }
    }

    pub fn degree(&self, i: usize) -> usize {
        (0..self.n).filter(|&j| self.has_edge(i, j)).count()
    }

    /// Applies a vertex permutation: vertex `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut g = Self::empty(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                if self.has_edge(i, j) {
                    g.set_edge(perm[i], perm[j], true);
                }
            }
        }
        g
    }
}

/// Graph Laplacian `L = D − A`, dense row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian {
    n: usize,
    data: Vec<f64>,
}

impl Laplacian {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// `a_ij = 1` iff `i ≠ j` and the robots are within `comm_range` of each other.
pub fn adjacency(positions: &[Vec2], comm_range: f64) -> CommGraph {
    let n = positions.len();
    let mut g = CommGraph::empty(n);
    for i in 0..n {
        for j in (i + 1)..n {
            if positions[i].distance(positions[j]) <= comm_range {
                g.set_edge(i, j, true);
            }
        }
    }
    g
}

pub fn laplacian(g: &CommGraph) -> Laplacian {
    let n = g.n;
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if g.has_edge(i, j) {
                data[i * n + j] = -1.0;
                data[i * n + i] += 1.0;
            }
        }
    }
    Laplacian { n, data }
}

/// Second-smallest Laplacian eigenvalue (algebraic connectivity).
///
/// A single vertex has no second eigenvalue and is reported as 0; the
/// environment never charges a disconnection cost to a lone robot.
pub fn lambda2(l: &Laplacian) -> f64 {
    if l.n < 2 {
        return 0.0;
    }
    symmetric_eigenvalues(&l.data, l.n)[1]
}

/// λ₂ of the communication graph over `positions`.
pub fn algebraic_connectivity(positions: &[Vec2], comm_range: f64) -> f64 {
    lambda2(&laplacian(&adjacency(positions, comm_range)))
}

/// Binary disconnection cost: 1 when λ₂ ≤ [`EPS_CONN`], else 0.
pub fn connectivity_cost(positions: &[Vec2], comm_range: f64) -> f64 {
    cost_from_lambda2(algebraic_connectivity(positions, comm_range))
}

pub fn cost_from_lambda2(lambda2: f64) -> f64 {
    if lambda2 <= EPS_CONN {
        1.0
    } else {
        0.0
    }
}

/// Breadth-first reachability from vertex 0.
pub fn is_connected_bfs(g: &CommGraph) -> bool {
    if g.n == 0 {
        return true;
    }
    let mut seen = vec![false; g.n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(v) = queue.pop_front() {
        for w in 0..g.n {
            if g.has_edge(v, w) && !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn adjacency_threshold() {
        let g = adjacency(&[Vec2::ZERO, Vec2::new(1.0, 0.0)], 1.2);
        assert!(g.has_edge(0, 1) && g.has_edge(1, 0));
        let g = adjacency(&[Vec2::ZERO, Vec2::new(1.3, 0.0)], 1.2);
        assert!(!g.has_edge(0, 1));
    }

    #[test]
    fn coincident_robots() {
        let g = adjacency(&[Vec2::ZERO, Vec2::ZERO], 1.2);
        assert!(g.has_edge(0, 1));
        assert!(!g.has_edge(0, 0) && !g.has_edge(1, 1));
        assert_eq!(connectivity_cost(&[Vec2::ZERO, Vec2::ZERO], 1.2), 0.0);
    }

    #[test]
    fn path_laplacian() {
        let l = laplacian(&CommGraph::from_edges(3, &[(0, 1), (1, 2)]));
        assert_eq!(l.as_slice(), &[1.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 1.0]);
    }

    #[test]
    fn empty_laplacian_is_zero() {
        let l = laplacian(&CommGraph::empty(4));
        assert!(l.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lambda2_fixtures() {
        // P3: characteristic polynomial λ(λ−1)(λ−3)
        let p3 = laplacian(&CommGraph::from_edges(3, &[(0, 1), (1, 2)]));
        assert_abs_diff_eq!(lambda2(&p3), 1.0, epsilon = 1e-9);
        let k3 = laplacian(&CommGraph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]));
        assert_abs_diff_eq!(lambda2(&k3), 3.0, epsilon = 1e-9);
        let isolated = laplacian(&CommGraph::empty(2));
        assert_abs_diff_eq!(lambda2(&isolated), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn cost_examples() {
        let chain = [Vec2::ZERO, Vec2::new(1.0, 0.0), Vec2::new(2.0, 0.0)];
        assert_eq!(connectivity_cost(&chain, 1.2), 0.0);
        let split = [Vec2::ZERO, Vec2::new(1.0, 0.0), Vec2::new(3.0, 0.0)];
        assert_eq!(connectivity_cost(&split, 1.2), 1.0);
    }

    #[test]
    fn bfs_examples() {
        assert!(is_connected_bfs(&CommGraph::from_edges(3, &[(0, 1), (1, 2)])));
        assert!(!is_connected_bfs(&CommGraph::from_edges(3, &[(0, 1)])));
    }

    #[test]
    fn lambda2_agrees_with_bfs_on_random_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let n = rng.random_range(2..=8);
            let p = rng.random_range(0.1..0.9);
            let mut g = CommGraph::empty(n);
            for i in 0..n {
                for j in i + 1..n {
                    g.set_edge(i, j, rng.random_bool(p));
                }
            }
            let l2 = lambda2(&laplacian(&g));
            assert!(l2 >= -1e-9);
            assert_eq!(l2 > EPS_CONN, is_connected_bfs(&g));
        }
    }

    proptest! {
        #[test]
        fn laplacian_rows_sum_to_zero(edges in proptest::collection::vec((0usize..7, 0usize..7), 0..20)) {
            let l = laplacian(&CommGraph::from_edges(7, &edges));
            for i in 0..7 {
                let s: f64 = (0..7).map(|j| l.get(i, j)).sum();
                prop_assert_eq!(s, 0.0);
            }
        }

        #[test]
        fn lambda2_permutation_invariant(
            edges in proptest::collection::vec((0usize..6, 0usize..6), 0..15),
            shift in 1usize..6,
        ) {
            let g = CommGraph::from_edges(6, &edges);
            let perm: Vec<usize> = (0..6).map(|i| (i * 5 + shift) % 6).collect();
            let a = lambda2(&laplacian(&g));
            let b = lambda2(&laplacian(&g.permuted(&perm)));
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn cost_rigid_motion_invariant(
            pts in proptest::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 2..7),
            angle in 0.0f64..6.3, tx in -10.0f64..10.0, ty in -10.0f64..10.0,
        ) {
            let p: Vec<Vec2> = pts.iter().map(|&(x, y)| Vec2::new(x, y)).collect();
            let q: Vec<Vec2> = p.iter().map(|v| v.rotate(angle) + Vec2::new(tx, ty)).collect();
            // keep away from the exact threshold where rounding could flip an edge
            let near_threshold = p.iter().enumerate().any(|(i, a)| p[i + 1..].iter().any(|b| (a.distance(*b) - 1.5).abs() < 1e-9));
            prop_assume!(!near_threshold);
            prop_assert_eq!(connectivity_cost(&p, 1.5), connectivity_cost(&q, 1.5));
        }
    }
}
