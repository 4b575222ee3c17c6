use serde::{Deserialize, Serialize};

use super::GraeError;

/// Fixed `D^-1/2 (A + I) D^-1/2` over a skeleton graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonAdjacency {
    pub nodes: usize,
    pub edges: Vec<(usize, usize)>,
    /// Row-major `nodes x nodes`.
    pub a_hat: Vec<f64>,
}

impl SkeletonAdjacency {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a_hat[i * self.nodes + j]
    }
}

/// `A + I` as a dense row-major matrix.
pub fn with_self_loops(nodes: usize, edges: &[(usize, usize)]) -> Result<Vec<f64>, GraeError> {
    let mut a = vec![0.0; nodes * nodes];
    for i in 0..nodes {
        a[i * nodes + i] = 1.0;
    }
    for &(u, v) in edges {
        if u >= nodes || v >= nodes {
            return Err(GraeError::Contract(format!("edge ({u}, {v}) references a node outside 0..{nodes}")));
        }
        if u == v {
            return Err(GraeError::Contract(format!("edge ({u}, {v}) is a self-loop")));
        }
        a[u * nodes + v] = 1.0;
        a[v * nodes + u] = 1.0;
    }
    Ok(a)
}

pub fn build_adjacency(nodes: usize, edges: &[(usize, usize)]) -> Result<SkeletonAdjacency, GraeError> {
    if nodes == 0 {
        return Err(GraeError::Contract("graph has no nodes".into()));
    }
    let a = with_self_loops(nodes, edges)?;
    let inv_sqrt: Vec<f64> = (0..nodes)
        .map(|i| 1.0 / a[i * nodes..(i + 1) * nodes].iter().sum::<f64>().sqrt())
        .collect();
    let a_hat = (0..nodes * nodes)
        .map(|k| {
            let (i, j) = (k / nodes, k % nodes);
            inv_sqrt[i] * a[k] * inv_sqrt[j]
        })
        .collect();
    Ok(SkeletonAdjacency { nodes, edges: edges.to_vec(), a_hat })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::JointMap;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_node_graph() {
        let adj = build_adjacency(2, &[(0, 1)]).unwrap();
        for v in &adj.a_hat {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn h36m_degrees() {
        let map = JointMap::h36m17();
        let a = with_self_loops(17, &map.edges).unwrap();
        for i in 0..17 {
            let degree = map.edges.iter().filter(|(u, v)| *u == i || *v == i).count();
            let row: f64 = a[i * 17..(i + 1) * 17].iter().sum();
            assert_eq!(row, degree as f64 + 1.0);
            assert_eq!(a[i * 17 + i], 1.0);
        }
    }

    #[test]
    fn random_trees_are_symmetric_with_bounded_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let edges: Vec<(usize, usize)> = (1..17).map(|v| (rng.random_range(0..v), v)).collect();
            let adj = build_adjacency(17, &edges).unwrap();
            let m = DMatrix::from_row_slice(17, 17, &adj.a_hat);
            assert_eq!(m, m.transpose());
            let eig = m.symmetric_eigenvalues();
            for e in eig.iter() {
                assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(e), "eigenvalue {e}");
            }
        }
    }

    #[test]
    fn bad_edges_are_contract_errors() {
        assert!(matches!(build_adjacency(17, &[(0, 17)]), Err(GraeError::Contract(_))));
        assert!(matches!(build_adjacency(17, &[(3, 3)]), Err(GraeError::Contract(_))));
    }
}
