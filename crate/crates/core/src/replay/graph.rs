//! Directed acyclic communication topology.

use crate::error::{Error, Result};

/// A message block of `sender` delivered to `receiver`. One block may be
/// broadcast over several edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub sender: usize,
    pub block: usize,
    pub receiver: usize,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommGraph {
    n_agents: usize,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<u8>>,
    nilpotency: usize,
    heights: Vec<usize>,
    depths: Vec<usize>,
}

/// Smallest `s` with `D^s = 0` for a square 0/1 matrix.
pub fn nilpotency_index(adjacency: &[Vec<u8>]) -> Result<usize> {
    let n = adjacency.len();
    if let Some(row) = adjacency.iter().find(|r| r.len() != n) {
        return Err(Error::shape("adjacency matrix", format!("{n} columns"), row.len()));
    }
    if adjacency.iter().flatten().any(|&x| x > 1) {
        return Err(Error::InvalidArgument("adjacency entries must be 0 or 1".into()));
    }
    let is_zero = |m: &Vec<Vec<u8>>| m.iter().flatten().all(|&x| x == 0);
    let mut power = adjacency.to_vec();
    let mut s = 1;
    while !is_zero(&power) {
        if s >= n {
            return Err(Error::NotADag);
        }
        // Boolean product power · D.
        let mut next = vec![vec![0u8; n]; n];
        for i in 0..n {
            for k in 0..n {
                if power[i][k] == 1 {
                    for j in 0..n {
                        if adjacency[k][j] == 1 {
                            next[i][j] = 1;
                        }
                    }
                }
            }
        }
        power = next;
        s += 1;
    }
    Ok(s)
}

impl CommGraph {
    pub fn new(n_agents: usize, mut edges: Vec<Edge>) -> Result<Self> {
        let mut adjacency = vec![vec![0u8; n_agents]; n_agents];
        for e in &edges {
            if e.sender >= n_agents || e.receiver >= n_agents {
                return Err(Error::InvalidArgument(format!(
                    "edge {e:?} references an agent outside 0..{n_agents}"
                )));
            }
            if e.dim == 0 {
                return Err(Error::InvalidArgument(format!("edge {e:?} has zero width")));
            }
            adjacency[e.sender][e.receiver] = 1;
        }
        // Broadcast edges of one block must agree on width.
        for a in &edges {
            if edges
                .iter()
                .any(|b| a.sender == b.sender && a.block == b.block && a.dim != b.dim)
            {
                return Err(Error::InvalidArgument(format!(
                    "block {} of agent {} has inconsistent widths",
                    a.block, a.sender
                )));
            }
        }
        let nilpotency = nilpotency_index(&adjacency)?;
        edges.sort_by_key(|e| (e.receiver, e.sender, e.block));

        let mut heights = vec![0; n_agents];
        let mut depths = vec![0; n_agents];
        // Longest-path relaxation; converges within n rounds on a DAG.
        for _ in 0..n_agents {
            for e in &edges {
                heights[e.sender] = heights[e.sender].max(heights[e.receiver] + 1);
                depths[e.receiver] = depths[e.receiver].max(depths[e.sender] + 1);
            }
        }
        Ok(Self {
            n_agents,
            edges,
            adjacency,
            nilpotency,
            heights,
            depths,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    /// Edges sorted by receiver, then sender, then block.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn adjacency(&self) -> &[Vec<u8>] {
        &self.adjacency
    }

    pub fn nilpotency(&self) -> usize {
        self.nilpotency
    }

    /// Number of past steps to correct so that root messages reach every leaf.
    pub fn correction_depth(&self) -> usize {
        self.nilpotency.saturating_sub(1)
    }

    /// Longest path (in edges) from `agent` to a sink.
    pub fn height(&self, agent: usize) -> usize {
        self.heights[agent]
    }

    /// Longest path (in edges) from a root to `agent`.
    pub fn depth(&self, agent: usize) -> usize {
        self.depths[agent]
    }

    /// Agents grouped by depth.
    pub fn levels(&self) -> Vec<Vec<usize>> {
        let max = self.depths.iter().copied().max().unwrap_or(0);
        let mut levels = vec![Vec::new(); max + 1];
        for (a, &d) in self.depths.iter().enumerate() {
            levels[d].push(a);
        }
        levels
    }

    pub fn in_edges(&self, receiver: usize) -> impl Iterator<Item = (usize, &Edge)> {
        self.edges
            .iter()
            .enumerate()
            .filter(move |(_, e)| e.receiver == receiver)
    }

    pub fn out_edges(&self, sender: usize) -> impl Iterator<Item = (usize, &Edge)> {
        self.edges
            .iter()
            .enumerate()
            .filter(move |(_, e)| e.sender == sender)
    }

    pub fn receivers(&self, sender: usize) -> Vec<usize> {
        let mut r: Vec<usize> = self.out_edges(sender).map(|(_, e)| e.receiver).collect();
        r.dedup();
        r
    }

    pub fn is_sender(&self, agent: usize) -> bool {
        self.heights[agent] > 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(n: usize) -> Vec<Vec<u8>> {
        let mut d = vec![vec![0; n]; n];
        for i in 0..n - 1 {
            d[i][i + 1] = 1;
        }
        d
    }

    #[test]
    fn single_edge_has_index_two() {
        assert_eq!(nilpotency_index(&chain(2)).unwrap(), 2);
    }

    #[test]
    fn four_chain_has_index_four() {
        assert_eq!(nilpotency_index(&chain(4)).unwrap(), 4);
    }

    #[test]
    fn empty_graph_has_index_one() {
        assert_eq!(nilpotency_index(&[vec![0]]).unwrap(), 1);
    }

    #[test]
    fn cycles_are_rejected() {
        assert!(matches!(nilpotency_index(&[vec![1]]), Err(Error::NotADag)));
        let mut d = chain(3);
        d[2][0] = 1;
        assert!(matches!(nilpotency_index(&d), Err(Error::NotADag)));
    }

    #[test]
    fn non_square_is_rejected() {
        assert!(nilpotency_index(&[vec![0, 1], vec![0]]).is_err());
    }

    #[test]
    fn heights_and_levels_on_a_chain() {
        let edges = (0..3)
            .map(|i| Edge {
                sender: i,
                block: 0,
                receiver: i + 1,
                dim: 4,
            })
            .collect();
        let g = CommGraph::new(4, edges).unwrap();
        assert_eq!(g.correction_depth(), 3);
        assert_eq!((0..4).map(|a| g.height(a)).collect::<Vec<_>>(), vec![3, 2, 1, 0]);
        assert_eq!(g.levels(), vec![vec![0], vec![1], vec![2], vec![3]]);
        assert_eq!(g.receivers(1), vec![2]);
        assert!(!g.is_sender(3));
    }
}
