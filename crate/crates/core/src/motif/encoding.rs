use serde::{Deserialize, Serialize};

use crate::autodiff::Activation;
use crate::error::{Error, Result};

/// Number of nodes in a recurrent cell.
pub const CELL_NODES: usize = 12;

/// One cell node: the node it reads from and the nonlinearity it applies.
///
/// Node 0 reads the cell input and previous state; its `pred` is fixed at 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellNode {
    pub pred: usize,
    pub act: Activation,
}

/// Wiring and nonlinearities of a 12-node recurrent cell.
///
/// Serializes as a JSON array of `[predecessor, activation-name]` pairs.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<(usize, Activation)>", into = "Vec<(usize, Activation)>")]
pub struct CellEncoding {
    nodes: Vec<CellNode>,
}

/// A mutable position of the encoding string.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gene {
    Pred(usize),
    Act(usize),
}

impl CellEncoding {
    pub fn new(nodes: Vec<CellNode>) -> Result<Self> {
        let enc = CellEncoding { nodes };
        enc.validate()?;
        Ok(enc)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes.len() != CELL_NODES {
            return Err(Error::InvalidEncoding(format!(
                "expected {CELL_NODES} nodes, got {}",
                self.nodes.len()
            )));
        }
        for (i, n) in self.nodes.iter().enumerate() {
            let ok = if i == 0 { n.pred == 0 } else { n.pred < i };
            if !ok {
                return Err(Error::InvalidEncoding(format!(
                    "node {i} reads from node {}",
                    n.pred
                )));
            }
        }
        Ok(())
    }

    /// Straight chain `0 → 1 → … → 11` with one activation everywhere.
    pub fn chain(act: Activation) -> Self {
        let nodes = (0..CELL_NODES)
            .map(|i| CellNode {
                pred: i.saturating_sub(1),
                act,
            })
            .collect();
        CellEncoding { nodes }
    }

    pub fn nodes(&self) -> &[CellNode] {
        &self.nodes
    }

    /// Nodes no other node reads from; their mean is the cell output.
    pub fn loose_ends(&self) -> Vec<usize> {
        let mut used = [false; CELL_NODES];
        for n in &self.nodes[1..] {
            used[n.pred] = true;
        }
        (0..CELL_NODES).filter(|&i| !used[i]).collect()
    }

    /// The mutable positions, in string order: node 0 and 1 only choose an
    /// activation (their input is forced), later nodes choose predecessor then activation.
    pub fn genes() -> Vec<Gene> {
        let mut g = Vec::with_capacity(2 * CELL_NODES - 2);
        for i in 0..CELL_NODES {
            if i >= 2 {
                g.push(Gene::Pred(i));
            }
            g.push(Gene::Act(i));
        }
        g
    }

    /// Number of legal values at a position.
    pub fn arity(gene: Gene) -> usize {
        match gene {
            Gene::Pred(i) => i,
            Gene::Act(_) => Activation::ALL.len(),
        }
    }

    pub fn gene_value(&self, gene: Gene) -> usize {
        match gene {
            Gene::Pred(i) => self.nodes[i].pred,
            Gene::Act(i) => self.nodes[i].act.index(),
        }
    }

    pub(crate) fn set_gene(&mut self, gene: Gene, value: usize) {
        match gene {
            Gene::Pred(i) => self.nodes[i].pred = value,
            Gene::Act(i) => self.nodes[i].act = Activation::ALL[value],
        }
    }

    /// Flat numeric string of the mutable positions.
    pub fn to_string_genes(&self) -> Vec<usize> {
        Self::genes().into_iter().map(|g| self.gene_value(g)).collect()
    }
}

impl TryFrom<Vec<(usize, Activation)>> for CellEncoding {
    type Error = Error;

    fn try_from(v: Vec<(usize, Activation)>) -> Result<Self> {
        CellEncoding::new(v.into_iter().map(|(pred, act)| CellNode { pred, act }).collect())
    }
}

impl From<CellEncoding> for Vec<(usize, Activation)> {
    fn from(e: CellEncoding) -> Self {
        e.nodes.into_iter().map(|n| (n.pred, n.act)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_is_pairs() {
        let e = CellEncoding::chain(Activation::Tanh);
        let s = serde_json::to_string(&e).unwrap();
        assert!(s.starts_with(r#"[[0,"tanh"],[0,"tanh"],[1,"tanh"]"#), "{s}");
        let back: CellEncoding = serde_json::from_str(&s).unwrap();
        assert_eq!(back, e);
    }

    #[test]
    fn rejects_forward_edges() {
        let bad = r#"[[0,"tanh"],[1,"tanh"],[1,"tanh"],[2,"tanh"],[3,"tanh"],[4,"tanh"],
                      [5,"tanh"],[6,"tanh"],[7,"tanh"],[8,"tanh"],[9,"tanh"],[10,"tanh"]]"#;
        assert!(serde_json::from_str::<CellEncoding>(bad).is_err());
        let short = r#"[[0,"tanh"]]"#;
        assert!(serde_json::from_str::<CellEncoding>(short).is_err());
    }

    #[test]
    fn gene_layout() {
        let genes = CellEncoding::genes();
        assert_eq!(genes.len(), 22);
        assert!(genes.iter().all(|&g| CellEncoding::arity(g) >= 2));
        assert_eq!(CellEncoding::chain(Activation::Relu).loose_ends(), vec![11]);
    }
}
