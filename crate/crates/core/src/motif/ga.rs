//! Variation operators over cell encodings.

use rand::Rng;

use super::encoding::{CellEncoding, CellNode, CELL_NODES};
use crate::autodiff::Activation;
use crate::error::{Error, Result};

/// Uniformly random valid encoding.
pub fn random_encoding<R: Rng + ?Sized>(rng: &mut R) -> CellEncoding {
    let nodes = (0..CELL_NODES)
        .map(|i| CellNode {
            pred: if i == 0 { 0 } else { rng.random_range(0..i) },
            act: Activation::ALL[rng.random_range(0..Activation::ALL.len())],
        })
        .collect();
    CellEncoding::new(nodes).expect("random encodings respect node order")
}

/// Resamples each position with probability `rate`, uniformly over its
/// legal values other than the current one.
pub fn mutate<R: Rng + ?Sized>(enc: &CellEncoding, rate: f64, rng: &mut R) -> CellEncoding {
    let mut out = enc.clone();
    for gene in CellEncoding::genes() {
        if rng.random::<f64>() < rate {
            let arity = CellEncoding::arity(gene);
            let cur = out.gene_value(gene);
            // draw from arity-1 values and skip over the current one
            let mut v = rng.random_range(0..arity - 1);
            if v >= cur {
                v += 1;
            }
            out.set_gene(gene, v);
        }
    }
    out
}

/// Nodes `..cut` from `a`, nodes `cut..` from `b`.
pub fn crossover_at(a: &CellEncoding, b: &CellEncoding, cut: usize) -> Result<CellEncoding> {
    if a.nodes().len() != b.nodes().len() {
        return Err(Error::LengthMismatch(a.nodes().len(), b.nodes().len()));
    }
    let nodes = a.nodes()[..cut]
        .iter()
        .chain(&b.nodes()[cut..])
        .copied()
        .collect();
    CellEncoding::new(nodes)
}

/// Single-point crossover with probability `rate`, otherwise a copy of `a`.
pub fn crossover<R: Rng + ?Sized>(
    a: &CellEncoding,
    b: &CellEncoding,
    rate: f64,
    rng: &mut R,
) -> Result<CellEncoding> {
    if a.nodes().len() != b.nodes().len() {
        return Err(Error::LengthMismatch(a.nodes().len(), b.nodes().len()));
    }
    if rng.random::<f64>() < rate {
        let cut = rng.random_range(1..CELL_NODES);
        crossover_at(a, b, cut)
    } else {
        Ok(a.clone())
    }
}
