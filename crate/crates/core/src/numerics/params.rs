use serde::{Deserialize, Serialize};

use super::DenseMatrix;
use crate::error::{invalid, Result};

/// Shape of one named parameter block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

/// Ordered collection of uniquely named parameter blocks.
///
/// Block order is fixed at construction and defines the flattening order.
/// Models address blocks by index for speed and by name for I/O.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    names: Vec<String>,
    blocks: Vec<DenseMatrix>,
}

impl ParameterSet {
    pub fn new(blocks: Vec<(String, DenseMatrix)>) -> Result<Self> {
        let mut names = Vec::with_capacity(blocks.len());
        let mut mats = Vec::with_capacity(blocks.len());
        for (name, m) in blocks {
            if names.contains(&name) {
                return Err(invalid(format!("duplicate parameter block '{name}'")));
            }
            names.push(name);
            mats.push(m);
        }
        Ok(Self {
            names,
            blocks: mats,
        })
    }

    pub fn zeros(layout: &[BlockSpec]) -> Result<Self> {
        Self::new(
            layout
                .iter()
                .map(|b| (b.name.clone(), DenseMatrix::zeros(b.rows, b.cols)))
                .collect(),
        )
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            names: self.names.clone(),
            blocks: self
                .blocks
                .iter()
                .map(|m| DenseMatrix::zeros(m.rows(), m.cols()))
                .collect(),
        }
    }

    pub fn layout(&self) -> Vec<BlockSpec> {
        self.names
            .iter()
            .zip(&self.blocks)
            .map(|(n, m)| BlockSpec {
                name: n.clone(),
                rows: m.rows(),
                cols: m.cols(),
            })
            .collect()
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn total_dim(&self) -> usize {
        self.blocks.iter().map(DenseMatrix::len).sum()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    #[inline]
    pub fn block(&self, idx: usize) -> &DenseMatrix {
        &self.blocks[idx]
    }

    #[inline]
    pub fn block_mut(&mut self, idx: usize) -> &mut DenseMatrix {
        &mut self.blocks[idx]
    }

    pub fn blocks(&self) -> impl Iterator<Item = (&str, &DenseMatrix)> {
        self.names.iter().map(String::as_str).zip(&self.blocks)
    }

    pub fn by_name(&self, name: &str) -> Option<&DenseMatrix> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.blocks[i])
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.total_dim());
        for b in &self.blocks {
            out.extend_from_slice(b.as_slice());
        }
        out
    }

    pub fn unflatten(layout: &[BlockSpec], flat: &[f64]) -> Result<Self> {
        let total: usize = layout.iter().map(|b| b.rows * b.cols).sum();
        if total != flat.len() {
            return Err(invalid(format!(
                "flat vector has {} entries, layout needs {}",
                flat.len(),
                total
            )));
        }
        let mut offset = 0;
        let mut blocks = Vec::with_capacity(layout.len());
        for spec in layout {
            let n = spec.rows * spec.cols;
            let m = DenseMatrix::from_vec(spec.rows, spec.cols, flat[offset..offset + n].to_vec())?;
            blocks.push((spec.name.clone(), m));
            offset += n;
        }
        Self::new(blocks)
    }

    /// Reads the scalar at a flat index.
    pub fn get_flat(&self, mut idx: usize) -> f64 {
        for b in &self.blocks {
            if idx < b.len() {
                return b.as_slice()[idx];
            }
            idx -= b.len();
        }
        panic!("flat index out of range");
    }

    pub fn set_flat(&mut self, mut idx: usize, v: f64) {
        for b in &mut self.blocks {
            if idx < b.len() {
                b.as_mut_slice()[idx] = v;
                return;
            }
            idx -= b.len();
        }
        panic!("flat index out of range");
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.names == other.names
            && self
                .blocks
                .iter()
                .zip(&other.blocks)
                .all(|(a, b)| a.same_shape(b))
    }

    /// `self += scale · other`
    pub fn add_scaled(&mut self, scale: f64, other: &Self) {
        debug_assert!(self.same_layout(other));
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            for (x, y) in a.as_mut_slice().iter_mut().zip(b.as_slice()) {
                *x += scale * y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for b in &mut self.blocks {
            b.as_mut_slice().iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn norm(&self) -> f64 {
        self.blocks
            .iter()
            .flat_map(|b| b.as_slice())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().all(DenseMatrix::is_finite)
    }
}
