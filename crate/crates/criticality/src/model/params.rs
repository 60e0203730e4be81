//! Flat parameter storage with named, shaped blocks.
//!
//! Every model keeps all of its parameters in one `Vec<f64>` so that
//! optimizers, finite-difference checks, scope masks, and checkpoints all
//! operate on the same layout. Blocks are addressed by name
//! (e.g. `a.backbone.l0.w`) and viewed as ndarray matrices for the math.

use std::collections::HashMap;

use ndarray::{ArrayView1, ArrayView2, ArrayViewMut2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockInfo {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
}

impl BlockInfo {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    data: Vec<f64>,
    blocks: Vec<BlockInfo>,
    by_name: HashMap<String, usize>,
}

impl ParamSet {
    pub fn builder() -> ParamSetBuilder {
        ParamSetBuilder { blocks: Vec::new(), len: 0 }
    }

    /// Rebuild from checkpointed layout + data.
    pub fn from_parts(blocks: Vec<BlockInfo>, data: Vec<f64>) -> Result<ParamSet> {
        let expected: usize = blocks.iter().map(|b| b.len()).sum();
        if expected != data.len() {
            return Err(Error::Integrity(format!(
                "parameter layout wants {expected} values, data has {}",
                data.len()
            )));
        }
        let by_name = blocks
            .iter()
            .enumerate()
            .map(|(i, b)| (b.name.clone(), i))
            .collect();
        Ok(ParamSet { data, blocks, by_name })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn blocks(&self) -> &[BlockInfo] {
        &self.blocks
    }

    pub fn has_block(&self, name: &str) -> bool {
        self.by_name.contains_key(name)
    }

    fn block(&self, name: &str) -> &BlockInfo {
        let idx = *self
            .by_name
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter block: {name}"));
        &self.blocks[idx]
    }

    pub fn range(&self, name: &str) -> std::ops::Range<usize> {
        let b = self.block(name);
        b.offset..b.offset + b.len()
    }

    pub fn slice(&self, name: &str) -> &[f64] {
        &self.data[self.range(name)]
    }

    pub fn slice_mut(&mut self, name: &str) -> &mut [f64] {
        let r = self.range(name);
        &mut self.data[r]
    }

    pub fn view2(&self, name: &str) -> ArrayView2<'_, f64> {
        let b = self.block(name);
        assert_eq!(b.shape.len(), 2, "block {name} is not a matrix");
        ArrayView2::from_shape((b.shape[0], b.shape[1]), self.slice(name)).expect("block shape")
    }

    pub fn view2_mut(&mut self, name: &str) -> ArrayViewMut2<'_, f64> {
        let b = self.block(name).clone();
        assert_eq!(b.shape.len(), 2, "block {name} is not a matrix");
        ArrayViewMut2::from_shape((b.shape[0], b.shape[1]), self.slice_mut(&b.name))
            .expect("block shape")
    }

    pub fn view1(&self, name: &str) -> ArrayView1<'_, f64> {
        let b = self.block(name);
        assert_eq!(b.shape.len(), 1, "block {name} is not a vector");
        ArrayView1::from_shape(b.shape[0], self.slice(name)).expect("block shape")
    }

    /// Fresh zeroed gradient buffer aligned with `data`.
    pub fn zero_grad(&self) -> Vec<f64> {
        vec![0.0; self.data.len()]
    }

    /// Boolean update mask selecting every block whose name matches `pred`.
    pub fn scope_mask(&self, pred: impl Fn(&str) -> bool) -> Vec<bool> {
        let mut mask = vec![false; self.data.len()];
        for b in &self.blocks {
            if pred(&b.name) {
                mask[b.offset..b.offset + b.len()].fill(true);
            }
        }
        mask
    }
}

pub struct ParamSetBuilder {
    blocks: Vec<BlockInfo>,
    len: usize,
}

impl ParamSetBuilder {
    pub fn matrix(mut self, name: &str, rows: usize, cols: usize) -> Self {
        self.blocks.push(BlockInfo {
            name: name.to_string(),
            offset: self.len,
            shape: vec![rows, cols],
        });
        self.len += rows * cols;
        self
    }

    pub fn vector(mut self, name: &str, n: usize) -> Self {
        self.blocks.push(BlockInfo {
            name: name.to_string(),
            offset: self.len,
            shape: vec![n],
        });
        self.len += n;
        self
    }

    pub fn build(self) -> ParamSet {
        let by_name = self
            .blocks
            .iter()
            .enumerate()
            .map(|(i, b)| (b.name.clone(), i))
            .collect();
        ParamSet {
            data: vec![0.0; self.len],
            blocks: self.blocks,
            by_name,
        }
    }
}
