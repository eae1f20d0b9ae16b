use super::Tensor;
use crate::error::{Error, Result};

/// Look up `ids` in a `[V, D]` table; output is `[ids.len(), D]`.
pub fn embedding_forward(table: &Tensor, ids: &[u32]) -> Result<Tensor> {
    let [vocab, dim] = table.shape() else {
        return Err(Error::Shape(format!("embedding table must be 2-d, got {:?}", table.shape())));
    };
    let (vocab, dim) = (*vocab, *dim);
    let mut out = Vec::with_capacity(ids.len() * dim);
    for &id in ids {
        if id as usize >= vocab {
            return Err(Error::IdOutOfRange { id, vocab });
        }
        out.extend_from_slice(&table.data()[id as usize * dim..(id as usize + 1) * dim]);
    }
    Tensor::new(vec![ids.len(), dim], out)
}

/// Scatter-add the output gradient into the rows that were looked up.
pub fn embedding_backward(table_shape: &[usize], ids: &[u32], grad: &Tensor) -> Tensor {
    let dim = table_shape[1];
    let mut g = Tensor::zeros(table_shape);
    let gd = g.data_mut();
    for (k, &id) in ids.iter().enumerate() {
        let row = &grad.data()[k * dim..(k + 1) * dim];
        for (dst, src) in gd[id as usize * dim..(id as usize + 1) * dim].iter_mut().zip(row) {
            *dst += src;
        }
    }
    g
}
