use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major matrix as stored in JSON documents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixDto {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl From<&DMatrix<f64>> for MatrixDto {
    fn from(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for r in 0..m.nrows() {
            data.extend(m.row(r).iter());
        }
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }
}

impl TryFrom<MatrixDto> for DMatrix<f64> {
    type Error = Error;

    fn try_from(dto: MatrixDto) -> Result<Self> {
        if dto.data.len() != dto.rows * dto.cols {
            return Err(Error::InvalidSpec(format!(
                "matrix {}x{} holds {} values",
                dto.rows,
                dto.cols,
                dto.data.len()
            )));
        }
        Ok(DMatrix::from_row_slice(dto.rows, dto.cols, &dto.data))
    }
}
