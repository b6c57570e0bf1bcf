use serde::{Deserialize, Serialize};

use super::{EmbedError, EMBEDDING_DIM};

pub const GRID_ROWS: usize = 32;
pub const GRID_COLS: usize = 24;

/// Fill order used when viewing a flat embedding as a 32x24 grid.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    /// Flat index `k` sits at `(k / 24, k % 24)`.
    #[default]
    RowMajor,
    /// Flat index `k` sits at `(k % 32, k / 32)`.
    ColMajor,
}

impl Layout {
    /// Grid cell of flat index `k`.
    pub fn position(self, k: usize) -> (usize, usize) {
        match self {
            Layout::RowMajor => (k / GRID_COLS, k % GRID_COLS),
            Layout::ColMajor => (k % GRID_ROWS, k / GRID_ROWS),
        }
    }
}

impl std::str::FromStr for Layout {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rowmajor" => Ok(Layout::RowMajor),
            "colmajor" => Ok(Layout::ColMajor),
            other => Err(format!(
                "unknown layout {other:?} (expected rowmajor or colmajor)"
            )),
        }
    }
}

/// One sentence embedding viewed as a 32x24 grid, stored row-major by grid
/// position.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    pub sentence_id: String,
    grid: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn reshape(
        sentence_id: impl Into<String>,
        flat: &[f64],
        layout: Layout,
    ) -> Result<Self, EmbedError> {
        let sentence_id = sentence_id.into();
        if flat.len() != EMBEDDING_DIM {
            return Err(EmbedError::Dimension {
                got: flat.len(),
                expected: EMBEDDING_DIM,
            });
        }
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite(sentence_id));
        }
        let mut grid = vec![0.0; EMBEDDING_DIM];
        for (k, &v) in flat.iter().enumerate() {
            let (r, c) = layout.position(k);
            grid[r * GRID_COLS + c] = v;
        }
        Ok(Self { sentence_id, grid })
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.grid[row * GRID_COLS + col]
    }

    /// Grid values, row-major.
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// Inverse of [`EmbeddingMatrix::reshape`].
    pub fn flatten(&self, layout: Layout) -> Vec<f64> {
        (0..EMBEDDING_DIM)
            .map(|k| {
                let (r, c) = layout.position(k);
                self.grid[r * GRID_COLS + c]
            })
            .collect()
    }
}

/// Flat 768-vector to a 32x24 grid (row-major).
pub fn reshape_768_to_32x24(v: &[f64]) -> Result<EmbeddingMatrix, EmbedError> {
    EmbeddingMatrix::reshape("", v, Layout::RowMajor)
}
