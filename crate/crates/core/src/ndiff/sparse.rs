use super::NdiffError;

/// Contiguous row segments, stored as CSR-style offsets.
///
/// Segment `s` covers rows `offsets[s]..offsets[s + 1]`. Every segment is
/// non-empty.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segments {
    offsets: Vec<usize>,
}

impl Segments {
    /// Build from per-row segment ids, which must be sorted and cover
    /// `0..n_segments` without gaps.
    pub fn from_ids(ids: &[usize], n_segments: usize) -> Result<Self, NdiffError> {
        let mut offsets = Vec::with_capacity(n_segments + 1);
        offsets.push(0);
        let mut current = 0usize;
        for (row, &id) in ids.iter().enumerate() {
            if id < current {
                return Err(NdiffError::InvalidArgument(format!(
                    "segment ids must be sorted: row {row} has id {id} after {current}"
                )));
            }
            if id >= n_segments {
                return Err(NdiffError::IndexOutOfRange { op: "segments", index: id, len: n_segments });
            }
            while current < id {
                offsets.push(row);
                current += 1;
            }
        }
        while offsets.len() <= n_segments {
            offsets.push(ids.len());
        }
        Self::from_offsets(offsets)
    }

    pub fn from_offsets(offsets: Vec<usize>) -> Result<Self, NdiffError> {
        if offsets.first() != Some(&0) {
            return Err(NdiffError::InvalidArgument("segment offsets must start at 0".into()));
        }
        for (s, w) in offsets.windows(2).enumerate() {
            if w[1] <= w[0] {
                return Err(NdiffError::EmptySegment(s));
            }
        }
        Ok(Self { offsets })
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_rows(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn range(&self, s: usize) -> std::ops::Range<usize> {
        self.offsets[s]..self.offsets[s + 1]
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }
}

/// Sparsity pattern of an `n_rows × n_cols` matrix in CSR layout.
///
/// Row `i` lists the column ids it aggregates from. Used for message passing:
/// entry `e` in row `i` with column `j` carries a message from node `j` into
/// node `i`. Rows are the softmax/aggregation segments.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SparsePattern {
    n_cols: usize,
    segments: Segments,
    cols: Vec<usize>,
    rows: Vec<usize>,
}

impl SparsePattern {
    pub fn new(n_cols: usize, offsets: Vec<usize>, cols: Vec<usize>) -> Result<Self, NdiffError> {
        let segments = Segments::from_offsets(offsets)?;
        if segments.n_rows() != cols.len() {
            return Err(NdiffError::InvalidArgument(format!(
                "pattern offsets end at {} but {} column ids given",
                segments.n_rows(),
                cols.len()
            )));
        }
        if let Some(&bad) = cols.iter().find(|&&c| c >= n_cols) {
            return Err(NdiffError::IndexOutOfRange { op: "pattern", index: bad, len: n_cols });
        }
        let mut rows = Vec::with_capacity(cols.len());
        for r in 0..segments.len() {
            rows.extend(std::iter::repeat_n(r, segments.range(r).len()));
        }
        Ok(Self { n_cols, segments, cols, rows })
    }

    pub fn n_rows(&self) -> usize {
        self.segments.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn segments(&self) -> &Segments {
        &self.segments
    }

    /// Column id of every entry, in storage order.
    pub fn cols(&self) -> &[usize] {
        &self.cols
    }

    /// Row id of every entry, in storage order.
    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.cols[self.segments.range(i)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_to_offsets() {
        let s = Segments::from_ids(&[0, 0, 1, 2, 2, 2], 3).unwrap();
        assert_eq!(s.offsets(), &[0, 2, 3, 6]);
        assert_eq!(s.range(2), 3..6);
    }

    #[test]
    fn empty_segment_is_rejected() {
        assert!(matches!(Segments::from_ids(&[0, 0, 2], 3), Err(NdiffError::EmptySegment(1))));
        assert!(matches!(Segments::from_ids(&[0, 1], 3), Err(NdiffError::EmptySegment(2))));
    }

    #[test]
    fn unsorted_ids_rejected() {
        assert!(Segments::from_ids(&[1, 0], 2).is_err());
    }

    #[test]
    fn pattern_rows() {
        let p = SparsePattern::new(3, vec![0, 2, 3], vec![0, 2, 1]).unwrap();
        assert_eq!(p.rows(), &[0, 0, 1]);
        assert_eq!(p.row(0), &[0, 2]);
        assert!(SparsePattern::new(2, vec![0, 1], vec![5]).is_err());
    }
}
