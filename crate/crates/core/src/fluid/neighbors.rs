//! Uniform-grid neighbor search.
//!
//! Particles are binned into cubic cells of edge `h` and sorted by cell key;
//! a query scans the 27 surrounding cells by binary search over the sorted
//! keys. Lists are returned in ascending index order so the table does not
//! depend on binning order.

use crate::math::Vec3;

type CellKey = (i64, i64, i64);

/// Per-particle neighbor lists in compressed row form.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NeighborTable {
    offsets: Vec<usize>,
    indices: Vec<usize>,
    cell_size_bits: u64,
}

impl NeighborTable {
    /// Neighbors of slot `i` (empty for inactive slots).
    #[inline]
    pub fn of(&self, i: usize) -> &[usize] {
        &self.indices[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Number of slots covered.
    pub fn len(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_size(&self) -> f64 {
        f64::from_bits(self.cell_size_bits)
    }

    /// Total number of ordered pairs.
    pub fn pair_count(&self) -> usize {
        self.indices.len()
    }

    pub fn from_lists(lists: Vec<Vec<usize>>, cell_size: f64) -> Self {
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        let mut indices = Vec::new();
        offsets.push(0);
        for l in lists {
            indices.extend(l);
            offsets.push(indices.len());
        }
        Self { offsets, indices, cell_size_bits: cell_size.to_bits() }
    }

    pub fn to_lists(&self) -> Vec<Vec<usize>> {
        (0..self.len()).map(|i| self.of(i).to_vec()).collect()
    }
}

#[inline]
fn cell_of(p: &Vec3, inv: f64) -> CellKey {
    (
        (p.x * inv).floor() as i64,
        (p.y * inv).floor() as i64,
        (p.z * inv).floor() as i64,
    )
}

/// Builds the table for `positions` restricted to `active` slots; `j` is a
/// neighbor of `i` iff both are active, `i ≠ j` and `|x_i − x_j| < h`.
pub fn build_neighbors(positions: &[Vec3], active: &[bool], h: f64) -> NeighborTable {
    assert_eq!(positions.len(), active.len());
    let inv = 1.0 / h;
    let h2 = h * h;

    let mut binned: Vec<(CellKey, usize)> = (0..positions.len())
        .filter(|&i| active[i])
        .map(|i| (cell_of(&positions[i], inv), i))
        .collect();
    binned.sort_unstable();

    let mut offsets = Vec::with_capacity(positions.len() + 1);
    let mut indices = Vec::new();
    offsets.push(0);
    let mut scratch = Vec::new();
    for i in 0..positions.len() {
        if active[i] {
            let xi = positions[i];
            let (cx, cy, cz) = cell_of(&xi, inv);
            scratch.clear();
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        let key = (cx + dx, cy + dy, cz + dz);
                        let start = binned.partition_point(|(k, _)| *k < key);
                        for &(k, j) in &binned[start..] {
                            if k != key {
                                break;
                            }
                            if j != i && (xi - positions[j]).norm_squared() < h2 {
                                scratch.push(j);
                            }
                        }
                    }
                }
            }
            scratch.sort_unstable();
            indices.extend_from_slice(&scratch);
        }
        offsets.push(indices.len());
    }
    NeighborTable { offsets, indices, cell_size_bits: h.to_bits() }
}
