//! Dense row-major arrays over multi-index boxes.
//!
//! Multi-indices are stored highest subscript first, `(i_n, ..., i_1)`, so the
//! last component is contiguous in memory. Any `j <= i` (componentwise,
//! `j != i`) has a smaller flat offset than `i`, so row-major order is a valid
//! evaluation order for recursions that only read componentwise-smaller
//! entries.

/// Dense array over the box `0..extents[0] x ... x 0..extents[d-1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    extents: Vec<usize>,
    strides: Vec<usize>,
    data: Vec<f64>,
}

fn strides_for(extents: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; extents.len()];
    for d in (0..extents.len().saturating_sub(1)).rev() {
        strides[d] = strides[d + 1] * extents[d + 1];
    }
    strides
}

impl Grid {
    pub fn zeros(extents: &[usize]) -> Self {
        let len = extents.iter().product();
        Self {
            extents: extents.to_vec(),
            strides: strides_for(extents),
            data: vec![0.0; len],
        }
    }

    pub fn from_vec(extents: &[usize], data: Vec<f64>) -> Self {
        assert_eq!(extents.iter().product::<usize>(), data.len());
        Self {
            extents: extents.to_vec(),
            strides: strides_for(extents),
            data,
        }
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn ndim(&self) -> usize {
        self.extents.len()
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

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn contains(&self, index: &[usize]) -> bool {
        index.len() == self.extents.len() && index.iter().zip(&self.extents).all(|(i, e)| i < e)
    }

    pub fn flat(&self, index: &[usize]) -> usize {
        debug_assert!(self.contains(index), "{index:?} outside {:?}", self.extents);
        index.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn unflat(&self, mut flat: usize) -> Vec<usize> {
        self.strides
            .iter()
            .map(|s| {
                let i = flat / s;
                flat %= s;
                i
            })
            .collect()
    }

    /// Value at `index`, or 0 outside the box.
    pub fn get(&self, index: &[usize]) -> f64 {
        if self.contains(index) {
            self.data[self.flat(index)]
        } else {
            0.0
        }
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let f = self.flat(index);
        self.data[f] = value;
    }

    /// All indices in row-major order.
    pub fn indices(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        (0..self.len()).map(|f| self.unflat(f))
    }

    /// Compensated sum of all entries.
    pub fn sum(&self) -> f64 {
        neumaier_sum(self.data.iter().copied())
    }
}

/// A grid kept alongside a copy whose last-axis rows are reversed, so that
/// convolutions can run as contiguous dot products.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrid {
    grid: Grid,
    rev: Vec<f64>,
}

impl ConvGrid {
    pub fn zeros(extents: &[usize]) -> Self {
        let grid = Grid::zeros(extents);
        let rev = vec![0.0; grid.len()];
        Self { grid, rev }
    }

    pub fn from_grid(grid: Grid) -> Self {
        let mut rev = vec![0.0; grid.len()];
        let row = row_len(grid.extents());
        if row > 0 {
            for (src, dst) in grid.data().chunks(row).zip(rev.chunks_mut(row)) {
                for (d, s) in dst.iter_mut().zip(src.iter().rev()) {
                    *d = *s;
                }
            }
        }
        Self { grid, rev }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn data(&self) -> &[f64] {
        self.grid.data()
    }

    pub fn rev(&self) -> &[f64] {
        &self.rev
    }

    pub fn extents(&self) -> &[usize] {
        self.grid.extents()
    }

    pub fn get_flat(&self, flat: usize) -> f64 {
        self.grid.data[flat]
    }

    pub fn set_flat(&mut self, flat: usize, value: f64) {
        self.grid.data[flat] = value;
        let row = row_len(self.grid.extents());
        let (r, c) = (flat / row, flat % row);
        self.rev[r * row + row - 1 - c] = value;
    }

    pub fn into_grid(self) -> Grid {
        self.grid
    }
}

fn row_len(extents: &[usize]) -> usize {
    extents.last().copied().unwrap_or(1)
}

/// `sum_{j <= i, j_0 <= lead_hi} a[j] * b[i - j]` over a box with the given
/// extents, where `b_rev` holds `b` with each last-axis row reversed.
///
/// `a` and `b_rev` must both be laid out with `extents` (they may be
/// prefixes or sub-slices of larger arrays). A zero-dimensional box is a
/// single scalar product.
pub fn conv_point(a: &[f64], b_rev: &[f64], extents: &[usize], index: &[usize], lead_hi: usize) -> f64 {
    debug_assert_eq!(extents.len(), index.len());
    if extents.is_empty() {
        return a[0] * b_rev[0];
    }
    let strides = strides_for(extents);
    conv_rec(a, b_rev, extents, &strides, index, lead_hi.min(index[0]), 0, 0, 0)
}

#[allow(clippy::too_many_arguments)]
fn conv_rec(
    a: &[f64],
    b_rev: &[f64],
    extents: &[usize],
    strides: &[usize],
    index: &[usize],
    hi: usize,
    depth: usize,
    a_off: usize,
    b_off: usize,
) -> f64 {
    let last = extents.len() - 1;
    if depth == last {
        let i = index[last];
        let row = extents[last];
        let start = b_off + row - 1 - i;
        return dot(&a[a_off..a_off + hi + 1], &b_rev[start..start + hi + 1]);
    }
    let i = index[depth];
    let s = strides[depth];
    let next_hi = index[depth + 1];
    let mut acc = 0.0;
    for j in 0..=hi {
        acc += conv_rec(
            a,
            b_rev,
            extents,
            strides,
            index,
            next_hi,
            depth + 1,
            a_off + j * s,
            b_off + (i - j) * s,
        );
    }
    acc
}

/// Dot product with four independent accumulators.
pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len());
    let (x, y) = (&x[..n], &y[..n]);
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for c in 0..chunks {
        let k = c * 4;
        acc[0] += x[k] * y[k];
        acc[1] += x[k + 1] * y[k + 1];
        acc[2] += x[k + 2] * y[k + 2];
        acc[3] += x[k + 3] * y[k + 3];
    }
    let mut tail = 0.0;
    for k in chunks * 4..n {
        tail += x[k] * y[k];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Neumaier-compensated summation.
pub fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}
