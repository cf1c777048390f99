//! Integer lattices in Hermite normal form.
//!
//! A walk whose atoms are `s_1, ..., s_m` lives at time `n` on the coset
//! `x + n * s_1 + L`, where `L` is the lattice spanned by the differences
//! `s_i - s_1`. The exact kernels store each layer on that coset only.

/// A full or partial rank lattice in `Z^d`, stored as an upper-triangular
/// (row) Hermite basis: row `i` has zeros before its pivot column and a
/// strictly positive pivot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lattice {
    dim: usize,
    rows: Vec<Vec<i64>>,
    pivots: Vec<usize>,
}

impl Lattice {
    /// Lattice generated by the given integer vectors.
    pub fn generated_by(dim: usize, generators: &[Vec<i64>]) -> Self {
        let mut m: Vec<Vec<i128>> = generators
            .iter()
            .filter(|g| g.iter().any(|&c| c != 0))
            .map(|g| g.iter().map(|&c| c as i128).collect())
            .collect();
        let mut rows = Vec::new();
        let mut pivots = Vec::new();
        for col in 0..dim {
            // Euclid on column `col` across the remaining rows.
            loop {
                let mut best: Option<usize> = None;
                for (i, r) in m.iter().enumerate() {
                    if r[col] != 0 && best.is_none_or(|b| r[col].abs() < m[b][col].abs()) {
                        best = Some(i);
                    }
                }
                let Some(b) = best else { break };
                let pivot = m[b].clone();
                let mut others = 0;
                for (i, r) in m.iter_mut().enumerate() {
                    if i != b && r[col] != 0 {
                        let q = r[col].div_euclid(pivot[col]);
                        for (c, p) in r.iter_mut().zip(&pivot) {
                            *c -= q * p;
                        }
                        if r[col] != 0 {
                            others += 1;
                        }
                    }
                }
                if others == 0 {
                    let mut row = m.swap_remove(b);
                    if row[col] < 0 {
                        row.iter_mut().for_each(|c| *c = -*c);
                    }
                    rows.push(row);
                    pivots.push(col);
                    m.retain(|r| r.iter().any(|&c| c != 0));
                    break;
                }
            }
        }
        // Reduce entries above each pivot into [0, pivot).
        for i in 0..rows.len() {
            let pc = pivots[i];
            let pv = rows[i][pc];
            for j in 0..i {
                let q = rows[j][pc].div_euclid(pv);
                if q != 0 {
                    let ri = rows[i].clone();
                    for (c, p) in rows[j].iter_mut().zip(&ri) {
                        *c -= q * p;
                    }
                }
            }
        }
        let rows = rows
            .into_iter()
            .map(|r| r.into_iter().map(|c| c as i64).collect())
            .collect();
        Lattice { dim, rows, pivots }
    }

    /// The full integer lattice `Z^d`.
    pub fn integer(dim: usize) -> Self {
        let rows = (0..dim)
            .map(|i| (0..dim).map(|j| i64::from(i == j)).collect())
            .collect();
        Lattice {
            dim,
            rows,
            pivots: (0..dim).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank() == self.dim
    }

    pub fn basis(&self) -> &[Vec<i64>] {
        &self.rows
    }

    /// Index `[Z^d : L]`, i.e. the number of cosets. `None` for rank-deficient lattices.
    pub fn index(&self) -> Option<u64> {
        if !self.is_full_rank() {
            return None;
        }
        Some(
            self.rows
                .iter()
                .enumerate()
                .map(|(i, r)| r[i] as u64)
                .product(),
        )
    }

    /// Canonical coset representative: the unique `r ≡ v (mod L)` whose
    /// pivot coordinates lie in `[0, pivot)`.
    pub fn reduce(&self, v: &[i64]) -> Vec<i64> {
        let mut r = v.to_vec();
        for (row, &pc) in self.rows.iter().zip(&self.pivots) {
            let q = r[pc].div_euclid(row[pc]);
            if q != 0 {
                for (c, b) in r.iter_mut().zip(row) {
                    *c -= q * b;
                }
            }
        }
        r
    }

    /// Integer coordinates of `v` in the Hermite basis, if `v ∈ L`.
    pub fn coordinates(&self, v: &[i64]) -> Option<Vec<i64>> {
        let mut r = v.to_vec();
        let mut coords = Vec::with_capacity(self.rows.len());
        for (row, &pc) in self.rows.iter().zip(&self.pivots) {
            if r[pc] % row[pc] != 0 {
                return None;
            }
            let q = r[pc] / row[pc];
            for (c, b) in r.iter_mut().zip(row) {
                *c -= q * b;
            }
            coords.push(q);
        }
        r.iter().all(|&c| c == 0).then_some(coords)
    }

    pub fn contains(&self, v: &[i64]) -> bool {
        self.coordinates(v).is_some()
    }

    /// Maps coordinates back to a lattice vector.
    pub fn point(&self, coords: &[i64]) -> Vec<i64> {
        let mut v = vec![0; self.dim];
        for (row, &c) in self.rows.iter().zip(coords) {
            for (vi, b) in v.iter_mut().zip(row) {
                *vi += c * b;
            }
        }
        v
    }

    /// Interval bounds of the coordinates of any `v` with `lo <= v <= hi`
    /// componentwise. Only valid for full-rank lattices.
    pub(crate) fn coordinate_bounds(&self, lo: &[i64], hi: &[i64]) -> (Vec<i64>, Vec<i64>) {
        debug_assert!(self.is_full_rank());
        // Rows are upper triangular with pivot i on column i, so coordinate i
        // is (v_i - sum_{j<i} c_j b_{j,i}) / b_{i,i}; propagate intervals.
        let d = self.dim;
        let mut clo = vec![0i64; d];
        let mut chi = vec![0i64; d];
        let mut flo = vec![0f64; d];
        let mut fhi = vec![0f64; d];
        for i in 0..d {
            let (mut a, mut b) = (lo[i] as f64, hi[i] as f64);
            for j in 0..i {
                let w = self.rows[j][i] as f64;
                if w >= 0.0 {
                    a -= w * fhi[j];
                    b -= w * flo[j];
                } else {
                    a -= w * flo[j];
                    b -= w * fhi[j];
                }
            }
            let p = self.rows[i][i] as f64;
            flo[i] = a / p;
            fhi[i] = b / p;
            clo[i] = flo[i].floor() as i64;
            chi[i] = fhi[i].ceil() as i64;
        }
        (clo, chi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkerboard_lattice() {
        let l = Lattice::generated_by(2, &[vec![-2, 0], vec![-1, -1], vec![-1, 1]]);
        assert_eq!(l.index(), Some(2));
        assert!(l.contains(&[1, 1]));
        assert!(l.contains(&[2, 0]));
        assert!(!l.contains(&[1, 0]));
        assert_eq!(l.reduce(&[3, 0]), l.reduce(&[1, 0]));
    }

    #[test]
    fn even_lattice_and_coordinates() {
        let l = Lattice::generated_by(2, &[vec![0, -2], vec![-2, 0], vec![-2, -2]]);
        assert_eq!(l.index(), Some(4));
        let c = l.coordinates(&[4, -6]).unwrap();
        assert_eq!(l.point(&c), vec![4, -6]);
        assert_eq!(l.reduce(&[3, -1]), vec![1, 1]);
    }

    #[test]
    fn rank_deficient() {
        let l = Lattice::generated_by(2, &[vec![2, 0], vec![-4, 0]]);
        assert_eq!(l.rank(), 1);
        assert!(!l.is_full_rank());
        assert_eq!(l.index(), None);
    }

    #[test]
    fn coordinate_bounds_cover_box() {
        let l = Lattice::generated_by(2, &[vec![1, 1], vec![0, 2]]);
        let (lo, hi) = l.coordinate_bounds(&[-3, -3], &[3, 3]);
        for a in -3..=3 {
            for b in -3..=3 {
                if let Some(c) = l.coordinates(&[a, b]) {
                    for i in 0..2 {
                        assert!(c[i] >= lo[i] && c[i] <= hi[i]);
                    }
                }
            }
        }
    }
}
