//! Row/column selection for sparse orthonormalization.
//!
//! A [`SelectionMask`] names the rows (or columns) of a matrix that take
//! part in one optimizer step. Selection is either by largest ℓ1 norm or
//! uniformly at random from a generator keyed by `(seed, param, step)`, so
//! replicas that share the seed draw the same mask without communicating.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Real, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Rows,
    Columns,
    /// The shorter dimension; rows for square matrices.
    #[default]
    Auto,
}

impl Axis {
    /// Resolves `Auto` for a `rows×cols` matrix. Never returns `Auto`.
    pub fn resolve(self, rows: usize, cols: usize) -> Axis {
        match self {
            Axis::Auto if rows <= cols => Axis::Rows,
            Axis::Auto => Axis::Columns,
            other => other,
        }
    }

    /// Length of `shape` along this (resolved) axis.
    pub fn len(self, (rows, cols): (usize, usize)) -> usize {
        match self.resolve(rows, cols) {
            Axis::Rows => rows,
            _ => cols,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SelectionStrategy {
    #[default]
    L1,
    Random,
}

/// Sorted, non-empty index set along a resolved axis of length `d`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionMask {
    axis: Axis,
    indices: Vec<usize>,
    d: usize,
}

impl SelectionMask {
    pub fn new(axis: Axis, indices: Vec<usize>, d: usize) -> Result<Self> {
        if axis == Axis::Auto {
            return Err(Error::Internal(
                "selection mask axis must be resolved".into(),
            ));
        }
        if indices.is_empty() {
            return Err(Error::Internal("empty selection mask".into()));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Internal(
                "mask indices must be strictly increasing".into(),
            ));
        }
        if indices.last().is_some_and(|&i| i >= d) {
            return Err(Error::Internal(format!(
                "mask index out of range for length {d}"
            )));
        }
        Ok(Self { axis, indices, d })
    }

    pub fn full(axis: Axis, d: usize) -> Self {
        assert!(axis != Axis::Auto && d > 0);
        Self {
            axis,
            indices: (0..d).collect(),
            d,
        }
    }

    pub fn axis(&self) -> Axis {
        self.axis
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Length of the indexed axis.
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn fraction(&self) -> f64 {
        self.indices.len() as f64 / self.d as f64
    }

    pub fn is_full(&self) -> bool {
        self.indices.len() == self.d
    }

    /// Membership table over the whole axis.
    pub fn selected(&self) -> Vec<bool> {
        let mut sel = vec![false; self.d];
        for &i in &self.indices {
            sel[i] = true;
        }
        sel
    }

    fn check_target<T>(&self, m: &Matrix<T>, op: &'static str) -> Result<()>
    where
        T: Real,
    {
        let len = match self.axis {
            Axis::Rows => m.rows(),
            _ => m.cols(),
        };
        if len != self.d {
            return Err(Error::Internal(format!(
                "{op}: mask over {} {:?} applied to a {}x{} matrix",
                self.d,
                self.axis,
                m.rows(),
                m.cols()
            )));
        }
        Ok(())
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::config(
            "alpha",
            format!("must be in (0, 1], got {alpha}"),
        ));
    }
    Ok(())
}

/// Number of selected rows/columns: `max(1, round_half_up(alpha·d))`.
pub fn select_count(alpha: f64, d: usize) -> Result<usize> {
    check_alpha(alpha)?;
    if d == 0 {
        return Err(Error::config("d", "axis length must be positive"));
    }
    let k = (alpha * d as f64 + 0.5).floor() as usize;
    Ok(k.clamp(1, d))
}

/// ℓ1 norm of every row (or column) of `m` along a resolved axis.
pub fn l1_norms<T: Real>(m: &Matrix<T>, axis: Axis) -> Vec<f64> {
    match axis.resolve(m.rows(), m.cols()) {
        Axis::Rows => (0..m.rows())
            .map(|i| m.row(i).iter().map(|x| x.as_f64().abs()).sum())
            .collect(),
        _ => {
            let mut norms = vec![0.0; m.cols()];
            for i in 0..m.rows() {
                for (acc, x) in norms.iter_mut().zip(m.row(i)) {
                    *acc += x.as_f64().abs();
                }
            }
            norms
        }
    }
}

/// The `k(alpha, d)` rows/columns with the largest ℓ1 norm. Ties go to the
/// lower index.
pub fn select_l1<T: Real>(m: &Matrix<T>, alpha: f64, axis: Axis) -> Result<SelectionMask> {
    let axis = axis.resolve(m.rows(), m.cols());
    let norms = l1_norms(m, axis);
    let d = norms.len();
    let k = select_count(alpha, d)?;
    let mut order: Vec<usize> = (0..d).collect();
    if k < d {
        // Stable sort keeps lower indices first among equal norms.
        order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
        order.truncate(k);
        order.sort_unstable();
    }
    SelectionMask::new(axis, order, d)
}

/// `k(alpha, d)` distinct indices, uniform without replacement (partial
/// Fisher–Yates), returned sorted.
pub fn select_random(alpha: f64, d: usize, axis: Axis, rng: &mut Rng) -> Result<SelectionMask> {
    if axis == Axis::Auto {
        return Err(Error::Internal(
            "select_random needs a resolved axis".into(),
        ));
    }
    let k = select_count(alpha, d)?;
    let mut pool: Vec<usize> = (0..d).collect();
    if k < d {
        for i in 0..k {
            let j = i + rng.below(d - i);
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool.sort_unstable();
    }
    SelectionMask::new(axis, pool, d)
}

/// `m[𝒦, :]` (k×cols) or `m[:, 𝒦]` (rows×k), in mask order.
pub fn gather<T: Real>(m: &Matrix<T>, mask: &SelectionMask) -> Result<Matrix<T>> {
    mask.check_target(m, "gather")?;
    let idx = mask.indices();
    Ok(match mask.axis() {
        Axis::Rows => {
            let mut data = Vec::with_capacity(idx.len() * m.cols());
            for &i in idx {
                data.extend_from_slice(m.row(i));
            }
            Matrix::from_vec(idx.len(), m.cols(), data)?
        }
        _ => {
            let mut data = Vec::with_capacity(m.rows() * idx.len());
            for i in 0..m.rows() {
                let row = m.row(i);
                data.extend(idx.iter().map(|&j| row[j]));
            }
            Matrix::from_vec(m.rows(), idx.len(), data)?
        }
    })
}

/// `target[𝒦] ← target[𝒦] − scale·values`. Entries outside the mask are
/// never written.
pub fn scatter_update<T: Real>(
    target: &mut Matrix<T>,
    mask: &SelectionMask,
    values: &Matrix<T>,
    scale: T,
) -> Result<()> {
    mask.check_target(target, "scatter_update")?;
    let expected = match mask.axis() {
        Axis::Rows => (mask.len(), target.cols()),
        _ => (target.rows(), mask.len()),
    };
    if values.shape() != expected {
        return Err(Error::shape(
            "scatter_update",
            format!("values {:?}, selection {:?}", values.shape(), expected),
        ));
    }
    if scale.is_zero() {
        return Ok(());
    }
    let idx = mask.indices();
    match mask.axis() {
        Axis::Rows => {
            for (k, &i) in idx.iter().enumerate() {
                for (t, &v) in target.row_mut(i).iter_mut().zip(values.row(k)) {
                    *t = *t - scale * v;
                }
            }
        }
        _ => {
            for i in 0..target.rows() {
                let vals = values.row(i);
                let row = target.row_mut(i);
                for (k, &j) in idx.iter().enumerate() {
                    row[j] = row[j] - scale * vals[k];
                }
            }
        }
    }
    Ok(())
}

/// `target[𝒦] ← factor·target[𝒦]`.
pub fn scale_selected<T: Real>(
    target: &mut Matrix<T>,
    mask: &SelectionMask,
    factor: T,
) -> Result<()> {
    mask.check_target(target, "scale_selected")?;
    match mask.axis() {
        Axis::Rows => {
            for &i in mask.indices() {
                target.row_mut(i).iter_mut().for_each(|x| *x = *x * factor);
            }
        }
        _ => {
            for i in 0..target.rows() {
                let row = target.row_mut(i);
                for &j in mask.indices() {
                    row[j] = row[j] * factor;
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        assert_eq!(select_count(0.125, 2048).unwrap(), 256);
        assert_eq!(select_count(1.0, 7).unwrap(), 7);
        assert_eq!(select_count(0.25, 10).unwrap(), 3);
        assert_eq!(select_count(0.01, 5).unwrap(), 1);
        assert!(matches!(select_count(0.0, 5), Err(Error::Config { .. })));
        assert!(matches!(select_count(1.5, 5), Err(Error::Config { .. })));
        assert!(select_count(f64::NAN, 5).is_err());
    }

    #[test]
    fn l1_hand_example_with_ties() {
        // row l1 norms: 5, 1, 9, 9
        let m = Matrix::from_rows(&[[5.0, 0.0], [0.5, -0.5], [4.0, -5.0], [-9.0, 0.0]]);
        let mask = select_l1(&m, 0.5, Axis::Rows).unwrap();
        assert_eq!(mask.indices(), &[2, 3]);
        let m = Matrix::from_rows(&[[9.0], [9.0], [9.0]]);
        assert_eq!(select_l1(&m, 0.34, Axis::Rows).unwrap().indices(), &[0]);
    }

    #[test]
    fn l1_full_alpha() {
        let m = Matrix::from_rows(&[[1.0, 2.0, 3.0], [0.0, 0.0, 1.0]]);
        let mask = select_l1(&m, 1.0, Axis::Columns).unwrap();
        assert_eq!(mask.indices(), &[0, 1, 2]);
        assert!(mask.is_full());
    }

    #[test]
    fn auto_axis() {
        assert_eq!(Axis::Auto.resolve(3, 5), Axis::Rows);
        assert_eq!(Axis::Auto.resolve(4, 4), Axis::Rows);
        assert_eq!(Axis::Auto.resolve(5, 3), Axis::Columns);
        assert_eq!(Axis::Columns.resolve(3, 5), Axis::Columns);
    }

    #[test]
    fn random_full_and_deterministic() {
        let mut rng = Rng::new(1, 1);
        assert_eq!(
            select_random(1.0, 9, Axis::Rows, &mut rng)
                .unwrap()
                .indices(),
            &(0..9).collect::<Vec<_>>()[..]
        );
        let a = select_random(0.5, 4, Axis::Rows, &mut Rng::new(77, 3)).unwrap();
        let b = select_random(0.5, 4, Axis::Rows, &mut Rng::new(77, 3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
    }

    #[test]
    fn gather_cases() {
        let m = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
        assert_eq!(gather(&m, &SelectionMask::full(Axis::Rows, 3)).unwrap(), m);
        let first = SelectionMask::new(Axis::Rows, vec![0], 3).unwrap();
        assert_eq!(
            gather(&m, &first).unwrap(),
            Matrix::from_rows(&[[1.0, 2.0]])
        );
        let col = SelectionMask::new(Axis::Columns, vec![1], 2).unwrap();
        assert_eq!(
            gather(&m, &col).unwrap(),
            Matrix::from_rows(&[[2.0], [4.0], [6.0]])
        );
        let wrong = SelectionMask::new(Axis::Rows, vec![0], 5).unwrap();
        assert!(matches!(gather(&m, &wrong), Err(Error::Internal(_))));
    }

    #[test]
    fn gather_scatter_round_trip() {
        let mut rng = Rng::new(4, 4);
        let m = Matrix::<f64>::gaussian(6, 5, &mut rng);
        for mask in [
            SelectionMask::new(Axis::Rows, vec![1, 4], 6).unwrap(),
            SelectionMask::new(Axis::Columns, vec![0, 2, 3], 5).unwrap(),
        ] {
            let mut z = Matrix::zeros(6, 5);
            scatter_update(&mut z, &mask, &gather(&m, &mask).unwrap(), -1.0).unwrap();
            let sel = mask.selected();
            for i in 0..6 {
                for j in 0..5 {
                    let hit = if mask.axis() == Axis::Rows {
                        sel[i]
                    } else {
                        sel[j]
                    };
                    assert_eq!(z[(i, j)], if hit { m[(i, j)] } else { 0.0 });
                }
            }
        }
    }

    #[test]
    fn scatter_cases() {
        let mut rng = Rng::new(5, 5);
        let t = Matrix::<f64>::gaussian(4, 3, &mut rng);
        let v = Matrix::gaussian(4, 3, &mut rng);
        let full = SelectionMask::full(Axis::Rows, 4);

        let mut same = t.clone();
        scatter_update(&mut same, &full, &v, 0.0).unwrap();
        assert_eq!(same.as_slice(), t.as_slice());

        let mut sub = t.clone();
        scatter_update(&mut sub, &full, &v, 1.0).unwrap();
        assert_eq!(sub, t.sub(&v).unwrap());

        let bad = Matrix::zeros(2, 3);
        assert!(matches!(
            scatter_update(&mut sub, &full, &bad, 1.0),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn scale_selected_columns() {
        let mut m = Matrix::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        let mask = SelectionMask::new(Axis::Columns, vec![0, 2], 3).unwrap();
        scale_selected(&mut m, &mask, 0.5).unwrap();
        assert_eq!(m, Matrix::from_rows(&[[0.5, 2.0, 1.5], [2.0, 5.0, 3.0]]));
    }

    #[test]
    fn mask_validation() {
        assert!(SelectionMask::new(Axis::Rows, vec![], 3).is_err());
        assert!(SelectionMask::new(Axis::Rows, vec![1, 1], 3).is_err());
        assert!(SelectionMask::new(Axis::Rows, vec![3], 3).is_err());
        assert!(SelectionMask::new(Axis::Auto, vec![0], 3).is_err());
    }
}
