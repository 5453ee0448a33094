//! Sparse LU with a reusable symbolic factorization and iterative refinement.

use faer::prelude::*;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{Argsort, Pair, SparseColMat, SymbolicSparseColMat};
use faer::Mat;

use crate::error::{Result, SlipError};

pub const SOLVE_RESIDUAL_TOL: f64 = 1e-9;
const REFINEMENT_STEPS: usize = 3;

/// Coordinate-format entries, duplicates summed. The emission order must be
/// identical between assemblies that share a [`Pattern`].
#[derive(Debug, Clone, Default)]
pub struct Triplets {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Triplets {
    pub fn with_capacity(n: usize) -> Self {
        Triplets {
            rows: Vec::with_capacity(n),
            cols: Vec::with_capacity(n),
            vals: Vec::with_capacity(n),
        }
    }

    #[inline]
    pub fn push(&mut self, r: usize, c: usize, v: f64) {
        self.rows.push(r);
        self.cols.push(c);
        self.vals.push(v);
    }

    pub fn len(&self) -> usize {
        self.vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }

    pub fn matvec(&self, n: usize, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; n];
        for k in 0..self.vals.len() {
            y[self.rows[k]] += self.vals[k] * x[self.cols[k]];
        }
        y
    }

    pub fn matvec_transpose(&self, n: usize, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; n];
        for k in 0..self.vals.len() {
            y[self.cols[k]] += self.vals[k] * x[self.rows[k]];
        }
        y
    }
}

/// Fixed sparsity structure of a square system.
#[derive(Debug, Clone)]
pub struct Pattern {
    n: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
    symbolic: SymbolicSparseColMat<usize>,
    argsort: Argsort<usize>,
    lu: SymbolicLu<usize>,
}

impl Pattern {
    pub fn new(n: usize, t: &Triplets) -> Result<Self> {
        let idx: Vec<Pair<usize, usize>> = t
            .rows
            .iter()
            .zip(&t.cols)
            .map(|(&row, &col)| Pair { row, col })
            .collect();
        let (symbolic, argsort) = SymbolicSparseColMat::try_new_from_indices(n, n, &idx)
            .map_err(|e| SlipError::SolverDivergence(format!("sparsity pattern: {e:?}")))?;
        let lu = SymbolicLu::try_new(symbolic.as_ref())
            .map_err(|e| SlipError::SolverDivergence(format!("symbolic factorization: {e:?}")))?;
        Ok(Pattern {
            n,
            rows: t.rows.clone(),
            cols: t.cols.clone(),
            symbolic,
            argsort,
            lu,
        })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn factor(&self, t: &Triplets) -> Result<Factored> {
        if t.rows != self.rows || t.cols != self.cols {
            return Err(SlipError::SolverDivergence(
                "assembly does not match the cached sparsity pattern".into(),
            ));
        }
        let mat = SparseColMat::new_from_argsort(self.symbolic.clone(), &self.argsort, &t.vals)
            .map_err(|e| SlipError::SolverDivergence(format!("matrix fill: {e:?}")))?;
        let lu = Lu::try_new_with_symbolic(self.lu.clone(), mat.as_ref())
            .map_err(|e| SlipError::SolverDivergence(format!("numeric factorization: {e:?}")))?;
        Ok(Factored {
            n: self.n,
            triplets: t.clone(),
            lu,
        })
    }
}

/// Numeric factorization of one assembled matrix.
#[derive(Debug)]
pub struct Factored {
    n: usize,
    triplets: Triplets,
    lu: Lu<usize, f64>,
}

impl Factored {
    pub fn size(&self) -> usize {
        self.n
    }

    pub fn triplets(&self) -> &Triplets {
        &self.triplets
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        self.triplets.matvec(self.n, x)
    }

    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        self.triplets.matvec_transpose(self.n, x)
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        self.refine(rhs, false)
    }

    pub fn solve_transpose(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        self.refine(rhs, true)
    }

    fn raw(&self, rhs: &[f64], transpose: bool) -> Vec<f64> {
        let mut b = Mat::<f64>::from_fn(self.n, 1, |i, _| rhs[i]);
        if transpose {
            self.lu.solve_transpose_in_place(b.as_mut());
        } else {
            self.lu.solve_in_place(b.as_mut());
        }
        (0..self.n).map(|i| b[(i, 0)]).collect()
    }

    fn refine(&self, rhs: &[f64], transpose: bool) -> Result<Vec<f64>> {
        if rhs.len() != self.n {
            return Err(SlipError::ShapeMismatch(format!(
                "right-hand side of length {} for a system of size {}",
                rhs.len(),
                self.n
            )));
        }
        let scale = inf_norm(rhs);
        if scale == 0.0 {
            return Ok(vec![0.0; self.n]);
        }
        let mut x = self.raw(rhs, transpose);
        let mut rel = f64::INFINITY;
        for _ in 0..=REFINEMENT_STEPS {
            let ax = if transpose { self.matvec_transpose(&x) } else { self.matvec(&x) };
            let r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
            rel = inf_norm(&r) / scale;
            if !rel.is_finite() {
                break;
            }
            if rel <= 1e-15 {
                return Ok(x);
            }
            let dx = self.raw(&r, transpose);
            x.iter_mut().zip(&dx).for_each(|(a, d)| *a += d);
        }
        if rel.is_finite() && rel <= SOLVE_RESIDUAL_TOL && x.iter().all(|v| v.is_finite()) {
            Ok(x)
        } else {
            Err(SlipError::SolverDivergence(format!(
                "relative residual {rel:.3e} exceeds {SOLVE_RESIDUAL_TOL:.0e}"
            )))
        }
    }
}

/// Max-norm; any non-finite entry yields infinity.
pub fn inf_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m: f64, v| if v.is_finite() { m.max(v.abs()) } else { f64::INFINITY })
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_and_transposes() {
        let mut t = Triplets::default();
        t.push(0, 0, 4.0);
        t.push(0, 1, 1.0);
        t.push(1, 0, 2.0);
        t.push(1, 1, 3.0);
        t.push(2, 2, 5.0);
        t.push(2, 2, 1.0);
        let pat = Pattern::new(3, &t).unwrap();
        let f = pat.factor(&t).unwrap();
        let x = f.solve(&[1.0, 2.0, 6.0]).unwrap();
        let ax = f.matvec(&x);
        assert!((ax[0] - 1.0).abs() < 1e-14 && (ax[1] - 2.0).abs() < 1e-14);
        assert!((x[2] - 1.0).abs() < 1e-15);
        let y = f.solve_transpose(&[1.0, 2.0, 0.0]).unwrap();
        let aty = f.matvec_transpose(&y);
        assert!((aty[0] - 1.0).abs() < 1e-14 && (aty[1] - 2.0).abs() < 1e-14);
        assert_eq!(f.solve(&[0.0; 3]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn singular_matrix_is_reported() {
        let mut t = Triplets::default();
        t.push(0, 0, 1.0);
        t.push(0, 1, 1.0);
        t.push(1, 0, 1.0);
        t.push(1, 1, 1.0);
        let pat = Pattern::new(2, &t).unwrap();
        let res = pat.factor(&t).and_then(|f| f.solve(&[1.0, 0.0]));
        assert!(matches!(res, Err(SlipError::SolverDivergence(_))));
    }
}
