//! Compressed-column storage with a fixed pattern, and a reusable LU
//! factorization backed by faer.

use std::cell::Cell;
use std::collections::BTreeSet;
use std::sync::atomic::{AtomicU64, Ordering};

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};

use crate::error::{Error, Result};

thread_local! {
    static LINEAR_SOLVES: Cell<u64> = const { Cell::new(0) };
}

static LINEAR_SOLVES_TOTAL: AtomicU64 = AtomicU64::new(0);

/// Number of linear systems solved on this thread so far (sparse and dense).
pub fn linear_solve_count() -> u64 {
    LINEAR_SOLVES.with(Cell::get)
}

/// Process-wide count over all threads.
pub fn total_linear_solve_count() -> u64 {
    LINEAR_SOLVES_TOTAL.load(Ordering::Relaxed)
}

pub(crate) fn count_linear_solve() {
    LINEAR_SOLVES.with(|c| c.set(c.get() + 1));
    LINEAR_SOLVES_TOTAL.fetch_add(1, Ordering::Relaxed);
}

/// Square CSC sparsity pattern with sorted row indices in every column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsePattern {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
}

impl SparsePattern {
    /// Builds the pattern from `(row, col)` pairs. Duplicates are merged.
    pub fn from_entries(
        n: usize,
        entries: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let mut cols: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        for (r, c) in entries {
            if r >= n || c >= n {
                return Err(Error::Shape(format!(
                    "entry ({r}, {c}) outside a {n}×{n} pattern"
                )));
            }
            cols[c].insert(r);
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        col_ptr.push(0);
        for col in cols {
            row_idx.extend(col);
            col_ptr.push(row_idx.len());
        }
        Ok(Self {
            n,
            col_ptr,
            row_idx,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    /// Storage slot of entry `(row, col)`, if it is part of the pattern.
    pub fn position(&self, row: usize, col: usize) -> Option<usize> {
        let (lo, hi) = (self.col_ptr[col], self.col_ptr[col + 1]);
        self.row_idx[lo..hi]
            .binary_search(&row)
            .ok()
            .map(|k| lo + k)
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_idx(&self) -> &[usize] {
        &self.row_idx
    }

    /// `y = A x` for values laid out on this pattern.
    pub fn mul_vec(&self, values: &[f64], x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for c in 0..self.n {
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                y[self.row_idx[k]] += values[k] * x[c];
            }
        }
        y
    }

    pub fn to_dense(&self, values: &[f64]) -> nalgebra::DMatrix<f64> {
        let mut a = nalgebra::DMatrix::zeros(self.n, self.n);
        for c in 0..self.n {
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                a[(self.row_idx[k], c)] += values[k];
            }
        }
        a
    }

    fn symbolic(&self) -> SymbolicSparseColMatRef<'_, usize> {
        SymbolicSparseColMatRef::new_checked(self.n, self.n, &self.col_ptr, None, &self.row_idx)
    }
}

/// LU solver whose symbolic analysis is computed once per pattern and reused
/// for every numeric refactorization.
pub struct SparseLu {
    pattern: SparsePattern,
    symbolic: SymbolicLu<usize>,
}

impl std::fmt::Debug for SparseLu {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SparseLu")
            .field("dim", &self.pattern.n)
            .field("nnz", &self.pattern.nnz())
            .finish()
    }
}

impl SparseLu {
    pub fn new(pattern: SparsePattern) -> Result<Self> {
        let symbolic = SymbolicLu::try_new(pattern.symbolic())
            .map_err(|e| Error::LinearSolve(format!("symbolic LU failed: {e:?}")))?;
        Ok(Self { pattern, symbolic })
    }

    pub fn pattern(&self) -> &SparsePattern {
        &self.pattern
    }

    /// Factorizes the matrix with the given values and solves `A x = rhs` in place.
    pub fn solve(&self, values: &[f64], rhs: &mut [f64]) -> Result<()> {
        if values.len() != self.pattern.nnz() || rhs.len() != self.pattern.n {
            return Err(Error::Shape(format!(
                "{} values and {} rhs entries for a pattern with {} entries of dimension {}",
                values.len(),
                rhs.len(),
                self.pattern.nnz(),
                self.pattern.n
            )));
        }
        count_linear_solve();
        let mat = SparseColMatRef::new(self.pattern.symbolic(), values);
        let lu = Lu::try_new_with_symbolic(self.symbolic.clone(), mat)
            .map_err(|e| Error::LinearSolve(format!("numeric LU failed: {e:?}")))?;
        let mut b = faer::Mat::<f64>::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        lu.solve_in_place(b.as_mut());
        for (i, r) in rhs.iter_mut().enumerate() {
            *r = b[(i, 0)];
        }
        if rhs.iter().any(|v| !v.is_finite()) {
            return Err(Error::LinearSolve(
                "singular system: non-finite solution".into(),
            ));
        }
        Ok(())
    }
}

/// Dense LU solve that also feeds the linear-solve counter.
pub fn dense_solve(
    a: nalgebra::DMatrix<f64>,
    b: nalgebra::DVector<f64>,
) -> Result<nalgebra::DVector<f64>> {
    count_linear_solve();
    let x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::LinearSolve("singular dense system".into()))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::LinearSolve("non-finite dense solution".into()));
    }
    Ok(x)
}
