//! Two-dimensional DFT pair on real/complex grids.
//!
//! Forward: `X[u,v] = Σ x[p,q] exp(-i2π(pu/M + qv/N))`.
//! Inverse: `x[p,q] = 1/(MN) Σ X[u,v] exp(+i2π(pu/M + qv/N))`.

use std::cell::RefCell;

use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

use super::tensor::{ComplexGrid, Tensor};
use crate::error::Result;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// A frequency coordinate in centered form: `u ∈ [-⌊M/2⌋, ⌈M/2⌉-1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FourierIndex {
    pub u: i64,
    pub v: i64,
}

impl FourierIndex {
    pub fn new(u: i64, v: i64) -> Self {
        Self { u, v }
    }

    /// Centered index for storage position `(row, col)` on an `rows × cols` grid.
    pub fn from_storage(row: usize, col: usize, rows: usize, cols: usize) -> Self {
        Self {
            u: centered(row, rows),
            v: centered(col, cols),
        }
    }

    pub fn storage(self, rows: usize, cols: usize) -> (usize, usize) {
        (
            self.u.rem_euclid(rows as i64) as usize,
            self.v.rem_euclid(cols as i64) as usize,
        )
    }

    /// Index of the conjugate coefficient, `(-u mod M, -v mod N)` in centered form.
    pub fn conjugate(self, rows: usize, cols: usize) -> Self {
        let (r, c) = self.storage(rows, cols);
        Self::from_storage((rows - r) % rows, (cols - c) % cols, rows, cols)
    }

    pub fn is_self_conjugate(self, rows: usize, cols: usize) -> bool {
        self.conjugate(rows, cols) == self
    }

    pub fn radius(self) -> f64 {
        ((self.u * self.u + self.v * self.v) as f64).sqrt()
    }
}

/// Maps a storage offset to the centered range `[-⌊n/2⌋, ⌈n/2⌉-1]`.
pub fn centered(index: usize, n: usize) -> i64 {
    let half = n.div_ceil(2);
    if index < half {
        index as i64
    } else {
        index as i64 - n as i64
    }
}

fn transform_in_place(grid: &mut ComplexGrid, direction: FftDirection) {
    let (rows, cols) = (grid.rows(), grid.cols());
    PLANNER.with(|planner| {
        let mut planner = planner.borrow_mut();
        let row_fft = planner.plan_fft(cols, direction);
        let col_fft = planner.plan_fft(rows, direction);
        let data = grid.data_mut();
        row_fft.process(data);
        let mut column = vec![Complex64::new(0.0, 0.0); rows];
        for c in 0..cols {
            for r in 0..rows {
                column[r] = data[r * cols + c];
            }
            col_fft.process(&mut column);
            for r in 0..rows {
                data[r * cols + c] = column[r];
            }
        }
    });
}

/// Forward DFT of a complex grid (no normalization).
pub fn dft2_complex(grid: &ComplexGrid) -> Result<ComplexGrid> {
    grid.check_finite()?;
    let mut out = grid.clone();
    transform_in_place(&mut out, FftDirection::Forward);
    Ok(out)
}

/// Forward DFT of a real M×N tensor.
pub fn dft2(x: &Tensor) -> Result<ComplexGrid> {
    x.check_finite("dft2 input")?;
    let mut grid = ComplexGrid::from_real(x)?;
    transform_in_place(&mut grid, FftDirection::Forward);
    Ok(grid)
}

/// Inverse DFT with `1/(MN)` normalization.
pub fn idft2(grid: &ComplexGrid) -> Result<ComplexGrid> {
    grid.check_finite()?;
    let mut out = grid.clone();
    transform_in_place(&mut out, FftDirection::Inverse);
    let scale = 1.0 / (out.rows() * out.cols()) as f64;
    for c in out.data_mut() {
        *c *= scale;
    }
    Ok(out)
}
