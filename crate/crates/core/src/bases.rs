//! Orthonormal bases (cosine, Haar) and collections of them.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::frame::{build_frame_labeled, FrameOperator};

/// Orthonormality tolerance for basis blocks.
pub const ORTHO_TOLERANCE: f64 = 1e-8;

/// Orthonormal type-II DCT matrix; row `k` is the `k`-th cosine atom.
pub fn dct_basis(n: usize) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(Error::InvalidLength("DCT basis needs n >= 1".into()));
    }
    let nf = n as f64;
    Ok(DMatrix::from_fn(n, n, |k, j| {
        let c = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
        c * (PI * k as f64 * (j as f64 + 0.5) / nf).cos()
    }))
}

/// In-place `levels`-level orthonormal Haar analysis. Output ordering is
/// coarse scaling coefficients first, then details from coarsest to finest.
pub fn haar_forward(x: &mut [f64], levels: u32) {
    let mut len = x.len();
    let mut tmp = vec![0.0; len];
    for _ in 0..levels {
        let half = len / 2;
        for i in 0..half {
            let a = x[2 * i];
            let b = x[2 * i + 1];
            tmp[i] = (a + b) * FRAC_1_SQRT_2;
            tmp[half + i] = (a - b) * FRAC_1_SQRT_2;
        }
        x[..len].copy_from_slice(&tmp[..len]);
        len = half;
    }
}

/// Matrix of the `levels`-level discrete Haar transform; rows are the basis
/// vectors. The first `n >> levels` rows are scaling functions.
pub fn haar_basis(n: usize, levels: u32) -> Result<DMatrix<f64>> {
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::InvalidLength(format!("Haar basis needs a power-of-two length >= 2, got {n}")));
    }
    let max_levels = n.trailing_zeros();
    if levels < 1 || levels > max_levels {
        return Err(Error::InvalidLength(format!("Haar depth must lie in 1..={max_levels}, got {levels}")));
    }
    let mut m = DMatrix::zeros(n, n);
    let mut col = vec![0.0; n];
    for j in 0..n {
        col.iter_mut().for_each(|v| *v = 0.0);
        col[j] = 1.0;
        haar_forward(&mut col, levels);
        m.set_column(j, &DVector::from_column_slice(&col));
    }
    Ok(m)
}

/// Number of scaling (coarse) coefficients of a `levels`-deep Haar basis.
pub fn haar_coarse_len(n: usize, levels: u32) -> usize {
    n >> levels
}

/// A tight frame formed by stacking `m` orthonormal `n × n` bases.
#[derive(Debug, Clone)]
pub struct BasisCollection {
    blocks: Vec<DMatrix<f64>>,
    cross: Vec<Vec<DMatrix<f64>>>,
    n: usize,
}

/// Validates the blocks and precomputes every cross-Gramian
/// `U^(i,j) = W^(i) (W^(j))ᵀ`.
pub fn ortho_collection(blocks: Vec<DMatrix<f64>>) -> Result<BasisCollection> {
    let Some(first) = blocks.first() else {
        return Err(Error::InvalidLength("empty basis collection".into()));
    };
    let n = first.nrows();
    for (index, b) in blocks.iter().enumerate() {
        if b.nrows() != n || b.ncols() != n {
            return Err(Error::dims(n, if b.nrows() != n { b.nrows() } else { b.ncols() }));
        }
        let eye = DMatrix::<f64>::identity(n, n);
        let deviation = (b * b.transpose() - &eye).amax().max((b.transpose() * b - eye).amax());
        if !(deviation <= ORTHO_TOLERANCE) {
            return Err(Error::NotOrthonormal { index, deviation });
        }
    }
    let cross = blocks.iter().map(|bi| blocks.iter().map(|bj| bi * bj.transpose()).collect()).collect();
    Ok(BasisCollection { blocks, cross, n })
}

impl BasisCollection {
    pub fn m(&self) -> usize {
        self.blocks.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn block(&self, i: usize) -> &DMatrix<f64> {
        &self.blocks[i]
    }

    /// `U^(i,j)`.
    pub fn cross(&self, i: usize, j: usize) -> &DMatrix<f64> {
        &self.cross[i][j]
    }

    /// Per-basis coefficients `y^(i) = W^(i) x`.
    pub fn analyze(&self, x: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
        check_len(self.n, x.len())?;
        Ok(self.blocks.iter().map(|b| b * x).collect())
    }

    /// The `mn × n` stacked analysis matrix.
    pub fn stacked(&self) -> DMatrix<f64> {
        let m = self.m();
        let mut w = DMatrix::zeros(m * self.n, self.n);
        for (i, b) in self.blocks.iter().enumerate() {
            w.view_mut((i * self.n, 0), (self.n, self.n)).copy_from(b);
        }
        w
    }

    /// The stacked matrix as a frame operator (tight with `α = m`).
    pub fn frame(&self, tight_tolerance: f64) -> Result<FrameOperator> {
        build_frame_labeled(
            self.stacked(),
            tight_tolerance,
            Some(format!("collection(m={},n={})", self.m(), self.n)),
        )
    }

    /// Equal-weight synthesis `m⁻¹ Σᵢ (W^(i))ᵀ y^(i)`.
    pub fn synthesize_equal(&self, coeffs: &[DVector<f64>]) -> Result<DVector<f64>> {
        check_len(self.m(), coeffs.len())?;
        let mut out = DVector::zeros(self.n);
        for (b, c) in self.blocks.iter().zip(coeffs) {
            check_len(self.n, c.len())?;
            out += b.tr_mul(c);
        }
        Ok(out / self.m() as f64)
    }
}
