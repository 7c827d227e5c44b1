//! Frame operators: analysis/synthesis matrices, Gram matrices and bounds.
//!
//! A frame of `N` vectors in `Rⁿ` is stored as its `N × n` analysis matrix
//! `W`. Alongside it we keep the Moore–Penrose inverse `W⁺`, the
//! coefficient-domain Gram matrix `U = W Wᵀ`, its reconstruction-weighted
//! counterpart `U⁻ = (W⁺)ᵀ W⁺`, and the frame bounds (extreme eigenvalues of
//! `WᵀW`).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::linalg::{pinv_svd, SparseSym, SVD_CUTOFF};

/// Default relative tolerance for declaring a frame tight.
pub const DEFAULT_TIGHT_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct FrameOperator {
    label: String,
    w: DMatrix<f64>,
    w_pinv: DMatrix<f64>,
    u: DMatrix<f64>,
    u_minus: DMatrix<f64>,
    u_sparse: SparseSym,
    u_minus_sparse: SparseSym,
    /// `U⁻U = W W⁺`, only materialized for non-tight frames.
    projection: Option<DMatrix<f64>>,
    projection_diag: DVector<f64>,
    pattern: Vec<Vec<usize>>,
    bound_lower: f64,
    bound_upper: f64,
    alpha: Option<f64>,
    tight_tolerance: f64,
}

/// Index range `[lo, hi]` holding every nonzero of each row.
pub(crate) fn row_spans(w: &DMatrix<f64>) -> Vec<Option<(usize, usize)>> {
    (0..w.nrows())
        .map(|i| {
            let row = w.row(i);
            let lo = row.iter().position(|v| *v != 0.0)?;
            let hi = row.iter().rposition(|v| *v != 0.0)?;
            Some((lo, hi))
        })
        .collect()
}

/// `W Wᵀ`, skipping pairs of rows whose supports cannot overlap.
fn gram_rows(w: &DMatrix<f64>, spans: &[Option<(usize, usize)>]) -> DMatrix<f64> {
    let big_n = w.nrows();
    let wt = w.transpose();
    let mut u = DMatrix::zeros(big_n, big_n);
    for i in 0..big_n {
        let Some((lo_i, hi_i)) = spans[i] else { continue };
        let ci = wt.column(i);
        for j in i..big_n {
            let Some((lo_j, hi_j)) = spans[j] else { continue };
            let lo = lo_i.max(lo_j);
            let hi = hi_i.min(hi_j);
            if lo > hi {
                continue;
            }
            let cj = wt.column(j);
            let s: f64 = (lo..=hi).map(|t| ci[t] * cj[t]).sum();
            u[(i, j)] = s;
            u[(j, i)] = s;
        }
    }
    u
}

/// `WᵀW`, accumulated row by row over each row's support.
pub(crate) fn gram_cols(w: &DMatrix<f64>, spans: &[Option<(usize, usize)>]) -> DMatrix<f64> {
    let n = w.ncols();
    let mut v = DMatrix::zeros(n, n);
    for (i, span) in spans.iter().enumerate() {
        let Some((lo, hi)) = *span else { continue };
        for a in lo..=hi {
            let wa = w[(i, a)];
            if wa == 0.0 {
                continue;
            }
            for b in a..=hi {
                v[(a, b)] += wa * w[(i, b)];
            }
        }
    }
    for a in 0..n {
        for b in 0..a {
            v[(a, b)] = v[(b, a)];
        }
    }
    v
}

/// Constructs a [`FrameOperator`] from its analysis matrix.
///
/// Tightness is declared when `‖WᵀW − αI‖_max ≤ tol·α` with `α` the mean
/// diagonal of `WᵀW`; in that case `W⁺ = Wᵀ/α` and `U⁻ = U/α²`, otherwise
/// `W⁺` comes from the SVD.
pub fn build_frame(w: DMatrix<f64>, tight_tolerance: f64) -> Result<FrameOperator> {
    build_frame_labeled(w, tight_tolerance, None)
}

pub(crate) fn build_frame_labeled(
    w: DMatrix<f64>,
    tight_tolerance: f64,
    label: Option<String>,
) -> Result<FrameOperator> {
    let (big_n, n) = w.shape();
    if n == 0 {
        return Err(Error::InvalidLength("frame with zero columns".into()));
    }
    if big_n < n {
        return Err(Error::dims(n, big_n));
    }
    let spans = row_spans(&w);
    let v = gram_cols(&w, &spans);
    let alpha = v.trace() / n as f64;
    if !(alpha > 0.0) {
        return Err(Error::RankDeficient { ratio: 0.0 });
    }
    let mut deviation = 0.0f64;
    let mut radius = 0.0f64;
    for a in 0..n {
        let mut row_sum = 0.0;
        for b in 0..n {
            let e = if a == b { v[(a, b)] - alpha } else { v[(a, b)] };
            deviation = deviation.max(e.abs());
            row_sum += e.abs();
        }
        radius = radius.max(row_sum);
    }
    let tight = deviation <= tight_tolerance * alpha;

    let u = gram_rows(&w, &spans);
    let (w_pinv, u_minus, projection, bound_lower, bound_upper, alpha_opt) = if tight {
        // Gershgorin enclosure of the spectrum of WᵀW around α.
        let w_pinv = w.transpose() / alpha;
        let u_minus = &u / (alpha * alpha);
        (w_pinv, u_minus, None, alpha - radius, alpha + radius, Some(alpha))
    } else {
        let (w_pinv, smin, smax) = pinv_svd(&w)?;
        if !(smin > SVD_CUTOFF * smax) {
            return Err(Error::RankDeficient { ratio: smin / smax });
        }
        let u_minus = w_pinv.transpose() * &w_pinv;
        let projection = &w * &w_pinv;
        (w_pinv, u_minus, Some(projection), smin * smin, smax * smax, None)
    };
    let projection_diag = match &projection {
        Some(p) => p.diagonal(),
        None => u.diagonal() / alpha,
    };
    let u_sparse = SparseSym::from_dense(&u);
    let u_minus_sparse = SparseSym::from_dense(&u_minus);
    let pattern = union_pattern(&u_sparse, &u_minus_sparse);
    let label = label.unwrap_or_else(|| format!("matrix({big_n}x{n})"));
    Ok(FrameOperator {
        label,
        w,
        w_pinv,
        u,
        u_minus,
        u_sparse,
        u_minus_sparse,
        projection,
        projection_diag,
        pattern,
        bound_lower,
        bound_upper,
        alpha: alpha_opt,
        tight_tolerance,
    })
}

fn union_pattern(a: &SparseSym, b: &SparseSym) -> Vec<Vec<usize>> {
    let pa = a.lower_pattern();
    let pb = b.lower_pattern();
    pa.into_iter()
        .zip(pb)
        .map(|(mut x, y)| {
            x.extend(y);
            x.sort_unstable();
            x.dedup();
            x
        })
        .collect()
}

impl FrameOperator {
    /// `y = W x`.
    pub fn analyze(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(self.n(), x.len())?;
        Ok(&self.w * x)
    }

    /// `f̂ = W⁺ θ̂`.
    pub fn synthesize(&self, theta_hat: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(self.big_n(), theta_hat.len())?;
        Ok(&self.w_pinv * theta_hat)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Signal length `n`.
    pub fn n(&self) -> usize {
        self.w.ncols()
    }

    /// Number of frame vectors `N`.
    pub fn big_n(&self) -> usize {
        self.w.nrows()
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn w_pinv(&self) -> &DMatrix<f64> {
        &self.w_pinv
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn u_minus(&self) -> &DMatrix<f64> {
        &self.u_minus
    }

    pub fn u_sparse(&self) -> &SparseSym {
        &self.u_sparse
    }

    pub fn u_minus_sparse(&self) -> &SparseSym {
        &self.u_minus_sparse
    }

    /// Lower-triangle union pattern of `U` and `U⁻`, the structure of every
    /// Hadamard-product system built on this frame.
    pub fn pattern(&self) -> &[Vec<usize>] {
        &self.pattern
    }

    /// Diagonal of `U⁻U`.
    pub fn projection_diag(&self) -> &DVector<f64> {
        &self.projection_diag
    }

    /// `U⁻U` as a dense matrix (the orthogonal projector `W W⁺`).
    pub fn projection(&self) -> DMatrix<f64> {
        match (&self.projection, self.alpha) {
            (Some(p), _) => p.clone(),
            (None, Some(a)) => &self.u / a,
            (None, None) => unreachable!("non-tight frames always store the projector"),
        }
    }

    /// `Tr[U⁻U Z]` for a dense `Z`.
    pub fn trace_projection_times(&self, z: &DMatrix<f64>) -> f64 {
        let big_n = self.big_n();
        let mut s = 0.0;
        match (&self.projection, self.alpha) {
            (Some(p), _) => {
                for i in 0..big_n {
                    for j in 0..big_n {
                        s += p[(i, j)] * z[(j, i)];
                    }
                }
            }
            (None, Some(a)) => {
                for i in 0..big_n {
                    let (c, v) = self.u_sparse.row(i);
                    for (&j, &uij) in c.iter().zip(v) {
                        s += uij * z[(j, i)];
                    }
                }
                s /= a;
            }
            (None, None) => unreachable!(),
        }
        s
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.bound_lower, self.bound_upper)
    }

    /// Frame constant when the frame is tight.
    pub fn alpha(&self) -> Option<f64> {
        self.alpha
    }

    pub fn is_tight(&self) -> bool {
        self.alpha.is_some()
    }

    pub fn tight_tolerance(&self) -> f64 {
        self.tight_tolerance
    }

    /// `Tr[U U⁻]`, equal to `n` for every frame.
    pub fn trace_u_uminus(&self) -> f64 {
        let big_n = self.big_n();
        let mut s = 0.0;
        for i in 0..big_n {
            let (c, v) = self.u_sparse.row(i);
            for (&j, &uij) in c.iter().zip(v) {
                s += uij * self.u_minus[(j, i)];
            }
        }
        s
    }

    /// Writes the analysis matrix in the binary matrix container.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_matrix(path, &self.w)
    }

    /// Rebuilds a frame from a matrix previously written with [`save`](Self::save).
    pub fn load(path: impl AsRef<Path>, tight_tolerance: f64) -> Result<Self> {
        let w = read_matrix(path.as_ref())?;
        build_frame_labeled(w, tight_tolerance, Some(format!("file({})", path.as_ref().display())))
    }
}

/// Binary matrix container: `rows` and `cols` as little-endian `u32`
/// (8-byte header) followed by row-major little-endian `f64` values.
pub fn write_matrix(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    encode_matrix(&mut out, m)?;
    out.flush()?;
    Ok(())
}

pub fn encode_matrix(out: &mut impl Write, m: &DMatrix<f64>) -> Result<()> {
    let rows =
        u32::try_from(m.nrows()).map_err(|_| Error::InvalidLength("too many rows for container".into()))?;
    let cols = u32::try_from(m.ncols())
        .map_err(|_| Error::InvalidLength("too many columns for container".into()))?;
    out.write_all(&rows.to_le_bytes())?;
    out.write_all(&cols.to_le_bytes())?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.write_all(&m[(i, j)].to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    decode_matrix(&mut BufReader::new(File::open(path)?))
}

pub fn decode_matrix(input: &mut impl Read) -> Result<DMatrix<f64>> {
    let mut word = [0u8; 4];
    input.read_exact(&mut word)?;
    let rows = u32::from_le_bytes(word) as usize;
    input.read_exact(&mut word)?;
    let cols = u32::from_le_bytes(word) as usize;
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() != rows * cols * 8 {
        return Err(Error::UnsupportedFormat(format!(
            "matrix container holds {} bytes, header promises {}x{}",
            bytes.len(),
            rows,
            cols
        )));
    }
    let values: Vec<f64> =
        bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}
