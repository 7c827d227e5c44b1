//! Real tight Gabor frames built from a Hamming window.
//!
//! Each time shift `k·hop` contributes `channels` real atoms: the cosine
//! modulations for frequencies `0..=channels/2` and the sine modulations for
//! `1..channels/2` (the real and imaginary parts of the complex atoms, with the
//! conjugate-symmetric duplicates folded in by a `√2` weight). The frame is
//! made tight with `α = 1` by replacing the window with its canonical tight
//! version, `S^{-1/2}` applied to every atom, where `S = WᵀW`.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::frame::{build_frame_labeled, gram_cols, row_spans, FrameOperator};

/// Lattice used by the simulation tables: 64-sample window, half overlap,
/// 64 frequency channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GaborLattice {
    pub window_len: usize,
    pub hop: usize,
    pub channels: usize,
}

impl Default for GaborLattice {
    fn default() -> Self {
        GaborLattice { window_len: 64, hop: 32, channels: 64 }
    }
}

/// Symmetric Hamming window `0.54 − 0.46 cos(2πj/(L−1))`.
pub fn hamming(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    (0..len).map(|j| 0.54 - 0.46 * (2.0 * PI * j as f64 / (len - 1) as f64).cos()).collect()
}

fn modulated_rows(n: usize, window: &[f64], hop: usize, channels: usize) -> DMatrix<f64> {
    let shifts = n / hop;
    let mut w = DMatrix::zeros(shifts * channels, n);
    for k in 0..shifts {
        let base = k * channels;
        let mut row = base;
        for m in 0..=channels / 2 {
            let edge = m == 0 || (channels.is_multiple_of(2) && m == channels / 2);
            let weight = if edge { 1.0 } else { SQRT_2 };
            let freq = 2.0 * PI * m as f64 / channels as f64;
            for (j, &g) in window.iter().enumerate() {
                let t = (k * hop + j) % n;
                w[(row, t)] += weight * g * (freq * j as f64).cos();
            }
            row += 1;
            if !edge {
                for (j, &g) in window.iter().enumerate() {
                    let t = (k * hop + j) % n;
                    w[(row, t)] += weight * g * (freq * j as f64).sin();
                }
                row += 1;
            }
        }
        debug_assert_eq!(row, base + channels);
    }
    w
}

/// Builds the real tight Gabor frame for signals of length `n`.
pub fn gabor_frame(n: usize, window_len: usize, hop: usize, channels: usize) -> Result<FrameOperator> {
    if hop == 0 || n == 0 || !n.is_multiple_of(hop) {
        return Err(Error::InvalidLattice(format!("hop {hop} must divide signal length {n}")));
    }
    if channels < hop {
        return Err(Error::InvalidLattice(format!(
            "undersampled lattice: {channels} channels with hop {hop}"
        )));
    }
    if channels > n || window_len == 0 || window_len > n {
        return Err(Error::InvalidLattice(format!(
            "window length {window_len} and channels {channels} must not exceed n = {n}"
        )));
    }
    let w = modulated_rows(n, &hamming(window_len), hop, channels);
    let s = gram_cols(&w, &row_spans(&w));

    let diag_max = s.diagonal().amax();
    let mut off_max = 0.0f64;
    for a in 0..n {
        for b in 0..n {
            if a != b {
                off_max = off_max.max(s[(a, b)].abs());
            }
        }
    }
    let tight = if off_max <= 1e-12 * diag_max {
        // Window support within one period of the modulations: S is diagonal.
        let mut w = w;
        for t in 0..n {
            let st = s[(t, t)];
            if !(st > 0.0) {
                return Err(Error::InvalidLattice("lattice does not cover the signal".into()));
            }
            w.column_mut(t).scale_mut(1.0 / st.sqrt());
        }
        w
    } else {
        let eig = SymmetricEigen::new(s);
        let lmax = eig.eigenvalues.max();
        let lmin = eig.eigenvalues.min();
        if !(lmin > 1e-10 * lmax) {
            return Err(Error::InvalidLattice(format!(
                "Gabor system is not a frame (eigenvalue ratio {:.3e})",
                lmin / lmax
            )));
        }
        let inv_sqrt = eig.eigenvalues.map(|l| 1.0 / l.sqrt());
        let s_inv_sqrt = &eig.eigenvectors * DMatrix::from_diagonal(&inv_sqrt) * eig.eigenvectors.transpose();
        w * s_inv_sqrt
    };
    let label = format!("gabor(n={n},L={window_len},hop={hop},M={channels})");
    let frame = build_frame_labeled(tight, 1e-8, Some(label))?;
    match frame.alpha() {
        Some(a) if (a - 1.0).abs() <= 1e-8 => Ok(frame),
        _ => Err(Error::InvalidLattice("canonical tight window did not produce a Parseval frame".into())),
    }
}

/// [`gabor_frame`] with a [`GaborLattice`].
pub fn gabor_frame_with(n: usize, lattice: GaborLattice) -> Result<FrameOperator> {
    gabor_frame(n, lattice.window_len, lattice.hop, lattice.channels)
}
