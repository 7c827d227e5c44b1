//! Diagonal linear shrinkage `θ̂ = Γy`: exact risk, optimal and empirical
//! gains, and the unbiased risk estimate for a fixed gain.

use nalgebra::DVector;

use crate::error::{check_len, Result};
use crate::frame::FrameOperator;
use crate::linalg::{box_qp, solve_sym};

/// Ridge used by the empirical gains unless overridden.
pub const DEFAULT_RIDGE: f64 = 3.162_277_660_168_379_3e-5; // 10^{-4.5}

/// Diagonal of `Γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainVector {
    pub gamma: DVector<f64>,
    pub frame_ref: String,
    pub ridge: f64,
    /// Number of entries held at `0` or `1` by the box constraint.
    pub clipped: usize,
}

impl GainVector {
    fn from_raw(raw: DVector<f64>, frame_ref: impl Into<String>, ridge: f64) -> Self {
        let (gamma, clipped) = clip_unit(&raw);
        GainVector { gamma, frame_ref: frame_ref.into(), ridge, clipped }
    }

    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }
}

/// Clips to `[0, 1]` and counts changed entries. NaN maps to `0`.
pub fn clip_unit(v: &DVector<f64>) -> (DVector<f64>, usize) {
    let mut count = 0;
    let out = v.map(|g| {
        let c = if g.is_nan() { 0.0 } else { g.clamp(0.0, 1.0) };
        if c != g {
            count += 1;
        }
        c
    });
    (out, count)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RiskKind {
    Oracle,
    Sure,
}

/// Quadratic and trace parts of a risk expression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskComponents {
    pub quadratic: f64,
    pub trace: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskReport {
    pub delta: f64,
    pub risk: f64,
    pub kind: RiskKind,
    pub components: Option<RiskComponents>,
}

impl RiskReport {
    /// SURE report `risk = σ²n + Δ`.
    pub fn sure(sigma: f64, n: usize, quadratic: f64, trace: f64) -> Self {
        let delta = quadratic + trace;
        RiskReport {
            delta,
            risk: sigma * sigma * n as f64 + delta,
            kind: RiskKind::Sure,
            components: Some(RiskComponents { quadratic, trace }),
        }
    }

    fn oracle(sigma: f64, n: usize, bias: f64, variance: f64) -> Self {
        let risk = bias + variance;
        RiskReport {
            delta: risk - sigma * sigma * n as f64,
            risk,
            kind: RiskKind::Oracle,
            components: Some(RiskComponents { quadratic: bias, trace: variance }),
        }
    }
}

/// `Σⱼ M_ij U_ij U⁻_ij` row sums, i.e. `(U∘U⁻)e`.
fn hadamard_row_sums(frame: &FrameOperator) -> DVector<f64> {
    let big_n = frame.big_n();
    let um = frame.u_minus();
    DVector::from_fn(big_n, |i, _| {
        let (c, v) = frame.u_sparse().row(i);
        c.iter().zip(v).map(|(&j, &uij)| uij * um[(i, j)]).sum()
    })
}

/// `Σᵢⱼ aᵢ aⱼ U_ij U⁻_ij`.
fn hadamard_quad(frame: &FrameOperator, a: &DVector<f64>) -> f64 {
    let um = frame.u_minus();
    let mut s = 0.0;
    for i in 0..frame.big_n() {
        let (c, v) = frame.u_sparse().row(i);
        let mut row = 0.0;
        for (&j, &uij) in c.iter().zip(v) {
            row += uij * um[(i, j)] * a[j];
        }
        s += a[i] * row;
    }
    s
}

fn check_gain_inputs(frame: &FrameOperator, gamma: &DVector<f64>, v: &DVector<f64>) -> Result<()> {
    check_len(frame.big_n(), gamma.len())?;
    check_len(frame.big_n(), v.len())
}

/// Exact risk of `f̂ = W⁺Γy` for known coefficients `θ`.
///
/// `Tr[U⁻(I−Γ)θθᵀ(I−Γ) + σ²ΓUΓU⁻]`; tight frames use the `α⁻²`-scaled
/// expression in `U` alone.
pub fn oracle_risk(
    frame: &FrameOperator,
    gamma: &DVector<f64>,
    theta: &DVector<f64>,
    sigma: f64,
) -> Result<RiskReport> {
    match frame.alpha() {
        Some(alpha) => oracle_risk_tight(frame, alpha, gamma, theta, sigma),
        None => oracle_risk_general(frame, gamma, theta, sigma),
    }
}

/// General-frame form of [`oracle_risk`].
pub fn oracle_risk_general(
    frame: &FrameOperator,
    gamma: &DVector<f64>,
    theta: &DVector<f64>,
    sigma: f64,
) -> Result<RiskReport> {
    check_gain_inputs(frame, gamma, theta)?;
    let a = theta.zip_map(gamma, |t, g| (1.0 - g) * t);
    let bias = frame.u_minus_sparse().quad_form(&a);
    let variance = sigma * sigma * hadamard_quad(frame, gamma);
    Ok(RiskReport::oracle(sigma, frame.n(), bias, variance))
}

fn oracle_risk_tight(
    frame: &FrameOperator,
    alpha: f64,
    gamma: &DVector<f64>,
    theta: &DVector<f64>,
    sigma: f64,
) -> Result<RiskReport> {
    check_gain_inputs(frame, gamma, theta)?;
    let u = frame.u_sparse();
    let a = theta.zip_map(gamma, |t, g| (1.0 - g) * t);
    let mut var = 0.0;
    for i in 0..frame.big_n() {
        let (c, v) = u.row(i);
        let row: f64 = c.iter().zip(v).map(|(&j, &uij)| uij * uij * gamma[j]).sum();
        var += gamma[i] * row;
    }
    let a2 = alpha * alpha;
    Ok(RiskReport::oracle(sigma, frame.n(), u.quad_form(&a) / a2, sigma * sigma * var / a2))
}

/// How the `[0, 1]` box is imposed on a frame-aware gain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GainMode {
    /// Solve the linear system, then clip componentwise.
    Clip,
    /// Minimize the same quadratic over `[0, 1]^N` exactly.
    #[default]
    Box,
}

/// Quadratic `½γᵀAγ − bᵀγ` behind the ideal and empirical gains:
/// `A = vvᵀ∘U⁻ + s·U∘U⁻ + ζI`, `b = (vvᵀ∘U⁻ − c·U∘U⁻)e`.
struct GainSystem<'a> {
    frame: &'a FrameOperator,
    v: &'a DVector<f64>,
    s: f64,
    c: f64,
    ridge: f64,
    hsum: DVector<f64>,
}

impl<'a> GainSystem<'a> {
    fn new(frame: &'a FrameOperator, v: &'a DVector<f64>, s: f64, c: f64, ridge: f64) -> Self {
        GainSystem { frame, v, s, c, ridge, hsum: hadamard_row_sums(frame) }
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        let um = self.frame.u_minus()[(i, j)];
        let h = self.frame.u()[(i, j)] * um;
        let mut a = self.v[i] * self.v[j] * um + self.s * h;
        if i == j {
            a += self.ridge;
        }
        a
    }

    /// The system is solved for `δ = γ − e`, so that the noiseless case
    /// returns `e` exactly and an identity frame reproduces the scalar
    /// formulas bit for bit.
    fn delta_rhs(&self) -> DVector<f64> {
        self.hsum.map(|h| -(self.s + self.c) * h - self.ridge)
    }

    fn solve_raw(&self) -> Result<DVector<f64>> {
        let delta = solve_sym(self.frame.pattern(), |i, j| self.entry(i, j), &self.delta_rhs())?;
        Ok(delta.map(|d| 1.0 + d))
    }

    fn solve(&self, mode: GainMode) -> Result<(DVector<f64>, usize)> {
        let rhs = self.delta_rhs();
        let delta = solve_sym(self.frame.pattern(), |i, j| self.entry(i, j), &rhs)?;
        match mode {
            GainMode::Clip => Ok(clip_unit(&delta.map(|d| 1.0 + d))),
            GainMode::Box => {
                let qp = box_qp(self.frame.pattern(), |i, j| self.entry(i, j), &rhs, &delta, -1.0, 0.0)?;
                Ok((qp.x.map(|d| 1.0 + d), qp.at_lower + qp.at_upper))
            }
        }
    }
}

/// Unclipped solution of the ideal-gain system.
pub fn ideal_gain_raw(
    frame: &FrameOperator,
    theta: &DVector<f64>,
    sigma: f64,
    ridge: f64,
) -> Result<DVector<f64>> {
    check_len(frame.big_n(), theta.len())?;
    GainSystem::new(frame, theta, sigma * sigma, 0.0, ridge).solve_raw()
}

/// Risk-minimizing gain in `[0, 1]^N` for known `θ` (IDEAL_U).
pub fn ideal_gain(frame: &FrameOperator, theta: &DVector<f64>, sigma: f64, ridge: f64) -> Result<GainVector> {
    ideal_gain_with(frame, theta, sigma, ridge, GainMode::default())
}

/// [`ideal_gain`] with an explicit box treatment.
pub fn ideal_gain_with(
    frame: &FrameOperator,
    theta: &DVector<f64>,
    sigma: f64,
    ridge: f64,
    mode: GainMode,
) -> Result<GainVector> {
    check_len(frame.big_n(), theta.len())?;
    let (gamma, clipped) = GainSystem::new(frame, theta, sigma * sigma, 0.0, ridge).solve(mode)?;
    Ok(GainVector { gamma, frame_ref: frame.label().to_string(), ridge, clipped })
}

/// Componentwise Wiener gain `θᵢ²/(θᵢ² + σ²)` (IDEAL_I).
pub fn ideal_gain_diag(theta: &DVector<f64>, sigma: f64) -> GainVector {
    let s2 = sigma * sigma;
    let gamma = theta.map(|t| {
        let t2 = t * t;
        if t2 == 0.0 {
            0.0
        } else {
            t2 / (t2 + s2)
        }
    });
    GainVector { gamma, frame_ref: "identity".into(), ridge: 0.0, clipped: 0 }
}

/// Unclipped solution of the empirical-gain system.
pub fn empirical_gain_raw(
    frame: &FrameOperator,
    y: &DVector<f64>,
    sigma: f64,
    ridge: f64,
) -> Result<DVector<f64>> {
    check_len(frame.big_n(), y.len())?;
    GainSystem::new(frame, y, 0.0, sigma * sigma, ridge).solve_raw()
}

/// SURE-minimizing gain in `[0, 1]^N` computed from the data (EMP_U).
pub fn empirical_gain(frame: &FrameOperator, y: &DVector<f64>, sigma: f64, ridge: f64) -> Result<GainVector> {
    empirical_gain_with(frame, y, sigma, ridge, GainMode::default())
}

/// [`empirical_gain`] with an explicit box treatment.
pub fn empirical_gain_with(
    frame: &FrameOperator,
    y: &DVector<f64>,
    sigma: f64,
    ridge: f64,
    mode: GainMode,
) -> Result<GainVector> {
    check_len(frame.big_n(), y.len())?;
    let (gamma, clipped) = GainSystem::new(frame, y, 0.0, sigma * sigma, ridge).solve(mode)?;
    Ok(GainVector { gamma, frame_ref: frame.label().to_string(), ridge, clipped })
}

/// Unclipped ridge-stabilized empirical Wiener gain
/// `(yᵢ² − σ²)/(yᵢ² + ζ)`, evaluated in the same arithmetic as the
/// frame-aware solve on an identity frame.
pub fn empirical_wiener_raw(y: &DVector<f64>, sigma: f64, ridge: f64) -> DVector<f64> {
    let s2 = sigma * sigma;
    y.map(|v| {
        let d = v * v + ridge;
        let g = 1.0 + (-s2 - ridge) / d;
        if g.is_nan() {
            0.0
        } else {
            g
        }
    })
}

/// Ridge-stabilized empirical Wiener filter (EMP_I), clipped to `[0, 1]`.
pub fn empirical_wiener_ridge(y: &DVector<f64>, sigma: f64, ridge: f64) -> GainVector {
    GainVector::from_raw(empirical_wiener_raw(y, sigma, ridge), "identity", ridge)
}

/// Empirical Wiener filter `max(0, yᵢ² − σ²)/yᵢ²`.
pub fn empirical_wiener(y: &DVector<f64>, sigma: f64) -> GainVector {
    empirical_wiener_ridge(y, sigma, 0.0)
}

/// Unbiased risk estimate of the fixed gain `γ`:
/// `Δ = yᵀ(I−Γ)U⁻(I−Γ)y − 2σ² Tr[U⁻U(I−Γ)]`.
pub fn sure_linear(
    frame: &FrameOperator,
    y: &DVector<f64>,
    sigma: f64,
    gamma: &DVector<f64>,
) -> Result<RiskReport> {
    check_gain_inputs(frame, gamma, y)?;
    let a = y.zip_map(gamma, |v, g| (1.0 - g) * v);
    let quadratic = frame.u_minus_sparse().quad_form(&a);
    let tr: f64 = frame.projection_diag().iter().zip(gamma.iter()).map(|(p, g)| p * (1.0 - g)).sum();
    Ok(RiskReport::sure(sigma, frame.n(), quadratic, -2.0 * sigma * sigma * tr))
}

/// `f̂ = W⁺(γ∘y)`.
pub fn apply_gain(frame: &FrameOperator, gamma: &DVector<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    check_gain_inputs(frame, gamma, y)?;
    frame.synthesize(&y.component_mul(gamma))
}
