//! Unbiased risk estimation for general shrinkage rules, soft-threshold
//! selection, universal thresholds and greedy hard thresholding.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::diag_shrink::{GainVector, RiskReport};
use crate::error::{check_len, Error, Result};
use crate::frame::FrameOperator;

/// A coefficient-domain estimation rule `θ̂ = y + g(y)`.
#[derive(Debug, Clone, PartialEq)]
pub enum ShrinkRule {
    /// `θ̂ᵢ = γᵢ yᵢ`.
    LinearGain(DVector<f64>),
    /// `θ̂ᵢ = (yᵢ − sgn(yᵢ)tᵢ)·1(|yᵢ| > tᵢ)`.
    SoftThreshold(DVector<f64>),
    /// `θ̂ᵢ = yᵢ·1(|yᵢ| > tᵢ)`.
    HardThreshold(DVector<f64>),
}

/// Where a Jacobian came from; decides whether the second-order term of
/// the SURE gradient is known to vanish.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleOrigin {
    Linear,
    Soft,
    Hard,
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub enum JacobianValues {
    Diagonal(DVector<f64>),
    Dense(DMatrix<f64>),
}

/// `Z` with `Z_ij = ∂g_j/∂y_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleJacobian {
    pub values: JacobianValues,
    pub origin: RuleOrigin,
}

impl RuleJacobian {
    pub fn diagonal(z: DVector<f64>, origin: RuleOrigin) -> Self {
        RuleJacobian { values: JacobianValues::Diagonal(z), origin }
    }

    pub fn dense(z: DMatrix<f64>, origin: RuleOrigin) -> Self {
        RuleJacobian { values: JacobianValues::Dense(z), origin }
    }

    pub fn dim(&self) -> usize {
        match &self.values {
            JacobianValues::Diagonal(d) => d.len(),
            JacobianValues::Dense(m) => m.nrows(),
        }
    }

    pub fn trace(&self) -> f64 {
        match &self.values {
            JacobianValues::Diagonal(d) => d.sum(),
            JacobianValues::Dense(m) => m.trace(),
        }
    }

    /// `Z v`.
    pub fn mul_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.values {
            JacobianValues::Diagonal(d) => d.component_mul(v),
            JacobianValues::Dense(m) => m * v,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match &self.values {
            JacobianValues::Diagonal(d) => DMatrix::from_diagonal(d),
            JacobianValues::Dense(m) => m.clone(),
        }
    }

    /// `Tr[U⁻U Z]`.
    fn trace_projection(&self, frame: &FrameOperator) -> f64 {
        match &self.values {
            JacobianValues::Diagonal(d) => frame.projection_diag().dot(d),
            JacobianValues::Dense(m) => frame.trace_projection_times(m),
        }
    }

    /// Whether `d = 0` is known for the rule that produced this Jacobian.
    pub fn second_order_vanishes(&self) -> bool {
        self.origin != RuleOrigin::Custom
    }
}

/// `sgn` with `sgn(0) = 0`.
pub fn sgn(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl ShrinkRule {
    /// Soft thresholding with the same `t` for all `len` coefficients.
    pub fn soft_uniform(t: f64, len: usize) -> Self {
        ShrinkRule::SoftThreshold(DVector::from_element(len, t))
    }

    pub fn hard_uniform(t: f64, len: usize) -> Self {
        ShrinkRule::HardThreshold(DVector::from_element(len, t))
    }

    pub fn len(&self) -> usize {
        match self {
            ShrinkRule::LinearGain(p) | ShrinkRule::SoftThreshold(p) | ShrinkRule::HardThreshold(p) => {
                p.len()
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `θ̂ = y + g(y)`.
    pub fn apply(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(self.len(), y.len())?;
        Ok(match self {
            ShrinkRule::LinearGain(gamma) => y.component_mul(gamma),
            ShrinkRule::SoftThreshold(t) => y.zip_map(t, |v, ti| sgn(v) * (v.abs() - ti).max(0.0)),
            ShrinkRule::HardThreshold(t) => y.zip_map(t, |v, ti| if v.abs() > ti { v } else { 0.0 }),
        })
    }

    /// The correction `g(y) = θ̂ − y` and its Jacobian at `y`.
    ///
    /// For hard thresholding the Jacobian is the almost-everywhere derivative;
    /// the rule is discontinuous, so SURE built from it is not unbiased.
    pub fn evaluate(&self, y: &DVector<f64>) -> Result<(DVector<f64>, RuleJacobian)> {
        check_len(self.len(), y.len())?;
        Ok(match self {
            ShrinkRule::LinearGain(gamma) => {
                let z = gamma.map(|g| g - 1.0);
                (y.component_mul(&z), RuleJacobian::diagonal(z, RuleOrigin::Linear))
            }
            ShrinkRule::SoftThreshold(t) => {
                let g = y.zip_map(t, |v, ti| -sgn(v) * v.abs().min(ti));
                let z = y.zip_map(t, |v, ti| if v.abs() < ti { -1.0 } else { 0.0 });
                (g, RuleJacobian::diagonal(z, RuleOrigin::Soft))
            }
            ShrinkRule::HardThreshold(t) => {
                let g = y.zip_map(t, |v, ti| if v.abs() > ti { 0.0 } else { -v });
                let z = y.zip_map(t, |v, ti| if v.abs() > ti { 0.0 } else { -1.0 });
                (g, RuleJacobian::diagonal(z, RuleOrigin::Hard))
            }
        })
    }
}

/// [`ShrinkRule::apply`].
pub fn apply_rule(rule: &ShrinkRule, y: &DVector<f64>) -> Result<DVector<f64>> {
    rule.apply(y)
}

/// SURE for `θ̂ = y + g(y)`: `Δ = gᵀU⁻g + 2σ² Tr[U⁻U Z]`, evaluated as
/// `α⁻²gᵀUg + 2σ²α⁻¹Tr[UZ]` when the frame is tight.
pub fn sure_general(
    frame: &FrameOperator,
    y: &DVector<f64>,
    sigma: f64,
    g: &DVector<f64>,
    z: &RuleJacobian,
) -> Result<RiskReport> {
    sure_general_impl(frame, y, sigma, g, z, true)
}

/// [`sure_general`] always through `U⁻` and `U⁻U`, tight or not.
pub fn sure_general_generic(
    frame: &FrameOperator,
    y: &DVector<f64>,
    sigma: f64,
    g: &DVector<f64>,
    z: &RuleJacobian,
) -> Result<RiskReport> {
    sure_general_impl(frame, y, sigma, g, z, false)
}

fn sure_general_impl(
    frame: &FrameOperator,
    y: &DVector<f64>,
    sigma: f64,
    g: &DVector<f64>,
    z: &RuleJacobian,
    use_tight: bool,
) -> Result<RiskReport> {
    let big_n = frame.big_n();
    check_len(big_n, y.len())?;
    check_len(big_n, g.len())?;
    check_len(big_n, z.dim())?;
    let s2 = sigma * sigma;
    let (quadratic, trace) = match frame.alpha().filter(|_| use_tight) {
        Some(alpha) => {
            (frame.u_sparse().quad_form(g) / (alpha * alpha), 2.0 * s2 * trace_u_times(frame, z) / alpha)
        }
        None => (frame.u_minus_sparse().quad_form(g), 2.0 * s2 * z.trace_projection(frame)),
    };
    Ok(RiskReport::sure(sigma, frame.n(), quadratic, trace))
}

/// `Tr[U Z]` through the sparse `U`.
fn trace_u_times(frame: &FrameOperator, z: &RuleJacobian) -> f64 {
    match &z.values {
        JacobianValues::Diagonal(d) => frame.u_sparse().diag().iter().zip(d.iter()).map(|(u, z)| u * z).sum(),
        JacobianValues::Dense(m) => {
            let u = frame.u_sparse();
            let mut s = 0.0;
            for i in 0..u.dim() {
                let (c, v) = u.row(i);
                s += c.iter().zip(v).map(|(&j, &uij)| uij * m[(j, i)]).sum::<f64>();
            }
            s
        }
    }
}

/// SURE of soft thresholding at thresholds `t`:
/// `Δ = Σᵢⱼ U⁻ᵢⱼ sgn(yᵢ)sgn(yⱼ) min(|yᵢ|,tᵢ) min(|yⱼ|,tⱼ) − 2σ² Σᵢ (U⁻U)ᵢᵢ 1(|yᵢ| < tᵢ)`.
pub fn sure_soft(
    frame: &FrameOperator,
    y: &DVector<f64>,
    sigma: f64,
    t: &DVector<f64>,
) -> Result<RiskReport> {
    let big_n = frame.big_n();
    check_len(big_n, y.len())?;
    check_len(big_n, t.len())?;
    let s = y.zip_map(t, |v, ti| sgn(v) * v.abs().min(ti));
    let quadratic = frame.u_minus_sparse().quad_form(&s);
    let count: f64 = frame
        .projection_diag()
        .iter()
        .zip(y.iter().zip(t.iter()))
        .filter(|(_, (v, ti))| v.abs() < **ti)
        .map(|(p, _)| p)
        .sum();
    Ok(RiskReport::sure(sigma, frame.n(), quadratic, -2.0 * sigma * sigma * count))
}

/// Objective used to pick a global soft threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SoftMode {
    /// Frame-aware SURE (SOFT_U).
    FrameAware,
    /// Classical orthonormal SURE `Σ min(yᵢ², t²) − 2σ² #{|yᵢ| < t}` (SOFT_I).
    Orthonormal,
}

/// Candidate grid for the global threshold search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SoftSearch {
    /// `{0} ∪ {|yᵢ|} ∪ midpoints`.
    #[default]
    Breakpoints,
    /// Breakpoints plus the exact minimizer of each quadratic piece.
    Refined,
}

/// Minimizes the soft-threshold SURE over a single global `t`.
pub fn optimize_soft_global(
    frame: &FrameOperator,
    y: &DVector<f64>,
    sigma: f64,
    mode: SoftMode,
) -> Result<(f64, RiskReport)> {
    optimize_soft_global_with(frame, y, sigma, mode, SoftSearch::default())
}

/// Running value of `sᵀMs` with `s = a + t·b`, where `a` collects the
/// coefficients below the threshold and `b` the signs of the others.
struct SoftPath<'a> {
    frame: &'a FrameOperator,
    identity: bool,
    ma: DVector<f64>,
    mb: DVector<f64>,
    aa: f64,
    ab: f64,
    bb: f64,
}

impl<'a> SoftPath<'a> {
    fn new(frame: &'a FrameOperator, y: &DVector<f64>, identity: bool) -> Self {
        let b = y.map(sgn);
        let mb = if identity { b.clone() } else { frame.u_minus_sparse().mul_vec(&b) };
        let bb = b.dot(&mb);
        SoftPath { frame, identity, ma: DVector::zeros(y.len()), mb, aa: 0.0, ab: 0.0, bb }
    }

    /// Moves coefficient `i` (value `v`) from the `b` part to the `a` part.
    fn absorb(&mut self, i: usize, v: f64) {
        let da = v;
        let db = -sgn(v);
        let mii = if self.identity { 1.0 } else { self.frame.u_minus_sparse().diag()[i] };
        // With a' = a + da·eᵢ and b' = b + db·eᵢ.
        self.aa += 2.0 * da * self.ma[i] + da * da * mii;
        self.ab += da * self.mb[i] + db * self.ma[i] + da * db * mii;
        self.bb += 2.0 * db * self.mb[i] + db * db * mii;
        if self.identity {
            self.ma[i] += da;
            self.mb[i] += db;
        } else {
            let (c, vals) = self.frame.u_minus_sparse().row(i);
            for (&j, &mij) in c.iter().zip(vals) {
                self.ma[j] += da * mij;
                self.mb[j] += db * mij;
            }
        }
    }

    fn quad(&self, t: f64) -> f64 {
        self.aa + 2.0 * t * self.ab + t * t * self.bb
    }
}

/// [`optimize_soft_global`] with an explicit candidate grid.
pub fn optimize_soft_global_with(
    frame: &FrameOperator,
    y: &DVector<f64>,
    sigma: f64,
    mode: SoftMode,
    search: SoftSearch,
) -> Result<(f64, RiskReport)> {
    let big_n = frame.big_n();
    check_len(big_n, y.len())?;
    let identity = mode == SoftMode::Orthonormal;
    let weight = |i: usize| if identity { 1.0 } else { frame.projection_diag()[i] };
    let s2 = sigma * sigma;

    let mut order: Vec<usize> = (0..big_n).collect();
    order.sort_by(|&i, &j| y[i].abs().total_cmp(&y[j].abs()).then(i.cmp(&j)));
    let abs: Vec<f64> = order.iter().map(|&i| y[i].abs()).collect();

    let mut path = SoftPath::new(frame, y, identity);
    let mut below = 0.0; // Σ weights of coefficients with |yᵢ| < t
    let mut best = (0.0, path.quad(0.0), 0.0);
    // best = (t, Δ, weight below t); strict improvement keeps the smaller t.
    let consider = |t: f64, quad: f64, below: f64, best: &mut (f64, f64, f64)| {
        let val = quad - 2.0 * s2 * below;
        if val < best.1 {
            *best = (t, val, below);
        }
    };
    let mut k = 0;
    while k < big_n {
        let t = abs[k];
        // Everything strictly below t is already absorbed; absorb the tie group.
        let group_end = abs[k..].iter().position(|&a| a != t).map_or(big_n, |p| k + p);
        for &i in &order[k..group_end] {
            path.absorb(i, y[i]);
        }
        consider(t, path.quad(t), below, &mut best);
        for &i in &order[k..group_end] {
            below += weight(i);
        }
        if group_end < big_n {
            let next = abs[group_end];
            consider(0.5 * (t + next), path.quad(0.5 * (t + next)), below, &mut best);
            if search == SoftSearch::Refined && path.bb > 0.0 {
                let tstar = -path.ab / path.bb;
                if tstar > t && tstar < next {
                    consider(tstar, path.quad(tstar), below, &mut best);
                }
            }
        }
        k = group_end;
    }
    let t = best.0;
    let n_eff = if identity { big_n } else { frame.n() };
    let report = RiskReport::sure(sigma, n_eff, best.1 + 2.0 * s2 * best.2, -2.0 * s2 * best.2);
    Ok((t, report))
}

/// Threshold family for [`universal_threshold`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UniversalMode {
    /// `σ√(2 ln N) + σ(2z − ln ln N − ln π)/(2√(2 ln N))`, `z = π/√6` (VISU_U).
    Frame,
    /// `σ√(2 ln N)` (VISU_I).
    Orthonormal,
}

/// The frame-mode correction divided by `σ`. Positive only for
/// `N < exp(exp(2z − ln π)) ≈ 62.7`.
pub fn universal_correction(big_n: usize) -> Result<f64> {
    if big_n < 3 {
        return Err(Error::InvalidN(big_n));
    }
    let z = PI / 6f64.sqrt();
    let l = (big_n as f64).ln();
    Ok((2.0 * z - l.ln() - PI.ln()) / (2.0 * (2.0 * l).sqrt()))
}

pub fn universal_threshold(sigma: f64, big_n: usize, mode: UniversalMode) -> Result<f64> {
    if big_n < 3 {
        return Err(Error::InvalidN(big_n));
    }
    let base = (2.0 * (big_n as f64).ln()).sqrt();
    Ok(match mode {
        UniversalMode::Orthonormal => sigma * base,
        UniversalMode::Frame => sigma * base + sigma * universal_correction(big_n)?,
    })
}

/// Working state of the greedy hard-thresholding search.
///
/// `H̃` is kept implicitly: off-diagonal entries are `yᵢyⱼU⁻ᵢⱼ` read from
/// the sparse `U⁻`, diagonal entries are `(yᵢ²U⁻ᵢᵢ − 2σ²(U⁻U)ᵢᵢ)/2`.
#[derive(Debug, Clone)]
pub struct GreedyState {
    /// `true` for indices still in `J` (coefficients set to zero).
    pub killed: Vec<bool>,
    /// Column sums of `H̃` restricted to `J`.
    pub col_sums: DVector<f64>,
    /// `(index, column sum)` of every removal, in order.
    pub removed: Vec<(usize, f64)>,
    /// `Δ` after 0, 1, 2, … removals.
    pub deltas: Vec<f64>,
}

impl GreedyState {
    fn new(frame: &FrameOperator, y: &DVector<f64>, sigma: f64) -> Self {
        let um = frame.u_minus_sparse();
        let p = frame.projection_diag();
        let s2 = sigma * sigma;
        let umy = um.mul_vec(y);
        let col_sums = DVector::from_fn(y.len(), |l, _| {
            let diag_h = y[l] * y[l] * um.diag()[l] - 2.0 * s2 * p[l];
            y[l] * umy[l] - y[l] * y[l] * um.diag()[l] + 0.5 * diag_h
        });
        let delta0 = y.dot(&umy) - 2.0 * s2 * p.sum();
        GreedyState { killed: vec![true; y.len()], col_sums, removed: Vec::new(), deltas: vec![delta0] }
    }

    /// Index with the largest positive remaining column sum (smallest index
    /// on ties).
    fn pick(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (l, (&k, &c)) in self.killed.iter().zip(self.col_sums.iter()).enumerate() {
            if k && c > 0.0 && best.is_none_or(|(_, b)| c > b) {
                best = Some((l, c));
            }
        }
        best.map(|(l, _)| l)
    }

    fn remove(&mut self, frame: &FrameOperator, y: &DVector<f64>, l: usize) {
        let c = self.col_sums[l];
        self.killed[l] = false;
        let (cols, vals) = frame.u_minus_sparse().row(l);
        for (&j, &mlj) in cols.iter().zip(vals) {
            if j != l {
                self.col_sums[j] -= y[j] * y[l] * mlj;
            }
        }
        self.removed.push((l, c));
        let last = *self.deltas.last().expect("initial delta present");
        self.deltas.push(last - 2.0 * c);
    }
}

/// Greedy minimization of the hard-thresholding SURE
/// `Δ = Σ_{i,j∈J} Hᵢⱼ` over the killed set `J`.
pub fn greedy_hard(
    frame: &FrameOperator,
    y: &DVector<f64>,
    sigma: f64,
) -> Result<(GainVector, RiskReport, GreedyState)> {
    check_len(frame.big_n(), y.len())?;
    let mut state = GreedyState::new(frame, y, sigma);
    while let Some(l) = state.pick() {
        state.remove(frame, y, l);
    }
    let gamma = DVector::from_iterator(y.len(), state.killed.iter().map(|&k| if k { 0.0 } else { 1.0 }));
    let delta = *state.deltas.last().expect("initial delta present");
    let report = RiskReport {
        delta,
        risk: sigma * sigma * frame.n() as f64 + delta,
        kind: crate::diag_shrink::RiskKind::Sure,
        components: None,
    };
    let gain = GainVector { gamma, frame_ref: frame.label().to_string(), ridge: 0.0, clipped: 0 };
    Ok((gain, report, state))
}
