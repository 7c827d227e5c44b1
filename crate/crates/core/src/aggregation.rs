//! Aggregation of per-basis estimators over a collection of orthonormal
//! bases, with data-independent (SURE-optimal) or exponential weights.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::bases::BasisCollection;
use crate::diag_shrink::RiskReport;
use crate::error::{check_len, Error, Result};
use crate::linalg::lstsq_svd;
use crate::sure_rules::{RuleJacobian, ShrinkRule};

/// Tolerance on `Σλ = 1` accepted by reconstruction.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub lambda: DVector<f64>,
    pub data_dependent: bool,
    /// Coefficients the weights were computed from, when data dependent.
    pub source_y: Option<Vec<DVector<f64>>>,
}

impl WeightVector {
    /// Fixed weights.
    pub fn fixed(lambda: DVector<f64>) -> Self {
        WeightVector { lambda, data_dependent: false, source_y: None }
    }

    /// `λᵢ = 1/m`.
    pub fn uniform(m: usize) -> Self {
        Self::fixed(DVector::from_element(m, 1.0 / m as f64))
    }

    pub fn m(&self) -> usize {
        self.lambda.len()
    }
}

/// Per-basis estimates `θ̂^(i) = y^(i) + g^(i)(y^(i))` with their Jacobians.
#[derive(Debug, Clone)]
pub struct BlockEstimate {
    pub y: Vec<DVector<f64>>,
    pub g: Vec<DVector<f64>>,
    pub jacobians: Vec<RuleJacobian>,
    pub theta_hat: Vec<DVector<f64>>,
    /// `Tr Z^(i,i)`.
    pub traces: Vec<f64>,
}

impl BlockEstimate {
    pub fn new(y: Vec<DVector<f64>>, g: Vec<DVector<f64>>, jacobians: Vec<RuleJacobian>) -> Result<Self> {
        let m = y.len();
        if m == 0 {
            return Err(Error::InvalidLength("no blocks".into()));
        }
        check_len(m, g.len())?;
        check_len(m, jacobians.len())?;
        let n = y[0].len();
        for i in 0..m {
            check_len(n, y[i].len())?;
            check_len(n, g[i].len())?;
            check_len(n, jacobians[i].dim())?;
        }
        let theta_hat = y.iter().zip(&g).map(|(a, b)| a + b).collect();
        let traces = jacobians.iter().map(|z| z.trace()).collect();
        Ok(BlockEstimate { y, g, jacobians, theta_hat, traces })
    }

    /// Applies `rules[i]` to the coefficients `y[i]`.
    pub fn from_rules(y: Vec<DVector<f64>>, rules: &[ShrinkRule]) -> Result<Self> {
        check_len(y.len(), rules.len())?;
        let mut g = Vec::with_capacity(y.len());
        let mut z = Vec::with_capacity(y.len());
        for (yi, rule) in y.iter().zip(rules) {
            let (gi, zi) = rule.evaluate(yi)?;
            g.push(gi);
            z.push(zi);
        }
        Self::new(y, g, z)
    }

    pub fn m(&self) -> usize {
        self.y.len()
    }

    pub fn n(&self) -> usize {
        self.y[0].len()
    }

    /// Per-basis SURE `rᵢ = σ²n + gᵀg + 2σ² Tr Z^(i,i)`.
    pub fn sure(&self, i: usize, sigma: f64) -> f64 {
        let s2 = sigma * sigma;
        s2 * self.n() as f64 + self.g[i].norm_squared() + 2.0 * s2 * self.traces[i]
    }

    /// `∇rᵢ` for block `i`; see [`sure_gradient`].
    pub fn sure_gradient(&self, i: usize, sigma: f64, d: Option<&DVector<f64>>) -> Result<DVector<f64>> {
        sure_gradient(&self.g[i], &self.jacobians[i], sigma, d)
    }

    fn check_collection(&self, b: &BasisCollection) -> Result<()> {
        check_len(b.m(), self.m())?;
        check_len(b.n(), self.n())
    }
}

/// Gradient of the SURE `r(y) = σ²n + gᵀg + 2σ² Tr Z`:
/// `∇r = 2Zg + 2σ²d` with `d_k = Σ_l ∂²g_l/∂y_l∂y_k`.
///
/// `d` may be omitted for linear, soft and hard rules, for which it vanishes.
pub fn sure_gradient(
    g: &DVector<f64>,
    z: &RuleJacobian,
    sigma: f64,
    d: Option<&DVector<f64>>,
) -> Result<DVector<f64>> {
    check_len(g.len(), z.dim())?;
    let mut grad = z.mul_vec(g) * 2.0;
    match d {
        Some(d) => {
            check_len(g.len(), d.len())?;
            grad.axpy(2.0 * sigma * sigma, d, 1.0);
        }
        None if z.second_order_vanishes() => {}
        None => return Err(Error::GradientMissing),
    }
    Ok(grad)
}

fn check_weight_sum(w: &WeightVector) -> Result<()> {
    let s = w.lambda.sum();
    if (s - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(Error::WeightSumViolation(s));
    }
    Ok(())
}

/// `f̂^(i) = (W^(i))ᵀ θ̂^(i)` for every block.
pub fn per_basis_estimates(b: &BasisCollection, est: &BlockEstimate) -> Result<Vec<DVector<f64>>> {
    est.check_collection(b)?;
    Ok((0..b.m()).map(|i| b.block(i).tr_mul(&est.theta_hat[i])).collect())
}

/// `f̂ = Σᵢ λᵢ (W^(i))ᵀ θ̂^(i)`.
pub fn reconstruct_weighted(
    b: &BasisCollection,
    est: &BlockEstimate,
    w: &WeightVector,
) -> Result<DVector<f64>> {
    est.check_collection(b)?;
    check_len(b.m(), w.m())?;
    check_weight_sum(w)?;
    let mut f = DVector::zeros(b.n());
    for i in 0..b.m() {
        f += b.block(i).tr_mul(&est.theta_hat[i]) * w.lambda[i];
    }
    Ok(f)
}

/// `Gᵢⱼ = (g^(i))ᵀ U^(i,j) g^(j)`.
pub fn cross_gram(b: &BasisCollection, est: &BlockEstimate) -> Result<DMatrix<f64>> {
    est.check_collection(b)?;
    // (g^(i))ᵀ U^(i,j) g^(j) = ⟨W^(i)ᵀg^(i), W^(j)ᵀg^(j)⟩.
    let v: Vec<DVector<f64>> = (0..b.m()).map(|i| b.block(i).tr_mul(&est.g[i])).collect();
    let m = b.m();
    Ok(DMatrix::from_fn(m, m, |i, j| v[i].dot(&v[j])))
}

/// `Δ = Σᵢⱼ λᵢλⱼ (g^(i))ᵀU^(i,j)g^(j) + 2σ² Σᵢ λᵢ Tr Z^(i,i)` for fixed weights.
pub fn delta_di(
    b: &BasisCollection,
    est: &BlockEstimate,
    w: &WeightVector,
    sigma: f64,
) -> Result<RiskReport> {
    check_len(b.m(), w.m())?;
    let g = cross_gram(b, est)?;
    let quadratic = w.lambda.dot(&(&g * &w.lambda));
    let trace: f64 = w.lambda.iter().zip(&est.traces).map(|(l, t)| l * t).sum();
    Ok(RiskReport::sure(sigma, b.n(), quadratic, 2.0 * sigma * sigma * trace))
}

/// Result of [`optimize_weights_di`].
#[derive(Debug, Clone)]
pub struct WeightOptimum {
    pub weights: WeightVector,
    pub report: RiskReport,
    /// `G + Gᵀ` had an eigenvalue below `−1e-10` and a `1e-10` ridge was added.
    pub degenerate: bool,
    /// Active-set iterations used.
    pub iterations: usize,
}

const DEGENERATE_EIGEN: f64 = -1e-10;
const DEGENERATE_RIDGE: f64 = 1e-10;

/// Minimizes `λᵀGλ + 2σ²cᵀλ` over the simplex `{Σλ = 1, λ ≥ 0}`.
pub fn optimize_weights_di(b: &BasisCollection, est: &BlockEstimate, sigma: f64) -> Result<WeightOptimum> {
    let mut g = cross_gram(b, est)?;
    let c = DVector::from_vec(est.traces.clone());
    let m = b.m();
    if m < 2 {
        return Err(Error::Config("weight optimization needs at least two bases".into()));
    }
    let sym = (&g + g.transpose()) * 0.5;
    let degenerate = sym.clone().symmetric_eigenvalues().min() < DEGENERATE_EIGEN;
    g = sym;
    if degenerate {
        g += DMatrix::identity(m, m) * DEGENERATE_RIDGE;
    }
    let (lambda, iterations) = simplex_qp(&g, &(c * (sigma * sigma)))?;
    let weights = WeightVector::fixed(lambda);
    let report = delta_di(b, est, &weights, sigma)?;
    Ok(WeightOptimum { weights, report, degenerate, iterations })
}

/// Equality-constrained minimizer of `λᵀGλ + 2qᵀλ` on the coordinates in
/// `free` (others zero), through the bordered KKT system.
fn solve_on_support(g: &DMatrix<f64>, q: &DVector<f64>, free: &[usize]) -> Result<DVector<f64>> {
    let k = free.len();
    let mut a = DMatrix::zeros(k + 1, k + 1);
    let mut rhs = DVector::zeros(k + 1);
    for (p, &i) in free.iter().enumerate() {
        for (r, &j) in free.iter().enumerate() {
            a[(p, r)] = 2.0 * g[(i, j)];
        }
        a[(p, k)] = 1.0;
        a[(k, p)] = 1.0;
        rhs[p] = -2.0 * q[i];
    }
    rhs[k] = 1.0;
    let sol = match a.clone().lu().solve(&rhs) {
        Some(s) if s.iter().all(|v| v.is_finite()) && (&a * &s - &rhs).amax() < 1e-9 => s,
        _ => lstsq_svd(&a, &rhs)?,
    };
    let mut lambda = DVector::zeros(g.nrows());
    for (p, &i) in free.iter().enumerate() {
        lambda[i] = sol[p];
    }
    Ok(lambda)
}

/// Active-set solution of `min λᵀGλ + 2qᵀλ` on the probability simplex.
pub fn simplex_qp(g: &DMatrix<f64>, q: &DVector<f64>) -> Result<(DVector<f64>, usize)> {
    let m = g.nrows();
    let mut free: Vec<usize> = (0..m).collect();
    let max_iter = 4 * m + 4;
    for iter in 1..=max_iter {
        let lambda = solve_on_support(g, q, &free)?;
        // Drop the most negative weight and re-solve.
        let neg = free
            .iter()
            .copied()
            .filter(|&i| lambda[i] < -1e-14)
            .min_by(|&a, &b| lambda[a].total_cmp(&lambda[b]).then(a.cmp(&b)));
        if let Some(i) = neg {
            free.retain(|&j| j != i);
            continue;
        }
        // KKT: the gradient on released coordinates must not undercut the
        // common gradient value on the support.
        let grad = (g * &lambda) * 2.0 + q * 2.0;
        let level = free.iter().map(|&i| grad[i]).sum::<f64>() / free.len() as f64;
        let scale = grad.amax().max(1.0);
        let release = (0..m)
            .filter(|i| !free.contains(i))
            .filter(|&i| grad[i] < level - 1e-12 * scale)
            .min_by(|&a, &b| grad[a].total_cmp(&grad[b]).then(a.cmp(&b)));
        match release {
            Some(i) => {
                free.push(i);
                free.sort_unstable();
            }
            None => {
                let lambda = lambda.map(|v| v.max(0.0));
                let s = lambda.sum();
                return Ok((lambda / s, iter));
            }
        }
    }
    Err(Error::SolveFailure("simplex active set did not converge".into()))
}

/// Quality score `ηᵢ(y^(i))` for exponential weights.
pub trait EtaFunction: Send + Sync {
    fn value(&self, block: usize, y: &DVector<f64>) -> f64;
    /// `∇ηᵢ`, if available.
    fn gradient(&self, block: usize, y: &DVector<f64>) -> Option<DVector<f64>>;
}

#[derive(Clone, Default)]
pub enum EtaKind {
    /// `ηᵢ = rᵢ(y^(i))`, the per-basis SURE.
    #[default]
    Sure,
    Custom(Arc<dyn EtaFunction>),
}

impl fmt::Debug for EtaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EtaKind::Sure => f.write_str("Sure"),
            EtaKind::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// `λᵢ ∝ πᵢ exp(−βηᵢ)`.
#[derive(Debug, Clone)]
pub struct ExpWeightConfig {
    pub pi: DVector<f64>,
    pub beta: f64,
    pub eta: EtaKind,
}

impl ExpWeightConfig {
    /// Uniform prior, SURE scores and `β = 1/(2σ²)`.
    pub fn default_for(m: usize, sigma: f64) -> Self {
        ExpWeightConfig {
            pi: DVector::from_element(m, 1.0),
            beta: 1.0 / (2.0 * sigma * sigma),
            eta: EtaKind::Sure,
        }
    }
}

/// Exponential weights for scores `eta`, computed relative to the smallest
/// score among blocks with positive prior so nothing overflows.
pub fn exp_weights(cfg: &ExpWeightConfig, eta: &DVector<f64>) -> Result<WeightVector> {
    check_len(cfg.pi.len(), eta.len())?;
    if cfg.pi.iter().any(|p| *p < 0.0 || !p.is_finite()) {
        return Err(Error::Config("prior weights must be finite and nonnegative".into()));
    }
    if !(cfg.beta >= 0.0) {
        return Err(Error::Config(format!("beta must be nonnegative, got {}", cfg.beta)));
    }
    let total: f64 = cfg.pi.sum();
    if !(total > 0.0) {
        return Err(Error::AllZeroPrior);
    }
    let lambda = if cfg.beta == 0.0 {
        &cfg.pi / total
    } else {
        let eta_min = cfg
            .pi
            .iter()
            .zip(eta.iter())
            .filter(|(p, _)| **p > 0.0)
            .map(|(_, e)| *e)
            .fold(f64::INFINITY, f64::min);
        let raw =
            cfg.pi.zip_map(eta, |p, e| if p > 0.0 { p * (-cfg.beta * (e - eta_min)).exp() } else { 0.0 });
        let s = raw.sum();
        raw / s
    };
    Ok(WeightVector { lambda, data_dependent: cfg.beta != 0.0, source_y: None })
}

/// Scores and their gradients for every block.
fn eta_values(
    est: &BlockEstimate,
    cfg: &ExpWeightConfig,
    sigma: f64,
) -> Result<(DVector<f64>, Vec<DVector<f64>>)> {
    let m = est.m();
    let mut eta = DVector::zeros(m);
    let mut grads = Vec::with_capacity(m);
    for i in 0..m {
        match &cfg.eta {
            EtaKind::Sure => {
                eta[i] = est.sure(i, sigma);
                grads.push(est.sure_gradient(i, sigma, None)?);
            }
            EtaKind::Custom(f) => {
                eta[i] = f.value(i, &est.y[i]);
                grads.push(f.gradient(i, &est.y[i]).ok_or(Error::GradientMissing)?);
            }
        }
    }
    Ok((eta, grads))
}

/// SURE of the exponentially weighted aggregate.
#[derive(Debug, Clone)]
pub struct DataDependentRisk {
    pub report: RiskReport,
    pub weights: WeightVector,
    /// `Δ₀` from `2σ²β Σᵢ λᵢ ∇ηᵢᵀ(W^(i)f̂ − θ̂^(i))`.
    pub delta0: f64,
    /// `Δ₀` from the explicit-weight form
    /// `2σ²β{Σᵢⱼ λᵢλⱼ ∇ηⱼᵀU^(j,i)θ̂^(i) − Σᵢ λᵢ ∇ηᵢᵀθ̂^(i)}`.
    pub delta0_explicit: f64,
}

/// `Δ` for data-dependent exponential weights: the fixed-weight terms at
/// `λ(y)` plus the correction `Δ₀`.
pub fn delta_dd(
    b: &BasisCollection,
    est: &BlockEstimate,
    cfg: &ExpWeightConfig,
    sigma: f64,
) -> Result<DataDependentRisk> {
    est.check_collection(b)?;
    let (eta, grads) = eta_values(est, cfg, sigma)?;
    let mut weights = exp_weights(cfg, &eta)?;
    if weights.data_dependent {
        weights.source_y = Some(est.y.clone());
    }
    let fixed = delta_di(b, est, &weights, sigma)?;
    let lambda = &weights.lambda;
    let s2b = 2.0 * sigma * sigma * cfg.beta;
    let m = b.m();

    let f_hat = reconstruct_weighted(b, est, &weights)?;
    let mut form1 = 0.0;
    for i in 0..m {
        let resid = b.block(i) * &f_hat - &est.theta_hat[i];
        form1 += lambda[i] * grads[i].dot(&resid);
    }

    let mut cross = 0.0;
    let mut own = 0.0;
    for j in 0..m {
        for i in 0..m {
            cross += lambda[i] * lambda[j] * grads[j].dot(&(b.cross(j, i) * &est.theta_hat[i]));
        }
        own += lambda[j] * grads[j].dot(&est.theta_hat[j]);
    }

    let delta0 = s2b * form1;
    let delta0_explicit = s2b * (cross - own);
    let components = fixed.components.expect("delta_di reports components");
    let report = RiskReport::sure(sigma, b.n(), components.quadratic, components.trace + delta0);
    Ok(DataDependentRisk { report, weights, delta0, delta0_explicit })
}

/// `σ²n + Δ` of the exponentially weighted aggregate for each `β`.
pub fn beta_sweep(
    b: &BasisCollection,
    est: &BlockEstimate,
    cfg: &ExpWeightConfig,
    sigma: f64,
    betas: &[f64],
) -> Result<Vec<(f64, f64)>> {
    betas
        .iter()
        .map(|&beta| {
            let c = ExpWeightConfig { beta, ..cfg.clone() };
            delta_dd(b, est, &c, sigma).map(|r| (beta, r.report.risk))
        })
        .collect()
}

/// One draw of `(θ̂^(i) − θ^(i))ᵀ U^(i,j) (θ̂^(j) − θ^(j))`; its Monte-Carlo
/// mean is the cross-risk matrix `ρ`.
pub fn cross_risk_sample(
    b: &BasisCollection,
    est: &BlockEstimate,
    theta: &[DVector<f64>],
) -> Result<DMatrix<f64>> {
    est.check_collection(b)?;
    check_len(b.m(), theta.len())?;
    let e: Vec<DVector<f64>> =
        (0..b.m()).map(|i| b.block(i).tr_mul(&(&est.theta_hat[i] - &theta[i]))).collect();
    let m = b.m();
    Ok(DMatrix::from_fn(m, m, |i, j| e[i].dot(&e[j])))
}
