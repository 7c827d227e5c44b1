//! Monte-Carlo experiment harness: risk estimation over seeded replicates,
//! the three simulation tables, key-value configuration and CSV/plot output.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::aggregation::{
    delta_dd, optimize_weights_di, reconstruct_weighted, BlockEstimate, ExpWeightConfig, WeightVector,
};
use crate::bases::{dct_basis, haar_basis, ortho_collection, BasisCollection};
use crate::diag_shrink::{
    apply_gain, empirical_gain_with, empirical_wiener_raw, empirical_wiener_ridge, ideal_gain_diag,
    ideal_gain_with, GainMode, DEFAULT_RIDGE,
};
use crate::error::{Error, Result};
use crate::frame::FrameOperator;
use crate::gabor::{gabor_frame_with, GaborLattice};
use crate::signals::{add_noise_stream, load_wav, make_signal, Observation, SignalName};
use crate::sure_rules::{
    greedy_hard, optimize_soft_global, universal_threshold, ShrinkRule, SoftMode, UniversalMode,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Estimator {
    IdealU,
    IdealI,
    EmpU,
    EmpI,
    SoftU,
    SoftI,
    VisuU,
    VisuI,
    GreedyHard,
    /// Single-basis estimate from the first basis of the collection.
    Cosine,
    /// Single-basis estimate from the second basis of the collection.
    Haar,
    /// Equal-weight aggregate.
    Average,
    AggDi,
    AggExp,
}

impl Estimator {
    pub const ALL: [Estimator; 14] = [
        Estimator::IdealU,
        Estimator::IdealI,
        Estimator::EmpU,
        Estimator::EmpI,
        Estimator::SoftU,
        Estimator::SoftI,
        Estimator::VisuU,
        Estimator::VisuI,
        Estimator::GreedyHard,
        Estimator::Cosine,
        Estimator::Haar,
        Estimator::Average,
        Estimator::AggDi,
        Estimator::AggExp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::IdealU => "IDEAL_U",
            Estimator::IdealI => "IDEAL_I",
            Estimator::EmpU => "EMP_U",
            Estimator::EmpI => "EMP_I",
            Estimator::SoftU => "SOFT_U",
            Estimator::SoftI => "SOFT_I",
            Estimator::VisuU => "VISU_U",
            Estimator::VisuI => "VISU_I",
            Estimator::GreedyHard => "GREEDY_HARD",
            Estimator::Cosine => "COSINE",
            Estimator::Haar => "HAAR",
            Estimator::Average => "AVERAGE",
            Estimator::AggDi => "AGG_DI",
            Estimator::AggExp => "AGG_EXP",
        }
    }

    /// Runs on a single frame (Gabor tables) rather than a basis collection.
    pub fn uses_frame(self) -> bool {
        !matches!(
            self,
            Estimator::Cosine | Estimator::Haar | Estimator::Average | Estimator::AggDi | Estimator::AggExp
        )
    }

    fn has_weights(self) -> bool {
        matches!(self, Estimator::Average | Estimator::AggDi | Estimator::AggExp)
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_uppercase().replace('-', "_");
        Estimator::ALL
            .into_iter()
            .find(|e| e.as_str() == key)
            .ok_or_else(|| Error::Config(format!("unknown estimator `{s}`")))
    }
}

/// Error between an estimate and the clean signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    /// `‖f̂ − f‖² / ‖f‖²`.
    #[default]
    RelativeSquared,
    /// `‖f̂ − f‖`.
    RawL2,
    /// `‖f̂ − f‖²`.
    SquaredL2,
}

impl Metric {
    pub fn eval(self, f_hat: &DVector<f64>, f: &DVector<f64>) -> f64 {
        let e = (f_hat - f).norm_squared();
        match self {
            Metric::RelativeSquared => e / f.norm_squared(),
            Metric::RawL2 => e.sqrt(),
            Metric::SquaredL2 => e,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::RelativeSquared => "relative-squared",
            Metric::RawL2 => "raw-l2",
            Metric::SquaredL2 => "squared-l2",
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "relative-squared" | "relative" | "rel" => Ok(Metric::RelativeSquared),
            "raw-l2" | "raw" | "l2" => Ok(Metric::RawL2),
            "squared-l2" | "squared" => Ok(Metric::SquaredL2),
            _ => Err(Error::Config(format!("unknown metric `{s}`"))),
        }
    }
}

fn parse_gain_mode(s: &str) -> Result<GainMode> {
    match s.trim().to_ascii_lowercase().as_str() {
        "box" => Ok(GainMode::Box),
        "clip" => Ok(GainMode::Clip),
        _ => Err(Error::Config(format!("unknown gain mode `{s}` (box or clip)"))),
    }
}

/// Where a clean test signal comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum SignalSource {
    Synthetic(SignalName),
    Wav {
        path: PathBuf,
        offset: usize,
        /// Defaults to the experiment length `n`.
        length: Option<usize>,
    },
}

impl SignalSource {
    pub fn label(&self) -> String {
        match self {
            SignalSource::Synthetic(name) => name.as_str().to_string(),
            SignalSource::Wav { path, .. } => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string()),
        }
    }

    /// The clean signal, normalized to unit sample standard deviation.
    pub fn load(&self, n: usize) -> Result<DVector<f64>> {
        match self {
            SignalSource::Synthetic(name) => make_signal(*name, n),
            SignalSource::Wav { path, offset, length } => {
                let len = length.unwrap_or(n);
                if len != n {
                    return Err(Error::Config(format!("wav length {len} differs from n = {n}")));
                }
                load_wav(path, *offset, len)
            }
        }
    }
}

/// Which simulation table a configuration describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Table {
    Shrinkage,
    Thresholding,
    Aggregation,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub table: Table,
    pub signals: Vec<SignalSource>,
    pub n: usize,
    pub snrs: Vec<f64>,
    pub runs: usize,
    pub seed: u64,
    pub lattice: GaborLattice,
    /// Coarsest Haar level: `2^haar_coarsest` scaling coefficients remain.
    pub haar_coarsest: u32,
    pub estimators: Vec<Estimator>,
    pub ridge: f64,
    pub gain_mode: GainMode,
    /// Clip the EMP_I gains to `[0, 1]`; by default the ridge-stabilized
    /// Wiener gains are used as solved.
    pub clip_emp_i: bool,
    pub metric: Metric,
    /// Record wall-clock time per estimator (makes output nondeterministic).
    pub timing: bool,
    /// Spread replicates over the rayon pool; results are identical either way.
    pub parallel: bool,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    fn base(table: Table, signals: &[SignalName], n: usize, estimators: &[Estimator]) -> Self {
        ExperimentConfig {
            table,
            signals: signals.iter().map(|s| SignalSource::Synthetic(*s)).collect(),
            n,
            snrs: vec![1.0, 3.0, 5.0],
            runs: 100,
            seed: 1,
            lattice: GaborLattice::default(),
            haar_coarsest: 3,
            estimators: estimators.to_vec(),
            ridge: DEFAULT_RIDGE,
            gain_mode: GainMode::default(),
            clip_emp_i: false,
            metric: Metric::default(),
            timing: false,
            parallel: true,
            out: None,
        }
    }

    /// Diagonal shrinkage on the Gabor frame.
    pub fn table1() -> Self {
        Self::base(
            Table::Shrinkage,
            &[SignalName::WernerSorrows, SignalName::MishMash],
            1280,
            &[Estimator::IdealU, Estimator::IdealI, Estimator::EmpU, Estimator::EmpI],
        )
    }

    /// Thresholding on the Gabor frame.
    pub fn table2() -> Self {
        Self::base(
            Table::Thresholding,
            &[SignalName::WernerSorrows, SignalName::MishMash],
            1280,
            &[Estimator::SoftU, Estimator::SoftI, Estimator::VisuU, Estimator::VisuI],
        )
    }

    /// Cosine + Haar aggregation.
    pub fn table3() -> Self {
        Self::base(
            Table::Aggregation,
            &[SignalName::Window, SignalName::LoSine, SignalName::WindowPlusLoSine],
            1024,
            &[Estimator::Cosine, Estimator::Haar, Estimator::Average, Estimator::AggDi],
        )
    }

    pub fn for_table(table: Table) -> Self {
        match table {
            Table::Shrinkage => Self::table1(),
            Table::Thresholding => Self::table2(),
            Table::Aggregation => Self::table3(),
        }
    }

    /// Sets one option by its flag name (`window-len`, `snr`, ...).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let key = key.trim().to_ascii_lowercase().replace('_', "-");
        let bad = |what: &str| Error::Config(format!("invalid {what} `{value}`"));
        match key.as_str() {
            "n" => self.n = value.parse().map_err(|_| bad("n"))?,
            "snr" => {
                self.snrs = split_list(value)
                    .map(|s| s.parse::<f64>().map_err(|_| bad("snr")))
                    .collect::<Result<_>>()?
            }
            "runs" => self.runs = value.parse().map_err(|_| bad("runs"))?,
            "seed" => self.seed = value.parse().map_err(|_| bad("seed"))?,
            "ridge" => self.ridge = value.parse().map_err(|_| bad("ridge"))?,
            "hop" => self.lattice.hop = value.parse().map_err(|_| bad("hop"))?,
            "channels" => self.lattice.channels = value.parse().map_err(|_| bad("channels"))?,
            "window-len" => self.lattice.window_len = value.parse().map_err(|_| bad("window-len"))?,
            "haar-coarsest" => self.haar_coarsest = value.parse().map_err(|_| bad("haar-coarsest"))?,
            "out" => self.out = Some(PathBuf::from(value)),
            "metric" => self.metric = value.parse()?,
            "gain-mode" => self.gain_mode = parse_gain_mode(value)?,
            "emp-i" => {
                self.clip_emp_i = match value.to_ascii_lowercase().as_str() {
                    "raw" => false,
                    "clip" => true,
                    _ => return Err(bad("emp-i (raw or clip)")),
                }
            }
            "timing" => self.timing = parse_bool(value).ok_or_else(|| bad("timing"))?,
            "parallel" => self.parallel = parse_bool(value).ok_or_else(|| bad("parallel"))?,
            "signals" => {
                self.signals = split_list(value)
                    .map(|s| s.parse().map(SignalSource::Synthetic))
                    .collect::<Result<_>>()
                    .map_err(|e| Error::Config(e.to_string()))?
            }
            "estimators" => self.estimators = split_list(value).map(str::parse).collect::<Result<_>>()?,
            "wav" => {
                self.signals = vec![SignalSource::Wav { path: PathBuf::from(value), offset: 0, length: None }]
            }
            "offset" | "length" => {
                let v: usize = value.parse().map_err(|_| bad(&key))?;
                for s in &mut self.signals {
                    if let SignalSource::Wav { offset, length, .. } = s {
                        if key == "offset" {
                            *offset = v;
                        } else {
                            *length = Some(v);
                        }
                    }
                }
            }
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Applies a `key = value` file; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        // `wav` must precede `offset`/`length` so they attach to it.
        let mut entries = parse_key_values(text)?;
        entries.sort_by_key(|(k, _)| k != "wav");
        for (k, v) in entries {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        if self.snrs.is_empty() || self.snrs.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::Config("snr values must be positive".into()));
        }
        if self.signals.is_empty() {
            return Err(Error::Config("no signals selected".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("no estimators selected".into()));
        }
        if !(self.ridge >= 0.0) {
            return Err(Error::Config("ridge must be nonnegative".into()));
        }
        let frame_table = self.table != Table::Aggregation;
        if let Some(e) = self.estimators.iter().find(|e| e.uses_frame() != frame_table) {
            return Err(Error::Config(format!("estimator {e} does not belong to this table")));
        }
        if !frame_table {
            if !self.n.is_power_of_two() || self.n < 64 {
                return Err(Error::Config(format!(
                    "basis table needs a power-of-two n >= 64, got {}",
                    self.n
                )));
            }
            let depth = self.n.trailing_zeros();
            if self.haar_coarsest >= depth {
                return Err(Error::Config(format!(
                    "haar-coarsest must be below log2(n) = {depth}, got {}",
                    self.haar_coarsest
                )));
            }
        }
        Ok(())
    }
}

fn split_list(s: &str) -> impl Iterator<Item = &str> {
    s.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Some(true),
        "0" | "false" | "no" | "off" => Some(false),
        _ => None,
    }
}

/// Parses `key = value` lines, skipping blanks and `#` comments.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
        out.push((k.trim().to_ascii_lowercase().replace('_', "-"), v.trim().to_string()));
    }
    Ok(out)
}

/// Sample mean and standard deviation of a Monte-Carlo error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McStats {
    pub mean: f64,
    /// Sample standard deviation across runs (`n − 1` denominator, 0 for one run).
    pub std: f64,
    pub runs: usize,
}

impl McStats {
    /// Summarizes values in their given order.
    pub fn from_values(values: &[f64]) -> Self {
        let runs = values.len();
        let mean = values.iter().sum::<f64>() / runs as f64;
        let std = if runs > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (runs - 1) as f64).sqrt()
        } else {
            0.0
        };
        McStats { mean, std, runs }
    }

    pub fn standard_error(&self) -> f64 {
        self.std / (self.runs as f64).sqrt()
    }
}

/// Evaluates `task(r)` for `r = 0..runs`, in parallel if asked, returning the
/// results in replicate order. The first failing replicate (by index) wins.
pub fn run_replicates<T, F>(runs: usize, parallel: bool, task: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    let results: Vec<Result<T>> = if parallel {
        (0..runs).into_par_iter().map(&task).collect()
    } else {
        (0..runs).map(&task).collect()
    };
    results
        .into_iter()
        .enumerate()
        .map(|(index, r)| r.map_err(|e| Error::Replicate { index, source: Box::new(e) }))
        .collect()
}

/// Monte-Carlo error of `estimator` on `x_r = f + σz_r`, `σ = std(f)/snr`,
/// with `z_r` drawn from replicate stream `r` of `seed`.
pub fn mc_risk<F>(
    f: &DVector<f64>,
    snr: f64,
    runs: usize,
    seed: u64,
    metric: Metric,
    parallel: bool,
    estimator: F,
) -> Result<McStats>
where
    F: Fn(&Observation) -> Result<DVector<f64>> + Sync,
{
    if runs == 0 {
        return Err(Error::Config("runs must be at least 1".into()));
    }
    let errors = run_replicates(runs, parallel, |r| {
        let obs = add_noise_stream(f, snr, seed, r as u64)?;
        Ok(metric.eval(&estimator(&obs)?, f))
    })?;
    Ok(McStats::from_values(&errors))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub signal: String,
    pub snr: f64,
    pub estimator: Estimator,
    pub mean_error: f64,
    pub std_error: f64,
    pub runs: usize,
    /// Mean weights, for aggregation estimators.
    pub weights: Option<Vec<f64>>,
    /// Mean wall-clock milliseconds per run, when timing is enabled.
    pub wall_ms: Option<f64>,
    /// Failed ordering checks, if any.
    pub status: Option<String>,
}

impl ResultRow {
    pub fn standard_error(&self) -> f64 {
        self.std_error / (self.runs as f64).sqrt()
    }
}

struct Outcome {
    error: f64,
    weights: Option<DVector<f64>>,
    ms: f64,
}

fn timed<T>(task: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let t0 = Instant::now();
    let v = task()?;
    Ok((v, t0.elapsed().as_secs_f64() * 1e3))
}

fn summarize(
    cfg: &ExperimentConfig,
    signal: &str,
    snr: f64,
    setup_ms: &[f64],
    replicates: Vec<Vec<Outcome>>,
) -> Vec<ResultRow> {
    let runs = replicates.len();
    cfg.estimators
        .iter()
        .enumerate()
        .map(|(k, &est)| {
            let errors: Vec<f64> = replicates.iter().map(|r| r[k].error).collect();
            let stats = McStats::from_values(&errors);
            let weights = if est.has_weights() {
                let mut sum: Option<DVector<f64>> = None;
                for r in &replicates {
                    if let Some(w) = &r[k].weights {
                        sum = Some(match sum {
                            Some(s) => s + w,
                            None => w.clone(),
                        });
                    }
                }
                sum.map(|s| (s / runs as f64).iter().copied().collect())
            } else {
                None
            };
            let wall_ms = cfg.timing.then(|| {
                setup_ms[k] / runs as f64 + replicates.iter().map(|r| r[k].ms).sum::<f64>() / runs as f64
            });
            ResultRow {
                signal: signal.to_string(),
                snr,
                estimator: est,
                mean_error: stats.mean,
                std_error: stats.std,
                runs,
                weights,
                wall_ms,
                status: None,
            }
        })
        .collect()
}

/// Per-(signal, SNR) quantities shared by all replicates on a frame.
struct FramePlan<'a> {
    frame: &'a FrameOperator,
    cfg: &'a ExperimentConfig,
    sigma: f64,
    ideal_u: Option<DVector<f64>>,
    ideal_i: Option<DVector<f64>>,
    visu_u: f64,
    visu_i: f64,
}

impl<'a> FramePlan<'a> {
    fn new(
        frame: &'a FrameOperator,
        cfg: &'a ExperimentConfig,
        clean: Option<&DVector<f64>>,
        sigma: f64,
    ) -> Result<(Self, Vec<f64>)> {
        let theta = clean.map(|f| frame.analyze(f)).transpose()?;
        let mut setup = vec![0.0; cfg.estimators.len()];
        let mut ideal_u = None;
        let mut ideal_i = None;
        for (k, e) in cfg.estimators.iter().enumerate() {
            let theta = match (e, &theta) {
                (Estimator::IdealU | Estimator::IdealI, None) => {
                    return Err(Error::Config(format!("{e} needs the clean signal")))
                }
                (_, Some(t)) => t,
                (_, None) => continue,
            };
            match e {
                Estimator::IdealU => {
                    let (g, ms) = timed(|| ideal_gain_with(frame, theta, sigma, cfg.ridge, cfg.gain_mode))?;
                    ideal_u = Some(g.gamma);
                    setup[k] = ms;
                }
                Estimator::IdealI => {
                    let (g, ms) = timed(|| Ok(ideal_gain_diag(theta, sigma)))?;
                    ideal_i = Some(g.gamma);
                    setup[k] = ms;
                }
                _ => {}
            }
        }
        let big_n = frame.big_n();
        let plan = FramePlan {
            frame,
            cfg,
            sigma,
            ideal_u,
            ideal_i,
            visu_u: universal_threshold(sigma, big_n, UniversalMode::Frame)?,
            visu_i: universal_threshold(sigma, big_n, UniversalMode::Orthonormal)?,
        };
        Ok((plan, setup))
    }

    fn estimate(&self, est: Estimator, y: &DVector<f64>) -> Result<DVector<f64>> {
        let frame = self.frame;
        let sigma = self.sigma;
        let n = y.len();
        let thresholded = |rule: ShrinkRule| frame.synthesize(&rule.apply(y)?);
        match est {
            Estimator::IdealU => apply_gain(frame, self.ideal_u.as_ref().expect("planned"), y),
            Estimator::IdealI => apply_gain(frame, self.ideal_i.as_ref().expect("planned"), y),
            Estimator::EmpU => {
                let g = empirical_gain_with(frame, y, sigma, self.cfg.ridge, self.cfg.gain_mode)?;
                apply_gain(frame, &g.gamma, y)
            }
            Estimator::EmpI if self.cfg.clip_emp_i => {
                apply_gain(frame, &empirical_wiener_ridge(y, sigma, self.cfg.ridge).gamma, y)
            }
            Estimator::EmpI => apply_gain(frame, &empirical_wiener_raw(y, sigma, self.cfg.ridge), y),
            Estimator::SoftU => {
                let (t, _) = optimize_soft_global(frame, y, sigma, SoftMode::FrameAware)?;
                thresholded(ShrinkRule::soft_uniform(t, n))
            }
            Estimator::SoftI => {
                let (t, _) = optimize_soft_global(frame, y, sigma, SoftMode::Orthonormal)?;
                thresholded(ShrinkRule::soft_uniform(t, n))
            }
            Estimator::VisuU => thresholded(ShrinkRule::hard_uniform(self.visu_u, n)),
            Estimator::VisuI => thresholded(ShrinkRule::hard_uniform(self.visu_i, n)),
            Estimator::GreedyHard => {
                let (g, _, _) = greedy_hard(frame, y, sigma)?;
                apply_gain(frame, &g.gamma, y)
            }
            other => Err(Error::Config(format!("estimator {other} needs a basis collection"))),
        }
    }
}

fn frame_rows(
    cfg: &ExperimentConfig,
    frame: &FrameOperator,
    label: &str,
    f: &DVector<f64>,
    snr: f64,
) -> Result<Vec<ResultRow>> {
    let sigma = add_noise_stream(f, snr, cfg.seed, 0)?.sigma;
    let (plan, setup) = FramePlan::new(frame, cfg, Some(f), sigma)?;
    let replicates = run_replicates(cfg.runs, cfg.parallel, |r| {
        let obs = add_noise_stream(f, snr, cfg.seed, r as u64)?;
        let y = frame.analyze(&obs.x)?;
        cfg.estimators
            .iter()
            .map(|&e| {
                let (f_hat, ms) = timed(|| plan.estimate(e, &y))?;
                Ok(Outcome { error: cfg.metric.eval(&f_hat, f), weights: None, ms })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(summarize(cfg, label, snr, &setup, replicates))
}

/// Cosine and Haar bases of length `n`, Haar down to `2^coarsest` scaling
/// coefficients.
pub fn cosine_haar(n: usize, coarsest: u32) -> Result<BasisCollection> {
    let depth = n.trailing_zeros();
    if coarsest >= depth {
        return Err(Error::InvalidLength(format!("coarsest level {coarsest} needs n > 2^{coarsest}")));
    }
    ortho_collection(vec![dct_basis(n)?, haar_basis(n, depth - coarsest)?])
}

/// Estimate of one basis-collection estimator, with its weights.
fn basis_estimate(
    b: &BasisCollection,
    est: &BlockEstimate,
    e: Estimator,
    sigma: f64,
) -> Result<(DVector<f64>, Option<DVector<f64>>)> {
    let weighted = |w: WeightVector| -> Result<_> {
        let f_hat = reconstruct_weighted(b, est, &w)?;
        Ok((f_hat, Some(w.lambda)))
    };
    match e {
        Estimator::Cosine => Ok((b.block(0).tr_mul(&est.theta_hat[0]), None)),
        Estimator::Haar => Ok((b.block(1).tr_mul(&est.theta_hat[1]), None)),
        Estimator::Average => weighted(WeightVector::uniform(b.m())),
        Estimator::AggDi => weighted(optimize_weights_di(b, est, sigma)?.weights),
        Estimator::AggExp => {
            let dd = delta_dd(b, est, &ExpWeightConfig::default_for(b.m(), sigma), sigma)?;
            weighted(dd.weights)
        }
        other => Err(Error::Config(format!("estimator {other} needs a single frame"))),
    }
}

fn basis_rows(
    cfg: &ExperimentConfig,
    b: &BasisCollection,
    label: &str,
    f: &DVector<f64>,
    snr: f64,
) -> Result<Vec<ResultRow>> {
    let n = b.n();
    let sigma = add_noise_stream(f, snr, cfg.seed, 0)?.sigma;
    let t = universal_threshold(sigma, n, UniversalMode::Orthonormal)?;
    let rules = vec![ShrinkRule::soft_uniform(t, n); b.m()];
    let replicates = run_replicates(cfg.runs, cfg.parallel, |r| {
        let obs = add_noise_stream(f, snr, cfg.seed, r as u64)?;
        let est = BlockEstimate::from_rules(b.analyze(&obs.x)?, &rules)?;
        cfg.estimators
            .iter()
            .map(|&e| {
                let ((f_hat, weights), ms) = timed(|| basis_estimate(b, &est, e, sigma))?;
                Ok(Outcome { error: cfg.metric.eval(&f_hat, f), weights, ms })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(summarize(cfg, label, snr, &vec![0.0; cfg.estimators.len()], replicates))
}

/// Denoises one observation `x` with noise level `sigma` using `estimator`
/// and the frame or bases described by `cfg` (length `x.len()`). Oracle
/// estimators need the clean signal.
pub fn denoise(
    cfg: &ExperimentConfig,
    estimator: Estimator,
    x: &DVector<f64>,
    sigma: f64,
    clean: Option<&DVector<f64>>,
) -> Result<DVector<f64>> {
    if !(sigma > 0.0) {
        return Err(Error::Config(format!("sigma must be positive, got {sigma}")));
    }
    let n = x.len();
    if estimator.uses_frame() {
        let frame = gabor_frame_with(n, cfg.lattice)?;
        let single = ExperimentConfig { estimators: vec![estimator], ..cfg.clone() };
        let (plan, _) = FramePlan::new(&frame, &single, clean, sigma)?;
        plan.estimate(estimator, &frame.analyze(x)?)
    } else {
        if !n.is_power_of_two() {
            return Err(Error::Config(format!("basis estimators need a power-of-two length, got {n}")));
        }
        let b = cosine_haar(n, cfg.haar_coarsest)?;
        let t = universal_threshold(sigma, n, UniversalMode::Orthonormal)?;
        let rules = vec![ShrinkRule::soft_uniform(t, n); b.m()];
        let est = BlockEstimate::from_rules(b.analyze(x)?, &rules)?;
        Ok(basis_estimate(&b, &est, estimator, sigma)?.0)
    }
}

fn run_frame_table(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let frame = gabor_frame_with(cfg.n, cfg.lattice)?;
    let mut rows = Vec::new();
    for source in &cfg.signals {
        let f = source.load(cfg.n)?;
        for &snr in &cfg.snrs {
            rows.extend(frame_rows(cfg, &frame, &source.label(), &f, snr)?);
        }
    }
    Ok(rows)
}

fn expect_table(cfg: &ExperimentConfig, table: Table) -> Result<()> {
    if cfg.table != table {
        return Err(Error::Config(format!("configuration is for {:?}, not {table:?}", cfg.table)));
    }
    Ok(())
}

/// Diagonal shrinkage estimators on the Gabor frame, with ordering checks
/// `IDEAL_U < IDEAL_I` everywhere and `EMP_U < EMP_I` at SNR 1 and 3.
pub fn run_table1(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    expect_table(cfg, Table::Shrinkage)?;
    let mut rows = run_frame_table(cfg)?;
    check_orderings(Table::Shrinkage, &mut rows);
    Ok(rows)
}

/// Thresholding estimators on the Gabor frame, with ordering checks
/// `SOFT_U < SOFT_I < VISU_U ≤ VISU_I`.
pub fn run_table2(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    expect_table(cfg, Table::Thresholding)?;
    let mut rows = run_frame_table(cfg)?;
    check_orderings(Table::Thresholding, &mut rows);
    Ok(rows)
}

/// Cosine/Haar aggregation with the check that `AGG_DI` is no worse than the
/// best single basis or the average, up to two standard errors.
pub fn run_table3(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    expect_table(cfg, Table::Aggregation)?;
    cfg.validate()?;
    let b = cosine_haar(cfg.n, cfg.haar_coarsest)?;
    let mut rows = Vec::new();
    for source in &cfg.signals {
        let f = source.load(cfg.n)?;
        for &snr in &cfg.snrs {
            rows.extend(basis_rows(cfg, &b, &source.label(), &f, snr)?);
        }
    }
    check_orderings(Table::Aggregation, &mut rows);
    Ok(rows)
}

/// Runs whichever table `cfg` describes.
pub fn run_table(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    match cfg.table {
        Table::Shrinkage => run_table1(cfg),
        Table::Thresholding => run_table2(cfg),
        Table::Aggregation => run_table3(cfg),
    }
}

fn flag(rows: &mut [ResultRow], idx: usize, msg: String) {
    let status = rows[idx].status.get_or_insert_with(String::new);
    if !status.is_empty() {
        status.push_str("; ");
    }
    status.push_str(&msg);
}

/// Marks rows whose group violates the table's expected orderings.
pub fn check_orderings(table: Table, rows: &mut [ResultRow]) {
    let mut groups: Vec<(String, u64)> = Vec::new();
    for r in rows.iter() {
        let key = (r.signal.clone(), r.snr.to_bits());
        if !groups.contains(&key) {
            groups.push(key);
        }
    }
    for (signal, snr_bits) in groups {
        let snr = f64::from_bits(snr_bits);
        let find = |rows: &[ResultRow], e: Estimator| {
            rows.iter().position(|r| r.signal == signal && r.snr.to_bits() == snr_bits && r.estimator == e)
        };
        let less = |rows: &mut [ResultRow], a: Estimator, b: Estimator, strict: bool| {
            if let (Some(i), Some(j)) = (find(rows, a), find(rows, b)) {
                let ok = if strict {
                    rows[i].mean_error < rows[j].mean_error
                } else {
                    rows[i].mean_error <= rows[j].mean_error
                };
                if !ok {
                    flag(rows, i, format!("{a} {} {b} violated", if strict { "<" } else { "<=" }));
                }
            }
        };
        match table {
            Table::Shrinkage => {
                less(rows, Estimator::IdealU, Estimator::IdealI, true);
                if snr == 1.0 || snr == 3.0 {
                    less(rows, Estimator::EmpU, Estimator::EmpI, true);
                }
            }
            Table::Thresholding => {
                less(rows, Estimator::SoftU, Estimator::SoftI, true);
                less(rows, Estimator::SoftI, Estimator::VisuU, true);
                less(rows, Estimator::VisuU, Estimator::VisuI, false);
            }
            Table::Aggregation => {
                let Some(agg) = find(rows, Estimator::AggDi) else { continue };
                for other in [Estimator::Cosine, Estimator::Haar, Estimator::Average] {
                    if let Some(j) = find(rows, other) {
                        let tol = 2.0 * rows[j].standard_error();
                        if rows[agg].mean_error > rows[j].mean_error + tol {
                            flag(rows, agg, format!("AGG_DI <= {other} + 2se violated"));
                        }
                    }
                }
            }
        }
    }
}

/// `%g`-style formatting with `digits` significant digits.
pub fn format_sig(v: f64, digits: usize) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, v);
    let (mant, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if exp < -4 || exp >= digits as i32 {
        format!("{}e{}{:02}", trim(mant), if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        trim(&format!("{:.*}", (digits as i32 - 1 - exp) as usize, v))
    }
}

const SIG_DIGITS: usize = 6;

pub const CSV_HEADER: [&str; 7] =
    ["signal", "snr", "estimator", "mean_error", "std_error", "weights", "wall_ms"];

/// CSV text for `rows`; a `status` column is added only if a check failed.
pub fn csv_string(rows: &[ResultRow]) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::Config("no result rows".into()));
    }
    let with_status = rows.iter().any(|r| r.status.is_some());
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    let mut header: Vec<&str> = CSV_HEADER.to_vec();
    if with_status {
        header.push("status");
    }
    w.write_record(&header).map_err(csv_err)?;
    for r in rows {
        let weights = r
            .weights
            .as_ref()
            .map(|w| w.iter().map(|v| format_sig(*v, SIG_DIGITS)).collect::<Vec<_>>().join(" "))
            .unwrap_or_default();
        let mut rec = vec![
            r.signal.clone(),
            format_sig(r.snr, SIG_DIGITS),
            r.estimator.to_string(),
            format_sig(r.mean_error, SIG_DIGITS),
            format_sig(r.std_error, SIG_DIGITS),
            weights,
            r.wall_ms.map(|v| format_sig(v, SIG_DIGITS)).unwrap_or_default(),
        ];
        if with_status {
            rec.push(r.status.clone().unwrap_or_default());
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("CSV is UTF-8"))
}

pub fn emit_csv(rows: &[ResultRow], path: impl AsRef<Path>) -> Result<()> {
    let text = csv_string(rows)?;
    fs::write(path, text)?;
    Ok(())
}

/// Whitespace-separated `snr mean std` series, one block per
/// (estimator, signal), blocks separated by two blank lines.
pub fn plotdata_string(rows: &[ResultRow]) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::Config("no result rows".into()));
    }
    let mut keys: Vec<(Estimator, String)> = Vec::new();
    for r in rows {
        let k = (r.estimator, r.signal.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let mut out = Vec::new();
    for (b, (est, signal)) in keys.iter().enumerate() {
        if b > 0 {
            out.extend_from_slice(b"\n\n");
        }
        writeln!(out, "# estimator={est} signal={signal}")?;
        writeln!(out, "# snr mean_error std_error")?;
        for r in rows.iter().filter(|r| r.estimator == *est && r.signal == *signal) {
            writeln!(
                out,
                "{} {} {}",
                format_sig(r.snr, SIG_DIGITS),
                format_sig(r.mean_error, SIG_DIGITS),
                format_sig(r.std_error, SIG_DIGITS)
            )?;
        }
    }
    Ok(String::from_utf8(out).expect("plot data is UTF-8"))
}

pub fn emit_plotdata(rows: &[ResultRow], path: impl AsRef<Path>) -> Result<()> {
    let text = plotdata_string(rows)?;
    fs::write(path, text)?;
    Ok(())
}
