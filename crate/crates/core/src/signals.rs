//! Test signals, the additive Gaussian noise model and WAV/CSV ingestion.
//!
//! All clean signals are scaled to unit sample standard deviation, so the
//! noise level for a signal-to-noise ratio `snr` is simply `σ = 1/snr`.

use std::f64::consts::PI;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::frame::FrameOperator;

/// Synthetic test signals (ports of the WaveLab `MakeSignal` generators
/// where one exists).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SignalName {
    WernerSorrows,
    MishMash,
    Window,
    LoSine,
    WindowPlusLoSine,
}

impl SignalName {
    pub const ALL: [SignalName; 5] = [
        SignalName::WernerSorrows,
        SignalName::MishMash,
        SignalName::Window,
        SignalName::LoSine,
        SignalName::WindowPlusLoSine,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SignalName::WernerSorrows => "WernerSorrows",
            SignalName::MishMash => "MishMash",
            SignalName::Window => "Window",
            SignalName::LoSine => "LoSine",
            SignalName::WindowPlusLoSine => "Window+LoSine",
        }
    }
}

impl fmt::Display for SignalName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SignalName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String =
            s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        match key.as_str() {
            "wernersorrows" => Ok(SignalName::WernerSorrows),
            "mishmash" => Ok(SignalName::MishMash),
            "window" => Ok(SignalName::Window),
            "losine" => Ok(SignalName::LoSine),
            "windowlosine" | "windowpluslosine" => Ok(SignalName::WindowPlusLoSine),
            _ => Err(Error::UnknownSignal(s.to_string())),
        }
    }
}

fn sample_grid(n: usize) -> impl Iterator<Item = f64> {
    let nf = n as f64;
    (1..=n).map(move |i| i as f64 / nf)
}

fn lo_sine(n: usize) -> Vec<f64> {
    let nf = n as f64;
    sample_grid(n).map(|t| (PI * (nf * 0.3333) * t).sin()).collect()
}

/// Boxcar on `0.35 < t ≤ 0.55`; its edges fall off the dyadic grid.
fn window(n: usize) -> Vec<f64> {
    sample_grid(n).map(|t| if t > 0.35 && t <= 0.55 { 1.0 } else { 0.0 }).collect()
}

/// Boxcar height relative to the unit-amplitude sinusoid in `Window+LoSine`.
pub const WINDOW_MIX_AMPLITUDE: f64 = 3.5;

fn mish_mash(n: usize) -> Vec<f64> {
    let nf = n as f64;
    sample_grid(n)
        .map(|t| {
            ((PI / 3.0) * t * (nf * t * t)).sin()
                + (PI * (nf * 0.6902) * t).sin()
                + (PI * t * (nf * 0.125 * t)).sin()
        })
        .collect()
}

const BUMP_POS: [f64; 11] = [0.1, 0.13, 0.15, 0.23, 0.25, 0.40, 0.44, 0.65, 0.76, 0.78, 0.81];
const BUMP_HGT: [f64; 11] = [4.0, 5.0, 3.0, 4.0, 5.0, 4.2, 2.1, 4.3, 3.1, 5.1, 4.2];
const BUMP_WTH: [f64; 11] = [0.005, 0.005, 0.006, 0.01, 0.01, 0.03, 0.01, 0.01, 0.005, 0.008, 0.005];

fn werner_sorrows(n: usize) -> Vec<f64> {
    let nf = n as f64;
    sample_grid(n)
        .map(|t| {
            let mut s = (PI * t * (nf / 2.0 * t * t)).sin();
            s += (PI * (nf * 0.6902) * t).sin();
            s += (PI * t * (nf * t)).sin();
            for ((p, h), w) in BUMP_POS.iter().zip(&BUMP_HGT).zip(&BUMP_WTH) {
                s += h / (1.0 + ((t - p) / w).abs()).powi(4);
            }
            s
        })
        .collect()
}

/// Sample standard deviation (`n − 1` denominator).
pub fn sample_std(v: &[f64]) -> f64 {
    let n = v.len();
    if n < 2 {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    let ss: f64 = v.iter().map(|x| (x - mean) * (x - mean)).sum();
    (ss / (n - 1) as f64).sqrt()
}

/// Divides by the sample standard deviation.
pub fn normalize_unit_std(v: &mut [f64]) -> Result<()> {
    let s = sample_std(v);
    if !(s > 0.0) {
        return Err(Error::DegenerateSignal);
    }
    v.iter_mut().for_each(|x| *x /= s);
    Ok(())
}

/// Generates a named test signal of length `n`, scaled to unit sample
/// standard deviation.
pub fn make_signal(name: SignalName, n: usize) -> Result<DVector<f64>> {
    if n < 64 {
        return Err(Error::InvalidLength(format!("test signals need n >= 64, got {n}")));
    }
    let mut v = match name {
        SignalName::WernerSorrows => werner_sorrows(n),
        SignalName::MishMash => mish_mash(n),
        SignalName::Window => window(n),
        SignalName::LoSine => lo_sine(n),
        SignalName::WindowPlusLoSine => {
            window(n).into_iter().zip(lo_sine(n)).map(|(a, b)| WINDOW_MIX_AMPLITUDE * a + b).collect()
        }
    };
    normalize_unit_std(&mut v)?;
    Ok(DVector::from_vec(v))
}

/// [`make_signal`] by name string.
pub fn make_signal_named(name: &str, n: usize) -> Result<DVector<f64>> {
    make_signal(name.parse()?, n)
}

/// Noise generator for replicate `stream` under master `seed`.
///
/// ChaCha is a counter-mode generator, so every `(seed, stream)` pair is an
/// independent, reproducible sequence regardless of evaluation order.
pub fn noise_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `n` standard normal draws from `(seed, stream)`.
pub fn standard_normal(n: usize, seed: u64, stream: u64) -> DVector<f64> {
    let mut rng = noise_rng(seed, stream);
    DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng))
}

/// Clean signal, its noisy observation and the noise level.
#[derive(Debug, Clone)]
pub struct Observation {
    pub f: DVector<f64>,
    pub x: DVector<f64>,
    pub sigma: f64,
    pub seed: u64,
    pub stream: u64,
}

/// `x = f + σ z` with `σ = std(f)/snr` and `z` drawn from stream 0 of `seed`.
pub fn add_noise(f: &DVector<f64>, snr: f64, seed: u64) -> Result<Observation> {
    add_noise_stream(f, snr, seed, 0)
}

/// [`add_noise`] drawing from an explicit replicate stream.
pub fn add_noise_stream(f: &DVector<f64>, snr: f64, seed: u64, stream: u64) -> Result<Observation> {
    if !(snr > 0.0) || !snr.is_finite() {
        return Err(Error::Config(format!("snr must be positive, got {snr}")));
    }
    let s = sample_std(f.as_slice());
    if !(s > 0.0) {
        return Err(Error::DegenerateSignal);
    }
    let sigma = s / snr;
    let z = standard_normal(f.len(), seed, stream);
    let x = f + z * sigma;
    Ok(Observation { f: f.clone(), x, sigma, seed, stream })
}

/// Frame coefficients of an observation; `theta` is only filled for oracle
/// estimators.
#[derive(Debug, Clone)]
pub struct CoefficientObservation {
    pub y: DVector<f64>,
    pub theta: Option<DVector<f64>>,
    pub frame_ref: String,
}

impl CoefficientObservation {
    pub fn new(frame: &FrameOperator, obs: &Observation, with_theta: bool) -> Result<Self> {
        let y = frame.analyze(&obs.x)?;
        let theta = if with_theta { Some(frame.analyze(&obs.f)?) } else { None };
        Ok(CoefficientObservation { y, theta, frame_ref: frame.label().to_string() })
    }
}

fn hound_error(e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::Io(io),
        other => Error::UnsupportedFormat(other.to_string()),
    }
}

/// All samples of the first channel of a PCM WAV file, rescaled to `[−1, 1]`.
/// Accepts 16-bit integer and 32-bit float encodings.
pub fn read_wav_samples(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let mut reader = hound::WavReader::open(path).map_err(hound_error)?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .step_by(channels)
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(hound_error)?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .step_by(channels)
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(hound_error)?,
        (fmt, bits) => {
            return Err(Error::UnsupportedFormat(format!(
                "{bits}-bit {fmt:?} samples (need 16-bit int or 32-bit float)"
            )))
        }
    };
    Ok(samples)
}

/// A `length`-sample excerpt starting at `offset`, rescaled to `[−1, 1]` and
/// then to unit sample standard deviation.
pub fn load_wav(path: impl AsRef<Path>, offset: usize, length: usize) -> Result<DVector<f64>> {
    if length == 0 {
        return Err(Error::InvalidLength("excerpt length must be positive".into()));
    }
    let all = read_wav_samples(path)?;
    let end = offset.saturating_add(length);
    if end > all.len() {
        return Err(Error::OutOfRange { start: offset, end, available: all.len() });
    }
    let mut excerpt = all[offset..end].to_vec();
    normalize_unit_std(&mut excerpt)?;
    Ok(DVector::from_vec(excerpt))
}

/// Writes one value per line with 17 significant digits.
pub fn write_signal_csv(path: impl AsRef<Path>, v: &[f64]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for x in v {
        writeln!(out, "{x:.16e}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_signal_csv(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line.parse().map_err(|_| {
            Error::UnsupportedFormat(format!("line {}: `{line}` is not a number", lineno + 1))
        })?;
        out.push(v);
    }
    Ok(out)
}
