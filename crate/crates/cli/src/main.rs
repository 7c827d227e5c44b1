use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use frame_denoise::bench::{
    csv_string, denoise, emit_plotdata, run_table, Estimator, ExperimentConfig, Metric, Table,
};
use frame_denoise::gabor::{gabor_frame_with, GaborLattice};
use frame_denoise::signals::{
    add_noise, load_wav, make_signal, read_signal_csv, write_signal_csv, SignalName,
};
use frame_denoise::Error;

#[derive(Parser)]
#[command(name = "framedenoise", version, about = "Frame-aware denoising and its benchmark tables")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo benchmark tables.
    Bench {
        #[command(subcommand)]
        table: BenchTable,
    },
    /// Denoise one signal with one estimator.
    Denoise(DenoiseArgs),
    /// Frame utilities.
    Frame {
        #[command(subcommand)]
        command: FrameCommand,
    },
}

#[derive(Subcommand)]
enum BenchTable {
    /// Diagonal shrinkage on the Gabor frame (IDEAL/EMP).
    Table1(BenchArgs),
    /// Soft and universal thresholding on the Gabor frame (SOFT/VISU).
    Table2(BenchArgs),
    /// Cosine + Haar aggregation.
    Table3(BenchArgs),
}

#[derive(Args, Default)]
struct LatticeArgs {
    /// Gabor hop size in samples.
    #[arg(long)]
    hop: Option<usize>,
    /// Number of Gabor frequency channels.
    #[arg(long)]
    channels: Option<usize>,
    /// Hamming window length in samples.
    #[arg(long = "window-len")]
    window_len: Option<usize>,
}

#[derive(Args)]
struct BenchArgs {
    /// Key-value configuration file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Signal length.
    #[arg(long)]
    n: Option<usize>,
    /// Comma-separated SNR list.
    #[arg(long)]
    snr: Option<String>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Ridge ζ of the empirical gain systems.
    #[arg(long)]
    ridge: Option<f64>,
    #[command(flatten)]
    lattice: LatticeArgs,
    /// CSV output path (stdout if absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Plot-data output path.
    #[arg(long)]
    plot: Option<PathBuf>,
    /// relative-squared, raw-l2 or squared-l2.
    #[arg(long)]
    metric: Option<String>,
    /// Comma-separated signal names.
    #[arg(long)]
    signals: Option<String>,
    /// Comma-separated estimator names.
    #[arg(long)]
    estimators: Option<String>,
    /// Use a WAV excerpt as the clean signal.
    #[arg(long)]
    wav: Option<PathBuf>,
    #[arg(long)]
    offset: Option<usize>,
    #[arg(long)]
    length: Option<usize>,
    /// box (exact [0,1] constraint) or clip.
    #[arg(long = "gain-mode")]
    gain_mode: Option<String>,
    /// EMP_I gains: raw (ridge-stabilized, unclipped) or clip.
    #[arg(long = "emp-i")]
    emp_i: Option<String>,
    /// Coarsest Haar level (table 3).
    #[arg(long = "haar-coarsest")]
    haar_coarsest: Option<u32>,
    /// Fill the wall_ms column (output is then not reproducible).
    #[arg(long)]
    timing: bool,
    /// Run replicates on one thread.
    #[arg(long)]
    serial: bool,
}

impl BenchArgs {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let mut v = Vec::new();
        let mut put = |k: &'static str, val: Option<String>| {
            if let Some(val) = val {
                v.push((k, val));
            }
        };
        // `wav` first so `offset`/`length` attach to it.
        put("wav", self.wav.as_ref().map(|p| p.display().to_string()));
        put("n", self.n.map(|x| x.to_string()));
        put("snr", self.snr.clone());
        put("runs", self.runs.map(|x| x.to_string()));
        put("seed", self.seed.map(|x| x.to_string()));
        put("ridge", self.ridge.map(|x| x.to_string()));
        put("hop", self.lattice.hop.map(|x| x.to_string()));
        put("channels", self.lattice.channels.map(|x| x.to_string()));
        put("window-len", self.lattice.window_len.map(|x| x.to_string()));
        put("out", self.out.as_ref().map(|p| p.display().to_string()));
        put("metric", self.metric.clone());
        put("signals", self.signals.clone());
        put("estimators", self.estimators.clone());
        put("offset", self.offset.map(|x| x.to_string()));
        put("length", self.length.map(|x| x.to_string()));
        put("gain-mode", self.gain_mode.clone());
        put("emp-i", self.emp_i.clone());
        put("haar-coarsest", self.haar_coarsest.map(|x| x.to_string()));
        if self.timing {
            put("timing", Some("true".into()));
        }
        if self.serial {
            put("parallel", Some("false".into()));
        }
        v
    }
}

#[derive(Args)]
struct DenoiseArgs {
    /// Estimator name (e.g. SOFT_U, EMP_U, AGG_DI).
    #[arg(long)]
    estimator: String,
    /// Synthetic clean signal; noise is added at --snr.
    #[arg(long, conflicts_with_all = ["wav", "input"])]
    signal: Option<String>,
    /// SNR for --signal.
    #[arg(long, default_value_t = 3.0)]
    snr: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Signal length for --signal.
    #[arg(long, default_value_t = 1280)]
    n: usize,
    /// Noisy WAV excerpt to denoise (needs --sigma).
    #[arg(long, conflicts_with = "input")]
    wav: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    offset: usize,
    #[arg(long)]
    length: Option<usize>,
    /// Noisy signal as CSV, one value per line (needs --sigma).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Noise standard deviation of --wav/--input.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    ridge: Option<f64>,
    #[command(flatten)]
    lattice: LatticeArgs,
    /// Estimate output CSV (stdout if absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum FrameCommand {
    /// Print frame bounds, tightness and Tr[U U⁻] of a Gabor frame.
    Inspect {
        #[arg(long, default_value_t = 1280)]
        n: usize,
        #[command(flatten)]
        lattice: LatticeArgs,
        /// Save the analysis matrix to this path.
        #[arg(long)]
        save: Option<PathBuf>,
    },
}

fn lattice(args: &LatticeArgs) -> GaborLattice {
    let d = GaborLattice::default();
    GaborLattice {
        window_len: args.window_len.unwrap_or(d.window_len),
        hop: args.hop.unwrap_or(d.hop),
        channels: args.channels.unwrap_or(d.channels),
    }
}

fn bench(table: Table, args: &BenchArgs) -> Result<(), Error> {
    let mut cfg = ExperimentConfig::for_table(table);
    if let Some(path) = &args.config {
        cfg.apply_text(&fs::read_to_string(path)?)?;
    }
    for (k, v) in args.overrides() {
        cfg.set(k, &v)?;
    }
    let rows = run_table(&cfg)?;
    let text = csv_string(&rows)?;
    match &cfg.out {
        Some(path) => fs::write(path, &text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    if let Some(path) = &args.plot {
        emit_plotdata(&rows, path)?;
    }
    for r in rows.iter().filter(|r| r.status.is_some()) {
        eprintln!(
            "ordering check failed: {} snr={} {}: {}",
            r.signal,
            r.snr,
            r.estimator,
            r.status.as_deref().unwrap_or_default()
        );
    }
    Ok(())
}

fn run_denoise(args: &DenoiseArgs) -> Result<(), Error> {
    let estimator: Estimator = args.estimator.parse()?;
    let mut cfg = ExperimentConfig::for_table(if estimator.uses_frame() {
        Table::Shrinkage
    } else {
        Table::Aggregation
    });
    cfg.lattice = lattice(&args.lattice);
    if let Some(r) = args.ridge {
        cfg.ridge = r;
    }
    let (x, sigma, clean) = if let Some(name) = &args.signal {
        let f = make_signal(name.parse::<SignalName>()?, args.n)?;
        let obs = add_noise(&f, args.snr, args.seed)?;
        (obs.x, obs.sigma, Some(f))
    } else {
        let sigma =
            args.sigma.ok_or_else(|| Error::Config("--sigma is required with --wav or --input".into()))?;
        let x = if let Some(path) = &args.wav {
            let len = match args.length {
                Some(l) => l,
                None => frame_denoise::signals::read_wav_samples(path)?.len().saturating_sub(args.offset),
            };
            load_wav(path, args.offset, len)?
        } else if let Some(path) = &args.input {
            nalgebra::DVector::from_vec(read_signal_csv(path)?)
        } else {
            return Err(Error::Config("one of --signal, --wav or --input is required".into()));
        };
        (x, sigma, None)
    };
    let f_hat = denoise(&cfg, estimator, &x, sigma, clean.as_ref())?;
    if let Some(f) = &clean {
        eprintln!(
            "{estimator}: relative squared error {:.6} (noisy input {:.6})",
            Metric::RelativeSquared.eval(&f_hat, f),
            Metric::RelativeSquared.eval(&x, f)
        );
    }
    match &args.out {
        Some(path) => write_signal_csv(path, f_hat.as_slice())?,
        None => {
            let mut out = std::io::stdout().lock();
            for v in f_hat.iter() {
                writeln!(out, "{v:.16e}")?;
            }
        }
    }
    Ok(())
}

fn inspect(n: usize, lat: &LatticeArgs, save: Option<&PathBuf>) -> Result<(), Error> {
    let frame = gabor_frame_with(n, lattice(lat))?;
    let (lo, hi) = frame.bounds();
    println!("frame        {}", frame.label());
    println!("N x n        {} x {}", frame.big_n(), frame.n());
    println!("bounds       {lo:.12} {hi:.12}");
    match frame.alpha() {
        Some(a) => println!("tight        yes (alpha = {a:.12})"),
        None => println!("tight        no"),
    }
    println!("tr(U U-)     {:.12}", frame.trace_u_uminus());
    println!("nnz(U)       {}", frame.u_sparse().nnz());
    if let Some(path) = save {
        frame.save(path)?;
        println!("saved        {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Bench { table } => match table {
            BenchTable::Table1(a) => bench(Table::Shrinkage, a),
            BenchTable::Table2(a) => bench(Table::Thresholding, a),
            BenchTable::Table3(a) => bench(Table::Aggregation, a),
        },
        Command::Denoise(a) => run_denoise(a),
        Command::Frame { command: FrameCommand::Inspect { n, lattice, save } } => {
            inspect(*n, lattice, save.as_ref())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
