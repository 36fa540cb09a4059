use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use sfqm::analysis::{
    self, band_valleys, linear_grid, reflection_convergence, resonance_peaks, saturation_metric,
    scaling_fit, scan_1d, scan_2d, ScanPoint,
};
use sfqm::error::{Error, Result};
use sfqm::geometry::{build_layout_with_max, layout_csv, LayoutJson, PotentialFamily};
use sfqm::oracle::oracle_transmission;
use sfqm::scattering::{transmission, zeta_sequence_recursive, WaveContext};
use sfqm::{Dispersion, HeightPolicy, PotentialSpec};

#[derive(Parser)]
#[command(name = "sfqm", version, about = "Transmission through Cantor-family barriers in fractional quantum mechanics", disable_help_subcommand = true)]
struct Cli {
    /// Worker threads for grid evaluation (default: all cores). Output is
    /// identical for any value.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum FamilyArg {
    Cantor,
    Svc,
    General,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum PolicyArg {
    Fixed,
    Area,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum DispersionArg {
    Fractional,
    Quadratic,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Args, Serialize)]
struct SpecArgs {
    #[arg(long, value_enum)]
    family: FamilyArg,
    /// Removal-fraction exponent offset (general family only)
    #[arg(long, default_value_t = 1.0)]
    a1: f64,
    /// Removal-fraction exponent slope (general family only)
    #[arg(long, default_value_t = 0.0)]
    a2: f64,
    #[arg(long)]
    rho: f64,
    /// Total initial barrier length
    #[arg(long = "L", default_value_t = 1.0)]
    length: f64,
    /// Barrier height (stage-0 height under the area-preserving policy)
    #[arg(long = "V", default_value_t = 1.0)]
    v0: f64,
    /// Construction stage
    #[arg(long = "G")]
    stage: u32,
    #[arg(long, value_enum, default_value_t = PolicyArg::Fixed)]
    height_policy: PolicyArg,
}

impl SpecArgs {
    fn build(&self) -> Result<PotentialSpec> {
        let family = match self.family {
            FamilyArg::Cantor => PotentialFamily::Cantor,
            FamilyArg::Svc => PotentialFamily::Svc,
            FamilyArg::General => PotentialFamily::General { a1: self.a1, a2: self.a2 },
        };
        let policy = match self.height_policy {
            PolicyArg::Fixed => HeightPolicy::Fixed,
            PolicyArg::Area => HeightPolicy::AreaPreserving,
        };
        let spec =
            PotentialSpec::new(family, self.rho, self.length, self.v0, self.stage, policy)?;
        let cap = max_stage()?;
        if spec.stage > cap {
            return Err(Error::ResourceLimit(format!(
                "stage G={} exceeds the cap {cap}; raise SFQM_MAX_G to override",
                spec.stage
            )));
        }
        Ok(spec)
    }
}

#[derive(Args, Serialize)]
struct WaveArgs {
    /// Levy index, 1 < alpha <= 2
    #[arg(long)]
    alpha: f64,
    #[arg(long, value_enum, default_value_t = DispersionArg::Fractional)]
    dispersion: DispersionArg,
}

impl WaveArgs {
    fn dispersion(&self) -> Dispersion {
        match self.dispersion {
            DispersionArg::Fractional => Dispersion::Fractional,
            DispersionArg::Quadratic => Dispersion::Quadratic,
        }
    }
}

#[derive(Args, Serialize)]
struct OutputArgs {
    /// Output file (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
}

#[derive(Subcommand)]
enum Command {
    /// Emit the explicit barrier layout
    Layout {
        #[command(flatten)]
        spec: SpecArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Transmission at a single (alpha, k)
    Transmit {
        #[command(flatten)]
        spec: SpecArgs,
        #[command(flatten)]
        wave: WaveArgs,
        #[arg(long)]
        k: f64,
    },
    /// T(k) on a uniform grid at fixed alpha
    Scan1d {
        #[command(flatten)]
        spec: SpecArgs,
        #[command(flatten)]
        wave: WaveArgs,
        #[arg(long)]
        kmin: f64,
        #[arg(long)]
        kmax: f64,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// T(alpha, k) grid
    Scan2d {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        alpha_min: f64,
        #[arg(long)]
        alpha_max: f64,
        #[arg(long, default_value_t = 50)]
        n_alpha: usize,
        #[arg(long, value_enum, default_value_t = DispersionArg::Fractional)]
        dispersion: DispersionArg,
        #[arg(long)]
        kmin: f64,
        #[arg(long)]
        kmax: f64,
        #[arg(long, default_value_t = 500)]
        n_k: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Resonance peaks of a T(k) scan
    Peaks {
        #[command(flatten)]
        spec: SpecArgs,
        #[command(flatten)]
        wave: WaveArgs,
        #[arg(long)]
        kmin: f64,
        #[arg(long)]
        kmax: f64,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0.99)]
        threshold: f64,
        /// Read the scan from a k,T,R CSV instead of computing it
        #[arg(long)]
        input: Option<PathBuf>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Band-like valleys (contiguous low-T runs) of a T(k) scan
    Bands {
        #[command(flatten)]
        spec: SpecArgs,
        #[command(flatten)]
        wave: WaveArgs,
        #[arg(long)]
        kmin: f64,
        #[arg(long)]
        kmax: f64,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 1e-3)]
        threshold: f64,
        /// Minimum valley width (default: 1% of the scanned range)
        #[arg(long)]
        min_width: Option<f64>,
        /// Read the scan from a k,T,R CSV instead of computing it
        #[arg(long)]
        input: Option<PathBuf>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Envelope fit of the high-energy reflection scaling law
    Scaling {
        #[command(flatten)]
        spec: SpecArgs,
        #[command(flatten)]
        wave: WaveArgs,
        #[arg(long)]
        kmin: f64,
        #[arg(long)]
        kmax: f64,
        #[arg(long, default_value_t = 4000)]
        n: usize,
        #[arg(long, default_value_t = 40)]
        bins: usize,
        /// Write the per-point log-log data here (summary goes to stdout)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Saturation metric max |y_Ga - y_Gb| with y = log10(-log10 T)
    Saturate {
        #[command(flatten)]
        spec: SpecArgs,
        #[command(flatten)]
        wave: WaveArgs,
        #[arg(long)]
        ga: u32,
        #[arg(long)]
        gb: u32,
        #[arg(long)]
        kmin: f64,
        #[arg(long)]
        kmax: f64,
        #[arg(long, default_value_t = 1000)]
        n: usize,
    },
    /// Relative convergence of R(k) between two stages
    Converge {
        #[command(flatten)]
        spec: SpecArgs,
        #[command(flatten)]
        wave: WaveArgs,
        #[arg(long)]
        ga: u32,
        #[arg(long)]
        gb: u32,
        #[arg(long)]
        kmin: f64,
        #[arg(long)]
        kmax: f64,
        #[arg(long, default_value_t = 500)]
        n: usize,
    },
    /// Compare the closed-form transmission against the brute-force product
    OracleCheck {
        #[command(flatten)]
        spec: SpecArgs,
        #[command(flatten)]
        wave: WaveArgs,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 0.5)]
        kmin: f64,
        #[arg(long, default_value_t = 50.0)]
        kmax: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
}

fn max_stage() -> Result<u32> {
    match std::env::var("SFQM_MAX_G") {
        Ok(s) => s
            .parse()
            .map_err(|_| Error::InvalidInput(format!("SFQM_MAX_G must be an integer; got {s:?}"))),
        Err(_) => Ok(sfqm::geometry::DEFAULT_MAX_STAGE),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap handles --help/--version itself
            if e.use_stderr() {
                let first = e.to_string();
                let line = first.lines().next().unwrap_or("bad arguments");
                eprintln!("ERROR 1: {line}");
                return ExitCode::from(1u8);
            }
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    if let Some(workers) = cli.workers {
        if workers == 0 {
            eprintln!("ERROR 1: --workers must be >= 1");
            return ExitCode::from(1u8);
        }
        // ignore the error if a pool already exists (tests call run() twice)
        let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ERROR {}: {e}", e.exit_code());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

/// Serialized into every output file so a run can be reproduced from it.
#[derive(Serialize)]
struct RunConfig<'a> {
    subcommand: &'a str,
    #[serde(flatten)]
    spec: &'a SpecArgs,
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    wave: Option<&'a WaveArgs>,
    #[serde(skip_serializing_if = "Option::is_none")]
    kmin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    kmax: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    extra: Option<serde_json::Value>,
}

fn config_value(cfg: &RunConfig) -> serde_json::Value {
    serde_json::to_value(cfg).expect("config serialization cannot fail")
}

fn emit(output: &OutputArgs, cfg: &RunConfig, csv_body: &str, json_body: serde_json::Value) -> Result<()> {
    let text = match output.format {
        FormatArg::Csv => format!("# config: {}\n{csv_body}", config_value(cfg)),
        FormatArg::Json => {
            let wrapped = serde_json::json!({ "config": config_value(cfg), "data": json_body });
            format!("{}\n", serde_json::to_string_pretty(&wrapped).expect("valid json"))
        }
    };
    write_out(output.out.as_deref(), &text)
}

fn write_out(path: Option<&std::path::Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| {
            Error::ResourceLimit(format!("cannot write {}: {e}", p.display()))
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn read_scan_csv(path: &std::path::Path) -> Result<Vec<ScanPoint<f64>>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('k') {
            continue;
        }
        let mut fields = line.split(',');
        let mut next = || -> Result<f64> {
            fields
                .next()
                .ok_or_else(|| Error::InvalidInput(format!("short row in {}", path.display())))?
                .trim()
                .parse()
                .map_err(|e| Error::InvalidInput(format!("bad number in {}: {e}", path.display())))
        };
        let (k, t) = (next()?, next()?);
        let r = next().unwrap_or(1.0 - t);
        rows.push(ScanPoint { k, transmission: t, reflection: r });
    }
    if rows.is_empty() {
        return Err(Error::InvalidInput(format!("no data rows in {}", path.display())));
    }
    Ok(rows)
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Layout { spec, output } => {
            let built = spec.build()?;
            let layout = build_layout_with_max(&built, max_stage()?)?;
            let cfg = RunConfig {
                subcommand: "layout",
                spec: &spec,
                wave: None,
                kmin: None,
                kmax: None,
                n: None,
                extra: None,
            };
            let json = serde_json::to_value(LayoutJson::new(&built, &layout)).expect("valid json");
            emit(&output, &cfg, &layout_csv(&layout), json)
        }
        Command::Transmit { spec, wave, k } => {
            let built = spec.build()?;
            let ctx = WaveContext::with_dispersion(wave.alpha, k, wave.dispersion())?;
            let result = transmission(&built, &ctx)?;
            println!("T = {:.16e}", result.transmission);
            println!("R = {:.16e}", result.reflection);
            for (j, z) in zeta_sequence_recursive(&built, &ctx)?.iter().enumerate() {
                println!("zeta_{} = {:.16e}", j + 1, z);
            }
            Ok(())
        }
        Command::Scan1d { spec, wave, kmin, kmax, n, output } => {
            let built = spec.build()?;
            let rows = scan_1d(&built, wave.alpha, wave.dispersion(), kmin, kmax, n)?;
            let cfg = RunConfig {
                subcommand: "scan1d",
                spec: &spec,
                wave: Some(&wave),
                kmin: Some(kmin),
                kmax: Some(kmax),
                n: Some(n),
                extra: None,
            };
            let json = serde_json::to_value(&rows).expect("valid json");
            emit(&output, &cfg, &analysis::scan_1d_csv(&rows), json)
        }
        Command::Scan2d {
            spec,
            alpha_min,
            alpha_max,
            n_alpha,
            dispersion,
            kmin,
            kmax,
            n_k,
            output,
        } => {
            let built = spec.build()?;
            let disp = match dispersion {
                DispersionArg::Fractional => Dispersion::Fractional,
                DispersionArg::Quadratic => Dispersion::Quadratic,
            };
            let grid = scan_2d(&built, alpha_min, alpha_max, n_alpha, disp, kmin, kmax, n_k)?;
            let cfg = RunConfig {
                subcommand: "scan2d",
                spec: &spec,
                wave: None,
                kmin: Some(kmin),
                kmax: Some(kmax),
                n: Some(n_k),
                extra: Some(serde_json::json!({
                    "alpha_min": alpha_min,
                    "alpha_max": alpha_max,
                    "n_alpha": n_alpha,
                    "dispersion": dispersion,
                })),
            };
            emit(&output, &cfg, &analysis::scan_2d_csv(&grid), analysis::scan_2d_json(&grid))
        }
        Command::Peaks { spec, wave, kmin, kmax, n, threshold, input, output } => {
            let built = spec.build()?;
            let rows = match &input {
                Some(path) => read_scan_csv(path)?,
                None => scan_1d(&built, wave.alpha, wave.dispersion(), kmin, kmax, n)?,
            };
            let peaks = resonance_peaks(&rows, threshold);
            let cfg = RunConfig {
                subcommand: "peaks",
                spec: &spec,
                wave: Some(&wave),
                kmin: Some(kmin),
                kmax: Some(kmax),
                n: Some(n),
                extra: Some(serde_json::json!({ "threshold": threshold })),
            };
            let json = serde_json::to_value(&peaks).expect("valid json");
            emit(&output, &cfg, &analysis::peaks_csv(&peaks), json)
        }
        Command::Bands { spec, wave, kmin, kmax, n, threshold, min_width, input, output } => {
            let built = spec.build()?;
            let rows = match &input {
                Some(path) => read_scan_csv(path)?,
                None => scan_1d(&built, wave.alpha, wave.dispersion(), kmin, kmax, n)?,
            };
            let width = min_width.unwrap_or_else(|| {
                let (lo, hi) = (rows[0].k, rows[rows.len() - 1].k);
                0.01 * (hi - lo)
            });
            let valleys = band_valleys(&rows, threshold, width);
            let cfg = RunConfig {
                subcommand: "bands",
                spec: &spec,
                wave: Some(&wave),
                kmin: Some(kmin),
                kmax: Some(kmax),
                n: Some(n),
                extra: Some(serde_json::json!({ "threshold": threshold, "min_width": width })),
            };
            let json = serde_json::to_value(&valleys).expect("valid json");
            emit(&output, &cfg, &analysis::valleys_csv(&valleys), json)
        }
        Command::Scaling { spec, wave, kmin, kmax, n, bins, out } => {
            let built = spec.build()?;
            let fit = scaling_fit(&built, wave.alpha, wave.dispersion(), kmin, kmax, n, bins)?;
            if out.is_some() {
                let cfg = RunConfig {
                    subcommand: "scaling",
                    spec: &spec,
                    wave: Some(&wave),
                    kmin: Some(kmin),
                    kmax: Some(kmax),
                    n: Some(n),
                    extra: Some(serde_json::json!({ "bins": bins })),
                };
                let body = format!("# config: {}\n{}", config_value(&cfg), analysis::scaling_csv(&fit));
                write_out(out.as_deref(), &body)?;
            }
            let summary = serde_json::json!({
                "slope": fit.slope,
                "intercept": fit.intercept,
                "expected_slope": fit.expected_slope,
                "alpha": wave.alpha,
            });
            println!("{}", serde_json::to_string(&summary).expect("valid json"));
            Ok(())
        }
        Command::Saturate { spec, wave, ga, gb, kmin, kmax, n } => {
            if ga >= gb {
                return Err(Error::InvalidInput(format!("need ga < gb; got {ga} >= {gb}")));
            }
            let built = spec.build()?;
            let ks = linear_grid(kmin, kmax, n);
            let metric = saturation_metric(&built, ga, gb, wave.alpha, wave.dispersion(), &ks)?;
            let out = serde_json::json!({
                "metric": metric, "ga": ga, "gb": gb, "alpha": wave.alpha,
            });
            println!("{}", serde_json::to_string(&out).expect("valid json"));
            Ok(())
        }
        Command::Converge { spec, wave, ga, gb, kmin, kmax, n } => {
            let built = spec.build()?;
            let ks = analysis::log_grid(kmin, kmax, n);
            let metric =
                reflection_convergence(&built, wave.alpha, wave.dispersion(), ga, gb, &ks)?;
            let out = serde_json::json!({
                "metric": metric, "ga": ga, "gb": gb, "alpha": wave.alpha,
            });
            println!("{}", serde_json::to_string(&out).expect("valid json"));
            Ok(())
        }
        Command::OracleCheck { spec, wave, samples, kmin, kmax, seed, tol } => {
            if samples == 0 {
                return Err(Error::InvalidInput("need at least one sample".into()));
            }
            let built = spec.build()?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut worst = 0.0f64;
            let mut worst_k = kmin;
            for _ in 0..samples {
                let k = rng.gen_range(kmin..=kmax);
                let ctx = WaveContext::with_dispersion(wave.alpha, k, wave.dispersion())?;
                let closed = transmission(&built, &ctx)?.transmission;
                let brute = oracle_transmission(&built, &ctx)?.transmission;
                let delta = (closed - brute).abs();
                if delta > worst {
                    worst = delta;
                    worst_k = k;
                }
            }
            println!("max |dT| = {worst:.3e} at k = {worst_k:.6} over {samples} samples");
            if worst <= tol {
                println!("PASS (tol {tol:.3e})");
                Ok(())
            } else {
                println!("FAIL (tol {tol:.3e})");
                Err(Error::Invariant(format!(
                    "closed form and brute force disagree: max |dT| = {worst:.3e} > tol {tol:.3e}"
                )))
            }
        }
    }
}
