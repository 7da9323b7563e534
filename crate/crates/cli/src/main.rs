//! `varcolor` command-line front end.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use varcolor::contrast::{contrast_energy, write_surface_csv};
use varcolor::dispersion::dispersion_energy;
use varcolor::fastconv::{cached_separation, fit_separation};
use varcolor::io::{read_image, write_image};
use varcolor::solver::{stability_report, StabilityReport};
use varcolor::synth;
use varcolor::{
    build_kernel, channel_stats, enhance_image, ColorImage, ContrastKind, ContrastVariant,
    DispersionKind, DispersionParams, EnhanceParams, FitGrid, GrainParams, KernelProfile,
    KernelSpec, RMode, RegFamily, Regularizer, Termination,
};

/// Largest image side for which `--verify` runs the second solver.
const VERIFY_MAX_SIDE: usize = 64;

const CHANNEL_NAMES: [&str; 3] = ["R", "G", "B"];

#[derive(Parser)]
#[command(name = "varcolor", version, about = "Variational contrast and color enhancement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Enhance an image by gradient descent on contrast plus dispersion.
    Enhance(EnhanceArgs),
    /// Print contrast, dispersion and total energy of each channel.
    Energy(EnergyArgs),
    /// Tabulate polynomial fit errors of the force functions.
    Fitcheck(FitcheckArgs),
    /// Print per-channel mean and standard deviation.
    Stats {
        #[arg(short, long)]
        input: PathBuf,
    },
    /// Write a synthetic test image.
    Synth {
        #[command(subcommand)]
        kind: SynthKind,
    },
    /// Dump the pointwise force r(a, b) on a square grid as CSV.
    Surface(SurfaceArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Id,
    Log,
    Michelson,
}

impl From<VariantArg> for ContrastKind {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Id => ContrastKind::Id,
            VariantArg::Log => ContrastKind::Log,
            VariantArg::Michelson => ContrastKind::Michelson,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Arctan,
    Sqrt,
}

impl From<FamilyArg> for RegFamily {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Arctan => RegFamily::Arctan,
            FamilyArg::Sqrt => RegFamily::Sqrt,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Exact,
    Fast,
}

impl From<ModeArg> for RMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Exact => RMode::Exact,
            ModeArg::Fast => RMode::Fast,
        }
    }
}

/// Contrast function and regularization.
#[derive(Args, Clone)]
struct ContrastArgs {
    #[arg(long, value_enum, default_value = "id")]
    variant: VariantArg,
    /// Exponent applied to the min/max ratio; 1 selects the plain energy.
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 1.0 / 20.0)]
    epsilon: f64,
    #[arg(long, value_enum, default_value = "arctan")]
    family: FamilyArg,
}

impl ContrastArgs {
    fn variant(&self) -> Result<ContrastVariant> {
        Ok(ContrastVariant::new(self.variant.into(), self.gamma)?)
    }

    fn reg(&self) -> Result<Regularizer> {
        Ok(Regularizer::new(self.family.into(), self.epsilon)?)
    }
}

/// Energy weights and the spatial kernel.
#[derive(Args, Clone)]
struct ModelArgs {
    #[command(flatten)]
    contrast: ContrastArgs,
    /// Weight of the pull toward mid gray.
    #[arg(long, default_value_t = 255.0 / 253.0)]
    alpha: f64,
    /// Weight of the pull toward the input.
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// Use a Gaussian kernel of this width instead of 1/d.
    #[arg(long)]
    kernel_sigma: Option<f64>,
    /// Unnormalized kernel weight at zero displacement.
    #[arg(long, default_value_t = 0.0)]
    self_weight: f64,
}

impl ModelArgs {
    fn dispersion(&self) -> Result<DispersionParams> {
        Ok(DispersionParams::new(
            self.alpha,
            self.beta,
            DispersionKind::Entropic,
        )?)
    }

    fn kernel(&self) -> KernelSpec {
        KernelSpec {
            profile: match self.kernel_sigma {
                Some(sigma) => KernelProfile::Gaussian { sigma },
                None => KernelProfile::Reciprocal,
            },
            self_weight: self.self_weight,
        }
    }
}

#[derive(Args)]
struct EnhanceArgs {
    #[arg(short, long)]
    input: PathBuf,
    /// Output image; `.png` writes PNG, anything else binary PPM.
    #[arg(short, long)]
    output: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 0.2)]
    dt: f64,
    #[arg(long, value_enum, default_value = "exact")]
    mode: ModeArg,
    /// Degree of the polynomial used by the fast mode.
    #[arg(long, default_value_t = 9)]
    poly_degree: usize,
    /// Samples per axis for the polynomial fit.
    #[arg(long, default_value_t = FitGrid::default().fit)]
    fit_samples: usize,
    /// Samples per axis for measuring the fit error.
    #[arg(long, default_value_t = FitGrid::default().verify)]
    verify_samples: usize,
    /// Filter small bright and dark grains before enhancing and add them
    /// back afterwards.
    #[arg(long)]
    noise_control: bool,
    #[arg(long, default_value_t = GrainParams::default().area)]
    grain_area: usize,
    /// Stop once the mean squared change per pixel drops below this.
    #[arg(long, default_value_t = 1e-4)]
    threshold: f64,
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    /// Fail instead of clipping when an iterate leaves the valid range.
    #[arg(long)]
    no_clamp: bool,
    /// Write per-iteration change and energies as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Also run the other force mode and report the largest pixel gap.
    #[arg(long)]
    verify: bool,
}

impl EnhanceArgs {
    fn params(&self) -> Result<EnhanceParams> {
        let p = EnhanceParams {
            dispersion: self.model.dispersion()?,
            dt: self.dt,
            reg: self.model.contrast.reg()?,
            variant: self.model.contrast.variant()?,
            stop_mse: self.threshold,
            max_iters: self.max_iters,
            r_mode: self.mode.into(),
            clamp: !self.no_clamp,
            kernel: self.model.kernel(),
            poly_degree: self.poly_degree,
            fit_grid: FitGrid {
                fit: self.fit_samples,
                verify: self.verify_samples,
            },
            grain: GrainParams::new(self.grain_area, self.noise_control)?,
            track_energy: self.trace.is_some(),
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Args)]
struct EnergyArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct FitcheckArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [1, 3, 5, 7, 9])]
    degrees: Vec<usize>,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 1.0 / 20.0)]
    epsilon: f64,
    #[arg(long, value_enum, default_value = "arctan")]
    family: FamilyArg,
    #[arg(long, default_value_t = FitGrid::default().fit)]
    fit_samples: usize,
    #[arg(long, default_value_t = FitGrid::default().verify)]
    verify_samples: usize,
}

#[derive(Args)]
struct SurfaceArgs {
    #[command(flatten)]
    contrast: ContrastArgs,
    /// Grid points per axis.
    #[arg(long, default_value_t = 256)]
    samples: usize,
    /// CSV destination; standard output if omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum SynthKind {
    /// Staircase of constant vertical bands.
    Mach {
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 256)]
        width: usize,
        #[arg(long, default_value_t = 64)]
        height: usize,
        #[arg(long, default_value_t = 8)]
        steps: usize,
    },
    /// Equal gray patches on dark and light backgrounds.
    Simcon {
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 256)]
        width: usize,
        #[arg(long, default_value_t = 128)]
        height: usize,
        #[arg(long, default_value_t = 0.5)]
        patch: f64,
        #[arg(long, default_value_t = 0.2)]
        dark: f64,
        #[arg(long, default_value_t = 0.8)]
        light: f64,
    },
    /// Dim texture with one channel amplified.
    Cast {
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 128)]
        width: usize,
        #[arg(long, default_value_t = 128)]
        height: usize,
        /// 0 = R, 1 = G, 2 = B.
        #[arg(long, default_value_t = 2)]
        channel: usize,
        #[arg(long, default_value_t = 3.0)]
        gain: f64,
    },
}

#[derive(Serialize)]
struct VerifyReport {
    other_mode: RMode,
    max_abs_gap: f64,
    max_gap_8bit: u8,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    input: &'a Path,
    output: &'a Path,
    width: usize,
    height: usize,
    params: &'a EnhanceParams,
    stability: StabilityReport,
    iterations: usize,
    termination: Termination,
    final_mse: Option<f64>,
    fit_max_error: Option<f64>,
    verify: Option<VerifyReport>,
}

fn sidecar_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn max_gap(a: &ColorImage, b: &ColorImage) -> f64 {
    a.channels()
        .iter()
        .zip(b.channels())
        .map(|(p, q)| p.to_field().max_abs_diff(&q.to_field()))
        .fold(0.0, f64::max)
}

fn max_gap_8bit(a: &ColorImage, b: &ColorImage) -> u8 {
    a.to_rgb8()
        .iter()
        .zip(b.to_rgb8())
        .map(|(&x, y)| x.abs_diff(y))
        .max()
        .unwrap_or(0)
}

fn run_enhance(args: &EnhanceArgs) -> Result<()> {
    let p = args.params()?;
    let image = read_image(&args.input)?;
    let (w, h) = image.dims();
    if args.verify && w.max(h) > VERIFY_MAX_SIDE {
        bail!("--verify needs an image of at most {VERIFY_MAX_SIDE}x{VERIFY_MAX_SIDE}, got {w}x{h}");
    }

    let (out, traces) = enhance_image(&image, &p)?;
    write_image(&args.output, &out)?;
    let trace = &traces[0];

    let needs_fit = p.r_mode == RMode::Fast || args.verify;
    let fit_max_error = if needs_fit {
        Some(cached_separation(&p.variant, &p.reg, p.poly_degree, p.fit_grid)?.max_error())
    } else {
        None
    };

    let verify = if args.verify {
        let other_mode = match p.r_mode {
            RMode::Exact => RMode::Fast,
            RMode::Fast => RMode::Exact,
        };
        let other = EnhanceParams {
            r_mode: other_mode,
            track_energy: false,
            ..p.clone()
        };
        let (alt, _) = enhance_image(&image, &other)?;
        let report = VerifyReport {
            other_mode,
            max_abs_gap: max_gap(&out, &alt),
            max_gap_8bit: max_gap_8bit(&out, &alt),
        };
        println!(
            "verify: max |exact - fast| = {:.3e} ({} of 255), fit error {:.3e}",
            report.max_abs_gap,
            report.max_gap_8bit,
            fit_max_error.unwrap_or(f64::NAN)
        );
        Some(report)
    } else {
        None
    };

    if let Some(path) = &args.trace {
        let mut f = create(path)?;
        writeln!(f, "iteration,mse,energy_contrast,energy_dispersion")?;
        for (k, mse) in trace.mse.iter().enumerate() {
            // energies summed over the three channels
            let c: f64 = traces.iter().map(|t| t.energy[k].contrast).sum();
            let d: f64 = traces.iter().map(|t| t.energy[k].dispersion).sum();
            writeln!(f, "{},{mse:e},{c},{d}", k + 1)?;
        }
        f.flush()?;
    }

    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        input: &args.input,
        output: &args.output,
        width: w,
        height: h,
        params: &p,
        stability: stability_report(&p),
        iterations: trace.iterations,
        termination: trace.termination,
        final_mse: trace.mse.last().copied(),
        fit_max_error,
        verify,
    };
    let sidecar = sidecar_path(&args.output);
    let mut f = create(&sidecar)?;
    serde_json::to_writer_pretty(&mut f, &manifest)?;
    writeln!(f)?;
    f.flush()?;

    let how = match trace.termination {
        Termination::Converged => "converged",
        Termination::MaxIters => "hit the iteration limit",
    };
    println!(
        "{}: {w}x{h}, {} iterations, {how}",
        args.output.display(),
        trace.iterations
    );
    Ok(())
}

fn run_energy(args: &EnergyArgs) -> Result<()> {
    let image = read_image(&args.input)?;
    let (w, h) = image.dims();
    let kernel = build_kernel(&args.model.kernel(), w, h)?;
    let variant = args.model.contrast.variant()?;
    let reg = args.model.contrast.reg()?;
    let disp = args.model.dispersion()?;
    let mut out = io::stdout().lock();
    writeln!(out, "channel,contrast,dispersion,total")?;
    for (name, plane) in CHANNEL_NAMES.iter().zip(image.channels()) {
        let c = contrast_energy(plane, &kernel, &variant, &reg)?;
        let d = dispersion_energy(plane, plane, &disp)?;
        writeln!(out, "{name},{c},{d},{}", c + d)?;
    }
    Ok(())
}

fn run_fitcheck(args: &FitcheckArgs) -> Result<()> {
    let reg = Regularizer::new(args.family.into(), args.epsilon)?;
    let grid = FitGrid {
        fit: args.fit_samples,
        verify: args.verify_samples,
    };
    let mut out = io::stdout().lock();
    writeln!(out, "variant,degree,max_error,rms_error,condition")?;
    for kind in [ContrastKind::Id, ContrastKind::Log, ContrastKind::Michelson] {
        let variant = ContrastVariant::new(kind, args.gamma)?;
        for &n in &args.degrees {
            let sep = fit_separation(&variant, &reg, n, grid)?;
            writeln!(
                out,
                "{kind},{n},{:.6e},{:.6e},{:.3e}",
                sep.max_error(),
                sep.rms_error(),
                sep.condition()
            )?;
        }
    }
    Ok(())
}

fn run_stats(input: &Path) -> Result<()> {
    let image = read_image(input)?;
    let (w, h) = image.dims();
    let mut out = io::stdout().lock();
    writeln!(out, "# {w}x{h}{}", if image.is_gray() { " gray" } else { "" })?;
    writeln!(out, "channel,mean,std_dev")?;
    for (name, plane) in CHANNEL_NAMES.iter().zip(image.channels()) {
        let s = channel_stats(plane);
        writeln!(out, "{name},{:.6},{:.6}", s.mean, s.std_dev)?;
    }
    Ok(())
}

fn run_synth(kind: &SynthKind) -> Result<()> {
    let (image, output) = match *kind {
        SynthKind::Mach {
            ref output,
            width,
            height,
            steps,
        } => (synth::synth_mach_bands(width, height, steps)?, output),
        SynthKind::Simcon {
            ref output,
            width,
            height,
            patch,
            dark,
            light,
        } => (
            synth::synth_simultaneous_contrast(width, height, patch, dark, light)?,
            output,
        ),
        SynthKind::Cast {
            ref output,
            width,
            height,
            channel,
            gain,
        } => {
            let base = synth::synth_cast_base(width, height)?;
            (synth::synth_color_cast(&base, channel, gain)?, output)
        }
    };
    write_image(output, &image)?;
    Ok(())
}

fn run_surface(args: &SurfaceArgs) -> Result<()> {
    if args.samples < 2 {
        bail!("--samples must be at least 2");
    }
    let variant = args.contrast.variant()?;
    let reg = args.contrast.reg()?;
    match &args.output {
        Some(path) => {
            let mut f = create(path)?;
            write_surface_csv(&mut f, &variant, &reg, args.samples)?;
            f.flush()?;
        }
        None => {
            let mut out = BufWriter::new(io::stdout().lock());
            write_surface_csv(&mut out, &variant, &reg, args.samples)?;
            out.flush()?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Enhance(a) => run_enhance(&a),
        Command::Energy(a) => run_energy(&a),
        Command::Fitcheck(a) => run_fitcheck(&a),
        Command::Stats { input } => run_stats(&input),
        Command::Synth { kind } => run_synth(&kind),
        Command::Surface(a) => run_surface(&a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
