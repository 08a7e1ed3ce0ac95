use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use tospdc::constants::{omega_from_wavelength, wavelength_from_omega};
use tospdc::design::Design;
use tospdc::fiber_modes::FiberSpec;
use tospdc::flux::{
    center_slownesses, characteristic_length, flux_analytic, flux_asymptotic, flux_cw, flux_pulsed_numeric,
    phi_parameter, pump_photon_rate, sweep, tau_coefficients, write_sweep_csv, FluxMethod, FluxResult, Regime,
    SweepParameter,
};
use tospdc::constants::Constants;
use tospdc::nonlinearity::nonlinear_phase;
use tospdc::output::{fmt_num, write_row};
use tospdc::phasematching::{
    degenerate_wavelength_curve, emission_contour_vs_pump, emission_contour_vs_radius, find_phasematching_radius,
    gamma_map, write_contour_csv, ContourOptions,
};
use tospdc::triplet_state::{
    central_lobe_radius, coordinate_plane, marginal_single_resolved, jsa, jsa_axis_rotated, jsa_slice_rotated, marginal_two_photon_resolved,
    marginalize_slice, JsaGridSpec, PlaneQuantity, SourceModel, Spectrum1D,
};

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] tospdc::Error),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }

    fn hint(&self) -> Option<&'static str> {
        match self {
            CliError::Core(tospdc::Error::GridTruncation { .. }) => {
                Some("widen the window with --extent-thz, add filters, or pass --allow-truncation")
            }
            CliError::Core(tospdc::Error::NonConvergent { .. }) => Some("try a larger --grid-scale"),
            CliError::Core(tospdc::Error::DegenerateDesign) => {
                Some("use the numeric or cw method for frequency-degenerate designs")
            }
            _ => None,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(name = "tospdc", version, about = "Photon-triplet sources in air-clad silica nanofibers")]
struct Cli {
    /// Design file (TOML). Without it the bundled preset is used.
    #[arg(long, global = true)]
    design: Option<PathBuf>,
    /// Bundled design: degenerate or nondegenerate.
    #[arg(long, global = true, default_value = "degenerate")]
    preset: String,
    /// Write datasets as files into this directory instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Multiply every quadrature and grid resolution.
    #[arg(long, global = true, default_value_t = 1.0)]
    grid_scale: f64,
    /// Accept spectra that do not decay inside the window.
    #[arg(long, global = true)]
    allow_truncation: bool,
    /// Include self- and cross-phase modulation in the phasemismatch.
    #[arg(long, global = true)]
    nonlinear_phase: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Core radius for degenerate phasematching at one emission wavelength.
    Phasematch {
        #[arg(long)]
        lambda_um: Option<f64>,
        #[arg(long, num_args = 2, value_names = ["LO", "HI"], default_values_t = [0.25, 0.6])]
        bracket_um: Vec<f64>,
    },
    /// Design maps.
    Maps {
        #[arg(value_enum)]
        map: MapKind,
        #[arg(long, default_value_t = 0.30)]
        r_min_um: f64,
        #[arg(long, default_value_t = 0.48)]
        r_max_um: f64,
        /// Pump wavelength range for pump-resolved maps (default: design pump ± 5 nm).
        #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
        pump_um: Option<Vec<f64>>,
        /// Samples along the swept axis (default from the design).
        #[arg(long)]
        points: Option<usize>,
        /// Largest signal offset shown on the gamma map, 10¹² rad/s.
        #[arg(long, default_value_t = 100.0)]
        delta_max_thz: f64,
        #[arg(long, default_value_t = 400)]
        delta_points: usize,
    },
    /// Joint spectrum views.
    Jsa {
        #[arg(value_enum)]
        mode: JsaMode,
        /// Fixed ν₊ values for slices, 10⁹ rad/s.
        #[arg(long, value_delimiter = ',', default_values_t = [-15.0, 0.0, 15.0], allow_hyphen_values = true)]
        nu_plus_ghz: Vec<f64>,
        /// Half-width of the detuning window, 10¹² rad/s.
        #[arg(long)]
        extent_thz: Option<f64>,
        /// Samples per axis (default from the design).
        #[arg(long)]
        points: Option<usize>,
        /// Use the widened visualization variant (L/100, 200σ).
        #[arg(long)]
        broadened: bool,
        /// Filter bandwidth for the `filtered` mode when the design has none, 10¹² rad/s.
        #[arg(long)]
        filter_thz: Option<f64>,
        #[arg(long, value_enum, default_value_t = GridFormat::Flat)]
        format: GridFormat,
        /// Also compare the marginal against an independent nested quadrature.
        #[arg(long)]
        direct_check: bool,
    },
    /// Emission rate, optionally along a parameter sweep.
    Flux {
        #[arg(value_enum)]
        method: MethodArg,
        #[arg(long, value_enum, default_value_t = RegimeArg::Long)]
        regime: RegimeArg,
        #[arg(long, value_enum)]
        sweep: Option<SweepArg>,
        /// Sweep start in GHz, cm or mW.
        #[arg(long)]
        from: Option<f64>,
        /// Sweep end in GHz, cm or mW.
        #[arg(long)]
        to: Option<f64>,
        #[arg(long, default_value_t = 10)]
        points: usize,
    },
    /// Summary of the design point.
    Report {
        /// Also run the numerical triple integral.
        #[arg(long)]
        numeric: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MapKind {
    DegCurve,
    ContourVsPump,
    ContourVsRadius,
    GammaMap,
}

#[derive(Clone, Copy, ValueEnum)]
enum JsaMode {
    Slices,
    Axis,
    Marginals,
    Filtered,
    Planes,
    Grid,
}

#[derive(Clone, Copy, ValueEnum)]
enum GridFormat {
    Flat,
    Compact,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Numeric,
    Cw,
    Analytic,
    Asymptotic,
}

#[derive(Clone, Copy, ValueEnum)]
enum RegimeArg {
    Long,
    Short,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepArg {
    Sigma,
    Length,
    Power,
}

/// Where datasets go: files under `--out`, or stdout with a `# name`
/// marker line ahead of each dataset.
struct Sink {
    dir: Option<PathBuf>,
}

impl Sink {
    fn emit<F>(&self, name: &str, write: F) -> Result<()>
    where
        F: FnOnce(&mut dyn Write) -> io::Result<()>,
    {
        match &self.dir {
            Some(dir) => {
                fs::create_dir_all(dir)?;
                let path = dir.join(name);
                let mut f = io::BufWriter::new(fs::File::create(&path)?);
                write(&mut f)?;
                f.flush()?;
                eprintln!("wrote {}", path.display());
            }
            None => {
                let stdout = io::stdout();
                let mut lock = io::BufWriter::new(stdout.lock());
                writeln!(lock, "# {name}")?;
                write(&mut lock)?;
                lock.flush()?;
            }
        }
        Ok(())
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|j| a + (b - a) * j as f64 / (n - 1) as f64).collect()
}

fn load_design(cli: &Cli) -> Result<Design> {
    let mut d = match &cli.design {
        Some(p) => Design::from_path(p)?,
        None => Design::preset(&cli.preset)?,
    };
    d.numerics = d.numerics.scaled(cli.grid_scale)?;
    d.jsa_points = ((d.jsa_points as f64) * cli.grid_scale).ceil() as usize;
    if cli.nonlinear_phase {
        d.config.include_nonlinear_phase = true;
    }
    Ok(d)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Some(h) = e.hint() {
                eprintln!("hint: {h}");
            }
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    let sink = Sink { dir: cli.out.clone() };
    match &cli.command {
        Command::Phasematch { lambda_um, bracket_um } => cmd_phasematch(cli, &sink, *lambda_um, bracket_um),
        Command::Maps {
            map,
            r_min_um,
            r_max_um,
            pump_um,
            points,
            delta_max_thz,
            delta_points,
        } => {
            let d = load_design(cli)?;
            let opts = ContourOptions {
                delta_points: *delta_points,
                delta_max: None,
            };
            let n = points.unwrap_or(d.map_points);
            cmd_maps(&d, &sink, *map, (*r_min_um, *r_max_um), pump_um.as_deref(), n, *delta_max_thz, &opts)
        }
        Command::Jsa {
            mode,
            nu_plus_ghz,
            extent_thz,
            points,
            broadened,
            filter_thz,
            format,
            direct_check,
        } => {
            let mut d = load_design(cli)?;
            if *broadened {
                d = d.broadened()?;
            }
            let n = points.unwrap_or(d.jsa_points);
            let args = JsaArgs {
                nu_plus: nu_plus_ghz.iter().map(|v| v * 1e9).collect(),
                extent: extent_thz.map(|v| v * 1e12),
                points: n,
                filter: filter_thz.map(|v| v * 1e12),
                format: *format,
                allow_truncation: cli.allow_truncation,
                direct_check: *direct_check,
            };
            cmd_jsa(&d, &sink, *mode, &args)
        }
        Command::Flux {
            method,
            regime,
            sweep,
            from,
            to,
            points,
        } => {
            let d = load_design(cli)?;
            cmd_flux(&d, &sink, *method, *regime, *sweep, (*from, *to), *points)
        }
        Command::Report { numeric } => {
            let d = load_design(cli)?;
            cmd_report(&d, *numeric)
        }
    }
}

fn cmd_phasematch(cli: &Cli, sink: &Sink, lambda_um: Option<f64>, bracket_um: &[f64]) -> Result<()> {
    let (base, lambda) = match lambda_um {
        Some(l) => {
            let base = match &cli.design {
                Some(p) => Design::from_path(p)?.config.fiber,
                None => FiberSpec::silica_in_air(0.4e-6)?,
            };
            (base, l * 1e-6)
        }
        None => {
            let d = load_design(cli)?;
            let lambda = d.phasematch_lambda.ok_or_else(|| {
                CliError::Usage("pass --lambda-um or use a design with phasematch_lambda_um".into())
            })?;
            (d.config.fiber, lambda)
        }
    };
    let r = find_phasematching_radius(&base, lambda, (bracket_um[0] * 1e-6, bracket_um[1] * 1e-6))?;
    sink.emit("phasematch.csv", |w| {
        writeln!(w, "lambda_deg_um,r_um")?;
        write_row(w, &[lambda * 1e6, r * 1e6])
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_maps(
    d: &Design,
    sink: &Sink,
    map: MapKind,
    r_range: (f64, f64),
    pump_um: Option<&[f64]>,
    n: usize,
    delta_max_thz: f64,
    opts: &ContourOptions,
) -> Result<()> {
    let c = &d.config;
    let pumps = || -> Vec<f64> {
        let lp = wavelength_from_omega(c.centers.omega_p) * 1e6;
        let (a, b) = pump_um.map_or((lp - 0.005, lp + 0.005), |v| (v[0], v[1]));
        linspace(a, b, n).into_iter().map(|l| omega_from_wavelength(l * 1e-6)).collect()
    };
    match map {
        MapKind::DegCurve => {
            let radii: Vec<f64> = linspace(r_range.0, r_range.1, n).into_iter().map(|r| r * 1e-6).collect();
            let curve = degenerate_wavelength_curve(&c.fiber, &radii, c.chi3)?;
            for r in &curve.missing {
                eprintln!("no degenerate phasematching at r = {:.4} um", r * 1e6);
            }
            sink.emit("deg_curve.csv", |w| curve.write_csv(w))
        }
        MapKind::ContourVsPump => {
            let pts = emission_contour_vs_pump(&c.fiber, c.centers.omega_i, &pumps(), opts)?;
            sink.emit("contour_vs_pump.csv", |w| write_contour_csv(w, &pts))
        }
        MapKind::ContourVsRadius => {
            let radii: Vec<f64> = linspace(r_range.0, r_range.1, n).into_iter().map(|r| r * 1e-6).collect();
            let pts = emission_contour_vs_radius(&c.fiber, c.centers.omega_p, c.centers.omega_i, &radii, opts)?;
            sink.emit("contour_vs_radius.csv", |w| write_contour_csv(w, &pts))
        }
        MapKind::GammaMap => {
            let dmax = delta_max_thz * 1e12;
            let deltas = linspace(-dmax, dmax, n);
            let m = gamma_map(&c.fiber, c.centers.omega_i, &pumps(), &deltas, c.chi3, opts)?;
            sink.emit("gamma_map.csv", |w| m.write_csv(w))?;
            sink.emit("gamma_map_contour.csv", |w| write_contour_csv(w, &m.contour))
        }
    }
}

struct JsaArgs {
    nu_plus: Vec<f64>,
    extent: Option<f64>,
    points: usize,
    filter: Option<f64>,
    format: GridFormat,
    allow_truncation: bool,
    direct_check: bool,
}

fn model_for(d: &Design, span: f64) -> Result<SourceModel> {
    let c = &d.config;
    let phi_nl = if c.include_nonlinear_phase {
        nonlinear_phase(&c.coefficients()?, c.peak_power())
    } else {
        0.0
    };
    Ok(SourceModel::new(&c.fiber, c.length, c.pump.sigma, c.centers, phi_nl, span)?)
}

/// Largest `|L(k'_p − k'_μ)|` over the emission modes: the inverse width of
/// the phasematching band away from the degenerate point.
fn max_walkoff(model: &SourceModel) -> f64 {
    let kp = model.pump_slowness();
    model
        .centers
        .emission()
        .iter()
        .map(|&w| (model.length * (kp - model.emission_slowness(w))).abs())
        .fold(f64::MIN_POSITIVE, f64::max)
}

fn warn_band(axis: &[f64], band: f64) {
    let step = (axis[axis.len() - 1] - axis[0]) / (axis.len().max(2) - 1) as f64;
    if step > 0.5 * band {
        eprintln!(
            "warning: grid step {step:.3e} rad/s is coarse against the phasematching band \
             {band:.3e} rad/s; raise --points for converged maps"
        );
    }
}

fn max_deviation_pct(a: &Spectrum1D, b: &Spectrum1D) -> f64 {
    let peak = a.values.iter().cloned().fold(0.0, f64::max);
    let dev = a.values.iter().zip(&b.values).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    100.0 * dev / peak.max(f64::MIN_POSITIVE)
}

fn label(v: f64) -> String {
    format!("{:+.1}", v * 1e-9).replace('+', "p").replace('-', "m")
}

fn write_spectrum_abs(w: &mut dyn Write, s: &Spectrum1D, center: f64) -> io::Result<()> {
    writeln!(w, "{},omega_rad_s,lambda_um,intensity", s.label)?;
    for (x, v) in s.x.iter().zip(&s.values) {
        write_row(w, &[*x, center + x, wavelength_from_omega(center + x) * 1e6, *v])?;
    }
    Ok(())
}

fn cmd_jsa(d: &Design, sink: &Sink, mode: JsaMode, a: &JsaArgs) -> Result<()> {
    let c = &d.config;
    let sigma = c.pump.sigma;
    let filter_widths = c.filters.map(|f| f.map(|f| f.sigma_f));
    let common_filter = c.common_filter().or(a.filter);
    // Window: explicit, else a few filter widths, else a few central lobes.
    let probe = model_for(d, 0.5 * c.centers.emission().iter().cloned().fold(f64::INFINITY, f64::min))?;
    let lobe = central_lobe_radius(&probe);
    let auto = match (common_filter, lobe) {
        (Some(f), _) => 4.0 * f,
        (None, Some(l)) => 2.5 * l,
        (None, None) => 40.0 * sigma,
    };
    let extent = a.extent.unwrap_or(auto);
    // Unfiltered marginals keep sinc² tails; a wider window keeps the edge
    // below the truncation limit.
    let marginal_half = match (a.extent, common_filter) {
        (None, None) => 4.0 * extent,
        _ => extent,
    };
    let reach = match mode {
        JsaMode::Marginals => 2.2 * marginal_half,
        JsaMode::Axis => 2.0 * a.extent.unwrap_or(3.0 * sigma),
        _ => 2.2 * extent,
    };
    let model = model_for(d, reach + 4.0 * sigma)?;
    let n = a.points;
    let band = std::f64::consts::TAU / max_walkoff(&model);
    match mode {
        JsaMode::Slices => {
            let ax = linspace(-extent, extent, n);
            for &p in &a.nu_plus {
                let s = jsa_slice_rotated(&model, p, &ax, &ax)?;
                eprintln!("nu_plus = {:+.3e} rad/s: peak |f|^2 = {:.6e}", p, s.max());
                sink.emit(&format!("slice_nu_plus_{}.csv", label(p)), |w| s.write_matrix_csv(w))?;
            }
            Ok(())
        }
        JsaMode::Axis => {
            let half = a.extent.unwrap_or(3.0 * sigma);
            let s = jsa_axis_rotated(&model, &linspace(-half, half, n))?;
            sink.emit("axis_nu_plus.csv", |w| s.write_csv(w))
        }
        JsaMode::Marginals => {
            let ax = linspace(-marginal_half, marginal_half, n);
            warn_band(&ax, band);
            let i2 = marginal_two_photon_resolved(&model, filter_widths, 2, &ax, &ax, a.allow_truncation)?;
            let i1 = marginalize_slice(&i2, 1);
            let i2_ri = marginal_two_photon_resolved(&model, filter_widths, 1, &ax, &ax, a.allow_truncation)?;
            let via_i = marginalize_slice(&i2_ri, 1);
            eprintln!(
                "I1(r) via I2(r,s) vs via I2(r,i): max deviation {:.4}% of peak",
                max_deviation_pct(&i1, &via_i)
            );
            if a.direct_check {
                let direct = marginal_single_resolved(&model, filter_widths, 0, &ax, marginal_half)?;
                eprintln!(
                    "I1(r) via I2(r,s) vs nested quadrature: max deviation {:.4}% of peak",
                    max_deviation_pct(&i1, &direct)
                );
            }
            sink.emit("i2_r_s.csv", |w| i2.write_matrix_csv(w))?;
            sink.emit("i1_r.csv", |w| i1.write_csv(w))
        }
        JsaMode::Filtered => {
            let sf = common_filter.ok_or_else(|| {
                CliError::Usage("the design has no filters; pass --filter-thz".into())
            })?;
            let widths = [Some(sf); 3];
            let ax = linspace(-extent, extent, n);
            warn_band(&ax, band);
            let names = ["r", "s", "i"];
            for kept in 0..3 {
                let other = (kept + 1) % 3;
                let traced = (kept + 2) % 3;
                let i2 = marginal_two_photon_resolved(&model, widths, traced, &ax, &ax, a.allow_truncation)?;
                // Free modes come in (r, s, i) order; integrate out `other`.
                let over = if other > kept { 1 } else { 0 };
                let single = marginalize_slice(&i2, over);
                let center = c.centers.emission()[kept];
                let peak_at = single
                    .x
                    .iter()
                    .zip(&single.values)
                    .fold((0.0, f64::MIN), |b, (x, v)| if *v > b.1 { (*x, *v) } else { b })
                    .0;
                eprintln!(
                    "mode {}: peak at {:.5} um",
                    names[kept],
                    wavelength_from_omega(center + peak_at) * 1e6
                );
                sink.emit(&format!("single_{}.csv", names[kept]), |w| write_spectrum_abs(w, &single, center))?;
            }
            Ok(())
        }
        JsaMode::Planes => {
            let ax = linspace(-extent, extent, n);
            let names = ["r", "s", "i"];
            for fixed in 0..3 {
                for (q, qname) in [
                    (PlaneQuantity::Pump, "pump"),
                    (PlaneQuantity::Phasematching, "phasematching"),
                    (PlaneQuantity::Joint, "joint"),
                ] {
                    let s = coordinate_plane(&model, fixed, &ax, &ax, q)?;
                    let lam = wavelength_from_omega(c.centers.emission()[fixed]) * 1e6;
                    eprintln!("plane nu_{} = 0 (lambda = {:.4} um), {}", names[fixed], lam, qname);
                    sink.emit(&format!("plane_{}0_{}.csv", names[fixed], qname), |w| s.write_matrix_csv(w))?;
                }
            }
            Ok(())
        }
        JsaMode::Grid => {
            let spec = match (a.extent, common_filter) {
                (Some(e), _) => JsaGridSpec::cube(n, e),
                (None, Some(_)) => JsaGridSpec::cube(n, extent),
                (None, None) => JsaGridSpec {
                    points: n,
                    ..JsaGridSpec::default_for(&model)
                },
            };
            let mut g = jsa(&model, &spec)?;
            if filter_widths.iter().any(Option::is_some) {
                g = g.filtered(filter_widths)?;
            }
            let step = spec.half_width.iter().cloned().fold(0.0, f64::max) * 2.0 / (n.max(2) - 1) as f64;
            if step > sigma {
                eprintln!(
                    "warning: grid step {step:.3e} rad/s exceeds the pump width {sigma:.3e} rad/s; \
                     the energy-conservation shell is under-sampled"
                );
            }
            let ratio = g.boundary_ratio();
            if ratio >= 1e-4 && !a.allow_truncation {
                return Err(tospdc::Error::GridTruncation { ratio }.into());
            }
            match a.format {
                GridFormat::Flat => sink.emit("jsa.csv", |w| g.write_flat_csv(w)),
                GridFormat::Compact => sink.emit("jsa.txt", |w| g.write_compact(w)),
            }
        }
    }
}

fn sweep_defaults(p: SweepArg) -> (f64, f64, f64, SweepParameter, &'static str) {
    // (from, to, unit → SI, parameter, unit name)
    match p {
        SweepArg::Sigma => (11.77, 117.7, 1e9, SweepParameter::Sigma, "sigma_GHz"),
        SweepArg::Length => (1.0, 10.0, 1e-2, SweepParameter::Length, "L_cm"),
        SweepArg::Power => (1.0, 200.0, 1e-3, SweepParameter::Power, "p_mW"),
    }
}

fn cmd_flux(
    d: &Design,
    sink: &Sink,
    method: MethodArg,
    regime: RegimeArg,
    sweep_arg: Option<SweepArg>,
    range: (Option<f64>, Option<f64>),
    points: usize,
) -> Result<()> {
    let c = &d.config;
    let regime = match regime {
        RegimeArg::Long => Regime::Long,
        RegimeArg::Short => Regime::Short,
    };
    let tag = match (method, regime) {
        (MethodArg::Numeric, _) => FluxMethod::Numeric,
        (MethodArg::Cw, _) => FluxMethod::Cw,
        (MethodArg::Analytic, _) => FluxMethod::Analytic,
        (MethodArg::Asymptotic, Regime::Long) => FluxMethod::AsymptoticLong,
        (MethodArg::Asymptotic, Regime::Short) => FluxMethod::AsymptoticShort,
    };
    match sweep_arg {
        None => {
            let r = match method {
                MethodArg::Numeric => flux_pulsed_numeric(c, &d.numerics)?,
                MethodArg::Cw => flux_cw(c, &d.numerics)?,
                MethodArg::Analytic => flux_analytic(c)?,
                MethodArg::Asymptotic => flux_asymptotic(c, regime)?,
            };
            report_result(&r);
            sink.emit("flux.csv", |w| {
                writeln!(w, "method,N_triplets_per_s,eta")?;
                writeln!(w, "{},{},{}", r.method, fmt_num(r.n), fmt_num(r.eta))
            })
        }
        Some(p) => {
            let (lo, hi, unit, param, unit_name) = sweep_defaults(p);
            let (a, b) = (range.0.unwrap_or(lo), range.1.unwrap_or(hi));
            let values: Vec<f64> = linspace(a, b, points).into_iter().map(|v| v * unit).collect();
            let mut methods = vec![tag];
            if tag != FluxMethod::Analytic && !c.is_degenerate() && c.common_filter().is_some() {
                methods.push(FluxMethod::Analytic);
            }
            let mut rows = sweep(c, param, &values, &methods, &d.numerics)?;
            for row in &mut rows {
                for r in &row.results {
                    for warn in &r.warnings {
                        eprintln!("warning: {warn}");
                    }
                }
                row.value /= unit;
            }
            eprintln!("param_value is in {unit_name}");
            sink.emit(&format!("sweep_{unit_name}.csv"), |w| write_sweep_csv(w, &rows))
        }
    }
}

fn report_result(r: &FluxResult) {
    eprintln!("method {}: N = {:.6e} triplets/s, eta = {:.6e}", r.method, r.n, r.eta);
    let g = &r.diagnostics;
    if g.refinements > 0 {
        eprintln!(
            "  accepted after {} refinements, relative change {:.2e}, {} evaluations",
            g.refinements, g.relative_change, g.evaluations
        );
    }
    for w in &r.warnings {
        eprintln!("warning: {w}");
    }
}

fn cmd_report(d: &Design, numeric: bool) -> Result<()> {
    let c = &d.config;
    let mut out = io::BufWriter::new(io::stdout().lock());
    let um = |w: f64| wavelength_from_omega(w) * 1e6;
    writeln!(out, "design            {}", d.name)?;
    writeln!(out, "core radius       {:.7} um", c.fiber.radius * 1e6)?;
    if let Some(l) = d.phasematch_lambda {
        writeln!(out, "  (degenerate phasematching at {:.4} um)", l * 1e6)?;
    }
    writeln!(out, "fiber length      {:.4} cm", c.length * 100.0)?;
    writeln!(out, "pump              {:.5} um, sigma {:.4e} rad/s", um(c.centers.omega_p), c.pump.sigma)?;
    writeln!(
        out,
        "emission          r {:.5} um, s {:.5} um, i {:.5} um",
        um(c.centers.omega_r),
        um(c.centers.omega_s),
        um(c.centers.omega_i)
    )?;
    writeln!(out, "average power     {:.4} mW at {:.4} MHz", c.avg_power * 1e3, c.rep_rate * 1e-6)?;
    writeln!(out, "peak power        {:.4e} W", c.peak_power())?;
    writeln!(out, "pump photon rate  {:.6e} /s", pump_photon_rate(&Constants::SI, c.centers.omega_p, c.avg_power))?;
    let co = c.coefficients()?;
    writeln!(out, "A_eff             {:.5} um^2", co.a_eff * 1e12)?;
    writeln!(out, "gamma             {:.6e} 1/(W km)", co.gamma * 1e3)?;
    writeln!(out, "gamma_p           {:.6e} 1/(W km)", co.gamma_p * 1e3)?;
    writeln!(
        out,
        "gamma_pmu         {:.6e}, {:.6e}, {:.6e} 1/(W km)",
        co.gamma_pmu[0] * 1e3,
        co.gamma_pmu[1] * 1e3,
        co.gamma_pmu[2] * 1e3
    )?;
    writeln!(
        out,
        "Phi_NL at peak    {:.6e} rad/m ({})",
        nonlinear_phase(&co, c.peak_power()),
        if c.include_nonlinear_phase { "included" } else { "not included" }
    )?;
    let (kp, ke) = center_slownesses(c)?;
    writeln!(out, "k'_p              {:.9e} s/m", kp)?;
    writeln!(out, "k'_r,s,i          {:.9e}, {:.9e}, {:.9e} s/m", ke[0], ke[1], ke[2])?;
    let tau = tau_coefficients(c)?;
    writeln!(
        out,
        "tau_r,s,i         {:.6e}, {:.6e}, {:.6e} s",
        tau.tau_r, tau.tau_s, tau.tau_i
    )?;
    if let Some(sf) = c.common_filter() {
        writeln!(out, "filter sigma_f    {:.4e} rad/s", sf)?;
        match characteristic_length(c, sf) {
            Ok(l0) => writeln!(out, "L0                {:.6} mm", l0 * 1e3)?,
            Err(e) => writeln!(out, "L0                {e}")?,
        }
        writeln!(out, "Phi               {:.6e}", phi_parameter(&tau, c.pump.sigma, sf))?;
    }
    match flux_analytic(c) {
        Ok(r) => writeln!(out, "N analytic        {:.6e} /s, eta {:.6e}", r.n, r.eta)?,
        Err(e) => writeln!(out, "N analytic        n/a ({e})")?,
    }
    if numeric {
        out.flush()?;
        let r = flux_pulsed_numeric(c, &d.numerics)?;
        writeln!(out, "N numeric         {:.6e} /s, eta {:.6e}", r.n, r.eta)?;
    }
    out.flush()?;
    Ok(())
}
