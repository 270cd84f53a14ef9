//! `mwimg`: simulate backscatter, image it classically or coarse-to-fine,
//! check consistency and benchmark. Lengths on the command line are in
//! centimeters (resolution in millimeters); everything written to disk is SI.

mod bench;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mwimg::beamform::Interpolation;
use mwimg::io::{self, RunConfig};
use mwimg::sim::{self, Scenario};
use mwimg::{
    consistency_check, run_framework, BackscatterDataset, Beamformer, BeamformerKind, DecimationMode, Phantom,
    Preset, Scatterer,
};
use serde::Serialize;

use crate::bench::BenchMode;

#[derive(Parser)]
#[command(name = "mwimg", version, about = "Confocal microwave imaging with coarse-to-fine localization")]
struct Cli {
    /// Worker threads for focal-point evaluation (results do not depend on it).
    #[arg(long, global = true, env = "MWIMG_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multistatic backscatter dataset.
    Simulate(SimulateArgs),
    /// Classical full-resolution image.
    Image(ImageArgs),
    /// Coarse-to-fine framework: decimated pass, ROI selection, fine ROI pass.
    Framework(FrameworkArgs),
    /// Run the framework at two decimation factors and compare the ROIs.
    Check(CheckArgs),
    /// Compare basic/manual/automatic imaging for DAS and DMAS.
    Bench(BenchArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Reference acquisition: dataset1 or dataset2.
    #[arg(long)]
    preset: Option<String>,
    /// Phantom radius, cm.
    #[arg(long)]
    phantom_radius: Option<f64>,
    /// Tumor center `X,Y`, cm.
    #[arg(long, allow_hyphen_values = true)]
    tumor: Option<String>,
    /// Tumor diameter, cm.
    #[arg(long, default_value_t = 1.0)]
    tumor_diameter: f64,
    #[arg(long, default_value_t = 1.0)]
    contrast: f64,
    /// Leave the phantom tumor-free.
    #[arg(long, conflicts_with = "tumor")]
    no_tumor: bool,
    /// Extra point scatterer `X,Y,CONTRAST` (cm); repeatable.
    #[arg(long = "scatterer", allow_hyphen_values = true)]
    scatterers: Vec<String>,
    #[arg(long, default_value_t = 12)]
    antennas: usize,
    /// Antenna ring radius, cm (defaults to the phantom radius).
    #[arg(long)]
    ring_radius: Option<f64>,
    /// Propagation speed, m/s.
    #[arg(long)]
    speed: Option<f64>,
    /// Sampling interval, ps.
    #[arg(long, default_value_t = 10.0)]
    dt_ps: f64,
    /// Samples per channel (defaults to the ring round trip plus the pulse).
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    noise_std: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep only the diagonal (monostatic) channels.
    #[arg(long)]
    monostatic: bool,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Clone)]
struct GridArgs {
    /// Final resolution, mm.
    #[arg(long)]
    resolution: Option<f64>,
    /// Radius of the imaged disk, cm (defaults to the antenna ring's inscribed circle).
    #[arg(long)]
    fov_radius: Option<f64>,
    /// Override the propagation speed stored in the dataset, m/s.
    #[arg(long)]
    speed: Option<f64>,
    #[arg(long, value_parser = ["linear", "nearest"], default_value = "linear")]
    interpolation: String,
}

#[derive(Args)]
struct ImageArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(long, default_value = "das")]
    kind: String,
    /// Use the monostatic delay law on the diagonal channels only.
    #[arg(long)]
    monostatic: bool,
    #[command(flatten)]
    grid: GridArgs,
    /// Output prefix; writes PREFIX.csv, .pgm, .json and .report.json.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct FrameworkArgs {
    #[arg(short, long)]
    input: PathBuf,
    /// Base configuration (JSON); explicit flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    kind: Option<String>,
    /// `auto:DIAM_CM` or `manual:FACTOR`.
    #[arg(long)]
    mode: Option<String>,
    /// Sliding-frame fraction of the quadrant side.
    #[arg(long)]
    frame: Option<f64>,
    #[arg(long)]
    n_min: Option<usize>,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(long)]
    d1: usize,
    #[arg(long)]
    d2: usize,
    #[arg(long, default_value = "das")]
    kind: String,
    /// Smallest tumor to resolve, cm; bounds the acceptable factors.
    #[arg(long, default_value_t = 1.0)]
    min_tumor: f64,
    #[arg(long, default_value_t = 0.25)]
    frame: f64,
    #[arg(long, default_value_t = 4)]
    n_min: usize,
    #[command(flatten)]
    grid: GridArgs,
    /// JSON report path.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "das,dmas")]
    kinds: Vec<String>,
    /// Comma-separated: basic, manual:D, auto:DIAM_CM.
    #[arg(long, value_delimiter = ',', default_value = "basic,manual:7,auto:1")]
    modes: Vec<String>,
    #[arg(long, default_value_t = 5)]
    repeat: usize,
    #[arg(long, default_value_t = 0.25)]
    frame: f64,
    #[arg(long, default_value_t = 4)]
    n_min: usize,
    #[command(flatten)]
    grid: GridArgs,
    /// Output prefix; writes PREFIX.csv and PREFIX.json.
    #[arg(short, long)]
    output: PathBuf,
}

fn parse_kind(s: &str) -> Result<BeamformerKind> {
    Ok(s.parse::<BeamformerKind>()?)
}

fn parse_mode(s: &str) -> Result<DecimationMode> {
    let (family, value) = s
        .split_once(':')
        .with_context(|| format!("mode `{s}` must look like auto:DIAM_CM or manual:FACTOR"))?;
    match family {
        "auto" | "automatic" => {
            let cm: f64 = value.parse().with_context(|| format!("bad tumor diameter in `{s}`"))?;
            if !(cm.is_finite() && cm > 0.0) {
                bail!("tumor diameter in `{s}` must be positive");
            }
            Ok(DecimationMode::Automatic {
                min_tumor_diameter: cm / 100.0,
            })
        }
        "manual" => {
            let factor: usize = value.parse().with_context(|| format!("bad factor in `{s}`"))?;
            if factor == 0 {
                bail!("decimation factor in `{s}` must be at least 1");
            }
            Ok(DecimationMode::Manual { factor })
        }
        other => bail!("unknown mode family `{other}` (auto|manual)"),
    }
}

fn parse_bench_mode(s: &str) -> Result<BenchMode> {
    if s == "basic" {
        Ok(BenchMode::Basic)
    } else {
        parse_mode(s).map(BenchMode::Framework)
    }
}

/// Parses `X,Y[,...]` in centimeters into meters.
fn parse_cm_list(s: &str, n: usize) -> Result<Vec<f64>> {
    let vals = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map(|v| v / 100.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .with_context(|| format!("cannot parse `{s}` as numbers"))?;
    if vals.len() != n {
        bail!("expected {n} comma-separated values, got `{s}`");
    }
    Ok(vals)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn interpolation(s: &str) -> Interpolation {
    match s {
        "nearest" => Interpolation::Nearest,
        _ => Interpolation::Linear,
    }
}

fn load_input(path: &Path, speed: Option<f64>) -> Result<BackscatterDataset> {
    let ds = io::load_dataset(path)?;
    Ok(match speed {
        Some(v) => ds.with_propagation_speed(v)?,
        None => ds,
    })
}

fn apply_grid_args(cfg: &mut RunConfig, grid: &GridArgs) {
    if let Some(mm) = grid.resolution {
        cfg.resolution = mm / 1000.0;
    }
    if let Some(cm) = grid.fov_radius {
        cfg.fov_radius = Some(cm / 100.0);
    }
    if grid.speed.is_some() {
        cfg.propagation_speed = grid.speed;
    }
}

#[derive(Serialize)]
struct SimulateReport<'a> {
    scenario: &'a Scenario,
    monostatic: bool,
    antennas: usize,
    samples: usize,
    file_bytes: u64,
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let mut sc = match (&args.preset, args.phantom_radius) {
        (Some(p), None) => Scenario::preset(p.parse::<Preset>()?),
        (None, Some(r)) => {
            let tumor = match &args.tumor {
                Some(t) => {
                    let v = parse_cm_list(t, 2)?;
                    Some([v[0], v[1]])
                }
                None if args.no_tumor => None,
                None => bail!("--phantom-radius needs --tumor X,Y or --no-tumor"),
            };
            let mut sc = Scenario::ring(r / 100.0, tumor);
            if let Some(s) = sc.phantom.scatterers.first_mut() {
                s.diameter = args.tumor_diameter / 100.0;
                s.contrast = args.contrast;
            }
            sc
        }
        (Some(_), Some(_)) => bail!("--preset and --phantom-radius are mutually exclusive"),
        (None, None) => bail!("give either --preset or --phantom-radius"),
    };
    if args.preset.is_some() && args.no_tumor {
        sc.phantom = Phantom::tumor_free(sc.phantom.center, sc.phantom.radius);
    }
    for s in &args.scatterers {
        let (xy, contrast) = s
            .rsplit_once(',')
            .with_context(|| format!("scatterer `{s}` must look like X,Y,CONTRAST"))?;
        let v = parse_cm_list(xy, 2)?;
        sc.phantom.scatterers.push(Scatterer {
            center: [v[0], v[1]],
            diameter: args.tumor_diameter / 100.0,
            contrast: contrast.trim().parse().with_context(|| format!("bad contrast in `{s}`"))?,
        });
    }
    sc.antennas = args.antennas;
    if let Some(r) = args.ring_radius {
        sc.ring_radius = r / 100.0;
    }
    if let Some(v) = args.speed {
        sc.propagation_speed = v;
    }
    sc.sample_interval = args.dt_ps * 1e-12;
    sc.noise_std = args.noise_std;
    sc.seed = args.seed;

    let geom = sc.geometry()?;
    let n = match args.samples {
        Some(n) => n,
        None => sc.record_length().max(sim::required_samples(&sc.phantom, &geom, &sc.pulse)),
    };
    let mut ds = sim::simulate(&sc.phantom, &geom, &sc.pulse, n, sc.noise_std, sc.seed)?;
    if args.monostatic {
        ds = ds.to_monostatic();
    }
    io::save_dataset(&ds, &args.output)?;
    let file_bytes = std::fs::metadata(&args.output)
        .with_context(|| format!("{}", args.output.display()))?
        .len();
    let report = SimulateReport {
        scenario: &sc,
        monostatic: args.monostatic,
        antennas: ds.antenna_count(),
        samples: ds.n_samples(),
        file_bytes,
    };
    io::write_json(&report, with_suffix(&args.output, ".report.json"))?;
    println!(
        "wrote {} ({} antennas, {} samples/channel, {} bytes)",
        args.output.display(),
        ds.antenna_count(),
        ds.n_samples(),
        file_bytes
    );
    Ok(())
}

#[derive(Serialize)]
struct ImageReport {
    kind: BeamformerKind,
    monostatic: bool,
    resolution: f64,
    dims: [usize; 2],
    points_evaluated: u64,
    detected_cell: [usize; 2],
    detected_position: [f64; 2],
    detected_energy: f64,
    elapsed_s: f64,
}

fn cmd_image(args: ImageArgs) -> Result<()> {
    let kind = parse_kind(&args.kind)?;
    let mut cfg = RunConfig {
        kind,
        ..Default::default()
    };
    apply_grid_args(&mut cfg, &args.grid);
    cfg.validate()?;
    let ds = load_input(&args.input, cfg.propagation_speed)?;
    let grid = cfg.grid_for(ds.geometry())?;
    let bf = if args.monostatic {
        Beamformer::monostatic(&ds, kind).context("--monostatic needs a monostatic dataset")?
    } else {
        Beamformer::new(&ds, kind)
    }
    .with_interpolation(interpolation(&args.grid.interpolation));

    let t = std::time::Instant::now();
    let map = bf.image(&grid, &grid.full_region(), 1)?;
    let elapsed_s = t.elapsed().as_secs_f64();
    io::export_energy_map(&map, &args.output)?;
    let (ix, iy, energy) = map.argmax().expect("image is non-empty");
    let report = ImageReport {
        kind,
        monostatic: args.monostatic,
        resolution: grid.resolution(),
        dims: grid.dims(),
        points_evaluated: bf.evaluated(),
        detected_cell: [ix, iy],
        detected_position: grid.cell_center(ix, iy),
        detected_energy: energy,
        elapsed_s,
    };
    io::write_json(&report, with_suffix(&args.output, ".report.json"))?;
    let p = report.detected_position;
    println!(
        "{kind} image {}x{}: peak at ({:.2}, {:.2}) cm",
        grid.dims()[0],
        grid.dims()[1],
        p[0] * 100.0,
        p[1] * 100.0
    );
    Ok(())
}

#[derive(Serialize)]
struct FrameworkOutput<'a> {
    config: &'a RunConfig,
    report: &'a mwimg::FrameworkReport,
}

fn cmd_framework(args: FrameworkArgs) -> Result<()> {
    let mut cfg: RunConfig = match &args.config {
        Some(p) => io::read_json(p)?,
        None => RunConfig::default(),
    };
    if let Some(k) = &args.kind {
        cfg.kind = parse_kind(k)?;
    }
    if let Some(m) = &args.mode {
        cfg.mode = parse_mode(m)?;
    }
    if let Some(f) = args.frame {
        cfg.frame_fraction = f;
    }
    if let Some(n) = args.n_min {
        cfg.n_min = n;
    }
    apply_grid_args(&mut cfg, &args.grid);
    cfg.output = Some(args.output.clone());
    cfg.validate()?;

    let ds = load_input(&args.input, cfg.propagation_speed)?;
    let grid = cfg.grid_for(ds.geometry())?;
    let mut fw = cfg.framework_config();
    fw.interpolation = interpolation(&args.grid.interpolation);
    let (composite, report) = run_framework(&ds, cfg.kind, &grid, cfg.mode, &fw)?;
    io::export_energy_map(&composite, &args.output)?;
    io::write_json(
        &FrameworkOutput {
            config: &cfg,
            report: &report,
        },
        with_suffix(&args.output, ".report.json"),
    )?;
    let p = report.detected_position;
    println!(
        "{} D={} iterations={} roi={:?} points={}+{} ratio={:.2} peak=({:.2}, {:.2}) cm",
        report.kind,
        report.decimation_factor,
        report.iterations,
        report.final_region,
        report.coarse_points_evaluated,
        report.fine_points_evaluated,
        report.reduction_ratio,
        p[0] * 100.0,
        p[1] * 100.0
    );
    Ok(())
}

fn cmd_check(args: CheckArgs) -> Result<()> {
    let kind = parse_kind(&args.kind)?;
    let mut cfg = RunConfig {
        kind,
        frame_fraction: args.frame,
        n_min: args.n_min,
        mode: DecimationMode::Automatic {
            min_tumor_diameter: args.min_tumor / 100.0,
        },
        ..Default::default()
    };
    apply_grid_args(&mut cfg, &args.grid);
    cfg.validate()?;
    let ds = load_input(&args.input, cfg.propagation_speed)?;
    let grid = cfg.grid_for(ds.geometry())?;
    let mut fw = cfg.framework_config();
    fw.interpolation = interpolation(&args.grid.interpolation);
    let report = consistency_check(&ds, kind, &grid, args.d1, args.d2, &fw)?;
    io::write_json(&report, &args.output)?;
    match report.verdict {
        mwimg::Verdict::Confirmed { overlap } => println!("confirmed: overlap {overlap:?}"),
        mwimg::Verdict::Inconsistent { first, second } => {
            println!("inconsistent: {first:?} vs {second:?}")
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct BenchOutput<'a> {
    repeat: usize,
    records: &'a [bench::BenchRecord],
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let kinds = args.kinds.iter().map(|k| parse_kind(k)).collect::<Result<Vec<_>>>()?;
    let modes = args
        .modes
        .iter()
        .map(|m| parse_bench_mode(m))
        .collect::<Result<Vec<_>>>()?;
    if args.repeat == 0 {
        bail!("--repeat must be at least 1");
    }
    let mut cfg = RunConfig {
        frame_fraction: args.frame,
        n_min: args.n_min,
        ..Default::default()
    };
    apply_grid_args(&mut cfg, &args.grid);
    cfg.validate()?;
    let ds = load_input(&args.input, cfg.propagation_speed)?;
    let grid = cfg.grid_for(ds.geometry())?;
    let mut fw = cfg.framework_config();
    fw.interpolation = interpolation(&args.grid.interpolation);
    let records = bench::run_bench(&ds, &kinds, &modes, &grid, &fw, args.repeat)?;

    let csv = with_suffix(&args.output, ".csv");
    std::fs::write(&csv, bench::to_csv(&records)).with_context(|| format!("{}", csv.display()))?;
    io::write_json(
        &BenchOutput {
            repeat: args.repeat,
            records: &records,
        },
        with_suffix(&args.output, ".json"),
    )?;
    print!("{}", bench::to_table(&records));
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Image(a) => cmd_image(a),
        Command::Framework(a) => cmd_framework(a),
        Command::Check(a) => cmd_check(a),
        Command::Bench(a) => cmd_bench(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
