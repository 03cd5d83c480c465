//! `backproj`: generate data, reconstruct, verify, count and benchmark.
//!
//! Exit status: 0 on success, 1 when a verification fails, 2 on usage or
//! configuration errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use backproj::backprojector::{count_ops, BatchConfig, Backprojector, KernelVariant, ProblemDims};
use backproj::bench::{self, BenchData, BenchReport};
use backproj::geometry::{read_geometry, read_matrices, write_matrices, ScanGeometry};
use backproj::io::{read_projections, read_volume, write_json, write_projections, write_volume};
use backproj::oracle::{forward_project, inscribed_radius, rasterize_phantom, rmse, EllipsoidPhantom};
use backproj::tensors::{Layout, ProjectionStack, Volume};
use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "backproj", version, about = "Cone-beam CT back-projection kernels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Forward-project a phantom and write projections, matrices and ground truth.
    GenData(GenData),
    /// Reconstruct a volume from a gen-data directory.
    Backproject(BackprojectArgs),
    /// Compare two volumes by RMSE.
    Verify(VerifyArgs),
    /// Print the operation counts of a kernel for a problem size.
    CountOps(CountOpsArgs),
    /// Time kernels on a problem catalog.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct GenData {
    /// Geometry JSON; defaults to the D1 desk problem.
    #[arg(long)]
    geometry: Option<PathBuf>,
    /// Phantom JSON; defaults to a Shepp-Logan head filling the volume.
    #[arg(long)]
    phantom: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, env = "BACKPROJ_THREADS")]
    threads: Option<usize>,
}

#[derive(Args, Debug)]
struct BackprojectArgs {
    /// Directory written by gen-data.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value = "subline_prefetch")]
    variant: KernelVariant,
    /// Projections per batch; defaults to the largest divisor of np up to 32.
    #[arg(long)]
    nb: Option<usize>,
    #[arg(long, env = "BACKPROJ_THREADS")]
    threads: Option<usize>,
    /// Output raw volume; its sidecar goes next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
}

#[derive(Args, Debug)]
struct CountOpsArgs {
    #[arg(long, default_value = "baseline")]
    variant: KernelVariant,
    /// Volume size `NX,NY,NZ` (or `NXxNYxNZ`).
    #[arg(long, value_parser = parse_triple)]
    dims: (usize, usize, usize),
    #[arg(long)]
    np: usize,
    /// Detector `NW,NH`; defaults to twice the largest volume edge.
    #[arg(long, value_parser = parse_pair)]
    detector: Option<(usize, usize)>,
    #[arg(long, default_value_t = 1)]
    nb: usize,
    /// Also run the kernel in counting mode and check it against the closed form.
    #[arg(long)]
    instrumented: bool,
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// `desk` or `full`.
    #[arg(long, default_value = "desk")]
    catalog: String,
    /// Comma-separated labels; all problems of the catalog if omitted.
    #[arg(long, value_delimiter = ',')]
    problems: Vec<String>,
    /// `all` or a comma-separated list.
    #[arg(long, default_value = "all")]
    variants: String,
    #[arg(long, value_delimiter = ',', default_value = "32")]
    nb: Vec<usize>,
    #[arg(long, value_delimiter = ',', env = "BACKPROJ_THREADS")]
    threads: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// CSV report path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON report path.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Check every variant against the baseline; exit 1 above the tolerance.
    #[arg(long)]
    verify: bool,
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
}

fn parse_list(s: &str, n: usize) -> Result<Vec<usize>, String> {
    let parts: Vec<&str> = s.split([',', 'x', 'X']).map(str::trim).collect();
    if parts.len() != n {
        return Err(format!("expected {n} sizes, got {s:?}"));
    }
    parts
        .iter()
        .map(|p| p.parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
        .collect()
}

fn parse_triple(s: &str) -> Result<(usize, usize, usize), String> {
    let v = parse_list(s, 3)?;
    Ok((v[0], v[1], v[2]))
}

fn parse_pair(s: &str) -> Result<(usize, usize), String> {
    let v = parse_list(s, 2)?;
    Ok((v[0], v[1]))
}

fn default_threads(flag: Option<usize>) -> usize {
    flag.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1)
}

/// Outcome of a command that ran to completion.
enum Status {
    Ok,
    VerificationFailed,
}

fn gen_data(args: GenData) -> anyhow::Result<Status> {
    let geom = match &args.geometry {
        Some(path) => read_geometry(path)?,
        None => bench::desk_catalog()[0].geometry()?,
    };
    let dims = geom.volume_dims();
    let phantom = match &args.phantom {
        Some(path) => EllipsoidPhantom::from_file(path)?,
        None => EllipsoidPhantom::shepp_logan(inscribed_radius(dims, geom.voxel_size())),
    };
    phantom.validate_for(dims, geom.voxel_size())?;
    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    let truth = rasterize_phantom::<f32>(&phantom, dims, geom.voxel_size())?;
    let proj = forward_project(&truth, &geom, default_threads(args.threads))?;
    write_projections(&args.out.join("projections.raw"), &proj)?;
    write_matrices(&args.out.join("matrices.raw"), &geom.matrices())?;
    write_json(&args.out.join("geometry.json"), &geom)?;
    write_volume(&args.out.join("volume_truth.raw"), &truth)?;
    println!(
        "wrote {} projections {}x{} and a {}x{}x{} volume to {}",
        geom.np(),
        geom.nw(),
        geom.nh(),
        dims.0,
        dims.1,
        dims.2,
        args.out.display()
    );
    Ok(Status::Ok)
}

struct Inputs {
    geom: ScanGeometry,
    proj: ProjectionStack<f32>,
    mats: Vec<backproj::ProjectionMatrix32>,
}

fn load_inputs(dir: &Path) -> anyhow::Result<Inputs> {
    let geom = read_geometry(&dir.join("geometry.json"))?;
    let proj = read_projections(&dir.join("projections.raw"))?;
    let mats = read_matrices(&dir.join("matrices.raw"))?;
    if proj.layout() != Layout::Natural {
        bail!("projections in {} must be NATURAL layout", dir.display());
    }
    if (proj.np(), proj.nh(), proj.nw()) != (geom.np(), geom.nh(), geom.nw()) {
        bail!(
            "projections are {}x{}x{} but the geometry expects {}x{}x{}",
            proj.np(),
            proj.nh(),
            proj.nw(),
            geom.np(),
            geom.nh(),
            geom.nw()
        );
    }
    Ok(Inputs { geom, proj, mats })
}

fn backproject(args: BackprojectArgs) -> anyhow::Result<Status> {
    let inputs = load_inputs(&args.input)?;
    let np = inputs.proj.np();
    let nb = args
        .nb
        .unwrap_or_else(|| (1..=BatchConfig::MAX).rev().find(|nb| np % nb == 0).unwrap_or(1));
    let bp = Backprojector::new(args.variant, nb, default_threads(args.threads))?;
    let vol = bp.reconstruct(&inputs.proj, &inputs.mats, inputs.geom.volume_dims())?;
    write_volume(&args.out, &vol)?;
    println!(
        "{} nb={} threads={} -> {}",
        bp.variant(),
        bp.nb(),
        bp.threads(),
        args.out.display()
    );
    Ok(Status::Ok)
}

fn verify(args: VerifyArgs) -> anyhow::Result<Status> {
    let a = read_volume(&args.a)?;
    let mut b = read_volume(&args.b)?;
    if b.layout() != a.layout() {
        b = match b.layout() {
            Layout::Natural => backproj::tensors::transpose_volume(&b)?,
            Layout::Transposed => backproj::tensors::restore_volume(&b)?,
        };
    }
    let r = rmse(&a, &b)?;
    println!("rmse={r:e} tol={:e}", args.tol);
    Ok(if r <= args.tol {
        Status::Ok
    } else {
        Status::VerificationFailed
    })
}

fn count(args: CountOpsArgs) -> anyhow::Result<Status> {
    let (nx, ny, nz) = args.dims;
    let edge = nx.max(ny).max(nz);
    let (nw, nh) = args.detector.unwrap_or((2 * edge + 4, 2 * edge + 4));
    let dims = ProblemDims {
        np: args.np,
        nh,
        nw,
        nx,
        ny,
        nz,
    };
    if args.variant != KernelVariant::Baseline {
        BatchConfig::for_projections(args.nb, args.np)?;
    }
    let closed = count_ops(args.variant, dims, args.nb);
    let counted = if args.instrumented {
        Some(instrumented_counts(args.variant, dims, args.nb)?)
    } else {
        None
    };
    if args.json {
        let value = serde_json::json!({
            "variant": args.variant,
            "dims": dims,
            "nb": args.nb,
            "counters": closed,
            "instrumented": counted,
        });
        println!("{}", serde_json::to_string_pretty(&value)?);
    } else {
        println!("variant: {}", args.variant);
        println!("dot_ops: {}", closed.dot_ops);
        println!("vol_word_accesses: {}", closed.vol_word_accesses);
        println!("proj_word_accesses: {}", closed.proj_word_accesses);
        println!("interp_ops: {}", closed.interp_ops);
        println!("subline_builds: {}", closed.subline_builds);
        if let Some(c) = &counted {
            let verdict = if *c == closed { "match" } else { "MISMATCH" };
            println!("instrumented: {verdict}");
        }
    }
    Ok(match counted {
        Some(c) if c != closed => Status::VerificationFailed,
        _ => Status::Ok,
    })
}

fn instrumented_counts(
    variant: KernelVariant,
    dims: ProblemDims,
    nb: usize,
) -> anyhow::Result<backproj::OpCounters> {
    let cfg = backproj::GeometryConfig {
        d: bench::CATALOG_D,
        big_d: bench::CATALOG_BIG_D,
        nw: dims.nw,
        nh: dims.nh,
        pixel_pitch_u: 1.0,
        pixel_pitch_v: 1.0,
        voxel_size: 1.0,
        np: dims.np,
        angles: None,
        nx: dims.nx,
        ny: dims.ny,
        nz: dims.nz,
    };
    let geom = backproj::build_geometry(cfg.fit_detector(1.0)?)?;
    let layout = variant.layout();
    let img = ProjectionStack::<f32>::zeros(dims.np, dims.nh, dims.nw, layout)?;
    let mut vol = Volume::<f32>::zeros(dims.nx, dims.ny, dims.nz, layout)?;
    let bp = Backprojector::new(variant, nb, default_threads(None))?;
    Ok(bp.run_counted(&img, &geom.matrices(), &mut vol)?)
}

fn parse_variants(s: &str) -> anyhow::Result<Vec<KernelVariant>> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(KernelVariant::ALL.to_vec());
    }
    s.split(',')
        .map(|v| v.parse::<KernelVariant>().map_err(anyhow::Error::from))
        .collect()
}

fn run_bench(args: BenchArgs) -> anyhow::Result<Status> {
    let mut problems = bench::catalog(&args.catalog)?;
    if !args.problems.is_empty() {
        for label in &args.problems {
            if !problems.iter().any(|p| p.label.eq_ignore_ascii_case(label)) {
                bail!("no problem {label:?} in catalog {:?}", args.catalog);
            }
        }
        problems.retain(|p| args.problems.iter().any(|l| l.eq_ignore_ascii_case(&p.label)));
    }
    let variants = parse_variants(&args.variants)?;
    let threads = if args.threads.is_empty() {
        vec![default_threads(None)]
    } else {
        args.threads.clone()
    };
    let mut reports: Vec<BenchReport> = Vec::new();
    let mut failed = false;
    println!(
        "{:<5} {:<17} {:>3} {:>3} {:>12} {:>9}",
        "label", "variant", "nb", "thr", "seconds", "gups"
    );
    for problem in &problems {
        let data = BenchData::prepare(problem, default_threads(None))?;
        let baseline = if args.verify {
            Some(data.reconstruct(KernelVariant::Baseline, 1, default_threads(None))?)
        } else {
            None
        };
        for &variant in &variants {
            let batches: &[usize] = if variant == KernelVariant::Baseline { &[1] } else { &args.nb };
            for &t in &threads {
                for mut report in bench::run_sweep_on(&data, variant, batches, t, args.repeats)? {
                    if let Some(reference) = &baseline {
                        let out = data.reconstruct(variant, report.nb, t)?;
                        let r = rmse(reference, &out)?;
                        failed |= r > args.tol;
                        report.rmse_vs_baseline = Some(r);
                    }
                    println!(
                        "{:<5} {:<17} {:>3} {:>3} {:>12.6} {:>9.4}{}",
                        report.label,
                        report.variant.name(),
                        report.nb,
                        report.threads,
                        report.seconds,
                        report.gups,
                        report
                            .rmse_vs_baseline
                            .map(|r| format!("  rmse={r:.2e}"))
                            .unwrap_or_default()
                    );
                    reports.push(report);
                }
            }
        }
    }
    if let Some(path) = &args.out {
        let file = fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
        bench::write_csv(file, &reports)?;
    }
    if let Some(path) = &args.json {
        write_json(path, &reports)?;
    }
    Ok(if failed {
        Status::VerificationFailed
    } else {
        Status::Ok
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Backproject(a) => backproject(a),
        Command::Verify(a) => verify(a),
        Command::CountOps(a) => count(a),
        Command::Bench(a) => run_bench(a),
    };
    match result {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::VerificationFailed) => {
            eprintln!("verification failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
