//! Problem catalog, timing and throughput reports.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::backprojector::{count_ops, Backprojector, KernelVariant, OpCounters, ProblemDims};
use crate::error::{Error, Result};
use crate::geometry::{build_geometry, GeometryConfig, ProjectionMatrix, ScanGeometry};
use crate::oracle::{analytic_projections, rmse, EllipsoidPhantom};
use crate::tensors::{restore_volume, transpose_projections, Layout, ProjectionStack, Volume};

pub const SCHEMA_VERSION: u32 = 1;

/// Source-to-isocentre distance used by catalog geometries.
pub const CATALOG_D: f64 = 1000.0;
/// Source-to-detector distance used by catalog geometries.
pub const CATALOG_BIG_D: f64 = 1536.0;

/// Giga voxel updates per second.
pub fn gups(nx: usize, ny: usize, nz: usize, np: usize, seconds: f64) -> Result<f64> {
    if !seconds.is_finite() || seconds <= 0.0 {
        return Err(Error::NonPositiveTime(seconds));
    }
    let updates = nx as f64 * ny as f64 * nz as f64 * np as f64;
    Ok(updates / seconds / 1e9)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Problem {
    pub label: String,
    /// `(n, n, np)`: square detector size and projection count.
    pub proj: (usize, usize, usize),
    pub vol: (usize, usize, usize),
    /// Which full-size problem this one stands in for, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analogue: Option<String>,
}

impl Problem {
    pub fn new(label: &str, det: usize, np: usize, vol: usize) -> Self {
        Self {
            label: label.to_string(),
            proj: (det, det, np),
            vol: (vol, vol, vol),
            analogue: None,
        }
    }

    fn scaled_from(mut self, label: &str) -> Self {
        self.analogue = Some(label.to_string());
        self
    }

    pub fn dims(&self) -> ProblemDims {
        ProblemDims {
            np: self.proj.2,
            nh: self.proj.1,
            nw: self.proj.0,
            nx: self.vol.0,
            ny: self.vol.1,
            nz: self.vol.2,
        }
    }

    pub fn updates(&self) -> u64 {
        self.dims().updates()
    }

    /// Catalog geometry: equiangular full circle with a detector fitted to
    /// the volume footprint.
    pub fn geometry(&self) -> Result<ScanGeometry> {
        let cfg = GeometryConfig {
            d: CATALOG_D,
            big_d: CATALOG_BIG_D,
            nw: self.proj.0,
            nh: self.proj.1,
            pixel_pitch_u: 1.0,
            pixel_pitch_v: 1.0,
            voxel_size: 1.0,
            np: self.proj.2,
            angles: None,
            nx: self.vol.0,
            ny: self.vol.1,
            nz: self.vol.2,
        };
        build_geometry(cfg.fit_detector(1.0)?)
    }
}

/// Reduced sizes that run on a desktop in seconds.
pub fn desk_catalog() -> Vec<Problem> {
    vec![
        Problem::new("D1", 64, 128, 64).scaled_from("P1 at 1/4"),
        Problem::new("D2", 128, 128, 128).scaled_from("P5 at 1/4"),
        Problem::new("D3", 128, 256, 256).scaled_from("P2 at 1/2"),
    ]
}

/// The full evaluation sizes, 512 projections each.
pub fn paper_catalog() -> Vec<Problem> {
    [
        ("P1", 256, 256),
        ("P2", 256, 512),
        ("P3", 256, 1024),
        ("P4", 512, 256),
        ("P5", 512, 512),
        ("P6", 512, 1024),
        ("P7", 1024, 256),
        ("P8", 1024, 512),
        ("P9", 1024, 1024),
        ("P10", 1024, 1300),
    ]
    .into_iter()
    .map(|(label, det, vol)| Problem::new(label, det, 512, vol))
    .collect()
}

pub fn by_label(label: &str) -> Option<Problem> {
    desk_catalog()
        .into_iter()
        .chain(paper_catalog())
        .find(|p| p.label.eq_ignore_ascii_case(label))
}

/// Named catalogs: `desk` or `full`.
pub fn catalog(name: &str) -> Result<Vec<Problem>> {
    match name {
        "desk" => Ok(desk_catalog()),
        "full" | "paper" => Ok(paper_catalog()),
        other => Err(Error::Bench(format!("unknown catalog {other:?}"))),
    }
}

fn alloc_zeroed(len: usize, label: &str) -> Result<Vec<f32>> {
    let mut v = Vec::new();
    v.try_reserve_exact(len).map_err(|_| {
        Error::Bench(format!(
            "problem {label}: cannot allocate {} MiB",
            len * 4 / (1 << 20)
        ))
    })?;
    v.resize(len, 0.0);
    Ok(v)
}

/// Inputs for one problem, generated once and shared by every run.
pub struct BenchData {
    pub problem: Problem,
    pub geometry: ScanGeometry,
    pub matrices: Vec<ProjectionMatrix<f32>>,
    pub natural: ProjectionStack<f32>,
    pub transposed: ProjectionStack<f32>,
    pub transpose_seconds: f64,
}

impl BenchData {
    /// Shepp-Logan projections computed from exact chord lengths.
    pub fn prepare(problem: &Problem, threads: usize) -> Result<Self> {
        let geometry = problem.geometry()?;
        let (nx, ny, nz) = problem.vol;
        let radius = crate::oracle::inscribed_radius((nx, ny, nz), 1.0);
        let phantom = EllipsoidPhantom::shepp_logan(radius);
        let labelled = |e: Error| Error::Bench(format!("problem {}: {e}", problem.label));
        let natural = analytic_projections::<f32>(&phantom, &geometry, threads).map_err(labelled)?;
        let start = Instant::now();
        let transposed = transpose_projections(&natural)?;
        let transpose_seconds = start.elapsed().as_secs_f64();
        Ok(Self {
            problem: problem.clone(),
            matrices: geometry.matrices(),
            geometry,
            natural,
            transposed,
            transpose_seconds,
        })
    }

    pub fn input_for(&self, variant: KernelVariant) -> &ProjectionStack<f32> {
        match variant.layout() {
            Layout::Natural => &self.natural,
            Layout::Transposed => &self.transposed,
        }
    }

    /// A zeroed volume in the layout `variant` expects.
    pub fn empty_volume(&self, variant: KernelVariant) -> Result<Volume<f32>> {
        let (nx, ny, nz) = self.problem.vol;
        let data = alloc_zeroed(nx * ny * nz, &self.problem.label)?;
        Volume::from_vec(data, nx, ny, nz, variant.layout())
    }

    /// One untimed reconstruction, returned in natural layout.
    pub fn reconstruct(&self, variant: KernelVariant, nb: usize, threads: usize) -> Result<Volume<f32>> {
        let bp = Backprojector::new(variant, nb, threads)?;
        let mut vol = self.empty_volume(variant)?;
        bp.run(self.input_for(variant), &self.matrices, &mut vol)?;
        match vol.layout() {
            Layout::Natural => Ok(vol),
            Layout::Transposed => restore_volume(&vol),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema_version: u32,
    pub label: String,
    pub variant: KernelVariant,
    pub nb: usize,
    pub threads: usize,
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub np: usize,
    /// Median kernel wall time.
    pub seconds: f64,
    pub gups: f64,
    /// Every timed repeat, in run order.
    pub samples: Vec<f64>,
    pub counters: OpCounters,
    pub transpose_seconds: f64,
    /// RMSE against the baseline kernel, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rmse_vs_baseline: Option<f64>,
}

impl BenchReport {
    pub fn recomputed_gups(&self) -> Result<f64> {
        gups(self.nx, self.ny, self.nz, self.np, self.seconds)
    }

    pub const CSV_HEADER: [&'static str; 10] = [
        "label",
        "variant",
        "nb",
        "threads",
        "seconds",
        "gups",
        "dot_ops",
        "vol_words",
        "proj_words",
        "transpose_seconds",
    ];

    pub fn csv_record(&self) -> [String; 10] {
        [
            self.label.clone(),
            self.variant.name().to_string(),
            self.nb.to_string(),
            self.threads.to_string(),
            format!("{:.9}", self.seconds),
            format!("{:.6}", self.gups),
            self.counters.dot_ops.to_string(),
            self.counters.vol_word_accesses.to_string(),
            self.counters.proj_word_accesses.to_string(),
            format!("{:.9}", self.transpose_seconds),
        ]
    }
}

pub fn write_csv<W: Write>(out: W, reports: &[BenchReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(BenchReport::CSV_HEADER)?;
    for r in reports {
        w.write_record(r.csv_record())?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn median(samples: &[f64]) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Times `repeats` runs after one discarded warm-up. The volume is cleared
/// outside the timed region.
pub fn run_bench_on(
    data: &BenchData,
    variant: KernelVariant,
    nb: usize,
    threads: usize,
    repeats: usize,
) -> Result<BenchReport> {
    Ok(run_sweep_on(data, variant, &[nb], threads, repeats)?.remove(0))
}

/// Times every batch size in `nbs` with the repeats interleaved: round `r`
/// times each `nb` once before round `r + 1` starts. Slow drift in machine
/// speed then lands on all batch sizes alike instead of on whichever one
/// happened to be running.
pub fn run_sweep_on(
    data: &BenchData,
    variant: KernelVariant,
    nbs: &[usize],
    threads: usize,
    repeats: usize,
) -> Result<Vec<BenchReport>> {
    let img = data.input_for(variant);
    let mut vol = data.empty_volume(variant)?;
    let runners = nbs
        .iter()
        .map(|&nb| Backprojector::new(variant, nb, threads))
        .collect::<Result<Vec<_>>>()?;
    for bp in &runners {
        bp.run(img, &data.matrices, &mut vol)?;
    }
    let mut samples = vec![Vec::with_capacity(repeats.max(1)); runners.len()];
    for _ in 0..repeats.max(1) {
        for (bp, times) in runners.iter().zip(&mut samples) {
            vol.data_mut().fill(0.0);
            let start = Instant::now();
            bp.run(img, &data.matrices, &mut vol)?;
            times.push(start.elapsed().as_secs_f64());
        }
    }
    let (nx, ny, nz) = data.problem.vol;
    let np = data.problem.proj.2;
    runners
        .iter()
        .zip(samples)
        .map(|(bp, samples)| {
            let seconds = median(&samples).max(f64::MIN_POSITIVE);
            Ok(BenchReport {
                schema_version: SCHEMA_VERSION,
                label: data.problem.label.clone(),
                variant,
                nb: bp.nb(),
                threads: bp.threads(),
                nx,
                ny,
                nz,
                np,
                seconds,
                gups: gups(nx, ny, nz, np, seconds)?,
                samples,
                counters: count_ops(variant, data.problem.dims(), bp.nb()),
                transpose_seconds: if variant.layout() == Layout::Transposed {
                    data.transpose_seconds
                } else {
                    0.0
                },
                rmse_vs_baseline: None,
            })
        })
        .collect()
}

pub fn run_bench(
    problem: &Problem,
    variant: KernelVariant,
    nb: usize,
    threads: usize,
    repeats: usize,
) -> Result<BenchReport> {
    let data = BenchData::prepare(problem, threads)?;
    run_bench_on(&data, variant, nb, threads, repeats)
}

/// RMSE of `variant` against the baseline on the same inputs.
pub fn verify_against_baseline(
    data: &BenchData,
    variant: KernelVariant,
    nb: usize,
    threads: usize,
) -> Result<f64> {
    let reference = data.reconstruct(KernelVariant::Baseline, 1, threads)?;
    let candidate = data.reconstruct(variant, nb, threads)?;
    rmse(&reference, &candidate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gups_examples() {
        let g = gups(256, 256, 256, 512, 2.0).unwrap();
        assert!((g - 4.294967296).abs() / 4.294967296 < 1e-12);
        let h = gups(256, 256, 256, 512, 4.0).unwrap();
        assert!((g / h - 2.0).abs() < 1e-12);
        let small = gups(32, 32, 32, 8, 1e-3).unwrap();
        assert!((small - 0.262144).abs() < 1e-12);
    }

    #[test]
    fn gups_rejects_bad_time() {
        for t in [0.0, -1.0, f64::NAN] {
            assert!(matches!(gups(1, 1, 1, 1, t), Err(Error::NonPositiveTime(_))));
        }
    }

    #[test]
    fn catalogs() {
        let desk = desk_catalog();
        assert_eq!(desk.len(), 3);
        assert_eq!(desk[1].proj, (128, 128, 128));
        assert_eq!(desk[2].vol, (256, 256, 256));
        let full = paper_catalog();
        assert_eq!(full.len(), 10);
        assert!(full.iter().all(|p| p.proj.2 == 512));
        assert_eq!(by_label("p10").unwrap().vol, (1300, 1300, 1300));
        assert!(by_label("Q1").is_none());
        assert!(catalog("huge").is_err());
        for p in desk.iter().chain(&full) {
            p.geometry().unwrap();
        }
    }

    #[test]
    fn median_odd_and_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn report_roundtrip_and_csv() {
        let p = Problem::new("T", 16, 8, 8);
        let r = run_bench(&p, KernelVariant::SublinePrefetch, 4, 1, 3).unwrap();
        assert_eq!(r.samples.len(), 3);
        assert!((r.recomputed_gups().unwrap() - r.gups).abs() <= 1e-12 * r.gups);
        assert_eq!(r.counters, count_ops(r.variant, p.dims(), 4));
        let json = serde_json::to_string(&r).unwrap();
        let back: BenchReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
        let mut buf = Vec::new();
        write_csv(&mut buf, &[r]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(&BenchReport::CSV_HEADER.join(",")));
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn sweep_keeps_batch_order() {
        let p = Problem::new("T", 16, 8, 8);
        let data = BenchData::prepare(&p, 1).unwrap();
        let sweep = run_sweep_on(&data, KernelVariant::Subline, &[8, 1, 4], 2, 2).unwrap();
        let nbs: Vec<usize> = sweep.iter().map(|r| r.nb).collect();
        assert_eq!(nbs, [8, 1, 4]);
        for r in &sweep {
            assert_eq!(r.samples.len(), 2);
            assert_eq!(r.counters, count_ops(KernelVariant::Subline, p.dims(), r.nb));
        }
        assert!(run_sweep_on(&data, KernelVariant::Subline, &[3], 1, 1).is_err());
    }

    #[test]
    fn allocation_failure_names_problem() {
        let err = alloc_zeroed(usize::MAX / 8, "P42").unwrap_err();
        assert!(err.to_string().contains("P42"));
    }
}
