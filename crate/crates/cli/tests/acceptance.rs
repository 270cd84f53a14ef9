//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion
//! (with measured values) and exits nonzero if any criterion fails.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use mwimg::beamform::{aligned_channel, das_energy, dmas_energy};
use mwimg::coarse2fine::{auto_decimation_factor, class_distances, decision_metric};
use mwimg::io::{encode_dataset, energy_map_csv};
use mwimg::{
    consistency_check, run_framework, select_roi, ArrayGeometry, BackscatterDataset, Beamformer, BeamformerKind,
    DecimationMode, Disk, EnergyMap, FrameworkConfig, FrameworkReport, ImagingGrid, Preset, Scatterer, Scenario,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const RES: f64 = 0.001;
const AUTO_1CM: DecimationMode = DecimationMode::Automatic {
    min_tumor_diameter: 0.01,
};

struct Suite {
    failed: Vec<usize>,
}

impl Suite {
    fn record(&mut self, n: usize, title: &str, pass: bool, detail: String) {
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("[{tag}] criterion {n}: {title}: {detail}");
        if !pass {
            self.failed.push(n);
        }
    }
}

fn breast_grid(radius: f64) -> ImagingGrid {
    ImagingGrid::covering_disk(
        Disk {
            center: [0.0, 0.0],
            radius,
        },
        RES,
    )
    .expect("valid grid")
}

fn preset(p: Preset) -> (Scenario, BackscatterDataset, ImagingGrid) {
    let sc = Scenario::preset(p);
    let ds = sc.simulate().expect("preset simulates");
    let grid = breast_grid(sc.phantom.radius);
    (sc, ds, grid)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs[xs.len() / 2]
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Report JSON without wall-clock fields.
fn timeless(report: &FrameworkReport) -> serde_json::Value {
    let mut v = serde_json::to_value(report).unwrap();
    v.as_object_mut().unwrap().remove("elapsed");
    v
}

fn localization(s: &mut Suite) {
    let mut pass = true;
    let mut parts = Vec::new();
    for p in [Preset::Dataset1, Preset::Dataset2] {
        let (sc, ds, grid) = preset(p);
        let tumor = sc.phantom.scatterers[0].center;
        for kind in [BeamformerKind::Das, BeamformerKind::Dmas] {
            let (_, rep) = run_framework(&ds, kind, &grid, AUTO_1CM, &FrameworkConfig::default()).unwrap();
            let err = dist(rep.detected_position, tumor);
            pass &= err <= 0.005;
            parts.push(format!("{p:?}/{kind} err {:.2} mm", err * 1e3));
        }
    }
    s.record(1, "composite peak within 5 mm of tumor", pass, parts.join(", "));
}

fn reduction_ratios(s: &mut Suite) {
    let (_, ds, grid) = preset(Preset::Dataset1);
    let cfg = FrameworkConfig::default();
    let (_, das) = run_framework(&ds, BeamformerKind::Das, &grid, AUTO_1CM, &cfg).unwrap();

    let mut full_times = Vec::new();
    let mut fw_times = Vec::new();
    let mut dmas_points = 0.0;
    for _ in 0..5 {
        let bf = Beamformer::new(&ds, BeamformerKind::Dmas);
        let t = Instant::now();
        bf.image(&grid, &grid.full_region(), 1).unwrap();
        full_times.push(t.elapsed().as_secs_f64());
        let (_, rep) = run_framework(&ds, BeamformerKind::Dmas, &grid, AUTO_1CM, &cfg).unwrap();
        fw_times.push(rep.elapsed.total());
        dmas_points = rep.reduction_ratio;
    }
    let (full, fw) = (median(full_times), median(fw_times));
    let time_ratio = full / fw;
    let pass = das.decimation_factor == 7 && das.reduction_ratio >= 4.0 && time_ratio >= 8.0;
    s.record(
        2,
        "reduction ratios on dataset1 at D=7",
        pass,
        format!(
            "DAS point ratio {:.2} (>= 4), DMAS wall-clock ratio {time_ratio:.2} (>= 8; full {:.3} s vs framework {:.3} s, point ratio {dmas_points:.2})",
            das.reduction_ratio, full, fw
        ),
    );
}

fn oracle_equivalence(s: &mut Suite) {
    let start = Instant::now();
    let (_, ds, grid) = preset(Preset::Dataset1);
    let cfg = FrameworkConfig::default();
    let mut mismatches = 0usize;
    let mut checked = 0usize;
    for kind in [BeamformerKind::Das, BeamformerKind::Dmas] {
        let (composite, rep) = run_framework(&ds, kind, &grid, AUTO_1CM, &cfg).unwrap();
        let coarse = Beamformer::new(&ds, kind).image(&grid, &grid.full_region(), 7).unwrap();
        for (ix, iy, v) in coarse.iter() {
            let direct = das_or_dmas(kind, &ds, &grid.cell_center(ix, iy));
            checked += 1;
            if v != direct || composite.get(ix, iy) != Some(v) {
                mismatches += 1;
            }
        }
        for (ix, iy, v) in composite.iter() {
            if rep.final_region.contains(ix, iy) {
                checked += 1;
                if v != das_or_dmas(kind, &ds, &grid.cell_center(ix, iy)) {
                    mismatches += 1;
                }
            }
        }
    }

    let (_, ds2, grid2) = preset(Preset::Dataset2);
    let mut identical = true;
    for kind in [BeamformerKind::Das, BeamformerKind::Dmas] {
        let classical = Beamformer::new(&ds2, kind).image(&grid2, &grid2.full_region(), 1).unwrap();
        let (composite, _) =
            run_framework(&ds2, kind, &grid2, DecimationMode::Manual { factor: 1 }, &cfg).unwrap();
        identical &= energy_map_csv(&classical) == energy_map_csv(&composite);
    }
    let secs = start.elapsed().as_secs_f64();
    s.record(
        3,
        "coarse and composite values equal direct kernel calls; manual:1 equals classical image",
        mismatches == 0 && identical && secs < 60.0,
        format!("{mismatches} mismatches over {checked} cells, manual:1 CSV identical: {identical}, {secs:.1} s"),
    );
}

fn das_or_dmas(kind: BeamformerKind, ds: &BackscatterDataset, r: &[f64; 2]) -> f64 {
    match kind {
        BeamformerKind::Das => das_energy(ds, r),
        BeamformerKind::Dmas => dmas_energy(ds, r),
    }
}

fn dmas_algebra(s: &mut Suite) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let antennas = (0..4)
            .map(|k| {
                let a = std::f64::consts::FRAC_PI_2 * k as f64 + rng.gen_range(-0.3..0.3);
                let r = rng.gen_range(0.005..0.02);
                [r * a.cos(), r * a.sin(), 0.0]
            })
            .collect();
        let geom = ArrayGeometry::new(antennas, 3e8, 1e-11).unwrap();
        let signals = (0..16 * 64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ds = BackscatterDataset::new(geom, 64, 0.0, signals).unwrap();
        let r = [rng.gen_range(-0.005..0.005), rng.gen_range(-0.005..0.005)];

        let aligned: Vec<Vec<f64>> = (0..4)
            .flat_map(|i| (0..4).map(move |j| (i, j)))
            .map(|(i, j)| aligned_channel(&ds, i, j, &r))
            .collect();
        let mut brute = 0.0;
        for t in 0..64 {
            for k in 0..aligned.len() {
                for l in k + 1..aligned.len() {
                    brute += aligned[k][t] * aligned[l][t];
                }
            }
        }
        let identity = dmas_energy(&ds, &r);
        worst = worst.max((identity - brute).abs() / brute.abs());
    }
    s.record(
        4,
        "DMAS identity vs brute-force pairs on 100 random datasets",
        worst <= 1e-9,
        format!("max relative difference {worst:.3e} (<= 1e-9)"),
    );
}

fn metric_cases(s: &mut Suite) {
    let v = [1.0, 3.0, 5.0, 7.0];
    let same = decision_metric(&v, 5.0);
    let fresh = decision_metric(&v, 0.0);
    let hand = decision_metric(&[0.0, 4.0], 2.0);
    let (w, b) = class_distances(&[1.0, 3.0], &[2.0, 6.0]);
    let factor = auto_decimation_factor(0.01, 0.001);
    let pass = same.metric == 4.0
        && fresh.metric == 5.0
        && hand.metric == 3.0
        && w == 10.0
        && b == 4.0
        && factor == 7;
    s.record(
        5,
        "metric unit cases",
        pass,
        format!(
            "delta=0 -> {} (mean 4), delta=1 -> {} (variance 5), hand -> {} (3), W={w} B={b} (10, 4), auto factor {factor} (7)",
            same.metric, fresh.metric, hand.metric
        ),
    );
}

fn decimation_safety(s: &mut Suite) {
    let radius = 0.10;
    let grid = breast_grid(radius);
    let cfg = FrameworkConfig::default();
    let d = auto_decimation_factor(cfg.min_tumor_diameter, RES);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut covered = 0;
    let mut contained = 0;
    let mut misses = Vec::new();
    let trials = 200;
    for trial in 0..trials {
        let diameter = rng.gen_range(0.01..=0.02);
        let reach = radius - diameter / 2.0 - 0.01;
        let (a, rr) = (rng.gen_range(0.0..std::f64::consts::TAU), reach * rng.gen::<f64>().sqrt());
        let c = [rr * a.cos(), rr * a.sin()];

        let half = diameter / 2f64.sqrt() / 2.0;
        let inside = Beamformer::focal_cells(&grid, &grid.full_region(), d).into_iter().any(|(ix, iy)| {
            let p = grid.cell_center(ix, iy);
            (p[0] - c[0]).abs() <= half && (p[1] - c[1]).abs() <= half
        });
        covered += inside as usize;

        let mut sc = Scenario::ring(radius, None);
        sc.phantom.scatterers.push(Scatterer {
            center: c,
            diameter,
            contrast: 1.0,
        });
        let ds = sc.simulate().unwrap();
        let coarse = Beamformer::new(&ds, BeamformerKind::Das)
            .image(&grid, &grid.full_region(), d)
            .unwrap();
        let sel = select_roi(&coarse, &grid.full_region(), &cfg).unwrap();
        let (cx, cy) = grid.cell_of(c).unwrap();
        if sel.region.contains(cx, cy) {
            contained += 1;
        } else {
            misses.push(format!(
                "trial {trial}: tumor ({:.2}, {:.2}) cm d={:.2} cm, roi {:?}, {:?}",
                c[0] * 100.0,
                c[1] * 100.0,
                diameter * 100.0,
                sel.region,
                sel.termination
            ));
        }
    }
    for m in &misses {
        println!("    miss {m}");
    }
    let pass = covered == trials && contained * 100 >= 95 * trials;
    s.record(
        6,
        "decimation safety over 200 random placements",
        pass,
        format!(
            "coarse point in inscribed square {covered}/{trials} (100%), ROI holds center {contained}/{trials} ({:.1}%, >= 95%)",
            100.0 * contained as f64 / trials as f64
        ),
    );
}

fn consistency(s: &mut Suite) {
    let cfg = FrameworkConfig::default();
    let mut confirmed = Vec::new();
    for p in [Preset::Dataset1, Preset::Dataset2] {
        let (_, ds, grid) = preset(p);
        for kind in [BeamformerKind::Das, BeamformerKind::Dmas] {
            let rep = consistency_check(&ds, kind, &grid, 5, 7, &cfg).unwrap();
            confirmed.push((format!("{p:?}/{kind}"), rep.verdict.is_confirmed()));
        }
    }
    let all_confirmed = confirmed.iter().all(|c| c.1);

    let grid = breast_grid(0.10);
    let seeds = 20;
    let mut inconsistent = [0usize; 2];
    for seed in 0..seeds {
        let mut sc = Scenario::ring(0.10, None);
        sc.noise_std = 1.0;
        sc.seed = seed;
        let ds = sc.simulate().unwrap();
        for (k, kind) in [BeamformerKind::Das, BeamformerKind::Dmas].into_iter().enumerate() {
            let rep = consistency_check(&ds, kind, &grid, 5, 7, &cfg).unwrap();
            if !rep.verdict.is_confirmed() {
                inconsistent[k] += 1;
            }
        }
    }
    let noise_ok = inconsistent.iter().all(|&n| n * 100 >= 70 * seeds as usize);
    let tumor_detail: Vec<String> = confirmed
        .iter()
        .map(|(l, c)| format!("{l} {}", if *c { "confirmed" } else { "inconsistent" }))
        .collect();
    s.record(
        7,
        "consistency check (5, 7)",
        all_confirmed && noise_ok,
        format!(
            "tumor: {}; pure noise inconsistent DAS {}/{seeds}, DMAS {}/{seeds} (>= 70% each)",
            tumor_detail.join(", "),
            inconsistent[0],
            inconsistent[1]
        ),
    );
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

fn run_cli(dir: &Path, args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_mwimg"))
        .current_dir(dir)
        .args(args)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_default()
}

fn report_without_elapsed(p: &Path) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_slice(&read(p)).unwrap_or_default();
    if let Some(r) = v.get_mut("report").and_then(|r| r.as_object_mut()) {
        r.remove("elapsed");
    }
    v
}

fn determinism(s: &mut Suite) {
    let mut sc = Scenario::preset(Preset::Dataset2);
    sc.noise_std = 0.05;
    sc.seed = 42;
    let a = encode_dataset(&sc.simulate().unwrap());
    let b = encode_dataset(&sc.simulate().unwrap());
    let datasets = a == b;

    let ds = sc.simulate().unwrap();
    let grid = breast_grid(0.05);
    let cfg = FrameworkConfig::default();
    let run = |threads| {
        in_pool(threads, || {
            [BeamformerKind::Das, BeamformerKind::Dmas].map(|kind| {
                let (map, rep) = run_framework(&ds, kind, &grid, AUTO_1CM, &cfg).unwrap();
                let full: EnergyMap = Beamformer::new(&ds, kind).image(&grid, &grid.full_region(), 1).unwrap();
                (energy_map_csv(&map), timeless(&rep), energy_map_csv(&full))
            })
        })
    };
    let library = run(1) == run(4);

    // Same relative arguments in two directories; only --threads differs.
    let dir = tempfile::tempdir().unwrap();
    let mut ok = true;
    for t in ["1", "3"] {
        let d = dir.path().join(t);
        std::fs::create_dir(&d).unwrap();
        ok &= run_cli(
            &d,
            &["--threads", t, "simulate", "--preset", "dataset2", "--noise-std", "0.05", "--seed", "42", "-o", "ds.bin"],
        );
        for kind in ["das", "dmas"] {
            ok &= run_cli(
                &d,
                &["--threads", t, "framework", "-i", "ds.bin", "--kind", kind, "--mode", "auto:1", "-o", kind],
            );
        }
    }
    let (d1, d3) = (dir.path().join("1"), dir.path().join("3"));
    let mut cli = ok;
    let mut files = vec!["ds.bin".to_string()];
    for kind in ["das", "dmas"] {
        files.extend(["csv", "pgm", "json"].map(|ext| format!("{kind}.{ext}")));
        let report = format!("{kind}.report.json");
        cli &= report_without_elapsed(&d1.join(&report)) == report_without_elapsed(&d3.join(&report));
    }
    for f in &files {
        let x = read(&d1.join(f));
        cli &= !x.is_empty() && x == read(&d3.join(f));
    }
    s.record(
        8,
        "determinism across seeds and thread counts",
        datasets && library && cli,
        format!(
            "same-seed datasets identical: {datasets}, library 1 vs 4 threads identical: {library}, CLI --threads 1 vs 3 identical: {cli}"
        ),
    );
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut suite = Suite { failed: Vec::new() };
    localization(&mut suite);
    reduction_ratios(&mut suite);
    oracle_equivalence(&mut suite);
    dmas_algebra(&mut suite);
    metric_cases(&mut suite);
    decimation_safety(&mut suite);
    consistency(&mut suite);
    determinism(&mut suite);
    println!(
        "acceptance: {} of 8 criteria passed in {:.1} s",
        8 - suite.failed.len(),
        start.elapsed().as_secs_f64()
    );
    if suite.failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {:?}", suite.failed);
        ExitCode::FAILURE
    }
}
