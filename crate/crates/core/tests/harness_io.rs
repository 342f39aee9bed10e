use std::collections::HashSet;
use std::io::Write;

use peakloc::elevation::*;
use peakloc::harness::*;
use peakloc::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn hill_csv(n: usize, header: bool, junk: usize) -> String {
    let mut s = String::new();
    if header {
        s.push_str("id,lon,lat,alt\n");
    }
    for k in 0..n * n {
        let (i, j) = (k / n, k % n);
        let lat = i as f64 / (n - 1) as f64;
        let lon = j as f64 / (n - 1) as f64;
        let alt = 100.0 - 80.0 * ((lat - 0.6).powi(2) + (lon - 0.3).powi(2));
        s.push_str(&format!("{k},{lon},{lat},{alt}\n"));
    }
    for _ in 0..junk {
        s.push_str("x,not,a,number\n");
    }
    s
}

#[test]
fn elevation_header_is_skipped_and_junk_counted() {
    let cloud = parse_elevation(
        hill_csv(20, true, 2).as_bytes(),
        &CsvSchema::default(),
        "mem",
    )
    .unwrap();
    assert_eq!(cloud.len(), 400);
    assert_eq!(cloud.malformed, 2);
    assert_eq!(cloud.bounds, Rect::new(0.0, 1.0, 0.0, 1.0).unwrap());
}

#[test]
fn too_many_malformed_lines_fail() {
    let err = parse_elevation(
        hill_csv(5, false, 3).as_bytes(),
        &CsvSchema::default(),
        "mem",
    )
    .unwrap_err();
    assert!(
        matches!(err, Error::Malformed { malformed: 3, .. }),
        "{err:?}"
    );
}

#[test]
fn raster_values_come_from_the_cloud() {
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let points: Vec<_> = (0..500)
        .map(|_| ElevationPoint {
            lon: r.random_range(-1.0..1.0),
            lat: r.random_range(0.0..2.0),
            alt: r.random_range(0.0..1000.0f64).round(),
        })
        .collect();
    let alts: HashSet<u64> = points.iter().map(|p| p.alt.to_bits()).collect();
    let cloud = ElevationCloud::new(points).unwrap();
    let raster = rasterize(&cloud, cloud.bounds, 37).unwrap();
    assert!(raster.iter().all(|x| alts.contains(&x.to_bits())));
    assert_eq!(raster, rasterize(&cloud, cloud.bounds, 37).unwrap());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    write_raster_csv(&path, &raster).unwrap();
    assert_eq!(read_raster_csv(&path).unwrap(), raster);
}

#[test]
fn disjoint_roi_is_rejected() {
    let cloud = parse_elevation(
        hill_csv(5, false, 0).as_bytes(),
        &CsvSchema::default(),
        "mem",
    )
    .unwrap();
    let far = Rect::new(5.0, 6.0, 5.0, 6.0).unwrap();
    assert!(matches!(
        rasterize(&cloud, far, 10),
        Err(Error::EmptyIntersection)
    ));
}

#[test]
fn table_csv_round_trip_is_exact() {
    let mut r = ChaCha8Rng::seed_from_u64(8);
    let mut t = ExperimentTable::new();
    for c in 0..4 {
        let col: Vec<f64> = (0..50)
            .map(|_| r.random_range(-1e6..1e6) * r.random::<f64>().powi(7))
            .collect();
        t.push_column(format!("c{c}"), col).unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    emit_table(&t, &path, &TableFormat::Csv).unwrap();
    let back = read_table(&path).unwrap();
    for name in t.names() {
        let (a, b) = (t.column(name).unwrap(), back.column(name).unwrap());
        assert!(a
            .iter()
            .zip(b)
            .all(|(x, y)| (x - y).abs() <= 1e-12 * x.abs().max(1.0)));
    }
}

fn small_bench() -> BenchConfig {
    BenchConfig {
        alphas: vec![0.3, 0.5],
        trials: 6,
        grid_sizes: vec![20],
        max_stages: 3,
        ..BenchConfig::default()
    }
}

#[test]
fn bench_is_bit_reproducible() {
    let cfg = small_bench();
    let subject = synthetic_subject(&cfg.profile);
    let (a, sa) = samples_vs_error(&subject, &cfg, 17).unwrap();
    let (b, sb) = samples_vs_error(&subject, &cfg, 17).unwrap();
    assert_eq!(a.to_csv().unwrap(), b.to_csv().unwrap());
    assert_eq!(sa.to_csv().unwrap(), sb.to_csv().unwrap());
    let (c, _) = samples_vs_error(&subject, &cfg, 18).unwrap();
    assert_ne!(a.to_csv().unwrap(), c.to_csv().unwrap());
    assert_eq!(a.n_rows(), cfg.methods.len() * cfg.alphas.len());
}

#[test]
fn sweep_detects_wide_fields_more_often() {
    let cfg = SweepConfig {
        window_sizes: vec![30],
        spreads: vec![0.02, 0.2],
        trials: 40,
        noise: NoiseModel::None,
        ..SweepConfig::default()
    };
    let t = detection_probability_sweep(&cfg, 5).unwrap();
    let p = t.column("probability").unwrap();
    assert!(p.iter().all(|x| (0.0..=1.0).contains(x)));
    assert!(p[1] >= p[0], "{p:?}");
    let again = detection_probability_sweep(&cfg, 5).unwrap();
    assert_eq!(t.to_csv().unwrap(), again.to_csv().unwrap());
}

#[test]
fn elevation_run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("hill.csv");
    std::fs::File::create(&data)
        .unwrap()
        .write_all(hill_csv(30, true, 0).as_bytes())
        .unwrap();
    let mut cfg = HarnessConfig::default();
    cfg.elevation.path = Some(data);
    cfg.elevation.raster_n = 40;
    cfg.elevation.bench = BenchConfig {
        methods: vec![Method::Pamcur, Method::McOnly],
        ..small_bench()
    };
    let out = dir.path().join("out");
    let files = run_elevation(&cfg, 1, &out).unwrap();
    assert!(files.iter().all(|f| f.exists()));
    let t = read_table(&out.join("elevation.csv")).unwrap();
    assert_eq!(t.n_rows(), 4);
    let raster = read_raster_csv(&out.join("raster.csv")).unwrap();
    let (pi, pj) = ground_truth_peak(&raster).unwrap();
    // Hill top sits at lat 0.6, lon 0.3.
    assert!((pi as f64 / 40.0 - 0.6).abs() < 0.05 && (pj as f64 / 40.0 - 0.3).abs() < 0.05);
}

#[test]
fn config_toml_overrides_defaults() {
    let cfg = HarnessConfig::from_toml("[sweep]\ntrials = 3\n[coherence]\nsizes = [11]\n").unwrap();
    assert_eq!(cfg.sweep.trials, 3);
    assert_eq!(cfg.coherence.sizes, vec![11]);
    assert_eq!(cfg.bench, BenchConfig::default());
    assert!(HarnessConfig::from_toml("[sweep]\ntrials = \"x\"\n").is_err());
}
