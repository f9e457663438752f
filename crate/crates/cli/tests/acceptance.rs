//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Criteria 6 and 7 need BSDS500 boundary data. Point `CA_EDGE_BSDS_MANIFEST`
//! at a manifest (`image,annotations,category`, PNG annotator maps); the
//! first 20 entries form the desk-scale subset. Without it those criteria
//! fail as blocked, and the same protocol runs on synthetic scenes as a
//! labeled diagnostic.

#[path = "../../core/tests/oracle/mod.rs"]
mod oracle;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use ca_edge::ca::{decode_rule, encode_rule};
use ca_edge::canny::{canny, CannyConfig};
use ca_edge::dataset::{load_manifest, Category, Dataset, DatasetManifest, Preprocess};
use ca_edge::harness::{
    radius_comparison, rank_models, run_experiment, write_outputs, ExperimentKind, ExperimentSpec,
};
use ca_edge::metrics::{confusion, dsc, evaluate, mse, psnr, ssim, SsimConfig};
use ca_edge::pso::{optimize, PsoConfig, PsoHyper, Swarm};
use ca_edge::synthetic::{write_dataset, SceneConfig};
use ca_edge::{detect_edges, max_rule, CellTable, DetectorParams, EdgeMap, GrayImage, Radius};
use oracle::SplitMix;

const ORACLE_TIME_LIMIT: Duration = Duration::from_secs(5);
const METRIC_TOL: f64 = 1e-9;
const SPHERE_TOL: f64 = 1e-2;
const DESK_DSC_FLOOR: f64 = 0.40;
const DESK_TIME_LIMIT: Duration = Duration::from_secs(600);
const DESK_IMAGES: usize = 20;
const DESK_PARTICLES: usize = 10;
const DESK_ITERATIONS: usize = 50;
const DESK_SEED: u64 = 42;
const DESK_P: f64 = 0.02;
const BSDS_ENV: &str = "CA_EDGE_BSDS_MANIFEST";

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn check(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("1 CA oracle equivalence", ca_oracle),
        ("2 rule codec", rule_codec),
        ("3 metric oracles", metric_oracles),
        ("4 monotonicity suites", monotonicity),
        ("5 PSO sanity", pso_sanity),
        ("6 desk-scale DSC band", desk_band),
        ("7 direction vs Canny", canny_direction),
        ("8 reproducibility", reproducibility),
        ("9 soft expectations", soft_expectations),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome::check(false, format!("panicked: {msg}"))
        });
        failed += usize::from(!outcome.pass);
        println!(
            "[{}] {name}: {} ({:.2}s)",
            if outcome.pass { "PASS" } else { "FAIL" },
            outcome.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of 9 criteria passed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

// 1 -------------------------------------------------------------------------

fn ca_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = SplitMix(1);
    let mut mismatches = 0;
    let mut cases = 0;
    for radius in Radius::ALL {
        let table = CellTable::standard(radius);
        for _ in 0..50 {
            let pixels = rng.bytes(64);
            let img = GrayImage::new(8, 8, pixels.clone()).unwrap();
            for _ in 0..10 {
                let delta = rng.below(256) as u8;
                let tau = rng.unit();
                let z = rng.below(max_rule(radius) as u64 + 1) as u32;
                let params = DetectorParams::new(delta, tau, z, &table).unwrap();
                let want = oracle::detect(&pixels, 8, 8, delta, tau, z, radius.get() as u32);
                mismatches += usize::from(detect_edges(&img, &params).data() != &want[..]);
                cases += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    Outcome::check(
        mismatches == 0 && elapsed < ORACLE_TIME_LIMIT,
        format!("{mismatches} mismatches in {cases} cases, {:.3}s (limit 5s)", elapsed.as_secs_f64()),
    )
}

// 2 -------------------------------------------------------------------------

fn rule_codec() -> Outcome {
    let mut mismatches = 0;
    let t1 = CellTable::standard(Radius::One);
    for z in 0..=max_rule(Radius::One) {
        let m = decode_rule(z, &t1).unwrap();
        mismatches += usize::from(encode_rule(m.offsets(), &t1).unwrap() != z);
        let mut want = oracle::mask(z, 1);
        let mut got = m.offsets().to_vec();
        want.sort();
        got.sort();
        mismatches += usize::from(want != got);
    }
    let t2 = CellTable::standard(Radius::Two);
    let mut rng = SplitMix(2);
    for _ in 0..10_000 {
        let z = rng.below(max_rule(Radius::Two) as u64 + 1) as u32;
        let m = decode_rule(z, &t2).unwrap();
        mismatches += usize::from(encode_rule(m.offsets(), &t2).unwrap() != z);
    }
    let maxes = (max_rule(Radius::One), max_rule(Radius::Two));
    Outcome::check(
        mismatches == 0 && maxes == (511, 33_554_431),
        format!("{mismatches} mismatches over 512 + 10000 rules; max_rule = {maxes:?}"),
    )
}

// 3 -------------------------------------------------------------------------

fn metric_oracles() -> Outcome {
    let mut failures = Vec::new();
    let mut expect = |ok: bool, what: &str| {
        if !ok {
            failures.push(what.to_string());
        }
    };

    // 4 detected, 4 annotated, overlap 2
    let det = EdgeMap::from_fn(8, 8, |r, c| r == 0 && c < 4);
    let ann = EdgeMap::from_fn(8, 8, |r, c| r == 0 && (2..6).contains(&c));
    expect(dsc(&det, &ann).unwrap() == 0.5, "dsc overlap example");
    let c = confusion(&det, &ann).unwrap();
    expect((c.tp, c.fp, c.fn_, c.tn) == (2, 2, 2, 58), "confusion example");

    let zeros = EdgeMap::zeros(8, 8);
    let one = EdgeMap::from_fn(8, 8, |r, c| (r, c) == (3, 4));
    let ones = EdgeMap::from_fn(8, 8, |_, _| true);
    expect(mse(&zeros, &one).unwrap() == 65025.0 / 64.0, "mse one of 64");
    expect(mse(&zeros, &ones).unwrap() == 65025.0, "mse all differ");
    expect(mse(&one, &one).unwrap() == 0.0, "mse identical");
    let p = psnr(&zeros, &one).unwrap();
    expect((p - 10.0 * (65025.0f64 / 1016.015625).log10()).abs() < METRIC_TOL, "psnr one of 64");
    expect((p - 18.061_799_739_838_87).abs() < 1e-9, "psnr value");
    expect(psnr(&zeros, &ones).unwrap().abs() < METRIC_TOL, "psnr 0 dB");
    expect(psnr(&one, &one).unwrap() == f64::INFINITY, "psnr identical");

    let (z16, o16) = (EdgeMap::zeros(16, 16), EdgeMap::from_fn(16, 16, |_, _| true));
    let c1 = SsimConfig::default().c1();
    let s = ssim(&z16, &o16).unwrap();
    expect((s - c1 / (65025.0 + c1)).abs() < METRIC_TOL && s < 0.01, "ssim constant 0 vs 255");

    let mut rng = SplitMix(3);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let (a, b) = (rng.bits(1024, 0.3), rng.bits(1024, 0.3));
        let got = ssim(&EdgeMap::new(32, 32, a.clone()).unwrap(), &EdgeMap::new(32, 32, b.clone()).unwrap()).unwrap();
        worst = worst.max((got - oracle::ssim(&a, &b, 32, 32)).abs());
    }
    expect(worst < METRIC_TOL, "ssim windowed oracle");

    let mut identity_failures = 0;
    for i in 0..20 {
        let (w, h) = (11 + i, 11 + 2 * i);
        let a = EdgeMap::new(w, h, rng.bits(w * h, 0.05 + 0.04 * i as f64)).unwrap();
        identity_failures += usize::from(ssim(&a, &a).unwrap() != 1.0);
    }
    expect(identity_failures == 0, "ssim(a,a) = 1");

    Outcome::check(
        failures.is_empty(),
        if failures.is_empty() {
            format!("worked examples exact, ssim oracle max |diff| {worst:.1e}, ssim(a,a)=1 on 20 maps")
        } else {
            format!("failed: {}", failures.join(", "))
        },
    )
}

// 4 -------------------------------------------------------------------------

fn monotonicity() -> Outcome {
    let mut rng = SplitMix(4);
    let mut violations = 0;
    let mut checks = 0;
    for radius in Radius::ALL {
        let table = CellTable::standard(radius);
        for _ in 0..20 {
            let img = GrayImage::new(24, 24, rng.bytes(576)).unwrap();
            let z = rng.below(max_rule(radius) as u64 + 1) as u32;
            let delta = rng.below(256) as u8;
            let tau = rng.unit();
            let taus: Vec<f64> = (0..10).map(|i| i as f64 / 9.0).collect();
            let maps: Vec<EdgeMap> = taus
                .iter()
                .map(|&t| detect_edges(&img, &DetectorParams::new(delta, t, z, &table).unwrap()))
                .collect();
            for pair in maps.windows(2) {
                violations += usize::from(!pair[1].is_subset_of(&pair[0]));
                checks += 1;
            }
            let deltas: Vec<u8> = (0..10).map(|i| (i * 28) as u8).collect();
            let maps: Vec<EdgeMap> = deltas
                .iter()
                .map(|&d| detect_edges(&img, &DetectorParams::new(d, tau, z, &table).unwrap()))
                .collect();
            for pair in maps.windows(2) {
                violations += usize::from(!pair[1].is_subset_of(&pair[0]));
                checks += 1;
            }
        }
    }
    Outcome::check(violations == 0, format!("{violations} violations in {checks} grid steps"))
}

// 5 -------------------------------------------------------------------------

fn pso_sanity() -> Outcome {
    let sphere = |p: [f64; 3]| -p.iter().map(|x| (x - 0.3) * (x - 0.3)).sum::<f64>();
    let mut swarm = Swarm::new(30, 7, PsoHyper::default()).unwrap();
    swarm.evaluate_bests(&sphere);
    for _ in 0..200 {
        swarm.step(&sphere);
    }
    let dist = sphere(swarm.global_best_position).abs().sqrt();

    let data = synthetic_dataset(8, 5);
    let table = CellTable::standard(Radius::One);
    let mut regressions = 0;
    for seed in 0..10 {
        let cfg = PsoConfig {
            particles: 6,
            iterations: 15,
            seed,
            ..PsoConfig::default()
        };
        let result = optimize(&data.samples, &table, &cfg).unwrap();
        regressions += result.history.windows(2).filter(|w| w[1] < w[0]).count();
        let mut s = Swarm::new(10, seed, PsoHyper::default()).unwrap();
        s.evaluate_bests(&sphere);
        let mut last = s.global_best_fitness;
        for _ in 0..50 {
            s.step(&sphere);
            regressions += usize::from(s.global_best_fitness < last);
            last = s.global_best_fitness;
        }
    }
    Outcome::check(
        dist < SPHERE_TOL && regressions == 0,
        format!("sphere |g_best - opt| = {dist:.2e} (limit 1e-2); {regressions} history regressions over 10 seeds"),
    )
}

// 6, 7 ----------------------------------------------------------------------

struct DeskRun {
    label: String,
    best_dsc: f64,
    params: String,
    pso_ssim: (f64, f64),
    canny_ssim: (f64, f64),
    elapsed: Duration,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let s = if v.len() > 1 {
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (m, s)
}

fn desk_protocol(label: &str, manifest: &DatasetManifest) -> DeskRun {
    let start = Instant::now();
    let subset = DatasetManifest {
        entries: manifest.entries.iter().take(DESK_IMAGES).cloned().collect(),
    };
    let pre = Preprocess {
        prob_threshold: DESK_P,
        ..Preprocess::default()
    };
    let data = Dataset::load(&subset, &pre).unwrap();
    let table = CellTable::standard(Radius::One);
    let cfg = PsoConfig {
        particles: DESK_PARTICLES,
        iterations: DESK_ITERATIONS,
        seed: DESK_SEED,
        ..PsoConfig::default()
    };
    let result = optimize(&data.samples, &table, &cfg).unwrap();
    let canny_cfg = CannyConfig::default();
    let (mut pso_ssim, mut canny_ssim) = (Vec::new(), Vec::new());
    for s in &data.samples {
        pso_ssim.push(evaluate(&detect_edges(&s.image, &result.best_params), &s.truth).unwrap().ssim);
        canny_ssim.push(evaluate(&canny(&s.image, &canny_cfg).unwrap(), &s.truth).unwrap().ssim);
    }
    let p = result.best_params.record();
    DeskRun {
        label: format!("{label}, {} images", data.len()),
        best_dsc: result.best_fitness,
        params: format!("delta={} tau={:.6} rule={}", p.delta, p.tau, p.rule),
        pso_ssim: mean_std(&pso_ssim),
        canny_ssim: mean_std(&canny_ssim),
        elapsed: start.elapsed(),
    }
}

fn bsds_run() -> &'static Result<DeskRun, String> {
    static RUN: OnceLock<Result<DeskRun, String>> = OnceLock::new();
    RUN.get_or_init(|| {
        let path = std::env::var_os(BSDS_ENV)
            .ok_or_else(|| format!("BLOCKED: BSDS500 data unavailable (set {BSDS_ENV})"))?;
        let manifest = load_manifest(&path).map_err(|e| format!("BLOCKED: {e}"))?;
        if manifest.len() < DESK_IMAGES {
            return Err(format!("BLOCKED: manifest has {} entries, need {DESK_IMAGES}", manifest.len()));
        }
        Ok(desk_protocol("BSDS500", &manifest))
    })
}

fn synthetic_run() -> &'static DeskRun {
    static RUN: OnceLock<DeskRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let path = write_dataset(dir.path(), DESK_IMAGES, DESK_SEED, &SceneConfig::default()).unwrap();
        desk_protocol("synthetic scenes", &load_manifest(path).unwrap())
    })
}

fn diagnostic(run: &DeskRun) -> String {
    format!(
        "diagnostic on {}: best DSC {:.4}, {}, SSIM pso {:.4} ± {:.4} vs canny {:.4} ± {:.4}",
        run.label, run.best_dsc, run.params, run.pso_ssim.0, run.pso_ssim.1, run.canny_ssim.0, run.canny_ssim.1
    )
}

fn desk_band() -> Outcome {
    match bsds_run() {
        Ok(run) => Outcome::check(
            run.best_dsc >= DESK_DSC_FLOOR && run.elapsed < DESK_TIME_LIMIT,
            format!(
                "{}: best mean DSC {:.4} (floor {DESK_DSC_FLOOR}), {}, {:.1}s",
                run.label,
                run.best_dsc,
                run.params,
                run.elapsed.as_secs_f64()
            ),
        ),
        Err(why) => Outcome::check(false, format!("{why}; {}", diagnostic(synthetic_run()))),
    }
}

fn canny_direction() -> Outcome {
    match bsds_run() {
        Ok(run) => Outcome::check(
            run.pso_ssim.0 > run.canny_ssim.0,
            format!(
                "{}: mean SSIM pso {:.4} ± {:.4} vs canny {:.4} ± {:.4}",
                run.label, run.pso_ssim.0, run.pso_ssim.1, run.canny_ssim.0, run.canny_ssim.1
            ),
        ),
        Err(why) => {
            let syn = synthetic_run();
            Outcome::check(
                false,
                format!(
                    "{why}; diagnostic on {}: mean SSIM pso {:.4} vs canny {:.4}",
                    syn.label, syn.pso_ssim.0, syn.canny_ssim.0
                ),
            )
        }
    }
}

// 8 -------------------------------------------------------------------------

fn files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn run_cli(args: &[String]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_ca-edge"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn reproducibility() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SceneConfig {
        width: 48,
        height: 32,
        ..SceneConfig::default()
    };
    let manifest = write_dataset(dir.path().join("data"), 12, 8, &cfg).unwrap();
    let m = manifest.to_string_lossy().into_owned();
    let swarm = ["--particles", "4", "--iterations", "3", "--seed", "17", "--emit-maps"];
    let warm = dir.path().join("warm");
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    let mut warm_args = s(&["general", "--manifest", &m, "--out", warm.to_str().unwrap()]);
    warm_args.extend(s(&swarm));
    if let Err(e) = run_cli(&warm_args) {
        return Outcome::check(false, e);
    }
    let warm_pop = warm.join("population.json").to_string_lossy().into_owned();
    let params = ["--delta", "20", "--tau", "0.744077", "--rule", "350"];
    let commands: Vec<(&str, Vec<String>)> = vec![
        ("preprocess", s(&["preprocess", "--manifest", &m])),
        ("optimize", [s(&["optimize", "--manifest", &m]), s(&swarm)].concat()),
        ("kfold", [s(&["kfold", "--manifest", &m, "--k", "3"]), s(&swarm)].concat()),
        ("general", [s(&["general", "--manifest", &m]), s(&swarm)].concat()),
        (
            "specialized",
            [s(&["specialized", "--manifest", &m, "--warm-start", &warm_pop]), s(&swarm)].concat(),
        ),
        ("individual", [s(&["individual", "--manifest", &m]), s(&swarm)].concat()),
        ("compare", [s(&["compare", "--manifest", &m, "--emit-maps"]), s(&params)].concat()),
        ("evaluate", [s(&["evaluate", "--manifest", &m]), s(&params)].concat()),
    ];
    let mut differing = Vec::new();
    let mut compared = 0;
    for (name, args) in &commands {
        let mut snapshots = Vec::new();
        for (run, threads) in [(0, "1"), (1, "4")] {
            let out = dir.path().join(format!("{name}-{run}"));
            let mut a = args.clone();
            a.extend(s(&["--threads", threads, "--out", out.to_str().unwrap()]));
            if let Err(e) = run_cli(&a) {
                return Outcome::check(false, e);
            }
            snapshots.push(files(&out));
        }
        compared += snapshots[0].len();
        if snapshots[0].is_empty() || snapshots[0] != snapshots[1] {
            differing.push(*name);
        }
    }
    Outcome::check(
        differing.is_empty(),
        format!(
            "{} subcommands x (--threads 1, --threads 4), {compared} files compared; differing: {differing:?}",
            commands.len()
        ),
    )
}

// 9 -------------------------------------------------------------------------

fn synthetic_dataset(count: usize, seed: u64) -> Dataset {
    let dir = tempfile::tempdir().unwrap();
    let path = write_dataset(dir.path(), count, seed, &SceneConfig::default()).unwrap();
    Dataset::load(&load_manifest(path).unwrap(), &Preprocess::default()).unwrap()
}

fn soft_expectations() -> Outcome {
    let (label, data) = match std::env::var_os(BSDS_ENV) {
        Some(path) => {
            let m = load_manifest(path).unwrap();
            ("BSDS500", Dataset::load(&m, &Preprocess::default()).unwrap())
        }
        None => ("synthetic scenes", synthetic_dataset(40, 9)),
    };
    let base = ExperimentSpec {
        particles: 8,
        iterations: 15,
        baseline: false,
        ..ExperimentSpec::default()
    };
    let kfold = |radius| {
        let spec = ExperimentSpec {
            kind: ExperimentKind::Kfold,
            k: 5,
            radius,
            ..base.clone()
        };
        run_experiment(&spec, &data, false).unwrap()
    };
    let radius_note = radius_comparison(&kfold(Radius::One), &kfold(Radius::Two)).unwrap_or_default();

    let dir = tempfile::tempdir().unwrap();
    let general_spec = ExperimentSpec {
        kind: ExperimentKind::General,
        ..base.clone()
    };
    let general = run_experiment(&general_spec, &data, false).unwrap();
    write_outputs(dir.path(), &general_spec, &general).unwrap();
    let tf = run_experiment(
        &ExperimentSpec {
            kind: ExperimentKind::SpecializedTf,
            warm_start: Some(dir.path().join("population.json")),
            ..base.clone()
        },
        &data,
        false,
    )
    .unwrap();
    let cold = run_experiment(
        &ExperimentSpec {
            kind: ExperimentKind::Individual,
            ..base.clone()
        },
        &data,
        false,
    )
    .unwrap();
    let ranking = rank_models(&tf);
    let landscapes_last = ranking.last().is_some_and(|(m, _)| m.ends_with("landscapes"));

    let mut within = 0;
    let mut gains = Vec::new();
    for c in Category::ALL {
        let (Some(t), Some(i)) = (tf.row(&format!("tf-{c}"), c.as_str()), cold.row(c.as_str(), c.as_str())) else {
            continue;
        };
        let (tm, im) = (t.ssim.mean.unwrap_or(0.0), i.ssim.mean.unwrap_or(0.0));
        let noise = t.ssim.std.unwrap_or(0.0).max(i.ssim.std.unwrap_or(0.0));
        within += usize::from((tm - im).abs() <= noise);
        gains.push(format!("{c} {:+.4}", tm - im));
    }
    let ranks: Vec<String> = ranking.iter().map(|(m, s)| format!("{m} {s:.4}")).collect();
    Outcome::check(
        true,
        format!(
            "recorded on {label}: {radius_note}; SSIM ranking [{}], landscapes last: {landscapes_last}; \
             TF minus cold SSIM [{}], within one std in {within}/{}",
            ranks.join(", "),
            gains.join(", "),
            gains.len()
        ),
    )
}
