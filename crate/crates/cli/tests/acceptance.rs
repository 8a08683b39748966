//! End-to-end acceptance checks, run without the libtest harness so that each
//! criterion prints one PASS/FAIL line. Exits non-zero if any criterion fails.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use hermite_burgers::analysis::{
    covariance_check, empirical_moments, estimate_holder, holder_bound_check, ks_two_sample, moment_growth_check,
    sheet_scaling_test, Direction, SCALING_PROBE,
};
use hermite_burgers::noise::{SheetSampler, TruncationSpec};
use hermite_burgers::solver::{cole_hopf_exact, picard_solve, solve_ensemble, SolverConfig};
use hermite_burgers::stochint::{capital_i, isometry_from_samples, standard_battery, QuadratureSpec};
use hermite_burgers::{FieldSample, GridSpec, HermiteParams, SamplerSpec, SeedSpec, SigmaSpec};

const N_LARGE: usize = 10_000;
const N_KS: usize = 4_000;
const NCL_M: usize = 256;

fn report(id: u32, name: &str, pass: bool, start: Instant, budget: Duration, detail: &str) -> bool {
    let elapsed = start.elapsed();
    let ok = pass && elapsed <= budget;
    println!(
        "{} criterion {id:>2} {name}: {detail} [{:.1}s of {}s]",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
    ok
}

fn minutes(m: u64) -> Duration {
    Duration::from_secs(60 * m)
}

fn unit_grid() -> GridSpec {
    GridSpec::new(1.0, 8, 1.0, 8, 1).unwrap()
}

fn gaussian() -> HermiteParams {
    HermiteParams::new(1, vec![0.7, 0.7], 1.0)
}

fn second_order() -> HermiteParams {
    HermiteParams::new(2, vec![0.8, 0.8], 1.0)
}

fn kernel_spec() -> SamplerSpec {
    SamplerSpec::Kernel(TruncationSpec::default())
}

fn ensemble(params: &HermiteParams, spec: &SamplerSpec, seed: u64, n: usize) -> Vec<FieldSample> {
    SheetSampler::new(params, &unit_grid(), spec).unwrap().ensemble(SeedSpec::new(seed, 0), n)
}

type Cached = fn() -> &'static Built;

struct Built {
    samples: Vec<FieldSample>,
    build_time: Duration,
}

// Large ensembles shared by several criteria; built once per process and
// timed so the per-configuration budget can be checked.
macro_rules! cached {
    ($name:ident, $params:expr, $spec:expr, $seed:expr, $n:expr) => {
        fn $name() -> &'static Built {
            static CELL: OnceLock<Built> = OnceLock::new();
            CELL.get_or_init(|| {
                let start = Instant::now();
                let samples = ensemble(&$params, &$spec, $seed, $n);
                Built { samples, build_time: start.elapsed() }
            })
        }
    };
}

cached!(exact_q1, gaussian(), SamplerSpec::Exact, 101, N_KS);
cached!(kernel_q1, gaussian(), kernel_spec(), 102, N_LARGE);
cached!(ncl_q1, gaussian(), SamplerSpec::Ncl { m: NCL_M }, 103, N_LARGE);
cached!(kernel_q2, second_order(), kernel_spec(), 104, N_LARGE);
cached!(ncl_q2, second_order(), SamplerSpec::Ncl { m: NCL_M }, 105, N_LARGE);

fn corner_variance(ens: &[FieldSample]) -> f64 {
    let idx = [8, 8];
    ens.iter().map(|f| f.at(&idx).powi(2)).sum::<f64>() / ens.len() as f64
}

fn criterion_01_normalization() -> bool {
    let start = Instant::now();
    let cases: [(&str, Cached); 4] =
        [("q1 kernel", kernel_q1), ("q1 ncl", ncl_q1), ("q2 kernel", kernel_q2), ("q2 ncl", ncl_q2)];
    let mut detail = Vec::new();
    let mut pass = true;
    for (name, ens) in cases {
        let built = ens();
        let v = corner_variance(&built.samples);
        let secs = built.build_time.as_secs_f64();
        pass &= (v - 1.0).abs() <= 0.05 && secs <= 300.0;
        detail.push(format!("{name} Var={v:.4} ({secs:.0}s)"));
    }
    report(1, "normalization", pass, start, minutes(20), &detail.join(", "))
}

fn criterion_02_covariance_law() -> bool {
    let start = Instant::now();
    let cases: [(&str, Cached, &[f64]); 4] = [
        ("q1 kernel", kernel_q1, &[0.7, 0.7]),
        ("q1 ncl", ncl_q1, &[0.7, 0.7]),
        ("q2 kernel", kernel_q2, &[0.8, 0.8]),
        ("q2 ncl", ncl_q2, &[0.8, 0.8]),
    ];
    let mut detail = Vec::new();
    let mut pass = true;
    for (name, ens, h) in cases {
        let r = covariance_check(&ens().samples, h).unwrap();
        pass &= r.pass;
        detail.push(format!("{name} max|err|/SE={:.2}", r.max_ratio));
    }
    report(2, "covariance law", pass, start, minutes(10), &detail.join(", "))
}

fn criterion_03_oracle_equivalence() -> bool {
    let start = Instant::now();
    let exact = &exact_q1().samples;
    let grid = unit_grid();
    let mut detail = Vec::new();
    let mut pass = true;
    for (name, ens) in [("kernel", &kernel_q1().samples), ("ncl", &ncl_q1().samples)] {
        let mut min_p: f64 = 1.0;
        for &[t, x] in &SCALING_PROBE {
            let idx = grid.index_of_fractions(&[t, x]).unwrap();
            let a: Vec<f64> = exact.iter().map(|f| f.at(&idx)).collect();
            let b: Vec<f64> = ens[..N_KS].iter().map(|f| f.at(&idx)).collect();
            min_p = min_p.min(ks_two_sample(&a, &b).p_value);
        }
        pass &= min_p > 0.01;
        detail.push(format!("{name} min p={min_p:.3}"));
    }
    report(3, "oracle equivalence", pass, start, minutes(5), &detail.join(", "))
}

fn criterion_04_isometry() -> bool {
    let start = Instant::now();
    let battery = standard_battery(&unit_grid()).unwrap();
    let cases: [(&str, Cached, &[f64]); 4] = [
        ("q1 kernel", kernel_q1, &[0.7, 0.7]),
        ("q1 ncl", ncl_q1, &[0.7, 0.7]),
        ("q2 kernel", kernel_q2, &[0.8, 0.8]),
        ("q2 ncl", ncl_q2, &[0.8, 0.8]),
    ];
    let mut detail = Vec::new();
    let mut pass = true;
    for (name, ens, h) in cases {
        let mut worst: f64 = 0.0;
        for (_, phi) in &battery {
            let r = isometry_from_samples(phi, h, &ens().samples).unwrap();
            worst = worst.max(r.z_score.abs());
        }
        pass &= worst < 3.0;
        detail.push(format!("{name} max|z|={worst:.2}"));
    }
    report(4, "isometry", pass, start, minutes(10), &detail.join(", "))
}

fn criterion_05_parameter_gate() -> bool {
    let start = Instant::now();
    let quad = QuadratureSpec::default();
    let good = capital_i(1.0, &HermiteParams::new(1, vec![0.65; 4], 1.0), &quad).unwrap();
    let bad = capital_i(1.0, &HermiteParams::new(1, vec![0.56; 4], 1.0), &quad).unwrap();
    let pass = good.converged && !good.gate_violated && good.last_change < 0.02 && !bad.converged && bad.gate_violated;
    let detail = format!(
        "valid: converged={} change={:.4}; violating: converged={} flagged={}",
        good.converged, good.last_change, bad.converged, bad.divergence_warning || bad.gate_violated
    );
    report(5, "parameter gate", pass, start, minutes(2), &detail)
}

fn criterion_06_deterministic_solver() -> bool {
    let start = Instant::now();
    let (nu, length) = (0.1, 2.0 * PI);
    let grid = GridSpec::new(1.0, 512, length, 256, 1).unwrap();
    let u0: Vec<f64> = (0..256).map(|j| 0.5 * (length * j as f64 / 256.0).sin()).collect();
    let params = HermiteParams::new(1, vec![0.7, 0.7], nu);
    let r = picard_solve(&params, &SigmaSpec::constant(0.0), &u0, None, &SolverConfig::new(grid)).unwrap();
    let oracle = cole_hopf_exact(&u0, 1.0, nu, length, 4096).unwrap();
    let last = &r.field.values[512 * 256..];
    let err = last.iter().zip(&oracle.profile).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let pass = r.converged && oracle.warning.is_none() && err <= 1e-3;
    report(6, "deterministic solver", pass, start, minutes(1), &format!("max error {err:.2e}"))
}

// Noise-driven runs start from rest.
fn noisy_config(t_max: f64, n_t: usize, n_x: usize) -> (HermiteParams, SolverConfig, Vec<f64>) {
    let params = HermiteParams::new(1, vec![0.7, 0.7], 0.5);
    let grid = GridSpec::new(t_max, n_t, 2.0 * PI, n_x, 1).unwrap();
    (params, SolverConfig::new(grid), vec![0.0; n_x])
}

fn criterion_07_picard_contraction() -> bool {
    let start = Instant::now();
    let (params, config, u0) = noisy_config(0.25, 64, 64);
    let sampler = SheetSampler::new(&params, &config.domain, &SamplerSpec::Exact).unwrap();
    let mut pass = true;
    let mut worst_ratio: f64 = 0.0;
    let mut most_iters = 0;
    for s in 0..4 {
        let sheet = sampler.sample(SeedSpec::new(7, s));
        let r = picard_solve(&params, &SigmaSpec::constant(0.1), &u0, Some(&sheet), &config).unwrap();
        let d = &r.iter_distances;
        for w in d.windows(2).filter(|w| w[0] > 1e-13) {
            worst_ratio = worst_ratio.max(w[1] / w[0]);
            pass &= w[1] < w[0];
        }
        most_iters = most_iters.max(r.iterations);
        pass &= r.converged && r.iterations <= 8;
    }
    pass &= worst_ratio <= 0.9;
    let detail = format!("worst ratio {worst_ratio:.3}, at most {most_iters} iterations");
    report(7, "Picard contraction", pass, start, minutes(8), &detail)
}

fn solution_ensemble() -> &'static [FieldSample] {
    static CELL: OnceLock<Vec<FieldSample>> = OnceLock::new();
    CELL.get_or_init(|| {
        let (params, config, u0) = noisy_config(1.0, 64, 32);
        let sampler = SheetSampler::new(&params, &config.domain, &SamplerSpec::Exact).unwrap();
        solve_ensemble(&params, &SigmaSpec::constant(0.1), &u0, &config, &sampler, SeedSpec::new(8, 0), 1_000)
            .unwrap()
            .into_iter()
            .map(|r| r.field)
            .collect()
    })
}

fn criterion_08_moment_uniformity() -> bool {
    let start = Instant::now();
    let stats = empirical_moments(solution_ensemble(), &[2.0, 4.0]).unwrap();
    let horizons = [(0.25, &stats), (0.5, &stats), (1.0, &stats)];
    let mut pass = true;
    let mut detail = Vec::new();
    for p in [2.0, 4.0] {
        let g = moment_growth_check(&horizons, p).unwrap();
        pass &= g.pass;
        detail.push(format!("p={p}: sup {:?} flag={}", g.sup_moments.iter().map(|m| format!("{m:.4}")).collect::<Vec<_>>(), g.super_exponential));
    }
    report(8, "moment uniformity", pass, start, minutes(30), &detail.join("; "))
}

fn criterion_09_holder_recovery() -> bool {
    let start = Instant::now();
    let grid = GridSpec::new(1.0, 64, 1.0, 4, 1).unwrap();
    let mut pass = true;
    let mut detail = Vec::new();
    for h0 in [0.6, 0.8] {
        let params = HermiteParams::new(1, vec![h0, 0.7], 1.0);
        let ens = SheetSampler::new(&params, &grid, &SamplerSpec::Exact).unwrap().ensemble(SeedSpec::new(9, 0), N_LARGE);
        let fit = estimate_holder(&ens, Direction::Time, 2.0, &[1, 2, 4, 8]).unwrap();
        pass &= (fit.exponent - h0).abs() <= 0.05;
        detail.push(format!("H0={h0}: {:.3}", fit.exponent));
    }
    let params = HermiteParams::new(1, vec![0.7, 0.7], 0.5);
    for dir in [Direction::Time, Direction::Space(1)] {
        let fit = estimate_holder(solution_ensemble(), dir, 2.0, &[1, 2, 3, 4]).unwrap();
        let check = holder_bound_check(&fit, &params);
        pass &= check.pass;
        detail.push(format!("solution {dir:?}: {:.3} vs bound {:.2}", fit.exponent, check.bound));
    }
    report(9, "Hölder recovery", pass, start, minutes(15), &detail.join(", "))
}

fn criterion_10_sheet_scaling() -> bool {
    let start = Instant::now();
    let params = gaussian();
    let seed = SeedSpec::new(10, 0);
    let grid = unit_grid();
    let right = sheet_scaling_test(&params, &grid, &[4.0, 1.0], None, &SamplerSpec::Exact, N_KS, seed).unwrap();
    let wrong =
        sheet_scaling_test(&params, &grid, &[4.0, 1.0], Some(&[0.5, 0.7]), &SamplerSpec::Exact, N_KS, seed).unwrap();
    let pass = right.pass && !wrong.pass;
    let detail = format!(
        "correct exponents min p={:.3}, perturbed min p={:.1e}",
        right.min_p_value(),
        wrong.min_p_value()
    );
    report(10, "sheet scaling", pass, start, minutes(10), &detail)
}

fn hb(args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_hb")).args(args).env_remove("HB_THREADS").output().unwrap().status.code().unwrap()
}

fn criterion_11_determinism() -> bool {
    let start = Instant::now();
    let tmp = std::env::temp_dir().join(format!("hb-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&tmp).unwrap();
    let config = tmp.join("config.toml");
    std::fs::write(
        &config,
        "[model]\nq = 2\nhurst = [0.8, 0.8]\nnu = 0.5\n\n[grid]\nt_max = 0.25\nn_t = 16\nlength = 6.283185307179586\nn_x = 32\n\n\
         [sampler]\nkind = \"ncl\"\nm = 64\n\n[sigma]\nkind = \"affine\"\nintercept = 0.1\nslope = 0.05\n\n\
         [initial]\nkind = \"sine\"\namplitude = 0.5\n\n[verify]\nn_samples = 400\nhorizons = [0.0625, 0.125, 0.25]\n",
    )
    .unwrap();
    let c = config.to_str().unwrap();
    let dir = |name: &str| tmp.join(name).to_str().unwrap().to_string();
    let runs: [(&str, Vec<String>); 5] = [
        ("sample", vec!["sample".into(), "--n-samples".into(), "4".into(), "--format".into(), "csv".into()]),
        ("solve", vec!["solve".into(), "--n-samples".into(), "3".into()]),
        ("solve_noise", vec!["solve".into(), "--noise".into(), format!("{}/sheet_000000.bin", dir("sample_bin"))]),
        ("covariance", vec!["verify".into(), "covariance".into()]),
        ("moments", vec!["verify".into(), "moments".into(), "--n-samples".into(), "100".into()]),
    ];
    assert_eq!(hb(&["sample", "--config", c, "--out", &dir("sample_bin")]), 0);
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, args) in &runs {
        let mut full: Vec<&str> = args.iter().map(String::as_str).collect();
        let out = dir(name);
        full.extend(["--config", c, "--threads", "1", "--out", &out]);
        let first = hb(&full);
        let manifest = Path::new(&out).join("manifest.json");
        let rerun = hb(&["report", "--manifest", manifest.to_str().unwrap(), "--rerun", "--threads", "3"]);
        pass &= first == 0 && rerun == 0;
        detail.push(format!("{name}: exit {first}, rerun {}", if rerun == 0 { "identical" } else { "differs" }));
    }
    let _ = std::fs::remove_dir_all(&tmp);
    report(11, "determinism", pass, start, minutes(5), &detail.join(", "))
}

fn main() -> std::process::ExitCode {
    let criteria: [fn() -> bool; 11] = [
        criterion_01_normalization,
        criterion_02_covariance_law,
        criterion_03_oracle_equivalence,
        criterion_04_isometry,
        criterion_05_parameter_gate,
        criterion_06_deterministic_solver,
        criterion_07_picard_contraction,
        criterion_08_moment_uniformity,
        criterion_09_holder_recovery,
        criterion_10_sheet_scaling,
        criterion_11_determinism,
    ];
    let failed = criteria.iter().filter(|c| !c()).count();
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        std::process::ExitCode::SUCCESS
    } else {
        std::process::ExitCode::FAILURE
    }
}
