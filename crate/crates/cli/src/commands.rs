//! Subcommand implementations. Each returns the process exit code; hard errors
//! come back as [`CliError`] and map to their own codes.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use hermite_burgers::analysis::{
    covariance_check, empirical_moments, estimate_holder, holder_bound, holder_bound_check, moment_growth_check,
    sheet_scaling_test, Direction,
};
use hermite_burgers::kernels::validate_params;
use hermite_burgers::noise::{format, SheetSampler};
use hermite_burgers::solver::{cole_hopf_exact, solve, solve_ensemble, SolveResult};
use hermite_burgers::stochint::{isometry_from_samples, standard_battery};
use hermite_burgers::{FieldKind, FieldSample};
use serde_json::json;

use crate::config::{ExperimentConfig, HolderTarget};
use crate::manifest::{digest_file, CommandRecord, FileDigest, RunManifest, MANIFEST_FILE};
use crate::{exit, CliError, Format, VerifyCheck};

/// Isometry z-scores beyond this are failures.
const Z_LIMIT: f64 = 3.0;

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out: PathBuf,
    pub format: Format,
    pub threads: Option<usize>,
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Invalid(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

pub fn cmd_validate(config: &ExperimentConfig, w: &mut dyn Write) -> Result<i32, CliError> {
    let report = validate_params(&config.params());
    writeln!(w, "{}", if report.valid { "valid" } else { "invalid" })?;
    writeln!(w, "lhs = 2H_0 + sum H_i = {}", report.lhs)?;
    writeln!(w, "rhs = d + 1 - 1/q = {}", report.rhs)?;
    for v in &report.violations {
        writeln!(w, "violation: {v}")?;
    }
    writeln!(w, "{}", serde_json::to_string(&report)?)?;
    Ok(if report.valid { exit::OK } else { exit::INVALID })
}

fn write_field(field: &FieldSample, dir: &Path, stem: &str, format: Format) -> Result<String, CliError> {
    let name = format!("{stem}.{}", format.extension());
    let mut f = BufWriter::new(File::create(dir.join(&name))?);
    match format {
        Format::Bin => format::write_binary(field, &mut f)?,
        Format::Csv => format::write_csv(field, &mut f)?,
        Format::Json => format::write_json(field, &mut f)?,
    }
    f.flush()?;
    Ok(name)
}

fn write_text(dir: &Path, name: &str, text: &str, manifest: &mut RunManifest) -> Result<(), CliError> {
    fs::write(dir.join(name), text)?;
    manifest.record(dir, name)
}

fn prepare(config: &ExperimentConfig, opts: &RunOptions) -> Result<(), CliError> {
    config.params().ensure_valid()?;
    fs::create_dir_all(&opts.out)?;
    Ok(())
}

fn sampler(config: &ExperimentConfig) -> Result<SheetSampler, CliError> {
    Ok(SheetSampler::new(&config.params(), &config.grid()?, &config.sampler)?)
}

pub fn cmd_sample(config: &ExperimentConfig, opts: &RunOptions, w: &mut dyn Write) -> Result<i32, CliError> {
    prepare(config, opts)?;
    let sampler = sampler(config)?;
    let n = config.run.n_samples;
    let mut manifest = RunManifest::new(CommandRecord::Sample, config, opts.format, opts.threads);
    let fields = with_threads(opts.threads, || sampler.ensemble(config.seed(), n))?;
    for (i, f) in fields.iter().enumerate() {
        let name = write_field(f, &opts.out, &format!("sheet_{i:06}"), opts.format)?;
        manifest.record(&opts.out, &name)?;
    }
    manifest.diagnostics = json!({ "n_samples": n, "q": config.model.q, "hurst": config.model.hurst });
    let path = manifest.write(&opts.out, exit::OK)?;
    writeln!(w, "wrote {n} sheet sample(s); manifest {}", path.display())?;
    Ok(exit::OK)
}

fn solve_diagnostics(results: &[SolveResult]) -> serde_json::Value {
    results
        .iter()
        .enumerate()
        .map(|(i, r)| {
            json!({
                "index": i,
                "seed": r.field.seed,
                "converged": r.converged,
                "iterations": r.iterations,
                "distances": r.iter_distances,
                "warnings": r.warnings,
            })
        })
        .collect()
}

/// Modes used for the Cole-Hopf reference: at least 4096, a multiple of `n_x`.
fn reference_modes(n_x: usize) -> usize {
    n_x * 4096usize.div_ceil(n_x)
}

pub fn cmd_solve(
    config: &ExperimentConfig,
    noise: Option<&Path>,
    opts: &RunOptions,
    w: &mut dyn Write,
) -> Result<i32, CliError> {
    prepare(config, opts)?;
    let params = config.params();
    let solver = config.solver_config()?;
    let grid = &solver.domain;
    let u0 = config.initial.profile(grid)?;
    let (noise_record, results) = match noise {
        Some(path) => {
            let sheet = format::read_binary(File::open(path)?)?;
            if sheet.kind != FieldKind::Sheet || &sheet.grid != grid {
                return Err(CliError::Invalid(format!("{} is not a sheet on the configured grid", path.display())));
            }
            let record = FileDigest { path: path.display().to_string(), sha256: digest_file(path)? };
            let r = with_threads(opts.threads, || solve(&params, &config.sigma, &u0, Some(&sheet), &solver))??;
            (Some(record), vec![r])
        }
        None if config.sigma.is_zero() => (None, vec![solve(&params, &config.sigma, &u0, None, &solver)?]),
        None => {
            let sampler = sampler(config)?;
            let n = config.run.n_samples;
            let r = with_threads(opts.threads, || {
                solve_ensemble(&params, &config.sigma, &u0, &solver, &sampler, config.seed(), n)
            })??;
            (None, r)
        }
    };
    let mut manifest =
        RunManifest::new(CommandRecord::Solve { noise: noise_record }, config, opts.format, opts.threads);
    for (i, r) in results.iter().enumerate() {
        let name = write_field(&r.field, &opts.out, &format!("solution_{i:06}"), opts.format)?;
        manifest.record(&opts.out, &name)?;
    }
    let mut diag = json!({ "runs": solve_diagnostics(&results) });
    if config.sigma.is_zero() && results[0].field.values.iter().all(|v| v.is_finite()) {
        let ch = cole_hopf_exact(&u0, grid.t_max, params.nu, grid.length, reference_modes(grid.n_x))?;
        let last = &results[0].field.values[grid.n_t * grid.n_x..];
        let err = last.iter().zip(&ch.profile).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        writeln!(w, "max error vs Cole-Hopf reference at t = {}: {err:.3e}", grid.t_max)?;
        diag["cole_hopf"] = json!({ "max_error": err, "tail_energy": ch.tail_energy, "warning": ch.warning });
    }
    write_text(&opts.out, "solve.json", &serde_json::to_string_pretty(&diag)?, &mut manifest)?;
    let converged = results.iter().all(|r| r.converged);
    for r in results.iter().filter(|r| !r.warnings.is_empty()) {
        for msg in &r.warnings {
            writeln!(w, "warning: {msg}")?;
        }
    }
    let code = if converged { exit::OK } else { exit::NOT_CONVERGED };
    manifest.diagnostics = json!({ "converged": converged, "n_solves": results.len() });
    let path = manifest.write(&opts.out, code)?;
    writeln!(
        w,
        "{} solve(s), converged = {converged}; manifest {}",
        results.len(),
        path.display()
    )?;
    Ok(code)
}

fn solution_ensemble(config: &ExperimentConfig, n: usize) -> Result<Vec<FieldSample>, CliError> {
    let params = config.params();
    let solver = config.solver_config()?;
    let u0 = config.initial.profile(&solver.domain)?;
    let sampler = sampler(config)?;
    let results = solve_ensemble(&params, &config.sigma, &u0, &solver, &sampler, config.seed(), n)?;
    if let Some(bad) = results.iter().position(|r| !r.converged) {
        return Err(CliError::Invalid(format!("ensemble member {bad} did not converge; raise max_iters")));
    }
    Ok(results.into_iter().map(|r| r.field).collect())
}

struct CheckOutcome {
    pass: bool,
    summary: String,
    report: serde_json::Value,
    csv: String,
}

fn run_check(config: &ExperimentConfig, check: VerifyCheck) -> Result<CheckOutcome, CliError> {
    let v = &config.verify;
    let n = v.n_samples;
    let params = config.params();
    let grid = config.grid()?;
    Ok(match check {
        VerifyCheck::Covariance => {
            let ens = sampler(config)?.ensemble(config.seed(), n);
            let r = covariance_check(&ens, &params.hurst)?;
            CheckOutcome {
                pass: r.pass,
                summary: format!("max |error| = {:.4}, max |error|/SE = {:.2}", r.max_abs_error, r.max_ratio),
                csv: r.to_csv(),
                report: serde_json::to_value(&r)?,
            }
        }
        VerifyCheck::Isometry => {
            let ens = sampler(config)?.ensemble(config.seed(), n);
            let mut rows = Vec::new();
            let mut csv = String::from("function,empirical,se,h_norm,z\n");
            let mut worst: f64 = 0.0;
            for (name, phi) in standard_battery(&grid)? {
                let r = isometry_from_samples(&phi, &params.hurst, &ens)?;
                csv.push_str(&format!(
                    "{name},{},{},{},{}\n",
                    r.empirical_second_moment, r.standard_error, r.h_norm, r.z_score
                ));
                worst = worst.max(r.z_score.abs());
                rows.push(json!({ "function": name, "report": r }));
            }
            CheckOutcome {
                pass: worst < Z_LIMIT,
                summary: format!("max |z| = {worst:.2} over {} functions", rows.len()),
                report: json!({ "functions": rows, "z_limit": Z_LIMIT }),
                csv,
            }
        }
        VerifyCheck::Scaling => {
            let r = sheet_scaling_test(
                &params,
                &grid,
                &v.lambda,
                v.exponents.as_deref(),
                &config.sampler,
                n,
                config.seed(),
            )?;
            CheckOutcome {
                pass: r.pass,
                summary: format!("min p = {:.3e} against threshold {:.1e}", r.min_p_value(), r.threshold),
                csv: r.to_csv(),
                report: serde_json::to_value(&r)?,
            }
        }
        VerifyCheck::Holder => {
            let (ens, kind) = match v.holder_target {
                HolderTarget::Sheet => (sampler(config)?.ensemble(config.seed(), n), "sheet"),
                HolderTarget::Solution => (solution_ensemble(config, n)?, "solution"),
            };
            let fit = estimate_holder(&ens, v.direction, v.holder_p, &v.lags)?;
            let (pass, summary, check) = match v.holder_target {
                HolderTarget::Sheet => {
                    let h = match v.direction {
                        Direction::Time => params.hurst[0],
                        Direction::Space(i) => params.hurst[i],
                    };
                    let pass = (fit.exponent - h).abs() <= v.holder_tolerance;
                    (pass, format!("exponent {:.4} vs Hurst {h} ± {}", fit.exponent, v.holder_tolerance), json!({ "hurst": h, "tolerance": v.holder_tolerance }))
                }
                HolderTarget::Solution => {
                    let b = holder_bound_check(&fit, &params);
                    debug_assert_eq!(b.bound, holder_bound(v.direction, &params));
                    (b.pass, format!("exponent {:.4} ± {:.4} vs bound {:.4}", fit.exponent, fit.exponent_se, b.bound), serde_json::to_value(&b)?)
                }
            };
            CheckOutcome { pass, summary, csv: fit.to_csv(), report: json!({ "target": kind, "fit": fit, "check": check }) }
        }
        VerifyCheck::Moments => {
            if let Some(h) = v.horizons.iter().find(|&&h| h > grid.t_max + 1e-12) {
                return Err(CliError::Invalid(format!("horizon {h} exceeds t_max = {}", grid.t_max)));
            }
            let ens = solution_ensemble(config, n)?;
            let stats = empirical_moments(&ens, &v.moment_orders)?;
            let pairs: Vec<(f64, &_)> = v.horizons.iter().map(|&h| (h, &stats)).collect();
            let mut csv = String::from("p,horizon,sup_moment,se\n");
            let mut reports = Vec::new();
            let mut pass = true;
            for &p in &v.moment_orders {
                let g = moment_growth_check(&pairs, p)?;
                for i in 0..g.horizons.len() {
                    csv.push_str(&format!("{p},{},{},{}\n", g.horizons[i], g.sup_moments[i], g.sup_se[i]));
                }
                pass &= g.pass;
                reports.push(g);
            }
            CheckOutcome {
                pass,
                summary: format!("{} moment order(s), super-exponential flags: {}", reports.len(), reports.iter().filter(|g| g.super_exponential).count()),
                report: serde_json::to_value(&reports)?,
                csv,
            }
        }
    })
}

pub fn cmd_verify(
    config: &ExperimentConfig,
    check: VerifyCheck,
    opts: &RunOptions,
    w: &mut dyn Write,
) -> Result<i32, CliError> {
    prepare(config, opts)?;
    let outcome = with_threads(opts.threads, || run_check(config, check))??;
    let mut manifest = RunManifest::new(CommandRecord::Verify { check }, config, opts.format, opts.threads);
    let name = check.as_str();
    let doc = json!({ "check": name, "pass": outcome.pass, "n_samples": config.verify.n_samples, "report": outcome.report });
    write_text(&opts.out, &format!("verify_{name}.json"), &serde_json::to_string_pretty(&doc)?, &mut manifest)?;
    write_text(&opts.out, &format!("verify_{name}.csv"), &outcome.csv, &mut manifest)?;
    let code = if outcome.pass { exit::OK } else { exit::CHECK_FAILED };
    manifest.diagnostics = json!({ "pass": outcome.pass, "summary": outcome.summary });
    manifest.write(&opts.out, code)?;
    writeln!(w, "{name}: {} ({})", if outcome.pass { "PASS" } else { "FAIL" }, outcome.summary)?;
    Ok(code)
}

/// Checks recorded digests, or with `rerun` re-executes the recorded command
/// into `out` (default `<manifest dir>/rerun`) and compares every digest.
pub fn cmd_report(
    manifest_path: &Path,
    rerun: bool,
    out: Option<&Path>,
    threads: Option<usize>,
    w: &mut dyn Write,
) -> Result<i32, CliError> {
    let manifest = RunManifest::read(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    writeln!(
        w,
        "{} {} | seed {} stream {} | exit {} | {} output(s) | {} .. {}",
        manifest.tool,
        manifest.version,
        manifest.master_seed,
        manifest.stream_index,
        manifest.exit_code,
        manifest.outputs.len(),
        manifest.started,
        manifest.finished
    )?;
    if !rerun {
        let stale = manifest.stale_outputs(dir);
        for s in &stale {
            writeln!(w, "digest mismatch: {s}")?;
        }
        return Ok(if stale.is_empty() { exit::OK } else { exit::CHECK_FAILED });
    }
    let target = out.map(Path::to_path_buf).unwrap_or_else(|| dir.join("rerun"));
    let opts = RunOptions { out: target.clone(), format: manifest.format, threads };
    let mut sink = std::io::sink();
    let code = match &manifest.command {
        CommandRecord::Sample => cmd_sample(&manifest.config, &opts, &mut sink)?,
        CommandRecord::Solve { noise } => {
            let path = noise.as_ref().map(|n| PathBuf::from(&n.path));
            if let Some(n) = noise {
                if digest_file(Path::new(&n.path))? != n.sha256 {
                    writeln!(w, "noise input {} changed since the recorded run", n.path)?;
                    return Ok(exit::CHECK_FAILED);
                }
            }
            cmd_solve(&manifest.config, path.as_deref(), &opts, &mut sink)?
        }
        CommandRecord::Verify { check } => cmd_verify(&manifest.config, *check, &opts, &mut sink)?,
    };
    let fresh = RunManifest::read(&target.join(MANIFEST_FILE))?;
    let identical = fresh.outputs == manifest.outputs && code == manifest.exit_code;
    if !identical {
        for o in &manifest.outputs {
            if !fresh.outputs.contains(o) {
                writeln!(w, "digest mismatch: {}", o.path)?;
            }
        }
    }
    writeln!(
        w,
        "rerun into {}: {}",
        target.display(),
        if identical { "all digests reproduced" } else { "outputs differ" }
    )?;
    Ok(if identical { exit::OK } else { exit::CHECK_FAILED })
}
