//! Experiment execution and artifact emission: CSV tables, JSON summaries,
//! matrix and basis dumps.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use serde_json::{json, Value};

use holstein_core::basis::BasisEnumeration;
use holstein_core::correlator::time_grid;
use holstein_core::disorder::sample_disorder;
use holstein_core::fit::decay_fit;
use holstein_core::hamiltonian::assemble;
use holstein_core::resolvent::combes_thomas_probe;
use holstein_core::sweep::{
    correlator_sweep, fractional_moment_sweep, probe_records, CorrelatorSweepConfig, SweepConfig,
};

use crate::config::{
    resolve_pairs, resolve_selector, ConfigError, ExperimentConfig, ExperimentKind,
};
use crate::verify::run_verify;

pub struct RunOutcome {
    pub failed_checks: bool,
}

fn csv_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v}")
    }
}

/// Execute the configured experiment, writing artifacts under `out_dir`.
pub fn run(config: &ExperimentConfig, out_dir: &Path) -> Result<RunOutcome, Box<dyn std::error::Error>> {
    fs::create_dir_all(out_dir)?;
    let started = Instant::now();
    let region = config.build_region()?;
    let params = config.model_params();
    let policy = config.truncation_policy();
    let mut diagnostics = json!({});
    let mut failed_checks = false;

    let results: Value = match &config.experiment {
        ExperimentKind::Verify {
            tolerance_scale,
            inject_sign_flip,
        } => {
            let outcome = run_verify(config, *tolerance_scale, *inject_sign_flip)?;
            for check in &outcome.checks {
                println!(
                    "{:<32} measured {:>12.4e}  tolerance {:>9.1e}  {}",
                    check.name,
                    check.measured,
                    check.tolerance,
                    if check.passed { "pass" } else { "FAIL" }
                );
            }
            failed_checks = !outcome.all_passed;
            json!({ "checks": outcome.checks, "all_passed": outcome.all_passed })
        }

        ExperimentKind::BasisInfo {} => {
            let basis = BasisEnumeration::new(region.clone(), policy)
                .map_err(|e| ConfigError(format!("basis: {e}")))?;
            let path = out_dir.join("basis.txt");
            let mut file = fs::File::create(&path)?;
            basis.dump(&mut file)?;
            let mut stdout = std::io::stdout().lock();
            basis.dump(&mut stdout)?;
            json!({
                "states": basis.len(),
                "configs_per_site": basis.configs_per_site(),
                "shells": (0..=policy.max_total)
                    .map(|k| basis.shell(k).len())
                    .collect::<Vec<_>>(),
                "dump": path.display().to_string(),
            })
        }

        ExperimentKind::Greens {
            pairs,
            z,
            shell_k,
            selector,
            export_matrix,
        } => {
            let basis = Arc::new(
                BasisEnumeration::new(region.clone(), policy)
                    .map_err(|e| ConfigError(format!("basis: {e}")))?,
            );
            let resolved = resolve_pairs(&region, pairs)?;
            let indices: Vec<(usize, usize)> = resolved
                .iter()
                .map(|(a, b)| {
                    Ok((
                        basis
                            .index_of(a)
                            .ok_or_else(|| ConfigError("pair row outside basis".into()))?,
                        basis
                            .index_of(b)
                            .ok_or_else(|| ConfigError("pair col outside basis".into()))?,
                    ))
                })
                .collect::<Result<_, ConfigError>>()?;
            let disorder = sample_disorder(&region, &params, config.seed, 0)?;
            let sel = resolve_selector(&region, selector)?;
            let h = assemble(&basis, &params, &disorder, &sel)?;
            diagnostics["leaked_weight"] = json!(h.leaked_weight());
            diagnostics["truncation_sensitivity"] = json!(h.truncation_sensitivity(*shell_k));
            diagnostics["truncation_sensitive"] = json!(h.truncation_sensitive(*shell_k));
            if *export_matrix {
                let path = out_dir.join("matrix.txt");
                h.write_coordinate_triplets(fs::File::create(&path)?)?;
                diagnostics["matrix_export"] = json!(path.display().to_string());
            }
            let records = probe_records(&h, (*z).into(), &indices, *shell_k)?;
            let path = out_dir.join("results.csv");
            let mut file = fs::File::create(&path)?;
            writeln!(
                file,
                "pair_id,upsilon,shell_collapsed_r,walk,fock_r,d,hop,re_g,im_g,abs_g"
            )?;
            for r in &records {
                writeln!(
                    file,
                    "{},{},{},{},{},{},{},{},{},{}",
                    r.pair_id,
                    r.upsilon,
                    csv_float(r.shell_collapsed_r),
                    r.walk,
                    csv_float(r.fock_r),
                    csv_float(r.d),
                    r.hop,
                    csv_float(r.re_g),
                    csv_float(r.im_g),
                    csv_float(r.abs_g)
                )?;
            }
            json!({
                "records": records.len(),
                "csv": path.display().to_string(),
            })
        }

        ExperimentKind::Sweep {
            pairs,
            energies,
            s,
            realizations,
        }
        | ExperimentKind::Fit {
            pairs,
            energies,
            s,
            realizations,
            ..
        } => {
            let sweep_config = SweepConfig {
                region: region.clone(),
                params,
                policy,
                pairs: resolve_pairs(&region, pairs)?,
                energies: energies.iter().map(|&z| z.into()).collect(),
                s: *s,
                realizations: *realizations,
                base_seed: config.seed,
                workers: config.workers,
            };
            let table = fractional_moment_sweep(&sweep_config)?;
            let path = out_dir.join("results.csv");
            table.write_csv(fs::File::create(&path)?)?;
            diagnostics["failed_realizations"] = json!(table.failures);
            // truncation diagnostic from one probe assembly; the leaked
            // fraction depends only on the basis and couplings
            let probe_basis = Arc::new(
                BasisEnumeration::new(region.clone(), policy)
                    .map_err(|e| ConfigError(format!("basis: {e}")))?,
            );
            let probe_disorder = sample_disorder(&region, &params, config.seed, 0)?;
            let probe = assemble(
                &probe_basis,
                &params,
                &probe_disorder,
                &holstein_core::SubspaceSelector::Full,
            )?;
            // the relevant shell is the deepest one the configured pairs touch
            let probe_shell = sweep_config
                .pairs
                .iter()
                .map(|(a, b)| a.config.total().max(b.config.total()))
                .max()
                .unwrap_or(0);
            diagnostics["truncation_sensitivity"] =
                json!(probe.truncation_sensitivity(probe_shell));
            diagnostics["truncation_sensitive"] = json!(probe.truncation_sensitive(probe_shell));

            let mut results = json!({
                "csv": path.display().to_string(),
                "cells": table.rows.len(),
            });
            if let ExperimentKind::Fit {
                distance, shell_k, ..
            } = &config.experiment
            {
                let basis = BasisEnumeration::new(region.clone(), policy)
                    .map_err(|e| ConfigError(format!("basis: {e}")))?;
                let mut fits = Vec::new();
                for zi in 0..table.energies.len() {
                    let points = table.decay_points(&basis, zi, (*distance).into(), *shell_k)?;
                    let fit = decay_fit(&points, (*distance).into(), config.seed ^ 0xf17)?;
                    fits.push(json!({
                        "z_re": table.energies[zi].re,
                        "z_im": table.energies[zi].im,
                        "rate": fit.rate,
                        "intercept": fit.intercept,
                        "std_err": fit.std_err,
                        "ci95": [fit.ci95.0, fit.ci95.1],
                        "n_distances": fit.n_distances,
                        "n_realizations": fit.n_realizations,
                    }));
                }
                results["fits"] = json!(fits);
            }
            results
        }

        ExperimentKind::Correlator {
            pairs,
            band_k,
            realizations,
            t_max,
            time_samples,
        } => {
            let sweep_config = CorrelatorSweepConfig {
                region: region.clone(),
                params,
                policy,
                pairs: resolve_pairs(&region, pairs)?,
                band_k: *band_k,
                realizations: *realizations,
                base_seed: config.seed,
                workers: config.workers,
                times: time_grid(*t_max, *time_samples),
                dense_limit: 6000,
            };
            let result = correlator_sweep(&sweep_config)?;
            let path = out_dir.join("results.csv");
            let mut file = fs::File::create(&path)?;
            writeln!(file, "pair_id,mean_q,n")?;
            for (i, q) in result.mean_q.iter().enumerate() {
                writeln!(file, "{},{},{}", i, csv_float(*q), result.q_values[i].len())?;
            }
            diagnostics["failed_realizations"] = json!(result.failures);
            diagnostics["top_shell_window_weight"] = json!(result.top_shell_weight);
            diagnostics["truncation_sensitive"] =
                json!(result.top_shell_weight > holstein_core::hamiltonian::TRUNCATION_SENSITIVITY_FLAG);
            let fit_json = match &result.fit {
                Ok(fit) => json!({
                    "rate": fit.rate,
                    "std_err": fit.std_err,
                    "ci95": [fit.ci95.0, fit.ci95.1],
                }),
                Err(e) => json!({ "error": e.to_string() }),
            };
            if result.violations > 0 {
                failed_checks = true;
            }
            json!({
                "csv": path.display().to_string(),
                "envelope_violations": result.violations,
                "fit": fit_json,
            })
        }

        ExperimentKind::CtProbe {
            exclude_shell,
            energy,
            epsilon,
            pairs,
        } => {
            let basis = Arc::new(
                BasisEnumeration::new(region.clone(), policy)
                    .map_err(|e| ConfigError(format!("basis: {e}")))?,
            );
            let resolved = resolve_pairs(&region, pairs)?;
            let indices: Vec<(usize, usize)> = resolved
                .iter()
                .map(|(a, b)| {
                    Ok((
                        basis
                            .index_of(a)
                            .ok_or_else(|| ConfigError("pair row outside basis".into()))?,
                        basis
                            .index_of(b)
                            .ok_or_else(|| ConfigError("pair col outside basis".into()))?,
                    ))
                })
                .collect::<Result<_, ConfigError>>()?;
            let disorder = sample_disorder(&region, &params, config.seed, 0)?;
            let h_s = assemble(
                &basis,
                &params,
                &disorder,
                &holstein_core::SubspaceSelector::BandOut(*exclude_shell),
            )?;
            // the gap probe lives just above the excluded shell
            diagnostics["truncation_sensitivity"] =
                json!(h_s.truncation_sensitivity(*exclude_shell + 1));
            diagnostics["truncation_sensitive"] =
                json!(h_s.truncation_sensitive(*exclude_shell + 1));
            let z = Complex64::new(*energy, *epsilon);
            let probe = combes_thomas_probe(&h_s, &params, *exclude_shell, z, &indices, 6000)?;
            let path = out_dir.join("results.csv");
            let mut file = fs::File::create(&path)?;
            writeln!(file, "pair_id,row_state,col_state,d,abs_g")?;
            for (i, p) in probe.pairs.iter().enumerate() {
                writeln!(
                    file,
                    "{},{},{},{},{}",
                    i,
                    p.a,
                    p.b,
                    csv_float(p.distance),
                    csv_float(p.abs_g)
                )?;
            }
            json!({
                "csv": path.display().to_string(),
                "dist_to_spectrum": probe.dist_to_spectrum,
                "resolvent_norm": probe.resolvent_norm,
                "norm_bound": probe.norm_bound,
                "fitted_rate": probe.fitted_rate,
                "envelope_rate": probe.envelope_rate,
            })
        }
    };

    let summary = json!({
        "config_hash": config.config_hash(),
        "experiment": config.experiment.name(),
        "config": config,
        "results": results,
        "timings": { "wall_seconds": started.elapsed().as_secs_f64() },
        "diagnostics": diagnostics,
    });
    let summary_path = out_dir.join("summary.json");
    fs::write(&summary_path, serde_json::to_string_pretty(&summary)?)?;
    Ok(RunOutcome { failed_checks })
}

pub fn default_verify_config() -> ExperimentConfig {
    serde_json::from_value(json!({
        "model": {
            "D": 1, "gamma": 0.05, "omega": 1.0,
            "beta_re": 1.0, "beta_im": 0.0,
            "v_plus": 0.5, "density": {"kind": "uniform"}
        },
        "region": {"extent": [8]},
        "truncation": {"k_max": 2},
        "experiment": {"kind": "verify"},
        "seed": 7,
        "workers": 2,
    }))
    .expect("built-in default config is valid")
}

pub fn out_dir_of(config: &ExperimentConfig, override_dir: Option<&str>) -> PathBuf {
    PathBuf::from(override_dir.unwrap_or(&config.output.dir))
}
