//! The experiment commands. Replicas are sharded across threads with
//! stream_id = replica index, collected in replica order, and reduced
//! sequentially, so reports are byte-identical for a given config and
//! seed regardless of thread scheduling.

use rayon::prelude::*;

use fvlab::diagnostics::{ks_two_sample, perpetuity_test, tail_fit, SummaryStats, Verdict};
use fvlab::fleming_viot::{
    fv_simulate, jump_pair_from_paths, sum_of_squares_coupling, two_particle_scaling,
    Classification,
};
use fvlab::paths::{fw_deviation_check, simulate, DriftLaw};
use fvlab::sampling::{sample_hitting_time, sample_jump_sq, HittingTimeLaw, RngStream};
use fvlab::specfun;

use crate::output::{csv_f64, dump_path_csv, emit, json_f64, manifest, Table};
use crate::{CliError, Law, Settings};

fn assert_gate(settings: &Settings, ok: bool, what: &str) -> Result<(), CliError> {
    if settings.assert_mode && !ok {
        return Err(CliError::AssertFailed(what.to_string()));
    }
    Ok(())
}

fn reject_dump_paths(settings: &Settings) -> Result<(), CliError> {
    if settings.dump_paths.is_some() {
        return Err(CliError::usage(format!(
            "--dump-paths is not available for {} (supported by coupling and hitting-law)",
            settings.experiment
        )));
    }
    Ok(())
}

fn ensure_dump_dir(settings: &Settings) -> Result<Option<std::path::PathBuf>, CliError> {
    match &settings.dump_paths {
        None => Ok(None),
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            Ok(Some(dir.clone()))
        }
    }
}

pub fn sign_test(settings: Settings) -> Result<(), CliError> {
    reject_dump_paths(&settings)?;
    let expected = specfun::expected_ln_jump_sq(settings.nu)?;
    let nu = settings.nu;
    let seed = settings.seed;
    let logs: Vec<f64> = (0..settings.replicas)
        .into_par_iter()
        .map(|replica| {
            let mut stream = RngStream::new(seed, replica);
            sample_jump_sq(nu, &mut stream)
                .expect("nu validated at entry")
                .ln()
        })
        .collect();
    let stats = SummaryStats::from_slice(&logs);
    let se = stats.standard_error();
    let agree = (stats.mean - expected).abs() <= 3.0 * se;

    let results = serde_json::json!({
        "nu": nu,
        "expected_ln_jump_sq": expected,
        "mc_mean_ln_jump_sq": stats.mean,
        "se": se,
        "replicas": settings.replicas,
        "agree": agree,
    });
    let mut table = Table::new(vec![
        "nu",
        "expected_ln_jump_sq",
        "mc_mean_ln_jump_sq",
        "se",
        "replicas",
        "agree",
    ]);
    table.push(vec![
        format!("{nu}"),
        format!("{expected}"),
        format!("{}", stats.mean),
        format!("{se}"),
        format!("{}", settings.replicas),
        format!("{agree}"),
    ]);
    emit(&settings, &manifest(&settings), &results, &table)?;
    assert_gate(
        &settings,
        agree,
        &format!(
            "Monte Carlo mean {} differs from expected {expected} by more than 3 se ({se})",
            stats.mean
        ),
    )
}

pub fn extinct(
    settings: Settings,
    events_out: Option<std::path::PathBuf>,
) -> Result<(), CliError> {
    reject_dump_paths(&settings)?;
    if settings.scaling {
        return extinct_scaling(settings);
    }
    let config = settings.path_config();
    let law = match settings.law {
        Law::Bessel => DriftLaw::Bessel { nu: settings.nu },
        Law::Reflected => DriftLaw::PowerDriftReflected {
            beta: settings.beta,
        },
    };
    let x0 = vec![1.0; settings.n_particles];
    let seed = settings.seed;
    let outcomes: Vec<fvlab::fleming_viot::RunOutcome> = (0..settings.replicas)
        .into_par_iter()
        .map(|replica| {
            let mut stream = RngStream::new(seed, replica);
            fv_simulate(&x0, &law, &config, &mut stream).expect("parameters validated at entry")
        })
        .collect();

    let taus: Vec<f64> = outcomes
        .iter()
        .filter_map(|o| match o.classification {
            Classification::Extinct { tau_inf } => Some(tau_inf),
            Classification::Survived { .. } => None,
        })
        .collect();
    let extinct_fraction = taus.len() as f64 / settings.replicas as f64;
    let tau_stats = SummaryStats::from_slice(&taus);

    let tail = if settings.law == Law::Reflected {
        Some(match tail_fit(&taus, 0.5, 0.99) {
            Ok(fit) => serde_json::json!({
                "rate": fit.rate,
                "log_intercept": fit.log_intercept,
                "r_squared": fit.r_squared,
                "t_range": [fit.t_range.0, fit.t_range.1],
                "n_points": fit.n_points,
            }),
            Err(err) => serde_json::json!({ "error": err.to_string() }),
        })
    } else {
        None
    };

    let results = serde_json::json!({
        "law": settings.law.name(),
        "n_particles": settings.n_particles,
        "replicas": settings.replicas,
        "extinct_fraction": extinct_fraction,
        "mean_tau_extinct": json_f64(tau_stats.mean),
        "max_tau_extinct": json_f64(tau_stats.max),
        "event_cap_hits": outcomes.iter().filter(|o| o.event_cap_reached).count(),
        "tail_fit": tail,
    });
    let mut table = Table::new(vec!["replica", "outcome", "tau", "events"]);
    for (replica, outcome) in outcomes.iter().enumerate() {
        let (label, tau) = match outcome.classification {
            Classification::Extinct { tau_inf } => ("extinct", tau_inf),
            Classification::Survived { .. } => ("survived", f64::NAN),
        };
        table.push(vec![
            format!("{replica}"),
            label.to_string(),
            csv_f64(tau),
            format!("{}", outcome.events.len()),
        ]);
    }
    emit(&settings, &manifest(&settings), &results, &table)?;

    if let Some(path) = events_out {
        let mut text = String::from("replica_id,k,tau_k,dying,target\n");
        for (replica, outcome) in outcomes.iter().enumerate() {
            for (k, event) in outcome.events.iter().enumerate() {
                text.push_str(&format!(
                    "{replica},{},{},{},{}\n",
                    k + 1,
                    event.time,
                    event.dying,
                    event.target
                ));
            }
        }
        std::fs::write(path, text)?;
    }

    let expectation = match settings.law {
        Law::Reflected => Some(1.0),
        Law::Bessel => {
            if settings.n_particles == 2 && settings.nu < 0.0 {
                Some(1.0)
            } else if settings.n_particles as f64 * settings.nu >= 2.0 {
                Some(0.0)
            } else {
                None
            }
        }
    };
    match expectation {
        Some(expected) => assert_gate(
            &settings,
            extinct_fraction == expected,
            &format!("extinct fraction {extinct_fraction}, expected {expected}"),
        ),
        None => {
            if settings.assert_mode {
                Err(CliError::usage(
                    "--assert is undefined for this parameter range (no theorem pins the outcome)",
                ))
            } else {
                Ok(())
            }
        }
    }
}

fn extinct_scaling(settings: Settings) -> Result<(), CliError> {
    let config = settings.path_config();
    let nu = settings.nu;
    let seed = settings.seed;
    const MAX_EVENTS: usize = 1000;
    let runs: Vec<fvlab::fleming_viot::ScalingRun> = (0..settings.replicas)
        .into_par_iter()
        .map(|replica| {
            let mut stream = RngStream::new(seed, replica);
            two_particle_scaling(nu, MAX_EVENTS, &config, &mut stream)
                .expect("nu validated at entry")
        })
        .collect();
    let converged = runs.iter().filter(|r| r.converged).count();
    let converged_fraction = converged as f64 / settings.replicas as f64;

    let results = serde_json::json!({
        "law": "bessel",
        "mode": "scaling",
        "nu": nu,
        "replicas": settings.replicas,
        "max_events": MAX_EVENTS,
        "converged_fraction": converged_fraction,
    });
    let mut table = Table::new(vec!["replica", "converged", "events", "final_partial_sum"]);
    for (replica, run) in runs.iter().enumerate() {
        table.push(vec![
            format!("{replica}"),
            format!("{}", run.converged),
            format!("{}", run.jump_factors.len()),
            csv_f64(run.partial_sums.last().copied().unwrap_or(0.0)),
        ]);
    }
    emit(&settings, &manifest(&settings), &results, &table)?;

    let expected = if nu < 0.0 {
        1.0
    } else if nu > 0.0 {
        0.0
    } else if settings.assert_mode {
        return Err(CliError::usage(
            "--assert is undefined at nu = 0 (the critical dimension)",
        ));
    } else {
        return Ok(());
    };
    assert_gate(
        &settings,
        converged_fraction == expected,
        &format!("converged fraction {converged_fraction}, expected {expected}"),
    )
}

pub fn coupling(settings: Settings) -> Result<(), CliError> {
    let dump_dir = ensure_dump_dir(&settings)?;
    let config = settings.path_config();
    let x0 = vec![1.0; settings.n_particles];
    let seed = settings.seed;
    let nu = settings.nu;
    let horizon = settings.horizon;
    let base_manifest = manifest(&settings);

    struct ReplicaSummary {
        dominates: bool,
        max_violation: f64,
        events: usize,
        extinct: bool,
        warning: bool,
        tol: f64,
    }
    let summaries: Vec<Result<ReplicaSummary, CliError>> = (0..settings.replicas)
        .into_par_iter()
        .map(|replica| {
            let mut stream = RngStream::new(seed, replica);
            let run = sum_of_squares_coupling(&x0, nu, horizon, &config, &mut stream)
                .expect("parameters validated at entry");
            if let Some(dir) = &dump_dir {
                dump_path_csv(
                    dir,
                    &format!("fv_z_{replica:05}.csv"),
                    &base_manifest,
                    &run.fv_z,
                )?;
                dump_path_csv(
                    dir,
                    &format!("coupled_z_{replica:05}.csv"),
                    &base_manifest,
                    &run.coupled_z,
                )?;
            }
            Ok(ReplicaSummary {
                dominates: run.domination_holds,
                max_violation: run.max_violation,
                events: run.events.len(),
                extinct: run.classification.is_extinct(),
                warning: run.low_dimension_warning,
                tol: run.tol,
            })
        })
        .collect();
    let summaries: Vec<ReplicaSummary> =
        summaries.into_iter().collect::<Result<Vec<_>, _>>()?;

    let all_dominate = summaries.iter().all(|s| s.dominates);
    let extinct_replicas = summaries.iter().filter(|s| s.extinct).count();
    let worst = summaries
        .iter()
        .map(|s| s.max_violation)
        .fold(f64::NEG_INFINITY, f64::max);
    let warning = summaries.first().map(|s| s.warning).unwrap_or(false);
    let tol = summaries.first().map(|s| s.tol).unwrap_or(0.0);

    let results = serde_json::json!({
        "nu": nu,
        "n_particles": settings.n_particles,
        "horizon": horizon,
        "replicas": settings.replicas,
        "all_dominate": all_dominate,
        "max_violation": worst,
        "tol": tol,
        "low_dimension_warning": warning,
        "extinct_replicas": extinct_replicas,
    });
    let mut table = Table::new(vec![
        "replica",
        "domination_holds",
        "max_violation",
        "events",
        "extinct",
    ]);
    for (replica, s) in summaries.iter().enumerate() {
        table.push(vec![
            format!("{replica}"),
            format!("{}", s.dominates),
            format!("{}", s.max_violation),
            format!("{}", s.events),
            format!("{}", s.extinct),
        ]);
    }
    emit(&settings, &base_manifest, &results, &table)?;

    let ok = all_dominate && (warning || extinct_replicas == 0);
    assert_gate(
        &settings,
        ok,
        &format!(
            "domination in all replicas: {all_dominate} (worst violation {worst}), \
             extinct replicas: {extinct_replicas}"
        ),
    )
}

pub fn fw_check(settings: Settings) -> Result<(), CliError> {
    reject_dump_paths(&settings)?;
    let config = settings.path_config();
    let mut stream = RngStream::new(settings.seed, 0);
    let r = fw_deviation_check(
        settings.a,
        settings.beta,
        settings.gamma,
        settings.delta,
        settings.replicas,
        &config,
        &mut stream,
    )?;
    let se = r.empirical_se();
    let satisfied = r.empirical_prob <= r.bound + 3.0 * se;
    let results = serde_json::json!({
        "a": r.a,
        "beta": r.beta,
        "gamma": r.gamma,
        "delta": r.delta,
        "lipschitz": r.lipschitz,
        "empirical_prob": r.empirical_prob,
        "empirical_se": se,
        "bound": r.bound,
        "n_reps": r.n_reps,
        "satisfied": satisfied,
    });
    let mut table = Table::new(vec![
        "a",
        "beta",
        "gamma",
        "delta",
        "lipschitz",
        "empirical_prob",
        "empirical_se",
        "bound",
        "n_reps",
        "satisfied",
    ]);
    table.push(vec![
        format!("{}", r.a),
        format!("{}", r.beta),
        format!("{}", r.gamma),
        format!("{}", r.delta),
        format!("{}", r.lipschitz),
        format!("{}", r.empirical_prob),
        format!("{se}"),
        format!("{}", r.bound),
        format!("{}", r.n_reps),
        format!("{satisfied}"),
    ]);
    emit(&settings, &manifest(&settings), &results, &table)?;
    assert_gate(
        &settings,
        satisfied,
        &format!(
            "empirical deviation probability {} exceeds bound {} + 3 se",
            r.empirical_prob, r.bound
        ),
    )
}

pub fn density_check(settings: Settings) -> Result<(), CliError> {
    reject_dump_paths(&settings)?;
    let config = settings.path_config();
    let nu = settings.nu;
    let seed = settings.seed;
    let n = settings.replicas;
    // Path replicas use stream ids 0..n, transform draws n..2n.
    let path_sq: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|replica| {
            let mut stream = RngStream::new(seed, replica);
            let pair = jump_pair_from_paths(nu, &config, &mut stream)
                .expect("nu validated at entry; default horizon is ample");
            pair.factor * pair.factor
        })
        .collect();
    let transform_sq: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|replica| {
            let mut stream = RngStream::new(seed, n + replica);
            sample_jump_sq(nu, &mut stream).expect("nu validated at entry")
        })
        .collect();
    let ks = ks_two_sample(&transform_sq, &path_sq)?;
    let mean_ln = |xs: &[f64]| xs.iter().map(|x| x.ln()).sum::<f64>() / xs.len() as f64;

    let results = serde_json::json!({
        "nu": nu,
        "replicas": n,
        "ks_d": ks.statistic,
        "ks_p": ks.p_value,
        "transform_mean_ln": mean_ln(&transform_sq),
        "paths_mean_ln": mean_ln(&path_sq),
        "expected_ln_jump_sq": specfun::expected_ln_jump_sq(nu)?,
    });
    let mut table = Table::new(vec!["replica", "transform_sq", "path_sq"]);
    for replica in 0..n as usize {
        table.push(vec![
            format!("{replica}"),
            format!("{}", transform_sq[replica]),
            format!("{}", path_sq[replica]),
        ]);
    }
    emit(&settings, &manifest(&settings), &results, &table)?;
    assert_gate(
        &settings,
        ks.p_value > 0.01,
        &format!("KS p-value {} is at or below 0.01", ks.p_value),
    )
}

pub fn constants(settings: Settings) -> Result<(), CliError> {
    reject_dump_paths(&settings)?;
    let pc = specfun::proof_constants(
        settings.a,
        settings.beta,
        settings.gamma,
        settings.epsilon,
        settings.n_particles,
    )?;
    let results = serde_json::json!({
        "a": pc.a,
        "beta": pc.beta,
        "gamma": pc.gamma,
        "epsilon": pc.epsilon,
        "window": pc.window,
        "deviation_budget": pc.deviation_budget,
        "flow_slope": pc.flow_slope,
        "rank_budgets": pc.rank_budgets,
        "contraction": pc.contraction,
        "window_margin_ok": pc.window_margin_ok,
        "contraction_ok": pc.contraction_ok,
    });
    let mut table = Table::new(vec![
        "rank",
        "rank_budget",
        "a",
        "beta",
        "gamma",
        "epsilon",
        "window",
        "deviation_budget",
        "flow_slope",
        "contraction",
        "window_margin_ok",
        "contraction_ok",
    ]);
    for (idx, budget) in pc.rank_budgets.iter().enumerate() {
        table.push(vec![
            format!("{}", idx + 1),
            format!("{budget}"),
            format!("{}", pc.a),
            format!("{}", pc.beta),
            format!("{}", pc.gamma),
            format!("{}", pc.epsilon),
            format!("{}", pc.window),
            format!("{}", pc.deviation_budget),
            format!("{}", pc.flow_slope),
            format!("{}", pc.contraction),
            format!("{}", pc.window_margin_ok),
            format!("{}", pc.contraction_ok),
        ]);
    }
    emit(&settings, &manifest(&settings), &results, &table)?;
    assert_gate(
        &settings,
        pc.window_margin_ok && pc.contraction_ok,
        &format!(
            "smallness conditions: window margin {} contraction {} (factor {})",
            pc.window_margin_ok, pc.contraction_ok, pc.contraction
        ),
    )
}

pub fn hitting_law(settings: Settings) -> Result<(), CliError> {
    let dump_dir = ensure_dump_dir(&settings)?;
    let law = HittingTimeLaw::new(settings.start, settings.nu)?;
    let seed = settings.seed;
    let draws: Vec<f64> = (0..settings.replicas)
        .into_par_iter()
        .map(|replica| {
            let mut stream = RngStream::new(seed, replica);
            sample_hitting_time(&law, &mut stream).expect("law validated at construction")
        })
        .collect();
    let stats = SummaryStats::from_slice(&draws);
    let log_stats =
        SummaryStats::from_slice(&draws.iter().map(|t| t.ln()).collect::<Vec<f64>>());
    // E T0 = start / (2 (shape - 1)) when shape > 1; E ln T0 has the
    // digamma expression for every shape.
    let theory_mean = if law.shape() > 1.0 {
        Some(settings.start / (2.0 * (law.shape() - 1.0)))
    } else {
        None
    };
    let theory_mean_ln =
        settings.start.ln() - 2.0f64.ln() - specfun::digamma(law.shape())?;
    let se_ln = log_stats.standard_error();
    let agree_ln = (log_stats.mean - theory_mean_ln).abs() <= 3.0 * se_ln;

    // Optional path cross-check: a Bessel path from sqrt(start) has the
    // same absorption law; stream ids continue after the exact draws.
    let base_manifest = manifest(&settings);
    let paths_summary = if settings.path_replicas > 0 {
        let config = settings.path_config();
        let bessel = DriftLaw::Bessel { nu: settings.nu };
        let x0 = settings.start.sqrt();
        let path_results: Vec<Result<f64, CliError>> = (0..settings.path_replicas)
            .into_par_iter()
            .map(|replica| {
                let mut stream = RngStream::new(seed, settings.replicas + replica);
                let path = simulate(&bessel, x0, &config, &mut stream)
                    .expect("parameters validated at entry");
                if let Some(dir) = &dump_dir {
                    dump_path_csv(
                        dir,
                        &format!("path_{replica:05}.csv"),
                        &base_manifest,
                        &path,
                    )?;
                }
                path.absorption_time().ok_or_else(|| {
                    CliError::usage(format!(
                        "path replica {replica} was not absorbed within the horizon; \
                         raise --horizon"
                    ))
                })
            })
            .collect();
        let times: Vec<f64> = path_results.into_iter().collect::<Result<Vec<_>, _>>()?;
        let path_stats = SummaryStats::from_slice(&times);
        let ks = ks_two_sample(&times, &draws)?;
        Some(serde_json::json!({
            "replicas": settings.path_replicas,
            "mean": path_stats.mean,
            "ks_d": ks.statistic,
            "ks_p": ks.p_value,
        }))
    } else {
        if dump_dir.is_some() {
            return Err(CliError::usage(
                "--dump-paths on hitting-law requires --paths N (the exact sampler has no paths)",
            ));
        }
        None
    };

    let results = serde_json::json!({
        "nu": settings.nu,
        "start": settings.start,
        "gamma_shape": law.shape(),
        "replicas": settings.replicas,
        "mean": stats.mean,
        "theory_mean": theory_mean,
        "mean_ln": log_stats.mean,
        "se_ln": se_ln,
        "theory_mean_ln": theory_mean_ln,
        "agree_ln": agree_ln,
        "paths": paths_summary,
    });
    let mut table = Table::new(vec!["replica", "hitting_time"]);
    for (replica, t) in draws.iter().enumerate() {
        table.push(vec![format!("{replica}"), format!("{t}")]);
    }
    emit(&settings, &base_manifest, &results, &table)?;

    let mut ok = agree_ln;
    let mut reason = format!(
        "mean ln T0 = {} vs theory {theory_mean_ln} (se {se_ln})",
        log_stats.mean
    );
    if let Some(summary) = &results["paths"].as_object() {
        let p = summary["ks_p"].as_f64().unwrap_or(0.0);
        if p <= 0.01 {
            ok = false;
            reason = format!("path-vs-exact KS p = {p}");
        }
        if let Some(theory) = theory_mean {
            let path_mean = summary["mean"].as_f64().unwrap_or(f64::NAN);
            if !((path_mean - theory).abs().is_finite() && (path_mean - theory).abs() <= 0.05 * theory) {
                ok = false;
                reason = format!("path mean {path_mean} vs theory {theory} beyond 5%");
            }
        }
    }
    assert_gate(&settings, ok, &reason)
}

pub fn perpetuity(settings: Settings) -> Result<(), CliError> {
    reject_dump_paths(&settings)?;
    let config = settings.path_config();
    let nu = settings.nu;
    let seed = settings.seed;
    let pairs: Vec<(f64, f64)> = (0..settings.replicas)
        .into_par_iter()
        .map(|replica| {
            let mut stream = RngStream::new(seed, replica);
            let pair = jump_pair_from_paths(nu, &config, &mut stream)
                .expect("nu validated at entry; default horizon is ample");
            (pair.factor * pair.factor, pair.lifetime)
        })
        .collect();
    let report = perpetuity_test(&pairs, pairs.len())?;
    let expected = specfun::expected_ln_jump_sq(nu)?;
    let moment_ok = (report.mean_ln_factor - expected).abs() <= 3.0 * report.se;
    let sign_ok = !(expected < 0.0 && report.verdict == Verdict::Diverges)
        && !(expected > 0.0 && report.verdict == Verdict::Converges);

    let results = serde_json::json!({
        "nu": nu,
        "pairs": report.n_used,
        "mean_ln_factor": report.mean_ln_factor,
        "se": report.se,
        "verdict": report.verdict.to_string(),
        "expected_ln_jump_sq": expected,
        "moment_agrees": moment_ok,
    });
    let mut table = Table::new(vec!["replica", "lifetime", "factor_sq"]);
    for (replica, (factor_sq, lifetime)) in pairs.iter().enumerate() {
        table.push(vec![
            format!("{replica}"),
            format!("{lifetime}"),
            format!("{factor_sq}"),
        ]);
    }
    emit(&settings, &manifest(&settings), &results, &table)?;
    assert_gate(
        &settings,
        moment_ok && sign_ok,
        &format!(
            "mean ln factor^2 = {} (se {}) vs expected {expected}, verdict {}",
            report.mean_ln_factor, report.se, report.verdict
        ),
    )
}
