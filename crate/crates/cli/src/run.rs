//! Command dispatch: config in, [`Report`] out.

use std::time::Instant;

use clap::ValueEnum;
use lbe_core::diagnostics::{
    picard_verdict, scaling_identity_verdict, scaling_verdict, uniqueness_verdict,
    verify_change_of_variables, verify_chord_volume, verify_circle_lemma, verify_h1_forward,
    verify_h1_reverse, verify_jg_sufficiency, verify_kernel, verify_operator_inequalities,
    verify_tau_gradients,
};
use lbe_core::fields::manufactured_field;
use lbe_core::kernel::ProbeQuadrature;
use lbe_core::solver::{contraction_estimate, picard_solve, scaling_identity, scaling_study, uniqueness_check};
use lbe_core::{Error as CoreError, Field, OperatorContext, Vec3};
use thiserror::Error;

use crate::config::{ConfigError, GridConfig, RunConfig};
use crate::report::{Report, Table};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Solve,
    Contraction,
    Scaling,
    VerifyGeometry,
    VerifyKernel,
    VerifyCov,
    VerifyJg,
    VerifyOps,
    All,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Contraction => "contraction",
            Command::Scaling => "scaling",
            Command::VerifyGeometry => "verify-geometry",
            Command::VerifyKernel => "verify-kernel",
            Command::VerifyCov => "verify-cov",
            Command::VerifyJg => "verify-jg",
            Command::VerifyOps => "verify-ops",
            Command::All => "all",
        }
    }

    fn randomized(self) -> bool {
        !matches!(self, Command::Solve | Command::VerifyCov | Command::VerifyJg)
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("command `{0}` is randomized and needs a seed (config `seed` or --seed)")]
    MissingSeed(&'static str),
}

/// Runs `command`. A failed verdict or a solve that does not converge is
/// recorded in the report, not returned as an error.
pub fn run_command(cfg: &RunConfig, command: Command) -> Result<Report, RunError> {
    cfg.validate()?;
    if command.randomized() && cfg.seed.is_none() {
        return Err(RunError::MissingSeed(command.name()));
    }
    let mut report = Report::new(command.name(), cfg.to_toml());
    let start = Instant::now();
    match command {
        Command::All => {
            for c in [
                Command::VerifyGeometry,
                Command::VerifyKernel,
                Command::VerifyCov,
                Command::Solve,
                Command::Contraction,
                Command::Scaling,
                Command::VerifyJg,
                Command::VerifyOps,
            ] {
                let t = Instant::now();
                run_one(cfg, c, &mut report)?;
                report.timing.insert(c.name().into(), t.elapsed().as_secs_f64());
            }
        }
        c => run_one(cfg, c, &mut report)?,
    }
    report.timing.insert("total".into(), start.elapsed().as_secs_f64());
    Ok(report)
}

fn run_one(cfg: &RunConfig, command: Command, report: &mut Report) -> Result<(), RunError> {
    let seed = cfg.seed.unwrap_or(0);
    match command {
        Command::Solve => solve(cfg, report),
        Command::Contraction => {
            let ctx = cfg.context()?;
            let est = contraction_estimate(&ctx, cfg.study.trials, seed)?;
            let mut trials = Table::new("contraction_trials", &["trial", "first_step_ratio"]);
            for (i, r) in est.first_step_ratios.iter().enumerate() {
                trials.push_values(&[i as f64, *r]);
            }
            let mut power = Table::new("contraction_power", &["step", "ratio"]);
            for (i, r) in est.power_ratios.iter().enumerate() {
                power.push_values(&[(i + 1) as f64, *r]);
            }
            report.tables.extend([trials, power]);
            report.summary.insert("contraction".into(), est.estimate);
            report.summary.insert("contraction_stability".into(), est.stability);
            report.verdicts.push(lbe_core::LemmaVerdict {
                lemma: "contraction_factor".into(),
                pass: est.estimate.is_finite() && est.stability <= 0.05,
                constant: est.estimate,
                violation: est.stability,
                refinement_deltas: est.power_ratios.clone(),
                samples: format!("{} random fields", cfg.study.trials),
                seed: Some(seed),
            });
            Ok(())
        }
        Command::Scaling => {
            let ctx = cfg.context()?;
            let t = Instant::now();
            let study = scaling_study(&ctx, &cfg.study.kappas, cfg.study.trials, seed)?;
            report.timing.insert("scaling_study".into(), t.elapsed().as_secs_f64());
            let mut table = Table::new("scaling", &["kappa", "diam", "contraction", "stability"]);
            for r in &study.rows {
                table.push_values(&[r.kappa, r.diameter, r.contraction, r.stability]);
            }
            report.tables.push(table);
            report.summary.insert("alpha".into(), study.alpha);
            report.summary.insert("intercept".into(), study.intercept);
            report.verdicts.push(scaling_verdict(&study, seed));
            let solve_cfg = cfg.solve_config();
            let diff = scaling_identity(&ctx, &cfg.boundary(), 0.5, 3)?;
            report.summary.insert("scaling_identity".into(), diff);
            report.verdicts.push(scaling_identity_verdict(diff, 0.5, &solve_cfg));
            Ok(())
        }
        Command::VerifyGeometry => {
            let domain = cfg.domain()?;
            let t = Instant::now();
            report
                .verdicts
                .push(verify_circle_lemma(&domain, cfg.study.samples, seed)?);
            report.timing.insert("chord_bound".into(), t.elapsed().as_secs_f64());
            let t = Instant::now();
            report.verdicts.push(verify_tau_gradients(
                &domain,
                cfg.study.gradient_samples,
                seed,
            )?);
            report.timing.insert("exit_time_gradients".into(), t.elapsed().as_secs_f64());
            let t = Instant::now();
            report
                .verdicts
                .push(verify_chord_volume(&domain, cfg.grid.resolution())?);
            report.timing.insert("chord_volume".into(), t.elapsed().as_secs_f64());
            Ok(())
        }
        Command::VerifyKernel => {
            let params = cfg.kernel()?;
            report
                .verdicts
                .extend(verify_kernel(&params, &ProbeQuadrature::default(), seed)?);
            Ok(())
        }
        Command::VerifyCov => {
            let domain = cfg.domain()?;
            let integrand = |_x: &Vec3, v: &Vec3, s: f64| s * (-v.norm_squared()).exp();
            report.verdicts.push(verify_change_of_variables(
                &domain,
                cfg.grid.resolution(),
                cfg.grid.v_max,
                &integrand,
            )?);
            Ok(())
        }
        Command::VerifyJg => {
            let ctx = cfg.context()?;
            let refined = refined_context(cfg)?;
            let g = cfg.boundary();
            report
                .verdicts
                .extend(verify_jg_sufficiency(&ctx, &refined, &g)?);
            let contexts = h1_contexts(cfg, &ctx)?;
            report
                .verdicts
                .push(verify_h1_forward(&contexts, &g, &cfg.solve_config())?);
            let make: &dyn Fn(&lbe_core::ConvexDomain) -> Field = &manufactured_field;
            report.verdicts.push(verify_h1_reverse(&contexts, make)?);
            Ok(())
        }
        Command::VerifyOps => {
            let ctx = cfg.context()?;
            let smaller = ctx.with_domain(&ctx.domain().scaled(0.5)?)?;
            let refined = refined_context(cfg)?;
            report.verdicts.extend(verify_operator_inequalities(
                &ctx,
                &smaller,
                &refined,
                cfg.study.inequality_trials,
                seed,
            )?);
            Ok(())
        }
        Command::All => unreachable!("expanded by run_command"),
    }
}

fn refined_context(cfg: &RunConfig) -> Result<OperatorContext, RunError> {
    Ok(cfg.context_with(&cfg.domain()?, &cfg.grid.refined())?)
}

/// Base context, one grid refinement, and one truncation refinement
/// (`V_max` up by a third, `n_v` up by 2 so the node spacing is kept).
pub fn h1_contexts(cfg: &RunConfig, base: &OperatorContext) -> Result<Vec<OperatorContext>, RunError> {
    let domain = cfg.domain()?;
    let wider = GridConfig {
        v_max: cfg.grid.v_max * 4.0 / 3.0,
        n_v: cfg.grid.n_v + 2,
        ..cfg.grid
    };
    Ok(vec![
        base.clone(),
        cfg.context_with(&domain, &cfg.grid.refined())?,
        cfg.context_with(&domain, &wider)?,
    ])
}

fn solve(cfg: &RunConfig, report: &mut Report) -> Result<(), RunError> {
    let ctx = cfg.context()?;
    let solve_cfg = cfg.solve_config();
    let g = cfg.boundary();
    let t = Instant::now();
    let outcome = picard_solve(&ctx, &g, &solve_cfg);
    report.timing.insert("solve".into(), t.elapsed().as_secs_f64());
    let iteration_report = match outcome {
        Ok((_, r)) => r,
        Err(CoreError::NotConverged(r)) => {
            report.failure = Some(format!(
                "Picard iteration did not reach tolerance {:e} in {} iterations",
                solve_cfg.tolerance, solve_cfg.max_iterations
            ));
            *r
        }
        Err(e) => return Err(e.into()),
    };
    let mut table = Table::new("iterations", &["iteration", "delta", "ratio", "norm", "h1"]);
    for r in &iteration_report.rows {
        table.push(vec![
            Some(r.iteration as f64),
            Some(r.delta),
            r.ratio,
            Some(r.norm),
            r.h1,
        ]);
    }
    report.tables.push(table);
    report
        .summary
        .insert("final_residual".into(), iteration_report.final_residual);
    report
        .summary
        .insert("iterations".into(), iteration_report.rows.len() as f64);
    report.verdicts.push(picard_verdict(&iteration_report, &solve_cfg));
    if iteration_report.converged {
        let distance = uniqueness(cfg, &ctx)?;
        report.summary.insert("uniqueness_distance".into(), distance);
        report.verdicts.push(uniqueness_verdict(distance, 3, &solve_cfg));
    }
    Ok(())
}

/// Distance between Picard solutions from `0`, `Jg` and `5 Jg`.
pub fn uniqueness(cfg: &RunConfig, ctx: &OperatorContext) -> Result<f64, RunError> {
    let g = cfg.boundary();
    let jg = ctx.apply_j(&g);
    let inits = [Field::zero(), jg.clone(), jg.scaled(5.0)];
    Ok(uniqueness_check(ctx, &g, &cfg.solve_config(), &inits)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    fn small(extra: &str) -> RunConfig {
        parse_config(&format!(
            "seed = 3\n[domain]\nshape = \"sphere\"\nradius = 0.1\n\
             [grid]\nn_r = 3\nn_theta = 4\nn_phi = 6\nn_v = 4\nlattice = 6\nline_order = 6\n{extra}"
        ))
        .unwrap()
    }

    #[test]
    fn zero_data_converges_at_once() {
        let cfg = small("[boundary]\nfamily = \"zero\"\n");
        let r = run_command(&cfg, Command::Solve).unwrap();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.summary["iterations"], 1.0);
        assert_eq!(r.summary["final_residual"], 0.0);
        assert_eq!(r.tables[0].to_csv(), "iteration,delta,ratio,norm,h1\n1,0,,0,\n");
    }

    #[test]
    fn randomized_commands_need_a_seed() {
        let mut cfg = small("");
        cfg.seed = None;
        assert!(matches!(
            run_command(&cfg, Command::Contraction),
            Err(RunError::MissingSeed("contraction"))
        ));
    }

    #[test]
    fn non_convergence_is_a_recorded_failure() {
        let cfg = small("[solve]\nmax_iterations = 1\ntolerance = 1e-300\n");
        let r = run_command(&cfg, Command::Solve).unwrap();
        assert!(!r.passed());
        assert!(r.failure.is_some());
        assert_eq!(r.tables[0].rows.len(), 1);
    }
}
