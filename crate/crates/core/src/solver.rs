//! Picard iteration for `f = Jg + S K f` and the contraction studies built
//! on it.
//!
//! Every iterate is represented twice: by its values at the phase nodes
//! (used for norms and the stopping test) and by its values on the
//! interpolation lattice of the context (the argument of the next discrete
//! `S K`). The new iterate is `f_n = Jg + S K I f_{n−1}`, an exact field
//! whose evaluator produces both representations.

use std::sync::Arc;
use std::time::Instant;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::random_smooth_field;
use crate::grids::{BoundaryData, Field, NormKind, PhaseGrid};
use crate::operators::{DiscreteSk, OperatorContext};

/// Power-iteration steps in [`contraction_estimate`].
pub const POWER_STEPS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub max_iterations: usize,
    /// Stop once the `L²` norm of the successive difference is at most this.
    pub tolerance: f64,
    pub norm_kind: NormKind,
    pub record_h1: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            max_iterations: 60,
            tolerance: 1e-8,
            norm_kind: NormKind::L2,
            record_h1: false,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(Error::ParameterRange("max_iterations must be at least 1".into()));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::ParameterRange(format!(
                "tolerance = {} must be positive",
                self.tolerance
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRow {
    pub iteration: usize,
    /// `‖f_i − f_{i−1}‖_{L²}`.
    pub delta: f64,
    /// `delta_i / delta_{i−1}`, from the second iterate on.
    pub ratio: Option<f64>,
    /// Norm of `f_i` in the configured kind.
    pub norm: f64,
    pub h1: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub rows: Vec<IterationRow>,
    /// `‖f − Jg − S K I f‖_{L²}` for the returned iterate.
    pub final_residual: f64,
    pub converged: bool,
    #[serde(skip)]
    pub wall_time_s: f64,
}

struct Iterate {
    lattice: Array2<f64>,
    phase: Vec<f64>,
}

struct Source {
    jg: Field,
    lattice: Array2<f64>,
    phase: Vec<f64>,
}

impl Source {
    fn new(ctx: &OperatorContext, g: &BoundaryData) -> Result<Self> {
        let jg = ctx.apply_j(g);
        Ok(Self {
            phase: ctx.grid().sample(&jg)?,
            lattice: ctx.lattice_samples(&jg)?,
            jg,
        })
    }
}

fn phase_values(grid: &PhaseGrid, t: &Arc<DiscreteSk>) -> Result<Vec<f64>> {
    let t = t.clone();
    grid.sample(&Field::new(move |x, v| t.eval(x, v)))
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// One application of `f ↦ Jg + S K I f`; returns the new iterate, the
/// discrete `S K I f` and its phase values.
fn picard_step(
    ctx: &OperatorContext,
    src: &Source,
    prev: &Iterate,
) -> Result<(Iterate, Arc<DiscreteSk>, Vec<f64>)> {
    let t = Arc::new(ctx.discrete_sk_samples(prev.lattice.clone()));
    let t_phase = phase_values(ctx.grid(), &t)?;
    let next = Iterate {
        phase: add(&src.phase, &t_phase),
        lattice: &src.lattice + &t.lattice_values()?,
    };
    Ok((next, t, t_phase))
}

fn iterate_field(src: &Source, t: &Arc<DiscreteSk>, grid: &PhaseGrid, phase: Vec<f64>) -> Field {
    let (jg, t) = (src.jg.clone(), t.clone());
    Field::new(move |x, v| Ok(jg.eval(x, v)? + t.eval(x, v)?)).with_samples(grid, phase)
}

pub fn picard_solve(
    ctx: &OperatorContext,
    g: &BoundaryData,
    cfg: &SolveConfig,
) -> Result<(Field, IterationReport)> {
    picard_solve_from(ctx, g, cfg, None)
}

/// Picard iteration from `init` (default `Jg`).
///
/// On [`Error::NotConverged`] the boxed report carries all rows.
pub fn picard_solve_from(
    ctx: &OperatorContext,
    g: &BoundaryData,
    cfg: &SolveConfig,
    init: Option<&Field>,
) -> Result<(Field, IterationReport)> {
    cfg.validate()?;
    let start = Instant::now();
    let grid = ctx.grid();
    let src = Source::new(ctx, g)?;
    let mut current = match init {
        None => Iterate {
            lattice: src.lattice.clone(),
            phase: src.phase.clone(),
        },
        Some(f0) => Iterate {
            lattice: ctx.lattice_samples(f0)?,
            phase: grid.sample(f0)?,
        },
    };
    let mut rows: Vec<IterationRow> = Vec::new();
    let mut converged = false;
    let mut last: Option<(Arc<DiscreteSk>, Vec<f64>, Field)> = None;
    for n in 1..=cfg.max_iterations {
        let (next, t, t_phase) = picard_step(ctx, &src, &current)?;
        let delta = grid.l2_from_samples(&sub(&next.phase, &current.phase));
        let field = iterate_field(&src, &t, grid, next.phase.clone());
        let h1 = if cfg.record_h1 {
            Some(grid.norm(&field, NormKind::H1)?)
        } else {
            None
        };
        let norm = match (cfg.norm_kind, h1) {
            (NormKind::H1, Some(h)) => h,
            (NormKind::L2, _) => grid.l2_from_samples(&next.phase),
            (kind, _) => grid.norm(&field, kind)?,
        };
        rows.push(IterationRow {
            iteration: n,
            delta,
            ratio: rows.last().map(|r| delta / r.delta),
            norm,
            h1,
        });
        current = next;
        last = Some((t, t_phase, field));
        if delta <= cfg.tolerance {
            converged = true;
            break;
        }
    }
    let (_, t_phase, field) = last.expect("at least one iteration");
    let t_next = Arc::new(ctx.discrete_sk_samples(current.lattice));
    let final_residual = grid.l2_from_samples(&sub(&phase_values(grid, &t_next)?, &t_phase));
    let report = IterationReport {
        rows,
        final_residual,
        converged,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    if !converged {
        return Err(Error::NotConverged(Box::new(report)));
    }
    Ok((field, report))
}

/// Phase values of the Picard iterates `f_0 = Jg, …, f_n` (no stopping test).
pub fn picard_iterates(ctx: &OperatorContext, g: &BoundaryData, n: usize) -> Result<Vec<Vec<f64>>> {
    let src = Source::new(ctx, g)?;
    let mut current = Iterate {
        lattice: src.lattice.clone(),
        phase: src.phase.clone(),
    };
    let mut out = vec![current.phase.clone()];
    for _ in 0..n {
        current = picard_step(ctx, &src, &current)?.0;
        out.push(current.phase.clone());
    }
    Ok(out)
}

/// Phase values of the partial sums `Σ_{i≤m} (S K I)^i Jg`, `m = 0..=n`.
pub fn neumann_partial_sums(
    ctx: &OperatorContext,
    g: &BoundaryData,
    n: usize,
) -> Result<Vec<Vec<f64>>> {
    let src = Source::new(ctx, g)?;
    let mut term_lattice = src.lattice.clone();
    let mut sum = src.phase.clone();
    let mut out = vec![sum.clone()];
    for _ in 0..n {
        let t = Arc::new(ctx.discrete_sk_samples(term_lattice));
        let term_phase = phase_values(ctx.grid(), &t)?;
        sum = add(&sum, &term_phase);
        term_lattice = t.lattice_values()?;
        out.push(sum.clone());
    }
    Ok(out)
}

/// `‖f − Jg − S K I f‖_{L²}` on the phase grid.
pub fn residual(ctx: &OperatorContext, f: &Field, g: &BoundaryData) -> Result<f64> {
    let grid = ctx.grid();
    let t = Arc::new(ctx.discrete_sk(f)?);
    let t_phase = phase_values(grid, &t)?;
    let f_phase = grid.sample(f)?;
    let j_phase = grid.sample(&ctx.apply_j(g))?;
    let r: Vec<f64> = f_phase
        .iter()
        .zip(&j_phase)
        .zip(&t_phase)
        .map(|((f, j), t)| f - j - t)
        .collect();
    Ok(grid.l2_from_samples(&r))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionEstimate {
    /// Last power-iteration ratio `‖T h_k‖ / ‖h_k‖`.
    pub estimate: f64,
    /// `‖T h‖ / ‖h‖` for each random trial field.
    pub first_step_ratios: Vec<f64>,
    pub power_ratios: Vec<f64>,
    /// `|r_last − r_prev| / r_last` of the power iteration.
    pub stability: f64,
}

/// Operator-norm estimate of the discrete `S K` on `L²`.
///
/// Each seeded trial field gets one application; the power iteration then
/// runs from the trial with the largest first-step ratio.
pub fn contraction_estimate(
    ctx: &OperatorContext,
    trials: usize,
    seed: u64,
) -> Result<ContractionEstimate> {
    if trials < 8 {
        return Err(Error::ParameterRange(format!(
            "contraction estimate needs at least 8 trials (got {trials})"
        )));
    }
    let grid = ctx.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut first_step_ratios = Vec::with_capacity(trials);
    let mut best: Option<(f64, Arc<DiscreteSk>, f64)> = None;
    for _ in 0..trials {
        let h = random_smooth_field(ctx.domain(), grid.v_max, &mut rng);
        let h_norm = grid.norm(&h, NormKind::L2)?;
        let t = Arc::new(ctx.discrete_sk(&h)?);
        let t_norm = grid.l2_from_samples(&phase_values(grid, &t)?);
        let ratio = t_norm / h_norm;
        first_step_ratios.push(ratio);
        if best.as_ref().is_none_or(|b| ratio > b.0) {
            best = Some((ratio, t, t_norm));
        }
    }
    let (_, mut t, mut t_norm) = best.expect("trials >= 8");
    let mut power_ratios = Vec::with_capacity(POWER_STEPS);
    for _ in 0..POWER_STEPS {
        if t_norm == 0.0 {
            power_ratios.push(0.0);
            break;
        }
        let next = t.lattice_values()? / t_norm;
        t = Arc::new(ctx.discrete_sk_samples(next));
        t_norm = grid.l2_from_samples(&phase_values(grid, &t)?);
        power_ratios.push(t_norm);
    }
    let estimate = *power_ratios.last().unwrap_or(&0.0);
    let stability = match power_ratios.as_slice() {
        [.., a, b] if *b > 0.0 => (b - a).abs() / b,
        _ => 0.0,
    };
    Ok(ContractionEstimate {
        estimate,
        first_step_ratios,
        power_ratios,
        stability,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub kappa: f64,
    pub diameter: f64,
    pub contraction: f64,
    pub stability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingStudy {
    /// Least-squares slope of `log r` against `log κ`.
    pub alpha: f64,
    pub intercept: f64,
    pub rows: Vec<ScalingRow>,
}

/// Contraction estimates on the domains `κ Ω` and the fitted exponent.
pub fn scaling_study(
    base: &OperatorContext,
    kappas: &[f64],
    trials: usize,
    seed: u64,
) -> Result<ScalingStudy> {
    check_scales(kappas)?;
    let mut rows = Vec::with_capacity(kappas.len());
    for &kappa in kappas {
        let domain = base.domain().scaled(kappa)?;
        let ctx = base.with_domain(&domain)?;
        let est = contraction_estimate(&ctx, trials, seed)?;
        rows.push(ScalingRow {
            kappa,
            diameter: domain.diameter(),
            contraction: est.estimate,
            stability: est.stability,
        });
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (r.kappa.ln(), r.contraction.ln()))
        .collect();
    let (alpha, intercept) = least_squares(&pts);
    Ok(ScalingStudy {
        alpha,
        intercept,
        rows,
    })
}

fn check_scales(kappas: &[f64]) -> Result<()> {
    if let Some(k) = kappas.iter().find(|k| !(**k > 0.0 && **k <= 1.0)) {
        return Err(Error::ParameterRange(format!("kappa = {k} must lie in (0, 1]")));
    }
    let mut distinct: Vec<f64> = kappas.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let span = distinct.last().unwrap_or(&1.0) / distinct.first().unwrap_or(&1.0);
    if distinct.len() < 4 || span < 10.0 {
        return Err(Error::InsufficientScales);
    }
    Ok(())
}

/// Slope and intercept of the least-squares line through `pts`.
pub fn least_squares(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Relative `L²` distance between `iterations` Picard iterates on `κ Ω`
/// with data `g(z/κ, v)` and those on `Ω` with `ν` and `k` multiplied by
/// `κ`, compared node by node. The two problems are the same equation
/// written in different variables, so the distance is roundoff.
pub fn scaling_identity(
    ctx: &OperatorContext,
    g: &BoundaryData,
    kappa: f64,
    iterations: usize,
) -> Result<f64> {
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::ParameterRange(format!("kappa = {kappa} must be positive")));
    }
    let small = ctx.with_domain(&ctx.domain().scaled(kappa)?)?;
    let data = g.clone();
    let small_data = BoundaryData::custom(move |z, v| data.value(&(z / kappa), v));
    let mut params = *ctx.params();
    params.nu0 *= kappa;
    params.amplitude *= kappa;
    let stretched = ctx.with_domain_and_params(ctx.domain(), params)?;
    let a = picard_iterates(&small, &small_data, iterations)?;
    let b = picard_iterates(&stretched, g, iterations)?;
    let grid = stretched.grid();
    let diff = grid.l2_from_samples(&sub(a.last().unwrap(), b.last().unwrap()));
    let scale = grid.l2_from_samples(b.last().unwrap());
    Ok(if scale > 0.0 { diff / scale } else { diff })
}

/// Largest pairwise `L²` distance between Picard solutions started from
/// each initialization.
pub fn uniqueness_check(
    ctx: &OperatorContext,
    g: &BoundaryData,
    cfg: &SolveConfig,
    inits: &[Field],
) -> Result<f64> {
    let grid = ctx.grid();
    let solutions: Vec<Vec<f64>> = inits
        .iter()
        .map(|f0| {
            let (f, _) = picard_solve_from(ctx, g, cfg, Some(f0))?;
            grid.sample(&f)
        })
        .collect::<Result<_>>()?;
    let mut worst: f64 = 0.0;
    for i in 0..solutions.len() {
        for j in i + 1..solutions.len() {
            worst = worst.max(grid.l2_from_samples(&sub(&solutions[i], &solutions[j])));
        }
    }
    Ok(worst)
}
