//! Experiments: weak-coupling sweeps, contraction scans, resolvent checks,
//! correlation integrals and the commutator-isometry check.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generators::{build_generator, semigroup_generator, transition_time, GeneratorSpec, TransitionTime};
use crate::model::{QuadScheme, QuadratureConfig, SystemModel};
use crate::opalg::{expm, op_norm, spectral_norm, spread, Operator, C64};
use crate::propagate::{free_diag, Dynamics};
use crate::quadrature::{integrate_1d, integrate_ordered_2d, Panelization};

/// Short description of the model an experiment ran on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub n0: usize,
    pub n1: usize,
    pub seed: u64,
    pub omega_min: f64,
    pub omega_max: f64,
    pub system_omega: Vec<f64>,
    pub a_norm: f64,
}

impl ModelSummary {
    pub fn of(m: &SystemModel) -> Self {
        Self {
            n0: m.n0,
            n1: m.n1,
            seed: m.seed,
            omega_min: m.omega.iter().copied().fold(f64::INFINITY, f64::min),
            omega_max: m.omega.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            system_omega: m.system_omega().to_vec(),
            a_norm: m.a_norm(),
        }
    }
}

/// One λ of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub lambda: f64,
    #[serde(rename = "T_lambda")]
    pub t_lambda: Option<f64>,
    /// `max_t ‖W_t - W̄_t‖` over the time grid.
    pub sup_error: f64,
    pub argmax_t: f64,
    /// `max_t ‖W̄_t‖` over the time grid.
    pub max_norm: f64,
    /// `∫_0^{λ⁻²τ̄} ‖A01 U^λ_x A10‖ dx`.
    pub a0_plateau: f64,
    pub wall_ms: f64,
    pub diagnostics: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub experiment: String,
    pub model: ModelSummary,
    pub generator: GeneratorSpec,
    pub transition_time: TransitionTime,
    pub lambda_grid: Vec<f64>,
    pub tau_bar: f64,
    pub time_nodes: usize,
    /// Ordered by descending `|λ|`.
    pub rows: Vec<ExperimentRow>,
    pub wall_ms: f64,
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

fn time_grid(t_max: f64, nodes: usize) -> Vec<f64> {
    if nodes <= 1 {
        return vec![t_max];
    }
    (0..nodes).map(|k| t_max * k as f64 / (nodes - 1) as f64).collect()
}

/// Weak-coupling sweep: for each λ, `E(λ) = max_t ‖W^λ_t - W̄^λ_t‖` over
/// `time_nodes` uniform points of `[0, λ⁻²τ̄]`, with `W̄` generated by
/// `Z0 + λA00 + λ²K` and `K` built from `spec` at `T = T(λ)`.
///
/// The λ rows run in parallel; the result is sorted by descending `|λ|`.
pub fn convergence_experiment(
    m: &SystemModel,
    spec: &GeneratorSpec,
    tt: &TransitionTime,
    lambda_grid: &[f64],
    tau_bar: f64,
    time_nodes: usize,
) -> Result<ExperimentResult> {
    let start = Instant::now();
    if lambda_grid.is_empty() || lambda_grid.iter().any(|&l| l == 0.0 || !l.is_finite()) {
        return Err(Error::InvalidArgument("lambda grid must be non-empty with nonzero entries".into()));
    }
    if !(tau_bar > 0.0) || !tau_bar.is_finite() {
        return Err(Error::InvalidArgument(format!("tau_bar must be positive, got {tau_bar}")));
    }
    if time_nodes < 2 {
        return Err(Error::InvalidArgument("time_nodes must be >= 2".into()));
    }
    spec.validate()?;
    tt.validate()?;
    let rows: Vec<ExperimentRow> = lambda_grid
        .par_iter()
        .map(|&lambda| convergence_row(m, spec, tt, lambda, tau_bar, time_nodes))
        .collect::<Result<_>>()?;
    let mut rows = rows;
    rows.sort_by(|a, b| b.lambda.abs().total_cmp(&a.lambda.abs()));
    Ok(ExperimentResult {
        experiment: "convergence".into(),
        model: ModelSummary::of(m),
        generator: spec.clone(),
        transition_time: tt.clone(),
        lambda_grid: lambda_grid.to_vec(),
        tau_bar,
        time_nodes,
        rows,
        wall_ms: elapsed_ms(start),
    })
}

fn convergence_row(
    m: &SystemModel,
    spec: &GeneratorSpec,
    tt: &TransitionTime,
    lambda: f64,
    tau_bar: f64,
    time_nodes: usize,
) -> Result<ExperimentRow> {
    let start = Instant::now();
    let ml = m.clone().with_lambda(lambda)?;
    let t_lambda = match spec.kind.timescale() {
        Some(t) => Some(t),
        None if spec.kind.uses_timescale() => Some(transition_time(tt, &ml, lambda)?),
        None => None,
    };
    let gen = build_generator(&ml, spec, t_lambda)?;
    let g = semigroup_generator(&ml, &gen.op)?;
    let d = Dynamics::new(&ml);
    let t_max = tau_bar / (lambda * lambda);
    let grid = time_grid(t_max, time_nodes);
    let samples: Vec<(f64, f64)> = grid
        .par_iter()
        .map(|&t| {
            let approx = expm(&g, t)?;
            let err = spectral_norm(&(d.projected(t) - approx.matrix()));
            Ok((err, spectral_norm(approx.matrix())))
        })
        .collect::<Result<_>>()?;
    let (mut sup_error, mut argmax_t, mut max_norm) = (0.0_f64, 0.0, 0.0_f64);
    for (&t, &(err, norm)) in grid.iter().zip(&samples) {
        if err > sup_error {
            sup_error = err;
            argmax_t = t;
        }
        max_norm = max_norm.max(norm);
    }
    let a0 = dressed_correlation_integral(&d, t_max, &spec.qc)?;
    let dt = if grid.len() > 1 { grid[1] - grid[0] } else { 0.0 };
    let g_norm = op_norm(&g)?;
    let full_norm = spectral_norm(&(ml.z().into_matrix() + ml.a.matrix() * C64::new(lambda, 0.0)));
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("generator_norm".into(), spectral_norm(gen.op.matrix()));
    diagnostics.insert("generator_estimate".into(), gen.estimate());
    diagnostics.insert("self_convergence".into(), gen.self_convergence);
    if let Some(tb) = gen.tail_bound {
        diagnostics.insert("tail_bound".into(), tb);
    }
    // Between grid nodes the error moves by at most its Lipschitz constant
    // times half a step.
    diagnostics.insert("grid_bound".into(), 0.5 * dt * (full_norm + g_norm * max_norm.max(1.0)));
    Ok(ExperimentRow {
        lambda,
        t_lambda,
        sup_error,
        argmax_t,
        max_norm,
        a0_plateau: a0,
        wall_ms: elapsed_ms(start),
        diagnostics,
    })
}

/// Outcome of [`contraction_scan`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub max_norm: f64,
    pub argmax_t: f64,
}

/// `max_t ‖exp((Z0 + λA00 + λ²K) t)‖` over `t_nodes` uniform points of
/// `[0, t_max]`, with the coupling constant of `m` replaced by `lambda`.
pub fn contraction_scan(m: &SystemModel, k: &Operator, lambda: f64, t_max: f64, t_nodes: usize) -> Result<ScanResult> {
    if !(t_max > 0.0) || !t_max.is_finite() {
        return Err(Error::InvalidArgument(format!("t_max must be positive, got {t_max}")));
    }
    let ml = m.clone().with_lambda(lambda)?;
    let g = semigroup_generator(&ml, k)?;
    let grid = time_grid(t_max, t_nodes.max(2));
    let norms: Vec<f64> = grid
        .par_iter()
        .map(|&t| expm(&g, t).and_then(|e| op_norm(&e)))
        .collect::<Result<_>>()?;
    let mut best = ScanResult { max_norm: f64::NEG_INFINITY, argmax_t: 0.0 };
    for (&t, &n) in grid.iter().zip(&norms) {
        if n > best.max_norm {
            best = ScanResult { max_norm: n, argmax_t: t };
        }
    }
    Ok(best)
}

/// One λ of a contraction sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionRow {
    pub lambda: f64,
    #[serde(rename = "T_lambda")]
    pub t_lambda: Option<f64>,
    pub max_norm: f64,
    pub argmax_t: f64,
    pub min_slack: f64,
    pub dissipative: bool,
}

/// Default resolvent parameters `α` scanned by [`contraction_experiment`].
pub const DEFAULT_ALPHAS: [f64; 6] = [1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0];

/// For each λ, scans `‖exp((Z0 + λA00 + λ²K) t)‖` over `time_nodes` points
/// of `[0, λ⁻²τ̄]` and runs the resolvent check on the same generator.
pub fn contraction_experiment(
    m: &SystemModel,
    spec: &GeneratorSpec,
    tt: &TransitionTime,
    lambda_grid: &[f64],
    tau_bar: f64,
    time_nodes: usize,
) -> Result<Vec<ContractionRow>> {
    spec.validate()?;
    tt.validate()?;
    let mut rows = Vec::with_capacity(lambda_grid.len());
    for &lambda in lambda_grid {
        let ml = m.clone().with_lambda(lambda)?;
        let t_lambda = match spec.kind.timescale() {
            Some(t) => Some(t),
            None if spec.kind.uses_timescale() => Some(transition_time(tt, &ml, lambda)?),
            None => None,
        };
        let gen = build_generator(&ml, spec, t_lambda)?;
        let t_max = if lambda == 0.0 { tau_bar } else { tau_bar / (lambda * lambda) };
        let scan = contraction_scan(&ml, &gen.op, lambda, t_max, time_nodes)?;
        let g = semigroup_generator(&ml, &gen.op)?;
        let diss = dissipativity_check(&g, &DEFAULT_ALPHAS, 32, m.seed)?;
        rows.push(ContractionRow {
            lambda,
            t_lambda,
            max_norm: scan.max_norm,
            argmax_t: scan.argmax_t,
            min_slack: diss.min_slack,
            dissipative: diss.passed,
        });
    }
    Ok(rows)
}

/// Minimum slack of the resolvent inequality `‖(1 - αG) b‖ >= ‖b‖`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DissipativityReport {
    pub min_slack: f64,
    pub worst_alpha: f64,
    pub samples: usize,
    pub passed: bool,
}

/// Floor below which a negative slack counts as a failure.
pub const DISSIPATIVITY_FLOOR: f64 = -1e-8;

/// Checks `‖(1 - αG) b‖ - ‖b‖ >= -1e-8` for every `α` in `alpha_samples` and
/// `vec_samples` seeded random unit vectors `b`, plus the top eigenvector of
/// `(G + G*)/2`, where a violation shows first for small `α`.
pub fn dissipativity_check(g: &Operator, alpha_samples: &[f64], vec_samples: usize, seed: u64) -> Result<DissipativityReport> {
    g.check_finite()?;
    if alpha_samples.iter().any(|&a| !(a > 0.0)) {
        return Err(Error::InvalidArgument("alpha samples must be positive".into()));
    }
    let n = g.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vectors: Vec<DVector<C64>> = (0..vec_samples)
        .map(|_| {
            let v = DVector::from_fn(n, |_, _| {
                C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
            });
            let norm = v.norm();
            v.unscale(norm)
        })
        .collect();
    let mut vectors = vectors;
    let herm = (g.matrix() + g.matrix().adjoint()) * C64::new(0.5, 0.0);
    let eig = nalgebra::SymmetricEigen::new(herm);
    if let Some(top) = (0..n).max_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j])) {
        vectors.push(eig.eigenvectors.column(top).into_owned());
    }
    let id = DMatrix::<C64>::identity(n, n);
    let mut report = DissipativityReport {
        min_slack: f64::INFINITY,
        worst_alpha: f64::NAN,
        samples: alpha_samples.len() * vectors.len(),
        passed: true,
    };
    for &alpha in alpha_samples {
        let r = &id - g.matrix() * C64::new(alpha, 0.0);
        for b in &vectors {
            let slack = (&r * b).norm() - b.norm();
            if slack < report.min_slack {
                report.min_slack = slack;
                report.worst_alpha = alpha;
            }
        }
    }
    report.passed = report.min_slack >= DISSIPATIVITY_FLOOR;
    Ok(report)
}

fn step_for(m: &SystemModel, qc: &QuadratureConfig) -> f64 {
    qc.step(1.0, spread(&m.omega))
}

/// Correlation integral `a_n(t)`: the ordered-simplex integral of
/// `‖A01 U_{t0-t1} A11 ⋯ A11 U_{tn} A10‖` with the free group `U`.
pub fn correlation_integral(m: &SystemModel, n: usize, t: f64, qc: &QuadratureConfig) -> Result<f64> {
    if n > 2 {
        return Err(Error::Unsupported(format!("correlation integral of order {n} (max 2)")));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("t must be >= 0, got {t}")));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let a01 = m.a_sub(0, 1);
    let a10 = m.a_sub(1, 0);
    let a11 = m.a_sub(1, 1);
    let w1 = m.env_omega().to_vec();
    let u = |s: f64| free_diag(&w1, s).into_matrix();
    let h = step_for(m, qc);
    let p = Panelization::with_step(0.0, t, h, QuadScheme::GaussLegendrePanels, 4)?;
    match n {
        0 => integrate_1d(|s| spectral_norm(&(&a01 * u(s) * &a10)), &p),
        1 => integrate_ordered_2d(
            |t0, t1| spectral_norm(&(&a01 * u(t0 - t1) * &a11 * u(t1) * &a10)),
            &p,
        ),
        _ => integrate_ordered_2d(
            |t0, t1| {
                if t1 <= 0.0 {
                    return 0.0;
                }
                let inner = Panelization::with_step(0.0, t1, h, QuadScheme::GaussLegendrePanels, 4)
                    .expect("positive interval");
                let head = &a01 * u(t0 - t1) * &a11;
                integrate_1d(|t2| spectral_norm(&(&head * u(t1 - t2) * &a11 * u(t2) * &a10)), &inner)
                    .unwrap_or(f64::NAN)
            },
            &p,
        ),
    }
}

/// `a_0` sampled at `points` uniform times of `(0, t_max]`, accumulated
/// panel by panel.
pub fn correlation_profile(m: &SystemModel, t_max: f64, points: usize, qc: &QuadratureConfig) -> Result<Vec<(f64, f64)>> {
    if !(t_max > 0.0) || points == 0 {
        return Err(Error::InvalidArgument("need t_max > 0 and at least one point".into()));
    }
    let a01 = m.a_sub(0, 1);
    let a10 = m.a_sub(1, 0);
    let w1 = m.env_omega().to_vec();
    let h = step_for(m, qc);
    let mut out = Vec::with_capacity(points);
    let mut acc = 0.0;
    let mut prev = 0.0;
    for k in 1..=points {
        let t = t_max * k as f64 / points as f64;
        let p = Panelization::with_step(prev, t, h, QuadScheme::GaussLegendrePanels, 4)?;
        let inc: f64 = integrate_1d(|s| spectral_norm(&(&a01 * free_diag(&w1, s).matrix() * &a10)), &p)?;
        acc += inc;
        out.push((t, acc));
        prev = t;
    }
    Ok(out)
}

/// `∫_0^{t} ‖A01 U^λ_x A10‖ dx` for the dressed environment group.
pub fn dressed_correlation_integral(d: &Dynamics, t: f64, qc: &QuadratureConfig) -> Result<f64> {
    if t == 0.0 {
        return Ok(0.0);
    }
    let h = qc.step(1.0, d.env_spread());
    let p = Panelization::with_step(0.0, t, h, QuadScheme::GaussLegendrePanels, 4)?;
    integrate_1d(|x| spectral_norm(&d.memory(x)), &p)
}

/// Outcome of [`commutator_isometry_check`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommutatorReport {
    /// `max |C + C*|` for `C = [D1, D2]`.
    pub skew_residual: f64,
    /// `(t, |‖e^{Ct}‖ - 1|)` per sample.
    pub deviations: Vec<(f64, f64)>,
    pub max_deviation: f64,
    pub passed: bool,
}

/// Tolerance on the isometry deviation in [`commutator_isometry_check`].
pub const COMMUTATOR_TOL: f64 = 1e-9;

/// Verifies that `[D1, D2]` of two skew-Hermitian generators is skew-Hermitian
/// and generates isometries at every sampled `t` and `-t`.
pub fn commutator_isometry_check(d1: &Operator, d2: &Operator, t_samples: &[f64]) -> Result<CommutatorReport> {
    for d in [d1, d2] {
        d.check_finite()?;
        let residual = d.skew_hermitian_residual();
        if residual > 1e-10 {
            return Err(Error::InvalidGenerator { residual });
        }
    }
    if d1.dim() != d2.dim() {
        return Err(Error::InvalidArgument("generators must share a dimension".into()));
    }
    let c = d1.commutator(d2);
    let mut deviations = Vec::new();
    for &t in t_samples {
        let mut ts = vec![t];
        if t != 0.0 && !t_samples.contains(&-t) {
            ts.push(-t);
        }
        for s in ts {
            let dev = (op_norm(&expm(&c, s)?)? - 1.0).abs();
            deviations.push((s, dev));
        }
    }
    let max_deviation = deviations.iter().fold(0.0_f64, |a, &(_, d)| a.max(d));
    let skew_residual = c.skew_hermitian_residual();
    Ok(CommutatorReport {
        skew_residual,
        passed: max_deviation <= COMMUTATOR_TOL && skew_residual <= 1e-10,
        deviations,
        max_deviation,
    })
}
