//! Surrogate-assisted black-box optimization of the four free Givens
//! angles `{φ₃, φ₄, φ₅, φ₆}` against a noisy Monte Carlo objective.
//!
//! The search runs a Latin hypercube initial design over `[-π, π)⁴`,
//! fits a radial-basis-function surrogate (cubic kernel plus linear
//! tail), and alternates between exploiting the surrogate minimum and
//! exploring far from evaluated points via a cycled trade-off weight.
//! Every evaluation carries a standard error; incumbent updates require
//! 2-stderr dominance. A Nelder-Mead direct search with restarts is
//! provided as a derivative-free fallback and powers the angle-fitting
//! routine for target matrices.

use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

use crate::error::Error;
use crate::metrics::MetricsReport;
use crate::montecarlo::{run_point, RunConfig, SimPoint};
use crate::rotations::{wrap_angle, GivensAngles4D, RotationMatrix, RotationRecipe};
use crate::streams::{substream, Source};
use crate::Result;

const DIM: usize = 4;
const PI: f64 = core::f64::consts::PI;

/// Scalar the optimizer minimizes, extracted from a [`MetricsReport`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveKind {
    Bler,
    Ber,
    Ser,
    /// Negated achievable information rate (maximizes AIR).
    NegAir,
}

impl ObjectiveKind {
    /// `(value, stderr)` of this objective in a finished report.
    pub fn extract(self, report: &MetricsReport) -> (f64, f64) {
        match self {
            ObjectiveKind::Bler => (report.bler, report.bler_stderr),
            ObjectiveKind::Ber => (report.ber, report.ber_stderr),
            ObjectiveKind::Ser => (report.ser, report.ser_stderr),
            ObjectiveKind::NegAir => (-report.air, report.air_stderr),
        }
    }
}

/// Radial basis function used by the surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RbfKernel {
    /// `φ(r) = r³` with a linear polynomial tail.
    Cubic,
    /// `φ(r) = r² ln r` with a linear polynomial tail.
    ThinPlate,
}

impl RbfKernel {
    fn eval(self, r: f64) -> f64 {
        match self {
            RbfKernel::Cubic => r * r * r,
            RbfKernel::ThinPlate => {
                if r <= 0.0 {
                    0.0
                } else {
                    r * r * libm::log(r)
                }
            }
        }
    }
}

/// Search parameters.
#[derive(Debug, Clone, Copy)]
pub struct OptimizerConfig {
    pub objective: ObjectiveKind,
    /// Total objective evaluations, initial design included.
    pub budget: usize,
    /// Latin hypercube size.
    pub initial_design: usize,
    pub kernel: RbfKernel,
    pub seed: u64,
    /// When set, every evaluation reuses the same symbol/phase/noise
    /// substreams, so candidate rotations are compared under common
    /// random numbers and the comparison variance shrinks.
    pub common_random_numbers: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            objective: ObjectiveKind::Bler,
            budget: 150,
            initial_design: 24,
            kernel: RbfKernel::Cubic,
            seed: 0,
            common_random_numbers: true,
        }
    }
}

/// One objective evaluation in the search history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub eval_index: usize,
    pub angles: GivensAngles4D,
    pub objective: f64,
    pub stderr: f64,
    /// Whether this evaluation became the incumbent.
    pub incumbent: bool,
}

/// Result of a finished search.
#[derive(Debug, Clone)]
pub struct OptimizeOutcome {
    pub angles: GivensAngles4D,
    pub objective: f64,
    pub stderr: f64,
    /// Index into `trace` of the incumbent evaluation.
    pub incumbent_index: usize,
    pub trace: Vec<TraceRow>,
    /// The budget was consumed; the incumbent is the best point found,
    /// not a certified optimum.
    pub budget_exhausted: bool,
    /// Observed improvements were comparable to the evaluation noise;
    /// the incumbent ordering is statistically fragile.
    pub noisy_objective: bool,
}

// ---------------------------------------------------------------------------
// Generic engine over a closure objective
// ---------------------------------------------------------------------------

/// Squared distance on the angle torus.
fn torus_dist2(a: &[f64; DIM], b: &[f64; DIM]) -> f64 {
    let mut d2 = 0.0;
    for i in 0..DIM {
        let d = wrap_angle(a[i] - b[i]);
        d2 += d * d;
    }
    d2
}

/// Solves `A x = b` in place by Gaussian elimination with partial
/// pivoting; `a` is `n × n` row-major.
fn gauss_solve(a: &mut [f64], b: &mut [f64], n: usize) -> Result<()> {
    for col in 0..n {
        let mut piv = col;
        for row in col + 1..n {
            if libm::fabs(a[row * n + col]) > libm::fabs(a[piv * n + col]) {
                piv = row;
            }
        }
        if libm::fabs(a[piv * n + col]) < 1e-300 {
            return Err(Error::InvalidParameter("singular surrogate system"));
        }
        if piv != col {
            for k in 0..n {
                a.swap(col * n + k, piv * n + k);
            }
            b.swap(col, piv);
        }
        let d = a[col * n + col];
        for row in col + 1..n {
            let f = a[row * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= f * a[col * n + k];
            }
            b[row] -= f * b[col];
        }
    }
    for col in (0..n).rev() {
        let mut s = b[col];
        for k in col + 1..n {
            s -= a[col * n + k] * b[k];
        }
        b[col] = s / a[col * n + col];
    }
    Ok(())
}

/// Fitted RBF interpolant `f(x) = Σ λ_j φ(|x - x_j|) + c₀ + cᵀx`.
struct Surrogate {
    kernel: RbfKernel,
    centers: Vec<[f64; DIM]>,
    lambda: Vec<f64>,
    poly: [f64; DIM + 1],
}

impl Surrogate {
    fn fit(kernel: RbfKernel, pts: &[[f64; DIM]], vals: &[f64]) -> Result<Self> {
        let m = pts.len();
        let n = m + DIM + 1;
        let mut a = vec![0.0f64; n * n];
        let mut b = vec![0.0f64; n];
        // Mild ridge on the kernel block absorbs Monte Carlo noise and
        // duplicate-adjacent points.
        let ridge = 1e-8;
        for i in 0..m {
            for j in 0..m {
                let r = libm::sqrt(torus_dist2(&pts[i], &pts[j]));
                a[i * n + j] = kernel.eval(r) + if i == j { ridge } else { 0.0 };
            }
            a[i * n + m] = 1.0;
            a[(m) * n + i] = 1.0;
            for k in 0..DIM {
                a[i * n + m + 1 + k] = pts[i][k];
                a[(m + 1 + k) * n + i] = pts[i][k];
            }
            b[i] = vals[i];
        }
        gauss_solve(&mut a, &mut b, n)?;
        let mut poly = [0.0; DIM + 1];
        poly.copy_from_slice(&b[m..]);
        Ok(Self {
            kernel,
            centers: pts.to_vec(),
            lambda: b[..m].to_vec(),
            poly,
        })
    }

    fn predict(&self, x: &[f64; DIM]) -> f64 {
        let mut v = self.poly[0];
        for k in 0..DIM {
            v += self.poly[1 + k] * x[k];
        }
        for (c, &l) in self.centers.iter().zip(&self.lambda) {
            let r = libm::sqrt(torus_dist2(c, x));
            v += l * self.kernel.eval(r);
        }
        v
    }
}

/// Latin hypercube design over `[-π, π)⁴`.
fn latin_hypercube(size: usize, rng: &mut impl Rng) -> Vec<[f64; DIM]> {
    let mut strata: Vec<Vec<usize>> = (0..DIM).map(|_| (0..size).collect()).collect();
    for perm in strata.iter_mut() {
        for i in (1..size).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
    }
    (0..size)
        .map(|i| {
            let mut x = [0.0; DIM];
            for (k, stratum) in strata.iter().enumerate() {
                let u: f64 = rng.random();
                x[k] = -PI + 2.0 * PI * (stratum[i] as f64 + u) / size as f64;
            }
            x
        })
        .collect()
}

/// Cycled surrogate-vs-distance trade-off weights; high weight favors the
/// surrogate minimum, low weight favors unexplored regions.
const WEIGHT_CYCLE: [f64; 4] = [0.3, 0.5, 0.8, 0.95];
const CANDIDATES_PER_ITER: usize = 400;

/// Runs the surrogate search against an arbitrary noisy objective.
///
/// The closure receives wrapped angles and returns `(value, stderr)`.
/// Deterministic for a fixed config and deterministic closure.
pub fn optimize_with<F>(cfg: &OptimizerConfig, mut objective: F) -> Result<OptimizeOutcome>
where
    F: FnMut(&GivensAngles4D) -> Result<(f64, f64)>,
{
    if cfg.initial_design < DIM + 2 {
        return Err(Error::InvalidParameter(
            "initial design must have at least 6 points",
        ));
    }
    if cfg.budget < cfg.initial_design {
        return Err(Error::InvalidParameter(
            "budget must cover the initial design",
        ));
    }
    let mut rng = substream(cfg.seed, 0, 0, Source::Optimizer);
    let mut pts: Vec<[f64; DIM]> = Vec::with_capacity(cfg.budget);
    let mut vals: Vec<f64> = Vec::with_capacity(cfg.budget);
    let mut errs: Vec<f64> = Vec::with_capacity(cfg.budget);
    let mut trace: Vec<TraceRow> = Vec::with_capacity(cfg.budget);
    let mut incumbent = 0usize;

    let eval = |x: &[f64; DIM],
                objective: &mut F,
                pts: &mut Vec<[f64; DIM]>,
                vals: &mut Vec<f64>,
                errs: &mut Vec<f64>|
     -> Result<()> {
        let angles = GivensAngles4D::from_array(*x);
        let (v, se) = objective(&angles)?;
        pts.push([angles.phi3, angles.phi4, angles.phi5, angles.phi6]);
        vals.push(v);
        errs.push(se);
        Ok(())
    };

    for x in latin_hypercube(cfg.initial_design, &mut rng) {
        eval(&x, &mut objective, &mut pts, &mut vals, &mut errs)?;
    }
    for i in 0..pts.len() {
        // Initial incumbent: plain minimum of the design.
        let better = vals[i] < vals[incumbent];
        if better {
            incumbent = i;
        }
        trace.push(TraceRow {
            eval_index: i,
            angles: GivensAngles4D::from_array(pts[i]),
            objective: vals[i],
            stderr: errs[i],
            incumbent: i == incumbent,
        });
    }

    let mut weight_idx = 0usize;
    while pts.len() < cfg.budget {
        let surrogate = Surrogate::fit(cfg.kernel, &pts, &vals)?;
        let w = WEIGHT_CYCLE[weight_idx % WEIGHT_CYCLE.len()];
        weight_idx += 1;

        // Candidate pool: local perturbations of the incumbent at three
        // scales, plus global uniform draws.
        let mut cands: Vec<[f64; DIM]> = Vec::with_capacity(CANDIDATES_PER_ITER);
        let scales = [0.05 * PI, 0.2 * PI, 0.7 * PI];
        while cands.len() < CANDIDATES_PER_ITER {
            let x = if cands.len() % 2 == 0 {
                let s = scales[(cands.len() / 2) % scales.len()];
                let mut x = pts[incumbent];
                for xi in x.iter_mut() {
                    let u: f64 = rng.random();
                    *xi = wrap_angle(*xi + s * (2.0 * u - 1.0));
                }
                x
            } else {
                let mut x = [0.0; DIM];
                for xi in x.iter_mut() {
                    let u: f64 = rng.random();
                    *xi = -PI + 2.0 * PI * u;
                }
                x
            };
            cands.push(x);
        }

        let preds: Vec<f64> = cands.iter().map(|x| surrogate.predict(x)).collect();
        let dists: Vec<f64> = cands
            .iter()
            .map(|x| {
                pts.iter()
                    .map(|p| torus_dist2(p, x))
                    .fold(f64::INFINITY, f64::min)
            })
            .map(libm::sqrt)
            .collect();
        let (pmin, pmax) = preds
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let dmax = dists.iter().cloned().fold(0.0, f64::max);
        let mut best_cand = None;
        let mut best_score = f64::INFINITY;
        for i in 0..cands.len() {
            if dists[i] < 1e-9 {
                continue; // Already evaluated.
            }
            let sp = if pmax > pmin {
                (preds[i] - pmin) / (pmax - pmin)
            } else {
                0.0
            };
            let sd = if dmax > 0.0 { 1.0 - dists[i] / dmax } else { 0.0 };
            let score = w * sp + (1.0 - w) * sd;
            if score < best_score {
                best_score = score;
                best_cand = Some(cands[i]);
            }
        }
        let x = best_cand.ok_or(Error::InvalidParameter(
            "candidate pool collapsed onto evaluated points",
        ))?;
        eval(&x, &mut objective, &mut pts, &mut vals, &mut errs)?;
        let i = pts.len() - 1;
        // 2-stderr dominance against the incumbent.
        let gate = 2.0
            * libm::sqrt(errs[i] * errs[i] + errs[incumbent] * errs[incumbent]);
        let accepted = vals[i] < vals[incumbent] - gate;
        if accepted {
            incumbent = i;
        }
        trace.push(TraceRow {
            eval_index: i,
            angles: GivensAngles4D::from_array(pts[i]),
            objective: vals[i],
            stderr: errs[i],
            incumbent: accepted,
        });
    }

    // Noise diagnostic: compare the total observed improvement with the
    // typical evaluation stderr.
    let first_best = vals[..cfg.initial_design]
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let improvement = first_best - vals[incumbent];
    let mut sorted_errs = errs.clone();
    sorted_errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median_err = sorted_errs[sorted_errs.len() / 2];
    let noisy = median_err > 0.0 && improvement < median_err;

    Ok(OptimizeOutcome {
        angles: GivensAngles4D::from_array(pts[incumbent]),
        objective: vals[incumbent],
        stderr: errs[incumbent],
        incumbent_index: incumbent,
        trace,
        budget_exhausted: true,
        noisy_objective: noisy,
    })
}

// ---------------------------------------------------------------------------
// Monte Carlo objective plumbing
// ---------------------------------------------------------------------------

/// Evaluates a fixed rotation recipe at a channel point: a thin wrapper
/// over [`run_point`] with the rotation overridden.
pub fn evaluate_fixed(
    recipe: &RotationRecipe,
    point: &SimPoint,
    run: &RunConfig,
) -> Result<MetricsReport> {
    let mut p = point.clone();
    p.rotation = recipe.clone();
    run_point(&p, run)
}

/// Optimizes the four Givens angles against a Monte Carlo objective at
/// one channel point. Returns the incumbent angles, its full metrics
/// report, and the evaluation trace.
///
/// With `common_random_numbers` every candidate reuses the same
/// substreams (same `point_id`); otherwise each evaluation gets fresh
/// draws via a distinct `point_id`.
pub fn optimize_rotation(
    cfg: &OptimizerConfig,
    point: &SimPoint,
    run: &RunConfig,
) -> Result<(GivensAngles4D, MetricsReport, OptimizeOutcome)> {
    let mut reports: Vec<MetricsReport> = Vec::new();
    let base_run = *run;
    let outcome = optimize_with(cfg, |angles| {
        let mut r = base_run;
        if !cfg.common_random_numbers {
            r.point_id = base_run.point_id ^ (reports.len() as u64 + 1).wrapping_mul(0x9E37);
        }
        let report = evaluate_fixed(&RotationRecipe::Givens4(*angles), point, &r)?;
        reports.push(report);
        Ok(cfg.objective.extract(&report))
    })?;
    let report = reports[outcome.incumbent_index];
    Ok((outcome.angles, report, outcome))
}

// ---------------------------------------------------------------------------
// Nelder-Mead fallback and angle fitting
// ---------------------------------------------------------------------------

/// Derivative-free Nelder-Mead minimization on the angle torus with a
/// fixed evaluation budget. Returns `(best_angles, best_value)`.
pub fn nelder_mead<F>(mut f: F, start: [f64; DIM], step: f64, max_evals: usize) -> ([f64; DIM], f64)
where
    F: FnMut(&[f64; DIM]) -> f64,
{
    let mut simplex: Vec<([f64; DIM], f64)> = Vec::with_capacity(DIM + 1);
    let mut evals = 0usize;
    let mut eval = |x: &[f64; DIM], evals: &mut usize| {
        *evals += 1;
        f(x)
    };
    simplex.push((start, eval(&start, &mut evals)));
    for k in 0..DIM {
        let mut x = start;
        x[k] = wrap_angle(x[k] + step);
        simplex.push((x, eval(&x, &mut evals)));
    }
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        let best = simplex[0].0;
        let worst = simplex[DIM];
        let mut centroid = [0.0; DIM];
        for s in &simplex[..DIM] {
            for k in 0..DIM {
                centroid[k] += s.0[k] / DIM as f64;
            }
        }
        // Convergence: simplex collapsed in both value and extent.
        let spread = simplex[DIM].1 - simplex[0].1;
        let extent: f64 = simplex[1..]
            .iter()
            .map(|s| torus_dist2(&s.0, &best))
            .fold(0.0, f64::max);
        if spread.abs() < 1e-300 && extent < 1e-24 {
            break;
        }
        let point_at = |t: f64| {
            let mut x = [0.0; DIM];
            for k in 0..DIM {
                x[k] = wrap_angle(centroid[k] + t * (worst.0[k] - centroid[k]));
            }
            x
        };
        let xr = point_at(-alpha);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = point_at(-gamma);
            let fe = eval(&xe, &mut evals);
            simplex[DIM] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[DIM - 1].1 {
            simplex[DIM] = (xr, fr);
        } else {
            let xc = if fr < worst.1 { point_at(-rho) } else { point_at(rho) };
            let fc = eval(&xc, &mut evals);
            if fc < worst.1.min(fr) {
                simplex[DIM] = (xc, fc);
            } else {
                for s in simplex[1..].iter_mut() {
                    for k in 0..DIM {
                        s.0[k] = wrap_angle(best[k] + sigma * wrap_angle(s.0[k] - best[k]));
                    }
                    s.1 = eval(&s.0, &mut evals);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    (simplex[0].0, simplex[0].1)
}

/// Nelder-Mead with randomized restarts; the fallback direct search.
pub fn nelder_mead_restarts<F>(
    mut f: F,
    restarts: usize,
    evals_per_restart: usize,
    seed: u64,
) -> ([f64; DIM], f64)
where
    F: FnMut(&[f64; DIM]) -> f64,
{
    let mut rng = substream(seed, 1, 0, Source::Optimizer);
    let mut best: Option<([f64; DIM], f64)> = None;
    for _ in 0..restarts {
        let mut start = [0.0; DIM];
        for s in start.iter_mut() {
            let u: f64 = rng.random();
            *s = -PI + 2.0 * PI * u;
        }
        let (x, v) = nelder_mead(&mut f, start, 0.6, evals_per_restart);
        if best.is_none() || v < best.unwrap().1 {
            best = Some((x, v));
        }
    }
    best.unwrap()
}

/// Result of fitting the four free Givens angles to a target matrix.
///
/// The family `G²⁴G²³G¹⁴G¹³` does not cover all of SO(4): it is the
/// quotient by the two per-channel phase shifts `G³⁴(ψ₁) G¹²(ψ₂)` that
/// have no effect on transmission performance (any member has a zero
/// (1,2) entry, so e.g. the 4x4 Hadamard rotation itself lies outside
/// it). The fit therefore recovers the target up to that gauge:
/// `G³⁴(psi1) G¹²(psi2) · compose_4d(angles) ≈ target`.
#[derive(Debug, Clone, Copy)]
pub struct AngleFit {
    pub angles: GivensAngles4D,
    /// Left phase-shift angle in the 3-4 plane.
    pub psi1: f64,
    /// Left phase-shift angle in the 1-2 plane.
    pub psi2: f64,
    /// Frobenius norm of `G³⁴(psi1) G¹²(psi2) compose_4d(angles) - target`.
    pub residual: f64,
}

/// Optimal phase-shift gauge for matching `a` to `target`: for each
/// 2-row block the best planar rotation is the closed-form Procrustes
/// angle maximizing `tr(R(ψ)ᵀ T Aᵀ)` on that block.
fn best_gauge(a: &RotationMatrix, target: &RotationMatrix) -> (f64, f64) {
    let block_angle = |r0: usize, r1: usize| {
        let mut n11 = 0.0;
        let mut n12 = 0.0;
        let mut n21 = 0.0;
        let mut n22 = 0.0;
        for j in 0..4 {
            n11 += target.get(r0, j) * a.get(r0, j);
            n12 += target.get(r0, j) * a.get(r1, j);
            n21 += target.get(r1, j) * a.get(r0, j);
            n22 += target.get(r1, j) * a.get(r1, j);
        }
        libm::atan2(n21 - n12, n11 + n22)
    };
    (block_angle(2, 3), block_angle(0, 1))
}

/// `G³⁴(psi1) G¹²(psi2) · a`.
fn apply_gauge(a: &RotationMatrix, psi1: f64, psi2: f64) -> RotationMatrix {
    use crate::rotations::givens;
    let g34 = givens(4, 3, 4, psi1).unwrap();
    let g12 = givens(4, 1, 2, psi2).unwrap();
    g34.matmul(&g12).and_then(|m| m.matmul(a)).unwrap()
}

/// Least-squares fit of the four free Givens angles to a target 4x4
/// rotation, modulo the per-channel phase-shift gauge (see [`AngleFit`]).
/// Global Nelder-Mead restarts followed by a Gauss-Newton polish.
pub fn fit_angles_to_matrix(target: &RotationMatrix) -> Result<AngleFit> {
    if target.dim() != 4 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            got: target.dim(),
        });
    }
    let residual_sq = |x: &[f64; DIM]| {
        let r = crate::rotations::compose_4d(GivensAngles4D::from_array(*x));
        let (p1, p2) = best_gauge(&r, target);
        let g = apply_gauge(&r, p1, p2);
        let mut s = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                let d = g.get(i, j) - target.get(i, j);
                s += d * d;
            }
        }
        s
    };
    let (coarse, _) = nelder_mead_restarts(residual_sq, 12, 1200, 0xF17);
    // Gauss-Newton polish on the 16-component gauged residual vector.
    let residual_vec = |x: &[f64; DIM]| -> [f64; 16] {
        let r = crate::rotations::compose_4d(GivensAngles4D::from_array(*x));
        let (p1, p2) = best_gauge(&r, target);
        let g = apply_gauge(&r, p1, p2);
        let mut out = [0.0; 16];
        for i in 0..4 {
            for j in 0..4 {
                out[i * 4 + j] = g.get(i, j) - target.get(i, j);
            }
        }
        out
    };
    let mut x = coarse;
    for _ in 0..20 {
        let r0 = residual_vec(&x);
        let h = 1e-6;
        let mut jac = [[0.0f64; DIM]; 16];
        for k in 0..DIM {
            let mut xp = x;
            xp[k] += h;
            let mut xm = x;
            xm[k] -= h;
            let rp = residual_vec(&xp);
            let rm = residual_vec(&xm);
            for row in 0..16 {
                jac[row][k] = (rp[row] - rm[row]) / (2.0 * h);
            }
        }
        // Normal equations JᵀJ δ = -Jᵀr.
        let mut a = [0.0f64; DIM * DIM];
        let mut b = [0.0f64; DIM];
        for i in 0..DIM {
            for j in 0..DIM {
                a[i * DIM + j] = (0..16).map(|r| jac[r][i] * jac[r][j]).sum();
            }
            a[i * DIM + i] += 1e-12;
            b[i] = -(0..16).map(|r| jac[r][i] * r0[r]).sum::<f64>();
        }
        if gauss_solve(&mut a, &mut b, DIM).is_err() {
            break;
        }
        let mut xn = x;
        for k in 0..DIM {
            xn[k] = wrap_angle(xn[k] + b[k]);
        }
        if residual_sq(&xn) <= residual_sq(&x) {
            x = xn;
        } else {
            break;
        }
        if libm::sqrt(residual_sq(&x)) < 1e-13 {
            break;
        }
    }
    let angles = GivensAngles4D::from_array(x);
    let r = crate::rotations::compose_4d(angles);
    let (psi1, psi2) = best_gauge(&r, target);
    Ok(AngleFit {
        angles,
        psi1,
        psi2,
        residual: libm::sqrt(residual_sq(&x)),
    })
}
