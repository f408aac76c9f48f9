//! Alternating minimisation of the learning objective.
//!
//! [`fit`] first warm-starts `U`, `V`, `W` on the manifold-free objective,
//! attaches random unit-row Laplacian factors, then cycles through the
//! blocks in the order `Z_1..Z_g`, `V`, `U`, `W` until the relative
//! objective change drops below `tol` or the iteration budget runs out.
//!
//! Every block update is a descent step on the full objective. `V` is
//! solved in closed form (gradient steps for very large `k`). `U` and `W`
//! are solved exactly while no manifold term is active (the warm start)
//! and otherwise take backtracking gradient steps. Each `Z_m` step is
//! projected back onto unit rows before it is accepted.

mod line_search;
mod objective;

use std::fmt::Write as _;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::clustering::Partition;
use crate::correlation::{init_factor, project_unit_rows, LaplacianFactor};
use crate::dataset::Dataset;
use crate::error::{GlocalError, Result};
use crate::linalg::{cholesky, cholesky_solve, sq_norm};
use crate::model::{GlocalModel, Hyperparams};

pub use line_search::{Accepted, LineSearch};
pub use objective::{gradients, objective, objective_unconstrained, Gradients, ObjectiveContext};

use objective::{grad_u, grad_v, grad_w, grad_z, objective_parts, z_objective};

/// Above this latent dimension `V` is updated by gradient steps instead of
/// per-column linear solves.
pub const V_CLOSED_FORM_MAX_K: usize = 256;

/// Accepted step sizes of one outer iteration; `0.0` means no step was
/// accepted. The closed-form `V` update reports `1.0`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BlockSteps {
    pub z: Vec<f64>,
    pub v: f64,
    pub u: f64,
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    /// Objective at the end of the iteration.
    pub objective: f64,
    pub steps: BlockSteps,
    /// Objective after each block update, in update order.
    pub block_objectives: Vec<f64>,
    /// Largest `|‖z_j‖² - 1|` over all factor rows after the `Z` updates.
    pub max_row_norm_error: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitTrace {
    /// Manifold-free objective during warm start, starting at the initial
    /// point.
    pub warm: Vec<f64>,
    /// Record 0 holds the full objective right after warm start.
    pub records: Vec<TraceRecord>,
    pub converged: bool,
}

impl FitTrace {
    pub fn objectives(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.objective).collect()
    }

    /// Largest increase between consecutive block updates across the whole
    /// outer loop (`<= 0` when the objective never went up).
    pub fn max_increase(&self) -> f64 {
        let seq: Vec<f64> = self
            .records
            .iter()
            .flat_map(|r| {
                if r.iter == 0 {
                    vec![r.objective]
                } else {
                    r.block_objectives.clone()
                }
            })
            .collect();
        seq.windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_csv(&self, comment: Option<&str>) -> String {
        let mut out = String::new();
        if let Some(c) = comment {
            for line in c.lines() {
                let _ = writeln!(out, "# {line}");
            }
        }
        out.push_str("iter,objective\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{:.17e}", r.iter, r.objective);
        }
        out
    }
}

/// Seed for the random initialisation of factor `m`.
pub fn factor_seed(seed: u64, m: usize) -> u64 {
    seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(m as u64 + 1))
}

fn relative_change(prev: f64, cur: f64) -> f64 {
    let scale = prev.abs().max(f64::MIN_POSITIVE);
    (prev - cur).abs() / scale
}

fn closed_form_v_parts(
    ctx: &ObjectiveContext,
    u: &Array2<f64>,
    w: &Array2<f64>,
) -> Result<Array2<f64>> {
    let (l, k) = u.dim();
    let n = ctx.n();
    let shift = ctx.lambda + ctx.lambda2;
    let p = w.t().dot(&ctx.x);
    let mut v = Array2::<f64>::zeros((k, n));
    for i in 0..n {
        let mut a = Array2::<f64>::zeros((k, k));
        let mut b: Array1<f64> = p.column(i).mapv(|x| ctx.lambda * x);
        for r in 0..l {
            if ctx.j[[r, i]] == 0.0 {
                continue;
            }
            let ur = u.row(r);
            for s in 0..k {
                b[s] += ur[s] * ctx.y[[r, i]];
                for t in 0..k {
                    a[[s, t]] += ur[s] * ur[t];
                }
            }
        }
        for s in 0..k {
            a[[s, s]] += shift;
        }
        let chol =
            cholesky(&a).map_err(|e| GlocalError::Singular(format!("V column {}: {e}", i + 1)))?;
        v.column_mut(i).assign(&cholesky_solve(&chol, &b));
    }
    Ok(v)
}

/// Row-wise ridge solves for `U`; exact only without manifold terms.
fn closed_form_u_parts(ctx: &ObjectiveContext, v: &Array2<f64>) -> Result<Array2<f64>> {
    let (k, n) = v.dim();
    let l = ctx.l();
    let mut u = Array2::<f64>::zeros((l, k));
    for r in 0..l {
        let mut a = Array2::<f64>::zeros((k, k));
        let mut b = Array1::<f64>::zeros(k);
        for i in 0..n {
            if ctx.j[[r, i]] == 0.0 {
                continue;
            }
            let vi = v.column(i);
            for s in 0..k {
                b[s] += vi[s] * ctx.y[[r, i]];
                for t in 0..k {
                    a[[s, t]] += vi[s] * vi[t];
                }
            }
        }
        for s in 0..k {
            a[[s, s]] += ctx.lambda2;
        }
        let chol =
            cholesky(&a).map_err(|e| GlocalError::Singular(format!("U row {}: {e}", r + 1)))?;
        u.row_mut(r).assign(&cholesky_solve(&chol, &b));
    }
    Ok(u)
}

/// `(λ X Xᵀ + λ2 I) W = λ X Vᵀ`, one right-hand side per latent column;
/// exact only without manifold terms.
fn closed_form_w_parts(ctx: &ObjectiveContext, v: &Array2<f64>) -> Result<Array2<f64>> {
    let d = ctx.d();
    let mut a = ctx.x.dot(&ctx.x.t()) * ctx.lambda;
    for s in 0..d {
        a[[s, s]] += ctx.lambda2;
    }
    let chol = cholesky(&a).map_err(|e| GlocalError::Singular(format!("W system: {e}")))?;
    let rhs = ctx.x.dot(&v.t()) * ctx.lambda;
    let mut w = Array2::<f64>::zeros((d, v.nrows()));
    for c in 0..v.nrows() {
        w.column_mut(c)
            .assign(&cholesky_solve(&chol, &rhs.column(c).to_owned()));
    }
    Ok(w)
}

/// Exact minimiser of the objective over `V` with everything else fixed,
/// solved column by column.
pub fn closed_form_v(model: &GlocalModel, ctx: &ObjectiveContext) -> Result<Array2<f64>> {
    ctx.check_shapes(&model.u, &model.v, &model.w, &model.factors)?;
    closed_form_v_parts(ctx, &model.u, &model.w)
}

/// Up to `steps` backtracking gradient steps on `x`; returns the last
/// accepted step size (0 if none).
fn descend<G, F>(
    x: &mut Array2<f64>,
    f: &mut f64,
    steps: usize,
    ls: &LineSearch,
    grad: G,
    eval: F,
) -> f64
where
    G: Fn(&Array2<f64>) -> Array2<f64>,
    F: Fn(&Array2<f64>) -> f64,
{
    let mut last = 0.0;
    for _ in 0..steps {
        let g = grad(x);
        match ls.search(x, *f, &g, |p| p, &eval) {
            Some(acc) => {
                *x = acc.point;
                *f = acc.value;
                last = acc.step;
            }
            None => break,
        }
    }
    last
}

struct Blocks<'a> {
    ctx: &'a ObjectiveContext,
    ls: LineSearch,
    inner_steps: usize,
}

impl Blocks<'_> {
    fn eval(&self, m: &GlocalModel) -> f64 {
        objective_parts(self.ctx, &m.u, &m.v, &m.w, &m.factors)
    }

    fn update_v(&self, m: &mut GlocalModel, f: &mut f64) -> f64 {
        let ctx = self.ctx;
        if m.k() <= V_CLOSED_FORM_MAX_K {
            if let Ok(v) = closed_form_v_parts(ctx, &m.u, &m.w) {
                return self.accept_exact(m, f, |t| t.v = v);
            }
        }
        let mut v = m.v.clone();
        let step = descend(
            &mut v,
            f,
            self.inner_steps,
            &self.ls,
            |v| grad_v(ctx, &m.u, v, &m.w),
            |v| objective_parts(ctx, &m.u, v, &m.w, &m.factors),
        );
        m.v = v;
        step
    }

    /// Accept an exact block solution unless rounding made it worse.
    fn accept_exact(
        &self,
        m: &mut GlocalModel,
        f: &mut f64,
        apply: impl FnOnce(&mut GlocalModel),
    ) -> f64 {
        let mut trial = m.clone();
        apply(&mut trial);
        let value = self.eval(&trial);
        if value <= *f {
            *m = trial;
            *f = value;
            1.0
        } else {
            0.0
        }
    }

    fn update_u(&self, m: &mut GlocalModel, f: &mut f64) -> f64 {
        let ctx = self.ctx;
        if ctx.manifold_free() {
            if let Ok(u) = closed_form_u_parts(ctx, &m.v) {
                return self.accept_exact(m, f, |t| t.u = u);
            }
        }
        let mut u = m.u.clone();
        let step = descend(
            &mut u,
            f,
            self.inner_steps,
            &self.ls,
            |u| grad_u(ctx, u, &m.v, &m.w, &m.factors),
            |u| objective_parts(ctx, u, &m.v, &m.w, &m.factors),
        );
        m.u = u;
        step
    }

    fn update_w(&self, m: &mut GlocalModel, f: &mut f64) -> f64 {
        let ctx = self.ctx;
        if ctx.manifold_free() {
            if let Ok(w) = closed_form_w_parts(ctx, &m.v) {
                return self.accept_exact(m, f, |t| t.w = w);
            }
        }
        let mut w = m.w.clone();
        let step = descend(
            &mut w,
            f,
            self.inner_steps,
            &self.ls,
            |w| grad_w(ctx, &m.u, &m.v, w, &m.factors),
            |w| objective_parts(ctx, &m.u, &m.v, w, &m.factors),
        );
        m.w = w;
        step
    }

    /// `V`, `U`, `W` in that order; pushes the objective after each block.
    fn update_vuw(
        &self,
        m: &mut GlocalModel,
        f: &mut f64,
        steps: &mut BlockSteps,
        log: &mut Vec<f64>,
    ) {
        steps.v = self.update_v(m, f);
        log.push(*f);
        steps.u = self.update_u(m, f);
        log.push(*f);
        steps.w = self.update_w(m, f);
        log.push(*f);
    }
}

/// Outcome of [`update_z_step`].
#[derive(Debug, Clone)]
pub struct ZStep {
    pub factor: LaplacianFactor,
    /// Restricted (`Z_m`-dependent) objective before and after.
    pub before: f64,
    pub after: f64,
    /// Last accepted step size, 0 if the factor is unchanged.
    pub step: f64,
}

fn z_step_with(
    ctx: &ObjectiveContext,
    model: &GlocalModel,
    m: usize,
    steps: usize,
    ls: &LineSearch,
) -> ZStep {
    let z0 = &model.factors[m];
    if !ctx.has_manifold(m) {
        return ZStep {
            factor: z0.clone(),
            before: 0.0,
            after: 0.0,
            step: 0.0,
        };
    }
    let f0 = model.u.dot(&model.w.t().dot(&ctx.x));
    let eval = |z: &Array2<f64>| z_objective(ctx, m, &f0, z);
    let before = eval(z0.as_array());
    let mut z = z0.as_array().clone();
    let mut value = before;
    let mut last = 0.0;
    for s in 0..steps {
        let g = grad_z(ctx, m, &model.u, &model.w, &z);
        let seed = factor_seed(0x2E90_57E9, m).wrapping_add(s as u64);
        let project = |p: Array2<f64>| project_unit_rows(p, seed).0.into_array();
        match ls.search(&z, value, &g, project, eval) {
            Some(acc) => {
                z = acc.point;
                value = acc.value;
                last = acc.step;
            }
            None => break,
        }
    }
    let factor = if last == 0.0 {
        z0.clone()
    } else {
        LaplacianFactor::from_unit_rows(z).expect("projected rows have unit norm")
    };
    ZStep {
        factor,
        before,
        after: value,
        step: last,
    }
}

/// Projected gradient steps on `Z_m` with `U`, `V`, `W` fixed.
///
/// Each trial point is projected onto unit rows and accepted only if it
/// gives sufficient decrease of the `Z_m`-restricted objective; after 30
/// halvings without success the old factor is kept.
pub fn update_z_step(
    model: &GlocalModel,
    ctx: &ObjectiveContext,
    m: usize,
    inner_steps: usize,
) -> Result<ZStep> {
    ctx.check_shapes(&model.u, &model.v, &model.w, &model.factors)?;
    if m >= ctx.g() {
        return Err(GlocalError::InvalidArgument(format!(
            "group {m} out of range for {} groups",
            ctx.g()
        )));
    }
    Ok(z_step_with(
        ctx,
        model,
        m,
        inner_steps,
        &LineSearch::default(),
    ))
}

fn initial_model(ctx: &ObjectiveContext, k: usize, seed: u64) -> GlocalModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (k as f64).sqrt();
    let u = Array2::from_shape_fn((ctx.l(), k), |_| {
        scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
    });
    GlocalModel {
        u,
        v: Array2::zeros((k, ctx.n())),
        w: Array2::zeros((ctx.d(), k)),
        factors: Vec::new(),
    }
}

/// Warm start on the manifold-free objective, also returning the objective
/// after initialisation and after every iteration.
pub fn warm_start_traced(
    ctx: &ObjectiveContext,
    hp: &Hyperparams,
) -> Result<(GlocalModel, Vec<f64>)> {
    hp.validate()?;
    let plain = ctx.without_manifold();
    let blocks = Blocks {
        ctx: &plain,
        ls: LineSearch::default(),
        inner_steps: hp.inner_steps,
    };
    let mut model = initial_model(ctx, hp.k, hp.seed);
    let mut f = blocks.eval(&model);
    let mut trace = vec![f];
    let mut steps = BlockSteps::default();
    let mut log = Vec::new();
    for _ in 0..hp.warm_iters {
        let prev = f;
        blocks.update_vuw(&mut model, &mut f, &mut steps, &mut log);
        trace.push(f);
        if relative_change(prev, f) < hp.tol {
            break;
        }
    }
    model.factors = (0..ctx.g())
        .map(|m| init_factor(ctx.l(), hp.k, factor_seed(hp.seed, m)))
        .collect();
    Ok((model, trace))
}

/// `U`, `V`, `W` fitted without manifold terms, plus random unit-row factors.
pub fn warm_start(ctx: &ObjectiveContext, hp: &Hyperparams) -> Result<GlocalModel> {
    warm_start_traced(ctx, hp).map(|(m, _)| m)
}

fn max_row_norm_error(factors: &[LaplacianFactor]) -> f64 {
    factors
        .iter()
        .flat_map(|z| {
            z.as_array()
                .outer_iter()
                .map(|r| (sq_norm(&r) - 1.0).abs())
                .collect::<Vec<_>>()
        })
        .fold(0.0, f64::max)
}

/// Fit a model on `data` with the given instance groups.
pub fn fit(
    data: &Dataset,
    partition: &Partition,
    hp: &Hyperparams,
) -> Result<(GlocalModel, FitTrace)> {
    let ctx = ObjectiveContext::new(data, partition, hp)?;
    fit_with_context(&ctx, hp)
}

pub fn fit_with_context(
    ctx: &ObjectiveContext,
    hp: &Hyperparams,
) -> Result<(GlocalModel, FitTrace)> {
    let (mut model, warm) = warm_start_traced(ctx, hp)?;
    let blocks = Blocks {
        ctx,
        ls: LineSearch::default(),
        inner_steps: hp.inner_steps,
    };
    let mut f = blocks.eval(&model);
    let mut trace = FitTrace {
        warm,
        records: vec![TraceRecord {
            iter: 0,
            objective: f,
            steps: BlockSteps::default(),
            block_objectives: vec![f],
            max_row_norm_error: max_row_norm_error(&model.factors),
        }],
        converged: false,
    };

    for iter in 1..=hp.outer_iters {
        let prev = f;
        let mut steps = BlockSteps::default();
        let mut log = Vec::with_capacity(ctx.g() + 3);
        let mut row_err = 0.0_f64;
        for m in 0..ctx.g() {
            let zs = z_step_with(ctx, &model, m, hp.inner_steps, &blocks.ls);
            steps.z.push(zs.step);
            if zs.step != 0.0 {
                model.factors[m] = zs.factor;
                f = blocks.eval(&model);
            }
            row_err = row_err.max(max_row_norm_error(std::slice::from_ref(&model.factors[m])));
            log.push(f);
        }
        blocks.update_vuw(&mut model, &mut f, &mut steps, &mut log);
        trace.records.push(TraceRecord {
            iter,
            objective: f,
            steps,
            block_objectives: log,
            max_row_norm_error: row_err,
        });
        if relative_change(prev, f) < hp.tol {
            trace.converged = true;
            break;
        }
    }
    Ok((model, trace))
}
