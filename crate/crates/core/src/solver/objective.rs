use ndarray::{Array2, Axis};

use crate::clustering::Partition;
use crate::correlation::LaplacianFactor;
use crate::dataset::Dataset;
use crate::error::{GlocalError, Result};
use crate::linalg::sq_norm;
use crate::model::{GlocalModel, Hyperparams};

/// Read access to a factor, whether or not its rows are known to be unit.
pub(crate) trait FactorMatrix {
    fn matrix(&self) -> &Array2<f64>;
}

impl FactorMatrix for Array2<f64> {
    fn matrix(&self) -> &Array2<f64> {
        self
    }
}

impl FactorMatrix for LaplacianFactor {
    fn matrix(&self) -> &Array2<f64> {
        self.as_array()
    }
}

/// Everything the objective needs besides the parameters: observed labels
/// `Y`, indicator `J`, features `X`, the instance groups and the trade-off
/// weights.
#[derive(Debug, Clone)]
pub struct ObjectiveContext {
    pub(crate) y: Array2<f64>,
    pub(crate) j: Array2<f64>,
    pub(crate) x: Array2<f64>,
    pub(crate) groups: Vec<Vec<usize>>,
    pub(crate) x_groups: Vec<Array2<f64>>,
    pub(crate) lambda: f64,
    pub(crate) lambda2: f64,
    pub(crate) lambda3: f64,
    pub(crate) lambda4: f64,
}

impl ObjectiveContext {
    pub fn new(data: &Dataset, partition: &Partition, hp: &Hyperparams) -> Result<Self> {
        hp.validate()?;
        if partition.n() != data.n() {
            return Err(GlocalError::Shape(format!(
                "partition covers {} instances, dataset has {}",
                partition.n(),
                data.n()
            )));
        }
        let x = data.features.values().clone();
        let groups = partition.members();
        let x_groups = groups.iter().map(|c| x.select(Axis(1), c)).collect();
        Ok(Self {
            y: data.labels.to_f64(),
            j: data.labels.indicator(),
            x,
            groups,
            x_groups,
            lambda: hp.lambda,
            lambda2: hp.lambda2,
            lambda3: hp.lambda3,
            lambda4: hp.lambda4,
        })
    }

    /// Same data with both manifold weights set to zero.
    pub fn without_manifold(&self) -> Self {
        Self {
            lambda3: 0.0,
            lambda4: 0.0,
            ..self.clone()
        }
    }

    pub fn l(&self) -> usize {
        self.y.nrows()
    }

    pub fn n(&self) -> usize {
        self.x.ncols()
    }

    pub fn d(&self) -> usize {
        self.x.nrows()
    }

    pub fn g(&self) -> usize {
        self.groups.len()
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.groups.iter().map(Vec::len).collect()
    }

    /// Weight of the global term attached to group `m`: `λ3 n_m / n`.
    pub fn global_weight(&self, m: usize) -> f64 {
        self.lambda3 * self.groups[m].len() as f64 / self.n() as f64
    }

    pub fn local_weight(&self) -> f64 {
        self.lambda4
    }

    pub(crate) fn has_manifold(&self, m: usize) -> bool {
        self.global_weight(m) != 0.0 || self.lambda4 != 0.0
    }

    /// True when every manifold term has zero weight.
    pub(crate) fn manifold_free(&self) -> bool {
        (0..self.g()).all(|m| !self.has_manifold(m))
    }

    pub(crate) fn check_shapes<F: FactorMatrix>(
        &self,
        u: &Array2<f64>,
        v: &Array2<f64>,
        w: &Array2<f64>,
        factors: &[F],
    ) -> Result<()> {
        let (l, n, d) = (self.l(), self.n(), self.d());
        let k = u.ncols();
        if u.nrows() != l || v.dim() != (k, n) || w.dim() != (d, k) {
            return Err(GlocalError::Shape(format!(
                "U {:?}, V {:?}, W {:?} do not fit l={l}, n={n}, d={d}",
                u.dim(),
                v.dim(),
                w.dim()
            )));
        }
        if factors.len() != self.g() {
            return Err(GlocalError::Shape(format!(
                "{} Laplacian factors for {} groups",
                factors.len(),
                self.g()
            )));
        }
        if let Some(z) = factors.iter().find(|z| z.matrix().dim() != (l, k)) {
            return Err(GlocalError::Shape(format!(
                "Laplacian factor is {:?}, expected ({l}, {k})",
                z.matrix().dim()
            )));
        }
        Ok(())
    }

    /// `J ∘ (UV - Y)`
    pub(crate) fn residual(&self, u: &Array2<f64>, v: &Array2<f64>) -> Array2<f64> {
        let mut r = u.dot(v);
        r -= &self.y;
        r *= &self.j;
        r
    }
}

/// The manifold part attached to one group: `g_m‖Zᵀ U P‖² + λ4‖Zᵀ U P_m‖²`
/// with `P = WᵀX`.
fn manifold_term(ctx: &ObjectiveContext, m: usize, zu: &Array2<f64>, p: &Array2<f64>) -> f64 {
    let mut total = 0.0;
    let gw = ctx.global_weight(m);
    if gw != 0.0 {
        total += gw * sq_norm(&zu.dot(p));
    }
    if ctx.lambda4 != 0.0 {
        let pm = p.select(Axis(1), &ctx.groups[m]);
        total += ctx.lambda4 * sq_norm(&zu.dot(&pm));
    }
    total
}

pub(crate) fn objective_parts<F: FactorMatrix>(
    ctx: &ObjectiveContext,
    u: &Array2<f64>,
    v: &Array2<f64>,
    w: &Array2<f64>,
    factors: &[F],
) -> f64 {
    let p = w.t().dot(&ctx.x);
    let mut total = sq_norm(&ctx.residual(u, v));
    if ctx.lambda != 0.0 {
        total += ctx.lambda * sq_norm(&(v - &p));
    }
    if ctx.lambda2 != 0.0 {
        total += ctx.lambda2 * (sq_norm(u) + sq_norm(v) + sq_norm(w));
    }
    for (m, z) in factors.iter().enumerate() {
        if ctx.has_manifold(m) {
            let zu = z.matrix().t().dot(u);
            total += manifold_term(ctx, m, &zu, &p);
        }
    }
    total
}

/// Full objective: reconstruction on observed labels, mapping fit, ridge
/// penalty and the per-group global and local manifold terms.
pub fn objective(model: &GlocalModel, ctx: &ObjectiveContext) -> Result<f64> {
    ctx.check_shapes(&model.u, &model.v, &model.w, &model.factors)?;
    Ok(objective_parts(
        ctx,
        &model.u,
        &model.v,
        &model.w,
        &model.factors,
    ))
}

/// [`objective`] at arbitrary, possibly non-unit-row, factor matrices `zs`.
/// This is the smooth function whose restriction to unit-row factors is
/// minimised; finite-difference checks of the `Z` gradient need it.
pub fn objective_unconstrained(
    ctx: &ObjectiveContext,
    u: &Array2<f64>,
    v: &Array2<f64>,
    w: &Array2<f64>,
    zs: &[Array2<f64>],
) -> Result<f64> {
    ctx.check_shapes(u, v, w, zs)?;
    Ok(objective_parts(ctx, u, v, w, zs))
}

/// Objective restricted to the terms that involve `Z_m`.
pub(crate) fn z_objective(
    ctx: &ObjectiveContext,
    m: usize,
    f0: &Array2<f64>,
    z: &Array2<f64>,
) -> f64 {
    let mut total = 0.0;
    let gw = ctx.global_weight(m);
    if gw != 0.0 {
        total += gw * sq_norm(&z.t().dot(f0));
    }
    if ctx.lambda4 != 0.0 {
        let fm = f0.select(Axis(1), &ctx.groups[m]);
        total += ctx.lambda4 * sq_norm(&z.t().dot(&fm));
    }
    total
}

/// `k x k` curvature of group `m`: `g_m P Pᵀ + λ4 P_m P_mᵀ`.
fn group_curvature(ctx: &ObjectiveContext, m: usize, p: &Array2<f64>) -> Array2<f64> {
    let k = p.nrows();
    let mut a = Array2::<f64>::zeros((k, k));
    let gw = ctx.global_weight(m);
    if gw != 0.0 {
        a.scaled_add(gw, &p.dot(&p.t()));
    }
    if ctx.lambda4 != 0.0 {
        let pm = p.select(Axis(1), &ctx.groups[m]);
        a.scaled_add(ctx.lambda4, &pm.dot(&pm.t()));
    }
    a
}

/// Gradient blocks of [`objective`].
#[derive(Debug, Clone)]
pub struct Gradients {
    pub u: Array2<f64>,
    pub v: Array2<f64>,
    pub w: Array2<f64>,
    pub z: Vec<Array2<f64>>,
}

pub(crate) fn grad_v(
    ctx: &ObjectiveContext,
    u: &Array2<f64>,
    v: &Array2<f64>,
    w: &Array2<f64>,
) -> Array2<f64> {
    let r = ctx.residual(u, v);
    let mut g = u.t().dot(&r) * 2.0;
    if ctx.lambda != 0.0 {
        let p = w.t().dot(&ctx.x);
        g.scaled_add(2.0 * ctx.lambda, &(v - &p));
    }
    if ctx.lambda2 != 0.0 {
        g.scaled_add(2.0 * ctx.lambda2, v);
    }
    g
}

pub(crate) fn grad_u<F: FactorMatrix>(
    ctx: &ObjectiveContext,
    u: &Array2<f64>,
    v: &Array2<f64>,
    w: &Array2<f64>,
    factors: &[F],
) -> Array2<f64> {
    let r = ctx.residual(u, v);
    let mut g = r.dot(&v.t()) * 2.0;
    if ctx.lambda2 != 0.0 {
        g.scaled_add(2.0 * ctx.lambda2, u);
    }
    if (0..factors.len()).any(|m| ctx.has_manifold(m)) {
        let p = w.t().dot(&ctx.x);
        for (m, z) in factors.iter().enumerate() {
            if ctx.has_manifold(m) {
                let z = z.matrix();
                let a = group_curvature(ctx, m, &p);
                g.scaled_add(2.0, &z.dot(&z.t().dot(u).dot(&a)));
            }
        }
    }
    g
}

pub(crate) fn grad_w<F: FactorMatrix>(
    ctx: &ObjectiveContext,
    u: &Array2<f64>,
    v: &Array2<f64>,
    w: &Array2<f64>,
    factors: &[F],
) -> Array2<f64> {
    let p = w.t().dot(&ctx.x);
    let mut g = Array2::<f64>::zeros(w.dim());
    if ctx.lambda != 0.0 {
        g.scaled_add(2.0 * ctx.lambda, &ctx.x.dot(&(&p - v).t()));
    }
    if ctx.lambda2 != 0.0 {
        g.scaled_add(2.0 * ctx.lambda2, w);
    }
    for (m, z) in factors.iter().enumerate() {
        if !ctx.has_manifold(m) {
            continue;
        }
        let zu = z.matrix().t().dot(u);
        let b = zu.t().dot(&zu);
        let gw = ctx.global_weight(m);
        if gw != 0.0 {
            g.scaled_add(2.0 * gw, &ctx.x.dot(&p.t().dot(&b)));
        }
        if ctx.lambda4 != 0.0 {
            let pm = p.select(Axis(1), &ctx.groups[m]);
            g.scaled_add(2.0 * ctx.lambda4, &ctx.x_groups[m].dot(&pm.t().dot(&b)));
        }
    }
    g
}

pub(crate) fn grad_z(
    ctx: &ObjectiveContext,
    m: usize,
    u: &Array2<f64>,
    w: &Array2<f64>,
    z: &Array2<f64>,
) -> Array2<f64> {
    if !ctx.has_manifold(m) {
        return Array2::zeros(z.dim());
    }
    let p = w.t().dot(&ctx.x);
    let a = group_curvature(ctx, m, &p);
    u.dot(&a).dot(&u.t().dot(z)) * 2.0
}

/// Analytic gradients of [`objective`] with respect to every block.
pub fn gradients(model: &GlocalModel, ctx: &ObjectiveContext) -> Result<Gradients> {
    let GlocalModel { u, v, w, factors } = model;
    ctx.check_shapes(u, v, w, factors)?;
    Ok(Gradients {
        u: grad_u(ctx, u, v, w, factors),
        v: grad_v(ctx, u, v, w),
        w: grad_w(ctx, u, v, w, factors),
        z: factors
            .iter()
            .enumerate()
            .map(|(m, z)| grad_z(ctx, m, u, w, z.as_array()))
            .collect(),
    })
}
