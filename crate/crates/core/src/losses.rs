//! Cycle-consistency losses and the layerwise orthogonal penalty.
//!
//! For aligned batches `X` (source) and `Y` (target) every loss is
//! `sum_i D(f_a(x_i), y_i) + D'(f_b(y_i), x_i)` with analytic gradients
//! for all mapper parameters:
//!
//! - MSE: `||f_a(x) - y||^2 + ||f_b(y) - x||^2`
//! - Cosine: `(1 - |cos(f_a(x), y)|) + (1 - |cos(f_b(y), x)|)`
//! - RCSLS: `-2 f_a(x).y + mean_{y_j in N_t(f_a(x))} f_a(x).y_j
//!   + mean_{x_j in N_s(f_b(y))} x_j.f_b(y)`
//! - Cosine + RCSLS: unweighted sum.
//!
//! RCSLS neighbourhoods are the `k` rows of a candidate pool with the largest
//! dot product. They are piecewise constant in the parameters and are
//! treated as constants when differentiating.

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::mapper::{Gradients, Mapper};
use crate::retrieval::top_k_dot;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Mse,
    Cosine,
    Rcsls,
    CosineRcsls,
}

impl LossKind {
    pub fn needs_pools(&self) -> bool {
        matches!(self, LossKind::Rcsls | LossKind::CosineRcsls)
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mse" => Some(LossKind::Mse),
            "cos" | "cosine" => Some(LossKind::Cosine),
            "rcsls" => Some(LossKind::Rcsls),
            "cos+rcsls" | "cosine+rcsls" => Some(LossKind::CosineRcsls),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::Cosine => "cos",
            LossKind::Rcsls => "rcsls",
            LossKind::CosineRcsls => "cos+rcsls",
        }
    }
}

/// Loss value, per-term breakdown and gradients shaped like `Mapper::params`.
#[derive(Debug, Clone)]
pub struct LossOutput {
    pub total: f64,
    pub ccl: f64,
    pub orthogonal: f64,
    pub grads: Gradients,
}

impl LossOutput {
    /// Sum of two outputs for the same mapper.
    pub fn combine(mut self, other: &LossOutput) -> LossOutput {
        self.total += other.total;
        self.ccl += other.ccl;
        self.orthogonal += other.orthogonal;
        self.grads.add_assign(&other.grads);
        self
    }
}

/// Candidate matrices for RCSLS neighbourhoods.
#[derive(Debug, Clone, Copy)]
pub struct CandidatePools<'a> {
    /// Searched with `f_a(x)`.
    pub target: ArrayView2<'a, f64>,
    /// Searched with `f_b(y)`.
    pub source: ArrayView2<'a, f64>,
    pub k: usize,
}

/// Per-row means of the neighbourhood rows, fixed for differentiation.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborMeans {
    pub target: Array2<f64>,
    pub source: Array2<f64>,
}

/// Mean of the `k` pool rows closest (by dot product) to each mapped row.
pub fn neighbor_means(mapper: &Mapper, xs: ArrayView2<f64>, xt: ArrayView2<f64>, pools: &CandidatePools) -> Result<NeighborMeans> {
    let fwd = mapper.forward(xs)?;
    let bwd = mapper.reverse(xt)?;
    Ok(NeighborMeans {
        target: pooled_mean(fwd.view(), pools.target, pools.k)?,
        source: pooled_mean(bwd.view(), pools.source, pools.k)?,
    })
}

fn pooled_mean(queries: ArrayView2<f64>, pool: ArrayView2<f64>, k: usize) -> Result<Array2<f64>> {
    let hits = top_k_dot(queries, pool, k, None)?;
    let mut out = Array2::zeros((queries.nrows(), pool.ncols()));
    for (mut row, hs) in out.rows_mut().into_iter().zip(hits) {
        for h in hs {
            row += &pool.row(h.index);
        }
        row /= k as f64;
    }
    Ok(out)
}

/// Cycle-consistency loss of one batch; neighbourhoods are searched in `pools`.
pub fn ccl(
    mapper: &Mapper,
    xs: ArrayView2<f64>,
    xt: ArrayView2<f64>,
    kind: LossKind,
    pools: Option<&CandidatePools>,
) -> Result<LossOutput> {
    let means = if kind.needs_pools() {
        let pools = pools.ok_or(Error::MissingPools)?;
        Some(neighbor_means(mapper, xs, xt, pools)?)
    } else {
        None
    };
    ccl_frozen(mapper, xs, xt, kind, means.as_ref())
}

/// Cycle-consistency loss with RCSLS neighbourhood means given explicitly.
pub fn ccl_frozen(
    mapper: &Mapper,
    xs: ArrayView2<f64>,
    xt: ArrayView2<f64>,
    kind: LossKind,
    means: Option<&NeighborMeans>,
) -> Result<LossOutput> {
    if xs.dim() != xt.dim() {
        return Err(Error::Shape(format!(
            "source batch {:?} and target batch {:?} differ",
            xs.dim(),
            xt.dim()
        )));
    }
    if xs.nrows() == 0 {
        return Err(Error::Empty("batch"));
    }
    let fwd = mapper.forward_trace(xs)?;
    let bwd = mapper.reverse_trace(xt)?;
    let mut d_fwd = Array2::<f64>::zeros(fwd.output.raw_dim());
    let mut d_bwd = Array2::<f64>::zeros(bwd.output.raw_dim());
    let mut loss = 0.0;

    if kind == LossKind::Mse {
        loss += mse_term(fwd.output.view(), xt, &mut d_fwd);
        loss += mse_term(bwd.output.view(), xs, &mut d_bwd);
    }
    if matches!(kind, LossKind::Cosine | LossKind::CosineRcsls) {
        loss += abs_cosine_term(fwd.output.view(), xt, &mut d_fwd)?;
        loss += abs_cosine_term(bwd.output.view(), xs, &mut d_bwd)?;
    }
    if kind.needs_pools() {
        let means = means.ok_or(Error::MissingPools)?;
        if means.target.dim() != xt.dim() || means.source.dim() != xs.dim() {
            return Err(Error::Shape("neighbourhood means do not match the batch".into()));
        }
        for i in 0..xs.nrows() {
            let u = fwd.output.row(i);
            let b = bwd.output.row(i);
            let y = xt.row(i);
            loss += -2.0 * u.dot(&y) + u.dot(&means.target.row(i)) + b.dot(&means.source.row(i));
        }
        d_fwd.scaled_add(-2.0, &xt);
        d_fwd += &means.target;
        d_bwd += &means.source;
    }

    if !loss.is_finite() {
        return Err(Error::NonFinite("loss"));
    }
    let mut grads = Gradients::zeros_like(mapper);
    mapper.backprop_forward(xs, &fwd, d_fwd.view(), &mut grads);
    mapper.backprop_reverse(xt, &bwd, d_bwd.view(), &mut grads);
    if !grads.is_finite() {
        return Err(Error::NonFinite("gradient"));
    }
    Ok(LossOutput {
        total: loss,
        ccl: loss,
        orthogonal: 0.0,
        grads,
    })
}

fn mse_term(pred: ArrayView2<f64>, target: ArrayView2<f64>, d_pred: &mut Array2<f64>) -> f64 {
    let diff = &pred - &target;
    d_pred.scaled_add(2.0, &diff);
    diff.iter().map(|v| v * v).sum()
}

/// `sum_i 1 - |cos(pred_i, target_i)|`, both sides normalized internally.
fn abs_cosine_term(pred: ArrayView2<f64>, target: ArrayView2<f64>, d_pred: &mut Array2<f64>) -> Result<f64> {
    let mut loss = 0.0;
    for ((u, y), mut du) in pred
        .axis_iter(Axis(0))
        .zip(target.axis_iter(Axis(0)))
        .zip(d_pred.axis_iter_mut(Axis(0)))
    {
        let nu = u.dot(&u).sqrt();
        let ny = y.dot(&y).sqrt();
        if nu == 0.0 || ny == 0.0 {
            return Err(Error::NonFinite("cosine of a zero vector"));
        }
        let c = u.dot(&y) / (nu * ny);
        loss += 1.0 - c.abs();
        let sign = if c > 0.0 {
            1.0
        } else if c < 0.0 {
            -1.0
        } else {
            0.0
        };
        // d(-|c|)/du = -sign(c) * (y / (|u||y|) - c u / |u|^2)
        for ((g, &ui), &yi) in du.iter_mut().zip(u.iter()).zip(y.iter()) {
            *g -= sign * (yi / (nu * ny) - c * ui / (nu * nu));
        }
    }
    Ok(loss)
}

/// `beta * sum_layers ||G - I||_F^2` with `G` the smaller Gram matrix of each layer.
pub fn orthogonal_penalty(mapper: &Mapper, beta: f64) -> LossOutput {
    let mut total = 0.0;
    let grads = mapper
        .layers()
        .into_iter()
        .map(|w| {
            let (a, b) = w.dim();
            let (gram, wide) = if a <= b { (w.dot(&w.t()), true) } else { (w.t().dot(w), false) };
            let defect = gram - Array2::<f64>::eye(a.min(b));
            total += defect.iter().map(|v| v * v).sum::<f64>();
            let g = if wide { defect.dot(w) } else { w.dot(&defect) };
            g * (4.0 * beta)
        })
        .collect();
    let total = beta * total;
    LossOutput {
        total,
        ccl: 0.0,
        orthogonal: total,
        grads: Gradients(grads),
    }
}

/// Smallest `|cos|` between a mapped row and its partner, over both flows.
///
/// The cosine losses use `|cos|`, which has a kink at zero; finite
/// differences are meaningless for batches whose margin is within a few
/// steps of it.
pub fn kink_margin(mapper: &Mapper, xs: ArrayView2<f64>, xt: ArrayView2<f64>) -> Result<f64> {
    let fwd = mapper.forward(xs)?;
    let rev = mapper.reverse(xt)?;
    let min_abs_cos = |a: &Array2<f64>, b: ArrayView2<f64>| {
        a.outer_iter()
            .zip(b.outer_iter())
            .map(|(x, y)| (x.dot(&y) / (x.dot(&x).sqrt() * y.dot(&y).sqrt())).abs())
            .fold(f64::INFINITY, f64::min)
    };
    Ok(min_abs_cos(&fwd, xt).min(min_abs_cos(&rev, xs)))
}

/// Outcome of a finite-difference gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Max relative error per parameter tensor.
    pub per_tensor: Vec<f64>,
    pub max_rel_err: f64,
    /// (tensor index, flat entry index) of the worst entry.
    pub worst: (usize, usize),
    pub tolerance: f64,
}

/// Denominator floor for relative errors of near-zero gradient entries.
pub const REL_ERR_FLOOR: f64 = 1e-6;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_ERR_FLOOR)
}

/// Compare `analytic` against central differences of `loss_fn`, entry by entry.
///
/// Uses the five-point stencil, so steps around `1e-4` balance truncation
/// against rounding.
pub fn compare_gradients<F>(mapper: &Mapper, analytic: &Gradients, loss_fn: F, eps: f64, tolerance: f64) -> Result<GradCheckReport>
where
    F: Fn(&Mapper) -> Result<f64>,
{
    let mut per_tensor = Vec::new();
    let mut offending = Vec::new();
    let mut worst = (0, 0);
    let mut max_rel_err = 0.0f64;
    let mut probe = mapper.clone();
    for (t, grad) in analytic.0.iter().enumerate() {
        let mut tensor_max = 0.0f64;
        for (e, &a) in grad.iter().enumerate() {
            let orig = probe.params()[t].as_slice().expect("standard layout")[e];
            let mut at = |offset: f64| -> Result<f64> {
                probe.params_mut()[t].as_slice_mut().expect("standard layout")[e] = orig + offset;
                loss_fn(&probe)
            };
            // Five-point central stencil: truncation error O(eps^4).
            let (p2, p1, m1, m2) = (at(2.0 * eps)?, at(eps)?, at(-eps)?, at(-2.0 * eps)?);
            probe.params_mut()[t].as_slice_mut().expect("standard layout")[e] = orig;
            let numeric = (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * eps);
            let r = rel_err(a, numeric);
            if r > tolerance {
                offending.push((t, e));
            }
            if r > max_rel_err {
                max_rel_err = r;
                worst = (t, e);
            }
            tensor_max = tensor_max.max(r);
        }
        per_tensor.push(tensor_max);
    }
    if !offending.is_empty() {
        return Err(Error::GradCheck {
            max_rel_err,
            tolerance,
            offending,
        });
    }
    Ok(GradCheckReport {
        per_tensor,
        max_rel_err,
        worst,
        tolerance,
    })
}

/// Check the CCL (plus the orthogonal penalty when `map_beta` is given)
/// against central differences with RCSLS neighbourhoods frozen at the
/// current parameters.
#[allow(clippy::too_many_arguments)]
pub fn grad_check(
    mapper: &Mapper,
    xs: ArrayView2<f64>,
    xt: ArrayView2<f64>,
    kind: LossKind,
    pools: Option<&CandidatePools>,
    map_beta: Option<f64>,
    eps: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let means = if kind.needs_pools() {
        Some(neighbor_means(mapper, xs, xt, pools.ok_or(Error::MissingPools)?)?)
    } else {
        None
    };
    let eval = |m: &Mapper| -> Result<LossOutput> {
        let out = ccl_frozen(m, xs, xt, kind, means.as_ref())?;
        Ok(match map_beta {
            Some(beta) => out.combine(&orthogonal_penalty(m, beta)),
            None => out,
        })
    };
    let analytic = eval(mapper)?;
    compare_gradients(mapper, &analytic.grads, |m| Ok(eval(m)?.total), eps, tolerance)
}
