//! Set matching between predicted and padded ground-truth primitives, and
//! the training objectives evaluated on matched pairs.
//!
//! Matching runs on plain values; the losses are then rebuilt on a
//! [`Graph`](crate::diffkit::Graph) so they can be differentiated.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffkit::{DiffError, Graph, Tensor};
use crate::geom::{PlanePrimitive, Point3, PolarPlane};
use crate::spatial::{knn_brute, PointIndex};

/// Confidences are clamped to `[KAPPA_MIN, 1 - KAPPA_MIN]` before taking logs.
pub const KAPPA_MIN: f64 = 1e-7;
/// Weight of the classification term for predictions matched to an empty slot.
pub const NULL_CLASS_WEIGHT: f64 = 0.4;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("empty point or primitive set")]
    EmptySet,
    #[error("normal is not unit length (norm {0})")]
    NonUnit(f64),
    #[error("{n} points cannot have {k} neighbours each")]
    TooFewPoints { n: usize, k: usize },
    #[error("non-finite cost entry")]
    NonFinite,
    #[error("cost matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error(transparent)]
    Diff(#[from] DiffError),
}

pub type Result<T, E = LossError> = std::result::Result<T, E>;

/// How the repulsion energy of one primitive is reduced over its point pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RepReduction {
    Sum,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub beta4: f64,
    pub lambda: f64,
    pub omega: f64,
    pub k: usize,
    pub rep_reduction: RepReduction,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            beta1: 1.0,
            beta2: 20.0,
            beta3: 2.0,
            beta4: 20.0,
            lambda: 1.0,
            omega: 100.0,
            k: 4,
            rep_reduction: RepReduction::Mean,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub cls: f64,
    pub norm: f64,
    pub cp: f64,
    pub co: f64,
    pub rep: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// The weighted total implied by the individual terms.
    pub fn weighted(&self, cfg: &LossConfig) -> f64 {
        self.cls
            + cfg.beta1 * self.norm
            + cfg.beta2 * self.cp
            + cfg.beta3 * self.rep
            + cfg.beta4 * self.co
    }

    pub fn add(&mut self, o: &LossBreakdown) {
        self.cls += o.cls;
        self.norm += o.norm;
        self.cp += o.cp;
        self.co += o.co;
        self.rep += o.rep;
        self.total += o.total;
    }

    pub fn scaled(&self, s: f64) -> LossBreakdown {
        LossBreakdown {
            cls: self.cls * s,
            norm: self.norm * s,
            cp: self.cp * s,
            co: self.co * s,
            rep: self.rep * s,
            total: self.total * s,
        }
    }
}

/// Optimal assignment of predictions to ground-truth slots.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// Prediction index for every ground-truth slot.
    pub sigma: Vec<usize>,
    /// Row-major `M x M` costs; row = slot, column = prediction.
    pub cost: Vec<f64>,
    /// Whether each slot holds a real primitive (as opposed to the empty class).
    pub is_real: Vec<bool>,
    /// Ground-truth primitive index held by each real slot.
    pub slot_source: Vec<Option<usize>>,
}

impl MatchResult {
    pub fn size(&self) -> usize {
        self.sigma.len()
    }

    pub fn total_cost(&self) -> f64 {
        let m = self.size();
        self.sigma
            .iter()
            .enumerate()
            .map(|(i, &j)| self.cost[i * m + j])
            .sum()
    }

    /// Predictions matched to real slots, in slot order.
    pub fn real_predictions(&self) -> Vec<usize> {
        self.sigma
            .iter()
            .zip(&self.is_real)
            .filter(|(_, &r)| r)
            .map(|(&j, _)| j)
            .collect()
    }
}

/// Mean nearest-neighbour distance from `a` to `b` and from `b` to `a`.
fn directed_means(a: &[Point3], b: &[Point3]) -> (f64, f64) {
    if a.len() * b.len() <= 1 << 22 {
        let mut min_a = vec![f64::INFINITY; a.len()];
        let mut min_b = vec![f64::INFINITY; b.len()];
        for (i, &p) in a.iter().enumerate() {
            for (j, &q) in b.iter().enumerate() {
                let d = p.distance_squared(q);
                if d < min_a[i] {
                    min_a[i] = d;
                }
                if d < min_b[j] {
                    min_b[j] = d;
                }
            }
        }
        let ma = min_a.iter().map(|d| d.sqrt()).sum::<f64>() / a.len() as f64;
        let mb = min_b.iter().map(|d| d.sqrt()).sum::<f64>() / b.len() as f64;
        (ma, mb)
    } else {
        (directed_mean_indexed(a, b), directed_mean_indexed(b, a))
    }
}

fn directed_mean_indexed(from: &[Point3], to: &[Point3]) -> f64 {
    let index = PointIndex::new(to);
    let d: Vec<f64> = from.par_iter().map(|&p| index.nearest(p).1).collect();
    d.iter().sum::<f64>() / from.len() as f64
}

/// Symmetric chamfer distance: the average of the two directed mean
/// nearest-neighbour distances.
pub fn chamfer(a: &[Point3], b: &[Point3]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(LossError::EmptySet);
    }
    let (ma, mb) = directed_means(a, b);
    Ok(0.5 * (ma + mb))
}

fn clamp_kappa(kappa: f64) -> f64 {
    kappa.clamp(KAPPA_MIN, 1.0 - KAPPA_MIN)
}

/// Cross-entropy of one confidence against its matched class.
pub fn loss_cls(kappa: f64, is_real: bool) -> f64 {
    let k = clamp_kappa(kappa);
    if is_real {
        -k.ln()
    } else {
        -NULL_CLASS_WEIGHT * (1.0 - k).ln()
    }
}

/// Normal discrepancy `lambda (1 - cos) + |n - n_hat|^2`.
pub fn loss_norm(n: Point3, n_hat: Point3, lambda: f64) -> Result<f64> {
    for v in [n, n_hat] {
        if (v.norm() - 1.0).abs() > 1e-9 {
            return Err(LossError::NonUnit(v.norm()));
        }
    }
    Ok(lambda * (1.0 - n.dot(n_hat)) + (n - n_hat).norm_squared())
}

/// Chamfer distance between the inliers of a matched primitive pair.
pub fn loss_cp(gt: &PlanePrimitive, pred: &PlanePrimitive) -> Result<f64> {
    chamfer(&gt.points, &pred.points)
}

/// Chamfer distance between the union of real ground-truth inliers and the
/// union of inliers of predictions matched to real slots.
pub fn loss_co(gt: &[PlanePrimitive], pred: &[PlanePrimitive], m: &MatchResult) -> Result<f64> {
    let gt_pts: Vec<Point3> = m
        .slot_source
        .iter()
        .flatten()
        .flat_map(|&s| gt[s].points.iter().copied())
        .collect();
    let pred_pts: Vec<Point3> = m
        .real_predictions()
        .iter()
        .flat_map(|&j| pred[j].points.iter().copied())
        .collect();
    chamfer(&gt_pts, &pred_pts)
}

/// Neighbour lists (excluding self) used by the repulsion term.
pub fn repulsion_neighbors(points: &[Point3], k: usize) -> Vec<Vec<usize>> {
    let k = k.min(points.len().saturating_sub(1));
    if k == 0 {
        return vec![Vec::new(); points.len()];
    }
    if points.len() <= 512 {
        (0..points.len())
            .map(|i| {
                knn_brute(points, points[i], k + 1)
                    .into_iter()
                    .map(|(j, _)| j)
                    .filter(|&j| j != i)
                    .take(k)
                    .collect()
            })
            .collect()
    } else {
        let index = PointIndex::new(points);
        (0..points.len())
            .map(|i| {
                index
                    .knn_excluding(points, i, k)
                    .into_iter()
                    .map(|(j, _)| j)
                    .collect()
            })
            .collect()
    }
}

/// Repulsion energy `sum_i sum_{i' in kNN(i)} -d exp(-omega d^2)`.
pub fn loss_rep(points: &[Point3], k: usize, omega: f64) -> Result<f64> {
    if points.len() <= k {
        return Err(LossError::TooFewPoints { n: points.len(), k });
    }
    Ok(rep_energy(points, k, omega, RepReduction::Sum))
}

/// Repulsion with the neighbour count capped at `n - 1`; sets with fewer
/// than two points contribute zero.
pub fn rep_energy(points: &[Point3], k: usize, omega: f64, reduction: RepReduction) -> f64 {
    let nbrs = repulsion_neighbors(points, k);
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for (i, list) in nbrs.iter().enumerate() {
        for &j in list {
            let d2 = points[i].distance_squared(points[j]);
            sum += -d2.sqrt() * (-omega * d2).exp();
            pairs += 1;
        }
    }
    match reduction {
        RepReduction::Sum => sum,
        RepReduction::Mean if pairs > 0 => sum / pairs as f64,
        RepReduction::Mean => 0.0,
    }
}

/// Ground-truth slots for `m` predictions: indices of the kept real
/// primitives followed by empty slots. When there are more primitives than
/// slots the best supported ones are kept, in their original order.
pub fn pad_ground_truth(gt: &[PlanePrimitive], m: usize) -> Vec<Option<usize>> {
    let mut keep: Vec<usize> = (0..gt.len()).collect();
    if gt.len() > m {
        keep.sort_by(|&a, &b| gt[b].points.len().cmp(&gt[a].points.len()).then(a.cmp(&b)));
        keep.truncate(m);
        keep.sort_unstable();
    }
    let mut slots: Vec<Option<usize>> = keep.into_iter().map(Some).collect();
    slots.resize(m, None);
    slots
}

/// Matching cost of prediction `j` for every slot `i`. Empty slots carry only
/// the down-weighted classification term.
pub fn cost_matrix(
    gt: &[PlanePrimitive],
    slots: &[Option<usize>],
    pred: &[PlanePrimitive],
    cfg: &LossConfig,
) -> Result<Vec<f64>> {
    let m = pred.len();
    if slots.len() != m {
        return Err(LossError::NotSquare {
            rows: slots.len(),
            cols: m,
        });
    }
    let rep: Vec<f64> = pred
        .par_iter()
        .map(|p| rep_energy(&p.points, cfg.k, cfg.omega, cfg.rep_reduction))
        .collect();
    let rows: Vec<Result<Vec<f64>>> = slots
        .par_iter()
        .map(|slot| {
            (0..m)
                .map(|j| {
                    let p = &pred[j];
                    Ok(match slot {
                        None => loss_cls(p.confidence, false),
                        Some(s) => {
                            let g = &gt[*s];
                            loss_cls(p.confidence, true)
                                + cfg.beta1
                                    * loss_norm(g.plane.normal(), p.plane.normal(), cfg.lambda)?
                                + cfg.beta2 * loss_cp(g, p)?
                                + cfg.beta3 * rep[j]
                        }
                    })
                })
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(m * m);
    for r in rows {
        out.extend(r?);
    }
    if out.iter().any(|c| !c.is_finite()) {
        return Err(LossError::NonFinite);
    }
    Ok(out)
}

/// Minimum-cost perfect assignment on an `n x n` row-major matrix. Returns
/// the column for every row; among optimal assignments the lexicographically
/// smallest one is returned.
pub fn hungarian(cost: &[f64], n: usize) -> Result<Vec<usize>> {
    if cost.len() != n * n {
        return Err(LossError::NotSquare {
            rows: n,
            cols: cost.len() / n.max(1),
        });
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(LossError::NonFinite);
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let (u, v, mut row_of) = shortest_augmenting(cost, n);
    let scale = cost.iter().fold(1.0f64, |m, c| m.max(c.abs()));
    let tol = 1e-11 * scale;
    let tight = |i: usize, j: usize| cost[i * n + j] - u[i] - v[j] <= tol;

    const NONE: usize = usize::MAX;
    let mut col_of = vec![NONE; n];
    for (j, &i) in row_of.iter().enumerate() {
        col_of[i] = j;
    }
    // Fix rows in order, each to its smallest column that still admits a
    // perfect matching on tight edges among the remaining rows.
    for i in 0..n {
        for j in 0..n {
            if !tight(i, j) {
                continue;
            }
            if col_of[i] == j {
                break;
            }
            let r = row_of[j];
            if r < i {
                continue;
            }
            let (save_col, save_row) = (col_of.clone(), row_of.clone());
            let freed = col_of[i];
            row_of[freed] = NONE;
            col_of[i] = j;
            row_of[j] = i;
            col_of[r] = NONE;
            let mut visited = vec![false; n];
            if augment(r, i, n, &tight, &mut col_of, &mut row_of, &mut visited) {
                break;
            }
            col_of = save_col;
            row_of = save_row;
        }
    }
    Ok(col_of)
}

fn augment(
    r: usize,
    fixed_upto: usize,
    n: usize,
    tight: &impl Fn(usize, usize) -> bool,
    col_of: &mut [usize],
    row_of: &mut [usize],
    visited: &mut [bool],
) -> bool {
    for c in 0..n {
        if visited[c] || !tight(r, c) {
            continue;
        }
        let holder = row_of[c];
        if holder != usize::MAX && holder <= fixed_upto {
            continue;
        }
        visited[c] = true;
        if holder == usize::MAX || augment(holder, fixed_upto, n, tight, col_of, row_of, visited) {
            row_of[c] = r;
            col_of[r] = c;
            return true;
        }
    }
    false
}

/// Shortest augmenting path assignment with dual potentials. Returns row
/// potentials, column potentials and the row assigned to each column.
fn shortest_augmenting(cost: &[f64], n: usize) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
    // 1-based with a virtual column 0, as in the classic formulation.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let row_of = (1..=n).map(|j| p[j] - 1).collect();
    (u[1..].to_vec(), v[1..].to_vec(), row_of)
}

/// Pads the ground truth, builds the cost matrix and solves the assignment.
pub fn match_primitives(
    gt: &[PlanePrimitive],
    pred: &[PlanePrimitive],
    cfg: &LossConfig,
) -> Result<MatchResult> {
    if gt.is_empty() || pred.is_empty() {
        return Err(LossError::EmptySet);
    }
    let m = pred.len();
    let slots = pad_ground_truth(gt, m);
    let cost = cost_matrix(gt, &slots, pred, cfg)?;
    let sigma = hungarian(&cost, m)?;
    Ok(MatchResult {
        sigma,
        cost,
        is_real: slots.iter().map(Option::is_some).collect(),
        slot_source: slots,
    })
}

/// Predictions as graph tensors.
#[derive(Debug, Clone)]
pub struct PredictionTensors {
    /// `M x 3` columns `(r, theta, phi)`.
    pub planes: Tensor,
    /// `M x 3` unit normals derived from the angles.
    pub normals: Tensor,
    /// All inlier points stacked; primitive `j` owns rows `ranges[j]`.
    pub points: Tensor,
    pub ranges: Vec<std::ops::Range<usize>>,
    /// `M x 1` confidences.
    pub kappa: Tensor,
}

impl PredictionTensors {
    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    /// Current values as primitives.
    pub fn to_primitives(&self, g: &Graph) -> Vec<PlanePrimitive> {
        let pv = g.value(self.points);
        (0..self.len())
            .map(|j| PlanePrimitive {
                plane: PolarPlane::new(
                    g.at(self.planes, j, 0),
                    g.at(self.planes, j, 1),
                    g.at(self.planes, j, 2),
                ),
                points: self.ranges[j]
                    .clone()
                    .map(|r| Point3::new(pv[3 * r], pv[3 * r + 1], pv[3 * r + 2]))
                    .collect(),
                confidence: g.at(self.kappa, j, 0),
            })
            .collect()
    }

    /// Leaves holding fixed primitives, for evaluating losses on plain values.
    pub fn from_primitives(g: &mut Graph, pred: &[PlanePrimitive]) -> Result<Self> {
        let mut planes = Vec::new();
        let mut normals = Vec::new();
        let mut points = Vec::new();
        let mut ranges = Vec::new();
        for p in pred {
            planes.extend([p.plane.r, p.plane.theta, p.plane.phi]);
            normals.extend(p.plane.normal().to_array());
            let start = points.len() / 3;
            points.extend(p.points.iter().flat_map(|q| q.to_array()));
            ranges.push(start..points.len() / 3);
        }
        let m = pred.len();
        let n = points.len() / 3;
        Ok(Self {
            planes: g.leaf(m, 3, planes)?,
            normals: g.leaf(m, 3, normals)?,
            points: g.leaf(n, 3, points)?,
            ranges,
            kappa: g.leaf(m, 1, pred.iter().map(|p| p.confidence).collect())?,
        })
    }
}

fn points_leaf(g: &mut Graph, pts: &[Point3]) -> Result<Tensor> {
    Ok(g.leaf(
        pts.len(),
        3,
        pts.iter().flat_map(|p| p.to_array()).collect(),
    )?)
}

/// Differentiable chamfer distance between two `n x 3` tensors.
pub fn chamfer_graph(g: &mut Graph, a: Tensor, b: Tensor) -> Result<Tensor> {
    let ab = g.nearest_dist(a, b)?;
    let ba = g.nearest_dist(b, a)?;
    let ma = g.mean(ab)?;
    let mb = g.mean(ba)?;
    let s = g.add(ma, mb)?;
    Ok(g.scale(s, 0.5)?)
}

/// Repulsion energy of the rows `range` of `points`; neighbours are chosen
/// on current values.
pub fn rep_graph(
    g: &mut Graph,
    points: Tensor,
    range: std::ops::Range<usize>,
    cfg: &LossConfig,
) -> Result<Option<Tensor>> {
    let pv = g.value(points);
    let local: Vec<Point3> = range
        .clone()
        .map(|r| Point3::new(pv[3 * r], pv[3 * r + 1], pv[3 * r + 2]))
        .collect();
    let nbrs = repulsion_neighbors(&local, cfg.k);
    let mut from = Vec::new();
    let mut to = Vec::new();
    for (i, list) in nbrs.iter().enumerate() {
        for &j in list {
            from.push(range.start + i);
            to.push(range.start + j);
        }
    }
    if from.is_empty() {
        return Ok(None);
    }
    let a = g.gather(points, &from)?;
    let b = g.gather(points, &to)?;
    let diff = g.sub(a, b)?;
    let d2 = g.square_norm(diff)?;
    let d = g.sqrt(d2)?;
    let w = g.scale(d2, -cfg.omega)?;
    let w = g.exp(w)?;
    let e = g.mul(d, w)?;
    let s = g.sum(e)?;
    let scale = match cfg.rep_reduction {
        RepReduction::Sum => -1.0,
        RepReduction::Mean => -1.0 / from.len() as f64,
    };
    Ok(Some(g.scale(s, scale)?))
}

fn sum_all(g: &mut Graph, terms: &[Tensor]) -> Result<Tensor> {
    if terms.is_empty() {
        return Ok(g.scalar(0.0)?);
    }
    let c = g.concat_rows(terms)?;
    Ok(g.sum(c)?)
}

/// Unweighted loss terms and the weighted total, as graph scalars.
#[derive(Debug, Clone, Copy)]
pub struct LossTensors {
    pub cls: Tensor,
    pub norm: Tensor,
    pub cp: Tensor,
    pub co: Tensor,
    pub rep: Tensor,
    pub total: Tensor,
}

/// Matches on current values, then builds the weighted loss on the graph.
pub fn total_loss_graph(
    g: &mut Graph,
    pred: &PredictionTensors,
    gt: &[PlanePrimitive],
    cfg: &LossConfig,
) -> Result<(Tensor, LossBreakdown, MatchResult)> {
    let (t, b, m) = loss_terms_graph(g, pred, gt, cfg)?;
    Ok((t.total, b, m))
}

/// Like [`total_loss_graph`], keeping every term's tensor.
pub fn loss_terms_graph(
    g: &mut Graph,
    pred: &PredictionTensors,
    gt: &[PlanePrimitive],
    cfg: &LossConfig,
) -> Result<(LossTensors, LossBreakdown, MatchResult)> {
    let values = pred.to_primitives(g);
    let matching = match_primitives(gt, &values, cfg)?;

    let mut real = Vec::new();
    let mut null = Vec::new();
    for (slot, &j) in matching.sigma.iter().enumerate() {
        match matching.slot_source[slot] {
            Some(s) => real.push((s, j)),
            None => null.push(j),
        }
    }

    let kc = g.clamp(pred.kappa, KAPPA_MIN, 1.0 - KAPPA_MIN)?;
    let mut cls_terms = Vec::new();
    if !real.is_empty() {
        let k = g.gather(kc, &real.iter().map(|&(_, j)| j).collect::<Vec<_>>())?;
        let l = g.log(k)?;
        let s = g.sum(l)?;
        cls_terms.push(g.scale(s, -1.0)?);
    }
    if !null.is_empty() {
        let k = g.gather(kc, &null)?;
        let one_minus = g.scale(k, -1.0)?;
        let one_minus = g.add_const(one_minus, 1.0)?;
        let l = g.log(one_minus)?;
        let s = g.sum(l)?;
        cls_terms.push(g.scale(s, -NULL_CLASS_WEIGHT)?);
    }
    let cls = sum_all(g, &cls_terms)?;

    let gt_normals: Vec<f64> = real
        .iter()
        .flat_map(|&(s, _)| gt[s].plane.normal().to_array())
        .collect();
    let n = g.leaf(real.len(), 3, gt_normals)?;
    let n_hat = g.gather(
        pred.normals,
        &real.iter().map(|&(_, j)| j).collect::<Vec<_>>(),
    )?;
    let dot = g.mul(n, n_hat)?;
    let cos_sum = g.sum(dot)?;
    let one_minus = g.scale(cos_sum, -cfg.lambda)?;
    let one_minus = g.add_const(one_minus, cfg.lambda * real.len() as f64)?;
    let diff = g.sub(n, n_hat)?;
    let sq = g.square_norm(diff)?;
    let sq = g.sum(sq)?;
    let norm = g.add(one_minus, sq)?;

    let mut cp_terms = Vec::new();
    let mut rep_terms = Vec::new();
    let mut gt_union = Vec::new();
    let mut pred_rows = Vec::new();
    for &(s, j) in &real {
        let gp = points_leaf(g, &gt[s].points)?;
        let rows: Vec<usize> = pred.ranges[j].clone().collect();
        let pp = g.gather(pred.points, &rows)?;
        cp_terms.push(chamfer_graph(g, gp, pp)?);
        if let Some(r) = rep_graph(g, pred.points, pred.ranges[j].clone(), cfg)? {
            rep_terms.push(r);
        }
        gt_union.extend_from_slice(&gt[s].points);
        pred_rows.extend(rows);
    }
    let cp = sum_all(g, &cp_terms)?;
    let rep = sum_all(g, &rep_terms)?;
    let gu = points_leaf(g, &gt_union)?;
    let pu = g.gather(pred.points, &pred_rows)?;
    let co = chamfer_graph(g, gu, pu)?;

    let parts = [
        cls,
        g.scale(norm, cfg.beta1)?,
        g.scale(cp, cfg.beta2)?,
        g.scale(rep, cfg.beta3)?,
        g.scale(co, cfg.beta4)?,
    ];
    let total = sum_all(g, &parts)?;
    let breakdown = LossBreakdown {
        cls: g.scalar_value(cls),
        norm: g.scalar_value(norm),
        cp: g.scalar_value(cp),
        co: g.scalar_value(co),
        rep: g.scalar_value(rep),
        total: g.scalar_value(total),
    };
    Ok((
        LossTensors {
            cls,
            norm,
            cp,
            co,
            rep,
            total,
        },
        breakdown,
        matching,
    ))
}

/// Loss of fixed predictions against the ground truth.
pub fn total_loss(
    gt: &[PlanePrimitive],
    pred: &[PlanePrimitive],
    cfg: &LossConfig,
) -> Result<(LossBreakdown, MatchResult)> {
    let mut g = Graph::new();
    let t = PredictionTensors::from_primitives(&mut g, pred)?;
    let (_, b, m) = total_loss_graph(&mut g, &t, gt, cfg)?;
    Ok((b, m))
}
