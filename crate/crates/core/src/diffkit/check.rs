use super::graph::{Graph, Tensor};
use super::params::{ParamId, ParamStore};
use super::{DiffError, Result};

/// Compares the analytic gradient of a scalar function against central
/// differences.
///
/// `f` builds the function on a fresh graph from the input leaf. Returns the
/// maximum over coordinates of `|analytic - numeric| / max(1, |numeric|)`.
pub fn grad_check<F>(f: F, rows: usize, cols: usize, x: &[f64], eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph, Tensor) -> Result<Tensor>,
{
    let eval = |v: &[f64]| -> Result<f64> {
        let mut g = Graph::new();
        let t = g.leaf(rows, cols, v.to_vec())?;
        let y = f(&mut g, t)?;
        if y.len() != 1 {
            return Err(DiffError::NotScalar(y.rows(), y.cols()));
        }
        Ok(g.scalar_value(y))
    };

    let mut g = Graph::new();
    let t = g.leaf(rows, cols, x.to_vec())?;
    let y = f(&mut g, t)?;
    g.backward(y)?;
    let analytic = g
        .grad(t)
        .map(<[f64]>::to_vec)
        .unwrap_or_else(|| vec![0.0; x.len()]);

    let mut worst: f64 = 0.0;
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + eps;
        let hi = eval(&probe)?;
        probe[i] = x[i] - eps;
        let lo = eval(&probe)?;
        probe[i] = x[i];
        let numeric = (hi - lo) / (2.0 * eps);
        worst = worst.max((analytic[i] - numeric).abs() / numeric.abs().max(1.0));
    }
    Ok(worst)
}

/// Same measure as [`grad_check`], taken over parameters of a store.
///
/// `coords` lists `(param, flat index)` pairs to probe; probing every scalar
/// of a real model is needlessly slow.
pub fn grad_check_params<F>(
    f: F,
    store: &ParamStore,
    coords: &[(ParamId, usize)],
    eps: f64,
) -> Result<f64>
where
    F: Fn(&ParamStore) -> Result<(Graph, Tensor)>,
{
    let (mut g, y) = f(store)?;
    g.backward(y)?;
    let mut grads = store.clone();
    grads.zero_grad();
    grads.accumulate(&g);

    let mut probe = store.clone();
    let mut worst: f64 = 0.0;
    for &(id, i) in coords {
        let x0 = store.get(id).value[i];
        probe.get_mut(id).value[i] = x0 + eps;
        let (g_hi, y_hi) = f(&probe)?;
        probe.get_mut(id).value[i] = x0 - eps;
        let (g_lo, y_lo) = f(&probe)?;
        probe.get_mut(id).value[i] = x0;
        let numeric = (g_hi.scalar_value(y_hi) - g_lo.scalar_value(y_lo)) / (2.0 * eps);
        let analytic = grads.get(id).grad[i];
        worst = worst.max((analytic - numeric).abs() / numeric.abs().max(1.0));
    }
    Ok(worst)
}

/// Per-coordinate outcome of a detailed parameter check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoordCheck {
    pub analytic: f64,
    pub central: f64,
    /// One-sided slopes; they disagree where the function has a kink.
    pub forward: f64,
    pub backward: f64,
}

impl CoordCheck {
    pub fn relative_error(&self) -> f64 {
        (self.analytic - self.central).abs() / self.central.abs().max(1.0)
    }

    /// Whether the one-sided slopes differ by more than `tol` (relative),
    /// which marks a tie in a min/max or a ReLU kink inside the probe interval.
    pub fn is_kink(&self, tol: f64) -> bool {
        (self.forward - self.backward).abs() / self.central.abs().max(1.0) > tol
    }
}

/// Like [`grad_check_params`] but reports every probed coordinate.
pub fn grad_check_params_detailed<F>(
    f: F,
    store: &ParamStore,
    coords: &[(ParamId, usize)],
    eps: f64,
) -> Result<Vec<CoordCheck>>
where
    F: Fn(&ParamStore) -> Result<(Graph, Tensor)>,
{
    let (mut g, y) = f(store)?;
    let y0 = g.scalar_value(y);
    g.backward(y)?;
    let mut grads = store.clone();
    grads.zero_grad();
    grads.accumulate(&g);

    let mut probe = store.clone();
    let mut out = Vec::with_capacity(coords.len());
    for &(id, i) in coords {
        let x0 = store.get(id).value[i];
        probe.get_mut(id).value[i] = x0 + eps;
        let (g_hi, y_hi) = f(&probe)?;
        probe.get_mut(id).value[i] = x0 - eps;
        let (g_lo, y_lo) = f(&probe)?;
        probe.get_mut(id).value[i] = x0;
        let (hi, lo) = (g_hi.scalar_value(y_hi), g_lo.scalar_value(y_lo));
        out.push(CoordCheck {
            analytic: grads.get(id).grad[i],
            central: (hi - lo) / (2.0 * eps),
            forward: (hi - y0) / eps,
            backward: (y0 - lo) / eps,
        });
    }
    Ok(out)
}
