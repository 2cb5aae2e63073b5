//! Space-time mollification with the time shift `(1−ε)t + τ`.

use super::{CoefficientError, Field};
use crate::numerics::gauss_legendre;

/// Gauss–Legendre nodes per axis and per smooth sub-interval.
pub const MOLLIFIER_NODES: usize = 32;

/// `f_ε(x,t) = ∬ f(x−y, T0 + (1−ε)(t−T0) + τ) ψ_ε(y) ρ_ε(τ) dy dτ` with
/// `supp ψ_ε = B(0,ε)` and `supp ρ_ε = (εT/4, 3εT/4)`, `T` the window length.
#[derive(Debug)]
pub struct Mollified {
    inner: Field,
    eps: f64,
    nodes: usize,
}

/// `exp(−1/(1−s))` for `s = |u|² < 1`, zero otherwise.
fn bump(s: f64) -> f64 {
    if s < 1.0 {
        (-1.0 / (1.0 - s)).exp()
    } else {
        0.0
    }
}

/// Gauss nodes on `[a, b]` split at `cuts`, as `(node, weight)` pairs.
fn split_rule(a: f64, b: f64, cuts: &mut Vec<f64>, n: usize) -> Vec<(f64, f64)> {
    cuts.retain(|&c| c > a && c < b);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let rule = gauss_legendre(n);
    let mut out = Vec::with_capacity(n * (cuts.len() + 1));
    let mut lo = a;
    for hi in cuts.iter().cloned().chain(std::iter::once(b)) {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        out.extend(rule.iter().map(|&(x, w)| (mid + half * x, w * half)));
        lo = hi;
    }
    out
}

impl Mollified {
    pub fn inner(&self) -> &Field {
        &self.inner
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Nodes `y` in `B(0, ε)` with weights `ψ_ε(y)·dy` (unnormalised).
    fn space_nodes(&self, x: &[f64], t: f64) -> Vec<(Vec<f64>, f64)> {
        let dim = x.len();
        let eps2 = self.eps * self.eps;
        let mut out = Vec::new();
        let mut y = vec![0.0; dim];
        self.ball(x, t, 0, eps2, 1.0, &mut y, &mut out);
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn ball(&self, x: &[f64], t: f64, d: usize, rem: f64, w: f64, y: &mut Vec<f64>, out: &mut Vec<(Vec<f64>, f64)>) {
        let dim = x.len();
        if d == dim {
            let r2: f64 = y.iter().map(|v| v * v).sum();
            let weight = w * bump(r2 / (self.eps * self.eps));
            if weight > 0.0 {
                out.push((y.clone(), weight));
            }
            return;
        }
        let half = rem.max(0.0).sqrt();
        if half == 0.0 {
            return;
        }
        // A break of the inner field at x_d = b sits at y_d = x_d − b.
        let mut cuts: Vec<f64> =
            self.inner.breakpoints(d, dim, x[d] - half, x[d] + half).into_iter().map(|b| x[d] - b).collect();
        for (yd, wd) in split_rule(-half, half, &mut cuts, self.nodes) {
            y[d] = yd;
            self.ball(x, t, d + 1, rem - yd * yd, w * wd, y, out);
        }
        y[d] = 0.0;
    }

    /// Shifted times `s` with weights `ρ_ε(τ)·dτ` (unnormalised).
    fn time_nodes(&self, dim: usize, t: f64) -> Result<Vec<(f64, f64)>, CoefficientError> {
        let win = self.inner.window();
        let big_t = win.length();
        let base = win.t0 + (1.0 - self.eps) * (t - win.t0);
        let (lo, hi) = (base + self.eps * big_t / 4.0, base + 3.0 * self.eps * big_t / 4.0);
        for s in [lo, hi] {
            if !win.contains(s) {
                return Err(CoefficientError::WindowUnderflow { t, shifted: s, t0: win.t0, t1: win.t1 });
            }
        }
        if self.inner.is_time_independent() {
            return Ok(vec![(0.5 * (lo + hi), 1.0)]);
        }
        let mut cuts = self.inner.breakpoints(dim, dim, lo, hi);
        let centre = 0.5 * (lo + hi);
        let radius = 0.5 * (hi - lo);
        Ok(split_rule(lo, hi, &mut cuts, self.nodes)
            .into_iter()
            .map(|(s, w)| {
                let u = (s - centre) / radius;
                (s, w * bump(u * u))
            })
            .filter(|&(_, w)| w > 0.0)
            .collect())
    }

    pub(super) fn eval_into(&self, x: &[f64], t: f64, out: &mut [f64]) -> Result<(), CoefficientError> {
        let times = self.time_nodes(x.len(), t)?;
        let space = self.space_nodes(x, t);
        let mut buf = vec![0.0; out.len()];
        let mut xs = vec![0.0; x.len()];
        let mut acc = vec![0.0; out.len()];
        let mut total = 0.0;
        for &(s, wt) in &times {
            for (y, wy) in &space {
                for d in 0..x.len() {
                    xs[d] = x[d] - y[d];
                }
                self.inner.eval_into(&xs, s, &mut buf)?;
                let w = wt * wy;
                total += w;
                for (a, b) in acc.iter_mut().zip(&buf) {
                    *a += w * b;
                }
            }
        }
        // Normalising the discrete weights makes the result an exact convex
        // combination of inner values.
        for (o, a) in out.iter_mut().zip(&acc) {
            *o = a / total;
        }
        Ok(())
    }
}

/// Mollifies `f` at scale `eps ∈ (0, 1]`.
pub fn mollify(f: &Field, eps: f64) -> Result<Field, CoefficientError> {
    mollify_with_nodes(f, eps, MOLLIFIER_NODES)
}

pub(crate) fn mollify_with_nodes(f: &Field, eps: f64, nodes: usize) -> Result<Field, CoefficientError> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(CoefficientError::InvalidEps(eps));
    }
    if f.is_constant() {
        return Ok(f.clone());
    }
    Ok(Field::mollified(f.codomain(), f.window(), Mollified { inner: f.clone(), eps, nodes }))
}
