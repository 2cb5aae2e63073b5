//! Discrete weak formulation against bump test functions supported in
//! cylinders `Q_r(z₀)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{lie_derivative, GridSolution, PdeError};
use crate::coefficients::Coefficients;
use crate::group::{powi_u, Group, GroupPoint};

/// `φ(z) = Φ(δ_{1/r}(z₀^{-1} ∘ z))` with
/// `Φ(ζ) = Π_j (1 − |ζ^{(j)}|²)³₊ · (1 − s²)³₊`, `s = 2ζ_t + 1`.
///
/// `Φ` is `C²` and supported in the unit cylinder `Q₁`, so `φ` is supported
/// in `Q_r(z₀)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub center: GroupPoint,
    pub r: f64,
}

impl TestFunction {
    pub fn new(center: GroupPoint, r: f64) -> Self {
        Self { center, r }
    }

    fn local(&self, group: &Group, z: &GroupPoint) -> GroupPoint {
        group.dilate(1.0 / self.r, &group.relative(&self.center, z))
    }

    /// Value and spatial gradient at `z`.
    pub fn eval_with_gradient(&self, group: &Group, z: &GroupPoint) -> (f64, Vec<f64>) {
        let zeta = self.local(group, z);
        let n = zeta.dim();
        let s = 2.0 * zeta.t + 1.0;
        let time = (1.0 - s * s).max(0.0).powi(3);
        if time == 0.0 {
            return (0.0, vec![0.0; n]);
        }
        let ranges = group.structure().ranges();
        let mut factors = Vec::with_capacity(ranges.len());
        for r in &ranges {
            let q: f64 = zeta.x[r.clone()].iter().map(|v| v * v).sum();
            if q >= 1.0 {
                return (0.0, vec![0.0; n]);
            }
            factors.push(1.0 - q);
        }
        let value = time * factors.iter().map(|f| f.powi(3)).product::<f64>();
        let alpha = group.structure().alpha();
        let mut grad = vec![0.0; n];
        for (b, r) in ranges.iter().enumerate() {
            // d/dζ_i (1 − |ζ^{(b)}|²)³ = −6 ζ_i (1 − |ζ^{(b)}|²)²
            let others = value / factors[b].powi(3);
            for i in r.clone() {
                let d = -6.0 * zeta.x[i] * factors[b].powi(2) * others;
                grad[i] = d / powi_u(self.r, alpha[i]);
            }
        }
        (value, grad)
    }

    pub fn eval(&self, group: &Group, z: &GroupPoint) -> f64 {
        self.eval_with_gradient(group, z).0
    }

    /// Axis-aligned box `(lo, hi)` per coordinate and time interval containing the support.
    pub fn bounding_box(&self, group: &Group) -> (Vec<(f64, f64)>, (f64, f64)) {
        let alpha = group.structure().alpha();
        let (t_lo, t_hi) = (self.center.t - self.r * self.r, self.center.t);
        let n = self.center.dim();
        let mut bounds = vec![(f64::INFINITY, f64::NEG_INFINITY); n];
        // The support's spatial centre E(t − t₀)x₀ is polynomial in t for
        // nilpotent drifts; dense sampling plus a margin bounds its range.
        let samples = 64;
        for k in 0..=samples {
            let t = t_lo + (t_hi - t_lo) * k as f64 / samples as f64;
            let c = group.exp_drift_apply(t - self.center.t, &self.center.x);
            for i in 0..n {
                let w = powi_u(self.r, alpha[i]);
                bounds[i].0 = bounds[i].0.min(c[i] - w);
                bounds[i].1 = bounds[i].1.max(c[i] + w);
            }
        }
        for (i, b) in bounds.iter_mut().enumerate() {
            let margin = 0.02 * powi_u(self.r, alpha[i]);
            b.0 -= margin;
            b.1 += margin;
        }
        (bounds, (t_lo, t_hi))
    }
}

/// `Σ_nodes [−⟨A Du, Dφ⟩ + φ Yu + ⟨b, Du⟩φ + c u φ + u ⟨a, Dφ⟩] · |cell| · Δt`.
///
/// Vanishes up to discretisation error when `u` solves `𝓛u = 0`; equals
/// `−∫ f φ` for a solution of `𝓛u = −f`.
pub fn weak_residual(
    group: &Group,
    coefficients: &Coefficients,
    u: &GridSolution,
    tf: &TestFunction,
) -> Result<f64, PdeError> {
    let (bounds, (t_lo, t_hi)) = tf.bounding_box(group);
    for ((lo, hi), a) in bounds.iter().zip(&u.space.axes) {
        if *lo < a.lo + a.h || *hi > a.hi() - a.h {
            return Err(PdeError::SupportExceedsGrid);
        }
    }
    if t_lo < u.time.lo + u.time.h || t_hi > u.time.hi() - u.time.h {
        return Err(PdeError::SupportExceedsGrid);
    }
    let m0 = group.structure().m0();
    let strides = u.space.strides();
    let m = u.space.len();
    let k_range: Vec<usize> = (0..u.time.n).filter(|&k| {
        let t = u.time.node(k);
        t > t_lo && t < t_hi
    }).collect();
    let terms: Result<Vec<f64>, PdeError> = k_range
        .into_par_iter()
        .map(|k| {
            let t = u.time.node(k);
            let mut slice_sum = 0.0;
            for j in 0..m {
                let z = u.point(k, j);
                let (phi, dphi) = tf.eval_with_gradient(group, &z);
                if phi == 0.0 && dphi.iter().all(|&d| d == 0.0) {
                    continue;
                }
                let idx = u.space.multi_index(j);
                let uz = u.at(k, j);
                let mut du = vec![0.0; m0];
                for i in 0..m0 {
                    if idx[i] == 0 || idx[i] + 1 == u.space.axes[i].n {
                        return Err(PdeError::SupportExceedsGrid);
                    }
                    du[i] = (u.at(k, j + strides[i]) - u.at(k, j - strides[i])) / (2.0 * u.space.axes[i].h);
                }
                let a0 = coefficients.a0.eval_matrix(&z.x, t)?;
                let mut acc = 0.0;
                for i in 0..m0 {
                    let adu: f64 = (0..m0).map(|l| a0[(i, l)] * du[l]).sum();
                    acc -= adu * dphi[i];
                }
                let yu = lie_derivative(group, u, &z, None).map_err(|_| PdeError::SupportExceedsGrid)?;
                acc += phi * yu;
                if let Some(b) = &coefficients.b {
                    let bv = b.eval(&z.x, t)?;
                    acc += phi * bv.iter().zip(&du).map(|(p, q)| p * q).sum::<f64>();
                }
                if let Some(c) = &coefficients.c {
                    acc += c.eval_scalar(&z.x, t)? * uz * phi;
                }
                if let Some(a) = &coefficients.a {
                    let av = a.eval(&z.x, t)?;
                    acc += uz * av.iter().zip(&dphi).map(|(p, q)| p * q).sum::<f64>();
                }
                slice_sum += acc;
            }
            Ok(slice_sum)
        })
        .collect();
    Ok(terms?.iter().sum::<f64>() * u.space.cell_volume() * u.time.h)
}

/// `Σ_nodes φ · |cell| · Δt` on the grid of `u`, the scale for residuals.
pub fn test_function_mass(group: &Group, u: &GridSolution, tf: &TestFunction) -> f64 {
    let mut acc = 0.0;
    for k in 0..u.time.n {
        for j in 0..u.space.len() {
            acc += tf.eval(group, &u.point(k, j));
        }
    }
    acc * u.space.cell_volume() * u.time.h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{Codomain, Field, Window};
    use crate::pde::{Axis, SpaceGrid};

    #[test]
    fn gradient_matches_finite_differences() {
        let g = Group::prototype();
        let tf = TestFunction::new(GroupPoint::new(vec![0.2, -0.1], 1.0), 0.8);
        let z = GroupPoint::new(vec![0.1, 0.05], 0.7);
        let (_, grad) = tf.eval_with_gradient(&g, &z);
        for i in 0..2 {
            let h = 1e-6;
            let mut p = z.clone();
            let mut m = z.clone();
            p.x[i] += h;
            m.x[i] -= h;
            let fd = (tf.eval(&g, &p) - tf.eval(&g, &m)) / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-6, "{i}: {fd} {}", grad[i]);
        }
        assert_eq!(tf.eval(&g, &GroupPoint::new(vec![0.1, 0.05], 1.01)), 0.0);
    }

    #[test]
    fn constants_have_zero_residual() {
        let g = Group::prototype();
        let w = Window::new(0.0, 2.0);
        let coef = Coefficients { a0: Field::constant_scalar(Codomain::Matrix(1), w, 1.0), b: None, c: None, a: None };
        let u = GridSolution::from_fn(
            SpaceGrid::new(vec![Axis::spanning(-2.0, 2.0, 0.05), Axis::spanning(-2.0, 2.0, 0.05)]),
            Axis::spanning(0.0, 2.0, 0.02),
            |_, _| 3.0,
        );
        let tf = TestFunction::new(GroupPoint::new(vec![0.0, 0.0], 1.5), 0.7);
        assert!(weak_residual(&g, &coef, &u, &tf).unwrap().abs() < 1e-12);
        let far = TestFunction::new(GroupPoint::new(vec![1.9, 0.0], 1.5), 0.7);
        assert!(matches!(weak_residual(&g, &coef, &u, &far), Err(PdeError::SupportExceedsGrid)));
    }
}
