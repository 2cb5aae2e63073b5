//! Pointwise finite-difference application of `𝓛`, `𝓛*` and `Y` to sampled
//! grid functions.

use super::{GridSolution, PdeError};
use crate::coefficients::Coefficients;
use crate::group::{Group, GroupPoint};

/// `𝓛` and its formal adjoint discretised on a [`GridSolution`]'s grid.
///
/// The two stencils are exact transposes of each other on grid functions
/// vanishing near the boundary (summation by parts), for drifts whose
/// diagonal blocks vanish.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    group: Group,
    coefficients: Coefficients,
}

struct Stencil<'a> {
    u: &'a GridSolution,
    k: usize,
    flat: usize,
    strides: Vec<usize>,
    x: Vec<f64>,
    t: f64,
}

impl Stencil<'_> {
    fn val(&self, k: usize, offsets: &[(usize, isize)]) -> f64 {
        let mut f = self.flat as isize;
        for &(d, o) in offsets {
            f += o * self.strides[d] as isize;
        }
        self.u.at(k, f as usize)
    }

    fn here(&self) -> f64 {
        self.u.at(self.k, self.flat)
    }

    fn shifted(&self, offsets: &[(usize, isize)]) -> Vec<f64> {
        let mut x = self.x.clone();
        for &(d, o) in offsets {
            x[d] += o as f64 * self.u.space.axes[d].h;
        }
        x
    }
}

impl DiscreteOperator {
    pub fn new(group: Group, coefficients: Coefficients) -> Self {
        Self { group, coefficients }
    }

    pub fn group(&self) -> &Group {
        &self.group
    }

    fn stencil<'a>(&self, u: &'a GridSolution, k: usize, flat: usize, past: bool) -> Result<Stencil<'a>, PdeError> {
        let idx = u.space.multi_index(flat);
        let interior = idx.iter().zip(&u.space.axes).all(|(&i, a)| i >= 1 && i + 1 < a.n);
        let time_ok = if past { k >= 1 && k < u.time.n } else { k + 1 < u.time.n };
        if !interior || !time_ok {
            return Err(PdeError::BoundaryNode);
        }
        Ok(Stencil { u, k, flat, strides: u.space.strides(), x: u.space.coords(flat), t: u.time.node(k) })
    }

    /// `div(A Du)` with face-averaged diagonal fluxes and central cross terms.
    fn diffusion(&self, s: &Stencil) -> Result<f64, PdeError> {
        let m0 = self.group.structure().m0();
        let a0 = &self.coefficients.a0;
        let here = a0.eval(&s.x, s.t)?;
        let u0 = s.here();
        let mut acc = 0.0;
        for i in 0..m0 {
            let hi = s.u.space.axes[i].h;
            let ap = a0.eval(&s.shifted(&[(i, 1)]), s.t)?;
            let am = a0.eval(&s.shifted(&[(i, -1)]), s.t)?;
            let face_p = 0.5 * (here[i * m0 + i] + ap[i * m0 + i]);
            let face_m = 0.5 * (here[i * m0 + i] + am[i * m0 + i]);
            acc += (face_p * (s.val(s.k, &[(i, 1)]) - u0) - face_m * (u0 - s.val(s.k, &[(i, -1)]))) / (hi * hi);
            for j in (0..m0).filter(|&j| j != i) {
                let hj = s.u.space.axes[j].h;
                let dp = (s.val(s.k, &[(i, 1), (j, 1)]) - s.val(s.k, &[(i, 1), (j, -1)])) / (2.0 * hj);
                let dm = (s.val(s.k, &[(i, -1), (j, 1)]) - s.val(s.k, &[(i, -1), (j, -1)])) / (2.0 * hj);
                acc += (ap[i * m0 + j] * dp - am[i * m0 + j] * dm) / (2.0 * hi);
            }
        }
        Ok(acc)
    }

    fn central(&self, s: &Stencil, i: usize) -> f64 {
        (s.val(s.k, &[(i, 1)]) - s.val(s.k, &[(i, -1)])) / (2.0 * s.u.space.axes[i].h)
    }

    /// `(𝓛u)(x_j, t_k)` with forward time difference.
    pub fn apply(&self, u: &GridSolution, k: usize, flat: usize) -> Result<f64, PdeError> {
        let s = self.stencil(u, k, flat, false)?;
        let m0 = self.group.structure().m0();
        let n = self.group.dim();
        let mut acc = self.diffusion(&s)?;
        let u0 = s.here();
        let bx = self.drift_velocity(&s.x);
        for (i, &v) in bx.iter().enumerate().take(n) {
            let h = u.space.axes[i].h;
            acc += if v > 0.0 { v * (s.val(k, &[(i, 1)]) - u0) / h } else { v * (u0 - s.val(k, &[(i, -1)])) / h };
        }
        if let Some(b) = &self.coefficients.b {
            let bv = b.eval(&s.x, s.t)?;
            for i in 0..m0 {
                acc += bv[i] * self.central(&s, i);
            }
        }
        if let Some(c) = &self.coefficients.c {
            acc += c.eval_scalar(&s.x, s.t)? * u0;
        }
        if let Some(a) = &self.coefficients.a {
            for i in 0..m0 {
                let h = u.space.axes[i].h;
                let ap = a.eval(&s.shifted(&[(i, 1)]), s.t)?[i];
                let am = a.eval(&s.shifted(&[(i, -1)]), s.t)?[i];
                acc -= (ap * s.val(k, &[(i, 1)]) - am * s.val(k, &[(i, -1)])) / (2.0 * h);
            }
        }
        acc -= (u.at(k + 1, flat) - u0) / u.time.h;
        Ok(acc)
    }

    /// `(𝓛*v)(x_j, t_k)` with backward time difference.
    pub fn apply_adjoint(&self, v: &GridSolution, k: usize, flat: usize) -> Result<f64, PdeError> {
        let s = self.stencil(v, k, flat, true)?;
        let m0 = self.group.structure().m0();
        let n = self.group.dim();
        let mut acc = self.diffusion(&s)?;
        let v0 = s.here();
        let bx = self.drift_velocity(&s.x);
        for (i, &vel) in bx.iter().enumerate().take(n) {
            let h = v.space.axes[i].h;
            acc -= if vel > 0.0 { vel * (v0 - s.val(k, &[(i, -1)])) / h } else { vel * (s.val(k, &[(i, 1)]) - v0) / h };
        }
        if let Some(b) = &self.coefficients.b {
            for i in 0..m0 {
                let h = v.space.axes[i].h;
                let bp = b.eval(&s.shifted(&[(i, 1)]), s.t)?[i];
                let bm = b.eval(&s.shifted(&[(i, -1)]), s.t)?[i];
                acc -= (bp * s.val(k, &[(i, 1)]) - bm * s.val(k, &[(i, -1)])) / (2.0 * h);
            }
        }
        let c = match &self.coefficients.c {
            Some(c) => c.eval_scalar(&s.x, s.t)?,
            None => 0.0,
        };
        acc += (c - self.group.drift().trace()) * v0;
        if let Some(a) = &self.coefficients.a {
            let av = a.eval(&s.x, s.t)?;
            for i in 0..m0 {
                acc += av[i] * self.central(&s, i);
            }
        }
        acc += (v0 - v.at(k - 1, flat)) / v.time.h;
        Ok(acc)
    }

    fn drift_velocity(&self, x: &[f64]) -> Vec<f64> {
        let b = self.group.drift().matrix();
        (0..x.len()).map(|i| (0..x.len()).map(|j| b[(i, j)] * x[j]).sum()).collect()
    }
}

/// `Yu(z) ≈ (u(γ(s)) − u(γ(−s))) / 2s` along `γ(s) = (E(−s)x, t − s)`,
/// with space-time multilinear interpolation. `s` defaults to the time step
/// of `u`.
pub fn lie_derivative(group: &Group, u: &GridSolution, z: &GroupPoint, s: Option<f64>) -> Result<f64, PdeError> {
    let s = s.unwrap_or(u.time.h);
    let fwd = GroupPoint::new(group.exp_drift_apply(-s, &z.x), z.t - s);
    let bwd = GroupPoint::new(group.exp_drift_apply(s, &z.x), z.t + s);
    Ok((u.interpolate(&fwd)? - u.interpolate(&bwd)?) / (2.0 * s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{Codomain, Field, Window};
    use crate::pde::{Axis, SpaceGrid};

    fn coeffs(c: f64) -> Coefficients {
        let w = Window::new(-10.0, 10.0);
        Coefficients {
            a0: Field::constant_scalar(Codomain::Matrix(1), w, 1.0),
            b: None,
            c: (c != 0.0).then(|| Field::constant_scalar(Codomain::Scalar, w, c)),
            a: None,
        }
    }

    fn grid() -> (SpaceGrid, Axis) {
        (SpaceGrid::new(vec![Axis::new(-1.0, 0.1, 21), Axis::new(-1.0, 0.1, 21)]), Axis::new(0.0, 0.05, 5))
    }

    #[test]
    fn constants() {
        let (s, t) = grid();
        let one = GridSolution::from_fn(s, t, |_, _| 1.0);
        let op = DiscreteOperator::new(Group::prototype(), coeffs(0.0));
        assert_eq!(op.apply(&one, 1, 200).unwrap(), 0.0);
        let op = DiscreteOperator::new(Group::prototype(), coeffs(-0.7));
        assert!((op.apply_adjoint(&one, 1, 200).unwrap() + 0.7).abs() < 1e-15);
        assert!(matches!(op.apply(&one, 4, 200), Err(PdeError::BoundaryNode)));
        assert!(matches!(op.apply(&one, 1, 0), Err(PdeError::BoundaryNode)));
    }

    #[test]
    fn lie_derivative_of_second_coordinate() {
        let (s, t) = grid();
        let g = Group::prototype();
        let u = GridSolution::from_fn(s, t, |x, _| x[1]);
        let z = GroupPoint::new(vec![0.35, -0.2], 0.1);
        assert!((lie_derivative(&g, &u, &z, Some(0.05)).unwrap() - 0.35).abs() < 1e-12);
        let aff = GridSolution::from_fn(u.space.clone(), u.time, |x, t| 2.0 * x[0] - x[1] + 3.0 * t);
        // Y(2v − y + 3t) = −v − 3.
        assert!((lie_derivative(&g, &aff, &z, None).unwrap() - (-0.35 - 3.0)).abs() < 1e-12);
    }

    #[test]
    fn discrete_duality_is_exact() {
        let (s, _) = grid();
        let t = Axis::new(0.0, 0.05, 9);
        let bump = |x: &[f64], tt: f64, c: f64| {
            let r2 = (x[0] - c).powi(2) + x[1].powi(2);
            let tau = (tt - 0.2) / 0.15;
            (0.49 - r2).max(0.0).powi(3) * (1.0 - tau * tau).max(0.0).powi(3)
        };
        let u = GridSolution::from_fn(s.clone(), t, |x, tt| bump(x, tt, 0.1));
        let v = GridSolution::from_fn(s.clone(), t, |x, tt| bump(x, tt, -0.1) * (1.0 + x[0]));
        let w = Window::new(-10.0, 10.0);
        let c = Coefficients {
            a0: Field::preset(Codomain::Matrix(1), w, crate::coefficients::Preset::SmoothDiffusion { lambda: 1.0, big_lambda: 2.0 }),
            b: Some(Field::preset(Codomain::Vector(1), w, crate::coefficients::Preset::Coordinate { index: 1 })),
            c: Some(Field::constant_scalar(Codomain::Scalar, w, -0.3)),
            a: Some(Field::constant_scalar(Codomain::Vector(1), w, 0.4)),
        };
        let op = DiscreteOperator::new(Group::prototype(), c);
        let (mut lhs, mut rhs) = (0.0, 0.0);
        for k in 1..t.n - 1 {
            for j in 0..s.len() {
                if s.on_boundary(j) {
                    continue;
                }
                lhs += op.apply(&u, k, j).unwrap() * v.at(k, j);
                rhs += u.at(k, j) * op.apply_adjoint(&v, k, j).unwrap();
            }
        }
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0), "{lhs} {rhs}");
    }
}
