//! Sparse polynomials in `(x, t)` and the dilation covariance of the
//! principal part `𝒦 = Σ_{i<m₀} ∂²_i + ⟨Bx, D⟩ − ∂_t`.

use crate::group::{Group, GroupPoint};

/// `Σ_k c_k · x^{e_k} · t^{f_k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    dim: usize,
    terms: Vec<(f64, Vec<u32>, u32)>,
}

impl Polynomial {
    pub fn new(dim: usize) -> Self {
        Self { dim, terms: Vec::new() }
    }

    /// Adds `coef · x^{exps} · t^{t_exp}`.
    pub fn term(mut self, coef: f64, exps: &[u32], t_exp: u32) -> Self {
        assert_eq!(exps.len(), self.dim, "exponent vector length");
        self.terms.push((coef, exps.to_vec(), t_exp));
        self
    }

    pub fn eval(&self, z: &GroupPoint) -> f64 {
        self.terms
            .iter()
            .map(|(c, e, f)| c * e.iter().zip(&z.x).map(|(&k, v)| v.powi(k as i32)).product::<f64>() * z.t.powi(*f as i32))
            .sum()
    }

    /// `∂/∂x_i`.
    pub fn dx(&self, i: usize) -> Self {
        let terms = self
            .terms
            .iter()
            .filter(|(_, e, _)| e[i] > 0)
            .map(|(c, e, f)| {
                let mut e = e.clone();
                let k = e[i];
                e[i] -= 1;
                (c * k as f64, e, *f)
            })
            .collect();
        Self { dim: self.dim, terms }
    }

    pub fn dt(&self) -> Self {
        let terms =
            self.terms.iter().filter(|(_, _, f)| *f > 0).map(|(c, e, f)| (c * *f as f64, e.clone(), f - 1)).collect();
        Self { dim: self.dim, terms }
    }

    /// `u ∘ δ_r`.
    pub fn dilated(&self, group: &Group, r: f64) -> Self {
        let alpha = group.structure().alpha();
        let terms = self
            .terms
            .iter()
            .map(|(c, e, f)| {
                let deg: u32 = e.iter().zip(alpha).map(|(k, a)| k * a).sum::<u32>() + 2 * f;
                (c * r.powi(deg as i32), e.clone(), *f)
            })
            .collect();
        Self { dim: self.dim, terms }
    }

    /// `(𝒦u)(z)` using the drift stored in `group` (which need not be canonical).
    pub fn principal(&self, group: &Group, z: &GroupPoint) -> f64 {
        let m0 = group.structure().m0();
        let b = group.drift().matrix();
        let mut acc = -self.dt().eval(z);
        for i in 0..m0 {
            acc += self.dx(i).dx(i).eval(z);
        }
        for i in 0..self.dim {
            let bx: f64 = (0..self.dim).map(|j| b[(i, j)] * z.x[j]).sum();
            if bx != 0.0 {
                acc += bx * self.dx(i).eval(z);
            }
        }
        acc
    }
}

/// `max_z |𝒦(u∘δ_r)(z) − r²(𝒦u)(δ_r z)|` over `points`.
pub fn dilation_invariance_check(group: &Group, r: f64, u: &Polynomial, points: &[GroupPoint]) -> f64 {
    let ur = u.dilated(group, r);
    points
        .iter()
        .map(|z| (ur.principal(group, z) - r * r * u.principal(group, &group.dilate(r, z))).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::{BlockStructure, DriftMatrix};

    fn points() -> Vec<GroupPoint> {
        (0..50)
            .map(|k| {
                let s = k as f64 * 0.37;
                GroupPoint::new(vec![s.sin() * 1.5, (1.3 * s).cos()], 0.5 * (0.7 * s).sin())
            })
            .collect()
    }

    #[test]
    fn canonical_prototype_is_covariant() {
        let g = Group::prototype();
        let sq = Polynomial::new(2).term(1.0, &[2, 0], 0);
        assert!((sq.principal(&g, &GroupPoint::new(vec![0.3, 0.4], 0.1)) - 2.0).abs() < 1e-15);
        let mixed = Polynomial::new(2).term(1.0, &[1, 1], 0).term(1.0, &[0, 0], 1);
        // 𝒦(x₁x₂ + t) = x₁·x₁ − 1
        let z = GroupPoint::new(vec![0.7, -0.2], 0.3);
        assert!((mixed.principal(&g, &z) - (0.49 - 1.0)).abs() < 1e-15);
        for r in [0.5, 2.0, 3.0] {
            assert!(dilation_invariance_check(&g, r, &sq, &points()) < 1e-12);
            assert!(dilation_invariance_check(&g, r, &mixed, &points()) < 1e-12);
        }
    }

    #[test]
    fn broken_drift_is_detected() {
        let g = Group::new(
            BlockStructure::new(vec![1, 1]).unwrap(),
            DriftMatrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]]),
        );
        let u = Polynomial::new(2).term(1.0, &[0, 1], 0);
        assert!(dilation_invariance_check(&g, 2.0, &u, &points()) > 1.0);
    }
}
