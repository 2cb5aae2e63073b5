//! The translation group `(R^{N+1}, ∘)` attached to a canonical drift, its
//! dilations, the homogeneous norm and quasi-distance, and the slanted
//! cylinders and cones built from them.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::numerics::{matrix_exp, nilpotent_exp_apply, nilpotency_index};
use crate::structure::{BlockStructure, DriftMatrix};

/// A point `z = (x, t)`. Serialized as the flat array `[x_1, …, x_N, t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupPoint {
    pub x: Vec<f64>,
    pub t: f64,
}

impl GroupPoint {
    pub fn new(x: Vec<f64>, t: f64) -> Self {
        Self { x, t }
    }

    pub fn origin(n: usize) -> Self {
        Self { x: vec![0.0; n], t: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.x.iter().all(|v| v.is_finite())
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.x.clone();
        v.push(self.t);
        v
    }

    /// Inverse of [`GroupPoint::to_vec`]; `None` for an empty slice.
    pub fn from_slice(v: &[f64]) -> Option<Self> {
        let (t, x) = v.split_last()?;
        Some(Self { x: x.to_vec(), t: *t })
    }
}

impl Serialize for GroupPoint {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_vec().serialize(s)
    }
}

impl<'de> Deserialize<'de> for GroupPoint {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        GroupPoint::from_slice(&v).ok_or_else(|| serde::de::Error::custom("a group point needs at least the time coordinate"))
    }
}

/// Integer power by repeated squaring.
pub fn powi_u(r: f64, k: u32) -> f64 {
    let mut base = r;
    let mut e = k;
    let mut acc = 1.0;
    while e > 0 {
        if e & 1 == 1 {
            acc *= base;
        }
        base *= base;
        e >>= 1;
    }
    acc
}

/// Group geometry for a drift `B` with a given block layout.
#[derive(Debug, Clone)]
pub struct Group {
    structure: BlockStructure,
    drift: DriftMatrix,
    /// Number of series terms making `exp(sB)` exact, when `B` is nilpotent.
    series_terms: Option<usize>,
}

impl Group {
    /// `structure` should come from [`crate::structure::detect_canonical_form`]
    /// for the geometric statements (homogeneity, dilation invariance) to hold;
    /// the group law itself is valid for any constant `B`.
    pub fn new(structure: BlockStructure, drift: DriftMatrix) -> Self {
        let series_terms = nilpotency_index(drift.matrix(), 0.0);
        Self { structure, drift, series_terms }
    }

    /// Kinetic prototype `N = 2`, `B = [[0,0],[1,0]]`.
    pub fn prototype() -> Self {
        Self::new(BlockStructure::new(vec![1, 1]).unwrap(), DriftMatrix::prototype())
    }

    /// Heat geometry on `R^n`.
    pub fn heat(n: usize) -> Self {
        Self::new(BlockStructure::new(vec![n]).unwrap(), DriftMatrix::zeros(n))
    }

    pub fn structure(&self) -> &BlockStructure {
        &self.structure
    }

    pub fn drift(&self) -> &DriftMatrix {
        &self.drift
    }

    pub fn dim(&self) -> usize {
        self.structure.dim()
    }

    pub fn q(&self) -> usize {
        self.structure.q()
    }

    pub fn is_nilpotent(&self) -> bool {
        self.series_terms.is_some()
    }

    /// `E(s) = exp(-sB)`.
    pub fn exp_drift(&self, s: f64) -> DMatrix<f64> {
        matrix_exp(self.drift.matrix(), -s, self.series_terms)
    }

    /// `E(s) x` without forming the matrix when `B` is nilpotent.
    pub fn exp_drift_apply(&self, s: f64, x: &[f64]) -> Vec<f64> {
        match self.series_terms {
            Some(terms) => nilpotent_exp_apply(self.drift.matrix(), -s, x, terms),
            None => {
                let e = self.exp_drift(s);
                (0..x.len()).map(|i| (0..x.len()).map(|j| e[(i, j)] * x[j]).sum()).collect()
            }
        }
    }

    /// `(x,t) ∘ (ξ,τ) = (ξ + E(τ)x, t + τ)`.
    pub fn compose(&self, z: &GroupPoint, w: &GroupPoint) -> GroupPoint {
        let ex = self.exp_drift_apply(w.t, &z.x);
        GroupPoint { x: w.x.iter().zip(&ex).map(|(a, b)| a + b).collect(), t: z.t + w.t }
    }

    /// `(x,t)^{-1} = (-E(-t)x, -t)`.
    pub fn inverse(&self, z: &GroupPoint) -> GroupPoint {
        let ex = self.exp_drift_apply(-z.t, &z.x);
        GroupPoint { x: ex.into_iter().map(|v| -v).collect(), t: -z.t }
    }

    /// `ζ^{-1} ∘ z = (x − E(t−τ)ξ, t − τ)`, the argument of every
    /// translation-invariant quantity. Evaluated in this closed form so that
    /// `ζ^{-1} ∘ ζ` is exactly the origin.
    pub fn relative(&self, zeta: &GroupPoint, z: &GroupPoint) -> GroupPoint {
        let dt = z.t - zeta.t;
        let ex = self.exp_drift_apply(dt, &zeta.x);
        GroupPoint { x: z.x.iter().zip(&ex).map(|(a, b)| a - b).collect(), t: dt }
    }

    /// Spatial part `δ⁰_r`.
    pub fn dilate_space(&self, r: f64, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.structure.alpha()).map(|(v, &a)| v * powi_u(r, a)).collect()
    }

    /// `δ_r(x,t) = (δ⁰_r x, r² t)`.
    pub fn dilate(&self, r: f64, z: &GroupPoint) -> GroupPoint {
        GroupPoint { x: self.dilate_space(r, &z.x), t: z.t * r * r }
    }

    /// The 1-homogeneous gauge: the unique `r > 0` with
    /// `Σ x_i² / r^{2α_i} + t² / r⁴ = 1`, and `0` at the origin.
    pub fn hom_norm(&self, z: &GroupPoint) -> f64 {
        let alpha = self.structure.alpha();
        // The largest single-term root is a lower bracket; (N+1) times it is an upper one.
        let base = z
            .x
            .iter()
            .zip(alpha)
            .map(|(v, &a)| v.abs().powf(1.0 / a as f64))
            .fold(z.t.abs().sqrt(), f64::max);
        if base == 0.0 {
            return 0.0;
        }
        // Rescale to the bracket [1, N+1] so the root-finder sees O(1) data.
        let xs: Vec<f64> = z.x.iter().zip(alpha).map(|(v, &a)| v / powi_u(base, a)).collect();
        let ts = z.t / (base * base);
        let residual = |r: f64| -> f64 {
            xs.iter().zip(alpha).map(|(v, &a)| v * v / powi_u(r, 2 * a)).sum::<f64>() + ts * ts / powi_u(r, 4) - 1.0
        };
        let derivative = |r: f64| -> f64 {
            xs.iter()
                .zip(alpha)
                .map(|(v, &a)| -2.0 * a as f64 * v * v / powi_u(r, 2 * a + 1))
                .sum::<f64>()
                - 4.0 * ts * ts / powi_u(r, 5)
        };
        let (mut lo, mut hi) = (1.0, (z.dim() + 1) as f64);
        while (hi - lo) > 1e-6 * lo {
            let mid = 0.5 * (lo + hi);
            if residual(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        // The residual is convex and decreasing: Newton from the left stays left of the root.
        let mut r = lo;
        for _ in 0..50 {
            let step = residual(r) / derivative(r);
            let next = r - step;
            if !next.is_finite() {
                break;
            }
            if (next - r).abs() <= 1e-16 * r {
                r = next;
                break;
            }
            r = next;
        }
        base * r
    }

    /// `d(z, w) = ‖z^{-1} ∘ w‖`.
    pub fn distance(&self, z: &GroupPoint, w: &GroupPoint) -> f64 {
        self.hom_norm(&self.relative(z, w))
    }
}

/// `Q_r(z₀) = z₀ ∘ δ_r(Q₁)` with `Q₁ = B₁ × … × B₁ × (-1, 0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cylinder {
    pub center: GroupPoint,
    pub radius: f64,
}

impl Cylinder {
    pub fn new(center: GroupPoint, radius: f64) -> Self {
        Self { center, radius }
    }

    /// Every block of `δ_{1/r}(z₀^{-1}∘z)` has Euclidean norm `< 1` and its
    /// time lies in `(-1, 0)`.
    pub fn contains(&self, group: &Group, z: &GroupPoint) -> bool {
        let zeta = group.dilate(1.0 / self.radius, &group.relative(&self.center, z));
        in_unit_cylinder(group.structure(), &zeta)
    }

    /// Lebesgue measure: `r^{Q+2}` times the measure of `Q₁`.
    pub fn measure(&self, structure: &BlockStructure) -> f64 {
        let unit: f64 = structure.blocks().iter().map(|&m| unit_ball_volume(m)).product();
        unit * self.radius.powi(structure.q() as i32 + 2)
    }
}

fn in_unit_cylinder(structure: &BlockStructure, zeta: &GroupPoint) -> bool {
    if !(zeta.t > -1.0 && zeta.t < 0.0) {
        return false;
    }
    structure
        .ranges()
        .into_iter()
        .all(|r| zeta.x[r].iter().map(|v| v * v).sum::<f64>() < 1.0)
}

/// Volume of the unit Euclidean ball in `R^m`.
pub fn unit_ball_volume(m: usize) -> f64 {
    let m = m as f64;
    std::f64::consts::PI.powf(m / 2.0) / statrs::function::gamma::gamma(m / 2.0 + 1.0)
}

/// `P_{β,r,R}(z₀) = z₀ ∘ {δ_ρ(ξ, β) : |ξ| < r, 0 < ρ ≤ R}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cone {
    pub vertex: GroupPoint,
    pub beta: f64,
    pub r: f64,
    pub big_r: f64,
}

impl Cone {
    pub fn new(vertex: GroupPoint, beta: f64, r: f64, big_r: f64) -> Self {
        Self { vertex, beta, r, big_r }
    }

    pub fn contains(&self, group: &Group, z: &GroupPoint) -> bool {
        let zeta = group.relative(&self.vertex, z);
        // t-level of δ_ρ(ξ, β) is ρ²β, so β < 0 gives a cone into the past.
        let s = zeta.t / self.beta;
        if !(s > 0.0) {
            return false;
        }
        let rho = s.sqrt();
        if !(rho > 0.0 && rho <= self.big_r) {
            return false;
        }
        let xi = group.dilate_space(1.0 / rho, &zeta.x);
        xi.iter().map(|v| v * v).sum::<f64>().sqrt() < self.r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_point(rng: &mut ChaCha8Rng, n: usize) -> GroupPoint {
        GroupPoint::new((0..n).map(|_| rng.random_range(-2.0..2.0)).collect(), rng.random_range(-2.0..2.0))
    }

    fn close(a: &GroupPoint, b: &GroupPoint, tol: f64) -> bool {
        (a.t - b.t).abs() <= tol && a.x.iter().zip(&b.x).all(|(u, v)| (u - v).abs() <= tol)
    }

    #[test]
    fn exp_drift_prototype() {
        let g = Group::prototype();
        let e = g.exp_drift(0.7);
        assert_eq!(e, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -0.7, 1.0]));
        let id = &e * g.exp_drift(-0.7);
        assert!((id - DMatrix::identity(2, 2)).amax() < 1e-13);
        assert!((g.exp_drift(3.1).determinant() - 1.0).abs() < 1e-13);
        assert_eq!(Group::heat(3).exp_drift(5.0), DMatrix::identity(3, 3));
    }

    #[test]
    fn prototype_group_law() {
        let g = Group::prototype();
        let z = GroupPoint::new(vec![0.3, -1.2], 0.4);
        let w = g.compose(&z, &GroupPoint::new(vec![0.0, 0.0], 0.9));
        assert!(close(&w, &GroupPoint::new(vec![0.3, -1.2 - 0.9 * 0.3], 1.3), 1e-15));
        let inv = g.inverse(&z);
        assert!(close(&inv, &GroupPoint::new(vec![-0.3, 1.2 - 0.4 * 0.3], -0.4), 1e-15));
        assert!(close(&g.compose(&z, &inv), &GroupPoint::origin(2), 1e-12));
        assert!(close(&g.inverse(&inv), &z, 1e-12));
        let o = GroupPoint::origin(2);
        assert!(close(&g.compose(&z, &o), &z, 0.0));
        assert!(close(&g.compose(&o, &z), &z, 0.0));
        assert_eq!(g.inverse(&o), o);
    }

    #[test]
    fn dilation_examples() {
        let g = Group::prototype();
        let z = GroupPoint::new(vec![1.0, 1.0], 1.0);
        assert_eq!(g.dilate(2.0, &z), GroupPoint::new(vec![2.0, 8.0], 4.0));
        assert_eq!(g.dilate(1.0, &z), z);
        let a = g.dilate(1.5, &g.dilate(0.4, &z));
        assert!(close(&a, &g.dilate(0.6, &z), 1e-14));
    }

    #[test]
    fn norm_examples() {
        let g = Group::prototype();
        assert_eq!(g.hom_norm(&GroupPoint::origin(2)), 0.0);
        assert!((g.hom_norm(&GroupPoint::new(vec![0.0, 0.0], 0.36)) - 0.6).abs() < 1e-14);
        assert!((g.hom_norm(&GroupPoint::new(vec![0.0, 0.0], -0.36)) - 0.6).abs() < 1e-14);
        assert!((g.hom_norm(&GroupPoint::new(vec![1.0, 0.0], 0.0)) - 1.0).abs() < 1e-14);
        // Defining equation holds at the returned root.
        let z = GroupPoint::new(vec![0.7, -2.3], 0.5);
        let r = g.hom_norm(&z);
        let lhs = 0.49 / (r * r) + 2.3f64.powi(2) / r.powi(6) + 0.25 / r.powi(4);
        assert!((lhs - 1.0).abs() < 1e-13);
    }

    #[test]
    fn norm_is_homogeneous_and_distance_invariant() {
        let g = Group::new(
            BlockStructure::new(vec![2, 1, 1]).unwrap(),
            DriftMatrix::from_rows(&[
                vec![0.0, 0.0, 0.0, 0.0],
                vec![0.0, 0.0, 0.0, 0.0],
                vec![1.0, -0.5, 0.0, 0.0],
                vec![0.0, 0.0, 2.0, 0.0],
            ]),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let z = random_point(&mut rng, 4);
            let w = random_point(&mut rng, 4);
            let zeta = random_point(&mut rng, 4);
            let r = 10f64.powf(rng.random_range(-3.0..3.0));
            let n = g.hom_norm(&z);
            assert!((g.hom_norm(&g.dilate(r, &z)) - r * n).abs() <= 1e-10 * r * n);
            let d = g.distance(&z, &w);
            let d2 = g.distance(&g.compose(&zeta, &z), &g.compose(&zeta, &w));
            assert!((d - d2).abs() <= 1e-10 * d.max(1.0));
            assert!(g.distance(&z, &z) < 1e-12);
        }
    }

    #[test]
    fn cylinder_membership() {
        let g = Group::prototype();
        let z0 = GroupPoint::new(vec![0.5, -0.25], 1.0);
        let c = Cylinder::new(z0.clone(), 0.3);
        assert!(!c.contains(&g, &z0));
        let inside = g.compose(&z0, &g.dilate(0.3, &GroupPoint::new(vec![0.0, 0.0], -0.5)));
        assert!(c.contains(&g, &inside));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let unit = Cylinder::new(GroupPoint::origin(2), 1.0);
        for _ in 0..200 {
            let z = random_point(&mut rng, 2);
            let scaled = g.dilate(1.0 / 0.3, &g.relative(&z0, &z));
            assert_eq!(c.contains(&g, &z), unit.contains(&g, &scaled));
        }
    }

    #[test]
    fn cone_membership() {
        let g = Group::prototype();
        let v = GroupPoint::new(vec![0.1, 0.2], 0.0);
        let cone = Cone::new(v.clone(), 1.0, 0.5, 0.8);
        assert!(!cone.contains(&g, &v));
        let on_axis = |rho: f64| g.compose(&v, &g.dilate(rho, &GroupPoint::new(vec![0.0, 0.0], 1.0)));
        assert!(cone.contains(&g, &on_axis(0.5)));
        assert!(cone.contains(&g, &on_axis(0.8)));
        assert!(!cone.contains(&g, &on_axis(0.81)));
    }

    #[test]
    fn point_serializes_flat() {
        let z = GroupPoint::new(vec![1.0, 2.0], 3.0);
        assert_eq!(serde_json::to_string(&z).unwrap(), "[1.0,2.0,3.0]");
        let back: GroupPoint = serde_json::from_str("[1.0,2.0,3.0]").unwrap();
        assert_eq!(back, z);
    }
}
