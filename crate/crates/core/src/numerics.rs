//! Shared numerical plumbing: cached Gauss rules, adaptive matrix quadrature,
//! and a few dense linear-algebra helpers.

use std::collections::HashMap;
use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex, OnceLock};

use gauss_quad::{GaussHermite, GaussLegendre};
use nalgebra::{DMatrix, DVector};

/// Nodes and weights of a Gauss rule.
pub type Rule = Arc<Vec<(f64, f64)>>;

fn rule_cache(slot: &'static OnceLock<Mutex<HashMap<usize, Rule>>>) -> &'static Mutex<HashMap<usize, Rule>> {
    slot.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Gauss–Legendre rule on `[-1, 1]` with `n` nodes, sorted by node.
pub fn gauss_legendre(n: usize) -> Rule {
    static CACHE: OnceLock<Mutex<HashMap<usize, Rule>>> = OnceLock::new();
    let mut cache = rule_cache(&CACHE).lock().expect("quadrature cache poisoned");
    cache
        .entry(n)
        .or_insert_with(|| {
            let rule = GaussLegendre::new(NonZeroUsize::new(n.max(1)).unwrap());
            let mut pts: Vec<(f64, f64)> = rule.iter().map(|(x, w)| (*x, *w)).collect();
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            Arc::new(pts)
        })
        .clone()
}

/// Gauss–Hermite rule for the weight `exp(-u²)` with `n` nodes.
pub fn gauss_hermite(n: usize) -> Rule {
    static CACHE: OnceLock<Mutex<HashMap<usize, Rule>>> = OnceLock::new();
    let mut cache = rule_cache(&CACHE).lock().expect("quadrature cache poisoned");
    cache
        .entry(n)
        .or_insert_with(|| {
            let rule = GaussHermite::new(NonZeroUsize::new(n.max(1)).unwrap());
            let mut pts: Vec<(f64, f64)> = rule.iter().map(|(x, w)| (*x, *w)).collect();
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            Arc::new(pts)
        })
        .clone()
}

/// Integrates a scalar function over `[a, b]` with an `n`-point Gauss–Legendre rule.
pub fn integrate_gl(n: usize, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let rule = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    rule.iter().map(|&(x, w)| w * f(mid + half * x)).sum::<f64>() * half
}

/// Integrates a matrix-valued function with a fixed Gauss–Legendre rule.
pub fn integrate_matrix_gl(n: usize, a: f64, b: f64, f: impl Fn(f64) -> DMatrix<f64>) -> DMatrix<f64> {
    let rule = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc: Option<DMatrix<f64>> = None;
    for &(x, w) in rule.iter() {
        let v = f(mid + half * x) * (w * half);
        acc = Some(match acc {
            Some(s) => s + v,
            None => v,
        });
    }
    acc.expect("rule has at least one node")
}

/// Adaptive bisection driven by the difference between 10- and 20-point
/// Gauss–Legendre estimates on each panel. Absolute tolerance is relative to
/// the max-norm of the running estimate.
pub fn integrate_matrix_adaptive(
    a: f64,
    b: f64,
    rel_tol: f64,
    f: &dyn Fn(f64) -> DMatrix<f64>,
) -> DMatrix<f64> {
    fn panel(a: f64, b: f64, rel_tol: f64, depth: usize, scale: f64, f: &dyn Fn(f64) -> DMatrix<f64>) -> DMatrix<f64> {
        let coarse = integrate_matrix_gl(10, a, b, f);
        let fine = integrate_matrix_gl(20, a, b, f);
        let err = (&fine - &coarse).amax();
        if err <= rel_tol * scale.max(fine.amax()) || depth >= 40 {
            return fine;
        }
        let m = 0.5 * (a + b);
        panel(a, m, rel_tol, depth + 1, scale, f) + panel(m, b, rel_tol, depth + 1, scale, f)
    }
    let scale = integrate_matrix_gl(20, a, b, f).amax();
    panel(a, b, rel_tol, 0, scale, f)
}

/// Applies `exp(s·M)` to `v` by the power series truncated after `terms`
/// terms. Exact when `M^terms = 0`.
pub fn nilpotent_exp_apply(m: &DMatrix<f64>, s: f64, v: &[f64], terms: usize) -> Vec<f64> {
    let mut out: DVector<f64> = DVector::from_column_slice(v);
    let mut term = out.clone();
    for k in 1..terms {
        term = m * term * (s / k as f64);
        out += &term;
    }
    out.as_slice().to_vec()
}

/// `exp(s·M)` as a matrix, by truncated series when `nilpotent_terms` is
/// given and by the library Padé routine otherwise.
pub fn matrix_exp(m: &DMatrix<f64>, s: f64, nilpotent_terms: Option<usize>) -> DMatrix<f64> {
    let n = m.nrows();
    match nilpotent_terms {
        Some(terms) => {
            let mut out = DMatrix::<f64>::identity(n, n);
            let mut term = DMatrix::<f64>::identity(n, n);
            for k in 1..terms {
                term = &term * m * (s / k as f64);
                out += &term;
            }
            out
        }
        None => (m * s).exp(),
    }
}

/// Smallest `k ≥ 1` with `M^k = 0` (entrywise below `tol`), if any `k ≤ n`.
pub fn nilpotency_index(m: &DMatrix<f64>, tol: f64) -> Option<usize> {
    let n = m.nrows();
    let mut p = m.clone();
    for k in 1..=n {
        if p.amax() <= tol {
            return Some(k);
        }
        p = &p * m;
    }
    None
}

/// Singular values above `rel_tol·σ_max`.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// Formats a float with 17 significant digits, the CSV convention used
/// throughout the crate.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{:.16e}", v)
    } else {
        format!("{}", v)
    }
}

/// splitmix64 finaliser, used for deterministic cell hashing.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Ordinary least-squares slope of `y` against `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let v = integrate_gl(4, 0.0, 2.0, |x| x.powi(7));
        assert!((v - 2f64.powi(8) / 8.0).abs() < 1e-12);
    }

    #[test]
    fn hermite_weights_sum_to_sqrt_pi() {
        for n in [5, 20, 40] {
            let s: f64 = gauss_hermite(n).iter().map(|p| p.1).sum();
            assert!((s - std::f64::consts::PI.sqrt()).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn adaptive_matches_closed_form() {
        let m = integrate_matrix_adaptive(0.0, 1.0, 1e-12, &|s| DMatrix::from_element(1, 1, (3.0 * s).exp()));
        assert!((m[(0, 0)] - ((3f64).exp() - 1.0) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn nilpotent_series_matches_pade() {
        let b = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, -1.5, 0.0]);
        let e1 = matrix_exp(&b, -0.7, Some(3));
        let e2 = matrix_exp(&b, -0.7, None);
        assert!((e1 - e2).amax() < 1e-13);
        assert_eq!(nilpotency_index(&b, 0.0), Some(3));
    }
}
