use std::path::Path;

use kolmo_core::coefficients::Window;
use kolmo_core::mc::{simulate, McConfig};
use kolmo_core::spec::OperatorSpec;

/// Var(Y_T) of the Euler scheme `Y_{n+1} = Y_n − V_n dt`, `V_n = σW_{n dt}`:
/// `σ² dt³ Σ_{i,j<N} min(i,j)`.
fn euler_variance(sigma2: f64, dt: f64, n: usize) -> f64 {
    let n = n as f64;
    sigma2 * dt.powi(3) * (n - 1.0) * n * (2.0 * n - 1.0) / 6.0
}

#[test]
fn second_moment_converges_with_order_one() {
    let op = OperatorSpec::prototype(1.0, Window::new(0.0, 2.0)).resolve(Path::new(".")).unwrap();
    let exact = 2.0 / 3.0;
    let mut bias = Vec::new();
    for (k, dt) in [0.1, 0.05, 0.025].into_iter().enumerate() {
        let ens = simulate(&op, &[0.0, 0.0], 0.0, &[1.0], &McConfig { paths: 400_000, dt, seed: 31 + k as u64 }).unwrap();
        let m = ens.moments(0);
        let var = m.cov[3];
        let discrete = euler_variance(2.0, dt, (1.0 / dt).round() as usize);
        assert!((var - discrete).abs() < 4.0 * m.cov_se[3], "dt={dt}: {var} vs {discrete} ± {}", m.cov_se[3]);
        bias.push(exact - var);
    }
    let orders: Vec<f64> = bias.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    assert!(orders.iter().all(|p| (0.8..=1.2).contains(p)), "{bias:?} {orders:?}");
}
