//! Geometric-average Asian options as a Kolmogorov problem.
//!
//! With `x₁ = log S` and `x₂ = ∫₀ᵗ log S ds` the risk-neutral dynamics
//! `dx₁ = (r − σ²/2)dt + σ dW`, `dx₂ = x₁ dt` have generator
//! `(σ²/2)∂²₁ + (r − σ²/2)∂₁ + x₁∂₂`. The price of a payoff `g(x₂)` paid at `T`
//! solves the pricing equation in `(S, A)`; in the new variables the forward
//! density is the kernel of `div(A₀ D) + ⟨Bx, D⟩ − ∂_t − div(a ·) + c` with
//! `A₀ = σ²/2`, `B = [[0,0],[−1,0]]`, `a = r − σ²/2` and `c = −r`.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::coefficients::{ConstValue, FieldDescriptor, Window};
use crate::group::{Group, GroupPoint};
use crate::kernel::{GaussianKernel, KernelError};
use crate::mc::{simulate, McConfig, McError};
use crate::numerics::gauss_legendre;
use crate::spec::{CoefficientSpec, Ellipticity, OperatorSpec, SpecError, StructureSpec, SCHEMA};
use crate::structure::{BlockStructure, DriftMatrix};

/// Half-width of the quadrature box in standard deviations.
const QUAD_SDS: f64 = 10.0;
const QUAD_NODES: usize = 16;

#[derive(Debug, Error)]
pub enum AsianError {
    #[error("invalid contract: {0}")]
    InvalidInput(String),
    #[error("quadrature price {quadrature} and Monte Carlo price {monte_carlo} differ by {gap}, budget {budget}")]
    Inconsistent { quadrature: f64, monte_carlo: f64, gap: f64, budget: f64 },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Mc(#[from] McError),
    #[error(transparent)]
    Spec(#[from] SpecError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payoff {
    Call,
    Put,
    /// Pays 1 regardless of the path.
    Unit,
}

/// Contract on the geometric average `G = exp(x₂(T)/period)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsianContract {
    pub spot: f64,
    /// Accumulated `∫ log S ds` over the part of the averaging period already elapsed.
    pub accumulated: f64,
    pub rate: f64,
    pub sigma: f64,
    pub maturity: f64,
    pub strike: f64,
    /// Length of the averaging period (`maturity` for a fresh contract).
    pub period: f64,
    pub payoff: Payoff,
}

impl AsianContract {
    pub fn fresh(spot: f64, rate: f64, sigma: f64, maturity: f64, strike: f64) -> Self {
        Self { spot, accumulated: 0.0, rate, sigma, maturity, strike, period: maturity, payoff: Payoff::Call }
    }

    fn validate(&self) -> Result<(), AsianError> {
        let positive = [self.spot, self.maturity, self.period];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(AsianError::InvalidInput("spot, maturity and period must be positive".into()));
        }
        if !(self.sigma >= 0.0) || !self.rate.is_finite() || !self.accumulated.is_finite() {
            return Err(AsianError::InvalidInput("sigma must be non-negative and inputs finite".into()));
        }
        if self.payoff != Payoff::Unit && !(self.strike > 0.0) {
            return Err(AsianError::InvalidInput("strike must be positive".into()));
        }
        Ok(())
    }

    fn drift(&self) -> f64 {
        self.rate - 0.5 * self.sigma * self.sigma
    }

    fn start(&self) -> [f64; 2] {
        [self.spot.ln(), self.accumulated]
    }

    fn payoff_of(&self, x2: f64) -> f64 {
        let g = (x2 / self.period).exp();
        match self.payoff {
            Payoff::Call => (g - self.strike).max(0.0),
            Payoff::Put => (self.strike - g).max(0.0),
            Payoff::Unit => 1.0,
        }
    }

    /// Mean and variance of `log G`.
    pub fn log_average_moments(&self) -> (f64, f64) {
        let [x1, x2] = self.start();
        let t = self.maturity;
        let mean = (x2 + x1 * t + 0.5 * self.drift() * t * t) / self.period;
        let var = self.sigma * self.sigma * t.powi(3) / (3.0 * self.period * self.period);
        (mean, var)
    }

    /// The Kolmogorov operator of the transformed problem.
    pub fn operator_spec(&self) -> OperatorSpec {
        let a0 = 0.5 * self.sigma * self.sigma;
        OperatorSpec {
            schema: SCHEMA.to_string(),
            structure: StructureSpec { blocks: vec![1, 1], b: vec![vec![0.0, 0.0], vec![-1.0, 0.0]] },
            coefficients: CoefficientSpec {
                a0: FieldDescriptor::Constant { value: ConstValue::Scalar(a0) },
                b: None,
                c: Some(FieldDescriptor::Constant { value: ConstValue::Scalar(-self.rate) }),
                a: Some(FieldDescriptor::Constant { value: ConstValue::Scalar(self.drift()) }),
            },
            window: Window::new(0.0, self.maturity),
            ellipticity: Ellipticity { lambda: a0, big_lambda: a0 },
        }
    }
}

/// Closed form for the geometric-average contract (log-normal `G`).
pub fn closed_form(contract: &AsianContract) -> Result<f64, AsianError> {
    contract.validate()?;
    let disc = (-contract.rate * contract.maturity).exp();
    let (m, v) = contract.log_average_moments();
    if contract.payoff == Payoff::Unit {
        return Ok(disc);
    }
    let k = contract.strike;
    if v == 0.0 {
        return Ok(disc * contract.payoff_of(m * contract.period));
    }
    let sd = v.sqrt();
    let phi = Normal::standard();
    let d2 = (m - k.ln()) / sd;
    let d1 = d2 + sd;
    let forward = (m + 0.5 * v).exp();
    Ok(match contract.payoff {
        Payoff::Call => disc * (forward * phi.cdf(d1) - k * phi.cdf(d2)),
        Payoff::Put => disc * (k * phi.cdf(-d2) - forward * phi.cdf(-d1)),
        Payoff::Unit => unreachable!(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraturePrice {
    pub price: f64,
    /// Difference between the composite rule and its panel-doubled refinement.
    pub error: f64,
    pub panels: usize,
}

/// `e^{−rT} ∫ Γ(x, T; x₀, 0) g(x₂) dx` by composite Gauss–Legendre quadrature,
/// with `Γ` the kernel of the principal part shifted by the deterministic
/// displacement `(aT, aT²/2)` of the constant drift.
pub fn price_quadrature(contract: &AsianContract) -> Result<QuadraturePrice, AsianError> {
    contract.validate()?;
    if contract.sigma == 0.0 {
        let price = closed_form(contract)?;
        return Ok(QuadraturePrice { price, error: 0.0, panels: 0 });
    }
    let group = Group::new(BlockStructure::new(vec![1, 1]).expect("valid blocks"), asian_drift());
    let a0 = DMatrix::from_element(1, 1, 0.5 * contract.sigma * contract.sigma);
    let kernel = GaussianKernel::divergence_form(group.clone(), &a0)?;
    let coarse = integrate(contract, &kernel, 8)?;
    let fine = integrate(contract, &kernel, 16)?;
    Ok(QuadraturePrice { price: fine, error: (fine - coarse).abs(), panels: 16 })
}

fn asian_drift() -> DriftMatrix {
    DriftMatrix::from_rows(&[vec![0.0, 0.0], vec![-1.0, 0.0]])
}

fn integrate(contract: &AsianContract, kernel: &GaussianKernel, panels: usize) -> Result<f64, AsianError> {
    let t = contract.maturity;
    let mu = contract.drift();
    let x0 = contract.start();
    let pole = GroupPoint::new(x0.to_vec(), 0.0);
    let cov = kernel.covariance(t)?;
    let centre = kernel.group().exp_drift_apply(t, &x0);
    let shift = [mu * t, 0.5 * mu * t * t];
    let mean = [centre[0] + shift[0], centre[1] + shift[1]];
    let sd = [cov.c[(0, 0)].sqrt(), cov.c[(1, 1)].sqrt()];
    let axis = |d: usize, kink: Option<f64>| {
        let (lo, hi) = (mean[d] - QUAD_SDS * sd[d], mean[d] + QUAD_SDS * sd[d]);
        let mut breaks = vec![lo, hi];
        if let Some(k) = kink.filter(|k| *k > lo && *k < hi) {
            breaks.insert(1, k);
        }
        panel_rule(&breaks, panels)
    };
    let kink = match contract.payoff {
        Payoff::Unit => None,
        _ => Some(contract.period * contract.strike.ln()),
    };
    let rule1 = axis(0, None);
    let rule2 = axis(1, kink);
    let mut acc = 0.0;
    for &(x2, w2) in &rule2 {
        let g = contract.payoff_of(x2);
        if g == 0.0 {
            continue;
        }
        let mut inner = 0.0;
        for &(x1, w1) in &rule1 {
            let z = GroupPoint::new(vec![x1 - shift[0], x2 - shift[1]], t);
            inner += w1 * kernel.eval(&z, &pole)?;
        }
        acc += w2 * g * inner;
    }
    Ok((-contract.rate * t).exp() * acc)
}

/// Gauss–Legendre nodes on `panels` equal panels between consecutive breakpoints.
fn panel_rule(breaks: &[f64], panels: usize) -> Vec<(f64, f64)> {
    let rule = gauss_legendre(QUAD_NODES);
    let mut out = Vec::new();
    for w in breaks.windows(2) {
        let step = (w[1] - w[0]) / panels as f64;
        for p in 0..panels {
            let a = w[0] + p as f64 * step;
            let half = 0.5 * step;
            out.extend(rule.iter().map(|&(x, wt)| (a + half * (1.0 + x), wt * half)));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McPrice {
    pub price: f64,
    pub se: f64,
    pub config: McConfig,
}

/// Euler–Maruyama on the transformed SDE with Feynman–Kac discounting.
pub fn price_mc(contract: &AsianContract, cfg: &McConfig) -> Result<McPrice, AsianError> {
    contract.validate()?;
    let op = contract.operator_spec().resolve(Path::new("."));
    let op = match op {
        Ok(op) => op,
        // σ = 0 leaves no diffusion to declare; the path is deterministic.
        Err(_) if contract.sigma == 0.0 => {
            return Ok(McPrice { price: closed_form(contract)?, se: 0.0, config: *cfg });
        }
        Err(e) => return Err(e.into()),
    };
    let ens = simulate(&op, &contract.start(), 0.0, &[contract.maturity], cfg)?;
    let p = ens.paths();
    let weights = ens.weights.as_ref().map(|w| &w[0]);
    let values: Vec<f64> =
        (0..p).map(|i| weights.map_or(1.0, |w| w[i]) * contract.payoff_of(ens.state(0, i)[1])).collect();
    let mean = values.iter().sum::<f64>() / p as f64;
    let var = if p > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (p - 1) as f64 } else { 0.0 };
    Ok(McPrice { price: mean, se: (var / p as f64).sqrt(), config: *cfg })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsianReport {
    pub contract: AsianContract,
    pub derivation: Vec<String>,
    pub closed_form: f64,
    pub quadrature: QuadraturePrice,
    pub monte_carlo: McPrice,
    pub gap: f64,
    /// `3·SE + quadrature error`.
    pub budget: f64,
}

/// Prices by quadrature and by Monte Carlo and checks that they agree.
pub fn price_report(contract: &AsianContract, cfg: &McConfig) -> Result<AsianReport, AsianError> {
    let quadrature = price_quadrature(contract)?;
    let monte_carlo = price_mc(contract, cfg)?;
    let gap = (quadrature.price - monte_carlo.price).abs();
    let budget = 3.0 * monte_carlo.se + quadrature.error + 1e-12 * quadrature.price.abs().max(1.0);
    if gap > budget {
        return Err(AsianError::Inconsistent {
            quadrature: quadrature.price,
            monte_carlo: monte_carlo.price,
            gap,
            budget,
        });
    }
    let derivation = vec![
        "x1 = log S, x2 = integral of log S over the averaging period".to_string(),
        "dx1 = (r - sigma^2/2) dt + sigma dW, dx2 = x1 dt".to_string(),
        format!(
            "operator: A0 = {}, B = [[0,0],[-1,0]], a = {}, c = {}",
            0.5 * contract.sigma * contract.sigma,
            contract.drift(),
            -contract.rate
        ),
        "payoff on G = exp(x2(T) / period), discounted by exp(c T)".to_string(),
    ];
    Ok(AsianReport {
        contract: *contract,
        derivation,
        closed_form: closed_form(contract)?,
        quadrature,
        monte_carlo,
        gap,
        budget,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn contract() -> AsianContract {
        AsianContract::fresh(100.0, 0.05, 0.3, 1.0, 100.0)
    }

    #[test]
    fn quadrature_matches_closed_form() {
        for payoff in [Payoff::Call, Payoff::Put, Payoff::Unit] {
            let c = AsianContract { payoff, accumulated: 0.7, period: 1.5, ..contract() };
            let q = price_quadrature(&c).unwrap();
            let exact = closed_form(&c).unwrap();
            assert!((q.price - exact).abs() < 1e-8 * exact.max(1.0), "{payoff:?} {} {exact}", q.price);
        }
    }

    #[test]
    fn unit_payoff_without_rate_is_one() {
        let c = AsianContract { payoff: Payoff::Unit, rate: 0.0, ..contract() };
        assert!((price_quadrature(&c).unwrap().price - 1.0).abs() < 1e-12);
        let m = price_mc(&c, &McConfig { paths: 1000, dt: 0.01, seed: 1 }).unwrap();
        assert_eq!(m.price, 1.0);
    }

    #[test]
    fn zero_volatility_is_deterministic() {
        let c = AsianContract { sigma: 0.0, strike: 90.0, ..contract() };
        // log G = log S₀ + rT/2 when σ = 0.
        let expected = (-0.05f64).exp() * (100.0 * (0.025f64).exp() - 90.0);
        assert!((closed_form(&c).unwrap() - expected).abs() < 1e-12);
        assert_eq!(price_quadrature(&c).unwrap().price, closed_form(&c).unwrap());
        assert_eq!(price_mc(&c, &McConfig { paths: 10, dt: 0.01, seed: 1 }).unwrap().price, closed_form(&c).unwrap());
    }

    #[test]
    fn monte_carlo_agrees() {
        let rep = price_report(&contract(), &McConfig { paths: 40_000, dt: 0.01, seed: 3 }).unwrap();
        assert!(rep.gap <= rep.budget);
        assert!(rep.monte_carlo.se < 0.1);
    }

    #[test]
    fn transformed_operator_is_canonical() {
        let op = contract().operator_spec().resolve(Path::new(".")).unwrap();
        assert_eq!(op.group.q(), 4);
    }
}
