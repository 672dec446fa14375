//! Fixed, seeded problems shared by the benchmarks.

use alo_core::{simulate, Dataset, DesignSpec, LossFamily, Penalty, Result, Structure, TruthSpec, ValueLaw};

pub struct Fixture {
    pub ds: Dataset,
    pub family: LossFamily,
    pub penalty: Penalty,
    /// Descending, ready for a warm-started path.
    pub lambdas: Vec<f64>,
}

fn build(
    family: LossFamily,
    penalty: Penalty,
    n: usize,
    p: usize,
    structure: Structure,
    lambdas: (f64, f64, usize),
    seed: u64,
) -> Result<Fixture> {
    let truth = TruthSpec { k: (n / 10).max(1), value_law: ValueLaw::Laplace01, seed };
    let sim = simulate(&family, &DesignSpec::new(n, p, structure), &truth, 1.0, seed)?;
    let ds = Dataset::new(sim.x, sim.y)?;
    let lambdas = alo_core::lambda_grid(lambdas.0, lambdas.1, lambdas.2, true)?;
    Ok(Fixture { ds, family, penalty, lambdas })
}

/// Logistic lasso at `n = p`, Toeplitz rows, grid 0.1..10.
pub fn logistic_lasso(n: usize, seed: u64) -> Result<Fixture> {
    build(LossFamily::LogisticBernoulli, Penalty::L1, n, n, Structure::Toeplitz(0.9), (0.1, 10.0, 10), seed)
}

/// Gaussian ridge, grid 1..100.
pub fn gaussian_ridge(n: usize, p: usize, seed: u64) -> Result<Fixture> {
    build(LossFamily::GaussianHalfSquared, Penalty::Ridge, n, p, Structure::Spiked(0.5), (1.0, 100.0, 10), seed)
}

/// Poisson elastic net, spiked rows, grid 1..100.
pub fn poisson_elastic_net(n: usize, p: usize, seed: u64) -> Result<Fixture> {
    let pen = Penalty::ElasticNet { mix: 0.5 };
    build(LossFamily::PoissonExpLink, pen, n, p, Structure::Spiked(0.5), (1.0, 100.0, 10), seed)
}
