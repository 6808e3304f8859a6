//! Underwriting cashflows: walk a forecasted ultimate back through the
//! fitted age-to-age factors, keeping parameter draws coupled.
//!
//! ```sh
//! cargo run --release --example cashflows
//! ```

use runoff::cashflow::{cashflow_summary, prediction_factors, walkback};
use runoff::dev::{simulate_development, BondyModel, ChainLadderModel, DevConfig};
use runoff::forecast::{
    forecast, ForecastKind, ForecastModel, ForecastPriors, MeasurementErrorInput,
};
use runoff::inference::{sample, SamplerConfig};
use runoff::synth::{corpus, CorpusSpec};

fn main() -> runoff::Result<()> {
    let square = corpus(&CorpusSpec::random_walk(1, 10, 55))?.remove(0);
    let triangle = square.to_runoff(10)?;
    let dev = DevConfig { tau: 5, rho: (6, 10), j_max: 40, kappa: 1.0 };
    let sampler = SamplerConfig { chains: 2, warmup: 500, draws: 500, seed: 21, ..Default::default() };

    let body = sample(&ChainLadderModel::new(&triangle, &dev)?, &sampler)?;
    let tail = sample(&BondyModel::new(&triangle, &dev)?, &sampler.clone().with_seed(22))?;
    let ultimates = simulate_development(&body, &tail, &triangle, &dev, 23)?;

    let me = MeasurementErrorInput::from_summary(&ultimates, 0.7, 0.2)?;
    let model = ForecastModel::new(
        ForecastKind::RandomWalk,
        me,
        triangle.premiums().to_vec(),
        ForecastPriors::defaults(1.0),
    )?;
    let fit = sample(&model, &sampler.clone().with_seed(24))?;
    let premium_next = triangle.premium(10);
    let next_year = forecast(&fit, ForecastKind::RandomWalk, 1, &[premium_next], 25)?;

    // Couple the ultimate draws with the dev-factor draws by index.
    let factors = prediction_factors(&body, &tail, triangle.n_dev_lags(), dev.tau)?;
    let n = next_year.losses[0].len().min(factors.len());
    let flows = walkback(
        triangle.id(),
        11,
        premium_next,
        &next_year.losses[0][..n],
        &factors[..n],
    )?;
    let summary = cashflow_summary(&flows, &[0.05, 0.5, 0.95])?;

    println!("paid-loss fan for future accident year 11 (premium {premium_next:.0}):");
    println!("  lag     5%      50%      95%    median net");
    for j in 1..=flows.n_lags() {
        println!(
            "  {j:2}  {:8.1} {:8.1} {:8.1}  {:+9.1}",
            summary.paid[j - 1][0],
            summary.paid[j - 1][1],
            summary.paid[j - 1][2],
            summary.net[j - 1][1],
        );
    }
    println!("\nthe lag-10 value reproduces the forecasted ultimate draw exactly per draw");
    Ok(())
}
