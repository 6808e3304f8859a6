//! Feed developed ultimates into the state-space forecasters and project
//! the next three accident years, with measurement error carrying the
//! development uncertainty through.
//!
//! ```sh
//! cargo run --release --example forecast
//! ```

use runoff::dev::{simulate_development, BondyModel, ChainLadderModel, DevConfig};
use runoff::forecast::{
    forecast, ForecastKind, ForecastModel, ForecastPriors, MeasurementErrorInput,
};
use runoff::inference::{sample, SamplerConfig};
use runoff::math::quantile;
use runoff::synth::{corpus, CorpusSpec};

fn main() -> runoff::Result<()> {
    let square = corpus(&CorpusSpec::random_walk(1, 10, 99))?.remove(0);
    let triangle = square.to_runoff(10)?;
    let dev = DevConfig { tau: 5, rho: (6, 10), j_max: 40, kappa: 1.0 };
    let sampler = SamplerConfig { chains: 4, warmup: 500, draws: 500, seed: 5, ..Default::default() };

    // Development stage.
    let body = sample(&ChainLadderModel::new(&triangle, &dev)?, &sampler)?;
    let tail = sample(&BondyModel::new(&triangle, &dev)?, &sampler.clone().with_seed(6))?;
    let ultimates = simulate_development(&body, &tail, &triangle, &dev, 7)?;

    // Measurement-error inputs: posterior mean and sd per accident year,
    // with the empirical prior anchoring the latent true ratios.
    let me = MeasurementErrorInput::from_summary(&ultimates, 0.7, 0.2)?;
    println!("development outputs feeding the forecaster:");
    for i in 0..me.n_years() {
        println!("  year {:2}: {:.3} +- {:.3}", i + 1, me.means()[i], me.sds()[i]);
    }

    for kind in [ForecastKind::RandomWalk, ForecastKind::MeanReversion] {
        let model = ForecastModel::new(
            kind,
            me.clone(),
            triangle.premiums().to_vec(),
            ForecastPriors::defaults(1.0),
        )?;
        let draws = sample(&model, &sampler.clone().with_seed(8))?;
        let premiums_future = vec![triangle.premium(10); 3];
        let f = forecast(&draws, kind, 3, &premiums_future, 9)?;
        println!("\n{} forecast of the ultimate loss ratio:", kind.label());
        for (h, ratios) in f.ratios.iter().enumerate() {
            let mut sorted = ratios.clone();
            sorted.sort_by(|a, b| a.total_cmp(b));
            println!(
                "  year {:2}: median {:.3}, 90% interval [{:.3}, {:.3}]",
                11 + h,
                quantile(&sorted, 0.5),
                quantile(&sorted, 0.05),
                quantile(&sorted, 0.95),
            );
        }
    }
    Ok(())
}
