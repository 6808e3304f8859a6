//! Fit the chain-ladder body and generalized Bondy tail to one triangle and
//! simulate developed ultimate loss ratios.
//!
//! ```sh
//! cargo run --release --example develop
//! ```

use runoff::dev::{simulate_development, BondyModel, ChainLadderModel, DevConfig};
use runoff::inference::{divergence_fraction, ess, rhat, sample, SamplerConfig};
use runoff::synth::{corpus, CorpusSpec};

fn main() -> runoff::Result<()> {
    // One synthetic 10x10 square, masked to the run-off an analyst would see.
    let square = corpus(&CorpusSpec::random_walk(1, 10, 7))?.remove(0);
    let triangle = square.to_runoff(10)?;
    println!("triangle {} ({} observed cells)", triangle.id(), triangle.n_cells());

    // Body trained on lags 2..=5, tail on 6..=10, simulated out to lag 40.
    let dev = DevConfig { tau: 5, rho: (6, 10), j_max: 40, kappa: 1.0 };
    let sampler = SamplerConfig { chains: 4, warmup: 500, draws: 500, seed: 1, ..Default::default() };

    let body_model = ChainLadderModel::new(&triangle, &dev)?;
    let body = sample(&body_model, &sampler)?;
    let tail_model = BondyModel::new(&triangle, &dev)?;
    let tail = sample(&tail_model, &sampler.clone().with_seed(2))?;

    println!("\nposterior link ratios (body) and tail parameters:");
    for j in 1..=4 {
        let name = format!("log_alpha[{j}]");
        let alpha: Vec<f64> = body.quantity_draws(&name)?.iter().map(|v| v.exp()).collect();
        let (mean, sd) = runoff::math::mean_sd(&alpha);
        println!("  alpha_{j}: {mean:.3} +- {sd:.3}  (R-hat {:.3})", rhat(&body, &name)?);
    }
    for name in ["omega", "beta"] {
        println!(
            "  {name}: {:.3} +- {:.3}  (R-hat {:.3}, ESS {:.0})",
            tail.mean(name)?,
            tail.sd(name)?,
            rhat(&tail, name)?,
            ess(&tail, name)?
        );
    }
    println!(
        "  divergent transitions: body {:.2}%, tail {:.2}%",
        100.0 * divergence_fraction(&body),
        100.0 * divergence_fraction(&tail)
    );

    let summary = simulate_development(&body, &tail, &triangle, &dev, 3)?;
    println!("\ndeveloped ultimate loss ratios (posterior mean +- sd):");
    for i in 1..=summary.n_accident_years() {
        let observed = triangle.latest_lag(i);
        println!(
            "  year {i:2} (observed to lag {observed:2}): {:.3} +- {:.3}",
            summary.means[i - 1],
            summary.sds[i - 1]
        );
    }
    // The true ultimates exist in the synthetic square for comparison.
    println!("\ntrue ultimates from the generator:");
    for i in 1..=10 {
        println!("  year {i:2}: {:.3}", square.cell(i, 10).unwrap() / square.premium(i));
    }
    Ok(())
}
