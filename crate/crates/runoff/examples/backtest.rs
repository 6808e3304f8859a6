//! Leave-future-out backtest on a synthetic corpus: dev fits per triangle,
//! hierarchical random-walk and mean-reversion forecasters per line, scores
//! on the held-out ultimates, and stacking on the test split.
//!
//! ```sh
//! cargo run --release --example backtest
//! ```

use runoff::backtest::{elpd_and_diff, run_backtest, BacktestConfig, Split};
use runoff::synth::{corpus, CorpusSpec};

fn main() -> runoff::Result<()> {
    let triangles = corpus(&CorpusSpec::random_walk(10, 8, 321))?;
    println!("corpus: {} full squares of {} accident years", triangles.len(), 8);

    let cfg = BacktestConfig::desk_scale(11);
    let out = run_backtest(&triangles, &cfg)?;

    println!("\nvalidation-split ELPD by model:");
    for model in out.scores.models() {
        println!("  {model:8} {:+.3}", out.scores.elpd(&model, Split::Validation, None));
    }
    let cmp = elpd_and_diff(&out.scores, "rw", "mr", Split::Validation, Some("SYN"))?;
    println!(
        "\nrw - mr on validation: diff {:+.3} (SE {:.3})",
        cmp.diff, cmp.se
    );
    for (line, w) in &out.weights {
        println!("\nstacking weights for line {line} (fit on the test split):");
        for (name, weight) in w.model_names.iter().zip(&w.weights) {
            println!("  {name:4} {weight:.3}");
        }
        println!("  stacked objective {:.3} after {} iterations", w.objective, w.iterations);
    }
    println!("\nvalidation percentiles of the truth (calibration check):");
    for model in out.scores.models() {
        let percs = out.scores.percentiles(&model, Split::Validation, None);
        let below = percs.iter().filter(|&&p| p < 0.5).count();
        println!("  {model:8} {below}/{} targets below the predictive median", percs.len());
    }
    if !out.failures.is_empty() {
        println!("\nfailures: {:?}", out.failures);
    }
    Ok(())
}
