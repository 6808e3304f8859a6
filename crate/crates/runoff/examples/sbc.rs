//! Desk-scale simulation-based calibration of the development models: draw
//! parameters from the prior, simulate triangles, refit, and check that the
//! rank histograms stay inside the exact 99% binomial band.
//!
//! ```sh
//! cargo run --release --example sbc
//! ```

use runoff::inference::SamplerConfig;
use runoff::validate::{run_sbc, SbcConfig};

fn main() -> runoff::Result<()> {
    let mut cfg = SbcConfig::dev_defaults(8, 100);
    cfg.sampler = SamplerConfig { chains: 2, warmup: 400, draws: 500, ..Default::default() };
    cfg.thin_to = 100;
    cfg.seed = 17;

    println!(
        "running {} simulations of an {}x{} triangle (tau = {}, rho = {:?})...",
        cfg.n_sims, cfg.n_years, cfg.n_years, cfg.dev.tau, cfg.dev.rho
    );
    let report = run_sbc(&cfg)?;
    println!(
        "kept {} of {} simulations (excluded {} for convergence), max rank {}",
        report.n_sims - report.n_excluded,
        report.n_sims,
        report.n_excluded,
        report.max_rank
    );
    println!("\nper-quantity 99% band violations ({} bins):", cfg.bins);
    for s in &report.summaries {
        let bar: String = s
            .histogram
            .iter()
            .map(|&c| {
                if c < s.band.0 {
                    'v'
                } else if c > s.band.1 {
                    '^'
                } else {
                    '.'
                }
            })
            .collect();
        println!("  {:14} [{bar}] {} outside [{}, {}]", s.quantity, s.violated_bins, s.band.0, s.band.1);
    }
    if report.unreliable {
        println!("\nwarning: more than 20% of simulations excluded; report unreliable");
    }
    Ok(())
}
