//! Generate a demo corpus of full-square triangles and write it in the
//! long-CSV schema the CLI consumes.
//!
//! ```sh
//! cargo run --example make_corpus -- demo_triangles.csv
//! ```

use runoff::synth::{corpus, CorpusSpec};
use runoff::write_triangles;

fn main() -> runoff::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "demo_triangles.csv".to_string());

    // Two lines of business: a quick-developing book and a longer-tailed one.
    let mut triangles = Vec::new();
    let quick = CorpusSpec {
        line: "CA".to_string(),
        dev_factors: runoff::synth::default_pattern(10),
        ..CorpusSpec::random_walk(6, 10, 2024)
    };
    triangles.extend(corpus(&quick)?);
    let slow = CorpusSpec {
        line: "WC".to_string(),
        eps: 0.12,
        dev_factors: (2..=10).map(|j| 1.0 + 1.4 * 0.7f64.powi(j - 1)).collect(),
        ..CorpusSpec::random_walk(6, 10, 4048)
    };
    triangles.extend(corpus(&slow)?);

    write_triangles(&path, &triangles)?;
    println!("wrote {} triangles ({} cells) to {path}", triangles.len(), triangles.iter().map(|t| t.n_cells()).sum::<usize>());
    println!("columns: triangle_id, line, accident_year, dev_lag, cumulative_loss, earned_premium");
    Ok(())
}
