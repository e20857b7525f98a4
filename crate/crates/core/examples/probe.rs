// scratch probe: full evaluation grid on the synthetic corpus
use std::time::Instant;

use sessioncf::eval::{run_experiment, ExperimentConfig, Method, RatingVariant};
use sessioncf::synth::{synthesize_playlog, SynthConfig};

fn main() {
    let t0 = Instant::now();
    let corpus = synthesize_playlog(&SynthConfig::new(200, 2000, 1.0, 1)).unwrap();
    println!(
        "corpus: {} events, {} users, {} songs  ({:.1?})",
        corpus.events().len(),
        corpus.n_users(),
        corpus.n_songs(),
        t0.elapsed()
    );

    let mut nmae_sum: std::collections::BTreeMap<String, f64> = Default::default();
    let seeds = [1u64, 2, 3];
    for seed in seeds {
        let config = ExperimentConfig {
            seed,
            ..Default::default()
        };
        let t1 = Instant::now();
        let report = run_experiment(&corpus, &config).unwrap();
        println!("--- seed {seed} ({:.1?}) ---", t1.elapsed());
        for row in &report.rows {
            println!(
                "{:12} {:14} nmae {:.5}±{:.5}  mae {:.4}  rmse {:.4}",
                row.method.id(),
                row.variant.label(),
                row.metrics.nmae,
                row.metrics.nmae_sd,
                row.metrics.mae,
                row.metrics.rmse
            );
            *nmae_sum
                .entry(format!("{}|{}", row.method.id(), row.variant.label()))
                .or_default() += row.metrics.nmae;
        }
    }
    println!("=== mean NMAE over {} seeds ===", seeds.len());
    for (key, sum) in &nmae_sum {
        println!("{key}  {:.5}", sum / seeds.len() as f64);
    }
    let get = |m: &str, v: &str| nmae_sum[&format!("{m}|{v}")] / seeds.len() as f64;
    for m in ["knn_cosine", "knn_pearson", "mf", "bmf"] {
        let pc = get(m, "playcount");
        let a7 = get(m, "session@0.70");
        println!(
            "6a {m}: playcount {pc:.5} vs a0.7 {a7:.5}  -> {}",
            if a7 < pc { "OK" } else { "FAIL" }
        );
    }
    for m in ["knn_upc", "knn_cosine", "knn_pearson"] {
        let (a5, a7, a9) = (get(m, "session@0.50"), get(m, "session@0.70"), get(m, "session@0.90"));
        println!(
            "6b {m}: a5 {a5:.5} a7 {a7:.5} a9 {a9:.5} -> {}",
            if a7 <= a5.max(a9) { "OK (not worst)" } else { "FAIL" }
        );
    }
    let (upc, cos) = (get("knn_upc", "session@0.70"), get("knn_cosine", "session@0.70"));
    println!(
        "6c upc {upc:.5} vs cosine {cos:.5} -> {} (improvement {:.2}%)",
        if upc <= cos { "OK" } else { "FAIL" },
        (cos - upc) / cos * 100.0
    );
    println!("total {:.1?}", t0.elapsed());
    let _ = Method::all();
    let _ = RatingVariant::PlayCount;
}
