//! A small coverage experiment driven by a JSON config, written to a
//! temporary directory.

use mwdml::harness::{emit_reports, run_monte_carlo, McConfig};

const CONFIG: &str = r#"{
  "dgp": { "family": "plr" },
  "model": { "name": "plr" },
  "learner": { "name": "lasso" },
  "estimation": { "theta_start": [0.0] },
  "shapes": [[15, 15], [30, 30]],
  "replications": 60,
  "seed": 9
}"#;

fn main() -> mwdml::Result<()> {
    let config = McConfig::from_json(CONFIG)?;
    let run = run_monte_carlo(&config, None)?;
    for s in &run.summary.shapes {
        println!(
            "{:?}: used {}/{}, bias {:+.4}, rmse {:.4}, coverage {:.3} ± {:.3}, KS {:.3}",
            s.shape, s.used, s.replications, s.mean_bias[0], s.rmse[0], s.coverage, s.coverage_se, s.ks_distance
        );
    }
    let dir = std::env::temp_dir().join("mwdml-monte-carlo-example");
    std::fs::create_dir_all(&dir)?;
    emit_reports(&run, &config, &dir)?;
    println!("reports in {}", dir.display());
    Ok(())
}
