use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mwdml::harness::{self, McConfig};
use mwdml::partition::{build_transversal_partition, verify_partition, write_partition_csv};
use mwdml::{Error, Mask, Result, Shape};

#[derive(Parser)]
#[command(name = "mwdml", version, about = "Debiased GMM and empirical-process diagnostics for multiway clustered arrays")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// JSON configuration document.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one array from the configured design and write it as CSV.
    Simulate {
        #[arg(long, value_delimiter = ',')]
        shape: Option<Vec<usize>>,
    },
    /// Split I_{N,e} into transversal groups.
    Partition {
        #[arg(long, value_delimiter = ',', required = true)]
        shape: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        mask: Vec<u8>,
    },
    /// Hoeffding components of a field, or of a threshold indicator.
    Decompose {
        #[arg(long, value_delimiter = ',')]
        shape: Option<Vec<usize>>,
        #[arg(long, default_value = "y")]
        field: String,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Estimate θ on a CSV sample, or on one simulated array.
    Estimate {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        shape: Option<Vec<usize>>,
    },
    /// Monte Carlo coverage experiment.
    Mc,
    /// Maximal-inequality scaling check on a threshold grid.
    Bounds,
}

fn load(global: &Global) -> Result<McConfig> {
    let path = global.config.as_ref().ok_or_else(|| Error::Config("--config is required".into()))?;
    let text = std::fs::read_to_string(path)?;
    let mut config = McConfig::from_json(&text)?;
    if let Some(seed) = global.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn shape_or_first(config: &McConfig, shape: Option<Vec<usize>>) -> Result<Shape> {
    match shape {
        Some(d) => Shape::new(d).map_err(|e| Error::Config(e.to_string())),
        None => Ok(config.shape_list()?.remove(0)),
    }
}

fn create(dir: &Path, name: &str) -> Result<std::io::BufWriter<std::fs::File>> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    eprintln!("writing {}", path.display());
    Ok(std::io::BufWriter::new(std::fs::File::create(path)?))
}

fn write_json<T: serde::Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::io::Write::write_all(&mut create(dir, name)?, text.as_bytes())?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    if let Some(t) = g.threads {
        rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global().ok();
    }
    match cli.command {
        Command::Simulate { shape } => {
            let config = load(g)?;
            let spec = config.dgp.spec(shape_or_first(&config, shape)?)?;
            let sample = mwdml::se_array::simulate(&spec, config.seed)?;
            sample.write_csv(create(&g.out, "sample.csv")?)?;
        }
        Command::Partition { shape, mask } => {
            let shape = Shape::new(shape).map_err(|e| Error::Config(e.to_string()))?;
            let mask = Mask::from_flags(&mask).map_err(|e| Error::Config(e.to_string()))?;
            let p = build_transversal_partition(&shape, mask)?;
            let report = verify_partition(&p);
            println!("{} groups; covers={} disjoint={} transversal={} sizes={}", p.groups.len(), report.covers, report.disjoint, report.transversal, report.group_size_ok);
            write_partition_csv(&p, create(&g.out, "partition.csv")?)?;
        }
        Command::Decompose { shape, field, threshold } => {
            let config = load(g)?;
            let shape = shape_or_first(&config, shape)?;
            let h = harness::run_decompose(&config, shape, config.seed, &field, threshold)?;
            let mut wtr = csv::Writer::from_writer(create(&g.out, "decomposition.csv")?);
            wtr.write_record(["mask", "size", "value"])?;
            for t in &h.terms {
                wtr.write_record([t.mask.to_string(), t.size.to_string(), t.value[0].to_string()])?;
            }
            wtr.flush()?;
            println!("reconstruction residual {:e}", h.reconstruction_residual());
            write_json(&g.out, "decomposition.json", &h)?;
        }
        Command::Estimate { data, shape } => {
            let config = load(g)?;
            let model = harness::build_model(&config)?;
            let sample = match data {
                Some(path) => mwdml::ClusteredSample::read_csv(std::fs::File::open(path)?)?,
                None => {
                    let spec = config.dgp.spec(shape_or_first(&config, shape)?)?;
                    mwdml::se_array::simulate(&spec, config.seed)?.without_latent()
                }
            };
            let oracle = harness::oracle_nuisance(&config.dgp.design, model.as_ref());
            let report = harness::estimate_sample(&config, model.as_ref(), &sample, oracle.as_ref())?;
            for (j, (t, ci)) in report.fit.theta.iter().zip(&report.intervals).enumerate() {
                println!(
                    "theta_{} = {t} (se {}, {}% CI [{}, {}])",
                    j + 1,
                    report.variance.std_errors[j],
                    config.level * 100.0,
                    ci.lower,
                    ci.upper
                );
            }
            write_json(&g.out, "estimate.json", &report)?;
        }
        Command::Mc => {
            let config = load(g)?;
            let run = harness::run_monte_carlo(&config, g.threads)?;
            for s in &run.summary.shapes {
                println!(
                    "shape {:?}: coverage {:.3} (se {:.3}), bias {:.4}, rmse {:.4}, used {}/{}",
                    s.shape, s.coverage, s.coverage_se, s.mean_bias[0], s.rmse[0], s.used, s.replications
                );
            }
            let (csv, json) = harness::emit_reports(&run, &config, &g.out)?;
            eprintln!("wrote {} and {}", csv.display(), json.display());
        }
        Command::Bounds => {
            let config = load(g)?;
            let report = harness::run_bounds(&config)?;
            report.write_csv(create(&g.out, "bounds.csv")?)?;
            for s in &report.summaries {
                for (form, t) in [("global", &s.global), ("local", &s.local)] {
                    println!(
                        "mask {} {form}: max/median {:.3}, slope {:.3} ± {:.3}, bounded={} non_increasing={}",
                        s.mask,
                        t.max_ratio / t.median_ratio,
                        t.slope,
                        t.slope_se,
                        t.bounded,
                        t.non_increasing
                    );
                }
            }
            write_json(&g.out, "bounds_summary.json", &report)?;
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::Json(_)
        | Error::MissingField(_)
        | Error::InvalidShape(_)
        | Error::InvalidMask(_)
        | Error::UnsupportedDistribution(_) => 2,
        Error::Io(_) | Error::Csv(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
