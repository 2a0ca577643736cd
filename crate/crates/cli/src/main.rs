//! `cornercase`: sample, simulate, train, evaluate and compare
//! performance-boundary estimates from the command line.
//!
//! Stage commands operate on the output directory layout described in
//! `cornercase::campaign`. Without dataset names they process every data set
//! of the campaign config (MC100, MC1000, LHC100 and LHC1000 by default).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cornercase::boundary::BoundaryEstimate;
use cornercase::campaign::{
    compare_boundaries, train_model, Campaign, CampaignConfig, CampaignError, DatasetConfig,
    DatasetManifest, SliceConfig,
};
use cornercase::gpc::GpcModel;
use cornercase::io;
use cornercase::sampling::{split_items, DesignSpec, Method};
use cornercase::scenario::{
    detection_distance, oracle, oracle_margin, required_gap, simulate, ScenarioParams,
};

#[derive(Parser, Debug)]
#[command(name = "cornercase", version, about = "Performance-boundary identification with GP classification")]
struct Cli {
    /// Campaign JSON, or a physics config (JSON or key = value).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; per-dataset seeds are derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for labeling and grid prediction (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw, simulate and split data sets.
    Sample {
        names: Vec<String>,
        /// Add an ad-hoc data set drawn with this method (mc or lhc).
        #[arg(long, requires = "n")]
        method: Option<String>,
        #[arg(long)]
        n: Option<usize>,
        /// Name of the ad-hoc data set (default: METHOD + N, e.g. LHC200).
        #[arg(long, requires = "method")]
        name: Option<String>,
    },
    /// Optimize hyperparameters and fit the classifier.
    Train {
        names: Vec<String>,
        /// Train on a labeled CSV instead of a campaign data set.
        #[arg(long, conflicts_with = "names")]
        input: Option<PathBuf>,
        /// With --input: hold out 10% (seeded) and write it beside the model.
        #[arg(long, requires = "input")]
        split: bool,
        /// With --input: model output path (default: OUT/models/STEM.json).
        #[arg(long, requires = "input")]
        model_out: Option<PathBuf>,
    },
    /// Score models on their test sets.
    Evaluate {
        names: Vec<String>,
        /// Evaluate this model file instead of a campaign model.
        #[arg(long, requires = "test", conflicts_with = "names")]
        model: Option<PathBuf>,
        #[arg(long, requires = "model")]
        test: Option<PathBuf>,
    },
    /// Extract the p = 0.5 boundary, corner cases and grid entropy.
    Boundary { names: Vec<String> },
    /// Hausdorff distance between two boundaries (default: the configured pairs).
    Compare {
        /// Two data set names.
        #[arg(num_args = 0..=2)]
        names: Vec<String>,
        /// Compare two boundary CSV files instead.
        #[arg(long, num_args = 2, conflicts_with = "names")]
        files: Option<Vec<PathBuf>>,
    },
    /// Probability slice at a fixed parameter value, as CSV and SVG.
    Slice {
        names: Vec<String>,
        #[arg(long)]
        dim: Option<String>,
        #[arg(long)]
        value: Option<f64>,
        #[arg(long)]
        band: Option<f64>,
    },
    /// Aggregate all stage outputs into report.json and report.md.
    Report,
    /// Run every stage for every data set.
    Run,
    /// Simulate a single scenario and print the trace.
    Simulate {
        speed_ego: f64,
        speed_target: f64,
        aperture_angle: f64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_config(cli: &Cli) -> Result<CampaignConfig, CampaignError> {
    let mut config = match &cli.config {
        Some(p) => CampaignConfig::load(p)?,
        None => CampaignConfig::default(),
    };
    if let Some(s) = cli.seed {
        config.master_seed = s;
    }
    if let Some(o) = &cli.out {
        config.out_dir = o.clone();
    }
    Ok(config)
}

/// Makes data sets sampled ad hoc in earlier runs addressable by name.
fn adopt_sampled(config: &mut CampaignConfig, names: &[String]) -> Result<(), CampaignError> {
    for name in names {
        if config.datasets.iter().any(|d| &d.name == name) {
            continue;
        }
        let path = config.out_dir.join(format!("data/{name}.json"));
        if path.is_file() {
            let m: DatasetManifest = io::read_json(&path)?;
            config.datasets.push(dataset_from_design(name, &m.design));
        }
    }
    Ok(())
}

fn dataset_from_design(name: &str, d: &DesignSpec) -> DatasetConfig {
    DatasetConfig {
        name: name.to_string(),
        method: d.method,
        n_total: d.n_total,
        train_fraction: d.train_fraction,
        seed: Some(d.seed),
        minimax_iters: d.minimax_iters,
    }
}

fn run(cli: Cli) -> Result<(), CampaignError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CampaignError::Usage(format!("--threads {n}: {e}")))?;
    }
    let mut config = load_config(&cli)?;
    match cli.command {
        Command::Sample {
            mut names,
            method,
            n,
            name,
        } => {
            if let (Some(method), Some(n)) = (method, n) {
                let method: Method = method.parse().map_err(CampaignError::Usage)?;
                let name = name.unwrap_or_else(|| {
                    let tag = match method {
                        Method::MonteCarlo => "MC",
                        Method::LatinHypercube => "LHC",
                    };
                    format!("{tag}{n}")
                });
                config.datasets.retain(|d| d.name != name);
                config.comparisons.retain(|(a, b)| a != &name && b != &name);
                config.datasets.push(DatasetConfig::new(&name, method, n));
                names = vec![name];
            }
            let campaign = Campaign::new(config)?;
            for m in campaign.sample(&names)? {
                println!(
                    "{}: {} points ({} train, {} test, {} collisions) seed {}",
                    m.name,
                    m.design.n_total,
                    m.n_train,
                    m.n_test,
                    m.n_collisions,
                    m.design.seed
                );
            }
        }
        Command::Train {
            names,
            input: Some(input),
            split,
            model_out,
        } => {
            let _ = names;
            train_file(&config, &input, split, model_out)?;
        }
        Command::Train { names, .. } => {
            adopt_sampled(&mut config, &names)?;
            let campaign = Campaign::new(config)?;
            for t in campaign.train(&names)? {
                println!(
                    "{}: log marginal {:.6}, lengthscales {:?}, signal variance {:.4}, residual {:.2e}",
                    t.name,
                    t.log_marginal,
                    t.kernel.lengthscales,
                    t.kernel.signal_variance,
                    t.stationarity_residual
                );
            }
        }
        Command::Evaluate {
            model: Some(model),
            test: Some(test),
            ..
        } => {
            let model = read_model(&model)?;
            let metrics = model.evaluate(&io::read_labeled_csv(&test)?)?;
            println!("{}", serde_json::to_string_pretty(&metrics).expect("serializable"));
        }
        Command::Evaluate { names, .. } => {
            adopt_sampled(&mut config, &names)?;
            let campaign = Campaign::new(config)?;
            for (name, m) in campaign.evaluate(&names)? {
                println!(
                    "{name}: accuracy {:.3} ({} of {} misclassified)",
                    m.accuracy, m.n_misclassified, m.n_test
                );
            }
        }
        Command::Boundary { names } => {
            adopt_sampled(&mut config, &names)?;
            let campaign = Campaign::new(config)?;
            for b in campaign.boundary(&names)? {
                println!(
                    "{}: {} boundary points, mean entropy {:.4}",
                    b.name, b.n_points, b.mean_predictive_entropy
                );
            }
        }
        Command::Compare {
            names,
            files: Some(files),
        } => {
            let _ = names;
            let campaign = Campaign::new(config)?;
            let load = |p: &Path| -> Result<BoundaryEstimate, CampaignError> {
                let (points, probabilities) =
                    io::read_boundary_csv(p, campaign.config.bounds.ndim())?;
                Ok(BoundaryEstimate {
                    points,
                    probabilities,
                    grid: campaign.grid(),
                    model_id: p.display().to_string(),
                })
            };
            let c = compare_boundaries(&load(&files[0])?, &load(&files[1])?)?;
            print_comparison(&c);
        }
        Command::Compare { names, .. } => {
            let pairs = match names.len() {
                0 => Vec::new(),
                2 => vec![(names[0].clone(), names[1].clone())],
                _ => return Err(CampaignError::Usage("compare takes two data set names".into())),
            };
            adopt_sampled(&mut config, &names)?;
            let campaign = Campaign::new(config)?;
            for c in campaign.compare(&pairs)? {
                print_comparison(&c);
            }
        }
        Command::Slice {
            names,
            dim,
            value,
            band,
        } => {
            adopt_sampled(&mut config, &names)?;
            let defaults = config.slice.clone();
            let settings = SliceConfig {
                dim: dim.unwrap_or(defaults.dim),
                value: value.unwrap_or(defaults.value),
                band: band.unwrap_or(defaults.band),
            };
            let campaign = Campaign::new(config)?;
            for s in campaign.slice(&names, &settings)? {
                println!(
                    "{}: {} = {} with {} overlay points (band ±{})",
                    s.name, s.dim, s.value, s.overlay_points, s.band
                );
            }
        }
        Command::Report => {
            let report = Campaign::new(config)?.report()?;
            println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
        }
        Command::Run => {
            let campaign = Campaign::new(config)?;
            let report = campaign.run_all()?;
            println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
        }
        Command::Simulate {
            speed_ego,
            speed_target,
            aperture_angle,
        } => {
            config
                .physics
                .validate()
                .map_err(|e| CampaignError::Usage(e.to_string()))?;
            let p = ScenarioParams::new(speed_ego, speed_target, aperture_angle);
            let c = &config.physics;
            let trace = simulate(&p, c)?;
            let out = serde_json::json!({
                "params": p,
                "detection_distance": detection_distance(&p, c),
                "required_gap": required_gap(&p, c),
                "oracle_margin": oracle_margin(&p, c),
                "oracle": oracle(&p, c),
                "trace": trace,
            });
            println!("{}", serde_json::to_string_pretty(&out).expect("serializable"));
        }
    }
    Ok(())
}

fn read_model(path: &Path) -> Result<GpcModel, CampaignError> {
    let text = std::fs::read_to_string(path).map_err(|source| io::IoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(GpcModel::from_json(&text)?)
}

fn train_file(
    config: &CampaignConfig,
    input: &Path,
    split: bool,
    model_out: Option<PathBuf>,
) -> Result<(), CampaignError> {
    config.validate()?;
    let samples = io::read_labeled_csv(input)?;
    let stem = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".into());
    let model_path =
        model_out.unwrap_or_else(|| config.out_dir.join(format!("models/{stem}.json")));
    let seed = cornercase::campaign::derive_seed(config.master_seed, &stem);
    let train = if split {
        let spec = DesignSpec::new(Method::MonteCarlo, samples.len(), seed);
        let (train, test) = split_items(&samples, &spec)?;
        let test_path = model_path.with_file_name(format!("{stem}_test.csv"));
        io::write_labeled_csv(&test_path, &test)?;
        println!("held out {} points to {}", test.len(), test_path.display());
        train
    } else {
        samples
    };
    let hyper_seed = cornercase::campaign::derive_seed(config.master_seed, &format!("{stem}/hyperopt"));
    let (model, _) = train_model(&config.bounds, &train, &config.hyperopt, hyper_seed)?;
    io::write_atomic(&model_path, model.to_json().as_bytes())?;
    println!(
        "{}: log marginal {:.6}, residual {:.2e}",
        model_path.display(),
        model.log_marginal,
        model.stationarity_residual()
    );
    Ok(())
}

fn print_comparison(c: &cornercase::campaign::Comparison) {
    let f = |v: Option<f64>| v.map(|d| format!("{d:.6}")).unwrap_or_else(|| "n/a (empty boundary)".into());
    println!("{} vs {}: raw {}, normalized {}", c.a, c.b, f(c.raw), f(c.normalized));
}
