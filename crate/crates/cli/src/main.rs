//! `fogtype` command-line pipeline.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fogtype::config::ExperimentConfig;
use fogtype::data::Domain;
use fogtype::features::FeatureSetId;

#[derive(Parser, Debug)]
#[command(name = "fogtype", version, about = "Freezing-of-gait event-type prediction pipeline")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand. Flags win over `--set`, which wins
/// over the config file.
#[derive(Args, Debug, Clone)]
struct Common {
    /// Flat key = value experiment config.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Data root in the competition layout.
    #[arg(long, env = "FOGTYPE_DATA", value_name = "DIR")]
    data: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Root seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override one config key.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum TypedDomain {
    Defog,
    Tdcsfog,
}

impl From<TypedDomain> for Domain {
    fn from(d: TypedDomain) -> Self {
        match d {
            TypedDomain::Defog => Domain::Defog,
            TypedDomain::Tdcsfog => Domain::Tdcsfog,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum AnyDomain {
    Defog,
    Tdcsfog,
    Notype,
}

impl From<AnyDomain> for Domain {
    fn from(d: AnyDomain) -> Self {
        match d {
            AnyDomain::Defog => Domain::Defog,
            AnyDomain::Tdcsfog => Domain::Tdcsfog,
            AnyDomain::Notype => Domain::Notype,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum SplitArg {
    Train,
    Test,
}

fn parse_feature_set(s: &str) -> Result<FeatureSetId, String> {
    s.parse().map_err(|e: fogtype::Error| e.to_string())
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic corpus under --out.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Check every file under the data root against its schema.
    Validate {
        #[command(flatten)]
        common: Common,
    },
    /// Dump per-trial feature matrices as CSV.
    Features {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_feature_set)]
        feature_set: Option<FeatureSetId>,
        /// Restrict to one domain (default: all).
        #[arg(long, value_enum)]
        domain: Option<AnyDomain>,
        #[arg(long, value_enum, default_value = "train")]
        split: SplitArg,
    },
    /// Cluster subjects for feature set G.
    ClusterSubjects {
        #[command(flatten)]
        common: Common,
        /// Number of clusters.
        #[arg(long)]
        clusters: Option<usize>,
    },
    /// Summary vectors, PCA and silhouette of Defog vs Tdcsfog trials.
    AnalyzeSeparation {
        #[command(flatten)]
        common: Common,
    },
    /// Train one model group for one domain and feature set.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        domain: TypedDomain,
        #[arg(long, value_parser = parse_feature_set)]
        feature_set: Option<FeatureSetId>,
    },
    /// Write per-timestep probabilities of a model group.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        domain: TypedDomain,
        #[arg(long, value_name = "PATH")]
        group_manifest: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
    /// Label Notype trials with a Defog model group.
    Pseudolabel {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        group_manifest: PathBuf,
    },
    /// Retrain a Defog model group with pseudo-labelled trials added.
    Retrain {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_feature_set)]
        feature_set: Option<FeatureSetId>,
        /// Directory written by `pseudolabel`.
        #[arg(long, value_name = "DIR")]
        pseudo: PathBuf,
    },
    /// Score pairs of Defog and Tdcsfog model groups and emit a report.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Defog group manifests, paired in order with --tdcsfog.
        #[arg(long, value_name = "PATH", required = true)]
        defog: Vec<PathBuf>,
        #[arg(long, value_name = "PATH", required = true)]
        tdcsfog: Vec<PathBuf>,
        #[arg(long, default_value = "Model groups")]
        title: String,
    },
    /// Finite-difference checks of every layer and the full toy model.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        /// Seeds per check.
        #[arg(long, default_value_t = 10)]
        seeds: u64,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Synth { common }
            | Command::Validate { common }
            | Command::Features { common, .. }
            | Command::ClusterSubjects { common, .. }
            | Command::AnalyzeSeparation { common }
            | Command::Train { common, .. }
            | Command::Predict { common, .. }
            | Command::Pseudolabel { common, .. }
            | Command::Retrain { common, .. }
            | Command::Evaluate { common, .. }
            | Command::Gradcheck { common, .. } => common,
        }
    }
}

fn resolve(common: &Common) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| fogtype::Error::validation(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(d) = &common.data {
        cfg.data = Some(d.clone());
    }
    if let Some(o) = &common.out {
        cfg.out = Some(o.clone());
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run(command: Command) -> anyhow::Result<()> {
    let mut cfg = resolve(command.common())?;
    match command {
        Command::Synth { .. } => commands::synth(&cfg),
        Command::Validate { .. } => commands::validate(&cfg),
        Command::Features {
            feature_set,
            domain,
            split,
            ..
        } => {
            if let Some(f) = feature_set {
                cfg.feature_set = f;
            }
            let split = match split {
                SplitArg::Train => fogtype::data::Split::Train,
                SplitArg::Test => fogtype::data::Split::Test,
            };
            commands::features(&cfg, domain.map(Domain::from), split)
        }
        Command::ClusterSubjects { clusters, .. } => {
            if let Some(k) = clusters {
                cfg.clusters = k;
            }
            commands::cluster_subjects(&cfg)
        }
        Command::AnalyzeSeparation { .. } => commands::analyze_separation(&cfg),
        Command::Train {
            domain, feature_set, ..
        } => {
            cfg.domain = Some(domain.into());
            if let Some(f) = feature_set {
                cfg.feature_set = f;
            }
            commands::train(&cfg)
        }
        Command::Predict {
            domain,
            group_manifest,
            split,
            ..
        } => {
            cfg.domain = Some(domain.into());
            let split = match split {
                SplitArg::Train => fogtype::data::Split::Train,
                SplitArg::Test => fogtype::data::Split::Test,
            };
            commands::predict(&cfg, &group_manifest, split)
        }
        Command::Pseudolabel { group_manifest, .. } => commands::pseudolabel(&cfg, &group_manifest),
        Command::Retrain {
            feature_set, pseudo, ..
        } => {
            cfg.domain = Some(Domain::Defog);
            if let Some(f) = feature_set {
                cfg.feature_set = f;
            }
            commands::retrain(&cfg, &pseudo)
        }
        Command::Evaluate {
            defog, tdcsfog, title, ..
        } => commands::evaluate(&cfg, &defog, &tdcsfog, &title),
        Command::Gradcheck { seeds, .. } => commands::gradcheck(&cfg, seeds),
    }
}

fn error_line(err: &anyhow::Error) -> String {
    let kind = err
        .downcast_ref::<fogtype::Error>()
        .map(fogtype::Error::kind)
        .or_else(|| err.downcast_ref::<commands::CheckFailed>().map(|_| "check-failed"))
        .unwrap_or("internal");
    let message = format!("{err:#}");
    format!(
        "error kind={kind} message={}",
        serde_json::to_string(&message).unwrap_or_else(|_| "\"?\"".into())
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            ExitCode::from(1)
        }
    }
}
