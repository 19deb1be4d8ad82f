//! Command-line entry point: corpus generation, experiment runs, and
//! report re-rendering. Progress goes to standard error; data goes to
//! standard output and files. Exit codes: 0 success, 1 runtime failure,
//! 2 configuration or usage error.

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::attack::Scenario;
use crate::config::{RunConfig, RunOverrides};
use crate::corpus::{generate_corpus, load_corpus, save_corpus, CorpusConfig, SizeClass};
use crate::error::{Error, Result};
use crate::experiment::{run_attack_experiment, ExperimentReport};

#[derive(Parser)]
#[command(
    name = "poisonlab",
    about = "Data-poisoning laboratory for career-prediction models",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Md,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum AttackArg {
    Francis,
    Random,
    Popular,
    Dqn,
    Llm,
    None,
}

impl AttackArg {
    fn as_str(self) -> &'static str {
        match self {
            AttackArg::Francis => "francis",
            AttackArg::Random => "random",
            AttackArg::Popular => "popular",
            AttackArg::Dqn => "dqn",
            AttackArg::Llm => "llm",
            AttackArg::None => "none",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioArg {
    CompanyPromotion,
    CompanyDemotion,
    UserPromotion,
    UserDemotion,
}

impl ScenarioArg {
    fn as_scenario(self) -> Scenario {
        match self {
            ScenarioArg::CompanyPromotion => Scenario::CompanyPromotion,
            ScenarioArg::CompanyDemotion => Scenario::CompanyDemotion,
            ScenarioArg::UserPromotion => Scenario::UserPromotion,
            ScenarioArg::UserDemotion => Scenario::UserDemotion,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus file from a corpus config document.
    GenCorpus {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the full attack experiment and write report files.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory for report.json/csv/md and the config echo.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Parallel seed cells (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long, value_enum)]
        attack: Option<AttackArg>,
        #[arg(long, value_enum)]
        scenario: Option<ScenarioArg>,
        /// Injection ratio override, e.g. 0.05.
        #[arg(long)]
        injection: Option<f64>,
    },
    /// Re-render tables from an existing report.json (never recomputes).
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "md")]
        format: ReportFormat,
    },
}

/// Parse argv and run; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version on stdout with success status
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run_command(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(cause) = source {
                eprintln!("  caused by: {cause}");
                source = cause.source();
            }
            if e.is_config() {
                2
            } else {
                1
            }
        }
    }
}

fn run_command(command: Command) -> Result<()> {
    match command {
        Command::GenCorpus { config, out, seed } => cmd_gen_corpus(&config, &out, seed),
        Command::Run {
            config,
            out,
            seed,
            jobs,
            attack,
            scenario,
            injection,
        } => cmd_run(
            &config,
            &out,
            RunOverrides {
                seed,
                attack: attack.map(|a| a.as_str().to_string()),
                scenario: scenario.map(|s| s.as_scenario()),
                injection_ratio: injection,
                jobs,
            },
        ),
        Command::Report { input, format } => cmd_report(&input, format),
    }
}

fn cmd_gen_corpus(config_path: &PathBuf, out: &PathBuf, seed: Option<u64>) -> Result<()> {
    let text = std::fs::read_to_string(config_path)?;
    let mut config: CorpusConfig = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", config_path.display())))?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    config.validate()?;
    eprintln!("generating corpus (seed {})...", config.seed);
    let corpus = generate_corpus(&config)?;
    save_corpus(&corpus, out)?;
    let classes = corpus.size_class_counts();
    println!(
        "resumes: {}\ncompanies: {}\nsmall: {}\nmid: {}\nlarge: {}",
        corpus.trajectories.len(),
        corpus.companies.len(),
        classes.get(&SizeClass::Small).copied().unwrap_or(0),
        classes.get(&SizeClass::Mid).copied().unwrap_or(0),
        classes.get(&SizeClass::Large).copied().unwrap_or(0),
    );
    eprintln!("wrote {}", out.display());
    // sanity: the written file must reload to the same corpus
    debug_assert!(load_corpus(out)?.same_data(&corpus));
    Ok(())
}

fn cmd_run(config_path: &PathBuf, out_dir: &PathBuf, overrides: RunOverrides) -> Result<()> {
    let config = RunConfig::load(config_path)?;
    let seed = overrides.seed.unwrap_or(config.seed);
    let experiment = config.resolve(&overrides)?;

    std::fs::create_dir_all(out_dir)?;
    std::fs::write(
        out_dir.join("config_echo.json"),
        RunConfig::echo_document(seed, &experiment)?,
    )?;

    eprintln!(
        "running {} attack(s) x {} seed(s), scenario {}...",
        experiment.attacks.len(),
        experiment.seeds.len(),
        experiment.scenario
    );
    let report = run_attack_experiment(&experiment)?;
    eprintln!(
        "finished in {:.1}s; writing reports to {}",
        report.wall_clock_seconds,
        out_dir.display()
    );

    std::fs::write(out_dir.join("report.json"), report.to_json_string()?)?;
    std::fs::write(out_dir.join("report.csv"), report.to_csv())?;
    std::fs::write(out_dir.join("report.md"), report.to_markdown())?;
    Ok(())
}

fn cmd_report(input: &PathBuf, format: ReportFormat) -> Result<()> {
    let text = std::fs::read_to_string(input).map_err(|e| {
        Error::Config(format!("cannot read {}: {e}", input.display()))
    })?;
    let report = ExperimentReport::from_json_str(&text)?;
    match format {
        ReportFormat::Md => print!("{}", report.to_markdown()),
        ReportFormat::Csv => print!("{}", report.to_csv()),
    }
    Ok(())
}
