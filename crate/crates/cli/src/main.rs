use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use frontlab_cli::config::Mode;
use frontlab_cli::{catalog, run_set, ConfigError, ConfigSet, Overrides, RawConfig, RunError};

const EXIT_INVALID: u8 = 3;
const EXIT_RUNTIME: u8 = 4;

#[derive(Parser)]
#[command(name = "frontlab", version, about = "Bistable fronts crossing localized defects: simulate, reduce, compare")]
struct Cli {
    /// Output directory (default: the config's output.dir, else out/<name>)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the number of grid cells
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Override the final time
    #[arg(long, global = true)]
    tmax: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run any experiment config
    Run { config: PathBuf },
    /// Check a config without running it
    Validate { config: PathBuf },
    /// Built-in figure configs
    Catalog {
        #[command(subcommand)]
        action: CatalogAction,
    },
    /// Run a config whose mode is `sweep`
    Sweep { config: PathBuf },
    /// Run a config whose mode is `pinning-threshold`
    Threshold { config: PathBuf },
    /// Run a config whose mode is `invert`
    Invert { config: PathBuf },
}

#[derive(Subcommand)]
enum CatalogAction {
    List,
    Run { name: String },
}

enum Failure {
    Invalid(String),
    Runtime(String),
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Config(c) => Failure::Invalid(c.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn load(text: &str, overrides: &Overrides) -> Result<ConfigSet, Failure> {
    let invalid = |e: ConfigError| match e {
        ConfigError::Invalid(v) => Failure::Invalid(v.iter().map(|m| format!("\n  - {m}")).collect()),
        other => Failure::Invalid(other.to_string()),
    };
    let mut raw = RawConfig::parse(text).map_err(invalid)?;
    overrides.apply(&mut raw);
    ConfigSet::from_raw(raw).map_err(invalid)
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Invalid(format!("cannot read {}: {e}", path.display())))
}

fn execute(set: &ConfigSet, out: Option<&Path>, expect: Option<Mode>) -> Result<(), Failure> {
    let configs = set.configs();
    if let Some(mode) = expect {
        if let Some((_, c)) = configs.iter().find(|(_, c)| c.mode != mode) {
            return Err(Failure::Invalid(format!("expected a {} config, got mode {}", mode.name(), c.mode.name())));
        }
    }
    let first = configs[0].1;
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| first.out_dir.clone())
        .unwrap_or_else(|| Path::new("out").join(&first.name));
    for report in run_set(set, &dir)? {
        let label = match &report.panel {
            Some(p) => format!("{} [{p}]", report.name),
            None => report.name.clone(),
        };
        println!("{label}: {} files in {}", report.files.len(), dir.display());
        for line in report.summary.to_text().lines() {
            println!("  {line}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let overrides = Overrides { n: cli.n, t_max: cli.tmax };
    let out = cli.out.as_deref();
    let result = match &cli.command {
        Command::Run { config } => read(config).and_then(|t| load(&t, &overrides)).and_then(|s| execute(&s, out, None)),
        Command::Sweep { config } => {
            read(config).and_then(|t| load(&t, &overrides)).and_then(|s| execute(&s, out, Some(Mode::Sweep)))
        }
        Command::Threshold { config } => read(config)
            .and_then(|t| load(&t, &overrides))
            .and_then(|s| execute(&s, out, Some(Mode::PinningThreshold))),
        Command::Invert { config } => {
            read(config).and_then(|t| load(&t, &overrides)).and_then(|s| execute(&s, out, Some(Mode::Invert)))
        }
        Command::Validate { config } => read(config).and_then(|t| load(&t, &overrides)).map(|s| {
            for (panel, c) in s.configs() {
                match panel {
                    Some(p) => println!("{} [{p}]: ok ({})", c.name, c.mode.name()),
                    None => println!("{}: ok ({})", c.name, c.mode.name()),
                }
            }
        }),
        Command::Catalog { action: CatalogAction::List } => {
            for name in catalog::names() {
                println!("{name:<20} {}", catalog::description(name).unwrap_or(""));
            }
            Ok(())
        }
        Command::Catalog { action: CatalogAction::Run { name } } => match catalog::text(name) {
            None => Err(Failure::Invalid(format!("no catalog entry {name:?}; see `frontlab catalog list`"))),
            Some(t) => load(t, &overrides).and_then(|s| execute(&s, out, None)),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(m)) => {
            eprintln!("invalid config: {m}");
            ExitCode::from(EXIT_INVALID)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("run failed: {m}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
