mod commands;
mod config;
mod manifest;
mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{value_parser, Arg, ArgMatches, Command as Clap};

use commands::{CliError, Command, Plan};
use config::{Config, ConfigError, Origin, KEYS};
use manifest::Manifest;

const SEED_ENV: &str = "LEVY_DC_SEED";

fn subcommand(name: &'static str, about: &'static str) -> Clap {
    let mut cmd = Clap::new(name)
        .about(about)
        .arg(Arg::new("config").short('c').long("config").value_name("FILE").value_parser(value_parser!(PathBuf)).help("key = value config file"))
        .arg(Arg::new("out").short('o').long("out").value_name("DIR").value_parser(value_parser!(PathBuf)).help("output directory [default: out/<command>]"))
        .arg(Arg::new("jobs").short('j').long("jobs").value_name("N").value_parser(value_parser!(usize)).help("worker threads; results do not depend on it"));
    for spec in KEYS {
        cmd = cmd.arg(
            Arg::new(spec.key)
                .long(spec.key)
                .visible_aliases(spec.aliases.iter().copied())
                .value_name("VALUE")
                .allow_negative_numbers(true)
                .help(spec.help)
                .help_heading("Config overrides"),
        );
    }
    cmd
}

fn cli() -> Clap {
    Clap::new("levy-dc")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Euler schemes for Levy-driven SDEs with dynamic or fixed small-jump cutting")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(subcommand("simulate", "Write sample paths as t,x CSV files"))
        .subcommand(subcommand("validate", "Statistical and closed-form checks of the jump laws"))
        .subcommand(subcommand("compare", "Strong-error tables and plots for both cutting methods"))
        .subcommand(subcommand("convergence", "Fitted convergence slopes with bootstrap intervals"))
}

fn resolve(command: Command, m: &ArgMatches) -> Result<Config, ConfigError> {
    let mut cfg = match m.get_one::<PathBuf>("config") {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Ok(seed) = std::env::var(SEED_ENV) {
        cfg.set("seed", &seed, Origin::Env(SEED_ENV))?;
    }
    for spec in KEYS {
        if let Some(raw) = m.get_one::<String>(spec.key) {
            cfg.set(spec.key, raw, Origin::Flag)?;
        }
    }
    command.preset(&mut cfg);
    cfg.fill_defaults();
    Ok(cfg)
}

fn run(command: Command, m: &ArgMatches) -> Result<(), CliError> {
    let cfg = resolve(command, m)?;
    let plan = Plan::resolve(command, &cfg)?;
    let out = m.get_one::<PathBuf>("out").cloned().unwrap_or_else(|| Path::new("out").join(command.name()));
    let jobs = m.get_one::<usize>("jobs").copied();
    let argv: Vec<String> = std::env::args().collect();
    let seed = cfg.u64("seed").unwrap_or_default();

    let mut manifest = Manifest::begin(&out, command.name(), &argv, &cfg.snapshot(), seed, jobs)?;
    manifest.write("config.resolved", &cfg.to_text())?;
    let result = match jobs {
        Some(0) => Err(CliError::Config(ConfigError::new(Origin::Flag, Some("jobs"), "must be positive"))),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Run(e.to_string()))
            .and_then(|pool| pool.install(|| plan.execute(&mut manifest))),
        None => plan.execute(&mut manifest),
    };
    let status = match &result {
        Ok(()) => "complete",
        Err(CliError::Check(_)) => "failed",
        Err(_) => "error",
    };
    let path = manifest.finish(status)?;
    eprintln!("manifest: {}", path.display());
    result
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let matches = cli().get_matches();
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let command = match name {
        "simulate" => Command::Simulate,
        "validate" => Command::Validate,
        "compare" => Command::Compare,
        "convergence" => Command::Convergence,
        _ => unreachable!("clap rejects unknown subcommands"),
    };
    match run(command, sub) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("levy-dc {}: {e}", command.name());
            ExitCode::from(e.exit_code())
        }
    }
}
