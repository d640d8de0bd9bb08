use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, ArgMatches, Command};
use udp_runner::{pipeline, RunConfig};

fn run_args() -> Vec<Arg> {
    let mut args = vec![Arg::new("config")
        .long("config")
        .value_name("FILE")
        .value_parser(clap::value_parser!(PathBuf))
        .help("key = value file; flags override it")];
    for (key, help) in RunConfig::KEYS.iter().zip(RunConfig::HELP) {
        args.push(
            Arg::new(*key)
                .long(RunConfig::flag_name(key))
                .value_name("VALUE")
                .help(help.trim())
                .help_heading("Config keys"),
        );
    }
    args
}

fn command() -> Command {
    Command::new("udp")
        .about("Improved unsupervised discriminant projection: dimension reduction and semi-supervised training")
        .subcommand_required(true)
        .arg(
            Arg::new("threads")
                .long("threads")
                .global(true)
                .value_name("N")
                .value_parser(clap::value_parser!(usize))
                .help("worker threads for graph, scatter and k-means (results do not depend on it)"),
        )
        .subcommand(
            Command::new("reduce")
                .about("graph, projection, k-means and purity")
                .args(run_args()),
        )
        .subcommand(
            Command::new("train")
                .about("semi-supervised network training")
                .args(run_args()),
        )
        .subcommand(
            Command::new("sweep")
                .about("train over a lambda/t grid")
                .args(run_args()),
        )
        .subcommand(
            Command::new("export")
                .about("embed a dataset with a checkpoint or basis")
                .args(run_args()),
        )
}

fn resolve(m: &ArgMatches) -> udp_runner::Result<RunConfig> {
    let mut cfg = match m.get_one::<PathBuf>("config") {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    for key in RunConfig::KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v)?;
        }
    }
    Ok(cfg)
}

fn run(name: &str, m: &ArgMatches) -> udp_runner::Result<bool> {
    let cfg = resolve(m)?;
    let ok = match name {
        "reduce" => {
            println!("{}", pipeline::reduce(&cfg)?.summary);
            true
        }
        "train" => {
            println!("{}", pipeline::train(&cfg)?.summary);
            true
        }
        "sweep" => {
            let cells = pipeline::sweep(&cfg)?;
            let summary = std::fs::read_to_string(cfg.out.join("summary.txt")).unwrap_or_default();
            print!("{summary}");
            cells.iter().all(|c| c.outcome.is_ok())
        }
        "export" => {
            let path = pipeline::export(&cfg)?;
            println!("export wrote {}", path.display());
            true
        }
        _ => unreachable!("clap rejects unknown subcommands"),
    };
    Ok(ok)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let matches = command().get_matches();
    if let Some(&n) = matches.get_one::<usize>("threads") {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    let (name, sub) = matches.subcommand().expect("subcommand required");
    match run(name, sub) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            log::error!("{name}: some sweep cells failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            log::error!("{name}: {e}");
            ExitCode::FAILURE
        }
    }
}
