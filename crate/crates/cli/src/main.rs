use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use alo_cli::config::{read_kv_file, COMMANDS};
use alo_cli::{run, CliError, RunConfig, KEYS};
use clap::{Arg, ArgAction, ArgMatches, Command};

fn options() -> Vec<Arg> {
    let mut args = vec![
        Arg::new("config").long("config").short('c').value_name("FILE").help("key = value config file"),
        Arg::new("set").long("set").short('s').value_name("KEY=VALUE").action(ArgAction::Append).help("set any key"),
    ];
    for (key, help) in KEYS {
        let long = key.replace('_', "-");
        let arg = Arg::new(*key).long(long).help(*help);
        args.push(if *key == "no_lo" {
            arg.action(ArgAction::SetTrue)
        } else {
            arg.value_name("VALUE")
        });
    }
    args
}

fn cli() -> Command {
    let about = |c: &str| match c {
        "simulate" => "Write a simulated design, response and truth as CSV",
        "risk-curve" => "ALO, exact leave-one-out and K-fold risk over a lambda grid",
        "bench" => "Median wall time of fitting, ALO and leave-one-out per size",
        "bias-study" => "Monte-Carlo comparison of K-fold, leave-one-out, ALO and oracle risk",
        "converge" => "Empirical max |ALO - LO| gap as n grows",
        _ => "Read a CSV dataset and validate it",
    };
    Command::new("alo")
        .about("Approximate leave-one-out risk estimation for regularized GLMs")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommands(COMMANDS.iter().map(|c| Command::new(*c).about(about(c)).args(options())))
}

fn resolve(command: &str, m: &ArgMatches) -> Result<RunConfig, CliError> {
    let mut map: BTreeMap<String, String> = match m.get_one::<String>("config") {
        Some(path) => read_kv_file(&PathBuf::from(path))?,
        None => BTreeMap::new(),
    };
    for kv in m.get_many::<String>("set").into_iter().flatten() {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::InvalidConfig(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    for (key, _) in KEYS {
        if *key == "no_lo" {
            if m.get_flag(key) {
                map.insert(key.to_string(), "true".into());
            }
        } else if let Some(v) = m.get_one::<String>(key) {
            map.insert(key.to_string(), v.clone());
        }
    }
    RunConfig::resolve(command, &map)
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    let (command, sub) = matches.subcommand().expect("subcommand required");
    let result = resolve(command, sub).and_then(|cfg| run(&cfg));
    match result {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
