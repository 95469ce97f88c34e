use std::process::ExitCode;

use clap::Parser;

mod args;
mod commands;
mod manifest;

use args::{Cli, Command};

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    if let Some(k) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
        {
            eprintln!("error: category=internal code=5 message={e}");
            return ExitCode::from(5);
        }
    }
    let result = match cli.command {
        Command::Scan(a) => commands::scan(a),
        Command::Quantile(a) => commands::quantile(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Validate(a) => commands::validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let cat = e.category();
            eprintln!(
                "error: category={} code={} message={}",
                cat.as_str(),
                cat.exit_code(),
                e
            );
            ExitCode::from(cat.exit_code() as u8)
        }
    }
}
