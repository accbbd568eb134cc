use clap::Parser;

use hullsep::cli::{self, Cli, EXIT_INPUT};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HULLSEP_LOG", "off")).init();
    let code = match Cli::try_parse() {
        Ok(cli) => cli::run(cli),
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            EXIT_INPUT
        }
        Err(e) => {
            let _ = e.print();
            0
        }
    };
    std::process::exit(code);
}
