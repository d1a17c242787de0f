use clap::Parser;

use autonlu_cli::{run, Cli};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    if let Err(e) = run(cli, &mut lock) {
        eprintln!("{}", e.structured());
        std::process::exit(e.exit_code());
    }
}
