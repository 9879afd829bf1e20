use clap::Parser;
use dtgan::cli::{exit_code, run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli, &mut std::io::stdout().lock()) {
        eprintln!("error: {err}");
        std::process::exit(exit_code(&err));
    }
}
