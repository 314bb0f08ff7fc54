use clap::Parser;

use foe_cli::{execute, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = execute(cli) {
        eprintln!("{}", e.line());
        std::process::exit(e.exit_code());
    }
}
