use clap::Parser;
use parallel_tori::cli::{self, Cli, EXIT_VALIDATION};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            let code = if e.use_stderr() { EXIT_VALIDATION } else { 0 };
            std::process::exit(code);
        }
    };
    std::process::exit(cli::run(&cli));
}
