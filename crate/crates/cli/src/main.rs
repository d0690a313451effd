use clap::Parser;

fn main() {
    std::process::exit(isrs_cli::run(isrs_cli::Cli::parse()));
}
