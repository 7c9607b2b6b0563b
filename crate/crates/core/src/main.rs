use clap::Parser;

fn main() {
    let cli = rlss::cli::Cli::parse();
    std::process::exit(rlss::cli::run(cli));
}
