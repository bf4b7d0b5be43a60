use clap::Parser;

fn main() {
    let cli = warpflow_cli::Cli::parse();
    std::process::exit(warpflow_cli::execute(cli));
}
