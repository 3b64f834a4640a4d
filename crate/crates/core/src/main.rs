use clap::Parser;
use skorokhod::cli::{run, Cli};

fn main() {
    std::process::exit(run(Cli::parse()));
}
