use clap::Parser;

use fsnet::cli::{run, threads_from_env, with_threads, Cli};

fn main() {
    let cli = Cli::parse();
    let code = with_threads(threads_from_env(), || run(cli));
    std::process::exit(code);
}
