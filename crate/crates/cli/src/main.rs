use std::process::exit;

fn main() {
    exit(robustmeta_cli::run_cli(std::env::args()));
}
