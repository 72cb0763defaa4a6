use clap::Parser;

use bintensor::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("BINTENSOR_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // a global pool can only be built once; failure means one already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    std::process::exit(run(cli));
}
