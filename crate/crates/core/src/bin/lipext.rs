use clap::Parser;

use lipext::cli::{run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();

    if let Ok(n) = std::env::var("LIPEXT_THREADS") {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                {
                    log::warn!("LIPEXT_THREADS ignored: {e}");
                }
            }
            _ => log::warn!("LIPEXT_THREADS={n} is not a positive integer; ignored"),
        }
    }

    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => print!("{}", outcome.stdout),
        Err(e) => {
            eprintln!("{}", e.line());
            std::process::exit(e.exit_code());
        }
    }
}
