use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("GALENET_LOG", "warn"))
        .init();
    let cli = galenet_cli::Cli::parse();
    if let Err(err) = galenet_cli::run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(galenet_cli::exit_code_for(&err));
    }
}
