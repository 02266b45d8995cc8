use env_logger::Env;

fn main() {
    env_logger::Builder::from_env(Env::new().filter_or("LIVE_LOG", "error")).init();
    std::process::exit(live_harness::cli::main_with_args(std::env::args_os()));
}
