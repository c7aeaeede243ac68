use env_logger::Env;

fn main() {
    env_logger::Builder::from_env(Env::new().filter_or("ASCX_LOG", "warn")).init();
    std::process::exit(ascx_cli::run(std::env::args_os()));
}
