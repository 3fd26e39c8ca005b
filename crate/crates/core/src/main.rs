fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FTL_LOG", "warn")).init();
    std::process::exit(ftl_core::cli::run(std::env::args_os()));
}
