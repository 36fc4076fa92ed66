use env_logger::Env;

fn main() {
    env_logger::Builder::from_env(Env::default().filter_or("CBS_RV_LOG", "warn")).init();
    std::process::exit(cbs_rv::cli::main_with(std::env::args_os()));
}
