fn main() { std::process::exit(bsb::cli::run(std::env::args_os())); }
