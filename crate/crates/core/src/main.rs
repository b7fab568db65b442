fn main() { std::process::exit(cp_oracle::cli::dispatch(std::env::args_os())); }
