fn main() {
    std::process::exit(ste_deflick::cli::run_from(std::env::args_os()));
}
