fn main() {
    std::process::exit(semiclassical::cli::run(std::env::args_os()));
}
