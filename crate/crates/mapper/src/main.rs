fn main() {
    std::process::exit(cgra_mapper::cli::run(std::env::args_os()));
}
