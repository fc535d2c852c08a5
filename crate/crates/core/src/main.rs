fn main() {
    std::process::exit(procnutri::cli::run(std::env::args_os()));
}
