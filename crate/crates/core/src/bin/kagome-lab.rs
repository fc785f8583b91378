fn main() {
    std::process::exit(kagome_lab::cli::run(std::env::args_os()));
}
