fn main() {
    std::process::exit(ensemblier::cli::run(std::env::args_os()));
}
