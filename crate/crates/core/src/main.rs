fn main() {
    std::process::exit(psgd_svm::cli::run(std::env::args_os()));
}
