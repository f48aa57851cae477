fn main() {
    let code = fourierdg::cli::run(std::env::args_os());
    std::process::exit(code);
}
