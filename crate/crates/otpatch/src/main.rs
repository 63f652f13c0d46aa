fn main() {
    let code = otpatch::cli::run(std::env::args().collect());
    std::process::exit(code);
}
