fn main() {
    let code = swirsr::cli::run(std::env::args_os());
    std::process::exit(code);
}
