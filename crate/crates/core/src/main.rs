fn main() {
    std::process::exit(stocktrader::cli::run(std::env::args_os()));
}
