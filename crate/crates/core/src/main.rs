fn main() {
    std::process::exit(setplay_core::cli::run(std::env::args_os()));
}
