fn main() {
    std::process::exit(nucsolve::app::main_with_args(std::env::args_os()));
}
