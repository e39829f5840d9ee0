fn main() {
    std::process::exit(splitstoch::experiment::main_with_args(std::env::args_os()));
}
