fn main() {
    std::process::exit(posefilter_cli::main_with_args(std::env::args_os()));
}
