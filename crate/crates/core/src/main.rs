fn main() {
    std::process::exit(voxpix::cli::run_from_args(std::env::args_os()));
}
