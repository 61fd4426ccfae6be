fn main() {
    std::process::exit(osgood::cli::run(std::env::args_os()));
}
