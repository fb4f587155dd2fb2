fn main() {
    std::process::exit(tgeom::cli::run(std::env::args_os()));
}
