fn main() {
    std::process::exit(qbd_tails::cli::run(std::env::args()));
}
