fn main() {
    std::process::exit(tprop_cli::run(std::env::args_os(), std::env::vars()));
}
