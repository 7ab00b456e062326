fn main() {
    std::process::exit(dgvf::cli::main_with_args(std::env::args_os()));
}
