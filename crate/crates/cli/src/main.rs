fn main() {
    std::process::exit(m2m_access_cli::run(std::env::args_os()));
}
