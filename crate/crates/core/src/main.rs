fn main() -> std::process::ExitCode {
    bell_lab::cli::main()
}
