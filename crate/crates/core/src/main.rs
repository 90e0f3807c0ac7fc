fn main() -> std::process::ExitCode {
    lanebench::cli::main()
}
