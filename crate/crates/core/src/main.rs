fn main() -> std::process::ExitCode {
    solenoid_tower::cli::main()
}
