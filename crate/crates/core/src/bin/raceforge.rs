fn main() -> std::process::ExitCode {
    raceforge::cli::main()
}
