fn main() -> std::process::ExitCode {
    scsolve_bench::cli::main()
}
