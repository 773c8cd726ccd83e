use std::process::ExitCode;

fn main() -> ExitCode {
    qst_sim::cli::main()
}
