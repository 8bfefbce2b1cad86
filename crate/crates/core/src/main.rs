use std::process::ExitCode;

fn main() -> ExitCode {
    sparsemm::cli::main()
}
