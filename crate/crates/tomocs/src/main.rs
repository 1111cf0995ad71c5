use std::process::ExitCode;

fn main() -> ExitCode {
    // One BLAS thread keeps reductions bit-reproducible; sweeps get their
    // parallelism from the rayon worker pool instead.
    if std::env::var_os("OPENBLAS_NUM_THREADS").is_none() {
        std::env::set_var("OPENBLAS_NUM_THREADS", "1");
    }
    tomocs::cli::run()
}
