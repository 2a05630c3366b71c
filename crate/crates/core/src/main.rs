use std::process::ExitCode;

fn main() -> ExitCode {
    if let Some(threads) = std::env::var("HDNORM_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|t| *t > 0)
    {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("warning: could not size the worker pool: {e}");
        }
    }
    ExitCode::from(hdnorm::cli::run() as u8)
}
