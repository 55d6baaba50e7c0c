use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

fn main() {
    let verbose = std::env::args().any(|a| a == "--verbose" || a == "-v");
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if verbose {
        "warn,kailin_core=debug"
    } else {
        "warn"
    }))
    .init();
    let cancel = Arc::new(AtomicBool::new(false));
    let flag = cancel.clone();
    if let Err(e) = ctrlc::set_handler(move || {
        eprintln!("interrupt received; finishing in-flight work");
        flag.store(true, Ordering::SeqCst);
    }) {
        log::warn!("cannot install Ctrl-C handler: {e}");
    }
    std::process::exit(kailin_core::cli::run_with_cancel(std::env::args_os(), cancel));
}
