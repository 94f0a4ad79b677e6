fn main() {
    if let Err(e) = vpsub::parallel::init_thread_pool() {
        eprintln!("error: {e}");
        std::process::exit(2);
    }
    std::process::exit(vpsub::cli::main_with_args(std::env::args().collect()));
}
