fn main() {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_max_level(tracing::Level::INFO)
        .init();
    std::process::exit(evrag::cli::run(std::env::args_os()));
}
