use clap::Parser;

fn main() {
    let cli = covshift::cli::Cli::parse();
    if let Err(e) = covshift::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.code);
    }
}
