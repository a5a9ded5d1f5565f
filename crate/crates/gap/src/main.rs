use clap::Parser;

fn main() {
    let cli = gap::cli::Cli::parse();
    if let Err(e) = gap::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
