use clap::Parser;

fn main() {
    let cli = trajrec_cli::Cli::parse();
    if let Err(e) = trajrec_cli::run(cli) {
        eprintln!("trajrec: error: {e}");
        std::process::exit(e.exit_code());
    }
}
