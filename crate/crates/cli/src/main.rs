use clap::Parser;

fn main() {
    let cli = dlm_cli::Cli::parse();
    if let Err(e) = dlm_cli::run(&cli) {
        eprintln!("dlm: {e}");
        std::process::exit(e.exit_code());
    }
}
