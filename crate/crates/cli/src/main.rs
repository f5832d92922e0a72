use clap::Parser;

fn main() {
    let cli = nhpg_cli::Cli::parse();
    if let Err(e) = nhpg_cli::run(cli) {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}
