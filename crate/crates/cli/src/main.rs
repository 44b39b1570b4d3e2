use clap::Parser;
use spkver_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => print!("{out}"),
        Err(e) => {
            eprintln!("spkver: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
