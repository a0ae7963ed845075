use clap::Parser;

fn main() {
    let cli = cover_engine::Cli::parse();
    std::process::exit(cover_engine::main_with(&cli));
}
