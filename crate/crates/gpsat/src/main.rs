use clap::Parser;

fn main() {
    let cli = gpsat::cli::Cli::parse();
    let (code, out) = gpsat::cli::run(&cli);
    println!("{out}");
    std::process::exit(code);
}
