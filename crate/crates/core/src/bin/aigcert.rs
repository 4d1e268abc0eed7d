use clap::Parser;

fn main() {
    let cli = aigcert::cli::Cli::parse();
    std::process::exit(aigcert::cli::main_with(cli));
}
