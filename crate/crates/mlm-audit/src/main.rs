use clap::Parser;

fn main() {
    let cli = mlm_audit::cli::Cli::parse();
    std::process::exit(mlm_audit::cli::run(cli));
}
