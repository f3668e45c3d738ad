use clap::Parser;

fn main() {
    std::process::exit(d2d_effcap_cli::main_with(d2d_effcap_cli::Cli::parse()));
}
