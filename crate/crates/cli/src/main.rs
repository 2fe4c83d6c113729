use clap::Parser;

fn main() {
    let code = nnde::main_with(nnde::Cli::parse());
    std::process::exit(code as i32);
}
